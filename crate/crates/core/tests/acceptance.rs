//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run a subset with `cargo test --test acceptance -- 1 4 7`.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use ademi_core::channel::{
    compression_ratio, encoded_dim, latency_table, raw_payload_bits, shannon_capacity, ChannelSpec,
};
use ademi_core::dfs::{first_principal_component, DfsPipeline, PipelineConfig, StftConfig};
use ademi_core::encoder::{device_loss, quantize, DeviceNet, QuantizerSpec};
use ademi_core::harness::experiment::stage_eval;
use ademi_core::harness::sweep::{budget_to_reach, default_budgets, interval_dir_name, sweep_interval, sweep_upload};
use ademi_core::harness::{run_experiment, ExperimentConfig, RunDir};
use ademi_core::nn::gradcheck::{max_relative_error, numeric_gradient, REL_FLOOR};
use ademi_core::nn::layers::{relu, relu_backward, softplus, softplus_backward};
use ademi_core::nn::{
    batch_cross_entropy, grad_check, Conv2d, Dense, GradCheckOptions, MaxPool2d, ParamStore, RealTensor,
    TrunkConfig,
};
use ademi_core::rng::seeded;
use ademi_core::server::{server_loss, ServerNet};
use ademi_core::synth::{gen_doppler_track, synth_csi_traced, SceneSpec, NUM_CLASSES};
use ademi_core::CsiMatrix;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const GRAD_TOL: f64 = 1e-4;
const GRAD_INSTANCES: u64 = 10;
const KINK_MARGIN: f64 = 1e-3;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn work_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn randn(shape: &[usize], rng: &mut impl Rng) -> RealTensor {
    let n = shape.iter().product();
    RealTensor {
        shape: shape.to_vec(),
        data: (0..n).map(|_| StandardNormal.sample(rng)).collect(),
    }
}

fn dot(a: &RealTensor, b: &RealTensor) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

// 1 ---------------------------------------------------------------------

fn table_latency() -> Verdict {
    let reference = [
        [0.27, 0.16, 0.11, 0.08, 0.07],
        [0.80, 0.48, 0.33, 0.25, 0.20],
        [1.4e-5, 1.4e-5, 1.4e-5, 1.4e-5, 1.4e-5],
    ];
    let table = match latency_table(&ChannelSpec::default(), &[5.0, 10.0, 15.0, 20.0, 25.0], 2895, 121) {
        Ok(t) => t,
        Err(e) => return verdict(false, e.to_string()),
    };
    let rows = [&table.single_view_s, &table.multi_view_s, &table.ademi_s];
    let mut worst: (f64, usize, usize) = (0.0, 0, 0);
    for (r, (ours, theirs)) in rows.iter().zip(&reference).enumerate() {
        for c in 0..5 {
            let dev = (ours[c] - theirs[c]).abs() / ours[c];
            if dev > worst.0 {
                worst = (dev, r, c);
            }
        }
    }
    verdict(
        worst.0 <= 0.05,
        format!(
            "15 cells, worst deviation {:.2}% (row {}, SNR {} dB); single 5 dB {:.3} s, ADE-MI 10 dB {:.3e} s",
            worst.0 * 100.0,
            worst.1,
            5 * (worst.2 + 1),
            table.single_view_s[0],
            table.ademi_s[1]
        ),
    )
}

// 2 ---------------------------------------------------------------------

fn latent_width_rule() -> Verdict {
    let spec = ChannelSpec::default();
    let coeff = spec.device_bandwidth_hz() * spec.per_sample_time_s / spec.bits_per_element as f64;
    let dims: Vec<usize> = [5.0, 10.0, 15.0, 20.0, 25.0]
        .iter()
        .map(|&snr| {
            let c = shannon_capacity(spec.device_bandwidth_hz(), snr).unwrap();
            encoded_dim(c, spec.bits_per_element, spec.samples_per_transmission, spec.time_budget_s()).unwrap()
        })
        .collect();
    verdict(
        dims == [6, 10, 15, 19, 24] && (coeff - 3.0).abs() < 1e-12,
        format!("coefficient {coeff:.6}, d_k = {dims:?}"),
    )
}

// 3 ---------------------------------------------------------------------

fn compression() -> Verdict {
    let raw = raw_payload_bits(2895, 121, 64).unwrap();
    let latent = 10 * 64;
    let ratio = raw as f64 / latent as f64;
    let helper = compression_ratio(2895, 121, 10);
    verdict(
        (ratio - 35029.5).abs() < 1e-9 && helper == ratio && ratio >= 1e4,
        format!("{raw} / {latent} bits = {ratio:.4e}"),
    )
}

// 4 ---------------------------------------------------------------------

fn input_grad_error(
    x: &RealTensor,
    r: &RealTensor,
    forward: impl Fn(&RealTensor) -> RealTensor,
    analytic: &RealTensor,
) -> f64 {
    let numeric = numeric_gradient(&x.data, 1e-6, |v| {
        let xi = RealTensor {
            shape: x.shape.clone(),
            data: v.to_vec(),
        };
        dot(&forward(&xi), r)
    });
    max_relative_error(&analytic.data, &numeric, REL_FLOOR)
}

/// Smallest distance of any ReLU or max-pool decision in the device loss
/// forward pass from its switching point.
fn device_kink_margin(net: &DeviceNet, store: &ParamStore, x: &RealTensor, eps: &RealTensor) -> f64 {
    let (_, trunk_cache) = net.trunk.forward(store, x).unwrap();
    let (mu, sigma) = net.encode_mean_spread(store, x).unwrap();
    let z = RealTensor {
        shape: mu.shape.clone(),
        data: mu.data.iter().zip(&sigma.data).zip(&eps.data).map(|((m, s), e)| m + s * e).collect(),
    };
    let (_, dec_cache) = net.decoder.forward(store, &z).unwrap();
    net.trunk.kink_margin(&trunk_cache).min(dec_cache.kink_margin())
}

fn gradient_suite() -> Verdict {
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut record = |name: &'static str, e: f64| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some(slot) => slot.1 = slot.1.max(e),
        None => worst.push((name, e)),
    };
    let opts = GradCheckOptions {
        step: 1e-6,
        ..GradCheckOptions::default()
    };
    let mut redrawn = 0;
    for trial in 0..GRAD_INSTANCES {
        let mut rng = seeded(1000 + trial);

        // dense
        let (b, i, o) = (rng.random_range(1..5), rng.random_range(1..8), rng.random_range(1..8));
        let mut store = ParamStore::new(trial);
        let dense = Dense::new(&mut store, "d", i, o);
        let x = randn(&[b, i], &mut rng);
        let r = randn(&[b, o], &mut rng);
        let rep = grad_check(&store, &opts, |s| {
            let y = dense.forward(s, &x)?;
            dense.backward(s, &x, &r, false)?;
            Ok(dot(&y, &r))
        })
        .unwrap();
        let gx = dense.backward(&mut store.clone(), &x, &r, true).unwrap().unwrap();
        let ex = input_grad_error(&x, &r, |xi| dense.forward(&store, xi).unwrap(), &gx);
        record("dense", rep.max_rel_error.max(ex));

        // conv
        let (c_in, c_out, k, stride) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..3));
        let (h, w) = (rng.random_range(k..k + 5), rng.random_range(k..k + 5));
        let mut store = ParamStore::new(trial);
        let conv = Conv2d::new(&mut store, "c", c_in, c_out, k, stride);
        let (ho, wo) = conv.output_hw(h, w).unwrap();
        let x = randn(&[2, c_in, h, w], &mut rng);
        let r = randn(&[2, c_out, ho, wo], &mut rng);
        let rep = grad_check(&store, &opts, |s| {
            let y = conv.forward(s, &x)?;
            conv.backward(s, &x, &r, false)?;
            Ok(dot(&y, &r))
        })
        .unwrap();
        let gx = conv.backward(&mut store.clone(), &x, &r, true).unwrap().unwrap();
        let ex = input_grad_error(&x, &r, |xi| conv.forward(&store, xi).unwrap(), &gx);
        record("conv2d", rep.max_rel_error.max(ex));

        // max pool
        let win = rng.random_range(1..4);
        let pool = MaxPool2d { window: win };
        let x = randn(&[2, 2, win * 3, win * 2 + 1], &mut rng);
        let (y, cache) = pool.forward(&x).unwrap();
        let r = randn(&y.shape, &mut rng);
        let gx = pool.backward(&cache, &r).unwrap();
        record("maxpool2d", input_grad_error(&x, &r, |xi| pool.forward(xi).unwrap().0, &gx));

        // activations
        let x = randn(&[3, 7], &mut rng);
        let r = randn(&[3, 7], &mut rng);
        record("relu", input_grad_error(&x, &r, relu, &relu_backward(&x, &r)));
        record("softplus", input_grad_error(&x, &r, softplus, &softplus_backward(&x, &r)));

        // softmax cross-entropy
        let logits = randn(&[4, NUM_CLASSES], &mut rng);
        let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..NUM_CLASSES)).collect();
        let (_, g) = batch_cross_entropy(&logits, &labels).unwrap();
        let numeric = numeric_gradient(&logits.data, 1e-6, |v| {
            let t = RealTensor {
                shape: logits.shape.clone(),
                data: v.to_vec(),
            };
            batch_cross_entropy(&t, &labels).unwrap().0
        });
        record("cross-entropy", max_relative_error(&g.data, &numeric, REL_FLOOR));

        // device loss, frozen noise, pass-through quantizer
        let trunk = TrunkConfig {
            conv_filters: 2,
            conv_kernel: 3,
            conv_stride: 2,
            pool_window: 2,
            features: 6,
        };
        let q = QuantizerSpec::new(64, 3.0).unwrap();
        let (net, store, x, eps, labels) = loop {
            let mut store = ParamStore::new(rng.random());
            let dim = rng.random_range(1..5);
            let net = DeviceNet::new(&mut store, &trunk, (11, 13), dim).unwrap();
            let x = randn(&[3, 1, 11, 13], &mut rng);
            let eps = randn(&[3, dim], &mut rng);
            let labels: Vec<usize> = (0..3).map(|_| rng.random_range(0..NUM_CLASSES)).collect();
            if device_kink_margin(&net, &store, &x, &eps) >= KINK_MARGIN {
                break (net, store, x, eps, labels);
            }
            redrawn += 1;
        };
        let rep = grad_check(&store, &opts, |s| Ok(device_loss(&net, s, &x, &labels, &eps, Some(&q))?.loss)).unwrap();
        record("device loss", rep.max_rel_error);

        // server loss
        let (server, store, z, labels) = loop {
            let mut store = ParamStore::new(rng.random());
            let width = rng.random_range(3..20);
            let server = ServerNet::new(&mut store, width).unwrap();
            let z = randn(&[5, width], &mut rng);
            let labels: Vec<usize> = (0..5).map(|_| rng.random_range(0..NUM_CLASSES)).collect();
            if server.mlp.forward(&store, &z).unwrap().1.kink_margin() >= KINK_MARGIN {
                break (server, store, z, labels);
            }
            redrawn += 1;
        };
        let rep = grad_check(&store, &opts, |s| Ok(server_loss(&server, s, &z, &labels)?.0)).unwrap();
        record("server loss", rep.max_rel_error);
    }
    let pass = worst.iter().all(|(_, e)| *e <= GRAD_TOL);
    let detail = worst
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(
        pass,
        format!("{GRAD_INSTANCES} instances each, {redrawn} redrawn within {KINK_MARGIN:e} of a kink; max rel error: {detail}"),
    )
}

// 5 ---------------------------------------------------------------------

fn phase_cancellation() -> Verdict {
    let pipe = DfsPipeline::new(PipelineConfig::default(), StftConfig::default(), 1000.0).unwrap();
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        let mut rng = seeded(5000 + trial);
        let clean = SceneSpec {
            num_paths: rng.random_range(2..5),
            dynamic_path_gain: rng.random_range(0.2..1.0),
            noise_std: rng.random_range(0.0..0.1),
            phase_error_std_rad: 0.0,
            ..SceneSpec::default()
        };
        let noisy = SceneSpec {
            phase_error_std_rad: rng.random_range(0.1..std::f64::consts::PI),
            ..clean.clone()
        };
        let class = rng.random_range(0..NUM_CLASSES);
        let track = gen_doppler_track(class, clean.duration_s, clean.sample_interval_s, &mut rng).unwrap();
        let stream: u64 = rng.random();
        let (a, _) = synth_csi_traced(&clean, &track, 0, &mut seeded(stream)).unwrap();
        let (b, _) = synth_csi_traced(&noisy, &track, 0, &mut seeded(stream)).unwrap();
        let sa = pipe.process(&a).unwrap();
        let sb = pipe.process(&b).unwrap();
        let scale = sa.data.iter().cloned().fold(0.0, f64::max);
        let diff = sa.data.iter().zip(&sb.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        worst = worst.max(diff / scale);
    }
    verdict(worst <= 1e-10, format!("20 scenes, max relative spectrogram change {worst:.2e}"))
}

// 6 ---------------------------------------------------------------------

fn pca_oracle() -> Verdict {
    let mut worst = 0.0f64;
    for trial in 0..50u64 {
        let mut rng = seeded(6000 + trial);
        let rows = rng.random_range(16..=64);
        let cols = rng.random_range(2..=16);
        let data: Vec<Complex64> = (0..rows * cols)
            .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect();
        let f = CsiMatrix {
            data: data.clone(),
            rows,
            cols,
            sample_rate_hz: 1000.0,
        };
        let pc = first_principal_component(&f, 1e-14, 100_000, trial).unwrap();
        let a = DMatrix::from_row_slice(rows, cols, &data);
        let eig = (a.adjoint() * &a).symmetric_eigen();
        let top = (0..cols).max_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j])).unwrap();
        let v = eig.eigenvectors.column(top);
        // align the global phase of the oracle vector to ours
        let inner: Complex64 = (0..cols).map(|i| v[i].conj() * pc.direction[i]).sum();
        let phase = inner / inner.norm();
        let dir_err = (0..cols).map(|i| (v[i] * phase - pc.direction[i]).norm()).fold(0.0, f64::max);
        let series = &a * v * phase;
        let scale = series.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let series_err = (0..rows).map(|r| (series[r] - pc.data[r]).norm()).fold(0.0, f64::max) / scale;
        let sigma_err = (pc.sigma1 - eig.eigenvalues[top].sqrt()).abs() / pc.sigma1;
        worst = worst.max(dir_err).max(series_err).max(sigma_err);
    }
    verdict(worst <= 1e-8, format!("50 matrices up to 64x16, max deviation {worst:.2e}"))
}

// 7 ---------------------------------------------------------------------

fn quantizer() -> Verdict {
    let mut rng = seeded(7000);
    let mut worst_ratio = 0.0f64;
    for bits in [1u32, 4, 8, 16] {
        let spec = QuantizerSpec::new(bits, 3.0).unwrap();
        for _ in 0..100_000 {
            let x = rng.random_range(-3.0..3.0);
            let q = quantize(&[x], &spec).values[0];
            worst_ratio = worst_ratio.max((q - x).abs() / (spec.step() / 2.0));
        }
    }
    let spec8 = QuantizerSpec::new(8, 3.0).unwrap();
    let idempotent = (0..256i64).all(|i| {
        let v = spec8.value_of(i);
        let once = quantize(&[v], &spec8);
        once.indices == Some(vec![i]) && quantize(&once.values, &spec8).values == once.values
    });
    let spec64 = QuantizerSpec::new(64, 3.0).unwrap();
    let z: Vec<f64> = (0..10_000).map(|_| rng.random_range(-1e3..1e3)).collect();
    let pass_through = quantize(&z, &spec64).values.iter().zip(&z).all(|(a, b)| a.to_bits() == b.to_bits())
        && z.iter().all(|&x| spec64.ste_grad(x) == 1.0);
    verdict(
        worst_ratio <= 1.0 + 1e-9 && idempotent && pass_through,
        format!(
            "max |Q(x)-x|/(Δ/2) = {worst_ratio:.6}; idempotent at n=8: {idempotent}; bitwise pass-through at n=64: {pass_through}"
        ),
    )
}

// 8 ---------------------------------------------------------------------

fn run_a() -> PathBuf {
    work_dir().join("sweep").join(interval_dir_name(1e-3))
}

fn end_to_end() -> Verdict {
    let cfg = ExperimentConfig::default();
    let start = Instant::now();
    let report = match run_experiment(&cfg, &run_a()) {
        Ok(r) => r,
        Err(e) => return verdict(false, e.to_string()),
    };
    let secs = start.elapsed().as_secs_f64();
    let ade = report.scheme("ade-mi").expect("ade-mi row");
    let best_local = report.devices.iter().map(|d| d.local_accuracy).fold(0.0, f64::max);
    let min_recall = ade.per_class_recall.iter().cloned().fold(1.0, f64::min);
    let locals: Vec<String> = report.devices.iter().map(|d| format!("{:.3}", d.local_accuracy)).collect();
    verdict(
        ade.accuracy >= 0.85 && ade.accuracy >= best_local && min_recall >= 0.70 && secs < 600.0,
        format!(
            "ADE-MI accuracy {:.3}, local decoders [{}], min per-class recall {:.3}, {:.0} s",
            ade.accuracy,
            locals.join(", "),
            min_recall,
            secs
        ),
    )
}

// 9 ---------------------------------------------------------------------

fn trends() -> Verdict {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let rows = match sweep_interval(&cfg, &[1e-3, 2e-3, 4e-3], &work_dir().join("sweep")) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("interval sweep: {e}")),
    };
    let mut interval_ok = true;
    let mut parts = Vec::new();
    for scheme in ["single", "multi", "ade-mi"] {
        let accs: Vec<f64> = rows.iter().filter(|r| r.scheme == scheme).map(|r| r.accuracy).collect();
        interval_ok &= accs.windows(2).all(|w| w[1] <= w[0] + 0.02);
        let shown: Vec<String> = accs.iter().map(|a| format!("{a:.3}")).collect();
        parts.push(format!("{scheme} [{}]", shown.join(", ")));
    }
    let upload = match sweep_upload(&run_a(), &default_budgets()) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("upload sweep: {e}")),
    };
    let ade = budget_to_reach(&upload, "ade-mi", 0.9);
    let multi = budget_to_reach(&upload, "multi", 0.9);
    let upload_ok = matches!((ade, multi), (Some(a), Some(m)) if m >= 100.0 * a);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        interval_ok && upload_ok,
        format!(
            "accuracy at 1/2/4 ms: {}; 90% of final reached at {:?} s (ADE-MI) vs {:?} s (multi); {:.0} s",
            parts.join(", "),
            ade,
            multi,
            secs
        ),
    )
}

// 10 --------------------------------------------------------------------

fn determinism() -> Verdict {
    let cfg = ExperimentConfig::default();
    let b = work_dir().join("repeat");
    if let Err(e) = run_experiment(&cfg, &b) {
        return verdict(false, e.to_string());
    }
    let a_dir = RunDir::open(&run_a()).unwrap();
    let b_dir = RunDir::open(&b).unwrap();
    // re-evaluating from persisted artifacts must not change anything
    let reeval = stage_eval(&cfg, &b_dir).map(|r| r == b_dir.report().unwrap());
    let read = |d: &RunDir, name: &str| fs::read(d.path(name)).unwrap_or_default();
    let sums_equal = read(&a_dir, "checksums.txt") == read(&b_dir, "checksums.txt");
    let report_equal = read(&a_dir, "report.json") == read(&b_dir, "report.json");
    let files = String::from_utf8_lossy(&read(&b_dir, "checksums.txt")).lines().count();
    verdict(
        sums_equal && report_equal && matches!(reeval, Ok(true)),
        format!("{files} artifacts compared by SHA-256; reports identical: {report_equal}; re-evaluation stable: {}", matches!(reeval, Ok(true))),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Verdict); 10] = [
        (1, "latency table", table_latency),
        (2, "latent width rule", latent_width_rule),
        (3, "compression ratio", compression),
        (4, "gradient suite", gradient_suite),
        (5, "phase-error cancellation", phase_cancellation),
        (6, "PCA oracle", pca_oracle),
        (7, "quantizer", quantizer),
        (8, "end-to-end accuracy", end_to_end),
        (10, "determinism", determinism),
        (9, "trend analogs", trends),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wants = |id: u32| selected.is_empty() || selected.contains(&id);
    if wants(8) || wants(9) || wants(10) {
        let _ = fs::remove_dir_all(work_dir());
    }
    if (wants(9) || wants(10)) && !wants(8) {
        println!("note: criteria 9 and 10 reuse the run from criterion 8, which is added");
    }
    let mut failed = 0;
    let mut results = Vec::new();
    let run_8 = wants(8) || wants(9) || wants(10);
    for (id, name, check) in criteria {
        if !(wants(id) || (id == 8 && run_8)) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let line = format!(
            "{} criterion {id:>2} {name}: {} [{:.1} s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
        println!("{line}");
        failed += usize::from(!v.pass);
        results.push((id, line));
    }
    results.sort_by_key(|(id, _)| *id);
    println!("\nsummary");
    for (_, line) in &results {
        println!("{line}");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
