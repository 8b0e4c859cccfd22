//! End-to-end runs persisted to a run directory.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.toml                      configuration snapshot
//! seeds.manifest                   every derived seed
//! spectrograms_<k>.bin             f64 [N, S_T, S_F], max-normalized
//! labels.bin, split_train.bin, split_test.bin     i64
//! device_<k>.bin / .manifest       encoder and local decoder parameters
//! device_<k>.json, device_<k>.jsonl               device report and curve
//! latents_<k>.bin / .manifest      uploaded training latents (one shot)
//! train_labels.bin                 labels uploaded with the latents
//! test_latents_<k>.bin / .manifest test-time latents
//! server_model.bin / .manifest, server.jsonl
//! server_inputs.manifest           checksums of every file the server read
//! baseline_<mode>.bin / .manifest / .jsonl, baseline_<mode>_pred.bin
//! report.json, confusion.csv, confusion_<scheme>.csv
//! checksums.txt                    SHA-256 of every other file
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::baseline::{train_baseline, BaselineMode, BaselineNet};
use crate::channel::{raw_payload_bits, shannon_capacity, upload_latency, Scheme};
use crate::dfs::DfsPipeline;
use crate::encoder::{dequantize, train_device, LatentVector, QuantizerSpec};
use crate::error::{Error, Result, StageExt};
use crate::harness::config::ExperimentConfig;
use crate::harness::metrics::{confusion_matrix, curve_jsonl, DeviceReport, MetricsReport, SchemeReport};
use crate::harness::split::{split_indices, Split};
use crate::harness::tensor_io::{load_checkpoint, save_checkpoint, sha256_file, sha256_hex, with_ext, Manifest, TensorData, TensorFile};
use crate::nn::{argmax, ParamStore, RealTensor, TrainConfig};
use crate::rng::{derive_seed, TAG_BASELINE};
use crate::server::{train_server, ServerNet};
use crate::synth::synth_event;
use crate::training::{accuracy, gather_rows, EpochMetrics};

pub const CHECKSUMS: &str = "checksums.txt";
pub const REPORT: &str = "report.json";

/// A run directory and typed access to its artifacts.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn open(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::io(root, std::io::Error::new(std::io::ErrorKind::NotFound, "run directory not found")));
        }
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| Error::io(p, e))
    }

    fn read_text(&self, name: &str) -> Result<String> {
        let p = self.path(name);
        fs::read_to_string(&p).map_err(|e| Error::io(p, e))
    }

    fn write_i64(&self, name: &str, v: &[usize]) -> Result<()> {
        let data = v.iter().map(|&x| x as i64).collect();
        TensorFile::new(&[v.len()], TensorData::I64(data))?.write(&self.path(name))
    }

    pub(crate) fn read_usize(&self, name: &str) -> Result<Vec<usize>> {
        let p = self.path(name);
        TensorFile::read(&p)?
            .into_i64()?
            .into_iter()
            .map(|x| usize::try_from(x).map_err(|_| Error::format(&p, format!("negative index {x}"))))
            .collect()
    }

    /// The configuration snapshot written by the synthesis stage.
    pub fn config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml_str(&self.read_text("config.toml")?)
    }

    pub fn labels(&self) -> Result<Vec<usize>> {
        self.read_usize("labels.bin")
    }

    pub fn split(&self) -> Result<Split> {
        Ok(Split {
            train: self.read_usize("split_train.bin")?,
            test: self.read_usize("split_test.bin")?,
        })
    }

    /// Device `k`'s spectrograms as `[N, 1, S_T, S_F]`.
    pub fn spectrograms(&self, k: usize) -> Result<RealTensor> {
        let t = TensorFile::read(&self.path(&format!("spectrograms_{k}.bin")))?.to_real()?;
        if t.shape.len() != 3 {
            return Err(Error::format(self.path(&format!("spectrograms_{k}.bin")), "expected [N, S_T, S_F]"));
        }
        let (n, h, w) = (t.shape[0], t.shape[1], t.shape[2]);
        t.reshape(&[n, 1, h, w])
    }

    pub fn report(&self) -> Result<MetricsReport> {
        let p = self.path(REPORT);
        serde_json::from_str(&self.read_text(REPORT)?).map_err(|e| Error::format(p, e.to_string()))
    }

    pub fn device_report(&self, k: usize) -> Result<DeviceReport> {
        let name = format!("device_{k}.json");
        serde_json::from_str(&self.read_text(&name)?).map_err(|e| Error::format(self.path(&name), e.to_string()))
    }
}

/// Writes latents with their manifest: integer codes when quantized, values
/// otherwise.
pub fn write_latents(stem: &Path, latents: &[LatentVector], device_id: usize, spec: &QuantizerSpec, extra: &Manifest) -> Result<()> {
    let dim = latents.first().map_or(0, LatentVector::dim);
    if latents.iter().any(|l| l.dim() != dim || l.spec != *spec) {
        return Err(Error::domain("latents disagree on width or quantizer"));
    }
    let dims = [latents.len(), dim];
    let file = if spec.is_pass_through() {
        TensorFile::new(&dims, TensorData::F64(latents.iter().flat_map(|l| l.values.clone()).collect()))?
    } else {
        let codes = latents.iter().flat_map(|l| l.indices.clone().expect("quantized latents carry codes")).collect();
        TensorFile::new(&dims, TensorData::I64(codes))?
    };
    file.write(&with_ext(stem, "bin"))?;
    let mut m = extra.clone();
    m.set("device_id", device_id)
        .set("dim", dim)
        .set("num_samples", latents.len())
        .set("quantizer.bits", spec.bits)
        .set("quantizer.clip", spec.clip)
        .set("quantizer.mode", if spec.is_pass_through() { "pass-through" } else { "uniform" })
        .set("bits_per_sample", dim as u64 * spec.bits as u64);
    m.write(&with_ext(stem, "manifest"))
}

/// Reads latents written by [`write_latents`]; returns the device id too.
pub fn read_latents(stem: &Path) -> Result<(usize, Vec<LatentVector>)> {
    let mpath = with_ext(stem, "manifest");
    let m = Manifest::read(&mpath)?;
    let spec = QuantizerSpec::new(m.parse("quantizer.bits", &mpath)?, m.parse("quantizer.clip", &mpath)?)?;
    let device_id: usize = m.parse("device_id", &mpath)?;
    let dim: usize = m.parse("dim", &mpath)?;
    let bpath = with_ext(stem, "bin");
    let file = TensorFile::read(&bpath)?;
    if file.dims.len() != 2 || file.dims[1] != dim {
        return Err(Error::format(&bpath, format!("dims {:?} disagree with manifest width {dim}", file.dims)));
    }
    let latents = match (file.data, spec.is_pass_through()) {
        (TensorData::F64(v), true) => v
            .chunks(dim.max(1))
            .map(|c| LatentVector { values: c.to_vec(), indices: None, spec })
            .collect(),
        (TensorData::I64(codes), false) => {
            let levels = spec.levels().expect("quantized") as i64;
            if codes.iter().any(|&c| !(0..levels).contains(&c)) {
                return Err(Error::format(&bpath, "code outside quantizer range"));
            }
            codes
                .chunks(dim.max(1))
                .map(|c| {
                    let l = LatentVector { values: Vec::new(), indices: Some(c.to_vec()), spec };
                    LatentVector { values: dequantize(&l), ..l }
                })
                .collect()
        }
        _ => return Err(Error::format(&bpath, "payload dtype does not match quantizer mode")),
    };
    Ok((device_id, latents))
}

/// Fused `[L, Σd]` matrix of latents from per-device stems, ordered by the
/// device ids recorded in the manifests.
pub(crate) fn fuse_latent_files(dir: &RunDir, prefix: &str, num_devices: usize, inputs: &mut Manifest) -> Result<RealTensor> {
    let mut views: Vec<Option<Vec<LatentVector>>> = vec![None; num_devices];
    for k in 0..num_devices {
        let stem = dir.path(&format!("{prefix}_{k}"));
        for ext in ["bin", "manifest"] {
            let p = with_ext(&stem, ext);
            inputs.set(&p.file_name().expect("file name").to_string_lossy(), sha256_file(&p)?);
        }
        let (id, latents) = read_latents(&stem)?;
        match views.get_mut(id) {
            Some(slot @ None) => *slot = Some(latents),
            _ => return Err(Error::domain(format!("unexpected or duplicate device id {id} in {prefix}_{k}"))),
        }
    }
    let views: Vec<Vec<LatentVector>> = views.into_iter().map(|v| v.expect("all ids present")).collect();
    let n = views[0].len();
    if views.iter().any(|v| v.len() != n) {
        return Err(Error::domain("devices uploaded different numbers of latents: missing view"));
    }
    let width: usize = views.iter().map(|v| v.first().map_or(0, LatentVector::dim)).sum();
    let mut data = Vec::with_capacity(n * width);
    for l in 0..n {
        for v in &views {
            data.extend_from_slice(&v[l].values);
        }
    }
    RealTensor::from_vec(&[n, width], data)
}

/// Synthesizes every event, extracts and normalizes the spectrograms of all
/// devices, and writes them with labels, split, config and seeds.
pub fn stage_synth(cfg: &ExperimentConfig, dir: &RunDir) -> Result<()> {
    cfg.validate()?;
    let fs_hz = cfg.scene.sample_rate_hz();
    let pipeline = DfsPipeline::new(cfg.pipeline.clone(), cfg.stft.clone(), fs_hz)?;
    let (st, sf) = cfg.spectrogram_shape()?;
    let k_count = cfg.scene.num_devices;
    let mut views = vec![Vec::with_capacity(cfg.n_events * st * sf); k_count];
    let mut labels = Vec::with_capacity(cfg.n_events);
    for i in 0..cfg.n_events {
        let event = synth_event(&cfg.scene, cfg.base_seed, i)?;
        labels.push(event.label);
        for (k, csi) in event.views.iter().enumerate() {
            views[k].extend(pipeline.process(csi)?.max_normalized());
        }
    }
    let split = split_indices(&labels, cfg.split_ratio, cfg.base_seed)?;
    dir.write_text("config.toml", &cfg.to_toml_string()?)?;
    let mut seeds = Manifest::new();
    seeds.set("base_seed", cfg.base_seed);
    for k in 0..k_count {
        seeds.set(&format!("device_{k}.train_seed"), cfg.device_train_config(k).seed);
    }
    seeds.set("server.train_seed", cfg.train_server.seed);
    for mode in baseline_modes(cfg) {
        seeds.set(&format!("baseline_{}.train_seed", baseline_name(mode)), baseline_config(cfg, mode).seed);
    }
    seeds.write(&dir.path("seeds.manifest"))?;
    for (k, v) in views.into_iter().enumerate() {
        TensorFile::new(&[cfg.n_events, st, sf], TensorData::F64(v))?.write(&dir.path(&format!("spectrograms_{k}.bin")))?;
    }
    dir.write_i64("labels.bin", &labels)?;
    dir.write_i64("split_train.bin", &split.train)?;
    dir.write_i64("split_test.bin", &split.test)
}

/// Algorithm-1 training of device `k`, then the one-shot latent upload.
pub fn stage_train_device(cfg: &ExperimentConfig, dir: &RunDir, k: usize) -> Result<DeviceReport> {
    if k >= cfg.scene.num_devices {
        return Err(Error::Config(format!("device {k} out of range 0..{}", cfg.scene.num_devices)));
    }
    let link = cfg.channel.link_budget(k)?;
    let x = dir.spectrograms(k)?;
    let labels = dir.labels()?;
    let split = dir.split()?;
    let xtr = gather_rows(&x, &split.train);
    let ytr: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
    let xte = gather_rows(&x, &split.test);
    let yte: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
    let train_cfg = cfg.device_train_config(k);
    let trained = train_device(k, &xtr, &ytr, &link, &train_cfg, &cfg.trunk, cfg.quantizer_clip)?;
    for l in &trained.train_latents {
        if !link.complies(l.dim(), l.spec.bits) {
            return Err(Error::InsufficientCapacity {
                budget_bits: link.capacity_bps * link.time_budget_s,
                required_bits: l.bit_cost() * link.samples_per_transmission,
            });
        }
    }
    save_checkpoint(&dir.path(&format!("device_{k}")), &trained.store)?;
    let mut extra = Manifest::new();
    extra
        .set("seed", train_cfg.seed)
        .set("capacity_bps", link.capacity_bps)
        .set("samples_per_transmission", link.samples_per_transmission);
    write_latents(&dir.path(&format!("latents_{k}")), &trained.train_latents, k, &trained.quantizer, &extra)?;
    let test_latents = trained.net.encode_deterministic(&trained.store, &xte, &trained.quantizer)?;
    write_latents(&dir.path(&format!("test_latents_{k}")), &test_latents, k, &trained.quantizer, &extra)?;
    if k == 0 {
        dir.write_i64("train_labels.bin", &ytr)?;
    }
    let probs = trained.net.local_predict(&trained.store, &xte, &trained.quantizer)?;
    let preds: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let report = DeviceReport {
        device_id: k,
        latent_dim: link.dim,
        bits_per_element: trained.quantizer.bits,
        capacity_bps: link.capacity_bps,
        local_accuracy: accuracy(&preds, &yte),
        training_curve: trained.history,
    };
    dir.write_text(&format!("device_{k}.jsonl"), &curve_jsonl(&report.training_curve))?;
    dir.write_text(
        &format!("device_{k}.json"),
        &serde_json::to_string_pretty(&report).expect("plain struct serializes"),
    )?;
    Ok(report)
}

/// Algorithm-2 training from the uploaded latent files and labels only.
pub fn stage_train_server(cfg: &ExperimentConfig, dir: &RunDir) -> Result<Vec<EpochMetrics>> {
    let mut inputs = Manifest::new();
    let z = fuse_latent_files(dir, "latents", cfg.scene.num_devices, &mut inputs)?;
    let labels_path = dir.path("train_labels.bin");
    inputs.set("train_labels.bin", sha256_file(&labels_path)?);
    let labels = dir.read_usize("train_labels.bin")?;
    let trained = train_server(&z, &labels, &cfg.train_server)?;
    save_checkpoint(&dir.path("server_model"), &trained.store)?;
    inputs.write(&dir.path("server_inputs.manifest"))?;
    dir.write_text("server.jsonl", &curve_jsonl(&trained.history))?;
    Ok(trained.history)
}

pub fn baseline_modes(cfg: &ExperimentConfig) -> [BaselineMode; 2] {
    [
        BaselineMode::SingleView {
            device: cfg.single_view_device,
        },
        BaselineMode::MultiView,
    ]
}

pub fn baseline_name(mode: BaselineMode) -> &'static str {
    match mode {
        BaselineMode::SingleView { .. } => "single",
        BaselineMode::MultiView => "multi",
    }
}

pub fn baseline_config(cfg: &ExperimentConfig, mode: BaselineMode) -> TrainConfig {
    let tag = match mode {
        BaselineMode::SingleView { device } => device as u64,
        BaselineMode::MultiView => u64::MAX,
    };
    TrainConfig {
        seed: derive_seed(cfg.train_device.seed, &[TAG_BASELINE, tag]),
        ..cfg.train_device.clone()
    }
}

/// Every device's spectrograms, in device order.
pub(crate) fn load_views(dir: &RunDir, cfg: &ExperimentConfig) -> Result<Vec<RealTensor>> {
    (0..cfg.scene.num_devices).map(|k| dir.spectrograms(k)).collect()
}

/// Trains a raw baseline on the training events listed in `train_idx` and
/// returns its test predictions and curve.
pub(crate) fn fit_baseline(
    cfg: &ExperimentConfig,
    views: &[RealTensor],
    labels: &[usize],
    train_idx: &[usize],
    test_idx: &[usize],
    mode: BaselineMode,
) -> Result<(Vec<usize>, Vec<EpochMetrics>, ParamStore, BaselineNet)> {
    let pick = |idx: &[usize]| -> Vec<RealTensor> { views.iter().map(|v| gather_rows(v, idx)).collect() };
    let ytr: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
    let trained = train_baseline(&pick(train_idx), &ytr, mode, &baseline_config(cfg, mode), &cfg.trunk)?;
    let probs = trained.net.predict(&trained.store, &pick(test_idx))?;
    Ok((
        probs.iter().map(|p| argmax(p)).collect(),
        trained.history,
        trained.store,
        trained.net,
    ))
}

/// Trains both raw-spectrogram baselines and stores their test predictions.
pub fn stage_baselines(cfg: &ExperimentConfig, dir: &RunDir) -> Result<()> {
    let labels = dir.labels()?;
    let split = dir.split()?;
    let views = load_views(dir, cfg)?;
    for mode in baseline_modes(cfg) {
        let (preds, curve, store, _) = fit_baseline(cfg, &views, &labels, &split.train, &split.test, mode)?;
        let name = baseline_name(mode);
        save_checkpoint(&dir.path(&format!("baseline_{name}")), &store)?;
        dir.write_text(&format!("baseline_{name}.jsonl"), &curve_jsonl(&curve))?;
        dir.write_i64(&format!("baseline_{name}_pred.bin"), &preds)?;
    }
    Ok(())
}

/// Per-event upload payload (bits) and latency (seconds) of each scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UploadCost {
    pub scheme: Scheme,
    pub payload_bits: u64,
    pub latency_s: f64,
}

/// Upload costs at the configured channel for latent widths `dims`.
pub fn upload_costs(cfg: &ExperimentConfig, dims: &[usize]) -> Result<Vec<UploadCost>> {
    let ch = &cfg.channel;
    let (st, sf) = cfg.spectrogram_shape()?;
    let raw = raw_payload_bits(st, sf, ch.bits_per_element)?;
    let k = ch.num_devices;
    let caps: Vec<f64> = (0..k)
        .map(|d| shannon_capacity(ch.device_bandwidth_hz(), ch.device_snr(d)))
        .collect::<Result<_>>()?;
    let full = shannon_capacity(ch.total_bandwidth_hz, ch.device_snr(cfg.single_view_device))?;
    let ade_bits: Vec<u64> = dims.iter().map(|&d| d as u64 * ch.bits_per_element as u64).collect();
    let max_over = |bits: &dyn Fn(usize) -> u64| -> Result<f64> {
        (0..k).try_fold(0.0f64, |m, d| Ok(m.max(upload_latency(bits(d) as f64, caps[d])?)))
    };
    Ok(vec![
        UploadCost {
            scheme: Scheme::Single,
            payload_bits: raw,
            latency_s: upload_latency(raw as f64, full)?,
        },
        UploadCost {
            scheme: Scheme::Multi,
            payload_bits: raw * k as u64,
            latency_s: max_over(&|_| raw)?,
        },
        UploadCost {
            scheme: Scheme::AdeMi,
            payload_bits: ade_bits.iter().sum(),
            latency_s: max_over(&|d| ade_bits[d])?,
        },
    ])
}

fn read_curve(dir: &RunDir, name: &str) -> Result<Vec<EpochMetrics>> {
    dir.read_text(name)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::format(dir.path(name), e.to_string())))
        .collect()
}

/// Server predictions on the test-time latents.
fn server_predictions(cfg: &ExperimentConfig, dir: &RunDir) -> Result<Vec<usize>> {
    let mut seen = Manifest::new();
    let z = fuse_latent_files(dir, "test_latents", cfg.scene.num_devices, &mut seen)?;
    let mut store = ParamStore::new(cfg.train_server.seed);
    let net = ServerNet::new(&mut store, z.shape[1])?;
    store.load_values(&load_checkpoint(&dir.path("server_model"))?)?;
    Ok(net.predict_batch(&store, &z)?.iter().map(|p| argmax(p)).collect())
}

/// Evaluates every scheme on the test split and writes the report,
/// confusion matrices and checksums.
pub fn stage_eval(cfg: &ExperimentConfig, dir: &RunDir) -> Result<MetricsReport> {
    let labels = dir.labels()?;
    let split = dir.split()?;
    let yte: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
    let devices = (0..cfg.scene.num_devices)
        .map(|k| dir.device_report(k))
        .collect::<Result<Vec<_>>>()?;
    let dims: Vec<usize> = devices.iter().map(|d| d.latent_dim).collect();
    let costs = upload_costs(cfg, &dims)?;
    let mut schemes = Vec::new();
    for cost in costs {
        let (preds, curve) = match cost.scheme {
            Scheme::AdeMi => (server_predictions(cfg, dir)?, read_curve(dir, "server.jsonl")?),
            other => {
                let name = other.label();
                (
                    dir.read_usize(&format!("baseline_{name}_pred.bin"))?,
                    read_curve(dir, &format!("baseline_{name}.jsonl"))?,
                )
            }
        };
        let confusion = confusion_matrix(&preds, &yte)?;
        let file = match cost.scheme {
            Scheme::AdeMi => "confusion.csv".to_string(),
            other => format!("confusion_{}.csv", other.label()),
        };
        dir.write_text(&file, &confusion.to_csv())?;
        schemes.push(SchemeReport {
            scheme: cost.scheme.label().to_string(),
            accuracy: confusion.accuracy(),
            per_class_recall: confusion.recalls(),
            confusion,
            payload_bits: cost.payload_bits,
            upload_latency_s: cost.latency_s,
            training_curve: curve,
        });
    }
    let report = MetricsReport {
        config_sha256: sha256_hex(dir.read_text("config.toml")?.as_bytes()),
        num_train: split.train.len(),
        num_test: split.test.len(),
        spectrogram_shape: cfg.spectrogram_shape()?,
        devices,
        schemes,
    };
    dir.write_text(REPORT, &report.to_json()?)?;
    write_checksums(dir)?;
    Ok(report)
}

fn artifact_files(dir: &RunDir) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir.root()).map_err(|e| Error::io(dir.root(), e))?;
    let mut names = Vec::new();
    for e in entries {
        let e = e.map_err(|err| Error::io(dir.root(), err))?;
        if e.path().is_file() {
            let name = e.file_name().to_string_lossy().into_owned();
            if name != CHECKSUMS {
                names.push(name);
            }
        }
    }
    names.sort();
    Ok(names)
}

/// Writes `checksums.txt` with one `<sha256>  <file>` line per artifact.
pub fn write_checksums(dir: &RunDir) -> Result<()> {
    let mut text = String::new();
    for name in artifact_files(dir)? {
        text.push_str(&format!("{}  {name}\n", sha256_file(&dir.path(&name))?));
    }
    dir.write_text(CHECKSUMS, &text)
}

/// Re-hashes every artifact listed in `checksums.txt`.
pub fn verify_checksums(dir: &RunDir) -> Result<usize> {
    let path = dir.path(CHECKSUMS);
    let text = dir.read_text(CHECKSUMS)?;
    let mut count = 0;
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (hash, name) = line
            .split_once("  ")
            .ok_or_else(|| Error::format(&path, format!("bad line `{line}`")))?;
        let actual = sha256_file(&dir.path(name))?;
        if actual != hash {
            return Err(Error::format(dir.path(name), "checksum mismatch"));
        }
        count += 1;
    }
    Ok(count)
}

/// Full run: synthesis, per-device training and upload, server training,
/// baselines and evaluation. Errors carry the failing stage's name.
pub fn run_experiment(cfg: &ExperimentConfig, root: &Path) -> Result<MetricsReport> {
    cfg.validate().stage("config")?;
    let dir = RunDir::create(root).stage("setup")?;
    stage_synth(cfg, &dir).stage("synth")?;
    for k in 0..cfg.scene.num_devices {
        stage_train_device(cfg, &dir, k).stage("train-device")?;
    }
    stage_train_server(cfg, &dir).stage("train-server")?;
    stage_baselines(cfg, &dir).stage("baselines")?;
    stage_eval(cfg, &dir).stage("eval")
}
