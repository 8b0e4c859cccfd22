//! Accuracy against the CSI sampling interval and against the training-data
//! upload budget.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::Scheme;
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::experiment::{
    baseline_modes, fit_baseline, fuse_latent_files, load_views, run_experiment, upload_costs, verify_checksums, RunDir,
    REPORT,
};
use crate::harness::metrics::MetricsReport;
use crate::harness::tensor_io::Manifest;
use crate::nn::{argmax, RealTensor};
use crate::server::train_server;
use crate::synth::NUM_CLASSES;
use crate::training::{accuracy, gather_rows};

/// Default sampling intervals, seconds.
pub const DEFAULT_INTERVALS_S: [f64; 3] = [1e-3, 2e-3, 4e-3];

/// One `(Δt, scheme, accuracy)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub interval_s: f64,
    pub scheme: String,
    pub accuracy: f64,
}

/// One `(budget, scheme, accuracy)` point of the upload sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadRow {
    pub budget_s: f64,
    pub scheme: String,
    /// Training events whose upload fits within the budget.
    pub num_samples: usize,
    pub accuracy: f64,
}

/// Run directory name for one sampling interval.
pub fn interval_dir_name(interval_s: f64) -> String {
    format!("dt_{}us", (interval_s * 1e6).round() as u64)
}

/// A finished run whose config snapshot equals `cfg` and whose checksums
/// verify, or `None`.
fn completed_run(cfg: &ExperimentConfig, root: &Path) -> Option<MetricsReport> {
    let dir = RunDir::open(root).ok()?;
    if dir.config().ok()? != *cfg || !dir.path(REPORT).is_file() {
        return None;
    }
    verify_checksums(&dir).ok()?;
    dir.report().ok()
}

/// One full run per sampling interval under `root/<dt_...>`. A directory
/// that already holds a verified run of the same configuration is reused.
pub fn sweep_interval(cfg: &ExperimentConfig, intervals_s: &[f64], root: &Path) -> Result<Vec<IntervalRow>> {
    if intervals_s.is_empty() {
        return Err(Error::Config("interval sweep needs at least one interval".into()));
    }
    let mut configs = Vec::with_capacity(intervals_s.len());
    for &dt in intervals_s {
        let mut c = cfg.clone();
        c.scene.sample_interval_s = dt;
        c.validate()
            .map_err(|e| Error::Config(format!("interval {dt} s: {}", e.root())))?;
        configs.push(c);
    }
    let mut rows = Vec::new();
    for (c, &dt) in configs.iter().zip(intervals_s) {
        let run_root = root.join(interval_dir_name(dt));
        let report = match completed_run(c, &run_root) {
            Some(r) => r,
            None => run_experiment(c, &run_root)?,
        };
        for s in &report.schemes {
            rows.push(IntervalRow {
                interval_s: dt,
                scheme: s.scheme.clone(),
                accuracy: s.accuracy,
            });
        }
    }
    Ok(rows)
}

/// `mantissas × 10^e` for every decade between `lo_exp` and `hi_exp`.
pub fn decade_grid(lo_exp: i32, hi_exp: i32, mantissas: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for e in lo_exp..=hi_exp {
        for &m in mantissas {
            let v = m * 10f64.powi(e);
            if v <= 10f64.powi(hi_exp) {
                out.push(v);
            }
        }
    }
    out
}

/// Default upload budgets: 1-2-5 steps from 10 µs to 100 s.
pub fn default_budgets() -> Vec<f64> {
    decade_grid(-5, 2, &[1.0, 2.0, 5.0])
}

/// Retrains each scheme on the training prefix that fits in each upload
/// budget, reusing the finished run in `run_root`. Budgets admitting no
/// event score chance accuracy; budgets admitting the full training set
/// reuse the run's report.
pub fn sweep_upload(run_root: &Path, budgets_s: &[f64]) -> Result<Vec<UploadRow>> {
    if budgets_s.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
        return Err(Error::Config("upload budgets must be positive and finite".into()));
    }
    let dir = RunDir::open(run_root)?;
    let cfg = dir.config()?;
    let report = dir.report()?;
    let labels = dir.labels()?;
    let split = dir.split()?;
    let yte: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
    let dims: Vec<usize> = report.devices.iter().map(|d| d.latent_dim).collect();
    let costs = upload_costs(&cfg, &dims)?;
    let num_train = split.train.len();

    let mut rows = Vec::new();
    for cost in &costs {
        let full = report
            .scheme(cost.scheme.label())
            .ok_or_else(|| Error::format(dir.path(REPORT), format!("missing scheme {}", cost.scheme.label())))?
            .accuracy;
        let mut memo: BTreeMap<usize, f64> = BTreeMap::new();
        memo.insert(0, 1.0 / NUM_CLASSES as f64);
        memo.insert(num_train, full);
        let mut fitter = SchemeFitter::new(&cfg, &dir, cost.scheme)?;
        for &budget in budgets_s {
            let n = ((budget / cost.latency_s).floor() as usize).min(num_train);
            let acc = match memo.get(&n) {
                Some(&a) => a,
                None => {
                    let a = fitter.accuracy_with_prefix(n, &split.train, &split.test, &labels, &yte)?;
                    memo.insert(n, a);
                    a
                }
            };
            rows.push(UploadRow {
                budget_s: budget,
                scheme: cost.scheme.label().to_string(),
                num_samples: n,
                accuracy: acc,
            });
        }
    }
    Ok(rows)
}

/// Lazily loaded training inputs of one scheme.
enum SchemeFitter<'a> {
    Server {
        cfg: &'a ExperimentConfig,
        train: RealTensor,
        train_labels: Vec<usize>,
        test: RealTensor,
    },
    Baseline {
        cfg: &'a ExperimentConfig,
        dir: &'a RunDir,
        scheme: Scheme,
        views: Option<Vec<RealTensor>>,
    },
}

impl<'a> SchemeFitter<'a> {
    fn new(cfg: &'a ExperimentConfig, dir: &'a RunDir, scheme: Scheme) -> Result<Self> {
        Ok(match scheme {
            Scheme::AdeMi => SchemeFitter::Server {
                cfg,
                train: fuse_latent_files(dir, "latents", cfg.scene.num_devices, &mut Manifest::new())?,
                train_labels: dir.read_usize("train_labels.bin")?,
                test: fuse_latent_files(dir, "test_latents", cfg.scene.num_devices, &mut Manifest::new())?,
            },
            other => SchemeFitter::Baseline {
                cfg,
                dir,
                scheme: other,
                views: None,
            },
        })
    }

    fn accuracy_with_prefix(
        &mut self,
        n: usize,
        train_idx: &[usize],
        test_idx: &[usize],
        labels: &[usize],
        yte: &[usize],
    ) -> Result<f64> {
        match self {
            SchemeFitter::Server {
                cfg,
                train,
                train_labels,
                test,
            } => {
                let prefix: Vec<usize> = (0..n).collect();
                let trained = train_server(&gather_rows(train, &prefix), &train_labels[..n], &cfg.train_server)?;
                let preds: Vec<usize> = trained
                    .net
                    .predict_batch(&trained.store, test)?
                    .iter()
                    .map(|p| argmax(p))
                    .collect();
                Ok(accuracy(&preds, yte))
            }
            SchemeFitter::Baseline { cfg, dir, scheme, views } => {
                let mode = baseline_modes(cfg)[usize::from(*scheme == Scheme::Multi)];
                if views.is_none() {
                    *views = Some(load_views(dir, cfg)?);
                }
                let views = views.as_ref().expect("loaded above");
                let (preds, ..) = fit_baseline(cfg, views, labels, &train_idx[..n], test_idx, mode)?;
                Ok(accuracy(&preds, yte))
            }
        }
    }
}

/// Smallest budget at which `scheme` reaches `fraction` of its accuracy at
/// the largest budget.
pub fn budget_to_reach(rows: &[UploadRow], scheme: &str, fraction: f64) -> Option<f64> {
    let mut pts: Vec<&UploadRow> = rows.iter().filter(|r| r.scheme == scheme).collect();
    pts.sort_by(|a, b| a.budget_s.total_cmp(&b.budget_s));
    let target = fraction * pts.last()?.accuracy;
    pts.iter().find(|r| r.accuracy >= target).map(|r| r.budget_s)
}

pub fn interval_csv(rows: &[IntervalRow]) -> String {
    let mut out = String::from("interval_s,scheme,accuracy\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.interval_s, r.scheme, r.accuracy));
    }
    out
}

pub fn upload_csv(rows: &[UploadRow]) -> String {
    let mut out = String::from("budget_s,scheme,num_samples,accuracy\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.budget_s, r.scheme, r.num_samples, r.accuracy));
    }
    out
}

/// One JSON object per line.
pub fn to_jsonl<T: Serialize>(rows: &[T]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("plain struct serializes") + "\n")
        .collect()
}

/// Writes `<stem>.csv` and `<stem>.jsonl`.
pub fn write_curve(stem: &Path, csv: &str, jsonl: &str) -> Result<(PathBuf, PathBuf)> {
    let csv_path = stem.with_extension("csv");
    let json_path = stem.with_extension("jsonl");
    if let Some(parent) = stem.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    fs::write(&json_path, jsonl).map_err(|e| Error::io(&json_path, e))?;
    Ok((csv_path, json_path))
}
