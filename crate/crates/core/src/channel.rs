//! Uplink model: Shannon capacity over an equal OFDMA split, the
//! capacity-derived latent width and upload latencies.
//!
//! The latent width rule divides a per-transmission bit budget by the bits
//! needed per sample. The budget is the capacity times a time window of
//! `samples_per_transmission · per_sample_time_s`, so `d_k` reduces to
//! `floor(C_k · t_s / n_k)`. The default `t_s = 1.44e-5 s` with `n_k = 64`
//! gives a coefficient `B_k·t_s/n_k = 3` at `B = 40 MHz`, `K = 3`; both were
//! fitted to the reported latency table and are not physical constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub total_bandwidth_hz: f64,
    pub num_devices: usize,
    /// SNR applied to every device unless `device_snr_db` overrides it.
    pub snr_db: f64,
    #[serde(default)]
    pub device_snr_db: Vec<f64>,
    pub bits_per_element: u32,
    pub samples_per_transmission: u64,
    pub per_sample_time_s: f64,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            total_bandwidth_hz: 40e6,
            num_devices: 3,
            snr_db: 10.0,
            device_snr_db: Vec::new(),
            bits_per_element: 64,
            samples_per_transmission: 64,
            per_sample_time_s: 1.44e-5,
        }
    }
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.total_bandwidth_hz > 0.0) {
            return Err(Error::Config("total bandwidth must be positive".into()));
        }
        if self.num_devices < 1 {
            return Err(Error::Config("channel needs at least one device".into()));
        }
        if self.bits_per_element < 1 || self.samples_per_transmission < 1 {
            return Err(Error::Config(
                "bits per element and samples per transmission must be >= 1".into(),
            ));
        }
        if !(self.per_sample_time_s > 0.0) {
            return Err(Error::Config("per-sample time budget must be positive".into()));
        }
        if !self.device_snr_db.is_empty() && self.device_snr_db.len() != self.num_devices {
            return Err(Error::Config(format!(
                "{} per-device SNRs given for {} devices",
                self.device_snr_db.len(),
                self.num_devices
            )));
        }
        Ok(())
    }

    pub fn device_snr(&self, device: usize) -> f64 {
        self.device_snr_db.get(device).copied().unwrap_or(self.snr_db)
    }

    pub fn device_bandwidth_hz(&self) -> f64 {
        self.total_bandwidth_hz / self.num_devices as f64
    }

    /// Seconds of airtime the encoder may fill per transmission.
    pub fn time_budget_s(&self) -> f64 {
        self.samples_per_transmission as f64 * self.per_sample_time_s
    }

    pub fn link_budget(&self, device: usize) -> Result<LinkBudget> {
        self.validate()?;
        if device >= self.num_devices {
            return Err(Error::domain(format!(
                "device {device} out of range 0..{}",
                self.num_devices
            )));
        }
        let capacity = shannon_capacity(self.device_bandwidth_hz(), self.device_snr(device))?;
        let time_budget = self.time_budget_s();
        let dim = encoded_dim(
            capacity,
            self.bits_per_element,
            self.samples_per_transmission,
            time_budget,
        )?;
        let payload_bits = dim as u64 * self.bits_per_element as u64;
        Ok(LinkBudget {
            capacity_bps: capacity,
            dim,
            payload_bits,
            latency_s: upload_latency(payload_bits as f64, capacity)?,
            bits_per_element: self.bits_per_element,
            samples_per_transmission: self.samples_per_transmission,
            time_budget_s: time_budget,
        })
    }
}

/// Per-device outcome of the channel model. `payload_bits` and `latency_s`
/// refer to one encoded sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub capacity_bps: f64,
    pub dim: usize,
    pub payload_bits: u64,
    pub latency_s: f64,
    pub bits_per_element: u32,
    pub samples_per_transmission: u64,
    pub time_budget_s: f64,
}

impl LinkBudget {
    /// `d·n·L <= floor(C·t_budget)`, checked in integers.
    pub fn complies(&self, dim: usize, bits_per_element: u32) -> bool {
        let needed = dim as u128 * bits_per_element as u128 * self.samples_per_transmission as u128;
        let budget = (self.capacity_bps * self.time_budget_s).floor();
        budget >= 0.0 && needed <= budget as u128
    }
}

/// `B · log2(1 + 10^(snr_db/10))` in bits per second.
pub fn shannon_capacity(bandwidth_hz: f64, snr_db: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0) {
        return Err(Error::domain(format!("bandwidth {bandwidth_hz} Hz must be positive")));
    }
    let snr = 10f64.powf(snr_db / 10.0);
    Ok(bandwidth_hz * (1.0 + snr).log2())
}

pub fn equal_split(total_bandwidth_hz: f64, num_devices: usize) -> Result<f64> {
    if num_devices < 1 {
        return Err(Error::domain("cannot split bandwidth among zero devices"));
    }
    Ok(total_bandwidth_hz / num_devices as f64)
}

/// `floor(C · t_budget / (n · L))`; zero is an insufficient-capacity error.
pub fn encoded_dim(capacity_bps: f64, bits_per_element: u32, samples_per_transmission: u64, time_budget_s: f64) -> Result<usize> {
    if !(capacity_bps > 0.0) || bits_per_element == 0 || samples_per_transmission == 0 || !(time_budget_s > 0.0) {
        return Err(Error::domain("encoded_dim inputs must be positive"));
    }
    let budget_bits = capacity_bps * time_budget_s;
    let required_bits = bits_per_element as u64 * samples_per_transmission;
    let d = (budget_bits / required_bits as f64).floor();
    if d < 1.0 {
        return Err(Error::InsufficientCapacity {
            budget_bits,
            required_bits,
        });
    }
    Ok(d as usize)
}

pub fn raw_payload_bits(num_frames: usize, num_bins: usize, bits_per_value: u32) -> Result<u64> {
    if num_frames == 0 || num_bins == 0 || bits_per_value == 0 {
        return Err(Error::domain("payload dimensions must be positive"));
    }
    Ok(num_frames as u64 * num_bins as u64 * bits_per_value as u64)
}

pub fn upload_latency(payload_bits: f64, capacity_bps: f64) -> Result<f64> {
    if !(capacity_bps > 0.0) {
        return Err(Error::domain("capacity must be positive"));
    }
    Ok(payload_bits / capacity_bps)
}

/// How many times smaller an encoded sample is than its raw spectrogram.
pub fn compression_ratio(num_frames: usize, num_bins: usize, dim: usize) -> f64 {
    (num_frames * num_bins) as f64 / dim as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Single,
    Multi,
    AdeMi,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Single, Scheme::Multi, Scheme::AdeMi];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Single => "single",
            Scheme::Multi => "multi",
            Scheme::AdeMi => "ade-mi",
        }
    }
}

/// Per-sample upload latency of each scheme over a list of SNRs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyTable {
    pub snr_db: Vec<f64>,
    pub single_view_s: Vec<f64>,
    pub multi_view_s: Vec<f64>,
    pub ademi_s: Vec<f64>,
    pub dims: Vec<usize>,
}

/// Builds the latency table.
///
/// * single view: one raw spectrogram over the full band;
/// * multi view: every device sends its raw spectrogram on `B/K`
///   simultaneously, so the slowest device sets the latency;
/// * ADE-MI: every device sends `d_k · n_k` bits on `B/K`, again the max.
pub fn latency_table(spec: &ChannelSpec, snrs_db: &[f64], num_frames: usize, num_bins: usize) -> Result<LatencyTable> {
    spec.validate()?;
    let raw = raw_payload_bits(num_frames, num_bins, spec.bits_per_element)? as f64;
    let mut table = LatencyTable {
        snr_db: snrs_db.to_vec(),
        single_view_s: Vec::new(),
        multi_view_s: Vec::new(),
        ademi_s: Vec::new(),
        dims: Vec::new(),
    };
    for &snr in snrs_db {
        let at_snr = ChannelSpec {
            snr_db: snr,
            device_snr_db: Vec::new(),
            ..spec.clone()
        };
        let full = shannon_capacity(spec.total_bandwidth_hz, snr)?;
        table.single_view_s.push(upload_latency(raw, full)?);
        let mut multi: f64 = 0.0;
        let mut ademi: f64 = 0.0;
        let mut dim = 0;
        for k in 0..spec.num_devices {
            let link = at_snr.link_budget(k)?;
            multi = multi.max(upload_latency(raw, link.capacity_bps)?);
            ademi = ademi.max(link.latency_s);
            dim = dim.max(link.dim);
        }
        table.multi_view_s.push(multi);
        table.ademi_s.push(ademi);
        table.dims.push(dim);
    }
    Ok(table)
}

impl LatencyTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scheme");
        for s in &self.snr_db {
            out.push_str(&format!(",{s} dB"));
        }
        out.push('\n');
        let mut row = |name: &str, vals: &[f64]| {
            out.push_str(name);
            for v in vals {
                out.push_str(&format!(",{v:.6e}"));
            }
            out.push('\n');
        };
        row("single-view_s", &self.single_view_s);
        row("multi-view_s", &self.multi_view_s);
        row("ade-mi_s", &self.ademi_s);
        out.push_str("ade-mi_dim");
        for d in &self.dims {
            out.push_str(&format!(",{d}"));
        }
        out.push('\n');
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<20}", "Scheme");
        for s in &self.snr_db {
            out.push_str(&format!("{:>10}", format!("{s} dB")));
        }
        out.push('\n');
        let mut row = |name: &str, vals: Vec<String>| {
            out.push_str(&format!("{name:<20}"));
            for v in vals {
                out.push_str(&format!("{v:>10}"));
            }
            out.push('\n');
        };
        row("Single-View (s)", self.single_view_s.iter().map(|v| format!("{v:.3}")).collect());
        row("Multi-View (s)", self.multi_view_s.iter().map(|v| format!("{v:.3}")).collect());
        row("ADE-MI (1e-5 s)", self.ademi_s.iter().map(|v| format!("{:.3}", v * 1e5)).collect());
        row("d_k", self.dims.iter().map(|d| d.to_string()).collect());
        out
    }
}
