//! CSI to Doppler spectrogram: conjugate multiplication against a reference
//! antenna, zero-phase band-pass, first principal component, STFT.

pub mod filter;
pub mod pca;
pub mod stft;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use filter::{bandpass_filter, BandpassFilter, FilterPlan};
pub use pca::{first_principal_component, PrincipalSeries};
pub use stft::{num_frames, stft_spectrogram, DfsSpectrogram, StftConfig};

use crate::error::{Error, Result};
use crate::synth::CsiTensor;

/// Processed CSI, `rows = S` time samples by `cols = (N-1)·M`.
///
/// Columns are antenna-pair-major, subcarrier-minor: column
/// `p·M + m` holds antenna pair `p` (the `p`-th non-reference antenna in
/// ascending order) on subcarrier `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiMatrix {
    pub data: Vec<Complex64>,
    pub rows: usize,
    pub cols: usize,
    pub sample_rate_hz: f64,
}

impl CsiMatrix {
    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self.data[r * self.cols + c]).collect()
    }

    pub fn set_column(&mut self, c: usize, values: &[Complex64]) {
        for (r, v) in values.iter().enumerate() {
            self.data[r * self.cols + c] = *v;
        }
    }

    /// Applies the zero-phase filter to every column.
    pub fn filter_columns(&mut self, filter: &BandpassFilter) {
        let mut plan = filter.plan(self.rows);
        for c in 0..self.cols {
            let mut col = self.column(c);
            plan.apply_in_place(&mut col);
            self.set_column(c, &col);
        }
    }
}

/// `h(t,a,m)·conj(h(t,ref,m))` for every non-reference antenna `a`.
pub fn conjugate_multiply(csi: &CsiTensor, ref_antenna: usize, sample_rate_hz: f64) -> Result<CsiMatrix> {
    let n = csi.num_antennas;
    if n < 2 {
        return Err(Error::domain("conjugate multiplication needs at least two antennas"));
    }
    if ref_antenna >= n {
        return Err(Error::domain(format!(
            "reference antenna {ref_antenna} out of range 0..{n}"
        )));
    }
    let m_count = csi.num_subcarriers;
    let cols = (n - 1) * m_count;
    let mut data = Vec::with_capacity(csi.num_samples * cols);
    for t in 0..csi.num_samples {
        for a in (0..n).filter(|&a| a != ref_antenna) {
            for m in 0..m_count {
                data.push(csi.at(t, a, m) * csi.at(t, ref_antenna, m).conj());
            }
        }
    }
    Ok(CsiMatrix {
        data,
        rows: csi.num_samples,
        cols,
        sample_rate_hz,
    })
}

/// Parameters of the full CSI-to-spectrogram chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub ref_antenna: usize,
    pub low_cut_hz: f64,
    pub high_cut_hz: f64,
    pub filter_taps: usize,
    pub pca_tol: f64,
    pub pca_max_iter: usize,
    pub pca_start_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            ref_antenna: 0,
            low_cut_hz: 2.0,
            high_cut_hz: 60.0,
            filter_taps: filter::DEFAULT_TAPS,
            pca_tol: pca::DEFAULT_TOL,
            pca_max_iter: pca::DEFAULT_MAX_ITER,
            pca_start_seed: pca::DEFAULT_START_SEED,
        }
    }
}

/// A configured pipeline for one sample rate.
#[derive(Debug, Clone)]
pub struct DfsPipeline {
    pub config: PipelineConfig,
    pub stft: StftConfig,
    pub sample_rate_hz: f64,
    filter: BandpassFilter,
}

impl DfsPipeline {
    pub fn new(config: PipelineConfig, stft: StftConfig, sample_rate_hz: f64) -> Result<Self> {
        let filter = BandpassFilter::design(
            sample_rate_hz,
            config.low_cut_hz,
            config.high_cut_hz,
            config.filter_taps,
        )?;
        Ok(Self {
            config,
            stft,
            sample_rate_hz,
            filter,
        })
    }

    pub fn filter(&self) -> &BandpassFilter {
        &self.filter
    }

    /// Output shape `(S_T, S_F)` for series of `num_samples`, after validation.
    pub fn output_shape(&self, num_samples: usize) -> Result<(usize, usize)> {
        self.stft.validate(num_samples, self.sample_rate_hz)?;
        Ok((self.stft.num_frames_for(num_samples)?, self.stft.num_freq_bins))
    }

    pub fn process(&self, csi: &CsiTensor) -> Result<DfsSpectrogram> {
        self.stft.validate(csi.num_samples, self.sample_rate_hz)?;
        let mut f = conjugate_multiply(csi, self.config.ref_antenna, self.sample_rate_hz)?;
        f.filter_columns(&self.filter);
        let pc = first_principal_component(
            &f,
            self.config.pca_tol,
            self.config.pca_max_iter,
            self.config.pca_start_seed,
        )?;
        stft_spectrogram(&pc.data, &self.stft, self.sample_rate_hz)
    }
}
