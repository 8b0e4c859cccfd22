//! Short-time Fourier transform of the principal series into a Doppler
//! power spectrogram on a symmetric frequency grid around 0 Hz.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub window_len_samples: usize,
    pub hop_samples: usize,
    /// Odd, so that one bin sits exactly on 0 Hz.
    pub num_freq_bins: usize,
    /// Retained band is `[-max_freq_hz, +max_freq_hz]`.
    pub max_freq_hz: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_len_samples: 256,
            hop_samples: 16,
            num_freq_bins: 121,
            max_freq_hz: 60.0,
        }
    }
}

/// `ceil((S - W) / hop)`.
pub fn num_frames(num_samples: usize, window_len: usize, hop: usize) -> Result<usize> {
    if window_len > num_samples {
        return Err(Error::domain(format!(
            "window length {window_len} exceeds series length {num_samples}"
        )));
    }
    if hop == 0 {
        return Err(Error::domain("hop must be positive"));
    }
    Ok((num_samples - window_len).div_ceil(hop))
}

impl StftConfig {
    /// Spacing of the retained frequency grid, Hz.
    pub fn bin_spacing_hz(&self) -> f64 {
        2.0 * self.max_freq_hz / (self.num_freq_bins - 1) as f64
    }

    /// DFT length whose bin spacing equals the grid spacing at `sample_rate_hz`.
    pub fn dft_len(&self, sample_rate_hz: f64) -> Result<usize> {
        let exact = sample_rate_hz / self.bin_spacing_hz();
        let n = exact.round();
        if n < 1.0 || (exact - n).abs() > 1e-6 * n {
            return Err(Error::domain(format!(
                "sample rate {sample_rate_hz} Hz is not an integer multiple of bin spacing {} Hz",
                self.bin_spacing_hz()
            )));
        }
        let n = n as usize;
        if n < self.num_freq_bins {
            return Err(Error::domain(format!(
                "band ±{} Hz exceeds the Nyquist range at {sample_rate_hz} Hz",
                self.max_freq_hz
            )));
        }
        Ok(n)
    }

    /// Checks the configuration against a series of `num_samples` at `sample_rate_hz`.
    /// Configurations that would produce zero frames are rejected.
    pub fn validate(&self, num_samples: usize, sample_rate_hz: f64) -> Result<()> {
        let w = self.window_len_samples;
        if w == 0 || self.hop_samples == 0 || self.hop_samples > w {
            return Err(Error::domain(format!(
                "need 0 < hop ({}) <= window ({w})",
                self.hop_samples
            )));
        }
        if w > num_samples {
            return Err(Error::domain(format!(
                "window length {w} exceeds series length {num_samples}"
            )));
        }
        if num_frames(num_samples, w, self.hop_samples)? == 0 {
            return Err(Error::domain(format!(
                "series length {num_samples} equals the window length: no STFT frames"
            )));
        }
        if self.num_freq_bins < 3 || self.num_freq_bins % 2 == 0 {
            return Err(Error::domain(format!(
                "number of frequency bins {} must be odd and >= 3",
                self.num_freq_bins
            )));
        }
        if !(self.max_freq_hz > 0.0) || self.max_freq_hz > sample_rate_hz / 2.0 {
            return Err(Error::domain(format!(
                "max frequency {} Hz outside (0, {}]",
                self.max_freq_hz,
                sample_rate_hz / 2.0
            )));
        }
        self.dft_len(sample_rate_hz).map(|_| ())
    }

    pub fn num_frames_for(&self, num_samples: usize) -> Result<usize> {
        num_frames(num_samples, self.window_len_samples, self.hop_samples)
    }
}

/// Doppler power over time, `num_frames × num_bins`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DfsSpectrogram {
    pub data: Vec<f64>,
    pub num_frames: usize,
    pub num_bins: usize,
    /// Hz, ascending, centre bin at 0.
    pub freq_axis: Vec<f64>,
    /// Seconds, centre of each frame.
    pub time_axis: Vec<f64>,
}

impl DfsSpectrogram {
    pub fn at(&self, frame: usize, bin: usize) -> f64 {
        self.data[frame * self.num_bins + bin]
    }

    pub fn total_energy(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Copy scaled so the largest entry is 1 (all-zero input stays zero).
    pub fn max_normalized(&self) -> Vec<f64> {
        let max = self.data.iter().fold(0.0f64, |m, &v| m.max(v));
        if max > 0.0 {
            self.data.iter().map(|v| v / max).collect()
        } else {
            self.data.clone()
        }
    }

    /// Power summed over time for each frequency bin.
    pub fn frequency_profile(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_bins];
        for f in 0..self.num_frames {
            for (b, o) in out.iter_mut().enumerate() {
                *o += self.at(f, b);
            }
        }
        out
    }
}

/// Symmetric Hann window of length `w`.
pub fn hann(w: usize) -> Vec<f64> {
    if w == 1 {
        return vec![1.0];
    }
    (0..w)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / (w - 1) as f64).cos())
        .collect()
}

/// Hann-windowed STFT power `|X|² / N_dft` sampled on the retained grid.
///
/// The DTFT of each windowed frame is evaluated at multiples of the grid
/// spacing by folding the frame modulo the DFT length and taking one FFT,
/// which stays exact when the window is longer than the DFT.
pub fn stft_spectrogram(series: &[Complex64], cfg: &StftConfig, sample_rate_hz: f64) -> Result<DfsSpectrogram> {
    let w = cfg.window_len_samples;
    if series.len() < w {
        return Err(Error::domain(format!(
            "series of {} samples shorter than window {w}",
            series.len()
        )));
    }
    cfg.validate(series.len(), sample_rate_hz)?;
    let n_fft = cfg.dft_len(sample_rate_hz)?;
    let frames = cfg.num_frames_for(series.len())?;
    let bins = cfg.num_freq_bins;
    let half = (bins - 1) / 2;
    let window = hann(w);
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    let mut data = Vec::with_capacity(frames * bins);
    let scale = 1.0 / n_fft as f64;
    for i in 0..frames {
        let start = i * cfg.hop_samples;
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for (n, (x, win)) in series[start..start + w].iter().zip(&window).enumerate() {
            buf[n % n_fft] += x * win;
        }
        fft.process(&mut buf);
        for j in 0..bins {
            let k = (j as isize - half as isize).rem_euclid(n_fft as isize) as usize;
            data.push(buf[k].norm_sqr() * scale);
        }
    }
    let spacing = cfg.bin_spacing_hz();
    let freq_axis = (0..bins).map(|j| (j as f64 - half as f64) * spacing).collect();
    let time_axis = (0..frames)
        .map(|i| (i * cfg.hop_samples) as f64 / sample_rate_hz + w as f64 / (2.0 * sample_rate_hz))
        .collect();
    Ok(DfsSpectrogram {
        data,
        num_frames: frames,
        num_bins: bins,
        freq_axis,
        time_axis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn frame_count_formula() {
        assert_eq!(num_frames(2000, 256, 16).unwrap(), 109);
        assert_eq!(num_frames(256, 256, 16).unwrap(), 0);
        assert_eq!(num_frames(257, 256, 16).unwrap(), 1);
        assert!(num_frames(255, 256, 16).is_err());
    }

    #[test]
    fn empty_spectrogram_config_rejected() {
        let cfg = StftConfig::default();
        assert!(cfg.validate(256, 1000.0).is_err());
        assert!(cfg.validate(2000, 1000.0).is_ok());
        let even = StftConfig {
            num_freq_bins: 120,
            ..cfg.clone()
        };
        assert!(even.validate(2000, 1000.0).is_err());
    }

    #[test]
    fn tone_peaks_at_its_frequency() {
        let fs = 1000.0;
        let x: Vec<Complex64> = (0..2000)
            .map(|n| Complex64::from_polar(1.0, 2.0 * PI * 40.0 * n as f64 / fs))
            .collect();
        let spec = stft_spectrogram(&x, &StftConfig::default(), fs).unwrap();
        assert_eq!((spec.num_frames, spec.num_bins), (109, 121));
        let target = spec
            .freq_axis
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 40.0).abs().total_cmp(&(b.1 - 40.0).abs()))
            .unwrap()
            .0;
        for f in 0..spec.num_frames {
            let row = &spec.data[f * spec.num_bins..(f + 1) * spec.num_bins];
            let arg = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(arg, target);
        }
    }

    #[test]
    fn zero_input_gives_zero_spectrogram() {
        let x = vec![Complex64::new(0.0, 0.0); 600];
        let spec = stft_spectrogram(&x, &StftConfig::default(), 1000.0).unwrap();
        assert!(spec.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn energy_identity_on_full_grid() {
        // Grid covering the whole circle: 257 bins spaced fs/257.
        let fs = 1000.0;
        let bins = 257;
        let cfg = StftConfig {
            window_len_samples: 256,
            hop_samples: 64,
            num_freq_bins: bins,
            max_freq_hz: fs * ((bins - 1) / 2) as f64 / bins as f64,
        };
        let mut rng = seeded(21);
        let x: Vec<Complex64> = (0..1000)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let spec = stft_spectrogram(&x, &cfg, fs).unwrap();
        let window = hann(256);
        let direct: f64 = (0..spec.num_frames)
            .map(|i| {
                x[i * 64..i * 64 + 256]
                    .iter()
                    .zip(&window)
                    .map(|(v, w)| (v * w).norm_sqr())
                    .sum::<f64>()
            })
            .sum();
        assert!((spec.total_energy() - direct).abs() <= 1e-9 * direct);
    }

    #[test]
    fn folded_dft_matches_direct_dtft() {
        // 250 Hz sampling: the 256-sample window is longer than the 250-point DFT.
        let fs = 250.0;
        let cfg = StftConfig::default();
        let mut rng = seeded(2);
        let x: Vec<Complex64> = (0..300)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let spec = stft_spectrogram(&x, &cfg, fs).unwrap();
        let window = hann(256);
        let n_fft = cfg.dft_len(fs).unwrap() as f64;
        for (j, &f) in spec.freq_axis.iter().enumerate().step_by(13) {
            let dtft: Complex64 = (0..256)
                .map(|n| x[n] * window[n] * Complex64::from_polar(1.0, -2.0 * PI * f * n as f64 / fs))
                .sum();
            let expect = dtft.norm_sqr() / n_fft;
            assert!((spec.at(0, j) - expect).abs() <= 1e-9 * expect.max(1e-12));
        }
    }
}
