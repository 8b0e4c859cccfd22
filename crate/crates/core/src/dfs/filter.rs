//! Zero-phase windowed-sinc band-pass filtering.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const DEFAULT_TAPS: usize = 255;

/// Linear-phase FIR band-pass kernel: difference of two Hamming-windowed
/// sinc low-passes, each normalized to unit DC gain.
#[derive(Debug, Clone, PartialEq)]
pub struct BandpassFilter {
    pub sample_rate_hz: f64,
    pub low_cut_hz: f64,
    pub high_cut_hz: f64,
    pub kernel: Vec<f64>,
}

fn windowed_sinc_lowpass(cutoff_hz: f64, sample_rate_hz: f64, taps: usize) -> Vec<f64> {
    let fc = cutoff_hz / sample_rate_hz;
    let centre = (taps - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let x = n as f64 - centre;
            let sinc = if x == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * x).sin() / (PI * x)
            };
            let w = 0.54 - 0.46 * (2.0 * PI * n as f64 / (taps - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

impl BandpassFilter {
    pub fn design(sample_rate_hz: f64, low_cut_hz: f64, high_cut_hz: f64, taps: usize) -> Result<Self> {
        if !(low_cut_hz > 0.0 && low_cut_hz < high_cut_hz && high_cut_hz < sample_rate_hz / 2.0) {
            return Err(Error::domain(format!(
                "invalid band [{low_cut_hz}, {high_cut_hz}] Hz at sample rate {sample_rate_hz} Hz"
            )));
        }
        if taps < 3 || taps % 2 == 0 {
            return Err(Error::domain(format!("filter length {taps} must be odd and >= 3")));
        }
        let hi = windowed_sinc_lowpass(high_cut_hz, sample_rate_hz, taps);
        let lo = windowed_sinc_lowpass(low_cut_hz, sample_rate_hz, taps);
        let kernel = hi.iter().zip(&lo).map(|(a, b)| a - b).collect();
        Ok(Self {
            sample_rate_hz,
            low_cut_hz,
            high_cut_hz,
            kernel,
        })
    }

    pub fn taps(&self) -> usize {
        self.kernel.len()
    }

    /// Amplitude response of one pass at `freq_hz` (real: the kernel is symmetric).
    pub fn single_pass_response(&self, freq_hz: f64) -> f64 {
        let centre = (self.taps() - 1) as f64 / 2.0;
        let w = 2.0 * PI * freq_hz / self.sample_rate_hz;
        self.kernel
            .iter()
            .enumerate()
            .map(|(n, h)| h * (w * (n as f64 - centre)).cos())
            .sum()
    }

    /// Amplitude response of the forward-backward cascade.
    pub fn zero_phase_response(&self, freq_hz: f64) -> f64 {
        self.single_pass_response(freq_hz).powi(2)
    }

    /// Kernel as `index,coefficient` CSV lines with a header.
    pub fn kernel_csv(&self) -> String {
        let mut out = String::from("index,coefficient\n");
        for (i, h) in self.kernel.iter().enumerate() {
            out.push_str(&format!("{i},{h:.17e}\n"));
        }
        out
    }

    /// Prepares FFT plans for sequences of length `len`.
    pub fn plan(&self, len: usize) -> FilterPlan {
        FilterPlan::new(&self.kernel, len)
    }

    pub fn apply_complex(&self, series: &[Complex64]) -> Vec<Complex64> {
        let mut out = series.to_vec();
        self.plan(series.len()).apply_in_place(&mut out);
        out
    }

    pub fn apply_real(&self, series: &[f64]) -> Vec<f64> {
        let cplx: Vec<Complex64> = series.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.apply_complex(&cplx).into_iter().map(|z| z.re).collect()
    }
}

/// FFT-based same-length convolution, reusable across columns of equal length.
pub struct FilterPlan {
    len: usize,
    centre: usize,
    fft_len: usize,
    kernel_spectrum: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
}

impl FilterPlan {
    fn new(kernel: &[f64], len: usize) -> Self {
        let fft_len = (len + kernel.len() - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let mut kernel_spectrum = vec![Complex64::new(0.0, 0.0); fft_len];
        for (dst, &h) in kernel_spectrum.iter_mut().zip(kernel) {
            dst.re = h;
        }
        forward.process(&mut kernel_spectrum);
        Self {
            len,
            centre: (kernel.len() - 1) / 2,
            fft_len,
            kernel_spectrum,
            forward,
            inverse,
            buf: vec![Complex64::new(0.0, 0.0); fft_len],
        }
    }

    /// Centred convolution, output aligned with the input (zero padding at the edges).
    fn convolve_same(&mut self, series: &mut [Complex64]) {
        self.buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        self.buf[..self.len].copy_from_slice(series);
        self.forward.process(&mut self.buf);
        for (b, k) in self.buf.iter_mut().zip(&self.kernel_spectrum) {
            *b *= k;
        }
        self.inverse.process(&mut self.buf);
        let scale = 1.0 / self.fft_len as f64;
        for (dst, src) in series.iter_mut().zip(&self.buf[self.centre..self.centre + self.len]) {
            *dst = src * scale;
        }
    }

    /// Forward pass, then the same kernel over the time-reversed result.
    pub fn apply_in_place(&mut self, series: &mut [Complex64]) {
        assert_eq!(series.len(), self.len, "filter plan built for another length");
        self.convolve_same(series);
        series.reverse();
        self.convolve_same(series);
        series.reverse();
    }
}

/// Zero-phase band-pass with the default kernel length.
pub fn bandpass_filter(series: &[Complex64], sample_rate_hz: f64, low_cut_hz: f64, high_cut_hz: f64) -> Result<Vec<Complex64>> {
    let filter = BandpassFilter::design(sample_rate_hz, low_cut_hz, high_cut_hz, DEFAULT_TAPS)?;
    Ok(filter.apply_complex(series))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_same(x: &[f64], h: &[f64]) -> Vec<f64> {
        let c = (h.len() - 1) as isize / 2;
        (0..x.len() as isize)
            .map(|n| {
                h.iter()
                    .enumerate()
                    .filter_map(|(k, hk)| {
                        let idx = n + c - k as isize;
                        (0..x.len() as isize).contains(&idx).then(|| hk * x[idx as usize])
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn fft_path_matches_direct_forward_backward() {
        let f = BandpassFilter::design(1000.0, 2.0, 60.0, 31).unwrap();
        let x: Vec<f64> = (0..97).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.3).collect();
        let mut y = direct_same(&x, &f.kernel);
        y.reverse();
        let mut z = direct_same(&y, &f.kernel);
        z.reverse();
        let got = f.apply_real(&x);
        for (a, b) in got.iter().zip(&z) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn dc_is_removed() {
        let f = BandpassFilter::design(1000.0, 2.0, 60.0, DEFAULT_TAPS).unwrap();
        assert!(f.kernel.iter().sum::<f64>().abs() <= 1e-3);
        // Interior samples of a constant input, away from the zero-padded edges.
        let x = vec![3.0; 2000];
        let y = f.apply_real(&x);
        let interior = &y[DEFAULT_TAPS..2000 - DEFAULT_TAPS];
        assert!(interior.iter().all(|v| v.abs() <= 1e-3 * 3.0));
    }

    #[test]
    fn midband_tone_is_preserved() {
        let (lo, hi) = (2.0, 60.0);
        let f = BandpassFilter::design(1000.0, lo, hi, DEFAULT_TAPS).unwrap();
        let tone = (lo * 1.5 + hi / 1.5) / 2.0;
        let gain_db = 20.0 * f.zero_phase_response(tone).log10();
        assert!(gain_db.abs() <= 1.0, "gain {gain_db} dB");

        let x: Vec<f64> = (0..2000).map(|i| (2.0 * PI * tone * i as f64 / 1000.0).sin()).collect();
        let y = f.apply_real(&x);
        let interior = &y[400..1600];
        let peak = interior.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((20.0 * peak.log10()).abs() <= 1.0);
    }

    #[test]
    fn near_nyquist_is_attenuated() {
        let f = BandpassFilter::design(1000.0, 2.0, 60.0, DEFAULT_TAPS).unwrap();
        let gain = f.zero_phase_response(0.99 * 500.0);
        assert!(20.0 * gain.abs().log10() <= -40.0);
    }

    #[test]
    fn ripple_bound_holds_on_resolvable_band() {
        // Band edges far enough apart relative to the kernel resolution.
        let (lo, hi) = (40.0, 200.0);
        let f = BandpassFilter::design(1000.0, lo, hi, DEFAULT_TAPS).unwrap();
        let mut freq = lo * 1.5;
        while freq <= hi / 1.5 {
            let db = 20.0 * f.zero_phase_response(freq).log10();
            assert!(db.abs() <= 1.0, "{freq} Hz: {db} dB");
            freq += 0.5;
        }
    }

    #[test]
    fn invalid_band_rejected() {
        assert!(BandpassFilter::design(1000.0, 0.0, 60.0, 255).is_err());
        assert!(BandpassFilter::design(1000.0, 60.0, 2.0, 255).is_err());
        assert!(BandpassFilter::design(1000.0, 2.0, 500.0, 255).is_err());
        assert!(BandpassFilter::design(1000.0, 2.0, 60.0, 254).is_err());
    }
}
