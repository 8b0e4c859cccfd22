//! Synthetic multi-view CSI following the multipath channel model with a
//! common timing phase error.
//!
//! Each event draws one Doppler trajectory for its gesture class. Every
//! device then sees that trajectory through its own path geometry
//! (gains and delay phases), so the views agree on the motion but not on the
//! channel.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_rng, TAG_DEVICE, TAG_EVENT};

pub const NUM_CLASSES: usize = 6;

/// Doppler magnitude bound of every generated track, in Hz.
pub const MAX_DOPPLER_HZ: f64 = 60.0;

/// Relative jitter bound applied to amplitude and rate of each template.
pub const JITTER: f64 = 0.10;

const GESTURE_NAMES: [&str; NUM_CLASSES] = [
    "push-pull",
    "sweep",
    "clap",
    "slide",
    "draw zig-zag",
    "draw N",
];

pub fn class_name(class_id: usize) -> Option<&'static str> {
    GESTURE_NAMES.get(class_id).copied()
}

/// Geometry and timing of the sensing scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub num_devices: usize,
    pub num_antennas: usize,
    pub num_subcarriers: usize,
    pub num_paths: usize,
    pub sample_interval_s: f64,
    pub duration_s: f64,
    /// Documentation only; propagation is not carrier-accurate.
    pub carrier_freq_hz: f64,
    pub static_path_gain: f64,
    pub dynamic_path_gain: f64,
    /// Standard deviation of the timing phase error, radians.
    pub phase_error_std_rad: f64,
    pub noise_std: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            num_devices: 3,
            num_antennas: 3,
            num_subcarriers: 30,
            num_paths: 2,
            sample_interval_s: 1e-3,
            duration_s: 2.0,
            carrier_freq_hz: 5.825e9,
            static_path_gain: 1.0,
            dynamic_path_gain: 0.5,
            phase_error_std_rad: 0.5,
            noise_std: 0.05,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_devices < 1 {
            return Err(Error::domain("scene needs at least one device"));
        }
        if self.num_antennas < 2 {
            return Err(Error::domain("scene needs at least two antennas"));
        }
        if self.num_subcarriers < 1 {
            return Err(Error::domain("scene needs at least one subcarrier"));
        }
        if self.num_paths < 2 {
            return Err(Error::domain(
                "scene needs one static and at least one dynamic path",
            ));
        }
        if !(self.sample_interval_s > 0.0) || !(self.duration_s > 0.0) {
            return Err(Error::domain("sample interval and duration must be positive"));
        }
        let gains = [
            self.static_path_gain,
            self.dynamic_path_gain,
            self.phase_error_std_rad,
            self.noise_std,
        ];
        if gains.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::domain("gains and noise levels must be finite and >= 0"));
        }
        self.num_samples().map(|_| ())
    }

    /// Number of CSI samples per event, `duration / interval`.
    pub fn num_samples(&self) -> Result<usize> {
        sample_count(self.duration_s, self.sample_interval_s)
    }

    pub fn sample_rate_hz(&self) -> f64 {
        1.0 / self.sample_interval_s
    }
}

fn sample_count(duration: f64, dt: f64) -> Result<usize> {
    if !(duration > 0.0) || !(dt > 0.0) {
        return Err(Error::domain("duration and interval must be positive"));
    }
    let ratio = duration / dt;
    let s = ratio.round();
    if s < 1.0 || (ratio - s).abs() > 1e-9 * s.max(1.0) {
        return Err(Error::domain(format!(
            "duration {duration} s is not a positive integer multiple of interval {dt} s"
        )));
    }
    Ok(s as usize)
}

/// Instantaneous Doppler shift of the moving body over one event.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerTrack {
    pub class_id: usize,
    pub sample_interval_s: f64,
    /// Hz, one value per CSI sample.
    pub samples: Vec<f64>,
}

impl DopplerTrack {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Per-event perturbation of a class template.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateJitter {
    pub amplitude: f64,
    pub rate: f64,
    /// Shift of breakpoints and burst centres, as a fraction of the duration.
    pub shift: f64,
}

impl TemplateJitter {
    pub const NONE: TemplateJitter = TemplateJitter {
        amplitude: 1.0,
        rate: 1.0,
        shift: 0.0,
    };

    fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            amplitude: 1.0 + rng.random_range(-JITTER..=JITTER),
            rate: 1.0 + rng.random_range(-JITTER..=JITTER),
            shift: rng.random_range(-0.5 * JITTER..=0.5 * JITTER),
        }
    }
}

fn lerp_segments(t: f64, knots: &[(f64, f64)]) -> f64 {
    for w in knots.windows(2) {
        let (t0, f0) = w[0];
        let (t1, f1) = w[1];
        if t <= t1 {
            let u = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
            return f0 + u * (f1 - f0);
        }
    }
    knots.last().map(|k| k.1).unwrap_or(0.0)
}

/// Doppler template of a gesture class at time `t` of an event lasting `duration`.
pub fn template_value(class_id: usize, t: f64, duration: f64, j: TemplateJitter) -> f64 {
    let big_t = duration;
    let a = j.amplitude;
    let f = match class_id {
        // push-pull
        0 => 40.0 * a * (2.0 * PI * 1.0 * j.rate * t).sin(),
        // sweep: linear chirp 10 -> 50 Hz
        1 => a * (10.0 + 40.0 * (j.rate * t / big_t).clamp(0.0, 1.0)),
        // clap: opposite-signed Gaussian bursts
        2 => {
            let w = 0.08 * big_t * j.rate;
            let g = |c: f64| (-(t - c).powi(2) / (2.0 * w * w)).exp();
            50.0 * a * (g((0.3 + j.shift) * big_t) - g((0.7 + j.shift) * big_t))
        }
        // slide: constant, sign flips half-way
        3 => {
            if t < (0.5 + j.shift) * big_t {
                25.0 * a
            } else {
                -25.0 * a
            }
        }
        // zig-zag: triangle wave at 2 Hz
        4 => {
            let x = 2.0 * j.rate * t + j.shift;
            let tri = 1.0 - 4.0 * (x - x.floor() - 0.5).abs();
            35.0 * a * tri
        }
        // draw N: 10 -> 45 -> 10 -> 45 Hz
        5 => {
            let s = j.shift * big_t;
            let knots = [
                (0.0, 10.0),
                (big_t / 3.0 + s, 45.0),
                (2.0 * big_t / 3.0 + s, 10.0),
                (big_t, 45.0),
            ];
            a * lerp_segments(t, &knots)
        }
        _ => 0.0,
    };
    f.clamp(-MAX_DOPPLER_HZ, MAX_DOPPLER_HZ)
}

/// Noise-free class template sampled at `dt`.
pub fn template_track(class_id: usize, duration: f64, dt: f64) -> Result<DopplerTrack> {
    track_with_jitter(class_id, duration, dt, TemplateJitter::NONE)
}

fn track_with_jitter(
    class_id: usize,
    duration: f64,
    dt: f64,
    jitter: TemplateJitter,
) -> Result<DopplerTrack> {
    if class_id >= NUM_CLASSES {
        return Err(Error::domain(format!(
            "class id {class_id} out of range 0..{NUM_CLASSES}"
        )));
    }
    let s = sample_count(duration, dt)?;
    let samples = (0..s)
        .map(|i| template_value(class_id, i as f64 * dt, duration, jitter))
        .collect();
    Ok(DopplerTrack {
        class_id,
        sample_interval_s: dt,
        samples,
    })
}

/// Draws a jittered Doppler trajectory for `class_id`.
pub fn gen_doppler_track<R: Rng + ?Sized>(
    class_id: usize,
    duration: f64,
    dt: f64,
    rng: &mut R,
) -> Result<DopplerTrack> {
    if class_id >= NUM_CLASSES {
        return Err(Error::domain(format!(
            "class id {class_id} out of range 0..{NUM_CLASSES}"
        )));
    }
    let jitter = TemplateJitter::draw(rng);
    track_with_jitter(class_id, duration, dt, jitter)
}

/// Mean absolute Doppler shift of a track, Hz.
pub fn mean_abs_doppler(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|f| f.abs()).sum::<f64>() / samples.len() as f64
}

fn sign_changes(values: impl Iterator<Item = f64>) -> usize {
    let mut last = 0.0f64;
    let mut count = 0;
    for v in values {
        if v == 0.0 {
            continue;
        }
        if last != 0.0 && v.signum() != last.signum() {
            count += 1;
        }
        last = v;
    }
    count
}

/// Modulation rate of a track: zero crossings plus turning points per second.
pub fn modulation_rate(samples: &[f64], duration: f64) -> f64 {
    let crossings = sign_changes(samples.iter().copied());
    let turns = sign_changes(samples.windows(2).map(|w| w[1] - w[0]));
    (crossings + turns) as f64 / duration
}

/// Complex CSI of one device for one event, laid out `[time][antenna][subcarrier]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiTensor {
    pub data: Vec<Complex64>,
    pub num_samples: usize,
    pub num_antennas: usize,
    pub num_subcarriers: usize,
    pub device_id: usize,
    pub label: usize,
}

impl CsiTensor {
    #[inline]
    pub fn index(&self, t: usize, antenna: usize, m: usize) -> usize {
        (t * self.num_antennas + antenna) * self.num_subcarriers + m
    }

    #[inline]
    pub fn at(&self, t: usize, antenna: usize, m: usize) -> Complex64 {
        self.data[self.index(t, antenna, m)]
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.num_samples, self.num_antennas, self.num_subcarriers]
    }
}

/// Timing phase error, one draw per `(t, m)` shared by all antennas.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseErrorField {
    pub num_samples: usize,
    pub num_subcarriers: usize,
    pub values: Vec<f64>,
}

impl PhaseErrorField {
    pub fn at(&self, t: usize, m: usize) -> f64 {
        self.values[t * self.num_subcarriers + m]
    }
}

/// Synthesizes one device's CSI for the given Doppler track.
pub fn synth_csi<R: Rng + ?Sized>(
    scene: &SceneSpec,
    track: &DopplerTrack,
    device_id: usize,
    rng: &mut R,
) -> Result<CsiTensor> {
    synth_csi_traced(scene, track, device_id, rng).map(|(csi, _)| csi)
}

/// Like [`synth_csi`] but also returns the injected phase error.
///
/// Draw order is fixed (path gains, delay phases, phase error, noise) and the
/// phase-error draws are consumed even when its strength is zero, so two
/// scenes differing only in `phase_error_std_rad` share every other draw.
pub fn synth_csi_traced<R: Rng + ?Sized>(
    scene: &SceneSpec,
    track: &DopplerTrack,
    device_id: usize,
    rng: &mut R,
) -> Result<(CsiTensor, PhaseErrorField)> {
    scene.validate()?;
    let s = scene.num_samples()?;
    if track.len() != s {
        return Err(Error::domain(format!(
            "track has {} samples, scene expects {s}",
            track.len()
        )));
    }
    let n = scene.num_antennas;
    let m_count = scene.num_subcarriers;
    let paths = scene.num_paths;
    let dt = scene.sample_interval_s;

    let gains: Vec<f64> = (0..paths)
        .map(|l| {
            if l == 0 {
                scene.static_path_gain
            } else {
                rng.random_range(0.5..=1.0) * scene.dynamic_path_gain
            }
        })
        .collect();
    let delay_phasors: Vec<Complex64> = (0..paths * n)
        .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
        .collect();

    // Doppler phase of each dynamic path, integrated from the instantaneous
    // shift. Path l (0-based, l >= 1) carries the track scaled by 1/l.
    let mut doppler = vec![Complex64::new(1.0, 0.0); paths * s];
    for l in 1..paths {
        let scale = 1.0 / l as f64;
        let mut phase = 0.0;
        for t in 0..s {
            doppler[l * s + t] = Complex64::from_polar(1.0, phase);
            phase += 2.0 * PI * track.samples[t] * scale * dt;
        }
    }

    let eps: Vec<f64> = (0..s * m_count)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scene.phase_error_std_rad * z
        })
        .collect();
    let eps_phasor: Vec<Complex64> = eps.iter().map(|&e| Complex64::from_polar(1.0, e)).collect();

    let noise_scale = scene.noise_std / 2f64.sqrt();
    let mut data = Vec::with_capacity(s * n * m_count);
    for t in 0..s {
        for a in 0..n {
            for m in 0..m_count {
                let sub = 1.0 + 0.05 * m as f64 / m_count as f64;
                let mut h = Complex64::new(0.0, 0.0);
                for l in 0..paths {
                    h += gains[l] * sub * delay_phasors[l * n + a] * doppler[l * s + t];
                }
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                h += Complex64::new(re, im) * noise_scale;
                data.push(h * eps_phasor[t * m_count + m]);
            }
        }
    }

    let csi = CsiTensor {
        data,
        num_samples: s,
        num_antennas: n,
        num_subcarriers: m_count,
        device_id,
        label: track.class_id,
    };
    let field = PhaseErrorField {
        num_samples: s,
        num_subcarriers: m_count,
        values: eps,
    };
    Ok((csi, field))
}

/// One gesture observed by all devices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiEvent {
    pub label: usize,
    pub track: DopplerTrack,
    pub views: Vec<CsiTensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCsiSet {
    pub events: Vec<CsiEvent>,
    pub seed: u64,
}

/// Label of event `index`; classes cycle so every block of six is balanced.
pub fn event_label(index: usize) -> usize {
    index % NUM_CLASSES
}

/// Generates event `index` of the dataset seeded by `seed`.
///
/// Independent of any other event, so datasets can be streamed or built in
/// parallel without changing their content.
pub fn synth_event(scene: &SceneSpec, seed: u64, index: usize) -> Result<CsiEvent> {
    let label = event_label(index);
    let mut event_rng = derive_rng(seed, &[TAG_EVENT, index as u64]);
    let track = gen_doppler_track(
        label,
        scene.duration_s,
        scene.sample_interval_s,
        &mut event_rng,
    )?;
    let views = (0..scene.num_devices)
        .map(|k| {
            let mut rng = derive_rng(seed, &[TAG_EVENT, index as u64, TAG_DEVICE, k as u64]);
            synth_csi(scene, &track, k, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CsiEvent {
        label,
        track,
        views,
    })
}

pub fn check_balanced(n_events: usize) -> Result<()> {
    if n_events == 0 || n_events % NUM_CLASSES != 0 {
        return Err(Error::domain(format!(
            "n_events = {n_events} must be a positive multiple of {NUM_CLASSES}"
        )));
    }
    Ok(())
}

/// Builds a class-balanced dataset of `n_events` multi-view events.
pub fn make_dataset(scene: &SceneSpec, n_events: usize, seed: u64) -> Result<LabeledCsiSet> {
    check_balanced(n_events)?;
    scene.validate()?;
    let events = (0..n_events)
        .map(|i| synth_event(scene, seed, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledCsiSet { events, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn small_scene() -> SceneSpec {
        SceneSpec {
            num_devices: 2,
            num_antennas: 3,
            num_subcarriers: 4,
            num_paths: 3,
            sample_interval_s: 1e-3,
            duration_s: 0.2,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn class0_track_is_jittered_sinusoid() {
        let track = gen_doppler_track(0, 2.0, 1e-3, &mut seeded(3)).unwrap();
        assert_eq!(track.len(), 2000);
        for (i, f) in track.samples.iter().enumerate() {
            let t = i as f64 * 1e-3;
            let envelope = 40.0 * (1.0 + JITTER);
            assert!(f.abs() <= envelope + 1e-12);
            if i == 250 {
                // near the first peak of 40 sin(2 pi t)
                let nominal = 40.0 * (2.0 * PI * t).sin();
                assert!((f - nominal).abs() <= 0.25 * nominal.abs(), "{f} vs {nominal}");
            }
        }
    }

    #[test]
    fn single_sample_class0_is_zero() {
        let track = gen_doppler_track(0, 1e-3, 1e-3, &mut seeded(11)).unwrap();
        assert_eq!(track.samples, vec![0.0]);
    }

    #[test]
    fn tracks_are_deterministic() {
        for class in 0..NUM_CLASSES {
            let a = gen_doppler_track(class, 2.0, 1e-3, &mut seeded(5)).unwrap();
            let b = gen_doppler_track(class, 2.0, 1e-3, &mut seeded(5)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn invalid_class_and_interval_rejected() {
        assert!(matches!(
            gen_doppler_track(6, 2.0, 1e-3, &mut seeded(0)),
            Err(Error::Domain(_))
        ));
        assert!(gen_doppler_track(0, 2.0, 3e-3, &mut seeded(0)).is_err());
    }

    #[test]
    fn tracks_stay_in_band() {
        let mut rng = seeded(99);
        for _ in 0..20 {
            for class in 0..NUM_CLASSES {
                let tr = gen_doppler_track(class, 2.0, 1e-3, &mut rng).unwrap();
                assert!(tr.samples.iter().all(|f| f.abs() <= MAX_DOPPLER_HZ));
            }
        }
    }

    #[test]
    fn templates_are_pairwise_separable() {
        let duration = 2.0;
        let feats: Vec<(f64, f64)> = (0..NUM_CLASSES)
            .map(|c| {
                let tr = template_track(c, duration, 1e-3).unwrap();
                (
                    mean_abs_doppler(&tr.samples),
                    modulation_rate(&tr.samples, duration),
                )
            })
            .collect();
        for i in 0..NUM_CLASSES {
            for j in i + 1..NUM_CLASSES {
                let d_mean = (feats[i].0 - feats[j].0).abs();
                let d_rate = (feats[i].1 - feats[j].1).abs();
                assert!(
                    d_mean >= 5.0 || d_rate >= 0.3,
                    "classes {i},{j}: mean diff {d_mean:.3} Hz, rate diff {d_rate:.3} Hz"
                );
            }
        }
    }

    #[test]
    fn static_only_channel_is_constant_in_time() {
        let scene = SceneSpec {
            dynamic_path_gain: 0.0,
            phase_error_std_rad: 0.0,
            noise_std: 0.0,
            ..small_scene()
        };
        let track = gen_doppler_track(1, scene.duration_s, scene.sample_interval_s, &mut seeded(1))
            .unwrap();
        let csi = synth_csi(&scene, &track, 0, &mut seeded(2)).unwrap();
        for t in 1..csi.num_samples {
            for a in 0..csi.num_antennas {
                for m in 0..csi.num_subcarriers {
                    assert!((csi.at(t, a, m) - csi.at(0, a, m)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn phase_error_is_common_to_all_antennas() {
        let noisy = small_scene();
        let clean = SceneSpec {
            phase_error_std_rad: 0.0,
            ..noisy.clone()
        };
        let track =
            gen_doppler_track(4, noisy.duration_s, noisy.sample_interval_s, &mut seeded(8)).unwrap();
        let (with_err, field) = synth_csi_traced(&noisy, &track, 0, &mut seeded(9)).unwrap();
        let (without, _) = synth_csi_traced(&clean, &track, 0, &mut seeded(9)).unwrap();
        assert_eq!(field.values.len(), with_err.num_samples * with_err.num_subcarriers);
        for t in 0..with_err.num_samples {
            for m in 0..with_err.num_subcarriers {
                let rot = Complex64::from_polar(1.0, field.at(t, m));
                for a in 0..with_err.num_antennas {
                    let expect = without.at(t, a, m) * rot;
                    assert!((with_err.at(t, a, m) - expect).norm() < 1e-12);
                }
                let p = with_err.at(t, 1, m) * with_err.at(t, 0, m).conj();
                let q = without.at(t, 1, m) * without.at(t, 0, m).conj();
                assert!((p - q).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn track_length_mismatch_rejected() {
        let scene = small_scene();
        let track = template_track(0, 0.1, 1e-3).unwrap();
        assert!(synth_csi(&scene, &track, 0, &mut seeded(0)).is_err());
    }

    #[test]
    fn dataset_is_balanced_and_deterministic() {
        let scene = small_scene();
        let a = make_dataset(&scene, 12, 7).unwrap();
        let b = make_dataset(&scene, 12, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.events.len(), 12);
        for class in 0..NUM_CLASSES {
            assert_eq!(a.events.iter().filter(|e| e.label == class).count(), 2);
        }
        for ev in &a.events {
            assert_eq!(ev.views.len(), scene.num_devices);
            assert!(ev.views.iter().all(|v| v.label == ev.label));
            assert!(ev.views.iter().all(|v| v.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())));
        }
        let one_each = make_dataset(&scene, 6, 1).unwrap();
        let mut labels: Vec<_> = one_each.events.iter().map(|e| e.label).collect();
        labels.sort();
        assert_eq!(labels, vec![0, 1, 2, 3, 4, 5]);
        assert!(make_dataset(&scene, 10, 7).is_err());
    }
}
