//! Fixtures shared by the benchmarks.

use ademi_core::dfs::{conjugate_multiply, DfsPipeline, PipelineConfig, StftConfig};
use ademi_core::rng::seeded;
use ademi_core::synth::{gen_doppler_track, synth_csi, SceneSpec};
use ademi_core::{CsiMatrix, CsiTensor, RealTensor};

/// One default-scene view of a push-pull gesture.
pub fn csi_view(seed: u64) -> CsiTensor {
    let scene = SceneSpec::default();
    let mut rng = seeded(seed);
    let track = gen_doppler_track(0, scene.duration_s, scene.sample_interval_s, &mut rng).expect("valid scene");
    synth_csi(&scene, &track, 0, &mut rng).expect("valid scene")
}

/// The conjugate-multiplied matrix of [`csi_view`].
pub fn csi_matrix(seed: u64) -> CsiMatrix {
    conjugate_multiply(&csi_view(seed), 0, SceneSpec::default().sample_rate_hz()).expect("two antennas")
}

pub fn default_pipeline() -> DfsPipeline {
    DfsPipeline::new(PipelineConfig::default(), StftConfig::default(), SceneSpec::default().sample_rate_hz())
        .expect("default pipeline is valid")
}

/// A deterministic tensor with values in `[-1, 1)`.
pub fn ramp(shape: &[usize]) -> RealTensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|i| ((i * 7919) % 2000) as f64 / 1000.0 - 1.0).collect();
    RealTensor::from_vec(shape, data).expect("shape matches data")
}
