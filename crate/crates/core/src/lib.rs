//! Simulation and learning stack for capacity-aware multi-view WiFi sensing:
//! synthetic CSI, Doppler spectrogram extraction, link budgets, variational
//! device encoders with quantized latents, and a multi-view edge server.

pub mod baseline;
pub mod channel;
pub mod dfs;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod nn;
pub mod rng;
pub mod server;
pub mod synth;
pub mod training;

pub use channel::{ChannelSpec, LinkBudget};
pub use encoder::{LatentVector, QuantizerSpec};
pub use dfs::{CsiMatrix, DfsPipeline, DfsSpectrogram, PipelineConfig, PrincipalSeries, StftConfig};
pub use error::{Error, Result};
pub use nn::{ParamStore, RealTensor, TrainConfig};
pub use synth::{CsiTensor, DopplerTrack, LabeledCsiSet, SceneSpec};
