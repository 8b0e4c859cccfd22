//! Experiment configuration in TOML, with unit-suffixed keys and dotted
//! `key=value` overrides.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSpec;
use crate::dfs::{PipelineConfig, StftConfig};
use crate::encoder::DEFAULT_CLIP;
use crate::error::{Error, Result};
use crate::nn::{TrainConfig, TrunkConfig};
use crate::synth::{check_balanced, SceneSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_events: usize,
    /// Seeds dataset synthesis and the train/test split.
    pub base_seed: u64,
    /// Fraction of each class used for training.
    pub split_ratio: f64,
    pub quantizer_clip: f64,
    /// Device whose raw view feeds the single-view baseline.
    pub single_view_device: usize,
    pub scene: SceneSpec,
    pub pipeline: PipelineConfig,
    pub stft: StftConfig,
    pub channel: ChannelSpec,
    pub trunk: TrunkConfig,
    /// Device `k` trains with seed `train_device.seed + k`.
    pub train_device: TrainConfig,
    pub train_server: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_events: 600,
            base_seed: 7,
            split_ratio: 0.9,
            quantizer_clip: DEFAULT_CLIP,
            single_view_device: 0,
            scene: SceneSpec::default(),
            pipeline: PipelineConfig::default(),
            stft: StftConfig::default(),
            channel: ChannelSpec::default(),
            trunk: TrunkConfig::default(),
            train_device: TrainConfig {
                seed: 11,
                ..TrainConfig::default()
            },
            train_server: TrainConfig {
                seed: 13,
                ..TrainConfig::default()
            },
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(config_err)
    }

    /// Applies one `dotted.key=value` override. The value is read as a TOML
    /// literal, falling back to a bare string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut root = toml::Table::try_from(&*self).map_err(config_err)?;
        let parts: Vec<&str> = key.split('.').collect();
        let (last, path) = parts.split_last().expect("split yields at least one part");
        let mut table = &mut root;
        for p in path {
            table = table
                .get_mut(*p)
                .and_then(toml::Value::as_table_mut)
                .ok_or_else(|| Error::Config(format!("unknown config section `{p}` in `{key}`")))?;
        }
        if !table.contains_key(*last) {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        let value = match (&table[*last], value) {
            (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        table.insert(last.to_string(), value);
        *self = root.try_into().map_err(config_err)?;
        Ok(())
    }

    pub fn with_overrides<S: AsRef<str>>(mut self, overrides: &[S]) -> Result<Self> {
        for o in overrides {
            self.apply_override(o.as_ref())?;
        }
        Ok(self)
    }

    /// Checks every sub-configuration and their mutual consistency; all
    /// failures are reported as configuration errors.
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!("split_ratio {} outside (0, 1)", self.split_ratio)));
        }
        if !(self.quantizer_clip > 0.0) {
            return Err(Error::Config("quantizer_clip must be positive".into()));
        }
        check_balanced(self.n_events).map_err(cfg)?;
        self.scene.validate().map_err(cfg)?;
        let s = self.scene.num_samples().map_err(cfg)?;
        self.stft.validate(s, self.scene.sample_rate_hz()).map_err(cfg)?;
        self.channel.validate().map_err(cfg)?;
        if self.channel.num_devices != self.scene.num_devices {
            return Err(Error::Config(format!(
                "channel has {} devices but the scene has {}",
                self.channel.num_devices, self.scene.num_devices
            )));
        }
        if self.single_view_device >= self.scene.num_devices {
            return Err(Error::Config(format!(
                "single_view_device {} out of range",
                self.single_view_device
            )));
        }
        if self.pipeline.ref_antenna >= self.scene.num_antennas {
            return Err(Error::Config("reference antenna out of range".into()));
        }
        self.train_device.validate()?;
        self.train_server.validate()?;
        Ok(())
    }

    /// Spectrogram shape `(S_T, S_F)` implied by the scene and STFT settings.
    pub fn spectrogram_shape(&self) -> Result<(usize, usize)> {
        let s = self.scene.num_samples()?;
        Ok((self.stft.num_frames_for(s)?, self.stft.num_freq_bins))
    }

    pub fn device_train_config(&self, device: usize) -> TrainConfig {
        TrainConfig {
            seed: self.train_device.seed.wrapping_add(device as u64),
            ..self.train_device.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml_string().unwrap();
        assert!(text.contains("duration_s"));
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_override("scene.sample_interval_s=0.002").unwrap();
        cfg.apply_override("channel.snr_db = 20").unwrap();
        cfg.apply_override("train_server.optimizer.kind=sgd").unwrap();
        cfg.apply_override("n_events=12").unwrap();
        assert_eq!(cfg.scene.sample_interval_s, 0.002);
        assert_eq!(cfg.channel.snr_db, 20.0);
        assert_eq!(cfg.train_server.optimizer, crate::nn::OptimizerKind::Sgd);
        assert_eq!(cfg.n_events, 12);
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        let mut cfg = ExperimentConfig::default();
        for bad in ["scene.nope=1", "nope.x=1", "n_events", "n_events=\"many\"", "scene=3"] {
            assert!(matches!(cfg.apply_override(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = ExperimentConfig::default().to_toml_string().unwrap() + "\nbogus = 1\n";
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn validation_catches_inconsistencies() {
        let mut cfg = ExperimentConfig::default();
        cfg.split_ratio = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.n_events = 601;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = ExperimentConfig::default();
        cfg.channel.num_devices = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.scene.sample_interval_s = 0.008;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
