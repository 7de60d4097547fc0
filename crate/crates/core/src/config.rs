//! TOML run configuration with `system`, `channel`, `training` and `eval` sections.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{auto_k_max, ChannelProfile, OmegaPolicy};
use crate::error::{Error, Result};
use crate::neural::{Architecture, TrainConfig};

/// Environment variable that overrides `system.seed`.
pub const SEED_ENV: &str = "OTFS_SEED";

const SPEED_OF_LIGHT: f64 = 3.0e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub m: usize,
    pub n: usize,
    pub nt: usize,
    pub nr: usize,
    pub q: usize,
    pub seed: u64,
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub max_speed_kmh: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            m: 64,
            n: 64,
            nt: 1,
            nr: 1,
            q: 4,
            seed: 1,
            carrier_hz: 4.0e9,
            subcarrier_spacing_hz: 15.0e3,
            max_speed_kmh: 120.0,
        }
    }
}

impl SystemConfig {
    pub fn grid_size(&self) -> usize {
        self.m * self.n
    }

    pub fn max_doppler_hz(&self) -> f64 {
        self.max_speed_kmh / 3.6 * self.carrier_hz / SPEED_OF_LIGHT
    }
}

/// `k_max` as a fixed bin count or `"auto"` (derived from speed and carrier).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KMax {
    Fixed(usize),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub paths: usize,
    pub m: f64,
    pub omega_policy: OmegaPolicy,
    pub l_max: usize,
    pub k_max: KMax,
    pub fractional_doppler: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            paths: 9,
            m: 1.0,
            omega_policy: OmegaPolicy::default(),
            l_max: 8,
            k_max: KMax::Auto(AutoTag::Auto),
            fractional_doppler: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub snr_db: f64,
    pub frames: usize,
    pub lr0: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub early_stop_patience: usize,
    pub lr_patience: usize,
    pub lr_factor: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub folds: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingConfig {
            snr_db: 8.0,
            frames: 30,
            lr0: t.lr0,
            max_epochs: t.max_epochs,
            batch_size: t.batch_size,
            early_stop_patience: t.early_stop_patience,
            lr_patience: t.lr_patience,
            lr_factor: t.lr_factor,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            folds: t.folds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub snr_db: Vec<f64>,
    pub target_symbols: usize,
    pub detectors: Vec<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            snr_db: vec![0.0, 4.0, 8.0, 12.0, 16.0],
            target_symbols: 100_000,
            detectors: vec!["mld".into(), "mlp".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub system: SystemConfig,
    pub channel: ChannelConfig,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
}

/// Detector selected for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    Mld,
    Network(Architecture),
}

impl DetectorKind {
    pub fn parse(name: &str) -> Result<Self> {
        if name.eq_ignore_ascii_case("mld") {
            Ok(DetectorKind::Mld)
        } else {
            name.parse().map(DetectorKind::Network)
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Applies `OTFS_SEED` when it is set.
    pub fn with_env_seed(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.system.seed =
                v.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not a u64")))?;
        }
        Ok(self)
    }

    pub fn k_max(&self) -> usize {
        match self.channel.k_max {
            KMax::Fixed(k) => k,
            KMax::Auto(_) => {
                auto_k_max(self.system.n, self.system.max_doppler_hz(), self.system.subcarrier_spacing_hz)
            }
        }
    }

    pub fn profile(&self) -> Result<ChannelProfile> {
        let c = &self.channel;
        ChannelProfile::new(c.paths, c.m, &c.omega_policy, c.l_max, self.k_max(), c.fractional_doppler)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            lr0: t.lr0,
            max_epochs: t.max_epochs,
            batch_size: t.batch_size,
            early_stop_patience: t.early_stop_patience,
            lr_patience: t.lr_patience,
            lr_factor: t.lr_factor,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            folds: t.folds,
            seed: self.system.seed,
        }
    }

    pub fn detectors(&self) -> Result<Vec<DetectorKind>> {
        self.eval.detectors.iter().map(|d| DetectorKind::parse(d)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        let bad = |msg: String| Err(Error::Config(msg));
        if s.m == 0 || s.n == 0 || s.nt == 0 || s.nr == 0 {
            return bad(format!("M, N, N_T, N_R must be positive (got {}, {}, {}, {})", s.m, s.n, s.nt, s.nr));
        }
        if s.q < 4 || !s.q.is_power_of_two() || !s.q.trailing_zeros().is_multiple_of(2) {
            return bad(format!("Q = {} is not a square QAM order", s.q));
        }
        if !(s.carrier_hz > 0.0 && s.subcarrier_spacing_hz > 0.0 && s.max_speed_kmh >= 0.0) {
            return bad("carrier, subcarrier spacing and speed must be positive".into());
        }
        if self.eval.target_symbols == 0 {
            return bad("eval.target_symbols must be at least 1".into());
        }
        if self.eval.snr_db.iter().any(|x| !x.is_finite()) || !self.training.snr_db.is_finite() {
            return bad("SNR values must be finite".into());
        }
        if self.training.frames == 0 {
            return bad("training.frames must be at least 1".into());
        }
        self.train_config().validate()?;
        self.detectors()?;
        let profile = self.profile()?;
        if profile.l_max() >= s.m {
            return Err(Error::InvalidProfile(format!("l_max = {} needs M > l_max", profile.l_max())));
        }
        if 2 * profile.k_max() >= s.n {
            return Err(Error::InvalidProfile(format!("k_max = {} needs N > 2 k_max", profile.k_max())));
        }
        Ok(())
    }

    /// Frames needed to reach `eval.target_symbols`, counting partial frames in full.
    pub fn test_frames(&self) -> usize {
        self.eval.target_symbols.div_ceil(self.system.nt * self.system.grid_size())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_system_table() {
        let cfg = Config::default();
        cfg.validate().unwrap();
        assert!((cfg.system.max_doppler_hz() - 444.444).abs() < 1e-2);
        assert_eq!(cfg.k_max(), 2);
        assert_eq!(cfg.test_frames(), 25);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = Config::default();
        cfg.channel.k_max = KMax::Fixed(1);
        cfg.channel.omega_policy = OmegaPolicy::Explicit(vec![0.5, 0.25, 0.25]);
        cfg.channel.paths = 3;
        let back = Config::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = Config::from_toml_str("[system]\nm = 8\nn = 8\n[channel]\nl_max = 3\npaths = 2\nk_max = \"auto\"\n")
            .unwrap();
        assert_eq!(cfg.system.nt, 1);
        assert_eq!(cfg.k_max(), 0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(Config::from_toml_str("[system]\nmm = 3\n"), Err(Error::Config(_))));
        assert!(matches!(Config::from_toml_str("[sytem]\n"), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(Config::from_toml_str("[system]\nq = 8\n").is_err());
        assert!(Config::from_toml_str("[eval]\ndetectors = [\"svm\"]\n").is_err());
        assert!(Config::from_toml_str("[system]\nm = 4\n").is_err());
    }
}
