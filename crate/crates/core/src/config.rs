//! The run configuration: one TOML file drives generation, training, and
//! evaluation, and a single master seed fans out to per-stage sub-seeds.

use crate::channel::ChannelConfig;
use crate::features::{FeatureConfig, GridParams};
use crate::scenario::ScenarioConfig;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodebookConfig {
    pub tx_size: usize,
    pub rx_size: usize,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        CodebookConfig { tx_size: 64, rx_size: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKey {
    Beam,
    BctGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Explicit seed; when absent, derived from the master seed.
    pub seed: Option<u64>,
    pub label: LabelKey,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: None,
            label: LabelKey::Beam,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Top-B curve points.
    pub top_b: Vec<usize>,
    /// Location-error standard deviations for the robustness sweep, meters.
    pub sigma_c: Vec<f64>,
    /// Fixed coherence times (in snapshot intervals) for the policy table.
    pub fixed_m: Vec<u32>,
    /// Alignment-time fractions T_b / T_d.
    pub tb_over_td: Vec<f64>,
    pub knn_k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            top_b: vec![1, 2, 3, 4, 5],
            sigma_c: vec![0.0, 0.1, 0.25, 0.5],
            fixed_m: (1..=8).collect(),
            tb_over_td: vec![1.0 / 3.0, 0.5],
            knn_k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub master_seed: u64,
    /// Number of scenarios (vehicle initializations) to generate.
    pub num_scenarios: usize,
    pub split_fractions: [f64; 3],
    pub scenario: ScenarioConfig,
    pub channel: ChannelConfig,
    pub grid: GridParams,
    pub features: FeatureConfig,
    pub codebook: CodebookConfig,
    pub train_vdban: TrainConfig,
    pub train_bct: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            master_seed: 1,
            num_scenarios: 10,
            split_fractions: [0.8, 0.1, 0.1],
            scenario: ScenarioConfig::default(),
            channel: ChannelConfig::default(),
            grid: GridParams::default(),
            features: FeatureConfig::default(),
            codebook: CodebookConfig::default(),
            train_vdban: TrainConfig::default(),
            train_bct: TrainConfig { epochs: 20, label: LabelKey::BctGroup, ..Default::default() },
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::config("<root>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form; embedded in every output file.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_scenarios == 0 {
            return Err(Error::config("num_scenarios", "must be at least 1"));
        }
        let sum: f64 = self.split_fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config("split_fractions", format!("must sum to 1, got {sum}")));
        }
        if self.split_fractions.iter().any(|&f| f < 0.0) {
            return Err(Error::config("split_fractions", "fractions must be nonnegative"));
        }
        let ch = &self.channel;
        if ch.num_subcarriers == 0 {
            return Err(Error::config("channel.num_subcarriers", "must be at least 1"));
        }
        if ch.max_paths == 0 {
            return Err(Error::config("channel.max_paths", "must be at least 1"));
        }
        if ch.num_bs_antennas == 0 || ch.num_ms_antennas == 0 {
            return Err(Error::config("channel.num_*_antennas", "must be at least 1"));
        }
        if ch.subcarrier_spacing_hz <= 0.0 || ch.carrier_hz <= 0.0 {
            return Err(Error::config("channel", "frequencies must be positive"));
        }
        if ch.per_subcarrier_power <= 0.0 || ch.noise_power <= 0.0 {
            return Err(Error::config("channel", "powers must be positive"));
        }
        if self.codebook.tx_size == 0 || self.codebook.rx_size == 0 {
            return Err(Error::config("codebook", "codebook sizes must be at least 1"));
        }
        let feats = &self.features;
        if feats.image_width == 0 || feats.image_height == 0 {
            return Err(Error::config("features.image_*", "resolution must be positive"));
        }
        if feats.seq_len == 0 {
            return Err(Error::config("features.seq_len", "must be at least 1"));
        }
        feats.detection_noise.validate()?;
        if feats.maxima.length <= 0.0 || feats.maxima.width <= 0.0 || feats.maxima.height <= 0.0 {
            return Err(Error::config("features.maxima", "must be positive"));
        }
        if self.grid.cell_length <= 0.0 || self.grid.cell_width <= 0.0 {
            return Err(Error::config("grid", "cell dimensions must be positive"));
        }
        let sc = &self.scenario;
        if sc.lanes.is_empty() {
            return Err(Error::config("scenario.lanes", "at least one lane required"));
        }
        if sc.ms_lane >= sc.lanes.len() {
            return Err(Error::config("scenario.ms_lane", "lane index out of range"));
        }
        if sc.camera_count == 0 {
            return Err(Error::config("scenario.camera_count", "must be at least 1"));
        }
        if sc.snapshot_interval <= 0.0 {
            return Err(Error::config("scenario.snapshot_interval", "must be positive"));
        }
        for tc in [&self.train_vdban, &self.train_bct] {
            if tc.epochs == 0 {
                return Err(Error::config("train.epochs", "must be at least 1"));
            }
            if tc.batch_size == 0 {
                return Err(Error::config("train.batch_size", "must be at least 1"));
            }
            if !tc.learning_rate.is_finite() || tc.learning_rate < 0.0 {
                return Err(Error::config("train.learning_rate", "must be finite and >= 0"));
            }
        }
        for &b in &self.eval.top_b {
            if b == 0 {
                return Err(Error::config("eval.top_b", "entries must be at least 1"));
            }
        }
        if self.eval.sigma_c.iter().any(|&s| s < 0.0) {
            return Err(Error::config("eval.sigma_c", "must be nonnegative"));
        }
        if self.eval.tb_over_td.iter().any(|&t| !(0.0..1.0).contains(&t)) {
            return Err(Error::config("eval.tb_over_td", "must lie in [0, 1)"));
        }
        if self.eval.fixed_m.iter().any(|&m| m == 0) {
            return Err(Error::config("eval.fixed_m", "entries must be at least 1"));
        }
        if self.eval.knn_k == 0 {
            return Err(Error::config("eval.knn_k", "must be at least 1"));
        }
        Ok(())
    }
}

/// Stages that draw independent sub-seeds from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStage {
    Scenario,
    Detection,
    Split,
    TrainVdban,
    TrainBct,
    Resample,
    EvalNoise,
}

impl SeedStage {
    fn code(self) -> u64 {
        match self {
            SeedStage::Scenario => 0x01,
            SeedStage::Detection => 0x02,
            SeedStage::Split => 0x03,
            SeedStage::TrainVdban => 0x04,
            SeedStage::TrainBct => 0x05,
            SeedStage::Resample => 0x06,
            SeedStage::EvalNoise => 0x07,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed scheme: the master seed is mixed with the stage code and two
/// free counters (e.g. scenario and snapshot index) through three
/// splitmix64 rounds, so stages can be rerun independently without
/// disturbing each other's streams.
pub fn subseed(master: u64, stage: SeedStage, a: u64, b: u64) -> u64 {
    let mut s = master;
    for v in [stage.code(), a, b] {
        s = splitmix64(s ^ v);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn defaults_match_reference_parameters() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.channel.num_bs_antennas, 64);
        assert_eq!(cfg.channel.num_ms_antennas, 64);
        assert_eq!(cfg.channel.num_subcarriers, 16);
        assert_eq!(cfg.channel.carrier_hz, 28e9);
        assert_eq!(cfg.channel.max_paths, 5);
        assert_eq!(cfg.codebook.tx_size, 64);
        assert_eq!(cfg.codebook.rx_size, 64);
        assert_eq!(cfg.scenario.camera_count, 4);
        assert_eq!(cfg.scenario.snapshot_interval, 0.05);
        assert_eq!(cfg.grid.cell_length, 11.7);
        assert_eq!(cfg.grid.cell_width, 2.0);
        assert_eq!(cfg.features.seq_len, 3);
        assert_eq!((cfg.features.image_width, cfg.features.image_height), (320, 120));
        assert_eq!(cfg.split_fractions, [0.8, 0.1, 0.1]);
        assert_eq!(cfg.train_vdban.epochs, 60);
    }

    #[test]
    fn bad_fractions_rejected() {
        let mut cfg = RunConfig::default();
        cfg.split_fractions = [0.8, 0.1, 0.2];
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("split_fractions"));
        assert!(err.is_validation());
    }

    #[test]
    fn subseeds_differ_by_stage_and_counter() {
        let a = subseed(1, SeedStage::Scenario, 0, 0);
        let b = subseed(1, SeedStage::Detection, 0, 0);
        let c = subseed(1, SeedStage::Scenario, 1, 0);
        let d = subseed(1, SeedStage::Scenario, 0, 1);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_eq!(a, subseed(1, SeedStage::Scenario, 0, 0));
    }

    #[test]
    fn config_hash_changes_with_content() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        b.master_seed = 2;
        assert_ne!(a.hash(), b.hash());
    }
}
