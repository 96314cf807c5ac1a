//! Run configuration: model dimensions, training hyperparameters, scenario
//! generation knobs and metric radii, plus the TOML file format the CLI
//! accepts. Unknown keys in a config file are rejected by name.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Network dimensions shared by the encoder and decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Node/query embedding width.
    pub embed_dim: usize,
    /// Hidden width of every MLP.
    pub hidden_width: usize,
    /// KNN degree inside each zone subgraph.
    pub k_neighbors: usize,
    /// Message-passing layers per zone subgraph.
    pub local_layers: usize,
    /// Trajectory proposals per query.
    pub num_modes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 64,
            hidden_width: 64,
            k_neighbors: 4,
            local_layers: 2,
            num_modes: 6,
        }
    }
}

/// Loss term weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub motion: f64,
    pub stage1_plan: f64,
    pub stage2_plan: f64,
    pub state_predictor: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            motion: 1.0,
            stage1_plan: 1.0,
            stage2_plan: 1.0,
            state_predictor: 0.5,
        }
    }
}

/// Ablation gates mirroring the UMP / ECSA / UTTD axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationFlags {
    /// Joint motion+plan decoding (UMP): when false, the motion loss is
    /// identically zero and only the ego plan is supervised.
    pub joint_motion: bool,
    /// Equivariant scene encoder; when false a plain MLP embeds nodes.
    pub use_ecsa: bool,
    /// Stage-II conditional refinement and the state predictor.
    pub use_uttd_stage2: bool,
    /// Hard-sample memory queue and query fusion.
    pub use_memory: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            joint_motion: true,
            use_ecsa: true,
            use_uttd_stage2: true,
            use_memory: true,
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    /// Hard-sample queue capacity.
    pub queue_capacity: usize,
    /// EMA factor of the admission threshold.
    pub queue_gamma: f64,
    /// Probability that the ego state is zero-masked during training.
    pub mask_probability: f64,
    /// Hinge distance of the stage-1 plan distribution loss.
    pub hinge_distance: f64,
    pub flags: AblationFlags,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            epochs: 30,
            batch_size: 8,
            learning_rate: 3e-4,
            weights: LossWeights::default(),
            queue_capacity: 700,
            queue_gamma: 0.2,
            mask_probability: 0.0625,
            hinge_distance: 0.0,
            flags: AblationFlags::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.mask_probability) {
            return Err(Error::invalid("mask_probability must be in [0, 1]"));
        }
        if !(self.queue_gamma > 0.0 && self.queue_gamma < 1.0) {
            return Err(Error::invalid("queue_gamma must be in (0, 1)"));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        Ok(())
    }
}

/// Relative weight of one maneuver in the generator mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManeuverMix {
    pub keep_lane: f64,
    pub turn: f64,
    pub lane_change: f64,
    pub overtake: f64,
    pub stop: f64,
}

impl Default for ManeuverMix {
    fn default() -> Self {
        ManeuverMix {
            keep_lane: 0.70,
            turn: 0.10,
            lane_change: 0.10,
            overtake: 0.05,
            stop: 0.05,
        }
    }
}

impl ManeuverMix {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.keep_lane,
            self.turn,
            self.lane_change,
            self.overtake,
            self.stop,
        ]
    }

    pub fn sum(&self) -> f64 {
        self.as_array().iter().sum()
    }
}

/// Synthetic scenario generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub min_agents: usize,
    pub max_agents: usize,
    /// Relative weights of the road layouts (a turning ego always gets an
    /// intersection).
    pub layout_straight: f64,
    pub layout_curve: f64,
    pub layout_intersection: f64,
    /// Curve radius range in meters for curved road layouts.
    pub curve_radius_min: f64,
    pub curve_radius_max: f64,
    pub maneuver_mix: ManeuverMix,
    /// Standard deviation of positional jitter applied to history samples.
    pub history_noise: f64,
    pub min_speed: f64,
    pub max_speed: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            min_agents: 6,
            max_agents: 10,
            layout_straight: 0.45,
            layout_curve: 0.30,
            layout_intersection: 0.25,
            curve_radius_min: 40.0,
            curve_radius_max: 120.0,
            maneuver_mix: ManeuverMix::default(),
            history_noise: 0.02,
            min_speed: 2.0,
            max_speed: 12.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_agents == 0 || self.max_agents < self.min_agents {
            return Err(Error::invalid(
                "agent count range must satisfy 1 <= min <= max",
            ));
        }
        let sum = self.maneuver_mix.sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "maneuver mix probabilities sum to {sum}, expected 1"
            )));
        }
        if self.curve_radius_min <= 0.0 || self.curve_radius_max < self.curve_radius_min {
            return Err(Error::invalid("curve radius range invalid"));
        }
        let layouts = self.layout_straight + self.layout_curve + self.layout_intersection;
        if layouts <= 0.0 {
            return Err(Error::invalid("layout weights must not all be zero"));
        }
        if self.min_speed < 0.0 || self.max_speed < self.min_speed {
            return Err(Error::invalid("speed range invalid"));
        }
        Ok(())
    }
}

/// Collision-disc radii used by the evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricRadii {
    pub ego_radius: f64,
    pub agent_radius: f64,
}

impl Default for MetricRadii {
    fn default() -> Self {
        MetricRadii {
            ego_radius: 2.0,
            agent_radius: 1.0,
        }
    }
}

/// The structured configuration file accepted by the CLI. Every key is
/// optional; unknown keys are rejected with the offending key named.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfigFile {
    pub train: TrainConfig,
    pub scenario: ScenarioConfig,
    pub metrics: MetricRadii,
}

impl CliConfigFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: CliConfigFile =
            toml::from_str(text).map_err(|e| Error::invalid(format!("config file: {e}")))?;
        cfg.train.validate()?;
        cfg.scenario.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// FNV-1a hash of a config's canonical JSON form; stamped into checkpoints
/// and reports so artifacts can be matched to the run that produced them.
pub fn config_hash(cfg: &TrainConfig) -> u64 {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in json.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        TrainConfig::default().validate().unwrap();
        ScenarioConfig::default().validate().unwrap();
        assert!((ManeuverMix::default().sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = CliConfigFile::from_toml_str("[train]\nbananas = 3\n").unwrap_err();
        assert!(err.to_string().contains("bananas"), "{err}");
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = CliConfigFile::from_toml_str("[train]\nseed = 7\n").unwrap();
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.train.queue_capacity, 700);
        assert_eq!(cfg.train.queue_gamma, 0.2);
        assert_eq!(cfg.train.mask_probability, 0.0625);
    }

    #[test]
    fn hash_changes_with_config() {
        let a = TrainConfig::default();
        let mut b = TrainConfig::default();
        b.seed = 1;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a), config_hash(&TrainConfig::default()));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = CliConfigFile::default();
        let text = cfg.to_toml_string();
        let back = CliConfigFile::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
