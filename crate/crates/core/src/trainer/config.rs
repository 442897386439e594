use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossWeights;

/// Training strategy. `Alternating` is the full method; the others are the
/// ablation baselines it is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Source-trained classifier applied to raw target features.
    #[serde(rename = "A1_no_adapt")]
    NoAdapt,
    /// Primary objective only, target features passed through unaligned.
    #[serde(rename = "A2_primary_only")]
    PrimaryOnly,
    /// Closed-form alignment held fixed while the classifier trains.
    #[serde(rename = "A3_independent")]
    Independent,
    /// Classifier and alignment updated together at every inner step.
    #[serde(rename = "A4_joint")]
    Joint,
    /// Blocks of classifier steps alternating with blocks of alignment steps.
    #[serde(rename = "A5_alternating")]
    Alternating,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::NoAdapt, Mode::PrimaryOnly, Mode::Independent, Mode::Joint, Mode::Alternating];

    pub fn label(self) -> &'static str {
        match self {
            Mode::NoAdapt => "A1_no_adapt",
            Mode::PrimaryOnly => "A2_primary_only",
            Mode::Independent => "A3_independent",
            Mode::Joint => "A4_joint",
            Mode::Alternating => "A5_alternating",
        }
    }

    /// Whether target features are re-projected through subspaces.
    pub fn uses_alignment(self) -> bool {
        matches!(self, Mode::Independent | Mode::Joint | Mode::Alternating)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        let mode = match key.as_str() {
            "a1" | "a1_no_adapt" | "no_adapt" => Mode::NoAdapt,
            "a2" | "a2_primary_only" | "primary_only" => Mode::PrimaryOnly,
            "a3" | "a3_independent" | "independent" => Mode::Independent,
            "a4" | "a4_joint" | "joint" => Mode::Joint,
            "a5" | "a5_alternating" | "alternating" => Mode::Alternating,
            _ => return Err(Error::Config(format!("unknown mode {s:?} (expected A1..A5)"))),
        };
        Ok(mode)
    }
}

/// All training hyper-parameters. Field names double as the JSON config
/// file schema; missing fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Subspace dimension; `None` picks `round(0.39·D)` clamped to the data.
    pub subspace_dim: Option<usize>,
    pub weights: LossWeights,
    pub n_iter: usize,
    pub t1: usize,
    pub t2: usize,
    pub batch_size: usize,
    pub split_fraction: f64,
    pub seed: u64,
    pub ensemble_size: usize,
    /// Stop once `‖Φ_t − Φ_{t−1}‖_F` falls below this; 0 disables.
    pub early_stop_tol: f64,
    pub mode: Mode,
    pub warmup_steps: usize,
    pub warmup_learning_rate: f64,
    pub primary_learning_rate: f64,
    pub momentum: f64,
    pub aux_learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            subspace_dim: None,
            weights: LossWeights::default(),
            n_iter: 10,
            t1: 100,
            t2: 100,
            batch_size: 512,
            split_fraction: 0.8,
            seed: 0,
            ensemble_size: 1,
            early_stop_tol: 0.0,
            mode: Mode::Alternating,
            warmup_steps: 500,
            warmup_learning_rate: 0.01,
            primary_learning_rate: 1e-4,
            momentum: 0.9,
            aux_learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [("n_iter", self.n_iter), ("t1", self.t1), ("t2", self.t2), ("batch_size", self.batch_size)] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.ensemble_size == 0 {
            return bad("ensemble_size must be at least 1".into());
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad(format!("split_fraction must lie in (0, 1), got {}", self.split_fraction));
        }
        if self.subspace_dim == Some(0) {
            return bad("subspace_dim must be positive".into());
        }
        if !(self.early_stop_tol.is_finite() && self.early_stop_tol >= 0.0) {
            return bad(format!("early_stop_tol must be finite and non-negative, got {}", self.early_stop_tol));
        }
        for (name, lr) in [
            ("warmup_learning_rate", self.warmup_learning_rate),
            ("primary_learning_rate", self.primary_learning_rate),
            ("aux_learning_rate", self.aux_learning_rate),
            ("adam_epsilon", self.adam_epsilon),
        ] {
            if !(lr.is_finite() && lr > 0.0) {
                return bad(format!("{name} must be positive, got {lr}"));
            }
        }
        for (name, b) in [("momentum", self.momentum), ("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if self.ensemble_size > 1 && !self.mode.uses_alignment() {
            return bad(format!("mode {} has no alignment maps to ensemble", self.mode));
        }
        self.weights.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!((c.n_iter, c.t1, c.t2, c.batch_size), (10, 100, 100, 512));
        assert_eq!(c.split_fraction, 0.8);
        assert_eq!(c.primary_learning_rate, 1e-4);
        assert_eq!(c.aux_learning_rate, 1e-3);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("A3".parse::<Mode>().unwrap(), Mode::Independent);
        assert_eq!("a5_alternating".parse::<Mode>().unwrap(), Mode::Alternating);
        assert_eq!("no-adapt".parse::<Mode>().unwrap(), Mode::NoAdapt);
        assert!("A6".parse::<Mode>().is_err());
        for m in Mode::ALL {
            assert_eq!(m.label().parse::<Mode>().unwrap(), m);
        }
    }

    #[test]
    fn invalid_configs() {
        let base = TrainConfig::default();
        let cases = [
            TrainConfig { n_iter: 0, ..base.clone() },
            TrainConfig { split_fraction: 1.0, ..base.clone() },
            TrainConfig { ensemble_size: 0, ..base.clone() },
            TrainConfig { momentum: 1.0, ..base.clone() },
            TrainConfig { ensemble_size: 3, mode: Mode::PrimaryOnly, ..base.clone() },
        ];
        for c in cases {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn json_uses_field_names_and_defaults() {
        let c: TrainConfig = serde_json::from_str(r#"{"n_iter": 3, "mode": "A4_joint"}"#).unwrap();
        assert_eq!(c.n_iter, 3);
        assert_eq!(c.mode, Mode::Joint);
        assert_eq!(c.t1, 100);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
