//! Experiment configuration, read from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use guard_core::defense::{DEFAULT_ALPHA, DEFAULT_JACCARD_THRESHOLD};
use guard_core::models::TrainingConfig;

use crate::error::{HarnessError, HarnessResult};
use crate::synth::{CoraLikeSpec, ErdosRenyiSpec, SbmSpec};

/// Where the graph comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Files {
        edges: PathBuf,
        features: PathBuf,
        labels: PathBuf,
        /// Split file over the original node indices; generated from the
        /// seed when absent.
        #[serde(default)]
        splits: Option<PathBuf>,
        /// Restrict to the largest connected component.
        #[serde(default = "yes")]
        largest_component: bool,
    },
    ErdosRenyi(ErdosRenyiSpec),
    Sbm(SbmSpec),
    CoraLike(CoraLikeSpec),
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Linear,
    Gcn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefenseKind {
    Guard,
    Random,
    Degree,
    Jaccard,
    None,
}

impl DefenseKind {
    pub fn name(self) -> &'static str {
        match self {
            DefenseKind::Guard => "guard",
            DefenseKind::Random => "random",
            DefenseKind::Degree => "degree",
            DefenseKind::Jaccard => "jaccard",
            DefenseKind::None => "none",
        }
    }
}

/// Fractions used when splits are generated rather than read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub valid: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.1, valid: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    /// Victim architecture; the attack surrogate is always linear.
    pub model: ModelChoice,
    pub surrogate: TrainingConfig,
    pub victim: TrainingConfig,
    pub k: usize,
    pub alpha: f64,
    pub num_targets: usize,
    pub seed: u64,
    pub repeats: usize,
    pub defenses: Vec<DefenseKind>,
    pub jaccard_threshold: f64,
    pub split: SplitFractions,
    /// Let the attack also delete edges incident to the target.
    pub allow_removal: bool,
    /// Repetitions of the timing probe; the median is reported.
    pub timing_repeats: usize,
    /// Cap on the labeled subset averaged over by the influence score.
    pub sub_size: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::CoraLike(CoraLikeSpec::default()),
            model: ModelChoice::Gcn,
            surrogate: TrainingConfig::default(),
            victim: TrainingConfig::default(),
            k: 200,
            alpha: DEFAULT_ALPHA,
            num_targets: 1000,
            seed: 0,
            repeats: 5,
            defenses: vec![
                DefenseKind::None,
                DefenseKind::Guard,
                DefenseKind::Random,
                DefenseKind::Degree,
            ],
            jaccard_threshold: DEFAULT_JACCARD_THRESHOLD,
            split: SplitFractions::default(),
            allow_removal: false,
            timing_repeats: 5,
            sub_size: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> HarnessResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Checks value ranges and that every referenced file exists.
    pub fn validate(&self) -> HarnessResult<()> {
        let fail = |m: String| Err(HarnessError::Config(m));
        if self.repeats == 0 {
            return fail("repeats must be at least 1".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha {} must be finite and >= 0", self.alpha));
        }
        if self.jaccard_threshold.is_nan() || self.jaccard_threshold < 0.0 {
            return fail(format!("jaccard_threshold {} must be >= 0", self.jaccard_threshold));
        }
        if self.sub_size == Some(0) {
            return fail("sub_size must be at least 1".into());
        }
        let s = &self.split;
        if !(s.train > 0.0 && s.valid >= 0.0 && s.train + s.valid < 1.0) {
            return fail(format!("split fractions train={} valid={} leave no test nodes", s.train, s.valid));
        }
        for (name, t) in [("surrogate", &self.surrogate), ("victim", &self.victim)] {
            if t.learning_rate.is_nan() || t.learning_rate <= 0.0 || t.num_layers == 0 || t.hidden == 0 {
                return fail(format!("{name}: learning_rate, num_layers and hidden must be positive"));
            }
        }
        match &self.dataset {
            DatasetSpec::Files {
                edges,
                features,
                labels,
                splits,
                ..
            } => {
                for path in [Some(edges), Some(features), Some(labels), splits.as_ref()]
                    .into_iter()
                    .flatten()
                {
                    if !path.exists() {
                        return fail(format!("dataset file {} does not exist", path.display()));
                    }
                }
            }
            DatasetSpec::ErdosRenyi(er) => {
                if !(0.0..=1.0).contains(&er.p) || er.num_nodes == 0 {
                    return fail("erdos_renyi needs num_nodes > 0 and p in [0, 1]".into());
                }
            }
            DatasetSpec::Sbm(sbm) => {
                let ok = |p: f64| (0.0..=1.0).contains(&p);
                if sbm.block_sizes.is_empty() || !ok(sbm.p_in) || !ok(sbm.p_out) {
                    return fail("sbm needs blocks and probabilities in [0, 1]".into());
                }
            }
            DatasetSpec::CoraLike(c) => {
                if c.num_nodes < 2 || c.class_weights.is_empty() || !(0.0..=1.0).contains(&c.homophily) {
                    return fail("cora_like needs num_nodes >= 2, classes and homophily in [0, 1]".into());
                }
            }
        }
        Ok(())
    }

    /// Seed for repeat `r`; repeats never share a seed.
    pub fn repeat_seed(&self, r: usize) -> u64 {
        self.seed.wrapping_add((r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}
