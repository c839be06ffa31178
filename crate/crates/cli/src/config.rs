//! Pipeline configuration file (JSON).

use augsearch::nnet::TrainConfig;
use augsearch::search::SearchConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const SCHEMA_VERSION: u32 = 1;

/// Raised for anything wrong with the configuration itself (exit code 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSize {
    pub scenes: usize,
    pub views: usize,
}

impl DatasetSize {
    pub fn items(&self) -> usize {
        self.scenes * self.views
    }
}

/// One row of the baseline comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Baseline {
    None,
    /// Average over random sequences of this length.
    Random(usize),
    Handcrafted,
    /// Searched sequence of this length.
    Learned(usize),
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Baseline::None => f.write_str("none"),
            Baseline::Random(k) => write!(f, "random-{k}"),
            Baseline::Handcrafted => f.write_str("handcrafted"),
            Baseline::Learned(k) => write!(f, "learned-{k}"),
        }
    }
}

impl FromStr for Baseline {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let len = |k: &str| match k.parse::<usize>() {
            Ok(k) if (1..=11).contains(&k) => Ok(k),
            _ => Err(format!("bad sequence length in baseline {s:?}")),
        };
        match s {
            "none" => Ok(Baseline::None),
            "handcrafted" => Ok(Baseline::Handcrafted),
            _ => {
                if let Some(k) = s.strip_prefix("random-") {
                    Ok(Baseline::Random(len(k)?))
                } else if let Some(k) = s.strip_prefix("learned-") {
                    Ok(Baseline::Learned(len(k)?))
                } else {
                    Err(format!("unknown baseline {s:?}"))
                }
            }
        }
    }
}

impl TryFrom<String> for Baseline {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Baseline> for String {
    fn from(b: Baseline) -> String {
        b.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BcConfig {
    pub demos: usize,
    pub trials: usize,
    /// Which learned sequence (by length) the augmented policy uses.
    pub learned_length: usize,
    pub train: TrainConfig,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            demos: 50,
            trials: 20,
            learned_length: 8,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub image_size: usize,
    pub sim_train: DatasetSize,
    pub sim_val: DatasetSize,
    pub pseudo_real: DatasetSize,
    /// Regressor training; `train.seed` is the first of `eval_seeds`
    /// consecutive training seeds.
    pub train: TrainConfig,
    /// `reward_baseline` is replaced by the measured no-augmentation score
    /// and `sequence_length` by each learned baseline's length.
    pub search: SearchConfig,
    pub baselines: Vec<Baseline>,
    pub random_sequences: usize,
    /// Training seeds per table entry; rows report the median.
    pub eval_seeds: usize,
    pub bc: BcConfig,
    pub output_dir: PathBuf,
    /// Drives dataset generation, random baselines and rollout scenes.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            image_size: 64,
            sim_train: DatasetSize {
                scenes: 128,
                views: 4,
            },
            sim_val: DatasetSize {
                scenes: 100,
                views: 1,
            },
            pseudo_real: DatasetSize {
                scenes: 100,
                views: 1,
            },
            train: TrainConfig::default(),
            search: SearchConfig {
                plateau_patience: 50,
                max_iterations: 400,
                ..SearchConfig::default()
            },
            baselines: vec![
                Baseline::None,
                Baseline::Random(8),
                Baseline::Handcrafted,
                Baseline::Learned(1),
                Baseline::Learned(4),
                Baseline::Learned(8),
            ],
            random_sequences: 10,
            eval_seeds: 1,
            bc: BcConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Dataset sizes and search budget of the original experiments.
    pub fn paper_scale(mut self) -> Self {
        self.sim_train = DatasetSize {
            scenes: 400,
            views: 5,
        };
        self.sim_val = DatasetSize {
            scenes: 200,
            views: 1,
        };
        self.pseudo_real = DatasetSize {
            scenes: 200,
            views: 1,
        };
        self.search.plateau_patience = 500;
        self.search.max_iterations = 100_000;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.image_size < 16 {
            return bad(format!(
                "image_size {} is below the minimum of 16",
                self.image_size
            ));
        }
        for (name, d) in [
            ("sim_train", self.sim_train),
            ("sim_val", self.sim_val),
            ("pseudo_real", self.pseudo_real),
        ] {
            if d.items() == 0 {
                return bad(format!("{name} must have at least one scene and view"));
            }
        }
        if self.eval_seeds == 0 || self.random_sequences == 0 {
            return bad("eval_seeds and random_sequences must be positive".into());
        }
        if self.bc.demos == 0 || self.bc.trials == 0 {
            return bad("bc.demos and bc.trials must be positive".into());
        }
        self.train
            .validate()
            .map_err(|e| ConfigError(format!("train: {e}")))?;
        self.bc
            .train
            .validate()
            .map_err(|e| ConfigError(format!("bc.train: {e}")))?;
        let mut search = self.search.clone();
        for b in &self.baselines {
            if let Baseline::Learned(k) = b {
                search.sequence_length = *k;
                search
                    .validate()
                    .map_err(|e| ConfigError(format!("search ({b}): {e}")))?;
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form, stamped on every CSV.
    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(&bytes))
    }

    pub fn learned_lengths(&self) -> Vec<usize> {
        let mut ks: Vec<usize> = self
            .baselines
            .iter()
            .filter_map(|b| match b {
                Baseline::Learned(k) => Some(*k),
                _ => None,
            })
            .collect();
        ks.sort_unstable();
        ks.dedup();
        ks
    }
}
