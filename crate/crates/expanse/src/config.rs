//! TOML experiment configuration: dataset declarations (IDX sources and
//! derived transformations) plus an ordered chain of training/expansion
//! stages.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{load_idx, Dataset};
use crate::error::{Error, Result};
use crate::expand::NewWeightMode;

/// Environment variable naming the default dataset root.
pub const DATA_DIR_ENV: &str = "EXPANSE_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub settings: Settings,
    /// Default evaluation datasets for every stage.
    #[serde(default)]
    pub eval: Option<EvalNames>,
    pub stages: Vec<StageConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset root; falls back to `EXPANSE_DATA_DIR`, then the current
    /// directory. Relative paths in sources resolve against it.
    #[serde(default)]
    pub root: Option<PathBuf>,
    pub sources: BTreeMap<String, SourcePair>,
    #[serde(default)]
    pub derived: BTreeMap<String, DerivedSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcePair {
    pub images: PathBuf,
    pub labels: PathBuf,
    /// Explicit class count when the file may not contain the highest
    /// class; otherwise inferred as `max(label) + 1`.
    #[serde(default)]
    pub class_count: Option<usize>,
}

/// A dataset derived from another by filtering, exemplar selection,
/// and/or duplication, applied in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivedSpec {
    pub base: String,
    #[serde(default)]
    pub keep_classes: Option<Vec<usize>>,
    #[serde(default)]
    pub relabel: bool,
    #[serde(default)]
    pub per_class: Option<usize>,
    #[serde(default)]
    pub indices: Option<Vec<usize>>,
    #[serde(default)]
    pub duplicate: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Settings {
    pub batch_size: usize,
    pub folds: usize,
    pub weight_decay: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            batch_size: 32,
            folds: 10,
            weight_decay: 0.0,
        }
    }
}

/// Names of the datasets used for the three-way stage evaluation; any
/// missing entry skips that column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EvalNames {
    #[serde(default)]
    pub exemplary: Option<String>,
    #[serde(default)]
    pub train: Option<String>,
    #[serde(default)]
    pub test: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub seed: u64,
    /// Layer sizes for a freshly initialized network. Only valid on
    /// training stages; without it the stage continues the previous
    /// stage's network.
    #[serde(default)]
    pub init: Option<Vec<usize>>,
    /// Apply the freeze mask carried from the latest expansion.
    #[serde(default)]
    pub freeze: bool,
    #[serde(default)]
    pub step_a: Option<StepA>,
    #[serde(default)]
    pub step_b: Option<StepB>,
    #[serde(default)]
    pub expand: Option<ExpandStage>,
    #[serde(default)]
    pub eval: Option<EvalNames>,
}

/// Exemplary warm-up step at a higher learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepA {
    pub data: String,
    pub learning_rate: f64,
    pub epochs: usize,
}

/// Main training step on a (possibly mixed) dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepB {
    pub learning_rate: f64,
    pub epochs: usize,
    pub mix: Vec<MixPart>,
    /// Seed for fraction draws and the mix shuffle; defaults to the
    /// stage seed.
    #[serde(default)]
    pub mix_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixPart {
    pub data: String,
    #[serde(default = "one")]
    pub fraction: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpandStage {
    pub target: Vec<usize>,
    #[serde(default)]
    pub mode: NewWeightMode,
    #[serde(default)]
    pub class_map: Option<Vec<usize>>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("no stages defined".into()));
        }
        let known = |name: &str| -> bool {
            self.data.sources.contains_key(name) || self.data.derived.contains_key(name)
        };
        for spec in self.data.derived.values() {
            if !known(&spec.base) {
                return Err(Error::Config(format!("unknown base dataset '{}'", spec.base)));
            }
        }
        let check_eval = |names: &EvalNames| -> Result<()> {
            for n in [&names.exemplary, &names.train, &names.test].into_iter().flatten() {
                if !known(n) {
                    return Err(Error::Config(format!("unknown eval dataset '{n}'")));
                }
            }
            Ok(())
        };
        if let Some(eval) = &self.eval {
            check_eval(eval)?;
        }
        for (i, stage) in self.stages.iter().enumerate() {
            let fail =
                |msg: String| Error::Config(format!("stage {i} ('{}'): {msg}", stage.name));
            let is_train = stage.step_b.is_some();
            let is_expand = stage.expand.is_some();
            if is_train == is_expand {
                return Err(fail("need exactly one of step_b or expand".into()));
            }
            if is_expand && (stage.step_a.is_some() || stage.init.is_some()) {
                return Err(fail("expand stages take no init or training steps".into()));
            }
            if stage.step_a.is_some() && stage.step_b.is_none() {
                return Err(fail("step_a requires step_b".into()));
            }
            if i == 0 && stage.init.is_none() {
                return Err(fail("first stage must initialize a network".into()));
            }
            if let Some(a) = &stage.step_a {
                if !known(&a.data) {
                    return Err(fail(format!("unknown dataset '{}'", a.data)));
                }
            }
            if let Some(b) = &stage.step_b {
                if b.mix.is_empty() {
                    return Err(fail("step_b.mix must not be empty".into()));
                }
                for part in &b.mix {
                    if !known(&part.data) {
                        return Err(fail(format!("unknown dataset '{}'", part.data)));
                    }
                }
            }
            if let Some(eval) = &stage.eval {
                check_eval(eval).map_err(|e| fail(e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Evaluation names in effect for a stage.
    pub fn eval_names_for(&self, stage: &StageConfig) -> EvalNames {
        stage
            .eval
            .clone()
            .or_else(|| self.eval.clone())
            .unwrap_or_default()
    }
}

/// Lazily loads and memoizes the datasets a config names.
pub struct DataBank<'a> {
    config: &'a DataConfig,
    root: PathBuf,
    cache: HashMap<String, Arc<Dataset>>,
}

impl<'a> DataBank<'a> {
    /// `root_override` beats `data.root` beats `EXPANSE_DATA_DIR` beats
    /// the current directory.
    pub fn new(config: &'a DataConfig, root_override: Option<&Path>) -> DataBank<'a> {
        let root = root_override
            .map(Path::to_path_buf)
            .or_else(|| config.root.clone())
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        DataBank {
            config,
            root,
            cache: HashMap::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn get(&mut self, name: &str) -> Result<Arc<Dataset>> {
        self.get_inner(name, 0)
    }

    fn get_inner(&mut self, name: &str, depth: usize) -> Result<Arc<Dataset>> {
        if depth > 32 {
            return Err(Error::Config(format!(
                "dataset '{name}' has a circular or too-deep derivation chain"
            )));
        }
        if let Some(d) = self.cache.get(name) {
            return Ok(Arc::clone(d));
        }
        let dataset = if let Some(pair) = self.config.sources.get(name) {
            let images = self.root.join(&pair.images);
            let labels = self.root.join(&pair.labels);
            load_idx(&images, &labels, pair.class_count)?
        } else if let Some(spec) = self.config.derived.get(name).cloned() {
            let base = self.get_inner(&spec.base, depth + 1)?;
            let mut d = (*base).clone();
            if let Some(keep) = &spec.keep_classes {
                let keep: BTreeSet<usize> = keep.iter().copied().collect();
                d = d.filter_classes(&keep, spec.relabel)?;
            }
            if let Some(indices) = &spec.indices {
                d = d.select_by_indices(indices)?;
            } else if let Some(per_class) = spec.per_class {
                d = d.select_exemplars(per_class)?;
            }
            if let Some(factor) = spec.duplicate {
                d = d.duplicate(factor)?;
            }
            d
        } else {
            return Err(Error::Config(format!("unknown dataset '{name}'")));
        };
        let arc = Arc::new(dataset);
        self.cache.insert(name.to_string(), Arc::clone(&arc));
        Ok(arc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[data.sources.train]
images = "imgs"
labels = "labs"

[[stages]]
name = "base"
seed = 1
init = [784, 16, 10]
[stages.step_b]
learning_rate = 0.001
epochs = 1
mix = [{ data = "train" }]
"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.settings.batch_size, 32);
        assert_eq!(cfg.stages[0].step_b.as_ref().unwrap().mix[0].fraction, 1.0);
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = MINIMAL.replace("seed = 1", "seed = 1\nbogus_field = 3");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("bogus_field"), "{err}");
    }

    #[test]
    fn unknown_dataset_reference_is_rejected() {
        let text = MINIMAL.replace("data = \"train\"", "data = \"nope\"");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn first_stage_must_init() {
        let text = MINIMAL.replace("init = [784, 16, 10]\n", "");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn expand_and_train_are_mutually_exclusive() {
        let text = format!(
            "{MINIMAL}\n[stages.expand]\ntarget = [784, 32, 10]\n"
        );
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }
}
