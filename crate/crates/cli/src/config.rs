use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cnndistill_core::model::{
    default_batch_size, default_epochs, default_learning_rate, default_momentum, default_schedule, CnnConfig,
    NUM_CONV_LAYERS,
};
use cnndistill_core::tree::{TargetMode, TreeBudget};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Classify};

/// Where the images come from: an NPZ archive or the blob generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetSpec {
    Path(PathBuf),
    Synth { classes: usize, per_class: usize },
}

impl DatasetSpec {
    /// Directory name under the output root.
    pub fn name(&self) -> String {
        match self {
            DatasetSpec::Path(p) => p.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned()),
            DatasetSpec::Synth { classes, per_class } => format!("synth_{classes}x{per_class}"),
        }
    }
}

impl FromStr for DatasetSpec {
    type Err = CliError;

    /// `synth:KxM` or a path.
    fn from_str(s: &str) -> CliResult<Self> {
        let Some(shape) = s.strip_prefix("synth:") else {
            return Ok(DatasetSpec::Path(PathBuf::from(s)));
        };
        let bad = || CliError::Config(format!("synthetic dataset spec {s:?} must look like synth:3x400"));
        let (k, m) = shape.split_once('x').ok_or_else(bad)?;
        Ok(DatasetSpec::Synth { classes: k.parse().map_err(|_| bad())?, per_class: m.parse().map_err(|_| bad())? })
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSpec::Path(p) => write!(f, "{}", p.display()),
            DatasetSpec::Synth { classes, per_class } => write!(f, "synth:{classes}x{per_class}"),
        }
    }
}

impl Serialize for DatasetSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DatasetSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Network hyperparameters; shape fields come from the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnSettings {
    #[serde(default = "default_schedule")]
    pub channel_schedule: [usize; NUM_CONV_LAYERS],
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
}

impl Default for CnnSettings {
    fn default() -> Self {
        Self {
            channel_schedule: default_schedule(),
            learning_rate: default_learning_rate(),
            momentum: default_momentum(),
            batch_size: default_batch_size(),
            epochs: default_epochs(),
        }
    }
}

/// Contents of `--config run.json`. Only `dataset` and `seed` are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub seed: u64,
    #[serde(default)]
    pub cnn: CnnSettings,
    #[serde(default)]
    pub tree: TreeBudget,
    #[serde(default)]
    pub target: TargetMode,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dataset: Option<DatasetSpec>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub depth: Option<usize>,
    pub leaves: Option<usize>,
    pub target: Option<TargetMode>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let mut value = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str::<serde_json::Value>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => serde_json::json!({}),
        };
        let obj = value.as_object_mut().ok_or_else(|| CliError::Config("config must be a JSON object".into()))?;
        if let Some(d) = &overrides.dataset {
            obj.insert("dataset".into(), d.to_string().into());
        }
        if let Some(s) = overrides.seed {
            obj.insert("seed".into(), s.into());
        }
        if let Some(o) = &overrides.out {
            obj.insert("out".into(), o.to_string_lossy().into_owned().into());
        }
        let mut config: RunConfig = serde_json::from_value(value).config()?;
        if let Some(d) = overrides.depth {
            config.tree.max_depth = d;
        }
        if let Some(l) = overrides.leaves {
            config.tree.max_leaves = l;
        }
        if let Some(t) = overrides.target {
            config.target = t;
        }
        config.tree.validate().config()?;
        Ok(config)
    }

    /// `<out>/<dataset>/<seed>/`.
    pub fn run_dir(&self) -> PathBuf {
        self.out.join(self.dataset.name()).join(self.seed.to_string())
    }

    pub fn cnn_config(&self, input_channels: usize, num_classes: usize) -> CliResult<CnnConfig> {
        let c = &self.cnn;
        let config = CnnConfig {
            input_channels,
            num_classes,
            channel_schedule: c.channel_schedule,
            seed: self.seed,
            learning_rate: c.learning_rate,
            momentum: c.momentum,
            batch_size: c.batch_size,
            epochs: c.epochs,
        };
        config.validate().config()?;
        Ok(config)
    }

    /// Everything that determines the results; the output location is left out.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::json!({
            "dataset": self.dataset.to_string(),
            "seed": self.seed,
            "cnn": self.cnn,
            "tree": self.tree,
            "target": self.target,
        })
    }
}

/// Inclusive ranges from `--sweep depth=2..6 leaves=3..9`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sweep {
    pub depths: Vec<usize>,
    pub leaves: Vec<usize>,
}

impl Sweep {
    /// Parses `key=a..b` or `key=v` terms; a missing key keeps `base`'s value.
    pub fn parse(terms: &[String], base: &TreeBudget) -> CliResult<Self> {
        let mut sweep = Sweep { depths: vec![base.max_depth], leaves: vec![base.max_leaves] };
        for term in terms {
            let bad = || CliError::Config(format!("sweep term {term:?} must look like depth=2..6 or leaves=5"));
            let (key, range) = term.split_once('=').ok_or_else(bad)?;
            let (lo, hi) = match range.split_once("..") {
                Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
                None => {
                    let v = range.trim().parse().map_err(|_| bad())?;
                    (v, v)
                }
            };
            if lo > hi {
                return Err(bad());
            }
            let values = (lo..=hi).collect();
            match key.trim() {
                "depth" => sweep.depths = values,
                "leaves" => sweep.leaves = values,
                _ => return Err(bad()),
            }
        }
        Ok(sweep)
    }

    pub fn budgets(&self, base: &TreeBudget) -> Vec<TreeBudget> {
        self.depths
            .iter()
            .flat_map(|&d| self.leaves.iter().map(move |&l| TreeBudget { max_depth: d, max_leaves: l, ..*base }))
            .collect()
    }
}
