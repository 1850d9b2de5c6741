use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use swprune::harness::{DatasetSpec, TrainConfig};
use swprune::{NetworkSpec, SmallWorldConfig, Theta};

use crate::CliError;

/// Run configuration file. Paths are relative to the file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `"lenet5"`, `{"mlp": [784, 128, 10]}`, or an explicit layer list.
    pub network: Value,
    pub dataset: DatasetSpec,
    pub sw: SmallWorldConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Seed for both structuring and training
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rewiring probability
    #[arg(long)]
    pub p: Option<f64>,
    /// Global sparsity θ
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

pub fn network_spec(value: &Value) -> Result<NetworkSpec, CliError> {
    let spec = match value {
        Value::String(name) => match name.as_str() {
            "lenet5" => NetworkSpec::lenet5(),
            other => return Err(CliError::Usage(format!("unknown network preset {other:?}"))),
        },
        Value::Object(map) if map.contains_key("mlp") => {
            if map.len() != 1 {
                return Err(CliError::Usage(
                    "an mlp network takes only the \"mlp\" key".into(),
                ));
            }
            let sizes: Vec<usize> = serde_json::from_value(map["mlp"].clone())
                .map_err(|e| CliError::Usage(format!("network.mlp: {e}")))?;
            if sizes.len() < 2 || sizes.contains(&0) {
                return Err(CliError::Usage(
                    "network.mlp needs at least two positive sizes".into(),
                ));
            }
            NetworkSpec::mlp(&sizes)
        }
        other => serde_json::from_value(other.clone())
            .map_err(|e| CliError::Usage(format!("network: {e}")))?,
    };
    spec.validate()
        .map_err(|e| CliError::Usage(format!("network: {e}")))?;
    Ok(spec)
}

/// A loaded config plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base: PathBuf,
    pub path: PathBuf,
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn base_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

impl Loaded {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let mut config: RunConfig = serde_json::from_value(read_json(path)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if let Some(seed) = overrides.seed {
            config.sw.seed = seed;
            config.train.seed = seed;
        }
        if let Some(p) = overrides.p {
            config.sw.p = p;
        }
        if let Some(t) = overrides.theta {
            config.sw.theta = Theta::Global(t);
        }
        if let Some(e) = overrides.epochs {
            config.train.epochs = e;
        }
        if let Some(lr) = overrides.lr {
            config.train.learning_rate = Some(lr);
        }
        if let Some(b) = overrides.batch_size {
            config.train.batch_size = b;
        }
        let spec = network_spec(&config.network)?;
        config.sw.validate()?;
        config.train.validate()?;
        config.train = config.train.resolved(&spec);
        Ok(Self {
            config,
            base: base_dir(path),
            path: path.to_path_buf(),
        })
    }

    pub fn spec(&self) -> NetworkSpec {
        network_spec(&self.config.network).expect("validated on load")
    }

    pub fn dataset(&self) -> DatasetSpec {
        self.config.dataset.rebased(&self.base)
    }

    /// `--out` if given, else the file's `out_dir`.
    pub fn out_dir(&self, flag: Option<&Path>) -> Result<PathBuf, CliError> {
        match (flag, &self.config.out_dir) {
            (Some(f), _) => Ok(f.to_path_buf()),
            (None, Some(d)) => Ok(self.base.join(d)),
            (None, None) => Err(CliError::Usage(
                "no output directory: pass --out or set out_dir".into(),
            )),
        }
    }

    /// Effective config as echoed into manifests (paths as written).
    pub fn echo(&self) -> Value {
        serde_json::to_value(&self.config).expect("config serialises")
    }
}

/// Dataset for `eval`/`report`: either a run config (its `dataset`) or a
/// bare dataset spec.
pub fn load_dataset_file(path: &Path) -> Result<DatasetSpec, CliError> {
    let value = read_json(path)?;
    let ds = match value.get("dataset") {
        Some(d) if value.get("network").is_some() => d.clone(),
        _ => value,
    };
    let ds: DatasetSpec = serde_json::from_value(ds)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(ds.rebased(&base_dir(path)))
}
