//! Flat `key=value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are an error.
//! [`RunConfig::to_text`] writes every key, so the written file reproduces
//! the run it came from.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::dataset::RatingScale;
use crate::model::ModelDims;
use crate::trainer::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("{origin}:{line}: expected `key=value`")]
    Syntax { origin: String, line: usize },
    #[error("missing required setting {0}")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub const KEYS: &[&str] = &[
    "ratings",
    "trust",
    "out_dir",
    "r_min",
    "r_max",
    "test_fraction",
    "task",
    "epochs",
    "batch_size",
    "learning_rate",
    "rho",
    "epsilon",
    "dropout_k",
    "node_dropout",
    "threshold",
    "delta",
    "seed",
    "patience",
    "val_fraction",
    "threads",
    "dim",
    "attn_hidden",
    "mlp_hidden",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub ratings: Option<PathBuf>,
    pub trust: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub r_min: f64,
    pub r_max: f64,
    pub test_fraction: f64,
    pub delta: f64,
    pub train: TrainConfig,
    pub dim: usize,
    pub attn_hidden: usize,
    /// Defaults to `dim` when unset.
    pub mlp_hidden: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let dims = ModelDims::default();
        RunConfig {
            ratings: None,
            trust: None,
            out_dir: PathBuf::from("run"),
            r_min: 1.0,
            r_max: 5.0,
            test_fraction: 0.2,
            delta: crate::social_graph::DEFAULT_DELTA,
            train: TrainConfig::default(),
            dim: dims.dim,
            attn_hidden: dims.attn_hidden,
            mlp_hidden: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
        key: key.to_owned(),
        value: value.to_owned(),
        reason: e.to_string(),
    })
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let path = || (!value.is_empty()).then(|| PathBuf::from(value));
        match key {
            "ratings" => self.ratings = path(),
            "trust" => self.trust = path(),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "r_min" => self.r_min = parse(key, value)?,
            "r_max" => self.r_max = parse(key, value)?,
            "test_fraction" => self.test_fraction = parse(key, value)?,
            "task" => self.train.task = parse(key, value)?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "learning_rate" => self.train.learning_rate = parse(key, value)?,
            "rho" => self.train.rho = parse(key, value)?,
            "epsilon" => self.train.epsilon = parse(key, value)?,
            "dropout_k" => self.train.dropout_k = parse(key, value)?,
            "node_dropout" => self.train.node_dropout = parse(key, value)?,
            "threshold" => self.train.threshold = parse(key, value)?,
            "delta" => self.delta = parse(key, value)?,
            "seed" => self.train.seed = parse(key, value)?,
            "patience" => self.train.patience = parse(key, value)?,
            "val_fraction" => self.train.val_fraction = parse(key, value)?,
            "threads" => self.train.threads = parse(key, value)?,
            "dim" => self.dim = parse(key, value)?,
            "attn_hidden" => self.attn_hidden = parse(key, value)?,
            "mlp_hidden" => self.mlp_hidden = Some(parse(key, value)?),
            other => return Err(ConfigError::UnknownKey(other.to_owned())),
        }
        Ok(())
    }

    /// Applies `key=value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                origin: origin.to_owned(),
                line: i + 1,
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text, "<config>")?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    fn get(&self, key: &str) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let t = &self.train;
        match key {
            "ratings" => path(&self.ratings),
            "trust" => path(&self.trust),
            "out_dir" => self.out_dir.display().to_string(),
            "r_min" => self.r_min.to_string(),
            "r_max" => self.r_max.to_string(),
            "test_fraction" => self.test_fraction.to_string(),
            "task" => t.task.to_string(),
            "epochs" => t.epochs.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "learning_rate" => t.learning_rate.to_string(),
            "rho" => t.rho.to_string(),
            "epsilon" => t.epsilon.to_string(),
            "dropout_k" => t.dropout_k.to_string(),
            "node_dropout" => t.node_dropout.to_string(),
            "threshold" => t.threshold.to_string(),
            "delta" => self.delta.to_string(),
            "seed" => t.seed.to_string(),
            "patience" => t.patience.to_string(),
            "val_fraction" => t.val_fraction.to_string(),
            "threads" => t.threads.to_string(),
            "dim" => self.dim.to_string(),
            "attn_hidden" => self.attn_hidden.to_string(),
            "mlp_hidden" => self.mlp_hidden.unwrap_or(self.dim).to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Every key with its effective value, one `key=value` per line.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k}={}\n", self.get(k)))
            .collect()
    }

    pub fn scale(&self) -> Result<RatingScale, ConfigError> {
        RatingScale::new(self.r_min, self.r_max).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn dims(&self) -> Result<ModelDims, ConfigError> {
        Ok(ModelDims {
            dim: self.dim,
            diff_levels: self.scale()?.levels(),
            attn_hidden: self.attn_hidden,
            mlp_hidden: self.mlp_hidden.unwrap_or(self.dim),
        })
    }

    pub fn ratings_path(&self) -> Result<&Path, ConfigError> {
        self.ratings.as_deref().ok_or(ConfigError::Missing("ratings"))
    }

    /// Checks every setting before any work starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let scale = self.scale()?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "delta must be non-negative, got {}",
                self.delta
            )));
        }
        let dims = self.dims()?;
        if dims.dim == 0 || dims.attn_hidden == 0 || dims.mlp_hidden == 0 {
            return Err(ConfigError::Invalid("model dimensions must be positive".into()));
        }
        self.train
            .validate(scale)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::Task;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "# comment\nratings = data/r.txt\ntask=ranking\nthreshold=3\ndim=16\nlearning_rate=0.0025\n",
            "mem",
        )
        .unwrap();
        assert_eq!(cfg.train.task, Task::Ranking);
        assert_eq!(cfg.dims().unwrap().mlp_hidden, 16);
        let again = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(again.to_text(), cfg.to_text());
        assert_eq!(again.train, cfg.train);
        assert_eq!(again.ratings, cfg.ratings);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(matches!(
            RunConfig::parse("colour=blue"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            RunConfig::parse("epochs=many"),
            Err(ConfigError::InvalidValue { .. })
        ));
        assert!(matches!(
            RunConfig::parse("epochs"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn validation_catches_ranking_threshold_outside_scale() {
        let cfg = RunConfig::parse("task=ranking\nthreshold=7").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::parse("task=ranking\nthreshold=4").unwrap();
        assert!(cfg.validate().is_ok());
        assert!(RunConfig::parse("test_fraction=1").unwrap().validate().is_err());
        assert!(RunConfig::parse("r_min=5\nr_max=1").unwrap().validate().is_err());
    }

    #[test]
    fn every_key_is_settable() {
        let cfg = RunConfig::default();
        for key in KEYS {
            let mut c = RunConfig::default();
            c.set(key, &cfg.get(key)).unwrap();
        }
    }
}
