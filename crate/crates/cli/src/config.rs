//! Line-oriented `key = value` experiment settings.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rmn::model::{Direction, SharedWeightForm};
use rmn::trainer::{Schedule, TrainConfig};
use rmn::RMNConfig;

use crate::CliError;

const KEYS: &[&str] = &[
    // model
    "input_dim",
    "wide_dim",
    "memory_dim",
    "num_memory_layers",
    "num_classes",
    "direction",
    "shared_weight_form",
    "residual_interval",
    "delay_enabled",
    "splice_left",
    "splice_right",
    // training
    "schedule",
    "base_lr",
    "peak_lr",
    "ramp_epochs",
    "halve_factor",
    "momentum",
    "l2",
    "max_utts_per_batch",
    "truncation_chunk",
    "max_epochs",
    "seed",
    // data and output
    "train_data",
    "valid_data",
    "normalize",
    "exclude_class",
    "out_dir",
];

/// Raw settings in file order, later assignments winning.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut s = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("line {}: expected `key = value`, found `{line}`", i + 1))
            })?;
            s.set(k.trim(), v.trim())
                .map_err(|e| CliError::Usage(format!("line {}: {e}", i + 1)))?;
        }
        Ok(s)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let key = key.replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(format!("unknown key `{key}`"));
        }
        if value.is_empty() {
            return Err(format!("empty value for `{key}`"));
        }
        self.values.insert(key, value.to_string());
        Ok(())
    }

    /// Applies `--key value` pairs.
    pub fn apply_overrides(&mut self, args: &[String]) -> Result<(), CliError> {
        let mut it = args.iter();
        while let Some(flag) = it.next() {
            let key = flag
                .strip_prefix("--")
                .ok_or_else(|| CliError::Usage(format!("expected `--key value`, found `{flag}`")))?;
            let (key, value) = match key.split_once('=') {
                Some((k, v)) => (k, v.to_string()),
                None => {
                    let v = it
                        .next()
                        .ok_or_else(|| CliError::Usage(format!("missing value for `--{key}`")))?;
                    (key, v.clone())
                }
            };
            self.set(key, &value).map_err(CliError::Usage)?;
        }
        Ok(())
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("bad value `{v}` for `{key}`: {e}")))
            })
            .transpose()
    }

    fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// `none` or a count.
    fn get_optional_count(&self, key: &str, default: Option<usize>) -> Result<Option<usize>, CliError> {
        match self.values.get(key).map(String::as_str) {
            None => Ok(default),
            Some("none") => Ok(None),
            Some(_) => Ok(Some(self.get::<usize>(key)?.expect("present"))),
        }
    }

    fn get_bool(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.values.get(key).map(String::as_str) {
            None => Ok(default),
            Some("true" | "on" | "yes" | "1") => Ok(true),
            Some("false" | "off" | "no" | "0") => Ok(false),
            Some(v) => Err(CliError::Usage(format!("bad value `{v}` for `{key}`: expected true or false"))),
        }
    }

    fn get_path(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(PathBuf::from)
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn require(&self, keys: &[&str]) -> Result<(), CliError> {
        let missing: Vec<&str> = keys
            .iter()
            .copied()
            .filter(|k| !self.values.contains_key(*k))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(format!("missing required keys: {}", missing.join(", "))))
        }
    }

    /// Model settings; `input_dim` and `num_classes` fall back to the given
    /// values (typically taken from the training corpus).
    pub fn model(&self, input_dim: Option<usize>, num_classes: Option<usize>) -> Result<RMNConfig, CliError> {
        let d = RMNConfig::default();
        let splice_left = self.get_or("splice_left", d.splice_left)?;
        let splice_right = self.get_or("splice_right", d.splice_right)?;
        let input_dim = match (self.get::<usize>("input_dim")?, input_dim) {
            (Some(v), _) => v,
            (None, Some(raw)) => raw * (1 + splice_left + splice_right),
            (None, None) => return Err(CliError::Usage("missing required key: input_dim".into())),
        };
        let num_classes = match (self.get::<usize>("num_classes")?, num_classes) {
            (Some(v), _) => v,
            (None, Some(k)) => k,
            (None, None) => return Err(CliError::Usage("missing required key: num_classes".into())),
        };
        let config = RMNConfig {
            input_dim,
            wide_dim: self.get_or("wide_dim", d.wide_dim)?,
            memory_dim: self.get_or("memory_dim", d.memory_dim)?,
            num_memory_layers: self.get_or("num_memory_layers", d.num_memory_layers)?,
            num_classes,
            direction: self.get_or::<Direction>("direction", d.direction)?,
            shared_weight_form: self.get_or::<SharedWeightForm>("shared_weight_form", d.shared_weight_form)?,
            residual_interval: self.get_optional_count("residual_interval", d.residual_interval)?,
            delay_enabled: self.get_bool("delay_enabled", d.delay_enabled)?,
            splice_left,
            splice_right,
        };
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }

    pub fn train(&self) -> Result<TrainConfig, CliError> {
        let d = TrainConfig::default();
        let config = TrainConfig {
            schedule: self.get_or::<Schedule>("schedule", d.schedule)?,
            base_lr: self.get_or("base_lr", d.base_lr)?,
            peak_lr: self.get_or("peak_lr", d.peak_lr)?,
            ramp_epochs: self.get_or("ramp_epochs", d.ramp_epochs)?,
            halve_factor: self.get_or("halve_factor", d.halve_factor)?,
            momentum: self.get_or("momentum", d.momentum)?,
            l2: self.get_or("l2", d.l2)?,
            max_utts_per_batch: self.get_or("max_utts_per_batch", d.max_utts_per_batch)?,
            truncation_chunk: self.get_optional_count("truncation_chunk", d.truncation_chunk)?,
            max_epochs: self.get_or("max_epochs", d.max_epochs)?,
            seed: self.get_or("seed", d.seed)?,
        };
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }

    pub fn train_data(&self) -> Option<PathBuf> {
        self.get_path("train_data")
    }

    pub fn valid_data(&self) -> Option<PathBuf> {
        self.get_path("valid_data")
    }

    pub fn out_dir(&self) -> Option<PathBuf> {
        self.get_path("out_dir")
    }

    pub fn normalize(&self) -> Result<bool, CliError> {
        self.get_bool("normalize", false)
    }

    pub fn exclude_class(&self) -> Result<Option<usize>, CliError> {
        self.get("exclude_class")
    }
}
