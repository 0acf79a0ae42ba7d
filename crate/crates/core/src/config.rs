//! Engine settings, read from a TOML or JSON file and overridden by
//! `SEQLOD_*` environment variables.
//!
//! | key                       | variable                          | default |
//! |---------------------------|-----------------------------------|---------|
//! | `q`                       | `SEQLOD_Q`                        | 1       |
//! | `gap_open_penalty`        | `SEQLOD_GAP_OPEN_PENALTY`         | 0.8     |
//! | `match_score`             | `SEQLOD_MATCH_SCORE`              | 3       |
//! | `mismatch_score`          | `SEQLOD_MISMATCH_SCORE`           | -1      |
//! | `small_cluster_threshold` | `SEQLOD_SMALL_CLUSTER_THRESHOLD`  | 0.01    |
//! | `default_itau`            | `SEQLOD_DEFAULT_ITAU`             | 0.6     |
//! | `max_recommendations`     | `SEQLOD_MAX_RECOMMENDATIONS`      | 10      |
//! | `memo_capacity`           | `SEQLOD_MEMO_CAPACITY`            | 4096    |
//! | `silhouette_weighting`    | `SEQLOD_SILHOUETTE_WEIGHTING`     | unweighted |
//! | `bin_width`               | `SEQLOD_BIN_WIDTH`                | auto    |
//!
//! Per-attribute bin widths live in the `[bin_widths]` table of the file.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::AlignParams;
use crate::analytics::BinRule;
use crate::distance::SequenceMetric;
use crate::quality::{Weighting, DEFAULT_MAX_RECOMMENDATIONS};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config file: {0}")]
    Parse(String),
    #[error("invalid value `{value}` for {key}")]
    BadValue { key: String, value: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub q: usize,
    pub gap_open_penalty: f64,
    pub match_score: f64,
    pub mismatch_score: f64,
    pub small_cluster_threshold: f64,
    pub default_itau: f64,
    pub max_recommendations: usize,
    /// Entries in the per-(node, threshold) simplification memo.
    pub memo_capacity: usize,
    pub silhouette_weighting: Weighting,
    /// Default numeric bin width; `None` picks one automatically.
    pub bin_width: Option<f64>,
    pub bin_widths: BTreeMap<String, f64>,
}

impl Default for Config {
    fn default() -> Self {
        let p = AlignParams::default();
        Config {
            q: 1,
            gap_open_penalty: p.gap_open_penalty,
            match_score: p.match_score,
            mismatch_score: p.mismatch_score,
            small_cluster_threshold: 0.01,
            default_itau: 0.6,
            max_recommendations: DEFAULT_MAX_RECOMMENDATIONS,
            memo_capacity: 4096,
            silhouette_weighting: Weighting::Unweighted,
            bin_width: None,
            bin_widths: BTreeMap::new(),
        }
    }
}

pub const ENV_PREFIX: &str = "SEQLOD_";

impl Config {
    pub fn metric(&self) -> SequenceMetric {
        SequenceMetric::QgramCosine { q: self.q }
    }

    pub fn align_params(&self) -> AlignParams {
        AlignParams {
            gap_open_penalty: self.gap_open_penalty,
            match_score: self.match_score,
            mismatch_score: self.mismatch_score,
        }
    }

    pub fn bin_rule(&self, attribute: &str) -> BinRule {
        match self.bin_widths.get(attribute).copied().or(self.bin_width) {
            Some(w) => BinRule::Fixed(w),
            None => BinRule::FreedmanDiaconis,
        }
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: Config = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies `SEQLOD_*` overrides from the process environment.
    pub fn with_env(self) -> Result<Self, ConfigError> {
        self.with_vars(std::env::vars())
    }

    /// Applies `SEQLOD_*` overrides from `vars`; other keys are ignored.
    pub fn with_vars<I, K, V>(mut self, vars: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (key, value) in vars {
            let Some(name) = key.as_ref().strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let raw = value.as_ref().trim();
            let bad = || ConfigError::BadValue {
                key: key.as_ref().to_owned(),
                value: raw.to_owned(),
            };
            let float = || raw.parse::<f64>().map_err(|_| bad());
            let int = || raw.parse::<usize>().map_err(|_| bad());
            match name {
                "Q" => self.q = int()?,
                "GAP_OPEN_PENALTY" => self.gap_open_penalty = float()?,
                "MATCH_SCORE" => self.match_score = float()?,
                "MISMATCH_SCORE" => self.mismatch_score = float()?,
                "SMALL_CLUSTER_THRESHOLD" => self.small_cluster_threshold = float()?,
                "DEFAULT_ITAU" => self.default_itau = float()?,
                "MAX_RECOMMENDATIONS" => self.max_recommendations = int()?,
                "MEMO_CAPACITY" => self.memo_capacity = int()?,
                "SILHOUETTE_WEIGHTING" => {
                    self.silhouette_weighting = match raw.to_ascii_lowercase().as_str() {
                        "unweighted" => Weighting::Unweighted,
                        "frequency" => Weighting::Frequency,
                        _ => return Err(bad()),
                    }
                }
                "BIN_WIDTH" => {
                    self.bin_width = if raw.eq_ignore_ascii_case("auto") {
                        None
                    } else {
                        Some(float()?)
                    }
                }
                _ => {}
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, value: String| {
            Err(ConfigError::BadValue {
                key: key.into(),
                value,
            })
        };
        if self.q == 0 {
            return bad("q", "0".into());
        }
        if self.align_params().validate().is_err() {
            return bad(
                "align params",
                format!(
                    "{}/{}/{}",
                    self.gap_open_penalty, self.match_score, self.mismatch_score
                ),
            );
        }
        if !(0.0..=1.0).contains(&self.small_cluster_threshold) {
            return bad("small_cluster_threshold", self.small_cluster_threshold.to_string());
        }
        if !(0.0..=1.0).contains(&self.default_itau) {
            return bad("default_itau", self.default_itau.to_string());
        }
        if self.max_recommendations == 0 {
            return bad("max_recommendations", "0".into());
        }
        for (name, w) in self
            .bin_width
            .iter()
            .map(|w| ("bin_width", *w))
            .chain(self.bin_widths.iter().map(|(k, w)| (k.as_str(), *w)))
        {
            if !(w > 0.0 && w.is_finite()) {
                return bad(name, w.to_string());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = Config::default();
        assert_eq!(c.align_params(), AlignParams::default());
        assert_eq!(c.metric(), SequenceMetric::QgramCosine { q: 1 });
        assert_eq!(c.bin_rule("age"), BinRule::FreedmanDiaconis);
        c.validate().unwrap();
    }

    #[test]
    fn toml_and_json_files() {
        let c = Config::parse("q = 2\ndefault_itau = 0.4\n[bin_widths]\nage = 10.0\n").unwrap();
        assert_eq!(c.q, 2);
        assert_eq!(c.default_itau, 0.4);
        assert_eq!(c.bin_rule("age"), BinRule::Fixed(10.0));
        assert_eq!(c.bin_rule("weight"), BinRule::FreedmanDiaconis);
        let j = Config::parse(r#"{"memo_capacity": 8, "silhouette_weighting": "frequency"}"#).unwrap();
        assert_eq!(j.memo_capacity, 8);
        assert_eq!(j.silhouette_weighting, Weighting::Frequency);
        assert!(Config::parse("nonsense = 1").is_err());
        assert!(Config::parse("default_itau = 1.5").is_err());
    }

    #[test]
    fn environment_overrides() {
        let c = Config::default()
            .with_vars([
                ("SEQLOD_Q", "3"),
                ("SEQLOD_GAP_OPEN_PENALTY", "1.5"),
                ("SEQLOD_BIN_WIDTH", "5"),
                ("SEQLOD_SILHOUETTE_WEIGHTING", "Frequency"),
                ("HOME", "/root"),
            ])
            .unwrap();
        assert_eq!(c.q, 3);
        assert_eq!(c.gap_open_penalty, 1.5);
        assert_eq!(c.bin_rule("x"), BinRule::Fixed(5.0));
        assert_eq!(c.silhouette_weighting, Weighting::Frequency);
        assert!(Config::default().with_vars([("SEQLOD_Q", "zero")]).is_err());
        assert!(Config::default().with_vars([("SEQLOD_Q", "0")]).is_err());
        assert!(Config::default().with_vars([("SEQLOD_BIN_WIDTH", "-1")]).is_err());
    }
}
