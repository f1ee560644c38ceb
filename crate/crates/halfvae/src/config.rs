//! Experiment configuration: one JSON document drives the whole
//! generate/train/evaluate pipeline.
//!
//! Every field has a documented default except the seed, which must be given
//! explicitly (in the file or as `--seed`) so no run ever silently reuses a
//! default stream.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::models::ModelKind;
use crate::synth::{default_source_kinds, MixingKind, SourceKind, SourceSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Number of independent components.
    #[serde(default = "defaults::n")]
    pub n: usize,
    /// Number of observed channels; must be at least `n`.
    #[serde(default = "defaults::m")]
    pub m: usize,
    /// Series length.
    #[serde(default = "defaults::l")]
    pub l: usize,
    /// Gaussian components per prior mixture.
    #[serde(default = "defaults::k")]
    pub k: usize,
    #[serde(default = "defaults::model")]
    pub model: ModelKind,
    /// KL weight in the loss.
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
    /// Ramp the KL weight from 0 over the first 10% of epochs.
    #[serde(default = "defaults::yes")]
    pub lambda_warmup: bool,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    /// Reparameterized draws per training step.
    #[serde(default = "defaults::train_samples")]
    pub train_samples: usize,
    /// Draws for the low-noise loss evaluation in reports.
    #[serde(default = "defaults::eval_samples")]
    pub eval_samples: usize,
    /// Required at run time; `--seed` overrides the file value.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Hidden layer widths shared by decoder and encoder.
    #[serde(default = "defaults::hidden_dims")]
    pub hidden_dims: Vec<usize>,
    /// One distribution per component; defaults to the documented triple
    /// cycled to length `n`.
    #[serde(default)]
    pub source_specs: Option<Vec<SourceKind>>,
    #[serde(default = "defaults::mixing")]
    pub mixing_kind: MixingKind,
}

mod defaults {
    use crate::models::ModelKind;
    use crate::synth::MixingKind;

    pub fn n() -> usize {
        3
    }
    pub fn m() -> usize {
        3
    }
    pub fn l() -> usize {
        500
    }
    pub fn k() -> usize {
        3
    }
    pub fn model() -> ModelKind {
        ModelKind::HalfVae
    }
    pub fn lambda() -> f64 {
        1.0
    }
    pub fn yes() -> bool {
        true
    }
    pub fn epochs() -> usize {
        3000
    }
    pub fn learning_rate() -> f64 {
        1e-2
    }
    pub fn train_samples() -> usize {
        8
    }
    pub fn eval_samples() -> usize {
        1024
    }
    pub fn hidden_dims() -> Vec<usize> {
        vec![32, 32]
    }
    pub fn mixing() -> MixingKind {
        MixingKind::Linear
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: defaults::n(),
            m: defaults::m(),
            l: defaults::l(),
            k: defaults::k(),
            model: defaults::model(),
            lambda: defaults::lambda(),
            lambda_warmup: defaults::yes(),
            epochs: defaults::epochs(),
            learning_rate: defaults::learning_rate(),
            train_samples: defaults::train_samples(),
            eval_samples: defaults::eval_samples(),
            seed: None,
            hidden_dims: defaults::hidden_dims(),
            source_specs: None,
            mixing_kind: defaults::mixing(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Rejects every invariant violation with a field-specific message.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n: must be at least 1".into()));
        }
        if self.m < self.n {
            return Err(Error::Config(format!(
                "m: {} observed channels for {} components is underdetermined; m must be >= n",
                self.m, self.n
            )));
        }
        if self.l == 0 {
            return Err(Error::Config("l: must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k: must be at least 1".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda: must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs: must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate: must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.train_samples == 0 {
            return Err(Error::Config("train_samples: must be at least 1".into()));
        }
        if self.eval_samples == 0 {
            return Err(Error::Config("eval_samples: must be at least 1".into()));
        }
        if self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(
                "hidden_dims: layer widths must be at least 1".into(),
            ));
        }
        if let Some(specs) = &self.source_specs {
            if specs.len() != self.n {
                return Err(Error::Config(format!(
                    "source_specs: {} entries for n = {} components",
                    specs.len(),
                    self.n
                )));
            }
            for (i, kind) in specs.iter().enumerate() {
                kind.validate()
                    .map_err(|e| Error::Config(format!("source_specs[{i}]: {e}")))?;
            }
        }
        Ok(())
    }

    /// Seed resolution: an explicit CLI seed wins over the file value;
    /// having neither is a config error.
    pub fn resolved_seed(&self, cli_seed: Option<u64>) -> Result<u64> {
        cli_seed.or(self.seed).ok_or_else(|| {
            Error::Config("seed: required; pass --seed or set \"seed\" in the config".into())
        })
    }

    /// Source specs with the configured length, cycling the default triple
    /// when none are given.
    pub fn source_specs(&self) -> Vec<SourceSpec> {
        let kinds = self
            .source_specs
            .clone()
            .unwrap_or_else(|| default_source_kinds(self.n));
        kinds
            .into_iter()
            .map(|kind| SourceSpec {
                kind,
                length: self.l,
            })
            .collect()
    }

    /// SHA-256 of the canonical JSON of this config with the seed resolved;
    /// identifies a run in checkpoints, reports, and metrics.
    pub fn hash_with_seed(&self, seed: u64) -> String {
        let mut canonical = self.clone();
        canonical.seed = Some(seed);
        let json = serde_json::to_string(&canonical).expect("config always serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.n, 3);
        assert_eq!(c.epochs, 3000);
        assert_eq!(c.source_specs().len(), 3);
    }

    #[test]
    fn underdetermined_names_the_field() {
        let c = ExperimentConfig {
            m: 2,
            ..Default::default()
        };
        let err = c.validate().unwrap_err();
        assert!(matches!(&err, Error::Config(msg) if msg.starts_with("m:")), "{err}");
    }

    #[test]
    fn every_field_violation_is_named() {
        let base = ExperimentConfig::default;
        let cases: Vec<(ExperimentConfig, &str)> = vec![
            (ExperimentConfig { n: 0, ..base() }, "n:"),
            (ExperimentConfig { l: 0, ..base() }, "l:"),
            (ExperimentConfig { k: 0, ..base() }, "k:"),
            (ExperimentConfig { lambda: -1.0, ..base() }, "lambda:"),
            (ExperimentConfig { epochs: 0, ..base() }, "epochs:"),
            (ExperimentConfig { learning_rate: 0.0, ..base() }, "learning_rate:"),
            (ExperimentConfig { train_samples: 0, ..base() }, "train_samples:"),
            (ExperimentConfig { eval_samples: 0, ..base() }, "eval_samples:"),
            (ExperimentConfig { hidden_dims: vec![8, 0], ..base() }, "hidden_dims:"),
            (
                ExperimentConfig {
                    source_specs: Some(vec![SourceKind::Laplace {
                        location: 0.0,
                        scale: 1.0,
                    }]),
                    ..base()
                },
                "source_specs:",
            ),
        ];
        for (config, field) in cases {
            let err = config.validate().unwrap_err();
            assert!(
                matches!(&err, Error::Config(msg) if msg.starts_with(field)),
                "expected {field} in: {err}"
            );
        }
    }

    #[test]
    fn seed_resolution_prefers_cli() {
        let c = ExperimentConfig {
            seed: Some(5),
            ..Default::default()
        };
        assert_eq!(c.resolved_seed(Some(9)).unwrap(), 9);
        assert_eq!(c.resolved_seed(None).unwrap(), 5);
        let none = ExperimentConfig::default();
        assert!(matches!(none.resolved_seed(None), Err(Error::Config(_))));
    }

    #[test]
    fn hash_depends_on_seed_and_fields() {
        let c = ExperimentConfig::default();
        assert_eq!(c.hash_with_seed(1), c.hash_with_seed(1));
        assert_ne!(c.hash_with_seed(1), c.hash_with_seed(2));
        let d = ExperimentConfig {
            epochs: 10,
            ..Default::default()
        };
        assert_ne!(c.hash_with_seed(1), d.hash_with_seed(1));
    }

    #[test]
    fn json_roundtrip_and_unknown_fields() {
        let text = r#"{"model": "vae_gmm", "seed": 3, "epochs": 50}"#;
        let c: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(c.model, ModelKind::VaeGmm);
        assert_eq!(c.epochs, 50);
        assert_eq!(c.l, 500);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"epoch": 50}"#).is_err());
    }
}
