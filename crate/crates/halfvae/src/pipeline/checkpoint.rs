//! Self-describing model checkpoints.
//!
//! Checkpoints store the raw (unconstrained) parameters of every trainable
//! group plus the run's shape and identity, so training can resume exactly
//! and evaluation can verify it is looking at the right artifacts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::diffengine::MlpParams;
use crate::distributions::GmmPrior;
use crate::models::{HalfVaeModel, LatentBank, Model, ModelKind, VaeModel};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: ModelKind,
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub k: usize,
    pub lambda: f64,
    pub hidden_dims: Vec<usize>,
    pub seed: u64,
    pub config_hash: String,
    pub decoder: MlpParams,
    /// Present for the encoder-free model.
    pub bank: Option<LatentBank>,
    /// Present for the encoder variants.
    pub encoder: Option<MlpParams>,
    /// Present when the prior is a trainable mixture.
    pub priors: Option<Vec<GmmPrior>>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, config: &ExperimentConfig, seed: u64) -> Self {
        let (bank, encoder, priors, decoder, lambda) = match model {
            Model::HalfVae(m) => (
                Some(m.bank.clone()),
                None,
                Some(m.priors.clone()),
                m.decoder.clone(),
                m.lambda,
            ),
            Model::Vae(m) => (
                None,
                Some(m.encoder.clone()),
                m.priors.clone(),
                m.decoder.clone(),
                m.lambda,
            ),
        };
        Checkpoint {
            model: model.kind(),
            n: config.n,
            m: config.m,
            l: config.l,
            k: config.k,
            lambda,
            hidden_dims: config.hidden_dims.clone(),
            seed,
            config_hash: config.hash_with_seed(seed),
            decoder,
            bank,
            encoder,
            priors,
        }
    }

    /// Reassembles the model, cross-checking the stored shapes.
    pub fn to_model(&self) -> Result<Model> {
        let model = match self.model {
            ModelKind::HalfVae => {
                let bank = self
                    .bank
                    .clone()
                    .ok_or_else(|| Error::Config("checkpoint: half_vae needs a bank".into()))?;
                let priors = self
                    .priors
                    .clone()
                    .ok_or_else(|| Error::Config("checkpoint: half_vae needs priors".into()))?;
                if bank.component_count() != self.n || bank.length() != self.l {
                    return Err(Error::Config(format!(
                        "checkpoint: bank is {}x{} but header says {}x{}",
                        bank.component_count(),
                        bank.length(),
                        self.n,
                        self.l
                    )));
                }
                let m = HalfVaeModel {
                    bank,
                    decoder: self.decoder.clone(),
                    priors,
                    lambda: self.lambda,
                };
                m.validate()?;
                Model::HalfVae(m)
            }
            ModelKind::VaeGmm | ModelKind::VanillaVae => {
                let encoder = self
                    .encoder
                    .clone()
                    .ok_or_else(|| Error::Config("checkpoint: vae needs an encoder".into()))?;
                let priors = match self.model {
                    ModelKind::VaeGmm => Some(self.priors.clone().ok_or_else(|| {
                        Error::Config("checkpoint: vae_gmm needs priors".into())
                    })?),
                    _ => None,
                };
                let m = VaeModel {
                    encoder,
                    decoder: self.decoder.clone(),
                    priors,
                    lambda: self.lambda,
                };
                m.validate()?;
                Model::Vae(m)
            }
        };
        if model.latent_dim() != self.n || model.observed_dim() != self.m {
            return Err(Error::Config(format!(
                "checkpoint: model is {}x{} but header says n={} m={}",
                model.latent_dim(),
                model.observed_dim(),
                self.n,
                self.m
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        json.push('\n');
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_roundtrips_every_variant() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            l: 12,
            hidden_dims: vec![6],
            ..Default::default()
        };
        for kind in [ModelKind::HalfVae, ModelKind::VaeGmm, ModelKind::VanillaVae] {
            let model = Model::init(kind, 3, 3, 12, 3, &[6], 1.0, 9).unwrap();
            let ckpt = Checkpoint::from_model(&model, &config, 9);
            let path = dir.path().join(format!("{kind}.json"));
            ckpt.save(&path).unwrap();
            let back = Checkpoint::load(&path).unwrap();
            assert_eq!(back, ckpt);
            assert_eq!(back.to_model().unwrap(), model);
        }
    }

    #[test]
    fn header_shape_mismatch_is_rejected() {
        let config = ExperimentConfig {
            l: 12,
            hidden_dims: vec![6],
            ..Default::default()
        };
        let model = Model::init(ModelKind::HalfVae, 3, 3, 12, 3, &[6], 1.0, 9).unwrap();
        let mut ckpt = Checkpoint::from_model(&model, &config, 9);
        ckpt.n = 4;
        assert!(matches!(ckpt.to_model(), Err(Error::Config(_))));
    }
}
