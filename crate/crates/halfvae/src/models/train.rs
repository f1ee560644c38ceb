//! Full-batch training loop: one global Adam step per epoch over every
//! trainable parameter group.
//!
//! The whole observation matrix is one batch because the latent bank ties
//! parameters to specific columns; minibatching columns would update only
//! slices of the bank. At the sizes this toolkit targets, full batch is also
//! the fastest option.

use super::{draw_noise, Model};
use crate::diffengine::{AdamHyper, AdamState, Matrix};
use crate::rng::{seeded, stream};
use crate::{Error, Result};

/// Settings of one training run.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: usize,
    pub hyper: AdamHyper,
    /// Reparameterized draws per step; the same draws feed the
    /// reconstruction and KL terms.
    pub train_samples: usize,
    /// Ramp the KL weight linearly from 0 over the first 10% of epochs.
    pub lambda_warmup: bool,
    /// Record the posterior means every this many epochs.
    pub snapshot_every: Option<usize>,
    pub seed: u64,
}

/// Loss breakdown of one epoch, recorded before the optimizer step.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
    /// Effective KL weight this epoch (after warm-up).
    pub lambda: f64,
}

/// Per-epoch records plus any posterior-mean snapshots taken along the way.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<EpochRecord>,
    pub snapshots: Vec<(usize, Matrix)>,
}

/// Trains `model` in place on `x`; deterministic per seed.
pub fn train(model: &mut Model, x: &Matrix, opts: &TrainOptions) -> Result<TrainOutcome> {
    if opts.epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    if opts.train_samples == 0 {
        return Err(Error::Config("train_samples must be at least 1".into()));
    }
    let mut rng = seeded(opts.seed, stream::TRAIN_NOISE);
    let n = model.latent_dim();
    let l = x.cols();
    let base_lambda = model.lambda();
    let warmup_epochs = (opts.epochs as f64 * 0.1).ceil().max(1.0);

    let mut flat = model.flat_params();
    let mut adam = AdamState::new(flat.len(), opts.hyper);
    let mut records = Vec::with_capacity(opts.epochs);
    let mut snapshots = Vec::new();

    for epoch in 0..opts.epochs {
        let lambda = if opts.lambda_warmup {
            base_lambda * (epoch as f64 / warmup_epochs).min(1.0)
        } else {
            base_lambda
        };
        let noise = draw_noise(n, l, opts.train_samples, &mut rng);
        let (breakdown, grads) = model
            .loss_flat(x, &noise, lambda)
            .map_err(|e| at_epoch(epoch, e))?;
        records.push(EpochRecord {
            epoch,
            total: breakdown.total,
            reconstruction: breakdown.reconstruction,
            kl: breakdown.kl,
            lambda,
        });
        adam.step(&mut flat, &grads).map_err(|e| at_epoch(epoch, e))?;
        model.read_flat(&flat)?;

        if let Some(every) = opts.snapshot_every {
            if every > 0 && (epoch + 1) % every == 0 {
                let (means, _) = model.posterior(x)?;
                snapshots.push((epoch + 1, means));
            }
        }
    }
    Ok(TrainOutcome { records, snapshots })
}

fn at_epoch(epoch: usize, e: Error) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}: {msg}")),
        other => other,
    }
}
