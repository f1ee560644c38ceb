//! Encoder-based baselines: a VAE with the same trainable GMM priors as the
//! encoder-free model, and a vanilla variant with a fixed standard-normal
//! prior and closed-form KL.

use super::bank::{sigmoid, softplus, SIGMA_FLOOR};
use super::half_vae::default_prior;
use super::{LossBreakdown, ModelDims};
use crate::diffengine::{Activation, Matrix, MlpGrads, MlpParams};
use crate::distributions::{GmmGrads, GmmPrior};
use crate::divergence::{kl_entry_with_grad, kl_gauss_std_normal_with_grad, reconstruction_nll};
use crate::rng::{seeded, stream};
use crate::{Error, Result};

/// Encoder/decoder model. `priors: Some(..)` pairs each latent component
/// with a trainable GMM; `None` is the vanilla variant with a fixed
/// standard-normal prior.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub encoder: MlpParams,
    pub decoder: MlpParams,
    pub priors: Option<Vec<GmmPrior>>,
    pub lambda: f64,
}

/// Gradients for every trainable group of a [`VaeModel`].
#[derive(Debug, Clone)]
pub struct VaeGrads {
    pub encoder: MlpGrads,
    pub decoder: MlpGrads,
    pub priors: Vec<GmmGrads>,
}

/// Per-column posterior produced by the encoder: means and the constrained
/// per-entry standard deviations.
#[derive(Debug, Clone)]
pub struct EncodedPosterior {
    pub means: Matrix,
    pub sigmas: Matrix,
}

impl VaeModel {
    /// Fresh model with an `m -> 2n` encoder (means stacked over raw
    /// spreads), an `n -> m` decoder, and either `k`-component priors or the
    /// vanilla standard-normal prior. Both nets share the hidden topology.
    pub fn init(
        n: usize,
        m: usize,
        k: Option<usize>,
        hidden_dims: &[usize],
        lambda: f64,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if m < n {
            return Err(Error::Unsupported(format!(
                "underdetermined separation: m = {m} observed channels < n = {n} components"
            )));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
        }
        if k == Some(0) {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let mut rng = seeded(seed, stream::MODEL_INIT);
        let mut enc_dims = Vec::with_capacity(hidden_dims.len() + 2);
        enc_dims.push(m);
        enc_dims.extend_from_slice(hidden_dims);
        enc_dims.push(2 * n);
        let encoder = MlpParams::xavier(&enc_dims, Activation::Tanh, &mut rng)?;

        let mut dec_dims = Vec::with_capacity(hidden_dims.len() + 2);
        dec_dims.push(n);
        dec_dims.extend_from_slice(hidden_dims);
        dec_dims.push(m);
        let decoder = MlpParams::xavier(&dec_dims, Activation::Tanh, &mut rng)?;

        let priors = k.map(|k| (0..n).map(|_| default_prior(k)).collect());
        Ok(VaeModel {
            encoder,
            decoder,
            priors,
            lambda,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder.in_dim()
    }

    pub fn observed_dim(&self) -> usize {
        self.decoder.out_dim()
    }

    pub fn dims_for(&self, x: &Matrix) -> ModelDims {
        ModelDims {
            latent: self.latent_dim(),
            observed: self.observed_dim(),
            length: x.cols(),
        }
    }

    pub fn is_vanilla(&self) -> bool {
        self.priors.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.latent_dim();
        if self.encoder.out_dim() != 2 * n {
            return Err(Error::Shape(format!(
                "encoder output dim {} must be 2n = {}",
                self.encoder.out_dim(),
                2 * n
            )));
        }
        if self.encoder.in_dim() != self.decoder.out_dim() {
            return Err(Error::Shape(format!(
                "encoder input dim {} must match decoder output dim {}",
                self.encoder.in_dim(),
                self.decoder.out_dim()
            )));
        }
        if self.decoder.out_dim() < n {
            return Err(Error::Unsupported(format!(
                "underdetermined separation: m = {} < n = {n}",
                self.decoder.out_dim()
            )));
        }
        if let Some(priors) = &self.priors {
            if priors.len() != n {
                return Err(Error::Shape(format!(
                    "{} priors for {} components",
                    priors.len(),
                    n
                )));
            }
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count()
            + self.decoder.param_count()
            + self
                .priors
                .iter()
                .flatten()
                .map(|p| p.param_count())
                .sum::<usize>()
    }

    /// Canonical flat order: encoder, decoder, then each prior.
    pub fn append_flat(&self, out: &mut Vec<f64>) {
        self.encoder.append_flat(out);
        self.decoder.append_flat(out);
        for p in self.priors.iter().flatten() {
            p.append_flat(out);
        }
    }

    pub fn read_flat(&mut self, flat: &[f64]) -> Result<usize> {
        let mut off = self.encoder.read_flat(flat)?;
        off += self.decoder.read_flat(&flat[off..])?;
        for p in self.priors.iter_mut().flatten() {
            off += p.read_flat(&flat[off..])?;
        }
        Ok(off)
    }

    /// Runs the encoder and splits its output into per-column posterior
    /// means (rows `0..n`) and constrained spreads (softplus of rows
    /// `n..2n`, floored).
    pub fn encode(&self, x: &Matrix) -> Result<EncodedPosterior> {
        let (out, _) = self.encoder.forward(x)?;
        Ok(split_encoder_output(&out, self.latent_dim()))
    }

    /// Loss and gradients of the frozen-noise objective: reconstruction
    /// through reparameterized samples of the encoded posterior plus
    /// `lambda` times the KL to the prior (Monte-Carlo for GMM priors,
    /// closed form for the vanilla variant).
    pub fn loss_with_grad(
        &self,
        x: &Matrix,
        noise: &[Matrix],
        lambda: f64,
    ) -> Result<(LossBreakdown, VaeGrads)> {
        self.validate()?;
        let n = self.latent_dim();
        let l = x.cols();
        if x.rows() != self.observed_dim() {
            return Err(Error::Shape(format!(
                "data has {} rows, model expects {}",
                x.rows(),
                self.observed_dim()
            )));
        }
        if noise.is_empty() {
            return Err(Error::Domain("need at least one noise draw".into()));
        }
        for eps in noise {
            if eps.rows() != n || eps.cols() != l {
                return Err(Error::Shape(format!(
                    "noise draw is {}x{}, expected {n}x{l}",
                    eps.rows(),
                    eps.cols()
                )));
            }
        }
        if !(lambda >= 0.0) {
            return Err(Error::Domain(format!("lambda must be >= 0, got {lambda}")));
        }

        let s = noise.len();
        let inv_s = 1.0 / s as f64;
        let (enc_out, enc_cache) = self.encoder.forward(x)?;
        let posterior = split_encoder_output(&enc_out, n);

        let mut grads = VaeGrads {
            encoder: MlpGrads::zeros_like(&self.encoder),
            decoder: MlpGrads::zeros_like(&self.decoder),
            priors: self
                .priors
                .iter()
                .flatten()
                .map(|p| GmmGrads::zeros(p.component_count()))
                .collect(),
        };

        // Gradients w.r.t. the encoder outputs: means (rows 0..n) and raw
        // spreads (rows n..2n). The spread rows collect d/d sigma values and
        // get the softplus chain factor when assembled.
        let mut d_mu = Matrix::zeros(n, l);
        let mut d_sigma = Matrix::zeros(n, l);

        let mut recon_sum = 0.0;
        let mut z = Matrix::zeros(n, l);
        for eps in noise {
            for i in 0..n {
                let mu_row = posterior.means.row(i);
                let sig_row = posterior.sigmas.row(i);
                let eps_row = eps.row(i);
                let z_row = z.row_mut(i);
                for c in 0..l {
                    z_row[c] = mu_row[c] + sig_row[c] * eps_row[c];
                }
            }
            let (x_hat, cache) = self.decoder.forward(&z)?;
            recon_sum += reconstruction_nll(x, &x_hat)?;
            let mut upstream = x_hat;
            for (u, &t) in upstream.data_mut().iter_mut().zip(x.data()) {
                *u = (*u - t) * inv_s;
            }
            let dz = self.decoder.backward_accumulate(&cache, &upstream, &mut grads.decoder)?;
            for i in 0..n {
                let dz_row = dz.row(i);
                let eps_row = eps.row(i);
                let dmu_row = d_mu.row_mut(i);
                let dsig_row = d_sigma.row_mut(i);
                for c in 0..l {
                    dmu_row[c] += dz_row[c];
                    dsig_row[c] += dz_row[c] * eps_row[c];
                }
            }
        }
        let reconstruction = recon_sum * inv_s;
        if !reconstruction.is_finite() {
            return Err(Error::Numeric("reconstruction term is non-finite".into()));
        }

        // KL per entry: Monte-Carlo against the per-component GMM with the
        // same draws, or closed form against N(0,1) for the vanilla prior.
        let mut kl_per_component = Vec::with_capacity(n);
        let mut noise_buf = vec![0.0; s];
        let max_k = self
            .priors
            .iter()
            .flatten()
            .map(|p| p.component_count())
            .max()
            .unwrap_or(1);
        let mut exp_scratch = vec![0.0; max_k];
        for i in 0..n {
            let prepared = match &self.priors {
                Some(priors) => Some(priors[i].prepare()?),
                None => None,
            };
            let mut kl_i = 0.0;
            for c in 0..l {
                let mean = posterior.means.get(i, c);
                let sig = posterior.sigmas.get(i, c);
                let variance = sig * sig;
                let (value, d_mean, d_variance) = match &prepared {
                    Some(p) => {
                        for (si, eps) in noise.iter().enumerate() {
                            noise_buf[si] = eps.get(i, c);
                        }
                        let scratch = &mut exp_scratch[..p.component_count()];
                        let (est, d_mean, d_variance) = kl_entry_with_grad(
                            p,
                            mean,
                            variance,
                            &noise_buf,
                            &mut grads.priors[i],
                            scratch,
                        )?;
                        (est.value, d_mean, d_variance)
                    }
                    None => {
                        let (value, (d_mean, d_variance)) =
                            kl_gauss_std_normal_with_grad(mean, variance)?;
                        (value, d_mean, d_variance)
                    }
                };
                kl_i += value;
                d_mu.row_mut(i)[c] += lambda * d_mean;
                d_sigma.row_mut(i)[c] += lambda * d_variance * 2.0 * sig;
            }
            kl_per_component.push(kl_i);
            if let Some(g) = grads.priors.get_mut(i) {
                for group in [&mut g.raw_weights, &mut g.raw_means, &mut g.raw_log_scales] {
                    for v in group.iter_mut() {
                        *v *= lambda;
                    }
                }
            }
        }
        let kl: f64 = kl_per_component.iter().sum();
        if !kl.is_finite() {
            return Err(Error::Numeric("kl term is non-finite".into()));
        }

        // Assemble the encoder upstream: means rows take d_mu directly, raw
        // spread rows take d_sigma through the softplus chain.
        let mut upstream = Matrix::zeros(2 * n, l);
        for i in 0..n {
            let dmu_row = d_mu.row(i);
            let dsig_row = d_sigma.row(i);
            let raw_row = enc_out.row(n + i);
            for c in 0..l {
                upstream.row_mut(i)[c] = dmu_row[c];
                upstream.row_mut(n + i)[c] = dsig_row[c] * sigmoid(raw_row[c]);
            }
        }
        self.encoder
            .backward_accumulate(&enc_cache, &upstream, &mut grads.encoder)?;

        Ok((
            LossBreakdown {
                total: reconstruction + lambda * kl,
                reconstruction,
                kl,
                kl_per_component,
            },
            grads,
        ))
    }
}

fn split_encoder_output(out: &Matrix, n: usize) -> EncodedPosterior {
    let l = out.cols();
    let means = Matrix::from_fn(n, l, |i, c| out.get(i, c));
    let sigmas = Matrix::from_fn(n, l, |i, c| softplus(out.get(n + i, c)) + SIGMA_FLOOR);
    EncodedPosterior { means, sigmas }
}
