//! The encoder-free model: latent posterior parameters are trained directly.

use rand_distr::{Distribution, StandardNormal};

use super::bank::{rho_for_sigma, sigmoid, LatentBank};
use super::{LossBreakdown, ModelDims};
use crate::diffengine::{Activation, Matrix, MlpGrads, MlpParams};
use crate::distributions::{GmmGrads, GmmPrior};
use crate::divergence::{kl_entry_with_grad, reconstruction_nll};
use crate::rng::{seeded, stream};
use crate::{Error, Result};

/// Raw GMM means for one component's prior: evenly spaced over [-1, 1]
/// (a single component sits at 0).
pub fn default_prior_means(k: usize) -> Vec<f64> {
    if k == 1 {
        vec![0.0]
    } else {
        (0..k)
            .map(|i| -1.0 + 2.0 * i as f64 / (k - 1) as f64)
            .collect()
    }
}

/// One adaptive mixture prior: uniform weights, spread-out means, scale 0.5.
pub fn default_prior(k: usize) -> GmmPrior {
    GmmPrior::new(vec![0.0; k], default_prior_means(k), vec![0.5f64.ln(); k])
        .expect("default prior parameters are valid")
}

/// Encoder-free model: a trainable latent bank, a decoder, and one trainable
/// GMM prior per latent component.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfVaeModel {
    pub bank: LatentBank,
    pub decoder: MlpParams,
    pub priors: Vec<GmmPrior>,
    pub lambda: f64,
}

/// Gradients for every trainable group of a [`HalfVaeModel`].
#[derive(Debug, Clone)]
pub struct HalfVaeGrads {
    pub z_mu: Matrix,
    pub z_rho: Vec<f64>,
    pub decoder: MlpGrads,
    pub priors: Vec<GmmGrads>,
}

impl HalfVaeModel {
    /// Fresh model for separating `n` components from `m` channels over
    /// length `l`, with `k`-component priors. Deterministic per seed: latent
    /// means start near zero (sd 0.1), spreads at 0.1, decoder
    /// Xavier-uniform, priors at their documented defaults.
    pub fn init(
        n: usize,
        m: usize,
        l: usize,
        k: usize,
        hidden_dims: &[usize],
        lambda: f64,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 || l == 0 || k == 0 {
            return Err(Error::Config(
                "n, l, and k must all be at least 1".into(),
            ));
        }
        if m < n {
            return Err(Error::Unsupported(format!(
                "underdetermined separation: m = {m} observed channels < n = {n} components"
            )));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
        }
        let mut rng = seeded(seed, stream::MODEL_INIT);
        let z_mu = Matrix::from_fn(n, l, |_, _| {
            0.1 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let z_rho = vec![rho_for_sigma(0.1)?; n];
        let bank = LatentBank::new(z_mu, z_rho)?;

        let mut dims = Vec::with_capacity(hidden_dims.len() + 2);
        dims.push(n);
        dims.extend_from_slice(hidden_dims);
        dims.push(m);
        let decoder = MlpParams::xavier(&dims, Activation::Tanh, &mut rng)?;

        let priors = (0..n).map(|_| default_prior(k)).collect();
        Ok(HalfVaeModel {
            bank,
            decoder,
            priors,
            lambda,
        })
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            latent: self.bank.component_count(),
            observed: self.decoder.out_dim(),
            length: self.bank.length(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.bank.component_count();
        if self.decoder.in_dim() != n {
            return Err(Error::Shape(format!(
                "decoder input dim {} does not match {} latent components",
                self.decoder.in_dim(),
                n
            )));
        }
        if self.decoder.out_dim() < n {
            return Err(Error::Unsupported(format!(
                "underdetermined separation: m = {} < n = {n}",
                self.decoder.out_dim()
            )));
        }
        if self.priors.len() != n {
            return Err(Error::Shape(format!(
                "{} priors for {} components",
                self.priors.len(),
                n
            )));
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
        self.bank.param_count()
            + self.decoder.param_count()
            + self.priors.iter().map(|p| p.param_count()).sum::<usize>()
    }

    /// Canonical flat order: z_mu, z_rho, decoder, then each prior.
    pub fn append_flat(&self, out: &mut Vec<f64>) {
        self.bank.append_flat(out);
        self.decoder.append_flat(out);
        for p in &self.priors {
            p.append_flat(out);
        }
    }

    pub fn read_flat(&mut self, flat: &[f64]) -> Result<usize> {
        let mut off = self.bank.read_flat(flat)?;
        off += self.decoder.read_flat(&flat[off..])?;
        for p in &mut self.priors {
            off += p.read_flat(&flat[off..])?;
        }
        Ok(off)
    }

    /// Loss and full gradients of the frozen-noise objective
    /// `mean_s nll(x, decode(z_mu + sigma eps_s)) + lambda * sum_i KL_i`,
    /// where `KL_i` sums per-entry Monte-Carlo KL estimates against prior
    /// `i` over the same noise draws used for reconstruction.
    pub fn loss_with_grad(
        &self,
        x: &Matrix,
        noise: &[Matrix],
        lambda: f64,
    ) -> Result<(LossBreakdown, HalfVaeGrads)> {
        self.validate()?;
        let d = self.dims();
        if x.rows() != d.observed || x.cols() != d.length {
            return Err(Error::Shape(format!(
                "data is {}x{}, model expects {}x{}",
                x.rows(),
                x.cols(),
                d.observed,
                d.length
            )));
        }
        if noise.is_empty() {
            return Err(Error::Domain("need at least one noise draw".into()));
        }
        for eps in noise {
            if eps.rows() != d.latent || eps.cols() != d.length {
                return Err(Error::Shape(format!(
                    "noise draw is {}x{}, expected {}x{}",
                    eps.rows(),
                    eps.cols(),
                    d.latent,
                    d.length
                )));
            }
        }
        if !(lambda >= 0.0) {
            return Err(Error::Domain(format!("lambda must be >= 0, got {lambda}")));
        }

        let (n, l, s) = (d.latent, d.length, noise.len());
        let inv_s = 1.0 / s as f64;
        let sigmas = self.bank.sigmas();
        let mut grads = HalfVaeGrads {
            z_mu: Matrix::zeros(n, l),
            z_rho: vec![0.0; n],
            decoder: MlpGrads::zeros_like(&self.decoder),
            priors: self
                .priors
                .iter()
                .map(|p| GmmGrads::zeros(p.component_count()))
                .collect(),
        };

        // Reconstruction term, averaged over the reparameterized draws.
        // d_rho accumulates raw sum(dz * eps) per row; the softplus chain
        // factor is applied once at the end.
        let mut recon_sum = 0.0;
        let mut rho_recon_raw = vec![0.0; n];
        let mut z = Matrix::zeros(n, l);
        for eps in noise {
            for i in 0..n {
                let mu_row = self.bank.z_mu().row(i);
                let eps_row = eps.row(i);
                let sig = sigmas[i];
                let z_row = z.row_mut(i);
                for c in 0..l {
                    z_row[c] = mu_row[c] + sig * eps_row[c];
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
                let gmu_row = grads.z_mu.row_mut(i);
                let mut rho_acc = 0.0;
                for c in 0..l {
                    gmu_row[c] += dz_row[c];
                    rho_acc += dz_row[c] * eps_row[c];
                }
                rho_recon_raw[i] += rho_acc;
            }
        }
        let reconstruction = recon_sum * inv_s;
        if !reconstruction.is_finite() {
            return Err(Error::Numeric(
                "reconstruction term is non-finite".into(),
            ));
        }

        // Per-component KL terms over the same noise draws (one draw, two
        // uses). Entries of row i share sigma_i, so the variance gradient
        // accumulates across the row before the softplus chain.
        let mut kl_per_component = Vec::with_capacity(n);
        let mut noise_buf = vec![0.0; s];
        let max_k = self
            .priors
            .iter()
            .map(|p| p.component_count())
            .max()
            .unwrap_or(1);
        let mut exp_scratch = vec![0.0; max_k];
        for i in 0..n {
            let prepared = self.priors[i].prepare()?;
            let scratch = &mut exp_scratch[..prepared.component_count()];
            let variance = sigmas[i] * sigmas[i];
            let mut kl_i = 0.0;
            let mut d_variance_row = 0.0;
            for c in 0..l {
                for (si, eps) in noise.iter().enumerate() {
                    noise_buf[si] = eps.get(i, c);
                }
                let (est, d_mean, d_variance) = kl_entry_with_grad(
                    &prepared,
                    self.bank.z_mu().get(i, c),
                    variance,
                    &noise_buf,
                    &mut grads.priors[i],
                    scratch,
                )?;
                kl_i += est.value;
                grads.z_mu.row_mut(i)[c] += lambda * d_mean;
                d_variance_row += d_variance;
            }
            kl_per_component.push(kl_i);

            let chain = sigmoid(self.bank.z_rho()[i]);
            grads.z_rho[i] = chain * rho_recon_raw[i]
                + lambda * d_variance_row * 2.0 * sigmas[i] * chain;
            let pg = &mut grads.priors[i];
            for group in [&mut pg.raw_weights, &mut pg.raw_means, &mut pg.raw_log_scales] {
                for v in group.iter_mut() {
                    *v *= lambda;
                }
            }
        }
        let kl: f64 = kl_per_component.iter().sum();
        if !kl.is_finite() {
            return Err(Error::Numeric("kl term is non-finite".into()));
        }

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
