//! KL divergence building blocks and the reconstruction objective.
//!
//! Two KL paths exist side by side: the textbook closed form against a
//! standard normal (vanilla prior), and a reparameterized Monte-Carlo
//! estimate against a Gaussian mixture, which has no closed form. The MC
//! estimator is an honest function of an explicit noise slice, so freezing
//! the noise turns it into a deterministic differentiable objective.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::distributions::{DiagGaussian1D, GmmGrads, GmmPrior, PreparedGmm, LN_2PI};
use crate::diffengine::Matrix;
use crate::{Error, Result};

/// A KL value together with the uncertainty of its estimator.
///
/// `standard_error` is the sample standard deviation of the per-draw terms
/// divided by `sqrt(sample_count)`; it is zero for closed-form values and for
/// single-sample estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlEstimate {
    pub value: f64,
    pub sample_count: usize,
    pub standard_error: f64,
}

impl KlEstimate {
    pub fn closed_form(value: f64) -> Self {
        KlEstimate {
            value,
            sample_count: 1,
            standard_error: 0.0,
        }
    }
}

/// Gradient of the Monte-Carlo KL estimate through the reparameterization
/// path.
#[derive(Debug, Clone)]
pub struct KlPathGrads {
    pub d_mean: f64,
    pub d_variance: f64,
    pub d_prior: GmmGrads,
}

/// Exact `KL(N(mean, variance) || N(0, 1)) = 0.5 (mean^2 + v - 1 - ln v)`.
pub fn kl_gauss_std_normal(mean: f64, variance: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::Domain(format!(
            "posterior variance must be > 0, got {variance}"
        )));
    }
    Ok(0.5 * (mean * mean + variance - 1.0 - variance.ln()))
}

/// Closed-form KL against the standard normal with its gradient
/// `(d/d mean, d/d variance)`.
pub fn kl_gauss_std_normal_with_grad(mean: f64, variance: f64) -> Result<(f64, (f64, f64))> {
    let value = kl_gauss_std_normal(mean, variance)?;
    Ok((value, (mean, 0.5 * (1.0 - 1.0 / variance))))
}

/// Unbiased Monte-Carlo estimate of `KL(posterior || prior)` using `samples`
/// freshly drawn standard-normal noise values.
pub fn kl_gauss_gmm_mc(
    posterior: &DiagGaussian1D,
    prior: &GmmPrior,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<KlEstimate> {
    if samples == 0 {
        return Err(Error::Domain("sample count must be >= 1".into()));
    }
    let noise: Vec<f64> = (0..samples)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    kl_gauss_gmm_frozen(posterior, prior, &noise)
}

/// Monte-Carlo KL estimate over an explicit noise slice.
pub fn kl_gauss_gmm_frozen(
    posterior: &DiagGaussian1D,
    prior: &GmmPrior,
    noise: &[f64],
) -> Result<KlEstimate> {
    let prepared = prior.prepare()?;
    let mut scratch = vec![0.0; prepared.component_count()];
    kl_entry(&prepared, posterior.mean, posterior.variance, noise, &mut scratch)
}

/// Monte-Carlo KL estimate plus its gradient with respect to the posterior
/// mean/variance and the prior's raw parameters, all through the
/// reparameterization path with the noise held fixed.
pub fn kl_gauss_gmm_frozen_with_grad(
    posterior: &DiagGaussian1D,
    prior: &GmmPrior,
    noise: &[f64],
) -> Result<(KlEstimate, KlPathGrads)> {
    let prepared = prior.prepare()?;
    let mut scratch = vec![0.0; prepared.component_count()];
    let mut d_prior = GmmGrads::zeros(prepared.component_count());
    let (estimate, d_mean, d_variance) = kl_entry_with_grad(
        &prepared,
        posterior.mean,
        posterior.variance,
        noise,
        &mut d_prior,
        &mut scratch,
    )?;
    Ok((
        estimate,
        KlPathGrads {
            d_mean,
            d_variance,
            d_prior,
        },
    ))
}

/// Entry-level Monte-Carlo KL against an already-prepared prior.
///
/// Training losses evaluate one latent entry at a time against the shared
/// per-component prior; this keeps that path allocation-free. Values are
/// bit-identical to [`kl_gauss_gmm_frozen`] on the same inputs.
pub fn kl_entry(
    prior: &PreparedGmm,
    mean: f64,
    variance: f64,
    noise: &[f64],
    exp_scratch: &mut [f64],
) -> Result<KlEstimate> {
    kl_entry_core(prior, mean, variance, noise, None, exp_scratch)
}

/// [`kl_entry`] that also accumulates the prior's raw-parameter gradient
/// (unscaled) into `prior_grads` and returns `(estimate, d_mean, d_variance)`.
pub fn kl_entry_with_grad(
    prior: &PreparedGmm,
    mean: f64,
    variance: f64,
    noise: &[f64],
    prior_grads: &mut GmmGrads,
    exp_scratch: &mut [f64],
) -> Result<(KlEstimate, f64, f64)> {
    let mut d_mean = 0.0;
    let mut d_variance = 0.0;
    let estimate = kl_entry_core(
        prior,
        mean,
        variance,
        noise,
        Some((prior_grads, &mut d_mean, &mut d_variance)),
        exp_scratch,
    )?;
    Ok((estimate, d_mean, d_variance))
}

fn kl_entry_core(
    prior: &PreparedGmm,
    mean: f64,
    variance: f64,
    noise: &[f64],
    mut grads: Option<(&mut GmmGrads, &mut f64, &mut f64)>,
    exp_scratch: &mut [f64],
) -> Result<KlEstimate> {
    let n = noise.len();
    if n == 0 {
        return Err(Error::Domain("sample count must be >= 1".into()));
    }
    if !(variance > 0.0) {
        return Err(Error::Domain(format!(
            "posterior variance must be > 0, got {variance}"
        )));
    }
    let sigma = variance.sqrt();
    let inv_n = 1.0 / n as f64;
    // ln q at the reparameterized point simplifies to a function of the
    // noise alone: -0.5 (ln 2 pi v) - eps^2 / 2.
    let log_q_base = -0.5 * (LN_2PI + variance.ln());

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &eps in noise {
        let z = mean + sigma * eps;
        let log_p = match grads.as_mut() {
            Some((acc, d_mean, d_variance)) => {
                let (log_p, d_x) = prior.logpdf_scaled_grad(z, -inv_n, acc, exp_scratch)?;
                **d_mean += -d_x * inv_n;
                **d_variance += (-0.5 / variance - d_x * eps / (2.0 * sigma)) * inv_n;
                log_p
            }
            None => prior.logpdf_scratch(z, exp_scratch)?,
        };
        let term = log_q_base - 0.5 * eps * eps - log_p;
        sum += term;
        sum_sq += term * term;
    }

    let value = sum * inv_n;
    let standard_error = if n > 1 {
        let var = (sum_sq - sum * sum * inv_n) / (n as f64 - 1.0);
        (var.max(0.0) / n as f64).sqrt()
    } else {
        0.0
    };
    Ok(KlEstimate {
        value,
        sample_count: n,
        standard_error,
    })
}

/// `0.5 * sum_entries (x - x_hat)^2`: the negative log-likelihood of `x`
/// under unit-variance Gaussian observation noise, constants dropped.
pub fn reconstruction_nll(x: &Matrix, x_hat: &Matrix) -> Result<f64> {
    if x.rows() != x_hat.rows() || x.cols() != x_hat.cols() {
        return Err(Error::Shape(format!(
            "reconstruction shapes disagree: {}x{} vs {}x{}",
            x.rows(),
            x.cols(),
            x_hat.rows(),
            x_hat.cols()
        )));
    }
    Ok(x
        .data()
        .iter()
        .zip(x_hat.data())
        .map(|(a, b)| 0.5 * (a - b) * (a - b))
        .sum())
}
