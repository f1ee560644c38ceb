//! The trainable posterior bank: per-entry latent means and per-component
//! spreads, optimized directly instead of being produced by an encoder.

use serde::{Deserialize, Serialize};

use crate::diffengine::Matrix;
use crate::{Error, Result};

/// Additive floor on posterior standard deviations; keeps the spread
/// strictly positive however far the raw parameter drops.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Two-sided 95% normal quantile.
pub const CI95_Z: f64 = 1.959964;

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] on positive inputs: `ln(e^s - 1)`.
#[inline]
pub fn softplus_inv(s: f64) -> f64 {
    s.exp_m1().ln()
}

/// Numerically stable logistic function, the derivative of [`softplus`].
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Raw parameter whose constrained spread equals `sigma`.
pub fn rho_for_sigma(sigma: f64) -> Result<f64> {
    if !(sigma > SIGMA_FLOOR) {
        return Err(Error::Domain(format!(
            "target sigma must exceed the floor {SIGMA_FLOOR}, got {sigma}"
        )));
    }
    Ok(softplus_inv(sigma - SIGMA_FLOOR))
}

/// Trainable posterior parameters: means `z_mu` (`n x l`) and one
/// unconstrained spread parameter per component (`n`), so every entry of a
/// row shares its standard deviation `softplus(rho_i) + SIGMA_FLOOR`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLatentBank")]
pub struct LatentBank {
    z_mu: Matrix,
    z_rho: Vec<f64>,
}

#[derive(Deserialize)]
struct RawLatentBank {
    z_mu: Matrix,
    z_rho: Vec<f64>,
}

impl TryFrom<RawLatentBank> for LatentBank {
    type Error = Error;

    fn try_from(raw: RawLatentBank) -> Result<Self> {
        LatentBank::new(raw.z_mu, raw.z_rho)
    }
}

impl LatentBank {
    pub fn new(z_mu: Matrix, z_rho: Vec<f64>) -> Result<Self> {
        if z_rho.len() != z_mu.rows() {
            return Err(Error::Shape(format!(
                "bank has {} mean rows but {} spread parameters",
                z_mu.rows(),
                z_rho.len()
            )));
        }
        if z_mu.rows() == 0 || z_mu.cols() == 0 {
            return Err(Error::Shape("bank must be at least 1x1".into()));
        }
        z_mu.ensure_finite("latent bank means")?;
        if z_rho.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("latent bank spreads must be finite".into()));
        }
        Ok(LatentBank { z_mu, z_rho })
    }

    pub fn component_count(&self) -> usize {
        self.z_mu.rows()
    }

    pub fn length(&self) -> usize {
        self.z_mu.cols()
    }

    pub fn z_mu(&self) -> &Matrix {
        &self.z_mu
    }

    pub fn z_mu_mut(&mut self) -> &mut Matrix {
        &mut self.z_mu
    }

    pub fn z_rho(&self) -> &[f64] {
        &self.z_rho
    }

    pub fn z_rho_mut(&mut self) -> &mut [f64] {
        &mut self.z_rho
    }

    /// Constrained standard deviation of row `i`.
    pub fn sigma(&self, i: usize) -> f64 {
        softplus(self.z_rho[i]) + SIGMA_FLOOR
    }

    pub fn sigmas(&self) -> Vec<f64> {
        (0..self.component_count()).map(|i| self.sigma(i)).collect()
    }

    pub fn param_count(&self) -> usize {
        self.z_mu.data().len() + self.z_rho.len()
    }

    pub fn append_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.z_mu.data());
        out.extend_from_slice(&self.z_rho);
    }

    pub fn read_flat(&mut self, flat: &[f64]) -> Result<usize> {
        let needed = self.param_count();
        if flat.len() < needed {
            return Err(Error::Shape("flat slice too short for latent bank".into()));
        }
        let mu_len = self.z_mu.data().len();
        self.z_mu.data_mut().copy_from_slice(&flat[..mu_len]);
        self.z_rho.copy_from_slice(&flat[mu_len..needed]);
        Ok(needed)
    }
}

/// Posterior means with entrywise 95% confidence bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub means: Matrix,
    pub lower95: Matrix,
    pub upper95: Matrix,
}

impl PosteriorSummary {
    /// Bands `mean -/+ 1.959964 * sigma` from a latent bank's shared
    /// per-row spreads.
    pub fn from_bank(bank: &LatentBank) -> Self {
        let sigmas = bank.sigmas();
        let half = Matrix::from_fn(bank.component_count(), bank.length(), |i, _| {
            CI95_Z * sigmas[i]
        });
        Self::from_means_halfwidth(bank.z_mu().clone(), &half)
    }

    /// Bands from per-entry standard deviations (amortized posteriors).
    pub fn from_means_sigmas(means: Matrix, sigmas: &Matrix) -> Result<Self> {
        if sigmas.rows() != means.rows() || sigmas.cols() != means.cols() {
            return Err(Error::Shape("sigma matrix shape differs from means".into()));
        }
        let half = Matrix::from_fn(means.rows(), means.cols(), |i, j| CI95_Z * sigmas.get(i, j));
        Ok(Self::from_means_halfwidth(means, &half))
    }

    fn from_means_halfwidth(means: Matrix, half: &Matrix) -> Self {
        let lower95 = Matrix::from_fn(means.rows(), means.cols(), |i, j| {
            means.get(i, j) - half.get(i, j)
        });
        let upper95 = Matrix::from_fn(means.rows(), means.cols(), |i, j| {
            means.get(i, j) + half.get(i, j)
        });
        PosteriorSummary {
            means,
            lower95,
            upper95,
        }
    }
}
