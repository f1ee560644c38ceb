//! Probability primitives: diagonal Gaussian log-density and reparameterized
//! sampling, plus 1-D Gaussian mixtures with trainable unconstrained
//! parameters.
//!
//! Mixture parameters are stored raw (weight logits, means, log-scales) so a
//! single unconstrained optimizer can move them freely; [`GmmPrior::constrain`]
//! maps them onto the simplex / positive reals.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const LN_2PI: f64 = 1.8378770664093453;

/// One scalar Gaussian with strictly positive variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagGaussian1D {
    pub mean: f64,
    pub variance: f64,
}

impl DiagGaussian1D {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::Domain(format!(
                "gaussian variance must be > 0, got {variance}"
            )));
        }
        Ok(DiagGaussian1D { mean, variance })
    }
}

/// `ln N(x | mean, variance)`.
pub fn gaussian_logpdf(x: f64, mean: f64, variance: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::Domain(format!(
            "gaussian variance must be > 0, got {variance}"
        )));
    }
    let d = x - mean;
    Ok(-0.5 * (LN_2PI + variance.ln()) - d * d / (2.0 * variance))
}

/// `mean + sqrt(variance) * noise`; differentiable in mean and variance.
pub fn reparam_sample(mean: f64, variance: f64, noise: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::Domain(format!(
            "gaussian variance must be > 0, got {variance}"
        )));
    }
    Ok(mean + variance.sqrt() * noise)
}

/// Trainable raw parameters of a K-component 1-D Gaussian mixture.
///
/// Constrained weights are `softmax(raw_weights)`; constrained variances are
/// `exp(2 * raw_log_scales)` (the raw value parameterizes the scale, not the
/// variance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGmmPrior")]
pub struct GmmPrior {
    raw_weights: Vec<f64>,
    raw_means: Vec<f64>,
    raw_log_scales: Vec<f64>,
}

#[derive(Deserialize)]
struct RawGmmPrior {
    raw_weights: Vec<f64>,
    raw_means: Vec<f64>,
    raw_log_scales: Vec<f64>,
}

impl TryFrom<RawGmmPrior> for GmmPrior {
    type Error = Error;

    fn try_from(raw: RawGmmPrior) -> Result<Self> {
        GmmPrior::new(raw.raw_weights, raw.raw_means, raw.raw_log_scales)
    }
}

/// Constrained view of a [`GmmPrior`]: weights on the simplex, positive
/// variances.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmConstrained {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

/// Gradient of a mixture log-density with respect to the evaluation point and
/// every raw parameter.
#[derive(Debug, Clone)]
pub struct GmmLogpdfGrad {
    pub d_x: f64,
    pub d_raw_weights: Vec<f64>,
    pub d_raw_means: Vec<f64>,
    pub d_raw_log_scales: Vec<f64>,
}

/// Gradient holder shaped like a [`GmmPrior`].
#[derive(Debug, Clone, PartialEq)]
pub struct GmmGrads {
    pub raw_weights: Vec<f64>,
    pub raw_means: Vec<f64>,
    pub raw_log_scales: Vec<f64>,
}

impl GmmGrads {
    pub fn zeros(k: usize) -> Self {
        GmmGrads {
            raw_weights: vec![0.0; k],
            raw_means: vec![0.0; k],
            raw_log_scales: vec![0.0; k],
        }
    }

    /// Same flat layout as [`GmmPrior::append_flat`].
    pub fn append_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.raw_weights);
        out.extend_from_slice(&self.raw_means);
        out.extend_from_slice(&self.raw_log_scales);
    }
}

impl GmmPrior {
    pub fn new(raw_weights: Vec<f64>, raw_means: Vec<f64>, raw_log_scales: Vec<f64>) -> Result<Self> {
        let k = raw_weights.len();
        if k == 0 {
            return Err(Error::Domain("gmm needs at least one component".into()));
        }
        if raw_means.len() != k || raw_log_scales.len() != k {
            return Err(Error::Shape(format!(
                "gmm parameter lengths disagree: weights={k} means={} log_scales={}",
                raw_means.len(),
                raw_log_scales.len()
            )));
        }
        for group in [&raw_weights, &raw_means, &raw_log_scales] {
            if group.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("gmm raw parameters must be finite".into()));
            }
        }
        Ok(GmmPrior {
            raw_weights,
            raw_means,
            raw_log_scales,
        })
    }

    /// Single standard-normal component.
    pub fn standard_normal() -> Self {
        GmmPrior {
            raw_weights: vec![0.0],
            raw_means: vec![0.0],
            raw_log_scales: vec![0.0],
        }
    }

    pub fn component_count(&self) -> usize {
        self.raw_weights.len()
    }

    pub fn raw_weights(&self) -> &[f64] {
        &self.raw_weights
    }

    pub fn raw_means(&self) -> &[f64] {
        &self.raw_means
    }

    pub fn raw_log_scales(&self) -> &[f64] {
        &self.raw_log_scales
    }

    pub fn param_count(&self) -> usize {
        3 * self.component_count()
    }

    pub fn append_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.raw_weights);
        out.extend_from_slice(&self.raw_means);
        out.extend_from_slice(&self.raw_log_scales);
    }

    pub fn read_flat(&mut self, flat: &[f64]) -> Result<usize> {
        let k = self.component_count();
        if flat.len() < 3 * k {
            return Err(Error::Shape("flat slice too short for gmm".into()));
        }
        self.raw_weights.copy_from_slice(&flat[..k]);
        self.raw_means.copy_from_slice(&flat[k..2 * k]);
        self.raw_log_scales.copy_from_slice(&flat[2 * k..3 * k]);
        Ok(3 * k)
    }

    /// Maps raw parameters onto constrained ones: softmax weights,
    /// identity means, `exp(2 * log_scale)` variances.
    pub fn constrain(&self) -> GmmConstrained {
        let log_w = self.log_weights();
        GmmConstrained {
            weights: log_w.iter().map(|lw| lw.exp()).collect(),
            means: self.raw_means.clone(),
            variances: self.raw_log_scales.iter().map(|s| (2.0 * s).exp()).collect(),
        }
    }

    /// Log of the softmax weights, max-shifted for stability.
    fn log_weights(&self) -> Vec<f64> {
        let max = self
            .raw_weights
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let lse = max
            + self
                .raw_weights
                .iter()
                .map(|w| (w - max).exp())
                .sum::<f64>()
                .ln();
        self.raw_weights.iter().map(|w| w - lse).collect()
    }

    /// Precomputes constrained constants for repeated density evaluation.
    ///
    /// [`logpdf`](Self::logpdf) routes through this, so a held
    /// [`PreparedGmm`] returns bit-identical values to the direct calls.
    pub fn prepare(&self) -> Result<PreparedGmm> {
        let log_w = self.log_weights();
        let k = self.component_count();
        let mut variances = Vec::with_capacity(k);
        let mut log_norms = Vec::with_capacity(k);
        for &s in &self.raw_log_scales {
            let v = (2.0 * s).exp();
            if !(v > 0.0) {
                return Err(Error::Domain(format!(
                    "gmm component variance underflowed (log-scale {s})"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Numeric(format!(
                    "gmm component variance overflowed (log-scale {s})"
                )));
            }
            log_norms.push(-0.5 * (LN_2PI + v.ln()));
            variances.push(v);
        }
        Ok(PreparedGmm {
            log_w,
            means: self.raw_means.clone(),
            variances,
            log_norms,
        })
    }

    /// `ln sum_k w_k N(x | m_k, v_k)` via log-sum-exp.
    pub fn logpdf(&self, x: f64) -> Result<f64> {
        self.prepare()?.logpdf(x)
    }

    /// Log-density and its gradient with respect to `x` and all raw
    /// parameters.
    pub fn logpdf_with_grad(&self, x: f64) -> Result<(f64, GmmLogpdfGrad)> {
        self.prepare()?.logpdf_with_grad(x)
    }
}

/// A [`GmmPrior`] with its constrained constants (log-weights, variances,
/// per-component log-normalizers) hoisted out of the evaluation loop.
#[derive(Debug, Clone)]
pub struct PreparedGmm {
    log_w: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    log_norms: Vec<f64>,
}

impl PreparedGmm {
    pub fn component_count(&self) -> usize {
        self.means.len()
    }

    pub fn logpdf(&self, x: f64) -> Result<f64> {
        let mut scratch = vec![0.0; self.component_count()];
        self.logpdf_scratch(x, &mut scratch)
    }

    /// [`logpdf`](Self::logpdf) with a caller-owned scratch buffer.
    pub fn logpdf_scratch(&self, x: f64, exp_scratch: &mut [f64]) -> Result<f64> {
        let (lp, _) = self.log_terms(x, exp_scratch)?;
        Ok(lp)
    }

    pub fn logpdf_with_grad(&self, x: f64) -> Result<(f64, GmmLogpdfGrad)> {
        let k = self.component_count();
        let mut acc = GmmGrads::zeros(k);
        let mut scratch = vec![0.0; k];
        let (lp, d_x) = self.logpdf_scaled_grad(x, 1.0, &mut acc, &mut scratch)?;
        Ok((
            lp,
            GmmLogpdfGrad {
                d_x,
                d_raw_weights: acc.raw_weights,
                d_raw_means: acc.raw_means,
                d_raw_log_scales: acc.raw_log_scales,
            },
        ))
    }

    /// Log-density at `x`; adds `scale *` (gradient w.r.t. the raw mixture
    /// parameters) into `acc` and returns `(logpdf, d logpdf / d x)`.
    ///
    /// `exp_scratch` must have one slot per component; callers in hot loops
    /// keep one buffer alive across entries.
    pub fn logpdf_scaled_grad(
        &self,
        x: f64,
        scale: f64,
        acc: &mut GmmGrads,
        exp_scratch: &mut [f64],
    ) -> Result<(f64, f64)> {
        let k = self.component_count();
        let (lp, sum_e) = self.log_terms(x, exp_scratch)?;
        let mut d_x = 0.0;
        for i in 0..k {
            // Responsibility r_i = exp(term_i - lp) = e_i / sum(e).
            let resp = exp_scratch[i] / sum_e;
            let v = self.variances[i];
            let d = x - self.means[i];
            d_x += resp * (-d / v);
            acc.raw_means[i] += scale * (resp * (d / v));
            // d logpdf / d log_scale = r * ((x-m)^2/v - 1), via dv/ds = 2v.
            acc.raw_log_scales[i] += scale * (resp * (d * d / v - 1.0));
            // d log w_i / d u_j = delta - softmax; responsibilities sum to 1.
            acc.raw_weights[i] += scale * (resp - self.log_w[i].exp());
        }
        Ok((lp, d_x))
    }

    /// Max-shifted log-sum-exp of the per-component log-terms. Fills
    /// `exp_terms` with `exp(term_i - max)` and returns their sum alongside
    /// the log-density.
    fn log_terms(&self, x: f64, exp_terms: &mut [f64]) -> Result<(f64, f64)> {
        let mut max = f64::NEG_INFINITY;
        for i in 0..self.component_count() {
            let d = x - self.means[i];
            let t = self.log_w[i] + (self.log_norms[i] - d * d / (2.0 * self.variances[i]));
            exp_terms[i] = t;
            max = max.max(t);
        }
        if !max.is_finite() {
            return Err(Error::Numeric(format!(
                "gmm log-density is non-finite at x = {x}"
            )));
        }
        let mut sum_e = 0.0;
        for t in exp_terms.iter_mut() {
            *t = (*t - max).exp();
            sum_e += *t;
        }
        Ok((max + sum_e.ln(), sum_e))
    }
}
