//! The three trainable models and their shared training machinery.
//!
//! [`HalfVaeModel`] is the encoder-free model: its posterior is a
//! [`LatentBank`] of directly-trained parameters. [`VaeModel`] covers the two
//! encoder baselines (trainable GMM priors or a fixed standard normal). The
//! [`Model`] enum gives the training loop and the CLI one uniform surface:
//! flat parameter vectors, a frozen-noise loss with exact gradients, and
//! posterior extraction.

mod bank;
mod half_vae;
mod train;
mod vae;

pub use bank::{
    rho_for_sigma, sigmoid, softplus, softplus_inv, LatentBank, PosteriorSummary, CI95_Z,
    SIGMA_FLOOR,
};
pub use half_vae::{default_prior, default_prior_means, HalfVaeGrads, HalfVaeModel};
pub use train::{train, EpochRecord, TrainOptions, TrainOutcome};
pub use vae::{EncodedPosterior, VaeGrads, VaeModel};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffengine::Matrix;
use crate::{Error, Result};

/// Which of the three model variants an experiment trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    HalfVae,
    VaeGmm,
    VanillaVae,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::HalfVae => "half_vae",
            ModelKind::VaeGmm => "vae_gmm",
            ModelKind::VanillaVae => "vanilla_vae",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Loss value split into its reconstruction and KL parts.
///
/// `kl` and `kl_per_component` are unweighted; `total` is
/// `reconstruction + lambda * kl`, and `kl` always equals the sum of
/// `kl_per_component` in component order.
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
    pub kl_per_component: Vec<f64>,
}

/// Problem dimensions a model operates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub latent: usize,
    pub observed: usize,
    pub length: usize,
}

/// Standard-normal noise draws shaped `latent x length`, one matrix per
/// reparameterized sample.
pub fn draw_noise(
    latent: usize,
    length: usize,
    samples: usize,
    rng: &mut impl Rng,
) -> Vec<Matrix> {
    (0..samples)
        .map(|_| {
            Matrix::from_fn(latent, length, |_, _| {
                <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
            })
        })
        .collect()
}

/// Uniform handle over the three trainable variants.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    HalfVae(HalfVaeModel),
    Vae(VaeModel),
}

impl Model {
    /// Builds a fresh model of the requested kind with this crate's
    /// documented defaults; deterministic per seed.
    pub fn init(
        kind: ModelKind,
        n: usize,
        m: usize,
        l: usize,
        k: usize,
        hidden_dims: &[usize],
        lambda: f64,
        seed: u64,
    ) -> Result<Model> {
        match kind {
            ModelKind::HalfVae => Ok(Model::HalfVae(HalfVaeModel::init(
                n,
                m,
                l,
                k,
                hidden_dims,
                lambda,
                seed,
            )?)),
            ModelKind::VaeGmm => Ok(Model::Vae(VaeModel::init(
                n,
                m,
                Some(k),
                hidden_dims,
                lambda,
                seed,
            )?)),
            ModelKind::VanillaVae => Ok(Model::Vae(VaeModel::init(
                n,
                m,
                None,
                hidden_dims,
                lambda,
                seed,
            )?)),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::HalfVae(_) => ModelKind::HalfVae,
            Model::Vae(v) if v.is_vanilla() => ModelKind::VanillaVae,
            Model::Vae(_) => ModelKind::VaeGmm,
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            Model::HalfVae(m) => m.lambda,
            Model::Vae(m) => m.lambda,
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Model::HalfVae(m) => m.bank.component_count(),
            Model::Vae(m) => m.latent_dim(),
        }
    }

    pub fn observed_dim(&self) -> usize {
        match self {
            Model::HalfVae(m) => m.decoder.out_dim(),
            Model::Vae(m) => m.observed_dim(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Model::HalfVae(m) => m.param_count(),
            Model::Vae(m) => m.param_count(),
        }
    }

    pub fn append_flat(&self, out: &mut Vec<f64>) {
        match self {
            Model::HalfVae(m) => m.append_flat(out),
            Model::Vae(m) => m.append_flat(out),
        }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.append_flat(&mut out);
        out
    }

    pub fn read_flat(&mut self, flat: &[f64]) -> Result<usize> {
        match self {
            Model::HalfVae(m) => m.read_flat(flat),
            Model::Vae(m) => m.read_flat(flat),
        }
    }

    /// Frozen-noise loss with gradients flattened in the same canonical
    /// order as [`append_flat`](Self::append_flat).
    pub fn loss_flat(
        &self,
        x: &Matrix,
        noise: &[Matrix],
        lambda: f64,
    ) -> Result<(LossBreakdown, Vec<f64>)> {
        let mut flat = Vec::with_capacity(self.param_count());
        match self {
            Model::HalfVae(m) => {
                let (breakdown, grads) = m.loss_with_grad(x, noise, lambda)?;
                flat.extend_from_slice(grads.z_mu.data());
                flat.extend_from_slice(&grads.z_rho);
                grads.decoder.append_flat(&mut flat);
                for p in &grads.priors {
                    p.append_flat(&mut flat);
                }
                Ok((breakdown, flat))
            }
            Model::Vae(m) => {
                let (breakdown, grads) = m.loss_with_grad(x, noise, lambda)?;
                grads.encoder.append_flat(&mut flat);
                grads.decoder.append_flat(&mut flat);
                for p in &grads.priors {
                    p.append_flat(&mut flat);
                }
                Ok((breakdown, flat))
            }
        }
    }

    /// Loss at the model's own lambda weight.
    pub fn loss(&self, x: &Matrix, noise: &[Matrix]) -> Result<LossBreakdown> {
        Ok(self.loss_flat(x, noise, self.lambda())?.0)
    }

    /// Posterior means and per-entry standard deviations. The encoder-free
    /// model reads its bank (using `x` only for a shape check); the encoder
    /// variants run the encoder on `x`.
    pub fn posterior(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        match self {
            Model::HalfVae(m) => {
                let d = m.dims();
                if x.rows() != d.observed || x.cols() != d.length {
                    return Err(Error::Shape(format!(
                        "data is {}x{}, model expects {}x{}",
                        x.rows(),
                        x.cols(),
                        d.observed,
                        d.length
                    )));
                }
                let sigmas = m.bank.sigmas();
                let sigma_matrix = Matrix::from_fn(d.latent, d.length, |i, _| sigmas[i]);
                Ok((m.bank.z_mu().clone(), sigma_matrix))
            }
            Model::Vae(m) => {
                let enc = m.encode(x)?;
                Ok((enc.means, enc.sigmas))
            }
        }
    }

    /// Posterior means with 95% confidence bands.
    pub fn posterior_summary(&self, x: &Matrix) -> Result<PosteriorSummary> {
        let (means, sigmas) = self.posterior(x)?;
        PosteriorSummary::from_means_sigmas(means, &sigmas)
    }
}

/// Worst relative disagreement between a model's analytic loss gradient and
/// central finite differences, over every parameter coordinate, with the
/// noise frozen.
pub fn loss_grad_check(
    model: &Model,
    x: &Matrix,
    noise: &[Matrix],
    lambda: f64,
) -> Result<f64> {
    let point = model.flat_params();
    crate::diffengine::grad_check(
        |p: &[f64]| {
            let mut candidate = model.clone();
            candidate.read_flat(p)?;
            let (breakdown, grads) = candidate.loss_flat(x, noise, lambda)?;
            Ok((breakdown.total, grads))
        },
        &point,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffengine::{Layer, MlpParams};
    use crate::distributions::DiagGaussian1D;
    use crate::divergence::{kl_gauss_gmm_frozen, kl_gauss_std_normal};
    use crate::rng::{seeded, stream};

    fn small_data(m: usize, l: usize, seed: u64) -> Matrix {
        use rand::Rng;
        let mut rng = seeded(seed, 500);
        Matrix::from_fn(m, l, |_, _| rng.random_range(-1.5..1.5))
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = HalfVaeModel::init(3, 3, 500, 3, &[32, 32], 1.0, 7).unwrap();
        let b = HalfVaeModel::init(3, 3, 500, 3, &[32, 32], 1.0, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.priors.len(), 3);
        assert_eq!(a.priors[0].component_count(), 3);
        // Zero logits constrain to uniform weights.
        let c = a.priors[0].constrain();
        for w in &c.weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        // Spreads start at 0.1.
        assert!((a.bank.sigma(0) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn underdetermined_init_is_rejected() {
        assert!(matches!(
            HalfVaeModel::init(3, 2, 10, 3, &[8], 1.0, 1),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            VaeModel::init(3, 2, Some(3), &[8], 1.0, 1),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn parameter_census_matches_formulas() {
        let (n, m, l, k) = (3, 4, 11, 3);
        let hidden = [5, 6];
        let half = Model::init(ModelKind::HalfVae, n, m, l, k, &hidden, 1.0, 2).unwrap();
        let decoder_count = (5 * n + 5) + (6 * 5 + 6) + (m * 6 + m);
        assert_eq!(half.param_count(), n * l + n + decoder_count + n * 3 * k);

        let encoder_count = (5 * m + 5) + (6 * 5 + 6) + (2 * n * 6 + 2 * n);
        let vae = Model::init(ModelKind::VaeGmm, n, m, l, k, &hidden, 1.0, 2).unwrap();
        assert_eq!(vae.param_count(), encoder_count + decoder_count + n * 3 * k);

        let vanilla = Model::init(ModelKind::VanillaVae, n, m, l, k, &hidden, 1.0, 2).unwrap();
        assert_eq!(vanilla.param_count(), encoder_count + decoder_count);

        // Flat round trip covers every group.
        let flat = half.flat_params();
        assert_eq!(flat.len(), half.param_count());
        let mut copy = Model::init(ModelKind::HalfVae, n, m, l, k, &hidden, 1.0, 3).unwrap();
        copy.read_flat(&flat).unwrap();
        assert_eq!(copy, half);
    }

    #[test]
    fn zero_lambda_loss_is_reconstruction_only() {
        let x = small_data(3, 7, 21);
        let mut rng = seeded(22, stream::TRAIN_NOISE);
        let noise = draw_noise(2, 7, 4, &mut rng);
        for kind in [ModelKind::HalfVae, ModelKind::VaeGmm, ModelKind::VanillaVae] {
            let model = Model::init(kind, 2, 3, 7, 2, &[6], 1.0, 5).unwrap();
            let (b, _) = model.loss_flat(&x, &noise, 0.0).unwrap();
            assert_eq!(b.total, b.reconstruction, "{kind}");
        }
    }

    #[test]
    fn exact_preimage_with_floor_spread_reconstructs() {
        let mut model = HalfVaeModel::init(2, 3, 9, 2, &[8], 1.0, 13).unwrap();
        use rand::Rng;
        let mut rng = seeded(14, 501);
        let z_true = Matrix::from_fn(2, 9, |_, _| rng.random_range(-1.0..1.0));
        let (x, _) = model.decoder.forward(&z_true).unwrap();
        *model.bank.z_mu_mut() = z_true;
        for r in model.bank.z_rho_mut() {
            *r = -40.0; // sigma collapses to the floor
        }
        let mut rng = seeded(15, stream::TRAIN_NOISE);
        let noise = draw_noise(2, 9, 3, &mut rng);
        let (b, _) = model.loss_with_grad(&x, &noise, 0.0).unwrap();
        assert!(b.total < 1e-9, "loss = {}", b.total);
    }

    #[test]
    fn gradients_match_finite_differences_for_all_variants() {
        let x = small_data(3, 5, 31);
        let mut rng = seeded(32, stream::TRAIN_NOISE);
        let noise = draw_noise(2, 5, 2, &mut rng);
        for kind in [ModelKind::HalfVae, ModelKind::VaeGmm, ModelKind::VanillaVae] {
            let model = Model::init(kind, 2, 3, 5, 2, &[4], 1.0, 33).unwrap();
            let worst = loss_grad_check(&model, &x, &noise, 0.7).unwrap();
            assert!(worst <= 1e-4, "{kind}: worst rel error {worst}");
        }
    }

    #[test]
    fn kl_decomposes_into_independent_per_component_sums() {
        // The total KL term must equal, bit for bit, the sum over components
        // of per-entry KL estimates recomputed through the public API with
        // the same frozen noise.
        let x = small_data(3, 6, 41);
        let mut rng = seeded(42, stream::TRAIN_NOISE);
        let noise = draw_noise(3, 6, 4, &mut rng);

        let model = HalfVaeModel::init(3, 3, 6, 3, &[5], 1.0, 43).unwrap();
        let (b, _) = model.loss_with_grad(&x, &noise, 1.0).unwrap();
        let mut recomputed = Vec::new();
        for i in 0..3 {
            let sigma = model.bank.sigma(i);
            let variance = sigma * sigma;
            let mut kl_i = 0.0;
            for c in 0..6 {
                let entry_noise: Vec<f64> = noise.iter().map(|eps| eps.get(i, c)).collect();
                let posterior =
                    DiagGaussian1D::new(model.bank.z_mu().get(i, c), variance).unwrap();
                kl_i += kl_gauss_gmm_frozen(&posterior, &model.priors[i], &entry_noise)
                    .unwrap()
                    .value;
            }
            recomputed.push(kl_i);
        }
        assert_eq!(b.kl_per_component, recomputed);
        assert_eq!(b.kl, recomputed.iter().sum::<f64>());

        // Same identity for the encoder variant with per-entry spreads.
        let vae = VaeModel::init(3, 3, Some(2), &[5], 1.0, 44).unwrap();
        let (vb, _) = vae.loss_with_grad(&x, &noise, 1.0).unwrap();
        let posterior = vae.encode(&x).unwrap();
        let priors = vae.priors.as_ref().unwrap();
        for i in 0..3 {
            let mut kl_i = 0.0;
            for c in 0..6 {
                let entry_noise: Vec<f64> = noise.iter().map(|eps| eps.get(i, c)).collect();
                let sig = posterior.sigmas.get(i, c);
                let q = DiagGaussian1D::new(posterior.means.get(i, c), sig * sig).unwrap();
                kl_i += kl_gauss_gmm_frozen(&q, &priors[i], &entry_noise).unwrap().value;
            }
            assert_eq!(vb.kl_per_component[i], kl_i);
        }
    }

    #[test]
    fn vanilla_kl_uses_closed_form_per_entry() {
        let x = small_data(3, 4, 51);
        let mut rng = seeded(52, stream::TRAIN_NOISE);
        let noise = draw_noise(2, 4, 3, &mut rng);
        let vae = VaeModel::init(2, 3, None, &[5], 1.0, 53).unwrap();
        let (b, _) = vae.loss_with_grad(&x, &noise, 1.0).unwrap();
        let posterior = vae.encode(&x).unwrap();
        for i in 0..2 {
            let mut kl_i = 0.0;
            for c in 0..4 {
                let sig = posterior.sigmas.get(i, c);
                kl_i += kl_gauss_std_normal(posterior.means.get(i, c), sig * sig).unwrap();
            }
            assert_eq!(b.kl_per_component[i], kl_i);
        }
    }

    #[test]
    fn forced_standard_normal_posterior_has_zero_kl() {
        // Encoder with zero weights and biases chosen so every column maps
        // to mean 0 and sigma 1: the closed-form KL term vanishes.
        let n = 2;
        let m = 3;
        let rho_unit = rho_for_sigma(1.0).unwrap();
        let mut bias = vec![0.0; 2 * n];
        for b in bias.iter_mut().skip(n) {
            *b = rho_unit;
        }
        let encoder = MlpParams::new(
            vec![Layer {
                weight: Matrix::zeros(2 * n, m),
                bias,
            }],
            crate::diffengine::Activation::Tanh,
        )
        .unwrap();
        let decoder = HalfVaeModel::init(n, m, 4, 2, &[4], 1.0, 61).unwrap().decoder;
        let vae = VaeModel {
            encoder,
            decoder,
            priors: None,
            lambda: 1.0,
        };
        let x = small_data(m, 4, 62);
        let mut rng = seeded(63, stream::TRAIN_NOISE);
        let noise = draw_noise(n, 4, 2, &mut rng);
        let (b, _) = vae.loss_with_grad(&x, &noise, 1.0).unwrap();
        assert!(b.kl.abs() < 1e-20, "kl = {}", b.kl);
    }

    #[test]
    fn sampled_rows_share_their_component_spread() {
        // With an identity decoder, zero data, and lambda 0, the loss is
        // 0.5 * mean_s ||sigma_row * eps||^2, which pins down exactly which
        // spread each entry used.
        let n = 2;
        let l = 5;
        let decoder = MlpParams::new(
            vec![Layer {
                weight: Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 }),
                bias: vec![0.0; n],
            }],
            crate::diffengine::Activation::Tanh,
        )
        .unwrap();
        let bank = LatentBank::new(Matrix::zeros(n, l), vec![0.3, -0.9]).unwrap();
        let sigmas = bank.sigmas();
        let model = HalfVaeModel {
            bank,
            decoder,
            priors: vec![default_prior(2), default_prior(2)],
            lambda: 1.0,
        };
        let mut rng = seeded(71, stream::TRAIN_NOISE);
        let noise = draw_noise(n, l, 3, &mut rng);
        let x = Matrix::zeros(n, l);
        let (b, _) = model.loss_with_grad(&x, &noise, 0.0).unwrap();
        let mut expect = 0.0;
        for eps in &noise {
            for i in 0..n {
                for c in 0..l {
                    let z = sigmas[i] * eps.get(i, c);
                    expect += 0.5 * z * z;
                }
            }
        }
        expect /= noise.len() as f64;
        assert!((b.total - expect).abs() < 1e-12);

        // The posterior sigma matrix broadcasts one spread per row.
        let (_, sig) = Model::HalfVae(model).posterior(&x).unwrap();
        for i in 0..n {
            for c in 0..l {
                assert_eq!(sig.get(i, c), sigmas[i]);
            }
        }
    }

    #[test]
    fn training_reduces_loss_and_snapshots_fire() {
        let x = small_data(3, 20, 81);
        let mut model = Model::init(ModelKind::HalfVae, 2, 3, 20, 2, &[8], 1.0, 82).unwrap();
        let opts = TrainOptions {
            epochs: 60,
            hyper: Default::default(),
            train_samples: 4,
            lambda_warmup: false,
            snapshot_every: Some(20),
            seed: 83,
        };
        let outcome = train(&mut model, &x, &opts).unwrap();
        assert_eq!(outcome.records.len(), 60);
        assert_eq!(outcome.snapshots.len(), 3);
        assert_eq!(outcome.snapshots[0].0, 20);
        assert!(outcome.records[59].total < outcome.records[0].total);
    }

    #[test]
    fn lambda_warmup_ramps_from_zero() {
        let x = small_data(3, 8, 84);
        let mut model = Model::init(ModelKind::HalfVae, 2, 3, 8, 2, &[6], 1.0, 85).unwrap();
        let opts = TrainOptions {
            epochs: 20,
            hyper: Default::default(),
            train_samples: 2,
            lambda_warmup: true,
            snapshot_every: None,
            seed: 86,
        };
        let outcome = train(&mut model, &x, &opts).unwrap();
        assert_eq!(outcome.records[0].lambda, 0.0);
        assert_eq!(outcome.records[1].lambda, 0.5);
        assert!(outcome.records[19].lambda == 1.0);
        // Breakdown consistency: total = recon + lambda * kl.
        for r in &outcome.records {
            assert!((r.total - (r.reconstruction + r.lambda * r.kl)).abs() < 1e-9);
        }
    }

    #[test]
    fn training_is_bit_deterministic() {
        let x = small_data(3, 10, 91);
        let opts = TrainOptions {
            epochs: 15,
            hyper: Default::default(),
            train_samples: 2,
            lambda_warmup: false,
            snapshot_every: None,
            seed: 92,
        };
        let mut a = Model::init(ModelKind::VaeGmm, 2, 3, 10, 2, &[6], 1.0, 93).unwrap();
        let mut b = a.clone();
        train(&mut a, &x, &opts).unwrap();
        train(&mut b, &x, &opts).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
    }

    #[test]
    fn overflowing_prior_scale_reports_kl_term() {
        let mut model = HalfVaeModel::init(2, 3, 4, 2, &[4], 1.0, 95).unwrap();
        let mut flat = Vec::new();
        model.priors[0].append_flat(&mut flat);
        // Log-scale 400 overflows exp(2s) to infinity.
        let k = model.priors[0].component_count();
        flat[2 * k] = 400.0;
        model.priors[0].read_flat(&flat).unwrap();
        let x = small_data(3, 4, 96);
        let mut rng = seeded(97, stream::TRAIN_NOISE);
        let noise = draw_noise(2, 4, 2, &mut rng);
        let err = model.loss_with_grad(&x, &noise, 1.0).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{err}");
    }
}
