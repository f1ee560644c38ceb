//! Ground-truth source generation and static mixing.
//!
//! Sources are mutually independent by construction: every row draws from its
//! own ChaCha substream. The default triple (Laplace, uniform, bimodal
//! mixture) gives three clearly non-Gaussian shapes, which keeps the
//! separation problem identifiable and gives an adaptive mixture prior
//! structure worth learning.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffengine::{Activation, Matrix, MlpParams};
use crate::rng::{seeded, stream};
use crate::{Error, Result};

/// Distribution of one source row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceKind {
    Laplace { location: f64, scale: f64 },
    Uniform { low: f64, high: f64 },
    /// Equal-weight two-component Gaussian mixture.
    BimodalGmm { means: [f64; 2], scales: [f64; 2] },
    /// Deterministic sine plus Gaussian noise; `period` is in samples.
    SinePlusNoise { period: f64, amplitude: f64, noise_std: f64 },
}

impl SourceKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            SourceKind::Laplace { scale, .. } => {
                if !(*scale > 0.0) {
                    return Err(Error::Config(format!(
                        "laplace scale must be > 0, got {scale}"
                    )));
                }
            }
            SourceKind::Uniform { low, high } => {
                if !(high > low) {
                    return Err(Error::Config(format!(
                        "uniform bounds must satisfy low < high, got [{low}, {high}]"
                    )));
                }
            }
            SourceKind::BimodalGmm { scales, .. } => {
                if scales.iter().any(|s| !(*s > 0.0)) {
                    return Err(Error::Config(format!(
                        "bimodal scales must be > 0, got {scales:?}"
                    )));
                }
            }
            SourceKind::SinePlusNoise {
                period, noise_std, ..
            } => {
                if !(*period > 0.0) {
                    return Err(Error::Config(format!(
                        "sine period must be > 0, got {period}"
                    )));
                }
                if !(*noise_std >= 0.0) {
                    return Err(Error::Config(format!(
                        "sine noise_std must be >= 0, got {noise_std}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One source row to generate: a distribution and a length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub length: usize,
}

/// The documented default triple, cycled when more than three components are
/// requested: Laplace(0,1), uniform(-sqrt3, sqrt3), and a bimodal mixture at
/// +/-1.5 with scale 0.4.
pub fn default_source_kinds(n: usize) -> Vec<SourceKind> {
    let sqrt3 = 3.0f64.sqrt();
    let base = [
        SourceKind::Laplace {
            location: 0.0,
            scale: 1.0,
        },
        SourceKind::Uniform {
            low: -sqrt3,
            high: sqrt3,
        },
        SourceKind::BimodalGmm {
            means: [-1.5, 1.5],
            scales: [0.4, 0.4],
        },
    ];
    (0..n).map(|i| base[i % base.len()].clone()).collect()
}

/// Draws every source row from its own seeded substream; row `i` uses
/// substream `SOURCE_ROW_BASE + i`, so rows are independent and stable under
/// changes to other rows.
pub fn generate_sources(specs: &[SourceSpec], seed: u64) -> Result<Matrix> {
    if specs.is_empty() {
        return Err(Error::Config("need at least one source spec".into()));
    }
    let length = specs[0].length;
    if length == 0 {
        return Err(Error::Config("source length must be >= 1".into()));
    }
    if specs.iter().any(|s| s.length != length) {
        return Err(Error::Config(format!(
            "all source specs must share one length; got {:?}",
            specs.iter().map(|s| s.length).collect::<Vec<_>>()
        )));
    }
    for spec in specs {
        spec.kind.validate()?;
    }

    let mut out = Matrix::zeros(specs.len(), length);
    for (i, spec) in specs.iter().enumerate() {
        let mut rng = seeded(seed, stream::SOURCE_ROW_BASE + i as u64);
        let row = out.row_mut(i);
        match &spec.kind {
            SourceKind::Laplace { location, scale } => {
                for v in row.iter_mut() {
                    // Inverse CDF; u01 = 0 would put the quantile at -inf.
                    let u01: f64 = rng.random::<f64>().max(1e-300);
                    let u = u01 - 0.5;
                    *v = location - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln();
                }
            }
            SourceKind::Uniform { low, high } => {
                for v in row.iter_mut() {
                    *v = rng.random_range(*low..*high);
                }
            }
            SourceKind::BimodalGmm { means, scales } => {
                for v in row.iter_mut() {
                    let c = usize::from(rng.random::<f64>() >= 0.5);
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    *v = means[c] + scales[c] * eps;
                }
            }
            SourceKind::SinePlusNoise {
                period,
                amplitude,
                noise_std,
            } => {
                for (t, v) in row.iter_mut().enumerate() {
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    *v = amplitude * (2.0 * std::f64::consts::PI * t as f64 / period).sin()
                        + noise_std * eps;
                }
            }
        }
    }
    Ok(out)
}

/// How sources are mixed into observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingKind {
    Linear,
    MlpNonlinear,
}

/// A static map from `n` sources to `m >= n` observed channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MixingMap {
    Linear { matrix: Matrix, seed: u64 },
    /// Small random MLP applied columnwise. Experimental: invertibility is
    /// not guaranteed, so recovery quality depends on the draw.
    MlpNonlinear { mlp: MlpParams, seed: u64 },
}

/// Largest acceptable condition number for a random linear mixing matrix.
pub const MAX_MIXING_CONDITION: f64 = 100.0;

impl MixingMap {
    pub fn observed_dim(&self) -> usize {
        match self {
            MixingMap::Linear { matrix, .. } => matrix.rows(),
            MixingMap::MlpNonlinear { mlp, .. } => mlp.out_dim(),
        }
    }

    pub fn source_dim(&self) -> usize {
        match self {
            MixingMap::Linear { matrix, .. } => matrix.cols(),
            MixingMap::MlpNonlinear { mlp, .. } => mlp.in_dim(),
        }
    }
}

/// Builds a mixing map. Linear maps draw entries uniformly from (-1, 1) and
/// resample until the condition number is at most [`MAX_MIXING_CONDITION`].
pub fn make_mixing(m: usize, n: usize, kind: MixingKind, seed: u64) -> Result<MixingMap> {
    if n == 0 {
        return Err(Error::Config("need at least one source".into()));
    }
    if m < n {
        return Err(Error::Unsupported(format!(
            "underdetermined mixing: m = {m} observed channels < n = {n} sources"
        )));
    }
    let mut rng = seeded(seed, stream::MIXING);
    match kind {
        MixingKind::Linear => {
            for _ in 0..10_000 {
                let matrix = Matrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
                let cond = condition_number(&matrix);
                if cond <= MAX_MIXING_CONDITION {
                    return Ok(MixingMap::Linear { matrix, seed });
                }
            }
            Err(Error::Numeric(
                "could not draw a well-conditioned mixing matrix".into(),
            ))
        }
        MixingKind::MlpNonlinear => {
            let mlp = MlpParams::xavier(&[n, 16, m], Activation::Tanh, &mut rng)?;
            Ok(MixingMap::MlpNonlinear { mlp, seed })
        }
    }
}

/// Applies the map: `x = f(z)` columnwise.
pub fn mix(map: &MixingMap, z: &Matrix) -> Result<Matrix> {
    if z.rows() != map.source_dim() {
        return Err(Error::Shape(format!(
            "sources have {} rows, mixing map expects {}",
            z.rows(),
            map.source_dim()
        )));
    }
    match map {
        MixingMap::Linear { matrix, .. } => matrix.matmul(z),
        MixingMap::MlpNonlinear { mlp, .. } => Ok(mlp.forward(z)?.0),
    }
}

/// Condition number (ratio of extreme singular values) of a tall matrix,
/// via Jacobi eigenvalues of the small Gram matrix.
pub fn condition_number(a: &Matrix) -> f64 {
    let gram = a.transpose().matmul(a).expect("gram product always chains");
    let eigen = symmetric_eigenvalues(&gram);
    let max = eigen.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eigen.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        return f64::INFINITY;
    }
    (max / min).sqrt()
}

/// Cyclic Jacobi sweeps; fine for the tiny symmetric matrices used here.
fn symmetric_eigenvalues(g: &Matrix) -> Vec<f64> {
    let n = g.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| g.row(i).to_vec()).collect();
    for _ in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q] * a[p][q];
            }
        }
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = 0.5 * (2.0 * a[p][q]).atan2(a[q][q] - a[p][p]);
                let (s, c) = theta.sin_cos();
                for r in 0..n {
                    let (arp, arq) = (a[r][p], a[r][q]);
                    a[r][p] = c * arp - s * arq;
                    a[r][q] = s * arp + c * arq;
                }
                for r in 0..n {
                    let (apr, aqr) = (a[p][r], a[q][r]);
                    a[p][r] = c * apr - s * aqr;
                    a[q][r] = s * apr + c * aqr;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (&x, &y) in a.iter().zip(b) {
            cov += (x - ma) * (y - mb);
            va += (x - ma) * (x - ma);
            vb += (y - mb) * (y - mb);
        }
        cov / (va.sqrt() * vb.sqrt())
    }

    #[test]
    fn uniform_source_mean_is_near_zero() {
        // Monte-Carlo oracle: (-1,1) uniform has sd 1/sqrt(3), so the mean
        // of 1e5 draws sits within 4 standard errors of zero.
        let specs = vec![SourceSpec {
            kind: SourceKind::Uniform {
                low: -1.0,
                high: 1.0,
            },
            length: 100_000,
        }];
        let z = generate_sources(&specs, 7).unwrap();
        let mean = z.row(0).iter().sum::<f64>() / 100_000.0;
        let se = (1.0 / 3.0f64.sqrt()) / (100_000.0f64).sqrt();
        assert!(mean.abs() < 4.0 * se, "mean = {mean}");
    }

    #[test]
    fn generation_is_bit_deterministic() {
        let specs: Vec<SourceSpec> = default_source_kinds(3)
            .into_iter()
            .map(|kind| SourceSpec { kind, length: 64 })
            .collect();
        let a = generate_sources(&specs, 11).unwrap();
        let b = generate_sources(&specs, 11).unwrap();
        assert_eq!(a, b);
        let c = generate_sources(&specs, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn default_sources_are_nearly_uncorrelated() {
        // Independence implies near-zero sample correlation at this length.
        let specs: Vec<SourceSpec> = default_source_kinds(3)
            .into_iter()
            .map(|kind| SourceSpec { kind, length: 10_000 })
            .collect();
        let z = generate_sources(&specs, 21).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let r = pearson(z.row(i), z.row(j));
                assert!(r.abs() <= 0.05, "rows {i},{j}: corr = {r}");
            }
        }
    }

    #[test]
    fn inconsistent_lengths_are_rejected() {
        let specs = vec![
            SourceSpec {
                kind: SourceKind::Laplace {
                    location: 0.0,
                    scale: 1.0,
                },
                length: 10,
            },
            SourceSpec {
                kind: SourceKind::Laplace {
                    location: 0.0,
                    scale: 1.0,
                },
                length: 11,
            },
        ];
        assert!(matches!(
            generate_sources(&specs, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_spec_params_are_rejected() {
        assert!(SourceKind::Laplace {
            location: 0.0,
            scale: 0.0
        }
        .validate()
        .is_err());
        assert!(SourceKind::Uniform {
            low: 1.0,
            high: 1.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn linear_mixing_is_deterministic_and_well_conditioned() {
        let a = make_mixing(3, 3, MixingKind::Linear, 5).unwrap();
        let b = make_mixing(3, 3, MixingKind::Linear, 5).unwrap();
        assert_eq!(a, b);
        if let MixingMap::Linear { matrix, .. } = &a {
            let cond = condition_number(matrix);
            assert!(cond.is_finite() && cond <= MAX_MIXING_CONDITION);
        } else {
            panic!("expected linear map");
        }
    }

    #[test]
    fn overdetermined_is_fine_underdetermined_is_not() {
        assert!(make_mixing(3, 2, MixingKind::Linear, 1).is_ok());
        assert!(matches!(
            make_mixing(2, 3, MixingKind::Linear, 1),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn identity_and_zero_mixing_cases() {
        let eye = MixingMap::Linear {
            matrix: Matrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 }),
            seed: 0,
        };
        let specs: Vec<SourceSpec> = default_source_kinds(3)
            .into_iter()
            .map(|kind| SourceSpec { kind, length: 8 })
            .collect();
        let z = generate_sources(&specs, 31).unwrap();
        assert_eq!(mix(&eye, &z).unwrap(), z);

        let zeros = Matrix::zeros(3, 8);
        let map = make_mixing(3, 3, MixingKind::Linear, 32).unwrap();
        let x = mix(&map, &zeros).unwrap();
        assert!(x.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mixing_applies_per_column() {
        // Per-column recomputation oracle for both map kinds.
        let specs: Vec<SourceSpec> = default_source_kinds(2)
            .into_iter()
            .map(|kind| SourceSpec { kind, length: 6 })
            .collect();
        let z = generate_sources(&specs, 41).unwrap();
        for kind in [MixingKind::Linear, MixingKind::MlpNonlinear] {
            let map = make_mixing(3, 2, kind, 42).unwrap();
            let x = mix(&map, &z).unwrap();
            for c in 0..6 {
                let col = Matrix::from_vec(2, 1, z.column(c)).unwrap();
                let xc = mix(&map, &col).unwrap();
                for r in 0..3 {
                    assert_eq!(x.get(r, c), xc.get(r, 0), "{kind:?} ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn column_permutation_commutes_with_linear_mixing() {
        let specs: Vec<SourceSpec> = default_source_kinds(3)
            .into_iter()
            .map(|kind| SourceSpec { kind, length: 5 })
            .collect();
        let z = generate_sources(&specs, 51).unwrap();
        let map = make_mixing(3, 3, MixingKind::Linear, 52).unwrap();
        let x = mix(&map, &z).unwrap();
        let perm = [4usize, 2, 0, 1, 3];
        let z_perm = Matrix::from_fn(3, 5, |i, c| z.get(i, perm[c]));
        let x_perm = mix(&map, &z_perm).unwrap();
        for i in 0..3 {
            for c in 0..5 {
                assert_eq!(x_perm.get(i, c), x.get(i, perm[c]));
            }
        }
    }

    #[test]
    fn condition_number_of_known_matrices() {
        let eye = Matrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.0 });
        assert!((condition_number(&eye) - 1.0).abs() < 1e-9);
        let diag = Matrix::from_fn(3, 3, |i, j| {
            if i == j {
                [10.0, 1.0, 0.1][i]
            } else {
                0.0
            }
        });
        assert!((condition_number(&diag) - 100.0).abs() < 1e-6);
        let singular = Matrix::from_vec(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(condition_number(&singular) > 1e12);
    }
}
