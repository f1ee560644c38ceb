//! Scale-, sign-, and permutation-invariant scoring of estimated components
//! against ground truth.
//!
//! Separation is only identifiable up to row order, sign, and scale, so both
//! matrices are z-scored row-wise and the scorer searches every permutation
//! and sign assignment exhaustively. At the component counts this toolkit
//! accepts (n <= 8) that search is cheap once per-pair costs are
//! precomputed, and it removes any dependence on an assignment algorithm
//! being correct.

use serde::{Deserialize, Serialize};

use crate::diffengine::Matrix;
use crate::{Error, Result};

/// Hard cap on components for the factorial alignment search.
pub const MAX_ALIGN_COMPONENTS: usize = 8;

/// Normalizes to mean 0 and population standard deviation 1.
pub fn zscore(series: &[f64]) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(Error::Degenerate(format!(
            "series of length {} cannot be z-scored",
            series.len()
        )));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let variance = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = variance.sqrt();
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::Degenerate(
            "constant series has no z-score".into(),
        ));
    }
    Ok(series.iter().map(|v| (v - mean) / std).collect())
}

/// Z-scores every row; errors name the offending row.
pub fn zscore_rows(m: &Matrix) -> Result<Matrix> {
    let mut rows = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        rows.push(zscore(m.row(i)).map_err(|e| match e {
            Error::Degenerate(msg) => Error::Degenerate(format!("row {i}: {msg}")),
            other => other,
        })?);
    }
    Matrix::from_rows(&rows)
}

/// Root mean square error between two equal-length series.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "rmse operands have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Shape("rmse needs at least one sample".into()));
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// Optimal assignment of estimated rows to truth rows.
///
/// `permutation[e]` is the truth row matched to estimated row `e`, and
/// `signs[e]` the sign applied to that estimated row. `per_component_rmse`
/// is indexed by truth component, matching how result tables are reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub permutation: Vec<usize>,
    pub signs: Vec<f64>,
    pub per_component_rmse: Vec<f64>,
    pub mean_rmse: f64,
}

/// Z-scores both matrices row-wise, then minimizes the summed per-pair RMSE
/// over all `n! * 2^n` permutation/sign assignments.
///
/// Ties break deterministically toward the lexicographically smallest
/// permutation, then toward `+1` signs (sign vectors ordered positionwise
/// with `+1` before `-1`).
pub fn align_components(estimated: &Matrix, truth: &Matrix) -> Result<AlignmentResult> {
    if estimated.rows() != truth.rows() || estimated.cols() != truth.cols() {
        return Err(Error::Shape(format!(
            "estimated is {}x{}, truth is {}x{}",
            estimated.rows(),
            estimated.cols(),
            truth.rows(),
            truth.cols()
        )));
    }
    let n = truth.rows();
    if n == 0 {
        return Err(Error::Shape("cannot align zero components".into()));
    }
    if n > MAX_ALIGN_COMPONENTS {
        return Err(Error::SizeLimit(format!(
            "alignment search supports up to {MAX_ALIGN_COMPONENTS} components, got {n}"
        )));
    }
    let ze = zscore_rows(estimated)?;
    let zt = zscore_rows(truth)?;
    let l = truth.cols() as f64;

    // Per-pair best RMSE and sign; the sign choice for a pair is independent
    // of everything else, with +1 preferred on exact ties.
    let mut pair_rmse = vec![vec![0.0f64; n]; n];
    let mut pair_sign = vec![vec![1.0f64; n]; n];
    for e in 0..n {
        for t in 0..n {
            let (mut plus, mut minus) = (0.0, 0.0);
            for (&a, &b) in ze.row(e).iter().zip(zt.row(t)) {
                plus += (a - b) * (a - b);
                minus += (a + b) * (a + b);
            }
            let (rp, rm) = ((plus / l).sqrt(), (minus / l).sqrt());
            if rm < rp {
                pair_rmse[e][t] = rm;
                pair_sign[e][t] = -1.0;
            } else {
                pair_rmse[e][t] = rp;
                pair_sign[e][t] = 1.0;
            }
        }
    }

    let mut best_perm: Option<Vec<usize>> = None;
    let mut best_total = f64::INFINITY;
    let mut perm = vec![0usize; n];
    let mut used = vec![false; n];
    search_permutations(
        0,
        n,
        &pair_rmse,
        &mut perm,
        &mut used,
        &mut best_total,
        &mut best_perm,
    );
    let permutation = best_perm.expect("search visits every permutation");

    let signs: Vec<f64> = (0..n).map(|e| pair_sign[e][permutation[e]]).collect();
    let mut per_component_rmse = vec![0.0; n];
    for e in 0..n {
        per_component_rmse[permutation[e]] = pair_rmse[e][permutation[e]];
    }
    let mean_rmse = per_component_rmse.iter().sum::<f64>() / n as f64;
    Ok(AlignmentResult {
        permutation,
        signs,
        per_component_rmse,
        mean_rmse,
    })
}

/// Depth-first enumeration in lexicographic order with strict improvement,
/// so the first-found minimum is the lexicographically smallest tie.
fn search_permutations(
    depth: usize,
    n: usize,
    pair_rmse: &[Vec<f64>],
    perm: &mut Vec<usize>,
    used: &mut Vec<bool>,
    best_total: &mut f64,
    best_perm: &mut Option<Vec<usize>>,
) {
    if depth == n {
        let total: f64 = (0..n).map(|e| pair_rmse[e][perm[e]]).sum();
        if total < *best_total {
            *best_total = total;
            *best_perm = Some(perm.clone());
        }
        return;
    }
    for t in 0..n {
        if used[t] {
            continue;
        }
        used[t] = true;
        perm[depth] = t;
        search_permutations(depth + 1, n, pair_rmse, perm, used, best_total, best_perm);
        used[t] = false;
    }
}

/// Aligned scores of one estimated component matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model: String,
    pub per_component_rmse: Vec<f64>,
    pub mean_rmse: f64,
    pub permutation: Vec<usize>,
    pub signs: Vec<f64>,
}

/// Per-component and mean aligned RMSE for several models against one truth
/// matrix (the shape of the headline comparison table).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub components: usize,
    pub models: Vec<ModelScore>,
}

pub fn score_models(results: &[(String, Matrix)], truth: &Matrix) -> Result<ScoreTable> {
    let mut models = Vec::with_capacity(results.len());
    for (name, estimated) in results {
        let a = align_components(estimated, truth)?;
        models.push(ModelScore {
            model: name.clone(),
            per_component_rmse: a.per_component_rmse,
            mean_rmse: a.mean_rmse,
            permutation: a.permutation,
            signs: a.signs,
        });
    }
    Ok(ScoreTable {
        components: truth.rows(),
        models,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Independent brute-force oracle: re-implements z-scoring and evaluates
    /// every permutation (via next-permutation) and sign mask from scratch.
    fn oracle_align(est: &Matrix, truth: &Matrix) -> (Vec<usize>, Vec<f64>, f64) {
        let n = truth.rows();
        let l = truth.cols();
        let norm = |row: &[f64]| -> Vec<f64> {
            let m = row.iter().sum::<f64>() / l as f64;
            let sd = (row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / l as f64).sqrt();
            row.iter().map(|v| (v - m) / sd).collect()
        };
        let ze: Vec<Vec<f64>> = (0..n).map(|i| norm(est.row(i))).collect();
        let zt: Vec<Vec<f64>> = (0..n).map(|i| norm(truth.row(i))).collect();

        let mut perm: Vec<usize> = (0..n).collect();
        let mut best: Option<(Vec<usize>, u32, f64)> = None;
        loop {
            for mask in 0..(1u32 << n) {
                let mut total = 0.0;
                for e in 0..n {
                    let s = if mask & (1 << e) == 0 { 1.0 } else { -1.0 };
                    let mut acc = 0.0;
                    for c in 0..l {
                        let d = s * ze[e][c] - zt[perm[e]][c];
                        acc += d * d;
                    }
                    total += (acc / l as f64).sqrt();
                }
                if best.as_ref().map_or(true, |b| total < b.2) {
                    best = Some((perm.clone(), mask, total));
                }
            }
            if !next_permutation(&mut perm) {
                break;
            }
        }
        let (perm, mask, total) = best.unwrap();
        let signs = (0..n)
            .map(|e| if mask & (1 << e) == 0 { 1.0 } else { -1.0 })
            .collect();
        (perm, signs, total)
    }

    fn next_permutation(p: &mut [usize]) -> bool {
        if p.len() < 2 {
            return false;
        }
        let mut i = p.len() - 1;
        while i > 0 && p[i - 1] >= p[i] {
            i -= 1;
        }
        if i == 0 {
            return false;
        }
        let mut j = p.len() - 1;
        while p[j] <= p[i - 1] {
            j -= 1;
        }
        p.swap(i - 1, j);
        p[i..].reverse();
        true
    }

    #[test]
    fn zscore_analytic_case() {
        let z = zscore(&[1.0, 2.0, 3.0]).unwrap();
        let e = (1.5f64).sqrt();
        assert!((z[0] + e).abs() < 1e-9);
        assert!(z[1].abs() < 1e-12);
        assert!((z[2] - e).abs() < 1e-9);
        assert!((z[0] + 1.224745).abs() < 1e-6);
    }

    #[test]
    fn zscore_is_idempotent() {
        let z = zscore(&[0.3, -1.7, 2.4, 0.9, -0.2]).unwrap();
        let zz = zscore(&z).unwrap();
        for (a, b) in z.iter().zip(&zz) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_series_is_degenerate() {
        assert!(matches!(
            zscore(&[5.0, 5.0, 5.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(zscore(&[5.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn rmse_cases() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(
            rmse(&[1.0], &[1.0, 2.0]),
            Err(Error::Shape(_))
        ));
        // Direct-summation oracle on a random pair.
        let mut rng = crate::rng::seeded(1, 0);
        let a: Vec<f64> = (0..9).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..9).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut acc = 0.0;
        for i in 0..9 {
            acc += (a[i] - b[i]) * (a[i] - b[i]);
        }
        assert!((rmse(&a, &b).unwrap() - (acc / 9.0).sqrt()).abs() < 1e-14);
    }

    fn random_signal(n: usize, l: usize, seed: u64) -> Matrix {
        let mut rng = crate::rng::seeded(seed, 0);
        Matrix::from_fn(n, l, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn recovers_row_swap_exactly() {
        let truth = random_signal(3, 20, 5);
        let est = Matrix::from_rows(&[
            truth.row(1).to_vec(),
            truth.row(0).to_vec(),
            truth.row(2).to_vec(),
        ])
        .unwrap();
        let a = align_components(&est, &truth).unwrap();
        assert_eq!(a.permutation, vec![1, 0, 2]);
        assert_eq!(a.signs, vec![1.0, 1.0, 1.0]);
        assert!(a.mean_rmse < 1e-12);
    }

    #[test]
    fn recovers_sign_flip_exactly() {
        let truth = random_signal(3, 20, 6);
        let mut est = truth.clone();
        for v in est.row_mut(2) {
            *v = -*v;
        }
        let a = align_components(&est, &truth).unwrap();
        assert_eq!(a.permutation, vec![0, 1, 2]);
        assert_eq!(a.signs, vec![1.0, 1.0, -1.0]);
        assert!(a.mean_rmse < 1e-12);
    }

    #[test]
    fn row_scaling_is_invisible() {
        let truth = random_signal(3, 20, 7);
        let mut est = truth.clone();
        for v in est.row_mut(0) {
            *v *= 3.0;
        }
        for v in est.row_mut(1) {
            *v *= 0.2;
        }
        let a = align_components(&est, &truth).unwrap();
        assert!(a.mean_rmse < 1e-12);
    }

    #[test]
    fn matches_brute_force_oracle_on_random_instances() {
        let mut rng = crate::rng::seeded(8, 0);
        for trial in 0..20 {
            let n = rng.random_range(1..=4usize);
            let l = rng.random_range(4..=12usize);
            let est = Matrix::from_fn(n, l, |_, _| rng.random_range(-2.0..2.0));
            let truth = Matrix::from_fn(n, l, |_, _| rng.random_range(-2.0..2.0));
            let a = align_components(&est, &truth).unwrap();
            let (operm, osigns, ototal) = oracle_align(&est, &truth);
            assert_eq!(a.permutation, operm, "trial {trial}");
            assert_eq!(a.signs, osigns, "trial {trial}");
            let total: f64 = a.per_component_rmse.iter().sum();
            assert!((total - ototal).abs() < 1e-12, "trial {trial}");
        }
    }

    #[test]
    fn size_limit_and_shape_errors() {
        let big = Matrix::zeros(9, 10);
        assert!(matches!(
            align_components(&big, &big),
            Err(Error::SizeLimit(_))
        ));
        let a = random_signal(2, 10, 9);
        let b = random_signal(3, 10, 9);
        assert!(matches!(align_components(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn score_models_perfect_recovery_is_zero() {
        let truth = random_signal(3, 15, 10);
        let table = score_models(
            &[("a".into(), truth.clone()), ("b".into(), truth.clone())],
            &truth,
        )
        .unwrap();
        for m in &table.models {
            assert!(m.mean_rmse < 1e-12);
            assert!(m.per_component_rmse.iter().all(|&v| v < 1e-12));
        }
    }

    #[test]
    fn score_table_matches_hand_computed_values() {
        // Manual arithmetic oracle, n = 2, l = 4. Truth rows z-score to
        // (1,-1,1,-1) and (1,0,-1,0)*sqrt2. The estimate's first row is
        // exactly -truth_2 and its second row z-scores against truth_1 with
        // a hand-computed residual.
        let truth = Matrix::from_rows(&[
            vec![1.0, -1.0, 1.0, -1.0],
            vec![2.0, 0.0, -2.0, 0.0],
        ])
        .unwrap();
        let est = Matrix::from_rows(&[
            vec![-2.0, 0.0, 2.0, 0.0],
            vec![1.0, -1.0, 1.0, 0.0],
        ])
        .unwrap();
        let table = score_models(&[("m".into(), est)], &truth).unwrap();
        let score = &table.models[0];
        assert_eq!(score.permutation, vec![1, 0]);
        assert_eq!(score.signs, vec![-1.0, 1.0]);
        // Row (1,-1,1,0): mean 1/4, pop var 11/16, z = (3,-5,3,-1)/sqrt(11).
        // Against (1,-1,1,-1) the squared diffs sum to 8 - 24/sqrt(11), so
        // rmse = sqrt(2 - 6/sqrt(11)).
        let expected = (2.0 - 6.0 / 11.0f64.sqrt()).sqrt();
        assert!((score.per_component_rmse[0] - expected).abs() < 1e-12);
        assert!(score.per_component_rmse[1] < 1e-12);
        assert!((score.mean_rmse - expected / 2.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn zscore_postconditions(v in proptest::collection::vec(-100.0f64..100.0, 3..40)) {
            prop_assume!(v.iter().any(|&x| (x - v[0]).abs() > 1e-6));
            let z = zscore(&v).unwrap();
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            let var = z.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            prop_assert!(mean.abs() <= 1e-10);
            prop_assert!((var.sqrt() - 1.0).abs() <= 1e-10);
        }

        #[test]
        fn alignment_invariant_under_row_permutation_sign_and_scale(
            seed in 0u64..1000,
            flip_mask in 0u32..8,
            scale in 0.1f64..10.0,
        ) {
            let truth = random_signal(3, 12, seed.wrapping_add(1000));
            let est = random_signal(3, 12, seed);
            let base = align_components(&est, &truth).unwrap();

            let perm = match seed % 6 {
                0 => [0, 1, 2], 1 => [0, 2, 1], 2 => [1, 0, 2],
                3 => [1, 2, 0], 4 => [2, 0, 1], _ => [2, 1, 0],
            };
            let mut warped = Matrix::from_fn(3, 12, |i, c| est.get(perm[i], c));
            for i in 0..3 {
                let s = if flip_mask & (1 << i) != 0 { -1.0 } else { 1.0 };
                let factor = s * scale;
                for v in warped.row_mut(i) {
                    *v *= factor;
                }
            }
            let warped_result = align_components(&warped, &truth).unwrap();
            prop_assert!((warped_result.mean_rmse - base.mean_rmse).abs() <= 1e-10);
        }
    }
}
