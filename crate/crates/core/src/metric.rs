//! Assignment-cost-based (ACB) scoring of located marks.
//!
//! Every ground-truth/prediction pair costs its Mahalanobis distance under
//! the ground-truth covariance, divided by `lambda` and capped at 1. The
//! square cost matrix is padded with 1s, solved exactly, and the score is
//! `1 - cost / max(|G|, |P|)`.

use serde::{Deserialize, Serialize};

use crate::assignment::{min_cost_assignment, CostMatrix};
use crate::error::{Error, Result};

pub type Matrix2 = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub truth_index: usize,
    pub predicted_index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcbReport {
    pub score: f64,
    pub lambda: f64,
    pub pair_count: usize,
    pub cost: f64,
    /// Matched real pairs (padding excluded).
    pub pairs: Vec<MatchedPair>,
    /// True when the ground-truth covariance had to be regularized.
    pub regularized: bool,
}

/// `min(1, sqrt(d^T V^-1 d) / lambda)` with `d = p - g`.
pub fn capped_distance(p: [f64; 2], g: [f64; 2], inv_cov: &Matrix2, lambda: f64) -> Result<f64> {
    if !(p.iter().chain(&g).all(|v| v.is_finite())) {
        return Err(Error::NonFinite("mark coordinates"));
    }
    if !inv_cov.iter().flatten().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("inverse covariance"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let d = [p[0] - g[0], p[1] - g[1]];
    let q = d[0] * (inv_cov[0][0] * d[0] + inv_cov[0][1] * d[1])
        + d[1] * (inv_cov[1][0] * d[0] + inv_cov[1][1] * d[1]);
    Ok((q.max(0.0).sqrt() / lambda).min(1.0))
}

/// Population covariance of the points.
pub fn covariance(points: &[[f64; 2]]) -> Matrix2 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - mx, p[1] - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    [[sxx / n, sxy / n], [sxy / n, syy / n]]
}

/// Inverse of `cov`, adding `eps * I` first when it is (nearly) singular.
/// `eps = 1e-6 * trace / 2`, floored at 1e-9 for coincident points.
pub fn regularized_inverse(cov: &Matrix2) -> (Matrix2, bool) {
    let trace = cov[0][0] + cov[1][1];
    let det = |c: &Matrix2| c[0][0] * c[1][1] - c[0][1] * c[1][0];
    let singular = det(cov) <= 1e-12 * trace * trace || trace <= 0.0;
    let mut c = *cov;
    if singular {
        let eps = (1e-6 * trace / 2.0).max(1e-9);
        c[0][0] += eps;
        c[1][1] += eps;
    }
    let d = det(&c);
    (
        [[c[1][1] / d, -c[0][1] / d], [-c[1][0] / d, c[0][0] / d]],
        singular,
    )
}

/// Scores `predicted` against `truth`.
pub fn acb_score(truth: &[[f64; 2]], predicted: &[[f64; 2]], lambda: f64) -> Result<AcbReport> {
    if truth.is_empty() {
        return Err(Error::EmptyTruth);
    }
    let (inv, regularized) = regularized_inverse(&covariance(truth));
    let size = truth.len().max(predicted.len());
    let mut data = vec![1.0f64; size * size];
    for (i, g) in truth.iter().enumerate() {
        for (j, p) in predicted.iter().enumerate() {
            data[i * size + j] = capped_distance(*p, *g, &inv, lambda)?;
        }
    }
    let matrix = CostMatrix::new(size, data);
    let solution = min_cost_assignment(&matrix);
    let pairs: Vec<MatchedPair> = solution
        .row_to_col
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < truth.len() && j < predicted.len())
        .map(|(i, &j)| MatchedPair {
            truth_index: i,
            predicted_index: j,
            distance: matrix.get(i, j),
        })
        .collect();
    Ok(AcbReport {
        score: (1.0 - solution.cost / size as f64).clamp(0.0, 1.0),
        lambda,
        pair_count: pairs.len(),
        cost: solution.cost,
        pairs,
        regularized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ID: Matrix2 = [[1.0, 0.0], [0.0, 1.0]];

    fn grid() -> Vec<[f64; 2]> {
        vec![[0.0, 0.0], [10.0, 1.0], [3.0, 8.0], [7.0, 4.0], [1.0, 5.0]]
    }

    #[test]
    fn capped_distance_examples() {
        assert_eq!(
            capped_distance([3.0, 4.0], [3.0, 4.0], &ID, 1.0).unwrap(),
            0.0
        );
        assert_eq!(
            capped_distance([3.0, 4.0], [0.0, 0.0], &ID, 5.0).unwrap(),
            1.0
        );
        assert_eq!(
            capped_distance([3.0, 4.0], [0.0, 0.0], &ID, 10.0).unwrap(),
            0.5
        );
        assert!(capped_distance([f64::NAN, 0.0], [0.0, 0.0], &ID, 1.0).is_err());
    }

    #[test]
    fn one_standard_deviation_is_capped_at_lambda_one() {
        let truth = grid();
        let cov = covariance(&truth);
        let (inv, _) = regularized_inverse(&cov);
        let sd_x = cov[0][0].sqrt();
        // along x with no cross-correlation the Mahalanobis length of one sd is
        // >= 1; decorrelate with a diagonal covariance to make it exact
        let diag = [[1.0 / cov[0][0], 0.0], [0.0, 1.0 / cov[1][1]]];
        let d = capped_distance([sd_x, 0.0], [0.0, 0.0], &diag, 1.0).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        assert!(capped_distance([2.0 * sd_x, 0.0], [0.0, 0.0], &inv, 1.0).unwrap() == 1.0);
    }

    #[test]
    fn identical_sets_score_one() {
        let r = acb_score(&grid(), &grid(), 1.0).unwrap();
        assert_eq!(r.score, 1.0);
        assert_eq!(r.pair_count, 5);
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let r = acb_score(&grid(), &[], 1.0).unwrap();
        assert_eq!(r.cost, 5.0);
        assert_eq!(r.score, 0.0);
        assert!(acb_score(&[], &grid(), 1.0).is_err());
    }

    #[test]
    fn extra_predictions_are_penalized() {
        let mut pred = grid();
        pred.push([100.0, 100.0]);
        let r = acb_score(&grid(), &pred, 1.0).unwrap();
        assert!((r.score - (1.0 - 1.0 / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_truth_is_regularized() {
        let truth = vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        let r = acb_score(&truth, &truth, 1.0).unwrap();
        assert!(r.regularized);
        assert_eq!(r.score, 1.0);
        let single = acb_score(&[[5.0, 5.0]], &[[5.0, 5.0]], 1.0).unwrap();
        assert!(single.regularized);
        assert_eq!(single.score, 1.0);
    }

    fn shuffled(v: &[[f64; 2]], seed: u64) -> Vec<[f64; 2]> {
        use rand::seq::SliceRandom;
        let mut out = v.to_vec();
        out.shuffle(&mut crate::seed::rng(seed));
        out
    }

    proptest! {
        #[test]
        fn permutation_invariant_and_lambda_monotone(
            truth in proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0), 2..9),
            pred in proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0), 0..9),
            seed in any::<u64>(),
        ) {
            let t: Vec<[f64; 2]> = truth.iter().map(|&(x, y)| [x, y]).collect();
            let p: Vec<[f64; 2]> = pred.iter().map(|&(x, y)| [x, y]).collect();
            let base = acb_score(&t, &p, 1.0).unwrap();
            let perm = acb_score(&shuffled(&t, seed), &shuffled(&p, seed ^ 1), 1.0).unwrap();
            prop_assert!((base.score - perm.score).abs() < 1e-9);
            let s5 = acb_score(&t, &p, 5.0).unwrap().score;
            let s10 = acb_score(&t, &p, 10.0).unwrap().score;
            prop_assert!(base.score <= s5 + 1e-12);
            prop_assert!(s5 <= s10 + 1e-12);
            prop_assert!((0.0..=1.0).contains(&base.score));
        }
    }
}
