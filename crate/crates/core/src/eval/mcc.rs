use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::assignment::max_weight_assignment;
use crate::eval::HsicTest;
use crate::numerics::Tensor;

/// Correlation flavour used for matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationMode {
    Pearson,
    /// Rank correlation; invariant to strictly monotone componentwise maps.
    Spearman,
}

/// Source recovery scores after resolving permutation, sign and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mode: CorrelationMode,
    /// `d × d′` absolute correlations between true and estimated components.
    pub correlation_matrix: Tensor,
    /// `assignment[j]` is the true component matched to estimate `j`.
    pub assignment: Vec<usize>,
    /// Matched `|correlation|` per estimated component.
    pub per_component: Vec<f64>,
    pub mcc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub independence: Option<HsicTest>,
    /// Kolmogorov–Smirnov distance to uniform(0, 1), per estimated column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniformity: Option<Vec<f64>>,
}

/// Average ranks (1-based), ties sharing the mean rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Centres and scales a column to unit norm; `None` if it is constant.
fn normalized(col: &[f64]) -> Option<Vec<f64>> {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let centred: Vec<f64> = col.iter().map(|v| v - mean).collect();
    let norm = centred.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 1e-12 * (1.0 + mean.abs()) * n.sqrt()) {
        return None;
    }
    Some(centred.into_iter().map(|v| v / norm).collect())
}

fn prepared_columns(t: &Tensor, mode: CorrelationMode, name: &str) -> Result<Vec<Vec<f64>>> {
    (0..t.cols())
        .map(|j| {
            let col = t.col(j);
            let col = match mode {
                CorrelationMode::Pearson => col,
                CorrelationMode::Spearman => ranks(&col),
            };
            normalized(&col).ok_or_else(|| Error::Degenerate(format!("{name} column {j} has zero variance")))
        })
        .collect()
}

/// Absolute correlation matrix `|corr(s_i, z_j)|`, `d × d′`.
pub fn abs_correlations(s_true: &Tensor, z: &Tensor, mode: CorrelationMode) -> Result<Tensor> {
    if s_true.rows() != z.rows() {
        return Err(Error::dim("mcc time points", s_true.rows(), z.rows()));
    }
    if z.cols() > s_true.cols() {
        return Err(Error::dim(
            "mcc estimated components",
            format!("<= {}", s_true.cols()),
            z.cols(),
        ));
    }
    z.ensure_finite("estimated components")?;
    let a = prepared_columns(s_true, mode, "true")?;
    let b = prepared_columns(z, mode, "estimated")?;
    Ok(Tensor::from_fn(a.len(), b.len(), |i, j| {
        let c: f64 = a[i].iter().zip(&b[j]).map(|(x, y)| x * y).sum();
        c.abs().min(1.0)
    }))
}

/// Mean matched absolute correlation between true sources and estimates.
///
/// Estimates may have fewer components than the sources; each estimate is
/// matched to a distinct source by maximum-weight bipartite matching.
pub fn mcc(s_true: &Tensor, z: &Tensor, mode: CorrelationMode) -> Result<EvaluationReport> {
    let corr = abs_correlations(s_true, z, mode)?;
    let (d, dz) = corr.shape();
    // rows = estimates, cols = true components
    let weights = corr.transpose();
    let assignment = max_weight_assignment(weights.data(), dz, d);
    let per_component: Vec<f64> = assignment.iter().enumerate().map(|(j, &i)| corr.get(i, j)).collect();
    let mcc = per_component.iter().sum::<f64>() / dz as f64;
    Ok(EvaluationReport {
        mode,
        correlation_matrix: corr,
        assignment,
        per_component,
        mcc,
        independence: None,
        uniformity: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(t: usize, d: usize, seed: u64) -> Tensor {
        let mut r = rng::stream(seed);
        Tensor::from_fn(t, d, |_, _| StandardNormal.sample(&mut r))
    }

    #[test]
    fn identity_scores_one() {
        let s = noise(500, 3, 1);
        let rep = mcc(&s, &s, CorrelationMode::Pearson).unwrap();
        assert!((rep.mcc - 1.0).abs() < 1e-12);
        assert_eq!(rep.assignment, vec![0, 1, 2]);
    }

    #[test]
    fn indeterminacies_are_matched_out() {
        let s = noise(400, 3, 2);
        let z = Tensor::from_fn(400, 3, |t, j| -3.0 * s.get(t, 2 - j));
        for mode in [CorrelationMode::Pearson, CorrelationMode::Spearman] {
            let rep = mcc(&s, &z, mode).unwrap();
            assert!((rep.mcc - 1.0).abs() < 1e-12);
            assert_eq!(rep.assignment, vec![2, 1, 0]);
        }
        let cubed = s.map(|v| v.powi(3) + v);
        let rep = mcc(&s, &cubed, CorrelationMode::Spearman).unwrap();
        assert!((rep.mcc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_noise_scores_low() {
        let s = noise(5000, 4, 3);
        let z = noise(5000, 4, 4);
        assert!(mcc(&s, &z, CorrelationMode::Pearson).unwrap().mcc < 0.2);
    }

    #[test]
    fn degenerate_column_is_named() {
        let s = noise(50, 2, 5);
        let mut z = noise(50, 2, 6);
        for t in 0..50 {
            z.set(t, 1, 4.0);
        }
        match mcc(&s, &z, CorrelationMode::Pearson) {
            Err(Error::Degenerate(msg)) => assert!(msg.contains("column 1")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fewer_estimates_than_sources() {
        let s = noise(300, 4, 7);
        let z = s.select_cols(&[3, 1]);
        let rep = mcc(&s, &z, CorrelationMode::Pearson).unwrap();
        assert_eq!(rep.assignment, vec![3, 1]);
        assert!((rep.mcc - 1.0).abs() < 1e-12);
        assert!(mcc(&z, &s, CorrelationMode::Pearson).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }
}
