//! Gaussian-kernel HSIC with a permutation null.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng;

pub const MIN_POINTS: usize = 500;
pub const MIN_PERMUTATIONS: usize = 200;
const LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsicTest {
    pub statistic: f64,
    /// 95th percentile of the permutation null.
    pub threshold: f64,
    pub p_value: f64,
    pub reject: bool,
    pub n_points: usize,
    pub n_permutations: usize,
}

fn median_pairwise_distance(x: &[f64]) -> f64 {
    let n = x.len();
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push((x[i] - x[j]).abs());
        }
    }
    let mid = d.len() / 2;
    *d.select_nth_unstable_by(mid, f64::total_cmp).1
}

/// Gaussian Gram matrix with median-heuristic bandwidth.
fn gram(x: &[f64], column: usize) -> Result<Vec<f64>> {
    let sigma = median_pairwise_distance(x);
    if !(sigma > 0.0) {
        return Err(Error::Degenerate(format!("column {column} is constant")));
    }
    let n = x.len();
    let g = 1.0 / (2.0 * sigma * sigma);
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = (-(x[i] - x[j]).powi(2) * g).exp();
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    Ok(k)
}

/// `H K H` with `H = I − 11ᵀ/n`.
fn double_centre(k: &mut [f64], n: usize) {
    let row_means: Vec<f64> = (0..n)
        .map(|i| k[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64)
        .collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            // K is symmetric, so column means equal row means.
            k[i * n + j] += grand - row_means[i] - row_means[j];
        }
    }
}

fn statistic(kc: &[f64], l: &[f64], n: usize, perm: Option<&[usize]>) -> f64 {
    let mut acc = 0.0;
    match perm {
        None => {
            for (a, b) in kc.iter().zip(l) {
                acc += a * b;
            }
        }
        Some(p) => {
            for i in 0..n {
                let lrow = &l[p[i] * n..(p[i] + 1) * n];
                let krow = &kc[i * n..(i + 1) * n];
                for j in 0..n {
                    acc += krow[j] * lrow[p[j]];
                }
            }
        }
    }
    acc / (n * n) as f64
}

/// Tests independence of the two columns of `z` (`T × 2`).
///
/// Each permutation draws from its own seeded stream, so results do not
/// depend on thread scheduling.
pub fn hsic_independence(z: &Tensor, n_permutations: usize, seed: u64) -> Result<HsicTest> {
    if z.cols() != 2 {
        return Err(Error::dim("hsic columns", 2, z.cols()));
    }
    let n = z.rows();
    if n < MIN_POINTS {
        return Err(Error::Contract(format!(
            "hsic needs at least {MIN_POINTS} points, got {n}"
        )));
    }
    if n_permutations < MIN_PERMUTATIONS {
        return Err(Error::Contract(format!(
            "hsic needs at least {MIN_PERMUTATIONS} permutations, got {n_permutations}"
        )));
    }
    z.ensure_finite("hsic input")?;
    let mut kc = gram(&z.col(0), 0)?;
    let l = gram(&z.col(1), 1)?;
    double_centre(&mut kc, n);
    let stat = statistic(&kc, &l, n, None);
    let mut null: Vec<f64> = (0..n_permutations)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::substream(seed, k as u64);
            let p = rng::permutation(n, &mut r);
            statistic(&kc, &l, n, Some(&p))
        })
        .collect();
    null.sort_by(f64::total_cmp);
    let idx = ((LEVEL * n_permutations as f64).ceil() as usize).clamp(1, n_permutations) - 1;
    let threshold = null[idx];
    let exceed = null.iter().filter(|&&v| v >= stat).count();
    Ok(HsicTest {
        statistic: stat,
        threshold,
        p_value: (exceed + 1) as f64 / (n_permutations + 1) as f64,
        reject: stat > threshold,
        n_points: n,
        n_permutations,
    })
}

/// Pairwise tests over all column pairs of a wider matrix.
pub fn hsic_pairwise(z: &Tensor, n_permutations: usize, seed: u64) -> Result<Vec<((usize, usize), HsicTest)>> {
    let d = z.cols();
    let mut out = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            let pair = z.select_cols(&[i, j]);
            let test = hsic_independence(&pair, n_permutations, rng::derive_seed(seed, (i * d + j) as u64))?;
            out.push(((i, j), test));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Tensor {
        let mut r = rng::stream(seed);
        Tensor::from_fn(n, 2, |_, _| StandardNormal.sample(&mut r))
    }

    #[test]
    fn independent_normals_mostly_accepted() {
        let accepted = (0..10)
            .filter(|&s| !hsic_independence(&normals(2000, 100 + s), 200, s).unwrap().reject)
            .count();
        assert!(accepted >= 9, "accepted {accepted}/10");
    }

    #[test]
    fn quadratic_dependence_rejected() {
        let mut r = rng::stream(5);
        let z = Tensor::from_fn(600, 2, |_, _| 0.0);
        let mut z = z;
        for t in 0..600 {
            let a: f64 = StandardNormal.sample(&mut r);
            let e: f64 = StandardNormal.sample(&mut r);
            z.set(t, 0, a);
            z.set(t, 1, a * a + 0.1 * e);
        }
        assert!(hsic_independence(&z, 200, 1).unwrap().reject);
    }

    #[test]
    fn statistic_ignores_joint_time_permutation() {
        let z = normals(500, 8);
        let p = rng::permutation(500, &mut rng::stream(2));
        let zp = z.select_rows(&p);
        let a = hsic_independence(&z, 200, 3).unwrap().statistic;
        let b = hsic_independence(&zp, 200, 3).unwrap().statistic;
        assert!((a - b).abs() < 1e-12 * a.abs().max(1e-12));
    }

    #[test]
    fn preconditions() {
        assert!(hsic_independence(&normals(100, 1), 200, 0).is_err());
        assert!(hsic_independence(&normals(600, 1), 50, 0).is_err());
        let mut z = normals(600, 1);
        for t in 0..600 {
            z.set(t, 1, 2.0);
        }
        assert!(matches!(hsic_independence(&z, 200, 0), Err(Error::Degenerate(_))));
    }
}
