//! Dense linear-algebra kernels backed by `nalgebra`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

fn to_na(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

fn from_na(m: &DMatrix<f64>) -> Tensor {
    Tensor::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn ensure_square(t: &Tensor, context: &str) -> Result<()> {
    if t.rows() != t.cols() {
        return Err(Error::dim(
            context,
            "square matrix",
            format!("{}x{}", t.rows(), t.cols()),
        ));
    }
    Ok(())
}

/// Eigen-decomposition of a symmetric matrix, sorted by decreasing
/// eigenvalue. Eigenvectors are the columns of the returned tensor.
pub fn symmetric_eigen(t: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    ensure_square(t, "symmetric_eigen")?;
    t.ensure_finite("symmetric_eigen input")?;
    let eig = nalgebra::SymmetricEigen::new(to_na(t));
    let mut order: Vec<usize> = (0..t.rows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Tensor::from_fn(t.rows(), t.rows(), |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}

pub fn inverse(t: &Tensor) -> Result<Tensor> {
    ensure_square(t, "inverse")?;
    let inv = to_na(t)
        .try_inverse()
        .ok_or_else(|| Error::Numeric("inverse of singular matrix".into()))?;
    let out = from_na(&inv);
    out.ensure_finite("matrix inverse")?;
    Ok(out)
}

/// `log |det t|`; errors when `|det t| < 1e-12`.
pub fn log_abs_det(t: &Tensor) -> Result<f64> {
    ensure_square(t, "log_abs_det")?;
    let lu = to_na(t).lu();
    let u = lu.u();
    let mut acc = 0.0;
    for i in 0..t.rows() {
        let d = u[(i, i)].abs();
        if d == 0.0 {
            return Err(Error::Numeric("singular weight matrix (determinant 0)".into()));
        }
        acc += d.ln();
    }
    if acc < (1e-12f64).ln() || !acc.is_finite() {
        return Err(Error::Numeric(format!(
            "near-singular weight matrix (log|det| = {acc:.3})"
        )));
    }
    Ok(acc)
}

pub fn singular_values(t: &Tensor) -> Vec<f64> {
    let svd = to_na(t).svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Ratio of extreme singular values (infinite for singular input).
pub fn condition_number(t: &Tensor) -> f64 {
    let s = singular_values(t);
    let min = s.last().copied().unwrap_or(0.0);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        s[0] / min
    }
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Tensor {
    let g: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    from_na(&q)
}

/// Sample covariance (divide by `n`) of the columns of `x`.
pub fn covariance(x: &Tensor) -> Tensor {
    let mean = x.col_means();
    let d = x.cols();
    let mut cov = Tensor::zeros(d, d);
    for r in 0..x.rows() {
        let row = x.row(r);
        for i in 0..d {
            let a = row[i] - mean.get(0, i);
            for j in i..d {
                let v = cov.get(i, j) + a * (row[j] - mean.get(0, j));
                cov.set(i, j, v);
            }
        }
    }
    let n = x.rows() as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov.get(i, j) / n;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    cov
}
