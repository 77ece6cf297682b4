//! Linear ICA (symmetric FastICA) and PCA.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::linalg::{covariance, random_orthogonal, symmetric_eigen};
use crate::numerics::{Activation, Layer, Tensor};
use crate::rng;

pub const FASTICA_TOLERANCE: f64 = 1e-6;
pub const FASTICA_MAX_ITER: usize = 500;

/// Affine map `z = (x − mean) · matrixᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    /// `1 × d`
    pub mean: Tensor,
    /// `n × d`
    pub matrix: Tensor,
}

impl LinearMap {
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let neg = self.mean.scale(-1.0);
        x.add_row(&neg)?.matmul_nt(&self.matrix)
    }

    /// The same map as a network layer acting on row vectors.
    pub fn to_layer(&self) -> Layer {
        let weight = self.matrix.transpose();
        let shift = self.mean.matmul(&weight).expect("mean matches matrix width");
        Layer {
            weight,
            bias: shift.scale(-1.0),
            activation: Activation::Identity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearIca {
    /// Unmixing `W·K`; rows have unit norm in the whitened space.
    pub map: LinearMap,
    /// `T × n`
    pub z: Tensor,
    pub converged: bool,
    pub iterations: usize,
}

fn check_shape(x: &Tensor, n: usize) -> Result<()> {
    let (t, d) = x.shape();
    if n == 0 || n > d {
        return Err(Error::Contract(format!("n_components must lie in 1..={d}, got {n}")));
    }
    if t <= d {
        return Err(Error::Contract(format!(
            "need more time points than dimensions, got T = {t}, d = {d}"
        )));
    }
    x.ensure_finite("linear ICA input")
}

/// PCA whitening onto the top `n` principal directions: returns the mean
/// and `K = D^{-1/2} Eᵀ` (`n × d`).
fn whitening(x: &Tensor, n: usize) -> Result<LinearMap> {
    check_shape(x, n)?;
    let cov = covariance(x);
    let (vals, vecs) = symmetric_eigen(&cov)?;
    let top = vals[0].max(0.0);
    for (k, &v) in vals.iter().take(n).enumerate() {
        if !(v > 1e-12 * top) || top == 0.0 {
            return Err(Error::Degenerate(format!(
                "covariance has rank below {n} (eigenvalue {k} is {v:.3e})"
            )));
        }
    }
    let matrix = Tensor::from_fn(n, x.cols(), |i, j| vecs.get(j, i) / vals[i].sqrt());
    Ok(LinearMap {
        mean: x.col_means(),
        matrix,
    })
}

/// Centred projection onto the top `n` principal directions, scaled to
/// unit variance.
pub fn pca_baseline(x: &Tensor, n: usize) -> Result<Tensor> {
    whitening(x, n)?.apply(x)
}

/// Whitened data under a Haar-random rotation: what linear ICA returns when
/// the sources are Gaussian and the rotation is unidentifiable.
pub fn random_rotation_baseline(x: &Tensor, n: usize, seed: u64) -> Result<Tensor> {
    let white = whitening(x, n)?;
    let q = random_orthogonal(n, &mut rng::stream(seed));
    white.apply(x)?.matmul_nt(&q)
}

/// `(W Wᵀ)^{-1/2} W`
fn symmetric_decorrelation(w: &Tensor) -> Result<Tensor> {
    let (vals, vecs) = symmetric_eigen(&w.matmul_nt(w)?)?;
    let n = vals.len();
    if vals.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Numeric("FastICA iterate lost rank".into()));
    }
    let scaled = Tensor::from_fn(n, n, |i, j| vecs.get(i, j) / vals[j].sqrt());
    scaled.matmul_nt(&vecs)?.matmul(w)
}

/// Symmetric FastICA with the `tanh` contrast after PCA whitening.
///
/// Stops when `max |1 − |⟨w_new, w_old⟩|| < 1e-6` or after 500 iterations;
/// `converged` is false in the latter case.
pub fn linear_ica(x: &Tensor, n_components: usize, seed: u64) -> Result<LinearIca> {
    let white = whitening(x, n_components)?;
    let xw = white.apply(x)?;
    let t = xw.rows() as f64;
    let n = n_components;
    let mut w = random_orthogonal(n, &mut rng::stream(seed));
    let mut converged = false;
    let mut iterations = 0;
    while iterations < FASTICA_MAX_ITER {
        iterations += 1;
        let y = xw.matmul_nt(&w)?;
        let g = y.map(f64::tanh);
        let mut w_new = g.matmul_tn(&xw)?.scale(1.0 / t);
        for i in 0..n {
            let mean_dg = g.col(i).iter().map(|v| 1.0 - v * v).sum::<f64>() / t;
            for j in 0..n {
                let v = w_new.get(i, j) - mean_dg * w.get(i, j);
                w_new.set(i, j, v);
            }
        }
        let w_new = symmetric_decorrelation(&w_new)?;
        let lim = (0..n)
            .map(|i| {
                let dot: f64 = w_new.row(i).iter().zip(w.row(i)).map(|(a, b)| a * b).sum();
                (1.0 - dot.abs()).abs()
            })
            .fold(0.0, f64::max);
        w = w_new;
        if lim < FASTICA_TOLERANCE {
            converged = true;
            break;
        }
    }
    let map = LinearMap {
        mean: white.mean,
        matrix: w.matmul(&white.matrix)?,
    };
    let z = map.apply(x)?;
    Ok(LinearIca {
        map,
        z,
        converged,
        iterations,
    })
}
