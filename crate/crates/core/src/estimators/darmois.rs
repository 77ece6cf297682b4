//! Darmois construction: independent uniform components from any 2-D
//! distribution, via a marginal and a conditional CDF.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::ranks;
use crate::numerics::Tensor;

pub const MIN_POINTS: usize = 1000;
/// Kernel support in bandwidths; weights beyond are below `e^{-32}`.
const KERNEL_REACH: f64 = 8.0;

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb, `0.9 · min(σ̂, IQR / 1.34) · T^{-1/5}`.
pub fn silverman_bandwidth(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let iqr = quantile(&s, 0.75) - quantile(&s, 0.25);
    let sd = std_dev(x);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (x.len() as f64).powf(-0.2)
}

/// `z₁ = rank(x₁) / (T + 1)`; `z₂` is the Gaussian-kernel estimate of the
/// conditional CDF of `x₂` given `x₁`, evaluated at each point, with
/// Silverman's bandwidth for `x₁`. The point itself counts with half
/// weight, so both outputs lie in `(0, 1)`.
pub fn darmois_transform(x: &Tensor) -> Result<Tensor> {
    darmois_transform_with(x, 1.0)
}

/// As [`darmois_transform`] with the bandwidth scaled by `bandwidth_factor`.
///
/// Smaller factors trade variance for bias: on strongly curved mixtures a
/// wide kernel blurs the conditional distribution across `x₁`, which leaves
/// `z₂` non-uniform and dependent on `z₁`.
pub fn darmois_transform_with(x: &Tensor, bandwidth_factor: f64) -> Result<Tensor> {
    if !(bandwidth_factor > 0.0 && bandwidth_factor.is_finite()) {
        return Err(Error::Config(format!(
            "bandwidth factor must be positive, got {bandwidth_factor}"
        )));
    }
    if x.cols() != 2 {
        return Err(Error::dim("darmois input columns", 2, x.cols()));
    }
    let t = x.rows();
    if t < MIN_POINTS {
        return Err(Error::Contract(format!(
            "darmois construction needs at least {MIN_POINTS} points, got {t}"
        )));
    }
    x.ensure_finite("darmois input")?;
    let x1 = x.col(0);
    let x2 = x.col(1);
    for (j, c) in [&x1, &x2].into_iter().enumerate() {
        if c.iter().all(|&v| v == c[0]) {
            return Err(Error::Degenerate(format!("column {j} is constant")));
        }
    }
    let z1: Vec<f64> = ranks(&x1).into_iter().map(|r| r / (t + 1) as f64).collect();

    let bw = bandwidth_factor * silverman_bandwidth(&x1);
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| x1[a].total_cmp(&x1[b]));
    let sorted_x1: Vec<f64> = order.iter().map(|&i| x1[i]).collect();
    let inv = 1.0 / (2.0 * bw * bw);
    let z2: Vec<f64> = (0..t)
        .into_par_iter()
        .map(|i| {
            let lo = sorted_x1.partition_point(|&v| v < x1[i] - KERNEL_REACH * bw);
            let hi = sorted_x1.partition_point(|&v| v <= x1[i] + KERNEL_REACH * bw);
            let (mut num, mut den) = (0.0, 0.0);
            for &j in &order[lo..hi] {
                let w = (-(x1[j] - x1[i]).powi(2) * inv).exp();
                den += w;
                if x2[j] < x2[i] {
                    num += w;
                } else if x2[j] == x2[i] {
                    num += 0.5 * w;
                }
            }
            num / den
        })
        .collect();
    Ok(Tensor::from_fn(t, 2, |i, j| if j == 0 { z1[i] } else { z2[i] }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn independent_uniforms_pass_through() {
        let mut r = rng::stream(1);
        let x = Tensor::from_fn(10_000, 2, |_, _| r.random::<f64>());
        let z = darmois_transform(&x).unwrap();
        let dev = z.sub(&x).unwrap().max_abs();
        assert!(dev <= 0.05, "max deviation {dev}");
    }

    #[test]
    fn first_output_is_monotone_in_first_input() {
        let mut r = rng::stream(2);
        let x = Tensor::from_fn(2000, 2, |_, _| r.random::<f64>() * 3.0 - 1.0);
        let z = darmois_transform(&x).unwrap();
        let mut idx: Vec<usize> = (0..2000).collect();
        idx.sort_by(|&a, &b| x.get(a, 0).total_cmp(&x.get(b, 0)));
        assert!(idx.windows(2).all(|w| z.get(w[0], 0) <= z.get(w[1], 0)));
        assert!(z.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn preconditions() {
        assert!(matches!(
            darmois_transform(&Tensor::zeros(2000, 3)),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            darmois_transform(&Tensor::zeros(10, 2)),
            Err(Error::Contract(_))
        ));
        let x = Tensor::from_fn(1500, 2, |i, j| if j == 0 { i as f64 } else { 1.0 });
        assert!(matches!(darmois_transform(&x), Err(Error::Degenerate(_))));
    }

    #[test]
    fn narrower_kernel_tracks_a_sliding_conditional() {
        // x₂ = 3 x₁ + small noise: the conditional shifts fast along x₁.
        use rand_distr::{Distribution, StandardNormal};
        let mut r = rng::stream(4);
        let x = Tensor::from_fn(10_000, 2, |_, _| StandardNormal.sample(&mut r));
        let x = Tensor::from_fn(10_000, 2, |i, j| {
            if j == 0 {
                x.get(i, 0)
            } else {
                3.0 * x.get(i, 0) + 0.3 * x.get(i, 1)
            }
        });
        let ks = |f: f64| crate::eval::ks_uniformity(&darmois_transform_with(&x, f).unwrap().col(1)).unwrap();
        assert!(ks(0.25) < ks(1.0));
        assert!(darmois_transform_with(&x, 0.0).is_err());
    }

    #[test]
    fn bandwidth_of_standard_normal_sample() {
        use rand_distr::{Distribution, StandardNormal};
        let mut r = rng::stream(3);
        let v: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut r)).collect();
        let expected = 0.9 * 5000f64.powf(-0.2);
        assert!((silverman_bandwidth(&v) / expected - 1.0).abs() < 0.05);
    }
}
