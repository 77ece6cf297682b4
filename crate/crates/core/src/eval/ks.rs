use crate::error::{Error, Result};

/// Kolmogorov–Smirnov distance between the empirical CDF of `column` and
/// the uniform(0, 1) CDF.
pub fn ks_uniformity(column: &[f64]) -> Result<f64> {
    if column.is_empty() {
        return Err(Error::Contract("ks_uniformity needs at least one value".into()));
    }
    if let Some(bad) = column.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Contract(format!("ks_uniformity value {bad} outside [0, 1]")));
    }
    let mut v = column.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    Ok(v.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let above = (i + 1) as f64 / n - x;
        let below = x - i as f64 / n;
        d.max(above).max(below)
    }))
}
