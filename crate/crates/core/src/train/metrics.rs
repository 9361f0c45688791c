use serde::Serialize;

use crate::error::{Error, Result};

/// Mean absolute error, root-mean-square error and coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
}

/// `y` is the reference, `y_hat` the prediction.
pub fn compute_metrics(y: &[f64], y_hat: &[f64]) -> Result<Metrics> {
    if y.len() != y_hat.len() {
        return Err(Error::LengthMismatch(y.len(), y_hat.len()));
    }
    let n = y.len();
    if n < 2 {
        return Err(Error::Invalid(format!("metrics need n ≥ 2, got {n}")));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::ZeroVariance);
    }
    let nf = n as f64;
    let mean = y.iter().sum::<f64>() / nf;
    let (mut abs, mut sq, mut tot) = (0.0, 0.0, 0.0);
    for (&a, &b) in y.iter().zip(y_hat) {
        let e = a - b;
        abs += e.abs();
        sq += e * e;
        tot += (a - mean) * (a - mean);
    }
    let m = Metrics {
        mae: abs / nf,
        rmse: (sq / nf).sqrt(),
        r2: (tot - sq) / tot,
    };
    debug_assert!(m.rmse >= m.mae * (1.0 - 1e-12));
    Ok(m)
}
