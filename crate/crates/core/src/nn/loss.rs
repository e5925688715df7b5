use crate::error::{Error, Result};

/// Mean squared error and its gradient with respect to the predictions.
pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if predictions.is_empty() {
        return Err(Error::Empty("mse predictions"));
    }
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            context: "mse targets",
            expected: predictions.len(),
            received: targets.len(),
        });
    }
    if predictions.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mse input".into()));
    }
    let n = predictions.len() as f64;
    let mut loss = 0.0;
    let grad = predictions
        .iter()
        .zip(targets)
        .map(|(p, v)| {
            let r = p - v;
            loss += r * r;
            2.0 * r / n
        })
        .collect();
    Ok((loss / n, grad))
}
