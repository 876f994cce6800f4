//! Central finite differences, the reference every hand-derived gradient in
//! the crate is checked against.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn finite_difference_gradient<F>(f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("step {h} must be positive")));
    }
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.data().to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = eval(&f, x, &probe)?;
        probe[i] = orig - h;
        let down = eval(&f, x, &probe)?;
        probe[i] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    Tensor::new(x.shape().to_vec(), grad)
}

fn eval<F>(f: &F, x: &Tensor, data: &[f64]) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<f64>,
{
    let t = Tensor::new(x.shape().to_vec(), data.to_vec())?;
    let v = f(&t)?;
    if !v.is_finite() {
        return Err(Error::NonFinite("finite-difference objective".into()));
    }
    Ok(v)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`, the comparison used by gradient checks.
pub fn relative_error(a: &Tensor, b: &Tensor, floor: f64) -> f64 {
    let diff: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    diff / a.norm().max(b.norm()).max(floor)
}
