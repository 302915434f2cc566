//! Central finite differences, used as the independent oracle for every
//! analytic gradient in the crate.

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{GmemError, Result};

pub const DEFAULT_FD_EPS: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-7;

/// `(f(θ + eps·e_i) − f(θ − eps·e_i)) / (2·eps)` for every coordinate of
/// every trainable parameter in `params`. Frozen parameters get `None`.
///
/// `f` is evaluated twice at the unperturbed point first; differing results
/// mean the function is not deterministic and the oracle refuses to run.
pub fn finite_difference_grad<F>(mut f: F, params: &mut ParamStore, eps: f64) -> Result<Vec<Option<Tensor>>>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(GmemError::Contract(format!("finite-difference eps must be positive, got {eps}")));
    }
    let first = f(params)?;
    let second = f(params)?;
    if first.to_bits() != second.to_bits() {
        return Err(GmemError::Oracle(format!(
            "function is not deterministic: {first} then {second}"
        )));
    }

    let ids: Vec<_> = params
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.trainable, p.value.shape().to_vec()))
        .collect();
    let mut out = Vec::with_capacity(ids.len());
    for (i, trainable, shape) in ids {
        if !trainable {
            out.push(None);
            continue;
        }
        let id = super::params::ParamId(i);
        let n = params.get(id).value.numel();
        let mut grad = vec![0.0; n];
        for (k, slot) in grad.iter_mut().enumerate() {
            let orig = params.get(id).value.data()[k];
            params.get_mut(id).value.data_mut()[k] = orig + eps;
            let plus = f(params)?;
            params.get_mut(id).value.data_mut()[k] = orig - eps;
            let minus = f(params)?;
            params.get_mut(id).value.data_mut()[k] = orig;
            *slot = (plus - minus) / (2.0 * eps);
        }
        out.push(Some(Tensor::new(shape, grad)?));
    }
    Ok(out)
}

/// Worst normalized error between two gradients:
/// `max |a − n| / max(|a|, |n|, ABS_FLOOR / REL_TOL)`.
///
/// A value `≤ REL_TOL` means every coordinate is within `REL_TOL` relative or
/// `ABS_FLOOR` absolute.
pub fn max_normalized_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    let floor = ABS_FLOOR / REL_TOL;
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Coordinate-wise pass test at the given tolerances.
pub fn grads_match(analytic: &Tensor, numeric: &Tensor, rel: f64, abs: f64) -> bool {
    analytic.shape() == numeric.shape()
        && analytic
            .data()
            .iter()
            .zip(numeric.data())
            .all(|(a, n)| (a - n).abs() <= abs.max(rel * a.abs().max(n.abs())))
}
