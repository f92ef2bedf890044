//! Finite-difference gradient checking.
//!
//! The checked function receives a tape plus one leaf per parameter and
//! returns the scalar output node, so the same closure drives both the
//! analytic (backward) and numeric (central-difference) paths.

use crate::error::{Error, Result};
use crate::tape::{GradTape, NodeId};
use crate::tensor::Tensor;

/// Outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub pass: bool,
    /// (parameter index, entry index) of the worst mismatch.
    pub worst_entry: Option<(usize, usize)>,
}

/// Builds the computation under test: inserts ops on `tape` using the
/// supplied parameter leaves and returns the scalar output node.
pub trait ScalarFn: Fn(&mut GradTape, &[NodeId]) -> Result<NodeId> {}
impl<F: Fn(&mut GradTape, &[NodeId]) -> Result<NodeId>> ScalarFn for F {}

fn eval(f: &impl ScalarFn, params: &[Tensor]) -> Result<f64> {
    let mut tape = GradTape::new();
    let ids: Vec<NodeId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &ids)?;
    let value = tape.value(out).item()?;
    if tape.poisoned() || !value.is_finite() {
        return Err(Error::numeric(
            "gradient check: function produced non-finite values".to_string(),
        ));
    }
    Ok(value)
}

/// Analytic gradients of `f` with respect to every parameter, via one
/// taped forward pass and one backward pass.
pub fn analytic_gradient(f: &impl ScalarFn, params: &[Tensor]) -> Result<Vec<Tensor>> {
    let mut tape = GradTape::new();
    let ids: Vec<NodeId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &ids)?;
    tape.backward(out)?;
    Ok(ids.iter().map(|&id| tape.grad(id)).collect())
}

/// Central-difference gradients: `(f(p+eps) - f(p-eps)) / (2 eps)` per
/// parameter entry.
#[allow(clippy::needless_range_loop)]
pub fn numeric_gradient(f: &impl ScalarFn, params: &[Tensor], epsilon: f64) -> Result<Vec<Tensor>> {
    let mut grads = Vec::with_capacity(params.len());
    let mut work: Vec<Tensor> = params.to_vec();
    for pi in 0..params.len() {
        let mut g = vec![0.0; params[pi].len()];
        for ei in 0..params[pi].len() {
            let orig = work[pi].data()[ei];
            work[pi].data_mut()[ei] = orig + epsilon;
            let plus = eval(f, &work)?;
            work[pi].data_mut()[ei] = orig - epsilon;
            let minus = eval(f, &work)?;
            work[pi].data_mut()[ei] = orig;
            g[ei] = (plus - minus) / (2.0 * epsilon);
        }
        grads.push(Tensor::from_raw(params[pi].shape().to_vec(), g));
    }
    Ok(grads)
}

/// Entry-wise relative error `|a - n| / max(|a|, |n|, 1e-8)`; passes iff
/// the maximum is below `tolerance`.
pub fn compare_gradients(
    analytic: &[Tensor],
    numeric: &[Tensor],
    tolerance: f64,
) -> GradCheckReport {
    let mut max_rel = 0.0;
    let mut worst = None;
    for (pi, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        for (ei, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
            let rel = (av - nv).abs() / av.abs().max(nv.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
                worst = Some((pi, ei));
            }
        }
    }
    GradCheckReport {
        max_relative_error: max_rel,
        pass: max_rel < tolerance,
        worst_entry: worst,
    }
}

/// Full check: analytic vs central differences for every parameter entry.
///
/// Runs the forward pass twice first; if the two scalar outputs disagree
/// the function is non-deterministic and the check aborts with a
/// diagnostic error.
pub fn grad_check(
    f: &impl ScalarFn,
    params: &[Tensor],
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::contract(format!(
            "grad_check: epsilon must be in (0, 1e-2], got {epsilon}"
        )));
    }
    let first = eval(f, params)?;
    let second = eval(f, params)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::numeric(format!(
            "grad_check: function is non-deterministic ({first} vs {second})"
        )));
    }
    let analytic = analytic_gradient(f, params)?;
    let numeric = numeric_gradient(f, params, epsilon)?;
    Ok(compare_gradients(&analytic, &numeric, tolerance))
}
