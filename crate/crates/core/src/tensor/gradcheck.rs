//! Central-difference gradient verification.
//!
//! Analytic gradients are compared to the five-point central difference
//! `(8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h`.

use serde::{Deserialize, Serialize};

use super::{Graph, Tensor, Var};
use crate::error::{CectError, Result};

/// Gradients smaller than this are compared in absolute terms.
pub const REL_ERR_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(input index, flat coordinate)` of the worst mismatch.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Coordinates left out because a ReLU changed state inside the
    /// difference stencil, where the function is not differentiable.
    pub skipped: Vec<(usize, usize)>,
    pub eps: f64,
    pub tol: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

fn evaluate<F>(f: &F, inputs: &[Tensor<f64>], with_grad: bool) -> Result<(f64, u64, Graph<f64>, Vec<Var>)>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| {
            if with_grad {
                g.param(t.clone())
            } else {
                g.input(t.clone())
            }
        })
        .collect();
    let y = f(&mut g, &vars)?;
    g.check_finite()?;
    let value = g.value(y).item()?;
    if with_grad {
        g.backward(y)?;
    }
    Ok((value, g.relu_pattern(), g, vars))
}

/// Checks `f` at the listed `(input, coordinate)` pairs. `f` must return a
/// scalar.
pub fn grad_check_at<F>(
    f: F,
    inputs: &[Tensor<f64>],
    coords: &[(usize, usize)],
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    if !(1e-5..=1e-2).contains(&eps) {
        return Err(CectError::Parameter {
            name: "eps".into(),
            detail: format!("{eps} outside [1e-5, 1e-2]"),
        });
    }
    let (_, pattern, graph, vars) = evaluate(&f, inputs, true)?;
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
        skipped: Vec::new(),
        eps,
        tol,
        passed: true,
    };
    let mut perturbed: Vec<Tensor<f64>> = inputs.to_vec();
    for &(which, coord) in coords {
        let analytic = graph.grad(vars[which]).map_or(0.0, |t| t.data()[coord]);
        let orig = inputs[which].data()[coord];
        let mut smooth = true;
        let mut at = |offset: f64| -> Result<f64> {
            perturbed[which].data_mut()[coord] = orig + offset;
            let (v, p, ..) = evaluate(&f, &perturbed, false)?;
            smooth &= p == pattern;
            Ok(v)
        };
        // Fourth-order central stencil: layer norm over very few channels is
        // sharply curved, and the plain two-point rule's O(eps²) truncation
        // error shows up there.
        let d1 = at(eps)? - at(-eps)?;
        let d2 = at(2.0 * eps)? - at(-2.0 * eps)?;
        perturbed[which].data_mut()[coord] = orig;
        if !smooth {
            report.skipped.push((which, coord));
            continue;
        }
        let numeric = (8.0 * d1 - d2) / (12.0 * eps);
        let err = relative_error(analytic, numeric);
        if err > report.max_rel_err || report.worst.is_none() {
            report.max_rel_err = report.max_rel_err.max(err);
            if err >= report.max_rel_err {
                report.worst = Some((which, coord));
            }
        }
        report.checked += 1;
    }
    report.passed = report.max_rel_err < tol;
    Ok(report)
}

/// Checks every coordinate of a single input.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let coords: Vec<(usize, usize)> = (0..x.numel()).map(|i| (0, i)).collect();
    grad_check_at(|g, v| f(g, v[0]), std::slice::from_ref(x), &coords, eps, tol)
}
