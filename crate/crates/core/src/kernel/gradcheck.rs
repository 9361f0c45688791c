//! Central finite-difference check of recorded gradients.
//!
//! A coordinate whose second difference is too large for a smooth function
//! straddles a kink (ReLU at zero, max-pool tie). Such coordinates are scored
//! by the best of the central and one-sided differences and counted in
//! `kinks`.

use super::graph::{Graph, Var};
use super::params::ParamStore;
use super::Tensor;
use crate::error::Result;

/// Gradients smaller than this are compared absolutely rather than relatively.
pub const REL_FLOOR: f64 = 1e-3;

/// Second difference over `step`, relative to the gradient, that marks a kink.
pub const KINK_RATIO: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Where `max_rel_error` occurred, e.g. `param trunk.0.weight[17]`.
    pub worst: String,
    pub checked: usize,
    pub kinks: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn score(analytic: f64, base: f64, plus: f64, minus: f64, step: f64) -> (f64, bool) {
    let central = rel_error(analytic, (plus - minus) / (2.0 * step));
    let curvature = (plus - 2.0 * base + minus).abs() / step;
    if curvature <= KINK_RATIO * analytic.abs().max(REL_FLOOR) {
        return (central, false);
    }
    let one_sided = rel_error(analytic, (plus - base) / step).min(rel_error(analytic, (base - minus) / step));
    (central.min(one_sided), one_sided < central)
}

fn evaluate<F>(params: &ParamStore, inputs: &[Tensor], build: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = build(&mut g, params, &vars)?;
    Ok(g.value(out).item())
}

/// Compare the gradient of the scalar built by `build` against central
/// differences with step `step`, over every element of every parameter in
/// `params` and every tensor in `inputs`.
pub fn grad_check<F>(
    params: &mut ParamStore,
    inputs: &mut [Tensor],
    step: f64,
    build: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = build(&mut g, params, &vars)?;
    let base = g.value(out).item();
    g.backward(out)?;

    let mut analytic_params: Vec<Vec<f64>> =
        params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
    for (id, grad) in g.param_grads() {
        if let Some(grad) = grad {
            analytic_params[id.index()].copy_from_slice(grad);
        }
    }
    let analytic_inputs: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs.iter())
        .map(|(&v, t)| g.grad(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();
    drop(g);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
        kinks: 0,
    };
    let note = |(err, kink): (f64, bool), what: String, report: &mut GradCheckReport| {
        report.checked += 1;
        report.kinks += usize::from(kink);
        if err > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = err.max(report.max_rel_error);
            report.worst = what;
        }
    };

    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        for (j, &analytic) in analytic_params[id.index()].iter().enumerate() {
            let orig = params.get(id).data()[j];
            params.get_mut(id).data_mut()[j] = orig + step;
            let plus = evaluate(params, inputs, &build)?;
            params.get_mut(id).data_mut()[j] = orig - step;
            let minus = evaluate(params, inputs, &build)?;
            params.get_mut(id).data_mut()[j] = orig;
            let scored = score(analytic, base, plus, minus, step);
            note(scored, format!("param {}[{j}]", params.name(id)), &mut report);
        }
    }
    for i in 0..inputs.len() {
        for (j, &analytic) in analytic_inputs[i].iter().enumerate() {
            let orig = inputs[i].data()[j];
            inputs[i].data_mut()[j] = orig + step;
            let plus = evaluate(params, inputs, &build)?;
            inputs[i].data_mut()[j] = orig - step;
            let minus = evaluate(params, inputs, &build)?;
            inputs[i].data_mut()[j] = orig;
            let scored = score(analytic, base, plus, minus, step);
            note(scored, format!("input {i}[{j}]"), &mut report);
        }
    }
    Ok(report)
}
