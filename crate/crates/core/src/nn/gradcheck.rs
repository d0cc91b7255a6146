//! Central finite-difference checks of tape gradients.

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Denominator floor for the relative error of near-zero gradients.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub worst: String,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares analytic and numeric gradients of the scalar built by `f` with
/// respect to every input tensor and every listed parameter.
pub fn check<F>(store: &ParamStore, params: &[ParamId], inputs: &[Tensor], step: f64, f: F) -> GradCheckReport
where
    F: Fn(&mut Tape, &ParamStore, &[Var]) -> Var,
{
    let eval = |store: &ParamStore, inputs: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
        let out = f(&mut tape, store, &vars);
        tape.scalar(out)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let out = f(&mut tape, store, &vars);
    let grads = tape.backward(out);
    let param_grads = grads.param_grads(&tape);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: String::new(),
    };
    let mut record = |label: String, a: f64, n: f64| {
        let e = relative_error(a, n);
        report.checked += 1;
        if e > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = report.max_rel_error.max(e);
            report.worst = format!("{label}: analytic {a:e} numeric {n:e}");
        }
    };

    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads
            .wrt(vars[k])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(input.rows(), input.cols()));
        for idx in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[idx] += step;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[idx] -= step;
            let numeric = (eval(store, &plus) - eval(store, &minus)) / (2.0 * step);
            record(format!("input {k}[{idx}]"), analytic.data()[idx], numeric);
        }
    }

    for &id in params {
        let analytic = param_grads
            .iter()
            .find(|(p, _)| *p == id)
            .map(|(_, g)| g.clone())
            .unwrap_or_else(|| {
                let v = store.value(id);
                Tensor::zeros(v.rows(), v.cols())
            });
        for idx in 0..store.value(id).len() {
            let mut plus = store.clone();
            plus.value_mut(id).data_mut()[idx] += step;
            let mut minus = store.clone();
            minus.value_mut(id).data_mut()[idx] -= step;
            let numeric = (eval(&plus, inputs) - eval(&minus, inputs)) / (2.0 * step);
            record(
                format!("param {}[{idx}]", store.name(id)),
                analytic.data()[idx],
                numeric,
            );
        }
    }
    report
}
