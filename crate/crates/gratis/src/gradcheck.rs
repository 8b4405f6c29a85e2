//! Central finite-difference checking of analytic gradients.

use indexmap::IndexMap;

use crate::params::{Bound, Params};
use crate::tensor::{Tape, Var};
use crate::Error;

/// Per-parameter comparison of analytic and numeric gradients.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// max relative error per parameter
    pub per_param: IndexMap<String, f64>,
    /// elements where either gradient was NaN, as (param, flat index)
    pub nan_elements: Vec<(String, usize)>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.per_param.values().cloned().fold(0.0, f64::max)
    }
}

/// Compare the analytic gradient of a deterministic scalar function against
/// central differences `(f(p+eps) - f(p-eps)) / 2eps`, elementwise over every
/// parameter. Relative error uses a `max(|a|, |n|, 1e-8)` denominator.
pub fn grad_check<F>(
    f: F,
    params: &mut Params,
    epsilon: f64,
) -> Result<GradCheckReport, Error>
where
    F: Fn(&mut Tape, &mut Bound, &Params) -> Result<Var, Error>,
{
    assert!(epsilon > 0.0, "epsilon must be positive");
    // analytic pass
    params.zero_grad();
    let mut tape = Tape::new();
    let mut bound = Bound::new();
    let loss = f(&mut tape, &mut bound, params)?;
    tape.backward(loss)?;
    bound.accumulate(&tape, params)?;

    let names: Vec<String> = params.names().map(String::from).collect();
    let mut per_param = IndexMap::new();
    let mut nan_elements = Vec::new();
    for name in &names {
        let n_elem = params.get(name)?.numel();
        let analytic = params.grad(name)?.to_vec();
        let mut max_err: f64 = 0.0;
        for e in 0..n_elem {
            let orig = params.get(name)?.data[e];
            params.get_mut(name)?.data[e] = orig + epsilon;
            let plus = eval(&f, params)?;
            params.get_mut(name)?.data[e] = orig - epsilon;
            let minus = eval(&f, params)?;
            params.get_mut(name)?.data[e] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[e];
            if a.is_nan() || numeric.is_nan() {
                nan_elements.push((name.clone(), e));
                continue;
            }
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            max_err = max_err.max((a - numeric).abs() / denom);
        }
        per_param.insert(name.clone(), max_err);
    }
    Ok(GradCheckReport {
        per_param,
        nan_elements,
    })
}

fn eval<F>(f: &F, params: &Params) -> Result<f64, Error>
where
    F: Fn(&mut Tape, &mut Bound, &Params) -> Result<Var, Error>,
{
    let mut tape = Tape::new();
    let mut bound = Bound::new();
    let loss = f(&mut tape, &mut bound, params)?;
    Ok(tape.value(loss).data[0])
}
