use super::tape::{eval_value, eval_with_grads, Bindings, Tape, Var};
use super::tensor::ParamSet;
use crate::error::{Error, Result};

/// Maximum relative error between the tape gradient and central differences.
pub fn grad_check<F>(f: F, params: &ParamSet, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &Bindings) -> Result<Var>,
{
    let (_, analytic) = eval_with_grads(params, &f)?;
    grad_check_against(&analytic, f, params, eps)
}

/// Compare a supplied gradient against central differences of `f`.
///
/// Each entry contributes `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check_against<F>(analytic: &ParamSet, f: F, params: &ParamSet, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &Bindings) -> Result<Var>,
{
    if eps <= 0.0 {
        return Err(Error::contract("finite-difference step must be positive"));
    }
    params.check_compatible(analytic)?;
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    let names: Vec<String> = params.names().cloned().collect();
    for name in names {
        let n = params.get(&name).expect("own name").len();
        for i in 0..n {
            let orig = params.get(&name).expect("own name").values()[i];
            probe.get_mut(&name).expect("own name").values_mut()[i] = orig + eps;
            let up = eval_value(&probe, &f)?;
            probe.get_mut(&name).expect("own name").values_mut()[i] = orig - eps;
            let down = eval_value(&probe, &f)?;
            probe.get_mut(&name).expect("own name").values_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.get(&name).expect("checked").values()[i];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
