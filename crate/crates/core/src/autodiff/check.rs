use super::{Tape, Tensor, Var};
use crate::{Error, Result};

fn eval<F>(params: &[Tensor], f: &F) -> Result<(Tape, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params
        .iter()
        .enumerate()
        .map(|(i, p)| tape.param(i, p))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &vars)?;
    let v = tape.value(loss);
    if v.len() != 1 {
        return Err(Error::Input("finite_diff_check: objective must be scalar".into()));
    }
    if !v[0].is_finite() {
        return Err(Error::NonFinite("finite_diff_check objective".into()));
    }
    Ok((tape, loss))
}

/// Gradients below this magnitude are compared absolutely. Central
/// differences on structurally zero gradients (a bias feeding straight into
/// a normalization) return rounding noise near `1e-11`.
pub const FLOOR: f64 = 1e-6;

/// Compare tape gradients of the scalar objective `f` against central
/// differences with step `h`.
///
/// Returns the maximum over all trainable components of
/// `|a - n| / max(|a|, |n|, FLOOR)`. Parameter gradients are overwritten.
pub fn finite_diff_check<F>(params: &mut [Tensor], h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if h <= 0.0 {
        return Err(Error::Input(format!("finite_diff_check: h must be positive, got {h}")));
    }
    params.iter_mut().for_each(Tensor::zero_grad);
    let (tape, loss) = eval(params, &f)?;
    tape.backward(loss, params)?;
    let analytic: Vec<Vec<f64>> = params.iter().map(Tensor::grad_or_zeros).collect();

    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        if !params[i].requires_grad() {
            continue;
        }
        for j in 0..params[i].len() {
            let orig = params[i].data()[j];
            params[i].data_mut()[j] = orig + h;
            let plus = eval(params, &f).map(|(t, l)| t.value(l)[0]);
            params[i].data_mut()[j] = orig - h;
            let minus = eval(params, &f).map(|(t, l)| t.value(l)[0]);
            params[i].data_mut()[j] = orig;
            let numeric = (plus? - minus?) / (2.0 * h);
            let a = analytic[i][j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_nearly_exact() {
        let mut p = vec![Tensor::param(vec![1], vec![3.0]).unwrap()];
        let err = finite_diff_check(&mut p, 1e-5, |t, v| t.mul(v[0], v[0])).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn rejects_bad_step() {
        let mut p = vec![Tensor::param(vec![1], vec![3.0]).unwrap()];
        assert!(finite_diff_check(&mut p, 0.0, |t, v| t.mul(v[0], v[0])).is_err());
    }
}
