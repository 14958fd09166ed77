//! Central finite-difference oracle for tape gradients.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Floor of the relative-error denominator.
pub const REL_ERR_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(input, entry)` of the worst mismatch.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Entries whose relative error exceeds the tolerance.
    pub failing: usize,
    /// Largest `|a - b|` over all entries.
    pub max_abs_diff: f64,
    /// Largest `max(|a|, |b|)` among failing entries.
    pub largest_failing: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

/// Value of `f` and the tape gradient with respect to each input.
pub fn analytic_gradients<F>(f: &F, xs: &[Tensor]) -> Result<(f64, Vec<Tensor>)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = xs.iter().map(|x| tape.param(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let value = tape.value(out).item();
    tape.backward(out)?;
    let grads = vars
        .iter()
        .zip(xs)
        .map(|(&v, x)| {
            tape.grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(x.shape()))
        })
        .collect();
    Ok((value, grads))
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every entry
/// of every input.
pub fn numeric_gradients<F>(f: &F, xs: &[Tensor], step: f64) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };
    let mut inputs = xs.to_vec();
    let mut grads = Vec::with_capacity(xs.len());
    for k in 0..xs.len() {
        let mut g = Tensor::zeros(xs[k].shape());
        for i in 0..xs[k].numel() {
            let orig = xs[k].data()[i];
            inputs[k].data_mut()[i] = orig + step;
            let plus = eval(&inputs)?;
            inputs[k].data_mut()[i] = orig - step;
            let minus = eval(&inputs)?;
            inputs[k].data_mut()[i] = orig;
            g.data_mut()[i] = (plus - minus) / (2.0 * step);
        }
        grads.push(g);
    }
    Ok(grads)
}

pub fn compare_gradients(analytic: &[Tensor], numeric: &[Tensor], tolerance: f64) -> GradCheckReport {
    let mut max_rel_err = 0.0;
    let mut worst = None;
    let mut checked = 0;
    let mut failing = 0;
    let mut max_abs_diff: f64 = 0.0;
    let mut largest_failing: f64 = 0.0;
    let mut finite = true;
    for (k, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        for (i, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
            checked += 1;
            let err = relative_error(av, nv);
            if !err.is_finite() {
                finite = false;
            }
            max_abs_diff = max_abs_diff.max((av - nv).abs());
            if !(err < tolerance) {
                failing += 1;
                largest_failing = largest_failing.max(av.abs().max(nv.abs()));
            }
            if err > max_rel_err || worst.is_none() {
                max_rel_err = err;
                worst = Some((k, i));
            }
        }
    }
    GradCheckReport {
        max_rel_err,
        worst,
        checked,
        failing,
        max_abs_diff,
        largest_failing,
        tolerance,
        pass: finite && max_rel_err < tolerance,
    }
}

/// Compares backward's gradient against central differences for several inputs.
pub fn finite_diff_check_many<F>(f: F, xs: &[Tensor], step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (_, analytic) = analytic_gradients(&f, xs)?;
    let numeric = numeric_gradients(&f, xs, step)?;
    Ok(compare_gradients(&analytic, &numeric, tolerance))
}

pub fn finite_diff_check<F>(f: F, x: &Tensor, step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    finite_diff_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), step, tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let x = Tensor::scalar(3.0);
        let f = |tape: &mut Tape, v: &[Var]| tape.mul(v[0], v[0]);
        let (value, analytic) = analytic_gradients(&f, std::slice::from_ref(&x)).unwrap();
        assert_eq!(value, 9.0);
        assert_eq!(analytic[0].item(), 6.0);
        let numeric = numeric_gradients(&f, &[x], 1e-5).unwrap();
        assert!((numeric[0].item() - 6.0).abs() < 1e-8);
    }

    #[test]
    fn corrupted_adjoint_fails() {
        let x = Tensor::row(vec![0.3, -0.2, 0.9]);
        let f = |tape: &mut Tape, v: &[Var]| {
            let t = tape.tanh(v[0])?;
            tape.sum(t)
        };
        let (_, mut analytic) = analytic_gradients(&f, std::slice::from_ref(&x)).unwrap();
        let numeric = numeric_gradients(&f, &[x], 1e-5).unwrap();
        assert!(compare_gradients(&analytic, &numeric, 1e-5).pass);
        analytic[0].data_mut()[1] *= 1.01;
        let report = compare_gradients(&analytic, &numeric, 1e-5);
        assert!(!report.pass);
        assert_eq!(report.worst, Some((0, 1)));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-10, 0.0) - 1e-2).abs() < 1e-15);
    }
}
