//! Central finite-difference check of [`Graph::backward`](crate::autograd::Graph::backward).

use alloc::vec::Vec;

use crate::autograd::{Graph, Var};
use crate::math;
use crate::{Error, Result, Tensor};

/// Evaluates the scalar `f` at `points` without recording gradients.
pub fn eval_scalar<F>(f: &F, points: &[Tensor]) -> Result<f64>
where
    F: for<'g> Fn(&mut Graph<'g>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = points.iter().map(|p| g.leaf(p.clone(), false)).collect();
    let out = f(&mut g, &vars)?;
    g.value(out).item()
}

/// Analytic gradients of `f` at `points`, one vector per input.
pub fn analytic_gradients<F>(f: &F, points: &[Tensor]) -> Result<Vec<Vec<f64>>>
where
    F: for<'g> Fn(&mut Graph<'g>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = points.iter().map(|p| g.leaf(p.clone(), true)).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    Ok(vars
        .iter()
        .zip(points)
        .map(|(&v, p)| g.take_grad(v).unwrap_or_else(|| alloc::vec![0.0; p.len()]))
        .collect())
}

/// Compares `backward` against central differences `(f(x+h) − f(x−h)) / 2h`
/// over every coordinate of every input. Returns the largest
/// `|analytic − numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn finite_diff_check<F>(f: F, points: &[Tensor], h: f64) -> Result<f64>
where
    F: for<'g> Fn(&mut Graph<'g>, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::contract("finite-difference step must be positive"));
    }
    let analytic = analytic_gradients(&f, points)?;
    let mut probe: Vec<Tensor> = points.to_vec();
    let mut worst = 0.0f64;
    for (i, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let x0 = points[i].data()[j];
            probe[i].data_mut()[j] = x0 + h;
            let up = eval_scalar(&f, &probe)?;
            probe[i].data_mut()[j] = x0 - h;
            let down = eval_scalar(&f, &probe)?;
            probe[i].data_mut()[j] = x0;
            let numeric = (up - down) / (2.0 * h);
            let err = math::abs(a - numeric) / f64::max(1e-8, math::abs(a) + math::abs(numeric));
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let square = |g: &mut Graph<'_>, v: &[Var]| g.dot(v[0], v[0]);
        let x = [Tensor::scalar(3.0)];
        let analytic = analytic_gradients(&square, &x).unwrap();
        assert_eq!(analytic[0], alloc::vec![6.0]);
        let h = 1e-5;
        let numeric = (eval_scalar(&square, &[Tensor::scalar(3.0 + h)]).unwrap()
            - eval_scalar(&square, &[Tensor::scalar(3.0 - h)]).unwrap())
            / (2.0 * h);
        assert!((numeric - 6.0).abs() < 1e-6);
        assert!(finite_diff_check(square, &x, h).unwrap() < 1e-9);
    }

    #[test]
    fn affine_function_is_exact_at_any_step() {
        let affine = |g: &mut Graph<'_>, v: &[Var]| {
            let s = g.scale(v[0], 2.5);
            let y = g.sum(s);
            Ok(g.add_scalar(y, -1.0))
        };
        let x = [Tensor::vector(alloc::vec![0.25, -4.0, 9.0])];
        for h in [1e-6, 1e-3, 0.5, 10.0] {
            assert!(finite_diff_check(affine, &x, h).unwrap() < 1e-9, "h = {h}");
        }
    }

    #[test]
    fn rejects_non_positive_step() {
        let f = |g: &mut Graph<'_>, v: &[Var]| Ok(g.sum(v[0]));
        assert!(finite_diff_check(f, &[Tensor::scalar(1.0)], 0.0).is_err());
    }
}
