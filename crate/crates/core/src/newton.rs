//! Damped Newton iteration with a forward-difference Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Converged when `max_k |F_k(x)| ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter()
        .fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

/// Solves `F(x) = 0` from `x0`. `scale[k]` is a typical magnitude of `x[k]`,
/// used to size the difference steps. A trial point where `F` fails to
/// evaluate, or which does not reduce the residual, halves the step.
pub fn solve<F>(mut f: F, x0: Vec<f64>, scale: &[f64], opts: NewtonOptions) -> Result<NewtonSolution>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let n = x0.len();
    let mut x = x0;
    let mut fx = vec![0.0; n];
    f(&x, &mut fx)?;
    let mut residual = max_norm(&fx);
    let mut iterations = 0;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    let mut probe = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut f_trial = vec![0.0; n];

    while !(residual <= opts.tol) {
        if iterations >= opts.max_iter || !residual.is_finite() {
            return Err(Error::NewtonFailed { iterations, residual });
        }
        iterations += 1;

        for k in 0..n {
            let h = f64::EPSILON.sqrt() * x[k].abs().max(scale[k]);
            probe.copy_from_slice(&x);
            probe[k] += h;
            // exact representable step
            let h = probe[k] - x[k];
            f(&probe, &mut f_trial)?;
            for r in 0..n {
                jac[(r, k)] = (f_trial[r] - fx[r]) / h;
            }
        }
        let rhs = DVector::from_iterator(n, fx.iter().map(|v| -v));
        let dx = jac
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or(Error::NewtonFailed { iterations, residual })?;

        let mut alpha = 1.0;
        loop {
            for k in 0..n {
                trial[k] = x[k] + alpha * dx[k];
            }
            let ok = f(&trial, &mut f_trial).is_ok();
            let r = if ok { max_norm(&f_trial) } else { f64::NAN };
            if ok && r < residual {
                std::mem::swap(&mut x, &mut trial);
                std::mem::swap(&mut fx, &mut f_trial);
                residual = r;
                break;
            }
            alpha *= 0.5;
            if alpha < 1.0 / 1024.0 {
                return Err(Error::NewtonFailed { iterations, residual });
            }
        }
    }
    Ok(NewtonSolution {
        x,
        iterations,
        residual,
    })
}
