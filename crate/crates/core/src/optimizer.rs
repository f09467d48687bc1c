//! Limited-memory BFGS in the discrete `H^1` metric.
//!
//! Gradients arrive as covectors (derivatives with respect to nodal values).
//! The initial inverse Hessian is `gamma (K + omega W)^{-1}`, so the method
//! reduces to Sobolev-gradient descent on its first step and after every
//! reset. Steps are capped in `H^1` relative to the current iterate and
//! accepted by Armijo backtracking. Close to convergence the energy
//! differences drop to the rounding level of the terms that make up the
//! energy; there a step is also accepted when the value did not rise beyond
//! that level and the directional derivative shrank (approximate Wolfe).

use std::collections::VecDeque;

use crate::energy::{dot, weighted_residual_norm};
use crate::grid::RadialGrid;

#[derive(Debug, Clone, Copy)]
pub(crate) struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Largest step as a fraction of the iterate's `H^1` norm.
    pub max_step: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Also require the weighted `L^2` norm of the gradient covector (the
    /// nodal residual) to be below `tol`, not only its `H^1`-dual norm.
    pub residual_stop: bool,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 8,
            max_iter: 2000,
            tol: 1e-6,
            max_step: 0.5,
            armijo: 1e-4,
            max_backtracks: 40,
            residual_stop: false,
        }
    }
}

/// One objective evaluation.
pub(crate) struct Eval {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Multiplies the gradient norms to give the stopping measure.
    pub measure_scale: f64,
    /// Size of the terms summed into `value`, which sets its rounding level.
    pub value_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Status {
    Converged,
    MaxIterations,
    LineSearchFailed,
    /// The guard asked to stop.
    Stopped,
}

pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub measure: f64,
    pub iterations: usize,
    pub status: Status,
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

pub(crate) fn minimize(
    grid: &RadialGrid,
    omega: f64,
    x0: Vec<f64>,
    opts: &LbfgsOptions,
    eval: impl Fn(&[f64]) -> Option<Eval>,
    mut guard: impl FnMut(&[f64]) -> bool,
) -> Option<Outcome> {
    let precondition = |g: &[f64]| grid.solve_helmholtz(g, omega);
    let h1_sq = |v: &[f64]| grid.h1_inner(v, v, omega);
    let measure_of = |e: &Eval, pg: &[f64]| {
        let dual = dot(pg, &e.grad).max(0.0).sqrt();
        let m = if opts.residual_stop { dual.max(weighted_residual_norm(grid, &e.grad)) } else { dual };
        e.measure_scale * m
    };

    let mut x = x0;
    let mut cur = eval(&x)?;
    let mut pg = precondition(&cur.grad);
    let mut measure = measure_of(&cur, &pg);
    let mut hist: VecDeque<Pair> = VecDeque::with_capacity(opts.memory);
    let mut gamma = 1.0;

    let mut iterations = 0;
    let status = loop {
        if measure <= opts.tol {
            break Status::Converged;
        }
        if iterations >= opts.max_iter {
            break Status::MaxIterations;
        }
        iterations += 1;

        // two-loop recursion
        let mut d = cur.grad.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for pair in hist.iter().rev() {
            let a = pair.rho * dot(&pair.s, &d);
            d.iter_mut().zip(&pair.y).for_each(|(d, y)| *d -= a * y);
            alphas.push(a);
        }
        let mut d = precondition(&d);
        d.iter_mut().for_each(|v| *v *= gamma);
        for (pair, a) in hist.iter().zip(alphas.iter().rev()) {
            let b = pair.rho * dot(&pair.y, &d);
            d.iter_mut().zip(&pair.s).for_each(|(d, s)| *d += (a - b) * s);
        }
        d.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&cur.grad, &d);
        if !(slope < 0.0) {
            hist.clear();
            gamma = 1.0;
            d = pg.iter().map(|v| -v).collect();
            slope = dot(&cur.grad, &d);
        }

        let d_norm = h1_sq(&d).sqrt();
        let x_norm = h1_sq(&x).sqrt();
        let mut step = 1.0;
        if x_norm > 0.0 && d_norm > opts.max_step * x_norm {
            step = opts.max_step * x_norm / d_norm;
        }

        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x + step * d).collect();
            if let Some(e) = eval(&trial) {
                let armijo = e.value <= cur.value + opts.armijo * step * slope;
                let flat =
                    e.value <= cur.value + 1e-12 * cur.value_scale && dot(&e.grad, &d).abs() <= 0.9 * slope.abs();
                if e.value.is_finite() && (armijo || flat) {
                    accepted = Some((trial, e));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((next_x, next)) = accepted else {
            if hist.is_empty() {
                break Status::LineSearchFailed;
            }
            hist.clear();
            gamma = 1.0;
            continue;
        };

        let s: Vec<f64> = next_x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
        let next_pg = precondition(&next.grad);
        let sy = dot(&s, &y);
        if sy > 1e-12 * h1_sq(&s).sqrt() * dot(&y, &y).sqrt().max(f64::MIN_POSITIVE) && sy > 0.0 {
            let py: Vec<f64> = next_pg.iter().zip(&pg).map(|(a, b)| a - b).collect();
            let ypy = dot(&y, &py);
            if ypy > 0.0 {
                gamma = sy / ypy;
            }
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back(Pair { s, y, rho: 1.0 / sy });
        }
        x = next_x;
        cur = next;
        pg = next_pg;
        measure = measure_of(&cur, &pg);
        if !guard(&x) {
            break Status::Stopped;
        }
    };
    Some(Outcome { x, measure, iterations, status })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, GridScheme};

    #[test]
    fn quadratic_energy_reaches_helmholtz_solution() {
        // J(x) = x^T (K + W) x / 2 - b^T x has its minimiser at (K + W)^{-1} b
        let g = make_grid(10.0, 200, GridScheme::Graded).unwrap();
        let b: Vec<f64> = g.radii().iter().zip(g.weights()).map(|(r, w)| w * (-r * r).exp()).collect();
        let eval = |x: &[f64]| {
            let mut grad = g.apply_stiffness(x);
            for i in 0..x.len() {
                grad[i] += g.weights()[i] * x[i] - b[i];
            }
            let value = 0.5 * g.h1_inner(x, x, 1.0) - dot(&b, x);
            Some(Eval { value, grad, measure_scale: 1.0, value_scale: 0.0 })
        };
        let x0: Vec<f64> = g.radii().iter().map(|r| 1.0 / (1.0 + r)).collect();
        let opts = LbfgsOptions { tol: 1e-10, ..Default::default() };
        let out = minimize(&g, 1.0, x0, &opts, eval, |_| true).unwrap();
        assert_eq!(out.status, Status::Converged);
        let exact = g.solve_helmholtz(&b, 1.0);
        let err: f64 = out.x.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
        assert!(out.iterations < 10);
    }
}
