//! The reduced energy
//!
//! ```text
//! J_q(u) = ||u||^2 / 2 + (q^2/4) ∫ phi_u u^2 - ||u||_p^p / p
//! ```
//!
//! on the grid, with its exact discrete derivative. The discrete potential
//! is a symmetric bilinear form in `u^2`, so the gradient of the discrete
//! energy with respect to the nodal values is `W r` where `r` is the nodal
//! Euler residual `-Δ_h u + omega u + q^2 phi_u u - |u|^{p-2} u`. Descent
//! uses the Sobolev gradient `g = (K + omega W)^{-1} W r`, whose `H^1` norm is
//! the stationarity measure reported by the solvers.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fibering::{nehari_class_of, FiberCoeffs, NehariClass};
use crate::grid::{RadialFunction, RadialGrid};
use crate::params::ProblemParams;
use crate::potential::potential_values;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// `||u||^2 / 2`
    pub quad: f64,
    /// `(q^2/4) ∫ phi_u u^2`
    pub nonlocal: f64,
    /// `||u||_p^p / p`
    pub power: f64,
    pub total: f64,
    pub q: f64,
}

/// The three functionals of `u` that make up the energy, plus the potential
/// they were computed with.
#[derive(Debug, Clone)]
pub(crate) struct Functionals {
    pub norm_sq: f64,
    pub coupling: f64,
    pub power: f64,
    pub phi: Vec<f64>,
}

pub(crate) fn functionals(grid: &RadialGrid, vals: &[f64], params: &ProblemParams) -> Functionals {
    let w = grid.weights();
    let rho: Vec<f64> = vals.iter().map(|v| v * v).collect();
    let phi = potential_values(grid, &rho, params.a);
    let norm_sq = grid.h1_inner(vals, vals, params.omega);
    let coupling = w.iter().zip(rho.iter().zip(&phi)).map(|(w, (r, f))| w * r * f).sum();
    let power = w.iter().zip(vals).map(|(w, v)| w * v.abs().powf(params.p)).sum();
    Functionals { norm_sq, coupling, power, phi }
}

impl Functionals {
    pub fn coeffs(&self, p: f64) -> FiberCoeffs {
        FiberCoeffs { norm_sq: self.norm_sq, coupling: self.coupling, power: self.power, p }
    }

    pub fn energy(&self, q: f64, p: f64) -> f64 {
        0.5 * self.norm_sq + 0.25 * q * q * self.coupling - self.power / p
    }

    /// Nodal gradients of `A`, `B` and `P` with respect to the values of `u`.
    pub fn gradients(&self, grid: &RadialGrid, vals: &[f64], params: &ProblemParams) -> [Vec<f64>; 3] {
        let w = grid.weights();
        let mut d_norm = grid.apply_stiffness(vals);
        for ((d, w), v) in d_norm.iter_mut().zip(w).zip(vals) {
            *d = 2.0 * (*d + params.omega * w * v);
        }
        let d_coupling = (0..vals.len()).map(|i| 4.0 * w[i] * self.phi[i] * vals[i]).collect();
        let d_power = (0..vals.len()).map(|i| params.p * w[i] * vals[i].abs().powf(params.p - 2.0) * vals[i]).collect();
        [d_norm, d_coupling, d_power]
    }

    /// `∂J_q / ∂u_k = W r` at every node.
    pub fn energy_derivative(&self, grid: &RadialGrid, vals: &[f64], q: f64, params: &ProblemParams) -> Vec<f64> {
        let w = grid.weights();
        let mut d = grid.apply_stiffness(vals);
        for i in 0..vals.len() {
            let v = vals[i];
            d[i] += w[i] * (params.omega * v + q * q * self.phi[i] * v - v.abs().powf(params.p - 2.0) * v);
        }
        d
    }
}

/// Energy, derivative and Sobolev gradient at one point.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub functionals: Functionals,
    pub energy: f64,
    /// `∂J / ∂u`, a covector.
    pub derivative: Vec<f64>,
    /// `(K + omega W)^{-1} ∂J`.
    pub gradient: Vec<f64>,
    /// `||gradient||_{H^1}`.
    pub stationarity: f64,
    /// Weighted `L^2` norm of the nodal residual.
    pub residual_norm: f64,
}

pub(crate) fn evaluate(grid: &RadialGrid, vals: &[f64], q: f64, params: &ProblemParams) -> Evaluation {
    let functionals = functionals(grid, vals, params);
    let energy = functionals.energy(q, params.p);
    let derivative = functionals.energy_derivative(grid, vals, q, params);
    let gradient = grid.solve_helmholtz(&derivative, params.omega);
    let stationarity = dot(&gradient, &derivative).max(0.0).sqrt();
    let residual_norm = weighted_residual_norm(grid, &derivative);
    Evaluation { functionals, energy, derivative, gradient, stationarity, residual_norm }
}

/// `||W^{-1} d||` in the weighted `L^2` norm, for a covector `d`.
pub(crate) fn weighted_residual_norm(grid: &RadialGrid, d: &[f64]) -> f64 {
    d.iter().zip(grid.weights()).map(|(d, w)| d * d / w).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_charge(q: f64) -> Result<()> {
    if q.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("charge must be finite, got {q}")))
    }
}

pub fn energy(u: &RadialFunction, q: f64, params: &ProblemParams) -> Result<EnergyBreakdown> {
    params.validate()?;
    check_charge(q)?;
    let f = functionals(u.grid(), u.vals(), params);
    let quad = 0.5 * f.norm_sq;
    let nonlocal = 0.25 * q * q * f.coupling;
    let power = f.power / params.p;
    Ok(EnergyBreakdown { quad, nonlocal, power, total: quad + nonlocal - power, q })
}

/// Nodal residual `-Δ_h u + omega u + q^2 phi_u u - |u|^{p-2} u`.
pub fn euler_residual(u: &RadialFunction, q: f64, params: &ProblemParams) -> Result<RadialFunction> {
    params.validate()?;
    check_charge(q)?;
    let grid = u.grid();
    let f = functionals(grid, u.vals(), params);
    let mut d = f.energy_derivative(grid, u.vals(), q, params);
    for (d, w) in d.iter_mut().zip(grid.weights()) {
        *d /= w;
    }
    RadialFunction::new(grid.clone(), d)
}

/// The `H^1`-preconditioned gradient: the solution of `(-Δ_h + omega) g = r`.
pub fn sobolev_gradient(u: &RadialFunction, q: f64, params: &ProblemParams) -> Result<RadialFunction> {
    params.validate()?;
    check_charge(q)?;
    let e = evaluate(u.grid(), u.vals(), q, params);
    RadialFunction::new(u.grid().clone(), e.gradient)
}

/// `||g||_{H^1}` for the Sobolev gradient `g`, equal to the dual norm of
/// `J_q'(u)`. Bounded by `residual_norm / sqrt(omega)`.
pub fn stationarity(u: &RadialFunction, q: f64, params: &ProblemParams) -> Result<f64> {
    params.validate()?;
    check_charge(q)?;
    Ok(evaluate(u.grid(), u.vals(), q, params).stationarity)
}

/// Weighted `L^2` norm of [`euler_residual`].
pub fn residual_norm(u: &RadialFunction, q: f64, params: &ProblemParams) -> Result<f64> {
    params.validate()?;
    check_charge(q)?;
    Ok(evaluate(u.grid(), u.vals(), q, params).residual_norm)
}

/// `J_q'(u)[v]`.
pub fn directional_derivative(u: &RadialFunction, v: &RadialFunction, q: f64, params: &ProblemParams) -> Result<f64> {
    u.check_same_grid(v)?;
    params.validate()?;
    check_charge(q)?;
    let f = functionals(u.grid(), u.vals(), params);
    Ok(dot(&f.energy_derivative(u.grid(), u.vals(), q, params), v.vals()))
}

pub fn nehari_classify(u: &RadialFunction, q: f64, params: &ProblemParams) -> Result<NehariClass> {
    params.validate()?;
    check_charge(q)?;
    if u.is_zero() {
        return Err(invalid("Nehari classification of the zero function"));
    }
    let f = functionals(u.grid(), u.vals(), params);
    Ok(nehari_class_of(&f.coeffs(params.p), q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fibering::{fiber_coeffs, fiber_roots, q_of_u};
    use crate::grid::{default_grid, h1_norm_sq, lp_norm_p, make_grid, GridScheme};
    use crate::potential::solve_potential;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn gaussian(grid: &Arc<RadialGrid>) -> RadialFunction {
        RadialFunction::from_fn(grid, |r| (-r * r).exp())
    }

    fn random_pair(grid: &Arc<RadialGrid>, seed: u64) -> (RadialFunction, RadialFunction) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a1, w1) = (rng.gen_range(0.5..2.0), rng.gen_range(0.3..2.0));
        let (a2, w2) = (rng.gen_range(-1.0..1.0), rng.gen_range(0.3..2.0));
        let u = RadialFunction::from_fn(grid, |r| a1 * (-(r / w1).powi(2)).exp());
        let v = RadialFunction::from_fn(grid, |r| a2 * (-(r / w2).powi(2)).exp() * (1.0 + 0.3 * r));
        (u, v)
    }

    #[test]
    fn zero_function() {
        let g = default_grid();
        let z = RadialFunction::zeros(&g);
        let p = ProblemParams::default();
        assert_eq!(energy(&z, 1.0, &p).unwrap().total, 0.0);
        assert!(euler_residual(&z, 1.0, &p).unwrap().is_zero());
        assert!(sobolev_gradient(&z, 1.0, &p).unwrap().is_zero());
        assert!(nehari_classify(&z, 1.0, &p).is_err());
    }

    /// Direct O(n^2) evaluation of `∫ phi_u u^2` from the reduced kernels,
    /// with the same diagonal correction as the solver.
    fn coupling_by_double_sum(grid: &RadialGrid, u: &[f64], a: f64) -> f64 {
        let r = grid.radii();
        let w = grid.weights();
        let n = grid.len();
        let mut total = 0.0;
        for i in 0..n {
            let mut phi = 0.0;
            for j in 0..n {
                let (lo, hi) = (r[i].min(r[j]), r[i].max(r[j]));
                let mut k = 1.0 / hi;
                if a > 0.0 {
                    let mu = 1.0 / a;
                    k -= (-mu * hi).exp() * (mu * lo).sinh() / (mu * r[i] * r[j]);
                }
                phi += k * w[j] * u[j] * u[j];
            }
            if a == 0.0 {
                phi -= std::f64::consts::PI / 3.0 * u[i] * u[i] * grid.spacing()[i].powi(2);
            }
            total += w[i] * u[i] * u[i] * phi;
        }
        total
    }

    #[test]
    fn gaussian_energy_against_direct_quadrature() {
        let params = ProblemParams::new(3.0, 1.0, 1.0).unwrap();
        let g = make_grid(20.0, 600, GridScheme::Graded).unwrap();
        let u = gaussian(&g);
        let e = energy(&u, 1.0, &params).unwrap();
        let b = coupling_by_double_sum(&g, u.vals(), 1.0);
        let direct = 0.5 * h1_norm_sq(&u, &params) + 0.25 * b - lp_norm_p(&u, 3.0).unwrap() / 3.0;
        assert_relative_eq!(e.total, direct, max_relative = 1e-10);
        assert_relative_eq!(e.total, e.quad + e.nonlocal - e.power, max_relative = 1e-12);

        // closed-form pieces on the default grid
        let g = default_grid();
        let u = gaussian(&g);
        let e = energy(&u, 1.0, &params).unwrap();
        assert_relative_eq!(e.quad, 0.5 * 7.874_804_972_861_8, max_relative = 1e-5);
        assert_relative_eq!(e.power, (std::f64::consts::PI / 3.0).powf(1.5) / 3.0, max_relative = 1e-8);
        let b = solve_potential(&u, &params).unwrap().b_coupling;
        assert_relative_eq!(e.nonlocal, 0.25 * b, max_relative = 1e-14);
    }

    #[test]
    fn coulomb_coupling_against_direct_quadrature() {
        let params = ProblemParams::new(2.5, 0.0, 1.0).unwrap();
        let g = make_grid(20.0, 500, GridScheme::Uniform).unwrap();
        let u = RadialFunction::from_fn(&g, |r| (-r).exp() * (1.0 + r));
        let f = functionals(&g, u.vals(), &params);
        assert_relative_eq!(f.coupling, coupling_by_double_sum(&g, u.vals(), 0.0), max_relative = 1e-10);
    }

    #[test]
    fn energy_monotone_in_charge() {
        let g = default_grid();
        let u = gaussian(&g);
        let p = ProblemParams::default();
        let mut last = f64::NEG_INFINITY;
        for k in 0..10 {
            let e = energy(&u, 0.3 * k as f64, &p).unwrap().total;
            assert!(e >= last);
            last = e;
        }
    }

    #[test]
    fn derivative_matches_central_differences() {
        let g = default_grid();
        for (seed, a) in [(1u64, 1.0), (2, 0.0), (3, 0.4)] {
            let params = ProblemParams::new(2.5, a, 1.0).unwrap();
            let (u, v) = random_pair(&g, seed);
            let q = 0.7;
            let h = 1e-5;
            let plus = energy(&u.axpy(h, &v).unwrap(), q, &params).unwrap().total;
            let minus = energy(&u.axpy(-h, &v).unwrap(), q, &params).unwrap().total;
            let fd = (plus - minus) / (2.0 * h);
            let exact = directional_derivative(&u, &v, q, &params).unwrap();
            assert_relative_eq!(exact, fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn sobolev_gradient_pairs_with_derivative() {
        let g = default_grid();
        let params = ProblemParams::default();
        let (u, _) = random_pair(&g, 5);
        let q = 0.9;
        let grad = sobolev_gradient(&u, q, &params).unwrap();
        let lhs = grad.h1_inner(&u, params.omega).unwrap();
        let rhs = directional_derivative(&u, &u, q, &params).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-8);
        let norm = stationarity(&u, q, &params).unwrap();
        assert_relative_eq!(norm * norm, grad.h1_inner(&grad, params.omega).unwrap(), max_relative = 1e-10);
    }

    #[test]
    fn sobolev_gradient_descends() {
        let g = default_grid();
        let params = ProblemParams::default();
        for seed in 10..15 {
            let (u, _) = random_pair(&g, seed);
            let q = 0.5;
            let grad = sobolev_gradient(&u, q, &params).unwrap();
            let e0 = energy(&u, q, &params).unwrap().total;
            let e1 = energy(&u.axpy(-1e-3, &grad).unwrap(), q, &params).unwrap().total;
            assert!(e1 < e0, "seed {seed}: {e1} >= {e0}");
        }
    }

    #[test]
    fn residual_pairs_with_weights() {
        let g = default_grid();
        let params = ProblemParams::default();
        let (u, v) = random_pair(&g, 7);
        let r = euler_residual(&u, 0.8, &params).unwrap();
        let weighted = g.integrate(&r.vals().iter().zip(v.vals()).map(|(a, b)| a * b).collect::<Vec<_>>());
        let exact = directional_derivative(&u, &v, 0.8, &params).unwrap();
        assert_relative_eq!(weighted, exact, max_relative = 1e-10);
    }

    #[test]
    fn nehari_classes_on_the_fiber() {
        let g = default_grid();
        let params = ProblemParams::default();
        let u = gaussian(&g);
        let c = fiber_coeffs(&u, &params).unwrap();
        let (qu, tu) = q_of_u(&c).unwrap();
        let q = 0.6 * qu;
        let (tm, tp) = fiber_roots(&c, q).unwrap();
        assert_eq!(nehari_classify(&u.scaled(tp), q, &params).unwrap(), NehariClass::Plus);
        assert_eq!(nehari_classify(&u.scaled(tm), q, &params).unwrap(), NehariClass::Minus);
        assert_eq!(nehari_classify(&u.scaled(tu), qu, &params).unwrap(), NehariClass::Zero);
        assert!(matches!(nehari_classify(&u, q, &params).unwrap(), NehariClass::OffNehari(_)));
    }

    #[test]
    fn zero_energy_set_identities() {
        let g = default_grid();
        let params = ProblemParams::default();
        let p = params.p;
        let u = RadialFunction::from_fn(&g, |r| (-0.5 * r).exp() + 0.5 * (-r * r).exp());
        let c = fiber_coeffs(&u, &params).unwrap();
        let (q, t) = q_of_u(&c).unwrap();
        let w = u.scaled(t);
        let a = h1_norm_sq(&w, &params);
        let e = energy(&w, q, &params).unwrap().total;
        assert_relative_eq!(e, (p - 2.0) / (4.0 * p) * a, max_relative = 1e-10);
        assert_relative_eq!(lp_norm_p(&w, p).unwrap(), 2.0 / (4.0 - p) * a, max_relative = 1e-10);
    }
}
