//! The minimiser `u_q` and the mountain-pass point `w_q`, and sweeps in `q`.
//!
//! Both solvers minimise a fibered energy. For a direction `v` whose fiber
//! has two critical points `t- < t+`,
//!
//! ```text
//! F+(v) = J_q(t+(v) v),   F-(v) = J_q(t-(v) v)
//! ```
//!
//! are 0-homogeneous, and since `psi'(t+-) = 0` their gradients are
//! `t+- J_q'(t+- v)`. Critical points of `F+-` are exactly the critical
//! points of `J_q` on the two Nehari components, so the iterate is rescaled
//! onto its fiber root at every evaluation and a stationary `F+-` means a
//! stationary `J_q`. Directions whose fiber has no critical point are
//! rejected by the line search.
//!
//! When the seed has no fiber minimum at `q` the minimiser falls back to
//! plain L-BFGS on `J_q` and watches the norm; falling under the collapse
//! floor is reported as the trivial attractor. The mountain-pass solver
//! deforms the segment from 0 to the minimiser by pushing down its highest
//! node, then polishes the highest node on the `N-` component.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::energy::{evaluate, functionals, Evaluation, Functionals};
use crate::error::{invalid, Error, Result};
use crate::exec::{par_map, Execution};
use crate::fibering::{fiber_roots, nehari_class_of, q_of_u, FiberCoeffs, NehariClass};
use crate::grid::{RadialFunction, RadialGrid};
use crate::optimizer::{minimize, Eval, LbfgsOptions, Status};
use crate::params::ProblemParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolutionKind {
    GlobalMin,
    LocalMin,
    MountainPass,
}

impl std::fmt::Display for SolutionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::GlobalMin => "global-min",
            Self::LocalMin => "local-min",
            Self::MountainPass => "mountain-pass",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SolutionRecord {
    pub q: f64,
    pub u: RadialFunction,
    pub energy: f64,
    /// Weighted `L^2` norm of the nodal Euler residual.
    pub residual_norm: f64,
    /// `||J_q'(u)||` in the dual `H^1` norm.
    pub stationarity: f64,
    pub nehari: NehariClass,
    pub kind: SolutionKind,
    /// The min-max level for mountain-pass records.
    pub mp_level: Option<f64>,
    pub h1_norm: f64,
    pub iterations: usize,
}

/// [`SolutionRecord`] without the profile, for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub q: f64,
    pub energy: f64,
    pub residual_norm: f64,
    pub stationarity: f64,
    pub nehari: NehariClass,
    pub kind: SolutionKind,
    pub mp_level: Option<f64>,
    pub h1_norm: f64,
    pub iterations: usize,
}

impl SolutionRecord {
    pub fn summary(&self) -> RecordSummary {
        RecordSummary {
            q: self.q,
            energy: self.energy,
            residual_norm: self.residual_norm,
            stationarity: self.stationarity,
            nehari: self.nehari,
            kind: self.kind,
            mp_level: self.mp_level,
            h1_norm: self.h1_norm,
            iterations: self.iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Bound on both the residual and the dual-norm stationarity of
    /// minimisers and of the final mountain-pass polish.
    pub tol: f64,
    pub max_iter: usize,
    pub memory: usize,
    /// L-BFGS step cap relative to the iterate norm.
    pub max_step: f64,
    /// Norm below which descent counts as collapsed onto zero.
    pub collapse_floor: f64,
    pub path_nodes: usize,
    pub path_iters: usize,
    /// Stationarity at which path deformation hands over to the polish.
    pub path_tol: f64,
    /// Energy the path maximum must stay above; `None` skips the check.
    pub barrier: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 4000,
            memory: 8,
            max_step: 0.5,
            collapse_floor: 0.0,
            path_nodes: 16,
            path_iters: 200,
            path_tol: 1e-5,
            barrier: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !(pos(self.tol) && pos(self.path_tol) && pos(self.max_step)) {
            return Err(invalid("solver tolerances and step cap must be positive"));
        }
        if self.max_iter == 0 || self.memory == 0 || self.path_nodes < 2 {
            return Err(invalid("solver budgets must be positive and the path needs 2 nodes"));
        }
        if !(self.collapse_floor >= 0.0) {
            return Err(invalid("collapse floor must be >= 0"));
        }
        Ok(())
    }

    fn lbfgs(&self) -> LbfgsOptions {
        LbfgsOptions {
            memory: self.memory,
            max_iter: self.max_iter,
            tol: self.tol,
            max_step: self.max_step,
            residual_stop: true,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Root {
    Plus,
    Minus,
}

fn root_of(c: &FiberCoeffs, q: f64, root: Root) -> Option<f64> {
    let (tm, tp) = fiber_roots(c, q)?;
    Some(match root {
        Root::Plus => tp,
        Root::Minus => tm,
    })
}

/// `J_q'(t v)` from the functionals of `v`, using `phi_{tv} = t^2 phi_v`.
fn derivative_along(grid: &RadialGrid, v: &[f64], f: &Functionals, t: f64, q: f64, params: &ProblemParams) -> Vec<f64> {
    let w = grid.weights();
    let mut d = grid.apply_stiffness(v);
    let tp = t.powf(params.p - 1.0);
    for i in 0..v.len() {
        let x = v[i];
        d[i] = t * d[i]
            + w[i] * (t * params.omega * x + q * q * t * t * t * f.phi[i] * x - tp * x.abs().powf(params.p - 2.0) * x);
    }
    d
}

fn fibered_eval(grid: &RadialGrid, v: &[f64], q: f64, params: &ProblemParams, root: Root) -> Option<Eval> {
    let f = functionals(grid, v, params);
    let c = f.coeffs(params.p);
    c.validate().ok()?;
    let t = root_of(&c, q, root)?;
    let mut grad = derivative_along(grid, v, &f, t, q, params);
    grad.iter_mut().for_each(|g| *g *= t);
    let value_scale = 0.5 * c.norm_sq * t * t + 0.25 * q * q * c.coupling * t.powi(4) + c.power * t.powf(c.p) / c.p;
    Some(Eval { value: c.psi(q, t), grad, measure_scale: 1.0 / t, value_scale })
}

fn unit(grid: &RadialGrid, v: &[f64], omega: f64) -> Vec<f64> {
    let n = grid.h1_inner(v, v, omega).sqrt();
    v.iter().map(|x| x / n).collect()
}

fn record_from(
    grid: &Arc<RadialGrid>,
    vals: Vec<f64>,
    q: f64,
    params: &ProblemParams,
    kind: Option<SolutionKind>,
    iterations: usize,
) -> Result<SolutionRecord> {
    let Evaluation { functionals: f, energy, stationarity, residual_norm, .. } = evaluate(grid, &vals, q, params);
    let nehari = nehari_class_of(&f.coeffs(params.p), q);
    let kind = kind.unwrap_or(if energy < 0.0 { SolutionKind::GlobalMin } else { SolutionKind::LocalMin });
    Ok(SolutionRecord {
        q,
        u: RadialFunction::new(Arc::clone(grid), vals)?,
        energy,
        residual_norm,
        stationarity,
        nehari,
        kind,
        mp_level: None,
        h1_norm: f.norm_sq.sqrt(),
        iterations,
    })
}

fn check_charge(q: f64) -> Result<()> {
    if q > 0.0 && q.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("charge must be positive, got {q}")))
    }
}

/// Minimises `J_q` from `seed`. The seed is used only through its direction.
pub fn find_minimizer(
    q: f64,
    params: &ProblemParams,
    seed: &RadialFunction,
    opts: &SolverOptions,
) -> Result<SolutionRecord> {
    params.validate()?;
    opts.validate()?;
    check_charge(q)?;
    if seed.is_zero() {
        return Err(invalid("seed profile is zero"));
    }
    let grid = seed.grid();
    let f = functionals(grid, seed.vals(), params);
    let c = f.coeffs(params.p);
    c.validate()?;
    let v0 = unit(grid, seed.vals(), params.omega);

    if fiber_roots(&c, q).is_some() {
        let eval = |x: &[f64]| fibered_eval(grid, x, q, params, Root::Plus);
        let out = minimize(grid, params.omega, v0, &opts.lbfgs(), eval, |_| true)
            .ok_or_else(|| Error::SearchFailed("seed left the admissible cone".into()))?;
        if out.status != Status::Converged {
            return Err(Error::NotConverged { iterations: out.iterations, residual: out.measure });
        }
        let fc = functionals(grid, &out.x, params).coeffs(params.p);
        let t = root_of(&fc, q, Root::Plus).expect("converged point has a fiber minimum");
        let vals = out.x.iter().map(|x| t * x).collect();
        return record_from(grid, vals, q, params, None, out.iterations);
    }

    // No fiber minimum: start from the degenerate point of the seed's fiber,
    // which lies on a Nehari set and so sits above the collapse floor.
    let (_, t_deg) = q_of_u(&c.scaled(1.0 / f.norm_sq.sqrt()))?;
    let x0: Vec<f64> = v0.iter().map(|x| t_deg * x).collect();
    let floor = opts.collapse_floor;
    let norm = |x: &[f64]| grid.h1_inner(x, x, params.omega).sqrt();
    let eval = |x: &[f64]| {
        let e = evaluate(grid, x, q, params);
        let f = &e.functionals;
        let value_scale = 0.5 * f.norm_sq + 0.25 * q * q * f.coupling + f.power / params.p;
        Some(Eval { value: e.energy, grad: e.derivative, measure_scale: 1.0, value_scale })
    };
    let out = minimize(grid, params.omega, x0, &opts.lbfgs(), eval, |x| norm(x) >= floor)
        .ok_or_else(|| Error::SearchFailed("energy evaluation failed at the seed".into()))?;
    let final_norm = norm(&out.x);
    if out.status == Status::Stopped || final_norm < floor.max(f64::MIN_POSITIVE) {
        return Err(Error::TrivialAttractor { norm: final_norm, floor, iterations: out.iterations });
    }
    if out.status != Status::Converged {
        return Err(Error::NotConverged { iterations: out.iterations, residual: out.measure });
    }
    record_from(grid, out.x, q, params, None, out.iterations)
}

/// Resamples a polyline of profiles at equal `H^1` arclength, keeping the ends.
fn respread(grid: &RadialGrid, path: &[Vec<f64>], omega: f64) -> Vec<Vec<f64>> {
    let m = path.len();
    let mut cum = vec![0.0; m];
    for k in 1..m {
        let d: Vec<f64> = path[k].iter().zip(&path[k - 1]).map(|(a, b)| a - b).collect();
        cum[k] = cum[k - 1] + grid.h1_inner(&d, &d, omega).sqrt();
    }
    let total = cum[m - 1];
    if !(total > 0.0) {
        return path.to_vec();
    }
    let mut out = Vec::with_capacity(m);
    out.push(path[0].clone());
    let mut seg = 1;
    for k in 1..m - 1 {
        let target = total * k as f64 / (m - 1) as f64;
        while seg < m - 1 && cum[seg] < target {
            seg += 1;
        }
        let len = cum[seg] - cum[seg - 1];
        let s = if len > 0.0 { (target - cum[seg - 1]) / len } else { 0.0 };
        out.push(path[seg - 1].iter().zip(&path[seg]).map(|(a, b)| a + s * (b - a)).collect());
    }
    out.push(path[m - 1].clone());
    out
}

/// Summary of the deformation phase, kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    pub iterations: usize,
    pub max_energy: f64,
    pub stationarity: f64,
}

fn deform_path(
    grid: &RadialGrid,
    endpoint: &[f64],
    q: f64,
    params: &ProblemParams,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, PathOutcome)> {
    let n = opts.path_nodes;
    let energy_of = |x: &[f64]| functionals(grid, x, params).energy(q, params.p);
    let mut path: Vec<Vec<f64>> = (0..=n).map(|k| endpoint.iter().map(|x| x * k as f64 / n as f64).collect()).collect();
    let mut energies: Vec<f64> = path.iter().map(|x| energy_of(x)).collect();
    let mut step = 1.0;
    let mut iterations = 0;
    loop {
        let (k, &max_energy) = energies[1..n]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, e)| (i + 1, e))
            .expect("path has interior nodes");
        if let Some(barrier) = opts.barrier {
            if max_energy < barrier {
                return Err(Error::GeometryLost { max_energy, barrier });
            }
        }
        let ev = evaluate(grid, &path[k], q, params);
        if ev.stationarity <= opts.path_tol || iterations >= opts.path_iters {
            let out = PathOutcome { iterations, max_energy, stationarity: ev.stationarity };
            return Ok((path[k].clone(), out));
        }
        iterations += 1;
        // one backtracking Sobolev-gradient step on the highest node
        let mut moved = None;
        for _ in 0..30 {
            let trial: Vec<f64> = path[k].iter().zip(&ev.gradient).map(|(x, g)| x - step * g).collect();
            let e = energy_of(&trial);
            if e < ev.energy {
                moved = Some(trial);
                break;
            }
            step *= 0.5;
        }
        let Some(trial) = moved else {
            let out = PathOutcome { iterations, max_energy, stationarity: ev.stationarity };
            return Ok((path[k].clone(), out));
        };
        step = (2.0 * step).min(1.0);
        path[k] = trial;
        path = respread(grid, &path, params.omega);
        energies = path.iter().map(|x| energy_of(x)).collect();
    }
}

/// Mountain-pass point between 0 and a minimiser.
pub fn mountain_pass(
    q: f64,
    params: &ProblemParams,
    endpoint: &SolutionRecord,
    opts: &SolverOptions,
) -> Result<SolutionRecord> {
    params.validate()?;
    opts.validate()?;
    check_charge(q)?;
    if endpoint.u.is_zero() {
        return Err(invalid("mountain-pass endpoint is zero"));
    }
    let grid = endpoint.u.grid();
    let (peak, path) = deform_path(grid, endpoint.u.vals(), q, params, opts)?;

    let admissible = |x: &[f64]| {
        let c = functionals(grid, x, params).coeffs(params.p);
        c.validate().is_ok() && fiber_roots(&c, q).is_some()
    };
    let start = if admissible(&peak) { peak } else { endpoint.u.vals().to_vec() };
    if !admissible(&start) {
        return Err(Error::SearchFailed("no direction with two fiber critical points".into()));
    }
    let eval = |x: &[f64]| fibered_eval(grid, x, q, params, Root::Minus);
    let v0 = unit(grid, &start, params.omega);
    let out = minimize(grid, params.omega, v0, &opts.lbfgs(), eval, |_| true)
        .ok_or_else(|| Error::SearchFailed("polish start left the admissible cone".into()))?;
    if out.status != Status::Converged {
        return Err(Error::NotConverged { iterations: out.iterations, residual: out.measure });
    }
    let fc = functionals(grid, &out.x, params).coeffs(params.p);
    let t = root_of(&fc, q, Root::Minus).expect("converged point has a fiber maximum");
    let vals = out.x.iter().map(|x| t * x).collect();
    let mut rec =
        record_from(grid, vals, q, params, Some(SolutionKind::MountainPass), path.iterations + out.iterations)?;
    if let Some(barrier) = opts.barrier {
        if rec.energy < barrier {
            return Err(Error::GeometryLost { max_energy: rec.energy, barrier });
        }
    }
    rec.mp_level = Some(rec.energy);
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepOptions {
    /// Seed each cell with the previous cell's minimiser. Forces a
    /// sequential sweep; otherwise every cell starts from the same seed.
    pub warm_start: bool,
    /// Relative `H^1` distance between `u_q` and `w_q` below which the
    /// branches are flagged as colliding.
    pub collapse_tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { warm_start: false, collapse_tol: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct BranchCell {
    pub q: f64,
    pub minimizer: Option<SolutionRecord>,
    pub mountain_pass: Option<SolutionRecord>,
    /// Estimate of `inf J_q` over `N+ ∪ N0`.
    pub jhat: Option<f64>,
    pub flags: Vec<String>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SolutionBranch {
    pub cells: Vec<BranchCell>,
}

impl SolutionBranch {
    pub fn qs(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.q).collect()
    }
}

/// `steps` equally spaced charges from `q_lo` to `q_hi`; a single point when
/// they coincide.
pub fn sweep_charges(q_lo: f64, q_hi: f64, steps: usize) -> Result<Vec<f64>> {
    if !(q_lo > 0.0 && q_hi >= q_lo && q_hi.is_finite()) {
        return Err(invalid(format!("need 0 < q_lo <= q_hi, got {q_lo}, {q_hi}")));
    }
    if q_lo == q_hi {
        return Ok(vec![q_lo]);
    }
    if steps < 2 {
        return Err(invalid("a sweep over a range needs at least 2 steps"));
    }
    Ok((0..steps).map(|i| q_lo + (q_hi - q_lo) * i as f64 / (steps - 1) as f64).collect())
}

fn solve_cell(q: f64, params: &ProblemParams, seed: &RadialFunction, opts: &SolverOptions) -> BranchCell {
    let mut cell =
        BranchCell { q, minimizer: None, mountain_pass: None, jhat: None, flags: Vec::new(), errors: Vec::new() };
    match find_minimizer(q, params, seed, opts) {
        Ok(min) => {
            match mountain_pass(q, params, &min, opts) {
                Ok(mp) => cell.mountain_pass = Some(mp),
                Err(e) => cell.errors.push(format!("mountain pass: {e}")),
            }
            cell.minimizer = Some(min);
        }
        Err(e) => cell.errors.push(format!("minimizer: {e}")),
    }
    cell
}

#[allow(clippy::too_many_arguments)]
pub fn continue_branch(
    q_lo: f64,
    q_hi: f64,
    steps: usize,
    params: &ProblemParams,
    seed: &RadialFunction,
    opts: &SolverOptions,
    sweep: &SweepOptions,
    execution: Execution,
) -> Result<SolutionBranch> {
    params.validate()?;
    opts.validate()?;
    let qs = sweep_charges(q_lo, q_hi, steps)?;
    let mut cells = if sweep.warm_start {
        let mut cells: Vec<BranchCell> = Vec::with_capacity(qs.len());
        let mut current = seed.clone();
        for &q in &qs {
            let cell = solve_cell(q, params, &current, opts);
            if let Some(m) = &cell.minimizer {
                current = m.u.clone();
            }
            cells.push(cell);
        }
        cells
    } else {
        par_map(execution, &qs, |&q| solve_cell(q, params, seed, opts))
    };

    // Pool of recovered minimiser directions. For each direction the fiber
    // minimum value rises with q and disappears past q(v), so the pooled
    // minimum is nondecreasing in q.
    let pool: Vec<FiberCoeffs> = cells
        .iter()
        .filter_map(|c| c.minimizer.as_ref())
        .map(|m| functionals(m.u.grid(), m.u.vals(), params).coeffs(params.p))
        .collect();
    for cell in &mut cells {
        cell.jhat =
            pool.iter().filter_map(|c| root_of(c, cell.q, Root::Plus).map(|t| c.psi(cell.q, t))).min_by(f64::total_cmp);
        match (&cell.minimizer, &cell.mountain_pass) {
            (Some(m), Some(w)) => {
                let diff = m.u.axpy(-1.0, &w.u).expect("same grid");
                let dist = diff.h1_inner(&diff, params.omega).expect("same grid").sqrt();
                if dist <= sweep.collapse_tol * m.h1_norm {
                    cell.flags.push("collapse_suspected".into());
                }
            }
            _ => cell.flags.push("branch_lost".into()),
        }
    }
    Ok(SolutionBranch { cells })
}
