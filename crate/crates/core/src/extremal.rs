//! Lower bounds for the extremal charges `q* = sup q(u)` and
//! `q0* = sup q0(u)`.
//!
//! The search scans the trial families (and a few seeded random profiles),
//! then climbs `log q(u)` from the best seed with L-BFGS on the grid values.
//! `q(u)` is 0-homogeneous, so its gradient is orthogonal to `u` and the
//! ascent only moves along the unit sphere up to second order; the result is
//! renormalised to unit `H^1` norm. Since `q0(u) / q(u)` is the same for
//! every `u`, one maximiser serves both values.
//!
//! Everything reported is a lower bound. For `a > 0` and `p > 14/5`, `q(u)`
//! grows without bound along concentrating profiles, so there the search
//! stops at its budget and the bound keeps growing with resolution.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::energy::functionals;
use crate::error::{Error, Result};
use crate::exec::{par_map, par_map_range, Execution};
use crate::fibering::{classify_fiber, fiber_coeffs, q_of_u, zero_energy_ratio, FiberCase, FiberCoeffs};
use crate::grid::{RadialFunction, RadialGrid};
use crate::optimizer::{minimize, Eval, LbfgsOptions, Status};
use crate::params::ProblemParams;
use crate::profiles::{log_space, random_profile, trial_profile, ProfileRanges, TrialFamily};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub families: Vec<TrialFamily>,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_count: usize,
    /// Seeded random profiles added to the scan.
    pub random_starts: usize,
    pub seed: u64,
    /// Iteration budget of the ascent phase; 0 skips it.
    pub ascent_budget: usize,
    /// Stopping tolerance on `||d log q||_{H^1*}` at unit norm.
    pub ascent_tol: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            families: vec![TrialFamily::Gaussian, TrialFamily::Exponential],
            alpha_min: 1e-2,
            alpha_max: 1e2,
            alpha_count: 49,
            random_starts: 16,
            seed: 0,
            ascent_budget: 200,
            ascent_tol: 1e-9,
            execution: Execution::default(),
        }
    }
}

/// Empirical embedding constant and the quantities derived from it. These
/// are diagnostics built from the profiles the search saw, not certified
/// constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingDiagnostics {
    /// `max ||u||_p^p / ||u||^p` over the scanned profiles.
    pub c_emb: f64,
    /// `c_emb^{-1/(p-2)}`: every Nehari point has at least this norm.
    pub c_tilde: f64,
    /// `c_tilde / 2`, the radius of the sphere around zero.
    pub rho: f64,
    /// `rho^2 / 2 - c_emb rho^p / p`, the energy floor on that sphere.
    pub barrier: f64,
    /// `(p-2)/(4p) c_tilde^2`, the energy floor on the zero set.
    pub zero_set_floor: f64,
}

impl EmbeddingDiagnostics {
    pub fn from_constant(c_emb: f64, p: f64) -> Self {
        let c_tilde = c_emb.powf(-1.0 / (p - 2.0));
        let rho = 0.5 * c_tilde;
        Self {
            c_emb,
            c_tilde,
            rho,
            barrier: 0.5 * rho * rho - c_emb * rho.powf(p) / p,
            zero_set_floor: (p - 2.0) / (4.0 * p) * c_tilde * c_tilde,
        }
    }

    /// The trivial-attractor floor: half of `c_tilde`.
    pub fn collapse_floor(&self) -> f64 {
        0.5 * self.c_tilde
    }
}

fn embedding_ratio(c: &FiberCoeffs) -> f64 {
    c.power / c.norm_sq.powf(0.5 * c.p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub family: TrialFamily,
    pub alpha: f64,
    pub q_of_u: f64,
}

#[derive(Debug, Clone)]
pub struct ExtremalEstimate {
    pub q_star_lb: f64,
    pub q0_star_lb: f64,
    /// Unit-norm profile attaining `q_star_lb`.
    pub maximizer: RadialFunction,
    /// Where the maximiser came from, e.g. `gaussian(alpha=0.3)` or
    /// `ascent from gaussian(alpha=0.3)`.
    pub family_tag: String,
    /// Best value of the scan phase alone.
    pub scan_best: f64,
    pub scan: Vec<ScanPoint>,
    pub iterations: usize,
    pub converged: bool,
    pub embedding: EmbeddingDiagnostics,
}

/// Serializable summary of an [`ExtremalEstimate`] without the profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalSummary {
    pub q_star_lb: f64,
    pub q0_star_lb: f64,
    pub family_tag: String,
    pub scan_best: f64,
    pub iterations: usize,
    pub converged: bool,
    pub embedding: EmbeddingDiagnostics,
}

impl ExtremalEstimate {
    pub fn summary(&self) -> ExtremalSummary {
        ExtremalSummary {
            q_star_lb: self.q_star_lb,
            q0_star_lb: self.q0_star_lb,
            family_tag: self.family_tag.clone(),
            scan_best: self.scan_best,
            iterations: self.iterations,
            converged: self.converged,
            embedding: self.embedding,
        }
    }
}

fn normalized(u: &RadialFunction, params: &ProblemParams) -> RadialFunction {
    let n = crate::grid::h1_norm_sq(u, params).sqrt();
    u.scaled(1.0 / n)
}

/// `log q(u)` up to a constant and its nodal gradient, from `A`, `B`, `P`:
/// `log q = (1/2 - 1/(p-2)) log A - (1/2) log B + (1/(p-2)) log P + const`.
fn log_q_with_gradient(grid: &RadialGrid, vals: &[f64], params: &ProblemParams) -> Option<(f64, Vec<f64>)> {
    let f = functionals(grid, vals, params);
    let c = f.coeffs(params.p);
    let (q, _) = q_of_u(&c).ok()?;
    let k = 1.0 / (params.p - 2.0);
    let [da, db, dp] = f.gradients(grid, vals, params);
    let (ca, cb, cp) = ((0.5 - k) / c.norm_sq, -0.5 / c.coupling, k / c.power);
    let grad = (0..vals.len()).map(|i| ca * da[i] + cb * db[i] + cp * dp[i]).collect();
    Some((q.ln(), grad))
}

pub fn estimate_extremals(
    grid: &Arc<RadialGrid>,
    params: &ProblemParams,
    search: &SearchConfig,
) -> Result<ExtremalEstimate> {
    params.validate()?;
    if search.alpha_count == 0 && search.random_starts == 0 {
        return Err(Error::InvalidArgument("search has no candidates".into()));
    }
    if !(search.alpha_min > 0.0 && search.alpha_max >= search.alpha_min) {
        return Err(Error::InvalidArgument("alpha range must be positive and ordered".into()));
    }

    let alphas = log_space(search.alpha_min, search.alpha_max, search.alpha_count);
    let mut candidates: Vec<(String, Option<ScanPoint>, RadialFunction)> = Vec::new();
    for &family in &search.families {
        for &alpha in &alphas {
            let tag = format!("{}(alpha={alpha})", family.name());
            let point = ScanPoint { family, alpha, q_of_u: f64::NAN };
            candidates.push((tag, Some(point), trial_profile(grid, family, alpha)));
        }
    }
    let ranges = ProfileRanges::default();
    for i in 0..search.random_starts {
        let prof = random_profile(search.seed, i as u64, &ranges);
        candidates.push((format!("random(seed={}, index={i})", search.seed), None, prof.sample(grid)));
    }

    let scored = par_map(search.execution, &candidates, |(_, _, u)| {
        fiber_coeffs(u, params).ok().and_then(|c| q_of_u(&c).ok().map(|(q, _)| (q, embedding_ratio(&c))))
    });

    let mut best: Option<(f64, usize)> = None;
    let mut c_emb: f64 = 0.0;
    let mut scan = Vec::new();
    for (i, s) in scored.iter().enumerate() {
        let Some((q, ratio)) = *s else { continue };
        if !q.is_finite() {
            continue;
        }
        c_emb = c_emb.max(ratio);
        if let Some(mut point) = candidates[i].1 {
            point.q_of_u = q;
            scan.push(point);
        }
        if best.is_none_or(|(b, _)| q > b) {
            best = Some((q, i));
        }
    }
    let Some((scan_best, best_idx)) = best else {
        return Err(Error::SearchFailed("no candidate profile gave a finite q(u)".into()));
    };
    let seed_tag = candidates[best_idx].0.clone();
    let seed_profile = normalized(&candidates[best_idx].2, params);

    let mut maximizer = seed_profile.clone();
    let mut family_tag = seed_tag.clone();
    let mut iterations = 0;
    let mut converged = false;
    if search.ascent_budget > 0 {
        let opts = LbfgsOptions { max_iter: search.ascent_budget, tol: search.ascent_tol, ..Default::default() };
        let eval = |x: &[f64]| {
            let (lq, grad) = log_q_with_gradient(grid, x, params)?;
            if !lq.is_finite() {
                return None;
            }
            let scale = grid.h1_inner(x, x, params.omega).sqrt();
            Some(Eval {
                value: -lq,
                grad: grad.into_iter().map(|g| -g).collect(),
                measure_scale: scale,
                value_scale: lq.abs().max(1.0),
            })
        };
        if let Some(out) = minimize(grid, params.omega, seed_profile.vals().to_vec(), &opts, eval, |_| true) {
            iterations = out.iterations;
            converged = out.status == Status::Converged;
            let candidate = normalized(&RadialFunction::new(Arc::clone(grid), out.x)?, params);
            let q_new = q_of_u(&fiber_coeffs(&candidate, params)?)?.0;
            if q_new >= scan_best {
                let f = fiber_coeffs(&candidate, params)?;
                c_emb = c_emb.max(embedding_ratio(&f));
                maximizer = candidate;
                family_tag = format!("ascent from {seed_tag}");
            }
        }
    }

    let q_star_lb = q_of_u(&fiber_coeffs(&maximizer, params)?)?.0;
    Ok(ExtremalEstimate {
        q_star_lb,
        q0_star_lb: zero_energy_ratio(params.p) * q_star_lb,
        maximizer,
        family_tag,
        scan_best,
        scan,
        iterations,
        converged,
        embedding: EmbeddingDiagnostics::from_constant(c_emb, params.p),
    })
}

/// Outcome of the per-profile nonexistence certificates at one charge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub q: f64,
    pub samples: usize,
    /// Profiles with `q > q(u)`; each must have a fiber without critical points.
    pub above: usize,
    /// Profiles with `q < q(u)`; each must have two critical points.
    pub below: usize,
    /// Profiles with `q` within the relative band of `q(u)`.
    pub boundary: usize,
    /// Indices of profiles whose case contradicts the comparison.
    pub violations: Vec<usize>,
}

impl CertificateReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Relative distance to `q(u)` inside which either neighbouring case or the
/// degenerate case is accepted.
pub const CERTIFICATE_BAND: f64 = 1e-6;

pub fn per_u_certificates(
    grid: &Arc<RadialGrid>,
    params: &ProblemParams,
    q: f64,
    samples: usize,
    seed: u64,
    execution: Execution,
) -> Result<CertificateReport> {
    params.validate()?;
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::InvalidArgument(format!("charge must be positive, got {q}")));
    }
    let ranges = ProfileRanges::default();
    let outcomes = par_map_range(execution, samples, |i| -> Result<(f64, FiberCase)> {
        let u = random_profile(seed, i as u64, &ranges).sample(grid);
        let c = fiber_coeffs(&u, params)?;
        let report = classify_fiber(&c, q)?;
        Ok((report.q_of_u, report.case))
    });
    let mut report = CertificateReport { q, samples, above: 0, below: 0, boundary: 0, violations: Vec::new() };
    for (i, o) in outcomes.into_iter().enumerate() {
        let (qu, case) = o?;
        let rel = q / qu - 1.0;
        let ok = if rel.abs() <= CERTIFICATE_BAND {
            report.boundary += 1;
            true
        } else if rel > 0.0 {
            report.above += 1;
            case == FiberCase::Three
        } else {
            report.below += 1;
            case == FiberCase::One
        };
        if !ok {
            report.violations.push(i);
        }
    }
    Ok(report)
}
