//! The invariant suite: every identity and inequality the model promises,
//! checked over the canonical trial profiles and seeded random profiles.
//!
//! Each check reports its worst slack over the samples; a check passes when
//! that slack is at least `-tolerance`. Slack is signed so that positive
//! means the promise holds with room to spare.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::energy::energy;
use crate::error::{invalid, Result};
use crate::exec::{par_map, Execution};
use crate::fibering::{classify_fiber, fiber_coeffs, fiber_roots, q0_of_u, q_of_u, FiberCase, FiberCoeffs};
use crate::grid::{h1_norm_sq, lp_norm_p, GridScheme, RadialFunction, RadialGrid};
use crate::params::ProblemParams;
use crate::potential::{
    check_subordination, cube_norm_bound, solve_potential, PotentialSolution, CUBE_BOUND_TOL, SUBORDINATION_TOL,
};
use crate::profiles::{random_profile, trial_profile, ProfileRanges, RandomProfile, TrialFamily};

pub const D_NORM_TOL: f64 = 1e-3;
pub const COULOMB_TOL: f64 = 1e-6;
pub const COERCIVITY_TOL: f64 = 1e-8;
pub const ZERO_SET_TOL: f64 = 1e-10;
pub const ZERO_LEVEL_BAND: f64 = 1e-8;
/// Charges per profile in the fiber partition sweep.
pub const PARTITION_POINTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub worst_slack: f64,
    pub tolerance: f64,
    pub samples: usize,
    /// Label of the sample with the smallest slack.
    pub worst_sample: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub r_max: f64,
    pub nodes: usize,
    pub scheme: GridScheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub samples: usize,
    pub params: ProblemParams,
    pub grid: GridSummary,
    pub certificate_q: f64,
    /// Empirical `sup ||u||_p^p / ||u||^p` over the checked profiles.
    pub c_emb: f64,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub seed: u64,
    pub samples: usize,
    /// Charge at which the coercivity certificate is evaluated.
    pub certificate_q: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { seed: 0, samples: 100, certificate_q: 1.0, execution: Execution::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub q: f64,
    pub epsilon: f64,
    /// `q^2/(16 pi) - epsilon^4`
    pub d: f64,
    /// `||u||^2/4 + D ||phi_u||_D^2 + ∫ f(u)`
    pub lower_bound: f64,
    pub energy: f64,
    /// `energy - lower_bound`
    pub slack: f64,
    pub pass: bool,
}

/// `epsilon` with `q^2/(16 pi) - epsilon^4 = q^2/(32 pi)`.
pub fn default_epsilon(q: f64) -> f64 {
    (q * q / (32.0 * PI)).powf(0.25)
}

/// Evaluates the lower bound
///
/// ```text
/// J_q(u) >= ||u||^2/4 + D ||phi_u||_D^2 + ∫ f(u),
/// f(t) = (omega/4) t^2 + (pi epsilon^2/4) |t|^3 - |t|^p/p
/// ```
///
/// with `D = q^2/(16 pi) - epsilon^4`, which must be positive.
pub fn coercivity_certificate(
    u: &RadialFunction,
    q: f64,
    epsilon: Option<f64>,
    params: &ProblemParams,
) -> Result<CoercivityReport> {
    let sol = solve_potential(u, params)?;
    coercivity_with(u, &sol, q, epsilon, params)
}

fn coercivity_with(
    u: &RadialFunction,
    sol: &PotentialSolution,
    q: f64,
    epsilon: Option<f64>,
    params: &ProblemParams,
) -> Result<CoercivityReport> {
    let epsilon = epsilon.unwrap_or_else(|| default_epsilon(q));
    let d = q * q / (16.0 * PI) - epsilon.powi(4);
    if !(d > 0.0) || !(epsilon > 0.0) {
        return Err(invalid(format!("need 0 < epsilon^4 < q^2/(16 pi), got epsilon = {epsilon}, q = {q}")));
    }
    let p = params.p;
    let f_int: f64 = u
        .grid()
        .weights()
        .iter()
        .zip(u.vals())
        .map(|(w, &t)| {
            let a = t.abs();
            w * (0.25 * params.omega * t * t + 0.25 * PI * epsilon * epsilon * a * a * a - a.powf(p) / p)
        })
        .sum();
    let lower_bound = 0.25 * h1_norm_sq(u, params) + d * sol.d_norm_sq + f_int;
    let energy = 0.5 * h1_norm_sq(u, params) + 0.25 * q * q * sol.b_coupling - lp_norm_p(u, p)? / p;
    let slack = energy - lower_bound;
    Ok(CoercivityReport { q, epsilon, d, lower_bound, energy, slack, pass: slack >= -COERCIVITY_TOL })
}

enum Source {
    Trial(TrialFamily, f64),
    Random(RandomProfile),
}

struct Sample {
    label: String,
    source: Source,
}

fn canonical_samples() -> Vec<Sample> {
    let mut out = Vec::new();
    for (family, alpha) in [
        (TrialFamily::Gaussian, 1.0),
        (TrialFamily::Gaussian, 0.25),
        (TrialFamily::Exponential, 1.0),
        (TrialFamily::Exponential, 2.0),
    ] {
        out.push(Sample { label: format!("{}(alpha={alpha})", family.name()), source: Source::Trial(family, alpha) });
    }
    out
}

/// Per-sample slacks; `None` when a check does not apply to the sample.
#[derive(Default)]
struct SampleSlacks {
    d_norm: Option<f64>,
    subordination: Option<f64>,
    coulomb: Option<f64>,
    cube: Option<f64>,
    coercivity: Option<f64>,
    zero_set: Option<f64>,
    partition: Option<f64>,
    zero_level: Option<f64>,
    coeffs: Option<FiberCoeffs>,
    error: Option<String>,
}

fn newton_reduction_slack(sol: &PotentialSolution, prof: &RandomProfile, grid: &RadialGrid) -> f64 {
    let scale = prof.coulomb_potential(0.0);
    let mut worst: f64 = 0.0;
    for (i, &r) in grid.radii().iter().enumerate() {
        worst = worst.max((sol.phi.vals()[i] - prof.coulomb_potential(r)).abs() / scale);
    }
    -worst
}

/// Fiber case against the comparison of `q` with `q(u)`, on a charge sweep
/// through `q(u)`. Returns minus the number of violations.
fn partition_slack(c: &FiberCoeffs) -> Result<f64> {
    let (qu, _) = q_of_u(c)?;
    let mut violations = 0usize;
    for k in 0..PARTITION_POINTS {
        let q = qu * (0.5 + k as f64 / (PARTITION_POINTS - 1) as f64);
        let case = classify_fiber(c, q)?.case;
        let expected = if q < qu {
            FiberCase::One
        } else if q > qu {
            FiberCase::Three
        } else {
            FiberCase::Two
        };
        if case != expected {
            violations += 1;
        }
    }
    if classify_fiber(c, qu)?.case != FiberCase::Two {
        violations += 1;
    }
    Ok(0.0 - violations as f64)
}

/// The zero-energy threshold by brute force: on a dense log grid in `t`,
/// `min psi < 0` must hold exactly for the charges below `q0(u)`.
fn zero_level_slack(c: &FiberCoeffs) -> Result<f64> {
    let (q0, t0) = q0_of_u(c)?;
    let (qu, _) = q_of_u(c)?;
    let ts: Vec<f64> = (0..=4000).map(|i| t0 * 10f64.powf(-2.0 + 4.0 * i as f64 / 4000.0)).collect();
    let band = ZERO_LEVEL_BAND * c.norm_sq * t0 * t0;
    let mut violations = 0usize;
    for k in 0..PARTITION_POINTS {
        let q = qu * (0.5 + k as f64 / (PARTITION_POINTS - 1) as f64);
        let rel = q / q0 - 1.0;
        if rel.abs() <= ZERO_LEVEL_BAND {
            continue;
        }
        let min_psi = ts.iter().map(|&t| c.psi(q, t)).fold(f64::INFINITY, f64::min);
        let ok = if rel < 0.0 { min_psi < 0.0 } else { min_psi >= -band };
        if !ok {
            violations += 1;
        }
    }
    Ok(0.0 - violations as f64)
}

type PotentialFn<'a> = dyn Fn(&RadialFunction, &ProblemParams) -> Result<PotentialSolution> + Sync + 'a;

fn check_sample(
    u: &RadialFunction,
    random: Option<&RandomProfile>,
    params: &ProblemParams,
    cfg: &VerifyConfig,
    potential: &PotentialFn<'_>,
) -> Result<SampleSlacks> {
    let grid = u.grid();
    let sol = potential(u, params)?;
    let mut s = SampleSlacks::default();
    let identity = 4.0 * PI * sol.b_coupling;
    s.d_norm = Some(-(sol.d_norm_sq - identity).abs() / identity);
    if params.a > 0.0 {
        s.subordination = Some(check_subordination(&sol, params)?.slack);
    } else if let Some(prof) = random {
        s.coulomb = Some(newton_reduction_slack(&sol, prof, grid));
    }
    s.cube = Some(cube_norm_bound(u, &sol)?.slack);
    s.coercivity = Some(coercivity_with(u, &sol, cfg.certificate_q, None, params)?.slack);

    let c = fiber_coeffs(u, params)?;
    let (q, t) = q_of_u(&c)?;
    let w = u.scaled(t);
    let a = h1_norm_sq(&w, params);
    let e = energy(&w, q, params)?.total;
    let p = params.p;
    let energy_err = (e - (p - 2.0) / (4.0 * p) * a).abs() / a;
    let power_err = (lp_norm_p(&w, p)? - 2.0 / (4.0 - p) * a).abs() / a;
    s.zero_set = Some(-energy_err.max(power_err));
    s.partition = Some(partition_slack(&c)?);
    s.zero_level = Some(zero_level_slack(&c)?);
    s.coeffs = Some(c);
    Ok(s)
}

pub fn run_suite(grid: &Arc<RadialGrid>, params: &ProblemParams, cfg: &VerifyConfig) -> Result<VerifyReport> {
    run_suite_with(grid, params, cfg, &solve_potential)
}

/// [`run_suite`] with a replacement potential solver, for fault injection.
pub fn run_suite_with(
    grid: &Arc<RadialGrid>,
    params: &ProblemParams,
    cfg: &VerifyConfig,
    potential: &PotentialFn<'_>,
) -> Result<VerifyReport> {
    params.validate()?;
    let ranges = ProfileRanges::default();
    let mut samples = canonical_samples();
    for i in 0..cfg.samples as u64 {
        let prof = random_profile(cfg.seed, i, &ranges);
        samples.push(Sample { label: format!("random[{i}]"), source: Source::Random(prof) });
    }

    let results = par_map(cfg.execution, &samples, |sample| {
        let (u, random) = match &sample.source {
            Source::Trial(family, alpha) => (trial_profile(grid, *family, *alpha), None),
            Source::Random(prof) => (prof.sample(grid), Some(prof)),
        };
        check_sample(&u, random, params, cfg, potential)
            .unwrap_or_else(|e| SampleSlacks { error: Some(e.to_string()), ..Default::default() })
    });

    let c_emb =
        results.iter().filter_map(|r| r.coeffs).map(|c| c.power / c.norm_sq.powf(0.5 * c.p)).fold(0.0, f64::max);
    let c_tilde = c_emb.powf(-1.0 / (params.p - 2.0));

    let mut checks = Vec::new();
    let mut push = |name: &str, tol: f64, applicable: bool, pick: &dyn Fn(&SampleSlacks) -> Option<f64>| {
        let mut worst = f64::INFINITY;
        let mut worst_label = None;
        let mut count = 0;
        let mut failed_eval = false;
        for (sample, r) in samples.iter().zip(&results) {
            if let Some(err) = &r.error {
                if !failed_eval {
                    worst_label = Some(format!("{}: {err}", sample.label));
                }
                failed_eval = true;
                continue;
            }
            if let Some(v) = pick(r) {
                count += 1;
                if v < worst && !failed_eval {
                    worst = v;
                    worst_label = Some(sample.label.clone());
                }
            }
        }
        let status = if !applicable {
            CheckStatus::NotApplicable
        } else if !failed_eval && count > 0 && worst >= -tol {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        checks.push(CheckResult {
            name: name.into(),
            status,
            worst_slack: if applicable && count > 0 { worst } else { 0.0 },
            tolerance: tol,
            samples: count,
            worst_sample: if applicable { worst_label } else { None },
        });
    };

    push("d_norm_identity", D_NORM_TOL, true, &|r| r.d_norm);
    if params.a > 0.0 {
        push("subordination", SUBORDINATION_TOL, true, &|r| r.subordination);
        push("coulomb_reduction", COULOMB_TOL, false, &|_| None);
    } else {
        push("subordination", SUBORDINATION_TOL, false, &|_| None);
        push("coulomb_reduction", COULOMB_TOL, true, &|r| r.coulomb);
    }
    push("cube_norm_bound", CUBE_BOUND_TOL, true, &|r| r.cube);
    push("coercivity_certificate", COERCIVITY_TOL, true, &|r| r.coercivity);
    push("zero_set_identities", ZERO_SET_TOL, true, &|r| r.zero_set);
    push("fiber_partition", 0.0, true, &|r| r.partition);
    push("zero_energy_threshold", 0.0, true, &|r| r.zero_level);
    // The N+ point of each profile at half its extremal charge sits above
    // the empirical norm floor.
    push("nehari_floor", 1e-12, true, &|r| {
        let c = r.coeffs?;
        let q = 0.5 * q_of_u(&c).ok()?.0;
        let (_, tp) = fiber_roots(&c, q)?;
        let norm = (c.norm_sq * tp * tp).sqrt();
        Some(norm / c_tilde - 1.0)
    });

    Ok(VerifyReport {
        seed: cfg.seed,
        samples: samples.len(),
        params: *params,
        grid: GridSummary { r_max: grid.r_max(), nodes: grid.len(), scheme: grid.scheme() },
        certificate_q: cfg.certificate_q,
        c_emb,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{default_grid, make_grid};

    #[test]
    fn certificate_on_zero_is_equality() {
        let g = default_grid();
        let r = coercivity_certificate(&RadialFunction::zeros(&g), 1.0, None, &ProblemParams::default()).unwrap();
        assert_eq!(r.slack, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn certificate_rejects_large_epsilon() {
        let g = default_grid();
        let u = trial_profile(&g, TrialFamily::Gaussian, 1.0);
        let too_big = (1.0 / (16.0 * PI)).powf(0.25) * 1.01;
        assert!(coercivity_certificate(&u, 1.0, Some(too_big), &ProblemParams::default()).is_err());
        let d = 1.0 / (16.0 * PI) - default_epsilon(1.0).powi(4);
        assert!((d - 1.0 / (32.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn coulomb_branch_swaps_checks() {
        let g = make_grid(30.0, 768, GridScheme::Graded).unwrap();
        let params = ProblemParams::new(2.5, 0.0, 1.0).unwrap();
        let cfg = VerifyConfig { samples: 6, ..Default::default() };
        let rep = run_suite(&g, &params, &cfg).unwrap();
        assert_eq!(rep.check("subordination").unwrap().status, CheckStatus::NotApplicable);
        assert_eq!(rep.check("coulomb_reduction").unwrap().status, CheckStatus::Pass);
        assert!(rep.all_pass(), "{rep:#?}");
    }
}
