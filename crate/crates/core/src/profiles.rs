//! Trial families and seeded random radial profiles.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{RadialFunction, RadialGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialFamily {
    /// `e^{-alpha r^2}`
    Gaussian,
    /// `e^{-alpha r}`
    Exponential,
}

impl TrialFamily {
    pub fn name(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Exponential => "exponential",
        }
    }

    pub fn eval(self, alpha: f64, r: f64) -> f64 {
        match self {
            Self::Gaussian => (-alpha * r * r).exp(),
            Self::Exponential => (-alpha * r).exp(),
        }
    }
}

pub fn trial_profile(grid: &Arc<RadialGrid>, family: TrialFamily, alpha: f64) -> RadialFunction {
    RadialFunction::from_fn(grid, |r| family.eval(alpha, r))
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
        }
    }
}

/// A centred Gaussian bump `weight * e^{-(r/width)^2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub weight: f64,
    pub width: f64,
}

/// Ranges for [`random_profile`]. Widths are drawn log-uniformly.
///
/// The lower width bound matters: for `a > 0` the cube-norm bound against
/// `||phi_u||_D ||∇u||_2` fails for bumps much narrower than `a` (its two
/// sides scale as `L^3` and `L^{7/2}` at width `L`, and on the default grid
/// the crossover is near `L = 0.04 a`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRanges {
    pub min_width: f64,
    pub max_width: f64,
    pub min_weight: f64,
    pub max_weight: f64,
    pub max_bumps: usize,
}

impl Default for ProfileRanges {
    fn default() -> Self {
        Self { min_width: 0.3, max_width: 4.0, min_weight: 0.2, max_weight: 2.0, max_bumps: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomProfile {
    pub bumps: Vec<Bump>,
}

impl RandomProfile {
    pub fn eval(&self, r: f64) -> f64 {
        self.bumps.iter().map(|b| b.weight * (-(r / b.width).powi(2)).exp()).sum()
    }

    pub fn sample(&self, grid: &Arc<RadialGrid>) -> RadialFunction {
        RadialFunction::from_fn(grid, |r| self.eval(r))
    }

    /// Newton potential `(1/|x|) * u^2` in closed form:
    /// a Gaussian density `e^{-beta r^2}` has potential `(pi/beta)^{3/2} erf(sqrt(beta) r)/r`.
    pub fn coulomb_potential(&self, r: f64) -> f64 {
        let mut total = 0.0;
        for a in &self.bumps {
            for b in &self.bumps {
                let beta = a.width.powi(-2) + b.width.powi(-2);
                let mass = (std::f64::consts::PI / beta).powf(1.5);
                let x = beta.sqrt() * r;
                // erf(x)/x -> 2/sqrt(pi) as x -> 0
                let shape = if x < 1e-8 { 2.0 / std::f64::consts::PI.sqrt() } else { libm::erf(x) / x };
                total += a.weight * b.weight * mass * beta.sqrt() * shape;
            }
        }
        total
    }
}

/// The `index`-th profile of the stream selected by `seed`. Each index has its
/// own RNG stream so profiles can be generated in any order.
pub fn random_profile(seed: u64, index: u64, ranges: &ProfileRanges) -> RandomProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let count = rng.gen_range(1..=ranges.max_bumps.max(1));
    let (lo, hi) = (ranges.min_width.ln(), ranges.max_width.ln());
    let bumps = (0..count)
        .map(|_| Bump {
            weight: rng.gen_range(ranges.min_weight..=ranges.max_weight),
            width: rng.gen_range(lo..=hi).exp(),
        })
        .collect();
    RandomProfile { bumps }
}

pub fn random_profiles(seed: u64, count: usize, ranges: &ProfileRanges) -> Vec<RandomProfile> {
    (0..count as u64).map(|i| random_profile(seed, i, ranges)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::default_grid;
    use crate::params::ProblemParams;
    use crate::potential::solve_potential;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let r = ProfileRanges::default();
        assert_eq!(random_profile(7, 3, &r), random_profile(7, 3, &r));
        assert_ne!(random_profile(7, 3, &r), random_profile(7, 4, &r));
        assert_ne!(random_profile(7, 3, &r), random_profile(8, 3, &r));
        for p in random_profiles(1, 50, &r) {
            assert!((1..=3).contains(&p.bumps.len()));
            for b in &p.bumps {
                assert!(b.width >= 0.3 && b.width <= 4.0);
                assert!(b.weight >= 0.2 && b.weight <= 2.0);
            }
        }
    }

    #[test]
    fn closed_form_coulomb_potential() {
        let g = default_grid();
        let params = ProblemParams::new(2.5, 0.0, 1.0).unwrap();
        for prof in random_profiles(11, 5, &ProfileRanges::default()) {
            let sol = solve_potential(&prof.sample(&g), &params).unwrap();
            for (i, &r) in g.radii().iter().enumerate().step_by(97) {
                let exact = prof.coulomb_potential(r);
                assert!((sol.phi.vals()[i] - exact).abs() < 1e-6 * exact.max(1e-3), "r={r}");
            }
        }
    }

    #[test]
    fn log_space_endpoints() {
        let v = log_space(0.01, 100.0, 5);
        assert!((v[0] - 0.01).abs() < 1e-15 && (v[4] - 100.0).abs() < 1e-12);
        assert!((v[2] - 1.0).abs() < 1e-14);
    }
}
