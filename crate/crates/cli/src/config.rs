//! Run configuration: one TOML file, every table optional, plus flag
//! overrides applied on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sbp_core::exec::Execution;
use sbp_core::extremal::{EmbeddingDiagnostics, SearchConfig};
use sbp_core::grid::{GridScheme, DEFAULT_NODES, DEFAULT_R_MAX};
use sbp_core::params::ProblemParams;
use sbp_core::profiles::TrialFamily;
use sbp_core::solve::{SolverOptions, SweepOptions};
use sbp_core::verify::VerifyConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds the random profiles of the extremal search and the verify suite.
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide, 1 runs sequentially.
    pub jobs: usize,
    pub out: PathBuf,
    pub params: ProblemParams,
    pub grid: GridSpec,
    pub solver: SolverSpec,
    pub search: SearchSpec,
    pub sweep: SweepSpec,
    pub verify: VerifySpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 0,
            out: PathBuf::from("out"),
            params: ProblemParams::default(),
            grid: GridSpec::default(),
            solver: SolverSpec::default(),
            search: SearchSpec::default(),
            sweep: SweepSpec::default(),
            verify: VerifySpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub r_max: f64,
    pub n: usize,
    pub scheme: GridScheme,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { r_max: DEFAULT_R_MAX, n: DEFAULT_NODES, scheme: GridScheme::Graded }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub tol: f64,
    pub max_iter: usize,
    pub memory: usize,
    pub max_step: f64,
    /// Collapse floor for minimiser descent; absent means half the
    /// embedding estimate of the Nehari floor.
    pub collapse_floor: Option<f64>,
    pub path_nodes: usize,
    pub path_iters: usize,
    pub path_tol: f64,
    /// Energy the mountain-pass path must stay above; absent skips the check.
    pub barrier: Option<f64>,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            tol: o.tol,
            max_iter: o.max_iter,
            memory: o.memory,
            max_step: o.max_step,
            collapse_floor: None,
            path_nodes: o.path_nodes,
            path_iters: o.path_iters,
            path_tol: o.path_tol,
            barrier: None,
        }
    }
}

impl SolverSpec {
    pub fn options(&self, embedding: &EmbeddingDiagnostics) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            memory: self.memory,
            max_step: self.max_step,
            collapse_floor: self.collapse_floor.unwrap_or_else(|| embedding.collapse_floor()),
            path_nodes: self.path_nodes,
            path_iters: self.path_iters,
            path_tol: self.path_tol,
            barrier: self.barrier,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpec {
    pub families: Vec<TrialFamily>,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_count: usize,
    pub random_starts: usize,
    pub ascent_budget: usize,
    pub ascent_tol: f64,
}

impl Default for SearchSpec {
    fn default() -> Self {
        let s = SearchConfig::default();
        Self {
            families: s.families,
            alpha_min: s.alpha_min,
            alpha_max: s.alpha_max,
            alpha_count: s.alpha_count,
            random_starts: s.random_starts,
            ascent_budget: s.ascent_budget,
            ascent_tol: s.ascent_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChargeUnits {
    Absolute,
    /// Multiples of the zero-energy estimate `q0*`.
    Q0Star,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub q_lo: f64,
    pub q_hi: f64,
    pub steps: usize,
    pub units: ChargeUnits,
    pub warm_start: bool,
    pub collapse_tol: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let o = SweepOptions::default();
        Self {
            q_lo: 0.84,
            q_hi: 1.08,
            steps: 9,
            units: ChargeUnits::Q0Star,
            warm_start: o.warm_start,
            collapse_tol: o.collapse_tol,
        }
    }
}

impl SweepSpec {
    /// The charge range in absolute units.
    pub fn range(&self, q0_star: f64) -> (f64, f64) {
        match self.units {
            ChargeUnits::Absolute => (self.q_lo, self.q_hi),
            ChargeUnits::Q0Star => (self.q_lo * q0_star, self.q_hi * q0_star),
        }
    }

    pub fn options(&self) -> SweepOptions {
        SweepOptions { warm_start: self.warm_start, collapse_tol: self.collapse_tol }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    pub samples: usize,
    pub certificate_q: f64,
}

impl Default for VerifySpec {
    fn default() -> Self {
        let v = VerifyConfig::default();
        Self { samples: v.samples, certificate_q: v.certificate_q }
    }
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub p: Option<f64>,
    pub a: Option<f64>,
    pub omega: Option<f64>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, String> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
                Self::from_toml(&text).map_err(|e| format!("{}: {e}", p.display()))?
            }
            None => Self::default(),
        };
        let o = overrides;
        if let Some(v) = o.p {
            cfg.params.p = v;
        }
        if let Some(v) = o.a {
            cfg.params.a = v;
        }
        if let Some(v) = o.omega {
            cfg.params.omega = v;
        }
        if let Some(v) = o.seed {
            cfg.seed = v;
        }
        if let Some(v) = o.jobs {
            cfg.jobs = v;
        }
        if let Some(v) = &o.out {
            cfg.out = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), String> {
        self.params.validate().map_err(|e| e.to_string())?;
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !pos(self.grid.r_max) {
            return Err("grid.r_max must be positive".into());
        }
        let s = &self.solver;
        if !(pos(s.tol) && pos(s.path_tol) && pos(s.max_step)) {
            return Err("solver tolerances and step cap must be positive".into());
        }
        if s.collapse_floor.is_some_and(|f| !(f >= 0.0)) {
            return Err("solver.collapse_floor must be >= 0".into());
        }
        if !pos(self.search.ascent_tol) {
            return Err("search.ascent_tol must be positive".into());
        }
        if !(pos(self.sweep.q_lo) && pos(self.sweep.q_hi) && self.sweep.q_hi >= self.sweep.q_lo) {
            return Err("sweep needs 0 < q_lo <= q_hi".into());
        }
        if !pos(self.sweep.collapse_tol) {
            return Err("sweep.collapse_tol must be positive".into());
        }
        if !pos(self.verify.certificate_q) {
            return Err("verify.certificate_q must be positive".into());
        }
        Ok(())
    }

    pub fn execution(&self) -> Execution {
        if self.jobs == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    pub fn search_config(&self) -> SearchConfig {
        let s = &self.search;
        SearchConfig {
            families: s.families.clone(),
            alpha_min: s.alpha_min,
            alpha_max: s.alpha_max,
            alpha_count: s.alpha_count,
            random_starts: s.random_starts,
            seed: self.seed,
            ascent_budget: s.ascent_budget,
            ascent_tol: s.ascent_tol,
            execution: self.execution(),
        }
    }

    pub fn verify_config(&self) -> VerifyConfig {
        VerifyConfig {
            seed: self.seed,
            samples: self.verify.samples,
            certificate_q: self.verify.certificate_q,
            execution: self.execution(),
        }
    }

    /// SHA-256 of the settings that determine results. Thread count and
    /// output location are left out since neither changes any number.
    pub fn hash(&self) -> String {
        let canonical = Self { jobs: 0, out: PathBuf::new(), ..self.clone() };
        format!("{:x}", Sha256::digest(canonical.to_toml().as_bytes()))
    }
}
