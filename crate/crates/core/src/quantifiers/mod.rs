//! Non-contextuality decision and contextuality quantifiers.
//!
//! Everything here works over the non-contextual polytope, whose vertices
//! are the deterministic global assignments of the scenario. The LP-based
//! measures ([`contextual_fraction`], [`l1_uniform_distance`],
//! [`l1_max_distance`]) and [`check_noncontextual`] are exact; the
//! entropic ones ([`relative_entropy_uniform`], [`relative_entropy_max`])
//! run Frank-Wolfe in `f64` and report values in bits.
//!
//! Both "max over context distributions π" definitions are evaluated as a
//! max over single contexts: `Σ_γ π(γ)·d_γ` is linear in `π`, so its
//! maximum over the probability simplex sits at a vertex, i.e. at the
//! single context with the largest `d_γ`.

mod entropic;
mod linear;
mod mbqc;
mod polytope;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{assignment_to_behavior, mix_behaviors, Behavior, BehaviorError, NumericMode};
use crate::lp::{verify_solution, LinearProgram, LpError, LpSolution};
use crate::rational::{to_f64, Rational};
use crate::scenario::{GlobalAssignment, Scenario, ScenarioError, DEFAULT_VERTEX_CAP};

pub use entropic::{
    kl_divergence, relative_entropy_max, relative_entropy_uniform, EntropicOptions, DEFAULT_EMAX_TOL,
    DEFAULT_ENTROPIC_TOL, DEFAULT_MAX_ITERATIONS,
};
pub use linear::{check_noncontextual, check_noncontextual_on, contextual_fraction, l1_max_distance, l1_uniform_distance, NcCheck};
pub use mbqc::{mbqc_failure_bound, nu_linear_distance, MAX_NU_BITS};
pub use polytope::NcPolytope;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantifierError {
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("no convergence after {iterations} iterations: best value {best_value}, gap {best_gap:e}")]
    NonConvergence { iterations: usize, best_value: f64, best_gap: f64 },
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// The five quantifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Cf,
    Du,
    Dmax,
    Eu,
    Emax,
}

impl Measure {
    pub const ALL: [Measure; 5] = [Measure::Cf, Measure::Du, Measure::Dmax, Measure::Eu, Measure::Emax];

    pub fn is_entropic(self) -> bool {
        matches!(self, Measure::Eu | Measure::Emax)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Measure::Cf => "CF",
            Measure::Du => "D_u",
            Measure::Dmax => "D_max",
            Measure::Eu => "E_u",
            Measure::Emax => "E_max",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Measure::Cf => "cf",
            Measure::Du => "du",
            Measure::Dmax => "dmax",
            Measure::Eu => "eu",
            Measure::Emax => "emax",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cf" => Ok(Measure::Cf),
            "du" | "d_u" => Ok(Measure::Du),
            "dmax" | "d_max" => Ok(Measure::Dmax),
            "eu" | "e_u" => Ok(Measure::Eu),
            "emax" | "e_max" => Ok(Measure::Emax),
            other => Err(format!("unknown measure `{other}` (expected cf, du, dmax, eu, emax)")),
        }
    }
}

/// Finite mixture of global assignments reproducing a behavior.
#[derive(Debug, Clone, PartialEq)]
pub struct NcModel {
    pub weights: Vec<(GlobalAssignment, Rational)>,
}

impl NcModel {
    /// The behavior this global section induces.
    pub fn behavior(&self, scenario: &std::sync::Arc<Scenario>) -> Result<Behavior, BehaviorError> {
        let behaviors = self
            .weights
            .iter()
            .map(|(g, _)| assignment_to_behavior(g, scenario.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let weights: Vec<Rational> = self.weights.iter().map(|(_, w)| w.clone()).collect();
        mix_behaviors(&weights, &behaviors)
    }

    pub fn total_weight(&self) -> Rational {
        self.weights.iter().map(|(_, w)| w).sum()
    }
}

/// Approximate global section from the entropic solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatNcModel {
    pub weights: Vec<(GlobalAssignment, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantValue {
    Exact(Rational),
    Approx(f64),
}

impl QuantValue {
    pub fn to_f64(&self) -> f64 {
        match self {
            QuantValue::Exact(r) => to_f64(r),
            QuantValue::Approx(x) => *x,
        }
    }

    pub fn exact(&self) -> Option<&Rational> {
        match self {
            QuantValue::Exact(r) => Some(r),
            QuantValue::Approx(_) => None,
        }
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        match self {
            QuantValue::Exact(r) => r.is_zero(),
            QuantValue::Approx(x) => x.abs() <= tol,
        }
    }
}

impl fmt::Display for QuantValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuantValue::Exact(r) => write!(f, "{r}"),
            QuantValue::Approx(x) => write!(f, "{x:.9}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    Exact(NcModel),
    Approx(FloatNcModel),
}

/// Decomposition `b = λ·B' + (1-λ)·B_NC` returned by the contextual fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct CfDecomposition {
    pub lambda: Rational,
    /// Normalized non-contextual part (absent when `λ = 1`).
    pub nc_part: Option<Behavior>,
    /// Normalized residual (absent when `λ = 0`).
    pub residual: Option<Behavior>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverMeta {
    pub mode: NumericMode,
    /// Simplex pivots or Frank-Wolfe iterations.
    pub iterations: usize,
    /// Final duality/Frank-Wolfe gap for iterative solvers.
    pub gap: Option<f64>,
    /// Certified lower bound, when the solver produces one.
    pub lower_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantifierResult {
    pub measure: Measure,
    pub value: QuantValue,
    /// A closest (or decomposing) non-contextual behavior, as a global section.
    pub witness: Option<Witness>,
    pub decomposition: Option<CfDecomposition>,
    pub meta: SolverMeta,
}

/// Knobs shared by all quantifiers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantifierOptions {
    pub vertex_cap: u64,
    pub entropic: EntropicOptions,
}

impl Default for QuantifierOptions {
    fn default() -> Self {
        Self { vertex_cap: DEFAULT_VERTEX_CAP, entropic: EntropicOptions::default() }
    }
}

/// Evaluates any of the five measures with default tolerances.
pub fn quantify(measure: Measure, b: &Behavior, options: &QuantifierOptions) -> Result<QuantifierResult, QuantifierError> {
    let poly = NcPolytope::new(b.scenario_arc().clone(), options.vertex_cap)?;
    quantify_on(measure, b, &poly, options)
}

/// As [`quantify`], reusing a prebuilt polytope for the behavior's scenario.
pub fn quantify_on(
    measure: Measure,
    b: &Behavior,
    poly: &NcPolytope,
    options: &QuantifierOptions,
) -> Result<QuantifierResult, QuantifierError> {
    match measure {
        Measure::Cf => linear::contextual_fraction_on(b, poly),
        Measure::Du => linear::l1_uniform_distance_on(b, poly),
        Measure::Dmax => linear::l1_max_distance_on(b, poly),
        Measure::Eu => entropic::relative_entropy_uniform_on(b, poly, &options.entropic),
        Measure::Emax => {
            // the E_max interval is looser by default than the E_u gap
            let mut opts = options.entropic;
            if opts.tol == DEFAULT_ENTROPIC_TOL {
                opts.tol = DEFAULT_EMAX_TOL;
            }
            entropic::relative_entropy_max_on(b, poly, &opts)
        }
    }
}

static LP_SOLVES: AtomicUsize = AtomicUsize::new(0);

/// Number of LP solves issued by this module, each of which was replayed
/// with [`verify_solution`] (strong duality or Farkas check) before use.
pub fn verified_lp_solves() -> usize {
    LP_SOLVES.load(Ordering::Relaxed)
}

pub(crate) fn solve_verified(lp: &LinearProgram) -> Result<LpSolution, QuantifierError> {
    let sol = crate::lp::solve_lp(lp)?;
    verify_solution(lp, &sol)?;
    LP_SOLVES.fetch_add(1, Ordering::Relaxed);
    Ok(sol)
}
