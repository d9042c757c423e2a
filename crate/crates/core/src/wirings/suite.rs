use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{apply_ncwiring, NcWiring, SampleParams, WiringError, WiringSampler};
use crate::behavior::Behavior;
use crate::io::behavior_to_value;
use crate::quantifiers::{check_noncontextual_on, quantify_on, Measure, NcPolytope, QuantValue, QuantifierOptions};
use crate::sampling::{random_nc_behavior, random_nd_behavior};
use crate::scenario::{vertex_cap_from_env, Scenario, ScenarioSpec};

/// Allowed increase of `E_max` under a wiring.
pub const EMAX_MONOTONICITY_TOL: f64 = 1e-4;

/// Which wirings a monotonicity suite draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpClass {
    Full,
    PostOnly,
}

impl fmt::Display for OpClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OpClass::Full => "full",
            OpClass::PostOnly => "post-only",
        })
    }
}

impl FromStr for OpClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(OpClass::Full),
            "post-only" | "post" => Ok(OpClass::PostOnly),
            other => Err(format!("unknown operation class `{other}` (expected full or post-only)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Counterexample {
    pub trial: usize,
    /// Seed of the trial's generator; `seed + trial` of the suite.
    pub seed: u64,
    pub check: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PreservationReport {
    pub scenario: ScenarioSpec,
    pub trials: usize,
    pub seed: u64,
    /// Trials whose disturbance-free input stayed disturbance-free.
    pub nd_passed: usize,
    /// Trials whose NC input came out certified NC.
    pub nc_passed: usize,
    pub invalid_wirings: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
}

impl PreservationReport {
    pub fn all_passed(&self) -> bool {
        self.nd_passed == self.trials && self.nc_passed == self.trials && self.invalid_wirings == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MonotonicityReport {
    pub measure: Measure,
    pub opclass: OpClass,
    pub scenario: ScenarioSpec,
    pub trials: usize,
    pub seed: u64,
    /// Allowed increase; zero means an exact comparison.
    pub tolerance: f64,
    pub passed: usize,
    pub violations: usize,
    pub errors: usize,
    /// Largest `Q(W(B)) − Q(B)` seen (negative when the measure always decreased).
    pub max_excess: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
}

impl MonotonicityReport {
    pub fn all_passed(&self) -> bool {
        self.passed == self.trials
    }
}

fn trial_rng(seed: u64, trial: usize) -> (u64, ChaCha8Rng) {
    let s = seed.wrapping_add(trial as u64);
    (s, ChaCha8Rng::seed_from_u64(s))
}

fn counterexample(trial: usize, seed: u64, check: &str, message: String, input: Option<&Behavior>, output: Option<&Behavior>) -> Counterexample {
    Counterexample {
        trial,
        seed,
        check: check.into(),
        message,
        input: input.map(behavior_to_value),
        output: output.map(behavior_to_value),
    }
}

/// Reuses `poly` when the behavior lives on its scenario.
fn polytope_for<'a>(b: &Behavior, poly: &'a NcPolytope, scratch: &'a mut Option<NcPolytope>) -> Result<&'a NcPolytope, WiringError> {
    if **b.scenario_arc() == **poly.scenario() {
        Ok(poly)
    } else {
        Ok(scratch.insert(NcPolytope::new(b.scenario_arc().clone(), vertex_cap_from_env())?))
    }
}

struct PreservationTrial {
    nd: bool,
    nc: bool,
    invalid: bool,
    counterexample: Option<Counterexample>,
}

fn preservation_trial(sampler: &WiringSampler, poly: &NcPolytope, seed: u64, trial: usize) -> PreservationTrial {
    let (s, mut rng) = trial_rng(seed, trial);
    let scenario = sampler.target().clone();
    let fail = |check: &str, msg: String, i: Option<&Behavior>, o: Option<&Behavior>| PreservationTrial {
        nd: false,
        nc: false,
        invalid: check == "wiring-valid",
        counterexample: Some(counterexample(trial, s, check, msg, i, o)),
    };
    let wiring: NcWiring = match sampler.sample_with(&mut rng) {
        Ok(w) => w,
        Err(e) => return fail("wiring-valid", e.to_string(), None, None),
    };
    let b_nd = match random_nd_behavior(&scenario, &mut rng) {
        Ok(b) => b,
        Err(e) => return fail("sampling", e.to_string(), None, None),
    };
    let b_nc = random_nc_behavior(&scenario, 4, &mut rng);

    let mut result = PreservationTrial { nd: false, nc: false, invalid: false, counterexample: None };
    match apply_ncwiring(&wiring, &b_nd) {
        Ok(out) if out.is_nondisturbing() => result.nd = true,
        Ok(out) => {
            result.counterexample =
                Some(counterexample(trial, s, "nd-preservation", "output is disturbing".into(), Some(&b_nd), Some(&out)))
        }
        Err(e) => result.counterexample = Some(counterexample(trial, s, "nd-preservation", e.to_string(), Some(&b_nd), None)),
    }
    let nc_check = apply_ncwiring(&wiring, &b_nc).and_then(|out| {
        let mut scratch = None;
        let p = polytope_for(&out, poly, &mut scratch)?;
        let check = check_noncontextual_on(&out, p)?;
        Ok((out, check.noncontextual))
    });
    match nc_check {
        Ok((_, true)) => result.nc = true,
        Ok((out, false)) => {
            result.counterexample.get_or_insert(counterexample(
                trial,
                s,
                "nc-preservation",
                "output is contextual".into(),
                Some(&b_nc),
                Some(&out),
            ));
        }
        Err(e) => {
            result.counterexample.get_or_insert(counterexample(trial, s, "nc-preservation", e.to_string(), Some(&b_nc), None));
        }
    }
    result
}

/// Draws `trials` random NC wirings; for each, checks that a random
/// non-disturbing input stays non-disturbing and a random NC input stays
/// NC (LP-certified). Trial `i` uses generator seed `seed + i`.
pub fn run_preservation_suite(scenario: &Arc<Scenario>, trials: usize, seed: u64) -> Result<PreservationReport, WiringError> {
    let poly = NcPolytope::new(scenario.clone(), vertex_cap_from_env())?;
    let sampler = WiringSampler::new(scenario.clone(), SampleParams::default())?;
    let results: Vec<PreservationTrial> =
        (0..trials).into_par_iter().map(|t| preservation_trial(&sampler, &poly, seed, t)).collect();
    Ok(PreservationReport {
        scenario: scenario.to_spec(),
        trials,
        seed,
        nd_passed: results.iter().filter(|r| r.nd).count(),
        nc_passed: results.iter().filter(|r| r.nc).count(),
        invalid_wirings: results.iter().filter(|r| r.invalid).count(),
        counterexample: results.into_iter().find_map(|r| r.counterexample),
    })
}

enum MonotonicityTrial {
    Pass(f64),
    Violation(f64, Counterexample),
    Error(Counterexample),
}

fn excess(before: &QuantValue, after: &QuantValue) -> (f64, Option<bool>) {
    match (before, after) {
        (QuantValue::Exact(b), QuantValue::Exact(a)) => ((after.to_f64() - before.to_f64()), Some(a <= b)),
        _ => (after.to_f64() - before.to_f64(), None),
    }
}

fn monotonicity_trial(
    measure: Measure,
    sampler: &WiringSampler,
    poly: &NcPolytope,
    tolerance: f64,
    seed: u64,
    trial: usize,
) -> MonotonicityTrial {
    let (s, mut rng) = trial_rng(seed, trial);
    let error = |msg: String, i: Option<&Behavior>| MonotonicityTrial::Error(counterexample(trial, s, "evaluation", msg, i, None));
    let wiring = match sampler.sample_with(&mut rng) {
        Ok(w) => w,
        Err(e) => return error(e.to_string(), None),
    };
    let b = match random_nd_behavior(sampler.target(), &mut rng) {
        Ok(b) => b,
        Err(e) => return error(e.to_string(), None),
    };
    let out = match apply_ncwiring(&wiring, &b) {
        Ok(o) => o,
        Err(e) => return error(e.to_string(), Some(&b)),
    };
    let options = QuantifierOptions::default();
    let before = match quantify_on(measure, &b, poly, &options) {
        Ok(q) => q.value,
        Err(e) => return error(e.to_string(), Some(&b)),
    };
    let mut scratch = None;
    let after = match polytope_for(&out, poly, &mut scratch)
        .map_err(|e| e.to_string())
        .and_then(|p| quantify_on(measure, &out, p, &options).map_err(|e| e.to_string()))
    {
        Ok(q) => q.value,
        Err(e) => return error(e, Some(&b)),
    };
    let (diff, exact_ok) = excess(&before, &after);
    let ok = exact_ok.unwrap_or(diff <= tolerance);
    if ok {
        MonotonicityTrial::Pass(diff)
    } else {
        let msg = format!("{} increased from {before} to {after}", measure.symbol());
        MonotonicityTrial::Violation(diff, counterexample(trial, s, "monotonicity", msg, Some(&b), Some(&out)))
    }
}

/// Tolerance used for the increase of each measure: exact for the LP ones.
pub fn monotonicity_tolerance(measure: Measure) -> f64 {
    match measure {
        Measure::Cf | Measure::Du | Measure::Dmax => 0.0,
        Measure::Eu => QuantifierOptions::default().entropic.tol,
        Measure::Emax => EMAX_MONOTONICITY_TOL,
    }
}

/// Checks `Q(W(B)) ≤ Q(B) + tol` over random wirings and non-disturbing inputs.
///
/// `E_u` and `D_u` are only known to be monotone under post-processing, so
/// those measures are refused with [`OpClass::Full`].
pub fn run_monotonicity_suite(
    measure: Measure,
    scenario: &Arc<Scenario>,
    trials: usize,
    seed: u64,
    opclass: OpClass,
) -> Result<MonotonicityReport, WiringError> {
    if opclass == OpClass::Full && matches!(measure, Measure::Eu | Measure::Du) {
        return Err(WiringError::Refused(format!(
            "{} is only known to be a monotone under post-processing and a restricted class of pre-processing; \
             run it with opclass post-only",
            measure.symbol()
        )));
    }
    let poly = NcPolytope::new(scenario.clone(), vertex_cap_from_env())?;
    let params = SampleParams { post_only: opclass == OpClass::PostOnly, ..SampleParams::default() };
    let sampler = WiringSampler::new(scenario.clone(), params)?;
    let tolerance = monotonicity_tolerance(measure);
    let results: Vec<MonotonicityTrial> = (0..trials)
        .into_par_iter()
        .map(|t| monotonicity_trial(measure, &sampler, &poly, tolerance, seed, t))
        .collect();
    let mut report = MonotonicityReport {
        measure,
        opclass,
        scenario: scenario.to_spec(),
        trials,
        seed,
        tolerance,
        passed: 0,
        violations: 0,
        errors: 0,
        max_excess: f64::NEG_INFINITY,
        counterexample: None,
    };
    for r in results {
        match r {
            MonotonicityTrial::Pass(d) => {
                report.passed += 1;
                report.max_excess = report.max_excess.max(d);
            }
            MonotonicityTrial::Violation(d, c) => {
                report.violations += 1;
                report.max_excess = report.max_excess.max(d);
                report.counterexample.get_or_insert(c);
            }
            MonotonicityTrial::Error(c) => {
                report.errors += 1;
                report.counterexample.get_or_insert(c);
            }
        }
    }
    if report.max_excess == f64::NEG_INFINITY {
        report.max_excess = 0.0;
    }
    Ok(report)
}
