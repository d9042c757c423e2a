//! Non-contextual wirings: pre-processing, post-processing and their composition.
//!
//! A wire is a position inside a context. For a pre-box context `β` and
//! lights `r`, wire `i` presses target button `lightToButton(β_i, r_i)`;
//! those buttons must form a target context `γ(r)`. The target light
//! `s_i` of that wire selects post-box button `buttonFromLight(γ_i, s_i)`,
//! whose light `t_i` is drawn from the wire's response
//! `p(t_i | δ, β_i, r_i, φ)`. Responses are products over wires for each
//! value of the shared variable `φ`, so the post-processing is
//! non-contextual by construction.

mod sample;
mod suite;

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::behavior::{Behavior, BehaviorError};
use crate::quantifiers::{check_noncontextual, QuantifierError};
use crate::rational::Rational;
use crate::scenario::{decode_tuple, encode_tuple, Diagnostic, Scenario, ScenarioError};

pub use sample::{sample_random_ncwiring, SampleParams, WiringSampler, MAP_ENUMERATION_CAP};
pub use suite::{
    run_monotonicity_suite, run_preservation_suite, Counterexample, MonotonicityReport, OpClass,
    PreservationReport,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WiringError {
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Quantifier(#[from] QuantifierError),
    #[error("invalid wiring: {}", .0.iter().filter(|d| d.is_error()).map(|d| d.message.as_str()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
    #[error("behavior scenario does not match the wiring's target scenario")]
    ScenarioMismatch,
    #[error("joint post-response does not factorize into wire-local responses: {0}")]
    NotFactorizable(String),
    #[error("{0}")]
    Refused(String),
    #[error("sampling failed: {0}")]
    Sampling(String),
}

/// Conditioning of one response table: post-box button, and optionally the
/// pre-box button and light of the wire (`None` matches any).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResponseKey {
    pub post: usize,
    pub given: Option<(usize, usize)>,
}

/// NC pre-box plus the map from its lights to target buttons.
#[derive(Debug, Clone, PartialEq)]
pub struct PreProcessing {
    pub pre_box: Behavior,
    /// `light_to_button[pre measurement][pre outcome]` is a target measurement.
    pub light_to_button: Vec<Vec<usize>>,
}

/// Wire-local, `φ`-mixed responses of the post-box.
#[derive(Debug, Clone, PartialEq)]
pub struct PostProcessing {
    pub scenario: Arc<Scenario>,
    /// `button_from_light[target measurement][target outcome]` is a post-box measurement.
    pub button_from_light: Vec<Vec<usize>>,
    pub phi: Vec<Rational>,
    /// One table per value of `φ`; each entry is a distribution over post outcomes.
    pub responses: Vec<BTreeMap<ResponseKey, Vec<Rational>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcWiring {
    pub target: Arc<Scenario>,
    pub pre: PreProcessing,
    pub post: PostProcessing,
}

/// Where the wires of one pre context land for one light tuple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub target_context: usize,
    /// `position[i]` is the slot of wire `i` inside the target context.
    pub position: Vec<usize>,
}

impl PreProcessing {
    pub fn new(pre_box: Behavior, light_to_button: Vec<Vec<usize>>) -> Self {
        Self { pre_box, light_to_button }
    }

    /// Deterministic pre-box on a copy of the target that presses each button unchanged.
    pub fn identity(target: &Arc<Scenario>) -> Self {
        let tables = (0..target.num_contexts())
            .map(|c| {
                let mut t = vec![Rational::zero(); target.table_len(c)];
                t[0] = Rational::one();
                t
            })
            .collect();
        let pre_box = Behavior::new(target.clone(), tables).expect("point masses");
        let light_to_button = (0..target.num_measurements()).map(|m| vec![m; target.num_outcomes()]).collect();
        Self { pre_box, light_to_button }
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        self.pre_box.scenario_arc()
    }

    /// Routes for every pre context and light tuple, or the list of violations.
    pub fn routes(&self, target: &Scenario) -> Result<Vec<Vec<Route>>, Vec<Diagnostic>> {
        let pre = self.scenario();
        let mut diags = Vec::new();
        if self.light_to_button.len() != pre.num_measurements() {
            diags.push(Diagnostic::error(format!(
                "lightToButton covers {} pre-box measurements, expected {}",
                self.light_to_button.len(),
                pre.num_measurements()
            )));
            return Err(diags);
        }
        for (m, row) in self.light_to_button.iter().enumerate() {
            if row.len() != pre.num_outcomes() {
                diags.push(Diagnostic::error(format!(
                    "lightToButton for pre-box measurement {} covers {} outcomes, expected {}",
                    pre.measurements()[m],
                    row.len(),
                    pre.num_outcomes()
                )));
            }
            if let Some(bad) = row.iter().find(|&&t| t >= target.num_measurements()) {
                diags.push(Diagnostic::error(format!(
                    "lightToButton for {} points at unknown target measurement #{bad}",
                    pre.measurements()[m]
                )));
            }
        }
        if !diags.is_empty() {
            return Err(diags);
        }
        let mut routes = Vec::with_capacity(pre.num_contexts());
        for beta in 0..pre.num_contexts() {
            let members = pre.context(beta);
            let mut per_r = Vec::with_capacity(pre.table_len(beta));
            for r_idx in 0..pre.table_len(beta) {
                let r = pre.decode_tuple(beta, r_idx);
                let buttons: Vec<usize> = members.iter().zip(&r).map(|(&m, &o)| self.light_to_button[m][o]).collect();
                match target.find_context(&buttons) {
                    Some(gamma) => {
                        let ctx = target.context(gamma);
                        let position = buttons.iter().map(|b| ctx.iter().position(|x| x == b).unwrap()).collect();
                        per_r.push(Route { target_context: gamma, position });
                    }
                    None => {
                        let names: Vec<&str> = buttons.iter().map(|&b| target.measurements()[b].as_str()).collect();
                        diags.push(Diagnostic::error(format!(
                            "pre context {{{}}} with lights ({}): buttons {{{}}} are not a context of the target scenario",
                            pre.context_names(beta).join(","),
                            pre.tuple_key(&r),
                            names.join(",")
                        )));
                    }
                }
            }
            routes.push(per_r);
        }
        if diags.is_empty() {
            Ok(routes)
        } else {
            Err(diags)
        }
    }
}

impl PostProcessing {
    pub fn new(
        scenario: Arc<Scenario>,
        button_from_light: Vec<Vec<usize>>,
        phi: Vec<Rational>,
        responses: Vec<BTreeMap<ResponseKey, Vec<Rational>>>,
    ) -> Self {
        Self { scenario, button_from_light, phi, responses }
    }

    /// Post-box whose buttons are the pairs `m=s` of the target, so a
    /// response may depend on both the wire's target button and its light.
    pub fn lifted_scenario(target: &Scenario, outcomes: &[String]) -> Result<Scenario, ScenarioError> {
        let name = |m: usize, o: usize| format!("{}={}", target.measurements()[m], target.outcomes()[o]);
        let measurements: Vec<String> = (0..target.num_measurements())
            .flat_map(|m| (0..target.num_outcomes()).map(move |o| (m, o)))
            .map(|(m, o)| name(m, o))
            .collect();
        let mut contexts = Vec::new();
        for c in 0..target.num_contexts() {
            for idx in 0..target.table_len(c) {
                let s = target.decode_tuple(c, idx);
                contexts.push(target.context(c).iter().zip(&s).map(|(&m, &o)| name(m, o)).collect::<Vec<_>>());
            }
        }
        Scenario::new(measurements, outcomes.iter().cloned(), contexts)
    }

    /// `button_from_light` onto [`PostProcessing::lifted_scenario`].
    pub fn lifted_map(target: &Scenario) -> Vec<Vec<usize>> {
        let k = target.num_outcomes();
        (0..target.num_measurements()).map(|m| (0..k).map(|o| m * k + o).collect()).collect()
    }

    /// Responses that copy the target light.
    pub fn identity(target: &Arc<Scenario>) -> Self {
        let scenario = Arc::new(Self::lifted_scenario(target, target.outcomes()).expect("lift of a valid scenario"));
        let k = target.num_outcomes();
        let mut table = BTreeMap::new();
        for m in 0..target.num_measurements() {
            for o in 0..k {
                let mut dist = vec![Rational::zero(); k];
                dist[o] = Rational::one();
                table.insert(ResponseKey { post: m * k + o, given: None }, dist);
            }
        }
        Self { scenario, button_from_light: Self::lifted_map(target), phi: vec![Rational::one()], responses: vec![table] }
    }

    pub fn num_outcomes(&self) -> usize {
        self.scenario.num_outcomes()
    }

    /// Response for `φ`, falling back from the conditioned key to the unconditioned one.
    pub fn response(&self, phi: usize, post: usize, given: Option<(usize, usize)>) -> Option<&[Rational]> {
        let table = self.responses.get(phi)?;
        given
            .and_then(|g| table.get(&ResponseKey { post, given: Some(g) }))
            .or_else(|| table.get(&ResponseKey { post, given: None }))
            .map(Vec::as_slice)
    }

    /// Structural checks against the target: map shapes, post contexts,
    /// `φ` weights and response tables.
    fn structural_diagnostics(&self, target: &Scenario) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let post = &self.scenario;
        if self.button_from_light.len() != target.num_measurements()
            || self.button_from_light.iter().any(|row| row.len() != target.num_outcomes())
        {
            diags.push(Diagnostic::error(format!(
                "buttonFromLight must cover all {} target measurements and {} outcomes",
                target.num_measurements(),
                target.num_outcomes()
            )));
            return diags;
        }
        if self.button_from_light.iter().flatten().any(|&p| p >= post.num_measurements()) {
            diags.push(Diagnostic::error("buttonFromLight points at an unknown post-box measurement"));
            return diags;
        }
        for gamma in 0..target.num_contexts() {
            for idx in 0..target.table_len(gamma) {
                let s = target.decode_tuple(gamma, idx);
                let buttons: Vec<usize> =
                    target.context(gamma).iter().zip(&s).map(|(&m, &o)| self.button_from_light[m][o]).collect();
                if post.find_context(&buttons).is_none() {
                    let names: Vec<&str> = buttons.iter().map(|&b| post.measurements()[b].as_str()).collect();
                    diags.push(Diagnostic::error(format!(
                        "target context {{{}}} with lights ({}): post buttons {{{}}} are not a post-box context",
                        target.context_names(gamma).join(","),
                        target.tuple_key(&s),
                        names.join(",")
                    )));
                }
            }
        }
        if self.phi.is_empty() {
            diags.push(Diagnostic::error("phi distribution is empty"));
        } else if self.phi.iter().any(Signed::is_negative) || !self.phi.iter().sum::<Rational>().is_one() {
            diags.push(Diagnostic::error("phi weights must be non-negative and sum to 1"));
        }
        if self.responses.len() != self.phi.len() {
            diags.push(Diagnostic::error(format!(
                "{} response tables for {} values of phi",
                self.responses.len(),
                self.phi.len()
            )));
        }
        for (f, table) in self.responses.iter().enumerate() {
            for (key, dist) in table {
                let ok = dist.len() == post.num_outcomes()
                    && dist.iter().all(|p| !p.is_negative())
                    && dist.iter().sum::<Rational>().is_one();
                if !ok || key.post >= post.num_measurements() {
                    diags.push(Diagnostic::error(format!(
                        "response for phi {f}, post button #{} is not a distribution over post outcomes",
                        key.post
                    )));
                }
            }
        }
        diags
    }

    /// Every response needed by the standalone form (unconditioned keys).
    fn standalone_diagnostics(&self, target: &Scenario) -> Vec<Diagnostic> {
        let mut diags = self.structural_diagnostics(target);
        if !diags.is_empty() {
            return diags;
        }
        for f in 0..self.phi.len() {
            for m in 0..target.num_measurements() {
                for o in 0..target.num_outcomes() {
                    let p = self.button_from_light[m][o];
                    if self.responses[f].get(&ResponseKey { post: p, given: None }).is_none() {
                        diags.push(Diagnostic::error(format!(
                            "missing unconditioned response for phi {f}, post button {}",
                            self.scenario.measurements()[p]
                        )));
                    }
                }
            }
        }
        dedup(diags)
    }

    /// Builds a single-`φ` post-processing from a joint response per target
    /// context and light tuple, provided it factorizes into wire-local
    /// responses that depend on the post button only.
    pub fn from_joint(
        target: &Scenario,
        scenario: Arc<Scenario>,
        button_from_light: Vec<Vec<usize>>,
        joint: &JointPostResponse,
    ) -> Result<Self, WiringError> {
        let k = scenario.num_outcomes();
        let mut table: BTreeMap<ResponseKey, Vec<Rational>> = BTreeMap::new();
        for gamma in 0..target.num_contexts() {
            let n = target.context(gamma).len();
            for idx in 0..target.table_len(gamma) {
                let s = target.decode_tuple(gamma, idx);
                let dist = joint
                    .tables
                    .get(&(gamma, idx))
                    .ok_or_else(|| WiringError::NotFactorizable(format!("no joint response for context {gamma}, lights {idx}")))?;
                if dist.len() != k.pow(n as u32) {
                    return Err(WiringError::NotFactorizable(format!("joint response for context {gamma} has wrong length")));
                }
                let marginals: Vec<Vec<Rational>> = (0..n)
                    .map(|i| {
                        let mut m = vec![Rational::zero(); k];
                        for (t_idx, p) in dist.iter().enumerate() {
                            m[decode_tuple(k, n, t_idx)[i]] += p;
                        }
                        m
                    })
                    .collect();
                for (t_idx, p) in dist.iter().enumerate() {
                    let t = decode_tuple(k, n, t_idx);
                    let product: Rational = (0..n).map(|i| marginals[i][t[i]].clone()).product();
                    if &product != p {
                        return Err(WiringError::NotFactorizable(format!(
                            "context {{{}}}, lights ({}): wires are correlated beyond the declared phi",
                            target.context_names(gamma).join(","),
                            target.tuple_key(&s)
                        )));
                    }
                }
                for (i, &m) in target.context(gamma).iter().enumerate() {
                    let key = ResponseKey { post: button_from_light[m][s[i]], given: None };
                    match table.get(&key) {
                        Some(existing) if existing != &marginals[i] => {
                            return Err(WiringError::NotFactorizable(format!(
                                "post button {} responds differently across contexts",
                                scenario.measurements()[key.post]
                            )));
                        }
                        Some(_) => {}
                        None => {
                            table.insert(key, marginals[i].clone());
                        }
                    }
                }
            }
        }
        Ok(Self { scenario, button_from_light, phi: vec![Rational::one()], responses: vec![table] })
    }
}

/// Post-box response given as one joint distribution over all wires'
/// lights, keyed by `(target context, target light tuple index)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointPostResponse {
    pub tables: BTreeMap<(usize, usize), Vec<Rational>>,
}

fn dedup(mut diags: Vec<Diagnostic>) -> Vec<Diagnostic> {
    let mut seen = std::collections::BTreeSet::new();
    diags.retain(|d| seen.insert(d.message.clone()));
    diags
}

impl NcWiring {
    /// Validates against `target` (including the LP certificate that the pre-box is NC).
    pub fn new(target: Arc<Scenario>, pre: PreProcessing, post: PostProcessing) -> Result<Self, WiringError> {
        let wiring = Self { target, pre, post };
        let diags = validate_wiring(&wiring);
        if diags.iter().any(Diagnostic::is_error) {
            return Err(WiringError::Invalid(diags));
        }
        Ok(wiring)
    }

    pub fn identity(target: &Arc<Scenario>) -> Self {
        Self { target: target.clone(), pre: PreProcessing::identity(target), post: PostProcessing::identity(target) }
    }

    /// `(M_PRE, C_PRE, O_POST)`.
    pub fn output_scenario(&self) -> Result<Scenario, ScenarioError> {
        self.pre.scenario().with_outcomes(self.post.scenario.outcomes().to_vec())
    }
}

/// Every violated wiring invariant, naming the offending context and tuple.
pub fn validate_wiring(w: &NcWiring) -> Vec<Diagnostic> {
    let target = &w.target;
    let mut diags = Vec::new();
    let routes = match w.pre.routes(target) {
        Ok(r) => Some(r),
        Err(d) => {
            diags.extend(d);
            None
        }
    };
    match check_noncontextual(&w.pre.pre_box) {
        Ok(c) if c.noncontextual => {}
        Ok(_) => diags.push(Diagnostic::error("pre-box not non-contextual")),
        Err(QuantifierError::Behavior(BehaviorError::Disturbing { .. })) => {
            diags.push(Diagnostic::error("pre-box not non-contextual (it is disturbing)"))
        }
        Err(e) => diags.push(Diagnostic::error(format!("pre-box could not be certified: {e}"))),
    }
    let structural = w.post.structural_diagnostics(target);
    let structural_ok = structural.is_empty();
    diags.extend(structural);
    if let (Some(routes), true) = (routes, structural_ok) {
        let pre = w.pre.scenario();
        for (beta, per_r) in routes.iter().enumerate() {
            let members = pre.context(beta);
            for (r_idx, route) in per_r.iter().enumerate() {
                let r = pre.decode_tuple(beta, r_idx);
                let ctx = target.context(route.target_context);
                for i in 0..members.len() {
                    let m = ctx[route.position[i]];
                    for o in 0..target.num_outcomes() {
                        let post = w.post.button_from_light[m][o];
                        for f in 0..w.post.phi.len() {
                            if w.post.response(f, post, Some((members[i], r[i]))).is_none() {
                                diags.push(Diagnostic::error(format!(
                                    "missing response for phi {f}, post button {}, pre button {}, pre light {}",
                                    w.post.scenario.measurements()[post],
                                    pre.measurements()[members[i]],
                                    pre.outcomes()[r[i]]
                                )));
                            }
                        }
                    }
                }
            }
        }
    }
    dedup(diags)
}

/// Diagnostics for a standalone pre-processing against a target scenario.
pub fn validate_preprocessing(pre: &PreProcessing, target: &Scenario) -> Vec<Diagnostic> {
    let mut diags = pre.routes(target).err().unwrap_or_default();
    match check_noncontextual(&pre.pre_box) {
        Ok(c) if c.noncontextual => {}
        _ => diags.push(Diagnostic::error("pre-box not non-contextual")),
    }
    diags
}

/// Diagnostics for a standalone post-processing against a target scenario.
pub fn validate_postprocessing(post: &PostProcessing, target: &Scenario) -> Vec<Diagnostic> {
    post.standalone_diagnostics(target)
}

fn require_valid(diags: Vec<Diagnostic>) -> Result<(), WiringError> {
    if diags.iter().any(Diagnostic::is_error) {
        Err(WiringError::Invalid(diags))
    } else {
        Ok(())
    }
}

/// Adds `weight · Π_i dists[i][t_i]` to `out` (first wire most significant).
fn accumulate_product(out: &mut [Rational], weight: &Rational, dists: &[&[Rational]]) {
    let mut acc: Vec<Rational> = vec![weight.clone()];
    for d in dists {
        let mut next = Vec::with_capacity(acc.len() * d.len());
        for a in &acc {
            for p in d.iter() {
                next.push(if a.is_zero() || p.is_zero() { Rational::zero() } else { a * p });
            }
        }
        acc = next;
    }
    for (o, a) in out.iter_mut().zip(acc) {
        if !a.is_zero() {
            *o += a;
        }
    }
}

/// `p_β(s) = Σ_r p_{γ(r)}(s)·p_β(r)` on `(M_PRE, C_PRE, O)`.
pub fn apply_preprocessing(pre: &PreProcessing, b: &Behavior) -> Result<Behavior, WiringError> {
    b.require_nondisturbing()?;
    let target = b.scenario();
    let routes = pre.routes(target).map_err(WiringError::Invalid)?;
    let scenario = Arc::new(pre.scenario().with_outcomes(target.outcomes().to_vec())?);
    let radix = target.num_outcomes();
    let mut tables = Vec::with_capacity(scenario.num_contexts());
    for (beta, per_r) in routes.iter().enumerate() {
        let n = scenario.context(beta).len();
        let mut out = vec![Rational::zero(); scenario.table_len(beta)];
        for (r_idx, route) in per_r.iter().enumerate() {
            let pr = &pre.pre_box.table(beta)[r_idx];
            if pr.is_zero() {
                continue;
            }
            for (s_idx, ps) in b.table(route.target_context).iter().enumerate() {
                if ps.is_zero() {
                    continue;
                }
                let s = target.decode_tuple(route.target_context, s_idx);
                let wires: Vec<usize> = (0..n).map(|i| s[route.position[i]]).collect();
                out[encode_tuple(radix, &wires)] += pr * ps;
            }
        }
        tables.push(out);
    }
    Ok(Behavior::new(scenario, tables)?)
}

/// `p_γ(t) = Σ_s Σ_φ p(φ) Π_i p_{δ_i(s_i)}(t_i | φ)·p_γ(s)` on `(M, C, O_POST)`.
pub fn apply_postprocessing(post: &PostProcessing, b: &Behavior) -> Result<Behavior, WiringError> {
    b.require_nondisturbing()?;
    let target = b.scenario();
    require_valid(post.standalone_diagnostics(target))?;
    let scenario = Arc::new(target.with_outcomes(post.scenario.outcomes().to_vec())?);
    let mut tables = Vec::with_capacity(target.num_contexts());
    for gamma in 0..target.num_contexts() {
        let members = target.context(gamma);
        let mut out = vec![Rational::zero(); scenario.table_len(gamma)];
        for (s_idx, ps) in b.table(gamma).iter().enumerate() {
            if ps.is_zero() {
                continue;
            }
            let s = target.decode_tuple(gamma, s_idx);
            for (f, pf) in post.phi.iter().enumerate() {
                if pf.is_zero() {
                    continue;
                }
                let dists: Vec<&[Rational]> = members
                    .iter()
                    .zip(&s)
                    .map(|(&m, &o)| post.response(f, post.button_from_light[m][o], None).expect("validated"))
                    .collect();
                accumulate_product(&mut out, &(ps * pf), &dists);
            }
        }
        tables.push(out);
    }
    Ok(Behavior::new(scenario, tables)?)
}

/// The full composition
/// `p_β(t) = Σ_{r,s} Σ_φ p(φ) Π_i p_{δ(γ_i,s_i)}(t_i | β_i, r_i, φ) · p_{γ(r)}(s) · p_β(r)`.
///
/// Only structural validity is rechecked here; the pre-box NC certificate
/// is established by [`NcWiring::new`] / [`validate_wiring`].
pub fn apply_ncwiring(w: &NcWiring, b: &Behavior) -> Result<Behavior, WiringError> {
    if **b.scenario_arc() != *w.target {
        return Err(WiringError::ScenarioMismatch);
    }
    b.require_nondisturbing()?;
    let target = b.scenario();
    let routes = w.pre.routes(target).map_err(WiringError::Invalid)?;
    require_valid(w.post.structural_diagnostics(target))?;
    let pre = w.pre.scenario();
    let scenario = Arc::new(w.output_scenario()?);
    let mut tables = Vec::with_capacity(pre.num_contexts());
    for (beta, per_r) in routes.iter().enumerate() {
        let members = pre.context(beta);
        let n = members.len();
        let mut out = vec![Rational::zero(); scenario.table_len(beta)];
        for (r_idx, route) in per_r.iter().enumerate() {
            let pr = &w.pre.pre_box.table(beta)[r_idx];
            if pr.is_zero() {
                continue;
            }
            let r = pre.decode_tuple(beta, r_idx);
            let ctx = target.context(route.target_context);
            for (s_idx, ps) in b.table(route.target_context).iter().enumerate() {
                if ps.is_zero() {
                    continue;
                }
                let s = target.decode_tuple(route.target_context, s_idx);
                let weight_rs = pr * ps;
                for (f, pf) in w.post.phi.iter().enumerate() {
                    if pf.is_zero() {
                        continue;
                    }
                    let mut dists: Vec<&[Rational]> = Vec::with_capacity(n);
                    for i in 0..n {
                        let slot = route.position[i];
                        let post_button = w.post.button_from_light[ctx[slot]][s[slot]];
                        let d = w.post.response(f, post_button, Some((members[i], r[i]))).ok_or_else(|| {
                            WiringError::Invalid(vec![Diagnostic::error(format!(
                                "missing response for phi {f}, post button {}",
                                w.post.scenario.measurements()[post_button]
                            ))])
                        })?;
                        dists.push(d);
                    }
                    accumulate_product(&mut out, &(&weight_rs * pf), &dists);
                }
            }
        }
        tables.push(out);
    }
    Ok(Behavior::new(scenario, tables)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::{catalog as boxes, mix_behaviors};
    use crate::rational::ratio;
    use crate::scenario::catalog;

    fn chain_behavior() -> Behavior {
        let s = Arc::new(catalog::chain());
        let t = |a: i64, b: i64, c: i64, d: i64| vec![ratio(a, 12), ratio(b, 12), ratio(c, 12), ratio(d, 12)];
        // p_y = (5/12, 7/12) from both sides
        Behavior::new(s, vec![t(1, 6, 4, 1), t(3, 2, 2, 5)]).unwrap()
    }

    #[test]
    fn identity_wiring_is_identity() {
        for b in [chain_behavior(), boxes::pr_box()] {
            let s = b.scenario_arc().clone();
            let w = NcWiring::new(s.clone(), PreProcessing::identity(&s), PostProcessing::identity(&s)).unwrap();
            assert!(validate_wiring(&w).is_empty());
            assert_eq!(apply_ncwiring(&w, &b).unwrap(), b);
            assert_eq!(apply_preprocessing(&w.pre, &b).unwrap(), b);
            assert_eq!(apply_postprocessing(&w.post, &b).unwrap(), b);
        }
    }

    #[test]
    fn fixed_context_preprocessing() {
        let b = chain_behavior();
        let s = b.scenario_arc().clone();
        // x→x, y→y, z→x: both pre contexts press {x,y}
        let pre = PreProcessing::new(PreProcessing::identity(&s).pre_box, vec![vec![0, 0], vec![1, 1], vec![0, 0]]);
        let out = apply_preprocessing(&pre, &b).unwrap();
        assert_eq!(out.table(0), b.table(0));
        // pre context (y,z): wire y reads target y, wire z reads target x
        for (y, x) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert_eq!(out.prob(1, &[y, x]), b.prob(0, &[x, y]));
        }
    }

    #[test]
    fn uniform_routing_between_chain_contexts() {
        let b = chain_behavior();
        let pre_s = Arc::new(Scenario::binary(&["u", "v"], [vec!["u", "v"]]).unwrap());
        let pre_box = Behavior::uniform(pre_s);
        // u lights 0/1 press x/z, v always presses y
        let pre = PreProcessing::new(pre_box, vec![vec![0, 2], vec![1, 1]]);
        let out = apply_preprocessing(&pre, &b).unwrap();
        for su in 0..2 {
            for sv in 0..2 {
                // direct summation over the four equally likely light pairs
                let via_xy = b.prob(0, &[su, sv]);
                let via_yz = b.prob(1, &[sv, su]);
                let expected = (via_xy + via_xy + via_yz + via_yz) * ratio(1, 4);
                assert_eq!(out.prob(0, &[su, sv]), &expected);
            }
        }
    }

    fn flip_first_wire(target: &Arc<Scenario>) -> PostProcessing {
        let mut post = PostProcessing::identity(target);
        for m in [0usize, 1] {
            for o in 0..2 {
                let mut d = vec![Rational::zero(); 2];
                d[1 - o] = Rational::one();
                post.responses[0].insert(ResponseKey { post: m * 2 + o, given: None }, d);
            }
        }
        post
    }

    #[test]
    fn flipping_party_a_maps_pr_to_anti_pr() {
        let pr = boxes::pr_box();
        let post = flip_first_wire(pr.scenario_arc());
        assert_eq!(apply_postprocessing(&post, &pr).unwrap(), boxes::anti_pr_box());
    }

    #[test]
    fn constant_response_is_deterministic() {
        let b = chain_behavior();
        let s = b.scenario_arc().clone();
        let mut post = PostProcessing::identity(&s);
        for dist in post.responses[0].values_mut() {
            *dist = vec![Rational::zero(), Rational::one()];
        }
        let out = apply_postprocessing(&post, &b).unwrap();
        for c in 0..2 {
            assert_eq!(out.prob(c, &[1, 1]), &Rational::one());
        }
    }

    #[test]
    fn inconsistent_light_map_is_reported() {
        let s = Arc::new(catalog::chain());
        let mut pre = PreProcessing::identity(&s);
        // y's light 1 presses z, so {x,y} with lights (0,1) presses {x,z}
        pre.light_to_button[1][1] = 2;
        let w = NcWiring { target: s.clone(), pre, post: PostProcessing::identity(&s) };
        let diags = validate_wiring(&w);
        assert!(diags.iter().any(|d| d.message.contains("lights (0,1): buttons {x,z}")), "{diags:?}");
        assert!(matches!(NcWiring::new(s, w.pre, w.post), Err(WiringError::Invalid(_))));
    }

    #[test]
    fn contextual_pre_box_is_rejected() {
        let s = Arc::new(catalog::chsh());
        let mut pre = PreProcessing::identity(&s);
        pre.pre_box = boxes::pr_box();
        let w = NcWiring { target: s.clone(), pre, post: PostProcessing::identity(&s) };
        assert!(validate_wiring(&w).iter().any(|d| d.message == "pre-box not non-contextual"));
    }

    #[test]
    fn hidden_shared_bit_does_not_factorize() {
        let s = Arc::new(catalog::chsh());
        let post_s = Arc::new(PostProcessing::lifted_scenario(&s, s.outcomes()).unwrap());
        let mut joint = JointPostResponse::default();
        for c in 0..4 {
            for idx in 0..4 {
                // both wires output the same fair bit
                joint.tables.insert((c, idx), vec![ratio(1, 2), Rational::zero(), Rational::zero(), ratio(1, 2)]);
            }
        }
        let err = PostProcessing::from_joint(&s, post_s.clone(), PostProcessing::lifted_map(&s), &joint).unwrap_err();
        assert!(matches!(err, WiringError::NotFactorizable(_)));

        // an independent joint response is accepted and reproduces identity
        let mut ident = JointPostResponse::default();
        for c in 0..4 {
            for idx in 0..4 {
                let mut d = vec![Rational::zero(); 4];
                d[idx] = Rational::one();
                ident.tables.insert((c, idx), d);
            }
        }
        let post = PostProcessing::from_joint(&s, post_s, PostProcessing::lifted_map(&s), &ident).unwrap();
        assert_eq!(apply_postprocessing(&post, &boxes::pr_box()).unwrap(), boxes::pr_box());
    }

    #[test]
    fn composition_is_linear_in_the_behavior() {
        let pr = boxes::pr_box();
        let s = pr.scenario_arc().clone();
        let w = NcWiring::new(s.clone(), PreProcessing::identity(&s), flip_first_wire(&s)).unwrap();
        let u = Behavior::uniform(s);
        let weights = [ratio(1, 3), ratio(2, 3)];
        let mixed = mix_behaviors(&weights, &[pr.clone(), u.clone()]).unwrap();
        let lhs = apply_ncwiring(&w, &mixed).unwrap();
        let rhs = mix_behaviors(&weights, &[apply_ncwiring(&w, &pr).unwrap(), apply_ncwiring(&w, &u).unwrap()]).unwrap();
        assert_eq!(lhs, rhs);
    }
}
