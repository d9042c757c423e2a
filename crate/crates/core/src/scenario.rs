//! Compatibility scenarios: measurements, a shared outcome set, and the
//! contexts of jointly performable measurements.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default ceiling on `|O|^|M|`, the number of deterministic global assignments.
pub const DEFAULT_VERTEX_CAP: u64 = 1_000_000;

/// Environment variable overriding [`DEFAULT_VERTEX_CAP`].
pub const VERTEX_CAP_ENV: &str = "CTXKIT_VERTEX_CAP";

pub fn vertex_cap_from_env() -> u64 {
    std::env::var(VERTEX_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_VERTEX_CAP)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {}", join_messages(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("scenario has {count} global assignments, more than the cap of {cap}")]
    TooManyAssignments { count: BigUint, cap: u64 },
    #[error("global assignment covers {got} measurements, scenario has {expected}")]
    PartialAssignment { expected: usize, got: usize },
    #[error("unknown measurement `{0}`")]
    UnknownMeasurement(String),
    #[error("unknown outcome `{0}`")]
    UnknownOutcome(String),
}

fn join_messages(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .filter(|d| d.severity == Severity::Error)
        .map(|d| d.message.as_str())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    pub fn error(message: impl Into<String>) -> Self {
        Self { severity: Severity::Error, message: message.into() }
    }

    pub fn warning(message: impl Into<String>) -> Self {
        Self { severity: Severity::Warning, message: message.into() }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// Unchecked scenario description, as read from a file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub measurements: Vec<String>,
    pub outcomes: Vec<String>,
    pub contexts: Vec<Vec<String>>,
    /// Measurement renamings applied when this scenario was composed from others.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub renamed: BTreeMap<String, String>,
}

impl ScenarioSpec {
    pub fn new<M, O, C>(measurements: M, outcomes: O, contexts: C) -> Self
    where
        M: IntoIterator,
        M::Item: Into<String>,
        O: IntoIterator,
        O::Item: Into<String>,
        C: IntoIterator,
        C::Item: IntoIterator,
        <C::Item as IntoIterator>::Item: Into<String>,
    {
        Self {
            measurements: measurements.into_iter().map(Into::into).collect(),
            outcomes: outcomes.into_iter().map(Into::into).collect(),
            contexts: contexts
                .into_iter()
                .map(|c| c.into_iter().map(Into::into).collect())
                .collect(),
            renamed: BTreeMap::new(),
        }
    }
}

/// Checks every scenario invariant. Measurements that sit in no context
/// only produce a warning.
pub fn validate_scenario(spec: &ScenarioSpec) -> Vec<Diagnostic> {
    let mut diags = Vec::new();

    if spec.measurements.is_empty() {
        diags.push(Diagnostic::error("scenario has no measurements"));
    }
    let mut seen = BTreeSet::new();
    for m in &spec.measurements {
        if !seen.insert(m.as_str()) {
            diags.push(Diagnostic::error(format!("duplicate measurement `{m}`")));
        }
    }

    if spec.outcomes.len() < 2 {
        diags.push(Diagnostic::error(format!(
            "outcome set needs at least 2 labels, found {}",
            spec.outcomes.len()
        )));
    }
    let mut seen_outcomes = BTreeSet::new();
    for o in &spec.outcomes {
        if !seen_outcomes.insert(o.as_str()) {
            diags.push(Diagnostic::error(format!("duplicate outcome `{o}`")));
        }
        if o.contains(',') {
            diags.push(Diagnostic::error(format!("outcome label `{o}` contains a comma")));
        }
    }

    if spec.contexts.is_empty() {
        diags.push(Diagnostic::error("scenario has no contexts"));
    }
    let mut context_sets: Vec<BTreeSet<&str>> = Vec::new();
    for (i, ctx) in spec.contexts.iter().enumerate() {
        if ctx.is_empty() {
            diags.push(Diagnostic::error(format!("context {i} is empty")));
            continue;
        }
        let mut set = BTreeSet::new();
        for m in ctx {
            if !seen.contains(m.as_str()) {
                diags.push(Diagnostic::error(format!(
                    "context {i} names unknown measurement `{m}`"
                )));
            }
            if !set.insert(m.as_str()) {
                diags.push(Diagnostic::error(format!("context {i} repeats measurement `{m}`")));
            }
        }
        if let Some(j) = context_sets.iter().position(|s| *s == set) {
            diags.push(Diagnostic::error(format!(
                "duplicate context {i} {{{}}} (same as context {j})",
                ctx.join(",")
            )));
        }
        context_sets.push(set);
    }

    for m in &spec.measurements {
        if !context_sets.iter().any(|s| s.contains(m.as_str())) {
            diags.push(Diagnostic::warning(format!("measurement `{m}` appears in no context")));
        }
    }
    diags
}

/// A validated compatibility scenario.
///
/// Contexts keep the measurement order they were declared with; outcome
/// tuples of a context are indexed in mixed radix `|O|` with the first
/// measurement most significant, so index order is lexicographic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    measurements: Vec<String>,
    outcomes: Vec<String>,
    contexts: Vec<Vec<usize>>,
    renamed: BTreeMap<String, String>,
    measurement_index: HashMap<String, usize>,
    outcome_index: HashMap<String, usize>,
}

impl TryFrom<ScenarioSpec> for Scenario {
    type Error = ScenarioError;

    fn try_from(spec: ScenarioSpec) -> Result<Self, Self::Error> {
        let diags = validate_scenario(&spec);
        if diags.iter().any(Diagnostic::is_error) {
            return Err(ScenarioError::Invalid(diags));
        }
        let measurement_index: HashMap<String, usize> = spec
            .measurements
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let outcome_index = spec
            .outcomes
            .iter()
            .enumerate()
            .map(|(i, o)| (o.clone(), i))
            .collect();
        let contexts = spec
            .contexts
            .iter()
            .map(|ctx| ctx.iter().map(|m| measurement_index[m]).collect())
            .collect();
        Ok(Self {
            measurements: spec.measurements,
            outcomes: spec.outcomes,
            contexts,
            renamed: spec.renamed,
            measurement_index,
            outcome_index,
        })
    }
}

impl Scenario {
    pub fn new<M, O, C>(measurements: M, outcomes: O, contexts: C) -> Result<Self, ScenarioError>
    where
        M: IntoIterator,
        M::Item: Into<String>,
        O: IntoIterator,
        O::Item: Into<String>,
        C: IntoIterator,
        C::Item: IntoIterator,
        <C::Item as IntoIterator>::Item: Into<String>,
    {
        Self::try_from(ScenarioSpec::new(measurements, outcomes, contexts))
    }

    /// Binary outcomes labelled `"0"`, `"1"`.
    pub fn binary<C>(measurements: &[&str], contexts: C) -> Result<Self, ScenarioError>
    where
        C: IntoIterator,
        C::Item: IntoIterator,
        <C::Item as IntoIterator>::Item: Into<String>,
    {
        Self::new(measurements.iter().copied(), ["0", "1"], contexts)
    }

    pub fn to_spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            measurements: self.measurements.clone(),
            outcomes: self.outcomes.clone(),
            contexts: self
                .contexts
                .iter()
                .map(|c| c.iter().map(|&m| self.measurements[m].clone()).collect())
                .collect(),
            renamed: self.renamed.clone(),
        }
    }

    pub fn measurements(&self) -> &[String] {
        &self.measurements
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn contexts(&self) -> &[Vec<usize>] {
        &self.contexts
    }

    pub fn context(&self, index: usize) -> &[usize] {
        &self.contexts[index]
    }

    pub fn renamed(&self) -> &BTreeMap<String, String> {
        &self.renamed
    }

    pub fn num_measurements(&self) -> usize {
        self.measurements.len()
    }

    pub fn num_outcomes(&self) -> usize {
        self.outcomes.len()
    }

    pub fn num_contexts(&self) -> usize {
        self.contexts.len()
    }

    pub fn measurement_index(&self, name: &str) -> Option<usize> {
        self.measurement_index.get(name).copied()
    }

    pub fn outcome_index(&self, label: &str) -> Option<usize> {
        self.outcome_index.get(label).copied()
    }

    pub fn context_names(&self, index: usize) -> Vec<&str> {
        self.contexts[index].iter().map(|&m| self.measurements[m].as_str()).collect()
    }

    /// Number of outcome tuples of a context, `|O|^|γ|`.
    pub fn table_len(&self, index: usize) -> usize {
        self.num_outcomes().pow(self.contexts[index].len() as u32)
    }

    /// Total number of (context, tuple) entries over all contexts.
    pub fn total_entries(&self) -> usize {
        (0..self.num_contexts()).map(|i| self.table_len(i)).sum()
    }

    pub fn encode_tuple(&self, outcomes: &[usize]) -> usize {
        encode_tuple(self.num_outcomes(), outcomes)
    }

    pub fn decode_tuple(&self, context: usize, index: usize) -> Vec<usize> {
        decode_tuple(self.num_outcomes(), self.contexts[context].len(), index)
    }

    /// Comma-joined outcome labels, the on-disk key of a tuple.
    pub fn tuple_key(&self, outcomes: &[usize]) -> String {
        outcomes
            .iter()
            .map(|&o| self.outcomes[o].as_str())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Finds the context whose measurement set equals `measurements` (order ignored).
    pub fn find_context(&self, measurements: &[usize]) -> Option<usize> {
        let wanted: BTreeSet<usize> = measurements.iter().copied().collect();
        if wanted.len() != measurements.len() {
            return None;
        }
        self.contexts
            .iter()
            .position(|c| c.len() == wanted.len() && c.iter().all(|m| wanted.contains(m)))
    }

    /// Measurements shared by two contexts, in scenario measurement order.
    pub fn intersection(&self, a: usize, b: usize) -> Vec<usize> {
        let other: BTreeSet<usize> = self.contexts[b].iter().copied().collect();
        let mut common: Vec<usize> =
            self.contexts[a].iter().copied().filter(|m| other.contains(m)).collect();
        common.sort_unstable();
        common
    }

    /// `|O|^|M|` as an exact integer.
    pub fn assignment_count(&self) -> BigUint {
        num_traits::pow(BigUint::from(self.num_outcomes()), self.num_measurements())
    }

    /// Same structure with every measurement renamed through `f`.
    pub fn map_measurements(&self, f: impl Fn(&str) -> String) -> Scenario {
        let mut spec = self.to_spec();
        spec.measurements = spec.measurements.iter().map(|m| f(m)).collect();
        spec.contexts = spec
            .contexts
            .iter()
            .map(|c| c.iter().map(|m| f(m)).collect())
            .collect();
        Scenario::try_from(spec).expect("renaming must stay injective")
    }

    /// Same measurements and contexts over a different outcome set.
    pub fn with_outcomes(&self, outcomes: Vec<String>) -> Result<Scenario, ScenarioError> {
        let mut spec = self.to_spec();
        spec.outcomes = outcomes;
        Scenario::try_from(spec)
    }

    pub(crate) fn with_renamed(mut self, renamed: BTreeMap<String, String>) -> Scenario {
        self.renamed = renamed;
        self
    }
}

pub fn encode_tuple(radix: usize, outcomes: &[usize]) -> usize {
    outcomes.iter().fold(0, |acc, &o| acc * radix + o)
}

pub fn decode_tuple(radix: usize, len: usize, mut index: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = index % radix;
        index /= radix;
    }
    out
}

/// Deterministic assignment of an outcome (by index) to every measurement.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GlobalAssignment {
    outcomes: Vec<usize>,
}

impl GlobalAssignment {
    pub fn new(outcomes: Vec<usize>) -> Self {
        Self { outcomes }
    }

    pub fn from_labels(
        scenario: &Scenario,
        labels: &BTreeMap<String, String>,
    ) -> Result<Self, ScenarioError> {
        if labels.len() != scenario.num_measurements() {
            return Err(ScenarioError::PartialAssignment {
                expected: scenario.num_measurements(),
                got: labels.len(),
            });
        }
        let mut outcomes = vec![0; scenario.num_measurements()];
        for (m, o) in labels {
            let mi = scenario
                .measurement_index(m)
                .ok_or_else(|| ScenarioError::UnknownMeasurement(m.clone()))?;
            outcomes[mi] =
                scenario.outcome_index(o).ok_or_else(|| ScenarioError::UnknownOutcome(o.clone()))?;
        }
        Ok(Self { outcomes })
    }

    pub fn outcomes(&self) -> &[usize] {
        &self.outcomes
    }

    pub fn outcome(&self, measurement: usize) -> usize {
        self.outcomes[measurement]
    }

    /// Index of the tuple this assignment induces on `context`.
    pub fn restrict(&self, scenario: &Scenario, context: usize) -> usize {
        scenario.context(context).iter().fold(0, |acc, &m| {
            acc * scenario.num_outcomes() + self.outcomes[m]
        })
    }

    pub fn labels(&self, scenario: &Scenario) -> BTreeMap<String, String> {
        self.outcomes
            .iter()
            .enumerate()
            .map(|(m, &o)| (scenario.measurements()[m].clone(), scenario.outcomes()[o].clone()))
            .collect()
    }
}

/// Iterator over all `|O|^|M|` assignments in lexicographic order.
#[derive(Debug, Clone)]
pub struct GlobalAssignments {
    radix: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for GlobalAssignments {
    type Item = GlobalAssignment;

    fn next(&mut self) -> Option<Self::Item> {
        let current = self.current.as_mut()?;
        let item = GlobalAssignment::new(current.clone());
        // odometer increment, last measurement fastest
        let mut pos = current.len();
        loop {
            if pos == 0 {
                self.current = None;
                break;
            }
            pos -= 1;
            current[pos] += 1;
            if current[pos] < self.radix {
                break;
            }
            current[pos] = 0;
        }
        Some(item)
    }
}

/// All deterministic global assignments, refusing when there are more than `cap`.
pub fn enumerate_global_assignments(
    scenario: &Scenario,
    cap: u64,
) -> Result<GlobalAssignments, ScenarioError> {
    let count = scenario.assignment_count();
    if count > BigUint::from(cap) {
        return Err(ScenarioError::TooManyAssignments { count, cap });
    }
    Ok(GlobalAssignments {
        radix: scenario.num_outcomes(),
        current: Some(vec![0; scenario.num_measurements()]),
    })
}

/// Standard scenarios used throughout tests, examples and the CLI docs.
pub mod catalog {
    use super::Scenario;

    /// Three binary measurements, `y` compatible with both `x` and `z`.
    pub fn chain() -> Scenario {
        Scenario::binary(&["x", "y", "z"], [vec!["x", "y"], vec!["y", "z"]]).unwrap()
    }

    /// Two parties with two binary settings each.
    pub fn chsh() -> Scenario {
        Scenario::binary(
            &["a0", "a1", "b0", "b1"],
            [vec!["a0", "b0"], vec!["a0", "b1"], vec!["a1", "b0"], vec!["a1", "b1"]],
        )
        .unwrap()
    }

    /// Binary three-cycle `{x,y},{y,z},{z,x}`.
    pub fn triangle() -> Scenario {
        Scenario::binary(&["x", "y", "z"], [vec!["x", "y"], vec!["y", "z"], vec!["z", "x"]])
            .unwrap()
    }

    /// Binary n-cycle with measurements `m0..m{n-1}`.
    pub fn n_cycle(n: usize) -> Scenario {
        let names: Vec<String> = (0..n).map(|i| format!("m{i}")).collect();
        let contexts: Vec<Vec<String>> =
            (0..n).map(|i| vec![names[i].clone(), names[(i + 1) % n].clone()]).collect();
        Scenario::new(names.clone(), ["0", "1"], contexts).unwrap()
    }
}
