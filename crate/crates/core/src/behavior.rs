//! Behaviors ("boxes"): one probability table per context.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::{format_rational, is_probability, to_f64, Rational};
use crate::scenario::{decode_tuple, encode_tuple, GlobalAssignment, Scenario, ScenarioError};

pub const DEFAULT_FLOAT_TOLERANCE: f64 = 1e-9;

/// How equalities between probabilities are decided.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum NumericMode {
    ExactRational,
    Float { tolerance: f64 },
}

impl Default for NumericMode {
    fn default() -> Self {
        NumericMode::ExactRational
    }
}

impl NumericMode {
    pub fn float() -> Self {
        NumericMode::Float { tolerance: DEFAULT_FLOAT_TOLERANCE }
    }

    /// True when `diff` (a non-negative discrepancy) counts as zero.
    pub fn is_negligible(&self, diff: &Rational) -> bool {
        match self {
            NumericMode::ExactRational => diff.is_zero(),
            NumericMode::Float { tolerance } => to_f64(diff) <= *tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BehaviorError {
    #[error("expected {expected} context tables, got {got}")]
    ContextCount { expected: usize, got: usize },
    #[error("context {context}: expected {expected} entries, got {got}")]
    TableLength { context: usize, expected: usize, got: usize },
    #[error("context {context}, tuple ({tuple}): probability {value} outside [0,1]")]
    OutOfRange { context: usize, tuple: String, value: String },
    #[error("normalization: context {context} sums to {sum}, not 1")]
    Normalization { context: usize, sum: String },
    #[error("behaviors are defined on different scenarios")]
    ScenarioMismatch,
    #[error("outcome sets differ: {left:?} vs {right:?}")]
    OutcomeMismatch { left: Vec<String>, right: Vec<String> },
    #[error("invalid mixture weights: {0}")]
    InvalidWeights(String),
    #[error("measurements {subset:?} are not contained in context {context}")]
    NotSubset { context: usize, subset: Vec<String> },
    #[error("behavior is disturbing: contexts {first} and {second} disagree on their overlap by {discrepancy}")]
    Disturbing { first: usize, second: usize, discrepancy: String },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Probability tables indexed by context, then by outcome-tuple index.
#[derive(Debug, Clone, PartialEq)]
pub struct Behavior {
    scenario: Arc<Scenario>,
    tables: Vec<Vec<Rational>>,
}

impl Behavior {
    /// Checks lengths, ranges, and exact normalization of every table.
    pub fn new(
        scenario: impl Into<Arc<Scenario>>,
        tables: Vec<Vec<Rational>>,
    ) -> Result<Self, BehaviorError> {
        let scenario = scenario.into();
        if tables.len() != scenario.num_contexts() {
            return Err(BehaviorError::ContextCount {
                expected: scenario.num_contexts(),
                got: tables.len(),
            });
        }
        for (c, table) in tables.iter().enumerate() {
            let expected = scenario.table_len(c);
            if table.len() != expected {
                return Err(BehaviorError::TableLength { context: c, expected, got: table.len() });
            }
            for (i, p) in table.iter().enumerate() {
                if !is_probability(p) {
                    return Err(BehaviorError::OutOfRange {
                        context: c,
                        tuple: scenario.tuple_key(&scenario.decode_tuple(c, i)),
                        value: format_rational(p),
                    });
                }
            }
            let sum: Rational = table.iter().sum();
            if !sum.is_one() {
                return Err(BehaviorError::Normalization { context: c, sum: format_rational(&sum) });
            }
        }
        Ok(Self { scenario, tables })
    }

    /// Builds a behavior from sparse `(context, outcome labels) -> p` entries.
    pub fn from_entries<'a, I>(scenario: impl Into<Arc<Scenario>>, entries: I) -> Result<Self, BehaviorError>
    where
        I: IntoIterator<Item = (usize, &'a [&'a str], Rational)>,
    {
        let scenario = scenario.into();
        let mut tables: Vec<Vec<Rational>> =
            (0..scenario.num_contexts()).map(|c| vec![Rational::zero(); scenario.table_len(c)]).collect();
        for (c, labels, p) in entries {
            let tuple = labels
                .iter()
                .map(|l| scenario.outcome_index(l).ok_or_else(|| ScenarioError::UnknownOutcome(l.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            tables[c][scenario.encode_tuple(&tuple)] += p;
        }
        Self::new(scenario, tables)
    }

    pub fn uniform(scenario: impl Into<Arc<Scenario>>) -> Self {
        let scenario = scenario.into();
        let tables = (0..scenario.num_contexts())
            .map(|c| {
                let n = scenario.table_len(c);
                vec![Rational::new(1.into(), (n as i64).into()); n]
            })
            .collect();
        Self { scenario, tables }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn scenario_arc(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn tables(&self) -> &[Vec<Rational>] {
        &self.tables
    }

    pub fn table(&self, context: usize) -> &[Rational] {
        &self.tables[context]
    }

    pub fn prob(&self, context: usize, tuple: &[usize]) -> &Rational {
        &self.tables[context][self.scenario.encode_tuple(tuple)]
    }

    /// All tables concatenated in context order.
    pub fn flat(&self) -> Vec<Rational> {
        self.tables.iter().flatten().cloned().collect()
    }

    pub fn flat_f64(&self) -> Vec<f64> {
        self.tables.iter().flatten().map(to_f64).collect()
    }

    pub fn from_flat(scenario: impl Into<Arc<Scenario>>, flat: Vec<Rational>) -> Result<Self, BehaviorError> {
        let scenario = scenario.into();
        let offsets = entry_offsets(&scenario);
        let total = scenario.total_entries();
        if flat.len() != total {
            return Err(BehaviorError::TableLength { context: 0, expected: total, got: flat.len() });
        }
        let tables = (0..scenario.num_contexts())
            .map(|c| flat[offsets[c]..offsets[c] + scenario.table_len(c)].to_vec())
            .collect();
        Self::new(scenario, tables)
    }

    /// Distribution over `subset` (a list of measurement indices inside
    /// `context`), indexed in the order `subset` is given.
    pub fn marginalize(&self, context: usize, subset: &[usize]) -> Result<Vec<Rational>, BehaviorError> {
        let ctx = self.scenario.context(context);
        let positions = subset
            .iter()
            .map(|m| ctx.iter().position(|x| x == m))
            .collect::<Option<Vec<usize>>>()
            .ok_or_else(|| BehaviorError::NotSubset {
                context,
                subset: subset.iter().map(|&m| self.scenario.measurements()[m].clone()).collect(),
            })?;
        let radix = self.scenario.num_outcomes();
        let mut out = vec![Rational::zero(); radix.pow(subset.len() as u32)];
        for (idx, p) in self.tables[context].iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            let tuple = decode_tuple(radix, ctx.len(), idx);
            let sub: Vec<usize> = positions.iter().map(|&pos| tuple[pos]).collect();
            out[encode_tuple(radix, &sub)] += p;
        }
        Ok(out)
    }

    /// Compares overlap marginals of every intersecting context pair.
    pub fn check_nondisturbance(&self, mode: NumericMode) -> NdReport {
        let n = self.scenario.num_contexts();
        for a in 0..n {
            for b in (a + 1)..n {
                let common = self.scenario.intersection(a, b);
                if common.is_empty() {
                    continue;
                }
                let left = self.marginalize(a, &common).expect("overlap lies in context");
                let right = self.marginalize(b, &common).expect("overlap lies in context");
                let discrepancy = left
                    .iter()
                    .zip(&right)
                    .map(|(l, r)| (l - r).abs())
                    .max()
                    .unwrap_or_else(Rational::zero);
                if !mode.is_negligible(&discrepancy) {
                    return NdReport {
                        non_disturbing: false,
                        violation: Some(NdViolation { first: a, second: b, discrepancy }),
                    };
                }
            }
        }
        NdReport { non_disturbing: true, violation: None }
    }

    pub fn is_nondisturbing(&self) -> bool {
        self.check_nondisturbance(NumericMode::ExactRational).non_disturbing
    }

    /// Errors with [`BehaviorError::Disturbing`] unless exactly non-disturbing.
    pub fn require_nondisturbing(&self) -> Result<(), BehaviorError> {
        match self.check_nondisturbance(NumericMode::ExactRational).violation {
            None => Ok(()),
            Some(v) => Err(BehaviorError::Disturbing {
                first: v.first,
                second: v.second,
                discrepancy: format_rational(&v.discrepancy),
            }),
        }
    }

    /// Applies a per-measurement outcome permutation: `perms[m][old] = new`.
    pub fn relabel_outcomes(&self, perms: &[Vec<usize>]) -> Behavior {
        let s = &self.scenario;
        let tables = (0..s.num_contexts())
            .map(|c| {
                let ctx = s.context(c);
                let mut out = vec![Rational::zero(); self.tables[c].len()];
                for (idx, p) in self.tables[c].iter().enumerate() {
                    let tuple = s.decode_tuple(c, idx);
                    let mapped: Vec<usize> =
                        tuple.iter().zip(ctx).map(|(&o, &m)| perms[m][o]).collect();
                    out[s.encode_tuple(&mapped)] = p.clone();
                }
                out
            })
            .collect();
        Behavior { scenario: self.scenario.clone(), tables }
    }

    /// Renames measurements, reorders contexts (`context_order[new] = old`)
    /// and reverses the member order of every context. Tables are permuted
    /// to match, so the result is the same box under new labels.
    pub fn relabel_structure(&self, rename: impl Fn(&str) -> String, context_order: &[usize], reverse_members: bool) -> Behavior {
        let s = &self.scenario;
        let mut spec = s.to_spec();
        spec.measurements = spec.measurements.iter().map(|m| rename(m)).collect();
        spec.contexts = context_order
            .iter()
            .map(|&old| {
                let mut members: Vec<String> = s.context_names(old).iter().map(|m| rename(m)).collect();
                if reverse_members {
                    members.reverse();
                }
                members
            })
            .collect();
        let scenario = Scenario::try_from(spec).expect("relabeling keeps a valid scenario");
        let tables = context_order
            .iter()
            .map(|&old| {
                if !reverse_members {
                    return self.tables[old].clone();
                }
                let mut out = vec![Rational::zero(); self.tables[old].len()];
                for (idx, p) in self.tables[old].iter().enumerate() {
                    let mut tuple = s.decode_tuple(old, idx);
                    tuple.reverse();
                    out[s.encode_tuple(&tuple)] = p.clone();
                }
                out
            })
            .collect();
        Behavior { scenario: Arc::new(scenario), tables }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdViolation {
    pub first: usize,
    pub second: usize,
    pub discrepancy: Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdReport {
    pub non_disturbing: bool,
    pub violation: Option<NdViolation>,
}

/// Offset of each context's table inside the flattened entry vector.
pub fn entry_offsets(scenario: &Scenario) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(scenario.num_contexts());
    let mut acc = 0;
    for c in 0..scenario.num_contexts() {
        offsets.push(acc);
        acc += scenario.table_len(c);
    }
    offsets
}

/// Linear equalities (over flattened entries) whose solution set, together
/// with per-context normalization and non-negativity, is the
/// non-disturbing polytope. Each row is a sparse list of `(entry, coeff)`.
pub fn nondisturbance_rows(scenario: &Scenario) -> Vec<Vec<(usize, i64)>> {
    let offsets = entry_offsets(scenario);
    let radix = scenario.num_outcomes();
    let mut rows = Vec::new();
    for a in 0..scenario.num_contexts() {
        for b in (a + 1)..scenario.num_contexts() {
            let common = scenario.intersection(a, b);
            if common.is_empty() {
                continue;
            }
            let width = radix.pow(common.len() as u32);
            let mut block: Vec<Vec<(usize, i64)>> = vec![Vec::new(); width];
            for (ctx, sign) in [(a, 1i64), (b, -1i64)] {
                let members = scenario.context(ctx);
                let positions: Vec<usize> =
                    common.iter().map(|m| members.iter().position(|x| x == m).unwrap()).collect();
                for idx in 0..scenario.table_len(ctx) {
                    let tuple = scenario.decode_tuple(ctx, idx);
                    let sub: Vec<usize> = positions.iter().map(|&p| tuple[p]).collect();
                    block[encode_tuple(radix, &sub)].push((offsets[ctx] + idx, sign));
                }
            }
            rows.extend(block);
        }
    }
    rows
}

/// Point-mass behavior induced by a deterministic global assignment.
pub fn assignment_to_behavior(
    assignment: &GlobalAssignment,
    scenario: impl Into<Arc<Scenario>>,
) -> Result<Behavior, BehaviorError> {
    let scenario = scenario.into();
    if assignment.outcomes().len() != scenario.num_measurements() {
        return Err(ScenarioError::PartialAssignment {
            expected: scenario.num_measurements(),
            got: assignment.outcomes().len(),
        }
        .into());
    }
    let tables = (0..scenario.num_contexts())
        .map(|c| {
            let mut t = vec![Rational::zero(); scenario.table_len(c)];
            t[assignment.restrict(&scenario, c)] = Rational::one();
            t
        })
        .collect();
    Ok(Behavior { scenario, tables })
}

/// Context-wise convex combination.
pub fn mix_behaviors(weights: &[Rational], behaviors: &[Behavior]) -> Result<Behavior, BehaviorError> {
    if behaviors.is_empty() {
        return Err(BehaviorError::InvalidWeights("no behaviors to mix".into()));
    }
    if weights.len() != behaviors.len() {
        return Err(BehaviorError::InvalidWeights(format!(
            "{} weights for {} behaviors",
            weights.len(),
            behaviors.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| w.is_negative()) {
        return Err(BehaviorError::InvalidWeights(format!("negative weight {w}")));
    }
    let total: Rational = weights.iter().sum();
    if !total.is_one() {
        return Err(BehaviorError::InvalidWeights(format!("weights sum to {total}")));
    }
    let scenario = behaviors[0].scenario.clone();
    if behaviors.iter().any(|b| *b.scenario != *scenario) {
        return Err(BehaviorError::ScenarioMismatch);
    }
    let mut tables: Vec<Vec<Rational>> =
        scenario_zero_tables(&scenario);
    for (w, b) in weights.iter().zip(behaviors) {
        if w.is_zero() {
            continue;
        }
        for (acc, table) in tables.iter_mut().zip(&b.tables) {
            for (x, p) in acc.iter_mut().zip(table) {
                if !p.is_zero() {
                    *x += w * p;
                }
            }
        }
    }
    Ok(Behavior { scenario, tables })
}

pub(crate) fn scenario_zero_tables(scenario: &Scenario) -> Vec<Vec<Rational>> {
    (0..scenario.num_contexts()).map(|c| vec![Rational::zero(); scenario.table_len(c)]).collect()
}

/// Measurement lists of the two operands after collision renaming, plus
/// the renaming record (new name -> original name).
fn disjoint_names(left: &Scenario, right: &Scenario) -> (Vec<String>, Vec<String>, BTreeMap<String, String>) {
    let collide = left.measurements().iter().any(|m| right.measurement_index(m).is_some());
    if !collide {
        return (left.measurements().to_vec(), right.measurements().to_vec(), BTreeMap::new());
    }
    let mut renamed = BTreeMap::new();
    let l: Vec<String> = left
        .measurements()
        .iter()
        .map(|m| {
            let n = format!("L.{m}");
            renamed.insert(n.clone(), m.clone());
            n
        })
        .collect();
    let r: Vec<String> = right
        .measurements()
        .iter()
        .map(|m| {
            let n = format!("R.{m}");
            renamed.insert(n.clone(), m.clone());
            n
        })
        .collect();
    (l, r, renamed)
}

fn require_same_outcomes(b1: &Behavior, b2: &Behavior) -> Result<(), BehaviorError> {
    if b1.scenario.outcomes() != b2.scenario.outcomes() {
        return Err(BehaviorError::OutcomeMismatch {
            left: b1.scenario.outcomes().to_vec(),
            right: b2.scenario.outcomes().to_vec(),
        });
    }
    Ok(())
}

/// `B1 ⊗ B2`: every context is a context of `B1` together with one of `B2`,
/// with independent (product) statistics.
pub fn product_box(b1: &Behavior, b2: &Behavior) -> Result<Behavior, BehaviorError> {
    require_same_outcomes(b1, b2)?;
    let (s1, s2) = (&b1.scenario, &b2.scenario);
    let (n1, n2, renamed) = disjoint_names(s1, s2);
    let mut contexts = Vec::new();
    let mut tables = Vec::new();
    for c1 in 0..s1.num_contexts() {
        for c2 in 0..s2.num_contexts() {
            let ctx: Vec<String> = s1
                .context(c1)
                .iter()
                .map(|&m| n1[m].clone())
                .chain(s2.context(c2).iter().map(|&m| n2[m].clone()))
                .collect();
            contexts.push(ctx);
            let mut table = Vec::with_capacity(s1.table_len(c1) * s2.table_len(c2));
            for p in &b1.tables[c1] {
                for q in &b2.tables[c2] {
                    table.push(p * q);
                }
            }
            tables.push(table);
        }
    }
    let measurements: Vec<String> = n1.into_iter().chain(n2).collect();
    let scenario = Scenario::new(measurements, s1.outcomes().to_vec(), contexts)?.with_renamed(renamed);
    Ok(Behavior { scenario: Arc::new(scenario), tables })
}

/// `B1 & B2`: the contexts of both boxes side by side, tables juxtaposed.
pub fn controlled_choice(b1: &Behavior, b2: &Behavior) -> Result<Behavior, BehaviorError> {
    require_same_outcomes(b1, b2)?;
    let (s1, s2) = (&b1.scenario, &b2.scenario);
    let (n1, n2, renamed) = disjoint_names(s1, s2);
    let contexts: Vec<Vec<String>> = s1
        .contexts()
        .iter()
        .map(|c| c.iter().map(|&m| n1[m].clone()).collect())
        .chain(s2.contexts().iter().map(|c| c.iter().map(|&m| n2[m].clone()).collect()))
        .collect();
    let measurements: Vec<String> = n1.into_iter().chain(n2).collect();
    let scenario = Scenario::new(measurements, s1.outcomes().to_vec(), contexts)?.with_renamed(renamed);
    let tables = b1.tables.iter().chain(&b2.tables).cloned().collect();
    Ok(Behavior { scenario: Arc::new(scenario), tables })
}

/// Named boxes used in tests, examples and docs.
pub mod catalog {
    use super::*;
    use crate::rational::ratio;
    use crate::scenario::catalog as scenarios;

    /// PR box on [`scenarios::chsh`]: `a ⊕ b = x·y`, uniform marginals.
    pub fn pr_box() -> Behavior {
        pr_family(false)
    }

    /// PR box with `a ⊕ b = x·y ⊕ 1`.
    pub fn anti_pr_box() -> Behavior {
        pr_family(true)
    }

    fn pr_family(flip: bool) -> Behavior {
        let s = Arc::new(scenarios::chsh());
        let half = ratio(1, 2);
        let tables = (0..4)
            .map(|c| {
                let (x, y) = (c / 2, c % 2);
                let mut t = vec![Rational::zero(); 4];
                for a in 0..2 {
                    for b in 0..2 {
                        if (a ^ b) == ((x * y) ^ usize::from(flip)) {
                            t[a * 2 + b] = half.clone();
                        }
                    }
                }
                t
            })
            .collect();
        Behavior::new(s, tables).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};
    use crate::scenario::{catalog as scenarios, enumerate_global_assignments};

    fn chain_behavior(pxy: [i64; 4], pyz: [i64; 4], den: i64) -> Result<Behavior, BehaviorError> {
        let s = scenarios::chain();
        Behavior::new(
            s,
            vec![
                pxy.iter().map(|&n| ratio(n, den)).collect(),
                pyz.iter().map(|&n| ratio(n, den)).collect(),
            ],
        )
    }

    #[test]
    fn chain_behavior_with_shared_marginal_is_nd() {
        // p_y(0) = 3/8 from both sides
        let b = chain_behavior([1, 3, 2, 2], [2, 1, 4, 1], 8).unwrap();
        let report = b.check_nondisturbance(NumericMode::ExactRational);
        assert!(report.non_disturbing);
        let y = b.scenario().measurement_index("y").unwrap();
        assert_eq!(b.marginalize(0, &[y]).unwrap(), vec![ratio(3, 8), ratio(5, 8)]);
        assert_eq!(b.marginalize(1, &[y]).unwrap(), vec![ratio(3, 8), ratio(5, 8)]);
    }

    #[test]
    fn maximal_disturbance_is_reported() {
        // p_xy puts all mass on y=0, p_yz on y=1
        let b = chain_behavior([1, 0, 0, 0], [0, 0, 1, 0], 1).unwrap();
        let report = b.check_nondisturbance(NumericMode::ExactRational);
        assert!(!report.non_disturbing);
        let v = report.violation.unwrap();
        assert_eq!((v.first, v.second), (0, 1));
        assert_eq!(v.discrepancy, int(1));
        assert!(matches!(b.require_nondisturbing(), Err(BehaviorError::Disturbing { .. })));
    }

    #[test]
    fn float_mode_tolerates_small_gaps() {
        let s = scenarios::chain();
        let eps = ratio(1, 10_000_000_000);
        let half = ratio(1, 2);
        let b = Behavior::new(
            s,
            vec![
                vec![half.clone(), Rational::zero(), Rational::zero(), half.clone()],
                vec![&half + &eps, Rational::zero(), Rational::zero(), &half - &eps],
            ],
        )
        .unwrap();
        assert!(!b.check_nondisturbance(NumericMode::ExactRational).non_disturbing);
        assert!(b.check_nondisturbance(NumericMode::float()).non_disturbing);
    }

    #[test]
    fn uniform_is_nd_and_marginalizes_to_uniform() {
        let b = Behavior::uniform(scenarios::chsh());
        assert!(b.is_nondisturbing());
        let a0 = b.scenario().measurement_index("a0").unwrap();
        assert_eq!(b.marginalize(0, &[a0]).unwrap(), vec![ratio(1, 2), ratio(1, 2)]);
        let full = b.scenario().context(0).to_vec();
        assert_eq!(b.marginalize(0, &full).unwrap(), b.table(0).to_vec());
    }

    #[test]
    fn marginalize_rejects_outside_measurement() {
        let b = Behavior::uniform(scenarios::chain());
        let z = b.scenario().measurement_index("z").unwrap();
        assert!(matches!(b.marginalize(0, &[z]), Err(BehaviorError::NotSubset { .. })));
    }

    #[test]
    fn construction_rejects_bad_tables() {
        let err = chain_behavior([1, 1, 1, 0], [1, 1, 1, 1], 4).unwrap_err();
        assert!(matches!(err, BehaviorError::Normalization { context: 0, .. }));
        assert!(err.to_string().starts_with("normalization"));
        let err = chain_behavior([2, -1, 0, 0], [1, 0, 0, 0], 1).unwrap_err();
        assert!(matches!(err, BehaviorError::OutOfRange { .. }));
    }

    #[test]
    fn deterministic_restriction() {
        let s = Arc::new(scenarios::chain());
        let g = GlobalAssignment::new(vec![0, 1, 0]);
        let b = assignment_to_behavior(&g, s.clone()).unwrap();
        assert_eq!(*b.prob(0, &[0, 1]), int(1));
        assert_eq!(*b.prob(1, &[1, 0]), int(1));
        assert!(b.is_nondisturbing());
        assert!(assignment_to_behavior(&GlobalAssignment::new(vec![0, 1]), s).is_err());
    }

    #[test]
    fn uniform_mixture_of_all_assignments_is_uniform() {
        let s = Arc::new(scenarios::chain());
        let vertices: Vec<Behavior> = enumerate_global_assignments(&s, 100)
            .unwrap()
            .map(|g| assignment_to_behavior(&g, s.clone()).unwrap())
            .collect();
        let weights = vec![ratio(1, 8); 8];
        let mixed = mix_behaviors(&weights, &vertices).unwrap();
        // direct summation: each (x,y) tuple is hit by the 2 choices of z
        for c in 0..2 {
            for idx in 0..4 {
                let hits = vertices.iter().filter(|v| v.table(c)[idx].is_one()).count();
                assert_eq!(hits, 2);
                assert_eq!(mixed.table(c)[idx], ratio(1, 4));
            }
        }
    }

    #[test]
    fn mixing_rules() {
        let pr = catalog::pr_box();
        assert_eq!(mix_behaviors(&[int(1)], &[pr.clone()]).unwrap(), pr);
        let anti = catalog::anti_pr_box();
        let avg = mix_behaviors(&[ratio(1, 2), ratio(1, 2)], &[pr.clone(), anti]).unwrap();
        assert_eq!(avg, Behavior::uniform(scenarios::chsh()));

        let s = Arc::new(scenarios::chain());
        let g1 = assignment_to_behavior(&GlobalAssignment::new(vec![0, 0, 0]), s.clone()).unwrap();
        let g2 = assignment_to_behavior(&GlobalAssignment::new(vec![1, 0, 1]), s.clone()).unwrap();
        let m = mix_behaviors(&[ratio(1, 2), ratio(1, 2)], &[g1, g2]).unwrap();
        let allowed = [Rational::zero(), ratio(1, 2), int(1)];
        assert!(m.tables().iter().flatten().all(|p| allowed.contains(p)));

        assert!(matches!(
            mix_behaviors(&[ratio(1, 2)], &[pr.clone()]),
            Err(BehaviorError::InvalidWeights(_))
        ));
        assert!(matches!(
            mix_behaviors(&[ratio(3, 2), ratio(-1, 2)], &[pr.clone(), pr.clone()]),
            Err(BehaviorError::InvalidWeights(_))
        ));
        assert!(matches!(
            mix_behaviors(&[ratio(1, 2), ratio(1, 2)], &[pr, m]),
            Err(BehaviorError::ScenarioMismatch)
        ));
    }

    #[test]
    fn product_of_chains() {
        let b = Behavior::uniform(scenarios::chain());
        let p = product_box(&b, &b).unwrap();
        assert_eq!(p.scenario().num_contexts(), 4);
        assert_eq!(p.scenario().num_measurements(), 6);
        assert!(p.scenario().contexts().iter().all(|c| c.len() == 4));
        assert_eq!(p.scenario().renamed().get("L.x").map(String::as_str), Some("x"));
        assert_eq!(p, Behavior::uniform(p.scenario().clone()));
        assert!(p.is_nondisturbing());
    }

    #[test]
    fn product_of_deterministic_boxes() {
        let s1 = Arc::new(scenarios::chain());
        let s2 = Arc::new(Scenario::binary(&["u", "v"], [vec!["u", "v"]]).unwrap());
        let d1 = assignment_to_behavior(&GlobalAssignment::new(vec![1, 0, 1]), s1).unwrap();
        let d2 = assignment_to_behavior(&GlobalAssignment::new(vec![0, 1]), s2).unwrap();
        let p = product_box(&d1, &d2).unwrap();
        assert!(p.scenario().renamed().is_empty());
        let union = GlobalAssignment::new(vec![1, 0, 1, 0, 1]);
        let expected = assignment_to_behavior(&union, p.scenario().clone()).unwrap();
        assert_eq!(p, expected);
    }

    #[test]
    fn controlled_choice_juxtaposes() {
        let pr = catalog::pr_box();
        let chain = Behavior::uniform(scenarios::chain());
        let c = controlled_choice(&chain, &chain).unwrap();
        assert_eq!(c.scenario().num_contexts(), 4);
        assert_eq!(c.scenario().num_measurements(), 6);
        assert!(c.scenario().contexts().iter().all(|ctx| ctx.len() == 2));

        let both = controlled_choice(&pr, &chain).unwrap();
        for k in 0..4 {
            assert_eq!(both.table(k), pr.table(k));
        }
        assert_eq!(both.table(4), chain.table(0));
    }

    #[test]
    fn compositions_need_equal_outcomes() {
        let a = Behavior::uniform(scenarios::chain());
        let s3 = Scenario::new(["u"], ["0", "1", "2"], [vec!["u"]]).unwrap();
        let b = Behavior::uniform(s3);
        assert!(matches!(product_box(&a, &b), Err(BehaviorError::OutcomeMismatch { .. })));
        assert!(matches!(controlled_choice(&a, &b), Err(BehaviorError::OutcomeMismatch { .. })));
    }

    #[test]
    fn nd_rows_vanish_on_nd_behaviors() {
        let pr = catalog::pr_box();
        let flat = pr.flat();
        for row in nondisturbance_rows(pr.scenario()) {
            let v: Rational = row.iter().map(|&(i, c)| &flat[i] * int(c)).sum();
            assert!(v.is_zero());
        }
        let bad = chain_behavior([1, 0, 0, 0], [0, 0, 1, 0], 1).unwrap();
        let flat = bad.flat();
        assert!(nondisturbance_rows(bad.scenario())
            .iter()
            .any(|row| !row.iter().map(|&(i, c)| &flat[i] * int(c)).sum::<Rational>().is_zero()));
    }

    #[test]
    fn relabeling_preserves_nd_and_mass() {
        let pr = catalog::pr_box();
        let flipped = pr.relabel_outcomes(&[vec![1, 0], vec![0, 1], vec![0, 1], vec![0, 1]]);
        assert!(flipped.is_nondisturbing());
        // flipping Alice's a0 output turns the PR box into a different PR box
        assert_ne!(flipped, pr);
        let renamed = pr.relabel_structure(|m| format!("{m}'"), &[3, 2, 1, 0], true);
        assert!(renamed.is_nondisturbing());
        assert_eq!(renamed.scenario().context_names(0), vec!["b1'", "a1'"]);
        assert_eq!(renamed.table(0), pr.table(3));
    }
}
