use std::sync::Arc;

use num_traits::{One, Zero};

use super::{
    solve_verified, CfDecomposition, NcModel, NcPolytope, QuantValue, QuantifierError, QuantifierResult,
    Measure, SolverMeta, Witness,
};
use crate::behavior::{Behavior, NumericMode};
use crate::lp::{LinearProgram, LpError, LpStatus, Relation, Sense};
use crate::rational::{int, Rational};
use crate::scenario::{vertex_cap_from_env, Scenario};

/// Outcome of the non-contextuality test.
#[derive(Debug, Clone, PartialEq)]
pub struct NcCheck {
    pub noncontextual: bool,
    /// Global section reproducing the behavior, when one exists.
    pub model: Option<NcModel>,
    /// Farkas multipliers (one per table entry) when no global section exists:
    /// `y·b > 0` while `y·v ≤ 0` for every deterministic vertex `v`.
    pub farkas: Option<Vec<Rational>>,
}

fn polytope_for(b: &Behavior) -> Result<NcPolytope, QuantifierError> {
    Ok(NcPolytope::new(b.scenario_arc().clone(), vertex_cap_from_env())?)
}

fn model_from(poly: &NcPolytope, weights: &[Rational]) -> NcModel {
    NcModel {
        weights: weights
            .iter()
            .enumerate()
            .filter(|(_, w)| !w.is_zero())
            .map(|(v, w)| (poly.vertices()[v].clone(), w.clone()))
            .collect(),
    }
}

/// `A·w` where column `v` of `A` is vertex `v`.
fn combine(poly: &NcPolytope, weights: &[Rational]) -> Vec<Rational> {
    let mut q = vec![Rational::zero(); poly.num_entries()];
    for (v, w) in weights.iter().enumerate() {
        if !w.is_zero() {
            for &e in poly.rows_of(v) {
                q[e] += w;
            }
        }
    }
    q
}

fn exact_meta(pivots: usize) -> SolverMeta {
    SolverMeta { mode: NumericMode::ExactRational, iterations: pivots, gap: None, lower_bound: None }
}

fn unexpected(status: LpStatus) -> QuantifierError {
    QuantifierError::Lp(LpError::Certificate(format!("unexpected LP status {status:?}")))
}

pub fn check_noncontextual(b: &Behavior) -> Result<NcCheck, QuantifierError> {
    check_noncontextual_on(b, &polytope_for(b)?)
}

pub fn check_noncontextual_on(b: &Behavior, poly: &NcPolytope) -> Result<NcCheck, QuantifierError> {
    b.require_nondisturbing()?;
    let p = b.flat();
    let by_entry = poly.vertices_by_entry();
    let mut lp = LinearProgram::new(poly.num_vertices(), Sense::Minimize);
    for (e, vs) in by_entry.iter().enumerate() {
        let terms: Vec<(usize, Rational)> = vs.iter().map(|&v| (v, Rational::one())).collect();
        lp.add_sparse(&terms, Relation::Eq, p[e].clone());
    }
    let sol = solve_verified(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(NcCheck { noncontextual: true, model: Some(model_from(poly, &sol.primal)), farkas: None }),
        LpStatus::Infeasible => Ok(NcCheck { noncontextual: false, model: None, farkas: sol.farkas }),
        other => Err(unexpected(other)),
    }
}

pub fn contextual_fraction(b: &Behavior) -> Result<QuantifierResult, QuantifierError> {
    contextual_fraction_on(b, &polytope_for(b)?)
}

/// `CF = 1 - max Σ c_v` subject to `A c ≤ p`, `c ≥ 0`.
pub(crate) fn contextual_fraction_on(b: &Behavior, poly: &NcPolytope) -> Result<QuantifierResult, QuantifierError> {
    b.require_nondisturbing()?;
    let p = b.flat();
    let mut lp = LinearProgram::new(poly.num_vertices(), Sense::Maximize).with_objective(vec![Rational::one(); poly.num_vertices()]);
    for (e, vs) in poly.vertices_by_entry().iter().enumerate() {
        let terms: Vec<(usize, Rational)> = vs.iter().map(|&v| (v, Rational::one())).collect();
        lp.add_sparse(&terms, Relation::Le, p[e].clone());
    }
    let sol = solve_verified(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(unexpected(sol.status));
    }
    let opt = sol.objective.clone().expect("optimal has objective");
    let lambda = Rational::one() - &opt;
    let scenario: &Arc<Scenario> = b.scenario_arc();
    let sub = combine(poly, &sol.primal);

    let nc_part = if opt.is_zero() {
        None
    } else {
        let flat = sub.iter().map(|x| x / &opt).collect();
        Some(Behavior::from_flat(scenario.clone(), flat)?)
    };
    let residual = if lambda.is_zero() {
        None
    } else {
        let flat = p.iter().zip(&sub).map(|(pe, se)| (pe - se) / &lambda).collect();
        Some(Behavior::from_flat(scenario.clone(), flat)?)
    };
    let witness = if opt.is_zero() {
        None
    } else {
        let normalized: Vec<Rational> = sol.primal.iter().map(|c| c / &opt).collect();
        Some(Witness::Exact(model_from(poly, &normalized)))
    };
    Ok(QuantifierResult {
        measure: Measure::Cf,
        value: QuantValue::Exact(lambda.clone()),
        witness,
        decomposition: Some(CfDecomposition { lambda, nc_part, residual }),
        meta: exact_meta(sol.pivots),
    })
}

/// Variables `w_0..w_V` (vertex weights) followed by `e_0..e_N` (entry deviations),
/// optionally followed by `t`. Rows encode `e ≥ |p - A w|` and `Σ w = 1`.
fn l1_program(p: &[Rational], poly: &NcPolytope, with_epigraph: bool) -> LinearProgram {
    let nv = poly.num_vertices();
    let ne = poly.num_entries();
    let total = nv + ne + usize::from(with_epigraph);
    let mut lp = LinearProgram::new(total, Sense::Minimize);
    for (e, vs) in poly.vertices_by_entry().iter().enumerate() {
        let mut plus: Vec<(usize, Rational)> = vs.iter().map(|&v| (v, Rational::one())).collect();
        plus.push((nv + e, Rational::one()));
        lp.add_sparse(&plus, Relation::Ge, p[e].clone());
        let mut minus: Vec<(usize, Rational)> = vs.iter().map(|&v| (v, -Rational::one())).collect();
        minus.push((nv + e, Rational::one()));
        lp.add_sparse(&minus, Relation::Ge, -p[e].clone());
    }
    let all: Vec<(usize, Rational)> = (0..nv).map(|v| (v, Rational::one())).collect();
    lp.add_sparse(&all, Relation::Eq, Rational::one());
    lp
}

pub fn l1_uniform_distance(b: &Behavior) -> Result<QuantifierResult, QuantifierError> {
    l1_uniform_distance_on(b, &polytope_for(b)?)
}

pub(crate) fn l1_uniform_distance_on(b: &Behavior, poly: &NcPolytope) -> Result<QuantifierResult, QuantifierError> {
    b.require_nondisturbing()?;
    let p = b.flat();
    let nv = poly.num_vertices();
    let mut lp = l1_program(&p, poly, false);
    let n = int(poly.num_contexts() as i64);
    let mut objective = vec![Rational::zero(); lp.num_vars];
    for c in objective.iter_mut().skip(nv) {
        *c = Rational::one() / &n;
    }
    lp.objective = objective;
    finish_l1(Measure::Du, &lp, poly)
}

pub fn l1_max_distance(b: &Behavior) -> Result<QuantifierResult, QuantifierError> {
    l1_max_distance_on(b, &polytope_for(b)?)
}

/// Epigraph form: minimize `t` with `Σ_s e_{γ,s} ≤ t` for each context `γ`.
pub(crate) fn l1_max_distance_on(b: &Behavior, poly: &NcPolytope) -> Result<QuantifierResult, QuantifierError> {
    b.require_nondisturbing()?;
    let p = b.flat();
    let nv = poly.num_vertices();
    let mut lp = l1_program(&p, poly, true);
    let t = lp.num_vars - 1;
    let mut per_context: Vec<Vec<(usize, Rational)>> = vec![Vec::new(); poly.num_contexts()];
    for e in 0..poly.num_entries() {
        per_context[poly.context_of_entry(e)].push((nv + e, Rational::one()));
    }
    for mut terms in per_context {
        terms.push((t, -Rational::one()));
        lp.add_sparse(&terms, Relation::Le, Rational::zero());
    }
    let mut objective = vec![Rational::zero(); lp.num_vars];
    objective[t] = Rational::one();
    lp.objective = objective;
    finish_l1(Measure::Dmax, &lp, poly)
}

fn finish_l1(measure: Measure, lp: &LinearProgram, poly: &NcPolytope) -> Result<QuantifierResult, QuantifierError> {
    let sol = solve_verified(lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(unexpected(sol.status));
    }
    let weights = &sol.primal[..poly.num_vertices()];
    Ok(QuantifierResult {
        measure,
        value: QuantValue::Exact(sol.objective.clone().expect("optimal has objective")),
        witness: Some(Witness::Exact(model_from(poly, weights))),
        decomposition: None,
        meta: exact_meta(sol.pivots),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::{assignment_to_behavior, catalog as boxes, mix_behaviors};
    use crate::rational::ratio;
    use crate::scenario::{catalog, GlobalAssignment};

    fn half_pr_half_uniform() -> Behavior {
        let pr = boxes::pr_box();
        let u = Behavior::uniform(pr.scenario_arc().clone());
        mix_behaviors(&[ratio(1, 2), ratio(1, 2)], &[pr, u]).unwrap()
    }

    #[test]
    fn pr_box_is_contextual_with_farkas() {
        let check = check_noncontextual(&boxes::pr_box()).unwrap();
        assert!(!check.noncontextual);
        let y = check.farkas.unwrap();
        let p = boxes::pr_box().flat();
        let yb: Rational = y.iter().zip(&p).map(|(a, b)| a * b).sum();
        assert!(yb > Rational::zero());
        let poly = NcPolytope::new(Arc::new(catalog::chsh()), 100).unwrap();
        for v in 0..poly.num_vertices() {
            let yv: Rational = poly.rows_of(v).iter().map(|&e| y[e].clone()).sum();
            assert!(yv <= Rational::zero());
        }
    }

    #[test]
    fn deterministic_is_noncontextual_point_mass() {
        let s = Arc::new(catalog::chain());
        let g = GlobalAssignment::new(vec![0, 1, 0]);
        let b = assignment_to_behavior(&g, s.clone()).unwrap();
        let check = check_noncontextual(&b).unwrap();
        let model = check.model.unwrap();
        assert_eq!(model.weights, vec![(g, Rational::one())]);
        assert_eq!(model.behavior(&s).unwrap(), b);
        let cf = contextual_fraction(&b).unwrap();
        assert_eq!(cf.value, QuantValue::Exact(Rational::zero()));
    }

    #[test]
    fn cf_of_pr_and_half_mixtures() {
        let cf = contextual_fraction(&boxes::pr_box()).unwrap();
        assert_eq!(cf.value, QuantValue::Exact(Rational::one()));
        // CHSH value exactly 2: local, reproduced by the 8 boxes winning 3 of 4 contexts
        let uniform_mix = half_pr_half_uniform();
        assert_eq!(contextual_fraction(&uniform_mix).unwrap().value, QuantValue::Exact(Rational::zero()));

        let s = boxes::pr_box().scenario_arc().clone();
        let local = assignment_to_behavior(&GlobalAssignment::new(vec![0, 0, 0, 0]), s).unwrap();
        let mix = mix_behaviors(&[ratio(1, 2), ratio(1, 2)], &[boxes::pr_box(), local]).unwrap();
        let cf = contextual_fraction(&mix).unwrap();
        assert_eq!(cf.value, QuantValue::Exact(ratio(1, 2)));
        let d = cf.decomposition.unwrap();
        let rebuilt = mix_behaviors(
            &[d.lambda.clone(), Rational::one() - &d.lambda],
            &[d.residual.unwrap(), d.nc_part.unwrap()],
        )
        .unwrap();
        assert_eq!(rebuilt, mix);
    }

    #[test]
    fn l1_distances_of_pr_box() {
        let du = l1_uniform_distance(&boxes::pr_box()).unwrap();
        let dmax = l1_max_distance(&boxes::pr_box()).unwrap();
        assert_eq!(du.value, QuantValue::Exact(ratio(1, 2)));
        assert_eq!(dmax.value, QuantValue::Exact(ratio(1, 2)));
        let half = l1_uniform_distance(&half_pr_half_uniform()).unwrap();
        assert!(half.value.exact().unwrap() <= &ratio(1, 4));
    }

    #[test]
    fn disturbing_input_rejected() {
        let s = Arc::new(catalog::chain());
        let b = Behavior::from_entries(s, [(0, &["0", "0"][..], ratio(1, 1)), (1, &["1", "1"][..], ratio(1, 1))]).unwrap();
        assert!(matches!(contextual_fraction(&b), Err(QuantifierError::Behavior(_))));
    }

    /// The max over context weights π of a linear functional equals the max
    /// over single contexts; compared against an explicit π-grid.
    #[test]
    fn pi_grid_matches_context_max() {
        let s = Arc::new(catalog::triangle());
        let poly = NcPolytope::new(s.clone(), 100).unwrap();
        // anti-correlated on every edge: maximally contextual in the triangle
        let b = Behavior::from_entries(
            s.clone(),
            (0..3).flat_map(|c| [(c, &["0", "1"][..], ratio(1, 2)), (c, &["1", "0"][..], ratio(1, 2))]),
        )
        .unwrap();
        let res = l1_max_distance_on(&b, &poly).unwrap();
        let Some(Witness::Exact(model)) = &res.witness else { panic!("missing witness") };
        let q = model.behavior(&s).unwrap();
        let per_context: Vec<Rational> = (0..3)
            .map(|c| b.table(c).iter().zip(q.table(c)).map(|(x, y)| crate::rational::abs(&(x - y))).sum())
            .collect();
        let context_max = per_context.iter().max().unwrap().clone();
        let steps = 20;
        let mut grid_max = Rational::zero();
        for i in 0..=steps {
            for j in 0..=steps - i {
                let k = steps - i - j;
                let pi = [ratio(i, steps), ratio(j, steps), ratio(k, steps)];
                let v: Rational = pi.iter().zip(&per_context).map(|(a, d)| a * d).sum();
                if v > grid_max {
                    grid_max = v;
                }
            }
        }
        assert_eq!(grid_max, context_max);
        assert_eq!(res.value, QuantValue::Exact(context_max));
        assert!(res.value.exact().unwrap() > &Rational::zero());
    }
}
