//! Seeded random behaviors for the test harnesses.
//!
//! Non-contextual behaviors are finite mixtures of deterministic
//! assignments. Non-disturbing ones mix such a behavior with a vertex of
//! the non-disturbing polytope, found by an exact LP with a random
//! objective. Neither sampler is uniform over its set.

use std::sync::Arc;

use num_traits::{One, Zero};
use rand::Rng;

use crate::behavior::{assignment_to_behavior, mix_behaviors, nondisturbance_rows, Behavior};
use crate::lp::{solve_lp, LinearProgram, LpStatus, Relation, Sense};
use crate::quantifiers::QuantifierError;
use crate::rational::{int, ratio, Rational};
use crate::scenario::{GlobalAssignment, Scenario};

/// Denominator used for sampled mixture weights.
pub const WEIGHT_DENOMINATOR: i64 = 12;

pub fn random_assignment<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> GlobalAssignment {
    GlobalAssignment::new((0..scenario.num_measurements()).map(|_| rng.gen_range(0..scenario.num_outcomes())).collect())
}

/// `n` positive rational weights summing to one.
pub fn random_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Rational> {
    let raw: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=WEIGHT_DENOMINATOR)).collect();
    let total: i64 = raw.iter().sum();
    raw.into_iter().map(|x| ratio(x, total)).collect()
}

/// A rational in `(0, 1)` with denominator [`WEIGHT_DENOMINATOR`].
pub fn random_fraction<R: Rng + ?Sized>(rng: &mut R) -> Rational {
    ratio(rng.gen_range(1..WEIGHT_DENOMINATOR), WEIGHT_DENOMINATOR)
}

/// Mixture of between one and `max_support` random deterministic behaviors.
pub fn random_nc_behavior<R: Rng + ?Sized>(scenario: &Arc<Scenario>, max_support: usize, rng: &mut R) -> Behavior {
    let k = rng.gen_range(1..=max_support.max(1));
    let parts: Vec<Behavior> = (0..k)
        .map(|_| assignment_to_behavior(&random_assignment(scenario, rng), scenario.clone()).expect("total assignment"))
        .collect();
    mix_behaviors(&random_weights(k, rng), &parts).expect("valid weights")
}

/// A vertex of the non-disturbing polytope maximizing a random integer objective.
pub fn random_nd_vertex<R: Rng + ?Sized>(scenario: &Arc<Scenario>, rng: &mut R) -> Result<Behavior, QuantifierError> {
    let n = scenario.total_entries();
    let objective: Vec<Rational> = (0..n).map(|_| int(rng.gen_range(-10..=10))).collect();
    let mut lp = LinearProgram::new(n, Sense::Maximize).with_objective(objective);
    for row in nondisturbance_rows(scenario) {
        let terms: Vec<(usize, Rational)> = row.into_iter().map(|(e, c)| (e, int(c))).collect();
        lp.add_sparse(&terms, Relation::Eq, Rational::zero());
    }
    let mut offset = 0;
    for c in 0..scenario.num_contexts() {
        let len = scenario.table_len(c);
        let terms: Vec<(usize, Rational)> = (offset..offset + len).map(|e| (e, Rational::one())).collect();
        lp.add_sparse(&terms, Relation::Eq, Rational::one());
        offset += len;
    }
    let sol = solve_lp(&lp)?;
    debug_assert_eq!(sol.status, LpStatus::Optimal);
    Ok(Behavior::from_flat(scenario.clone(), sol.primal)?)
}

/// `t·V + (1−t)·NC` with `V` a random non-disturbing vertex.
pub fn random_nd_behavior<R: Rng + ?Sized>(scenario: &Arc<Scenario>, rng: &mut R) -> Result<Behavior, QuantifierError> {
    let vertex = random_nd_vertex(scenario, rng)?;
    let nc = random_nc_behavior(scenario, 4, rng);
    let t = random_fraction(rng);
    Ok(mix_behaviors(&[t.clone(), Rational::one() - t], &[vertex, nc])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::catalog;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_are_nondisturbing_and_seeded() {
        let s = Arc::new(catalog::chsh());
        for seed in 0..20 {
            let b = random_nd_behavior(&s, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!(b.is_nondisturbing());
            let again = random_nd_behavior(&s, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(b, again);
        }
    }

    #[test]
    fn weights_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..6 {
            let w = random_weights(n, &mut rng);
            assert_eq!(w.iter().sum::<Rational>(), Rational::one());
            assert!(w.iter().all(|x| x > &Rational::zero()));
        }
    }
}
