use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NcWiring, PostProcessing, PreProcessing, ResponseKey, WiringError};
use crate::rational::{ratio, Rational};
use crate::sampling::{random_nc_behavior, random_weights};
use crate::scenario::Scenario;

/// Consistent light maps are enumerated (and one drawn uniformly) while
/// there are at most this many; beyond it a randomized search is used.
pub const MAP_ENUMERATION_CAP: usize = 100_000;
const SEARCH_NODE_CAP: usize = 2_000_000;
/// Responses have probabilities in multiples of `1/RESPONSE_GRID`.
const RESPONSE_GRID: i64 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleParams {
    /// Number of pre-box outcomes (at least 2).
    pub pre_outcomes: usize,
    /// `|Φ|` is drawn from `1..=max_phi`.
    pub max_phi: usize,
    /// Deterministic assignments mixed into the pre-box.
    pub max_pre_support: usize,
    /// Identity pre-processing and `(β, r)`-independent responses.
    pub post_only: bool,
}

impl Default for SampleParams {
    fn default() -> Self {
        Self { pre_outcomes: 2, max_phi: 4, max_pre_support: 3, post_only: false }
    }
}

/// Draws random NC wirings for a fixed target scenario.
///
/// The pre-box scenario copies the target's measurements and contexts with
/// `pre_outcomes` outcomes; the post-box is the lift of the target (one
/// button per target button/light pair), so post-box responses can depend
/// on the intermediate light arbitrarily.
#[derive(Debug, Clone)]
pub struct WiringSampler {
    target: Arc<Scenario>,
    params: SampleParams,
    pre_scenario: Arc<Scenario>,
    post_scenario: Arc<Scenario>,
    maps: Option<Vec<Vec<Vec<usize>>>>,
}

impl WiringSampler {
    pub fn new(target: Arc<Scenario>, params: SampleParams) -> Result<Self, WiringError> {
        if params.pre_outcomes < 2 || params.max_phi == 0 || params.max_pre_support == 0 {
            return Err(WiringError::Sampling("pre_outcomes ≥ 2, max_phi ≥ 1 and max_pre_support ≥ 1 required".into()));
        }
        let pre_scenario = if params.post_only {
            target.clone()
        } else {
            Arc::new(target.with_outcomes((0..params.pre_outcomes).map(|o| o.to_string()).collect())?)
        };
        let post_scenario = Arc::new(PostProcessing::lifted_scenario(&target, target.outcomes())?);
        let maps = if params.post_only {
            None
        } else {
            let search = MapSearch::new(&pre_scenario, &target);
            let mut found = Vec::new();
            let mut nodes = 0;
            let complete = search.enumerate(&mut found, &mut nodes);
            if complete && found.is_empty() {
                return Err(WiringError::Sampling("target admits no consistent light-to-button map".into()));
            }
            complete.then_some(found)
        };
        Ok(Self { target, params, pre_scenario, post_scenario, maps })
    }

    pub fn target(&self) -> &Arc<Scenario> {
        &self.target
    }

    /// Number of enumerated consistent maps, when enumeration finished under the cap.
    pub fn map_count(&self) -> Option<usize> {
        self.maps.as_ref().map(Vec::len)
    }

    pub fn sample(&self, seed: u64) -> Result<NcWiring, WiringError> {
        self.sample_with(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<NcWiring, WiringError> {
        let pre = if self.params.post_only {
            PreProcessing::identity(&self.target)
        } else {
            let light_to_button = match &self.maps {
                Some(maps) => maps[rng.gen_range(0..maps.len())].clone(),
                None => MapSearch::new(&self.pre_scenario, &self.target)
                    .random_solution(rng)
                    .ok_or_else(|| WiringError::Sampling("no consistent light-to-button map found".into()))?,
            };
            let pre_box = random_nc_behavior(&self.pre_scenario, self.params.max_pre_support, rng);
            PreProcessing::new(pre_box, light_to_button)
        };

        let num_phi = rng.gen_range(1..=self.params.max_phi);
        let phi = random_weights(num_phi, rng);
        let k = self.post_scenario.num_outcomes();
        let responses = (0..num_phi)
            .map(|_| {
                let mut table = BTreeMap::new();
                for post in 0..self.post_scenario.num_measurements() {
                    table.insert(ResponseKey { post, given: None }, grid_distribution(k, rng));
                    if self.params.post_only {
                        continue;
                    }
                    for m in 0..self.pre_scenario.num_measurements() {
                        for o in 0..self.pre_scenario.num_outcomes() {
                            if rng.gen_bool(0.5) {
                                table.insert(ResponseKey { post, given: Some((m, o)) }, grid_distribution(k, rng));
                            }
                        }
                    }
                }
                table
            })
            .collect();
        let post = PostProcessing::new(
            self.post_scenario.clone(),
            PostProcessing::lifted_map(&self.target),
            phi,
            responses,
        );
        NcWiring::new(self.target.clone(), pre, post)
    }
}

/// `sample_random_ncwiring(target, seed, params)`: deterministic in `seed`.
pub fn sample_random_ncwiring(target: &Arc<Scenario>, seed: u64, params: SampleParams) -> Result<NcWiring, WiringError> {
    WiringSampler::new(target.clone(), params)?.sample(seed)
}

/// Uniform draw from the grid `{x ∈ (ℤ/12)^k : Σx = 1, x ≥ 0}` via sorted cut points.
fn grid_distribution<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<Rational> {
    // k-1 bars among G+k-1 slots: uniform over compositions (stars and bars)
    let slots = RESPONSE_GRID as usize + k - 1;
    let mut cuts: Vec<i64> = rand::seq::index::sample(rng, slots, k - 1).into_iter().map(|c| c as i64).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(k);
    let mut prev = -1;
    for &c in &cuts {
        out.push(ratio(c - prev - 1, RESPONSE_GRID));
        prev = c;
    }
    out.push(ratio(RESPONSE_GRID + k as i64 - 2 - prev, RESPONSE_GRID));
    debug_assert_eq!(out.iter().sum::<Rational>(), ratio(1, 1));
    debug_assert!(out.iter().all(|x| x >= &Rational::zero()));
    out
}

/// Backtracking over light-to-button maps: variable `m·k + o` is the
/// target button pressed when pre measurement `m` shows outcome `o`.
struct MapSearch<'a> {
    pre: &'a Scenario,
    target: &'a Scenario,
    /// `compatible[n][a][b]`: target buttons `a ≠ b` share a context of size `n`.
    compatible: Vec<Vec<Vec<bool>>>,
    /// Pre contexts that become fully assigned at each variable.
    completes_at: Vec<Vec<usize>>,
    contexts_of: Vec<Vec<usize>>,
}

impl<'a> MapSearch<'a> {
    fn new(pre: &'a Scenario, target: &'a Scenario) -> Self {
        let nt = target.num_measurements();
        let max_len = pre.contexts().iter().map(Vec::len).max().unwrap_or(0);
        let mut compatible = vec![vec![vec![false; nt]; nt]; max_len + 1];
        for ctx in target.contexts() {
            if ctx.len() <= max_len {
                for &a in ctx {
                    for &b in ctx {
                        if a != b {
                            compatible[ctx.len()][a][b] = true;
                        }
                    }
                }
            }
        }
        let k = pre.num_outcomes();
        let mut completes_at = vec![Vec::new(); pre.num_measurements() * k];
        let mut contexts_of = vec![Vec::new(); pre.num_measurements()];
        for (beta, ctx) in pre.contexts().iter().enumerate() {
            let last = *ctx.iter().max().unwrap();
            completes_at[last * k + k - 1].push(beta);
            for &m in ctx {
                contexts_of[m].push(beta);
            }
        }
        Self { pre, target, compatible, completes_at, contexts_of }
    }

    fn k(&self) -> usize {
        self.pre.num_outcomes()
    }

    /// Pairwise check of the new variable against assigned ones, then full
    /// checks of contexts completed by it.
    fn consistent(&self, assign: &[usize], var: usize) -> bool {
        let k = self.k();
        let (m, _) = (var / k, var % k);
        let button = assign[var];
        for &beta in &self.contexts_of[m] {
            let ctx = self.pre.context(beta);
            let n = ctx.len();
            if n > 1 && self.target.contexts().iter().all(|c| c.len() != n) {
                return false;
            }
            for &other in ctx {
                if other == m {
                    continue;
                }
                for o in 0..k {
                    let v = other * k + o;
                    if v < assign.len() {
                        let b = assign[v];
                        if b == button || !self.compatible[n][button][b] {
                            return false;
                        }
                    }
                }
            }
            if n == 1 && self.target.find_context(&[button]).is_none() {
                return false;
            }
        }
        self.completes_at[var].iter().all(|&beta| self.context_ok(assign, beta))
    }

    fn context_ok(&self, assign: &[usize], beta: usize) -> bool {
        let k = self.k();
        let ctx = self.pre.context(beta);
        (0..self.pre.table_len(beta)).all(|r_idx| {
            let r = self.pre.decode_tuple(beta, r_idx);
            let buttons: Vec<usize> = ctx.iter().zip(&r).map(|(&m, &o)| assign[m * k + o]).collect();
            self.target.find_context(&buttons).is_some()
        })
    }

    fn to_map(&self, assign: &[usize]) -> Vec<Vec<usize>> {
        assign.chunks(self.k()).map(<[usize]>::to_vec).collect()
    }

    /// Collects all consistent maps; false when a cap was hit.
    fn enumerate(&self, out: &mut Vec<Vec<Vec<usize>>>, nodes: &mut usize) -> bool {
        let total = self.pre.num_measurements() * self.k();
        let mut assign = Vec::with_capacity(total);
        self.enumerate_from(&mut assign, total, out, nodes)
    }

    fn enumerate_from(&self, assign: &mut Vec<usize>, total: usize, out: &mut Vec<Vec<Vec<usize>>>, nodes: &mut usize) -> bool {
        if assign.len() == total {
            out.push(self.to_map(assign));
            return out.len() <= MAP_ENUMERATION_CAP;
        }
        for b in 0..self.target.num_measurements() {
            *nodes += 1;
            if *nodes > SEARCH_NODE_CAP {
                return false;
            }
            assign.push(b);
            let var = assign.len() - 1;
            if self.consistent(assign, var) && !self.enumerate_from(assign, total, out, nodes) {
                return false;
            }
            assign.pop();
        }
        true
    }

    fn random_solution<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec<Vec<usize>>> {
        let total = self.pre.num_measurements() * self.k();
        let mut assign = Vec::with_capacity(total);
        let mut nodes = 0;
        self.random_from(&mut assign, total, rng, &mut nodes).then(|| self.to_map(&assign))
    }

    fn random_from<R: Rng + ?Sized>(&self, assign: &mut Vec<usize>, total: usize, rng: &mut R, nodes: &mut usize) -> bool {
        if assign.len() == total {
            return true;
        }
        let mut order: Vec<usize> = (0..self.target.num_measurements()).collect();
        order.shuffle(rng);
        for b in order {
            *nodes += 1;
            if *nodes > SEARCH_NODE_CAP {
                return false;
            }
            assign.push(b);
            let var = assign.len() - 1;
            if self.consistent(assign, var) && self.random_from(assign, total, rng, nodes) {
                return true;
            }
            assign.pop();
        }
        false
    }
}
