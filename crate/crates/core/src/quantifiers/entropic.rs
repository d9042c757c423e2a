//! Relative-entropy quantifiers, in bits.
//!
//! Both minimize a convex function of `q = A·w` over the weight simplex of
//! the NC polytope with pairwise Frank-Wolfe and an exact line search
//! (bisection on the directional derivative). The starting point is the
//! uniform mixture of all vertices, so every entry of `q` is positive.

use std::f64::consts::LN_2;

use super::{FloatNcModel, Measure, NcPolytope, QuantValue, QuantifierError, QuantifierResult, SolverMeta, Witness};
use crate::behavior::{Behavior, NumericMode};
use crate::rational::to_f64;
use crate::scenario::vertex_cap_from_env;

pub const DEFAULT_ENTROPIC_TOL: f64 = 1e-6;
/// Default width of the certified interval for `E_max`.
pub const DEFAULT_EMAX_TOL: f64 = 1e-5;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

const LINE_SEARCH_STEPS: usize = 64;
const MIN_TEMPERATURE: f64 = 1e-12;
const CERTIFY_EVERY: usize = 1000;
const CERTIFY_ITERATIONS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropicOptions {
    /// Frank-Wolfe gap target for `E_u`; certified interval width for `E_max`.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for EntropicOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_ENTROPIC_TOL, max_iterations: DEFAULT_MAX_ITERATIONS }
    }
}

/// `Σ p_i log2(p_i / q_i)` with `0·log(0/q) = 0` and `p > 0, q = 0 → +∞`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, QuantifierError> {
    if p.len() != q.len() {
        return Err(QuantifierError::LengthMismatch(p.len(), q.len()));
    }
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Ok(f64::INFINITY);
            }
            total += pi * (pi / qi).log2();
        }
    }
    Ok(total.max(0.0))
}

/// Objective evaluated at `q`: smoothed value, gradient over entries, and
/// the per-context divergences it was built from.
struct Eval {
    value: f64,
    grad: Vec<f64>,
    per_context: Vec<f64>,
    /// Context weights the gradient was formed with.
    pi: Vec<f64>,
}

struct Problem<'a> {
    poly: &'a NcPolytope,
    p: Vec<f64>,
    weighting: Weighting,
}

/// How the per-context divergences are combined into one objective.
#[derive(Clone)]
enum Weighting {
    Uniform,
    Fixed(Vec<f64>),
    /// Softmax at temperature `τ`.
    Smoothed(f64),
}

impl Problem<'_> {
    fn per_context(&self, q: &[f64]) -> Vec<f64> {
        let mut k = vec![0.0; self.poly.num_contexts()];
        for (e, (&pe, &qe)) in self.p.iter().zip(q).enumerate() {
            if pe > 0.0 {
                k[self.poly.context_of_entry(e)] += if qe > 0.0 { pe * (pe / qe).log2() } else { f64::INFINITY };
            }
        }
        k
    }

    fn weights(&self, k: &[f64]) -> (f64, Vec<f64>) {
        let n = k.len() as f64;
        match &self.weighting {
            Weighting::Uniform => (k.iter().sum::<f64>() / n, vec![1.0 / n; k.len()]),
            Weighting::Fixed(pi) => (pi.iter().zip(k).filter(|(w, _)| **w > 0.0).map(|(w, x)| w * x).sum(), pi.clone()),
            &Weighting::Smoothed(tau) => {
                let top = k.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = k.iter().map(|x| ((x - top) / tau).exp()).collect();
                let z: f64 = exps.iter().sum();
                (top + tau * z.ln(), exps.iter().map(|x| x / z).collect())
            }
        }
    }

    fn eval(&self, q: &[f64]) -> Eval {
        let per_context = self.per_context(q);
        let (value, pi) = self.weights(&per_context);
        let grad = self
            .p
            .iter()
            .zip(q)
            .enumerate()
            .map(|(e, (&pe, &qe))| if pe > 0.0 { -pi[self.poly.context_of_entry(e)] * pe / (qe * LN_2) } else { 0.0 })
            .collect();
        Eval { value, grad, per_context, pi }
    }

    /// Derivative of the objective along `dq` at `q + γ·dq`.
    fn slope(&self, q: &[f64], dq: &[(usize, f64)], gamma: f64) -> f64 {
        let point: Vec<f64> = {
            let mut x = q.to_vec();
            for &(e, d) in dq {
                x[e] += gamma * d;
            }
            x
        };
        let ev = self.eval(&point);
        dq.iter().map(|&(e, d)| ev.grad[e] * d).sum()
    }

    /// Exact line search for `γ ∈ [0, γ_max]`.
    fn line_search(&self, q: &[f64], dq: &[(usize, f64)], gamma_max: f64) -> f64 {
        // entries with positive p must stay positive
        let mut hi = gamma_max;
        let mut open = false;
        for &(e, d) in dq {
            if d < 0.0 && self.p[e] > 0.0 {
                let limit = -q[e] / d;
                if limit <= hi {
                    hi = limit;
                    open = true;
                }
            }
        }
        if !open && self.slope(q, dq, hi) <= 0.0 {
            return hi;
        }
        let mut lo = 0.0;
        for _ in 0..LINE_SEARCH_STEPS {
            let mid = 0.5 * (lo + hi);
            if self.slope(q, dq, mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }
}

struct FrankWolfe<'a> {
    poly: &'a NcPolytope,
    w: Vec<f64>,
    q: Vec<f64>,
    iterations: usize,
}

/// Snapshot of one iteration: the evaluation at the current point and its FW gap.
struct Step {
    eval: Eval,
    gap: f64,
}

impl<'a> FrankWolfe<'a> {
    fn new(poly: &'a NcPolytope) -> Self {
        let nv = poly.num_vertices();
        let w = vec![1.0 / nv as f64; nv];
        let q = poly.combine_f64(&w);
        Self { poly, w, q, iterations: 0 }
    }

    fn vertex_grad(&self, grad: &[f64]) -> Vec<f64> {
        (0..self.poly.num_vertices()).map(|v| self.poly.rows_of(v).iter().map(|&e| grad[e]).sum()).collect()
    }

    /// Evaluates at the current point; when `advance`, also takes one pairwise step.
    fn step(&mut self, problem: &Problem, advance: bool) -> Step {
        let eval = problem.eval(&self.q);
        let gv = self.vertex_grad(&eval.grad);
        let (mut s, mut a) = (0, usize::MAX);
        for v in 0..gv.len() {
            if gv[v] < gv[s] {
                s = v;
            }
            if self.w[v] > 0.0 && (a == usize::MAX || gv[v] > gv[a]) {
                a = v;
            }
        }
        let inner: f64 = self.w.iter().zip(&gv).map(|(w, g)| w * g).sum();
        let gap = (inner - gv[s]).max(0.0);
        if advance && a != s && gv[a] > gv[s] {
            let mut dq: Vec<(usize, f64)> = Vec::new();
            for &e in self.poly.rows_of(s) {
                dq.push((e, 1.0));
            }
            for &e in self.poly.rows_of(a) {
                match dq.iter_mut().find(|(x, _)| *x == e) {
                    Some(entry) => entry.1 -= 1.0,
                    None => dq.push((e, -1.0)),
                }
            }
            dq.retain(|(_, d)| *d != 0.0);
            let gamma = problem.line_search(&self.q, &dq, self.w[a]);
            if gamma >= self.w[a] {
                self.w[s] += self.w[a];
                self.w[a] = 0.0;
            } else {
                self.w[s] += gamma;
                self.w[a] -= gamma;
            }
            for &(e, d) in &dq {
                self.q[e] = (self.q[e] + gamma * d).max(0.0);
            }
            self.iterations += 1;
            if self.iterations % 1000 == 0 {
                // resynchronize q with w to shed accumulated rounding
                self.q = self.poly.combine_f64(&self.w);
            }
        }
        Step { eval, gap }
    }

    fn witness(&self) -> Witness {
        Witness::Approx(FloatNcModel {
            weights: self
                .w
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(v, w)| (self.poly.vertices()[v].clone(), *w))
                .collect(),
        })
    }
}

fn polytope_for(b: &Behavior) -> Result<NcPolytope, QuantifierError> {
    Ok(NcPolytope::new(b.scenario_arc().clone(), vertex_cap_from_env())?)
}

fn check_options(options: &EntropicOptions) -> Result<(), QuantifierError> {
    if !(options.tol > 0.0) {
        return Err(QuantifierError::OutOfRange(format!("tolerance must be positive, got {}", options.tol)));
    }
    Ok(())
}

/// Both quantifiers vanish exactly on NC behaviors; an exact LP settles that
/// case, which first-order methods only approach at a sublinear rate.
fn exact_zero(measure: Measure, b: &Behavior, poly: &NcPolytope) -> Result<Option<QuantifierResult>, QuantifierError> {
    let check = super::linear::check_noncontextual_on(b, poly)?;
    let Some(model) = check.model else { return Ok(None) };
    let weights = model.weights.into_iter().map(|(g, w)| (g, to_f64(&w))).collect();
    Ok(Some(QuantifierResult {
        measure,
        value: QuantValue::Approx(0.0),
        witness: Some(Witness::Approx(FloatNcModel { weights })),
        decomposition: None,
        meta: SolverMeta { mode: NumericMode::ExactRational, iterations: 0, gap: Some(0.0), lower_bound: Some(0.0) },
    }))
}

/// `E_u(b) = (1/N)·min_{q ∈ NC} Σ_γ D_KL(p_γ ‖ q_γ)`.
pub fn relative_entropy_uniform(b: &Behavior, options: &EntropicOptions) -> Result<QuantifierResult, QuantifierError> {
    relative_entropy_uniform_on(b, &polytope_for(b)?, options)
}

pub(crate) fn relative_entropy_uniform_on(
    b: &Behavior,
    poly: &NcPolytope,
    options: &EntropicOptions,
) -> Result<QuantifierResult, QuantifierError> {
    check_options(options)?;
    b.require_nondisturbing()?;
    if let Some(zero) = exact_zero(Measure::Eu, b, poly)? {
        return Ok(zero);
    }
    let problem = Problem { poly, p: b.flat_f64(), weighting: Weighting::Uniform };
    let mut fw = FrankWolfe::new(poly);
    loop {
        let done = fw.iterations >= options.max_iterations;
        let step = fw.step(&problem, !done);
        if step.gap <= options.tol {
            let value = step.eval.value.max(0.0);
            return Ok(QuantifierResult {
                measure: Measure::Eu,
                value: QuantValue::Approx(value),
                witness: Some(fw.witness()),
                decomposition: None,
                meta: SolverMeta {
                    mode: NumericMode::Float { tolerance: options.tol },
                    iterations: fw.iterations,
                    gap: Some(step.gap),
                    lower_bound: Some((step.eval.value - step.gap).max(0.0)),
                },
            });
        }
        if done {
            return Err(QuantifierError::NonConvergence {
                iterations: fw.iterations,
                best_value: step.eval.value,
                best_gap: step.gap,
            });
        }
    }
}

/// `E_max(b) = min_{q ∈ NC} max_γ D_KL(p_γ ‖ q_γ)`.
///
/// Minimizes the softmax `τ·ln Σ_γ exp(K_γ/τ)` for `τ = 1, 0.1, 0.01, …`.
/// At every iterate, with `π` the softmax weights, `Σ π_γ K_γ − gap` is a
/// lower bound on the optimum and `max_γ K_γ` an upper bound. The lower
/// bound is tightened by solving the `π`-weighted problem from time to time
/// (see [`certify`]). The solver stops once the best bounds are within `tol`
/// and reports the upper one.
pub fn relative_entropy_max(b: &Behavior, options: &EntropicOptions) -> Result<QuantifierResult, QuantifierError> {
    relative_entropy_max_on(b, &polytope_for(b)?, options)
}

pub(crate) fn relative_entropy_max_on(
    b: &Behavior,
    poly: &NcPolytope,
    options: &EntropicOptions,
) -> Result<QuantifierResult, QuantifierError> {
    check_options(options)?;
    b.require_nondisturbing()?;
    if let Some(zero) = exact_zero(Measure::Emax, b, poly)? {
        return Ok(zero);
    }
    let mut problem = Problem { poly, p: b.flat_f64(), weighting: Weighting::Smoothed(1.0) };
    let mut fw = FrankWolfe::new(poly);
    let mut best_upper = f64::INFINITY;
    let mut best_w = fw.w.clone();
    let mut best_lower = 0.0_f64;
    let mut tau = 1.0;
    loop {
        let stage_tol = (options.tol / 2.0).max(tau * 1e-2);
        loop {
            let done = fw.iterations >= options.max_iterations;
            let w_before = fw.w.clone();
            let step = fw.step(&problem, !done);
            let upper = step.eval.per_context.iter().cloned().fold(0.0, f64::max);
            let mean: f64 = step.eval.pi.iter().zip(&step.eval.per_context).map(|(a, k)| a * k).sum();
            if upper < best_upper {
                best_upper = upper;
                best_w = w_before;
            }
            best_lower = best_lower.max(mean - step.gap);
            let stage_done = step.gap <= stage_tol;
            if (stage_done || done || fw.iterations % CERTIFY_EVERY == 0) && best_upper - best_lower > options.tol {
                best_lower = best_lower.max(certify(&problem, &fw, step.eval.pi, options.tol / 4.0));
            }
            if best_upper - best_lower <= options.tol {
                fw.w = best_w;
                return Ok(QuantifierResult {
                    measure: Measure::Emax,
                    value: QuantValue::Approx(best_upper),
                    witness: Some(fw.witness()),
                    decomposition: None,
                    meta: SolverMeta {
                        mode: NumericMode::Float { tolerance: options.tol },
                        iterations: fw.iterations,
                        gap: Some(best_upper - best_lower),
                        lower_bound: Some(best_lower),
                    },
                });
            }
            if done {
                return Err(QuantifierError::NonConvergence {
                    iterations: fw.iterations,
                    best_value: best_upper,
                    best_gap: best_upper - best_lower,
                });
            }
            if stage_done && tau > MIN_TEMPERATURE {
                break;
            }
        }
        tau /= 10.0;
        problem.weighting = Weighting::Smoothed(tau);
    }
}

/// Lower bound on `E_max` from the weighted problem `min_q Σ_γ π_γ K_γ(q)`.
///
/// Its Frank-Wolfe gap does not degrade with the smoothing temperature, so
/// a short run from the current point usually certifies far more than the
/// smoothed gap does.
fn certify(problem: &Problem, fw: &FrankWolfe, pi: Vec<f64>, tol: f64) -> f64 {
    let fixed = Problem { poly: problem.poly, p: problem.p.clone(), weighting: Weighting::Fixed(pi) };
    let mut inner = FrankWolfe { poly: fw.poly, w: fw.w.clone(), q: fw.q.clone(), iterations: 0 };
    let mut best = f64::NEG_INFINITY;
    for i in 0..=CERTIFY_ITERATIONS {
        let step = inner.step(&fixed, i < CERTIFY_ITERATIONS);
        best = best.max(step.eval.value - step.gap);
        if step.gap <= tol {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::catalog as boxes;
    use crate::behavior::{assignment_to_behavior, mix_behaviors};
    use crate::rational::ratio;
    use crate::scenario::{catalog, GlobalAssignment};
    use std::sync::Arc;

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), f64::INFINITY);
        assert!(kl_divergence(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn pr_box_values() {
        let expected = (4.0f64 / 3.0).log2();
        let opts = EntropicOptions::default();
        let eu = relative_entropy_uniform(&boxes::pr_box(), &opts).unwrap();
        assert!((eu.value.to_f64() - expected).abs() < 1e-5, "{}", eu.value);
        let emax = relative_entropy_max(&boxes::pr_box(), &EntropicOptions { tol: DEFAULT_EMAX_TOL, ..opts }).unwrap();
        assert!((emax.value.to_f64() - expected).abs() < 1e-4, "{}", emax.value);
        assert!(emax.meta.lower_bound.unwrap() <= expected + 1e-12);
    }

    #[test]
    fn noncontextual_is_near_zero() {
        let s = Arc::new(catalog::chsh());
        let g1 = assignment_to_behavior(&GlobalAssignment::new(vec![0, 1, 1, 0]), s.clone()).unwrap();
        let g2 = assignment_to_behavior(&GlobalAssignment::new(vec![1, 1, 0, 0]), s.clone()).unwrap();
        let b = mix_behaviors(&[ratio(1, 3), ratio(2, 3)], &[g1, g2]).unwrap();
        let opts = EntropicOptions::default();
        assert!(relative_entropy_uniform(&b, &opts).unwrap().value.to_f64() <= 1e-6);
        let emax = relative_entropy_max(&b, &EntropicOptions { tol: DEFAULT_EMAX_TOL, ..opts }).unwrap();
        assert!(emax.value.to_f64() <= DEFAULT_EMAX_TOL);
    }

    #[test]
    fn iteration_ceiling_reports_progress() {
        let opts = EntropicOptions { tol: 1e-14, max_iterations: 5 };
        match relative_entropy_uniform(&boxes::pr_box(), &opts) {
            Err(QuantifierError::NonConvergence { iterations, best_value, .. }) => {
                assert_eq!(iterations, 5);
                assert!(best_value.is_finite());
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
