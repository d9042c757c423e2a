//! Linear programming backend.
//!
//! [`solve_lp`] runs a two-phase dense-tableau simplex over exact rationals
//! with Bland's rule, and returns primal/dual certificates for optimal
//! problems, a Farkas vector for infeasible ones and an improving ray for
//! unbounded ones. Every certificate can be replayed independently with
//! [`verify_solution`]. [`solve_lp_float`] runs the same algorithm in `f64`.
//!
//! Degenerate optima return the first optimal basis found. Callers should
//! rely on the optimal value only, never on which optimizer is returned.

mod simplex;

use std::collections::HashMap;
use std::fmt::Write as _;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::{format_rational, Rational};

pub use simplex::DEFAULT_MAX_PIVOTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<Rational>,
    pub relation: Relation,
    pub rhs: Rational,
}

/// Per-variable bounds; `None` means unbounded on that side.
#[derive(Debug, Clone, PartialEq)]
pub struct Bound {
    pub lower: Option<Rational>,
    pub upper: Option<Rational>,
}

impl Default for Bound {
    fn default() -> Self {
        Self { lower: Some(Rational::zero()), upper: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub sense: Sense,
    pub objective: Vec<Rational>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<Bound>,
}

impl LinearProgram {
    /// Zero objective, no constraints, every variable in `[0, ∞)`.
    pub fn new(num_vars: usize, sense: Sense) -> Self {
        Self {
            num_vars,
            sense,
            objective: vec![Rational::zero(); num_vars],
            constraints: Vec::new(),
            bounds: vec![Bound::default(); num_vars],
        }
    }

    pub fn with_objective(mut self, objective: Vec<Rational>) -> Self {
        self.objective = objective;
        self
    }

    pub fn add_constraint(&mut self, coeffs: Vec<Rational>, relation: Relation, rhs: Rational) {
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    /// Adds a constraint given as sparse `(variable, coefficient)` pairs.
    pub fn add_sparse(&mut self, terms: &[(usize, Rational)], relation: Relation, rhs: Rational) {
        let mut coeffs = vec![Rational::zero(); self.num_vars];
        for (j, c) in terms {
            coeffs[*j] += c;
        }
        self.add_constraint(coeffs, relation, rhs);
    }

    pub fn set_bounds(&mut self, var: usize, lower: Option<Rational>, upper: Option<Rational>) {
        self.bounds[var] = Bound { lower, upper };
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars;
        if self.objective.len() != n {
            return Err(LpError::DimensionMismatch { what: "objective".into(), expected: n, got: self.objective.len() });
        }
        if self.bounds.len() != n {
            return Err(LpError::DimensionMismatch { what: "bounds".into(), expected: n, got: self.bounds.len() });
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LpError::DimensionMismatch {
                    what: format!("constraint {i}"),
                    expected: n,
                    got: c.coeffs.len(),
                });
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[Rational]) -> Rational {
        dot(&self.objective, x)
    }

    /// Plain-text dump, one line per row.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let sense = match self.sense {
            Sense::Minimize => "min",
            Sense::Maximize => "max",
        };
        let _ = writeln!(out, "{sense} {}", join(&self.objective));
        for c in &self.constraints {
            let rel = match c.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            let _ = writeln!(out, "  {} {rel} {}", join(&c.coeffs), format_rational(&c.rhs));
        }
        for (j, b) in self.bounds.iter().enumerate() {
            let lo = b.lower.as_ref().map(format_rational).unwrap_or_else(|| "-inf".into());
            let hi = b.upper.as_ref().map(format_rational).unwrap_or_else(|| "inf".into());
            let _ = writeln!(out, "  {lo} <= x{j} <= {hi}");
        }
        out
    }
}

fn join(v: &[Rational]) -> String {
    v.iter().map(format_rational).collect::<Vec<_>>().join(" ")
}

pub(crate) fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter()
        .zip(b)
        .filter(|(x, y)| !x.is_zero() && !y.is_zero())
        .map(|(x, y)| x * y)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("{what} has length {got}, expected {expected}")]
    DimensionMismatch { what: String, expected: usize, got: usize },
    #[error("simplex exceeded {limit} pivots")]
    IterationLimit { limit: usize },
    #[error("certificate check failed: {0}")]
    Certificate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal objective value (optimal status only).
    pub objective: Option<Rational>,
    /// Optimal point, or a feasible point when unbounded. Empty when infeasible.
    pub primal: Vec<Rational>,
    /// One multiplier per constraint (optimal status only). Uses the usual
    /// sign convention for the problem's sense: for a minimization `≥`
    /// rows carry non-negative and `≤` rows non-positive multipliers, and
    /// the reverse for a maximization.
    pub dual: Vec<Rational>,
    /// Farkas multipliers per constraint proving infeasibility.
    pub farkas: Option<Vec<Rational>>,
    /// Direction along which the objective improves without bound.
    pub ray: Option<Vec<Rational>>,
    pub pivots: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverOptions {
    pub max_pivots: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_pivots: DEFAULT_MAX_PIVOTS }
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_lp_with(lp, SolverOptions::default())
}

pub fn solve_lp_with(lp: &LinearProgram, options: SolverOptions) -> Result<LpSolution, LpError> {
    lp.validate()?;
    simplex::solve_exact(lp, options)
}

/// Result of the `f64` simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatSolution {
    pub status: LpStatus,
    pub objective: Option<f64>,
    pub primal: Vec<f64>,
    pub pivots: usize,
}

pub fn solve_lp_float(lp: &LinearProgram) -> Result<FloatSolution, LpError> {
    lp.validate()?;
    simplex::solve_float(lp, SolverOptions::default())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(Vec<Rational>),
    Infeasible(Vec<Rational>),
}

/// Phase-one feasibility check: a feasible point or a Farkas certificate.
pub fn check_feasible(lp: &LinearProgram) -> Result<Feasibility, LpError> {
    let mut zero = lp.clone();
    zero.objective = vec![Rational::zero(); lp.num_vars];
    let sol = solve_lp(&zero)?;
    Ok(match sol.status {
        LpStatus::Infeasible => Feasibility::Infeasible(sol.farkas.expect("infeasible carries farkas")),
        _ => Feasibility::Feasible(sol.primal),
    })
}

/// Replays a solution against the program using exact arithmetic:
/// feasibility of the primal point, strong duality for optimal solves,
/// the Farkas inequality for infeasible ones, and the ray conditions for
/// unbounded ones.
pub fn verify_solution(lp: &LinearProgram, sol: &LpSolution) -> Result<(), LpError> {
    match sol.status {
        LpStatus::Optimal => {
            check_primal(lp, &sol.primal)?;
            let value = lp.objective_value(&sol.primal);
            let claimed = sol.objective.as_ref().ok_or_else(|| cert("missing objective"))?;
            if &value != claimed {
                return Err(cert(format!("objective {claimed} but c·x = {value}")));
            }
            let dual_value = dual_objective(lp, &sol.dual, false)?;
            if dual_value != value {
                return Err(cert(format!("primal {value} != dual {dual_value}")));
            }
            Ok(())
        }
        LpStatus::Infeasible => {
            let y = sol.farkas.as_ref().ok_or_else(|| cert("missing Farkas vector"))?;
            verify_farkas(lp, y)
        }
        LpStatus::Unbounded => {
            check_primal(lp, &sol.primal)?;
            let ray = sol.ray.as_ref().ok_or_else(|| cert("missing ray"))?;
            verify_ray(lp, ray)
        }
    }
}

fn cert(msg: impl Into<String>) -> LpError {
    LpError::Certificate(msg.into())
}

/// Checks every constraint and bound exactly.
pub fn check_primal(lp: &LinearProgram, x: &[Rational]) -> Result<(), LpError> {
    if x.len() != lp.num_vars {
        return Err(cert(format!("primal has {} entries, expected {}", x.len(), lp.num_vars)));
    }
    for (i, c) in lp.constraints.iter().enumerate() {
        let lhs = dot(&c.coeffs, x);
        let ok = match c.relation {
            Relation::Le => lhs <= c.rhs,
            Relation::Eq => lhs == c.rhs,
            Relation::Ge => lhs >= c.rhs,
        };
        if !ok {
            return Err(cert(format!("constraint {i} violated: lhs {lhs} vs rhs {}", c.rhs)));
        }
    }
    for (j, b) in lp.bounds.iter().enumerate() {
        if b.lower.as_ref().is_some_and(|l| &x[j] < l) || b.upper.as_ref().is_some_and(|u| &x[j] > u) {
            return Err(cert(format!("bound of x{j} violated by {}", x[j])));
        }
    }
    Ok(())
}

/// Dual objective of `y` after checking dual feasibility; multipliers are
/// first brought to minimization form. With `farkas` the objective is
/// treated as zero.
fn dual_objective(lp: &LinearProgram, y: &[Rational], farkas: bool) -> Result<Rational, LpError> {
    if y.len() != lp.constraints.len() {
        return Err(cert(format!("dual has {} entries, expected {}", y.len(), lp.constraints.len())));
    }
    let flip = lp.sense == Sense::Maximize && !farkas;
    let y_min: Vec<Rational> = y.iter().map(|v| if flip { -v } else { v.clone() }).collect();
    let mut reduced: Vec<Rational> = if farkas {
        vec![Rational::zero(); lp.num_vars]
    } else if flip {
        lp.objective.iter().map(|c| -c).collect()
    } else {
        lp.objective.clone()
    };
    let mut value = Rational::zero();
    for (i, (c, yi)) in lp.constraints.iter().zip(&y_min).enumerate() {
        let sign_ok = match c.relation {
            Relation::Le => !yi.is_positive(),
            Relation::Ge => !yi.is_negative(),
            Relation::Eq => true,
        };
        if !sign_ok {
            return Err(cert(format!("multiplier {yi} of constraint {i} has the wrong sign")));
        }
        if yi.is_zero() {
            continue;
        }
        value += &c.rhs * yi;
        for (d, a) in reduced.iter_mut().zip(&c.coeffs) {
            if !a.is_zero() {
                *d -= a * yi;
            }
        }
    }
    for (j, (d, b)) in reduced.iter().zip(&lp.bounds).enumerate() {
        if d.is_positive() {
            let l = b.lower.as_ref().ok_or_else(|| cert(format!("reduced cost of x{j} needs a lower bound")))?;
            value += d * l;
        } else if d.is_negative() {
            let u = b.upper.as_ref().ok_or_else(|| cert(format!("reduced cost of x{j} needs an upper bound")))?;
            value += d * u;
        }
    }
    Ok(if flip { -value } else { value })
}

/// A Farkas vector proves infeasibility when it is sign-feasible for the
/// zero-objective dual and has a strictly positive dual objective.
pub fn verify_farkas(lp: &LinearProgram, y: &[Rational]) -> Result<(), LpError> {
    let value = dual_objective(lp, y, true)?;
    if !value.is_positive() {
        return Err(cert(format!("Farkas value {value} is not positive")));
    }
    Ok(())
}

fn verify_ray(lp: &LinearProgram, ray: &[Rational]) -> Result<(), LpError> {
    let slope = lp.objective_value(ray);
    let improving = match lp.sense {
        Sense::Minimize => slope.is_negative(),
        Sense::Maximize => slope.is_positive(),
    };
    if !improving {
        return Err(cert(format!("ray slope {slope} does not improve the objective")));
    }
    for (i, c) in lp.constraints.iter().enumerate() {
        let lhs = dot(&c.coeffs, ray);
        let ok = match c.relation {
            Relation::Le => !lhs.is_positive(),
            Relation::Eq => lhs.is_zero(),
            Relation::Ge => !lhs.is_negative(),
        };
        if !ok {
            return Err(cert(format!("ray leaves constraint {i}")));
        }
    }
    for (j, b) in lp.bounds.iter().enumerate() {
        if (b.lower.is_some() && ray[j].is_negative()) || (b.upper.is_some() && ray[j].is_positive()) {
            return Err(cert(format!("ray leaves the bounds of x{j}")));
        }
    }
    Ok(())
}

/// Index of the first occurrence of each constraint row; later exact
/// duplicates map to the same representative.
pub(crate) fn dedup_rows(lp: &LinearProgram) -> Vec<usize> {
    let mut seen: HashMap<(&[Rational], Relation, &Rational), usize> = HashMap::new();
    lp.constraints
        .iter()
        .enumerate()
        .map(|(i, c)| *seen.entry((c.coeffs.as_slice(), c.relation, &c.rhs)).or_insert(i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn lp1(sense: Sense, obj: &[i64]) -> LinearProgram {
        LinearProgram::new(obj.len(), sense).with_objective(obj.iter().map(|&c| int(c)).collect())
    }

    fn solve_checked(lp: &LinearProgram) -> LpSolution {
        let sol = solve_lp(lp).unwrap();
        verify_solution(lp, &sol).unwrap();
        sol
    }

    #[test]
    fn max_single_variable() {
        let mut lp = lp1(Sense::Maximize, &[1]);
        lp.add_constraint(vec![int(1)], Relation::Le, int(1));
        let sol = solve_checked(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.objective, Some(int(1)));
        assert_eq!(sol.primal, vec![int(1)]);
    }

    #[test]
    fn infeasible_with_farkas() {
        let mut lp = lp1(Sense::Minimize, &[0]);
        lp.add_constraint(vec![int(1)], Relation::Le, int(-1));
        let sol = solve_checked(&lp);
        assert_eq!(sol.status, LpStatus::Infeasible);
        verify_farkas(&lp, sol.farkas.as_ref().unwrap()).unwrap();
    }

    #[test]
    fn box_constrained_sum() {
        let mut lp = lp1(Sense::Maximize, &[1, 1]);
        lp.add_constraint(vec![int(1), int(1)], Relation::Le, ratio(3, 2));
        lp.set_bounds(0, Some(int(0)), Some(int(1)));
        lp.set_bounds(1, Some(int(0)), Some(int(1)));
        let sol = solve_checked(&lp);
        assert_eq!(sol.objective, Some(ratio(3, 2)));
    }

    #[test]
    fn feasibility_checks() {
        let mut lp = lp1(Sense::Minimize, &[0]);
        lp.add_constraint(vec![int(1)], Relation::Eq, int(1));
        assert_eq!(check_feasible(&lp).unwrap(), Feasibility::Feasible(vec![int(1)]));

        let mut lp = lp1(Sense::Minimize, &[0]);
        lp.set_bounds(0, None, None);
        lp.add_constraint(vec![int(1)], Relation::Ge, int(2));
        lp.add_constraint(vec![int(1)], Relation::Le, int(1));
        match check_feasible(&lp).unwrap() {
            Feasibility::Infeasible(y) => verify_farkas(&lp, &y).unwrap(),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn unbounded_with_ray() {
        let mut lp = lp1(Sense::Maximize, &[1, -1]);
        lp.add_constraint(vec![int(1), int(-1)], Relation::Ge, int(-2));
        let sol = solve_checked(&lp);
        assert_eq!(sol.status, LpStatus::Unbounded);
        assert!(sol.ray.is_some());
    }

    #[test]
    fn free_and_upper_bounded_variables() {
        // min x - y  s.t. x + y = 1, x free, y <= 3 (no lower bound)
        let mut lp = lp1(Sense::Minimize, &[1, -1]);
        lp.add_constraint(vec![int(1), int(1)], Relation::Eq, int(1));
        lp.set_bounds(0, None, None);
        lp.set_bounds(1, None, Some(int(3)));
        let sol = solve_checked(&lp);
        assert_eq!(sol.objective, Some(int(-5)));
        assert_eq!(sol.primal, vec![int(-2), int(3)]);
    }

    #[test]
    fn redundant_and_duplicate_rows() {
        // x + y = 1 twice, 2x + 2y = 2, max x with x <= 3/4
        let mut lp = lp1(Sense::Maximize, &[1, 0]);
        lp.add_constraint(vec![int(1), int(1)], Relation::Eq, int(1));
        lp.add_constraint(vec![int(1), int(1)], Relation::Eq, int(1));
        lp.add_constraint(vec![int(2), int(2)], Relation::Eq, int(2));
        lp.add_constraint(vec![int(1), int(0)], Relation::Le, ratio(3, 4));
        let sol = solve_checked(&lp);
        assert_eq!(sol.objective, Some(ratio(3, 4)));
        assert!(sol.dual[1].is_zero());
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling LP under the textbook largest-coefficient rule.
        let mut lp = LinearProgram::new(4, Sense::Minimize).with_objective(vec![
            ratio(-3, 4),
            int(150),
            ratio(-1, 50),
            int(6),
        ]);
        lp.add_constraint(vec![ratio(1, 4), int(-60), ratio(-1, 25), int(9)], Relation::Le, int(0));
        lp.add_constraint(vec![ratio(1, 2), int(-90), ratio(-1, 50), int(3)], Relation::Le, int(0));
        lp.add_constraint(vec![int(0), int(0), int(1), int(0)], Relation::Le, int(1));
        let sol = solve_checked(&lp);
        assert_eq!(sol.objective, Some(ratio(-1, 20)));
    }

    #[test]
    fn pivot_ceiling_is_enforced() {
        let mut lp = lp1(Sense::Maximize, &[1, 1]);
        lp.add_constraint(vec![int(1), int(0)], Relation::Le, int(1));
        lp.add_constraint(vec![int(0), int(1)], Relation::Le, int(1));
        let err = solve_lp_with(&lp, SolverOptions { max_pivots: 1 }).unwrap_err();
        assert_eq!(err, LpError::IterationLimit { limit: 1 });
    }

    #[test]
    fn dimension_mismatch() {
        let mut lp = lp1(Sense::Minimize, &[1, 1]);
        lp.add_constraint(vec![int(1)], Relation::Le, int(1));
        assert!(matches!(solve_lp(&lp), Err(LpError::DimensionMismatch { .. })));
    }

    #[test]
    fn tampered_certificates_are_rejected() {
        let mut lp = lp1(Sense::Maximize, &[1, 1]);
        lp.add_constraint(vec![int(1), int(1)], Relation::Le, ratio(3, 2));
        lp.set_bounds(0, Some(int(0)), Some(int(1)));
        let mut sol = solve_checked(&lp);
        sol.dual[0] += int(1);
        assert!(verify_solution(&lp, &sol).is_err());
    }

    #[test]
    fn float_mode_matches_small_case() {
        let mut lp = lp1(Sense::Maximize, &[3, 2]);
        lp.add_constraint(vec![int(1), int(1)], Relation::Le, int(4));
        lp.add_constraint(vec![int(1), int(3)], Relation::Le, int(6));
        lp.set_bounds(0, Some(int(0)), Some(int(3)));
        let exact = solve_checked(&lp);
        let float = solve_lp_float(&lp).unwrap();
        assert_eq!(exact.objective, Some(int(11)));
        assert!((float.objective.unwrap() - 11.0).abs() < 1e-9);
    }

    #[test]
    fn dump_lists_rows() {
        let mut lp = lp1(Sense::Maximize, &[1]);
        lp.add_constraint(vec![ratio(1, 2)], Relation::Le, int(1));
        let text = lp.dump();
        assert!(text.starts_with("max 1\n"));
        assert!(text.contains("1/2 <= 1"));
    }
}
