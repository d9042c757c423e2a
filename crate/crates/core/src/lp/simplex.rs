//! Two-phase dense tableau simplex with Bland's rule, generic over the
//! scalar field.

use num_traits::{One, Signed, Zero};

use super::{dedup_rows, FloatSolution, LinearProgram, LpError, LpSolution, LpStatus, Relation, Sense, SolverOptions};
use crate::rational::{to_f64, Rational};

pub const DEFAULT_MAX_PIVOTS: usize = 1_000_000;

const FLOAT_EPS: f64 = 1e-11;

pub(crate) trait Scalar: Clone + std::fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_rational(r: &Rational) -> Self;
    fn is_zero(&self) -> bool;
    fn is_pos(&self) -> bool;
    fn is_neg(&self) -> bool;
    fn neg(&self) -> Self;
    fn div(&self, other: &Self) -> Self;
    fn add_assign(&mut self, other: &Self);
    /// `self -= a * b`
    fn sub_mul(&mut self, a: &Self, b: &Self);
    fn less(&self, other: &Self) -> bool;
}

impl Scalar for Rational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_pos(&self) -> bool {
        self.is_positive()
    }
    fn is_neg(&self) -> bool {
        self.is_negative()
    }
    fn neg(&self) -> Self {
        -self
    }
    fn div(&self, other: &Self) -> Self {
        self / other
    }
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
    fn sub_mul(&mut self, a: &Self, b: &Self) {
        *self -= a * b;
    }
    fn less(&self, other: &Self) -> bool {
        self < other
    }
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_rational(r: &Rational) -> Self {
        to_f64(r)
    }
    fn is_zero(&self) -> bool {
        self.abs() <= FLOAT_EPS
    }
    fn is_pos(&self) -> bool {
        *self > FLOAT_EPS
    }
    fn is_neg(&self) -> bool {
        *self < -FLOAT_EPS
    }
    fn neg(&self) -> Self {
        -*self
    }
    fn div(&self, other: &Self) -> Self {
        self / other
    }
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
    fn sub_mul(&mut self, a: &Self, b: &Self) {
        *self -= a * b;
        if self.abs() <= 1e-14 {
            *self = 0.0;
        }
    }
    fn less(&self, other: &Self) -> bool {
        self < other
    }
}

/// How an original variable is expressed through standard-form columns.
#[derive(Debug, Clone)]
enum VarMap {
    /// `x = l + col`
    Shifted { col: usize, lower: Rational },
    /// `x = u - col`
    Flipped { col: usize, upper: Rational },
    /// `x = pos - neg`
    Split { pos: usize, neg: usize },
}

/// `min c·x  s.t.  A x (rel) b,  x >= 0` with `b >= 0` after row negation.
struct StandardForm<F> {
    rows: Vec<Vec<F>>,
    rhs: Vec<F>,
    relations: Vec<Relation>,
    cost: Vec<F>,
    var_maps: Vec<VarMap>,
    /// Standard row of each original constraint (`None` for a duplicate),
    /// with `true` when the row was negated.
    origin: Vec<Option<(usize, bool)>>,
    num_cols: usize,
}

fn standardize<F: Scalar>(lp: &LinearProgram) -> StandardForm<F> {
    let minimize = lp.sense == Sense::Minimize;
    let mut var_maps = Vec::with_capacity(lp.num_vars);
    let mut num_cols = 0;
    let mut bound_rows: Vec<(usize, Rational)> = Vec::new();
    for b in &lp.bounds {
        match (&b.lower, &b.upper) {
            (Some(l), upper) => {
                var_maps.push(VarMap::Shifted { col: num_cols, lower: l.clone() });
                if let Some(u) = upper {
                    bound_rows.push((num_cols, u - l));
                }
                num_cols += 1;
            }
            (None, Some(u)) => {
                var_maps.push(VarMap::Flipped { col: num_cols, upper: u.clone() });
                num_cols += 1;
            }
            (None, None) => {
                var_maps.push(VarMap::Split { pos: num_cols, neg: num_cols + 1 });
                num_cols += 2;
            }
        }
    }

    let mut cost = vec![F::zero(); num_cols];
    for (j, c) in lp.objective.iter().enumerate() {
        let c = if minimize { c.clone() } else { -c };
        match &var_maps[j] {
            VarMap::Shifted { col, .. } => cost[*col] = F::from_rational(&c),
            VarMap::Flipped { col, .. } => cost[*col] = F::from_rational(&-c),
            VarMap::Split { pos, neg } => {
                cost[*pos] = F::from_rational(&c);
                cost[*neg] = F::from_rational(&-c);
            }
        }
    }

    let representative = dedup_rows(lp);
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut relations = Vec::new();
    let mut origin = Vec::with_capacity(lp.constraints.len());
    for (i, con) in lp.constraints.iter().enumerate() {
        if representative[i] != i {
            origin.push(None);
            continue;
        }
        let mut row = vec![F::zero(); num_cols];
        let mut b = con.rhs.clone();
        for (j, a) in con.coeffs.iter().enumerate() {
            if Zero::is_zero(a) {
                continue;
            }
            match &var_maps[j] {
                VarMap::Shifted { col, lower } => {
                    row[*col] = F::from_rational(a);
                    b -= a * lower;
                }
                VarMap::Flipped { col, upper } => {
                    row[*col] = F::from_rational(&-a);
                    b -= a * upper;
                }
                VarMap::Split { pos, neg } => {
                    row[*pos] = F::from_rational(a);
                    row[*neg] = F::from_rational(&-a);
                }
            }
        }
        let negate = b.is_negative();
        let mut relation = con.relation;
        if negate {
            row.iter_mut().for_each(|v| *v = v.neg());
            b = -b;
            relation = match relation {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        origin.push(Some((rows.len(), negate)));
        rows.push(row);
        rhs.push(F::from_rational(&b));
        relations.push(relation);
    }
    for (col, width) in bound_rows {
        let mut row = vec![F::zero(); num_cols];
        row[col] = F::one();
        rows.push(row);
        rhs.push(F::from_rational(&width));
        relations.push(Relation::Le);
    }
    StandardForm { rows, rhs, relations, cost, var_maps, origin, num_cols }
}

struct Tableau<F> {
    /// Constraint rows; the last entry of each row is the right-hand side.
    rows: Vec<Vec<F>>,
    /// Phase-two reduced costs; last entry is minus the objective.
    z: Vec<F>,
    /// Phase-one reduced costs.
    w: Vec<F>,
    basis: Vec<usize>,
    /// Initial identity column of every row (slack or artificial).
    unit: Vec<usize>,
    first_artificial: usize,
    num_cols: usize,
    pivots: usize,
    max_pivots: usize,
}

enum Phase {
    One,
    Two,
}

impl<F: Scalar> Tableau<F> {
    fn build(sf: &StandardForm<F>, max_pivots: usize) -> Self {
        let m = sf.rows.len();
        let n = sf.num_cols;
        let num_slacks = sf.relations.iter().filter(|r| **r != Relation::Eq).count();
        let num_art = sf.relations.iter().filter(|r| **r != Relation::Le).count();
        let first_artificial = n + num_slacks;
        let num_cols = first_artificial + num_art;

        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut unit = Vec::with_capacity(m);
        let mut w = vec![F::zero(); num_cols + 1];
        let mut next_slack = n;
        let mut next_art = first_artificial;
        for i in 0..m {
            let mut row = Vec::with_capacity(num_cols + 1);
            row.extend(sf.rows[i].iter().cloned());
            row.resize(num_cols + 1, F::zero());
            row[num_cols] = sf.rhs[i].clone();
            match sf.relations[i] {
                Relation::Le => {
                    row[next_slack] = F::one();
                    basis.push(next_slack);
                    unit.push(next_slack);
                    next_slack += 1;
                }
                rel => {
                    if rel == Relation::Ge {
                        row[next_slack] = F::one().neg();
                        next_slack += 1;
                    }
                    row[next_art] = F::one();
                    basis.push(next_art);
                    unit.push(next_art);
                    next_art += 1;
                    // w = sum of artificials, expressed in non-basic columns
                    for (wj, v) in w.iter_mut().zip(&row).take(first_artificial) {
                        if !v.is_zero() {
                            wj.sub_mul(&F::one(), v);
                        }
                    }
                    w[num_cols].sub_mul(&F::one(), &row[num_cols]);
                }
            }
            rows.push(row);
        }
        let mut z = vec![F::zero(); num_cols + 1];
        for (zj, c) in z.iter_mut().zip(&sf.cost) {
            *zj = c.clone();
        }
        Self { rows, z, w, basis, unit, first_artificial, num_cols, pivots: 0, max_pivots }
    }

    fn pivot(&mut self, r: usize, c: usize) -> Result<(), LpError> {
        if self.pivots >= self.max_pivots {
            return Err(LpError::IterationLimit { limit: self.max_pivots });
        }
        self.pivots += 1;
        let piv = self.rows[r][c].clone();
        let nonzero: Vec<usize> = (0..=self.num_cols).filter(|&j| !self.rows[r][j].is_zero()).collect();
        for &j in &nonzero {
            self.rows[r][j] = self.rows[r][j].div(&piv);
        }
        self.rows[r][c] = F::one();
        let prow: Vec<(usize, F)> = nonzero.iter().map(|&j| (j, self.rows[r][j].clone())).collect();
        let eliminate = |row: &mut Vec<F>| {
            let f = row[c].clone();
            if f.is_zero() {
                row[c] = F::zero();
                return;
            }
            for (j, v) in &prow {
                row[*j].sub_mul(&f, v);
            }
            row[c] = F::zero();
        };
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        eliminate(&mut self.z);
        eliminate(&mut self.w);
        self.basis[r] = c;
        Ok(())
    }

    /// Runs Bland's rule on the phase's cost row. Returns the entering
    /// column of an unbounded direction, if one is found.
    fn run(&mut self, phase: Phase) -> Result<Option<usize>, LpError> {
        loop {
            let costs = match phase {
                Phase::One => &self.w,
                Phase::Two => &self.z,
            };
            let Some(enter) = (0..self.first_artificial).find(|&j| costs[j].is_neg()) else {
                return Ok(None);
            };
            let rhs = self.num_cols;
            let mut leave: Option<(usize, F)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if !row[enter].is_pos() {
                    continue;
                }
                let ratio = row[rhs].div(&row[enter]);
                let better = match &leave {
                    None => true,
                    Some((best_i, best)) => {
                        ratio.less(best) || (!best.less(&ratio) && self.basis[i] < self.basis[*best_i])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, enter)?,
                None => return Ok(Some(enter)),
            }
        }
    }

    /// Pivots basic artificials out where possible after phase one.
    fn expel_artificials(&mut self) -> Result<(), LpError> {
        for r in 0..self.rows.len() {
            if self.basis[r] < self.first_artificial {
                continue;
            }
            if let Some(c) = (0..self.first_artificial).find(|&j| !self.rows[r][j].is_zero()) {
                self.pivot(r, c)?;
            }
            // otherwise the row is redundant and its artificial stays at zero
        }
        Ok(())
    }

    fn std_values(&self) -> Vec<F> {
        let mut x = vec![F::zero(); self.num_cols];
        for (i, &b) in self.basis.iter().enumerate() {
            x[b] = self.rows[i][self.num_cols].clone();
        }
        x
    }

    /// Row multipliers `c_B B^{-1}` read off the unit columns.
    fn duals(&self, phase: Phase) -> Vec<F> {
        self.unit
            .iter()
            .map(|&u| match phase {
                Phase::Two => self.z[u].neg(),
                Phase::One => {
                    let c = if u >= self.first_artificial { F::one() } else { F::zero() };
                    let mut y = c;
                    y.sub_mul(&F::one(), &self.w[u]);
                    y
                }
            })
            .collect()
    }
}

fn recover<F: Scalar>(maps: &[VarMap], std: &[F], constant: impl Fn(&Rational) -> F) -> Vec<F> {
    maps.iter()
        .map(|m| match m {
            VarMap::Shifted { col, lower } => {
                let mut v = std[*col].clone();
                v.add_assign(&constant(lower));
                v
            }
            VarMap::Flipped { col, upper } => {
                let mut v = constant(upper);
                v.sub_mul(&F::one(), &std[*col]);
                v
            }
            VarMap::Split { pos, neg } => {
                let mut v = std[*pos].clone();
                v.sub_mul(&F::one(), &std[*neg]);
                v
            }
        })
        .collect()
}

fn map_duals<F: Scalar>(origin: &[Option<(usize, bool)>], y_std: &[F], negate_all: bool) -> Vec<F> {
    origin
        .iter()
        .map(|o| match o {
            None => F::zero(),
            Some((row, negated)) => {
                let v = y_std[*row].clone();
                if *negated ^ negate_all {
                    v.neg()
                } else {
                    v
                }
            }
        })
        .collect()
}

enum Outcome<F> {
    Optimal { primal: Vec<F>, dual: Vec<F> },
    Infeasible { farkas: Vec<F> },
    Unbounded { primal: Vec<F>, ray: Vec<F> },
}

fn run_simplex<F: Scalar>(lp: &LinearProgram, options: SolverOptions) -> Result<(Outcome<F>, usize), LpError> {
    let sf = standardize::<F>(lp);
    let mut t = Tableau::build(&sf, options.max_pivots);
    let needs_phase_one = t.basis.iter().any(|&b| b >= t.first_artificial);
    if needs_phase_one {
        t.run(Phase::One)?;
        // phase-one optimum is -w[rhs]
        if t.w[t.num_cols].is_neg() {
            let y = t.duals(Phase::One);
            let farkas = map_duals(&sf.origin, &y, false);
            return Ok((Outcome::Infeasible { farkas }, t.pivots));
        }
        t.expel_artificials()?;
    }
    let maximize = lp.sense == Sense::Maximize;
    match t.run(Phase::Two)? {
        None => {
            let x = t.std_values();
            let primal = recover(&sf.var_maps, &x, F::from_rational);
            let y = t.duals(Phase::Two);
            let dual = map_duals(&sf.origin, &y, maximize);
            Ok((Outcome::Optimal { primal, dual }, t.pivots))
        }
        Some(enter) => {
            let x = t.std_values();
            let primal = recover(&sf.var_maps, &x, F::from_rational);
            let mut dir = vec![F::zero(); t.num_cols];
            dir[enter] = F::one();
            for (i, &b) in t.basis.iter().enumerate() {
                dir[b] = t.rows[i][enter].neg();
            }
            let ray = recover(&sf.var_maps, &dir, |_| F::zero());
            Ok((Outcome::Unbounded { primal, ray }, t.pivots))
        }
    }
}

pub(super) fn solve_exact(lp: &LinearProgram, options: SolverOptions) -> Result<LpSolution, LpError> {
    let (outcome, pivots) = run_simplex::<Rational>(lp, options)?;
    Ok(match outcome {
        Outcome::Optimal { primal, dual } => LpSolution {
            status: LpStatus::Optimal,
            objective: Some(lp.objective_value(&primal)),
            primal,
            dual,
            farkas: None,
            ray: None,
            pivots,
        },
        Outcome::Infeasible { farkas } => LpSolution {
            status: LpStatus::Infeasible,
            objective: None,
            primal: Vec::new(),
            dual: Vec::new(),
            farkas: Some(farkas),
            ray: None,
            pivots,
        },
        Outcome::Unbounded { primal, ray } => LpSolution {
            status: LpStatus::Unbounded,
            objective: None,
            primal,
            dual: Vec::new(),
            farkas: None,
            ray: Some(ray),
            pivots,
        },
    })
}

pub(super) fn solve_float(lp: &LinearProgram, options: SolverOptions) -> Result<FloatSolution, LpError> {
    let (outcome, pivots) = run_simplex::<f64>(lp, options)?;
    let objective = |x: &[f64]| -> f64 { lp.objective.iter().zip(x).map(|(c, v)| to_f64(c) * v).sum() };
    Ok(match outcome {
        Outcome::Optimal { primal, .. } => FloatSolution {
            status: LpStatus::Optimal,
            objective: Some(objective(&primal)),
            primal,
            pivots,
        },
        Outcome::Infeasible { .. } => FloatSolution { status: LpStatus::Infeasible, objective: None, primal: Vec::new(), pivots },
        Outcome::Unbounded { primal, .. } => FloatSolution { status: LpStatus::Unbounded, objective: None, primal, pivots },
    })
}
