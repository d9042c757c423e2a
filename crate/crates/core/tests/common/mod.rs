//! Reference implementations used to cross-check the library.
//!
//! Everything here is written against the public table layout only
//! (contexts in order, first measurement most significant) and shares no
//! code with the solvers under test.

#![allow(dead_code)]

use std::sync::Arc;

use ctxkit::rational::Rational;
use ctxkit::{Behavior, Scenario};

/// Flattened entry indices hit by every global assignment, one per context.
pub struct Vertices {
    pub rows: Vec<Vec<usize>>,
    pub contexts: Vec<std::ops::Range<usize>>,
}

pub fn vertices(s: &Scenario) -> Vertices {
    let k = s.num_outcomes();
    let m = s.num_measurements();
    let mut contexts = Vec::new();
    let mut offset = 0;
    for c in s.contexts() {
        let len = k.pow(c.len() as u32);
        contexts.push(offset..offset + len);
        offset += len;
    }
    let total = k.pow(m as u32);
    let mut rows = Vec::with_capacity(total);
    for code in 0..total {
        // measurement 0 is the most significant digit of `code`
        let g: Vec<usize> = (0..m).map(|i| (code / k.pow((m - 1 - i) as u32)) % k).collect();
        let row = s
            .contexts()
            .iter()
            .zip(&contexts)
            .map(|(c, r)| r.start + c.iter().fold(0, |acc, &mi| acc * k + g[mi]))
            .collect();
        rows.push(row);
    }
    Vertices { rows, contexts }
}

fn mixture(v: &Vertices, w: &[f64], n: usize) -> Vec<f64> {
    let mut q = vec![0.0; n];
    for (row, &wi) in v.rows.iter().zip(w) {
        for &e in row {
            q[e] += wi;
        }
    }
    q
}

/// Per-context relative entropies in bits; `None` when some `q` vanishes under `p > 0`.
fn context_kl(p: &[f64], q: &[f64], v: &Vertices) -> Option<Vec<f64>> {
    let mut out = Vec::with_capacity(v.contexts.len());
    for r in &v.contexts {
        let mut total = 0.0;
        for e in r.clone() {
            if p[e] > 0.0 {
                if q[e] <= 0.0 {
                    return None;
                }
                total += p[e] * (p[e] / q[e]).log2();
            }
        }
        out.push(total);
    }
    Some(out)
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumulative += uj;
        let t = (cumulative - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Smooth objective over vertex weights: value and gradient, or `None` outside the domain.
trait Objective {
    fn eval(&self, w: &[f64]) -> Option<(f64, Vec<f64>)>;
}

struct Uniform<'a> {
    p: &'a [f64],
    v: &'a Vertices,
}

impl Objective for Uniform<'_> {
    fn eval(&self, w: &[f64]) -> Option<(f64, Vec<f64>)> {
        let q = mixture(self.v, w, self.p.len());
        let ks = context_kl(self.p, &q, self.v)?;
        let n = ks.len() as f64;
        let value = ks.iter().sum::<f64>() / n;
        let grad = self
            .v
            .rows
            .iter()
            .map(|row| -row.iter().map(|&e| if self.p[e] > 0.0 { self.p[e] / q[e] } else { 0.0 }).sum::<f64>() / (n * std::f64::consts::LN_2))
            .collect();
        Some((value, grad))
    }
}

struct SoftMax<'a> {
    p: &'a [f64],
    v: &'a Vertices,
    tau: f64,
}

impl Objective for SoftMax<'_> {
    fn eval(&self, w: &[f64]) -> Option<(f64, Vec<f64>)> {
        let q = mixture(self.v, w, self.p.len());
        let ks = context_kl(self.p, &q, self.v)?;
        let top = ks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = ks.iter().map(|k| ((k - top) / self.tau).exp()).collect();
        let z: f64 = weights.iter().sum();
        let value = top + self.tau * z.ln();
        let mut entry_weight = vec![0.0; self.p.len()];
        for (c, r) in self.v.contexts.iter().enumerate() {
            for e in r.clone() {
                if self.p[e] > 0.0 {
                    entry_weight[e] = weights[c] / z * self.p[e] / q[e];
                }
            }
        }
        let grad = self
            .v
            .rows
            .iter()
            .map(|row| -row.iter().map(|&e| entry_weight[e]).sum::<f64>() / std::f64::consts::LN_2)
            .collect();
        Some((value, grad))
    }
}

/// Accelerated projected gradient with backtracking and adaptive restart.
fn minimize(f: &dyn Objective, start: Vec<f64>, max_iter: usize, tol: f64) -> Vec<f64> {
    let mut x = start;
    let mut y = x.clone();
    let mut t: f64 = 1.0;
    let mut step = 1.0;
    let (mut fx, _) = f.eval(&x).expect("feasible start");
    for _ in 0..max_iter {
        let Some((fy, gy)) = f.eval(&y) else {
            y = x.clone();
            t = 1.0;
            continue;
        };
        let mut next;
        loop {
            next = project_simplex(&y.iter().zip(&gy).map(|(a, g)| a - step * g).collect::<Vec<_>>());
            let d: Vec<f64> = next.iter().zip(&y).map(|(a, b)| a - b).collect();
            let model = fy + d.iter().zip(&gy).map(|(a, g)| a * g).sum::<f64>() + d.iter().map(|a| a * a).sum::<f64>() / (2.0 * step);
            match f.eval(&next) {
                Some((fn_, _)) if fn_ <= model + 1e-15 => break,
                _ => step *= 0.5,
            }
            if step < 1e-20 {
                break;
            }
        }
        let Some((fnext, gnext)) = f.eval(&next) else { break };
        // duality gap of the linearization over the simplex
        let low = gnext.iter().cloned().fold(f64::INFINITY, f64::min);
        let gap = next.iter().zip(&gnext).map(|(a, g)| a * g).sum::<f64>() - low;
        if fnext > fx {
            // restart momentum
            y = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = next.iter().zip(&x).map(|(a, b)| a + (t - 1.0) / t_next * (a - b)).collect();
        x = next;
        fx = fnext;
        t = t_next;
        step *= 1.5;
        if gap < tol {
            break;
        }
    }
    x
}

pub struct OracleValue {
    pub value: f64,
    pub weights: Vec<f64>,
}

/// `E_u` in bits by projected gradient over the vertex weights.
pub fn oracle_eu(b: &Behavior) -> OracleValue {
    let v = vertices(b.scenario());
    let p = b.flat_f64();
    let start = vec![1.0 / v.rows.len() as f64; v.rows.len()];
    let w = minimize(&Uniform { p: &p, v: &v }, start, 1_000_000, 1e-8);
    let value = Uniform { p: &p, v: &v }.eval(&w).unwrap().0;
    OracleValue { value, weights: w }
}

/// `E_max` in bits: smoothed max with continuation, reported as the true max at the final point.
pub fn oracle_emax(b: &Behavior) -> OracleValue {
    let v = vertices(b.scenario());
    let p = b.flat_f64();
    let mut w = vec![1.0 / v.rows.len() as f64; v.rows.len()];
    for tau in [1e-1, 1e-2, 1e-3, 1e-4, 1e-5] {
        w = minimize(&SoftMax { p: &p, v: &v, tau }, w, 200_000, tau * 1e-3);
    }
    let q = mixture(&v, &w, p.len());
    let value = context_kl(&p, &q, &v).unwrap().into_iter().fold(0.0, f64::max);
    OracleValue { value, weights: w }
}

/// Exact global section of a chain-like behavior `{x,y},{y,z}`: `p(x,y)·p(z|y)`.
pub fn chain_global_section(b: &Behavior) -> Option<Behavior> {
    use num_traits::Zero;
    let s = b.scenario_arc().clone();
    if s.num_contexts() != 2 || s.num_outcomes() != 2 {
        return None;
    }
    let (xy, yz) = (b.table(0), b.table(1));
    let mut parts = Vec::new();
    let mut weights = Vec::new();
    for x in 0..2 {
        for y in 0..2 {
            for z in 0..2 {
                let py: Rational = yz[y * 2] .clone() + yz[y * 2 + 1].clone();
                if py.is_zero() {
                    continue;
                }
                let w = xy[x * 2 + y].clone() * yz[y * 2 + z].clone() / py;
                if w.is_zero() {
                    continue;
                }
                let g = ctxkit::GlobalAssignment::new(vec![x, y, z]);
                parts.push(ctxkit::assignment_to_behavior(&g, s.clone()).ok()?);
                weights.push(w);
            }
        }
    }
    ctxkit::mix_behaviors(&weights, &parts).ok()
}

pub fn chain() -> Arc<Scenario> {
    Arc::new(ctxkit::scenario::catalog::chain())
}

pub fn chsh() -> Arc<Scenario> {
    Arc::new(ctxkit::scenario::catalog::chsh())
}

/// Largest CHSH expression value over the eight relabelings.
pub fn chsh_value(b: &Behavior) -> f64 {
    let t = b.tables();
    let corr = |c: usize| -> f64 {
        let x: Vec<f64> = t[c].iter().map(ctxkit::rational::to_f64).collect();
        x[0] - x[1] - x[2] + x[3]
    };
    let e = [corr(0), corr(1), corr(2), corr(3)];
    let mut best = f64::NEG_INFINITY;
    for odd in 0..4 {
        for sign in [1.0, -1.0] {
            let s: f64 = (0..4).map(|c| if c == odd { -e[c] } else { e[c] }).sum();
            best = best.max(sign * s);
        }
    }
    best
}
