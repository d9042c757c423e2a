use std::sync::Arc;

use crate::behavior::entry_offsets;
use crate::scenario::{enumerate_global_assignments, GlobalAssignment, Scenario, ScenarioError};

/// Vertex description of the non-contextual polytope of a scenario.
///
/// Column `v` of the incidence matrix is the flattened deterministic
/// behavior of assignment `v`: it has a single one per context, at
/// [`NcPolytope::rows_of`]`(v)`.
#[derive(Debug, Clone)]
pub struct NcPolytope {
    scenario: Arc<Scenario>,
    vertices: Vec<GlobalAssignment>,
    rows: Vec<Vec<usize>>,
    context_of_entry: Vec<usize>,
    num_entries: usize,
}

impl NcPolytope {
    pub fn new(scenario: Arc<Scenario>, cap: u64) -> Result<Self, ScenarioError> {
        let offsets = entry_offsets(&scenario);
        let vertices: Vec<GlobalAssignment> = enumerate_global_assignments(&scenario, cap)?.collect();
        let rows = vertices
            .iter()
            .map(|g| (0..scenario.num_contexts()).map(|c| offsets[c] + g.restrict(&scenario, c)).collect())
            .collect();
        let mut context_of_entry = Vec::with_capacity(scenario.total_entries());
        for c in 0..scenario.num_contexts() {
            context_of_entry.extend(std::iter::repeat(c).take(scenario.table_len(c)));
        }
        Ok(Self {
            num_entries: scenario.total_entries(),
            scenario,
            vertices,
            rows,
            context_of_entry,
        })
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn vertices(&self) -> &[GlobalAssignment] {
        &self.vertices
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_entries(&self) -> usize {
        self.num_entries
    }

    pub fn num_contexts(&self) -> usize {
        self.scenario.num_contexts()
    }

    /// Flattened entries (one per context) where vertex `v` puts its mass.
    pub fn rows_of(&self, v: usize) -> &[usize] {
        &self.rows[v]
    }

    pub fn context_of_entry(&self, e: usize) -> usize {
        self.context_of_entry[e]
    }

    /// Entry-by-vertex incidence lists: for each entry, the vertices hitting it.
    pub fn vertices_by_entry(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_entries];
        for (v, rows) in self.rows.iter().enumerate() {
            for &e in rows {
                out[e].push(v);
            }
        }
        out
    }

    /// `q = Σ_v w_v · vertex_v` in flattened form.
    pub fn combine_f64(&self, weights: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.num_entries];
        for (v, w) in weights.iter().enumerate() {
            if *w != 0.0 {
                for &e in &self.rows[v] {
                    q[e] += w;
                }
            }
        }
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::catalog;

    #[test]
    fn chsh_incidence() {
        let p = NcPolytope::new(Arc::new(catalog::chsh()), 100).unwrap();
        assert_eq!(p.num_vertices(), 16);
        assert_eq!(p.num_entries(), 16);
        let by_entry = p.vertices_by_entry();
        // each (context, tuple) fixes two of four outcomes
        assert!(by_entry.iter().all(|vs| vs.len() == 4));
        assert_eq!(p.context_of_entry(5), 1);
    }

    #[test]
    fn respects_cap() {
        assert!(NcPolytope::new(Arc::new(catalog::chsh()), 15).is_err());
    }
}
