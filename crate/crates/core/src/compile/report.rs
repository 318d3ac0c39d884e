use serde::{Deserialize, Serialize};

/// Bookkeeping for one synthesized table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CptReport {
    pub node: String,
    pub method: String,
    /// Parent state tuples.
    pub rows: usize,
    /// Table entries, rows × child states.
    pub cells: usize,
    /// Reliability solves (one per series-system evaluation).
    pub solver_calls: usize,
    /// Pinned evaluations behind those solves; exceeds `solver_calls` when
    /// cells are averaged over several points.
    #[serde(default)]
    pub point_solves: usize,
    /// Cells whose FORM search failed and were estimated by simulation.
    #[serde(default)]
    pub nonconverged: Vec<String>,
    /// Largest negative mass clamped to zero.
    #[serde(default)]
    pub max_clamp: f64,
    #[serde(default)]
    pub quadrature_refinements: usize,
    /// Reused from an identical earlier build.
    #[serde(default)]
    pub cached: bool,
}

impl CptReport {
    pub fn new(node: &str, method: &str, rows: usize, child_card: usize) -> Self {
        Self {
            node: node.to_string(),
            method: method.to_string(),
            rows,
            cells: rows * child_card,
            solver_calls: 0,
            point_solves: 0,
            nonconverged: Vec::new(),
            max_clamp: 0.0,
            quadrature_refinements: 0,
            cached: false,
        }
    }
}

/// Summary of a whole compilation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompilationReport {
    pub cpts: Vec<CptReport>,
    pub solver_calls: usize,
    #[serde(default)]
    pub point_solves: usize,
    pub nonconverged: Vec<String>,
    /// Left out of persisted networks so that recompiling is byte-stable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
}

impl CompilationReport {
    pub fn push(&mut self, r: CptReport) {
        if !r.cached {
            self.solver_calls += r.solver_calls;
            self.point_solves += r.point_solves;
        }
        self.nonconverged.extend(r.nonconverged.iter().map(|c| format!("{}: {c}", r.node)));
        self.cpts.push(r);
    }

    pub fn get(&self, node: &str) -> Option<&CptReport> {
        self.cpts.iter().find(|r| r.node == node)
    }
}
