//! Reduction of hybrid models to discrete networks: interval schemes,
//! discretized marginals and CPT synthesis.

mod cpt;
mod marginal;
mod report;
mod scheme;

pub use cpt::{
    capacity_pmf, cdf_to_pmf, cell_masses, cpt_by_quadrature, cpt_capacity_cdf, cpt_from_srm, cpt_measurement, grid_map,
    uniform_cell, uniform_exceedance, CellRule, CellSolver, CompileOptions, GridParent, QuadParent, MONOTONICITY_TOLERANCE,
};
pub use marginal::{cell_nodes, cell_representatives, discretize_marginal, representative_values, CellLaw, UNCOVERED_TOLERANCE};
pub use report::{CompilationReport, CptReport};
pub use scheme::IntervalScheme;
