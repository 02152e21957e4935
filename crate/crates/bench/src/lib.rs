//! Benchmark fixtures shared by the criterion targets.

use cavitybus_core::{
    model::REF_PITCH, solve_positions, DesignProblem, GridOptions, IntegrationGrid, TransitHamiltonian,
};

/// Hamiltonian and grid for the reference design of `n_ions` ions.
pub fn reference_sweep(n_ions: usize) -> (TransitHamiltonian, IntegrationGrid) {
    let problem = DesignProblem::reference(n_ions);
    let design = solve_positions(&problem).expect("reference design is feasible");
    let layout = design.layout(REF_PITCH, 0.0).expect("reference layout is valid");
    let ham = TransitHamiltonian::new(problem.mode, layout, problem.velocity).expect("valid hamiltonian");
    let grid = IntegrationGrid::for_sweep(&ham, GridOptions::default()).expect("valid grid");
    (ham, grid)
}
