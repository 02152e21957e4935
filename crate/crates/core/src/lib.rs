//! Sequential W-state preparation of a trapped-ion string by a moving cavity.
//!
//! A single photon stored in a cavity mode is swept across a row of ions.
//! Each ion absorbs part of the excitation according to its transverse offset
//! from the mode axis, so choosing the offsets sets the amplitudes of the
//! resulting single-excitation state. The crate covers
//!
//! - [`model`]: mode profile, couplings and pulse areas,
//! - [`analytic`]: closed-form sequential evolution and overlap fidelity,
//! - [`solver`]: trap offsets that give an equal-amplitude W state,
//! - [`oracle`]: time-resolved integration with all ions coupled at once,
//! - [`fluctuation`]: worst-case and Monte-Carlo noise studies, timing budget.

pub mod analytic;
pub mod error;
pub mod fluctuation;
pub mod model;
pub mod oracle;
pub mod solver;

pub use analytic::{
    evolve_sequential, normalized_fidelity, perturbed_angles, perturbed_angles_with, step_one_ion, w_overlap_fidelity,
    NoiseOffsets, NoiseSpec, PulseSchedule, Sign, SignTriple, SingleExcitationState,
};
pub use error::{Error, Result};
pub use fluctuation::{
    fidelity_scan, monte_carlo_fidelity, timing_budget, timing_budget_with_rates, worst_case_fidelity, CoherenceBudget,
    MonteCarloConfig, MonteCarloSummary, OffsetDistribution, ScanAxis, ScanReport, WorstCase,
};
pub use model::{
    coupling_strength, effective_duration, mode_profile, pulse_angle, CavityMode, IonArray, IonSite, SweepKinematics,
};
pub use oracle::{
    full_space_check, propagate, propagate_traced, sequential_approximation_error, GridOptions, IntegrationGrid,
    OracleRun, TransitHamiltonian,
};
pub use solver::{invert_coupling, required_angles, solve_positions, DesignProblem, DesignSolution};
