//! Momentum-space renormalization of the attractive inverse-square potential:
//! running counterterm, bound-state towers, scattering and threshold solutions.

// Validation uses `!(x > y)` on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bound_states;
pub mod discretization;
pub mod error;
mod fit;
pub mod potential;
pub mod quadrature;
pub mod rg;
pub mod scattering;
pub mod zero_energy;

pub use bound_states::{
    eigenvalue_at, find_spectrum, fit_tower, BoundState, BoundStateSolver, Counterterm, Spectrum,
    TowerFit,
};
pub use discretization::{
    assemble_kernel, build_mesh, KernelAssembler, KernelMatrix, KernelRule, MeshSpec, MomentumMesh,
};
pub use error::{Error, Result};
pub use potential::{counterterm_value, potential_momentum, swave_kernel_f, PotentialParams};
pub use rg::{
    beta_extremum, beta_function, calibrate_h_from_bound_state, coupling_h,
    preferred_scaling_factor, vanishing_cutoffs, BetaFunctionPoint, CountertermSchedule, Coupling,
};
pub use scattering::{
    fit_phase_law, phase_from_amplitude, solve_onshell, total_cross_section, PhaseLawFit,
    PhasePoint,
};
pub use zero_energy::{critical_exponents, threshold_solution, ThresholdSolution};
