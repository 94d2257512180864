//! Forward solver, probe design, pointwise inversion and stability harness for
//! a coupled two-state Schrödinger system in a waveguide ω × ℝ.

pub mod carleman;
pub mod coefficients;
pub mod error;
pub mod grid;
pub mod inversion;
pub mod io;
pub mod pipeline;
pub mod probes;
pub mod solver;
pub mod stability;

pub use carleman::{check_pseudoconvexity, check_weights, quadratic_alpha, weighted_norm, AssumptionReport, LogNorm, WeightBundle, WeightedField};
pub use coefficients::{
    make_perturbation, theta_norm, validate_admissible, AdmissibleClassParams, CoefficientSet, PerturbationFamily,
    PerturbationSupport, Region,
};
pub use error::{Error, ErrorClass, Result};
pub use grid::{select_observation_boundary, CrossSection, SubBoundary, WaveguideGrid};
pub use inversion::{
    exact_initial_v, reconstruct_least_squares, reconstruct_pointwise, simulated_initial_v, LinearizedInitialData,
    ReconstructionMasks, ReconstructionResult,
};
pub use probes::{axial_profile, compatibility_residual, make_probe_set, CutoffSpec, ProbeMode, ProbeSet};
pub use solver::{
    assemble_hamiltonian, solve_forward, BoundaryData, NeumannTrace, Parity, SolverOptions, Trajectory, TwoStateField,
};
pub use stability::{decay_budget, run_stability_experiment, se_sides, StabilityReport, StabilitySetup};
