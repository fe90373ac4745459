//! Driven Tavis-Cummings master equation: operators, right-hand side, time
//! integration and steady state.

pub mod evolve;
pub mod hilbert;
pub mod integrator;
pub mod master;
pub mod steady;

pub use evolve::{propagate, CouplingSource, Evolution, EvolveOptions, Schedules, StaticCoupling};
pub use hilbert::{build_operators, DensityMatrix, HilbertSpec, Operators};
pub use master::{hamiltonian, lindblad_rhs, Coefficients, DriveParams, MasterKernel, Rates};
pub use steady::{empty_cavity_steady_state, steady_state, SteadyState};
