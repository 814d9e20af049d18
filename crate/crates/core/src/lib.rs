//! Simulation and analysis of port-Hamiltonian systems with two external
//! ports.
//!
//! The crate covers pointwise evaluation of `ẋ = J(x)e − R(x,e) + G(x)u`,
//! fixed-step integration with an energy ledger, the partial Legendre
//! transform of the Hamiltonian, constrained ("adiabatic" / "isothermal")
//! port inputs, generalized Carnot cycles, storage-function audits and the
//! feedback couplings used for energy conversion (energy router, IDA-PBC).

pub mod carnot;
pub mod constraints;
pub mod coupling;
pub mod error;
pub mod export;
pub mod integrator;
pub mod legendre;
pub mod models;
pub mod numeric;
pub mod storage;
pub mod system;
pub mod two_port;

pub use error::{PhsError, Result};
pub use integrator::{
    energy_balance, simulate, simulate_from, supplied_energy, EnergyLedger, InputLaw, PortSelector,
    Trajectory,
};
pub use system::{Label, Labels, Matrix, PhsSystem, StructureReport, Vector};
pub use two_port::{embed_two_port, TwoPortPhs};
