//! Non-Hermitian lattice dynamics on a dense statevector simulator.
//!
//! Non-unitary Trotter steps are embedded into unitaries with one ancilla per
//! block and recovered by post-selecting the ancilla on ↑. On top of that sit
//! the skin-effect observables, the free-fermion overlap formalism, a
//! variational recompiler and readout-error mitigation.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below are what most callers want.

pub mod dilation;
pub mod error;
pub mod evolution;
pub mod fermiskin;
pub mod models;
pub mod noise;
pub mod observables;
pub mod scalar;
pub mod statevector;
pub mod vqa;

pub use error::{Error, Result};
pub use scalar::{CMatrix, Real, C};

pub use dilation::DilatedUnitary;
pub use evolution::EvolutionTrace;
pub use models::{ModelKind, ModelSpec, Scheme, TrotterPlan};
pub use observables::DensityProfile;
pub use statevector::{Bitstring, ShotTable, StateVector};

pub type C64 = C<f64>;
pub type C32 = C<f32>;
pub type CMatrix64 = CMatrix<f64>;
pub type State64 = StateVector<f64>;
pub type State32 = StateVector<f32>;
pub type Dilated64 = DilatedUnitary<f64>;
pub type Plan64 = TrotterPlan<f64>;
pub type Trace64 = EvolutionTrace<f64>;
pub type Spec64 = ModelSpec<f64>;
