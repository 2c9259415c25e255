//! Stochastic particle simulation of the spatially homogeneous Kac/Boltzmann
//! collision process, with the probability metrics and estimators used to
//! study its mean-field limit and propagation of chaos.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`.

pub mod chaos;
pub mod error;
pub mod io;
pub mod kernels;
pub mod limit;
pub mod measures;
pub mod metrics;
pub mod particle;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use kernels::{AngularLaw, KernelSpec, Potential};
pub use particle::{apply_generator, simulate, total_rate, Selection, SimulationPlan, SystemState, Trajectory};
pub use scalar::Real;

pub type Kernel = KernelSpec<f64>;
pub type State = SystemState<f64>;
pub type Kernel32 = KernelSpec<f32>;
pub type State32 = SystemState<f32>;
