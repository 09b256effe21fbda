//! Timoshenko beam with infinite memory: relaxation kernels and their admissibility,
//! the decay envelope, a finite-difference simulator with an exact discrete energy
//! balance, and the diagnostics that compare simulated decay with the envelope.
//!
//! Everything numerical is generic over [`num::Real`] (`f32` or `f64`); the aliases
//! below fix `f64`.

pub mod config;
pub mod diagnostics;
pub mod envelope;
pub mod kernel;
pub mod num;
pub mod quad;
pub mod simulate;
pub mod spatial;

pub type Kernel = kernel::KernelSpec<f64>;
pub type Beam = kernel::BeamParams<f64>;
pub type Prony = kernel::PronySpec<f64>;
pub type Envelope = envelope::EnvelopeModel<f64>;
pub type Grid = spatial::Grid<f64>;
pub type Fields = spatial::FieldPair<f64>;
pub type Config = simulate::SimConfig<f64>;
pub type Simulation = simulate::Simulation<f64>;
pub type Series = simulate::Series<f64>;
pub type Energy = diagnostics::EnergyBreakdown<f64>;
