//! Numerical laboratory for the traveling waves of the derivative nonlinear Schrödinger
//! equation `i u_t + u_xx + (i/2)|u|²u_x − (i/2)u²ū_x + (3/16)|u|⁴u = 0`.

pub mod error;
pub mod evolve;
pub mod functionals;
pub mod gauge;
pub mod lab;
pub mod modulation;
pub mod monotone;
pub mod numerics;
pub mod spectral;
pub mod waves;

#[cfg(test)]
mod properties;

pub use error::{Error, Result};
pub use numerics::{Field, GridSpec, NormKind, C64};
pub use modulation::{ModulationState, ModulationTrack, PairParams};
pub use spectral::{LinOp, SpectralReport};
pub use waves::{Regime, WaveParams};
