//! Finite-volume tools for quasi-periodic operators driven by the skew shift
//! `T(x₁, x₂) = (x₁ + x₂, x₂ + ω)` on the two-torus.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! `*64` / `*32` aliases below fix the scalar for the common cases.

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod green;
pub mod linalg;
pub mod multiscale;
pub mod operator;
pub mod patching;
pub mod rotor;
pub mod sampling;
pub mod scalar;

pub use dynamics::{Frequency, FrequencyClass, Guard, Orbit, TorusPoint};
pub use error::{Error, Result};
pub use operator::{HoppingKernel, KernelProfile, LatticeOperator, Window};
pub use sampling::Sampler;
pub use scalar::{Real, C};

pub type TorusPoint64 = TorusPoint<f64>;
pub type TorusPoint32 = TorusPoint<f32>;
pub type Frequency64 = Frequency<f64>;
pub type Frequency32 = Frequency<f32>;
pub type Guard64 = Guard<f64>;
pub type HoppingKernel64 = HoppingKernel<f64>;
pub type HoppingKernel32 = HoppingKernel<f32>;
pub type LatticeOperator64 = LatticeOperator<f64>;
pub type LatticeOperator32 = LatticeOperator<f32>;
pub type Mat64 = linalg::Mat<f64>;
pub type Mat32 = linalg::Mat<f32>;
pub type Factorization64 = green::Factorization<f64>;
pub type GreenMatrix64 = green::GreenMatrix<f64>;
pub type ScaleSchedule64 = multiscale::ScaleSchedule<f64>;
pub type EigenPair64 = diagnostics::EigenPair<f64>;
pub type RotorState64 = rotor::RotorState<f64>;
pub type RotorParams64 = rotor::RotorParams<f64>;
