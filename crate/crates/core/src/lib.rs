//! Transceiver optimization toolkit for K-hop amplify-and-forward MIMO relay
//! chains under covariance shaping constraints.
//!
//! The crate computes optimal linear and nonlinear (THP / DFE) transceivers —
//! per-hop inner precoders, rotations, lifted forwarding matrices, LMMSE
//! equalizer and triangular feedback — for six objective families (weighted
//! MSE, capacity, additively and multiplicatively Schur-convex/concave), and
//! evaluates them with a seeded Monte Carlo link simulator (BER, capacity,
//! MSE).
//!
//! Module map:
//! - [`linalg`]: ordered, phase-canonicalized EVD/SVD/Cholesky conventions.
//! - [`network`]: K-hop network descriptions, seeded channel ensembles, and
//!   shaping-matrix construction schemes.
//! - [`mse`]: MSE matrices, LMMSE equalizer, the inner-precoder change of
//!   variables and its inverse lifting, and the matrix-weighting recursion.
//! - [`objective`]: objective families, optimal rotations and feedback,
//!   full design assembly.
//! - [`shaping`]: closed-form per-hop precoders under pure shaping
//!   constraints.
//! - [`waterfill`]: cave (capped) water-filling and the multi-hop
//!   alternating power allocator for joint sum+peak constraints.
//! - [`sim`]: modulation, THP/DFE detection, and the Monte Carlo runners.
//!
//! All numeric code is generic over the real scalar type through the
//! [`Scalar`] trait; concrete `f64` aliases live at the crate root.

pub mod error;
pub mod linalg;
pub mod mse;
pub mod network;
pub mod objective;
pub mod rng;
pub mod shaping;
pub mod sim;
pub mod testkit;
pub mod waterfill;

use nalgebra::{Complex, DMatrix, DVector, RealField};
use num_traits::{Float, FromPrimitive};

pub use error::{Error, Result};

/// Real scalar the whole toolkit is generic over: `f32` or `f64`.
pub trait Scalar: RealField + Float + FromPrimitive + Default + std::fmt::LowerExp {
    /// Lossless-enough conversion from an `f64` literal (tolerances,
    /// constants). Panics only on values no float type can represent.
    fn from_f64_lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("literal representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Complex matrix over the generic real scalar.
pub type CMat<T> = DMatrix<Complex<T>>;
/// Complex column vector over the generic real scalar.
pub type CVec<T> = DVector<Complex<T>>;
/// Real column vector over the generic real scalar.
pub type RVec<T> = DVector<T>;

/// Default concrete complex matrix type.
pub type Mat = CMat<f64>;
/// Default concrete complex vector type.
pub type Vec64 = CVec<f64>;
/// Single-precision complex matrix type.
pub type Mat32 = CMat<f32>;

/// Default concrete network description.
pub type Network = network::NetworkSpec<f64>;
/// Default concrete transceiver design.
pub type DesignF64 = mse::Design<f64>;
