//! Few-shot prototypical classification with per-episode discriminant
//! projections.
//!
//! An episode carries a labeled support set and a query set. A feature
//! projection is computed from the support set alone (identity, Fisher
//! discriminant, or local Fisher discriminant), class prototypes are the
//! means of the projected support vectors, and queries are labeled by
//! squared Euclidean distance to the nearest prototype.
//!
//! The [`theory`] module computes a Chebyshev-style upper bound on the
//! expected 0-1 risk of this classifier under Gaussian class-conditional
//! embeddings and verifies it by Monte Carlo, together with the moment
//! identities the bound rests on.
//!
//! The numeric core ([`linalg`], [`scatter`], [`projection`], [`episode`])
//! is generic over the scalar type through the [`Real`] trait; the
//! stochastic layers ([`datagen`], [`theory`], [`trainer`]) work in `f64`.

pub mod datagen;
pub mod episode;
mod error;
pub mod linalg;
pub mod projection;
pub mod scatter;
pub mod theory;
pub mod trainer;

pub mod cli;

pub use error::{Error, Result};

use num_traits::{Float, FromPrimitive, NumAssign};

/// Scalar type the numeric core is generic over.
///
/// Implemented for `f32` and `f64` via the blanket impl.
pub trait Real:
    Float + NumAssign + FromPrimitive + std::iter::Sum + std::fmt::Debug + std::fmt::Display + 'static
{
    /// Lossy conversion from an `f64` literal (tolerances, weights).
    fn real(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }
}

impl<T> Real for T where
    T: Float
        + NumAssign
        + FromPrimitive
        + std::iter::Sum
        + std::fmt::Debug
        + std::fmt::Display
        + 'static
{
}

/// `f64` concrete aliases for the generic core types.
pub type Matrix64 = linalg::Matrix<f64>;
pub type LabeledSet64 = scatter::LabeledSet<f64>;
pub type Projection64 = projection::Projection<f64>;
pub type Task64 = episode::Task<f64>;
