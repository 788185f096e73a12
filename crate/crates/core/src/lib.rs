//! Constructive trigonometric approximation of the classes `C^psi_{beta,p}` and
//! `L^psi_{beta,1}` of infinitely differentiable periodic functions.
//!
//! The crate is organised bottom-up:
//!
//! * [`psi`] describes the generator `psi(t)` and its characteristics
//!   `eta(t) = psi^{-1}(psi(t)/2)` and `mu(t) = t / (eta(t) - t)`.
//! * [`kernels`] evaluates the Dirichlet-type kernels `D_{k,beta}` and the
//!   residual kernel `Psi*_{beta,n}` of the tapered method.
//! * [`series`], [`norms`] and [`method`] implement finite Fourier series, the
//!   uniform and integral norms, and the tapered multiplier `V_{n,psi}`.
//! * [`bounds`] holds the explicit constants and the verification harness that
//!   produces [`bounds::BoundReport`]s.

pub mod bounds;
pub mod error;
pub mod kernels;
pub mod method;
pub mod norms;
pub mod psi;
pub mod series;
mod sum;

pub use error::{Error, Result};
pub use norms::Exponent;
pub use psi::PsiFunction;
pub use series::FourierSeries;
