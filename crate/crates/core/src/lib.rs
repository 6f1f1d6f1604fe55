//! Analytic approximation of two-dimensional fractional Brownian motion with
//! Hurst index α ∈ (0, 1/4), its Lévy area, hypergeometric closed forms for the
//! master integrals, Wick moment calculus, and the Monte Carlo / quadrature
//! harness that checks the moment asymptotics and the central limit theorem.
//!
//! Modules, bottom up:
//!
//! - [`special_functions`]: principal powers, gamma, Gauss ₂F₁ on the cut plane.
//! - [`kernels`]: the covariance kernels K′, K, K* and the series basis f_k.
//! - [`closed_form`]: the integrals I±, the Φ block, C_n and the iterated F_n.
//! - [`quadrature`]: Gauss rules, adaptive 1-D integration, Nyström traces.
//! - [`diagrams`]: pairings, diagram cycles, cumulants and moments.
//! - [`simulate`]: sampling B(η) on grids, Lévy areas, ensemble cache.
//! - [`analysis`]: C_irr, scaling fits, KS / independence / exponential-moment tests.

pub mod analysis;
pub mod closed_form;
pub mod diagrams;
pub mod error;
pub mod kernels;
pub mod quadrature;
pub mod simulate;
pub mod special_functions;

pub use error::{Error, Result};
pub use special_functions::ComplexValue;
