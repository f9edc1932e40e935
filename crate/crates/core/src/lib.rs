//! Numerical toolkit for lapse-parabolic foliations of a perturbed Euclidean 3-space.
//!
//! The crate builds the level sets of an optical-type phase `u(x, ω)` on a Riemannian
//! background `(g, k)`, glues them to the flat phase `x·ω` outside a compact core, and
//! checks the geometric identities satisfied by the resulting foliation. It also ships a
//! heat-flow Littlewood–Paley calculus on discrete surfaces, an ω-atlas with global
//! chart diagnostics, and a plane-wave parametrix evaluator.
//!
//! Modules, bottom-up:
//! - [`background`]: metric families, Christoffel symbols, curvature, constraint residuals.
//! - [`foliation`]: leaf geometry, the graph flow, reconstruction and structure residuals.
//! - [`lpcalc`]: Laplace–Beltrami heat flow, LP projections, fractional powers, identities.
//! - [`phase`]: ω-atlas, ω-derivatives, charts, Taylor comparison, parametrix.
//! - [`harness`]: configuration, scenarios, convergence studies and CSV reports.

pub mod background;
pub mod error;
pub mod fit;
pub mod foliation;
pub mod gridfile;
pub mod harness;
pub mod interp;
pub mod lpcalc;
pub mod phase;

pub use error::{Error, Result};
