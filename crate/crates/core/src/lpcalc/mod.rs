//! Heat-flow Littlewood–Paley calculus on periodic 2D surfaces.
//!
//! [`HeatFrame`] pairs a [`Surface2D`] with its Laplace–Beltrami operator and a
//! heat-semigroup backend chosen by name. Projections, fractional powers and
//! norms in [`lp`] only touch the semigroup, so both backends serve them.

mod heat;
mod identities;
mod lp;
mod surface;

pub use heat::{HeatBackend, HeatCtor, HeatFrame, HeatRegistry, LaplaceOperator, SpectralBackend, StepperBackend, N_DENSE};
pub use identities::{
    bochner_residual, hessian, hodge_potential, hodge_residual, inequality_ratios, vector_bochner_flat, InequalityReport,
};
pub use lp::{
    band_constant_star, bessel_symbol_max, besov_norm, heat_energy_defect, lambda_alpha, lp_low, lp_project,
    lp_property_battery, partition_residual, sobolev_norm, symbol, BatteryReport, BatteryRow, BesovValue, LambdaMethod,
    LpSettings,
};
pub use surface::{
    spectral_matrix, Differentiator, DifferentiatorCtor, DifferentiatorRegistry, Fd2, PeriodicGrid, Spectral, Surface2D,
};
