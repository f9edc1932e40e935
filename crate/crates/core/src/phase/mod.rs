//! The ω-family of phases: sampling, ω-derivatives, charts, Taylor comparison and the
//! plane-wave parametrix.

mod atlas;
mod charts;
mod identities;
mod omega;
mod parametrix;
mod taylor;

pub use atlas::{build_atlas, build_atlases, DirectionSamples, OmegaDerivs, PhaseAtlas, SampleSet};
pub use charts::{
    chart_phi, chart_phi_u, count_collisions, leaf_jacobian, leaf_points, ChartReport, GlobalChartReport, DET_FLOOR,
    IMAGE_BINS,
};
pub use identities::{antipodal_defect, omega_identity_residuals, OmegaIdentityReport};
pub use omega::{d1, d12, d2, d3, sphere_derivs, tangent_vector, Field, OmegaGrid, SphereDerivs};
pub use parametrix::{
    evaluate_parametrix, evaluate_parametrix_checked, gaussian_oracle, ConjugateSymbol, FlatPhase, GaussianSymbol,
    MarchedPhase, NegatedPhase, ParametrixResult, PhaseProvider, QuadratureNodes, SumSymbol, Symbol,
};
pub use taylor::{taylor_compare, taylor_patch, TaylorReport, TAYLOR_ROWS, TAYLOR_SEPARATIONS};
