//! Lapse-parabolic foliations: leaf geometry, the graph flow, reconstruction of the
//! phase, and residuals of the structure equations.

mod calculus;
mod io;
mod leaf;
mod march;
mod structure;

pub use calculus::{calculus_checks, CalculusReport};
pub use io::{read_leaves, structure_csv, write_leaves};
pub use leaf::{brioschi, lapse, leaf_geometry, point_geometry, BaseGrid, Direction, Frame, Leaf, NodeGeometry, PointGeometry};
pub use march::{
    advance, cutoff, eikonal_residual, march, FoliationTrace, GluedSample, LeafLookup, LeafTriple, MarchParams,
    StoredLeaf, U_END, U_START,
};
pub use structure::{
    leaf_identities, structure_residuals, GaussianProbe, LeafIdentities, Residual, ScalarProbe, StructureReport,
};
