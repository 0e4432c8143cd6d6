//! Plane-stress linear elasticity on structured quadrilateral grids with SIMP
//! material interpolation, plus the cost functionals used by the optimizer and
//! their design derivatives.

mod element;
mod filter;
mod grid;
mod model;
mod sparse;

pub use element::{element_mass, element_stiffness, MaterialModel};
pub use filter::DensityFilter;
pub use grid::{Edge, StructuredGrid};
pub use model::{
    volume, volume_sensitivity, BoundaryConditions, DensityField, ElasticState, FemModel, LoadPatch,
};
pub use sparse::{pcg, CsrMatrix, SolveReport, SolverOptions};
