//! Box meshes, discontinuous polynomial spaces and the upwind spatial
//! operator for flowing spins.

mod mesh;
mod operator;
mod space;
mod velocity;

pub use mesh::{BoundaryFace, BoxMesh, InteriorFace, MeshConfig, RegionBox, RegionMap, TissueEntry};
pub use operator::{
    average_jump, inflow_boundary_form, penalty_form, spatial_operator, upwind_form, DgOperator, EnergyTerms, Terms,
};
pub use space::{legendre_orthonormal, spoil_transverse, DgSpace, DgState, FaceTable};
pub use velocity::{
    check_divergence, max_divergence, BoundaryData, PeriodicAxialVelocity, UniformVelocity, VelocityField,
};
