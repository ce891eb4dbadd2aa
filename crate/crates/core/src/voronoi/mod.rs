//! Bounded Voronoi geometry and density integrals for coverage control.

pub mod density;
pub mod geometry;
pub mod moments;
pub mod oracle;
pub mod quadrature;

pub use density::{DensityField, MovingGaussian};
pub use geometry::{delaunay_neighbors, tessellate, tessellate_with, Point, RectDomain, VoronoiCell};
pub use moments::{cell_moments, domain_mass, tessellation_moments, CellMoments};
pub use quadrature::QuadratureConfig;
