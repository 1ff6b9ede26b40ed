//! Spatial tessellation: geohash grids and K-Means-seeded Voronoi cells.

pub mod delaunay;
pub mod geohash;
pub mod kmeans;
pub mod point;
pub mod tessellation;

pub use delaunay::voronoi_adjacency;
pub use geohash::{BBox, GeohashCell};
pub use kmeans::{assign_nearest, kmeans_cluster, KMeansResult};
pub use point::{GeoPoint, ProjectedPoint, Projection};
pub use tessellation::{GeohashGrid, Scheme, Tessellation};
