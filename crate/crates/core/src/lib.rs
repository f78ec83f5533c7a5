//! Batch analytics for neighborhood exposure density.
//!
//! The pipeline turns raw mobility pings and land-use geometry into an
//! hourly activity cube, reduces the cube to per-zone change vectors
//! between a pre-impact and an impact window, clusters zones by their
//! behavioral response, and fits regression models linking exposure
//! change to infection outcomes.
//!
//! Stages communicate through plain files (CSV, GeoJSON, and a small
//! binary raster format) so every intermediate artifact is inspectable
//! and each stage can be re-run in isolation. All stages are
//! deterministic for a fixed input, configuration, and seed,
//! independent of worker-thread count.

pub mod change;
pub mod cluster;
pub mod cube;
pub mod geojson;
pub mod geom;
pub mod grid;
pub mod ingest;
pub mod raster;
pub mod report;
pub mod stats;
pub mod synth;

pub use change::{ChangeVector, ExposureChange, Window};
pub use cluster::{ClusterAssignment, Dendrogram, FeatureMatrix};
pub use cube::{ActivityCube, ZoneActivity, ZoneMap};
pub use grid::{ClassTable, GridSpec, LandUseClass};
pub use ingest::{BoundingBox, Ping, RawPing};
pub use raster::{LandUseRaster, LayerSource};
