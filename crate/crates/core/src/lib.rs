//! Vascular tree morphometry from 3D voxel volumes.
//!
//! The pipeline segments vessels and tissue by seeded region growing, thins
//! the vessel mask to a centerline, turns the centerline into a rooted tree
//! of inter-branch segments and measures their lengths and diameters. On top
//! of the tree it computes per-generation statistics, the cumulative
//! diameter distribution with a power-law fit, and Murray exponents. Exact
//! Euclidean distance transforms give local-diameter and perfusion maps.
//!
//! Synthetic phantoms with analytic ground truth live in [`phantom`].

pub mod edt;
pub mod error;
pub mod graph;
pub mod io;
pub mod maps;
pub mod outputs;
pub mod phantom;
pub mod pipeline;
pub mod segment;
pub mod skeleton;
pub mod stats;
pub mod tree;
pub mod volume;

pub use edt::{distance_transform, DistanceField};
pub use error::{Error, Result};
pub use graph::{build_graph, CenterlineGraph};
pub use maps::{
    aggregate_specimens, local_diameter_map, perfusion_histogram, perfusion_map, PerfusionHistogram, SpecimenAggregate,
};
pub use phantom::{generate, rasterize, GroundTruth, PhantomSpec, RasterOptions};
pub use pipeline::{run_pipeline, PipelineConfig, RunManifest};
pub use segment::{count_components, region_grow, GrowParams};
pub use skeleton::{classify, thin, Skeleton, VoxelClass};
pub use stats::{
    cumulative_distribution, fit_power_law, generation_stats, murray_exponents, CumulativeDistribution, GenerationStats,
};
pub use tree::{measure, prune, root_tree, Segment, VesselTree};
pub use volume::{neighbors, BinaryMask, Connectivity, Grid, Volume3D, VoxelIndex};
