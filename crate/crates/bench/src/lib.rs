//! Shared fixtures for the stage benchmarks.

use vasctree::phantom::{self, PhantomSpec, RasterOptions};
use vasctree::{BinaryMask, Grid, GrowParams, Volume3D, VoxelIndex};

/// A rasterized phantom with its vessel mask.
pub struct Fixture {
    pub volume: Volume3D,
    pub root: VoxelIndex,
    pub vessel: BinaryMask,
}

/// Rasterizes a symmetric phantom of `generations` levels on a 20 µm grid.
pub fn fixture(generations: u32, d0_um: f64, l0_um: f64) -> Fixture {
    let spec = PhantomSpec { generations, d0_um, l0_um, ..PhantomSpec::default() };
    let gt = phantom::generate(&spec).expect("phantom spec");
    let opts = RasterOptions::default();
    let spacing = [20.0; 3];
    let grid = Grid::new(gt.fitting_dims(spacing, opts.tissue_margin_um, 2), spacing).expect("grid");
    let gt = gt.centered_in(&grid, opts.tissue_margin_um);
    let volume = phantom::rasterize(&gt, &grid, &opts).expect("raster");
    let root = gt.root_voxel(&grid).expect("root voxel");
    let vessel = vasctree::region_grow(&volume, &GrowParams::vessel(root)).expect("vessel");
    Fixture { volume, root, vessel }
}
