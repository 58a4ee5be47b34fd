mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vasctree::graph::NodeKind;
use vasctree::phantom::{self, PhantomSpec, RasterOptions, TruthSegment};
use vasctree::segment::label_components;
use vasctree::skeleton::euler_characteristic;
use vasctree::stats::CumulativeDistribution;
use vasctree::*;

use common::*;

#[test]
fn anisotropic_edt_matches_all_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let grid = Grid::new([13, 9, 7], [20.0, 17.5, 41.0]).unwrap();
        let density = rng.random_range(0.002..0.1);
        let mut mask = random_mask(&mut rng, grid, density);
        mask.set(VoxelIndex::new(6, 4, 3), true);
        let edt = distance_transform(&mask).unwrap();
        let want = brute_sq_edt(&mask);
        for (l, w) in want.iter().enumerate() {
            assert!((edt.squared_at(l) - w).abs() <= 1e-9 * w.max(1.0), "voxel {l}: {} vs {w}", edt.squared_at(l));
            let f = edt.nearest_at(l);
            assert!(mask.data()[f]);
            let d = grid.squared_distance(grid.index(l), grid.index(f));
            assert!((d - w).abs() <= 1e-9 * w.max(1.0));
        }
    }
}

#[test]
fn nearest_feature_ties_pick_lowest_index() {
    let grid = Grid::isotropic([5, 1, 1], 1.0).unwrap();
    let mask = BinaryMask::from_fn(grid, |v| v.i == 0 || v.i == 4);
    let edt = distance_transform(&mask).unwrap();
    assert_eq!(edt.nearest_at(2), 0);
}

#[test]
fn components_match_union_find() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let grid = Grid::isotropic([14, 12, 10], 1.0).unwrap();
    for _ in 0..20 {
        let density = rng.random_range(0.05..0.4);
        let mask = random_mask(&mut rng, grid, density);
        for conn in [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix] {
            let (labels, n) = label_components(&mask, conn);
            assert_eq!(n, union_find_components(&mask, conn));
            for (l, &on) in mask.data().iter().enumerate() {
                assert_eq!(on, labels[l] != 0);
            }
        }
    }
}

#[test]
fn anisotropic_region_grow_matches_bfs() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let grid = Grid::new([20, 11, 9], [20.0, 20.0, 35.0]).unwrap();
    for _ in 0..20 {
        let vals: Vec<f32> = (0..grid.len()).map(|_| rng.random_range(0..2000) as f32).collect();
        let vol = Volume3D::new(grid, vals).unwrap();
        let seed = VoxelIndex::new(10, 5, 4);
        let v = vol.get(seed) as f64;
        let (lo, hi) = (v - rng.random_range(0.0..800.0), v + rng.random_range(0.0..800.0));
        let got = region_grow(&vol, &GrowParams::new(lo, Some(hi), seed, Connectivity::Eighteen).unwrap()).unwrap();
        assert_eq!(got.data(), bfs_flood(&vol, lo, hi, seed.as_array(), Connectivity::Eighteen).as_slice());
    }
}

#[test]
fn seed_outside_window_is_an_error() {
    let grid = Grid::isotropic([4, 4, 4], 20.0).unwrap();
    let vol = Volume3D::filled(grid, 100.0);
    let r = region_grow(&vol, &GrowParams::vessel(VoxelIndex::new(1, 1, 1)));
    assert!(matches!(r, Err(Error::SeedOutsideRange { .. })));
}

fn brute_nearest_distance(target: &BinaryMask, feature: &BinaryMask) -> Vec<f32> {
    let sq = brute_sq_edt(feature);
    target.data().iter().zip(sq).map(|(&t, d)| if t { d.sqrt() as f32 } else { -1.0 }).collect()
}

#[test]
fn maps_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let grid = Grid::new([12, 10, 8], [20.0, 20.0, 25.0]).unwrap();
    for _ in 0..10 {
        let vessel = random_mask(&mut rng, grid, 0.4);
        let skel = BinaryMask::from_fn(grid, |v| vessel.get(v) && rng.random_bool(0.1));
        if skel.is_empty() {
            continue;
        }
        let diam = local_diameter_map(&vessel, &Skeleton::from_mask(skel.clone())).unwrap();
        assert_eq!(diam.values(), brute_nearest_distance(&vessel, &skel).as_slice());

        let tissue = random_mask(&mut rng, grid, 0.6);
        let perf = perfusion_map(&tissue, &vessel).unwrap();
        assert_eq!(perf.values(), brute_nearest_distance(&tissue, &vessel).as_slice());
    }
}

#[test]
fn empty_feature_sets_are_errors() {
    let grid = Grid::isotropic([4, 4, 4], 20.0).unwrap();
    let full = BinaryMask::full(grid);
    let empty = BinaryMask::empty(grid);
    assert!(matches!(perfusion_map(&full, &empty), Err(Error::EmptyFeatureSet)));
    assert!(matches!(local_diameter_map(&full, &Skeleton::from_mask(empty)), Err(Error::EmptyFeatureSet)));
}

fn cylinder(radius_vox: f64, len: usize) -> (BinaryMask, phantom::GroundTruth) {
    let spec =
        PhantomSpec { generations: 1, d0_um: 40.0 * radius_vox, l0_um: 20.0 * len as f64, ..PhantomSpec::default() };
    let gt = phantom::generate(&spec).unwrap();
    let n = (2.0 * radius_vox) as usize + 7;
    let grid = Grid::isotropic([n, n, len + 2 * radius_vox as usize + 6], 20.0).unwrap();
    let gt = gt.centered_in(&grid, 0.0);
    let vol = phantom::rasterize(&gt, &grid, &RasterOptions::default()).unwrap();
    let root = gt.root_voxel(&grid).unwrap();
    (region_grow(&vol, &GrowParams::vessel(root)).unwrap(), gt)
}

#[test]
fn cylinder_disc_radius() {
    let (mask, gt) = cylinder(4.0, 30);
    let grid = *mask.grid();
    let root = gt.root_voxel(&grid).unwrap();
    let k = root.k + 15;
    let dims = grid.dims();
    // every row through the axis spans 2 * 4 + 1 voxels
    let row = (0..dims[0]).filter(|&i| mask.get(VoxelIndex::new(i, root.j, k))).count();
    assert_eq!(row, 9);
    let area = (0..dims[0] * dims[1]).filter(|&l| mask.get(VoxelIndex::new(l % dims[0], l / dims[0], k))).count();
    let analytic = std::f64::consts::PI * 16.0;
    assert!((area as f64 - analytic).abs() / analytic < 0.15, "disc area {area}");
}

#[test]
fn cylinder_measurements() {
    let (mask, _) = cylinder(4.0, 40);
    let skel = thin(&mask).unwrap();
    let edt = pipeline::wall_distance(&mask).unwrap();

    // surface voxels of the lumen sit one radius from the centerline
    let diam = local_diameter_map(&mask, &skel).unwrap();
    let grid = *mask.grid();
    let surface: Vec<f32> = mask
        .indices()
        .filter(|&l| edt.distance_at(l) <= 20.0 + 1e-9)
        .map(|l| diam.values()[l])
        .filter(|&d| d > 0.0)
        .collect();
    let middle: Vec<f32> = surface.iter().copied().filter(|&d| d > 40.0).collect();
    let mean = middle.iter().sum::<f32>() / middle.len() as f32;
    assert!((mean - 80.0).abs() <= 20.0, "surface distance {mean}");

    let hint = mask.indices().next().map(|l| grid.index(l)).unwrap();
    let (tree, _) = pipeline::build_tree(&skel, &edt, hint, 1.0).unwrap();
    assert_eq!(tree.len(), 1);
    assert!((tree.segments[0].diameter_um - 160.0).abs() <= 20.0, "diameter {}", tree.segments[0].diameter_um);
}

#[test]
fn skeleton_of_cylinder_is_a_line() {
    let (mask, _) = cylinder(3.0, 24);
    let skel = thin(&mask).unwrap();
    let classes = classify(&skel);
    let ends = classes.iter().filter(|c| **c == Some(VoxelClass::Endpoint)).count();
    let junctions = classes.iter().filter(|c| **c == Some(VoxelClass::Junction)).count();
    assert_eq!((ends, junctions), (2, 0));
    assert_eq!(euler_characteristic(skel.mask()), euler_characteristic(&mask));
}

fn y_phantom() -> (BinaryMask, VoxelIndex) {
    let gt = phantom::generate(&PhantomSpec { generations: 2, ..PhantomSpec::default() }).unwrap();
    let dims = gt.fitting_dims([20.0; 3], 0.0, 2);
    let grid = Grid::new(dims, [20.0; 3]).unwrap();
    let gt = gt.centered_in(&grid, 0.0);
    let vol = phantom::rasterize(&gt, &grid, &RasterOptions::default()).unwrap();
    let root = gt.root_voxel(&grid).unwrap();
    (region_grow(&vol, &GrowParams::vessel(root)).unwrap(), root)
}

#[test]
fn y_phantom_graph() {
    let (mask, _) = y_phantom();
    let skel = thin(&mask).unwrap();
    let g = build_graph(&skel).unwrap();
    assert_eq!(g.count_kind(NodeKind::Endpoint), 3);
    assert_eq!(g.count_kind(NodeKind::Junction), 1);
    assert_eq!(g.edges.len(), 3);
}

#[test]
fn short_spur_is_pruned() {
    let grid = Grid::isotropic([30, 15, 15], 20.0).unwrap();
    let vessel = BinaryMask::from_fn(grid, |v| (1..=28).contains(&v.i) && v.j.abs_diff(7) <= 4 && v.k.abs_diff(7) <= 4);
    let mut skel = BinaryMask::from_fn(grid, |v| (2..=27).contains(&v.i) && v.j == 7 && v.k == 7);
    skel.set(VoxelIndex::new(14, 8, 7), true);
    skel.set(VoxelIndex::new(14, 9, 7), true);
    let edt = pipeline::wall_distance(&vessel).unwrap();
    let graph = build_graph(&Skeleton::from_mask(skel)).unwrap();
    let (raw, _) = root_tree(&graph, VoxelIndex::new(0, 7, 7), &edt).unwrap();
    assert_eq!(raw.len(), 3);
    let (pruned, removed) = prune(&measure(&raw, &edt), &edt, 1.0);
    assert_eq!(removed, 1);
    assert_eq!(pruned.len(), 1);
    assert!((pruned.segments[0].length_um - 500.0).abs() < 1e-9);
    // a zero factor keeps everything
    let (kept, none) = prune(&raw, &edt, 0.0);
    assert_eq!((kept.len(), none), (3, 0));
}

#[test]
fn murray_phantom_generation_ratios() {
    let gt = phantom::generate(&PhantomSpec { generations: 3, ..PhantomSpec::default() }).unwrap();
    let dims = gt.fitting_dims([20.0; 3], 0.0, 2);
    let grid = Grid::new(dims, [20.0; 3]).unwrap();
    let gt = gt.centered_in(&grid, 0.0);
    let vol = phantom::rasterize(&gt, &grid, &RasterOptions::default()).unwrap();
    let root = gt.root_voxel(&grid).unwrap();
    let vessel = region_grow(&vol, &GrowParams::vessel(root)).unwrap();
    let skel = thin(&vessel).unwrap();
    let edt = pipeline::wall_distance(&vessel).unwrap();
    let (tree, _) = pipeline::build_tree(&skel, &edt, root, 1.0).unwrap();
    let rows = generation_stats(&tree).rows;
    let r = 2f64.powf(-1.0 / 3.0);
    for w in rows.windows(2) {
        let ratio = w[1].diam_mean / w[0].diam_mean;
        assert!((ratio / r - 1.0).abs() < 0.1, "ratio {ratio}");
    }
}

#[test]
fn cumulative_counts_of_symmetric_tree() {
    let gt = phantom::generate(&PhantomSpec { generations: 5, ..PhantomSpec::default() }).unwrap();
    let diameters: Vec<f64> = gt.segments.iter().map(|s: &TruthSegment| s.diameter_um).collect();
    let dist = CumulativeDistribution::from_diameters(&diameters);
    for g in 1..=5u32 {
        let d_g = 240.0 * 2f64.powf(-((g - 1) as f64) / 3.0);
        assert_eq!(dist.count_above(d_g * (1.0 - 1e-6)), (1 << g) - 1);
    }
}
