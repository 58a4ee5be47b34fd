//! End-to-end run: segment, thin, build and measure the tree, compute
//! statistics and distance maps, and write every output plus a manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize};

use crate::edt::{distance_transform, DistanceField};
use crate::error::{Error, Result};
use crate::graph::build_graph;
use crate::io::{self, write_json, write_mask, DType};
use crate::maps::{self, DEFAULT_BIN_WIDTH_UM, SENTINEL};
use crate::outputs::{self, PowerLawReport, SCHEMA_VERSION};
use crate::segment::{self, first_in_range, region_grow, GrowParams, TISSUE_RANGE, VESSEL_LO};
use crate::skeleton::{thin, Skeleton};
use crate::stats;
use crate::tree::{measure, prune, root_tree, TreeReport, VesselTree};
use crate::volume::{BinaryMask, Connectivity, Volume3D, VoxelIndex};

/// Threshold window and connectivity of one region-growing segmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub lo: f64,
    /// `null` means unbounded.
    pub hi: Option<f64>,
    pub seed: Option<[usize; 3]>,
    pub conn: Connectivity,
}

impl ThresholdConfig {
    pub fn vessel() -> Self {
        ThresholdConfig { lo: VESSEL_LO, hi: None, seed: None, conn: Connectivity::TwentySix }
    }

    pub fn tissue() -> Self {
        ThresholdConfig { lo: TISSUE_RANGE.0, hi: Some(TISSUE_RANGE.1), seed: None, conn: Connectivity::Six }
    }

    pub fn params(&self, seed: VoxelIndex) -> Result<GrowParams> {
        GrowParams::new(self.lo, self.hi, seed, self.conn)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialThresholds {
    lo: Option<f64>,
    #[serde(default, deserialize_with = "present")]
    hi: Option<Option<f64>>,
    seed: Option<[usize; 3]>,
    conn: Option<Connectivity>,
}

fn present<'de, D: Deserializer<'de>, T: Deserialize<'de>>(d: D) -> std::result::Result<Option<T>, D::Error> {
    T::deserialize(d).map(Some)
}

fn merged<'de, D: Deserializer<'de>>(d: D, base: ThresholdConfig) -> std::result::Result<ThresholdConfig, D::Error> {
    let p = PartialThresholds::deserialize(d)?;
    Ok(ThresholdConfig {
        lo: p.lo.unwrap_or(base.lo),
        hi: p.hi.unwrap_or(base.hi),
        seed: p.seed.or(base.seed),
        conn: p.conn.unwrap_or(base.conn),
    })
}

fn vessel_thresholds<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ThresholdConfig, D::Error> {
    merged(d, ThresholdConfig::vessel())
}

fn tissue_thresholds<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ThresholdConfig, D::Error> {
    merged(d, ThresholdConfig::tissue())
}

/// Pipeline configuration. Read from JSON; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Specimen label, used as the prefix of every output file.
    pub name: String,
    /// Missing fields take the vessel defaults.
    #[serde(deserialize_with = "vessel_thresholds")]
    pub vessel: ThresholdConfig,
    /// Missing fields take the tissue defaults.
    #[serde(deserialize_with = "tissue_thresholds")]
    pub tissue: ThresholdConfig,
    /// Voxel near the tree root; defaults to the vessel seed.
    pub root_hint: Option<[usize; 3]>,
    pub prune_factor: f64,
    /// Explicit `[dmin, dmax]` power-law window in µm.
    pub fit_window: Option<[f64; 2]>,
    pub bin_width_um: f64,
    /// Worker threads; 0 picks the number of cores. Never changes outputs.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: None,
            out_dir: PathBuf::from("out"),
            name: "specimen".into(),
            vessel: ThresholdConfig::vessel(),
            tissue: ThresholdConfig::tissue(),
            root_hint: None,
            prune_factor: 1.0,
            fit_window: None,
            bin_width_um: DEFAULT_BIN_WIDTH_UM,
            threads: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }

    fn output(&self, suffix: &str) -> PathBuf {
        self.out_dir.join(format!("{}_{suffix}", self.name))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub vessel_voxels: usize,
    pub tissue_voxels: usize,
    pub skeleton_voxels: usize,
    pub segments: usize,
    pub generations: u32,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub schema_version: u32,
    pub config: PipelineConfig,
    pub input_sha256: String,
    pub timings: Vec<StageTiming>,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
    pub tree_report: TreeReport,
    pub summary: RunSummary,
}

/// Run `f` on a pool with `threads` workers (0 = rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Vessel-mask distance-to-wall field used for radii.
pub fn wall_distance(vessel: &BinaryMask) -> Result<DistanceField> {
    distance_transform(&vessel.complement())
}

/// Graph → rooted tree → pruned and measured tree.
pub fn build_tree(
    skel: &Skeleton,
    edt: &DistanceField,
    root_hint: VoxelIndex,
    prune_factor: f64,
) -> Result<(VesselTree, TreeReport)> {
    let graph = build_graph(skel)?;
    let (tree, mut report) = root_tree(&graph, root_hint, edt)?;
    let tree = measure(&tree, edt);
    let (tree, pruned) = prune(&tree, edt, prune_factor);
    report.pruned_segments = pruned;
    Ok((tree, report))
}

/// Statistics outputs for a measured tree. Returns the fit and any warnings.
pub fn write_stats(
    out_dir: &Path,
    name: &str,
    tree: &VesselTree,
    window: Option<[f64; 2]>,
) -> Result<(PowerLawReport, Vec<PathBuf>, Vec<String>)> {
    let p = |s: &str| out_dir.join(format!("{name}_{s}"));
    let gen = stats::generation_stats(tree);
    let dist = stats::cumulative_distribution(tree);
    let murray = stats::murray_exponents(tree);
    let fit = stats::fit_power_law(&dist, window);
    let mut warnings = Vec::new();
    if let Err(e) = &fit {
        warnings.push(format!("power-law fit skipped: {e}"));
    }
    let undefined = murray.iter().filter(|m| !m.defined()).count();
    if undefined > 0 {
        warnings.push(format!("{undefined} bifurcation(s) have no Murray exponent in (0, 10]"));
    }
    let report = PowerLawReport::from_result(&fit);
    let files = vec![p("generations.csv"), p("cumulative.csv"), p("murray.csv"), p("powerlaw.json")];
    outputs::write_generations(&files[0], &gen)?;
    outputs::write_cumulative(&files[1], &dist)?;
    outputs::write_murray(&files[2], &murray)?;
    outputs::write_power_law(&files[3], &report)?;
    Ok((report, files, warnings))
}

struct Recorder {
    timings: Vec<StageTiming>,
    outputs: Vec<String>,
}

impl Recorder {
    fn stage<T>(&mut self, stage: &'static str, f: impl FnOnce(&mut Vec<PathBuf>) -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let mut files = Vec::new();
        let out = f(&mut files).map_err(|e| Error::Stage { stage, source: Box::new(e) })?;
        self.timings.push(StageTiming { stage: stage.into(), millis: t0.elapsed().as_secs_f64() * 1e3 });
        self.outputs.extend(files.iter().map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned()));
        Ok(out)
    }
}

/// Execute the full pipeline and write the manifest next to the outputs.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest> {
    with_threads(config.threads, || run_inner(config))?
}

fn run_inner(config: &PipelineConfig) -> Result<RunManifest> {
    let mut rec = Recorder { timings: Vec::new(), outputs: Vec::new() };
    let mut warnings: Vec<String> = Vec::new();

    let (vol, input_sha256): (Volume3D, String) = rec.stage("read", |_| {
        let input = config.input.as_ref().ok_or_else(|| Error::InvalidParameter("no input volume given".into()))?;
        let header = io::read_header(input)?;
        let vol = io::read_volume(input)?;
        let hash = io::sha256_file(&io::data_path(input, &header))?;
        Ok((vol, hash))
    })?;
    let grid = *vol.grid();

    let (vessel, tissue, vessel_seed) = rec.stage("segment", |files| {
        let seed = config
            .vessel
            .seed
            .map(VoxelIndex::from)
            .ok_or_else(|| Error::InvalidParameter("vessel seed is required".into()))?;
        let vessel = region_grow(&vol, &config.vessel.params(seed)?)?;
        let comps = segment::count_components(&vessel, config.vessel.conn);
        debug_assert_eq!(comps, 1);
        let tissue_seed = match config.tissue.seed {
            Some(s) => Some(VoxelIndex::from(s)),
            None => first_in_range(&vol, config.tissue.lo, config.tissue.hi.unwrap_or(f64::INFINITY)),
        };
        let tissue = match tissue_seed {
            Some(s) => Some(region_grow(&vol, &config.tissue.params(s)?)?),
            None => {
                warnings.push("no voxel in the tissue range; perfusion outputs skipped".into());
                None
            }
        };
        files.push(write_mask(&vessel, &config.output("vessel"))?);
        if let Some(t) = &tissue {
            files.push(write_mask(t, &config.output("tissue"))?);
        }
        Ok((vessel, tissue, seed))
    })?;

    let skel = rec.stage("skeletonize", |files| {
        let skel = thin(&vessel)?;
        files.push(write_mask(skel.mask(), &config.output("skeleton"))?);
        Ok(skel)
    })?;

    let (tree, tree_report) = rec.stage("tree", |files| {
        let edt = wall_distance(&vessel)?;
        let hint = config.root_hint.map(VoxelIndex::from).unwrap_or(vessel_seed);
        grid.check(hint)?;
        let (tree, report) = build_tree(&skel, &edt, hint, config.prune_factor)?;
        let path = config.output("segments.csv");
        outputs::write_segments(&path, &tree)?;
        files.push(path);
        Ok((tree, report))
    })?;
    for c in &tree_report.broken_cycles {
        warnings.push(format!(
            "cycle broken at voxel {:?} (mean radius {:.3} µm)",
            c.voxel.as_array(),
            c.mean_radius_um
        ));
    }
    if tree_report.pruned_segments > 0 {
        warnings.push(format!("{} terminal spur segment(s) pruned", tree_report.pruned_segments));
    }
    if tree_report.dropped_components > 0 {
        warnings.push(format!(
            "{} skeleton component(s) not connected to the root dropped",
            tree_report.dropped_components
        ));
    }

    let fit = rec.stage("stats", |files| {
        let (fit, paths, w) = write_stats(&config.out_dir, &config.name, &tree, config.fit_window)?;
        warnings.extend(w);
        files.extend(paths);
        Ok(fit)
    })?;

    rec.stage("maps", |files| {
        let diam = maps::local_diameter_map(&vessel, &skel)?;
        files.push(io::write_volume_with(&diam, &config.output("diam"), DType::F32, Some(SENTINEL))?);
        if let Some(tissue) = &tissue {
            let perf = maps::perfusion_map(tissue, &vessel)?;
            files.push(io::write_volume_with(&perf, &config.output("perf"), DType::F32, Some(SENTINEL))?);
            let hist = maps::perfusion_histogram(&perf, config.bin_width_um)?;
            let path = config.output("perf_hist.csv");
            outputs::write_histogram(&path, &hist)?;
            files.push(path);
        }
        Ok(())
    })?;

    let mut outputs = rec.outputs;
    outputs.push(format!("{}_manifest.json", config.name));
    let manifest = RunManifest {
        tool: "vasctree".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        input_sha256,
        timings: rec.timings,
        warnings,
        outputs,
        tree_report,
        summary: RunSummary {
            vessel_voxels: vessel.count(),
            tissue_voxels: tissue.as_ref().map_or(0, |t| t.count()),
            skeleton_voxels: skel.mask().count(),
            segments: tree.len(),
            generations: tree.max_generation(),
            gamma: fit.gamma,
        },
    };
    write_json(&config.output("manifest.json"), &manifest)?;
    Ok(manifest)
}
