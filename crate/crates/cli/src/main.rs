//! `vasctree` command-line front end.
//!
//! Settings resolve in three layers: built-in defaults, then the JSON file
//! given with `--config`, then command-line flags.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vasctree::io::{self, DType};
use vasctree::maps::SENTINEL;
use vasctree::outputs;
use vasctree::phantom::{self, PhantomSpec, RasterOptions};
use vasctree::pipeline::{self, PipelineConfig};
use vasctree::segment::first_in_range;
use vasctree::skeleton::Skeleton;
use vasctree::{Connectivity, Error, Result, VoxelIndex};

#[derive(Parser)]
#[command(name = "vasctree", version, about = "Vascular tree morphometry from 3D voxel volumes")]
struct Cli {
    /// JSON pipeline configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = one per core). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Region-grow the vessel and tissue masks.
    Segment(SegmentArgs),
    /// Thin a vessel mask to a one-voxel centerline.
    Skeletonize(SkeletonizeArgs),
    /// Build, prune and measure the rooted segment tree.
    Tree(TreeArgs),
    /// Generation statistics, cumulative diameters, power law and Murray exponents.
    Stats(StatsArgs),
    /// Local-diameter and perfusion maps plus the perfusion histogram.
    Maps(MapsArgs),
    /// Mean and standard deviation of several perfusion histograms.
    Aggregate(AggregateArgs),
    /// Generate and rasterize a synthetic bifurcating tree.
    Phantom(PhantomArgs),
    /// Every stage end to end, with a run manifest.
    Run(RunArgs),
}

#[derive(Args)]
struct Output {
    /// Output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Specimen label, used as the output file prefix.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct Thresholds {
    /// Vessel seed voxel `i,j,k`.
    #[arg(long, value_parser = parse_index)]
    seed: Option<[usize; 3]>,
    #[arg(long)]
    vessel_lo: Option<f64>,
    #[arg(long)]
    vessel_hi: Option<f64>,
    /// Vessel connectivity: 6, 18 or 26.
    #[arg(long, value_parser = parse_conn)]
    vessel_conn: Option<Connectivity>,
    /// Tissue seed voxel; defaults to the first voxel in the tissue range.
    #[arg(long, value_parser = parse_index)]
    tissue_seed: Option<[usize; 3]>,
    #[arg(long)]
    tissue_lo: Option<f64>,
    #[arg(long)]
    tissue_hi: Option<f64>,
    #[arg(long, value_parser = parse_conn)]
    tissue_conn: Option<Connectivity>,
}

#[derive(Args)]
struct SegmentArgs {
    /// Input volume header.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    thresholds: Thresholds,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SkeletonizeArgs {
    /// Vessel mask header.
    #[arg(long)]
    vessel: PathBuf,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct TreeArgs {
    #[arg(long)]
    vessel: PathBuf,
    #[arg(long)]
    skeleton: PathBuf,
    /// Voxel near the root inlet `i,j,k`.
    #[arg(long, value_parser = parse_index)]
    root_hint: Option<[usize; 3]>,
    #[arg(long)]
    prune_factor: Option<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct StatsArgs {
    /// Segments CSV written by `tree`.
    #[arg(long)]
    segments: PathBuf,
    /// Power-law window `dmin,dmax` in µm.
    #[arg(long, value_parser = parse_window)]
    fit_window: Option<[f64; 2]>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct MapsArgs {
    #[arg(long)]
    vessel: PathBuf,
    #[arg(long)]
    skeleton: PathBuf,
    /// Tissue mask; without it only the local-diameter map is written.
    #[arg(long)]
    tissue: Option<PathBuf>,
    #[arg(long)]
    bin_width_um: Option<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct AggregateArgs {
    /// Perfusion histogram CSVs sharing one bin width.
    #[arg(required = true)]
    histograms: Vec<PathBuf>,
    /// Output CSV.
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long, default_value_t = 4)]
    generations: u32,
    #[arg(long, default_value_t = 240.0)]
    d0_um: f64,
    #[arg(long, default_value_t = 1200.0)]
    l0_um: f64,
    /// Child/parent diameter ratio; defaults to 2^(-1/3).
    #[arg(long)]
    ratio: Option<f64>,
    /// Ratio of the second child; defaults to `--ratio`.
    #[arg(long)]
    ratio2: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    length_ratio: f64,
    /// Branching half-angles `a1,a2` in degrees.
    #[arg(long, value_parser = parse_window, default_value = "35,35")]
    angles: [f64; 2],
    /// Grid size `nx,ny,nz`; defaults to the smallest grid holding the tree.
    #[arg(long, value_parser = parse_index)]
    dims: Option<[usize; 3]>,
    #[arg(long, default_value_t = 20.0)]
    spacing_um: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative jitter of diameters, lengths and angles.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Thickness of the tissue envelope around the vessels, µm.
    #[arg(long, default_value_t = 200.0)]
    margin_um: f64,
    /// Output base path; writes `<out>.json`, `<out>.raw` and `<out>_truth.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    thresholds: Thresholds,
    #[arg(long, value_parser = parse_index)]
    root_hint: Option<[usize; 3]>,
    #[arg(long)]
    prune_factor: Option<f64>,
    #[arg(long, value_parser = parse_window)]
    fit_window: Option<[f64; 2]>,
    #[arg(long)]
    bin_width_um: Option<f64>,
    #[command(flatten)]
    output: Output,
}

fn parse_list<T: std::str::FromStr, const N: usize>(s: &str) -> std::result::Result<[T; N], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated values, got `{s}`"));
    }
    let vals: Vec<T> = parts
        .iter()
        .map(|p| p.parse::<T>().map_err(|_| format!("bad value `{p}`")))
        .collect::<std::result::Result<_, _>>()?;
    vals.try_into().map_err(|_| unreachable!())
}

fn parse_index(s: &str) -> std::result::Result<[usize; 3], String> {
    parse_list(s)
}

fn parse_window(s: &str) -> std::result::Result<[f64; 2], String> {
    parse_list(s)
}

fn parse_conn(s: &str) -> std::result::Result<Connectivity, String> {
    let n: u8 = s.parse().map_err(|_| format!("bad connectivity `{s}`"))?;
    Connectivity::try_from(n).map_err(|e| e.to_string())
}

impl Output {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(n) = &self.name {
            cfg.name = n.clone();
        }
    }
}

impl Thresholds {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let v = &mut cfg.vessel;
        v.seed = self.seed.or(v.seed);
        v.lo = self.vessel_lo.unwrap_or(v.lo);
        v.hi = self.vessel_hi.or(v.hi);
        v.conn = self.vessel_conn.unwrap_or(v.conn);
        let t = &mut cfg.tissue;
        t.seed = self.tissue_seed.or(t.seed);
        t.lo = self.tissue_lo.unwrap_or(t.lo);
        t.hi = self.tissue_hi.or(t.hi);
        t.conn = self.tissue_conn.unwrap_or(t.conn);
    }
}

fn out_path(cfg: &PipelineConfig, suffix: &str) -> PathBuf {
    cfg.out_dir.join(format!("{}_{suffix}", cfg.name))
}

fn staged<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage { stage, source: Box::new(e) },
    })
}

fn segment(cfg: &PipelineConfig) -> Result<()> {
    let input = cfg.input.as_deref().ok_or_else(|| Error::InvalidParameter("--input is required".into()))?;
    let vol = io::read_volume(input)?;
    let seed = cfg.vessel.seed.ok_or_else(|| Error::InvalidParameter("--seed is required".into()))?;
    let vessel = vasctree::region_grow(&vol, &cfg.vessel.params(seed.into())?)?;
    io::write_mask(&vessel, &out_path(cfg, "vessel"))?;
    let tissue_seed = match cfg.tissue.seed {
        Some(s) => Some(VoxelIndex::from(s)),
        None => first_in_range(&vol, cfg.tissue.lo, cfg.tissue.hi.unwrap_or(f64::INFINITY)),
    };
    match tissue_seed {
        Some(s) => {
            let tissue = vasctree::region_grow(&vol, &cfg.tissue.params(s)?)?;
            io::write_mask(&tissue, &out_path(cfg, "tissue"))?;
        }
        None => eprintln!("warning: no voxel in the tissue range; tissue mask not written"),
    }
    Ok(())
}

fn skeletonize(cfg: &PipelineConfig, vessel: &Path) -> Result<()> {
    let skel = vasctree::thin(&io::read_mask(vessel)?)?;
    io::write_mask(skel.mask(), &out_path(cfg, "skeleton"))?;
    Ok(())
}

fn tree(cfg: &PipelineConfig, vessel: &Path, skeleton: &Path) -> Result<()> {
    let vessel = io::read_mask(vessel)?;
    let skel = Skeleton::from_mask(io::read_mask(skeleton)?);
    if skel.grid() != vessel.grid() {
        return Err(Error::GridMismatch("skeleton and vessel masks differ in grid".into()));
    }
    let hint =
        cfg.root_hint.or(cfg.vessel.seed).ok_or_else(|| Error::InvalidParameter("--root-hint is required".into()))?;
    vessel.grid().check(hint.into())?;
    let edt = pipeline::wall_distance(&vessel)?;
    let (tree, report) = pipeline::build_tree(&skel, &edt, hint.into(), cfg.prune_factor)?;
    for c in &report.broken_cycles {
        eprintln!("warning: cycle broken at voxel {:?}", c.voxel.as_array());
    }
    if report.pruned_segments > 0 {
        eprintln!("warning: {} terminal spur segment(s) pruned", report.pruned_segments);
    }
    outputs::write_segments(&out_path(cfg, "segments.csv"), &tree)
}

fn stats(cfg: &PipelineConfig, segments: &Path) -> Result<()> {
    let tree = outputs::read_segments(segments)?;
    let (_, _, warnings) = pipeline::write_stats(&cfg.out_dir, &cfg.name, &tree, cfg.fit_window)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn maps(cfg: &PipelineConfig, a: &MapsArgs) -> Result<()> {
    let vessel = io::read_mask(&a.vessel)?;
    let skel = Skeleton::from_mask(io::read_mask(&a.skeleton)?);
    let diam = vasctree::local_diameter_map(&vessel, &skel)?;
    io::write_volume_with(&diam, &out_path(cfg, "diam"), DType::F32, Some(SENTINEL))?;
    if let Some(t) = &a.tissue {
        let perf = vasctree::perfusion_map(&io::read_mask(t)?, &vessel)?;
        io::write_volume_with(&perf, &out_path(cfg, "perf"), DType::F32, Some(SENTINEL))?;
        let hist = vasctree::perfusion_histogram(&perf, cfg.bin_width_um)?;
        outputs::write_histogram(&out_path(cfg, "perf_hist.csv"), &hist)?;
    }
    Ok(())
}

fn aggregate(a: &AggregateArgs) -> Result<()> {
    let hists = a.histograms.iter().map(|p| outputs::read_histogram(p)).collect::<Result<Vec<_>>>()?;
    let agg = vasctree::aggregate_specimens(&hists)?;
    outputs::write_aggregate(&a.output, &agg)
}

fn phantom_cmd(a: &PhantomArgs) -> Result<()> {
    let r = a.ratio.unwrap_or(2f64.powf(-1.0 / 3.0));
    let spec = PhantomSpec {
        generations: a.generations,
        d0_um: a.d0_um,
        l0_um: a.l0_um,
        ratio1: r,
        ratio2: a.ratio2.unwrap_or(r),
        length_ratio: a.length_ratio,
        angles_deg: a.angles,
        seed: a.seed,
        jitter: a.jitter,
    };
    let gt = phantom::generate(&spec)?;
    let opts = RasterOptions { tissue_margin_um: a.margin_um, ..RasterOptions::default() };
    let side = phantom::write_phantom(&gt, a.dims, [a.spacing_um; 3], &opts, &a.out)?;
    println!("dims {:?}, {} segments, root voxel {:?}", side.dims, side.truth.len(), side.root_voxel);
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => staged("config", PipelineConfig::load(p))?,
        None => PipelineConfig::default(),
    };
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    let threads = cfg.threads;
    match &cli.command {
        Command::Segment(a) => {
            a.output.apply(&mut cfg);
            a.thresholds.apply(&mut cfg);
            cfg.input = a.input.clone().or(cfg.input);
            pipeline::with_threads(threads, || staged("segment", segment(&cfg)))?
        }
        Command::Skeletonize(a) => {
            a.output.apply(&mut cfg);
            pipeline::with_threads(threads, || staged("skeletonize", skeletonize(&cfg, &a.vessel)))?
        }
        Command::Tree(a) => {
            a.output.apply(&mut cfg);
            cfg.root_hint = a.root_hint.or(cfg.root_hint);
            cfg.prune_factor = a.prune_factor.unwrap_or(cfg.prune_factor);
            pipeline::with_threads(threads, || staged("tree", tree(&cfg, &a.vessel, &a.skeleton)))?
        }
        Command::Stats(a) => {
            a.output.apply(&mut cfg);
            cfg.fit_window = a.fit_window.or(cfg.fit_window);
            staged("stats", stats(&cfg, &a.segments))
        }
        Command::Maps(a) => {
            a.output.apply(&mut cfg);
            cfg.bin_width_um = a.bin_width_um.unwrap_or(cfg.bin_width_um);
            pipeline::with_threads(threads, || staged("maps", maps(&cfg, a)))?
        }
        Command::Aggregate(a) => staged("aggregate", aggregate(a)),
        Command::Phantom(a) => pipeline::with_threads(threads, || staged("phantom", phantom_cmd(a)))?,
        Command::Run(a) => {
            a.output.apply(&mut cfg);
            a.thresholds.apply(&mut cfg);
            cfg.input = a.input.clone().or(cfg.input);
            cfg.root_hint = a.root_hint.or(cfg.root_hint);
            cfg.prune_factor = a.prune_factor.unwrap_or(cfg.prune_factor);
            cfg.fit_window = a.fit_window.or(cfg.fit_window);
            cfg.bin_width_um = a.bin_width_um.unwrap_or(cfg.bin_width_um);
            let manifest = pipeline::run_pipeline(&cfg)?;
            for w in &manifest.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{} segments over {} generations; outputs in {}",
                manifest.summary.segments,
                manifest.summary.generations,
                cfg.out_dir.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
