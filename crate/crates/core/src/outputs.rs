//! Column schemas of every tabular output, with writers and readers.
//!
//! | file | columns |
//! |------|---------|
//! | segments | id, parent_id, generation, length_um, diameter_um, n_voxels |
//! | generations | generation, count, diam_mean, diam_std, len_mean, len_std |
//! | cumulative | d_um, N |
//! | murray | node_id, d_parent, d_child1, d_child2, k, defined |
//! | perfusion histogram | bin_lo_um, bin_hi_um, count, freq |
//! | aggregate | bin_lo_um, bin_hi_um, mean_freq, std_freq, n_specimens |
//!
//! The power-law fit is a JSON object `{gamma, r2, window, n_points}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_csv, write_csv, write_json};
use crate::maps::{PerfusionHistogram, SpecimenAggregate};
use crate::stats::{CumulativeDistribution, GenerationStats, MurrayPoint, PowerLawFit};
use crate::tree::{SegmentRecord, VesselTree};

/// Bumped whenever a column is added, removed or reordered.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MurrayRow {
    pub node_id: usize,
    pub d_parent: f64,
    pub d_child1: f64,
    pub d_child2: f64,
    pub k: Option<f64>,
    pub defined: bool,
}

impl From<&MurrayPoint> for MurrayRow {
    fn from(m: &MurrayPoint) -> Self {
        MurrayRow {
            node_id: m.node_id,
            d_parent: m.d_parent,
            d_child1: m.d_child1,
            d_child2: m.d_child2,
            k: m.k,
            defined: m.defined(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub bin_lo_um: f64,
    pub bin_hi_um: f64,
    pub count: u64,
    pub freq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub bin_lo_um: f64,
    pub bin_hi_um: f64,
    pub mean_freq: f64,
    pub std_freq: f64,
    pub n_specimens: usize,
}

/// Power-law JSON; fields are null when the fit could not be made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawReport {
    pub gamma: Option<f64>,
    pub r2: Option<f64>,
    pub window: Option<[f64; 2]>,
    pub n_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PowerLawReport {
    pub fn from_result(r: &Result<PowerLawFit>) -> Self {
        match r {
            Ok(f) => PowerLawReport {
                gamma: Some(f.gamma),
                r2: Some(f.r2),
                window: Some(f.window),
                n_points: f.n_points,
                error: None,
            },
            Err(e) => PowerLawReport { gamma: None, r2: None, window: None, n_points: 0, error: Some(e.to_string()) },
        }
    }
}

pub fn write_segments(path: &Path, tree: &VesselTree) -> Result<()> {
    write_csv(path, &tree.records())
}

pub fn read_segments(path: &Path) -> Result<VesselTree> {
    let rows: Vec<SegmentRecord> = read_csv(path)?;
    VesselTree::from_records(&rows)
}

pub fn write_generations(path: &Path, stats: &GenerationStats) -> Result<()> {
    write_csv(path, &stats.rows)
}

pub fn write_cumulative(path: &Path, dist: &CumulativeDistribution) -> Result<()> {
    write_csv(path, &dist.points)
}

pub fn write_murray(path: &Path, points: &[MurrayPoint]) -> Result<()> {
    let rows: Vec<MurrayRow> = points.iter().map(MurrayRow::from).collect();
    write_csv(path, &rows)
}

pub fn write_power_law(path: &Path, report: &PowerLawReport) -> Result<()> {
    write_json(path, report)
}

pub fn write_histogram(path: &Path, h: &PerfusionHistogram) -> Result<()> {
    let freqs = h.frequencies();
    let rows: Vec<HistogramRow> = h
        .counts
        .iter()
        .enumerate()
        .map(|(i, &count)| HistogramRow {
            bin_lo_um: i as f64 * h.bin_width_um,
            bin_hi_um: (i + 1) as f64 * h.bin_width_um,
            count,
            freq: freqs[i],
        })
        .collect();
    write_csv(path, &rows)
}

pub fn read_histogram(path: &Path) -> Result<PerfusionHistogram> {
    let rows: Vec<HistogramRow> = read_csv(path)?;
    let first =
        rows.first().ok_or_else(|| Error::CorruptData { path: path.into(), reason: "histogram has no bins".into() })?;
    let w = first.bin_hi_um - first.bin_lo_um;
    for (i, r) in rows.iter().enumerate() {
        let lo = i as f64 * w;
        if (r.bin_lo_um - lo).abs() > 1e-9 * w.max(1.0) || (r.bin_hi_um - r.bin_lo_um - w).abs() > 1e-9 * w.max(1.0) {
            return Err(Error::GridMismatch(format!("{}: row {i} breaks the uniform bin grid", path.display())));
        }
    }
    Ok(PerfusionHistogram { bin_width_um: w, counts: rows.iter().map(|r| r.count).collect() })
}

pub fn write_aggregate(path: &Path, agg: &SpecimenAggregate) -> Result<()> {
    let rows: Vec<AggregateRow> = agg
        .mean
        .iter()
        .zip(&agg.std)
        .enumerate()
        .map(|(i, (&mean_freq, &std_freq))| AggregateRow {
            bin_lo_um: i as f64 * agg.bin_width_um,
            bin_hi_um: (i + 1) as f64 * agg.bin_width_um,
            mean_freq,
            std_freq,
            n_specimens: agg.n_specimens,
        })
        .collect();
    write_csv(path, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        let h = PerfusionHistogram { bin_width_um: 20.0, counts: vec![4, 0, 7] };
        write_histogram(&p, &h).unwrap();
        assert_eq!(read_histogram(&p).unwrap(), h);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("bin_lo_um,bin_hi_um,count,freq\n"));
    }

    #[test]
    fn murray_csv_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let pts = [MurrayPoint { node_id: 0, d_parent: 2.0, d_child1: 2.0, d_child2: 1.0, k: None }];
        write_murray(&p, &pts).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "node_id,d_parent,d_child1,d_child2,k,defined\n0,2.0,2.0,1.0,,false\n");
    }
}
