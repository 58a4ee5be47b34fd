//! Local-diameter and perfusion maps and their value distributions.

use serde::{Deserialize, Serialize};

use crate::edt::distance_transform;
use crate::error::{Error, Result};
use crate::skeleton::Skeleton;
use crate::stats::mean_std;
use crate::volume::{BinaryMask, Volume3D};

/// Value stored at voxels outside the mapped mask.
pub const SENTINEL: f32 = -1.0;
/// Default histogram bin width in µm (one voxel at 20 µm spacing).
pub const DEFAULT_BIN_WIDTH_UM: f64 = 20.0;

fn masked_distance(feature: &BinaryMask, domain: &BinaryMask) -> Result<Volume3D> {
    feature.require_same_grid(domain)?;
    let df = distance_transform(feature)?;
    let values = domain
        .data()
        .iter()
        .enumerate()
        .map(|(lin, &inside)| if inside { df.distance_at(lin) as f32 } else { SENTINEL })
        .collect();
    Volume3D::new(*domain.grid(), values)
}

/// Distance (µm) from each vessel voxel to its nearest centerline voxel.
pub fn local_diameter_map(vessel: &BinaryMask, skel: &Skeleton) -> Result<Volume3D> {
    masked_distance(skel.mask(), vessel)
}

/// Distance (µm) from each tissue voxel to its nearest vessel voxel.
pub fn perfusion_map(tissue: &BinaryMask, vessel: &BinaryMask) -> Result<Volume3D> {
    masked_distance(vessel, tissue)
}

/// Histogram with left-closed bins `[i*w, (i+1)*w)` starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfusionHistogram {
    pub bin_width_um: f64,
    pub counts: Vec<u64>,
}

impl PerfusionHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        (0..=self.counts.len()).map(|i| i as f64 * self.bin_width_um).collect()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let total = self.total();
        self.counts.iter().map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 }).collect()
    }
}

pub fn perfusion_histogram(map: &Volume3D, bin_width_um: f64) -> Result<PerfusionHistogram> {
    if !(bin_width_um > 0.0 && bin_width_um.is_finite()) {
        return Err(Error::InvalidParameter(format!("bin width must be positive, got {bin_width_um}")));
    }
    let mut counts: Vec<u64> = Vec::new();
    for &v in map.values() {
        if v == SENTINEL || v < 0.0 || !v.is_finite() {
            continue;
        }
        let bin = (v as f64 / bin_width_um).floor() as usize;
        if bin >= counts.len() {
            counts.resize(bin + 1, 0);
        }
        counts[bin] += 1;
    }
    Ok(PerfusionHistogram { bin_width_um, counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecimenAggregate {
    pub bin_width_um: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub n_specimens: usize,
}

/// Per-bin mean and (n-1) std of normalized frequencies.
///
/// Histograms must share bin width and origin; shorter ones are padded with
/// empty bins.
pub fn aggregate_specimens(histograms: &[PerfusionHistogram]) -> Result<SpecimenAggregate> {
    let first = histograms.first().ok_or_else(|| Error::InvalidParameter("no histograms to aggregate".into()))?;
    let w = first.bin_width_um;
    if let Some(h) = histograms.iter().find(|h| h.bin_width_um != w) {
        return Err(Error::GridMismatch(format!("bin width {} vs {}", h.bin_width_um, w)));
    }
    let bins = histograms.iter().map(|h| h.counts.len()).max().unwrap_or(0);
    let freqs: Vec<Vec<f64>> = histograms
        .iter()
        .map(|h| {
            let mut f = h.frequencies();
            f.resize(bins, 0.0);
            f
        })
        .collect();
    let (mean, std) = (0..bins)
        .map(|b| {
            let col: Vec<f64> = freqs.iter().map(|f| f[b]).collect();
            mean_std(&col)
        })
        .unzip();
    Ok(SpecimenAggregate { bin_width_um: w, mean, std, n_specimens: histograms.len() })
}
