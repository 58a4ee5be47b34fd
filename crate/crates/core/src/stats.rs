//! Morphometric statistics over a measured vessel tree.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::VesselTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub generation: u32,
    pub count: usize,
    pub diam_mean: f64,
    pub diam_std: f64,
    pub len_mean: f64,
    pub len_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    pub rows: Vec<GenerationRow>,
}

impl GenerationStats {
    pub fn counts(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.count).collect()
    }
}

/// Sample mean and (n-1) standard deviation; std is 0 for a single value.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub fn generation_stats(tree: &VesselTree) -> GenerationStats {
    let max_gen = tree.max_generation();
    let rows = (1..=max_gen)
        .map(|g| {
            let members: Vec<_> = tree.segments.iter().filter(|s| s.generation == g).collect();
            let d: Vec<f64> = members.iter().map(|s| s.diameter_um).collect();
            let l: Vec<f64> = members.iter().map(|s| s.length_um).collect();
            let (diam_mean, diam_std) = mean_std(&d);
            let (len_mean, len_std) = mean_std(&l);
            GenerationRow { generation: g, count: members.len(), diam_mean, diam_std, len_mean, len_std }
        })
        .collect();
    GenerationStats { rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulativePoint {
    pub d_um: f64,
    /// Number of segments with diameter strictly greater than `d_um`.
    #[serde(rename = "N")]
    pub n: usize,
}

/// `N(d) = #{segments : diameter > d}` at every distinct segment diameter.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeDistribution {
    /// Ascending in `d_um`; `n` is non-increasing.
    pub points: Vec<CumulativePoint>,
    pub total: usize,
    sorted: Vec<f64>,
}

impl CumulativeDistribution {
    pub fn from_diameters(diameters: &[f64]) -> Self {
        let mut sorted: Vec<f64> = diameters.to_vec();
        sorted.sort_by(f64::total_cmp);
        let total = sorted.len();
        let mut points: Vec<CumulativePoint> = Vec::new();
        for (i, &d) in sorted.iter().enumerate() {
            if i + 1 < total && sorted[i + 1] == d {
                continue;
            }
            points.push(CumulativePoint { d_um: d, n: total - (i + 1) });
        }
        CumulativeDistribution { points, total, sorted }
    }

    /// `N(d)` at an arbitrary threshold.
    pub fn count_above(&self, d: f64) -> usize {
        self.total - self.sorted.partition_point(|&x| x <= d)
    }
}

pub fn cumulative_distribution(tree: &VesselTree) -> CumulativeDistribution {
    let d: Vec<f64> = tree.segments.iter().map(|s| s.diameter_um).collect();
    CumulativeDistribution::from_diameters(&d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub gamma: f64,
    pub r2: f64,
    pub intercept: f64,
    /// Diameter range (µm) of the points used.
    pub window: [f64; 2],
    pub n_points: usize,
}

/// Distinct diameters excluded from the top of the default fit window.
pub const DEFAULT_EXCLUDE_LARGEST: usize = 3;
/// Points with `N(d)` above this fraction of all segments are excluded by default.
pub const DEFAULT_MAX_COUNT_FRACTION: f64 = 0.9;

/// Least-squares fit of `log N = -gamma * log d + c`.
///
/// With `window = None` the intermediate region is used: the three largest
/// distinct diameters and every point with `N(d) > 0.9 * total` are dropped.
/// An explicit window keeps points with `dmin <= d <= dmax`. Only points with
/// `N > 0` are fitted.
pub fn fit_power_law(dist: &CumulativeDistribution, window: Option<[f64; 2]>) -> Result<PowerLawFit> {
    let pts: Vec<(f64, f64)> = match window {
        Some([lo, hi]) => {
            if lo.partial_cmp(&hi).is_none_or(|o| o.is_gt()) {
                return Err(Error::InvalidParameter(format!("fit window [{lo}, {hi}] is empty")));
            }
            dist.points
                .iter()
                .filter(|p| p.d_um >= lo && p.d_um <= hi && p.n > 0)
                .map(|p| (p.d_um, p.n as f64))
                .collect()
        }
        None => {
            let limit = DEFAULT_MAX_COUNT_FRACTION * dist.total as f64;
            let keep = dist.points.len().saturating_sub(DEFAULT_EXCLUDE_LARGEST);
            dist.points[..keep]
                .iter()
                .filter(|p| p.n > 0 && p.n as f64 <= limit)
                .map(|p| (p.d_um, p.n as f64))
                .collect()
        }
    };
    fit_points(&pts)
}

/// Ordinary least squares of `ln N` on `ln d` over `(d, N)` pairs.
pub fn fit_points(pts: &[(f64, f64)]) -> Result<PowerLawFit> {
    let pts: Vec<(f64, f64)> = pts.iter().copied().filter(|p| p.0 > 0.0 && p.1 > 0.0).collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(pts.len()));
    }
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData(1));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(PowerLawFit { gamma: -slope, r2, intercept: my - slope * mx, window: [lo, hi], n_points: pts.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MurrayPoint {
    /// Parent segment id.
    pub node_id: usize,
    pub d_parent: f64,
    pub d_child1: f64,
    pub d_child2: f64,
    /// `None` when no exponent in (0, 10] satisfies the relation.
    pub k: Option<f64>,
}

impl MurrayPoint {
    pub fn defined(&self) -> bool {
        self.k.is_some()
    }
}

pub const MURRAY_K_MAX: f64 = 10.0;
pub const MURRAY_TOL: f64 = 1e-9;

/// Solve `dp^k = d1^k + d2^k` for `k` in (0, 10] by bisection.
pub fn murray_exponent(dp: f64, d1: f64, d2: f64) -> Option<f64> {
    if !(dp > 0.0 && d1 > 0.0 && d2 > 0.0) || d1.max(d2) >= dp {
        return None;
    }
    let (a, b) = (d1 / dp, d2 / dp);
    // decreasing in k: h(0) = 1, h(inf) = -1
    let h = |k: f64| a.powf(k) + b.powf(k) - 1.0;
    if h(MURRAY_K_MAX) > 0.0 {
        return None;
    }
    let (mut lo, mut hi) = (0.0f64, MURRAY_K_MAX);
    while hi - lo > MURRAY_TOL {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Exponent at every segment with exactly two children.
pub fn murray_exponents(tree: &VesselTree) -> Vec<MurrayPoint> {
    tree.segments
        .iter()
        .filter(|s| s.children.len() == 2)
        .map(|s| {
            let d1 = tree.segments[s.children[0]].diameter_um;
            let d2 = tree.segments[s.children[1]].diameter_um;
            MurrayPoint {
                node_id: s.id,
                d_parent: s.diameter_um,
                d_child1: d1,
                d_child2: d2,
                k: murray_exponent(s.diameter_um, d1, d2),
            }
        })
        .collect()
}
