//! Region scans, per-point argmax, ranked features and their disjoint cells.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cells::{CellIndex, RegionStats};
use crate::error::{Error, Result};
use crate::fit::{h0_noise_t1, OlsScratch};
use crate::grid::{GridPoint, QuantileGrid, Region};

/// Statistic maximized over regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// OLS t-statistic of the interest slope.
    #[default]
    Ols,
    /// Efficacy-calibrated statistic with the noise taken off the interest axis.
    H0Noise,
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ols" => Ok(Criterion::Ols),
            "h0-noise" => Ok(Criterion::H0Noise),
            _ => Err(Error::config("efficacy-scan", format!("unknown criterion `{s}`"))),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Ols => "ols",
            Criterion::H0Noise => "h0-noise",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanEntry {
    pub region_id: usize,
    pub region: Region,
    pub t: f64,
    pub beta1: f64,
    pub n_h: usize,
    /// Share of rows inside the region's projection on the non-interest axes.
    pub coverage_fraction: f64,
}

/// Surviving regions in region-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub entries: Vec<ScanEntry>,
}

impl ScanResult {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, region_id: usize) -> Option<&ScanEntry> {
        self.entries
            .binary_search_by_key(&region_id, |e| e.region_id)
            .ok()
            .map(|k| &self.entries[k])
    }
}

/// Fits every region; those that cannot be fit (too few rows, singular Gram
/// matrix) are left out. `region_id` is the position in `regions`.
pub fn scan_all<S: RegionStats + ?Sized>(
    stats: &S,
    grid: &QuantileGrid,
    regions: &[Region],
    criterion: Criterion,
) -> ScanResult {
    let d = stats.d();
    let n = stats.n() as f64;
    let entries = regions
        .par_iter()
        .enumerate()
        .map_init(
            || OlsScratch::new(d),
            |scratch, (id, r)| {
                let fit = scratch.region_t1(stats, r)?;
                let t = match criterion {
                    Criterion::Ols => fit.t,
                    Criterion::H0Noise => h0_noise_t1(stats, grid, r),
                };
                if !t.is_finite() {
                    return None;
                }
                Some(ScanEntry {
                    region_id: id,
                    region: r.clone(),
                    t,
                    beta1: fit.beta1,
                    n_h: fit.n,
                    coverage_fraction: stats.count(&r.unrestricted(grid, 0)) as f64 / n,
                })
            },
        )
        .flatten()
        .collect();
    ScanResult { entries }
}

/// Ranking order: larger `|t|`, then larger `n_h`, then smaller region id.
pub fn rank_order(a: &ScanEntry, b: &ScanEntry) -> Ordering {
    b.t.abs()
        .total_cmp(&a.t.abs())
        .then(b.n_h.cmp(&a.n_h))
        .then(a.region_id.cmp(&b.region_id))
}

/// Points at which the per-point argmax is taken.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalSet {
    /// Interior grid points, contained when `lo_j <= p_j <= hi_j`.
    Grid(Vec<GridPoint>),
    /// Data rows given by cell indices, contained under the half-open rule.
    Rows(Vec<Vec<usize>>),
}

impl EvalSet {
    pub fn grid(grid: &QuantileGrid) -> Self {
        EvalSet::Grid(grid.grid_points())
    }

    pub fn rows(cells: &CellIndex) -> Self {
        EvalSet::Rows((0..cells.n()).map(|i| cells.row(i).to_vec()).collect())
    }

    pub fn len(&self) -> usize {
        match self {
            EvalSet::Grid(p) => p.len(),
            EvalSet::Rows(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn contained(&self, k: usize, r: &Region) -> bool {
        match self {
            EvalSet::Grid(p) => r.contains_point(&p[k]),
            EvalSet::Rows(c) => r.contains_cells(&c[k]),
        }
    }
}

/// Region id of the best containing region for every evaluation point;
/// `None` marks an uncovered point.
pub fn best_region_per_point(scan: &ScanResult, eval: &EvalSet) -> Vec<Option<usize>> {
    (0..eval.len())
        .into_par_iter()
        .map(|k| {
            scan.entries
                .iter()
                .filter(|e| eval.contained(k, &e.region))
                .min_by(|a, b| rank_order(a, b))
                .map(|e| e.region_id)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub rank: usize,
    pub region_id: usize,
    pub region: Region,
    pub t: f64,
    pub beta1: f64,
    pub n_h: usize,
    pub coverage_fraction: f64,
    /// Rows inside the region, ascending.
    pub members: Vec<usize>,
}

/// Distinct regions of the mapping, ranked 1.. in [`rank_order`].
pub fn extract_features(
    scan: &ScanResult,
    mapping: &[Option<usize>],
    cells: &CellIndex,
) -> Vec<Feature> {
    let mut ids: Vec<usize> = mapping.iter().flatten().copied().collect();
    ids.sort_unstable();
    ids.dedup();
    let mut entries: Vec<&ScanEntry> = ids.iter().filter_map(|&id| scan.get(id)).collect();
    entries.sort_by(|a, b| rank_order(a, b));
    entries
        .into_iter()
        .enumerate()
        .map(|(k, e)| Feature {
            rank: k + 1,
            region_id: e.region_id,
            region: e.region.clone(),
            t: e.t,
            beta1: e.beta1,
            n_h: e.n_h,
            coverage_fraction: e.coverage_fraction,
            members: cells.rows_in(&e.region),
        })
        .collect()
}

/// Each covered row's disjoint cell: the smallest rank whose region holds it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePartition {
    /// Per data row, the 1-based feature rank, or `None` when uncovered.
    pub assignment: Vec<Option<usize>>,
}

impl FeaturePartition {
    pub fn covered_rows(&self) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i].is_some())
            .collect()
    }

    /// Rows assigned to `rank`.
    pub fn cell(&self, rank: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == Some(rank))
            .collect()
    }
}

pub fn partition_features(features: &[Feature], cells: &CellIndex) -> FeaturePartition {
    let mut ranked: Vec<&Feature> = features.iter().collect();
    ranked.sort_by_key(|f| f.rank);
    let assignment = (0..cells.n())
        .map(|i| {
            ranked
                .iter()
                .find(|f| f.region.contains_cells(cells.row(i)))
                .map(|f| f.rank)
        })
        .collect();
    FeaturePartition { assignment }
}
