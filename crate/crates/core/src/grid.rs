//! Quantile grids and rectangular candidate regions.
//!
//! Grid indices are 1-based: dimension `j` has cut values `g_1 < ... < g_m`.
//! Index 0 stands for `-inf` and `m + 1` for `+inf`, so a [`Region`] with
//! bounds `(a, b)` in dimension `j` holds the points with `g_a < x_j <= g_b`.

use crate::cells::RegionStats;
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Default grid size for the covariate of interest.
pub const DEFAULT_INTEREST_SIZE: usize = 15;
/// Default grid size for every other covariate.
pub const DEFAULT_OTHER_SIZE: usize = 5;

/// Smallest region occupancy kept by default: `max(d + 2, 10)`.
pub fn default_min_points(d: usize) -> usize {
    (d + 2).max(10)
}

pub fn default_sizes(d: usize, interest: usize, other: usize) -> Vec<usize> {
    let mut sizes = vec![other; d];
    if d > 0 {
        sizes[0] = interest;
    }
    sizes
}

/// Interior grid point: one 1-based cut index per dimension.
pub type GridPoint = Vec<usize>;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileGrid {
    cuts: Vec<Vec<f64>>,
}

impl QuantileGrid {
    /// Cut values are the `k / (m + 1)` sample quantiles, `k = 1..m`, using the
    /// lower order statistic (`sorted[floor(p * (n - 1))]`). Repeated quantiles
    /// collapse, so a dimension may end up with fewer than `m` cuts.
    pub fn build(ds: &Dataset, sizes: &[usize]) -> Result<Self> {
        if sizes.len() != ds.d() {
            return Err(Error::config(
                "grid",
                format!("{} grid sizes for {} covariates", sizes.len(), ds.d()),
            ));
        }
        let mut cuts = Vec::with_capacity(sizes.len());
        for (j, &m) in sizes.iter().enumerate() {
            let name = &ds.names()[j];
            if m < 2 {
                return Err(Error::config(
                    "grid",
                    format!("grid size for `{name}` must be at least 2, got {m}"),
                ));
            }
            if ds.n() < m {
                return Err(Error::insufficient(
                    "grid",
                    format!("{} rows cannot support {m} grid points for `{name}`", ds.n()),
                ));
            }
            let mut col = ds.column(j);
            col.sort_by(f64::total_cmp);
            if col[0] == col[col.len() - 1] {
                return Err(Error::insufficient(
                    "grid",
                    format!("column `{name}` is constant; its grid has zero width"),
                ));
            }
            cuts.push(lower_quantile_cuts(&col, m));
        }
        Ok(QuantileGrid { cuts })
    }

    /// Grid from explicit cut values; each dimension must be strictly increasing.
    pub fn from_cuts(cuts: Vec<Vec<f64>>) -> Result<Self> {
        if cuts.is_empty() {
            return Err(Error::config("grid", "grid needs at least one dimension"));
        }
        for (j, c) in cuts.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::config("grid", format!("dimension {j} has no cut values")));
            }
            if c.windows(2).any(|w| !(w[0] < w[1])) || c.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(
                    "grid",
                    format!("cut values of dimension {j} must be finite and strictly increasing"),
                ));
            }
        }
        Ok(QuantileGrid { cuts })
    }

    pub fn dims(&self) -> usize {
        self.cuts.len()
    }

    /// Number of cut values in dimension `j`.
    pub fn size(&self, j: usize) -> usize {
        self.cuts[j].len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.cuts.iter().map(Vec::len).collect()
    }

    pub fn cuts(&self, j: usize) -> &[f64] {
        &self.cuts[j]
    }

    /// Number of interior grid points, `prod m_j`.
    pub fn total_points(&self) -> usize {
        self.cuts.iter().map(Vec::len).product()
    }

    /// Real value of grid index `k` in dimension `j` (0 is `-inf`, `m+1` is `+inf`).
    pub fn value(&self, j: usize, k: usize) -> f64 {
        let m = self.cuts[j].len();
        if k == 0 {
            f64::NEG_INFINITY
        } else if k > m {
            f64::INFINITY
        } else {
            self.cuts[j][k - 1]
        }
    }

    /// Cell of `x` in dimension `j`: cell `c` covers `(g_{c-1}, g_c]`, in `1..=m+1`.
    #[inline]
    pub fn cell_index(&self, j: usize, x: f64) -> usize {
        self.cuts[j].partition_point(|&g| g < x) + 1
    }

    /// All interior grid points in lexicographic order (last dimension fastest).
    pub fn grid_points(&self) -> Vec<GridPoint> {
        let sizes = self.sizes();
        let mut out = Vec::with_capacity(self.total_points());
        let mut cur = vec![1usize; sizes.len()];
        loop {
            out.push(cur.clone());
            let mut j = sizes.len();
            loop {
                if j == 0 {
                    return out;
                }
                j -= 1;
                if cur[j] < sizes[j] {
                    cur[j] += 1;
                    break;
                }
                cur[j] = 1;
            }
        }
    }

    /// Interior grid point whose cut values are nearest to `coords`, per dimension.
    pub fn nearest_point(&self, coords: &[f64]) -> Result<GridPoint> {
        if coords.len() != self.dims() {
            return Err(Error::config(
                "grid",
                format!("point has {} coordinates, grid has {}", coords.len(), self.dims()),
            ));
        }
        Ok(coords
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let mut best = 1;
                for (k, &g) in self.cuts[j].iter().enumerate() {
                    if (g - x).abs() < (self.cuts[j][best - 1] - x).abs() {
                        best = k + 1;
                    }
                }
                best
            })
            .collect())
    }

    pub fn point_coords(&self, p: &GridPoint) -> Vec<f64> {
        p.iter().enumerate().map(|(j, &k)| self.value(j, k)).collect()
    }
}

fn lower_quantile_cuts(sorted: &[f64], m: usize) -> Vec<f64> {
    let n = sorted.len();
    let mut cuts: Vec<f64> = Vec::with_capacity(m);
    for k in 1..=m {
        let p = k as f64 / (m + 1) as f64;
        let idx = ((p * (n - 1) as f64).floor() as usize).min(n - 1);
        let v = sorted[idx];
        if cuts.last().map_or(true, |&last| v > last) {
            cuts.push(v);
        }
    }
    cuts
}

/// Axis-aligned box in grid-index coordinates; `(lo[j], hi[j]]` per dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Region {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
}

impl Region {
    pub fn new(lo: Vec<usize>, hi: Vec<usize>) -> Self {
        debug_assert_eq!(lo.len(), hi.len());
        debug_assert!(lo.iter().zip(&hi).all(|(a, b)| a <= b));
        Region { lo, hi }
    }

    /// The whole covariate space.
    pub fn all_space(grid: &QuantileGrid) -> Self {
        let d = grid.dims();
        Region {
            lo: vec![0; d],
            hi: (0..d).map(|j| grid.size(j) + 1).collect(),
        }
    }

    /// Box spanned by two grid points (per-dimension min/max of their indices).
    pub fn from_corners(p: &GridPoint, q: &GridPoint) -> Self {
        Region {
            lo: p.iter().zip(q).map(|(a, b)| *a.min(b)).collect(),
            hi: p.iter().zip(q).map(|(a, b)| *a.max(b)).collect(),
        }
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    /// Copy with dimension `j` widened to the whole real line.
    pub fn unrestricted(&self, grid: &QuantileGrid, j: usize) -> Region {
        let mut r = self.clone();
        r.lo[j] = 0;
        r.hi[j] = grid.size(j) + 1;
        r
    }

    /// Copy with every dimension except `j` widened to the whole real line.
    pub fn only(&self, grid: &QuantileGrid, j: usize) -> Region {
        let mut r = Region::all_space(grid);
        r.lo[j] = self.lo[j];
        r.hi[j] = self.hi[j];
        r
    }

    /// Grid-index containment of a grid point: `lo_j <= p_j <= hi_j`.
    #[inline]
    pub fn contains_point(&self, p: &[usize]) -> bool {
        p.iter()
            .enumerate()
            .all(|(j, &k)| self.lo[j] <= k && k <= self.hi[j])
    }

    /// Half-open membership of a data row given its cell indices.
    #[inline]
    pub fn contains_cells(&self, cells: &[usize]) -> bool {
        cells
            .iter()
            .enumerate()
            .all(|(j, &c)| self.lo[j] < c && c <= self.hi[j])
    }

    /// Half-open membership of a raw covariate vector.
    pub fn contains_values(&self, grid: &QuantileGrid, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(j, &v)| {
            grid.value(j, self.lo[j]) < v && v <= grid.value(j, self.hi[j])
        })
    }

    /// Real bounds `(lower, upper]` in dimension `j`.
    pub fn bounds(&self, grid: &QuantileGrid, j: usize) -> (f64, f64) {
        (grid.value(j, self.lo[j]), grid.value(j, self.hi[j]))
    }

    /// Calls `f` for every interior grid point contained in the region.
    pub fn for_each_point(&self, grid: &QuantileGrid, mut f: impl FnMut(&[usize])) {
        let d = self.dims();
        let lo: Vec<usize> = (0..d).map(|j| self.lo[j].max(1)).collect();
        let hi: Vec<usize> = (0..d).map(|j| self.hi[j].min(grid.size(j))).collect();
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return;
        }
        let mut cur = lo.clone();
        loop {
            f(&cur);
            let mut j = d;
            loop {
                if j == 0 {
                    return;
                }
                j -= 1;
                if cur[j] < hi[j] {
                    cur[j] += 1;
                    break;
                }
                cur[j] = lo[j];
            }
        }
    }
}

/// Candidate regions and enumeration bookkeeping.
#[derive(Debug, Clone)]
pub struct Enumeration {
    /// Unordered pairs of distinct interior grid points, `C(prod m_j, 2)`.
    pub pairs_enumerated: u64,
    /// Distinct boxes induced by those pairs.
    pub distinct_boxes: usize,
    /// Boxes with occupancy at least `min_points`, in enumeration order.
    pub regions: Vec<Region>,
}

/// Number of unordered pairs of distinct interior grid points.
pub fn pair_count(grid: &QuantileGrid) -> u64 {
    let n = grid.total_points() as u64;
    n * n.saturating_sub(1) / 2
}

/// Every distinct box spanned by a pair of distinct interior grid points.
///
/// A pair maps to per-dimension `(min, max)` indices, so the distinct boxes are
/// exactly the index boxes `a_j <= b_j` other than single points. They are
/// produced directly in lexicographic order instead of deduplicating the
/// `C(N, 2)` pairs.
pub fn enumerate_boxes(grid: &QuantileGrid) -> Vec<Region> {
    let d = grid.dims();
    let spans: Vec<Vec<(usize, usize)>> = (0..d)
        .map(|j| {
            let m = grid.size(j);
            (1..=m)
                .flat_map(|a| (a..=m).map(move |b| (a, b)))
                .collect()
        })
        .collect();
    let total: usize = spans.iter().map(Vec::len).product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    loop {
        let lo: Vec<usize> = (0..d).map(|j| spans[j][idx[j]].0).collect();
        let hi: Vec<usize> = (0..d).map(|j| spans[j][idx[j]].1).collect();
        if lo != hi {
            out.push(Region { lo, hi });
        }
        let mut j = d;
        loop {
            if j == 0 {
                return out;
            }
            j -= 1;
            if idx[j] + 1 < spans[j].len() {
                idx[j] += 1;
                break;
            }
            idx[j] = 0;
        }
    }
}

/// Enumerates candidate boxes and drops those with fewer than `min_points` rows.
pub fn enumerate_regions<S: RegionStats + ?Sized>(
    grid: &QuantileGrid,
    min_points: usize,
    stats: &S,
) -> Enumeration {
    let boxes = enumerate_boxes(grid);
    let distinct_boxes = boxes.len();
    let regions = boxes
        .into_iter()
        .filter(|r| stats.count(r) >= min_points)
        .collect();
    Enumeration {
        pairs_enumerated: pair_count(grid),
        distinct_boxes,
        regions,
    }
}
