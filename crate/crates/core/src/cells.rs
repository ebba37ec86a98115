//! Regression sufficient statistics over rectangular regions.
//!
//! The moment block of a set of rows is the upper triangle of `sum z z^T` with
//! `z = (1, x_1 - c_1, ..., x_d - c_d, y - c_y)`, where `c` are whole-sample
//! means. [`CellTable`] keeps a d-dimensional summed-area table of these blocks
//! over grid cells, so any region query costs `2^d` corner lookups.

use crate::data::Dataset;
use crate::grid::{QuantileGrid, Region};

/// Index of entry `(a, b)`, `a <= b`, in a packed upper triangle of order `q`.
#[inline]
pub(crate) fn packed(q: usize, a: usize, b: usize) -> usize {
    debug_assert!(a <= b && b < q);
    a * (2 * q - a + 1) / 2 + (b - a)
}

pub(crate) fn block_len(d: usize) -> usize {
    let q = d + 2;
    q * (q + 1) / 2
}

/// Neumaier-compensated accumulator over a fixed-length block.
struct Compensated {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl Compensated {
    fn new(len: usize) -> Self {
        Compensated { sum: vec![0.0; len], comp: vec![0.0; len] }
    }

    #[inline]
    fn add(&mut self, k: usize, x: f64) {
        let s = self.sum[k];
        let t = s + x;
        if s.abs() >= x.abs() {
            self.comp[k] += (s - t) + x;
        } else {
            self.comp[k] += (x - t) + s;
        }
        self.sum[k] = t;
    }

    fn finish(self) -> Vec<f64> {
        self.sum.iter().zip(&self.comp).map(|(s, c)| s + c).collect()
    }
}

#[inline]
fn accumulate_row(acc: &mut Compensated, base: usize, z: &[f64]) {
    let q = z.len();
    let mut k = base;
    for a in 0..q {
        for b in a..q {
            acc.add(k, z[a] * z[b]);
            k += 1;
        }
    }
}

/// Whole-sample means used as centering offsets: `d` covariate means then the
/// response mean.
pub fn column_means(ds: &Dataset) -> Vec<f64> {
    let d = ds.d();
    let mut acc = Compensated::new(d + 1);
    for i in 0..ds.n() {
        for (j, &v) in ds.row(i).iter().enumerate() {
            acc.add(j, v);
        }
        acc.add(d, ds.y()[i]);
    }
    let n = ds.n() as f64;
    acc.finish().into_iter().map(|s| s / n).collect()
}

/// Moment block of one set of rows (centered storage plus the offsets).
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    d: usize,
    block: Vec<f64>,
    offsets: Vec<f64>,
}

impl SufficientStats {
    pub(crate) fn from_block(d: usize, block: Vec<f64>, offsets: Vec<f64>) -> Self {
        debug_assert_eq!(block.len(), block_len(d));
        SufficientStats { d, block, offsets }
    }

    /// Direct accumulation over `rows`, centered at `offsets`.
    pub fn from_rows(ds: &Dataset, rows: &[usize], offsets: &[f64]) -> Self {
        let d = ds.d();
        let mut acc = Compensated::new(block_len(d));
        let mut z = vec![0.0; d + 2];
        z[0] = 1.0;
        for &i in rows {
            fill_z(&mut z, ds.row(i), ds.y()[i], offsets);
            accumulate_row(&mut acc, 0, &z);
        }
        SufficientStats { d, block: acc.finish(), offsets: offsets.to_vec() }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Packed moment block about the stored offsets.
    pub fn block(&self) -> &[f64] {
        &self.block
    }

    pub fn count(&self) -> usize {
        self.block[0].round() as usize
    }

    #[inline]
    fn c(&self, a: usize, b: usize) -> f64 {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.block[packed(self.d + 2, a, b)]
    }

    #[inline]
    fn offset(&self, a: usize) -> f64 {
        if a == 0 {
            0.0
        } else {
            self.offsets[a - 1]
        }
    }

    /// Uncentered-equivalent entry of `sum z z^T` with `z = (1, x, y)`.
    fn raw(&self, a: usize, b: usize) -> f64 {
        let (ca, cb) = (self.offset(a), self.offset(b));
        self.c(a, b) + cb * self.c(0, a) + ca * self.c(0, b) + ca * cb * self.c(0, 0)
    }

    fn y_index(&self) -> usize {
        self.d + 1
    }

    pub fn sum_x(&self, j: usize) -> f64 {
        self.raw(0, j + 1)
    }

    pub fn sum_xx(&self, j: usize, k: usize) -> f64 {
        self.raw(j + 1, k + 1)
    }

    pub fn sum_y(&self) -> f64 {
        self.raw(0, self.y_index())
    }

    pub fn sum_xy(&self, j: usize) -> f64 {
        self.raw(j + 1, self.y_index())
    }

    pub fn sum_yy(&self) -> f64 {
        self.raw(self.y_index(), self.y_index())
    }

    /// Mean of covariate `j` over the rows.
    pub fn mean_x(&self, j: usize) -> f64 {
        self.c(0, j + 1) / self.c(0, 0) + self.offsets[j]
    }

    pub fn mean_y(&self) -> f64 {
        self.c(0, self.y_index()) / self.c(0, 0) + self.offsets[self.d]
    }

    /// Cross-product about the region means, `sum (x_j - xbar_j)(x_k - xbar_k)`.
    /// Indices `d` address the response.
    pub fn centered_cross(&self, j: usize, k: usize) -> f64 {
        let n = self.c(0, 0);
        let (a, b) = (j + 1, k + 1);
        self.c(a, b) - self.c(0, a) * self.c(0, b) / n
    }

    /// Uncentered-equivalent block as `(count, sums, cross-products)` over
    /// `z = (1, x, y)`, packed upper triangular.
    pub fn raw_block(&self) -> Vec<f64> {
        let q = self.d + 2;
        let mut out = Vec::with_capacity(block_len(self.d));
        for a in 0..q {
            for b in a..q {
                out.push(self.raw(a, b));
            }
        }
        out
    }
}

#[inline]
fn fill_z(z: &mut [f64], x: &[f64], y: f64, offsets: &[f64]) {
    let d = x.len();
    for j in 0..d {
        z[j + 1] = x[j] - offsets[j];
    }
    z[d + 1] = y - offsets[d];
}

/// Anything that can answer region moment queries.
pub trait RegionStats: Sync {
    fn n(&self) -> usize;
    fn d(&self) -> usize;
    fn stats(&self, r: &Region) -> SufficientStats;
    fn count(&self, r: &Region) -> usize;

    /// Writes the packed moment block of `r` (see [`SufficientStats::block`]).
    fn block_into(&self, r: &Region, out: &mut [f64]) {
        out.copy_from_slice(self.stats(r).block());
    }
}

/// Cell index of every row, per dimension (`1..=m_j + 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct CellIndex {
    d: usize,
    cells: Vec<usize>,
}

impl CellIndex {
    pub fn build(ds: &Dataset, grid: &QuantileGrid) -> Self {
        let d = ds.d();
        let mut cells = Vec::with_capacity(ds.n() * d);
        for i in 0..ds.n() {
            for (j, &v) in ds.row(i).iter().enumerate() {
                cells.push(grid.cell_index(j, v));
            }
        }
        CellIndex { d, cells }
    }

    pub fn n(&self) -> usize {
        self.cells.len() / self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[usize] {
        &self.cells[i * self.d..(i + 1) * self.d]
    }

    /// Rows inside `r` under the half-open membership rule, ascending.
    pub fn rows_in(&self, r: &Region) -> Vec<usize> {
        (0..self.n()).filter(|&i| r.contains_cells(self.row(i))).collect()
    }
}

/// Summed-area table of moment blocks over the grid cells.
#[derive(Debug, Clone)]
pub struct CellTable {
    d: usize,
    n: usize,
    k: usize,
    strides: Vec<usize>,
    cum: Vec<f64>,
    offsets: Vec<f64>,
}

impl CellTable {
    pub fn build(ds: &Dataset, grid: &QuantileGrid) -> Self {
        let cells = CellIndex::build(ds, grid);
        Self::build_with_cells(ds, grid, &cells)
    }

    pub fn build_with_cells(ds: &Dataset, grid: &QuantileGrid, cells: &CellIndex) -> Self {
        let offsets = column_means(ds);
        Self::build_centered(ds, grid, cells, offsets)
    }

    /// Builds with explicit centering offsets (d covariate offsets then y).
    pub fn build_centered(
        ds: &Dataset,
        grid: &QuantileGrid,
        cells: &CellIndex,
        offsets: Vec<f64>,
    ) -> Self {
        let d = ds.d();
        let k = block_len(d);
        // extent m_j + 2: index 0 is the zero slab, cells occupy 1..=m_j+1
        let extents: Vec<usize> = (0..d).map(|j| grid.size(j) + 2).collect();
        let mut strides = vec![1usize; d];
        for j in (0..d.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * extents[j + 1];
        }
        let total: usize = extents.iter().product();

        let mut acc = Compensated::new(total * k);
        let mut z = vec![0.0; d + 2];
        z[0] = 1.0;
        for i in 0..ds.n() {
            let flat: usize = cells.row(i).iter().zip(&strides).map(|(c, s)| c * s).sum();
            fill_z(&mut z, ds.row(i), ds.y()[i], &offsets);
            accumulate_row(&mut acc, flat * k, &z);
        }
        let mut cum = acc.finish();

        // running sums along each axis, compensated within a pass
        let mut comp = vec![0.0; cum.len()];
        for j in 0..d {
            let s = strides[j];
            for f in 0..total {
                if (f / s) % extents[j] == 0 {
                    continue;
                }
                let prev = (f - s) * k;
                let cur = f * k;
                for e in 0..k {
                    let run = cum[prev + e];
                    let x = cum[cur + e];
                    let t = run + x;
                    let err = if run.abs() >= x.abs() { (run - t) + x } else { (x - t) + run };
                    cum[cur + e] = t;
                    comp[cur + e] = comp[prev + e] + err;
                }
            }
            for (v, c) in cum.iter_mut().zip(comp.iter_mut()) {
                *v += *c;
                *c = 0.0;
            }
        }

        CellTable { d, n: ds.n(), k, strides, cum, offsets }
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// Inclusion-exclusion over the `2^d` corners, written into `out`.
    #[inline]
    fn query_into(&self, r: &Region, out: &mut [f64], entries: usize) {
        out[..entries].iter_mut().for_each(|v| *v = 0.0);
        for mask in 0..(1usize << self.d) {
            let mut flat = 0;
            let mut negative = false;
            for j in 0..self.d {
                if mask >> j & 1 == 1 {
                    flat += r.lo[j] * self.strides[j];
                    negative = !negative;
                } else {
                    flat += r.hi[j] * self.strides[j];
                }
            }
            let base = flat * self.k;
            let src = &self.cum[base..base + entries];
            if negative {
                out[..entries].iter_mut().zip(src).for_each(|(o, s)| *o -= s);
            } else {
                out[..entries].iter_mut().zip(src).for_each(|(o, s)| *o += s);
            }
        }
    }
}

impl RegionStats for CellTable {
    fn n(&self) -> usize {
        self.n
    }

    fn d(&self) -> usize {
        self.d
    }

    fn stats(&self, r: &Region) -> SufficientStats {
        let mut block = vec![0.0; self.k];
        self.block_into(r, &mut block);
        SufficientStats::from_block(self.d, block, self.offsets.clone())
    }

    fn block_into(&self, r: &Region, out: &mut [f64]) {
        self.query_into(r, out, self.k);
        let count = out[0].round();
        if count < 0.5 {
            out.iter_mut().for_each(|v| *v = 0.0);
        } else {
            out[0] = count;
        }
    }

    fn count(&self, r: &Region) -> usize {
        let mut c = [0.0];
        self.query_into(r, &mut c, 1);
        c[0].round().max(0.0) as usize
    }
}

/// Region queries answered by scanning the rows. Oracle for [`CellTable`] and
/// a fallback when `2^d` corner lookups are slower than a pass over the data.
#[derive(Debug, Clone)]
pub struct DirectScan {
    ds: Dataset,
    cells: CellIndex,
    offsets: Vec<f64>,
}

impl DirectScan {
    pub fn new(ds: &Dataset, grid: &QuantileGrid) -> Self {
        DirectScan {
            ds: ds.clone(),
            cells: CellIndex::build(ds, grid),
            offsets: column_means(ds),
        }
    }
}

impl RegionStats for DirectScan {
    fn n(&self) -> usize {
        self.ds.n()
    }

    fn d(&self) -> usize {
        self.ds.d()
    }

    fn stats(&self, r: &Region) -> SufficientStats {
        SufficientStats::from_rows(&self.ds, &self.cells.rows_in(r), &self.offsets)
    }

    fn count(&self, r: &Region) -> usize {
        (0..self.cells.n())
            .filter(|&i| r.contains_cells(self.cells.row(i)))
            .count()
    }
}

/// Either backend, chosen at run time.
#[derive(Debug, Clone)]
pub enum StatsBackend {
    Table(CellTable),
    Direct(DirectScan),
}

impl StatsBackend {
    pub fn build(ds: &Dataset, grid: &QuantileGrid, direct: bool) -> Self {
        if direct {
            StatsBackend::Direct(DirectScan::new(ds, grid))
        } else {
            StatsBackend::Table(CellTable::build(ds, grid))
        }
    }
}

impl RegionStats for StatsBackend {
    fn n(&self) -> usize {
        match self {
            StatsBackend::Table(t) => t.n(),
            StatsBackend::Direct(s) => s.n(),
        }
    }

    fn d(&self) -> usize {
        match self {
            StatsBackend::Table(t) => t.d(),
            StatsBackend::Direct(s) => s.d(),
        }
    }

    fn stats(&self, r: &Region) -> SufficientStats {
        match self {
            StatsBackend::Table(t) => t.stats(r),
            StatsBackend::Direct(s) => s.stats(r),
        }
    }

    fn count(&self, r: &Region) -> usize {
        match self {
            StatsBackend::Table(t) => t.count(r),
            StatsBackend::Direct(s) => s.count(r),
        }
    }

    fn block_into(&self, r: &Region, out: &mut [f64]) {
        match self {
            StatsBackend::Table(t) => t.block_into(r, out),
            StatsBackend::Direct(s) => s.block_into(r, out),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::enumerate_boxes;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..d)
            .map(|_| (0..n).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y = (0..n).map(|i| 1.0 + cols[0][i] + rng.random::<f64>()).collect();
        let names = (1..=d).map(|j| format!("x{j}")).collect();
        Dataset::from_columns(names, &cols, y, "y".into()).unwrap()
    }

    /// Uncentered moments by direct summation, the oracle for all queries.
    fn direct_raw(ds: &Dataset, rows: &[usize]) -> Vec<f64> {
        let d = ds.d();
        let q = d + 2;
        let mut out = vec![0.0; block_len(d)];
        for &i in rows {
            let mut z = vec![1.0];
            z.extend_from_slice(ds.row(i));
            z.push(ds.y()[i]);
            let mut k = 0;
            for a in 0..q {
                for b in a..q {
                    out[k] += z[a] * z[b];
                    k += 1;
                }
            }
        }
        out
    }

    fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                if *y == 0.0 {
                    x.abs()
                } else {
                    (x - y).abs() / y.abs()
                }
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn single_row_table() {
        let ds = Dataset::from_columns(
            vec!["a".into()],
            &[vec![0.3, 0.9, 0.5]],
            vec![1.0, 2.0, 4.0],
            "y".into(),
        )
        .unwrap();
        let grid = QuantileGrid::from_cuts(vec![vec![0.4, 0.6]]).unwrap();
        let table = CellTable::build(&ds, &grid);
        // cell (0.4, 0.6] holds only the row with a = 0.5
        let s = table.stats(&Region::new(vec![1], vec![2]));
        assert_eq!(s.count(), 1);
        let means = column_means(&ds);
        let (wx, wy) = (0.5 - means[0], 4.0 - means[1]);
        let expect = [1.0, wx, wy, wx * wx, wx * wy, wy * wy];
        assert!(max_rel_err(&s.block, &expect) < 1e-12);
        assert!((s.sum_x(0) - 0.5).abs() < 1e-15);
        assert!((s.sum_xy(0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn single_row_dataset_first_moments_vanish() {
        let ds = Dataset::from_columns(
            vec!["a".into()],
            &[vec![0.5, 0.5, 0.5]],
            vec![1.0, 1.0, 1.0],
            "y".into(),
        )
        .unwrap();
        let grid = QuantileGrid::from_cuts(vec![vec![0.4, 0.6]]).unwrap();
        let s = CellTable::build(&ds, &grid).stats(&Region::new(vec![1], vec![2]));
        assert_eq!(s.count(), 3);
        assert!(s.block[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn all_space_equals_whole_sample() {
        let ds = dataset(500, 3, 7);
        let grid = QuantileGrid::build(&ds, &[15, 5, 5]).unwrap();
        let table = CellTable::build(&ds, &grid);
        let all = table.stats(&Region::all_space(&grid));
        let rows: Vec<usize> = (0..ds.n()).collect();
        assert_eq!(all.count(), 500);
        assert!(max_rel_err(&all.raw_block(), &direct_raw(&ds, &rows)) < 1e-12);
    }

    #[test]
    fn cell_counts_sum_to_n_and_are_nonnegative() {
        let ds = dataset(300, 2, 8);
        let grid = QuantileGrid::build(&ds, &[7, 4]).unwrap();
        let table = CellTable::build(&ds, &grid);
        let mut total = 0;
        for c0 in 1..=grid.size(0) + 1 {
            for c1 in 1..=grid.size(1) + 1 {
                let cell = Region::new(vec![c0 - 1, c1 - 1], vec![c0, c1]);
                let s = table.stats(&cell);
                assert!(s.block[0] >= 0.0);
                total += s.count();
            }
        }
        assert_eq!(total, 300);
    }

    #[test]
    fn empty_region_is_all_zero() {
        let ds = dataset(50, 2, 9);
        let grid = QuantileGrid::from_cuts(vec![vec![2.0, 3.0], vec![0.5]]).unwrap();
        let s = CellTable::build(&ds, &grid).stats(&Region::new(vec![1, 0], vec![2, 2]));
        assert_eq!(s.count(), 0);
        assert!(s.block.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn table_matches_direct_scan_on_random_regions() {
        let ds = dataset(1000, 3, 11);
        let grid = QuantileGrid::build(&ds, &[15, 5, 5]).unwrap();
        let table = CellTable::build(&ds, &grid);
        let cells = CellIndex::build(&ds, &grid);
        let boxes = enumerate_boxes(&grid);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let r = &boxes[rng.random_range(0..boxes.len())];
            let got = table.stats(r).raw_block();
            let want = direct_raw(&ds, &cells.rows_in(r));
            worst = worst.max(max_rel_err(&got, &want));
        }
        assert!(worst <= 1e-9, "max relative error {worst}");
    }

    #[test]
    fn direct_backend_agrees_with_table() {
        let ds = dataset(200, 2, 12);
        let grid = QuantileGrid::build(&ds, &[6, 4]).unwrap();
        let table = StatsBackend::build(&ds, &grid, false);
        let direct = StatsBackend::build(&ds, &grid, true);
        for r in enumerate_boxes(&grid).iter().step_by(7) {
            assert_eq!(table.count(r), direct.count(r));
            let (a, b) = (table.stats(r), direct.stats(r));
            if a.count() > 0 {
                assert!(max_rel_err(&a.raw_block(), &b.raw_block()) < 1e-9);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn region_query_matches_row_scan(seed in 0u64..10_000, pick in 0usize..10_000) {
            let ds = dataset(120, 3, seed);
            let grid = QuantileGrid::build(&ds, &[5, 4, 3]).unwrap();
            let table = CellTable::build(&ds, &grid);
            let boxes = enumerate_boxes(&grid);
            let r = &boxes[pick % boxes.len()];
            let rows = CellIndex::build(&ds, &grid).rows_in(r);
            let got = table.stats(r);
            prop_assert_eq!(got.count(), rows.len());
            if !rows.is_empty() {
                prop_assert!(max_rel_err(&got.raw_block(), &direct_raw(&ds, &rows)) <= 1e-9);
            }
        }

        #[test]
        fn counts_are_monotone_and_additive(seed in 0u64..10_000, pick in 0usize..10_000, split in 0usize..100) {
            let ds = dataset(150, 2, seed);
            let grid = QuantileGrid::build(&ds, &[6, 5]).unwrap();
            let table = CellTable::build(&ds, &grid);
            let boxes = enumerate_boxes(&grid);
            let r = &boxes[pick % boxes.len()];
            // enlarging never decreases the count
            for j in 0..2 {
                let mut big = r.clone();
                big.hi[j] = (big.hi[j] + 1).min(grid.size(j) + 1);
                big.lo[j] = big.lo[j].saturating_sub(1);
                prop_assert!(table.count(&big) >= table.count(r));
            }
            // splitting dimension j at any interior index partitions the count
            let j = split % 2;
            if r.hi[j] > r.lo[j] + 1 {
                let cut = r.lo[j] + 1 + split % (r.hi[j] - r.lo[j] - 1);
                let (mut left, mut right) = (r.clone(), r.clone());
                left.hi[j] = cut;
                right.lo[j] = cut;
                prop_assert_eq!(table.count(&left) + table.count(&right), table.count(r));
            }
        }
    }
}
