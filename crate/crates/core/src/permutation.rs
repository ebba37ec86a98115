//! Permutation tests that shuffle the interest covariate.
//!
//! The candidate boxes are fixed from the observed grid; occupancy and rank
//! filters are applied afresh to every permuted dataset, so the observed and
//! replicate statistics are computed by exactly the same rule.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cells::{CellIndex, CellTable, RegionStats};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fit::{h0_noise_t1, OlsScratch};
use crate::grid::{GridPoint, QuantileGrid, Region};
use crate::rng::{permutation, replicate_stream};
use crate::scan::Criterion;

/// Smallest replicate count accepted.
pub const MIN_REPLICATES: usize = 19;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sided {
    #[default]
    Two,
    Left,
    Right,
}

impl Sided {
    #[inline]
    fn apply(self, t: f64) -> f64 {
        match self {
            Sided::Two => t.abs(),
            Sided::Right => t,
            Sided::Left => -t,
        }
    }
}

impl FromStr for Sided {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two" => Ok(Sided::Two),
            "left" => Ok(Sided::Left),
            "right" => Ok(Sided::Right),
            _ => Err(Error::config("permutation", format!("unknown sidedness `{s}`"))),
        }
    }
}

impl fmt::Display for Sided {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sided::Two => "two",
            Sided::Left => "left",
            Sided::Right => "right",
        })
    }
}

/// Aggregate of the per-point statistics in a global test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    Sum,
    /// Sum of squares of the positive parts.
    SumSq,
    #[default]
    Max,
}

impl Norm {
    fn aggregate(self, v: &[f64]) -> f64 {
        match self {
            Norm::Sum => v.iter().sum(),
            Norm::SumSq => v.iter().map(|s| s.max(0.0).powi(2)).sum(),
            Norm::Max => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Norm::Sum),
            "sumsq" => Ok(Norm::SumSq),
            "max" => Ok(Norm::Max),
            _ => Err(Error::config("permutation", format!("unknown norm `{s}`"))),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::Sum => "sum",
            Norm::SumSq => "sumsq",
            Norm::Max => "max",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermOptions {
    pub replicates: usize,
    pub alpha: f64,
    pub sided: Sided,
    pub seed: u64,
    pub min_points: usize,
    pub criterion: Criterion,
}

impl PermOptions {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < MIN_REPLICATES {
            return Err(Error::config(
                "permutation",
                format!("B must be at least {MIN_REPLICATES}, got {}", self.replicates),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(
                "permutation",
                format!("alpha must lie in (0, 1), got {}", self.alpha),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub observed: f64,
    pub critical: f64,
    pub pvalue: f64,
    pub b: usize,
    pub alpha: f64,
    pub seed: u64,
    pub replicates: Vec<f64>,
}

/// Empirical `(1 - alpha)` quantile: the `ceil((1 - alpha) B)`-th smallest.
pub fn critical_value(replicates: &[f64], alpha: f64) -> f64 {
    let mut sorted = replicates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    let k = (((1.0 - alpha) * b as f64) - 1e-9).ceil() as usize;
    sorted[k.clamp(1, b) - 1]
}

/// `(1 + #{replicate >= observed}) / (B + 1)`.
pub fn p_value(observed: f64, replicates: &[f64]) -> f64 {
    let exceed = replicates.iter().filter(|&&r| r >= observed).count();
    (1 + exceed) as f64 / (replicates.len() + 1) as f64
}

/// Candidate boxes with the evaluation points each contains.
struct Plan<'a> {
    grid: &'a QuantileGrid,
    regions: Vec<Region>,
    points: Vec<Vec<u32>>,
    n_points: usize,
    norm: Norm,
    opts: &'a PermOptions,
}

impl<'a> Plan<'a> {
    fn new(
        grid: &'a QuantileGrid,
        regions: &[Region],
        eval: &[GridPoint],
        norm: Norm,
        opts: &'a PermOptions,
    ) -> Result<Self> {
        for p in eval {
            let interior = p.len() == grid.dims()
                && p.iter().enumerate().all(|(j, &k)| k >= 1 && k <= grid.size(j));
            if !interior {
                return Err(Error::config(
                    "permutation",
                    format!("evaluation point {p:?} is not an interior grid point"),
                ));
            }
        }
        let mut kept = Vec::new();
        let mut points = Vec::new();
        for r in regions {
            let inside: Vec<u32> = (0..eval.len())
                .filter(|&k| r.contains_point(&eval[k]))
                .map(|k| k as u32)
                .collect();
            if !inside.is_empty() {
                kept.push(r.clone());
                points.push(inside);
            }
        }
        Ok(Plan { grid, regions: kept, points, n_points: eval.len(), norm, opts })
    }

    fn statistic(&self, ds: &Dataset) -> f64 {
        let cells = CellIndex::build(ds, self.grid);
        let table = CellTable::build_with_cells(ds, self.grid, &cells);
        let mut scratch = OlsScratch::new(ds.d());
        let mut best = vec![f64::NEG_INFINITY; self.n_points];
        for (r, pts) in self.regions.iter().zip(&self.points) {
            table.block_into(r, scratch.block_mut());
            if (scratch.block_mut()[0] as usize) < self.opts.min_points {
                continue;
            }
            let Some(fit) = scratch.full_t1() else {
                continue;
            };
            let t = match self.opts.criterion {
                Criterion::Ols => fit.t,
                Criterion::H0Noise => h0_noise_t1(&table, self.grid, r),
            };
            let s = self.opts.sided.apply(t);
            for &k in pts {
                let b = &mut best[k as usize];
                if s > *b {
                    *b = s;
                }
            }
        }
        // a point without any usable region scores 0
        let per_point: Vec<f64> = best
            .into_iter()
            .map(|v| if v == f64::NEG_INFINITY { 0.0 } else { v })
            .collect();
        self.norm.aggregate(&per_point)
    }

    fn run(&self, ds: &Dataset) -> PermutationResult {
        let observed = self.statistic(ds);
        let x1 = ds.column(0);
        let replicates: Vec<f64> = (0..self.opts.replicates)
            .into_par_iter()
            .map(|b| {
                let mut rng = replicate_stream(self.opts.seed, b);
                let perm = permutation(ds.n(), &mut rng);
                let shuffled: Vec<f64> = perm.iter().map(|&i| x1[i]).collect();
                self.statistic(&ds.with_interest_column(&shuffled))
            })
            .collect();
        PermutationResult {
            observed,
            critical: critical_value(&replicates, self.opts.alpha),
            pvalue: p_value(observed, &replicates),
            b: self.opts.replicates,
            alpha: self.opts.alpha,
            seed: self.opts.seed,
            replicates,
        }
    }
}

/// Max of the (signed or absolute) t over the regions containing `x0`.
pub fn pointwise_test(
    ds: &Dataset,
    grid: &QuantileGrid,
    regions: &[Region],
    x0: &GridPoint,
    opts: &PermOptions,
) -> Result<PermutationResult> {
    opts.validate()?;
    let plan = Plan::new(grid, regions, std::slice::from_ref(x0), Norm::Max, opts)?;
    Ok(plan.run(ds))
}

/// Norm over `eval` of the pointwise maxima.
pub fn global_test(
    ds: &Dataset,
    grid: &QuantileGrid,
    regions: &[Region],
    eval: &[GridPoint],
    norm: Norm,
    opts: &PermOptions,
) -> Result<PermutationResult> {
    opts.validate()?;
    if eval.is_empty() {
        return Err(Error::config("permutation", "empty evaluation set"));
    }
    let plan = Plan::new(grid, regions, eval, norm, opts)?;
    Ok(plan.run(ds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::enumerate_boxes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn opts(b: usize, seed: u64) -> PermOptions {
        PermOptions {
            replicates: b,
            alpha: 0.05,
            sided: Sided::Two,
            seed,
            min_points: 10,
            criterion: Criterion::Ols,
        }
    }

    fn data(n: usize, seed: u64, signal: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..n).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y = (0..n)
            .map(|i| signal * cols[0][i] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        Dataset::from_columns(vec!["a".into(), "b".into(), "c".into()], &cols, y, "y".into()).unwrap()
    }

    #[test]
    fn quantile_and_p_value_rules() {
        let reps: Vec<f64> = (1..=19).map(f64::from).collect();
        // ceil(0.95 * 19) = 19th smallest
        assert_eq!(critical_value(&reps, 0.05), 19.0);
        assert_eq!(critical_value(&reps, 0.5), 10.0);
        let hundred: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(critical_value(&hundred, 0.05), 95.0);
        assert_eq!(p_value(19.5, &reps), 1.0 / 20.0);
        assert_eq!(p_value(0.0, &reps), 1.0);
    }

    #[test]
    fn rejects_bad_options() {
        let ds = data(100, 1, 0.0);
        let grid = QuantileGrid::build(&ds, &[5, 3, 3]).unwrap();
        let boxes = enumerate_boxes(&grid);
        let few = opts(10, 1);
        assert!(matches!(pointwise_test(&ds, &grid, &boxes, &vec![2, 2, 2], &few), Err(Error::Config { .. })));
        let mut bad_alpha = opts(19, 1);
        bad_alpha.alpha = 1.0;
        assert!(pointwise_test(&ds, &grid, &boxes, &vec![2, 2, 2], &bad_alpha).is_err());
        assert!(pointwise_test(&ds, &grid, &boxes, &vec![0, 2, 2], &opts(19, 1)).is_err());
    }

    #[test]
    fn constant_response_gives_unit_p_value() {
        let ds = data(150, 2, 0.0).with_response(vec![1.0; 150]);
        let grid = QuantileGrid::build(&ds, &[6, 3, 3]).unwrap();
        let boxes = enumerate_boxes(&grid);
        let r = pointwise_test(&ds, &grid, &boxes, &vec![3, 2, 2], &opts(19, 3)).unwrap();
        assert_eq!(r.observed, 0.0);
        assert!(r.replicates.iter().all(|v| *v == 0.0));
        assert_eq!(r.pvalue, 1.0);
        let g = global_test(&ds, &grid, &boxes, &grid.grid_points(), Norm::Sum, &opts(19, 3)).unwrap();
        assert_eq!((g.observed, g.pvalue), (0.0, 1.0));
    }

    #[test]
    fn single_point_global_equals_pointwise() {
        let ds = data(200, 4, 0.5);
        let grid = QuantileGrid::build(&ds, &[8, 4, 4]).unwrap();
        let boxes = enumerate_boxes(&grid);
        let x0 = vec![4, 2, 3];
        let o = opts(39, 5);
        let p = pointwise_test(&ds, &grid, &boxes, &x0, &o).unwrap();
        for norm in [Norm::Sum, Norm::Max] {
            let g = global_test(&ds, &grid, &boxes, std::slice::from_ref(&x0), norm, &o).unwrap();
            assert_eq!(g, p);
        }
        let g = global_test(&ds, &grid, &boxes, std::slice::from_ref(&x0), Norm::SumSq, &o).unwrap();
        assert_eq!(g.pvalue, p.pvalue);
        assert_eq!(g.observed, p.observed * p.observed);
    }

    #[test]
    fn same_seed_same_result() {
        let ds = data(150, 6, 0.3);
        let grid = QuantileGrid::build(&ds, &[6, 3, 3]).unwrap();
        let boxes = enumerate_boxes(&grid);
        let a = pointwise_test(&ds, &grid, &boxes, &vec![3, 2, 2], &opts(29, 11)).unwrap();
        let b = pointwise_test(&ds, &grid, &boxes, &vec![3, 2, 2], &opts(29, 11)).unwrap();
        assert_eq!(a, b);
        let c = pointwise_test(&ds, &grid, &boxes, &vec![3, 2, 2], &opts(29, 12)).unwrap();
        assert_ne!(a.replicates, c.replicates);
    }

    #[test]
    fn one_sided_statistics_use_signed_t() {
        let ds = data(400, 8, -6.0);
        let grid = QuantileGrid::build(&ds, &[6, 4, 4]).unwrap();
        let boxes = enumerate_boxes(&grid);
        let mut o = opts(39, 2);
        o.sided = Sided::Left;
        let left = pointwise_test(&ds, &grid, &boxes, &vec![3, 2, 2], &o).unwrap();
        o.sided = Sided::Right;
        let right = pointwise_test(&ds, &grid, &boxes, &vec![3, 2, 2], &o).unwrap();
        assert!(left.pvalue <= 0.05);
        assert!(right.pvalue > 0.5);
    }

    #[test]
    fn replicate_distribution_does_not_depend_on_seed_set() {
        let ds = data(150, 9, 0.0);
        let grid = QuantileGrid::build(&ds, &[6, 3, 3]).unwrap();
        let boxes = enumerate_boxes(&grid);
        let a = pointwise_test(&ds, &grid, &boxes, &vec![3, 2, 2], &opts(300, 100)).unwrap();
        let b = pointwise_test(&ds, &grid, &boxes, &vec![3, 2, 2], &opts(300, 200)).unwrap();
        let stats = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
            (m, var)
        };
        let ((ma, va), (mb, vb)) = (stats(&a.replicates), stats(&b.replicates));
        let se = (va / 300.0 + vb / 300.0).sqrt();
        assert!((ma - mb).abs() < 4.0 * se, "{ma} vs {mb}");
        assert!((va.sqrt() / vb.sqrt() - 1.0).abs() < 0.25);
    }

    #[test]
    fn p_value_falls_as_local_slope_grows() {
        let base = data(200, 10, 0.0);
        let grid = QuantileGrid::build(&base, &[6, 3, 3]).unwrap();
        let boxes = enumerate_boxes(&grid);
        let region = Region::new(vec![1, 0, 0], vec![5, 4, 4]);
        let mut last = f64::INFINITY;
        for c in [0.0, 1.0, 3.0, 10.0] {
            let y: Vec<f64> = (0..base.n())
                .map(|i| {
                    let inside = region.contains_values(&grid, base.row(i));
                    base.y()[i] + if inside { c * base.x(i, 0) } else { 0.0 }
                })
                .collect();
            let ds = base.with_response(y);
            let p = pointwise_test(&ds, &grid, &boxes, &vec![3, 2, 2], &opts(99, 3)).unwrap().pvalue;
            assert!(p <= last, "p {p} after {last} at c = {c}");
            last = p;
        }
        assert!(last <= 0.02);
    }
}
