//! Per-feature model comparison by leave-one-out error curves over the
//! interest covariate.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fit::{fit_rows, loo_gamma_row, FitResult};
use crate::scan::{Feature, FeaturePartition};
use crate::smooth::{mesh, Smoother, MESH_POINTS};

/// Largest dimension for which `auto` enumerates every subset.
pub const EXHAUSTIVE_MAX_D: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectMode {
    /// Exhaustive up to [`EXHAUSTIVE_MAX_D`] covariates, backward beyond.
    #[default]
    Auto,
    Exhaustive,
    Backward,
}

impl FromStr for SelectMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SelectMode::Auto),
            "exhaustive" => Ok(SelectMode::Exhaustive),
            "backward" => Ok(SelectMode::Backward),
            _ => Err(Error::config("variable-select", format!("unknown selection mode `{s}`"))),
        }
    }
}

impl fmt::Display for SelectMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectMode::Auto => "auto",
            SelectMode::Exhaustive => "exhaustive",
            SelectMode::Backward => "backward",
        })
    }
}

/// How model curves are reported against the null curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveScale {
    #[default]
    Ratio,
    Difference,
}

impl FromStr for CurveScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio" => Ok(CurveScale::Ratio),
            "difference" => Ok(CurveScale::Difference),
            _ => Err(Error::config("variable-select", format!("unknown curve scale `{s}`"))),
        }
    }
}

/// Covariate subset with a stable id; id 0 is the intercept-only null model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub id: usize,
    pub covariates: Vec<usize>,
}

impl ModelSpec {
    pub fn is_null(&self) -> bool {
        self.covariates.is_empty()
    }
}

/// Null model, then every subset containing covariate 0 in bitmask order
/// over covariates `1..d`.
pub fn exhaustive_models(d: usize) -> Vec<ModelSpec> {
    let mut out = vec![ModelSpec { id: 0, covariates: Vec::new() }];
    for mask in 0..(1usize << (d - 1)) {
        let mut covariates = vec![0];
        covariates.extend((1..d).filter(|j| mask >> (j - 1) & 1 == 1));
        out.push(ModelSpec { id: out.len(), covariates });
    }
    out
}

/// Null model plus a greedy deletion path from the full model: at each step
/// the covariate whose removal gives the smallest total leave-one-out error
/// over the covered rows is dropped. Ids run from `{0}` (id 1) to the full
/// model (id `d`).
pub fn backward_models(ds: &Dataset, features: &[Feature], partition: &FeaturePartition) -> Vec<ModelSpec> {
    let d = ds.d();
    let mut current: Vec<usize> = (0..d).collect();
    let mut path = vec![current.clone()];
    while current.len() > 1 {
        let candidates: Vec<Vec<usize>> = current[1..]
            .iter()
            .map(|&drop| current.iter().copied().filter(|&c| c != drop).collect())
            .collect();
        let specs: Vec<ModelSpec> = candidates
            .iter()
            .enumerate()
            .map(|(k, c)| ModelSpec { id: k, covariates: c.clone() })
            .collect();
        let loo = loo_gamma_all(ds, features, partition, &specs);
        // compare on rows where every candidate is defined
        let totals: Vec<f64> = (0..specs.len())
            .map(|m| {
                (0..loo.rows.len())
                    .filter(|&r| (0..specs.len()).all(|o| loo.gamma[o][r].is_some()))
                    .map(|r| loo.gamma[m][r].unwrap())
                    .sum()
            })
            .collect();
        let best = (0..specs.len())
            .min_by(|&a, &b| totals[a].total_cmp(&totals[b]).then(a.cmp(&b)))
            .unwrap();
        current = candidates[best].clone();
        path.push(current.clone());
    }
    let mut out = vec![ModelSpec { id: 0, covariates: Vec::new() }];
    for covariates in path.into_iter().rev() {
        out.push(ModelSpec { id: out.len(), covariates });
    }
    out
}

pub fn candidate_models(
    ds: &Dataset,
    features: &[Feature],
    partition: &FeaturePartition,
    mode: SelectMode,
) -> Vec<ModelSpec> {
    let backward = match mode {
        SelectMode::Auto => ds.d() > EXHAUSTIVE_MAX_D,
        SelectMode::Exhaustive => false,
        SelectMode::Backward => true,
    };
    if backward {
        backward_models(ds, features, partition)
    } else {
        exhaustive_models(ds.d())
    }
}

/// Leave-one-out errors of every model on every covered row.
#[derive(Debug, Clone)]
pub struct LooTable {
    /// Covered rows, ascending.
    pub rows: Vec<usize>,
    /// Feature rank of each covered row.
    pub ranks: Vec<usize>,
    /// `gamma[model][k]` for row `rows[k]`; `None` where the model cannot be
    /// fit in the row's feature or the row has leverage 1.
    pub gamma: Vec<Vec<Option<f64>>>,
    /// `fits[rank - 1][model]`, fit on the full feature region.
    pub fits: Vec<Vec<Option<FitResult>>>,
}

/// Fits each model on each feature's full region and scores the rows of the
/// feature's disjoint cell with the hat-matrix leave-one-out identity.
pub fn loo_gamma_all(
    ds: &Dataset,
    features: &[Feature],
    partition: &FeaturePartition,
    models: &[ModelSpec],
) -> LooTable {
    let mut ranked: Vec<&Feature> = features.iter().collect();
    ranked.sort_by_key(|f| f.rank);
    let fits: Vec<Vec<Option<FitResult>>> = ranked
        .par_iter()
        .map(|f| {
            models
                .iter()
                .map(|m| match fit_rows(ds, &f.members, &m.covariates) {
                    Ok((fit, _)) if fit.rank_ok => Some(fit),
                    _ => None,
                })
                .collect()
        })
        .collect();
    let rows = partition.covered_rows();
    let ranks = rows.iter().map(|&i| partition.assignment[i].unwrap()).collect();
    let gamma = (0..models.len())
        .map(|m| {
            rows.iter()
                .map(|&i| {
                    let rank = partition.assignment[i]?;
                    let fit = fits[rank - 1][m].as_ref()?;
                    let x = ds.row(i);
                    loo_gamma_row(ds.y()[i] - fit.predict(x), fit.leverage(x))
                })
                .collect()
        })
        .collect();
    LooTable { rows, ranks, gamma, fits }
}

/// Smoothed leave-one-out error of each model against the interest covariate.
#[derive(Debug, Clone)]
pub struct CvCurves {
    pub models: Vec<ModelSpec>,
    pub mesh: Vec<f64>,
    /// Unnormalized smoothed error `[model][mesh]`.
    pub raw: Vec<Vec<Option<f64>>>,
    smoothers: Vec<Option<Smoother>>,
}

impl CvCurves {
    pub fn build(ds: &Dataset, loo: &LooTable, models: &[ModelSpec]) -> Self {
        let x1: Vec<f64> = loo.rows.iter().map(|&i| ds.x(i, 0)).collect();
        Self::from_points(models, &x1, &loo.gamma)
    }

    /// Curves from interest values and per-model errors aligned with them.
    pub fn from_points(models: &[ModelSpec], x1: &[f64], gamma: &[Vec<Option<f64>>]) -> Self {
        let (lo, hi) = x1
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let grid = if x1.is_empty() { Vec::new() } else { mesh(lo, hi, MESH_POINTS) };
        let smoothers: Vec<Option<Smoother>> = (0..models.len())
            .map(|m| {
                let (xs, gs): (Vec<f64>, Vec<f64>) = x1
                    .iter()
                    .zip(&gamma[m])
                    .filter_map(|(&x, g)| g.map(|g| (x, g)))
                    .unzip();
                Smoother::new(xs, gs)
            })
            .collect();
        let raw = smoothers
            .iter()
            .map(|s| match s {
                Some(s) => grid.iter().map(|&g| s.nadaraya_watson(g)).collect(),
                None => vec![None; grid.len()],
            })
            .collect();
        CvCurves { models: models.to_vec(), mesh: grid, raw, smoothers }
    }

    /// Smoothed error of model index `m` at an arbitrary `x1`.
    pub fn value_at(&self, m: usize, x1: f64) -> Option<f64> {
        self.smoothers[m].as_ref()?.nadaraya_watson(x1)
    }

    /// Curve of model index `m` relative to the null model.
    pub fn scaled(&self, m: usize, scale: CurveScale) -> Vec<Option<f64>> {
        self.raw[m]
            .iter()
            .zip(&self.raw[0])
            .map(|(v, null)| match (v, null, scale) {
                (Some(v), Some(n), CurveScale::Ratio) if *n > 0.0 => Some(v / n),
                (Some(v), Some(n), CurveScale::Difference) => Some(v - n),
                _ => None,
            })
            .collect()
    }
}

fn prefer(models: &[ModelSpec], a: (usize, f64), b: (usize, f64)) -> Ordering {
    a.1.total_cmp(&b.1)
        .then(models[a.0].covariates.len().cmp(&models[b.0].covariates.len()))
        .then(models[a.0].id.cmp(&models[b.0].id))
}

/// Model with the smallest smoothed error at `x1`, ties to the smaller
/// subset and then the smaller id. `None` when no curve is defined there.
pub fn select_model(curves: &CvCurves, x1: f64) -> Option<usize> {
    select_among(curves, x1, |_| true)
}

/// [`select_model`] restricted to models accepted by `allowed`.
pub fn select_among(curves: &CvCurves, x1: f64, allowed: impl Fn(usize) -> bool) -> Option<usize> {
    (0..curves.models.len())
        .filter(|&m| allowed(m))
        .filter_map(|m| curves.value_at(m, x1).map(|v| (m, v)))
        .min_by(|&a, &b| prefer(&curves.models, a, b))
        .map(|(m, _)| curves.models[m].id)
}

/// Winner at each mesh point, from the tabulated curves.
pub fn selected_on_mesh(curves: &CvCurves) -> Vec<Option<usize>> {
    (0..curves.mesh.len())
        .map(|k| {
            (0..curves.models.len())
                .filter_map(|m| curves.raw[m][k].map(|v| (m, v)))
                .min_by(|&a, &b| prefer(&curves.models, a, b))
                .map(|(m, _)| curves.models[m].id)
        })
        .collect()
}

/// Model used for one covered row in the slope and level displays.
#[derive(Debug, Clone, PartialEq)]
pub struct RowChoice {
    pub row: usize,
    pub x1: f64,
    pub rank: usize,
    pub model_id: usize,
    pub beta1: f64,
    pub fitted: f64,
}

/// For each covered row: the selected model at its interest value among the
/// models that fit in its feature; if none is selectable there, the largest
/// model that does fit.
pub fn choose_rows(ds: &Dataset, loo: &LooTable, curves: &CvCurves) -> Vec<RowChoice> {
    let models = &curves.models;
    loo.rows
        .iter()
        .zip(&loo.ranks)
        .filter_map(|(&i, &rank)| {
            let x1 = ds.x(i, 0);
            let fits = &loo.fits[rank - 1];
            let m = select_among(curves, x1, |m| fits[m].is_some()).or_else(|| {
                (0..models.len())
                    .filter(|&m| fits[m].is_some())
                    .max_by(|&a, &b| {
                        models[a]
                            .covariates
                            .len()
                            .cmp(&models[b].covariates.len())
                            .then(models[b].id.cmp(&models[a].id))
                    })
            })?;
            let fit = fits[m].as_ref()?;
            Some(RowChoice {
                row: i,
                x1,
                rank,
                model_id: models[m].id,
                beta1: fit.slope(0),
                fitted: fit.predict(ds.row(i)),
            })
        })
        .collect()
}
