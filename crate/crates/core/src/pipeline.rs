//! Run configuration and the end-to-end analysis steps shared by the commands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cells::{CellIndex, CellTable};
use crate::data::{Dataset, Frame, TransformSpec};
use crate::error::{Error, Result};
use crate::grid::{
    default_min_points, default_sizes, enumerate_regions, Enumeration, GridPoint, QuantileGrid,
    DEFAULT_INTEREST_SIZE, DEFAULT_OTHER_SIZE,
};
use crate::permutation::{global_test, pointwise_test, Norm, PermOptions, PermutationResult, Sided};
use crate::scan::{
    best_region_per_point, extract_features, partition_features, scan_all, Criterion, EvalSet,
    Feature, FeaturePartition, ScanResult,
};
use crate::select::{
    candidate_models, choose_rows, loo_gamma_all, CurveScale, CvCurves, LooTable, ModelSpec,
    RowChoice, SelectMode,
};
use crate::smooth::{mesh, Smoother, MESH_POINTS};

/// Where the per-point argmax is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    #[default]
    Grid,
    Rows,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(EvalMode::Grid),
            "rows" => Ok(EvalMode::Rows),
            _ => Err(Error::config("efficacy-scan", format!("unknown evaluation mode `{s}`"))),
        }
    }
}

/// Second level curve drawn for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    #[default]
    None,
    /// The whole pipeline rerun on the interest covariate alone.
    D1,
}

impl std::str::FromStr for Comparison {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Comparison::None),
            "d1" => Ok(Comparison::D1),
            _ => Err(Error::config("cli-report", format!("unknown comparison `{s}`"))),
        }
    }
}

/// Settings for every command. Serialized as one JSON object whose keys match
/// the long command-line flags with `_` for `-`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub response: String,
    pub interest: String,
    /// Covariates besides the interest column; all other columns when absent.
    pub covariates: Option<Vec<String>>,
    pub transform: Vec<String>,
    pub grid_interest: usize,
    pub grid_other: usize,
    pub min_points: Option<usize>,
    pub criterion: Criterion,
    pub eval: EvalMode,
    pub select: SelectMode,
    pub scale: CurveScale,
    pub comparison: Comparison,
    pub alpha: f64,
    pub b: usize,
    pub sided: Sided,
    pub norm: Norm,
    pub seed: u64,
    /// Pointwise test location in data units; global test when absent.
    pub x0: Option<Vec<f64>>,
    /// Global test locations in data units; every interior grid point when absent.
    pub eval_points: Option<Vec<Vec<f64>>>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            response: "Y".into(),
            interest: "X1".into(),
            covariates: None,
            transform: Vec::new(),
            grid_interest: DEFAULT_INTEREST_SIZE,
            grid_other: DEFAULT_OTHER_SIZE,
            min_points: None,
            criterion: Criterion::Ols,
            eval: EvalMode::Grid,
            select: SelectMode::Auto,
            scale: CurveScale::Ratio,
            comparison: Comparison::None,
            alpha: 0.05,
            b: 500,
            sided: Sided::Two,
            norm: Norm::Max,
            seed: 0,
            x0: None,
            eval_points: None,
            out: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config("cli-report", format!("cannot read config `{}`: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(
                "cli-report",
                format!("alpha must lie in (0, 1), got {}", self.alpha),
            ));
        }
        if self.b < crate::permutation::MIN_REPLICATES {
            return Err(Error::config(
                "cli-report",
                format!("B must be at least {}, got {}", crate::permutation::MIN_REPLICATES, self.b),
            ));
        }
        if self.grid_interest < 2 || self.grid_other < 2 {
            return Err(Error::config("cli-report", "grid sizes must be at least 2"));
        }
        TransformSpec::parse(&self.transform)?;
        Ok(())
    }

    /// Reads `input`, applies the transforms and assigns column roles.
    pub fn load_dataset(&self) -> Result<Dataset> {
        self.validate()?;
        let path = self
            .input
            .as_ref()
            .ok_or_else(|| Error::config("cli-report", "no input file given (--input)"))?;
        let spec = TransformSpec::parse(&self.transform)?;
        let frame = Frame::from_path(path, None)?.apply_transforms(&spec)?;
        frame.into_dataset(&self.response, &self.interest, self.covariates.as_deref())
    }

    pub fn grid_sizes(&self, d: usize) -> Vec<usize> {
        default_sizes(d, self.grid_interest, self.grid_other)
    }

    pub fn min_points(&self, d: usize) -> usize {
        self.min_points.unwrap_or_else(|| default_min_points(d))
    }

    fn perm_options(&self, d: usize) -> PermOptions {
        PermOptions {
            replicates: self.b,
            alpha: self.alpha,
            sided: self.sided,
            seed: self.seed,
            min_points: self.min_points(d),
            criterion: self.criterion,
        }
    }
}

/// Grid, candidate regions, scan and features of one dataset.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub ds: Dataset,
    pub grid: QuantileGrid,
    pub cells: CellIndex,
    pub table: CellTable,
    pub enumeration: Enumeration,
    pub scan: ScanResult,
    /// Best region id per evaluation point.
    pub mapping: Vec<Option<usize>>,
    pub features: Vec<Feature>,
    pub partition: FeaturePartition,
}

pub fn analyze(ds: Dataset, cfg: &RunConfig) -> Result<Analysis> {
    let d = ds.d();
    let grid = QuantileGrid::build(&ds, &cfg.grid_sizes(d))?;
    let cells = CellIndex::build(&ds, &grid);
    let table = CellTable::build_with_cells(&ds, &grid, &cells);
    let enumeration = enumerate_regions(&grid, cfg.min_points(d), &table);
    let scan = scan_all(&table, &grid, &enumeration.regions, cfg.criterion);
    let eval = match cfg.eval {
        EvalMode::Grid => EvalSet::grid(&grid),
        EvalMode::Rows => EvalSet::rows(&cells),
    };
    let mapping = best_region_per_point(&scan, &eval);
    let features = extract_features(&scan, &mapping, &cells);
    let partition = partition_features(&features, &cells);
    Ok(Analysis {
        ds,
        grid,
        cells,
        table,
        enumeration,
        scan,
        mapping,
        features,
        partition,
    })
}

/// Candidate models, their error curves and the per-row choices.
#[derive(Debug, Clone)]
pub struct Selection {
    pub models: Vec<ModelSpec>,
    pub loo: LooTable,
    pub curves: CvCurves,
    pub choices: Vec<RowChoice>,
}

pub fn select_models(an: &Analysis, cfg: &RunConfig) -> Result<Selection> {
    if an.features.is_empty() {
        return Err(Error::insufficient(
            "variable-select",
            "no features: no region survived the occupancy filter",
        ));
    }
    let models = candidate_models(&an.ds, &an.features, &an.partition, cfg.select);
    let loo = loo_gamma_all(&an.ds, &an.features, &an.partition, &models);
    let curves = CvCurves::build(&an.ds, &loo, &models);
    let choices = choose_rows(&an.ds, &loo, &curves);
    Ok(Selection {
        models,
        loo,
        curves,
        choices,
    })
}

/// Fitted values of covered rows and their smooth over the interest range.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelCurve {
    /// `(x1, fitted)` per covered row, in row order.
    pub points: Vec<(f64, f64)>,
    pub mesh: Vec<f64>,
    pub curve: Vec<Option<f64>>,
}

/// Local linear smooth of the fitted values, so linear truths are kept exactly.
pub fn level_curve(sel: &Selection) -> LevelCurve {
    let points: Vec<(f64, f64)> = sel.choices.iter().map(|c| (c.x1, c.fitted)).collect();
    let (xs, vs): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let grid = if xs.is_empty() { Vec::new() } else { mesh(lo, hi, MESH_POINTS) };
    let curve = match Smoother::new(xs, vs) {
        Some(s) => grid.iter().map(|&g| s.local_linear(g)).collect(),
        None => vec![None; grid.len()],
    };
    LevelCurve {
        points,
        mesh: grid,
        curve,
    }
}

/// Level curve of the pipeline rerun on the interest covariate alone.
pub fn level_curve_d1(ds: &Dataset, cfg: &RunConfig) -> Result<LevelCurve> {
    let one = ds.select_covariates(&[0])?;
    let an = analyze(one, cfg)?;
    let sel = select_models(&an, cfg)?;
    Ok(level_curve(&sel))
}

/// Permutation test result with the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermReport {
    /// `pointwise` or `global`
    pub test: String,
    pub sided: Sided,
    pub norm: Norm,
    /// Grid coordinates of the evaluation points.
    pub points: Vec<Vec<f64>>,
    #[serde(flatten)]
    pub result: PermutationResult,
}

pub fn permutation_test(ds: &Dataset, cfg: &RunConfig) -> Result<PermReport> {
    let d = ds.d();
    let grid = QuantileGrid::build(ds, &cfg.grid_sizes(d))?;
    let regions = crate::grid::enumerate_boxes(&grid);
    let opts = cfg.perm_options(d);
    match &cfg.x0 {
        Some(x0) => {
            let p = grid.nearest_point(x0)?;
            let result = pointwise_test(ds, &grid, &regions, &p, &opts)?;
            Ok(PermReport {
                test: "pointwise".into(),
                sided: cfg.sided,
                norm: Norm::Max,
                points: vec![grid.point_coords(&p)],
                result,
            })
        }
        None => {
            let eval: Vec<GridPoint> = match &cfg.eval_points {
                Some(list) => list
                    .iter()
                    .map(|x| grid.nearest_point(x))
                    .collect::<Result<_>>()?,
                None => grid.grid_points(),
            };
            let result = global_test(ds, &grid, &regions, &eval, cfg.norm, &opts)?;
            Ok(PermReport {
                test: "global".into(),
                sided: cfg.sided,
                norm: cfg.norm,
                points: eval.iter().map(|p| grid.point_coords(p)).collect(),
                result,
            })
        }
    }
}
