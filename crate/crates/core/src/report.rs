//! Plot-data files written by the commands.
//!
//! Every file has a header row. Numbers use the shortest representation that
//! reads back to the same `f64`; undefined curve values are left empty.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use csv::Writer;

use crate::error::{Error, Result};
use crate::pipeline::{
    analyze, level_curve, level_curve_d1, permutation_test, select_models, Analysis, Comparison,
    LevelCurve, RunConfig, Selection,
};
use crate::scan::ScanEntry;
use crate::select::selected_on_mesh;

pub const RAW_T_HEADER: &[&str] = &["region_id", "t", "x1_lower", "x1_upper", "coverage_fraction"];
pub const FEATURE_PLOT_HEADER: &[&str] =
    &["rank", "beta1", "row", "dimension", "value", "coverage_fraction"];
pub const SLOPE_PLOT_HEADER: &[&str] = &["row", "x1", "beta1", "rank", "model_id"];
pub const LEVEL_PLOT_HEADER: &[&str] = &["series", "x1", "value"];
pub const SELECTED_HEADER: &[&str] = &["x1", "model_id"];
pub const MODELS_HEADER: &[&str] = &["model_id", "covariates"];

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn writer(dir: &Path, name: &str) -> Result<(Writer<File>, PathBuf)> {
    let path = dir.join(name);
    let w = Writer::from_path(&path)?;
    Ok((w, path))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| {
        Error::config("cli-report", format!("cannot create output directory `{}`: {e}", dir.display()))
    })
}

fn raw_t_rows(w: &mut Writer<File>, an: &Analysis, entries: &[&ScanEntry]) -> Result<()> {
    w.write_record(RAW_T_HEADER)?;
    for e in entries {
        let (lo, hi) = e.region.bounds(&an.grid, 0);
        w.write_record([
            e.region_id.to_string(),
            num(e.t),
            num(lo),
            num(hi),
            num(e.coverage_fraction),
        ])?;
    }
    Ok(())
}

/// Every scanned region.
pub fn write_raw_t(dir: &Path, an: &Analysis) -> Result<PathBuf> {
    let (mut w, path) = writer(dir, "raw_t.csv")?;
    let entries: Vec<&ScanEntry> = an.scan.entries.iter().collect();
    raw_t_rows(&mut w, an, &entries)?;
    w.flush()?;
    Ok(path)
}

/// Same columns as `raw_t.csv`, features only, in rank order.
pub fn write_tstat(dir: &Path, an: &Analysis) -> Result<PathBuf> {
    let (mut w, path) = writer(dir, "tstat.csv")?;
    let entries: Vec<&ScanEntry> = an
        .features
        .iter()
        .filter_map(|f| an.scan.get(f.region_id))
        .collect();
    raw_t_rows(&mut w, an, &entries)?;
    w.flush()?;
    Ok(path)
}

pub fn features_header(names: &[String]) -> Vec<String> {
    let mut h: Vec<String> = ["rank", "region_id", "t", "beta1"].iter().map(|s| s.to_string()).collect();
    for name in names {
        h.push(format!("{name}_lower"));
        h.push(format!("{name}_upper"));
    }
    h.push("n_h".into());
    h.push("coverage_fraction".into());
    h
}

pub fn write_features(dir: &Path, an: &Analysis) -> Result<PathBuf> {
    let (mut w, path) = writer(dir, "features.csv")?;
    w.write_record(features_header(an.ds.names()))?;
    for f in &an.features {
        let mut rec = vec![f.rank.to_string(), f.region_id.to_string(), num(f.t), num(f.beta1)];
        for j in 0..an.ds.d() {
            let (lo, hi) = f.region.bounds(&an.grid, j);
            rec.push(num(lo));
            rec.push(num(hi));
        }
        rec.push(f.n_h.to_string());
        rec.push(num(f.coverage_fraction));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(path)
}

pub fn regions_header(names: &[String]) -> Vec<String> {
    let mut h = vec!["region_id".to_string()];
    for name in names {
        h.push(format!("{name}_lower"));
        h.push(format!("{name}_upper"));
    }
    h.push("n_h".into());
    h
}

/// Candidate regions that passed the occupancy filter.
pub fn write_regions(dir: &Path, an: &Analysis) -> Result<PathBuf> {
    use crate::cells::RegionStats;
    let (mut w, path) = writer(dir, "regions.csv")?;
    w.write_record(regions_header(an.ds.names()))?;
    for (id, r) in an.enumeration.regions.iter().enumerate() {
        let mut rec = vec![id.to_string()];
        for j in 0..an.ds.d() {
            let (lo, hi) = r.bounds(&an.grid, j);
            rec.push(num(lo));
            rec.push(num(hi));
        }
        rec.push(an.table.count(r).to_string());
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(path)
}

/// One row per feature, member row and covariate.
pub fn write_feature_plot(dir: &Path, an: &Analysis) -> Result<PathBuf> {
    let (mut w, path) = writer(dir, "feature_plot.csv")?;
    w.write_record(FEATURE_PLOT_HEADER)?;
    for f in &an.features {
        for &i in &f.members {
            for j in 0..an.ds.d() {
                w.write_record([
                    f.rank.to_string(),
                    num(f.beta1),
                    i.to_string(),
                    an.ds.names()[j].clone(),
                    num(an.ds.x(i, j)),
                    num(f.coverage_fraction),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(path)
}

pub fn cv_header(sel: &Selection) -> Vec<String> {
    let mut h = vec!["x1".to_string()];
    h.extend(sel.curves.models.iter().map(|m| format!("model_{}", m.id)));
    h
}

pub fn write_cv_curves(dir: &Path, sel: &Selection, cfg: &RunConfig) -> Result<PathBuf> {
    let (mut w, path) = writer(dir, "cv_curves.csv")?;
    w.write_record(cv_header(sel))?;
    let cols: Vec<Vec<Option<f64>>> = (0..sel.curves.models.len())
        .map(|m| sel.curves.scaled(m, cfg.scale))
        .collect();
    for (k, &x) in sel.curves.mesh.iter().enumerate() {
        let mut rec = vec![num(x)];
        rec.extend(cols.iter().map(|c| opt(c[k])));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(path)
}

/// Model ids and the covariate names each one uses.
pub fn write_models(dir: &Path, sel: &Selection, names: &[String]) -> Result<PathBuf> {
    let (mut w, path) = writer(dir, "models.csv")?;
    w.write_record(MODELS_HEADER)?;
    for m in &sel.models {
        let covs: Vec<&str> = m.covariates.iter().map(|&j| names[j].as_str()).collect();
        w.write_record([m.id.to_string(), covs.join("+")])?;
    }
    w.flush()?;
    Ok(path)
}

pub fn write_selected(dir: &Path, sel: &Selection) -> Result<PathBuf> {
    let (mut w, path) = writer(dir, "selected_model.csv")?;
    w.write_record(SELECTED_HEADER)?;
    for (x, id) in sel.curves.mesh.iter().zip(selected_on_mesh(&sel.curves)) {
        w.write_record([num(*x), id.map(|v| v.to_string()).unwrap_or_default()])?;
    }
    w.flush()?;
    Ok(path)
}

pub fn write_slope_plot(dir: &Path, sel: &Selection) -> Result<PathBuf> {
    let (mut w, path) = writer(dir, "slope_plot.csv")?;
    w.write_record(SLOPE_PLOT_HEADER)?;
    for c in &sel.choices {
        w.write_record([
            c.row.to_string(),
            num(c.x1),
            num(c.beta1),
            c.rank.to_string(),
            c.model_id.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(path)
}

/// Long format: `point` rows per covered row, then `curve` (and `d1_curve`)
/// rows on the mesh where the smooth is defined.
pub fn write_level_plot(dir: &Path, level: &LevelCurve, d1: Option<&LevelCurve>) -> Result<PathBuf> {
    let (mut w, path) = writer(dir, "level_plot.csv")?;
    w.write_record(LEVEL_PLOT_HEADER)?;
    for (x, v) in &level.points {
        w.write_record(["point".to_string(), num(*x), num(*v)])?;
    }
    let mut curves = vec![("curve", level)];
    if let Some(c) = d1 {
        curves.push(("d1_curve", c));
    }
    for (series, c) in curves {
        for (x, v) in c.mesh.iter().zip(&c.curve) {
            if let Some(v) = v {
                w.write_record([series.to_string(), num(*x), num(*v)])?;
            }
        }
    }
    w.flush()?;
    Ok(path)
}

/// `raw_t.csv`, `tstat.csv`, `features.csv` and `regions.csv`.
pub fn cmd_scan(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let an = analyze(cfg.load_dataset()?, cfg)?;
    ensure_dir(&cfg.out)?;
    Ok(vec![
        write_raw_t(&cfg.out, &an)?,
        write_tstat(&cfg.out, &an)?,
        write_features(&cfg.out, &an)?,
        write_regions(&cfg.out, &an)?,
    ])
}

pub fn cmd_features(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let an = analyze(cfg.load_dataset()?, cfg)?;
    ensure_dir(&cfg.out)?;
    Ok(vec![
        write_features(&cfg.out, &an)?,
        write_feature_plot(&cfg.out, &an)?,
    ])
}

pub fn cmd_cv(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let an = analyze(cfg.load_dataset()?, cfg)?;
    let sel = select_models(&an, cfg)?;
    ensure_dir(&cfg.out)?;
    Ok(vec![
        write_cv_curves(&cfg.out, &sel, cfg)?,
        write_models(&cfg.out, &sel, an.ds.names())?,
        write_selected(&cfg.out, &sel)?,
        write_slope_plot(&cfg.out, &sel)?,
    ])
}

pub fn cmd_level(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let ds = cfg.load_dataset()?;
    let an = analyze(ds, cfg)?;
    let sel = select_models(&an, cfg)?;
    let level = level_curve(&sel);
    let d1 = match cfg.comparison {
        Comparison::D1 => Some(level_curve_d1(&an.ds, cfg)?),
        Comparison::None => None,
    };
    ensure_dir(&cfg.out)?;
    Ok(vec![write_level_plot(&cfg.out, &level, d1.as_ref())?])
}

pub fn cmd_permtest(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let ds = cfg.load_dataset()?;
    let report = permutation_test(&ds, cfg)?;
    ensure_dir(&cfg.out)?;
    let path = cfg.out.join("permtest.json");
    let mut w = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut w, &report)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(vec![path])
}
