//! Tabular ingest, column transforms and the immutable [`Dataset`].
//!
//! Raw CSV columns are read into a [`Frame`] (named numeric columns). Transform
//! steps (`log`, `lag`, `logret`, `drop`) run on the frame, and the frame is then
//! turned into a [`Dataset`] by naming the response and the covariate of interest.
//! The covariate of interest is always stored as column 0.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Named numeric columns of equal length, before roles are assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Frame {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::config(
                "data",
                format!("{} names for {} columns", names.len(), columns.len()),
            ));
        }
        check_unique(&names)?;
        if let Some(first) = columns.first() {
            let n = first.len();
            if let Some(pos) = columns.iter().position(|c| c.len() != n) {
                return Err(Error::config(
                    "data",
                    format!("column `{}` has {} rows, expected {n}", names[pos], columns[pos].len()),
                ));
            }
        }
        for (name, col) in names.iter().zip(&columns) {
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    row: row + 1,
                    column: name.clone(),
                    message: "value is not finite".into(),
                });
            }
        }
        Ok(Frame { names, columns })
    }

    /// Reads a headered CSV. `keep` restricts which columns are parsed; the rest
    /// are skipped without validation. Every kept cell must be a finite number.
    pub fn from_reader<R: Read>(reader: R, keep: Option<&[String]>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        check_unique(&header)?;

        let selected: Vec<usize> = match keep {
            None => (0..header.len()).collect(),
            Some(keep) => (0..header.len())
                .filter(|&i| keep.iter().any(|k| k == &header[i]))
                .collect(),
        };
        let names: Vec<String> = selected.iter().map(|&i| header[i].clone()).collect();
        let mut columns = vec![Vec::new(); selected.len()];

        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            for (slot, &c) in selected.iter().enumerate() {
                let cell = record.get(c).unwrap_or("");
                let value: f64 = cell.parse().map_err(|_| Error::Parse {
                    row: r + 1,
                    column: header[c].clone(),
                    message: format!("`{cell}` is not a decimal number"),
                })?;
                if !value.is_finite() {
                    return Err(Error::Parse {
                        row: r + 1,
                        column: header[c].clone(),
                        message: format!("`{cell}` is not finite"),
                    });
                }
                columns[slot].push(value);
            }
        }
        Frame::new(names, columns)
    }

    pub fn from_path(path: impl AsRef<Path>, keep: Option<&[String]>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        Frame::from_reader(std::io::BufReader::new(file), keep)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.position(name).map(|i| self.columns[i].as_slice())
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.position(name)
            .ok_or_else(|| Error::config("data", format!("column `{name}` not found")))
    }

    /// Applies the steps left to right. Lagging leaves leading rows without a
    /// value; those rows are removed from every column at the end so that all
    /// columns stay aligned on the same row index.
    pub fn apply_transforms(&self, spec: &TransformSpec) -> Result<Frame> {
        let mut names = self.names.clone();
        let mut columns = self.columns.clone();
        // number of leading rows without a defined value, per column
        let mut invalid = vec![0usize; columns.len()];
        // offset of current row 0 relative to the input frame, for error coordinates
        let mut dropped = 0usize;

        for step in &spec.steps {
            match step {
                TransformStep::Log { column } => {
                    let c = position_in(&names, column)?;
                    for (t, v) in columns[c].iter_mut().enumerate().skip(invalid[c]) {
                        if *v <= 0.0 {
                            return Err(Error::Domain {
                                row: t + dropped + 1,
                                column: column.clone(),
                                message: format!("log of nonpositive value {v}"),
                            });
                        }
                        *v = v.ln();
                    }
                }
                TransformStep::LogReturn { column } => {
                    let c = position_in(&names, column)?;
                    let src = &columns[c];
                    let mut out = vec![0.0; src.len()];
                    for t in invalid[c]..src.len() {
                        if src[t] <= 0.0 {
                            return Err(Error::Domain {
                                row: t + dropped + 1,
                                column: column.clone(),
                                message: format!("log of nonpositive value {}", src[t]),
                            });
                        }
                        if t > invalid[c] {
                            out[t] = src[t].ln() - src[t - 1].ln();
                        }
                    }
                    columns[c] = out;
                    invalid[c] += 1;
                }
                TransformStep::Lag { column, periods } => {
                    if *periods == 0 {
                        return Err(Error::config("data", "lag periods must be at least 1"));
                    }
                    let c = position_in(&names, column)?;
                    let lagged_name = format!("{column}_lag{periods}");
                    if names.contains(&lagged_name) {
                        return Err(Error::config(
                            "data",
                            format!("lag output column `{lagged_name}` already exists"),
                        ));
                    }
                    let src = &columns[c];
                    let mut out = vec![0.0; src.len()];
                    for t in *periods..src.len() {
                        out[t] = src[t - periods];
                    }
                    let inv = invalid[c] + periods;
                    names.push(lagged_name);
                    columns.push(out);
                    invalid.push(inv);
                }
                TransformStep::DropRows { count } => {
                    for col in columns.iter_mut() {
                        let k = (*count).min(col.len());
                        col.drain(..k);
                    }
                    for inv in invalid.iter_mut() {
                        *inv = inv.saturating_sub(*count);
                    }
                    dropped += count;
                }
            }
        }

        let lead = invalid.iter().copied().max().unwrap_or(0);
        for col in columns.iter_mut() {
            let k = lead.min(col.len());
            col.drain(..k);
        }
        Frame::new(names, columns)
    }

    /// Assigns roles. With `covariates = None` every non-response column is a
    /// covariate; the interest column is moved to position 0 and the others keep
    /// their frame order.
    pub fn into_dataset(
        self,
        response: &str,
        interest: &str,
        covariates: Option<&[String]>,
    ) -> Result<Dataset> {
        let r = self.require(response)?;
        let i = self.require(interest)?;
        if r == i {
            return Err(Error::config(
                "data",
                "response and interest columns must differ",
            ));
        }
        let mut order = vec![i];
        match covariates {
            None => order.extend((0..self.names.len()).filter(|&c| c != r && c != i)),
            Some(list) => {
                for name in list {
                    let c = self.require(name)?;
                    if c == r {
                        return Err(Error::config(
                            "data",
                            format!("response `{name}` cannot also be a covariate"),
                        ));
                    }
                    if !order.contains(&c) {
                        order.push(c);
                    }
                }
            }
        }
        let names = order.iter().map(|&c| self.names[c].clone()).collect();
        let cols: Vec<Vec<f64>> = order.iter().map(|&c| self.columns[c].clone()).collect();
        Dataset::from_columns(names, &cols, self.columns[r].clone(), self.names[r].clone())
    }
}

fn position_in(names: &[String], name: &str) -> Result<usize> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::config("data", format!("column `{name}` not found")))
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for name in names {
        if !seen.insert(name.as_str()) {
            return Err(Error::config("data", format!("duplicate column label `{name}`")));
        }
    }
    Ok(())
}

/// One column transform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransformStep {
    /// Natural log in place; values must be strictly positive.
    Log { column: String },
    /// Appends `<column>_lag<k>` holding the value from `k` rows earlier.
    Lag { column: String, periods: usize },
    /// Replaces the column by its log-difference `ln p_t - ln p_{t-1}`.
    LogReturn { column: String },
    /// Removes the first `count` rows.
    DropRows { count: usize },
}

impl FromStr for TransformStep {
    type Err = Error;

    /// Accepts `log:col`, `lag:col:k`, `logret:col` and `drop:k`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::config("data", format!("unrecognized transform `{s}`"));
        match parts.as_slice() {
            ["log", col] => Ok(TransformStep::Log { column: col.to_string() }),
            ["logret", col] => Ok(TransformStep::LogReturn { column: col.to_string() }),
            ["lag", col, k] => Ok(TransformStep::Lag {
                column: col.to_string(),
                periods: k.parse().map_err(|_| bad())?,
            }),
            ["lag", col] => Ok(TransformStep::Lag { column: col.to_string(), periods: 1 }),
            ["drop", k] => Ok(TransformStep::DropRows { count: k.parse().map_err(|_| bad())? }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for TransformStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformStep::Log { column } => write!(f, "log:{column}"),
            TransformStep::Lag { column, periods } => write!(f, "lag:{column}:{periods}"),
            TransformStep::LogReturn { column } => write!(f, "logret:{column}"),
            TransformStep::DropRows { count } => write!(f, "drop:{count}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransformSpec {
    pub steps: Vec<TransformStep>,
}

impl TransformSpec {
    pub fn parse<S: AsRef<str>>(steps: &[S]) -> Result<Self> {
        let steps = steps
            .iter()
            .map(|s| s.as_ref().parse())
            .collect::<Result<Vec<_>>>()?;
        Ok(TransformSpec { steps })
    }

    /// Column names the steps read from.
    pub fn sources(&self) -> Vec<&str> {
        self.steps
            .iter()
            .filter_map(|s| match s {
                TransformStep::Log { column }
                | TransformStep::Lag { column, .. }
                | TransformStep::LogReturn { column } => Some(column.as_str()),
                TransformStep::DropRows { .. } => None,
            })
            .collect()
    }
}

/// Validated covariates and response. Immutable; column 0 is the covariate of
/// interest.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// row-major n x d
    x: Vec<f64>,
    y: Vec<f64>,
    names: Vec<String>,
    response: String,
    n: usize,
    d: usize,
}

impl Dataset {
    /// Builds from covariate columns (interest first) and a response.
    pub fn from_columns(
        names: Vec<String>,
        columns: &[Vec<f64>],
        y: Vec<f64>,
        response: String,
    ) -> Result<Self> {
        let d = columns.len();
        if d == 0 {
            return Err(Error::config("data", "at least one covariate is required"));
        }
        if names.len() != d {
            return Err(Error::config("data", "one name per covariate column is required"));
        }
        let mut all = names.clone();
        all.push(response.clone());
        check_unique(&all)?;
        let n = y.len();
        for (name, col) in names.iter().zip(columns) {
            if col.len() != n {
                return Err(Error::config(
                    "data",
                    format!("column `{name}` has {} rows, response has {n}", col.len()),
                ));
            }
        }
        if n < d + 2 {
            return Err(Error::insufficient(
                "data",
                format!("{n} rows for {d} covariates; need at least {}", d + 2),
            ));
        }
        let mut x = Vec::with_capacity(n * d);
        for i in 0..n {
            for col in columns {
                x.push(col[i]);
            }
        }
        let ds = Dataset { x, y, names, response, n, d };
        ds.check_finite()?;
        Ok(ds)
    }

    fn check_finite(&self) -> Result<()> {
        for i in 0..self.n {
            for j in 0..self.d {
                if !self.x[i * self.d + j].is_finite() {
                    return Err(Error::Parse {
                        row: i + 1,
                        column: self.names[j].clone(),
                        message: "value is not finite".into(),
                    });
                }
            }
            if !self.y[i].is_finite() {
                return Err(Error::Parse {
                    row: i + 1,
                    column: self.response.clone(),
                    message: "value is not finite".into(),
                });
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Always 0: the interest covariate is stored first.
    pub fn interest_index(&self) -> usize {
        0
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn response_name(&self) -> &str {
        &self.response
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn x(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.d + j]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i, j)).collect()
    }

    /// Copy with the interest column replaced (used by permutation replicates).
    pub fn with_interest_column(&self, values: &[f64]) -> Dataset {
        assert_eq!(values.len(), self.n, "replacement column has wrong length");
        let mut out = self.clone();
        for (i, v) in values.iter().enumerate() {
            out.x[i * self.d] = *v;
        }
        out
    }

    /// Copy with a new response vector.
    pub fn with_response(&self, y: Vec<f64>) -> Dataset {
        assert_eq!(y.len(), self.n, "replacement response has wrong length");
        Dataset { y, ..self.clone() }
    }

    /// Copy keeping only the listed covariates, in the given order. The first
    /// listed column becomes the interest covariate.
    pub fn select_covariates(&self, cols: &[usize]) -> Result<Dataset> {
        let names = cols.iter().map(|&c| self.names[c].clone()).collect();
        let columns: Vec<Vec<f64>> = cols.iter().map(|&c| self.column(c)).collect();
        Dataset::from_columns(names, &columns, self.y.clone(), self.response.clone())
    }

    /// Writes covariates then the response, with a header row. Values use the
    /// shortest representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        header.push(&self.response);
        w.write_record(&header)?;
        for i in 0..self.n {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.y[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Applies transforms to covariates and response, keeping the same roles.
    /// Columns created by `lag` are appended as covariates.
    pub fn apply_transforms(&self, spec: &TransformSpec) -> Result<Dataset> {
        let mut names = self.names.clone();
        names.push(self.response.clone());
        let mut cols: Vec<Vec<f64>> = (0..self.d).map(|j| self.column(j)).collect();
        cols.push(self.y.clone());
        let frame = Frame::new(names, cols)?.apply_transforms(spec)?;
        let interest = self.names[0].clone();
        frame.into_dataset(&self.response, &interest, None)
    }
}

/// Reads a CSV with every non-response column as a covariate.
pub fn load_csv(path: impl AsRef<Path>, response: &str, interest: &str) -> Result<Dataset> {
    Frame::from_path(path, None)?.into_dataset(response, interest, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(text: &str) -> Result<Frame> {
        Frame::from_reader(text.as_bytes(), None)
    }

    #[test]
    fn small_file_yields_dataset() {
        // four rows parse, but three covariates need at least five
        let four = frame("a,b,c,y\n1,2,3,4\n2,1,0,1\n3,5,1,2\n4,4,4,0\n").unwrap();
        assert_eq!(four.n_rows(), 4);
        assert!(matches!(
            four.into_dataset("y", "a", None),
            Err(Error::InsufficientData { .. })
        ));
        let ds = frame("a,b,c,y\n1,2,3,4\n2,1,0,1\n3,5,1,2\n4,4,4,0\n5,0,2,2\n")
            .unwrap()
            .into_dataset("y", "a", None)
            .unwrap();
        assert_eq!((ds.n(), ds.d(), ds.interest_index()), (5, 3, 0));
        assert_eq!(ds.names(), ["a", "b", "c"]);
        assert_eq!(ds.row(2), [3.0, 5.0, 1.0]);
    }

    #[test]
    fn interest_moves_first_others_keep_order() {
        let ds = frame("a,b,c,y\n1,2,3,4\n2,1,0,1\n3,5,1,2\n4,4,4,0\n5,1,2,3\n")
            .unwrap()
            .into_dataset("y", "c", None)
            .unwrap();
        assert_eq!(ds.names(), ["c", "a", "b"]);
        assert_eq!(ds.row(0), [3.0, 1.0, 2.0]);
    }

    #[test]
    fn na_cell_is_a_parse_error_with_coordinates() {
        let err = frame("a,b,y\n1,2,3\n1,NA,3\n").unwrap_err();
        match err {
            Error::Parse { row, column, .. } => assert_eq!((row, column.as_str()), (2, "b")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_header_is_config_error() {
        assert!(matches!(frame("a,a,y\n1,2,3\n"), Err(Error::Config { .. })));
    }

    #[test]
    fn missing_column_is_config_error() {
        let f = frame("a,b,y\n1,2,3\n2,3,4\n3,4,5\n4,5,6\n").unwrap();
        assert!(matches!(f.into_dataset("z", "a", None), Err(Error::Config { .. })));
    }

    #[test]
    fn too_few_rows_is_insufficient() {
        let f = frame("a,b,y\n1,2,3\n2,3,4\n3,4,5\n").unwrap();
        assert!(matches!(
            f.into_dataset("y", "a", None),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn lag_by_one() {
        let f = Frame::new(vec!["v".into()], vec![vec![10.0, 20.0, 30.0]]).unwrap();
        let spec = TransformSpec::parse(&["lag:v:1"]).unwrap();
        let out = f.apply_transforms(&spec).unwrap();
        assert_eq!(out.column("v").unwrap(), [20.0, 30.0]);
        assert_eq!(out.column("v_lag1").unwrap(), [10.0, 20.0]);
    }

    #[test]
    fn exact_logs() {
        let e = std::f64::consts::E;
        let f = Frame::new(vec!["v".into()], vec![vec![1.0, e, e * e]]).unwrap();
        let out = f.apply_transforms(&TransformSpec::parse(&["log:v"]).unwrap()).unwrap();
        let v = out.column("v").unwrap();
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 1.0).abs() < 1e-15 && (v[2] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn log_of_zero_is_domain_error() {
        let f = Frame::new(vec!["v".into()], vec![vec![1.0, 0.0, 2.0]]).unwrap();
        let err = f.apply_transforms(&TransformSpec::parse(&["log:v"]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Domain { row: 2, .. }));
    }

    #[test]
    fn log_return_then_lag_aligns_rows() {
        let p = vec![100.0, 110.0, 99.0, 120.0, 118.0];
        let f = Frame::new(vec!["p".into()], vec![p.clone()]).unwrap();
        let spec = TransformSpec::parse(&["logret:p", "lag:p:1"]).unwrap();
        let out = f.apply_transforms(&spec).unwrap();
        // logret loses one row, lagging the return loses one more
        assert_eq!(out.n_rows(), 3);
        let r: Vec<f64> = (1..5).map(|t| p[t].ln() - p[t - 1].ln()).collect();
        assert_eq!(out.column("p").unwrap(), &r[1..]);
        assert_eq!(out.column("p_lag1").unwrap(), &r[..3]);
    }

    #[test]
    fn transforms_compose_and_are_deterministic() {
        let f = Frame::new(
            vec!["p".into(), "v".into()],
            vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![5.0, 4.0, 3.0, 2.0, 1.0, 9.0]],
        )
        .unwrap();
        let spec = TransformSpec::parse(&["log:v", "lag:v:2", "drop:1"]).unwrap();
        let a = f.apply_transforms(&spec).unwrap();
        let b = f.apply_transforms(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_rows(), 4);
        assert_eq!(a.column("p").unwrap(), [3.0, 4.0, 5.0, 6.0]);
        assert_eq!(a.column("v_lag2").unwrap(), [5f64.ln(), 4f64.ln(), 3f64.ln(), 2f64.ln()]);
    }

    #[test]
    fn transform_spec_round_trips_through_text() {
        for s in ["log:a", "lag:b:3", "logret:c", "drop:2"] {
            assert_eq!(s.parse::<TransformStep>().unwrap().to_string(), s);
        }
        assert!("sqrt:a".parse::<TransformStep>().is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_identical() {
        let cols = vec![vec![0.1, 1.0 / 3.0, 2.5e-300, -7.0, 1e17], vec![3.0, 2.0, 1.0, 0.0, -1.0]];
        let ds = Dataset::from_columns(
            vec!["a".into(), "b".into()],
            &cols,
            vec![std::f64::consts::PI, 0.0, -0.0, 1e-5, 123456.789],
            "y".into(),
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Frame::from_reader(buf.as_slice(), None)
            .unwrap()
            .into_dataset("y", "a", None)
            .unwrap();
        for i in 0..ds.n() {
            for j in 0..ds.d() {
                assert_eq!(ds.x(i, j).to_bits(), back.x(i, j).to_bits());
            }
            assert_eq!(ds.y()[i].to_bits(), back.y()[i].to_bits());
        }
    }
}
