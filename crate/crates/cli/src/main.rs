use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use effiscan::data::Dataset;
use effiscan::permutation::{Norm, Sided};
use effiscan::pipeline::{Comparison, EvalMode, RunConfig};
use effiscan::report;
use effiscan::scan::Criterion;
use effiscan::select::{CurveScale, SelectMode};
use effiscan::simulation::{
    gen_dependent, gen_shrinking, gen_simple, Bump, DependentCase, DependentOptions, Shrinking,
    SimpleOptions,
};
use effiscan::{Error, Result};

#[derive(Parser)]
#[command(name = "effiscan", version, about = "Local t-statistic scans and plot data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan all candidate regions: raw_t.csv, tstat.csv, features.csv, regions.csv
    Scan(Common),
    /// Feature display data: feature_plot.csv
    Features(Common),
    /// Model curves: cv_curves.csv, models.csv, selected_model.csv, slope_plot.csv
    Cv(Common),
    /// Fitted levels: level_plot.csv
    Level(Common),
    /// Permutation test: permtest.json
    Permtest(Common),
    /// Write a synthetic dataset
    Simulate(SimArgs),
}

#[derive(Args, Default)]
struct Common {
    /// JSON run configuration; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    response: Option<String>,
    #[arg(long)]
    interest: Option<String>,
    /// Comma-separated covariates besides the interest column
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// log:col, lag:col:k, logret:col or drop:k; repeatable, applied in order
    #[arg(long)]
    transform: Vec<String>,
    #[arg(long)]
    grid_interest: Option<usize>,
    #[arg(long)]
    grid_other: Option<usize>,
    #[arg(long)]
    min_points: Option<usize>,
    /// ols | h0-noise
    #[arg(long)]
    criterion: Option<Criterion>,
    /// grid | rows
    #[arg(long)]
    eval: Option<EvalMode>,
    /// auto | exhaustive | backward
    #[arg(long)]
    select: Option<SelectMode>,
    /// ratio | difference
    #[arg(long)]
    scale: Option<CurveScale>,
    /// none | d1
    #[arg(long)]
    comparison: Option<Comparison>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Permutation replicates
    #[arg(long = "B", alias = "b")]
    b: Option<usize>,
    /// two | left | right
    #[arg(long)]
    sided: Option<Sided>,
    /// sum | sumsq | max
    #[arg(long)]
    norm: Option<Norm>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated test point in data units
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

macro_rules! set {
    ($cfg:ident, $args:ident, $($f:ident),*) => {
        $(if let Some(v) = $args.$f { $cfg.$f = v; })*
    };
}

impl Common {
    fn into_config(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_path(p)?,
            None => RunConfig::default(),
        };
        let args = self;
        if args.input.is_some() {
            cfg.input = args.input;
        }
        if args.covariates.is_some() {
            cfg.covariates = args.covariates;
        }
        if !args.transform.is_empty() {
            cfg.transform = args.transform;
        }
        if args.min_points.is_some() {
            cfg.min_points = args.min_points;
        }
        if args.x0.is_some() {
            cfg.x0 = args.x0;
        }
        set!(
            cfg, args, response, interest, grid_interest, grid_other, criterion, eval, select,
            scale, comparison, alpha, b, sided, norm, seed, out
        );
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    Simple,
    #[value(name = "dep-noY3")]
    DepNoY3,
    #[value(name = "dep-Y3")]
    DepY3,
    Shrink,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, value_enum)]
    scenario: Scenario,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV file
    #[arg(long)]
    out: PathBuf,
    /// Scenario parameter as key=value; repeatable
    #[arg(long = "param", short = 'p')]
    params: Vec<String>,
}

struct Params(Vec<(String, String)>);

impl Params {
    fn parse(raw: &[String]) -> Result<Self> {
        raw.iter()
            .map(|s| match s.split_once('=') {
                Some((k, v)) => Ok((k.trim().to_string(), v.trim().to_string())),
                None => Err(Error::Config {
                    module: "simulation",
                    message: format!("parameter `{s}` is not key=value"),
                }),
            })
            .collect::<Result<Vec<_>>>()
            .map(Params)
    }

    fn take(&mut self, key: &str) -> Option<String> {
        let k = self.0.iter().rposition(|(k, _)| k == key)?;
        let v = self.0.remove(k).1;
        self.0.retain(|(k, _)| k != key);
        Some(v)
    }

    fn float(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| bad_param(key, &v)),
        }
    }

    fn list(&mut self, key: &str, default: Vec<f64>) -> Result<Vec<f64>> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| bad_param(key, &v)))
                .collect(),
        }
    }

    fn finish(self) -> Result<()> {
        match self.0.first() {
            None => Ok(()),
            Some((k, _)) => Err(Error::Config {
                module: "simulation",
                message: format!("unknown parameter `{k}` for this scenario"),
            }),
        }
    }
}

fn bad_param(key: &str, value: &str) -> Error {
    Error::Config {
        module: "simulation",
        message: format!("invalid value `{value}` for parameter `{key}`"),
    }
}

fn simulate(args: SimArgs) -> Result<Vec<PathBuf>> {
    let mut p = Params::parse(&args.params)?;
    let ds: Dataset = match args.scenario {
        Scenario::Simple => {
            let sigma2 = p.float("sigma2", 0.02)?;
            p.finish()?;
            gen_simple(&SimpleOptions { n: args.n, sigma2, seed: args.seed })?
        }
        Scenario::DepNoY3 | Scenario::DepY3 => {
            let case = match args.scenario {
                Scenario::DepNoY3 => DependentCase::NoY3,
                _ => DependentCase::Y3,
            };
            let mut o = DependentOptions::new(case);
            o.n = args.n;
            o.seed = args.seed;
            o.sigma2 = p.float("sigma2", o.sigma2)?;
            o.mean = p.float("mean", o.mean)?;
            o.sd = p.float("sd", o.sd)?;
            o.rho = p.float("rho", o.rho)?;
            o.f2_scale = p.float("f2_scale", o.f2_scale)?;
            p.finish()?;
            gen_dependent(&o)?
        }
        Scenario::Shrink => {
            let x0 = p.list("x0", vec![0.5; 3])?;
            let d = x0.len();
            let mut spec = Shrinking::new(
                p.list("theta", vec![0.1; d])?,
                p.list("gamma", vec![1.0; d])?,
                x0,
            );
            spec.a = p.float("a", 0.0)?;
            spec.sigma2 = p.float("sigma2", spec.sigma2)?;
            spec.bump = match p.take("bump").as_deref() {
                None | Some("asymmetric") => Bump::Asymmetric,
                Some("symmetric") => Bump::Symmetric,
                Some(other) => return Err(bad_param("bump", other)),
            };
            p.finish()?;
            let (ds, warnings) = gen_shrinking(&spec, args.n, args.seed)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            ds
        }
    };
    let file = std::fs::File::create(&args.out)?;
    ds.write_csv(std::io::BufWriter::new(file))?;
    Ok(vec![args.out])
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("EFFISCAN_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| Error::Config {
        module: "cli-report",
        message: format!("EFFISCAN_THREADS must be a positive integer, got `{raw}`"),
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config {
            module: "cli-report",
            message: format!("cannot start {threads} worker threads: {e}"),
        })
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    configure_threads()?;
    match cli.command {
        Command::Scan(c) => report::cmd_scan(&c.into_config()?),
        Command::Features(c) => report::cmd_features(&c.into_config()?),
        Command::Cv(c) => report::cmd_cv(&c.into_config()?),
        Command::Level(c) => report::cmd_level(&c.into_config()?),
        Command::Permtest(c) => report::cmd_permtest(&c.into_config()?),
        Command::Simulate(s) => simulate(s),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
