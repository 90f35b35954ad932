//! `geomcp` command-line front end.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use geomcp::asymptotics::{standard_validation, write_validation_csv};
use geomcp::config::{DetectionSettings, RunFile};
use geomcp::crops::{default_beta_range, write_elbow_csv, ElbowRow};
use geomcp::evaluation::{write_batch_csv, write_reports_csv, DEFAULT_TOLERANCE};
use geomcp::experiments::{configure_threads, loglog_slope, median_times, run_batch, time_grid, write_timing_csv};
use geomcp::geometry::map_both;
use geomcp::pipeline::write_changepoints_csv;
use geomcp::simulation::write_truth_json;
use geomcp::{
    crops, elbow_table, generate, load_csv, replication_rng, scale_mad, translate, write_csv, ChangeKind,
    CovarianceKind, DetectionConfig, Error, Result, ScenarioSpec,
};

#[derive(Parser, Debug)]
#[command(name = "geomcp", version, about = "Changepoint detection for high-dimensional time series")]
struct Cli {
    /// Worker threads for replicated runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML run file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detect changepoints in a CSV file (rows are time points, columns are series).
    Detect {
        input: PathBuf,
        #[command(flatten)]
        detection: DetectionArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate one synthetic data set with its ground truth.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Replication index; selects the generator stream of the seed.
        #[arg(long, default_value_t = 0)]
        rep: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score detections over replicated synthetic data sets.
    Evaluate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        detection: DetectionArgs,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        tolerance: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Penalty path diagnostics for both mapped series.
    Crops {
        input: PathBuf,
        #[command(flatten)]
        detection: DetectionArgs,
        /// Defaults to ln n.
        #[arg(long)]
        beta_min: Option<f64>,
        /// Defaults to 50 ln n.
        #[arg(long)]
        beta_max: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo checks of the limiting distributions.
    Validate {
        #[arg(long, default_value_t = 2000)]
        p: usize,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time full detections over an (n, p) grid of null data sets.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "500")]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "100,200,400")]
        p: Vec<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        detection: DetectionArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default)]
struct DetectionArgs {
    /// `mbic` or `manual:<beta>`.
    #[arg(long)]
    penalty: Option<String>,
    /// `normal` or `empirical`.
    #[arg(long)]
    cost: Option<String>,
    /// Quantile count of the empirical cost.
    #[arg(long)]
    quantiles: Option<usize>,
    #[arg(long)]
    xi: Option<usize>,
    #[arg(long)]
    minseglen: Option<usize>,
    /// Divide every series by its median absolute deviation first.
    #[arg(long)]
    scale_mad: bool,
}

impl DetectionArgs {
    fn settings(&self) -> DetectionSettings {
        DetectionSettings {
            cost: self.cost.clone(),
            quantiles: self.quantiles,
            variance_floor: None,
            penalty: self.penalty.clone(),
            xi: self.xi,
            minseglen: self.minseglen,
            scale_mad: self.scale_mad.then_some(true),
        }
    }
}

#[derive(Args, Debug, Default)]
struct ScenarioArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// `mean`, `variance` or `mean_and_variance`.
    #[arg(long, value_parser = parse_kind)]
    kind: Option<ChangeKind>,
    /// `independent`, `block_diagonal` or `random`.
    #[arg(long, value_parser = parse_covariance)]
    covariance: Option<CovarianceKind>,
    /// Number of changepoints to place at random.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    min_gap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fixed changepoint locations, comma separated.
    #[arg(long, value_delimiter = ',')]
    changepoints: Option<Vec<usize>>,
}

impl ScenarioArgs {
    fn apply(&self, mut s: ScenarioSpec) -> ScenarioSpec {
        macro_rules! overlay {
            ($($f:ident => $g:ident),*) => { $(if let Some(v) = self.$f.clone() { s.$g = v; })* };
        }
        overlay!(n => n, p => p, theta => theta, phi => phi, kappa => kappa, kind => change_kind,
                 covariance => covariance, min_gap => min_gap, seed => seed);
        if self.m.is_some() {
            s.m = self.m;
        }
        if self.changepoints.is_some() {
            s.changepoints = self.changepoints.clone();
        }
        s
    }
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.trim().to_ascii_lowercase())).map_err(|e| e.to_string())
}

fn parse_kind(s: &str) -> std::result::Result<ChangeKind, String> {
    parse_enum(s)
}

fn parse_covariance(s: &str) -> std::result::Result<CovarianceKind, String> {
    parse_enum(s)
}

/// File settings with command-line overrides.
struct Run {
    file: RunFile,
}

impl Run {
    fn detection(&self, args: &DetectionArgs) -> Result<DetectionConfig> {
        let cfg = args.settings().apply(self.file.detection.apply(DetectionConfig::default())?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn scenario(&self, args: &ScenarioArgs) -> Result<ScenarioSpec> {
        let spec = args.apply(self.file.scenario.clone().unwrap_or_default());
        spec.validate()?;
        Ok(spec)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("geomcp: {e} [{}]", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => RunFile::load(path)?,
        None => RunFile::default(),
    };
    configure_threads(cli.threads.or(file.threads).unwrap_or_else(default_threads))?;
    let run = Run { file };

    match cli.command {
        Command::Detect { input, detection, out } => detect(&run, &input, &detection, out.as_deref()),
        Command::Simulate { scenario, rep, out } => simulate(&run, &scenario, rep, out.as_deref()),
        Command::Evaluate {
            scenario,
            detection,
            reps,
            tolerance,
            out,
        } => {
            let spec = run.scenario(&scenario)?;
            let cfg = run.detection(&detection)?;
            let reps = reps.or(run.file.reps).unwrap_or(100);
            let tol = tolerance.or(run.file.tolerance).unwrap_or(DEFAULT_TOLERANCE);
            let outcome = run_batch("cli", &spec, &cfg, reps, tol)?;
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    write_reports_csv(&outcome.reports, create(&dir.join("replications.csv"))?)?;
                    write_batch_csv(std::slice::from_ref(&outcome.row), create(&dir.join("summary.csv"))?)?;
                    write_json(&outcome, &dir.join("summary.json"))?;
                    println!(
                        "TDR {:.4} ± {:.4}, FDR {:.4} ± {:.4} over {reps} replications",
                        outcome.row.tdr, outcome.row.tdr_ci, outcome.row.fdr, outcome.row.fdr_ci
                    );
                    Ok(())
                }
                None => write_batch_csv(std::slice::from_ref(&outcome.row), io::stdout().lock()),
            }
        }
        Command::Crops {
            input,
            detection,
            beta_min,
            beta_max,
            out,
        } => crops_cmd(&run, &input, &detection, beta_min, beta_max, out.as_deref()),
        Command::Validate { p, reps, seed, out } => {
            let reps = reps.or(run.file.reps).unwrap_or(20_000);
            let seed = seed.or(run.file.seed).unwrap_or(0);
            let rows = standard_validation(p, reps, seed)?;
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    write_validation_csv(&rows, create(&dir.join("validation.csv"))?)?;
                    write_json(&rows, &dir.join("validation.json"))
                }
                None => write_validation_csv(&rows, io::stdout().lock()),
            }
        }
        Command::Bench {
            n,
            p,
            reps,
            seed,
            detection,
            out,
        } => {
            let cfg = run.detection(&detection)?;
            let reps = reps.or(run.file.reps).unwrap_or(5);
            let seed = seed.or(run.file.seed).unwrap_or(0);
            let grid: Vec<(usize, usize)> = n.iter().flat_map(|&n| p.iter().map(move |&p| (n, p))).collect();
            let rows = time_grid(&grid, reps, seed, &cfg)?;
            let medians = median_times(&rows);
            match &out {
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    write_timing_csv(&rows, create(&dir.join("timing.csv"))?)?;
                    write_json(&rows, &dir.join("timing.json"))?;
                }
                None => write_timing_csv(&rows, io::stdout().lock())?,
            }
            for &(n, p, t) in &medians {
                eprintln!("n = {n}, p = {p}: median {t:.4} s");
            }
            for &n0 in &n {
                let pts: Vec<(f64, f64)> =
                    medians.iter().filter(|m| m.0 == n0).map(|m| (m.1 as f64, m.2)).collect();
                if let Ok(slope) = loglog_slope(&pts) {
                    eprintln!("n = {n0}: time grows as p^{slope:.2}");
                }
            }
            Ok(())
        }
    }
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::input(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::invariant(format!("json encoding: {e}")))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn detect(run: &Run, input: &Path, args: &DetectionArgs, out: Option<&Path>) -> Result<()> {
    let cfg = run.detection(args)?;
    let m = load_csv(input)?;
    let result = geomcp::geomcp_detect(&m, &cfg)?;
    let report = result.report(m.p(), &cfg);
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            write_changepoints_csv(&result, create(&dir.join("changepoints.csv"))?)?;
            write_json(&result.summary(m.p(), &cfg), &dir.join("changepoints.json"))?;
            fs::write(dir.join("report.txt"), &report)?;
            print!("{report}");
        }
        None => {
            write_changepoints_csv(&result, io::stdout().lock())?;
            eprint!("{report}");
        }
    }
    Ok(())
}

fn simulate(run: &Run, args: &ScenarioArgs, rep: u64, out: Option<&Path>) -> Result<()> {
    let spec = run.scenario(args)?;
    let (m, plan) = generate(&spec, &mut replication_rng(spec.seed, rep))?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut w = create(&dir.join("data.csv"))?;
            write_csv(&m, &mut w)?;
            w.flush()?;
            let mut w = create(&dir.join("truth.json"))?;
            write_truth_json(&plan, &mut w)?;
            w.flush()?;
            println!(
                "{} x {} data set, changepoints: {:?}",
                m.n(),
                m.p(),
                plan.true_cpts
            );
        }
        None => {
            write_csv(&m, io::stdout().lock())?;
            eprintln!("changepoints: {:?}", plan.true_cpts);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct CropsSeries {
    beta_min: f64,
    beta_max: f64,
    searches: usize,
    rows: Vec<ElbowRow>,
}

#[derive(Serialize)]
struct CropsReport {
    distance: CropsSeries,
    angle: CropsSeries,
}

fn crops_cmd(
    run: &Run,
    input: &Path,
    args: &DetectionArgs,
    beta_min: Option<f64>,
    beta_max: Option<f64>,
    out: Option<&Path>,
) -> Result<()> {
    let cfg = run.detection(args)?;
    let m = load_csv(input)?;
    let m = if cfg.scale_first { scale_mad(&m).0 } else { m };
    let (lo, hi) = default_beta_range(m.n());
    let (lo, hi) = (beta_min.unwrap_or(lo), beta_max.unwrap_or(hi));
    let (distance, angle) = map_both(&translate(&m, None)?)?;
    let path = |values: &[f64]| -> Result<CropsSeries> {
        let r = crops(values, cfg.model, lo, hi, cfg.minseglen)?;
        Ok(CropsSeries {
            beta_min: r.beta_min,
            beta_max: r.beta_max,
            searches: r.searches,
            rows: elbow_table(&r)?,
        })
    };
    let report = CropsReport {
        distance: path(&distance.values)?,
        angle: path(&angle.values)?,
    };
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            write_elbow_csv(&report.distance.rows, create(&dir.join("crops_distance.csv"))?)?;
            write_elbow_csv(&report.angle.rows, create(&dir.join("crops_angle.csv"))?)?;
            write_json(&report, &dir.join("crops.json"))?;
            for (name, s) in [("distance", &report.distance), ("angle", &report.angle)] {
                if let Some(e) = s.rows.iter().find(|r| r.elbow) {
                    println!("{name}: {} segmentations, elbow at {} changepoints", s.rows.len(), e.m);
                }
            }
            Ok(())
        }
        None => {
            let mut w = io::stdout().lock();
            serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Error::invariant(format!("json encoding: {e}")))?;
            writeln!(w)?;
            Ok(())
        }
    }
}
