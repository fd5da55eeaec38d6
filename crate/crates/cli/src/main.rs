//! `ifslab`: command-line driver for the ifs-core laboratory.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use ifs_core::boxdim::{self, BoxDimError};
use ifs_core::continua_grid::{self, write_family_pgm, write_layers_pgm, ContinuumError, GridContinuum, RowBand};
use ifs_core::experiments::{run_separation, ExperimentConfig, ExperimentError, SeparationOutcome};
use ifs_core::geometry::{Band, Chart, ChartKind, ChartPoint};
use ifs_core::ifs_engine::{coverage_test, run_finite_oracle, CoverageOptions, Mode, SATURATION_WINDOW};
use ifs_core::invariant_detect::{detect_circle_family, DetectConfig};
use ifs_core::map_zoo::{AreaMap, MapError, DEFAULT_FD_STEP};
use ifs_core::numfmt::to_json_string;
use ifs_core::seeds;

#[derive(Parser, Debug)]
#[command(name = "ifslab", version, about = "Invariant continua, bump separators and IFS transitivity experiments")]
struct Cli {
    /// Cap on worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory, created if absent.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cell coverage of the orbit of a start point under IFS(f, g).
    Coverage(ConfigArgs),
    /// Essential invariant circle family of a map in a band.
    Detect(ConfigArgs),
    /// Full separation pipeline on two maps.
    Separate(SeparateArgs),
    /// Box dimension of a CSV point cloud, optionally with a separating translation.
    Boxdim(BoxdimArgs),
    /// Frontier of a PBM continuum.
    Frontier(FrontierArgs),
    /// Agreement of the nine transitivity notions on random permutation models.
    FiniteOracle(OracleArgs),
    /// Finite-difference Jacobian determinants of maps at random points.
    JacobianAudit(AuditArgs),
}

#[derive(Args, Debug)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the grid resolution of the config.
    #[arg(long)]
    resolution: Option<usize>,
    /// Overrides the word-length or iteration budget of the config.
    #[arg(long)]
    budget: Option<usize>,
}

#[derive(Args, Debug)]
struct SeparateArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Master seed; stage streams derive from it.
    #[arg(long)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BoxdimArgs {
    /// CSV with header `x,y,z`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 2)]
    min_exp: u32,
    #[arg(long, default_value_t = 8)]
    max_exp: u32,
    /// Second cloud to separate from by a small translation.
    #[arg(long)]
    separate_from: Option<PathBuf>,
    #[arg(long, default_value_t = 0.02)]
    eps: f64,
    #[arg(long, default_value_t = 2.0 / 64.0)]
    margin: f64,
    #[arg(long, default_value_t = 1000)]
    budget: usize,
    /// Required with `--separate-from`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ChartArg {
    Square,
    Annulus,
    Torus,
}

impl From<ChartArg> for Chart {
    fn from(c: ChartArg) -> Self {
        Chart::new(match c {
            ChartArg::Square => ChartKind::Square,
            ChartArg::Annulus => ChartKind::Annulus,
            ChartArg::Torus => ChartKind::Torus,
        })
    }
}

#[derive(Args, Debug)]
struct FrontierArgs {
    /// P1 or P4 bitmap; the top image row is the highest grid row.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "annulus")]
    chart: ChartArg,
    /// Inclusive row band `lo:hi` (default: all rows).
    #[arg(long, value_parser = parse_rows)]
    rows: Option<RowBand>,
}

fn parse_rows(s: &str) -> Result<RowBand, String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if lo > hi {
        return Err("lo must not exceed hi".into());
    }
    Ok(RowBand { lo, hi })
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long, default_value_t = 500)]
    models: usize,
    #[arg(long, default_value_t = 12)]
    max_n: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Overrides the number of sample points per map.
    #[arg(long)]
    points: Option<usize>,
}

const COVERAGE_SCHEMA: &str = r#"coverage config:
{
  "f": <map>, "g": <map>,
  "start": {"x": 0.23, "y": 0.41},
  "resolution": 64,            // optional, default 64
  "budget": 1000,              // optional, word-length levels, default 1000
  "mode": "semigroup",         // optional, or "group"
  "idle_limit": 50             // optional, null disables the saturation stop
}"#;

const DETECT_SCHEMA: &str = r#"detect config:
{
  "map": <map>,
  "band": {"lo": 0.2, "hi": 0.8},
  "power": 1,                  // optional
  "delta": 0.1,                // optional, pads the band into the raster frame
  "detect": {"count": 50, "iterations": 4096, "spread_tol": 0.05, "resolution": 64,
             "transversal_x": 0.1, "retries": 8, "invariance_samples": 256}   // all optional
}"#;

const SEPARATE_SCHEMA: &str = r#"separate config:
{
  "f": <map>, "g": <map>,
  "band": {"lo": 0.2, "hi": 0.8},
  "power": 1,                  // optional
  "delta": 0.1, "half_width": 0.1, "columns": [0.25, 0.5, 0.75],
  "detect": {...},             // as for detect
  "margin": null,              // optional, default 2/N
  "search_budget": 10000,
  "forced_t": null,            // optional [t1, t2, t3]
  "coverage": {"start": null, "resolution": null, "budget": 2000, "idle_limit": 50, "mode": "semigroup"}
}"#;

const AUDIT_SCHEMA: &str = r#"jacobian-audit config:
{
  "maps": [<map>, ...],
  "points": 1000,              // optional
  "y_range": [0.0, 1.0],       // optional, sampled ordinates
  "step": 1e-7,                // optional, finite-difference step in [1e-7, 1e-4]
  "tolerance": 1e-6            // optional
}"#;

const MAP_SCHEMA: &str = r#"<map>: {"kind": "...", "chart": "square" | "annulus" | "torus", "params": {...}}
  kinds: identity; integrable_twist {offset, slope}; kicked_twist {k, shape, boundary};
         bump_flow {spec, frame}; composite {maps}; inverse {map}; conjugate {g, h}"#;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoverageFile {
    f: AreaMap,
    g: AreaMap,
    start: ChartPoint,
    #[serde(default = "default_resolution")]
    resolution: usize,
    #[serde(default = "default_budget")]
    budget: usize,
    #[serde(default)]
    mode: Mode,
    #[serde(default = "default_idle")]
    idle_limit: Option<usize>,
}

fn default_resolution() -> usize {
    64
}

fn default_budget() -> usize {
    1000
}

fn default_idle() -> Option<usize> {
    Some(SATURATION_WINDOW)
}

fn default_power() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectFile {
    map: AreaMap,
    band: Band,
    #[serde(default = "default_power")]
    power: usize,
    #[serde(default)]
    delta: Option<f64>,
    #[serde(default)]
    detect: DetectConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AuditFile {
    maps: Vec<AreaMap>,
    #[serde(default = "default_points")]
    points: usize,
    #[serde(default = "default_y_range")]
    y_range: [f64; 2],
    #[serde(default = "default_step")]
    step: f64,
    #[serde(default = "default_tolerance")]
    tolerance: f64,
}

fn default_points() -> usize {
    1000
}

fn default_y_range() -> [f64; 2] {
    [0.0, 1.0]
}

fn default_step() -> f64 {
    DEFAULT_FD_STEP
}

fn default_tolerance() -> f64 {
    1e-6
}

/// Result of a command that ran to completion.
enum Status {
    Ok,
    VerificationFailed(String),
}

/// Usage problem detected after argument parsing.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn read_config<T: DeserializeOwned>(path: &Path, schema: &str) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("invalid config {}: {e}\n\n{schema}\n\n{MAP_SCHEMA}", path.display())).into())
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<()> {
    let mut w = create(dir, name)?;
    w.write_all(to_json_string(value)?.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn write_with(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> anyhow::Result<()> {
    let mut w = create(dir, name)?;
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn coverage(args: &ConfigArgs, out: &Path) -> anyhow::Result<Status> {
    let mut c: CoverageFile = read_config(&args.config, COVERAGE_SCHEMA)?;
    c.resolution = args.resolution.unwrap_or(c.resolution);
    c.budget = args.budget.unwrap_or(c.budget);
    let opts = CoverageOptions { mode: c.mode, idle_limit: c.idle_limit };
    let r = coverage_test(&c.f, &c.g, c.start, c.resolution, c.budget, opts)?;
    write_json(out, "coverage.json", &r)?;
    write_with(out, "coverage.csv", |w| r.write_csv(w))?;
    write_with(out, "coverage.pgm", |w| r.write_pgm(w))?;
    println!("covered {} of {} cells (fraction {:.6})", r.covered, r.resolution * r.resolution, r.final_fraction());
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct FamilyExport<'a> {
    frame: Band,
    columns: [f64; 3],
    order_key: &'a [[f64; 3]],
    members: &'a [GridContinuum],
}

fn detect(args: &ConfigArgs, out: &Path) -> anyhow::Result<Status> {
    let c: DetectFile = read_config(&args.config, DETECT_SCHEMA)?;
    let mut cfg = DetectConfig { power: c.power, ..c.detect };
    if let Some(delta) = c.delta {
        cfg.frame = c.band.padded(delta).ok_or_else(|| UsageError(format!("band does not admit margin {delta}")))?;
    }
    cfg.resolution = args.resolution.unwrap_or(cfg.resolution);
    cfg.iterations = args.budget.unwrap_or(cfg.iterations);
    let d = detect_circle_family(&c.map, c.band, &cfg)?;
    let fam = &d.family;
    write_json(out, "family.json", &FamilyExport { frame: cfg.frame, columns: fam.columns(), order_key: fam.order_key(), members: fam.members() })?;
    write_with(out, "candidates.csv", |w| d.write_csv(w))?;
    write_with(out, "family.pgm", |w| write_family_pgm(fam, cfg.resolution, w))?;
    println!("{} circles accepted of {} seeds tried", fam.len(), d.tried.len());
    Ok(Status::Ok)
}

fn write_outcome(o: &SeparationOutcome, out: &Path) -> anyhow::Result<()> {
    write_json(out, "outcome.json", o)?;
    write_with(out, "coverage.csv", |w| o.write_coverage_csv(w))?;
    let mut before = o.rasters.f.clone();
    before.extend(o.rasters.g.iter().cloned());
    let mut after = o.rasters.f.clone();
    after.extend(o.rasters.g_after.iter().cloned());
    write_with(out, "families_before.pgm", |w| write_layers_pgm(&before, o.resolution, w))?;
    write_with(out, "families_after.pgm", |w| write_layers_pgm(&after, o.resolution, w))?;
    write_with(out, "coverage_before.pgm", |w| o.coverage_before.write_pgm(w))?;
    write_with(out, "coverage_after.pgm", |w| o.coverage_after.write_pgm(w))?;
    Ok(())
}

fn separate(args: &SeparateArgs, out: &Path) -> anyhow::Result<Status> {
    let mut c: ExperimentConfig = read_config(&args.common.config, SEPARATE_SCHEMA)?;
    let s = &mut c.separation;
    s.seed = args.seed;
    if let Some(n) = args.common.resolution {
        s.detect.resolution = n;
    }
    if let Some(b) = args.common.budget {
        s.coverage.budget = b;
    }
    match run_separation(&c.f, &c.g, c.band, c.power, &c.separation) {
        Ok(o) => {
            write_outcome(&o, out)?;
            let pairs = o.verification.len();
            println!(
                "separated {pairs}/{pairs} pairs{}; coverage {:.6} -> {:.6} ({:+} cells)",
                if o.trivially_separated { " (trivially: no circles of g)" } else { "" },
                o.coverage_before.final_fraction(),
                o.coverage_after.final_fraction(),
                o.coverage_gain()
            );
            Ok(Status::Ok)
        }
        Err(ExperimentError::VerificationFailed { failed, pairs, outcome }) => {
            write_outcome(&outcome, out)?;
            Ok(Status::VerificationFailed(format!("{failed} of {pairs} pairs have no witnessing column")))
        }
        Err(e @ ExperimentError::Search(BoxDimError::BudgetExhausted { .. })) => Ok(Status::VerificationFailed(e.to_string())),
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct BoxdimReport {
    points: usize,
    dimension: boxdim::DimensionEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    translation: Option<boxdim::SeparatingTranslation>,
}

fn read_cloud(path: &Path) -> anyhow::Result<boxdim::PointCloud3> {
    let f = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(boxdim::read_csv(BufReader::new(f))?)
}

fn boxdim_cmd(args: &BoxdimArgs, out: &Path) -> anyhow::Result<Status> {
    if args.separate_from.is_some() && args.seed.is_none() {
        bail!(UsageError("--seed is required with --separate-from".into()));
    }
    if args.min_exp > args.max_exp {
        bail!(UsageError("--min-exp must not exceed --max-exp".into()));
    }
    let a = read_cloud(&args.input)?;
    if let Err(e @ BoxDimError::NotChain { .. }) = boxdim::sum_embed(&a) {
        println!("input is not a chain: {e}");
    }
    let dimension = boxdim::upper_box_dimension(&a, args.min_exp..=args.max_exp)?;
    let mut status = Status::Ok;
    let translation = match (&args.separate_from, args.seed) {
        (Some(path), Some(seed)) => {
            let b = read_cloud(path)?;
            let seed = seeds::substream_seed(seed, "translation");
            match boxdim::find_separating_translation(&a, &b, args.eps, args.margin, args.budget, seed) {
                Ok(t) => Some(t),
                Err(e @ BoxDimError::BudgetExhausted { .. }) => {
                    status = Status::VerificationFailed(e.to_string());
                    None
                }
                Err(e) => return Err(e.into()),
            }
        }
        _ => None,
    };
    println!("slope {:.6} +/- {:.6} over {} scales", dimension.slope, dimension.slope_ci, dimension.scales.len());
    if let Some(t) = &translation {
        println!("translation {:?} achieves {:.6} after {} samples", t.t, t.achieved, t.samples);
    }
    write_json(out, "boxdim.json", &BoxdimReport { points: a.len(), dimension, translation })?;
    Ok(status)
}

fn frontier(args: &FrontierArgs, out: &Path) -> anyhow::Result<Status> {
    let f = File::open(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let k = match continua_grid::read_pbm(BufReader::new(f), args.chart.into()) {
        Ok(k) => k,
        Err(e @ (ContinuumError::Format(_) | ContinuumError::Io(_))) => return Err(e.into()),
        Err(e) => return Ok(Status::VerificationFailed(e.to_string())),
    };
    let band = args.rows.unwrap_or_else(|| RowBand::full(k.n()));
    match continua_grid::extract_frontier(&k, band) {
        Ok(d) => {
            write_with(out, "frontier.pbm", |w| continua_grid::write_pbm(&d.frontier, w))?;
            println!("frontier has {} of {} cells", d.frontier.len(), k.len());
            Ok(Status::Ok)
        }
        Err(e) => Ok(Status::VerificationFailed(format!("{e:?}: {e}"))),
    }
}

fn finite_oracle(args: &OracleArgs, out: &Path) -> anyhow::Result<Status> {
    if args.max_n == 0 {
        bail!(UsageError("--max-n must be at least 1".into()));
    }
    let s = run_finite_oracle(args.models, args.max_n, seeds::substream_seed(args.seed, "finite-oracle"));
    write_json(out, "finite_oracle.json", &s)?;
    println!("9/9 equivalent in {}/{} models", s.equivalent, s.models);
    Ok(if s.equivalent == s.models {
        Status::Ok
    } else {
        Status::VerificationFailed(format!("{} models disagree", s.models - s.equivalent))
    })
}

#[derive(Serialize)]
struct AuditRow {
    index: usize,
    map: AreaMap,
    points: usize,
    max_error: f64,
    failures: usize,
    escaped: usize,
}

fn jacobian_audit(args: &AuditArgs, out: &Path) -> anyhow::Result<Status> {
    let c: AuditFile = read_config(&args.config, AUDIT_SCHEMA)?;
    let points = args.points.unwrap_or(c.points);
    let [ylo, yhi] = c.y_range;
    if !(0.0..=1.0).contains(&ylo) || !(ylo < yhi && yhi <= 1.0) {
        bail!(UsageError(format!("y_range must satisfy 0 <= lo < hi <= 1, got {:?}", c.y_range)));
    }
    let mut rows = Vec::new();
    for (i, m) in c.maps.iter().enumerate() {
        let mut rng = seeds::indexed(args.seed, "jacobian-audit", i as u64);
        let (mut max_error, mut failures, mut escaped) = (0.0f64, 0, 0);
        for _ in 0..points {
            let p = ChartPoint::new(rng.gen(), rng.gen_range(ylo..yhi));
            match m.jacobian_det(p, c.step) {
                Ok(d) => {
                    max_error = max_error.max((d - 1.0).abs());
                    if (d - 1.0).abs() >= c.tolerance {
                        failures += 1;
                    }
                }
                Err(MapError::Escaped { .. }) => escaped += 1,
                Err(e) => return Err(e.into()),
            }
        }
        println!("map {i}: max |det J - 1| = {max_error:.3e}, {failures} failures, {escaped} escaped");
        rows.push(AuditRow { index: i, map: m.clone(), points, max_error, failures, escaped });
    }
    write_json(out, "jacobian_audit.json", &rows)?;
    let failed: usize = rows.iter().map(|r| r.failures).sum();
    Ok(if failed == 0 { Status::Ok } else { Status::VerificationFailed(format!("{failed} points exceed tolerance {:e}", c.tolerance)) })
}

fn run(cli: &Cli) -> anyhow::Result<Status> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!(UsageError("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Coverage(a) => coverage(a, out),
        Command::Detect(a) => detect(a, out),
        Command::Separate(a) => separate(a, out),
        Command::Boxdim(a) => boxdim_cmd(a, out),
        Command::Frontier(a) => frontier(a, out),
        Command::FiniteOracle(a) => finite_oracle(a, out),
        Command::JacobianAudit(a) => jacobian_audit(a, out),
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
    match run(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::VerificationFailed(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
