//! Command-line front end: simulate fixtures, analyze walks, compare
//! methods and re-render reports.
//!
//! Exit codes: 0 success, 1 no usable results, 2 usage or configuration error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use gaitkit_core::config::RunConfig;
use gaitkit_core::params::GaitReport;
use gaitkit_core::pipeline::{analyze_sequence, FitSummary, PipelineError};
use gaitkit_core::plot::bland_altman_svg;
use gaitkit_core::pose_io::{parse_stream, read_gait_csv, write_events_csv, write_gait_csv, write_stream, EventRow, GaitRow};
use gaitkit_core::stats::{
    agreement, read_matched_csv, write_matched_csv, write_table_csv, AgreementReport, MatchedRecord, StatsError,
};
use gaitkit_core::walker::{generate, speed_sweep, GroundTruth, NoiseModel, WalkerSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NO_RESULTS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Name of the walk-level export written by `analyze`.
pub const GAIT_CSV: &str = "walks.gait.csv";
pub const MATCHED_CSV: &str = "matched.csv";
pub const AGREEMENT_JSON: &str = "agreement.json";
pub const TABLE_CSV: &str = "table1.csv";
/// Method name given to walker ground truth in matched-walk files.
pub const TRUTH_METHOD: &str = "truth";

#[derive(Debug, Parser)]
#[command(name = "gaitkit", version, about = "Markerless gait analysis from skeleton sequences")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Maximum number of walks processed in parallel.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Seed overriding the configured one.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic walks with ground-truth sidecars.
    Simulate(SimulateArgs),
    /// Fit, detect steps and compute gait parameters per walk.
    Analyze(AnalyzeArgs),
    /// Agreement statistics between measurement methods.
    Agree(AgreeArgs),
    /// Re-render the table and plots of an agreement report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Walker spec files (TOML).
    pub specs: Vec<PathBuf>,
    /// Also generate this many walks sweeping speed 0.8 to 2.0 m/s.
    #[arg(long)]
    pub sweep: Option<usize>,
    /// 3D joint noise for sweep walks (m).
    #[arg(long, default_value_t = 0.0)]
    pub sigma_3d: f64,
    /// 2D joint noise for sweep walks (px).
    #[arg(long, default_value_t = 0.0)]
    pub sigma_2d: f64,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Walk documents (.poses.json).
    #[arg(required = true)]
    pub poses: Vec<PathBuf>,
    /// Output directory; defaults to the configured one.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AgreeArgs {
    /// Matched-walk CSV (walk_id, subject_id, method, parameter, value).
    pub matched: Option<PathBuf>,
    /// Walk exports from `analyze`; the source column names the method.
    #[arg(long, num_args = 1..)]
    pub gait: Vec<PathBuf>,
    /// Ground-truth sidecars, added as the `truth` method.
    #[arg(long, num_args = 1..)]
    pub truth: Vec<PathBuf>,
    /// Reference method; defaults to the configured one.
    #[arg(long)]
    pub reference: Option<String>,
    /// Output directory; defaults to the configured one.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Agreement report written by `agree`.
    pub report: PathBuf,
    /// Output directory; defaults to the configured one.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

/// A command failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn no_results(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_NO_RESULTS,
            message: message.into(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Outcome {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::no_results(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| Failure::no_results(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report serializes");
    out.push(b'\n');
    out
}

pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, Failure> {
    let mut cfg = match path {
        Some(p) => {
            let text = String::from_utf8(read(p)?).map_err(|_| Failure::usage("config is not UTF-8"))?;
            RunConfig::from_toml(&text).map_err(|e| Failure::usage(format!("config error at {e}")))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.stats.seed = s;
    }
    Ok(cfg)
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, Failure> {
    if jobs == Some(0) {
        return Err(Failure::usage("--jobs must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::usage(e.to_string()))
}

/// Writes `<walk_id>.poses.json` and `<walk_id>.truth.json` for one spec.
pub fn simulate_walk(spec: &WalkerSpec, out: &Path) -> Result<(PathBuf, PathBuf), Failure> {
    let (seq, truth) = generate(spec).map_err(|e| Failure::usage(format!("walk {}: {e}", spec.walk_id)))?;
    let poses = out.join(format!("{}.poses.json", spec.walk_id));
    let sidecar = out.join(format!("{}.truth.json", spec.walk_id));
    write(&poses, write_stream(&seq))?;
    write(&sidecar, to_json(&truth))?;
    Ok((poses, sidecar))
}

fn cmd_simulate(args: &SimulateArgs, seed: Option<u64>, jobs: Option<usize>) -> Outcome {
    let mut specs = Vec::new();
    for path in &args.specs {
        let text = String::from_utf8(read(path)?).map_err(|_| Failure::usage("spec is not UTF-8"))?;
        let mut spec = WalkerSpec::from_toml(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        if spec.walk_id == WalkerSpec::default().walk_id {
            spec.walk_id = walk_stem(path, ".toml");
        }
        if let Some(s) = seed {
            spec.seed = s;
        }
        spec.validate()
            .map_err(|e| Failure::usage(format!("{}: invalid spec, {e}", path.display())))?;
        specs.push(spec);
    }
    if let Some(n) = args.sweep {
        let noise = NoiseModel {
            sigma_3d: args.sigma_3d,
            sigma_2d: args.sigma_2d,
            dropout: 0.0,
        };
        noise.validate().map_err(|e| Failure::usage(e.to_string()))?;
        specs.extend(speed_sweep(n, noise, seed.unwrap_or(0)));
    }
    if specs.is_empty() {
        return Err(Failure::usage("nothing to simulate: pass spec files or --sweep"));
    }
    let results: Vec<Result<_, Failure>> =
        pool(jobs)?.install(|| specs.par_iter().map(|s| simulate_walk(s, &args.out)).collect());
    for r in results {
        let (poses, truth) = r?;
        println!("{}\n{}", poses.display(), truth.display());
    }
    Ok(())
}

fn walk_stem(path: &Path, suffix: &str) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.strip_suffix(suffix).map(str::to_string).unwrap_or_else(|| {
        path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or(name)
    })
}

#[derive(Serialize)]
struct WalkOutput<'a> {
    walk_id: &'a str,
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<&'a GaitReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<FitSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    events: Vec<EventRow>,
}

/// Result of analyzing one walk document.
pub struct WalkResult {
    pub walk_id: String,
    pub row: GaitRow,
    json: Vec<u8>,
    events_csv: Option<Vec<u8>>,
}

pub fn analyze_file(path: &Path, cfg: &RunConfig) -> WalkResult {
    let fallback = walk_stem(path, ".poses.json");
    let parsed = fs::read(path)
        .map_err(|e| (format!("cannot read: {e}"), "Unreadable"))
        .and_then(|b| parse_stream(&b).map_err(|e| (e.to_string(), PipelineError::from(e).code())));
    let seq = match parsed {
        Ok(s) => s,
        Err((message, code)) => {
            return failed_walk(fallback, None, code, message);
        }
    };
    let walk_id = seq.walk_id.clone().unwrap_or(fallback);
    match analyze_sequence(&seq, cfg) {
        Ok(a) => {
            let mut events_csv = Vec::new();
            write_events_csv(&mut events_csv, &walk_id, &a.detection.events).expect("in-memory csv");
            let events = a
                .detection
                .events
                .iter()
                .map(|e| EventRow {
                    walk_id: walk_id.clone(),
                    foot: e.foot,
                    time_s: e.time,
                    frame: e.frame,
                    length_cm: e.length * 100.0,
                })
                .collect();
            let json = to_json(&WalkOutput {
                walk_id: &walk_id,
                status: "ok",
                error: None,
                report: Some(&a.report),
                fit: Some(a.fit_summary()),
                events,
            });
            WalkResult {
                row: GaitRow::from_report(&walk_id, &a.report),
                walk_id,
                json,
                events_csv: Some(events_csv),
            }
        }
        Err(e) => failed_walk(walk_id, seq.source.as_deref(), e.code(), e.to_string()),
    }
}

fn failed_walk(walk_id: String, source: Option<&str>, code: &str, message: String) -> WalkResult {
    let json = to_json(&WalkOutput {
        walk_id: &walk_id,
        status: code,
        error: Some(message),
        report: None,
        fit: None,
        events: Vec::new(),
    });
    WalkResult {
        row: GaitRow::failed(&walk_id, source, code),
        walk_id,
        json,
        events_csv: None,
    }
}

fn cmd_analyze(args: &AnalyzeArgs, cfg: &RunConfig, jobs: Option<usize>) -> Outcome {
    let out = args.out.clone().unwrap_or_else(|| cfg.paths.output_dir.clone());
    let results: Vec<WalkResult> = pool(jobs)?.install(|| args.poses.par_iter().map(|p| analyze_file(p, cfg)).collect());
    for r in &results {
        write(&out.join(format!("{}.report.json", r.walk_id)), &r.json)?;
        if let Some(csv) = &r.events_csv {
            write(&out.join(format!("{}.events.csv", r.walk_id)), csv)?;
        }
        if !r.row.is_ok() {
            eprintln!("{}: {}", r.walk_id, r.row.status);
        }
    }
    let rows: Vec<GaitRow> = results.into_iter().map(|r| r.row).collect();
    let mut csv = Vec::new();
    write_gait_csv(&mut csv, &rows).map_err(|e| Failure::no_results(e.to_string()))?;
    write(&out.join(GAIT_CSV), csv)?;
    let ok = rows.iter().filter(|r| r.is_ok()).count();
    println!("{ok} of {} walks analyzed, results in {}", rows.len(), out.display());
    if ok == 0 {
        return Err(Failure::no_results("no walk could be analyzed"));
    }
    Ok(())
}

/// Matched records from walk exports and ground-truth sidecars.
pub fn matched_from_outputs(gait: &[GaitRow], truths: &[GroundTruth]) -> Vec<MatchedRecord> {
    let subject_of = |walk: &str| {
        truths
            .iter()
            .find(|t| t.walk_id == walk)
            .and_then(|t| t.subject_id.clone())
            .unwrap_or_else(|| walk.to_string())
    };
    let mut records = Vec::new();
    for t in truths {
        let values = [
            ("gait_speed", t.speed),
            ("cadence", t.cadence),
            ("step_length", t.step_length * 100.0),
            ("step_time", t.step_time),
        ];
        for (parameter, value) in values {
            records.push(MatchedRecord {
                walk_id: t.walk_id.clone(),
                subject_id: subject_of(&t.walk_id),
                method: TRUTH_METHOD.into(),
                parameter: parameter.into(),
                value: Some(value),
            });
        }
    }
    for row in gait {
        let method = if row.source.is_empty() { "pipeline".to_string() } else { row.source.clone() };
        for (parameter, value) in row.parameters() {
            records.push(MatchedRecord {
                walk_id: row.walk_id.clone(),
                subject_id: subject_of(&row.walk_id),
                method: method.clone(),
                parameter: parameter.into(),
                value,
            });
        }
    }
    records
}

fn render(report: &AgreementReport, out: &Path) -> Outcome {
    let mut table = Vec::new();
    write_table_csv(&mut table, report).map_err(|e| Failure::no_results(e.to_string()))?;
    write(&out.join(TABLE_CSV), table)?;
    for p in &report.parameters {
        let name = format!("{}_{}.svg", p.parameter, p.method);
        write(&out.join("plots").join(sanitize(&name)), bland_altman_svg(p, &report.reference))?;
    }
    Ok(())
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect()
}

fn cmd_agree(args: &AgreeArgs, cfg: &RunConfig) -> Outcome {
    let out = args.out.clone().unwrap_or_else(|| cfg.paths.output_dir.clone());
    let mut records = Vec::new();
    if let Some(path) = &args.matched {
        records = read_matched_csv(read(path)?.as_slice())
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    }
    if !args.gait.is_empty() || !args.truth.is_empty() {
        let mut rows = Vec::new();
        for p in &args.gait {
            rows.extend(read_gait_csv(read(p)?.as_slice()).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?);
        }
        let mut truths = Vec::new();
        for p in &args.truth {
            let t: GroundTruth = serde_json::from_slice(&read(p)?)
                .map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
            truths.push(t);
        }
        records.extend(matched_from_outputs(&rows, &truths));
    }
    if records.is_empty() {
        return Err(Failure::usage("no input: pass a matched CSV or --gait/--truth files"));
    }
    let reference = args.reference.clone().unwrap_or_else(|| cfg.stats.reference.clone());
    let report = match agreement(&records, &reference, &cfg.stats.agreement()) {
        Ok(r) => r,
        Err(e @ (StatsError::UnknownMethod { .. } | StatsError::DuplicateRecord { .. })) => {
            return Err(Failure::usage(e.to_string()))
        }
        Err(e) => return Err(Failure::no_results(e.to_string())),
    };
    let mut matched = Vec::new();
    write_matched_csv(&mut matched, &records).map_err(|e| Failure::no_results(e.to_string()))?;
    write(&out.join(MATCHED_CSV), matched)?;
    write(&out.join(AGREEMENT_JSON), to_json(&report))?;
    render(&report, &out)?;
    for p in &report.parameters {
        println!(
            "{:<12} {:<10} n={:<4} ICC(2,k)={:.3} bias={:+.4} LoA=[{:.4}, {:.4}] PE={:.1}%",
            p.parameter, p.method, p.n, p.icc_2k, p.bland_altman.bias, p.bland_altman.loa_lower, p.bland_altman.loa_upper, p.percentage_error
        );
    }
    for s in &report.skipped {
        eprintln!("skipped {} / {}: {}", s.parameter, s.method, s.reason);
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs, cfg: &RunConfig) -> Outcome {
    let report: AgreementReport = serde_json::from_slice(&read(&args.report)?)
        .map_err(|e| Failure::usage(format!("{}: {e}", args.report.display())))?;
    let out = args.out.clone().unwrap_or_else(|| {
        args.report
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| cfg.paths.output_dir.clone())
    });
    render(&report, &out)
}

pub fn run(cli: &Cli) -> i32 {
    let outcome = load_config(cli.config.as_deref(), cli.seed).and_then(|cfg| match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, cli.seed, cli.jobs),
        Command::Analyze(a) => cmd_analyze(a, &cfg, cli.jobs),
        Command::Agree(a) => cmd_agree(a, &cfg),
        Command::Report(a) => cmd_report(a, &cfg),
    });
    match outcome {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Parses arguments and runs; argument errors exit with the usage code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            }
        }
    }
}
