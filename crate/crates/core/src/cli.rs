//! Command-line front end. Exit codes: 0 ok, 2 config error, 3 data
//! error, 4 fit failure. Errors are reported as one JSON object on stderr.

use crate::config::{ConfigError, RunConfig};
use crate::dsp::{
    self, fit_phase_curve, normalize_to_shot, process_trace_set, write_variance_csv, DspError,
    PhaseSummary,
};
use crate::fit::{fit_gain_curve, fit_squeezing_curve, Branch, CurvePoint, FitError};
use crate::physics::{self, linear_to_db};
use crate::report::{
    self, budget_table, build_report, phasematch_analysis, FitSummary, PowerSummary,
    ProcessSummary, ReportError, PROCESS_SUMMARY_FILE,
};
use crate::rng::GENERATOR_ID;
use crate::synth::{self, read_manifest, synthesize_power_sweep, SynthError, TraceKind};
use crate::trace_file::{self, load_trace, TraceFileError};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "sqz",
    version,
    about = "Pulsed waveguide squeezing: simulate, process, fit, report"
)]
pub struct Cli {
    /// Run configuration (JSON); built-in defaults when omitted.
    #[arg(long, global = true, env = "SQZ_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides `acquisition.seed`.
    #[arg(long, global = true, env = "SQZ_SEED")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "SQZ_OUT")]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "SQZ_THREADS")]
    pub threads: Option<usize>,
    /// Output format for stdout.
    #[arg(
        long,
        global = true,
        env = "SQZ_FORMAT",
        value_enum,
        default_value = "json"
    )]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write SQZT traces and a manifest for the configured power sweep.
    Simulate,
    /// Turn traces into variance curves and fitted squeezing levels.
    Process {
        /// Manifest written by `simulate`.
        #[arg(long, conflicts_with = "traces")]
        manifest: Option<PathBuf>,
        /// Trace files; squeezed traces form one set at `pulses.avg_power_w`.
        traces: Vec<PathBuf>,
    },
    /// Fit gain or squeezing versus peak power.
    Fit {
        #[arg(long, value_enum)]
        model: Model,
        /// `process` summaries (.json) or CSV `peak_power_w,value_db,sign,sigma_db`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Detection efficiency table and inferred on-chip squeezing.
    Budget {
        #[arg(long, allow_hyphen_values = true)]
        measured_db: Option<f64>,
    },
    /// QPM spectrum, walk-off and transform-limit check.
    Phasematch {
        /// Dispersion CSV; overrides `phasematch.dispersion_csv`.
        #[arg(long)]
        dispersion: Option<PathBuf>,
    },
    /// Expected vs computed table for every headline quantity.
    Report {
        /// Directory holding `process` and `fit` outputs.
        #[arg(long)]
        artifacts: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Gain,
    Squeezing,
}

impl Model {
    fn name(self) -> &'static str {
        match self {
            Model::Gain => "gain",
            Model::Squeezing => "squeezing",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Fit(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Fit(_) => 4,
        }
    }

    pub fn to_json(&self) -> String {
        let (kind, message) = match self {
            CliError::Config(m) => ("config", m),
            CliError::Data(m) => ("data", m),
            CliError::Fit(m) => ("fit", m),
        };
        serde_json::json!({ "error": kind, "message": message, "exit_code": self.exit_code() })
            .to_string()
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::NotConverged { .. } | FitError::Singular { .. } => {
                CliError::Fit(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DspError> for CliError {
    fn from(e: DspError) -> Self {
        match e {
            DspError::Fit(f) => f.into(),
            other => data(other),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidConfig(_) | SynthError::Physics(_) => {
                CliError::Config(e.to_string())
            }
            other => data(other),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Config(c) => c.into(),
            other => data(other),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        data(e)
    }
}

/// Parses `args`, runs the subcommand and returns the exit code. Normal
/// output goes to `stdout`, the error JSON to stderr.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let cfg = RunConfig {
                base_dir: PathBuf::from("."),
                ..RunConfig::default()
            };
            cfg.validate()?;
            cfg
        }
    };
    if let Some(seed) = cli.seed {
        cfg.acquisition.seed = seed;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    // Output is buffered so the pool closure stays Send.
    let mut buf = Vec::new();
    let result = pool.install(|| dispatch(&cfg, cli, &mut buf));
    stdout.write_all(&buf)?;
    result
}

fn dispatch(cfg: &RunConfig, cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate => cmd_simulate(cfg, &out_dir(cli, "traces"), cli.format, stdout),
        Command::Process { manifest, traces } => cmd_process(
            cfg,
            manifest.as_deref(),
            traces,
            &out_dir(cli, "processed"),
            cli.format,
            stdout,
        ),
        Command::Fit { model, inputs } => {
            cmd_fit(cfg, *model, inputs, cli.out.as_deref(), cli.format, stdout)
        }
        Command::Budget { measured_db } => cmd_budget(cfg, *measured_db, cli.format, stdout),
        Command::Phasematch { dispersion } => cmd_phasematch(
            cfg,
            dispersion.as_deref(),
            cli.out.as_deref(),
            cli.format,
            stdout,
        ),
        Command::Report { artifacts } => cmd_report(cfg, artifacts.as_deref(), cli.format, stdout),
    }
}

fn out_dir(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn print_json<T: Serialize>(stdout: &mut dyn Write, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(data)?;
    writeln!(stdout, "{text}")?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Serialize)]
struct SimulatedFile {
    path: String,
    kind: TraceKind,
    avg_power_w: f64,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct SimulateOutput {
    seed: u64,
    generator: &'static str,
    manifest: PathBuf,
    files: Vec<SimulatedFile>,
}

pub fn cmd_simulate(
    cfg: &RunConfig,
    out: &Path,
    format: Format,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let plan = cfg.sweep_plan()?;
    let manifest = synthesize_power_sweep(&cfg.acquisition, &plan, out)?;
    let files = manifest
        .iter()
        .map(|e| {
            Ok(SimulatedFile {
                path: e.path.clone(),
                kind: e.kind,
                avg_power_w: e.avg_power_w,
                sha256: sha256_file(&out.join(&e.path))?,
            })
        })
        .collect::<io::Result<Vec<_>>>()?;
    match format {
        Format::Json => print_json(
            stdout,
            &SimulateOutput {
                seed: cfg.acquisition.seed,
                generator: GENERATOR_ID,
                manifest: out.join(synth::MANIFEST_FILE),
                files,
            },
        ),
        Format::Csv => {
            writeln!(stdout, "# seed {}", cfg.acquisition.seed)?;
            writeln!(stdout, "path,kind,avg_power_w,sha256")?;
            for f in files {
                let kind = serde_json::to_value(f.kind).map_err(data)?;
                writeln!(
                    stdout,
                    "{},{},{},{}",
                    f.path,
                    kind.as_str().unwrap_or_default(),
                    f.avg_power_w,
                    f.sha256
                )?;
            }
            Ok(())
        }
    }
}

/// Trace kind from the fixed header, without reading the samples.
fn peek_kind(path: &Path) -> Result<TraceKind, CliError> {
    let mut head = [0u8; 7];
    File::open(path)
        .and_then(|mut f| f.read_exact(&mut head))
        .map_err(|e| data(format!("{}: {e}", path.display())))?;
    if &head[..4] != trace_file::MAGIC {
        return Err(data(format!(
            "{}: {}",
            path.display(),
            TraceFileError::BadMagic([head[0], head[1], head[2], head[3]])
        )));
    }
    TraceKind::from_u8(head[6]).ok_or_else(|| {
        data(format!(
            "{}: unknown trace kind {}",
            path.display(),
            head[6]
        ))
    })
}

struct TraceGroups {
    shot: Vec<PathBuf>,
    electronic: Vec<PathBuf>,
    /// Squeezed sets keyed by average pump power, in first-seen order.
    squeezed: Vec<(f64, Vec<PathBuf>)>,
}

fn group_traces(
    cfg: &RunConfig,
    manifest: Option<&Path>,
    traces: &[PathBuf],
) -> Result<TraceGroups, CliError> {
    let entries: Vec<(PathBuf, TraceKind, f64)> = match manifest {
        Some(m) => {
            let base = m.parent().unwrap_or(Path::new("."));
            read_manifest(m)?
                .into_iter()
                .map(|e| (base.join(e.path), e.kind, e.avg_power_w))
                .collect()
        }
        None if traces.is_empty() => {
            return Err(data("process needs --manifest or trace files"));
        }
        None => traces
            .iter()
            .map(|p| Ok((p.clone(), peek_kind(p)?, cfg.pulses.avg_power_w)))
            .collect::<Result<_, CliError>>()?,
    };
    let mut groups = TraceGroups {
        shot: vec![],
        electronic: vec![],
        squeezed: vec![],
    };
    for (path, kind, power) in entries {
        match kind {
            TraceKind::Shot => groups.shot.push(path),
            TraceKind::Electronic => groups.electronic.push(path),
            TraceKind::Squeezed => {
                match groups
                    .squeezed
                    .iter_mut()
                    .find(|(p, _)| p.to_bits() == power.to_bits())
                {
                    Some((_, v)) => v.push(path),
                    None => groups.squeezed.push((power, vec![path])),
                }
            }
        }
    }
    if groups.shot.is_empty() || groups.electronic.is_empty() || groups.squeezed.is_empty() {
        return Err(data(
            "processing needs squeezed, shot and electronic traces",
        ));
    }
    Ok(groups)
}

/// Curve points in the `fit` CSV layout, one per branch and power.
pub fn summary_points(summary: &ProcessSummary) -> Vec<CurvePoint> {
    summary
        .powers
        .iter()
        .flat_map(|p| {
            [
                CurvePoint {
                    peak_power_w: p.peak_power_w,
                    value_db: p.phase.s_minus_db,
                    branch: Branch::Minus,
                    sigma_db: Some(p.phase.s_minus_db_err),
                },
                CurvePoint {
                    peak_power_w: p.peak_power_w,
                    value_db: p.phase.s_plus_db,
                    branch: Branch::Plus,
                    sigma_db: Some(p.phase.s_plus_db_err),
                },
            ]
        })
        .collect()
}

pub fn write_points_csv<W: Write>(points: &[CurvePoint], w: W) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["peak_power_w", "value_db", "sign", "sigma_db"])
        .map_err(data)?;
    for p in points {
        let sign = match p.branch {
            Branch::Plus => "+",
            Branch::Minus => "-",
        };
        out.write_record([
            p.peak_power_w.to_string(),
            format!("{:.4}", p.value_db),
            sign.to_string(),
            p.sigma_db.map(|s| format!("{s:.4}")).unwrap_or_default(),
        ])
        .map_err(data)?;
    }
    out.flush()?;
    Ok(())
}

pub const POINTS_FILE: &str = "points.csv";

pub fn cmd_process(
    cfg: &RunConfig,
    manifest: Option<&Path>,
    traces: &[PathBuf],
    out: &Path,
    format: Format,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let groups = group_traces(cfg, manifest, traces)?;
    let options = &cfg.processing;
    let load = |p: &PathBuf| load_trace(p).map_err(DspError::from);
    let shot = process_trace_set(&groups.shot, load, options)?;
    let electronic = process_trace_set(&groups.electronic, load, options)?;
    fs::create_dir_all(out)?;

    let mut warnings = Vec::new();
    let mut powers = Vec::new();
    for (i, (avg_power_w, paths)) in groups.squeezed.iter().enumerate() {
        let sq = process_trace_set(paths, load, options)?;
        let normalized = normalize_to_shot(&sq, &shot, &electronic, options.subtract_electronic)?;
        let fit = fit_phase_curve(&normalized, &cfg.fit.lm())?;
        let csv_name = format!("variance_p{i:02}.csv");
        let file = File::create(out.join(&csv_name))?;
        write_variance_csv(&normalized, &fit.bin_phases(), io::BufWriter::new(file))?;
        warnings.extend(normalized.warnings.iter().cloned());
        let peak = physics::peak_power(&cfg.pulses.train().with_avg_power(*avg_power_w))
            .map_err(|e| CliError::Config(e.to_string()))?;
        powers.push(PowerSummary {
            avg_power_w: *avg_power_w,
            peak_power_w: peak,
            variance_csv: csv_name,
            phase: PhaseSummary::from(&fit),
        });
    }
    warnings.dedup();

    let shot_mean = shot.mean_variance();
    let electronic_relative = electronic.mean_variance() / shot_mean;
    let summary = ProcessSummary {
        pulses_per_bin: options.pulses_per_bin,
        subtract_electronic: options.subtract_electronic,
        shot_variance: shot_mean,
        electronic_relative,
        electronic_relative_db: dsp::round_db(linear_to_db(electronic_relative)),
        n_shot_traces: shot.n_traces,
        n_electronic_traces: electronic.n_traces,
        powers,
        warnings,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(data)?;
    fs::write(out.join(PROCESS_SUMMARY_FILE), &json)?;
    let points = summary_points(&summary);
    write_points_csv(&points, File::create(out.join(POINTS_FILE))?)?;
    match format {
        Format::Json => {
            writeln!(stdout, "{json}")?;
            Ok(())
        }
        Format::Csv => write_points_csv(&points, stdout),
    }
}

/// Reads `peak_power_w,value_db,sign,sigma_db` rows; `sigma_db` may be blank.
pub fn read_points_csv<R: Read>(r: R) -> Result<Vec<CurvePoint>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = reader.headers().map_err(data)?.clone();
    let expected = ["peak_power_w", "value_db", "sign", "sigma_db"];
    if headers.len() < 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(data(format!(
            "expected header {}, got {}",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut points = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(data)?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64, CliError> {
            field(i)
                .parse::<f64>()
                .map_err(|e| data(format!("row {}: {}: {e}", line + 1, expected[i])))
        };
        let branch = field(2)
            .parse::<Branch>()
            .map_err(|e| data(format!("row {}: {e}", line + 1)))?;
        let sigma_db = match field(3) {
            "" => None,
            _ => Some(num(3)?),
        };
        points.push(CurvePoint {
            peak_power_w: num(0)?,
            value_db: num(1)?,
            branch,
            sigma_db,
        });
    }
    Ok(points)
}

pub fn read_fit_inputs(inputs: &[PathBuf]) -> Result<Vec<CurvePoint>, CliError> {
    let mut points = Vec::new();
    for path in inputs {
        let file = File::open(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let summary: ProcessSummary = serde_json::from_reader(io::BufReader::new(file))
                .map_err(|e| data(format!("{}: {e}", path.display())))?;
            points.extend(summary_points(&summary));
        } else {
            points.extend(read_points_csv(file)?);
        }
    }
    Ok(points)
}

pub fn cmd_fit(
    cfg: &RunConfig,
    model: Model,
    inputs: &[PathBuf],
    out: Option<&Path>,
    format: Format,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let points = read_fit_inputs(inputs)?;
    let options = cfg.fit.curve_options();
    let fit = match model {
        Model::Gain => fit_gain_curve(&points, &options)?,
        Model::Squeezing => fit_squeezing_curve(&points, cfg.alpha_mode(), &options)?,
    };
    let summary = FitSummary::new(model.name(), &fit);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&summary).map_err(data)?;
        fs::write(dir.join(report::fit_file_name(model.name())), json)?;
    }
    match format {
        Format::Json => print_json(stdout, &summary),
        Format::Csv => {
            writeln!(stdout, "parameter,value,stderr")?;
            writeln!(stdout, "eta,{},{}", summary.eta, summary.eta_err)?;
            writeln!(
                stdout,
                "alpha_per_w,{},{}",
                summary.alpha_per_w, summary.alpha_err
            )?;
            Ok(())
        }
    }
}

pub fn cmd_budget(
    cfg: &RunConfig,
    measured_db: Option<f64>,
    format: Format,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    if measured_db.is_some() {
        cfg.budget.measured_squeezing_db = measured_db;
    }
    let table = budget_table(&cfg)?;
    match format {
        Format::Json => print_json(stdout, &table),
        Format::Csv => {
            writeln!(stdout, "name,eta,db")?;
            for r in &table.rows {
                writeln!(stdout, "{},{},{:.4}", r.name, r.eta, r.db)?;
            }
            writeln!(stdout, "total,{},{:.4}", table.total, table.total_db)?;
            Ok(())
        }
    }
}

pub const PHASEMATCH_FILE: &str = "phasematch.csv";

fn write_spectrum_csv<W: Write>(
    a: &report::PhasematchAnalysis,
    length_m: f64,
    w: W,
) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["delta_k_per_m", "half_phase_rad", "ideal", "defective"])
        .map_err(data)?;
    for ((dk, ideal), defective) in a.delta_k_per_m.iter().zip(&a.ideal).zip(&a.defective) {
        out.write_record([
            dk.to_string(),
            (dk * length_m / 2.0).to_string(),
            ideal.to_string(),
            defective.to_string(),
        ])
        .map_err(data)?;
    }
    out.flush()?;
    Ok(())
}

pub fn cmd_phasematch(
    cfg: &RunConfig,
    dispersion: Option<&Path>,
    out: Option<&Path>,
    format: Format,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    if let Some(path) = dispersion {
        cfg.phasematch.dispersion_csv = Some(std::path::absolute(path)?);
        cfg.validate()?;
    }
    let analysis = phasematch_analysis(&cfg)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_spectrum_csv(
            &analysis,
            cfg.waveguide.length_m,
            File::create(dir.join(PHASEMATCH_FILE))?,
        )?;
    }
    match format {
        Format::Json => print_json(stdout, &analysis),
        Format::Csv => write_spectrum_csv(&analysis, cfg.waveguide.length_m, stdout),
    }
}

pub fn cmd_report(
    cfg: &RunConfig,
    artifacts: Option<&Path>,
    format: Format,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    if let Some(dir) = artifacts {
        if !dir.is_dir() {
            return Err(CliError::Config(format!(
                "artifacts directory {} does not exist",
                dir.display()
            )));
        }
    }
    let report = build_report(cfg, artifacts)?;
    match format {
        Format::Json => print_json(stdout, &report),
        Format::Csv => {
            let mut out = csv::Writer::from_writer(stdout);
            out.write_record([
                "quantity",
                "unit",
                "expected",
                "computed",
                "tolerance",
                "status",
                "note",
            ])
            .map_err(data)?;
            for r in &report.rows {
                let status = serde_json::to_value(r.status).map_err(data)?;
                out.write_record([
                    r.quantity.clone(),
                    r.unit.clone(),
                    r.expected.to_string(),
                    r.computed.to_string(),
                    r.tolerance.to_string(),
                    status.as_str().unwrap_or_default().to_string(),
                    r.note.clone(),
                ])
                .map_err(data)?;
            }
            out.flush()?;
            Ok(())
        }
    }
}
