//! Command-line front end.
//!
//! Exit codes: 0 every enabled check passed, 1 a check failed, 2 the config
//! (or the command line) is invalid, 3 a runtime or domain error stopped the
//! run. Whenever a command gets past config loading it writes
//! `<out>/report.json`; the geodesic command also writes
//! `<out>/trajectory.csv`.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, Instance, InstanceConfig, LinearitySpec, ResolvedTolerances};
use crate::error::GeometryError;
use crate::geodesic::{
    integrate_with, GeodesicError, GeodesicRun, GeodesicState, HaltReason, IntegratorSettings,
    KillingQuadratic, MetricNorm, QuadraticForm,
};
use crate::hspace2211::{HSpaceParams, Point6};
use crate::metrics::ConstantMetric;
use crate::tensorcalc::MetricAsField;
use crate::verify::{
    constant_curvature_check, direct_curvature_check, eisenhart_residual, eisenhart_residual_fd,
    eisenhart_residual_of, killing_residual_of, killing_tensor_residual, linearity_check,
    signature_probe, signature_tally, CombinedHField, CriterionVerdict, CurvatureVerdict,
    SignatureProbe, SignatureTally, VerificationReport,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Signature with two time-like directions: (positive, negative) = (2, 4).
pub const TWO_TIMELIKE: [usize; 2] = [2, 4];

/// Linear combinations checked when the config has no `[linearity]` table.
pub const DEFAULT_COMBINATIONS: [[f64; 2]; 2] = [[1.0, 1.0], [2.0, -3.0]];

#[derive(Debug, Parser)]
#[command(
    name = "hspace",
    version,
    about = "Build and numerically verify six-dimensional [2211] h-space metrics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eisenhart, Killing-tensor and linearity residuals over the sample.
    Verify(CommonArgs),
    /// Direct constant-curvature fit against the ρ criterion.
    Curvature(CommonArgs),
    /// Integrate the configured geodesic and monitor its first integrals.
    Geodesic(CommonArgs),
    /// Metric signature over the sample for all 16 sign assignments.
    Signature(CommonArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Instance config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for report.json (and trajectory.csv).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overrides `sampling.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the analytic pass tolerances (Eisenhart, Killing,
    /// linearity, curvature).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Worker threads for point-level checks (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Verify(_) => "verify",
            Command::Curvature(_) => "curvature",
            Command::Geodesic(_) => "geodesic",
            Command::Signature(_) => "signature",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Verify(a)
            | Command::Curvature(a)
            | Command::Geodesic(a)
            | Command::Signature(a) => a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSection {
    pub direct: CurvatureVerdict,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub criterion: Option<CriterionVerdict>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub agreement: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureSection {
    pub configured: SignatureTally,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub probe: Option<SignatureProbe>,
    pub target: [usize; 2],
    pub target_found: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEntry {
    pub name: String,
    pub initial: f64,
    pub max_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaltInfo {
    pub reason: HaltReason,
    pub t: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicSection {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evaluations: usize,
    pub final_state: GeodesicState,
    pub drift: Vec<DriftEntry>,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub halt: Option<HaltInfo>,
    pub trajectory_csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    /// Seconds since the Unix epoch; the only field that varies between
    /// identical runs.
    pub timestamp: u64,
    pub config: InstanceConfig,
    pub tolerances: ResolvedTolerances,
    pub checks: Vec<VerificationReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub curvature: Option<CurvatureSection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub signature: Option<SignatureSection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub geodesic: Option<GeodesicSection>,
    pub skipped_points: usize,
    pub errors: Vec<String>,
    pub exit_status: i32,
}

impl RunReport {
    fn new(command: &str, config: &InstanceConfig) -> Self {
        RunReport {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            config: config.clone(),
            tolerances: config.tolerances(),
            checks: Vec::new(),
            curvature: None,
            signature: None,
            geodesic: None,
            skipped_points: 0,
            errors: Vec::new(),
            exit_status: EXIT_PASS,
        }
    }

    fn runtime_error(&mut self, e: impl std::fmt::Display) {
        self.errors.push(e.to_string());
        self.exit_status = EXIT_RUNTIME;
    }

    fn fail_unless(&mut self, ok: bool) {
        if !ok && self.exit_status == EXIT_PASS {
            self.exit_status = EXIT_FAILURE;
        }
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_PASS
            };
        }
    };
    let args = cli.command.args().clone();
    let mut config = match InstanceConfig::load(&args.config) {
        Ok(loaded) => loaded.config,
        Err(e) => return config_error(&args.config, &e),
    };
    if let Err(e) = apply_overrides(&mut config, &args) {
        return config_error(&args.config, &e);
    }
    let instance = match config.validate(None) {
        Ok(i) => i,
        Err(e) => return config_error(&args.config, &e),
    };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return EXIT_CONFIG;
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_RUNTIME;
        }
    };

    let outcome = pool.install(|| execute(&cli.command, &config, &instance, &args.out));
    match outcome {
        Ok(report) => {
            let mut stdout = io::stdout().lock();
            let _ = print_summary(&mut stdout, &report);
            if let Err(e) = write_report(&args.out, &report) {
                eprintln!("error: cannot write report: {e}");
                return EXIT_RUNTIME;
            }
            for e in &report.errors {
                eprintln!("error: {e}");
            }
            report.exit_status
        }
        Err(CommandError::Config(e)) => config_error(&args.config, &e),
        Err(CommandError::Io(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn config_error(path: &Path, e: &ConfigError) -> i32 {
    eprintln!("config error: {}: {e}", path.display());
    EXIT_CONFIG
}

fn apply_overrides(config: &mut InstanceConfig, args: &CommonArgs) -> Result<(), ConfigError> {
    if let Some(seed) = args.seed {
        if let Some(s) = config.sampling.as_mut() {
            s.seed = seed;
        }
    }
    if let Some(tol) = args.tol {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(ConfigError::Invalid {
                field: "--tol".into(),
                line: None,
                message: format!("must be positive and finite, got {tol}"),
            });
        }
        let t = config.tolerances.get_or_insert_with(Default::default);
        t.eisenhart = Some(tol);
        t.killing = Some(tol);
        t.linearity = Some(tol);
        t.curvature = Some(tol);
    }
    Ok(())
}

#[derive(Debug)]
enum CommandError {
    Config(ConfigError),
    Io(io::Error),
}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        CommandError::Config(e)
    }
}

impl From<io::Error> for CommandError {
    fn from(e: io::Error) -> Self {
        CommandError::Io(e)
    }
}

fn execute(
    command: &Command,
    config: &InstanceConfig,
    instance: &Instance,
    out: &Path,
) -> Result<RunReport, CommandError> {
    let mut config = config.clone();
    if matches!(command, Command::Verify(_))
        && matches!(instance, Instance::HSpace(_))
        && config.linearity.is_none()
    {
        config.linearity = Some(LinearitySpec {
            combinations: DEFAULT_COMBINATIONS.to_vec(),
            random: 0,
        });
    }
    let mut report = RunReport::new(command.name(), &config);
    match command {
        Command::Verify(_) => cmd_verify(&config, instance, &mut report)?,
        Command::Curvature(_) => cmd_curvature(&config, instance, &mut report)?,
        Command::Geodesic(_) => cmd_geodesic(&config, instance, out, &mut report)?,
        Command::Signature(_) => cmd_signature(&config, instance, &mut report)?,
    }
    report.skipped_points = report.checks.iter().map(|c| c.skipped).sum::<usize>()
        + report.curvature.as_ref().map_or(0, |c| c.direct.skipped)
        + report
            .signature
            .as_ref()
            .map_or(0, |s| s.configured.skipped);
    Ok(report)
}

fn push_check(report: &mut RunReport, result: Result<VerificationReport, GeometryError>) {
    match result {
        Ok(check) => {
            let ok = check.passed;
            report.checks.push(check);
            report.fail_unless(ok);
        }
        Err(e) => report.runtime_error(e),
    }
}

fn cmd_verify(
    config: &InstanceConfig,
    instance: &Instance,
    report: &mut RunReport,
) -> Result<(), CommandError> {
    let sample = config.sample_points()?;
    let tol = config.tolerances();
    match instance {
        Instance::HSpace(params) => verify_hspace(config, params, &sample, &tol, report),
        Instance::Flat(metric) => verify_flat(metric, &sample, &tol, report),
    }
    Ok(())
}

fn verify_hspace(
    config: &InstanceConfig,
    params: &HSpaceParams,
    sample: &[Point6],
    tol: &ResolvedTolerances,
    report: &mut RunReport,
) {
    let perturb = config.test_hooks.as_ref().and_then(|h| h.perturb_h22);
    let eisenhart = match perturb {
        None => VerificationReport::pointwise("eisenhart", sample, tol.eisenhart, |p| {
            eisenhart_residual(params, p)
        }),
        Some(f) => VerificationReport::pointwise(
            format!("eisenhart(h22 x {f})"),
            sample,
            tol.eisenhart,
            |p| {
                eisenhart_residual_of(
                    params,
                    &CombinedHField::perturbed(params, f),
                    p.as_slice(),
                    None,
                )
            },
        ),
    };
    push_check(report, eisenhart.map(|r| r.with_params(params)));
    if perturb.is_none() {
        push_check(
            report,
            VerificationReport::pointwise("eisenhart_fd", sample, tol.eisenhart_fd, |p| {
                eisenhart_residual_fd(params, p)
            })
            .map(|r| r.with_params(params)),
        );
    }
    push_check(
        report,
        VerificationReport::pointwise("killing", sample, tol.killing, |p| {
            killing_tensor_residual(params, p)
        })
        .map(|r| r.with_params(params)),
    );
    for [a1, a2] in config.linearity_combinations() {
        push_check(
            report,
            linearity_check(params, a1, a2, sample, tol.linearity),
        );
    }
}

fn verify_flat(
    metric: &ConstantMetric,
    sample: &[Point6],
    tol: &ResolvedTolerances,
    report: &mut RunReport,
) {
    push_check(
        report,
        VerificationReport::pointwise("eisenhart(h = g)", sample, tol.eisenhart, |p| {
            eisenhart_residual_of(metric, &MetricAsField(metric), p.as_slice(), None)
        }),
    );
    push_check(
        report,
        VerificationReport::pointwise("killing(g)", sample, tol.killing, |p| {
            killing_residual_of(metric, &MetricAsField(metric), p.as_slice())
        }),
    );
}

fn cmd_curvature(
    config: &InstanceConfig,
    instance: &Instance,
    report: &mut RunReport,
) -> Result<(), CommandError> {
    let sample = config.sample_points()?;
    let tol = config.tolerances().curvature;
    let section = match instance {
        Instance::HSpace(params) => {
            constant_curvature_check(params, &sample, tol).map(|(direct, criterion)| {
                CurvatureSection {
                    agreement: Some(direct.is_constant == criterion.holds),
                    direct,
                    criterion: Some(criterion),
                }
            })
        }
        Instance::Flat(metric) => {
            let coords: Vec<Vec<f64>> = sample.iter().map(|p| p.as_slice().to_vec()).collect();
            direct_curvature_check(metric, &coords, tol).map(|direct| CurvatureSection {
                direct,
                criterion: None,
                agreement: None,
            })
        }
    };
    match section {
        Ok(s) => {
            report.fail_unless(s.agreement.unwrap_or(true));
            report.curvature = Some(s);
        }
        Err(e) => report.runtime_error(e),
    }
    Ok(())
}

fn cmd_signature(
    config: &InstanceConfig,
    instance: &Instance,
    report: &mut RunReport,
) -> Result<(), CommandError> {
    let sample = config.sample_points()?;
    let section = match instance {
        Instance::HSpace(params) => signature_tally(params, &sample).and_then(|mut configured| {
            configured.signs = Some(params.signs());
            let probe = signature_probe(params, &sample, TWO_TIMELIKE)?;
            Ok(SignatureSection {
                configured,
                target: TWO_TIMELIKE,
                target_found: !probe.matching.is_empty(),
                probe: Some(probe),
            })
        }),
        Instance::Flat(metric) => {
            signature_tally(metric, &sample).map(|configured| SignatureSection {
                target: TWO_TIMELIKE,
                target_found: configured.constant == Some(TWO_TIMELIKE),
                configured,
                probe: None,
            })
        }
    };
    match section {
        Ok(s) if s.configured.evaluated == 0 => {
            report.signature = Some(s);
            report.runtime_error("no sample point has a nondegenerate metric");
        }
        Ok(s) => report.signature = Some(s),
        Err(e) => report.runtime_error(e),
    }
    Ok(())
}

fn cmd_geodesic(
    config: &InstanceConfig,
    instance: &Instance,
    out: &Path,
    report: &mut RunReport,
) -> Result<(), CommandError> {
    let spec = config
        .geodesic
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid {
            field: "geodesic".into(),
            line: None,
            message: "this command needs a [geodesic] table".into(),
        })?;
    let initial = GeodesicState::new(0.0, spec.x0.clone(), spec.v0.clone());
    let mut settings = IntegratorSettings::new(spec.rel_tol);
    settings.max_step = spec.max_step;
    let tolerance = config.tolerances().drift;

    let result = match instance {
        Instance::HSpace(params) => {
            let qg = MetricNorm(params);
            let qh = KillingQuadratic(params);
            let forms: [&dyn QuadraticForm; 2] = [&qg, &qh];
            integrate_with(params, &initial, spec.t_end, &settings, &forms)
        }
        Instance::Flat(metric) => {
            let qg = MetricNorm(metric);
            integrate_with(metric, &initial, spec.t_end, &settings, &[&qg])
        }
    };
    let (run, halt) = match result {
        Ok(run) => (run, None),
        Err(GeodesicError::Halted {
            reason,
            t,
            last_error,
            run,
        }) => {
            let message = if last_error.is_empty() {
                "step size collapsed; the trajectory is approaching a singular point".to_string()
            } else {
                last_error
            };
            (*run, Some(HaltInfo { reason, t, message }))
        }
        Err(e) => {
            report.runtime_error(e);
            return Ok(());
        }
    };

    fs::create_dir_all(out)?;
    let csv_path = out.join("trajectory.csv");
    run.write_csv(io::BufWriter::new(fs::File::create(&csv_path)?))?;
    let section = geodesic_section(&run, tolerance, halt);
    if let Some(h) = &section.halt {
        report.runtime_error(format!(
            "geodesic halted at t = {} ({:?}): {}",
            h.t, h.reason, h.message
        ));
    }
    report.fail_unless(section.passed);
    report.geodesic = Some(section);
    Ok(())
}

fn geodesic_section(run: &GeodesicRun, tolerance: f64, halt: Option<HaltInfo>) -> GeodesicSection {
    let drift: Vec<DriftEntry> = run
        .trace
        .names
        .iter()
        .enumerate()
        .map(|(i, name)| DriftEntry {
            name: name.clone(),
            initial: run.trace.initial[i],
            max_drift: run.trace.max_drift[i],
        })
        .collect();
    GeodesicSection {
        accepted_steps: run.accepted_steps,
        rejected_steps: run.rejected_steps,
        rhs_evaluations: run.rhs_evaluations,
        final_state: run.last().clone(),
        passed: halt.is_none() && drift.iter().all(|d| d.max_drift <= tolerance),
        drift,
        tolerance,
        halt,
        trajectory_csv: "trajectory.csv".into(),
    }
}

fn write_report(out: &Path, report: &RunReport) -> io::Result<()> {
    fs::create_dir_all(out)?;
    let mut text = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(out.join("report.json"), text)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

/// Human-readable tables for the terminal.
pub fn print_summary<W: Write>(w: &mut W, report: &RunReport) -> io::Result<()> {
    writeln!(w, "hspace {}", report.command)?;
    if !report.checks.is_empty() {
        let width = report
            .checks
            .iter()
            .map(|c| c.check.len())
            .max()
            .unwrap_or(0)
            .max(5);
        writeln!(
            w,
            "{:<width$} {:>6} {:>7} {:>12} {:>9}  result",
            "check", "points", "skipped", "max rel", "tol"
        )?;
        for c in &report.checks {
            writeln!(
                w,
                "{:<width$} {:>6} {:>7} {:>12.3e} {:>9.1e}  {}",
                c.check,
                c.evaluated,
                c.skipped,
                c.max_rel_residual,
                c.tolerance,
                verdict(c.passed)
            )?;
        }
    }
    if let Some(c) = &report.curvature {
        let d = &c.direct;
        writeln!(
            w,
            "direct fit: K = {:.12e}, dispersion {:.3e}, max rel residual {:.3e}, points {}, skipped {} -> {}",
            d.k,
            d.k_dispersion,
            d.max_relative_residual,
            d.per_point.len(),
            d.skipped,
            if d.is_constant { "constant" } else { "not constant" }
        )?;
        if let Some(cr) = &c.criterion {
            writeln!(
                w,
                "rho criterion: epsilons vanish {}, max rel violation {:.3e} -> {}",
                cr.epsilons_vanish,
                cr.max_relative_violation,
                if cr.holds { "holds" } else { "fails" }
            )?;
        }
        if let Some(a) = c.agreement {
            writeln!(w, "agreement: {}", verdict(a))?;
        }
    }
    if let Some(s) = &report.signature {
        writeln!(
            w,
            "{:<14} {:>9} {:>7}  signatures",
            "signs", "evaluated", "skipped"
        )?;
        let rows = s
            .probe
            .as_ref()
            .map_or_else(|| vec![&s.configured], |p| p.assignments.iter().collect());
        for t in rows {
            let observed: Vec<String> = t
                .observed
                .iter()
                .map(|c| format!("({},{})x{}", c.positive, c.negative, c.points))
                .collect();
            writeln!(
                w,
                "{:<14} {:>9} {:>7}  {}",
                t.signs.map_or("configured".into(), |s| s.to_string()),
                t.evaluated,
                t.skipped,
                observed.join(" ")
            )?;
        }
        writeln!(
            w,
            "signature ({},{}) {}",
            s.target[0],
            s.target[1],
            if s.target_found { "found" } else { "not found" }
        )?;
    }
    if let Some(g) = &report.geodesic {
        writeln!(
            w,
            "geodesic: {} accepted, {} rejected steps, t = {}",
            g.accepted_steps, g.rejected_steps, g.final_state.t
        )?;
        for d in &g.drift {
            writeln!(
                w,
                "  {:<4} initial {:>14.6e}  drift {:>10.3e}  (tol {:.1e})",
                d.name, d.initial, d.max_drift, g.tolerance
            )?;
        }
        if let Some(h) = &g.halt {
            writeln!(w, "  halted at t = {} ({:?}): {}", h.t, h.reason, h.message)?;
        }
    }
    writeln!(w, "skipped points: {}", report.skipped_points)?;
    writeln!(w, "exit status: {}", report.exit_status)
}
