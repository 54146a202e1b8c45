//! Config-driven front end: `sqbound {run|verify|sweep}`.
//!
//! Configs are flat TOML tables. Every key can be overridden by the flag of
//! the same name. Output is CSV with `#` metadata lines on top.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use toml::Spanned;

use crate::distributions::thm3_schedule;
use crate::error::Error;
use crate::harness::{config_digest, fit_rate, minimax_thm2, minimax_thm3, theoretical_envelope, ExperimentResult};
use crate::learners::{LearnerKind, LearnerSpec};
use crate::par;
use crate::verify::{self, Suite};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CSV_HEADER: &str =
    "experiment,learner,Y,B,d,d_prime,m,reps,seed,mean_excess,half_width_95,envelope_lower,envelope_upper";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

const DEFAULT_REPS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Thm2,
    Thm3,
    Sweep,
    Envelope,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Thm2 => "thm2",
            ExperimentKind::Thm3 => "thm3",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Envelope => "envelope",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            ExperimentKind::Thm2,
            ExperimentKind::Thm3,
            ExperimentKind::Sweep,
            ExperimentKind::Envelope,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }
}

/// Where an offending value came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Flag(&'static str),
    File,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub origin: Origin,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.origin {
            Origin::Line(n) => write!(f, "config line {n}: {}", self.message),
            Origin::Flag(flag) => write!(f, "{flag}: {}", self.message),
            Origin::File => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Compute(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Compute(Error::Inconsistent(_)) => EXIT_VERIFY_FAILED,
            CliError::Compute(_) => EXIT_CONFIG,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default, PartialEq, Args)]
pub struct Overrides {
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replications per (learner, m) cell
    #[arg(long)]
    pub reps: Option<usize>,
    /// Output CSV path
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated subset of zero,vaw,ogd,erm
    #[arg(long)]
    pub learners: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<Spanned<String>>,
    #[serde(rename = "Y")]
    y: Option<Spanned<f64>>,
    #[serde(rename = "B")]
    b: Option<Spanned<f64>>,
    d: Option<Spanned<i64>>,
    m_values: Option<Spanned<Vec<i64>>>,
    learners: Option<Spanned<Vec<String>>>,
    reps: Option<Spanned<i64>>,
    seed: Option<Spanned<i64>>,
    vaw_a: Option<Spanned<f64>>,
    out_path: Option<Spanned<String>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub y: f64,
    pub b: f64,
    pub d: Option<usize>,
    pub m_values: Vec<usize>,
    pub learners: Vec<LearnerKind>,
    pub reps: usize,
    pub seed: u64,
    pub vaw_a: f64,
    pub out_path: PathBuf,
}

struct LineIndex<'a>(&'a str);

impl LineIndex<'_> {
    fn line(&self, offset: usize) -> usize {
        1 + self.0.as_bytes()[..offset.min(self.0.len())]
            .iter()
            .filter(|&&c| c == b'\n')
            .count()
    }

    fn err<T>(&self, value: &Spanned<T>, message: impl Into<String>) -> ConfigError {
        ConfigError {
            origin: Origin::Line(self.line(value.span().start)),
            message: message.into(),
        }
    }
}

fn missing(key: &str) -> ConfigError {
    ConfigError {
        origin: Origin::File,
        message: format!("missing required key '{key}'"),
    }
}

fn flag_err(flag: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        origin: Origin::Flag(flag),
        message: message.into(),
    }
}

fn parse_learners(names: &[String]) -> Result<Vec<LearnerKind>, String> {
    if names.is_empty() {
        return Err("learners must name at least one of zero, vaw, ogd, erm".into());
    }
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let kind: LearnerKind = name.trim().parse().map_err(|e: Error| e.to_string())?;
        if out.contains(&kind) {
            return Err(format!("learner '{kind}' listed twice"));
        }
        out.push(kind);
    }
    Ok(out)
}

fn positive_real(lines: &LineIndex<'_>, v: &Spanned<f64>, key: &str) -> Result<f64, ConfigError> {
    let x = *v.get_ref();
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(lines.err(v, format!("{key} must be a positive real, got {x}")))
    }
}

impl ExperimentConfig {
    /// Parses and validates a config, applying flag overrides.
    pub fn parse(text: &str, overrides: &Overrides) -> Result<Self, ConfigError> {
        let lines = LineIndex(text);
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
            origin: e.span().map_or(Origin::File, |s| Origin::Line(lines.line(s.start))),
            message: e.message().trim().to_string(),
        })?;

        let exp = raw.experiment.ok_or_else(|| missing("experiment"))?;
        let experiment = ExperimentKind::parse(exp.get_ref()).ok_or_else(|| {
            lines.err(
                &exp,
                format!(
                    "unknown experiment '{}' (expected thm2, thm3, sweep or envelope)",
                    exp.get_ref()
                ),
            )
        })?;
        let y_raw = raw.y.ok_or_else(|| missing("Y"))?;
        let y = positive_real(&lines, &y_raw, "Y")?;
        let b_raw = raw.b.ok_or_else(|| missing("B"))?;
        let b = positive_real(&lines, &b_raw, "B")?;

        let d = match &raw.d {
            Some(v) if *v.get_ref() >= 1 => Some(*v.get_ref() as usize),
            Some(v) => return Err(lines.err(v, format!("d must be a positive integer, got {}", v.get_ref()))),
            None => None,
        };
        if d.is_none() && matches!(experiment, ExperimentKind::Thm3 | ExperimentKind::Envelope) {
            return Err(missing("d"));
        }
        let two_point = experiment == ExperimentKind::Thm2 || (experiment == ExperimentKind::Sweep && d.is_none());
        if two_point && b < 2.0 * y {
            return Err(lines.err(
                &b_raw,
                format!("the two-point experiment requires B >= 2Y, got B = {b}, Y = {y}"),
            ));
        }
        if experiment == ExperimentKind::Thm2 && d.is_some_and(|d| d != 1) {
            return Err(lines.err(
                raw.d.as_ref().expect("d present"),
                "thm2 is one-dimensional; omit d or set d = 1",
            ));
        }

        let mv = raw.m_values.ok_or_else(|| missing("m_values"))?;
        if mv.get_ref().is_empty() {
            return Err(lines.err(&mv, "m_values must be nonempty"));
        }
        if let Some(&bad) = mv.get_ref().iter().find(|&&m| m < 1) {
            return Err(lines.err(&mv, format!("m_values entries must be >= 1, got {bad}")));
        }
        if mv.get_ref().windows(2).any(|w| w[0] >= w[1]) {
            return Err(lines.err(&mv, "m_values must be strictly increasing"));
        }
        if experiment == ExperimentKind::Sweep && mv.get_ref().len() < 2 {
            return Err(lines.err(&mv, "a sweep needs at least two m_values"));
        }
        let m_values = mv.get_ref().iter().map(|&m| m as usize).collect();

        let learners = match (&overrides.learners, &raw.learners) {
            (Some(list), _) => {
                let names: Vec<String> = list.split(',').map(str::to_string).collect();
                parse_learners(&names).map_err(|m| flag_err("--learners", m))?
            }
            (None, Some(v)) => parse_learners(v.get_ref()).map_err(|m| lines.err(v, m))?,
            (None, None) => LearnerKind::ALL.to_vec(),
        };

        let reps = match (overrides.reps, &raw.reps) {
            (Some(r), _) if r >= 2 => r,
            (Some(r), _) => return Err(flag_err("--reps", format!("must be >= 2, got {r}"))),
            (None, Some(v)) if *v.get_ref() >= 2 => *v.get_ref() as usize,
            (None, Some(v)) => return Err(lines.err(v, format!("reps must be >= 2, got {}", v.get_ref()))),
            (None, None) => DEFAULT_REPS,
        };

        let seed = match (overrides.seed, &raw.seed) {
            (Some(s), _) => s,
            (None, Some(v)) if *v.get_ref() >= 0 => *v.get_ref() as u64,
            (None, Some(v)) => return Err(lines.err(v, format!("seed must be >= 0, got {}", v.get_ref()))),
            (None, None) => 0,
        };

        let vaw_a = match &raw.vaw_a {
            Some(v) => positive_real(&lines, v, "vaw_a")?,
            None => LearnerSpec::DEFAULT_VAW_A,
        };

        let out_path = match (&overrides.out, &raw.out_path) {
            (Some(p), _) => p.clone(),
            (None, Some(v)) if !v.get_ref().is_empty() => PathBuf::from(v.get_ref()),
            (None, Some(v)) => return Err(lines.err(v, "out_path must not be empty")),
            (None, None) => return Err(missing("out_path")),
        };

        Ok(Self {
            experiment,
            y,
            b,
            d,
            m_values,
            learners,
            reps,
            seed,
            vaw_a,
            out_path,
        })
    }

    /// Digest of every field that affects the numbers (not the output path).
    pub fn digest(&self) -> String {
        let learners: Vec<&str> = self.learners.iter().map(|k| k.as_str()).collect();
        config_digest(&format!(
            "experiment={};Y={};B={};d={};m_values={:?};learners={};reps={};seed={};vaw_a={}",
            self.experiment.as_str(),
            fmt_g(self.y),
            fmt_g(self.b),
            self.d.map_or_else(String::new, |d| d.to_string()),
            self.m_values,
            learners.join(","),
            self.reps,
            self.seed,
            fmt_g(self.vaw_a),
        ))
    }

    fn uses_two_point(&self) -> bool {
        self.experiment == ExperimentKind::Thm2 || (self.experiment == ExperimentKind::Sweep && self.d.is_none())
    }
}

/// `%.12g`: 12 significant digits, plain decimal for exponents in
/// `[-5, 12)`, scientific otherwise, trailing zeros removed.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let s = format!("{x:.*}", (11 - exp) as usize);
        trim_fraction(&s).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_fraction(mantissa), exp.abs())
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One CSV data row.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub experiment: ExperimentKind,
    pub learner: Option<LearnerKind>,
    pub y: f64,
    pub b: f64,
    pub d: usize,
    pub d_prime: usize,
    pub m: usize,
    pub reps: usize,
    pub seed: u64,
    pub result: Option<(f64, f64)>,
    pub envelope_lower: f64,
    pub envelope_upper: f64,
}

impl Row {
    pub fn to_csv(&self) -> String {
        let (mean, hw) = self
            .result
            .map_or((String::new(), String::new()), |(m, h)| (fmt_g(m), fmt_g(h)));
        format!(
            "{},{},{},{},{},{},{},{},{},{mean},{hw},{},{}",
            self.experiment.as_str(),
            self.learner.map_or("none", |k| k.as_str()),
            fmt_g(self.y),
            fmt_g(self.b),
            self.d,
            self.d_prime,
            self.m,
            self.reps,
            self.seed,
            fmt_g(self.envelope_lower),
            fmt_g(self.envelope_upper),
        )
    }
}

/// Computes every (learner, m) cell of the experiment, in config order.
pub fn compute_rows(cfg: &ExperimentConfig) -> Result<Vec<Row>, Error> {
    let d = if cfg.uses_two_point() {
        1
    } else {
        cfg.d.expect("validated")
    };
    let mut rows = Vec::new();
    let learners: Vec<Option<LearnerKind>> = if cfg.experiment == ExperimentKind::Envelope {
        vec![None]
    } else {
        cfg.learners.iter().copied().map(Some).collect()
    };
    for kind in learners {
        for &m in &cfg.m_values {
            let env = theoretical_envelope(cfg.y, cfg.b, d, m);
            let d_prime = if cfg.uses_two_point() {
                1
            } else {
                thm3_schedule(cfg.y, cfg.b, m, d).0
            };
            let result = match kind {
                None => None,
                Some(kind) => {
                    let learner = LearnerSpec::with_regularizer(kind, cfg.b, cfg.y, cfg.vaw_a)?;
                    let res: ExperimentResult = if cfg.uses_two_point() {
                        minimax_thm2(&learner, cfg.y, cfg.b, m, cfg.reps, cfg.seed)?
                    } else {
                        minimax_thm3(&learner, cfg.y, cfg.b, m, d, cfg.reps, cfg.seed)?
                    };
                    Some((res.mean_excess, res.half_width_95))
                }
            };
            rows.push(Row {
                experiment: cfg.experiment,
                learner: kind,
                y: cfg.y,
                b: cfg.b,
                d,
                d_prime,
                m,
                reps: cfg.reps,
                seed: cfg.seed,
                result,
                envelope_lower: env.lower,
                envelope_upper: env.upper,
            });
        }
    }
    Ok(rows)
}

/// `(learner, slope, r_squared)` per learner; `None` when the series cannot
/// be fitted (a zero mean excess, for instance).
pub fn rate_summary(rows: &[Row]) -> Vec<(LearnerKind, Option<(f64, f64)>)> {
    let mut order: Vec<LearnerKind> = Vec::new();
    for kind in rows.iter().filter_map(|r| r.learner) {
        if !order.contains(&kind) {
            order.push(kind);
        }
    }
    order
        .into_iter()
        .map(|kind| {
            let series: Vec<(usize, f64)> = rows
                .iter()
                .filter(|r| r.learner == Some(kind))
                .filter_map(|r| r.result.map(|(mean, _)| (r.m, mean)))
                .collect();
            (kind, fit_rate(&series).ok().map(|f| (f.slope, f.r_squared)))
        })
        .collect()
}

/// Full CSV text for a config: metadata, header, rows and, for sweeps, the
/// rate-fit block.
pub fn render_csv(cfg: &ExperimentConfig) -> Result<String, Error> {
    let rows = compute_rows(cfg)?;
    let mut out = format!("# sqbound {VERSION}\n# config_digest={}\n{CSV_HEADER}\n", cfg.digest());
    for row in &rows {
        out.push_str(&row.to_csv());
        out.push('\n');
    }
    if cfg.experiment == ExperimentKind::Sweep {
        out.push_str("# rate fit of ln(mean_excess) on ln(m)\nlearner,slope,r_squared\n");
        for (kind, fit) in rate_summary(&rows) {
            match fit {
                Some((slope, r2)) => out.push_str(&format!("{kind},{},{}\n", fmt_g(slope), fmt_g(r2))),
                None => out.push_str(&format!("{kind},,\n")),
            }
        }
    }
    Ok(out)
}

/// Computes the CSV on a dedicated pool of `threads` workers (0 = all cores).
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<String, Error> {
    par::with_threads(threads, || render_csv(cfg))
}

/// Same as [`run_experiment`] but insists on a sweep config.
pub fn sweep(cfg: &ExperimentConfig, threads: usize) -> Result<String, CliError> {
    if cfg.experiment != ExperimentKind::Sweep {
        return Err(ConfigError {
            origin: Origin::File,
            message: format!(
                "the sweep command needs experiment = \"sweep\", got \"{}\"",
                cfg.experiment.as_str()
            ),
        }
        .into());
    }
    Ok(run_experiment(cfg, threads)?)
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentConfig::parse(&text, overrides).map_err(|e| {
        ConfigError {
            origin: e.origin,
            message: format!("{} ({})", e.message, path.display()),
        }
        .into()
    })
}

pub fn write_output(path: &Path, csv: &str) -> Result<(), CliError> {
    std::fs::write(path, csv).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Parser)]
#[command(
    name = "sqbound",
    version,
    about = "Squared-loss linear prediction lower-bound laboratory"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment described by a config and write CSV
    Run(RunArgs),
    /// Run a sweep over m_values and append a rate fit
    Sweep(RunArgs),
    /// Run a property suite: lemma1, divergence, optima, lower-bounds, rates or all
    Verify {
        #[arg(default_value = "all")]
        suite: String,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Config file (flat TOML table)
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Worker threads for replications (0 = one per core)
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

fn run_command(args: &RunArgs, require_sweep: bool, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(&args.config, &args.overrides)?;
    let csv = if require_sweep {
        sweep(&cfg, args.threads)?
    } else {
        run_experiment(&cfg, args.threads)?
    };
    write_output(&cfg.out_path, &csv)?;
    let rows = csv.lines().filter(|l| !l.starts_with('#')).count().saturating_sub(1);
    let _ = writeln!(stdout, "wrote {} ({rows} lines)", cfg.out_path.display());
    Ok(())
}

/// Entry point shared by the binary and in-process tests; returns the exit status.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Run(args) => run_command(args, false, stdout),
        Command::Sweep(args) => run_command(args, true, stdout),
        Command::Verify { suite } => {
            let suite: Suite = match suite.parse() {
                Ok(s) => s,
                Err(e) => {
                    let _ = writeln!(stderr, "error: {e}");
                    return EXIT_CONFIG;
                }
            };
            let checks = verify::run(suite);
            for c in &checks {
                let _ = writeln!(stdout, "{c}");
            }
            let failed = checks.iter().filter(|c| !c.pass).count();
            let _ = writeln!(stdout, "{} checks, {failed} failed", checks.len());
            return if failed == 0 { EXIT_OK } else { EXIT_VERIFY_FAILED };
        }
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const THM3: &str = "experiment = \"thm3\"\nY = 1\nB = 4.0\nd = 8\nm_values = [16, 64]\n\
                        learners = [\"erm\", \"zero\"]\nreps = 50\nseed = 7\nout_path = \"out.csv\"\n";

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::parse(text, &Overrides::default())
    }

    #[test]
    fn g_format() {
        assert_eq!(fmt_g(0.14), "0.14");
        assert_eq!(fmt_g(1.0), "1");
        assert_eq!(fmt_g(-2.5), "-2.5");
        assert_eq!(fmt_g(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_g(26.0 / 27.0), "0.962962962963");
        assert_eq!(fmt_g(123456789012.0), "123456789012");
        assert_eq!(fmt_g(1234567890123.0), "1.23456789012e+12");
        assert_eq!(fmt_g(1.5e-7), "1.5e-07");
        assert_eq!(fmt_g(1e-5), "0.00001");
        assert_eq!(fmt_g(0.0), "0");
        assert_eq!(fmt_g(f64::NAN), "nan");
    }

    #[test]
    fn parses_full_config() {
        let cfg = parse(THM3).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Thm3);
        assert_eq!((cfg.y, cfg.b, cfg.d), (1.0, 4.0, Some(8)));
        assert_eq!(cfg.m_values, vec![16, 64]);
        assert_eq!(cfg.learners, vec![LearnerKind::Erm, LearnerKind::Zero]);
        assert_eq!((cfg.reps, cfg.seed, cfg.vaw_a), (50, 7, 1.0));
        assert_eq!(cfg.out_path, PathBuf::from("out.csv"));
    }

    #[test]
    fn overrides_take_precedence() {
        let ov = Overrides {
            seed: Some(99),
            reps: Some(10),
            out: Some("elsewhere.csv".into()),
            learners: Some("vaw,ogd".into()),
        };
        let cfg = ExperimentConfig::parse(THM3, &ov).unwrap();
        assert_eq!((cfg.seed, cfg.reps), (99, 10));
        assert_eq!(cfg.learners, vec![LearnerKind::Vaw, LearnerKind::Ogd]);
        assert_eq!(cfg.out_path, PathBuf::from("elsewhere.csv"));
        let bad = Overrides {
            learners: Some("vaw,lasso".into()),
            ..Default::default()
        };
        let err = ExperimentConfig::parse(THM3, &bad).unwrap_err();
        assert_eq!(err.origin, Origin::Flag("--learners"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "experiment = \"thm2\"\nY = 2\nB = 3\nm_values = [4]\nout_path = \"x\"\n";
        let err = parse(text).unwrap_err();
        assert_eq!(err.origin, Origin::Line(3));
        assert!(err.to_string().contains("B >= 2Y"), "{err}");

        let err = parse(&THM3.replace("[16, 64]", "[64, 16]")).unwrap_err();
        assert_eq!(err.origin, Origin::Line(5));
        assert!(err.message.contains("strictly increasing"));

        let err = parse(&THM3.replace("reps = 50", "reps = \"many\"")).unwrap_err();
        assert_eq!(err.origin, Origin::Line(7));

        let err = parse(&format!("{THM3}colour = 1\n")).unwrap_err();
        assert_eq!(err.origin, Origin::Line(10));
    }

    #[test]
    fn required_keys() {
        let err = parse(&THM3.replace("out_path = \"out.csv\"\n", "")).unwrap_err();
        assert_eq!(err.to_string(), "config: missing required key 'out_path'");
        let err = parse(&THM3.replace("d = 8\n", "")).unwrap_err();
        assert!(err.message.contains("'d'"));
        let sweep = THM3.replace("thm3", "sweep").replace("[16, 64]", "[16]");
        assert!(parse(&sweep).unwrap_err().message.contains("at least two"));
    }

    #[test]
    fn envelope_rows() {
        let text = "experiment = \"envelope\"\nY = 1\nB = 2\nd = 10\nm_values = [100]\nout_path = \"e.csv\"\n";
        let csv = render_csv(&parse(text).unwrap()).unwrap();
        let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], CSV_HEADER);
        assert_eq!(rows[1], "envelope,none,1,2,10,10,100,1000,0,,,0.14,0.2");
    }

    #[test]
    fn csv_layout_and_determinism() {
        let cfg = parse(THM3).unwrap();
        let a = run_experiment(&cfg, 1).unwrap();
        let b = run_experiment(&cfg, 4).unwrap();
        assert_eq!(a, b);
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(lines[0], format!("# sqbound {VERSION}"));
        assert_eq!(lines[1], format!("# config_digest={}", cfg.digest()));
        assert_eq!(lines[2], CSV_HEADER);
        assert_eq!(lines.len(), 3 + 4);
        for line in &lines[3..] {
            assert_eq!(line.split(',').count(), 13, "{line}");
        }
        assert!(lines[3].starts_with("thm3,erm,1,4,8,"));
    }

    #[test]
    fn digest_ignores_output_path() {
        let a = parse(THM3).unwrap();
        let b = parse(&THM3.replace("out.csv", "other.csv")).unwrap();
        let c = parse(&THM3.replace("seed = 7", "seed = 8")).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn summary_recovers_exact_power_law() {
        let rows: Vec<Row> = [10usize, 100, 1000]
            .iter()
            .map(|&m| Row {
                experiment: ExperimentKind::Sweep,
                learner: Some(LearnerKind::Erm),
                y: 1.0,
                b: 4.0,
                d: 8,
                d_prime: 8,
                m,
                reps: 2,
                seed: 0,
                result: Some((3.0 / m as f64, 0.0)),
                envelope_lower: 0.0,
                envelope_upper: 0.0,
            })
            .collect();
        let summary = rate_summary(&rows);
        let (kind, fit) = summary[0];
        let (slope, r2) = fit.unwrap();
        assert_eq!(kind, LearnerKind::Erm);
        assert!((slope + 1.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_command_requires_sweep_experiment() {
        let cfg = parse(THM3).unwrap();
        assert_eq!(sweep(&cfg, 1).unwrap_err().exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn unknown_suite_is_a_config_error() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = main_with_args(["sqbound", "verify", "everything"], &mut out, &mut err);
        assert_eq!(code, EXIT_CONFIG);
        assert!(String::from_utf8(err).unwrap().contains("unknown suite"));
    }
}
