//! The `cilab` command line.
//!
//! `sweep-snr` and `sweep-rate` run a [`montecarlo`](crate::montecarlo) sweep
//! and write three files side by side: the CSV results, a gnuplot script that
//! plots them, and `<stem>.manifest.json`, which echoes the resolved
//! configuration and can be passed back through `--config` to rerun the sweep.
//! `single` designs one precoder per technique for a given channel and prints
//! what each user receives.
//!
//! Configuration files are flat TOML:
//!
//! ```toml
//! K = 2
//! nt = 4
//! order = 4
//! points = [0, 5, 10, 15, 20]
//! trials = 2000
//! seed = 1
//! techniques = ["CRZF", "CIMRT", "CIDC", "OPT-MC"]
//! ```
//!
//! `K`, `nt`, `order` and `points` are required (from the file or flags); the
//! rest default as in [`ExperimentConfig::new`]. Flags override file values.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 3 when
//! every trial failed (or, for `single`, when a technique could not be built).

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{generate_rayleigh, max_cross_correlation, ChannelMatrix};
use crate::constellation::{detection_region_contains, SymbolVector};
use crate::linkmodel::QosTargets;
use crate::montecarlo::{
    db_to_linear, design, run_sweep, Design, DesignOptions, ExperimentConfig, SweepAxis, SweepResult, Technique,
};
use crate::rng::{mix_seed, seeded};

/// `max |ρ_jk|` at which `single` refuses to report a CRZF design.
pub const COLINEAR_THRESHOLD: f64 = 0.999;

pub const CSV_HEADER: [&str; 10] = [
    "technique",
    "axis_name",
    "axis_value",
    "mean_power",
    "mean_sum_rate",
    "eta",
    "ser",
    "failures",
    "trials",
    "ci_halfwidth_eta",
];

#[derive(Debug, Parser)]
#[command(name = "cilab", version, about = "Symbol-level precoding experiments for the MISO downlink")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Energy efficiency against average SNR (points in dB).
    SweepSnr(SweepArgs),
    /// Power and energy efficiency against a common target rate (points in bit/s/Hz).
    SweepRate(SweepArgs),
    /// One channel, one symbol vector: print each technique's design.
    Single(SingleArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepArgs {
    /// TOML config, or a manifest written by an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// CSV path; the manifest and gnuplot script are written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated, e.g. `CRZF,CIMRT,OPT-MC`.
    #[arg(long, value_delimiter = ',')]
    pub techniques: Option<Vec<String>>,
    /// Print the summary rows as JSON.
    #[arg(long)]
    pub json: bool,
    #[arg(short = 'K', long)]
    pub users: Option<usize>,
    #[arg(long = "nt")]
    pub antennas: Option<usize>,
    #[arg(long)]
    pub order: Option<u32>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub points: Option<Vec<f64>>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SingleArgs {
    /// Channel rows separated by `;`, entries by `,`, e.g. `1,0;0,1` or `0.3+0.1i,-1i`.
    #[arg(long, conflicts_with = "seed")]
    pub channel: Option<String>,
    /// Draw a Rayleigh channel from this seed instead.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short = 'K', long, default_value_t = 2)]
    pub users: usize,
    #[arg(long = "nt", default_value_t = 4)]
    pub antennas: usize,
    /// Average channel power in dB for a drawn channel.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub snr_db: f64,
    /// Symbol indices, one per user.
    #[arg(long, value_delimiter = ',', required = true)]
    pub symbols: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    pub order: u32,
    /// SNR targets ζ, one per user; all ones when absent.
    #[arg(long, value_delimiter = ',')]
    pub zeta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_value = "CIDC")]
    pub techniques: Vec<String>,
    /// Result file; the manifest is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
    #[arg(long, default_value_t = 32)]
    pub randomizations: usize,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot {action} {path}: {source}")]
    Io {
        action: &'static str,
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Infeasible(_) => 3,
        }
    }
}

fn io_err<'a>(action: &'static str, path: &'a Path) -> impl FnOnce(std::io::Error) -> CliError + 'a {
    move |source| CliError::Io {
        action,
        path: path.to_path_buf(),
        source,
    }
}

/// Flat configuration as it appears in files and manifests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub users: Option<usize>,
    #[serde(rename = "nt", skip_serializing_if = "Option::is_none")]
    pub antennas: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub techniques: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub randomizations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sdp_rel_gap: Option<f64>,
}

impl ConfigFile {
    /// Reads a TOML file, or the `config` member of a JSON manifest.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(io_err("read", path))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let config = value.get("config").cloned().unwrap_or(value);
            serde_json::from_value(config).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        }
    }

    fn overlay(mut self, args: &SweepArgs) -> Self {
        self.users = args.users.or(self.users);
        self.antennas = args.antennas.or(self.antennas);
        self.order = args.order.or(self.order);
        self.techniques = args.techniques.clone().or(self.techniques);
        self.points = args.points.clone().or(self.points);
        self.trials = args.trials.or(self.trials);
        self.seed = args.seed.or(self.seed);
        self.workers = args.workers.or(self.workers);
        self
    }

    /// Builds the experiment; a missing required key is named in the error.
    pub fn resolve(&self, axis: SweepAxis) -> Result<ExperimentConfig, CliError> {
        fn need<T: Clone>(v: &Option<T>, key: &str) -> Result<T, CliError> {
            v.clone().ok_or_else(|| CliError::Config(format!("missing key `{key}`")))
        }
        let mut c = ExperimentConfig::new(
            need(&self.users, "K")?,
            need(&self.antennas, "nt")?,
            need(&self.order, "order")?,
            axis,
            need(&self.points, "points")?,
        );
        if let Some(names) = &self.techniques {
            c.techniques = parse_techniques(names)?;
        }
        c.trials = self.trials.unwrap_or(c.trials);
        c.master_seed = self.seed.unwrap_or(c.master_seed);
        c.snr_db = self.snr_db.unwrap_or(c.snr_db);
        c.target_rate = self.target_rate.or(c.target_rate);
        c.workers = self.workers.or(c.workers);
        c.randomizations = self.randomizations.unwrap_or(c.randomizations);
        c.sdp_rel_gap = self.sdp_rel_gap.unwrap_or(c.sdp_rel_gap);
        c.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(c)
    }

    /// The file form of a resolved experiment.
    pub fn echo(config: &ExperimentConfig) -> Self {
        Self {
            users: Some(config.users),
            antennas: Some(config.antennas),
            order: Some(config.order),
            techniques: Some(config.techniques.iter().map(|t| t.name().to_string()).collect()),
            points: Some(config.points.clone()),
            trials: Some(config.trials),
            seed: Some(config.master_seed),
            snr_db: Some(config.snr_db),
            target_rate: config.target_rate,
            workers: config.workers,
            randomizations: Some(config.randomizations),
            sdp_rel_gap: Some(config.sdp_rel_gap),
        }
    }
}

fn parse_techniques(names: &[String]) -> Result<Vec<Technique>, CliError> {
    let mut out = Vec::new();
    for name in names {
        let t = Technique::from_str(name.trim()).map_err(|e| CliError::Config(format!("key `techniques`: {e}")))?;
        if !out.contains(&t) {
            out.push(t);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub timestamp_unix: u64,
    pub config: serde_json::Value,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    fn new(command: &str, seed: Option<u64>, config: serde_json::Value, outputs: Vec<PathBuf>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            config,
            outputs,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(io_err("write", path))
    }
}

/// `<dir>/<stem><suffix>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "results".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}{suffix}"))
}

/// CSV text of a sweep, header included.
pub fn csv_string(result: &SweepResult) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in &result.rows {
        w.write_record([
            r.technique.name().to_string(),
            result.axis.name().to_string(),
            r.axis_value.to_string(),
            r.mean_power.to_string(),
            r.mean_sum_rate.to_string(),
            r.eta.to_string(),
            r.ser.to_string(),
            r.failures.to_string(),
            r.trials.to_string(),
            r.ci_halfwidth_eta.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
}

/// Gnuplot script reading `csv_name` from its own directory.
pub fn gnuplot_script(csv_name: &str, stem: &str, axis: SweepAxis, techniques: &[Technique]) -> String {
    let xlabel = match axis {
        SweepAxis::SnrDb => "average channel SNR (dB)",
        SweepAxis::Rate => "target rate per user (bit/s/Hz)",
    };
    let list = techniques.iter().map(|t| t.name()).collect::<Vec<_>>().join(" ");
    let mut s = String::new();
    s.push_str("# gnuplot script; run from this directory: gnuplot ");
    s.push_str(stem);
    s.push_str(".gp\n");
    s.push_str("set datafile separator ','\n");
    s.push_str("set terminal pngcairo size 900,600\n");
    s.push_str("set key outside right\nset grid\n");
    s.push_str(&format!("set xlabel '{xlabel}'\n"));
    s.push_str(&format!("techniques = \"{list}\"\n"));
    let plot = |col: &str, err: Option<&str>| {
        let style = match err {
            Some(e) => format!("($3):(strcol(1) eq word(techniques, i) ? ${col} : NaN):(${e}) with yerrorlines"),
            None => format!("($3):(strcol(1) eq word(techniques, i) ? ${col} : NaN) with linespoints"),
        };
        format!("plot for [i=1:words(techniques)] '{csv_name}' skip 1 using {style} title word(techniques, i)\n")
    };
    s.push_str(&format!("set output '{stem}_eta.png'\n"));
    s.push_str("set ylabel 'energy efficiency (bit/s/Hz per unit power)'\n");
    s.push_str(&plot("6", Some("10")));
    if axis == SweepAxis::Rate {
        s.push_str(&format!("set output '{stem}_power.png'\n"));
        s.push_str("set ylabel 'mean transmit power'\nset logscale y\n");
        s.push_str(&plot("4", None));
    }
    s
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err("create directory", dir))?;
    }
    fs::write(path, text).map_err(io_err("write", path))
}

/// Runs a sweep subcommand; returns the written paths.
pub fn cmd_sweep(args: &SweepArgs, axis: SweepAxis) -> Result<Vec<PathBuf>, CliError> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let config = file.overlay(args).resolve(axis)?;
    let result = run_sweep(&config).map_err(|e| CliError::Config(e.to_string()))?;

    let default_name = match axis {
        SweepAxis::SnrDb => "sweep_snr.csv",
        SweepAxis::Rate => "sweep_rate.csv",
    };
    let csv_path = args.out.clone().unwrap_or_else(|| PathBuf::from(default_name));
    let gp_path = sibling(&csv_path, ".gp");
    let manifest_path = sibling(&csv_path, ".manifest.json");
    let csv_name = csv_path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    let stem = csv_path.file_stem().map_or_else(String::new, |n| n.to_string_lossy().into_owned());

    write_file(&csv_path, &csv_string(&result))?;
    write_file(&gp_path, &gnuplot_script(&csv_name, &stem, axis, &config.techniques))?;
    let command = match axis {
        SweepAxis::SnrDb => "sweep-snr",
        SweepAxis::Rate => "sweep-rate",
    };
    let echo = serde_json::to_value(ConfigFile::echo(&config)).expect("config serializes");
    let outputs = vec![csv_path.clone(), gp_path.clone(), manifest_path.clone()];
    RunManifest::new(command, Some(config.master_seed), echo, outputs.clone()).write(&manifest_path)?;

    let mut stdout = std::io::stdout().lock();
    if args.json {
        let text = serde_json::to_string_pretty(&result.rows).expect("rows serialize");
        let _ = writeln!(stdout, "{text}");
    } else {
        let _ = writeln!(
            stdout,
            "{:<8} {:>10} {:>12} {:>12} {:>12} {:>8} {:>8}",
            "tech",
            result.axis.name(),
            "power",
            "eta",
            "ci_eta",
            "ser",
            "failed"
        );
        for r in &result.rows {
            let _ = writeln!(
                stdout,
                "{:<8} {:>10} {:>12.5} {:>12.5} {:>12.5} {:>8.4} {:>8}",
                r.technique.name(),
                r.axis_value,
                r.mean_power,
                r.eta,
                r.ci_halfwidth_eta,
                r.ser,
                r.failures
            );
        }
        let _ = writeln!(stdout, "wrote {}", csv_path.display());
    }

    if result.all_failed() {
        return Err(CliError::Infeasible(format!(
            "all {} trials failed for every technique and point",
            config.trials
        )));
    }
    Ok(outputs)
}

/// Parses `1,0;0,1`-style channel text into rows.
pub fn parse_channel(text: &str) -> Result<ChannelMatrix, CliError> {
    let rows = text
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|e| {
                    let e = e.trim();
                    Complex64::from_str(e).map_err(|_| CliError::Config(format!("key `channel`: bad entry `{e}`")))
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    ChannelMatrix::from_rows(&rows).map_err(|e| CliError::Config(format!("key `channel`: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserReport {
    pub received: Complex64,
    pub intended: usize,
    pub in_region: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleReport {
    pub technique: Technique,
    /// `nt × K` effective precoder for per-user techniques, `nt × 1` for a beam.
    pub precoder: Vec<Vec<Complex64>>,
    pub power: Option<f64>,
    pub users: Vec<UserReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleOutput {
    pub channel: Vec<Vec<Complex64>>,
    pub symbols: Vec<usize>,
    pub order: u32,
    pub zeta: Vec<f64>,
    pub max_cross_correlation: f64,
    pub reports: Vec<SingleReport>,
}

fn rows_of(m: &crate::linalg::CMatrix) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

/// Designs each requested technique on one channel.
pub fn single(args: &SingleArgs) -> Result<SingleOutput, CliError> {
    let techniques = parse_techniques(&args.techniques)?;
    let h = match (&args.channel, args.seed) {
        (Some(text), _) => parse_channel(text)?,
        (None, Some(seed)) => {
            let mut rng = seeded(seed);
            generate_rayleigh(args.users, args.antennas, db_to_linear(args.snr_db), &mut rng)
                .map_err(|e| CliError::Config(e.to_string()))?
        }
        (None, None) => return Err(CliError::Config("missing key `channel` (or `seed`)".into())),
    };
    let d = SymbolVector::from_indices(&args.symbols, args.order).map_err(|e| CliError::Config(e.to_string()))?;
    if d.len() != h.users() {
        return Err(CliError::Config(format!(
            "key `symbols`: {} indices for {} users",
            d.len(),
            h.users()
        )));
    }
    let zeta = args.zeta.clone().unwrap_or_else(|| vec![1.0; h.users()]);
    if zeta.len() != h.users() {
        return Err(CliError::Config(format!("key `zeta`: {} targets for {} users", zeta.len(), h.users())));
    }
    let qos = QosTargets::new(zeta.clone()).map_err(|e| CliError::Config(format!("key `zeta`: {e}")))?;
    let rho = if h.users() > 1 {
        max_cross_correlation(&h).unwrap_or(f64::NAN)
    } else {
        0.0
    };
    let options = DesignOptions {
        randomizations: args.randomizations,
        sdp_rel_gap: crate::multicast::OptimalMulticastOptions::default().rel_gap,
        aux_seed: mix_seed(args.seed.unwrap_or(0), 1 << 63),
    };

    let reports = techniques
        .iter()
        .map(|&t| {
            if t == Technique::Crzf && rho >= COLINEAR_THRESHOLD {
                return SingleReport {
                    technique: t,
                    precoder: Vec::new(),
                    power: None,
                    users: Vec::new(),
                    error: Some(format!(
                        "degenerate channel: max |rho| = {rho:.6} >= {COLINEAR_THRESHOLD}; users are nearly colinear, \
                         so zero forcing needs unbounded power to cancel interference instead of exploiting it"
                    )),
                };
            }
            match design(t, &h, &d, &qos, options) {
                Ok(out) => {
                    let (y, sent) = out.received(&h, &d);
                    let users = y
                        .iter()
                        .zip(&sent)
                        .map(|(&received, &intended)| UserReport {
                            received,
                            intended,
                            in_region: crate::constellation::PskSymbol::new(intended, args.order)
                                .and_then(|s| detection_region_contains(s, received))
                                .unwrap_or(false),
                        })
                        .collect();
                    let precoder = match &out {
                        Design::PerUser { w, .. } => rows_of(w),
                        Design::Multicast { w, .. } => w.iter().map(|v| vec![*v]).collect(),
                    };
                    SingleReport {
                        technique: t,
                        precoder,
                        power: Some(out.power()),
                        users,
                        error: None,
                    }
                }
                Err(e) => SingleReport {
                    technique: t,
                    precoder: Vec::new(),
                    power: None,
                    users: Vec::new(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    Ok(SingleOutput {
        channel: rows_of(h.entries()),
        symbols: args.symbols.clone(),
        order: args.order,
        zeta,
        max_cross_correlation: rho,
        reports,
    })
}

fn fmt_c(z: Complex64) -> String {
    let clean = |x: f64| if x.abs() < 5e-13 { 0.0 } else { x };
    let (re, im) = (clean(z.re), clean(z.im));
    if im < 0.0 {
        format!("{re:.6}-{:.6}i", -im)
    } else {
        format!("{re:.6}+{im:.6}i")
    }
}

fn render_single(out: &SingleOutput) -> String {
    let mut s = format!(
        "{} users, {}-PSK, symbols {:?}, zeta {:?}, max |rho| {:.6}\n",
        out.symbols.len(),
        out.order,
        out.symbols,
        out.zeta,
        out.max_cross_correlation
    );
    for r in &out.reports {
        s.push_str(&format!("\n{}\n", r.technique));
        if let Some(e) = &r.error {
            s.push_str(&format!("  error: {e}\n"));
            continue;
        }
        if let Some(p) = r.power {
            s.push_str(&format!("  power {p:.6}\n"));
        }
        s.push_str("  precoder rows:\n");
        for row in &r.precoder {
            let cells: Vec<String> = row.iter().map(|z| fmt_c(*z)).collect();
            s.push_str(&format!("    [{}]\n", cells.join(", ")));
        }
        for (j, u) in r.users.iter().enumerate() {
            s.push_str(&format!(
                "  user {j}: y = {}  symbol {}  {}\n",
                fmt_c(u.received),
                u.intended,
                if u.in_region { "inside region" } else { "OUTSIDE region" }
            ));
        }
    }
    s
}

/// Runs `single`; returns the written paths.
pub fn cmd_single(args: &SingleArgs) -> Result<Vec<PathBuf>, CliError> {
    let out = single(args)?;
    let path = args.out.clone().unwrap_or_else(|| PathBuf::from("single.json"));
    let manifest_path = sibling(&path, ".manifest.json");
    write_file(&path, &(serde_json::to_string_pretty(&out).expect("report serializes") + "\n"))?;
    let echo = serde_json::to_value(args).expect("args serialize");
    let outputs = vec![path.clone(), manifest_path.clone()];
    RunManifest::new("single", args.seed, echo, outputs.clone()).write(&manifest_path)?;

    let mut stdout = std::io::stdout().lock();
    let text = if args.json {
        serde_json::to_string_pretty(&out).expect("report serializes")
    } else {
        render_single(&out)
    };
    let _ = writeln!(stdout, "{text}");

    let failed: Vec<String> = out
        .reports
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("{}: {e}", r.technique)))
        .collect();
    if !failed.is_empty() {
        return Err(CliError::Infeasible(failed.join("\n")));
    }
    Ok(outputs)
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match &cli.command {
        Command::SweepSnr(a) => cmd_sweep(a, SweepAxis::SnrDb),
        Command::SweepRate(a) => cmd_sweep(a, SweepAxis::Rate),
        Command::Single(a) => cmd_single(a),
    };
    match outcome {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("cilab: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_key_is_named() {
        let file: ConfigFile = toml::from_str("nt = 4\norder = 4\npoints = [10]\n").unwrap();
        let err = file.resolve(SweepAxis::SnrDb).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("`K`"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected_with_location() {
        let err = toml::from_str::<ConfigFile>("K = 2\nnt = 4\nusers = 3\n").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("users") && text.contains("line 3"), "{text}");
    }

    #[test]
    fn flags_override_file() {
        let file: ConfigFile = toml::from_str("K = 2\nnt = 4\norder = 4\npoints = [0, 10]\ntrials = 50\nseed = 3\n").unwrap();
        let args = SweepArgs {
            trials: Some(5),
            techniques: Some(vec!["cidc".into(), "opt_mc".into()]),
            ..Default::default()
        };
        let c = file.overlay(&args).resolve(SweepAxis::SnrDb).unwrap();
        assert_eq!(c.trials, 5);
        assert_eq!(c.master_seed, 3);
        assert_eq!(c.techniques, vec![Technique::Cidc, Technique::OptMc]);
        assert_eq!(c.points, vec![0.0, 10.0]);
    }

    #[test]
    fn echo_round_trips() {
        let mut c = ExperimentConfig::new(3, 4, 8, SweepAxis::Rate, vec![0.5, 1.0]);
        c.workers = Some(2);
        let echoed = ConfigFile::echo(&c);
        let json = serde_json::to_string(&echoed).unwrap();
        let back: ConfigFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.resolve(SweepAxis::Rate).unwrap(), c);
    }

    #[test]
    fn channel_text() {
        let h = parse_channel("1, 0; 0.5-2i, i").unwrap();
        assert_eq!(h.users(), 2);
        assert_eq!(h.entries()[(1, 0)], Complex64::new(0.5, -2.0));
        assert_eq!(h.entries()[(1, 1)], Complex64::new(0.0, 1.0));
        assert!(parse_channel("1,0;1").is_err());
        assert!(parse_channel("1,x").is_err());
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling(Path::new("out/run.csv"), ".gp"), PathBuf::from("out/run.gp"));
        assert_eq!(
            sibling(Path::new("run.csv"), ".manifest.json"),
            PathBuf::from("run.manifest.json")
        );
    }

    #[test]
    fn orthonormal_cidc_design() {
        let args = SingleArgs {
            channel: Some("1,0;0,1".into()),
            seed: None,
            users: 2,
            antennas: 2,
            snr_db: 0.0,
            symbols: vec![0, 1],
            order: 4,
            zeta: Some(vec![1.0, 1.0]),
            techniques: vec!["CIDC".into()],
            out: None,
            json: false,
            randomizations: 8,
        };
        let out = single(&args).unwrap();
        let r = &out.reports[0];
        assert!((r.power.unwrap() - 2.0).abs() < 1e-12);
        assert!((r.precoder[0][0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((r.precoder[1][0] - Complex64::new(0.0, 1.0)).norm() < 1e-12);
        assert!(r.users.iter().all(|u| u.in_region));
    }
}
