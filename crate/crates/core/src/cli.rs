//! Command-line front end.
//!
//! Every run writes its outputs plus a `manifest.json` into `--out`; the
//! `replay` subcommand re-executes a manifest and reproduces the same files.
//! Exit codes: 0 success, 2 configuration error, 3 solver error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bounds::BoundsReport;
use crate::coupling::psi_from_csv;
use crate::eval::{
    degradation_csv, run_bounds_drops, run_monte_carlo, run_outdated_csi, PipelineConfig, Scheme,
    SinrMode,
};
use crate::numfmt::sig9;
use crate::scenario::DeploymentConfig;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "cran-ua", version, about = "User assignment for multi-domain C-RAN downlinks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Monte Carlo sum-rate of the assignment schemes.
    Rates(RatesArgs),
    /// Leakage of the BCD solution against the optimum and lower bounds.
    Bounds(BoundsArgs),
    /// Sum-rate degradation with outdated channel knowledge.
    Mobility(MobilityArgs),
    /// Re-runs the command recorded in a manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Rates(_) => "rates",
            Command::Bounds(_) => "bounds",
            Command::Mobility(_) => "mobility",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CommonArgs {
    /// Deployment configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; defaults to the configuration's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of independent drops.
    #[arg(long, default_value_t = 1)]
    pub drops: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RatesArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated schemes, or `all`.
    #[arg(long, default_value = "all")]
    pub schemes: String,
    /// Comma-separated transmit powers in dBm.
    #[arg(long, default_value = "0,5,10,15,20,25,30")]
    pub snr_grid: String,
    /// Users per domain, one value or one per domain; defaults to U.
    #[arg(long)]
    pub rho: Option<String>,
    #[arg(long, default_value = "achieved")]
    pub mode: String,
    #[arg(long, default_value_t = 100)]
    pub max_sweeps: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Coupling matrix CSV used instead of generated scenarios.
    #[arg(long)]
    pub psi_file: Option<PathBuf>,
    /// Users per domain; with `--psi-file` one value per domain is required.
    #[arg(long)]
    pub rho: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub max_sweeps: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MobilityArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated CSI delays in milliseconds.
    #[arg(long, default_value = "0,1,10,100")]
    pub tau_ms: String,
    /// Mean received SNR in dB.
    #[arg(long, default_value_t = 12.0)]
    pub snr: f64,
    #[arg(long)]
    pub rho: Option<String>,
    #[arg(long, default_value = "achieved")]
    pub mode: String,
    #[arg(long, default_value_t = 100)]
    pub max_sweeps: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; defaults to the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config_path: Option<String>,
    pub master_seed: u64,
    pub output_dir: String,
    pub timestamp_unix: u64,
    pub command: serde_json::Value,
}

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidConfig(_) | Error::Parse(_) | Error::Io(_) => 2,
            _ => 3,
        };
        CliError { code, message: e.to_string() }
    }
}

fn config_error(message: impl Into<String>) -> CliError {
    CliError { code: 2, message: message.into() }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Replay(args) => replay(&args),
        other => execute(other, None),
    }
}

fn replay(args: &ReplayArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.manifest)
        .map_err(|e| config_error(format!("cannot read {}: {e}", args.manifest.display())))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| config_error(format!("invalid manifest: {e}")))?;
    let mut command: Command =
        serde_json::from_value(manifest.command).map_err(|e| config_error(format!("invalid manifest: {e}")))?;
    if let Some(out) = &args.out {
        common_mut(&mut command)?.out = out.clone();
    }
    execute(command, Some(manifest.master_seed))
}

fn common_mut(command: &mut Command) -> Result<&mut CommonArgs, CliError> {
    match command {
        Command::Rates(a) => Ok(&mut a.common),
        Command::Bounds(a) => Ok(&mut a.common),
        Command::Mobility(a) => Ok(&mut a.common),
        Command::Replay(_) => Err(config_error("a manifest cannot record a replay")),
    }
}

fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    fs::canonicalize(path).map_err(|e| config_error(format!("cannot access {}: {e}", path.display())))
}

/// Resolves paths and the master seed, runs the command and writes the manifest.
fn execute(mut command: Command, seed_override: Option<u64>) -> Result<(), CliError> {
    let common = common_mut(&mut command)?;
    if common.drops == 0 {
        return Err(config_error("--drops must be at least 1"));
    }
    if let Some(seed) = seed_override {
        common.seed = Some(seed);
    }
    if let Some(path) = &common.config {
        common.config = Some(absolute(path)?);
    }
    let cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| config_error(format!("cannot read config: {e}")))?;
            let cfg = DeploymentConfig::from_json(&text)?;
            Some(match common.seed {
                Some(s) => cfg.with_seed(s),
                None => cfg,
            })
        }
        None => None,
    };
    let master_seed = cfg.as_ref().map(|c| c.seed).or(common.seed).unwrap_or(0);
    common.seed = Some(master_seed);
    fs::create_dir_all(&common.out).map_err(|e| config_error(format!("cannot create output directory: {e}")))?;
    let out = absolute(&common.out)?;
    common.out = out.clone();
    let config_path = common.config.as_ref().map(|p| p.display().to_string());
    let drops = common.drops;

    let require_cfg = || cfg.clone().ok_or_else(|| config_error("--config is required"));
    match &mut command {
        Command::Rates(a) => cmd_rates(&require_cfg()?, a, drops, &out)?,
        Command::Mobility(a) => cmd_mobility(&require_cfg()?, a, drops, &out)?,
        Command::Bounds(a) => {
            if let Some(p) = &a.psi_file {
                a.psi_file = Some(absolute(p)?);
            }
            cmd_bounds(cfg.as_ref(), a, drops, &out)?
        }
        Command::Replay(_) => unreachable!("replays are unwrapped before execution"),
    }

    let manifest = RunManifest {
        tool: "cran-ua".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: command.name().into(),
        config_path,
        master_seed,
        output_dir: out.display().to_string(),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        command: serde_json::to_value(&command).map_err(|e| CliError { code: 3, message: e.to_string() })?,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError { code: 3, message: e.to_string() })?;
    write(&out.join(MANIFEST_FILE), &(text + "\n"))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError { code: 3, message: format!("cannot write {}: {e}", path.display()) })
}

pub fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError> {
    text.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| config_error(format!("invalid {what} '{s}'"))))
        .collect()
}

/// One value for every domain, or an explicit per-domain list.
pub fn parse_rho(text: Option<&str>, domains: usize, default: usize) -> Result<Vec<usize>, CliError> {
    let Some(text) = text else { return Ok(vec![default; domains]) };
    let values: Vec<usize> = parse_list(text, "--rho")?;
    match values.len() {
        1 => Ok(vec![values[0]; domains]),
        n if n == domains => Ok(values),
        n => Err(config_error(format!("--rho has {n} values for {domains} domains"))),
    }
}

fn parse_schemes(text: &str) -> Result<Vec<Scheme>, CliError> {
    if text.trim() == "all" {
        return Ok(Scheme::ALL.to_vec());
    }
    text.split(',').map(|s| s.trim().parse::<Scheme>().map_err(CliError::from)).collect()
}

fn cmd_rates(cfg: &DeploymentConfig, a: &RatesArgs, drops: u64, out: &Path) -> Result<(), CliError> {
    let schemes = parse_schemes(&a.schemes)?;
    let grid: Vec<f64> = parse_list(&a.snr_grid, "--snr-grid")?;
    let rho = parse_rho(a.rho.as_deref(), cfg.a, cfg.u)?;
    let mode: SinrMode = a.mode.parse()?;
    let pc = PipelineConfig { rho, mode, max_sweeps: a.max_sweeps };
    let table = run_monte_carlo(cfg, &schemes, drops, &grid, &pc)?;
    write(&out.join("rates.csv"), &table.to_csv())
}

fn cmd_mobility(cfg: &DeploymentConfig, a: &MobilityArgs, drops: u64, out: &Path) -> Result<(), CliError> {
    let taus: Vec<f64> = parse_list(&a.tau_ms, "--tau-ms")?;
    let rho = parse_rho(a.rho.as_deref(), cfg.a, cfg.u)?;
    let mode: SinrMode = a.mode.parse()?;
    let pc = PipelineConfig { rho, mode, max_sweeps: a.max_sweeps };
    let rows = run_outdated_csi(cfg, &taus, drops, a.snr, &pc)?;
    write(&out.join("mobility.csv"), &degradation_csv(&rows))
}

const DROP_COLUMNS: [&str; 14] = [
    "drop",
    "status",
    "f_bcd",
    "f_oracle",
    "f_dw",
    "f_dw_cgm",
    "cgm_iterations",
    "f_dual",
    "eta",
    "sigma_max",
    "sigma_min",
    "dw_gap_bound_tight",
    "dw_gap_bound_loose",
    "dual_gap_bound",
];

fn cmd_bounds(cfg: Option<&DeploymentConfig>, a: &BoundsArgs, drops: u64, out: &Path) -> Result<(), CliError> {
    let results: Vec<(u64, crate::Result<BoundsReport>)> = match (&a.psi_file, cfg) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| config_error(format!("cannot read --psi-file: {e}")))?;
            let psi = psi_from_csv(&text)?;
            let rho: Vec<usize> = parse_list(
                a.rho.as_deref().ok_or_else(|| config_error("--rho is required with --psi-file"))?,
                "--rho",
            )?;
            if rho.len() < 2 {
                return Err(config_error("--rho needs one value per domain with --psi-file"));
            }
            vec![(0, BoundsReport::compute(&psi, &rho, None, a.max_sweeps))]
        }
        (None, Some(cfg)) => {
            let rho = parse_rho(a.rho.as_deref(), cfg.a, cfg.u)?;
            run_bounds_drops(cfg, &rho, drops, a.max_sweeps)?
        }
        (None, None) => return Err(config_error("either --config or --psi-file is required")),
    };

    let mut per_drop = DROP_COLUMNS.join(",") + "\n";
    let (mut bcd, mut opt, mut dw, mut n_opt) = (0.0, 0.0, 0.0, 0usize);
    let mut fatal = None;
    for (d, r) in &results {
        match r {
            Ok(rep) => {
                let oracle = rep.f_oracle.map_or_else(String::new, sig9);
                writeln!(
                    per_drop,
                    "{d},ok,{},{oracle},{},{},{},{},{},{},{},{},{},{}",
                    sig9(rep.f_bcd),
                    sig9(rep.f_dw),
                    sig9(rep.f_dw_cgm),
                    rep.cgm_iterations,
                    sig9(rep.f_dual),
                    sig9(rep.eta),
                    sig9(rep.sigma_max),
                    sig9(rep.sigma_min),
                    sig9(rep.dw_gap_bound_tight),
                    sig9(rep.dw_gap_bound_loose),
                    sig9(rep.dual_gap_bound)
                )
                .unwrap();
                write(&out.join(format!("bounds_drop_{d:04}.json")), &rep.to_json())?;
                if let Some(o) = rep.f_oracle {
                    bcd += rep.f_bcd;
                    opt += o;
                    dw += rep.f_dw;
                    n_opt += 1;
                }
            }
            Err(Error::TooLarge { count, cap }) => {
                eprintln!("drop {d}: instance too large ({count} > {cap}), skipped");
                writeln!(per_drop, "{d},too_large{}", ",".repeat(DROP_COLUMNS.len() - 2)).unwrap();
            }
            Err(e) => {
                fatal.get_or_insert_with(|| CliError::from(Error::clone(e)));
                writeln!(per_drop, "{d},error{}", ",".repeat(DROP_COLUMNS.len() - 2)).unwrap();
            }
        }
    }
    write(&out.join("bounds_drops.csv"), &per_drop)?;

    let n = n_opt.max(1) as f64;
    let (bcd, opt, dw) = (bcd / n, opt / n, dw / n);
    let pct = |num: f64, den: f64| if num == 0.0 { 0.0 } else { 100.0 * num / den };
    let mut table = String::from("row,leakage\n");
    for (label, v) in [
        ("Prop", bcd),
        ("Opt", opt),
        ("DW", dw),
        ("Error(DW)%", pct(opt - dw, opt)),
        ("Error(Prop)%", pct(bcd - opt, opt)),
    ] {
        writeln!(table, "{label},{}", sig9(v)).unwrap();
    }
    write(&out.join("bounds_table.csv"), &table)?;
    match fatal {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
