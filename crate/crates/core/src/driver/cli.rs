//! Command-line entry point.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use super::output::{Cell, Format, Table};
use super::presets::reproduce;
use super::sweep::{
    linspace, max_distance, parallel_channels, rows_table, sweep, with_block_total,
    ChannelMode, RateMode, SweepAxis, SweepSpec,
};
use crate::asymptotic::mimo_key_rate;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::estimators::{estimator_distribution_test, write_trials_csv};
use crate::finite::{finite_mimo_key_rate, FiniteSizeConfig, Prefactor};
use crate::numeric::format_sig9;

#[derive(Debug, Parser)]
#[command(name = "cvmdi", version, about = "CV-MDI QKD key rates over terahertz MIMO links")]
struct Cli {
    /// TOML configuration file (system keys plus an optional [finite] table).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for realized channels and Monte Carlo runs.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output file (output directory for `reproduce`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct ModeArgs {
    /// Use the finite-size rate with the [finite] table of the config.
    #[arg(long)]
    finite: bool,
    /// Use a seeded multipath channel realization instead of equal channels.
    #[arg(long)]
    realized: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Asymptotic key rate at one operating point.
    Keyrate {
        /// Total Alice-Bob distance in meters, overriding the config.
        #[arg(long)]
        distance: Option<f64>,
        #[arg(long)]
        realized: bool,
    },
    /// Rate along one parameter axis.
    Sweep {
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// Explicit comma-separated grid.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["from", "to"])]
        grid: Vec<f64>,
        #[arg(long, requires = "to")]
        from: Option<f64>,
        #[arg(long, requires = "from")]
        to: Option<f64>,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Largest total distance with a positive key rate.
    Maxdist {
        /// Bracket width in meters.
        #[arg(long, default_value_t = 0.01)]
        tol: f64,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Finite-size key rate at one operating point.
    Finite {
        #[arg(long)]
        distance: Option<f64>,
        /// Total block size M, split as l = N = M/2.
        #[arg(long)]
        block_total: Option<u64>,
        #[arg(long, value_enum)]
        prefactor: Option<Prefactor>,
        #[arg(long)]
        realized: bool,
    },
    /// Monte Carlo check of the MLE estimator laws.
    Estimators {
        /// Amplitude gain t' = sqrt(T).
        #[arg(long, default_value_t = 0.5)]
        t: f64,
        /// Noise variance sigma'^2 = 1 + T eps.
        #[arg(long, default_value_t = 1.0125)]
        sigma2: f64,
        /// Modulation variance; defaults to the config value.
        #[arg(long)]
        v_mod: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        k: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Confidence multiplier; defaults to the [finite] table value.
        #[arg(long)]
        z: Option<f64>,
        /// Write per-trial estimates to this CSV file.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Regenerate the data behind a figure or table.
    Reproduce {
        /// One of fig2a..fig2d, fig3, fig4, fig5, fig6, fig7, fig10, table2.
        id: String,
    },
    /// Check a configuration file against every invariant.
    Validate,
}

/// System and finite-size parameters read from one TOML document.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FileConfig {
    pub system: SystemConfig,
    pub finite: FiniteSizeConfig,
}

/// Parses the config schema. A `[finite]` table that gives only
/// `block_total` gets the half split `l = N = M/2`.
pub fn parse_config(text: &str) -> Result<FileConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    let finite = match table.remove("finite") {
        None => FiniteSizeConfig::default(),
        Some(toml::Value::Table(mut t)) => {
            let split = !t.contains_key("block_key") && !t.contains_key("block_est");
            if let (true, Some(m)) = (split, t.get("block_total").and_then(toml::Value::as_integer)) {
                let half = FiniteSizeConfig::half_split(m.max(0) as u64);
                t.insert("block_key".into(), toml::Value::Integer(half.block_key as i64));
                t.insert("block_est".into(), toml::Value::Integer(half.block_est as i64));
            }
            toml::Value::Table(t)
                .try_into()
                .map_err(|e: toml::de::Error| Error::Parse(format!("[finite]: {e}")))?
        }
        Some(_) => return Err(Error::Parse("`finite` must be a table".into())),
    };
    let system: SystemConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    Ok(FileConfig { system, finite })
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig { system: SystemConfig::default(), finite: FiniteSizeConfig::default() }),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            parse_config(&text)
        }
    }
}

fn channel_mode(realized: bool, seed: u64) -> ChannelMode {
    if realized {
        ChannelMode::Realized { seed }
    } else {
        ChannelMode::Idealized
    }
}

fn rate_mode(finite: bool, fs: FiniteSizeConfig) -> RateMode {
    if finite {
        RateMode::Finite(fs)
    } else {
        RateMode::Asymptotic
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// One-row table from the scalar fields of a JSON object.
fn summary_table(value: &Value) -> Table {
    let Value::Object(map) = value else { return Table::default() };
    let mut t = Table::new(map.keys().cloned());
    t.push(
        map.values()
            .map(|v| match v {
                Value::Number(n) if n.is_i64() => Cell::Int(n.as_i64().unwrap_or_default()),
                Value::Number(n) => Cell::Float(n.as_f64().unwrap_or(f64::NAN)),
                Value::Bool(b) => Cell::Bool(*b),
                Value::String(s) => Cell::Text(s.clone()),
                Value::Null => Cell::Empty,
                other => Cell::Text(other.to_string()),
            })
            .collect(),
    );
    t
}

fn render_summary(value: Value, format: Format) -> String {
    match format {
        Format::Json => to_json(&value),
        Format::Csv => summary_table(&value).to_csv(),
    }
}

struct Outcome {
    text: String,
}

fn run(cli: Cli) -> Result<Outcome> {
    let file = load_config(cli.config.as_deref())?;
    let fs = file.finite;
    let text = match cli.command {
        Command::Validate => {
            file.system.validate()?;
            fs.validate()?;
            match cli.format {
                Format::Json => to_json(&json!({ "valid": true })),
                Format::Csv => "ok\n".into(),
            }
        }
        Command::Keyrate { distance, realized } => {
            let cfg = apply_distance(file.system, distance).validate()?;
            let set = parallel_channels(&cfg, channel_mode(realized, cli.seed))?;
            let report = mimo_key_rate(&set, &cfg)?;
            match cli.format {
                Format::Json => to_json(&report),
                Format::Csv => {
                    let first = report.channels.first();
                    render_summary(
                        json!({
                            "total_rate": report.total,
                            "channel_rate": first.map(|c| c.key_rate),
                            "r": report.r(),
                            "clamped": report.clamped,
                            "feasible": report.total > 0.0,
                            "t_eq": first.map(|c| c.one_way.t_eq),
                            "eps_eq": first.map(|c| c.one_way.eps_eq),
                            "mutual_information": first.map(|c| c.mutual_information),
                            "holevo": first.map(|c| c.holevo),
                        }),
                        Format::Csv,
                    )
                }
            }
        }
        Command::Finite { distance, block_total, prefactor, realized } => {
            let cfg = apply_distance(file.system, distance).validate()?;
            let mut fs = block_total.map_or(fs, |m| with_block_total(&fs, m));
            if let Some(p) = prefactor {
                fs.prefactor = p;
            }
            let set = parallel_channels(&cfg, channel_mode(realized, cli.seed))?;
            let report = finite_mimo_key_rate(&set, &fs, &cfg)?;
            match cli.format {
                Format::Json => to_json(&report),
                Format::Csv => render_summary(
                    json!({
                        "total_rate": report.total,
                        "channel_rate": report.channels.first().map(|c| c.contribution),
                        "r": report.r(),
                        "clamped": report.clamped,
                        "bound_clamped": report.bound_clamped,
                        "penalty": report.penalty,
                        "prefactor": report.prefactor,
                        "feasible": report.total > 0.0,
                    }),
                    Format::Csv,
                ),
            }
        }
        Command::Sweep { axis, grid, from, to, points, mode } => {
            let grid = match (from, to) {
                (Some(a), Some(b)) => linspace(a, b, points),
                _ => grid,
            };
            let spec = SweepSpec {
                axis,
                grid,
                rate: rate_mode(mode.finite, fs),
                channel: channel_mode(mode.realized, cli.seed),
                base: file.system,
            };
            rows_table(&sweep(&spec)?).render(cli.format)
        }
        Command::Maxdist { tol, mode } => {
            let m = max_distance(
                &file.system,
                &rate_mode(mode.finite, fs),
                channel_mode(mode.realized, cli.seed),
                tol,
            )?;
            match cli.format {
                Format::Json => to_json(&m),
                Format::Csv => format!("{}\n", format_sig9(m.distance_m)),
            }
        }
        Command::Estimators { t, sigma2, v_mod, k, trials, z, dump } => {
            let v_mod = v_mod.unwrap_or(file.system.mod_variance);
            let run = estimator_distribution_test(t, sigma2, v_mod, k, trials, cli.seed, z.unwrap_or(fs.z_pe))?;
            if let Some(path) = dump {
                let f = std::fs::File::create(&path)
                    .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                write_trials_csv(&run.estimates, std::io::BufWriter::new(f))?;
            }
            let mut value = serde_json::to_value(&run.stats).expect("stats serialize");
            value["passed"] = Value::Bool(run.stats.passed());
            render_summary(value, cli.format)
        }
        Command::Reproduce { id } => {
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
            let mut listing = String::new();
            for artifact in reproduce(&id)? {
                let path = dir.join(format!("{}.{}", artifact.name, cli.format.extension()));
                artifact.table.write_to(&path, cli.format)?;
                listing.push_str(&format!("{}\n", path.display()));
            }
            return Ok(Outcome { text: listing });
        }
    };
    if let Some(path) = &cli.out {
        std::fs::write(path, &text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        return Ok(Outcome { text: String::new() });
    }
    Ok(Outcome { text })
}

fn apply_distance(cfg: SystemConfig, distance: Option<f64>) -> SystemConfig {
    distance.map_or(cfg, |d| cfg.with_distance_ab(d))
}

/// Runs the CLI with explicit output streams and returns the exit code:
/// 0 on success, 1 on a runtime error (reported as JSON on `stderr`), 2 on
/// a usage error.
pub fn run_cli_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(rendered.as_bytes()) } else { stderr.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    match run(cli) {
        Ok(out) => {
            let _ = stdout.write_all(out.text.as_bytes());
            0
        }
        Err(e) => {
            let body = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            let _ = writeln!(stderr, "{body}");
            1
        }
    }
}

pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli_with(argv, &mut stdout.lock(), &mut stderr.lock())
}
