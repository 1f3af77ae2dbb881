//! Command-line front end for the rhodium beat toolkit.
//!
//! [`run`] parses arguments, loads the run configuration and dispatches one
//! subcommand. Exit codes: 0 on success, 1 when a computation or input file is
//! rejected, 2 on usage errors (bad flags, unreadable or malformed config).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rhodium_core::beat::{beat_curve_with, tau_d};
use rhodium_core::config::RunConfig;
use rhodium_core::constants::{
    doppler_speed_per_linewidth, natural_linewidth, thermal_strain_rate,
};
use rhodium_core::fields::field_map;
use rhodium_core::fitting::{fit_beat, fit_ratio, FitResult};
use rhodium_core::io::{self, format_f64 as fmt};
use rhodium_core::lamb_moessbauer::{flm_closed_form, flm_mc, DisplacementModel};
use rhodium_core::lattice::{bragg_angle_solve, Vec3};
use rhodium_core::spectra::{normalize, simulate_counts_with};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "rhodium", version, about = "Entangled rhodium gamma beat toolkit")]
struct Cli {
    /// JSON run configuration; defaults are used for anything it omits.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one configuration value, e.g. `beat.tau_d=485.7`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// RNG seed; replaces `seed` and `flm.ensemble.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (output directory for `simulate`). Defaults to stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scalar estimates: linewidth, Doppler speed, strain rate, beat time constant.
    Estimate,
    /// Bragg-matched cone angles for the configured channel.
    Bragg,
    /// Electric field of the tri-gamma state on a plane.
    Fieldmap,
    /// Entangled Lamb-Mossbauer factor by Monte Carlo, with the closed form.
    Flm,
    /// Pump-accumulated intensity on the configured time grid.
    Beat,
    /// Poisson gamma and K-alpha count series.
    Simulate,
    /// Fit beat parameters to a count series (or a ratio series with --ratio).
    Fit {
        series: PathBuf,
        /// Treat the input as a gamma / K-alpha ratio series.
        #[arg(long)]
        ratio: bool,
    },
    /// Divide a gamma series by a K-alpha series bin by bin.
    Normalize { gamma: PathBuf, kalpha: PathBuf },
}

enum Failure {
    Usage(String),
    Domain(String),
}

impl From<rhodium_core::Error> for Failure {
    fn from(e: rhodium_core::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

/// Runs the CLI with `argv` (program name first), writing results to `stdout`
/// and diagnostics to `stderr`. Returns the process exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match dispatch(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Domain(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_DOMAIN
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
            RunConfig::from_json_with(&text, &cli.overrides)
                .map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?
        }
        None => RunConfig::with_overrides(&cli.overrides)
            .map_err(|e| Failure::Usage(format!("config: {e}")))?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.flm.ensemble.seed = seed;
    }
    Ok(cfg)
}

/// Sends text to `--out` when given, stdout otherwise.
fn emit(cli: &Cli, stdout: &mut dyn Write, text: &str) -> Result<(), Failure> {
    match &cli.out {
        Some(path) => write_file(path, text.as_bytes()),
        None => Ok(stdout.write_all(text.as_bytes())?),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::Domain(format!("cannot write {}: {e}", path.display())))
}

fn json<T: Serialize>(value: &T) -> Result<String, Failure> {
    Ok(io::to_json_string(value)?)
}

/// Comma-joined rows with a header line.
fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let format = cli.format.unwrap_or(match cli.command {
        Command::Fit { .. } => Format::Json,
        _ => Format::Csv,
    });
    match &cli.command {
        Command::Estimate => estimate(cli, &cfg, format, stdout),
        Command::Bragg => bragg(cli, &cfg, format, stdout),
        Command::Fieldmap => fieldmap(cli, &cfg, format, stdout),
        Command::Flm => flm(cli, &cfg, format, stdout),
        Command::Beat => beat(cli, &cfg, format, stdout),
        Command::Simulate => simulate(cli, &cfg, stdout),
        Command::Fit { series, ratio } => fit(cli, &cfg, series, *ratio, format, stdout),
        Command::Normalize { gamma, kalpha } => normalize_cmd(cli, gamma, kalpha, stdout),
    }
}

#[derive(Serialize)]
struct Estimates {
    linewidth_ev: f64,
    doppler_speed_m_per_s: f64,
    strain_rate_per_s: f64,
    tau_d_s: f64,
    tau_d_over_tau0: f64,
}

pub fn estimates(cfg: &RunConfig) -> rhodium_core::Result<Vec<(&'static str, f64, &'static str)>> {
    let p = &cfg.rhodium;
    let mu = cfg.estimate.mu_nuclear.unwrap_or_else(|| p.default_mu_nuclear());
    let td = tau_d(p.tau0, cfg.estimate.f_lm, mu, cfg.estimate.xi)?;
    Ok(vec![
        ("linewidth", natural_linewidth(p.tau0)?, "eV"),
        ("doppler_speed", doppler_speed_per_linewidth(p)?, "m/s"),
        ("strain_rate", thermal_strain_rate(p)?, "1/s"),
        ("tau_d", td, "s"),
        ("tau_d_over_tau0", td / p.tau0, "1"),
    ])
}

fn estimate(cli: &Cli, cfg: &RunConfig, format: Format, stdout: &mut dyn Write) -> Result<(), Failure> {
    let rows = estimates(cfg)?;
    let text = match format {
        Format::Csv => csv_table(
            &["quantity", "value", "unit"],
            rows.iter().map(|(q, v, u)| vec![q.to_string(), fmt(*v), u.to_string()]),
        ),
        Format::Json => json(&Estimates {
            linewidth_ev: rows[0].1,
            doppler_speed_m_per_s: rows[1].1,
            strain_rate_per_s: rows[2].1,
            tau_d_s: rows[3].1,
            tau_d_over_tau0: rows[4].1,
        })?,
    };
    emit(cli, stdout, &text)
}

fn bragg(cli: &Cli, cfg: &RunConfig, format: Format, stdout: &mut dyn Write) -> Result<(), Failure> {
    let k = cfg.wavenumber()?;
    let candidates = bragg_angle_solve(k, &cfg.lattice()?)?;
    let text = match format {
        Format::Csv => csv_table(
            &["theta_deg", "h", "k", "l", "residual"],
            candidates.iter().map(|c| {
                let [h, kk, l] = c.millers[0];
                vec![
                    fmt(c.theta.to_degrees()),
                    h.to_string(),
                    kk.to_string(),
                    l.to_string(),
                    fmt(c.residual),
                ]
            }),
        ),
        Format::Json => json(&candidates)?,
    };
    emit(cli, stdout, &text)
}

#[derive(Serialize)]
struct FieldRow {
    r: [f64; 3],
    e_re: [f64; 3],
    e_im: [f64; 3],
    e_abs: f64,
}

fn fieldmap(cli: &Cli, cfg: &RunConfig, format: Format, stdout: &mut dyn Write) -> Result<(), Failure> {
    let geom = cfg.trigamma()?;
    let a = cfg.rhodium.lattice_constant;
    let fm = &cfg.fieldmap;
    let scaled = |v: [f64; 3]| Vec3::from(v) * a;
    let samples = field_map(&geom, &scaled(fm.origin), &scaled(fm.u), &scaled(fm.v), fm.nu, fm.nv)?;
    let rows: Vec<FieldRow> = samples
        .iter()
        .map(|s| FieldRow {
            r: [s.r.x, s.r.y, s.r.z],
            e_re: [s.e.x.re, s.e.y.re, s.e.z.re],
            e_im: [s.e.x.im, s.e.y.im, s.e.z.im],
            e_abs: s.e.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt(),
        })
        .collect();
    let text = match format {
        Format::Csv => csv_table(
            &["x_m", "y_m", "z_m", "ex_re", "ex_im", "ey_re", "ey_im", "ez_re", "ez_im", "e_abs"],
            rows.iter().map(|r| {
                let mut row: Vec<String> = r.r.iter().map(|x| fmt(*x)).collect();
                for i in 0..3 {
                    row.push(fmt(r.e_re[i]));
                    row.push(fmt(r.e_im[i]));
                }
                row.push(fmt(r.e_abs));
                row
            }),
        ),
        Format::Json => json(&rows)?,
    };
    emit(cli, stdout, &text)
}

#[derive(Serialize)]
struct FlmRow {
    value: f64,
    stderr: Option<f64>,
    interpretation: String,
    closed_form: Option<f64>,
    /// (value - closed_form) / stderr
    z_score: Option<f64>,
}

fn flm(cli: &Cli, cfg: &RunConfig, format: Format, stdout: &mut dyn Write) -> Result<(), Failure> {
    let geom = cfg.trigamma()?;
    let ens = &cfg.flm.ensemble;
    let result = flm_mc(&geom, ens, cfg.flm.interpretation)?;
    let closed_form = match ens.model {
        DisplacementModel::ExplicitSamples => None,
        _ => Some(flm_closed_form(&geom, ens.sigma)?.value),
    };
    let z_score = match (closed_form, result.stderr) {
        (Some(c), Some(s)) if s > 0.0 => Some((result.value - c) / s),
        _ => None,
    };
    let row = FlmRow {
        value: result.value,
        stderr: result.stderr,
        interpretation: result.interpretation.to_string(),
        closed_form,
        z_score,
    };
    let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
    let text = match format {
        Format::Csv => csv_table(
            &["value", "stderr", "interpretation", "closed_form", "z_score"],
            [vec![
                fmt(row.value),
                opt(row.stderr),
                row.interpretation.clone(),
                opt(row.closed_form),
                opt(row.z_score),
            ]],
        ),
        Format::Json => json(&row)?,
    };
    emit(cli, stdout, &text)
}

fn beat(cli: &Cli, cfg: &RunConfig, format: Format, stdout: &mut dyn Write) -> Result<(), Failure> {
    let grid = cfg.grid.points()?;
    let curve = beat_curve_with(&cfg.beat, &grid, cfg.kernel, &Default::default())?;
    let text = match format {
        Format::Csv => csv_table(
            &["t_s", "intensity"],
            curve.iter().map(|&(t, i)| vec![fmt(t), fmt(i)]),
        ),
        Format::Json => json(&curve)?,
    };
    emit(cli, stdout, &text)
}

fn simulate(cli: &Cli, cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), Failure> {
    let (gamma, kalpha) = simulate_counts_with(
        &cfg.beat,
        cfg.simulate.kalpha_scale,
        &cfg.simulate.binning,
        cfg.seed,
        cfg.kernel,
    )?;
    let mut outputs = cfg.outputs.clone();
    if let Some(dir) = &cli.out {
        outputs.dir = dir.clone();
    }
    fs::create_dir_all(&outputs.dir)
        .map_err(|e| Failure::Domain(format!("cannot create {}: {e}", outputs.dir.display())))?;
    for (series, name) in [(&gamma, &outputs.gamma), (&kalpha, &outputs.kalpha)] {
        let path = outputs.resolve(name);
        let mut buf = Vec::new();
        io::write_count_series_to(series, &mut buf)?;
        write_file(&path, &buf)?;
        writeln!(stdout, "{}", path.display())?;
    }
    Ok(())
}

fn fit(
    cli: &Cli,
    cfg: &RunConfig,
    series: &Path,
    ratio: bool,
    format: Format,
    stdout: &mut dyn Write,
) -> Result<(), Failure> {
    let fit_cfg = cfg.fit_config();
    let result = if ratio {
        fit_ratio(&io::read_ratio_series(series)?, &fit_cfg)?
    } else {
        fit_beat(&io::read_count_series(series)?, &fit_cfg)?
    };
    let text = match format {
        Format::Json => json(&result)?,
        Format::Csv => fit_csv(&result),
    };
    if !result.converged {
        log::warn!("fit did not converge: {}", result.message);
    }
    emit(cli, stdout, &text)
}

fn fit_csv(result: &FitResult) -> String {
    let p = &result.params;
    let stderr_of = |name: &str| -> String {
        result
            .covariance_params
            .iter()
            .position(|q| q.to_string() == name)
            .map(|i| fmt(result.covariance[i][i].max(0.0).sqrt()))
            .unwrap_or_default()
    };
    let mut rows: Vec<Vec<String>> = [
        ("n0", p.n0),
        ("tau0", p.tau0),
        ("tau_d", p.tau_d),
        ("phi0", p.phi0),
        ("t_pump", p.t_pump),
        ("background", p.background),
    ]
    .iter()
    .map(|(name, v)| vec![name.to_string(), fmt(*v), stderr_of(name)])
    .collect();
    rows.push(vec!["chi2".into(), fmt(result.chi2), String::new()]);
    rows.push(vec!["dof".into(), result.dof.to_string(), String::new()]);
    rows.push(vec!["converged".into(), result.converged.to_string(), String::new()]);
    csv_table(&["quantity", "value", "stderr"], rows)
}

fn normalize_cmd(cli: &Cli, gamma: &Path, kalpha: &Path, stdout: &mut dyn Write) -> Result<(), Failure> {
    let ratio = normalize(&io::read_count_series(gamma)?, &io::read_count_series(kalpha)?)?;
    let mut buf = Vec::new();
    io::write_ratio_series_to(&ratio, &mut buf)?;
    emit(cli, stdout, std::str::from_utf8(&buf).expect("csv output is utf-8"))
}
