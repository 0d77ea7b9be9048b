//! `mtgopt` command line: pricing, Greeks, fitting, sweeps and QQ export.
//!
//! Exit codes: 0 ok, 2 invalid input or config, 3 numerical degeneracy,
//! 4 I/O failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use crate::config::{resolve_seed, RunConfig};
use crate::distfit::{central_moments, fit_shifted_lognormal, SampleMoments, ShiftedLognormalFit};
use crate::error::{Error, Result};
use crate::harness::{
    self, AxisName, CrnAxis, Engines, Greek, SweepAxis, SweepSpec, DEFAULT_CURVATURES,
};
use crate::mc::{delta_mc_with, price_mc, simulate_terminal_prices, DeltaScheme, McConfig};
use crate::pricer::{ln_greeks, price_ln, price_sln, Diagnostics, PriceResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const SEED_ENV: &str = "MTGOPT_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "mtgopt",
    version,
    about = "Options on mortgage pass-throughs: closed-form approximations and a Monte Carlo reference"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON parameter file; missing keys keep their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one parameter, e.g. `--set C=3` (repeatable, applied after --config).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Monte Carlo seed (beats the config and MTGOPT_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the default parameter bundle as JSON.
    Defaults,
    /// Price the call.
    Price {
        #[arg(long, value_enum)]
        method: PriceMethod,
    },
    /// Delta (and gamma for ln) with respect to the spot price.
    Greeks {
        #[arg(long, value_enum)]
        method: GreekMethod,
        /// Central instead of forward difference for mc.
        #[arg(long)]
        central: bool,
    },
    /// Simulate the terminal price and fit a shifted lognormal.
    Fit {
        /// Also write the skewness/fit table over these curvatures.
        #[arg(long, value_name = "FILE")]
        table: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', requires = "table")]
        curvatures: Option<Vec<f64>>,
    },
    /// Two-axis sweep written as CSV.
    Sweep(SweepArgs),
    /// Empirical vs fitted quantiles of the terminal price as CSV.
    Qq {
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long, default_value_t = 99)]
        quantiles: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PriceMethod {
    Sln,
    Ln,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GreekMethod {
    Ln,
    Mc,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// K, C, sigma or P0.
    #[arg(long, default_value = "K")]
    pub axis1: String,
    #[arg(long, default_value = "C")]
    pub axis2: String,
    /// Explicit axis1 values (default grid otherwise).
    #[arg(long, value_delimiter = ',')]
    pub values1: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub values2: Option<Vec<f64>>,
    /// Subset of sln,ln,mc.
    #[arg(long, default_value = "sln,ln,mc")]
    pub engines: String,
    #[arg(long, value_enum)]
    pub greek: Option<GreekArg>,
    /// Share one rate sample along axis 1 or 2.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub crn_axis: Option<u8>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GreekArg {
    Delta,
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidParameter { .. } | Error::Config(_) => 2,
        Error::Degenerate(_) => 3,
        Error::Io { .. } => 4,
    }
}

/// Runs the CLI on `args` (program name first); returns the exit code.
pub fn run<I, S>(
    args: I,
    env_seed: Option<&str>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                2
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    match execute(&cli, env_seed, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

struct Context {
    cfg: RunConfig,
    mc: McConfig,
}

fn load_context(g: &GlobalArgs, env_seed: Option<&str>) -> Result<Context> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for o in &g.overrides {
        cfg.apply_override(o)?;
    }
    cfg.validate()?;
    let seed = resolve_seed(g.seed, &cfg, env_seed)?;
    let mut mc = cfg.mc_config(seed);
    mc.seed = seed;
    if let Some(w) = g.workers {
        if w == 0 {
            return Err(Error::invalid("workers", "must be at least 1"));
        }
        mc.workers = Some(w);
    }
    Ok(Context { cfg, mc })
}

fn execute(
    cli: &Cli,
    env_seed: Option<&str>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<()> {
    let ctx = load_context(&cli.global, env_seed)?;
    match &cli.command {
        Command::Defaults => emit(stdout, defaults_json()),
        Command::Price { method } => cmd_price(&ctx, *method, stdout, stderr),
        Command::Greeks { method, central } => cmd_greeks(&ctx, *method, *central, stdout, stderr),
        Command::Fit { table, curvatures } => {
            cmd_fit(&ctx, table.as_deref(), curvatures.as_deref(), stdout)
        }
        Command::Sweep(args) => cmd_sweep(&ctx, args, stdout),
        Command::Qq { out, quantiles } => cmd_qq(&ctx, out, *quantiles, stdout),
    }
}

fn emit(out: &mut dyn Write, mut body: Map<String, Value>) -> Result<()> {
    body.insert("schema_version".into(), json!(SCHEMA_VERSION));
    let text = serde_json::to_string_pretty(&body).expect("JSON values serialize");
    writeln!(out, "{text}").map_err(|source| Error::Io {
        path: "<stdout>".into(),
        source,
    })
}

fn warn(stderr: &mut dyn Write, warnings: &[String]) {
    for w in warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
}

/// The default bundle (curvature null) with the default seed.
pub fn defaults_json() -> Map<String, Value> {
    let mut cfg = harness::default_params();
    cfg.mc.seed = Some(crate::mc::DEFAULT_SEED);
    match serde_json::to_value(&cfg).expect("config serializes") {
        Value::Object(map) => map,
        _ => unreachable!("config is an object"),
    }
}

fn moments_json(m: &SampleMoments<f64>) -> Value {
    json!({
        "mean": m.mean,
        "m2": m.m2,
        "m3": m.m3,
        "n": m.n,
        "skewness": m.skewness().ok(),
    })
}

fn fit_json(f: &ShiftedLognormalFit<f64>) -> Value {
    json!({
        "theta": f.theta,
        "orientation": f.orientation.as_i8(),
        "mu_X": f.log_params.mu,
        "sigma_X": f.log_params.sigma,
        "tau": f.tau(),
        "near_zero_skew": f.near_zero_skew,
    })
}

fn price_json(r: &PriceResult<f64>, seed: Option<u64>) -> Map<String, Value> {
    let mut body = Map::new();
    body.insert("method".into(), json!(r.method.as_str()));
    body.insert("price".into(), json!(r.price));
    if let Some(se) = r.std_error {
        body.insert("std_error".into(), json!(se));
    }
    if let Some(n) = r.n {
        body.insert("n".into(), json!(n));
    }
    if let Some(s) = seed {
        body.insert("seed".into(), json!(s));
    }
    match &r.diagnostics {
        Some(Diagnostics::ShiftedLognormal { fit, moments }) => {
            body.insert(
                "diagnostics".into(),
                json!({ "fit": fit_json(fit), "moments": moments_json(moments) }),
            );
        }
        Some(Diagnostics::Lognormal(law)) => {
            body.insert(
                "diagnostics".into(),
                json!({ "mu_P": law.mu, "sigma_P": law.sigma, "M1": law.mean() }),
            );
        }
        None => {}
    }
    body
}

fn cmd_price(
    ctx: &Context,
    method: PriceMethod,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<()> {
    let spec = ctx.cfg.model_spec()?;
    let dynamics = ctx.cfg.dynamics()?;
    let contract = ctx.cfg.contract()?;
    let (result, seed) = match method {
        PriceMethod::Sln => (
            ctx.mc
                .run(|| price_sln(&spec, &dynamics, &contract, &ctx.mc))?,
            Some(ctx.mc.seed),
        ),
        PriceMethod::Ln => (price_ln(&spec, &dynamics, &contract)?, None),
        PriceMethod::Mc => (
            price_mc(&spec, &dynamics, &contract, &ctx.mc)?.into(),
            Some(ctx.mc.seed),
        ),
    };
    warn(stderr, &result.warnings);
    emit(stdout, price_json(&result, seed))
}

fn cmd_greeks(
    ctx: &Context,
    method: GreekMethod,
    central: bool,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<()> {
    let spec = ctx.cfg.model_spec()?;
    let dynamics = ctx.cfg.dynamics()?;
    let contract = ctx.cfg.contract()?;
    let mut body = Map::new();
    match method {
        GreekMethod::Ln => {
            let g = ln_greeks(&spec, &dynamics, &contract)?;
            let warnings = price_ln(&spec, &dynamics, &contract)?.warnings;
            warn(stderr, &warnings);
            body.insert("method".into(), json!("LN"));
            body.insert("delta".into(), json!(g.delta));
            body.insert("gamma".into(), json!(g.gamma));
            body.insert(
                "sanity".into(),
                json!({
                    "delta_upper_bound": g.delta_upper_bound,
                    "delta_below_bound": g.delta <= g.delta_upper_bound,
                    "gamma_positive": g.gamma > 0.0,
                }),
            );
        }
        GreekMethod::Mc => {
            let scheme = if central {
                DeltaScheme::Central
            } else {
                DeltaScheme::Forward
            };
            let delta = delta_mc_with(&spec, &dynamics, &contract, &ctx.mc, scheme)?;
            body.insert("method".into(), json!("MC"));
            body.insert("delta".into(), json!(delta));
            body.insert(
                "scheme".into(),
                json!(if central { "central" } else { "forward" }),
            );
            body.insert("bump".into(), json!(ctx.mc.bump));
            body.insert("n".into(), json!(ctx.mc.n));
            body.insert("seed".into(), json!(ctx.mc.seed));
        }
    }
    emit(stdout, body)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn cmd_fit(
    ctx: &Context,
    table: Option<&Path>,
    curvatures: Option<&[f64]>,
    stdout: &mut dyn Write,
) -> Result<()> {
    let spec = ctx.cfg.model_spec()?;
    let dynamics = ctx.cfg.dynamics()?;
    let prices = simulate_terminal_prices(&spec, &dynamics, ctx.cfg.contract.expiry, &ctx.mc)?;
    let moments = central_moments(&prices)?;
    let fit = fit_shifted_lognormal(&moments)?;
    let mut body = Map::new();
    body.insert("moments".into(), moments_json(&moments));
    body.insert("fit".into(), fit_json(&fit));
    body.insert("seed".into(), json!(ctx.mc.seed));
    if let Some(path) = table {
        let cs = curvatures.unwrap_or(&DEFAULT_CURVATURES);
        let rows = harness::skew_table(cs, &ctx.cfg, &ctx.mc)?;
        let mut w = create(path)?;
        harness::write_skew_table_csv(&mut w, &rows, &path.display().to_string())?;
        finish(w, path)?;
        body.insert("table".into(), json!(path.display().to_string()));
    }
    emit(stdout, body)
}

fn axis(name: &str, values: Option<&[f64]>) -> Result<SweepAxis> {
    let name = AxisName::parse(name)?;
    match values {
        Some(v) => SweepAxis::explicit(name, v.to_vec()),
        None => Ok(SweepAxis::default_for(name)),
    }
}

fn fmt_max(v: Option<f64>) -> String {
    v.map(harness::format_sig).unwrap_or_else(|| "n/a".into())
}

fn cmd_sweep(ctx: &Context, args: &SweepArgs, stdout: &mut dyn Write) -> Result<()> {
    let spec = SweepSpec {
        base: ctx.cfg.clone(),
        mc: ctx.mc,
        axis1: axis(&args.axis1, args.values1.as_deref())?,
        axis2: axis(&args.axis2, args.values2.as_deref())?,
        engines: Engines::parse(&args.engines)?,
        greek: args.greek.map(|GreekArg::Delta| Greek::Delta),
        crn_axis: args.crn_axis.map(|a| {
            if a == 1 {
                CrnAxis::First
            } else {
                CrnAxis::Second
            }
        }),
    };
    spec.validate()?;
    // Fail on an unwritable path before spending time on the grid.
    let w = create(&args.out)?;
    let cells = harness::run_sweep(&spec)?;
    let mut w = w;
    harness::write_sweep_csv(&mut w, &spec, &cells, &args.out.display().to_string())?;
    finish(w, &args.out)?;
    let s = harness::summarize(&cells);
    let line = if spec.greek.is_some() {
        format!(
            "max |rel_diff_delta_ln_pct| = {}",
            fmt_max(s.max_abs_rel_diff_delta_ln_pct)
        )
    } else {
        format!(
            "max |rel_diff_sln_pct| = {}, max |rel_diff_ln_pct| = {}",
            fmt_max(s.max_abs_rel_diff_sln_pct),
            fmt_max(s.max_abs_rel_diff_ln_pct)
        )
    };
    writeln!(
        stdout,
        "{} cells -> {}; {line}; flagged = {}",
        cells.len(),
        args.out.display(),
        s.flagged_cells
    )
    .map_err(|source| Error::Io {
        path: "<stdout>".into(),
        source,
    })
}

fn cmd_qq(ctx: &Context, out: &Path, quantiles: usize, stdout: &mut dyn Write) -> Result<()> {
    let spec = ctx.cfg.model_spec()?;
    let dynamics = ctx.cfg.dynamics()?;
    let prices = simulate_terminal_prices(&spec, &dynamics, ctx.cfg.contract.expiry, &ctx.mc)?;
    let (fit, rows) = harness::qq_from_sample(&prices, quantiles)?;
    let mut w = create(out)?;
    harness::write_qq_csv(&mut w, &rows, &out.display().to_string())?;
    finish(w, out)?;
    let max_gap = rows
        .iter()
        .map(|r| (r.empirical - r.fitted).abs())
        .fold(0.0, f64::max);
    writeln!(
        stdout,
        "{} quantiles -> {}; orientation = {}; max |empirical - fitted| = {}",
        rows.len(),
        out.display(),
        fit.orientation.as_i8(),
        harness::format_sig(max_gap)
    )
    .map_err(|source| Error::Io {
        path: "<stdout>".into(),
        source,
    })
}
