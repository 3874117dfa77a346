//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a check or reproduction failed, 2 invalid input,
//! 3 runtime error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::error::Error;
use crate::estimators::{
    identity_battery, psi_direct, verify_identities, DerivativeRoute, Evaluator,
};
use crate::fixtures::{fixture, fixture_printed, reference, FIXTURE_NAMES};
use crate::limits::{
    adjusted_value, chain_bound_check, lifted_bound_check, slepian_gordon_check, BoundReport,
};
use crate::model::{build_set, ModelParams, Sign, Variant, VectorSet};
use crate::quadrature::{integrate_curve, uniform_grid, CurveResult};
use crate::reproduce::run_table;
use crate::sampling::{paired_run, SeedPlan, DEFAULT_REPLICATIONS, GENERATOR};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED_CHECK: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Environment variable supplying the default master seed.
pub const SEED_ENV: &str = "GAUSSCOMP_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "gausscomp",
    version,
    about = "Monte Carlo checks of Gaussian comparison principles"
)]
pub struct Cli {
    /// Number of worker threads (defaults to one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the functional or its derivative at one t.
    Estimate(EstimateArgs),
    /// Sweep a t grid and write the reconstructed curves as CSV.
    Curve(CurveArgs),
    /// Check the large-beta comparison inequalities.
    Limits(LimitsArgs),
    /// Re-run a reference table and compare every cell.
    Reproduce(ReproduceArgs),
    /// Check the Gaussian integration-by-parts identities.
    VerifyIdentities(IdentityArgs),
    /// Print a built-in vector set in the text matrix format.
    ExportFixture(ExportArgs),
}

#[derive(Debug, Clone, Args)]
struct ModelArgs {
    /// Built-in set name (x_plus, x_minus) or path to a text matrix file.
    #[arg(long, default_value = "x_plus")]
    set: String,
    /// Model variant; defaults to spherical for unit sets and general otherwise.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long, default_value_t = 3.0)]
    beta: f64,
    /// 1 or -1.
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    sign: Sign,
    /// Lifting exponent (lifted variant only).
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    c3: f64,
    /// Rows of the Gaussian matrix; defaults to the set dimension.
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Debug, Clone, Args)]
struct RunArgs {
    #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
    samples: usize,
    /// Master seed.
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    seed: u64,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Quantity {
    Psi,
    Dpsi,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    t: f64,
    #[arg(long, value_enum, default_value = "psi")]
    quantity: Quantity,
    #[arg(long, default_value = "computed")]
    route: DerivativeRoute,
}

#[derive(Debug, Args)]
struct CurveArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    run: RunArgs,
    /// start:stop:step, starting at 0.
    #[arg(long, default_value = "0:1:0.05")]
    t_grid: String,
    /// Route reported as the primary reconstruction.
    #[arg(long, default_value = "computed")]
    route: DerivativeRoute,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Check {
    Slepian,
    Gordon,
    LiftedSlepian,
    LiftedGordon,
    Chain,
}

#[derive(Debug, Args)]
struct LimitsArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Checks to run; defaults to those matching --sign, plus chain for unit sets.
    #[arg(long = "check", value_enum)]
    checks: Vec<Check>,
    /// Lifting scale used by the lifted and chain checks.
    #[arg(long, default_value_t = 0.3)]
    c3s: f64,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    /// Reference table id, e.g. table1.
    table: String,
    /// Master seed.
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    seed: u64,
    /// Overrides the table's replication count.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Args)]
struct IdentityArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Largest admissible |z| score.
    #[arg(long, default_value_t = 4.0)]
    z_max: f64,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// x_plus or x_minus.
    name: String,
    /// Print the entries as published instead of the normalized set.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command, and returns the exit code.
pub fn run_from<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors and belong on stdout.
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_VALIDATION;
            }
            let _ = write!(stdout, "{}", e.render());
            return EXIT_OK;
        }
    };
    match execute(cli, stdout) {
        Ok(code) => code,
        Err(err) => {
            let _ = writeln!(stderr, "error: {err:#}");
            exit_code_for(&err)
        }
    }
}

fn exit_code_for(err: &anyhow::Error) -> i32 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) if e.is_validation() => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<i32> {
    match cli.threads {
        Some(0) => Err(Error::InvalidInput("--threads must be at least 1".into()).into()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("building thread pool")?;
            // The writer is not Send, so buffer inside the pool and copy out afterwards.
            let mut buffer = Vec::new();
            let code = pool.install(|| dispatch(cli.command, &mut buffer));
            stdout.write_all(&buffer).context("writing to stdout")?;
            code
        }
        None => dispatch(cli.command, stdout),
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Estimate(a) => cmd_estimate(&a, stdout),
        Command::Curve(a) => cmd_curve(&a, stdout),
        Command::Limits(a) => cmd_limits(&a, stdout),
        Command::Reproduce(a) => cmd_reproduce(&a, stdout),
        Command::VerifyIdentities(a) => cmd_verify_identities(&a, stdout),
        Command::ExportFixture(a) => cmd_export_fixture(&a, stdout),
    }
}

fn emit(out: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => stdout
            .write_all(text.as_bytes())
            .context("writing to stdout"),
    }
}

fn load_set(name: &str) -> Result<VectorSet<f64>> {
    if FIXTURE_NAMES.contains(&name) {
        return Ok(fixture(name)?);
    }
    let text = std::fs::read_to_string(name)
        .map_err(|e| Error::InvalidInput(format!("cannot read vector set `{name}`: {e}")))?;
    Ok(VectorSet::from_text(&text)?)
}

struct Resolved {
    set: VectorSet<f64>,
    params: ModelParams<f64>,
}

impl ModelArgs {
    fn resolve(&self) -> Result<Resolved> {
        let set = load_set(&self.set)?;
        let variant = self.variant.unwrap_or(if set.unit_flag() {
            Variant::Spherical
        } else {
            Variant::General
        });
        let m = self.m.unwrap_or(set.dim());
        let params = ModelParams::new(&set, variant, m, self.beta, self.sign, self.c3)?;
        Ok(Resolved { set, params })
    }

    fn describe(&self, r: &Resolved) -> Value {
        let mut v = json!({
            "set": self.set,
            "variant": r.params.variant.name(),
            "m": r.params.m,
            "n": r.set.dim(),
            "l": r.set.len(),
            "beta": r.params.beta,
            "sign": r.params.sign.as_i8(),
        });
        if r.params.variant == Variant::Lifted {
            v["c3"] = json!(r.params.c3);
        }
        v
    }
}

impl RunArgs {
    fn plan(&self) -> Result<SeedPlan> {
        Ok(SeedPlan::new(self.seed, self.samples)?)
    }

    fn metadata(&self) -> Value {
        json!({ "generator": GENERATOR, "seed": self.seed, "samples": self.samples })
    }
}

fn pretty(v: &Value) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn cmd_estimate(a: &EstimateArgs, stdout: &mut dyn Write) -> Result<i32> {
    let r = a.model.resolve()?;
    let plan = a.run.plan()?;
    if !(0.0..=1.0).contains(&a.t) {
        return Err(Error::OutOfDomain(a.t).into());
    }
    let ev = Evaluator::new(&r.set, &r.params)?;
    let est = match a.quantity {
        Quantity::Psi => psi_direct(&r.set, &r.params, a.t, &plan)?,
        Quantity::Dpsi => {
            if a.route == DerivativeRoute::Standard && !crate::estimators::in_standard_window(a.t) {
                return Err(Error::EndpointSingularity {
                    t: a.t,
                    lo: crate::estimators::STANDARD_WINDOW.0,
                    hi: crate::estimators::STANDARD_WINDOW.1,
                }
                .into());
            }
            paired_run(&r.set, &r.params, &plan, &[a.t], |d, st| {
                ev.dpsi(a.route, d, st)
            })?
            .estimates[0]
        }
    };
    let mut v = json!({
        "quantity": match a.quantity { Quantity::Psi => "psi", Quantity::Dpsi => "dpsi" },
        "t": a.t,
        "estimate": est,
        "config": a.model.describe(&r),
        "metadata": a.run.metadata(),
    });
    if a.quantity == Quantity::Dpsi {
        v["route"] = json!(a.route.to_string());
    }
    if a.quantity == Quantity::Psi && r.params.variant == Variant::Lifted && est.mean > 0.0 {
        v["adjusted_value"] = json!(adjusted_value(
            est.mean,
            r.params.beta,
            r.params.c3,
            r.set.dim()
        )?);
    }
    emit(&a.run.out, &pretty(&v)?, stdout)?;
    Ok(EXIT_OK)
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(
            Error::InvalidInput(format!("--t-grid expects start:stop:step, got `{text}`")).into(),
        );
    }
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidInput(format!("`{s}` in --t-grid is not a number")))
    };
    Ok(uniform_grid(
        num(parts[0])?,
        num(parts[1])?,
        num(parts[2])?,
    )?)
}

/// Renders a curve in the CSV schema, with `#` metadata lines first.
pub fn curve_csv(
    curve: &CurveResult,
    params: &ModelParams<f64>,
    n: usize,
    header: &[String],
) -> Result<String> {
    let lifted = params.variant == Variant::Lifted;
    let mut out = String::new();
    for line in header {
        writeln!(out, "# {line}")?;
    }
    out.push_str(
        "t,dpsi_standard,dpsi_standard_se,dpsi_computed,dpsi_computed_se,psi_int_standard,psi_int_computed,psi_direct,psi_direct_se",
    );
    if lifted {
        out.push_str(",adjusted_value");
    }
    out.push('\n');
    for k in 0..curve.t_grid.len() {
        write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            curve.t_grid[k],
            curve.dpsi_standard[k].mean,
            curve.dpsi_standard[k].std_error,
            curve.dpsi_computed[k].mean,
            curve.dpsi_computed[k].std_error,
            curve.psi_from_standard[k].mean,
            curve.psi_from_computed[k].mean,
            curve.psi_direct[k].mean,
            curve.psi_direct[k].std_error,
        )?;
        if lifted {
            write!(
                out,
                ",{}",
                adjusted_value(curve.psi_direct[k].mean, params.beta, params.c3, n)?
            )?;
        }
        out.push('\n');
    }
    Ok(out)
}

fn cmd_curve(a: &CurveArgs, stdout: &mut dyn Write) -> Result<i32> {
    let r = a.model.resolve()?;
    let plan = a.run.plan()?;
    let grid = parse_grid(&a.t_grid)?;
    let curve = integrate_curve(&r.set, &r.params, &grid, &plan, a.route)?;
    let config = a.model.describe(&r);
    let text = match a.format {
        Format::Csv | Format::Text => {
            let header = vec![
                format!("generator: {GENERATOR}"),
                format!("seed: {}", plan.master_seed),
                format!("samples: {}", plan.replications),
                format!("skipped: {}", curve.samples.skipped()),
                format!("config: {config}"),
                format!("t_grid: {}", a.t_grid),
                format!("route: {}", a.route),
                "standard-route derivatives at t < 0.01 or t > 0.99 are evaluated at the nearest of 0.01, 0.99".into(),
            ];
            curve_csv(&curve, &r.params, r.set.dim(), &header)?
        }
        Format::Json => pretty(&json!({
            "t": curve.t_grid,
            "dpsi_standard": curve.dpsi_standard,
            "dpsi_computed": curve.dpsi_computed,
            "psi_int_standard": curve.psi_from_standard,
            "psi_int_computed": curve.psi_from_computed,
            "psi_direct": curve.psi_direct,
            "quad_error_standard": curve.quad_error_standard,
            "quad_error_computed": curve.quad_error_computed,
            "route": a.route.to_string(),
            "config": config,
            "metadata": a.run.metadata(),
        }))?,
    };
    emit(&a.run.out, &text, stdout)?;
    Ok(EXIT_OK)
}

fn cmd_limits(a: &LimitsArgs, stdout: &mut dyn Write) -> Result<i32> {
    let set = load_set(&a.model.set)?;
    let plan = a.run.plan()?;
    let m = a.model.m.unwrap_or(set.dim());
    let general = match a.model.variant {
        Some(v) => v != Variant::Spherical,
        None => !set.unit_flag(),
    };
    let checks = if a.checks.is_empty() {
        let mut c = match a.model.sign {
            Sign::Plus => vec![Check::Slepian, Check::LiftedSlepian],
            Sign::Minus => vec![Check::Gordon, Check::LiftedGordon],
        };
        if set.unit_flag() {
            c.push(Check::Chain);
        }
        c
    } else {
        a.checks.clone()
    };
    let reports = checks
        .iter()
        .map(|check| -> Result<BoundReport> {
            Ok(match check {
                Check::Slepian => slepian_gordon_check(&set, m, Sign::Plus, &plan, general)?,
                Check::Gordon => slepian_gordon_check(&set, m, Sign::Minus, &plan, general)?,
                Check::LiftedSlepian => lifted_bound_check(&set, m, Sign::Plus, a.c3s, &plan)?,
                Check::LiftedGordon => lifted_bound_check(&set, m, Sign::Minus, a.c3s, &plan)?,
                Check::Chain => chain_bound_check(&set, m, a.model.sign, a.c3s, &plan)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    emit(
        &a.run.out,
        &pretty(&serde_json::to_value(&reports)?)?,
        stdout,
    )?;
    Ok(if reports.iter().all(|r| r.pass) {
        EXIT_OK
    } else {
        EXIT_FAILED_CHECK
    })
}

fn cmd_reproduce(a: &ReproduceArgs, stdout: &mut dyn Write) -> Result<i32> {
    let table = reference(&a.table)?;
    let plan = SeedPlan::new(a.seed, a.samples.unwrap_or(table.samples))?;
    let report = run_table(&table, &plan)?;
    let text = match a.format {
        Format::Json => pretty(&serde_json::to_value(&report)?)?,
        Format::Text | Format::Csv => {
            let mut s = report.render();
            for c in report.failing_cells() {
                writeln!(
                    s,
                    "failing: t={} {} observed {:.4} expected {:.4} tolerance {}",
                    c.t, c.column, c.observed, c.expected, c.tolerance
                )?;
            }
            s
        }
    };
    emit(&a.out, &text, stdout)?;
    Ok(if report.cells_pass() {
        EXIT_OK
    } else {
        EXIT_FAILED_CHECK
    })
}

fn cmd_verify_identities(a: &IdentityArgs, stdout: &mut dyn Write) -> Result<i32> {
    let r = a.model.resolve()?;
    let plan = a.run.plan()?;
    let cases = identity_battery(
        r.params.variant,
        r.set.len(),
        r.params.m,
        &[0.25, 0.5, 0.75],
    );
    let checks = verify_identities(&r.set, &r.params, &cases, &plan)?;
    let pass = checks.iter().all(|c| c.passes(a.z_max));
    let v = json!({
        "checks": checks,
        "z_max": a.z_max,
        "pass": pass,
        "config": a.model.describe(&r),
        "metadata": a.run.metadata(),
    });
    emit(&a.run.out, &pretty(&v)?, stdout)?;
    Ok(if pass { EXIT_OK } else { EXIT_FAILED_CHECK })
}

fn cmd_export_fixture(a: &ExportArgs, stdout: &mut dyn Write) -> Result<i32> {
    let text = if a.raw {
        let set = build_set::<f64>(&fixture_printed(&a.name)?)?;
        set.to_text()
    } else {
        fixture(&a.name)?.to_text()
    };
    emit(&a.out, &format!("# {}\n{text}", a.name), stdout)?;
    Ok(EXIT_OK)
}
