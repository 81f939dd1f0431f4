//! `leadfollow`: run the macroscopic solvers, particle ensembles and the
//! convergence study from presets or config files.

mod output;
mod resolve;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use leadfollow::config::ExperimentConfig;
use leadfollow::harness::{convergence_study, micro_macro_gap};
use leadfollow::macro_solver::{
    equivalence_check, euler_pushforward_solve, fv_solve, nu_sigma_solve, nu_sigma_solve_with,
    MacroSeries, Schedule,
};
use leadfollow::micro_sim::ensemble_run;
use leadfollow::presets::PRESET_NAMES;
use output::Snapshot;
use resolve::Source;
use toml::Value;

#[derive(Debug)]
pub enum CliError {
    /// Bad input: unknown preset, malformed file, invalid or inconsistent
    /// configuration.
    Config(leadfollow::Error),
    Usage(String),
    /// The solver itself failed (CFL, positivity, negative weights).
    Numerical(leadfollow::Error),
    Io(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) | CliError::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "configuration error: {e}"),
            CliError::Usage(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<leadfollow::Error> for CliError {
    fn from(e: leadfollow::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e)
        } else {
            CliError::Config(e)
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "leadfollow",
    version,
    about = "Leader-follower mean-field solvers"
)]
struct Cli {
    /// Size of the worker pool (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the coupled macroscopic system.
    Macro {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        scheme: Option<Scheme>,
    },
    /// Simulate the particle system and compare it with the mean-field limit.
    Micro {
        #[command(flatten)]
        common: Common,
        /// Number of consecutive seeds to run.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Solve the reduced density/label system.
    NuSigma {
        #[command(flatten)]
        common: Common,
    },
    /// Compare the coupled and the reduced solvers on proportional data.
    Equivalence {
        #[command(flatten)]
        common: Common,
    },
    /// Particle-to-mean-field convergence study.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Particle counts, comma separated.
        #[arg(long = "Ns", value_delimiter = ',')]
        ns: Option<Vec<usize>>,
        /// Seeds per particle count.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Without a name, list the presets. With one, solve it with the
    /// finite-volume scheme (or print its config with `--print`).
    Preset {
        name: Option<String>,
        /// Print the resolved config as TOML instead of running it.
        #[arg(long)]
        print: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    record_every: Option<usize>,
    /// Override any config entry, e.g. `--set macro.dt=0.005`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scheme {
    Fv,
    Euler,
}

impl Scheme {
    fn name(self) -> &'static str {
        match self {
            Scheme::Fv => "fv",
            Scheme::Euler => "euler",
        }
    }

    fn parse(s: &str) -> Result<Self, CliError> {
        <Scheme as ValueEnum>::from_str(s, true)
            .map_err(|_| CliError::Usage(format!("unknown scheme `{s}` in manifest")))
    }
}

struct Resolved {
    cfg: ExperimentConfig,
    scheme: Option<String>,
}

fn resolve(common: &Common, extra: &[(&str, Value)]) -> Result<Resolved, CliError> {
    let source = match (&common.preset, &common.config) {
        (_, Some(path)) => Source::File(path),
        (Some(name), None) => Source::Preset(name),
        (None, None) => return Err(CliError::Usage("pass --preset or --config".into())),
    };
    let base = resolve::load(source)?;
    let mut tree = base.tree;
    if let Some(seed) = common.seed {
        resolve::set(&mut tree, "micro.seed", Value::Integer(seed as i64))?;
    }
    if let Some(every) = common.record_every {
        resolve::set(
            &mut tree,
            "macro.record_every",
            Value::Integer(every as i64),
        )?;
        resolve::set(
            &mut tree,
            "micro.record_every",
            Value::Integer(every as i64),
        )?;
    }
    for (key, value) in extra {
        resolve::set(&mut tree, key, value.clone())?;
    }
    for assignment in &common.overrides {
        resolve::apply_override(&mut tree, assignment)?;
    }
    Ok(Resolved {
        cfg: resolve::finish(tree)?,
        scheme: base.scheme,
    })
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

fn write_manifest(
    dir: &Path,
    command: &str,
    scheme: Option<&str>,
    cfg: &ExperimentConfig,
) -> Result<(), CliError> {
    let config = serde_json::to_value(cfg).map_err(|e| CliError::Internal(e.to_string()))?;
    let manifest = serde_json::json!({
        "version": leadfollow::VERSION,
        "command": command,
        "scheme": scheme,
        "config": config,
    });
    output::json(dir, "manifest.json", &manifest)
}

fn write_grid_series(dir: &Path, series: &MacroSeries) -> Result<(), CliError> {
    output::densities(dir, series.frames.iter().map(Snapshot::from))?;
    output::diagnostics(dir, series.frames.iter().map(|f| &f.diagnostics))
}

fn run_macro(common: &Common, scheme: Option<Scheme>) -> Result<(), CliError> {
    let r = resolve(common, &[])?;
    let scheme = match (scheme, &r.scheme) {
        (Some(s), _) => s,
        (None, Some(s)) => Scheme::parse(s)?,
        (None, None) => Scheme::Fv,
    };
    let cfg = &r.cfg.macro_cfg;
    prepare_out(&common.out)?;
    match scheme {
        Scheme::Fv => write_grid_series(&common.out, &fv_solve(cfg)?)?,
        Scheme::Euler => {
            let series = euler_pushforward_solve(cfg, r.cfg.euler.k)
                .map_err(|e| rekey(e, "k", "euler.k"))?;
            let grids: Vec<_> = series
                .frames
                .iter()
                .map(|f| (f.t, f.to_grids(&cfg.domain)))
                .collect();
            output::densities(
                &common.out,
                grids.iter().map(|(t, (f, l))| Snapshot {
                    t: *t,
                    mu_f: f,
                    mu_l: l,
                }),
            )?;
            output::diagnostics(&common.out, series.frames.iter().map(|f| &f.diagnostics))?;
        }
    }
    write_manifest(&common.out, "macro", Some(scheme.name()), &r.cfg)
}

/// Errors raised by a solver refer to keys of its own config; this maps them
/// onto the experiment layout.
fn rekey(e: leadfollow::Error, from: &str, to: &str) -> leadfollow::Error {
    match e {
        leadfollow::Error::InvalidConfig { key, reason } if key == from => {
            leadfollow::Error::InvalidConfig {
                key: to.to_string(),
                reason,
            }
        }
        other => other,
    }
}

fn run_nu_sigma(common: &Common) -> Result<(), CliError> {
    let r = resolve(common, &[])?;
    prepare_out(&common.out)?;
    write_grid_series(&common.out, &nu_sigma_solve(&r.cfg.macro_cfg)?)?;
    write_manifest(&common.out, "nu-sigma", None, &r.cfg)
}

fn run_micro(common: &Common, seeds: Option<usize>) -> Result<(), CliError> {
    let extra: Vec<(&str, Value)> = seeds
        .map(|s| ("micro.runs", Value::Integer(s as i64)))
        .into_iter()
        .collect();
    let r = resolve(common, &extra)?;
    let cfg = &r.cfg;
    let template = cfg.micro_config(cfg.micro.seed);
    let runs = ensemble_run(&template, &cfg.seeds(), None)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    // Mean-field reference at exactly the recorded particle times.
    let times: Vec<f64> = runs
        .first()
        .map(|s| s.frames.iter().map(|f| f.t).collect())
        .unwrap_or_default();
    let reference = nu_sigma_solve_with(&cfg.macro_cfg, &Schedule::Times(times))?;
    let tol = template.dt / 2.0;
    let mut rows = Vec::new();
    for run in &runs {
        for frame in &run.frames {
            let (space, _) = micro_macro_gap(run, &reference, frame.t, tol)?;
            rows.push((frame.t, run.seed, run.n_particles, frame.sigma.p_f, space));
        }
    }
    prepare_out(&common.out)?;
    output::micro(&common.out, &rows)?;
    if cfg.micro.dump_particles {
        output::particles(&common.out, &runs)?;
    }
    write_manifest(&common.out, "micro", None, cfg)
}

fn run_equivalence(common: &Common) -> Result<(), CliError> {
    let r = resolve(common, &[])?;
    let gap = equivalence_check(&r.cfg.macro_cfg)?;
    prepare_out(&common.out)?;
    output::json(
        &common.out,
        "equivalence.json",
        &serde_json::json!({ "gap": gap }),
    )?;
    println!("equivalence gap {}", output::num(gap));
    write_manifest(&common.out, "equivalence", None, &r.cfg)
}

fn run_convergence(
    common: &Common,
    ns: Option<Vec<usize>>,
    seeds: Option<usize>,
) -> Result<(), CliError> {
    let mut extra = Vec::new();
    if let Some(ns) = ns {
        let list = ns.into_iter().map(|n| Value::Integer(n as i64)).collect();
        extra.push(("convergence.ns", Value::Array(list)));
    }
    if let Some(s) = seeds {
        extra.push(("convergence.seeds", Value::Integer(s as i64)));
    }
    let r = resolve(common, &extra)?;
    let cfg = &r.cfg;
    let report = convergence_study(
        &cfg.macro_cfg,
        &cfg.micro_config(cfg.micro.seed),
        &cfg.convergence,
    )?;
    prepare_out(&common.out)?;
    output::convergence(&common.out, &report)?;
    println!(
        "slope {:.4} (95% CI {:.4} .. {:.4}), monotone: {}",
        report.slope, report.slope_ci.0, report.slope_ci.1, report.monotone
    );
    write_manifest(&common.out, "convergence", None, cfg)
}

fn run_preset(name: Option<String>, print: bool, mut common: Common) -> Result<(), CliError> {
    let Some(name) = name else {
        for n in PRESET_NAMES {
            println!("{n}");
        }
        return Ok(());
    };
    if common.config.is_some() {
        return Err(CliError::Usage(
            "a preset name and --config exclude each other".into(),
        ));
    }
    common.preset = Some(name);
    if print {
        let r = resolve(&common, &[])?;
        let text = toml::to_string(&r.cfg).map_err(|e| CliError::Internal(e.to_string()))?;
        print!("{text}");
        return Ok(());
    }
    run_macro(&common, Some(Scheme::Fv))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    match cli.command {
        Command::Macro { common, scheme } => run_macro(&common, scheme),
        Command::Micro { common, seeds } => run_micro(&common, seeds),
        Command::NuSigma { common } => run_nu_sigma(&common),
        Command::Equivalence { common } => run_equivalence(&common),
        Command::Convergence { common, ns, seeds } => run_convergence(&common, ns, seeds),
        Command::Preset {
            name,
            print,
            common,
        } => run_preset(name, print, common),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
