//! Batch front end: `solve`, `eval` and `convert`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 bad flags or unparsable input.
//!
//! `solve --out DIR` writes:
//!
//! | file            | contents                                             |
//! |-----------------|------------------------------------------------------|
//! | `policy.alpha`  | the value function as an alpha-vector policy file    |
//! | `stats.csv`     | per-stage statistics, deterministic given the flags  |
//! | `timing.csv`    | wall-clock seconds per stage                         |
//! | `manifest.json` | every flag, the derived seeds and the argument list  |
//! | `centers.csv`   | cell centers (Continuous Navigation only)            |
//!
//! `stats.csv` columns per algorithm:
//!
//! * `perseus`: `stage,value_sum,n_vectors,policy_changes,max_value_diff,backups,improved`
//! * `perseus-continuous`: the above plus
//!   `freq_improved_uniform,freq_improved_gauss,freq_improved_old,freq_not_improved`
//! * `qmdp`: `sweep,residual`
//! * `exact`: `iterations,residual,error_bound,n_vectors`

pub mod domain;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use perseus::continuous::{
    perseus_solve_continuous, ActionCache, ActionModelGenerator, ActionParams, ActionSource, ContinuousSolution,
    FiniteActions, SamplingScheme,
};
use perseus::eval::{evaluate_policy, EvalConfig, GeneratedDynamics, RandomParams, RandomPolicy};
use perseus::exact::{exact_value_iteration_with, ExactOptions};
use perseus::format::{format_g17, read_policy, serialize_pomdp, write_policy, PolicyAction};
use perseus::perseus::{Solution, StageStats};
use perseus::qmdp::{qmdp_value_function, solve_mdp};
use perseus::seed::{derive, DOMAIN_STREAM, SOLVER_STREAM};
use perseus::{SolverConfig, ValueFunction};
use serde::Serialize;

use crate::domain::{parse_centers_csv, Domain, DomainName};

#[derive(Debug, Parser)]
#[command(name = "perseus", version, about = "POMDP planning with randomized point-based value iteration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a model and write the policy, statistics and manifest.
    Solve(SolveArgs),
    /// Monte-Carlo evaluation of a policy file.
    Eval(EvalArgs),
    /// Normalize a model file or export a built-in domain.
    Convert(ConvertArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Perseus,
    PerseusContinuous,
    Qmdp,
    Exact,
}

impl Algo {
    fn name(self) -> &'static str {
        match self {
            Algo::Perseus => "perseus",
            Algo::PerseusContinuous => "perseus-continuous",
            Algo::Qmdp => "qmdp",
            Algo::Exact => "exact",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group(ArgGroup::new("source").required(true).args(["model", "domain"])))]
pub struct SolveArgs {
    /// Model in the `.pomdp` text format.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Built-in domain: `tag`, `cnav` or `tiny:NAME`.
    #[arg(long)]
    pub domain: Option<String>,
    /// Size of the belief set.
    #[arg(long, default_value_t = 1000)]
    pub beliefs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub max_stages: usize,
    /// Value-difference threshold (perseus), residual tolerance (exact, qmdp).
    #[arg(long)]
    pub eps: Option<f64>,
    /// Stop after this many stages without policy changes; 0 disables.
    #[arg(long, default_value_t = 5)]
    pub stable_stages: usize,
    #[arg(long, value_enum, default_value_t = Algo::Perseus)]
    pub algo: Algo,
    /// Sampling scheme `U,G,OLD` for perseus-continuous.
    #[arg(long, default_value = "1,0,1")]
    pub scheme: String,
    /// Wall-clock limit in seconds. Runs that hit it are not reproducible.
    #[arg(long)]
    pub max_seconds: Option<f64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

impl SolveArgs {
    /// Command line that reproduces this run.
    pub fn to_argv(&self) -> Vec<String> {
        let mut argv = vec!["solve".to_string()];
        let mut push = |flag: &str, value: String| {
            argv.push(format!("--{flag}"));
            argv.push(value);
        };
        if let Some(m) = &self.model {
            push("model", m.display().to_string());
        }
        if let Some(d) = &self.domain {
            push("domain", d.clone());
        }
        push("beliefs", self.beliefs.to_string());
        push("seed", self.seed.to_string());
        push("max-stages", self.max_stages.to_string());
        if let Some(e) = self.eps {
            push("eps", format_g17(e));
        }
        push("stable-stages", self.stable_stages.to_string());
        push("algo", self.algo.name().to_string());
        push("scheme", self.scheme.clone());
        if let Some(s) = self.max_seconds {
            push("max-seconds", format_g17(s));
        }
        push("out", self.out.display().to_string());
        argv
    }
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group(ArgGroup::new("source").required(true).args(["model", "domain"])))]
#[command(group(ArgGroup::new("actor").required(true).args(["policy", "random"])))]
pub struct EvalArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub domain: Option<String>,
    /// Alpha-vector policy file.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Evaluate the uniformly random policy instead.
    #[arg(long)]
    pub random: bool,
    /// Cell centers written by `solve` (Continuous Navigation only).
    #[arg(long)]
    pub centers: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub starts: usize,
    #[arg(long, default_value_t = 10)]
    pub traj_per_start: usize,
    #[arg(long, default_value_t = 100)]
    pub max_steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["input", "domain"])))]
pub struct ConvertArgs {
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub domain: Option<String>,
    /// Seeds the Continuous Navigation layout.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<perseus::Error> for CliError {
    fn from(e: perseus::Error) -> Self {
        match e {
            perseus::Error::Parse(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn read_input(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Convert(args) => cmd_convert(args),
    }
}

fn report(result: CliResult<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn cmd_solve(args: &SolveArgs) -> i32 {
    report(solve(args))
}

pub fn cmd_eval(args: &EvalArgs) -> i32 {
    match eval(args) {
        Ok(json) => {
            println!("{json}");
            0
        }
        Err(e) => report(Err(e)),
    }
}

pub fn cmd_convert(args: &ConvertArgs) -> i32 {
    report(convert(args))
}

fn parse_scheme(text: &str) -> CliResult<SamplingScheme> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = || CliError::Usage(format!("--scheme expects U,G,OLD with OLD in {{0,1}}, got '{text}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let u: usize = parts[0].parse().map_err(|_| bad())?;
    let g: usize = parts[1].parse().map_err(|_| bad())?;
    let old = match parts[2] {
        "0" => false,
        "1" => true,
        _ => return Err(bad()),
    };
    if u + g + usize::from(old) == 0 {
        return Err(bad());
    }
    Ok(SamplingScheme::new(u, g, old))
}

fn resolve_source(model: Option<&Path>, domain: Option<&str>, domain_seed: u64) -> CliResult<Domain> {
    match (model, domain) {
        (Some(path), None) => Domain::from_file(path),
        (None, Some(name)) => Ok(Domain::build(DomainName::parse(name)?, domain_seed)?),
        _ => Err(CliError::Usage("exactly one of --model and --domain is required".into())),
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    argv: Vec<String>,
    flags: &'a SolveArgs,
    seed: u64,
    solver_seed: u64,
    domain_seed: u64,
    states: usize,
    stop: String,
    stages: usize,
    vectors: usize,
    files: Vec<&'static str>,
}

struct Outcome {
    policy: String,
    stats: String,
    timing: String,
    stop: String,
    stages: usize,
    vectors: usize,
}

fn solve(args: &SolveArgs) -> CliResult<()> {
    if !(args.beliefs > 0 && args.max_stages > 0) {
        return Err(CliError::Usage("--beliefs and --max-stages must be positive".into()));
    }
    if args.eps.is_some_and(|e| !(e >= 0.0)) {
        return Err(CliError::Usage("--eps must be >= 0".into()));
    }
    if args.max_seconds.is_some_and(|s| !(s > 0.0)) {
        return Err(CliError::Usage("--max-seconds must be positive".into()));
    }
    let scheme = parse_scheme(&args.scheme)?;
    let domain_seed = derive(args.seed, DOMAIN_STREAM);
    let solver_seed = derive(args.seed, SOLVER_STREAM);
    let domain = resolve_source(args.model.as_deref(), args.domain.as_deref(), domain_seed)?;

    let mut config = SolverConfig {
        belief_count: args.beliefs,
        max_stages: args.max_stages,
        wallclock_limit: args.max_seconds.map(Duration::from_secs_f64),
        rng_seed: solver_seed,
        ..SolverConfig::default()
    };
    if let Some(e) = args.eps {
        config.convergence.value_diff = Some(e);
    }
    config.convergence.policy_stable_stages = (args.stable_stages > 0).then_some(args.stable_stages);

    let started = Instant::now();
    let outcome = match args.algo {
        Algo::Perseus => {
            let model = domain.discrete()?;
            let sol = perseus::solve(&model, &config)?;
            perseus_outcome(&sol, None)?
        }
        Algo::PerseusContinuous => {
            let source = ActionSource::Sampled(scheme);
            let cache = ActionCache::default();
            let sol = match &domain {
                Domain::Nav(nav) => solve_continuous(nav, &source, &config, &cache)?,
                other => solve_continuous(&FiniteActions::new(other.discrete()?), &source, &config, &cache)?,
            };
            perseus_outcome(&sol.solution, Some(&sol))?
        }
        Algo::Qmdp => {
            let model = domain.discrete()?;
            let q = solve_mdp(&model, args.eps.unwrap_or(1e-9))?;
            let vf = qmdp_value_function(&q);
            let mut stats = String::from("sweep,residual\n");
            for (k, r) in q.residuals.iter().enumerate() {
                let _ = writeln!(stats, "{},{}", k + 1, format_g17(*r));
            }
            Outcome {
                policy: write_policy(&vf)?,
                stats,
                timing: format!("elapsed_s\n{}\n", format_g17(started.elapsed().as_secs_f64())),
                stop: "converged".into(),
                stages: q.residuals.len(),
                vectors: vf.len(),
            }
        }
        Algo::Exact => {
            let model = domain.discrete()?;
            let sol = exact_value_iteration_with(&model, args.eps.unwrap_or(1e-6), args.max_stages, &ExactOptions::default())?;
            Outcome {
                policy: write_policy(&sol.value_function)?,
                stats: format!(
                    "iterations,residual,error_bound,n_vectors\n{},{},{},{}\n",
                    sol.iterations,
                    format_g17(sol.residual),
                    format_g17(sol.error_bound),
                    sol.value_function.len()
                ),
                timing: format!("elapsed_s\n{}\n", format_g17(started.elapsed().as_secs_f64())),
                stop: "converged".into(),
                stages: sol.iterations,
                vectors: sol.value_function.len(),
            }
        }
    };

    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    let mut files = vec!["policy.alpha", "stats.csv", "timing.csv", "manifest.json"];
    write_file(&args.out.join("policy.alpha"), &outcome.policy)?;
    write_file(&args.out.join("stats.csv"), &outcome.stats)?;
    write_file(&args.out.join("timing.csv"), &outcome.timing)?;
    if let Domain::Nav(nav) = &domain {
        write_file(&args.out.join("centers.csv"), &nav.centers_csv())?;
        files.push("centers.csv");
    }
    let manifest = Manifest {
        tool: "perseus",
        version: env!("CARGO_PKG_VERSION"),
        command: "solve",
        argv: args.to_argv(),
        flags: args,
        seed: args.seed,
        solver_seed,
        domain_seed,
        states: domain.num_states(),
        stop: outcome.stop,
        stages: outcome.stages,
        vectors: outcome.vectors,
        files,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&args.out.join("manifest.json"), &(json + "\n"))
}

fn solve_continuous<G: ActionModelGenerator>(
    generator: &G,
    source: &ActionSource,
    config: &SolverConfig,
    cache: &ActionCache,
) -> CliResult<ContinuousSolution> {
    if let ActionSource::Sampled(scheme) = source {
        scheme.check(generator.bounds())?;
    }
    Ok(perseus_solve_continuous(generator, source, config, cache)?)
}

fn perseus_outcome<A: PolicyAction>(sol: &Solution<A>, continuous: Option<&ContinuousSolution>) -> CliResult<Outcome> {
    let mut stats = String::from("stage,value_sum,n_vectors,policy_changes,max_value_diff,backups,improved");
    if continuous.is_some() {
        stats.push_str(",freq_improved_uniform,freq_improved_gauss,freq_improved_old,freq_not_improved");
    }
    stats.push('\n');
    let mut timing = String::from("stage,elapsed_s\n");
    for (k, s) in sol.stats.iter().enumerate() {
        stats.push_str(&stage_row(s));
        if let Some(c) = continuous {
            for f in c.provenance[k].frequencies() {
                stats.push(',');
                stats.push_str(&format_g17(f));
            }
        }
        stats.push('\n');
        let _ = writeln!(timing, "{},{}", s.stage, format_g17(s.elapsed_s));
    }
    Ok(Outcome {
        policy: write_policy(&sol.value_function)?,
        stats,
        timing,
        stop: serde_json::to_value(sol.stop_reason)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        stages: sol.stats.len(),
        vectors: sol.value_function.len(),
    })
}

fn stage_row(s: &StageStats) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        s.stage,
        format_g17(s.value_sum),
        s.num_vectors,
        s.policy_changes,
        format_g17(s.max_value_diff),
        s.backups,
        s.improved
    )
}

#[derive(Serialize)]
struct EvalOutput {
    mean: f64,
    std: f64,
    std_error: f64,
    count: usize,
    mean_steps: f64,
}

fn eval(args: &EvalArgs) -> CliResult<String> {
    let config = EvalConfig {
        n_starts: args.starts,
        n_trajectories_per_start: args.traj_per_start,
        max_steps: args.max_steps,
        rng_seed: args.seed,
    };
    config.check().map_err(|e| CliError::Usage(e.to_string()))?;
    let domain = match (&args.domain, &args.centers) {
        (Some(name), centers) if DomainName::parse(name)? == DomainName::Cnav => {
            let path = centers
                .as_deref()
                .ok_or_else(|| CliError::Usage("--domain cnav needs --centers (written by solve)".into()))?;
            Domain::Nav(perseus::domains::ContinuousNav::from_centers(parse_centers_csv(&read_input(path)?)?))
        }
        _ => resolve_source(args.model.as_deref(), args.domain.as_deref(), 0)?,
    };
    let termination = domain.termination();

    let report = match &args.policy {
        None => match &domain {
            Domain::Nav(nav) => {
                let policy = RandomParams {
                    bounds: nav.bounds().clone(),
                };
                evaluate_policy(&GeneratedDynamics::new(nav), &policy, &config, &termination)?
            }
            other => {
                let model = other.discrete()?;
                let policy = RandomPolicy {
                    num_actions: model.num_actions(),
                };
                evaluate_policy(&model, &policy, &config, &termination)?
            }
        },
        Some(path) => {
            let text = read_input(path)?;
            let parametric = text
                .lines()
                .map(str::trim)
                .find(|l| !l.is_empty() && !l.starts_with('#'))
                .is_some_and(|l| l.starts_with('@'));
            if parametric {
                let vf: ValueFunction<ActionParams> = read_policy(&text)?;
                check_dimensions(&vf, domain.num_states())?;
                match &domain {
                    Domain::Nav(nav) => evaluate_policy(&GeneratedDynamics::new(nav), &vf, &config, &termination)?,
                    other => {
                        let generator = FiniteActions::new(other.discrete()?);
                        evaluate_policy(&GeneratedDynamics::new(&generator), &vf, &config, &termination)?
                    }
                }
            } else {
                let vf: ValueFunction = read_policy(&text)?;
                check_dimensions(&vf, domain.num_states())?;
                let model = domain.discrete()?;
                if let Some(a) = vf.vectors.iter().map(|v| v.action).find(|&a| a >= model.num_actions()) {
                    return Err(CliError::Runtime(format!(
                        "policy uses action {a} but the model has {} actions",
                        model.num_actions()
                    )));
                }
                evaluate_policy(&model, &vf, &config, &termination)?
            }
        }
    };
    let out = EvalOutput {
        mean: report.mean,
        std: report.std,
        std_error: report.std_error(),
        count: report.count,
        mean_steps: report.mean_steps,
    };
    serde_json::to_string(&out).map_err(|e| CliError::Runtime(e.to_string()))
}

fn check_dimensions<A>(vf: &ValueFunction<A>, states: usize) -> CliResult<()> {
    match vf.num_states() {
        Some(n) if n != states => Err(CliError::Runtime(format!(
            "policy has {n} coefficients per vector but the model has {states} states"
        ))),
        _ => Ok(()),
    }
}

fn convert(args: &ConvertArgs) -> CliResult<()> {
    let model = match (&args.input, &args.domain) {
        (Some(path), None) => {
            let text = read_input(path)?;
            perseus::format::parse_pomdp(&text).map_err(|e| match e {
                perseus::Error::Parse(p) => CliError::Usage(format!("{}:{p}", path.display())),
                other => CliError::Usage(format!("{}: {other}", path.display())),
            })?
        }
        (None, Some(name)) => Domain::build(DomainName::parse(name)?, derive(args.seed, DOMAIN_STREAM))?.discrete()?,
        _ => return Err(CliError::Usage("exactly one of --in and --domain is required".into())),
    };
    write_file(&args.out, &serialize_pomdp(&model))
}
