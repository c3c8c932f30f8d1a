//! Command-line front end.
//!
//! Exit codes: 0 ok, 1 configuration or validation, 2 solver, 3 numeric blow-up.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector2;

use crate::bench::{run_bench, BenchConfig};
use crate::env::config::{curriculum_stage, EnvConfig};
use crate::env::policy::{FilePolicy, Policy, SinePolicy, ZeroPolicy};
use crate::env::reward::{NUM_TERMS, TERM_NAMES};
use crate::env::rollout;
use crate::error::{DynamicsError, EnvError, KinematicsError, ModelError};
use crate::five_bar::FiveBarConfig;
use crate::four_bar::FourBarConfig;
use crate::model::{load_model, Mechanism, VariantSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "linkforge", version, about = "Closed-chain leg mechanisms, rollouts and variant benchmarks")]
pub struct Cli {
    /// Robot model file.
    #[arg(long, global = true, default_value = "models/bruce.json")]
    pub model: PathBuf,
    /// Overrides the seed of the environment configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output path or prefix, depending on the subcommand.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for batch stepping (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate the model, report closure at the nominal pose.
    Validate,
    /// Solve one mechanism for the given input angles.
    Solve(SolveArgs),
    /// Fit the polynomial input-output map of a four-bar.
    FitFourbar(FitArgs),
    /// Run a batch of environments and write traces.
    Rollout(RolloutArgs),
    /// Time every variant on the same random-action workload.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Mechanism name from the model.
    #[arg(long)]
    pub mechanism: String,
    /// Input angles (rad): theta1,theta4 for a five-bar, the input crank for
    /// a four-bar, both motor angles for a differential.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub inputs: Vec<f64>,
    /// Closure residual accepted as solved.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Four-bar to fit; the first one in the model by default.
    #[arg(long)]
    pub mechanism: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub degree: usize,
    /// Input range `lo,hi` (rad); the mechanism's input limits by default.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub domain: Option<Vec<f64>>,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    /// Rows of the validation CSV.
    #[arg(long, default_value_t = 401)]
    pub validation_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    Zero,
    Sine,
    File,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    /// Environment configuration (JSON); built-in defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Curriculum stage 1..=4 applied on top of the configuration.
    #[arg(long)]
    pub stage: Option<u8>,
    #[arg(long, default_value = "all")]
    pub variant: String,
    #[arg(long, value_enum, default_value_t = PolicyKind::Zero)]
    pub policy: PolicyKind,
    /// CSV of actions for `--policy file`.
    #[arg(long)]
    pub policy_file: Option<PathBuf>,
    /// Sine amplitude (rad).
    #[arg(long, default_value_t = 0.2)]
    pub amplitude: f64,
    /// Sine frequency (Hz).
    #[arg(long, default_value_t = 1.9)]
    pub frequency: f64,
    #[arg(long, default_value_t = 4)]
    pub envs: usize,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated variants; all five by default.
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
    #[arg(long, default_value_t = 1024)]
    pub envs: usize,
    #[arg(long, default_value_t = 400)]
    pub steps: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 50)]
    pub warmup: usize,
    /// Environment configuration (JSON); built-in defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    fn solver(message: impl Into<String>) -> Self {
        Self { code: EXIT_SOLVER, message: message.into() }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<KinematicsError> for CliError {
    fn from(e: KinematicsError) -> Self {
        CliError::solver(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        let code = match &e {
            EnvError::Kinematics(_) => EXIT_SOLVER,
            EnvError::Dynamics { source: DynamicsError::NonFinite { .. }, .. } => EXIT_NUMERIC,
            _ => EXIT_CONFIG,
        };
        CliError { code, message: e.to_string() }
    }
}

/// Parse `args` (program name first) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be >= 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::config(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Validate => cmd_validate(cli),
        Command::Solve(a) => cmd_solve(cli, a),
        Command::FitFourbar(a) => cmd_fit_fourbar(cli, a),
        Command::Rollout(a) => cmd_rollout(cli, a),
        Command::Bench(a) => cmd_bench(cli, a),
    })
}

fn cmd_validate(cli: &Cli) -> Result<(), CliError> {
    let model = load_model(&cli.model)?;
    println!("model `{}`: {} joints, {} actuators, {} mechanisms", model.name, model.num_joints(), model.num_actuators(), model.mechanisms.len());
    for (name, r) in model.closure_residuals(&model.q_nom) {
        println!("  {name:<20} nominal closure residual {r:.3e}");
    }
    for v in VariantSpec::table() {
        match model.check_variant(&v) {
            Ok(()) => println!("  variant {:<13} ok", v.name()),
            Err(e) => println!("  variant {:<13} unavailable: {e}", v.name()),
        }
    }
    Ok(())
}

fn cmd_solve(cli: &Cli, a: &SolveArgs) -> Result<(), CliError> {
    let model = load_model(&cli.model)?;
    let mech = model
        .mechanism(&a.mechanism)
        .ok_or_else(|| CliError::config(format!("no mechanism named `{}`", a.mechanism)))?;
    let want = |n: usize| {
        if a.inputs.len() == n {
            Ok(())
        } else {
            Err(CliError::config(format!("`{}` takes {n} input angle(s), got {}", a.mechanism, a.inputs.len())))
        }
    };
    if a.inputs.iter().any(|x| !x.is_finite()) {
        return Err(CliError::config("input angles must be finite"));
    }
    let q = &model.q_nom;
    let residual = match mech {
        Mechanism::Serial { .. } => {
            want(1)?;
            println!("serial joint: output = {:.12}", a.inputs[0]);
            0.0
        }
        Mechanism::FiveBar { params, joints, .. } => {
            want(2)?;
            let c = params.solve_passive(a.inputs[0], a.inputs[1], (q[joints[1]], q[joints[2]]))?;
            let r = params.closure_residual(&c).norm();
            print_five_bar(&c);
            r
        }
        Mechanism::FourBar { params, joints, .. } => {
            want(1)?;
            let c = params.solve_output(a.inputs[0], q[joints[2]])?;
            let r = params.loop_residual(&c).norm();
            print_four_bar(&c);
            r
        }
        Mechanism::Differential { params, motors, outputs, .. } => {
            want(2)?;
            let dm = Vector2::new(a.inputs[0] - q[motors[0]], a.inputs[1] - q[motors[1]]);
            let out = params.forward_position(dm);
            let back = params.inverse_position(out);
            println!("roll  = {:.12}", q[outputs[0]] + out.x);
            println!("pitch = {:.12}", q[outputs[1]] + out.y);
            (back - dm).amax()
        }
    };
    println!("closure residual {residual:.3e}");
    if residual <= a.tol {
        Ok(())
    } else {
        Err(CliError::solver(format!("residual {residual:.3e} above tolerance {:.1e}", a.tol)))
    }
}

fn print_five_bar(c: &FiveBarConfig) {
    println!("theta1 = {:.12}", c.theta1);
    println!("theta2 = {:.12}", c.theta2);
    println!("theta3 = {:.12}", c.theta3);
    println!("theta4 = {:.12}", c.theta4);
}

fn print_four_bar(c: &FourBarConfig) {
    println!("input   = {:.12}", c.input);
    println!("coupler = {:.12}", c.coupler);
    println!("output  = {:.12}", c.output);
}

fn cmd_fit_fourbar(cli: &Cli, a: &FitArgs) -> Result<(), CliError> {
    let model = load_model(&cli.model)?;
    let found = model.mechanisms.iter().find(|m| match (m, &a.mechanism) {
        (Mechanism::FourBar { name, .. }, Some(want)) => name == want,
        (Mechanism::FourBar { .. }, None) => true,
        _ => false,
    });
    let Some(Mechanism::FourBar { name, params, joints, .. }) = found else {
        return Err(CliError::config(match &a.mechanism {
            Some(n) => format!("no four-bar named `{n}`"),
            None => "model has no four-bar".into(),
        }));
    };
    let domain = match &a.domain {
        Some(d) if d.len() == 2 => (d[0], d[1]),
        Some(d) => return Err(CliError::config(format!("--domain takes lo,hi; got {} values", d.len()))),
        None => params.input_limits(),
    };
    if !(domain.0.is_finite() && domain.1.is_finite() && domain.0 < domain.1) {
        return Err(CliError::config(format!("invalid domain {domain:?}")));
    }
    let fit = params.fit_poly_ratio(a.degree, domain, a.samples, model.q_nom[joints[2]]).map_err(|e| match e {
        KinematicsError::InvalidArgument(m) => CliError::config(m),
        other => CliError::from(other),
    })?;
    let rows = params.validation_rows(&fit, a.validation_points)?;
    let prefix = cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("{name}_fit")));
    let json_path = with_suffix(&prefix, "json");
    let csv_path = with_suffix(&prefix, "csv");
    std::fs::write(&json_path, serde_json::to_string_pretty(&fit).map_err(|e| CliError::config(e.to_string()))?)?;
    let mut csv = String::from("theta_in,theta_out_loop,theta_out_poly,residual\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{}", r[0], r[1], r[2], r[3]);
    }
    std::fs::write(&csv_path, csv)?;
    println!("four-bar `{name}`, degree {}, domain [{}, {}]", fit.degree(), domain.0, domain.1);
    for (k, c) in fit.coeffs.iter().enumerate() {
        println!("  a{k} = {c:.15e}");
    }
    println!("held-out max residual {:.3e} rad", fit.max_residual);
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

/// `prefix.ext`, keeping any dots already in the prefix.
fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn load_env_config(cli: &Cli, path: Option<&Path>) -> Result<EnvConfig, CliError> {
    let mut cfg = match path {
        Some(p) => EnvConfig::load(p)?,
        None => EnvConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn parse_variant(name: &str) -> Result<VariantSpec, CliError> {
    VariantSpec::parse(name).ok_or_else(|| {
        CliError::config(format!("unknown variant `{name}` (simplified, 4-bar, 5-bar, differential, all)"))
    })
}

fn cmd_rollout(cli: &Cli, a: &RolloutArgs) -> Result<(), CliError> {
    let model = load_model(&cli.model)?;
    let mut cfg = load_env_config(cli, a.config.as_deref())?;
    if let Some(stage) = a.stage {
        cfg = curriculum_stage(&cfg, stage)?;
    }
    cfg.validate()?;
    let variant = parse_variant(&a.variant)?;
    if a.envs == 0 || a.steps == 0 {
        return Err(CliError::config("--envs and --steps must be >= 1"));
    }
    let mut policy: Box<dyn Policy> = match a.policy {
        PolicyKind::Zero => Box::new(ZeroPolicy),
        PolicyKind::Sine => Box::new(SinePolicy::stepping(&model, a.amplitude, a.frequency, cfg.control_dt_s)),
        PolicyKind::File => {
            let path = a.policy_file.as_ref().ok_or_else(|| CliError::config("--policy file needs --policy-file"))?;
            Box::new(FilePolicy::load(path, model.num_actuators())?)
        }
    };
    let trace = rollout(&model, variant, &cfg, policy.as_mut(), a.envs, a.steps)?;

    let prefix = cli.out.clone().unwrap_or_else(|| PathBuf::from("rollout"));
    let csv_path = with_suffix(&prefix, "csv");
    let bin_path = with_suffix(&prefix, "lftr");
    let dyn_path = with_suffix(&prefix, "state.csv");
    trace.write_csv(BufWriter::new(File::create(&csv_path)?))?;
    trace.write_binary(BufWriter::new(File::create(&bin_path)?))?;
    trace.write_dynamics_csv(BufWriter::new(File::create(&dyn_path)?))?;

    print!("{}", reward_summary(&trace.term_totals(), trace.records.len()));
    let dones = trace.records.iter().filter(|r| r.done).count();
    println!(
        "{} envs x {} steps, variant {}, stage {}, seed {}, {} episode ends",
        a.envs,
        a.steps,
        variant.name(),
        cfg.stage,
        cfg.seed,
        dones
    );
    println!("wrote {}, {} and {}", csv_path.display(), bin_path.display(), dyn_path.display());
    Ok(())
}

/// Per-term totals and per-record means, largest magnitude first.
pub fn reward_summary(totals: &[f64; NUM_TERMS], n_records: usize) -> String {
    let mut order: Vec<usize> = (0..NUM_TERMS).collect();
    order.sort_by(|&i, &j| totals[j].abs().total_cmp(&totals[i].abs()));
    let n = n_records.max(1) as f64;
    let mut s = format!("{:<18}{:>16}{:>16}\n", "term", "total", "mean/step");
    for i in order {
        let _ = writeln!(s, "{:<18}{:>16.6}{:>16.6}", TERM_NAMES[i], totals[i], totals[i] / n);
    }
    let sum: f64 = totals.iter().sum();
    let _ = writeln!(s, "{:<18}{:>16.6}{:>16.6}", "sum", sum, sum / n);
    s
}

fn cmd_bench(cli: &Cli, a: &BenchArgs) -> Result<(), CliError> {
    let model = load_model(&cli.model)?;
    let env = load_env_config(cli, a.config.as_deref())?;
    env.validate()?;
    let variants = match &a.variants {
        Some(names) => names.iter().map(|n| parse_variant(n)).collect::<Result<Vec<_>, _>>()?,
        None => VariantSpec::table().to_vec(),
    };
    if a.envs == 0 || a.steps == 0 || a.repeats == 0 {
        return Err(CliError::config("--envs, --steps and --repeats must be >= 1"));
    }
    let cfg = BenchConfig { n_envs: a.envs, n_steps: a.steps, repeats: a.repeats, warmup_steps: a.warmup, env, ..Default::default() };
    let report = run_bench(&model, &variants, &cfg)?;
    println!(
        "{} envs x {} steps, median of {} runs, {} threads",
        report.n_envs,
        report.n_steps,
        report.repeats,
        rayon::current_num_threads()
    );
    print!("{}", report.table());
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("bench.csv"));
    std::fs::write(&out, report.to_csv())?;
    println!("wrote {}", out.display());
    if report.all_failed() {
        return Err(CliError::config("every variant failed"));
    }
    Ok(())
}
