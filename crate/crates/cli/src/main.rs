use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tides_core::config::{parse_resolution, ConfigError, JudgeKind};
use tides_core::export::{binarize, keep_anchored_components};
use tides_core::formats::{self, Field};
use tides_core::gradcheck::{gradcheck, GradcheckError};
use tides_core::opt::{self, OptError, RunError};
use tides_core::problems::{self, anchor_elements};
use tides_core::trials::run_trials;
use tides_core::{Mode, RunConfig, RunRecord};

const GRADCHECK_LIMIT: f64 = 1e-3;

#[derive(Parser)]
#[command(name = "tides", version, about = "Differentiable 2D topology optimization with a visual judge")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimization and write its artifacts.
    Optimize(RunArgs),
    /// Render a TDSF density field as an 8-bit PGM (dark = material).
    Render {
        input: PathBuf,
        /// Defaults to the input path with a .pgm extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare every analytic gradient with central finite differences.
    Gradcheck {
        #[arg(long, default_value = "cantilever")]
        problem: String,
        #[arg(long, default_value = "6x4")]
        resolution: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Binarize the final design of a run, optionally keeping only material
    /// connected to a support or load.
    Export {
        run_dir: PathBuf,
        #[arg(long)]
        cleanup: bool,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Output stem; defaults to `<run_dir>/export`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run seeded trials and tabulate (seed, compliance, score).
    Trials {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    epochs: Option<usize>,
    /// `N` or `NXxNY`.
    #[arg(long)]
    resolution: Option<String>,
    #[arg(long)]
    problem: Option<String>,
    /// Selects the remote judge.
    #[arg(long, conflicts_with = "target_image")]
    prompt: Option<String>,
    /// Selects the reference judge; `builtin:<name>` or an image path.
    #[arg(long)]
    target_image: Option<String>,
    #[arg(long, env = "TIDES_JUDGE_ENDPOINT")]
    endpoint: Option<String>,
}

struct Failure {
    kind: &'static str,
    message: String,
    code: u8,
}

impl Failure {
    fn new(kind: &'static str, message: impl ToString) -> Self {
        Self {
            kind,
            message: message.to_string(),
            code: 1,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new("config", e)
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let kind = match &e {
            RunError::Config(_) => "config",
            RunError::Problem(_) => "problem",
            RunError::Format(_) => "format",
            RunError::Opt(OptError::Judge(_)) => "judge_unavailable",
            RunError::Opt(_) => "optimizer",
            RunError::Io { .. } => "io",
            RunError::JudgeFailed { .. } => "judge_unavailable",
            RunError::NonFinite { .. } => "non_finite",
        };
        Failure::new(kind, e)
    }
}

impl From<formats::FormatError> for Failure {
    fn from(e: formats::FormatError) -> Self {
        Failure::new("format", e)
    }
}

impl From<problems::ProblemError> for Failure {
    fn from(e: problems::ProblemError) -> Self {
        Failure::new("problem", e)
    }
}

impl From<GradcheckError> for Failure {
    fn from(e: GradcheckError) -> Self {
        Failure::new("gradcheck", e)
    }
}

fn build_config(a: &RunArgs) -> Result<RunConfig, Failure> {
    let mut c = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &a.problem {
        if v != &c.problem {
            c.nx = None;
            c.ny = None;
            c.beta1 = None;
            c.beta2 = None;
            c.target_density = None;
        }
        c.problem = v.clone();
    }
    if let Some(v) = &a.out {
        c.out = v.clone();
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.mode {
        c.mode = v;
    }
    if let Some(v) = a.epochs {
        c.epochs = v;
    }
    if let Some(v) = &a.resolution {
        let (nx, ny) = parse_resolution(v).map_err(|e| Failure::new("usage", e))?;
        c.nx = Some(nx);
        c.ny = Some(ny);
    }
    if let Some(v) = &a.prompt {
        c.judge = JudgeKind::Remote;
        c.prompt = Some(v.clone());
    }
    if let Some(v) = &a.target_image {
        c.judge = JudgeKind::Reference;
        c.target_image = Some(v.clone());
    }
    if let Some(v) = &a.endpoint {
        c.endpoint = Some(v.clone());
    }
    Ok(c)
}

fn print(value: serde_json::Value) {
    println!("{}", serde_json::to_string(&value).expect("json values serialize"));
}

fn optimize(a: &RunArgs) -> Result<(), Failure> {
    let config = build_config(a)?;
    let record = opt::run(&config)?;
    let f = &record.final_design;
    print(json!({
        "out": record.out_dir,
        "epochs": record.losses.len(),
        "compliance": f.compliance,
        "score": f.score,
        "mean_density": f.mean_density,
        "grey_fraction": f.grey_fraction,
        "floating_elements": f.floating_elements,
        "seconds": record.timing.wall_clock_seconds,
    }));
    Ok(())
}

fn render(input: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let field = formats::read_tdsf(input)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| input.with_extension("pgm"));
    formats::write_pgm(&out, &field)?;
    print(json!({ "out": out, "nx": field.nx, "ny": field.ny }));
    Ok(())
}

fn run_gradcheck(problem: &str, resolution: &str, seed: u64) -> Result<(), Failure> {
    let (nx, ny) = parse_resolution(resolution).map_err(|e| Failure::new("usage", e))?;
    let report = gradcheck(problem, nx, ny, seed)?;
    for c in &report.checks {
        println!("{:<32} n={:<5} max_rel_err={:.3e}", c.name, c.entries, c.max_relative_error);
    }
    let worst = report.max_relative_error();
    println!("max relative error {worst:.3e} ({problem} {nx}x{ny})");
    if worst > GRADCHECK_LIMIT || !worst.is_finite() {
        return Err(Failure {
            kind: "gradcheck_failed",
            message: format!("max relative error {worst:e} exceeds {GRADCHECK_LIMIT:e}"),
            code: 2,
        });
    }
    Ok(())
}

fn export(run_dir: &Path, cleanup: bool, threshold: f64, out: Option<&Path>) -> Result<(), Failure> {
    let record = RunRecord::load(run_dir)?;
    let density = formats::read_tdsf(&run_dir.join("final_density.tdsf"))?;
    let c = &record.config;
    let mut values = binarize(&density.values, threshold);
    let solid_before = values.iter().filter(|&&v| v > 0.0).count();
    if cleanup {
        let full = problems::make_problem(&c.problem, density.nx, density.ny)?;
        values = keep_anchored_components(&values, &anchor_elements(&full), density.nx, density.ny);
    }
    let solid = values.iter().filter(|&&v| v > 0.0).count();
    let field = Field::new(density.nx, density.ny, values);
    let stem = out.map(Path::to_path_buf).unwrap_or_else(|| run_dir.join("export"));
    let tdsf = stem.with_extension("tdsf");
    let pgm = stem.with_extension("pgm");
    formats::write_tdsf(&tdsf, &field)?;
    formats::write_pgm(&pgm, &field)?;
    print(json!({
        "tdsf": tdsf,
        "pgm": pgm,
        "solid": solid,
        "removed": solid_before - solid,
    }));
    Ok(())
}

fn trials(a: &RunArgs, n: usize, seed_base: u64, jobs: usize) -> Result<(), Failure> {
    let config = build_config(a)?;
    let results = run_trials(&config, n, seed_base, jobs)?;
    let out = config.out_dir();
    print(json!({
        "trials": results.len(),
        "csv": out.join("trials.csv"),
        "scatter": out.join("trials_scatter.pgm"),
    }));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Optimize(a) => optimize(&a),
        Command::Render { input, out } => render(&input, out.as_deref()),
        Command::Gradcheck {
            problem,
            resolution,
            seed,
        } => run_gradcheck(&problem, &resolution, seed),
        Command::Export {
            run_dir,
            cleanup,
            threshold,
            out,
        } => export(&run_dir, cleanup, threshold, out.as_deref()),
        Command::Trials {
            run,
            n,
            seed_base,
            jobs,
        } => trials(&run, n, seed_base, jobs),
    }
}

fn fail(f: Failure) -> ExitCode {
    eprintln!("{}", json!({ "error": f.kind, "message": f.message }));
    ExitCode::from(f.code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.kind().to_string();
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or(&message).trim_start_matches("error: ");
            return fail(Failure {
                kind: "usage",
                message: first.to_string(),
                code: 64,
            });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(f),
    }
}
