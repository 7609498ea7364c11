use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use lent_particle::config::{parse_config, Task};
use lent_particle::run::{run, RunError};
use lent_particle::verify;

/// Carré du champ matrices of Poisson functionals by the lent particle method.
#[derive(Parser)]
#[command(name = "lentparticle", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample configurations and check atom counts against the intensity.
    Simulate(TaskArgs),
    /// Compute Γ per sample and compare with the closed form when one exists.
    Gamma(TaskArgs),
    /// Check E[(F♯)²] = Γ[F] on fixed configurations.
    Sharp(TaskArgs),
    /// Residuals of the exponential chaos expansion.
    Chaos(TaskArgs),
    /// Monte Carlo check of the Laplace functional.
    Laplace(TaskArgs),
    /// det Γ frequencies, rank histogram and density estimate.
    Diagnose(TaskArgs),
    /// Run the acceptance suite.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// Overrides the config seed and LENTPARTICLE_SEED.
    #[arg(long, env = "LENTPARTICLE_SEED")]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TaskArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    samples: Option<usize>,
    /// Write SVG plots next to the CSV files.
    #[arg(long)]
    plots: bool,
    #[command(flatten)]
    common: Common,
}

fn workers(requested: Option<usize>) -> usize {
    requested
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn run_task(task: Task, args: TaskArgs) -> Result<bool, RunError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| RunError::Usage(format!("cannot read {}: {e}", args.config.display())))?;
    let mut config = parse_config(&text).map_err(|e| RunError::Usage(format!("{}:\n{e}", args.config.display())))?;
    if config.task != task {
        eprintln!("note: config task `{}` replaced by subcommand `{}`", config.task.name(), task.name());
        config.task = task;
    }
    if task.needs_functional() && config.functional.is_none() {
        return Err(RunError::Usage(format!("task {} needs a [functional] section", task.name())));
    }
    if let Some(s) = args.common.seed {
        config.seed = s;
    }
    if let Some(n) = args.samples {
        if n == 0 {
            return Err(RunError::Usage("--samples must be at least 1".into()));
        }
        config.n_samples = n;
    }
    if let Some(out) = args.common.out {
        config.out = out;
    }
    config.plots |= args.plots;
    let outcome = run(&config, workers(args.common.workers))?;
    print!("{}", outcome.report);
    Ok(outcome.passed)
}

fn run_verify(args: Common) -> Result<bool, RunError> {
    let seed = args.seed.unwrap_or(lent_particle::config::DEFAULT_SEED);
    let out = args.out.unwrap_or_else(|| PathBuf::from("verify_out"));
    let start = Instant::now();
    let (criteria, files) = verify::verify(seed, workers(args.workers))?;
    verify::write(&out, &criteria, &files)?;
    for c in &criteria {
        println!("{}", c.line());
    }
    println!("seed = {seed}, output in {}, {:.1} s", out.display(), start.elapsed().as_secs_f64());
    Ok(criteria.iter().all(|c| c.passed))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => run_task(Task::Simulate, a),
        Command::Gamma(a) => run_task(Task::Gamma, a),
        Command::Sharp(a) => run_task(Task::Sharp, a),
        Command::Chaos(a) => run_task(Task::Chaos, a),
        Command::Laplace(a) => run_task(Task::Laplace, a),
        Command::Diagnose(a) => run_task(Task::Diagnose, a),
        Command::Verify(a) => run_verify(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
