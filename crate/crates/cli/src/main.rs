use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use uncle_core::discovery::{PerturbationConfig, Strategy};
use uncle_core::model::Preset;

use uncle_cli::error::{exit_code, usage};
use uncle_cli::recipe::{model_config_from, DatasetSpec, Generator, Mode, Recipe};
use uncle_cli::run::{run_grid, run_recipe};
use uncle_cli::stages::{self, TruthSource};

/// UnCLe: causal discovery from time series by uncoupling and recoupling.
#[derive(Parser)]
#[command(name = "uncle", version)]
struct Cli {
    /// Worker threads (UNCLE_THREADS caps this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with its ground truth.
    Generate(GenerateArgs),
    /// Train a model on one dataset.
    Train(TrainArgs),
    /// Infer causal graphs from a trained model.
    Discover(DiscoverArgs),
    /// Score predicted graphs against ground truth.
    Eval(EvalArgs),
    /// Run a whole experiment from a recipe.
    Run(RunArgs),
    /// Sweep alpha and lambda1 over a recipe.
    Grid(GridArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long = "gen", value_enum)]
    generator: Generator,
    /// Number of time steps.
    #[arg(long = "T", alias = "steps")]
    steps: Option<usize>,
    /// Lorenz-96 dimension.
    #[arg(long, default_value_t = 20)]
    p: usize,
    /// Lorenz-96 forcing.
    #[arg(long = "F", alias = "forcing", default_value_t = 10.0)]
    forcing: f64,
    /// NC8 start offset.
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    t0: i64,
    #[arg(long, default_value_t = 1)]
    replicas: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    /// Recipe whose [model] section supplies defaults.
    #[arg(long)]
    recipe: Option<PathBuf>,
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lag: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    recon_epochs: Option<usize>,
    #[arg(long)]
    joint_epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_share_params: bool,
    #[arg(long)]
    disable_dependency_matrices: bool,
    /// Any other model key, as key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ModelArgs {
    /// Recipe defaults first, then flags in a fixed order, then `--set`.
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut kv = match &self.recipe {
            Some(p) => Recipe::load(p)?.model,
            None => Vec::new(),
        };
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                kv.push((k.to_string(), v));
            }
        };
        push("preset", self.preset.map(|p| p.name().to_string()));
        push("alpha", self.alpha.map(|v| v.to_string()));
        push("lambda1", self.lambda1.map(|v| v.to_string()));
        push("lag", self.lag.map(|v| v.to_string()));
        push("lr", self.lr.map(|v| v.to_string()));
        push("recon_epochs", self.recon_epochs.map(|v| v.to_string()));
        push("joint_epochs", self.joint_epochs.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("share_params", self.no_share_params.then(|| "false".to_string()));
        push("disable_dependency_matrices", self.disable_dependency_matrices.then(|| "true".to_string()));
        for s in &self.set {
            let (k, v) = s.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
            kv.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(kv)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Checkpoint path; the loss trace goes next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiscoverArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset the perturbations are applied to.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "perturb")]
    mode: String,
    #[arg(long, default_value = "permutation")]
    strategy: Strategy,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 1.0)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write Gaussian-smoothed edge series with this width.
    #[arg(long)]
    smooth: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Prediction file(s): summary.csv or strengths.bin, one per replica.
    #[arg(long = "pred", required = true)]
    preds: Vec<PathBuf>,
    /// Static ground-truth matrix.
    #[arg(long, conflicts_with = "segments", required_unless_present = "segments")]
    truth: Option<PathBuf>,
    /// Segment manifest of a time-varying ground truth.
    #[arg(long)]
    segments: Option<PathBuf>,
    #[arg(long, default_value = "UnCLe")]
    method: String,
    #[arg(long, default_value = "dataset")]
    dataset: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    recipe: PathBuf,
    /// Experiment directory; defaults to the recipe's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    recipe: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    lambda1: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn experiment_dir(recipe: &Recipe, out: Option<PathBuf>, recipe_path: &Path) -> Result<PathBuf> {
    out.or_else(|| recipe.out.clone()).ok_or_else(|| {
        usage(format!("{} sets no `out`; pass --out", recipe_path.display()))
    })
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    let env = match std::env::var("UNCLE_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| usage(format!("UNCLE_THREADS must be a positive integer, got {v:?}")))?,
        ),
        Err(_) => None,
    };
    if flag == Some(0) {
        return Err(usage("--threads must be positive"));
    }
    Ok(match (flag, env) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    })
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the worker pool")?;
    }
    match cli.command {
        Command::Generate(a) => {
            let spec = DatasetSpec {
                steps: a.steps.unwrap_or_else(|| a.generator.default_steps()),
                p: a.p,
                forcing: a.forcing,
                t0: a.t0,
                replicas: a.replicas,
                seed: a.seed,
                ..DatasetSpec::new(a.generator)
            };
            if spec.replicas == 0 {
                return Err(usage("--replicas must be positive"));
            }
            let truth = stages::generate(&spec, &a.out, false)?;
            println!("{}", truth.display());
        }
        Command::Train(a) => {
            let overrides = a.model.overrides()?;
            stages::train(&a.data, |n| Ok(model_config_from(&overrides, n, 0)?), &a.out, false)?;
            println!("{}", a.out.display());
        }
        Command::Discover(a) => {
            let mode: Mode = a.mode.parse()?;
            let pcfg = PerturbationConfig {
                strategy: a.strategy,
                noise_sigma: a.noise_sigma,
                repeats: a.repeats,
                seed: a.seed,
            };
            pcfg.validate().map_err(|e| usage(e.to_string()))?;
            stages::discover(&a.model, a.data.as_deref(), mode, &pcfg, a.smooth, &a.out, false)?;
            println!("{}", a.out.join(stages::SUMMARY_FILE).display());
        }
        Command::Eval(a) => {
            let truth = match (a.truth, a.segments) {
                (Some(t), None) => TruthSource::Static(t),
                (None, Some(s)) => TruthSource::Segments(s),
                _ => return Err(usage("pass exactly one of --truth and --segments")),
            };
            let report = stages::evaluate(&a.preds, &truth, &a.method, &a.dataset, &a.out, false)?;
            print!("{}", report.to_kv());
        }
        Command::Run(a) => {
            let recipe = Recipe::load(&a.recipe)?;
            let out = experiment_dir(&recipe, a.out, &a.recipe)?;
            let outcome = run_recipe(&recipe, &out)?;
            print!("{}", outcome.table);
        }
        Command::Grid(a) => {
            let recipe = Recipe::load(&a.recipe)?;
            let out = experiment_dir(&recipe, a.out, &a.recipe)?;
            run_grid(&recipe, &a.alpha, &a.lambda1, &out)?;
            print!("{}", std::fs::read_to_string(out.join("grid.csv"))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
