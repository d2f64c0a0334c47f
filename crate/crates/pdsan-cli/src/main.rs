//! `pdsan`: train and inspect population-coded spiking actor networks on
//! the built-in control tasks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use pdsan::actor::{InputCoding, NeuronKind};
use pdsan::config::RunConfig;
use pdsan::harness;

#[derive(Parser)]
#[command(name = "pdsan", version, about = "Spiking actor networks trained with TD3")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy from a TOML config.
    Train(TrainArgs),
    /// Evaluate a checkpoint with deterministic rollouts.
    Eval(EvalArgs),
    /// Dump a single-neuron trace as CSV.
    NeuronTrace(NeuronTraceArgs),
    /// Run several configs over a seed list and rank the results.
    Compare(CompareArgs),
    /// Learn dynamic-neuron parameters and export the clustered center.
    LearnDn(LearnDnArgs),
    /// Dump what an input coding produces for a given state.
    EncodeDemo(EncodeDemoArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Path to the run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Validate and print the resolved config without training.
    #[arg(long)]
    dry_run: bool,
    /// Continue from `<run_dir>/resume.json`.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint file (ckpt_<step>.json).
    #[arg(long)]
    checkpoint: PathBuf,
    /// Number of evaluation episodes.
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    /// Seed for the evaluation environment stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct NeuronTraceArgs {
    /// Neuron model: lif | dn.
    #[arg(long)]
    neuron: String,
    /// Input waveform: sine | step | constant.
    #[arg(long)]
    waveform: String,
    /// Number of steps to trace.
    #[arg(long)]
    steps: usize,
    /// Waveform amplitude.
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    /// Sine period in steps.
    #[arg(long, default_value_t = 100)]
    period: usize,
    /// Disable thresholding/reset (pure membrane analysis).
    #[arg(long)]
    no_reset: bool,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Two or more config files.
    #[arg(long, num_args = 1.., required = true)]
    configs: Vec<PathBuf>,
    /// Comma-separated seed list.
    #[arg(long, default_value = "0,1,2,3,4", value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Output directory for run artifacts and the report.
    #[arg(long)]
    out: PathBuf,
    /// Parallel worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct LearnDnArgs {
    /// Training config (algo must be td3-pdsan); theta learning is forced on.
    #[arg(long)]
    config: PathBuf,
    /// Where to write the learned parameter file.
    #[arg(long)]
    out: PathBuf,
    /// Number of k-means clusters.
    #[arg(long, default_value_t = 1)]
    k: usize,
}

#[derive(Args)]
struct EncodeDemoArgs {
    /// Coding scheme: uni | poi | det | pop | pop-uni | pop-poi | pop-det.
    #[arg(long)]
    coding: String,
    /// Comma-separated state vector. Rate codings expect values in [0, 1].
    #[arg(long, value_delimiter = ',')]
    state: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    t1: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    pop_size: usize,
    /// Deterministic-coding constant.
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
}

fn load_config(path: &Path) -> anyhow::Result<RunConfig> {
    let mut raw = RunConfig::from_path(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    raw.apply_env_overrides(std::env::vars())?;
    Ok(raw)
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let raw = load_config(&args.config)?;
    let cfg = raw.validate()?;
    if args.dry_run {
        println!("resolved configuration:");
        println!("  env: {}", cfg.env.as_str());
        println!("  algo: {}", cfg.algo.as_str());
        if let Some(c) = cfg.input_coding {
            println!("  input_coding: {c}");
        }
        if let Some(n) = cfg.neuron_type {
            println!("  neuron_type: {}", n.as_str());
        }
        println!("  pop_size: {}", cfg.pop_size);
        println!("  out_pop_size: {}", cfg.out_pop_size);
        println!("  t1: {}", cfg.t1);
        println!("  actor_lr: {}", cfg.actor_lr);
        println!("  critic_lr: {}", cfg.critic_lr);
        println!("  gamma: {}", cfg.td3.gamma);
        println!("  eta: {}", cfg.td3.eta);
        println!("  sigma: {} sigma_tilde: {} clip: {}", cfg.td3.sigma, cfg.td3.sigma_tilde, cfg.td3.noise_clip);
        println!("  batch_size: {} policy_delay: {}", cfg.td3.batch_size, cfg.td3.policy_delay);
        println!("  total_steps: {} eval_every: {} warmup: {}", cfg.td3.total_steps, cfg.td3.eval_every, cfg.td3.warmup_steps);
        println!("  buffer_capacity: {}", cfg.td3.buffer_capacity);
        println!("  seed: {}", cfg.seed);
        println!("  precision: {:?}", cfg.precision);
        if let Some(d) = &cfg.run_dir {
            println!("  run_dir: {d}");
        }
        return Ok(());
    }
    let outcome = harness::run_training(&cfg, args.resume)?;
    println!(
        "finished at step {}: mean reward over last {} evals = {:.3} +/- {:.3}",
        outcome.summary.steps,
        outcome.summary.final_evals.len(),
        outcome.summary.mean,
        outcome.summary.std
    );
    if outcome.summary.stopped_early {
        println!("stopped early: eval threshold reached");
    }
    if let Some(dir) = outcome.run_dir {
        println!("artifacts in {}", dir.display());
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<()> {
    let (mean, std) = harness::evaluate_checkpoint(&args.checkpoint, args.episodes, args.seed)?;
    println!("mean_reward {mean:.6}");
    println!("std_reward {std:.6}");
    Ok(())
}

fn cmd_neuron_trace(args: NeuronTraceArgs) -> anyhow::Result<()> {
    let neuron = NeuronKind::from_str(&args.neuron)?;
    let waveform =
        harness::Waveform::parse(&args.waveform, args.amplitude, args.period, args.steps)?;
    let csv = harness::neuron_trace(neuron, waveform, args.steps, args.no_reset);
    match args.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> anyhow::Result<()> {
    if args.configs.len() < 2 {
        bail!("compare needs at least two --configs");
    }
    let report = harness::compare(&args.configs, &args.seeds, &args.out, args.workers)?;
    println!("ranking by mean final reward:");
    for e in &report.ranking {
        println!(
            "  {}: {:.3} +/- {:.3} over {} runs",
            e.config, e.mean_final_reward, e.std_final_reward, e.runs
        );
    }
    let failures: Vec<_> = report.runs.iter().filter(|r| r.error.is_some()).collect();
    if !failures.is_empty() {
        println!("{} run(s) failed:", failures.len());
        for f in failures {
            println!("  {} seed {}: {}", f.config, f.seed, f.error.as_deref().unwrap_or(""));
        }
    }
    println!("report in {}", args.out.display());
    Ok(())
}

fn cmd_learn_dn(args: LearnDnArgs) -> anyhow::Result<()> {
    let raw = load_config(&args.config)?;
    let cfg = raw.validate()?;
    let outcome = harness::learn_dn(&cfg, args.k, &args.out)?;
    println!(
        "clustered {} neuron parameter sets; center = ({:.4}, {:.4}, {:.4}, {:.4})",
        outcome.theta_set_len,
        outcome.theta[0],
        outcome.theta[1],
        outcome.theta[2],
        outcome.theta[3]
    );
    println!("final mean reward {:.3}", outcome.final_reward);
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_encode_demo(args: EncodeDemoArgs) -> anyhow::Result<()> {
    if args.state.is_empty() {
        bail!("--state needs at least one value");
    }
    let coding = InputCoding::from_str(&args.coding)?;
    let json = harness::encode_demo(coding, &args.state, args.t1, args.seed, args.pop_size, args.delta)?;
    println!("{json}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::NeuronTrace(a) => cmd_neuron_trace(a),
        Command::Compare(a) => cmd_compare(a),
        Command::LearnDn(a) => cmd_learn_dn(a),
        Command::EncodeDemo(a) => cmd_encode_demo(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
