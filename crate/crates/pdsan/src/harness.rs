//! Run lifecycle: building networks from a validated config, the training
//! loop with CSV logging and checkpoints, checkpoint evaluation, multi-run
//! comparison, neuron traces, and coding demos.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actor::{
    InputCoding, NeuronKind, SpikingActor, SpikingActorConfig,
};
use crate::checkpoint::{
    actor_from_ckpt, actor_to_ckpt, critic_from_ckpt, critic_to_ckpt, Checkpoint, OptCkpt,
    ResumeState, CHECKPOINT_VERSION,
};
use crate::config::{Algo, Precision, ResolvedConfig, RunConfig};
use crate::critic::Critic;
use crate::deep::DeepActor;
use crate::dnlearn::{cluster_thetas, collect_thetas, export_theta, load_default_theta, load_theta, ThetaSet};
use crate::encoding::{
    encode_deterministic, encode_population, encode_poisson, encode_uniform, PopulationEncoder,
};
use crate::envs::{make_env, EnvKind, Environment};
use crate::error::{Error, Result};
use crate::neurons::{DnParams, LifParams};
use crate::rng::{RunRngs, Stream};
use crate::scalar::Scalar;
use crate::td3::{ActorNet, LogRow, Trainer};

/// End-of-run summary: mean and standard deviation of the last (up to) ten
/// evaluations.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub final_evals: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub steps: u64,
    pub wall_ms: u64,
    pub stopped_early: bool,
}

impl Summary {
    fn from_rows(rows: &[LogRow], steps: u64, stopped_early: bool) -> Self {
        let tail: Vec<f64> = rows
            .iter()
            .rev()
            .take(10)
            .map(|r| r.eval_mean_reward)
            .collect();
        let n = tail.len().max(1) as f64;
        let mean = tail.iter().sum::<f64>() / n;
        let var = tail.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Summary {
            final_evals: tail.iter().rev().copied().collect(),
            mean,
            std: var.sqrt(),
            steps,
            wall_ms: rows.last().map(|r| r.wall_ms).unwrap_or(0),
            stopped_early,
        }
    }
}

/// Everything a finished run produced.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub rows: Vec<LogRow>,
    pub summary: Summary,
    pub run_dir: Option<PathBuf>,
}

/// Dynamic-neuron parameters for a run: from the configured file or the
/// bundled pretrained set.
pub fn dn_params_for<T: Scalar>(cfg: &ResolvedConfig) -> Result<DnParams<T>> {
    let mut dn: DnParams<T> = match &cfg.dn_theta_file {
        Some(path) => load_theta(Path::new(path))?,
        None => load_default_theta(),
    };
    dn.v_clamp = cfg.v_clamp.map(T::from_f64);
    Ok(dn)
}

/// Build the policy network a config asks for.
pub fn build_actor<T: Scalar>(
    cfg: &ResolvedConfig,
    env: &dyn Environment<T>,
    rng: &mut ChaCha8Rng,
) -> Result<ActorNet<T>> {
    let spec = env.spec();
    let obs_low: Vec<T> = spec.obs_low.to_vec();
    let obs_high: Vec<T> = spec.obs_high.to_vec();
    let hidden = [256usize, 256];
    match cfg.algo {
        Algo::Td3 => Ok(ActorNet::Deep(DeepActor::plain(spec.n, spec.m, &hidden, rng))),
        Algo::Td3Pop => Ok(ActorNet::Deep(DeepActor::population(
            spec.n,
            spec.m,
            &hidden,
            cfg.pop_size,
            cfg.out_pop_size,
            &obs_low,
            &obs_high,
            rng,
        ))),
        Algo::Td3PopSan | Algo::Td3Pdsan => {
            let actor_cfg = SpikingActorConfig {
                coding: cfg.input_coding.expect("validated coding"),
                neuron: cfg.neuron_type.expect("validated neuron"),
                hidden: hidden.to_vec(),
                pop_size: cfg.pop_size,
                out_pop: cfg.out_pop_size,
                t1: cfg.t1,
                surrogate_w: T::from_f64(cfg.surrogate_window),
                delta: T::from_f64(cfg.delta),
                lif: LifParams::default(),
                dn: dn_params_for(cfg)?,
                learn_theta: cfg.learn_theta,
            };
            Ok(ActorNet::Spiking(SpikingActor::new(&actor_cfg, &obs_low, &obs_high, spec.m, rng)))
        }
    }
}

/// Build a ready-to-run trainer for a validated config.
pub fn build_trainer<T: Scalar>(cfg: &ResolvedConfig) -> Result<Trainer<T>> {
    let rngs = RunRngs::new(cfg.seed);
    let mut init_rng = rngs.stream(Stream::Init);
    let env = make_env::<T>(cfg.env);
    let eval_env = make_env::<T>(cfg.env);
    let spec_n = env.spec().n;
    let spec_m = env.spec().m;
    let actor = build_actor(cfg, env.as_ref(), &mut init_rng)?;
    let critics = [Critic::new(spec_n, spec_m, &mut init_rng), Critic::new(spec_n, spec_m, &mut init_rng)];
    Ok(Trainer::new(
        env,
        eval_env,
        actor,
        critics,
        T::from_f64(cfg.actor_lr),
        T::from_f64(cfg.critic_lr),
        cfg.td3.clone(),
        rngs,
    ))
}

struct RunDirFiles {
    dir: PathBuf,
    log: fs::File,
}

fn prepare_run_dir(cfg: &ResolvedConfig, resume: bool) -> Result<Option<RunDirFiles>> {
    let Some(dir) = &cfg.run_dir else { return Ok(None) };
    let dir = PathBuf::from(dir);
    fs::create_dir_all(&dir)?;
    let config_echo = toml::to_string_pretty(&cfg.raw)
        .map_err(|e| Error::Checkpoint(format!("config echo: {e}")))?;
    fs::write(dir.join("config.toml"), config_echo)?;
    let log_path = dir.join("log.csv");
    let log = if resume && log_path.exists() {
        fs::OpenOptions::new().append(true).open(&log_path)?
    } else {
        let mut f = fs::File::create(&log_path)?;
        writeln!(f, "{}", LogRow::CSV_HEADER)?;
        f
    };
    Ok(Some(RunDirFiles { dir, log }))
}

fn resume_state_of<T: Scalar>(trainer: &Trainer<T>, cfg: &ResolvedConfig) -> ResumeState<T> {
    let (at, am, av) = trainer.actor_opt.export_moments();
    let (c0t, c0m, c0v) = trainer.critic_opts[0].export_moments();
    let (c1t, c1m, c1v) = trainer.critic_opts[1].export_moments();
    ResumeState {
        version: CHECKPOINT_VERSION,
        step: trainer.step,
        config: cfg.raw.clone(),
        actor: actor_to_ckpt(&trainer.actor),
        target_actor: actor_to_ckpt(&trainer.target_actor),
        critics: vec![critic_to_ckpt(&trainer.critics[0]), critic_to_ckpt(&trainer.critics[1])],
        target_critics: vec![
            critic_to_ckpt(&trainer.target_critics[0]),
            critic_to_ckpt(&trainer.target_critics[1]),
        ],
        actor_opt: OptCkpt { t: at, m: am, v: av },
        critic_opts: vec![
            OptCkpt { t: c0t, m: c0m, v: c0v },
            OptCkpt { t: c1t, m: c1m, v: c1v },
        ],
    }
}

fn restore_trainer<T: Scalar>(trainer: &mut Trainer<T>, state: &ResumeState<T>) -> Result<()> {
    trainer.actor = actor_from_ckpt(&state.actor)?;
    trainer.target_actor = actor_from_ckpt(&state.target_actor)?;
    trainer.critics = [critic_from_ckpt(&state.critics[0])?, critic_from_ckpt(&state.critics[1])?];
    trainer.target_critics = [
        critic_from_ckpt(&state.target_critics[0])?,
        critic_from_ckpt(&state.target_critics[1])?,
    ];
    trainer.actor_opt.import_moments(state.actor_opt.t, &state.actor_opt.m, &state.actor_opt.v)?;
    for k in 0..2 {
        trainer.critic_opts[k].import_moments(
            state.critic_opts[k].t,
            &state.critic_opts[k].m,
            &state.critic_opts[k].v,
        )?;
    }
    trainer.set_step(state.step);
    Ok(())
}

/// Run training to completion (or early stop), returning both the outcome
/// and the trainer. Writes the run directory artifacts when configured.
pub fn run_training_with<T: Scalar>(
    cfg: &ResolvedConfig,
    resume: bool,
) -> Result<(RunOutcome, Trainer<T>)> {
    let mut trainer: Trainer<T> = build_trainer(cfg)?;
    let mut files = prepare_run_dir(cfg, resume)?;

    if resume {
        let Some(f) = &files else {
            return Err(Error::config("run_dir", "resume requires a run directory"));
        };
        let path = f.dir.join("resume.json");
        if path.exists() {
            let state: ResumeState<T> = ResumeState::load(&path)?;
            restore_trainer(&mut trainer, &state)?;
        }
    }

    let mut rows: Vec<LogRow> = Vec::new();
    let mut stopped_early = false;
    let result: Result<()> = (|| {
        while trainer.step < cfg.td3.total_steps {
            trainer.train_step()?;
            if let Some(row) = trainer.maybe_eval()? {
                if let Some(f) = files.as_mut() {
                    writeln!(f.log, "{}", row.to_csv())?;
                    f.log.flush()?;
                    Checkpoint::new(trainer.step, cfg.raw.clone(), &trainer.actor)
                        .save(&f.dir.join(format!("ckpt_{}.json", trainer.step)))?;
                    resume_state_of(&trainer, cfg).save(&f.dir.join("resume.json"))?;
                }
                let hit = cfg
                    .td3
                    .stop_at_eval_reward
                    .map(|th| row.eval_mean_reward >= th)
                    .unwrap_or(false);
                rows.push(row);
                if hit {
                    stopped_early = true;
                    break;
                }
            }
        }
        Ok(())
    })();

    // flush state even when the loop failed partway
    if let (Err(_), Some(f)) = (&result, files.as_ref()) {
        let _ = resume_state_of(&trainer, cfg).save(&f.dir.join("resume.json"));
    }
    result?;

    let summary = Summary::from_rows(&rows, trainer.step, stopped_early);
    if let Some(f) = &files {
        fs::write(f.dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    }
    Ok((
        RunOutcome { rows, summary, run_dir: files.map(|f| f.dir) },
        trainer,
    ))
}

/// Precision-dispatching front end of [`run_training_with`].
pub fn run_training(cfg: &ResolvedConfig, resume: bool) -> Result<RunOutcome> {
    match cfg.precision {
        Precision::F32 => run_training_with::<f32>(cfg, resume).map(|(o, _)| o),
        Precision::F64 => run_training_with::<f64>(cfg, resume).map(|(o, _)| o),
    }
}

/// Deterministic rollouts of a checkpointed actor; returns (mean, std) over
/// the episodes.
pub fn evaluate_checkpoint(path: &Path, episodes: usize, seed: u64) -> Result<(f64, f64)> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be >= 1".into()));
    }
    // precision comes from the checkpoint's config echo
    let text = fs::read_to_string(path)?;
    let probe: serde_json::Value = serde_json::from_str(&text)?;
    let precision = probe
        .get("config")
        .and_then(|c| c.get("precision"))
        .and_then(|p| p.as_str())
        .unwrap_or("f32")
        .to_string();
    match precision.as_str() {
        "f64" => evaluate_checkpoint_t::<f64>(&text, episodes, seed),
        _ => evaluate_checkpoint_t::<f32>(&text, episodes, seed),
    }
}

fn evaluate_checkpoint_t<T: Scalar>(text: &str, episodes: usize, seed: u64) -> Result<(f64, f64)> {
    let ckpt: Checkpoint<T> = serde_json::from_str(text)?;
    let actor = ckpt.restore_actor()?;
    let env_name = ckpt
        .config
        .env
        .as_deref()
        .ok_or_else(|| Error::Checkpoint("checkpoint config lacks env".into()))?;
    let mut env = make_env::<T>(EnvKind::from_str(env_name)?);
    if env.spec().n != actor.state_dim() || env.spec().m != actor.action_dim() {
        return Err(Error::Checkpoint(format!(
            "checkpoint actor is {}x{} but env `{}` needs {}x{}",
            actor.state_dim(),
            actor.action_dim(),
            env_name,
            env.spec().n,
            env.spec().m
        )));
    }
    let rngs = RunRngs::new(seed);
    let mut env_rng = rngs.stream(Stream::EnvEval);
    let mut coding_rng = rngs.stream(Stream::CodingEval);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset(&mut env_rng);
        let mut total = 0.0;
        loop {
            let a = actor.act(&obs, &mut coding_rng)?;
            let scaled = crate::envs::scale_action(&a, env.spec());
            let res = env.step(&scaled);
            total += res.reward.to_f64();
            if res.done || res.truncated {
                break;
            }
            obs = res.obs;
        }
        returns.push(total);
    }
    let mean = returns.iter().sum::<f64>() / episodes as f64;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / episodes as f64;
    Ok((mean, var.sqrt()))
}

/// Input waveforms for the neuron trace tool.
#[derive(Clone, Copy, Debug)]
pub enum Waveform {
    Sine { amplitude: f64, period: usize },
    Step { amplitude: f64, at: usize },
    Constant { amplitude: f64 },
}

impl Waveform {
    pub fn parse(name: &str, amplitude: f64, period: usize, steps: usize) -> Result<Self> {
        match name {
            "sine" => Ok(Waveform::Sine { amplitude, period }),
            "step" => Ok(Waveform::Step { amplitude, at: steps / 2 }),
            "constant" => Ok(Waveform::Constant { amplitude }),
            other => Err(Error::InvalidArgument(format!("unknown waveform `{other}`"))),
        }
    }

    fn at(&self, t: usize) -> f64 {
        match *self {
            Waveform::Sine { amplitude, period } => {
                amplitude * (2.0 * std::f64::consts::PI * t as f64 / period as f64).sin()
            }
            Waveform::Step { amplitude, at } => {
                if t >= at {
                    amplitude
                } else {
                    0.0
                }
            }
            Waveform::Constant { amplitude } => amplitude,
        }
    }
}

/// Single-neuron trace CSV: per step the drive, membrane state, spike and
/// the analytically computed fixed points of the membrane map for the
/// instantaneous current (and recovery variable). `no_reset` disables
/// thresholding for pure convergence analysis.
pub fn neuron_trace(
    neuron: NeuronKind,
    waveform: Waveform,
    steps: usize,
    no_reset: bool,
) -> String {
    let mut out = String::from("t,input,v,u,spike,eq_stable,eq_unstable\n");
    let dn = load_default_theta::<f64>();
    let lif = LifParams::<f64>::default();
    let (mut c, mut v, mut u, mut o) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for t in 0..steps {
        let input = waveform.at(t);
        match neuron {
            NeuronKind::Lif => {
                c = lif.d_c * c + input;
                let gate = if no_reset { 0.0 } else { o };
                v = lif.v_f * v * (1.0 - gate) + c;
                o = if !no_reset && v > lif.v_th { 1.0 } else { 0.0 };
                // fixed point of v <- v_f v + c at the current c
                let eq = c / (1.0 - lif.v_f);
                out.push_str(&format!("{t},{input},{v},0,{o},{eq},\n"));
            }
            NeuronKind::Dn => {
                let th = dn.theta;
                c = dn.d_c * c + input;
                let gate = if no_reset { 0.0 } else { o };
                let v_r = v * (1.0 - gate) + gate * th.c;
                let u_r = u + gate * th.d;
                let v_delta = v_r * v_r - v_r - u_r + c;
                let u_delta = th.a * (th.b * v_r - u_r);
                v = v_r + v_delta;
                u = u_r + u_delta;
                o = if !no_reset && v > dn.v_th { 1.0 } else { 0.0 };
                // fixed points solve x^2 - x + (c - u) = 0
                let disc = 1.0 - 4.0 * (c - u);
                let (stable, unstable) = if disc >= 0.0 {
                    let r = disc.sqrt();
                    (format!("{}", (1.0 - r) / 2.0), format!("{}", (1.0 + r) / 2.0))
                } else {
                    (String::new(), String::new())
                };
                out.push_str(&format!("{t},{input},{v},{u},{o},{stable},{unstable}\n"));
            }
        }
    }
    out
}

/// JSON dump of what a coding scheme produces for one state.
pub fn encode_demo(
    coding: InputCoding,
    state: &[f64],
    t1: usize,
    seed: u64,
    pop_size: usize,
    delta: f64,
) -> Result<String> {
    let mut rng = RunRngs::new(seed).stream(Stream::CodingRollout);
    let mut result = serde_json::Map::new();
    result.insert("coding".into(), coding.as_str().into());
    result.insert("state".into(), serde_json::to_value(state)?);
    result.insert("t1".into(), t1.into());

    let train_to_json = |tr: &crate::encoding::SpikeTrain<f64>| -> serde_json::Value {
        let rows: Vec<Vec<f64>> = tr.bits.rows().into_iter().map(|r| r.to_vec()).collect();
        serde_json::to_value(rows).expect("train serializes")
    };

    if coding.uses_population() {
        // receptive fields tiled over the unit interval by convention
        let low = vec![0.0; state.len()];
        let high = vec![1.0; state.len()];
        let enc = PopulationEncoder::<f64>::init(&low, &high, pop_size);
        let stim = encode_population(state, &enc)?;
        let rows: Vec<Vec<f64>> = stim.rows().into_iter().map(|r| r.to_vec()).collect();
        result.insert("stimulation".into(), serde_json::to_value(rows)?);
        if let Some(variant) = coding.rate_variant() {
            let train = crate::encoding::encode_population_rate(&stim.view(), variant, t1, &mut rng, delta)?;
            result.insert("spike_train".into(), train_to_json(&train));
        }
    } else {
        let train = match coding {
            InputCoding::Uni => encode_uniform(state, t1, &mut rng)?,
            InputCoding::Poi => encode_poisson(state, t1, &mut rng)?,
            InputCoding::Det => encode_deterministic(state, t1, delta)?,
            _ => unreachable!(),
        };
        result.insert("spike_train".into(), train_to_json(&train));
    }
    Ok(serde_json::to_string_pretty(&serde_json::Value::Object(result))?)
}

/// One run of a comparison study.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareRun {
    pub config: String,
    pub seed: u64,
    pub final_reward: f64,
    pub steps: u64,
    pub wall_ms: u64,
    pub error: Option<String>,
    pub run_dir: String,
}

/// Per-config aggregate of a comparison study.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareEntry {
    pub config: String,
    pub mean_final_reward: f64,
    pub std_final_reward: f64,
    pub runs: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareReport {
    pub runs: Vec<CompareRun>,
    /// Ranked best-first by mean final reward.
    pub ranking: Vec<CompareEntry>,
}

/// Run every (config, seed) pair on a small worker pool, then aggregate and
/// rank by mean final reward. Failures are recorded per run; the rest
/// continue.
pub fn compare(
    config_paths: &[PathBuf],
    seeds: &[u64],
    out_dir: &Path,
    workers: usize,
) -> Result<CompareReport> {
    if config_paths.len() < 2 {
        return Err(Error::InvalidArgument("compare needs at least two configs".into()));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("compare needs at least one seed".into()));
    }
    fs::create_dir_all(out_dir)?;

    struct Job {
        name: String,
        cfg: ResolvedConfig,
        seed: u64,
        run_dir: PathBuf,
    }

    let mut jobs = Vec::new();
    for path in config_paths {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| path.display().to_string());
        let mut raw = RunConfig::from_path(path)?;
        raw.apply_env_overrides(std::env::vars())?;
        for &seed in seeds {
            let mut c = raw.clone();
            c.seed = seed;
            let run_dir = out_dir.join(&name).join(format!("seed{seed}"));
            c.run_dir = Some(run_dir.to_string_lossy().to_string());
            let cfg = c.validate()?;
            jobs.push(Job { name: name.clone(), cfg, seed, run_dir });
        }
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<CompareRun>> = Mutex::new(Vec::new());
    let n_workers = workers.max(1).min(jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..n_workers {
            scope.spawn(|| loop {
                crate::scalar::enable_flush_to_zero();
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let job = &jobs[i];
                let run = match run_training(&job.cfg, false) {
                    Ok(outcome) => CompareRun {
                        config: job.name.clone(),
                        seed: job.seed,
                        final_reward: outcome.summary.mean,
                        steps: outcome.summary.steps,
                        wall_ms: outcome.summary.wall_ms,
                        error: None,
                        run_dir: job.run_dir.display().to_string(),
                    },
                    Err(e) => CompareRun {
                        config: job.name.clone(),
                        seed: job.seed,
                        final_reward: f64::NEG_INFINITY,
                        steps: 0,
                        wall_ms: 0,
                        error: Some(e.to_string()),
                        run_dir: job.run_dir.display().to_string(),
                    },
                };
                results.lock().expect("results lock").push(run);
            });
        }
    });

    let mut runs = results.into_inner().expect("results lock");
    runs.sort_by(|a, b| a.config.cmp(&b.config).then(a.seed.cmp(&b.seed)));

    let mut ranking: Vec<CompareEntry> = Vec::new();
    for path in config_paths {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| path.display().to_string());
        let ok: Vec<&CompareRun> =
            runs.iter().filter(|r| r.config == name && r.error.is_none()).collect();
        if ok.is_empty() {
            continue;
        }
        let n = ok.len() as f64;
        let mean = ok.iter().map(|r| r.final_reward).sum::<f64>() / n;
        let var = ok.iter().map(|r| (r.final_reward - mean).powi(2)).sum::<f64>() / n;
        ranking.push(CompareEntry {
            config: name,
            mean_final_reward: mean,
            std_final_reward: var.sqrt(),
            runs: ok.len(),
        });
    }
    ranking.sort_by(|a, b| b.mean_final_reward.partial_cmp(&a.mean_final_reward).unwrap());

    let mut csv = String::from("config,seed,final_reward,steps,wall_ms,status\n");
    for r in &runs {
        let status = r.error.as_deref().unwrap_or("ok");
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.config, r.seed, r.final_reward, r.steps, r.wall_ms, status
        ));
    }
    fs::write(out_dir.join("compare.csv"), csv)?;

    let mut rank_csv = String::from("config,mean_final_reward,std_final_reward,runs\n");
    for e in &ranking {
        rank_csv.push_str(&format!(
            "{},{},{},{}\n",
            e.config, e.mean_final_reward, e.std_final_reward, e.runs
        ));
    }
    fs::write(out_dir.join("ranking.csv"), rank_csv)?;

    let report = CompareReport { runs, ranking };
    fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Outcome of the dynamic-neuron pre-learning pipeline.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LearnDnOutcome {
    pub theta: [f64; 4],
    pub theta_set_len: usize,
    pub final_reward: f64,
}

/// Train an actor with per-neuron learnable theta, cluster the learned
/// quadruples (k-means), and export the center as a parameter file.
pub fn learn_dn(cfg: &ResolvedConfig, k: usize, out_path: &Path) -> Result<LearnDnOutcome> {
    if !matches!(cfg.algo, Algo::Td3Pdsan) {
        return Err(Error::config("algo", "learn-dn requires td3-pdsan"));
    }
    let mut cfg = cfg.clone();
    cfg.learn_theta = true;
    cfg.raw.learn_theta = true;

    fn inner<T: Scalar>(
        cfg: &ResolvedConfig,
        k: usize,
        out_path: &Path,
    ) -> Result<LearnDnOutcome> {
        let (outcome, trainer) = run_training_with::<T>(cfg, false)?;
        let actor = match &trainer.actor {
            ActorNet::Spiking(a) => a,
            _ => unreachable!("learn-dn builds a spiking actor"),
        };
        let set: ThetaSet =
            collect_thetas(actor, cfg.env.as_str(), cfg.seed, trainer.step);
        let mut cluster_rng = RunRngs::new(cfg.seed).stream(Stream::Cluster);
        let theta = cluster_thetas(&set, k, &mut cluster_rng)?;
        export_theta(&theta, cfg.env.as_str(), cfg.seed, out_path)?;
        if let Some(dir) = &outcome.run_dir {
            fs::write(dir.join("theta_set.json"), serde_json::to_string_pretty(&set)?)?;
        }
        Ok(LearnDnOutcome {
            theta,
            theta_set_len: set.entries.len(),
            final_reward: outcome.summary.mean,
        })
    }

    match cfg.precision {
        Precision::F32 => inner::<f32>(&cfg, k, out_path),
        Precision::F64 => inner::<f64>(&cfg, k, out_path),
    }
}

/// Forward a batch of states through a checkpointed actor (testing hook for
/// bit-exact round-trips).
pub fn actions_for_states<T: Scalar>(
    actor: &ActorNet<T>,
    states: &Array2<T>,
    seed: u64,
) -> Result<Array2<T>> {
    let mut rng = RunRngs::new(seed).stream(Stream::CodingEval);
    let (actions, _) = actor.forward_batch(&states.view(), &mut rng, false)?;
    Ok(actions)
}
