//! Twin-delayed deep deterministic policy gradient training of the actor
//! networks: clipped double-Q targets with smoothed target actions, one
//! critic step per environment step, delayed actor and target updates, and a
//! periodic no-noise evaluation protocol.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;

use crate::actor::{ActorGrads, ForwardTrace, SpikingActor, SpikingAdam};
use crate::critic::{Critic, MlpAdam};
use crate::deep::{DeepActor, DeepAdam, DeepGrads, DeepTrace};
use crate::envs::{scale_action, Environment};
use crate::error::{Error, Result};
use crate::replay::{Batch, ReplayBuffer, Transition};
use crate::rng::{RunRngs, Stream};
use crate::scalar::Scalar;

/// TD3 hyperparameters.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct Td3Config {
    pub gamma: f64,
    pub eta: f64,
    pub sigma: f64,
    pub sigma_tilde: f64,
    pub noise_clip: f64,
    pub batch_size: usize,
    pub policy_delay: u64,
    pub total_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub warmup_steps: u64,
    pub buffer_capacity: usize,
    /// Stop once an evaluation reaches this mean reward.
    pub stop_at_eval_reward: Option<f64>,
}

impl Default for Td3Config {
    fn default() -> Self {
        Td3Config {
            gamma: 0.99,
            eta: 0.005,
            sigma: 0.1,
            sigma_tilde: 0.2,
            noise_clip: 0.5,
            batch_size: 100,
            policy_delay: 2,
            total_steps: 100_000,
            eval_every: 10_000,
            eval_episodes: 10,
            warmup_steps: 1000,
            buffer_capacity: 1_000_000,
            stop_at_eval_reward: None,
        }
    }
}

/// Element-wise convex combination `target = eta * online + (1 - eta) * target`.
pub fn soft_update_slice<T: Scalar>(target: &mut [T], online: &[T], eta: T) {
    assert_eq!(target.len(), online.len(), "soft update shape mismatch");
    let one = T::one();
    for (t, &o) in target.iter_mut().zip(online) {
        *t = eta * o + (one - eta) * *t;
    }
}

/// Policy network: spiking or deep.
#[derive(Clone, Debug)]
pub enum ActorNet<T> {
    Spiking(SpikingActor<T>),
    Deep(DeepActor<T>),
}

/// Trace produced by [`ActorNet::forward_batch`].
pub enum ActorTrace<T> {
    Spiking(ForwardTrace<T>),
    Deep(DeepTrace<T>),
}

/// Gradients produced by [`ActorNet::backward_batch`].
pub enum ActorNetGrads<T> {
    Spiking(ActorGrads<T>),
    Deep(DeepGrads<T>),
}

impl<T: Scalar> ActorNetGrads<T> {
    pub fn sq_norm(&self) -> T {
        match self {
            ActorNetGrads::Spiking(g) => g.sq_norm(),
            ActorNetGrads::Deep(g) => g.sq_norm(),
        }
    }
}

/// Optimizer state matching an [`ActorNet`].
pub enum ActorOpt<T> {
    Spiking(SpikingAdam<T>),
    Deep(DeepAdam<T>),
}

impl<T: Scalar> ActorNet<T> {
    pub fn action_dim(&self) -> usize {
        match self {
            ActorNet::Spiking(a) => a.m,
            ActorNet::Deep(a) => a.m,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            ActorNet::Spiking(a) => a.n,
            ActorNet::Deep(a) => a.n,
        }
    }

    /// Deterministic policy output for one state. The rng feeds stochastic
    /// input codings of the spiking actor; deep actors ignore it.
    pub fn act(&self, state: &[T], rng: &mut ChaCha8Rng) -> Result<Vec<T>> {
        match self {
            ActorNet::Spiking(a) => a.act(state, rng),
            ActorNet::Deep(a) => a.act(state),
        }
    }

    pub fn forward_batch(
        &self,
        states: &ArrayView2<T>,
        rng: &mut ChaCha8Rng,
        want_trace: bool,
    ) -> Result<(Array2<T>, Option<ActorTrace<T>>)> {
        match self {
            ActorNet::Spiking(a) => {
                let (out, tr) = a.forward_batch(states, rng, want_trace)?;
                Ok((out, tr.map(ActorTrace::Spiking)))
            }
            ActorNet::Deep(a) => {
                let (out, tr) = a.forward_batch(states, want_trace)?;
                Ok((out, tr.map(ActorTrace::Deep)))
            }
        }
    }

    pub fn backward_batch(
        &self,
        trace: &ActorTrace<T>,
        grad_actions: &ArrayView2<T>,
    ) -> Result<ActorNetGrads<T>> {
        match (self, trace) {
            (ActorNet::Spiking(a), ActorTrace::Spiking(t)) => {
                Ok(ActorNetGrads::Spiking(a.backward_batch(t, grad_actions)?))
            }
            (ActorNet::Deep(a), ActorTrace::Deep(t)) => {
                Ok(ActorNetGrads::Deep(a.backward_batch(t, grad_actions)?))
            }
            _ => Err(Error::InvalidArgument("trace does not match actor kind".into())),
        }
    }

    pub fn soft_update_from(&mut self, online: &Self, eta: T) {
        match (self, online) {
            (ActorNet::Spiking(t), ActorNet::Spiking(o)) => t.soft_update_from(o, eta),
            (ActorNet::Deep(t), ActorNet::Deep(o)) => t.soft_update_from(o, eta),
            _ => panic!("soft update across actor kinds"),
        }
    }
}

impl<T: Scalar> ActorOpt<T> {
    pub fn new(actor: &ActorNet<T>, lr: T) -> Self {
        match actor {
            ActorNet::Spiking(a) => ActorOpt::Spiking(SpikingAdam::new(a, lr)),
            ActorNet::Deep(a) => ActorOpt::Deep(DeepAdam::new(a, lr)),
        }
    }

    pub fn apply(&mut self, actor: &mut ActorNet<T>, grads: &ActorNetGrads<T>) -> Result<()> {
        match (self, actor, grads) {
            (ActorOpt::Spiking(o), ActorNet::Spiking(a), ActorNetGrads::Spiking(g)) => o.apply(a, g),
            (ActorOpt::Deep(o), ActorNet::Deep(a), ActorNetGrads::Deep(g)) => o.apply(a, g),
            _ => Err(Error::InvalidArgument("optimizer does not match actor kind".into())),
        }
    }

    pub fn export_moments(&self) -> (u64, Vec<Vec<T>>, Vec<Vec<T>>) {
        match self {
            ActorOpt::Spiking(o) => o.export_moments(),
            ActorOpt::Deep(o) => o.export_moments(),
        }
    }

    pub fn import_moments(&mut self, t: u64, m: &[Vec<T>], v: &[Vec<T>]) -> Result<()> {
        match self {
            ActorOpt::Spiking(o) => o.import_moments(t, m, v),
            ActorOpt::Deep(o) => o.import_moments(t, m, v),
        }
    }
}

/// Policy action plus clipped Gaussian exploration noise, in [-1, 1]^m.
pub fn select_action<T: Scalar>(
    actor: &ActorNet<T>,
    state: &[T],
    sigma: T,
    noise_rng: &mut ChaCha8Rng,
    coding_rng: &mut ChaCha8Rng,
) -> Result<Vec<T>> {
    let mut a = actor.act(state, coding_rng)?;
    let one = T::one();
    for x in a.iter_mut() {
        let eps = T::sample_normal(noise_rng) * sigma;
        *x = (*x + eps).min(one).max(-one);
    }
    Ok(a)
}

/// Clipped-double-Q targets: smoothed target-policy actions, the pairwise
/// minimum over the twin target critics, and bootstrap masking on true
/// terminals.
#[allow(clippy::too_many_arguments)]
pub fn compute_target<T: Scalar>(
    batch: &Batch<T>,
    target_actor: &ActorNet<T>,
    target_critics: &[Critic<T>; 2],
    gamma: T,
    sigma_tilde: T,
    noise_clip: T,
    noise_rng: &mut ChaCha8Rng,
    coding_rng: &mut ChaCha8Rng,
) -> Result<Array1<T>> {
    let (mut a_tilde, _) = target_actor.forward_batch(&batch.next_states.view(), coding_rng, false)?;
    let one = T::one();
    for x in a_tilde.iter_mut() {
        let eps = (T::sample_normal(noise_rng) * sigma_tilde).min(noise_clip).max(-noise_clip);
        *x = (*x + eps).min(one).max(-one);
    }
    let q1 = target_critics[0].q_values(&batch.next_states.view(), &a_tilde.view())?;
    let q2 = target_critics[1].q_values(&batch.next_states.view(), &a_tilde.view())?;
    let mut y = Array1::zeros(batch.rewards.len());
    for i in 0..y.len() {
        let qmin = q1[i].min(q2[i]);
        y[i] = batch.rewards[i] + gamma * batch.bootstrap_mask[i] * qmin;
    }
    Ok(y)
}

/// One Adam step on the mean-squared Bellman error of a single critic.
/// Returns the loss; a non-finite loss aborts the step without updating.
pub fn critic_update<T: Scalar>(
    critic: &mut Critic<T>,
    opt: &mut MlpAdam<T>,
    states: &ArrayView2<T>,
    actions: &ArrayView2<T>,
    y: &Array1<T>,
) -> Result<T> {
    let n = y.len();
    let (q, trace) = critic.q_batch(states, actions)?;
    let inv_n = T::from_f64(1.0 / n as f64);
    let mut loss = T::zero();
    let mut grad_q = Array1::zeros(n);
    let two = T::from_f64(2.0);
    for i in 0..n {
        let e = q[i] - y[i];
        loss += e * e * inv_n;
        grad_q[i] = two * e * inv_n;
    }
    if !loss.is_finite() {
        return Err(Error::NonFiniteGradient("critic loss"));
    }
    let (grads, _) = critic.backward(&trace, &grad_q.view())?;
    opt.apply(&mut critic.net, &grads)?;
    Ok(loss)
}

/// Deterministic-policy-gradient step on the actor: the first critic's
/// action gradient is fed into the actor's backward pass. Returns the global
/// L2 norm of the applied gradient.
pub fn actor_update<T: Scalar>(
    actor: &mut ActorNet<T>,
    opt: &mut ActorOpt<T>,
    critic: &Critic<T>,
    states: &ArrayView2<T>,
    coding_rng: &mut ChaCha8Rng,
) -> Result<T> {
    let n = states.nrows();
    let (actions, trace) = actor.forward_batch(states, coding_rng, true)?;
    let trace = trace.expect("trace requested");
    let (_, q_trace) = critic.q_batch(states, &actions.view())?;
    // maximizing mean Q = descending on -mean Q
    let grad_q = Array1::from_elem(n, T::from_f64(-1.0 / n as f64));
    let (_, grad_actions) = critic.backward(&q_trace, &grad_q.view())?;
    let grads = actor.backward_batch(&trace, &grad_actions.view())?;
    let norm = grads.sq_norm().sqrt();
    opt.apply(actor, &grads)?;
    Ok(norm)
}

/// One evaluation-log record; `wall_ms` is wall-clock time since training
/// started and is excluded from determinism comparisons.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub eval_mean_reward: f64,
    pub eval_std: f64,
    pub critic_loss: f64,
    pub actor_grad_norm: f64,
    pub wall_ms: u64,
}

impl LogRow {
    pub const CSV_HEADER: &'static str =
        "step,eval_mean_reward,eval_std,critic_loss,actor_grad_norm,wall_ms";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step,
            self.eval_mean_reward,
            self.eval_std,
            self.critic_loss,
            self.actor_grad_norm,
            self.wall_ms
        )
    }
}

/// The training loop driver. `train_step` advances one environment
/// interaction (plus updates); `maybe_eval` runs the evaluation protocol at
/// the configured cadence.
pub struct Trainer<T: Scalar> {
    pub cfg: Td3Config,
    pub env: Box<dyn Environment<T>>,
    pub eval_env: Box<dyn Environment<T>>,
    pub actor: ActorNet<T>,
    pub target_actor: ActorNet<T>,
    pub critics: [Critic<T>; 2],
    pub target_critics: [Critic<T>; 2],
    pub actor_opt: ActorOpt<T>,
    pub critic_opts: [MlpAdam<T>; 2],
    pub buffer: ReplayBuffer<T>,
    pub step: u64,
    cur_obs: Vec<T>,
    env_rng: ChaCha8Rng,
    eval_env_rng: ChaCha8Rng,
    warmup_rng: ChaCha8Rng,
    expl_rng: ChaCha8Rng,
    tnoise_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    coding_rollout: ChaCha8Rng,
    coding_target: ChaCha8Rng,
    coding_actor: ChaCha8Rng,
    coding_eval: ChaCha8Rng,
    critic_loss_acc: f64,
    critic_loss_count: u64,
    actor_norm_acc: f64,
    actor_norm_count: u64,
    start: Instant,
    /// Phase-timing prints every 500 steps (TRAINER_TIMING env var).
    timing: bool,
}

impl<T: Scalar> Trainer<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mut env: Box<dyn Environment<T>>,
        eval_env: Box<dyn Environment<T>>,
        actor: ActorNet<T>,
        critics: [Critic<T>; 2],
        actor_lr: T,
        critic_lr: T,
        cfg: Td3Config,
        rngs: RunRngs,
    ) -> Self {
        crate::scalar::enable_flush_to_zero();
        let n = env.spec().n;
        let m = env.spec().m;
        let mut env_rng = rngs.stream(Stream::EnvTrain);
        let cur_obs = env.reset(&mut env_rng);
        let target_actor = actor.clone();
        let target_critics = [critics[0].clone(), critics[1].clone()];
        let actor_opt = ActorOpt::new(&actor, actor_lr);
        let critic_opts = [MlpAdam::new(&critics[0].net, critic_lr), MlpAdam::new(&critics[1].net, critic_lr)];
        let buffer = ReplayBuffer::new(n, m, cfg.buffer_capacity);
        Trainer {
            cfg,
            env,
            eval_env,
            actor,
            target_actor,
            critics,
            target_critics,
            actor_opt,
            critic_opts,
            buffer,
            step: 0,
            cur_obs,
            env_rng,
            eval_env_rng: rngs.stream(Stream::EnvEval),
            warmup_rng: rngs.stream(Stream::Warmup),
            expl_rng: rngs.stream(Stream::Exploration),
            tnoise_rng: rngs.stream(Stream::TargetNoise),
            replay_rng: rngs.stream(Stream::Replay),
            coding_rollout: rngs.stream(Stream::CodingRollout),
            coding_target: rngs.stream(Stream::CodingTarget),
            coding_actor: rngs.stream(Stream::CodingActorUpdate),
            coding_eval: rngs.stream(Stream::CodingEval),
            critic_loss_acc: 0.0,
            critic_loss_count: 0,
            actor_norm_acc: 0.0,
            actor_norm_count: 0,
            start: Instant::now(),
            timing: std::env::var_os("TRAINER_TIMING").is_some(),
        }
    }

    /// Restore the step counter (checkpoint resume).
    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// One environment interaction plus the per-step updates of Algorithm
    /// TD3: critic step every step once past warmup, actor and target
    /// updates every `policy_delay` steps.
    pub fn train_step(&mut self) -> Result<()> {
        self.step += 1;
        let m = self.env.spec().m;

        let action = if self.step <= self.cfg.warmup_steps {
            (0..m).map(|_| T::sample_range(&mut self.warmup_rng, -T::one(), T::one())).collect()
        } else {
            select_action(
                &self.actor,
                &self.cur_obs,
                T::from_f64(self.cfg.sigma),
                &mut self.expl_rng,
                &mut self.coding_rollout,
            )?
        };

        let env_action = scale_action(&action, self.env.spec());
        let res = self.env.step(&env_action);
        self.buffer.push(Transition {
            s: self.cur_obs.clone(),
            a: action,
            r: res.reward,
            s_next: res.obs.clone(),
            done: res.done,
            truncated: res.truncated,
        });
        self.cur_obs = if res.done || res.truncated {
            self.env.reset(&mut self.env_rng)
        } else {
            res.obs
        };

        if self.step > self.cfg.warmup_steps && self.buffer.len() >= self.cfg.batch_size {
            self.update_networks()?;
        }
        Ok(())
    }

    fn update_networks(&mut self) -> Result<()> {
        let timing = self.timing;
        let t0 = Instant::now();
        let batch = self.buffer.sample(self.cfg.batch_size, &mut self.replay_rng);
        let y = compute_target(
            &batch,
            &self.target_actor,
            &self.target_critics,
            T::from_f64(self.cfg.gamma),
            T::from_f64(self.cfg.sigma_tilde),
            T::from_f64(self.cfg.noise_clip),
            &mut self.tnoise_rng,
            &mut self.coding_target,
        )?;
        let t1 = Instant::now();

        let mut loss_sum = 0.0;
        let mut updated = 0;
        for k in 0..2 {
            match critic_update(
                &mut self.critics[k],
                &mut self.critic_opts[k],
                &batch.states.view(),
                &batch.actions.view(),
                &y,
            ) {
                Ok(loss) => {
                    loss_sum += loss.to_f64();
                    updated += 1;
                }
                // a non-finite loss aborts this critic's step only
                Err(Error::NonFiniteGradient(_)) => {}
                Err(e) => return Err(e),
            }
        }
        if updated > 0 {
            self.critic_loss_acc += loss_sum / updated as f64;
            self.critic_loss_count += 1;
        }
        let t2 = Instant::now();

        if self.step.is_multiple_of(self.cfg.policy_delay) {
            let norm = actor_update(
                &mut self.actor,
                &mut self.actor_opt,
                &self.critics[0],
                &batch.states.view(),
                &mut self.coding_actor,
            )?;
            self.actor_norm_acc += norm.to_f64();
            self.actor_norm_count += 1;

            let eta = T::from_f64(self.cfg.eta);
            self.target_actor.soft_update_from(&self.actor, eta);
            for k in 0..2 {
                crate::critic::soft_update_mlp(&mut self.target_critics[k].net, &self.critics[k].net, eta);
            }
        }
        if timing && self.step.is_multiple_of(500) {
            eprintln!(
                "step {}: target {:.2} ms, critics {:.2} ms, actor+soft {:.2} ms",
                self.step,
                (t1 - t0).as_secs_f64() * 1e3,
                (t2 - t1).as_secs_f64() * 1e3,
                t2.elapsed().as_secs_f64() * 1e3,
            );
        }
        Ok(())
    }

    /// Average return over the evaluation episodes with no exploration
    /// noise, on the dedicated environment and random streams.
    pub fn evaluate(&mut self) -> Result<(f64, f64)> {
        let episodes = self.cfg.eval_episodes;
        let mut returns = Vec::with_capacity(episodes);
        for _ in 0..episodes {
            let mut obs = self.eval_env.reset(&mut self.eval_env_rng);
            let mut total = 0.0;
            loop {
                let a = self.actor.act(&obs, &mut self.coding_eval)?;
                let env_action = scale_action(&a, self.eval_env.spec());
                let res = self.eval_env.step(&env_action);
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

    /// Run the evaluation protocol if the step counter sits on the eval
    /// cadence; returns the produced log row.
    pub fn maybe_eval(&mut self) -> Result<Option<LogRow>> {
        if self.step == 0 || !self.step.is_multiple_of(self.cfg.eval_every) {
            return Ok(None);
        }
        let (mean, std) = self.evaluate()?;
        let critic_loss = if self.critic_loss_count > 0 {
            self.critic_loss_acc / self.critic_loss_count as f64
        } else {
            0.0
        };
        let actor_norm = if self.actor_norm_count > 0 {
            self.actor_norm_acc / self.actor_norm_count as f64
        } else {
            0.0
        };
        self.critic_loss_acc = 0.0;
        self.critic_loss_count = 0;
        self.actor_norm_acc = 0.0;
        self.actor_norm_count = 0;
        Ok(Some(LogRow {
            step: self.step,
            eval_mean_reward: mean,
            eval_std: std,
            critic_loss,
            actor_grad_norm: actor_norm,
            wall_ms: self.start.elapsed().as_millis() as u64,
        }))
    }
}
