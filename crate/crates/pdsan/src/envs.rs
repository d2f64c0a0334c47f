//! Built-in continuous-control environments with a uniform stepping
//! interface: pendulum swing-up and a 2D point mass.

use ndarray::Array1;
use rand_chacha::ChaCha8Rng;

use crate::encoding::normalize_bounds;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Static description of an environment's spaces and episode cap.
#[derive(Clone, Debug)]
pub struct EnvSpec<T> {
    pub n: usize,
    pub m: usize,
    pub action_low: Array1<T>,
    pub action_high: Array1<T>,
    pub obs_low: Array1<T>,
    pub obs_high: Array1<T>,
    pub max_episode_steps: usize,
}

/// Result of one environment step. `done` marks a true terminal state;
/// `truncated` marks the episode-length cap. One cause never sets both.
#[derive(Clone, Debug)]
pub struct StepResult<T> {
    pub obs: Vec<T>,
    pub reward: T,
    pub done: bool,
    pub truncated: bool,
}

pub trait Environment<T: Scalar>: Send {
    fn spec(&self) -> &EnvSpec<T>;
    /// Start a new episode; returns the initial observation.
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<T>;
    /// Advance one step with an action in environment units (clipped to the
    /// declared bounds internally).
    fn step(&mut self, action: &[T]) -> StepResult<T>;
}

/// Affine map of an observation onto [0,1]^n using the declared bounds.
pub fn normalize_obs<T: Scalar>(s: &[T], spec: &EnvSpec<T>) -> Vec<T> {
    normalize_bounds(s, spec.obs_low.as_slice().unwrap(), spec.obs_high.as_slice().unwrap())
}

/// Map a normalized action in [-1,1]^m to environment units.
pub fn scale_action<T: Scalar>(a: &[T], spec: &EnvSpec<T>) -> Vec<T> {
    let half = T::from_f64(0.5);
    a.iter()
        .enumerate()
        .map(|(j, &x)| {
            let lo = spec.action_low[j];
            let hi = spec.action_high[j];
            lo + (x + T::one()) * half * (hi - lo)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvKind {
    Pendulum,
    Pointmass,
}

impl EnvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::Pendulum => "pendulum",
            EnvKind::Pointmass => "pointmass",
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(EnvKind::Pendulum),
            "pointmass" => Ok(EnvKind::Pointmass),
            other => Err(Error::config("env", format!("unknown environment `{other}`"))),
        }
    }
}

pub fn make_env<T: Scalar>(kind: EnvKind) -> Box<dyn Environment<T>> {
    match kind {
        EnvKind::Pendulum => Box::new(Pendulum::new()),
        EnvKind::Pointmass => Box::new(Pointmass::new()),
    }
}

/// Torque-limited pendulum swing-up. Dynamics
/// `theta_dd = (3 g / 2 l) sin(theta) + (3 / m l^2) u` integrated at
/// dt = 0.05 with the angular velocity clipped to [-8, 8]; observation
/// (cos theta, sin theta, theta_dot); reward
/// `-(wrap(theta)^2 + 0.1 theta_dot^2 + 0.001 u^2)` evaluated at the state
/// the action was applied in. Never terminates; truncates at 1000 steps.
pub struct Pendulum<T> {
    spec: EnvSpec<T>,
    theta: f64,
    theta_dot: f64,
    steps: usize,
}

const PENDULUM_G: f64 = 10.0;
const PENDULUM_M: f64 = 1.0;
const PENDULUM_L: f64 = 1.0;
const PENDULUM_DT: f64 = 0.05;
const PENDULUM_MAX_SPEED: f64 = 8.0;
const PENDULUM_MAX_TORQUE: f64 = 2.0;

fn wrap_angle(x: f64) -> f64 {
    (x + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI
}

impl<T: Scalar> Pendulum<T> {
    pub fn new() -> Self {
        let spec = EnvSpec {
            n: 3,
            m: 1,
            action_low: Array1::from_vec(vec![T::from_f64(-PENDULUM_MAX_TORQUE)]),
            action_high: Array1::from_vec(vec![T::from_f64(PENDULUM_MAX_TORQUE)]),
            obs_low: Array1::from_vec(vec![
                T::from_f64(-1.0),
                T::from_f64(-1.0),
                T::from_f64(-PENDULUM_MAX_SPEED),
            ]),
            obs_high: Array1::from_vec(vec![
                T::from_f64(1.0),
                T::from_f64(1.0),
                T::from_f64(PENDULUM_MAX_SPEED),
            ]),
            max_episode_steps: 1000,
        };
        Pendulum { spec, theta: 0.0, theta_dot: 0.0, steps: 0 }
    }

    /// Place the pendulum at a specific state (analysis and tests).
    pub fn set_state(&mut self, theta: f64, theta_dot: f64) {
        self.theta = theta;
        self.theta_dot = theta_dot;
    }

    fn obs(&self) -> Vec<T> {
        vec![
            T::from_f64(self.theta.cos()),
            T::from_f64(self.theta.sin()),
            T::from_f64(self.theta_dot),
        ]
    }
}

impl<T: Scalar> Default for Pendulum<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Environment<T> for Pendulum<T> {
    fn spec(&self) -> &EnvSpec<T> {
        &self.spec
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<T> {
        self.theta = f64::sample_range(rng, -std::f64::consts::PI, std::f64::consts::PI);
        self.theta_dot = f64::sample_range(rng, -1.0, 1.0);
        self.steps = 0;
        self.obs()
    }

    fn step(&mut self, action: &[T]) -> StepResult<T> {
        let u = action[0].to_f64().clamp(-PENDULUM_MAX_TORQUE, PENDULUM_MAX_TORQUE);
        let th = wrap_angle(self.theta);
        let cost = th * th + 0.1 * self.theta_dot * self.theta_dot + 0.001 * u * u;

        let acc = 3.0 * PENDULUM_G / (2.0 * PENDULUM_L) * self.theta.sin()
            + 3.0 / (PENDULUM_M * PENDULUM_L * PENDULUM_L) * u;
        self.theta_dot = (self.theta_dot + acc * PENDULUM_DT)
            .clamp(-PENDULUM_MAX_SPEED, PENDULUM_MAX_SPEED);
        self.theta += self.theta_dot * PENDULUM_DT;
        self.steps += 1;

        StepResult {
            obs: self.obs(),
            reward: T::from_f64(-cost),
            done: false,
            truncated: self.steps >= self.spec.max_episode_steps,
        }
    }
}

/// Double-integrator point mass on the plane. Forces in [-1,1]^2 accelerate
/// the mass toward a goal at the origin; position updates with the current
/// velocity before the velocity absorbs the action. Velocity is clipped to
/// [-1,1]^2 and position to the [-2,2]^2 box. Reward
/// `-(|pos - goal|^2 + 0.01 |a|^2)`; done within 0.05 of the goal.
pub struct Pointmass<T> {
    spec: EnvSpec<T>,
    pos: [f64; 2],
    vel: [f64; 2],
    steps: usize,
}

const POINTMASS_DT: f64 = 0.05;
const POINTMASS_GOAL_RADIUS: f64 = 0.05;
const POINTMASS_BOX: f64 = 2.0;

impl<T: Scalar> Pointmass<T> {
    pub fn new() -> Self {
        let f = T::from_f64;
        let spec = EnvSpec {
            n: 4,
            m: 2,
            action_low: Array1::from_vec(vec![f(-1.0), f(-1.0)]),
            action_high: Array1::from_vec(vec![f(1.0), f(1.0)]),
            obs_low: Array1::from_vec(vec![f(-POINTMASS_BOX), f(-POINTMASS_BOX), f(-1.0), f(-1.0)]),
            obs_high: Array1::from_vec(vec![f(POINTMASS_BOX), f(POINTMASS_BOX), f(1.0), f(1.0)]),
            max_episode_steps: 1000,
        };
        Pointmass { spec, pos: [0.0; 2], vel: [0.0; 2], steps: 0 }
    }

    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2]) {
        self.pos = pos;
        self.vel = vel;
    }

    fn obs(&self) -> Vec<T> {
        vec![
            T::from_f64(self.pos[0]),
            T::from_f64(self.pos[1]),
            T::from_f64(self.vel[0]),
            T::from_f64(self.vel[1]),
        ]
    }
}

impl<T: Scalar> Default for Pointmass<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Environment<T> for Pointmass<T> {
    fn spec(&self) -> &EnvSpec<T> {
        &self.spec
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<T> {
        self.pos = [f64::sample_range(rng, -1.0, 1.0), f64::sample_range(rng, -1.0, 1.0)];
        self.vel = [0.0; 2];
        self.steps = 0;
        self.obs()
    }

    fn step(&mut self, action: &[T]) -> StepResult<T> {
        let a = [
            action[0].to_f64().clamp(-1.0, 1.0),
            action[1].to_f64().clamp(-1.0, 1.0),
        ];
        for k in 0..2 {
            self.pos[k] = (self.pos[k] + self.vel[k] * POINTMASS_DT)
                .clamp(-POINTMASS_BOX, POINTMASS_BOX);
        }
        for k in 0..2 {
            self.vel[k] = (self.vel[k] + a[k] * POINTMASS_DT).clamp(-1.0, 1.0);
        }
        self.steps += 1;

        let dist_sq = self.pos[0] * self.pos[0] + self.pos[1] * self.pos[1];
        let reward = -(dist_sq + 0.01 * (a[0] * a[0] + a[1] * a[1]));
        let done = dist_sq.sqrt() <= POINTMASS_GOAL_RADIUS;

        StepResult {
            obs: self.obs(),
            reward: T::from_f64(reward),
            done,
            truncated: !done && self.steps >= self.spec.max_episode_steps,
        }
    }
}
