//! Run configuration: TOML file, `PDSAN_*` environment overrides, and
//! validation into a typed form.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::actor::{InputCoding, NeuronKind};
use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::td3::Td3Config;

/// Which algorithm family a run trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algo {
    /// Plain deep actor.
    Td3,
    /// Deep actor behind a population encoder/decoder.
    Td3Pop,
    /// Spiking actor with LIF neurons.
    Td3PopSan,
    /// Spiking actor with dynamic neurons.
    Td3Pdsan,
}

impl Algo {
    pub const ALL: [Algo; 4] = [Algo::Td3, Algo::Td3Pop, Algo::Td3PopSan, Algo::Td3Pdsan];

    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Td3 => "td3",
            Algo::Td3Pop => "td3-pop",
            Algo::Td3PopSan => "td3-popsan",
            Algo::Td3Pdsan => "td3-pdsan",
        }
    }

    pub fn is_spiking(self) -> bool {
        matches!(self, Algo::Td3PopSan | Algo::Td3Pdsan)
    }
}

impl FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .iter()
            .copied()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::config("algo", format!("unknown algo `{s}`")))
    }
}

/// Numeric precision of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

/// Raw run configuration as read from disk. `env` and `algo` are required;
/// everything else has defaults.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: Option<String>,
    pub algo: Option<String>,
    pub input_coding: Option<String>,
    pub neuron_type: Option<String>,
    #[serde(default = "d_pop_size")]
    pub pop_size: usize,
    #[serde(default = "d_pop_size")]
    pub out_pop_size: usize,
    #[serde(default = "d_t1")]
    pub t1: usize,
    /// Defaults to 1e-4 for spiking actors and 1e-3 for deep actors.
    pub actor_lr: Option<f64>,
    #[serde(default = "d_critic_lr")]
    pub critic_lr: f64,
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_eta")]
    pub eta: f64,
    #[serde(default = "d_sigma")]
    pub sigma: f64,
    #[serde(default = "d_sigma_tilde")]
    pub sigma_tilde: f64,
    #[serde(default = "d_noise_clip")]
    pub noise_clip: f64,
    #[serde(default = "d_batch_size")]
    pub batch_size: usize,
    #[serde(default = "d_policy_delay")]
    pub policy_delay: u64,
    #[serde(default = "d_total_steps")]
    pub total_steps: u64,
    #[serde(default = "d_eval_every")]
    pub eval_every: u64,
    #[serde(default = "d_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "d_warmup_steps")]
    pub warmup_steps: u64,
    #[serde(default = "d_buffer_capacity")]
    pub buffer_capacity: usize,
    #[serde(default)]
    pub seed: u64,
    pub run_dir: Option<String>,
    #[serde(default = "d_precision")]
    pub precision: String,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_surrogate_window")]
    pub surrogate_window: f64,
    /// Symmetric clamp on dynamic-neuron membrane potentials during
    /// training; 0 disables it.
    #[serde(default = "d_v_clamp")]
    pub v_clamp: f64,
    /// Dynamic-neuron parameter file; the built-in pretrained set when
    /// absent.
    pub dn_theta_file: Option<String>,
    /// Learn per-neuron dynamic parameters (dn pre-learning runs).
    #[serde(default)]
    pub learn_theta: bool,
    pub stop_at_eval_reward: Option<f64>,
}

fn d_pop_size() -> usize {
    10
}
fn d_t1() -> usize {
    5
}
fn d_critic_lr() -> f64 {
    1e-3
}
fn d_gamma() -> f64 {
    0.99
}
fn d_eta() -> f64 {
    0.005
}
fn d_sigma() -> f64 {
    0.1
}
fn d_sigma_tilde() -> f64 {
    0.2
}
fn d_noise_clip() -> f64 {
    0.5
}
fn d_batch_size() -> usize {
    100
}
fn d_policy_delay() -> u64 {
    2
}
fn d_total_steps() -> u64 {
    100_000
}
fn d_eval_every() -> u64 {
    10_000
}
fn d_eval_episodes() -> usize {
    10
}
fn d_warmup_steps() -> u64 {
    1000
}
fn d_buffer_capacity() -> usize {
    1_000_000
}
fn d_precision() -> String {
    "f32".to_string()
}
fn d_delta() -> f64 {
    1e-3
}
fn d_surrogate_window() -> f64 {
    0.5
}
fn d_v_clamp() -> f64 {
    10.0
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config parses")
    }
}

/// Validated, typed configuration.
#[derive(Clone, Debug)]
pub struct ResolvedConfig {
    pub env: EnvKind,
    pub algo: Algo,
    pub input_coding: Option<InputCoding>,
    pub neuron_type: Option<NeuronKind>,
    pub pop_size: usize,
    pub out_pop_size: usize,
    pub t1: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub td3: Td3Config,
    pub seed: u64,
    pub run_dir: Option<String>,
    pub precision: Precision,
    pub delta: f64,
    pub surrogate_window: f64,
    pub v_clamp: Option<f64>,
    pub dn_theta_file: Option<String>,
    pub learn_theta: bool,
    /// The raw config the resolved form was built from (config echo).
    pub raw: RunConfig,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Apply `PDSAN_<KEY>` environment overrides from an iterator of
    /// (key, value) pairs (usually `std::env::vars`).
    pub fn apply_env_overrides<I>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        for (key, value) in vars {
            let Some(name) = key.strip_prefix("PDSAN_") else { continue };
            let field = name.to_lowercase();
            self.set_field(&field, &value)?;
        }
        Ok(())
    }

    fn set_field(&mut self, field: &str, value: &str) -> Result<()> {
        fn parse<V: FromStr>(field: &str, value: &str) -> Result<V> {
            value.parse::<V>().map_err(|_| {
                Error::config(field, format!("cannot parse `{value}`"))
            })
        }
        match field {
            "env" => self.env = Some(value.to_string()),
            "algo" => self.algo = Some(value.to_string()),
            "input_coding" => self.input_coding = Some(value.to_string()),
            "neuron_type" => self.neuron_type = Some(value.to_string()),
            "pop_size" => self.pop_size = parse(field, value)?,
            "out_pop_size" => self.out_pop_size = parse(field, value)?,
            "t1" => self.t1 = parse(field, value)?,
            "actor_lr" => self.actor_lr = Some(parse(field, value)?),
            "critic_lr" => self.critic_lr = parse(field, value)?,
            "gamma" => self.gamma = parse(field, value)?,
            "eta" => self.eta = parse(field, value)?,
            "sigma" => self.sigma = parse(field, value)?,
            "sigma_tilde" => self.sigma_tilde = parse(field, value)?,
            "noise_clip" => self.noise_clip = parse(field, value)?,
            "batch_size" => self.batch_size = parse(field, value)?,
            "policy_delay" => self.policy_delay = parse(field, value)?,
            "total_steps" => self.total_steps = parse(field, value)?,
            "eval_every" => self.eval_every = parse(field, value)?,
            "eval_episodes" => self.eval_episodes = parse(field, value)?,
            "warmup_steps" => self.warmup_steps = parse(field, value)?,
            "buffer_capacity" => self.buffer_capacity = parse(field, value)?,
            "seed" => self.seed = parse(field, value)?,
            "run_dir" => self.run_dir = Some(value.to_string()),
            "precision" => self.precision = value.to_string(),
            "delta" => self.delta = parse(field, value)?,
            "surrogate_window" => self.surrogate_window = parse(field, value)?,
            "v_clamp" => self.v_clamp = parse(field, value)?,
            "dn_theta_file" => self.dn_theta_file = Some(value.to_string()),
            "learn_theta" => self.learn_theta = parse(field, value)?,
            "stop_at_eval_reward" => self.stop_at_eval_reward = Some(parse(field, value)?),
            other => return Err(Error::config(other, "unknown override key")),
        }
        Ok(())
    }

    /// Validate fields and resolve algorithm-dependent defaults.
    pub fn validate(&self) -> Result<ResolvedConfig> {
        let env_name = self
            .env
            .as_deref()
            .ok_or_else(|| Error::config("env", "missing (expected `pendulum` or `pointmass`)"))?;
        let env = EnvKind::from_str(env_name)?;
        let algo_name = self.algo.as_deref().ok_or_else(|| {
            Error::config("algo", "missing (expected td3 | td3-pop | td3-popsan | td3-pdsan)")
        })?;
        let algo = Algo::from_str(algo_name)?;

        let input_coding = self.input_coding.as_deref().map(InputCoding::from_str).transpose()?;
        let neuron_type = self.neuron_type.as_deref().map(NeuronKind::from_str).transpose()?;

        // algorithm / coding / neuron compatibility
        let (input_coding, neuron_type) = match algo {
            Algo::Td3 => {
                if input_coding.is_some() {
                    return Err(Error::config("input_coding", "td3 uses no input coding"));
                }
                if neuron_type.is_some() {
                    return Err(Error::config("neuron_type", "td3 has no spiking neurons"));
                }
                (None, None)
            }
            Algo::Td3Pop => {
                if input_coding.is_some() && input_coding != Some(InputCoding::Pop) {
                    return Err(Error::config("input_coding", "td3-pop requires `pop`"));
                }
                if neuron_type.is_some() {
                    return Err(Error::config("neuron_type", "td3-pop has no spiking neurons"));
                }
                (Some(InputCoding::Pop), None)
            }
            Algo::Td3PopSan => {
                if neuron_type == Some(NeuronKind::Dn) {
                    return Err(Error::config("neuron_type", "td3-popsan forces `lif`"));
                }
                (Some(input_coding.unwrap_or(InputCoding::PopDet)), Some(NeuronKind::Lif))
            }
            Algo::Td3Pdsan => {
                (Some(input_coding.unwrap_or(InputCoding::Pop)), Some(neuron_type.unwrap_or(NeuronKind::Dn)))
            }
        };

        let precision = match self.precision.as_str() {
            "f32" => Precision::F32,
            "f64" => Precision::F64,
            other => return Err(Error::config("precision", format!("expected f32|f64, got `{other}`"))),
        };

        check_range("gamma", self.gamma, 0.0, 1.0, true, true)?;
        check_range("eta", self.eta, 0.0, 1.0, false, true)?;
        if self.sigma < 0.0 {
            return Err(Error::config("sigma", "must be >= 0"));
        }
        if self.sigma_tilde < 0.0 {
            return Err(Error::config("sigma_tilde", "must be >= 0"));
        }
        if self.noise_clip < 0.0 {
            return Err(Error::config("noise_clip", "must be >= 0"));
        }
        if self.policy_delay == 0 {
            return Err(Error::config("policy_delay", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if self.t1 == 0 {
            return Err(Error::config("t1", "must be >= 1"));
        }
        if self.pop_size == 0 {
            return Err(Error::config("pop_size", "must be >= 1"));
        }
        if self.out_pop_size == 0 {
            return Err(Error::config("out_pop_size", "must be >= 1"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("eval_episodes", "must be >= 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be >= 1"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::config("buffer_capacity", "must be >= 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("delta", "must lie in (0, 1)"));
        }
        if self.surrogate_window <= 0.0 {
            return Err(Error::config("surrogate_window", "must be > 0"));
        }
        if self.v_clamp < 0.0 {
            return Err(Error::config("v_clamp", "must be >= 0 (0 disables)"));
        }

        let actor_lr = self.actor_lr.unwrap_or(if algo.is_spiking() { 1e-4 } else { 1e-3 });
        if actor_lr <= 0.0 {
            return Err(Error::config("actor_lr", "must be > 0"));
        }
        if self.critic_lr <= 0.0 {
            return Err(Error::config("critic_lr", "must be > 0"));
        }

        Ok(ResolvedConfig {
            env,
            algo,
            input_coding,
            neuron_type,
            pop_size: self.pop_size,
            out_pop_size: self.out_pop_size,
            t1: self.t1,
            actor_lr,
            critic_lr: self.critic_lr,
            td3: Td3Config {
                gamma: self.gamma,
                eta: self.eta,
                sigma: self.sigma,
                sigma_tilde: self.sigma_tilde,
                noise_clip: self.noise_clip,
                batch_size: self.batch_size,
                policy_delay: self.policy_delay,
                total_steps: self.total_steps,
                eval_every: self.eval_every,
                eval_episodes: self.eval_episodes,
                warmup_steps: self.warmup_steps,
                buffer_capacity: self.buffer_capacity,
                stop_at_eval_reward: self.stop_at_eval_reward,
            },
            seed: self.seed,
            run_dir: self.run_dir.clone(),
            precision,
            delta: self.delta,
            surrogate_window: self.surrogate_window,
            v_clamp: if self.v_clamp == 0.0 { None } else { Some(self.v_clamp) },
            dn_theta_file: self.dn_theta_file.clone(),
            learn_theta: self.learn_theta,
            raw: self.clone(),
        })
    }
}

fn check_range(
    field: &str,
    value: f64,
    lo: f64,
    hi: f64,
    lo_inclusive: bool,
    hi_inclusive: bool,
) -> Result<()> {
    let lo_ok = if lo_inclusive { value >= lo } else { value > lo };
    let hi_ok = if hi_inclusive { value <= hi } else { value < hi };
    if lo_ok && hi_ok {
        Ok(())
    } else {
        let lb = if lo_inclusive { '[' } else { '(' };
        let rb = if hi_inclusive { ']' } else { ')' };
        Err(Error::config(field, format!("must lie in {lb}{lo}, {hi}{rb}, got {value}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_env_names_the_field() {
        let cfg = RunConfig::from_toml_str("algo = \"td3\"").unwrap();
        let err = cfg.validate().unwrap_err();
        match err {
            Error::Config { field, .. } => assert_eq!(field, "env"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn defaults_resolve_for_pdsan() {
        let cfg = RunConfig::from_toml_str("env = \"pendulum\"\nalgo = \"td3-pdsan\"").unwrap();
        let r = cfg.validate().unwrap();
        assert_eq!(r.input_coding, Some(InputCoding::Pop));
        assert_eq!(r.neuron_type, Some(NeuronKind::Dn));
        assert_eq!(r.actor_lr, 1e-4);
        assert_eq!(r.critic_lr, 1e-3);
        assert_eq!(r.td3.batch_size, 100);
        assert_eq!(r.td3.buffer_capacity, 1_000_000);
        assert_eq!(r.pop_size, 10);
        assert_eq!(r.t1, 5);
        assert_eq!(r.v_clamp, Some(10.0));
    }

    #[test]
    fn popsan_rejects_dn_neurons() {
        let cfg = RunConfig::from_toml_str(
            "env = \"pendulum\"\nalgo = \"td3-popsan\"\nneuron_type = \"dn\"",
        )
        .unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "neuron_type"));
    }

    #[test]
    fn plain_td3_rejects_coding() {
        let cfg = RunConfig::from_toml_str(
            "env = \"pendulum\"\nalgo = \"td3\"\ninput_coding = \"pop\"",
        )
        .unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "input_coding"));
    }

    #[test]
    fn env_overrides_apply_and_reject_unknown() {
        let mut cfg = RunConfig::from_toml_str("env = \"pendulum\"\nalgo = \"td3-pdsan\"").unwrap();
        cfg.apply_env_overrides(vec![
            ("PDSAN_SEED".to_string(), "7".to_string()),
            ("PDSAN_TOTAL_STEPS".to_string(), "5000".to_string()),
            ("UNRELATED".to_string(), "x".to_string()),
        ])
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.total_steps, 5000);

        let err = cfg
            .apply_env_overrides(vec![("PDSAN_NO_SUCH_KEY".to_string(), "1".to_string())])
            .unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn bad_values_name_their_field() {
        for (toml, field) in [
            ("env = \"pendulum\"\nalgo = \"td3\"\ngamma = 1.5", "gamma"),
            ("env = \"pendulum\"\nalgo = \"td3\"\neta = 0.0", "eta"),
            ("env = \"pendulum\"\nalgo = \"td3\"\npolicy_delay = 0", "policy_delay"),
            ("env = \"pendulum\"\nalgo = \"td3\"\ndelta = 1.0", "delta"),
            ("env = \"pendulum\"\nalgo = \"td3\"\nprecision = \"f16\"", "precision"),
            ("env = \"nope\"\nalgo = \"td3\"", "env"),
            ("env = \"pendulum\"\nalgo = \"sac\"", "algo"),
        ] {
            let cfg = RunConfig::from_toml_str(toml).unwrap();
            match cfg.validate() {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field, "for {toml}"),
                other => panic!("expected config error for {toml}, got {other:?}"),
            }
        }
    }

    #[test]
    fn unknown_toml_keys_are_rejected() {
        assert!(RunConfig::from_toml_str("env = \"pendulum\"\nalgo = \"td3\"\nbogus = 1").is_err());
    }
}
