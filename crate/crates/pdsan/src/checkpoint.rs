//! Checkpoints.
//!
//! `ckpt_<step>.json` is the documented format: a JSON object with named
//! arrays for the actor's parameters (encoder mu/sigma, per-layer weights
//! and biases, decoder weights, neuron parameters) plus a config echo.
//! Numbers round-trip bit-exactly (shortest-representation decimal).
//!
//! `resume.json` is an internal dump of the full training state (networks,
//! targets, optimizer moments, step counter) used by `--resume`.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::actor::{
    InputCoding, NeuronKind, PopDecoder, SpikingActor, SpikingLayer, ThetaArrays,
};
use crate::config::RunConfig;
use crate::critic::{Activation, Critic, Dense, Mlp};
use crate::deep::DeepActor;
use crate::encoding::PopulationEncoder;
use crate::error::{Error, Result};
use crate::neurons::LifParams;
use crate::scalar::Scalar;
use crate::td3::ActorNet;

pub const CHECKPOINT_VERSION: u32 = 1;

fn mat_to_rows<T: Scalar>(a: &Array2<T>) -> Vec<Vec<T>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn rows_to_mat<T: Scalar>(rows: &[Vec<T>], what: &str) -> Result<Array2<T>> {
    let nrows = rows.len();
    let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Checkpoint(format!("ragged rows in {what}")));
    }
    let flat: Vec<T> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((nrows, ncols), flat)
        .map_err(|e| Error::Checkpoint(format!("{what}: {e}")))
}

/// One spiking layer in checkpoint form; `w` rows are input lines.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerCkpt<T> {
    pub w: Vec<Vec<T>>,
    pub b: Vec<T>,
    pub theta_a: Vec<T>,
    pub theta_b: Vec<T>,
    pub theta_c: Vec<T>,
    pub theta_d: Vec<T>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpikingActorCkpt<T> {
    pub coding: String,
    pub neuron: String,
    pub encoder_mu: Option<Vec<Vec<T>>>,
    pub encoder_sigma: Option<Vec<Vec<T>>>,
    pub obs_low: Vec<T>,
    pub obs_high: Vec<T>,
    pub layers: Vec<LayerCkpt<T>>,
    pub decoder_w: Vec<Vec<T>>,
    pub decoder_b: Vec<T>,
    pub t1: usize,
    pub lif_d_c: T,
    pub lif_v_f: T,
    pub lif_v_th: T,
    pub dn_v_th: T,
    pub dn_d_c: T,
    pub v_clamp: Option<T>,
    pub surrogate_w: T,
    pub delta: T,
    pub learn_theta: bool,
    pub n: usize,
    pub m: usize,
    pub out_pop: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpCkpt<T> {
    pub w: Vec<Vec<Vec<T>>>,
    pub b: Vec<Vec<T>>,
    pub acts: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeepActorCkpt<T> {
    pub encoder_mu: Option<Vec<Vec<T>>>,
    pub encoder_sigma: Option<Vec<Vec<T>>>,
    pub net: MlpCkpt<T>,
    pub decoder_w: Option<Vec<Vec<T>>>,
    pub decoder_b: Option<Vec<T>>,
    pub n: usize,
    pub m: usize,
    pub out_pop: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActorCkpt<T> {
    Spiking(SpikingActorCkpt<T>),
    Deep(DeepActorCkpt<T>),
}

/// The documented per-eval checkpoint: actor parameters plus config echo.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub version: u32,
    pub step: u64,
    pub config: RunConfig,
    pub actor: ActorCkpt<T>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(step: u64, config: RunConfig, actor: &ActorNet<T>) -> Self {
        Checkpoint { version: CHECKPOINT_VERSION, step, config, actor: actor_to_ckpt(actor) }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint<T> = serde_json::from_str(&text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ckpt.version)));
        }
        Ok(ckpt)
    }

    pub fn restore_actor(&self) -> Result<ActorNet<T>> {
        actor_from_ckpt(&self.actor)
    }
}

pub fn actor_to_ckpt<T: Scalar>(actor: &ActorNet<T>) -> ActorCkpt<T> {
    match actor {
        ActorNet::Spiking(a) => ActorCkpt::Spiking(SpikingActorCkpt {
            coding: a.coding.as_str().to_string(),
            neuron: a.neuron.as_str().to_string(),
            encoder_mu: a.encoder.as_ref().map(|e| mat_to_rows(&e.mu)),
            encoder_sigma: a.encoder.as_ref().map(|e| mat_to_rows(&e.sigma)),
            obs_low: a.obs_low.to_vec(),
            obs_high: a.obs_high.to_vec(),
            layers: a
                .layers
                .iter()
                .map(|l| LayerCkpt {
                    w: mat_to_rows(&l.w_t),
                    b: l.b.to_vec(),
                    theta_a: l.theta.a.to_vec(),
                    theta_b: l.theta.b.to_vec(),
                    theta_c: l.theta.c.to_vec(),
                    theta_d: l.theta.d.to_vec(),
                })
                .collect(),
            decoder_w: mat_to_rows(&a.decoder.w),
            decoder_b: a.decoder.b.to_vec(),
            t1: a.t1,
            lif_d_c: a.lif.d_c,
            lif_v_f: a.lif.v_f,
            lif_v_th: a.lif.v_th,
            dn_v_th: a.dn_v_th,
            dn_d_c: a.dn_d_c,
            v_clamp: a.v_clamp,
            surrogate_w: a.surrogate_w,
            delta: a.delta,
            learn_theta: a.learn_theta,
            n: a.n,
            m: a.m,
            out_pop: a.out_pop,
        }),
        ActorNet::Deep(a) => ActorCkpt::Deep(DeepActorCkpt {
            encoder_mu: a.encoder.as_ref().map(|e| mat_to_rows(&e.mu)),
            encoder_sigma: a.encoder.as_ref().map(|e| mat_to_rows(&e.sigma)),
            net: mlp_to_ckpt(&a.mlp),
            decoder_w: a.decoder.as_ref().map(|d| mat_to_rows(&d.w)),
            decoder_b: a.decoder.as_ref().map(|d| d.b.to_vec()),
            n: a.n,
            m: a.m,
            out_pop: a.out_pop,
        }),
    }
}

pub fn actor_from_ckpt<T: Scalar>(ckpt: &ActorCkpt<T>) -> Result<ActorNet<T>> {
    match ckpt {
        ActorCkpt::Spiking(c) => {
            let encoder = match (&c.encoder_mu, &c.encoder_sigma) {
                (Some(mu), Some(sigma)) => Some(PopulationEncoder {
                    mu: rows_to_mat(mu, "encoder_mu")?,
                    sigma: rows_to_mat(sigma, "encoder_sigma")?,
                }),
                (None, None) => None,
                _ => return Err(Error::Checkpoint("encoder mu/sigma mismatch".into())),
            };
            let layers = c
                .layers
                .iter()
                .map(|l| {
                    Ok(SpikingLayer {
                        w_t: rows_to_mat(&l.w, "layer weights")?,
                        b: Array1::from_vec(l.b.clone()),
                        theta: ThetaArrays {
                            a: Array1::from_vec(l.theta_a.clone()),
                            b: Array1::from_vec(l.theta_b.clone()),
                            c: Array1::from_vec(l.theta_c.clone()),
                            d: Array1::from_vec(l.theta_d.clone()),
                        },
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let actor = SpikingActor {
                coding: c.coding.parse::<InputCoding>()?,
                neuron: c.neuron.parse::<NeuronKind>()?,
                encoder,
                obs_low: Array1::from_vec(c.obs_low.clone()),
                obs_high: Array1::from_vec(c.obs_high.clone()),
                layers,
                decoder: PopDecoder {
                    w: rows_to_mat(&c.decoder_w, "decoder weights")?,
                    b: Array1::from_vec(c.decoder_b.clone()),
                },
                t1: c.t1,
                lif: LifParams { d_c: c.lif_d_c, v_f: c.lif_v_f, v_th: c.lif_v_th },
                dn_v_th: c.dn_v_th,
                dn_d_c: c.dn_d_c,
                v_clamp: c.v_clamp,
                surrogate_w: c.surrogate_w,
                delta: c.delta,
                learn_theta: c.learn_theta,
                n: c.n,
                m: c.m,
                out_pop: c.out_pop,
            };
            actor
                .validate_shapes()
                .map_err(|e| Error::Checkpoint(format!("inconsistent actor: {e}")))?;
            Ok(ActorNet::Spiking(actor))
        }
        ActorCkpt::Deep(c) => {
            let encoder = match (&c.encoder_mu, &c.encoder_sigma) {
                (Some(mu), Some(sigma)) => Some(PopulationEncoder {
                    mu: rows_to_mat(mu, "encoder_mu")?,
                    sigma: rows_to_mat(sigma, "encoder_sigma")?,
                }),
                (None, None) => None,
                _ => return Err(Error::Checkpoint("encoder mu/sigma mismatch".into())),
            };
            let decoder = match (&c.decoder_w, &c.decoder_b) {
                (Some(w), Some(b)) => Some(PopDecoder {
                    w: rows_to_mat(w, "decoder weights")?,
                    b: Array1::from_vec(b.clone()),
                }),
                (None, None) => None,
                _ => return Err(Error::Checkpoint("decoder w/b mismatch".into())),
            };
            Ok(ActorNet::Deep(DeepActor {
                encoder,
                mlp: mlp_from_ckpt(&c.net)?,
                decoder,
                n: c.n,
                m: c.m,
                out_pop: c.out_pop,
            }))
        }
    }
}

pub fn mlp_to_ckpt<T: Scalar>(mlp: &Mlp<T>) -> MlpCkpt<T> {
    MlpCkpt {
        w: mlp.layers.iter().map(|l| mat_to_rows(&l.w)).collect(),
        b: mlp.layers.iter().map(|l| l.b.to_vec()).collect(),
        acts: mlp
            .acts
            .iter()
            .map(|a| {
                match a {
                    Activation::Relu => "relu",
                    Activation::Linear => "linear",
                    Activation::Tanh => "tanh",
                }
                .to_string()
            })
            .collect(),
    }
}

pub fn mlp_from_ckpt<T: Scalar>(ckpt: &MlpCkpt<T>) -> Result<Mlp<T>> {
    if ckpt.w.len() != ckpt.b.len() || ckpt.w.len() != ckpt.acts.len() {
        return Err(Error::Checkpoint("mlp layer count mismatch".into()));
    }
    let mut layers = Vec::with_capacity(ckpt.w.len());
    for (w, b) in ckpt.w.iter().zip(&ckpt.b) {
        layers.push(Dense { w: rows_to_mat(w, "mlp weights")?, b: Array1::from_vec(b.clone()) });
    }
    let acts = ckpt
        .acts
        .iter()
        .map(|s| match s.as_str() {
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Checkpoint(format!("unknown activation `{other}`"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Mlp { layers, acts })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticCkpt<T> {
    pub net: MlpCkpt<T>,
    pub n: usize,
    pub m: usize,
}

pub fn critic_to_ckpt<T: Scalar>(c: &Critic<T>) -> CriticCkpt<T> {
    CriticCkpt { net: mlp_to_ckpt(&c.net), n: c.n, m: c.m }
}

pub fn critic_from_ckpt<T: Scalar>(c: &CriticCkpt<T>) -> Result<Critic<T>> {
    Ok(Critic { net: mlp_from_ckpt(&c.net)?, n: c.n, m: c.m })
}

/// Optimizer moments in flat form, one (m, v) pair per tensor, in the
/// tensor order the owning network defines.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptCkpt<T> {
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

/// Complete training state for `--resume`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResumeState<T> {
    pub version: u32,
    pub step: u64,
    pub config: RunConfig,
    pub actor: ActorCkpt<T>,
    pub target_actor: ActorCkpt<T>,
    pub critics: Vec<CriticCkpt<T>>,
    pub target_critics: Vec<CriticCkpt<T>>,
    pub actor_opt: OptCkpt<T>,
    pub critic_opts: Vec<OptCkpt<T>>,
}

impl<T: Scalar> ResumeState<T> {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
