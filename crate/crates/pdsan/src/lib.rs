//! Spiking actor networks for continuous control.
//!
//! The crate implements a population-coded spiking actor (PDSAN) trained
//! jointly with deep critics under TD3. Inputs enter through one of seven
//! coding schemes, the actor body is made of discrete-time LIF or 2nd-order
//! dynamic neurons, and the backward pass is an explicit surrogate-gradient
//! rule rather than autodiff. Two small built-in environments (pendulum
//! swing-up and a 2D point mass) make the whole loop self-contained.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root pin common concrete choices.

// index-based loops over co-indexed arrays read better in the numeric kernels
#![allow(clippy::needless_range_loop)]
#![allow(clippy::type_complexity)]

pub mod actor;
pub mod checkpoint;
pub mod config;
pub mod critic;
pub mod deep;
pub mod dnlearn;
pub mod encoding;
pub mod envs;
pub mod error;
pub mod harness;
pub mod neurons;
pub mod optim;
pub mod replay;
pub mod rng;
pub mod scalar;
pub mod td3;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision spiking actor, the variant used by oracle tests.
pub type SpikingActorF64 = actor::SpikingActor<f64>;
/// Single-precision spiking actor, the default for training runs.
pub type SpikingActorF32 = actor::SpikingActor<f32>;
/// Double-precision critic.
pub type CriticF64 = critic::Critic<f64>;
/// Single-precision critic.
pub type CriticF32 = critic::Critic<f32>;
