//! Input coding: turning a raw state vector into network input.
//!
//! Three rate codings (`uni`, `poi`, `det`) map a [0,1]-normalized state to
//! binary spike trains over a time window. Population coding (`pop`) maps the
//! raw state through learnable Gaussian receptive fields to an analog
//! stimulation matrix that is fed to the network unchanged at every timestep.
//! The `pop-*` variants rate-code the stimulation values instead.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower clamp for receptive-field widths; keeps every sigma strictly positive.
pub const SIGMA_FLOOR: f64 = 1e-3;

/// Which rate coding generates spikes from analog values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateVariant {
    Uniform,
    Poisson,
    Deterministic,
}

/// Binary spike trains, one row per input line, one column per timestep.
#[derive(Clone, Debug)]
pub struct SpikeTrain<T> {
    /// d x T1 matrix with entries in {0, 1}.
    pub bits: Array2<T>,
}

impl<T: Scalar> SpikeTrain<T> {
    pub fn lines(&self) -> usize {
        self.bits.nrows()
    }

    pub fn window(&self) -> usize {
        self.bits.ncols()
    }

    /// Spikes fired on one line over the whole window.
    pub fn count(&self, line: usize) -> usize {
        self.bits.row(line).iter().filter(|&&b| b > T::zero()).count()
    }
}

/// Learnable Gaussian receptive fields, one population of `p` neurons per
/// state dimension.
#[derive(Clone, Debug)]
pub struct PopulationEncoder<T> {
    /// n x p centers.
    pub mu: Array2<T>,
    /// n x p widths, strictly positive.
    pub sigma: Array2<T>,
}

impl<T: Scalar> PopulationEncoder<T> {
    /// Tile each state dimension's declared range with `p` evenly spaced
    /// receptive fields of width `range / p`.
    pub fn init(obs_low: &[T], obs_high: &[T], p: usize) -> Self {
        let n = obs_low.len();
        let mut mu = Array2::zeros((n, p));
        let mut sigma = Array2::zeros((n, p));
        for i in 0..n {
            let lo = obs_low[i];
            let hi = obs_high[i];
            let range = hi - lo;
            for j in 0..p {
                mu[[i, j]] = if p == 1 {
                    lo + range * T::from_f64(0.5)
                } else {
                    lo + range * T::from_f64(j as f64 / (p - 1) as f64)
                };
                sigma[[i, j]] = (range / T::from_f64(p as f64)).max(T::from_f64(SIGMA_FLOOR));
            }
        }
        Self { mu, sigma }
    }

    pub fn state_dim(&self) -> usize {
        self.mu.nrows()
    }

    pub fn pop_size(&self) -> usize {
        self.mu.ncols()
    }

    /// Re-establish the sigma positivity invariant after a parameter update.
    pub fn clamp_sigma(&mut self) {
        let floor = T::from_f64(SIGMA_FLOOR);
        self.sigma.mapv_inplace(|s| s.max(floor));
    }
}

/// Per-dimension affine map of a raw state onto [0, 1] given declared
/// bounds, clipped at both ends. Rate-type codings consume this; population
/// coding takes raw values.
pub fn normalize_bounds<T: Scalar>(s: &[T], low: &[T], high: &[T]) -> Vec<T> {
    s.iter()
        .zip(low.iter().zip(high))
        .map(|(&x, (&lo, &hi))| {
            let t = (x - lo) / (hi - lo);
            t.min(T::one()).max(T::zero())
        })
        .collect()
}

fn check_normalized<T: Scalar>(s: &[T]) -> Result<()> {
    for (i, &x) in s.iter().enumerate() {
        if !(x >= T::zero() && x <= T::one()) {
            return Err(Error::UnnormalizedState { index: i, value: x.to_f64() });
        }
    }
    Ok(())
}

/// Uniform coding: spike whenever the input exceeds a fresh U(0,1) draw.
pub fn encode_uniform<T: Scalar, R: Rng + ?Sized>(
    s: &[T],
    t1: usize,
    rng: &mut R,
) -> Result<SpikeTrain<T>> {
    check_normalized(s)?;
    if t1 == 0 {
        return Err(Error::InvalidArgument("time window T1 must be >= 1".into()));
    }
    let mut bits = Array2::zeros((s.len(), t1));
    for (i, &si) in s.iter().enumerate() {
        for t in 0..t1 {
            let r = T::sample_unit(rng);
            bits[[i, t]] = if si > r { T::one() } else { T::zero() };
        }
    }
    Ok(SpikeTrain { bits })
}

/// Poisson coding: each bit is an independent Bernoulli(s_i) draw.
pub fn encode_poisson<T: Scalar, R: Rng + ?Sized>(
    s: &[T],
    t1: usize,
    rng: &mut R,
) -> Result<SpikeTrain<T>> {
    check_normalized(s)?;
    let mut bits = Array2::zeros((s.len(), t1));
    for (i, &si) in s.iter().enumerate() {
        for t in 0..t1 {
            let r = T::sample_unit(rng);
            bits[[i, t]] = if r < si { T::one() } else { T::zero() };
        }
    }
    Ok(SpikeTrain { bits })
}

/// Deterministic coding: a one-step soft-reset integrator. The input
/// accumulates each step; crossing 1 - delta emits a spike and subtracts the
/// threshold.
pub fn encode_deterministic<T: Scalar>(s: &[T], t1: usize, delta: T) -> Result<SpikeTrain<T>> {
    check_normalized(s)?;
    if !(delta > T::zero() && delta < T::one()) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0, 1), got {}",
            delta
        )));
    }
    let threshold = T::one() - delta;
    let mut bits = Array2::zeros((s.len(), t1));
    for (i, &si) in s.iter().enumerate() {
        let mut v = T::zero();
        for t in 0..t1 {
            v += si;
            if v > threshold {
                bits[[i, t]] = T::one();
                v -= threshold;
            }
        }
    }
    Ok(SpikeTrain { bits })
}

/// Population coding: stimulation strength of each receptive field,
/// `exp(-(s_i - mu_ij)^2 / (2 sigma_ij^2))`, an n x p matrix in (0, 1].
/// Entries reach 1 exactly at the field center; in the far tail the
/// exponential can underflow to 0 in the float format.
pub fn encode_population<T: Scalar>(s: &[T], enc: &PopulationEncoder<T>) -> Result<Array2<T>> {
    if s.len() != enc.state_dim() {
        return Err(Error::Dimension(format!(
            "state has {} dims, encoder expects {}",
            s.len(),
            enc.state_dim()
        )));
    }
    let mut out = Array2::zeros(enc.mu.raw_dim());
    let two = T::from_f64(2.0);
    for i in 0..enc.state_dim() {
        for j in 0..enc.pop_size() {
            let d = s[i] - enc.mu[[i, j]];
            let sig = enc.sigma[[i, j]];
            out[[i, j]] = (-(d * d) / (two * sig * sig)).exp();
        }
    }
    Ok(out)
}

/// Rate-code a stimulation matrix element-wise over the flattened n*p values
/// (row-major: dimension-major, population-minor).
pub fn encode_population_rate<T: Scalar, R: Rng + ?Sized>(
    stim: &ArrayView2<T>,
    variant: RateVariant,
    t1: usize,
    rng: &mut R,
    delta: T,
) -> Result<SpikeTrain<T>> {
    let flat: Vec<T> = stim.iter().copied().collect();
    match variant {
        RateVariant::Uniform => encode_uniform(&flat, t1, rng),
        RateVariant::Poisson => encode_poisson(&flat, t1, rng),
        RateVariant::Deterministic => encode_deterministic(&flat, t1, delta),
    }
}

/// Gradients of a summed loss with respect to the receptive-field parameters.
///
/// `upstream` is the loss gradient with respect to the stimulation matrix,
/// already summed over the time window. With `A = exp(-(s-mu)^2/(2 sigma^2))`:
/// `dA/dmu = A (s - mu) / sigma^2` and `dA/dsigma = A (s - mu)^2 / sigma^3`.
pub fn grad_population<T: Scalar>(
    s: &[T],
    enc: &PopulationEncoder<T>,
    upstream: &ArrayView2<T>,
) -> Result<(Array2<T>, Array2<T>)> {
    if upstream.dim() != enc.mu.dim() {
        return Err(Error::Dimension(format!(
            "upstream is {:?}, encoder is {:?}",
            upstream.dim(),
            enc.mu.dim()
        )));
    }
    let a = encode_population(s, enc)?;
    let mut grad_mu = Array2::zeros(enc.mu.raw_dim());
    let mut grad_sigma = Array2::zeros(enc.mu.raw_dim());
    for i in 0..enc.state_dim() {
        for j in 0..enc.pop_size() {
            let d = s[i] - enc.mu[[i, j]];
            let sig = enc.sigma[[i, j]];
            let g = upstream[[i, j]] * a[[i, j]];
            grad_mu[[i, j]] = g * d / (sig * sig);
            grad_sigma[[i, j]] = g * d * d / (sig * sig * sig);
        }
    }
    Ok((grad_mu, grad_sigma))
}
