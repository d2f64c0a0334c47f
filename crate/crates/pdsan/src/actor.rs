//! The spiking actor: population-coded input, layers of LIF or dynamic
//! neurons unrolled over a time window, firing-rate decoding to bounded
//! actions, and an explicit surrogate-gradient backward pass.
//!
//! The backward pass is hand-written rather than autodiff. Per output
//! population the decoder gradients are exact; through the spiking body the
//! gradient follows the approximate rule: the spike derivative is a
//! rectangular window around the threshold (times the membrane-update
//! derivative for dynamic neurons), the membrane gradient flows through the
//! (1 - o) reset gate, and the current gradient at step t picks up the
//! membrane gradient of step t + 1 plus its own decayed future, with all
//! gradients beyond the window boundary set to zero.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand_chacha::ChaCha8Rng;

use crate::encoding::{
    encode_deterministic, encode_population, encode_poisson, encode_uniform, normalize_bounds,
    PopulationEncoder, RateVariant,
};
use crate::error::{Error, Result};
use crate::neurons::{dn_unit_step, lif_unit_step, surrogate_window, DnParams, LifParams, Theta};
use crate::optim::{Adam, Moments};
use crate::scalar::Scalar;

/// Input coding scheme tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputCoding {
    Uni,
    Poi,
    Det,
    Pop,
    PopUni,
    PopPoi,
    PopDet,
}

impl InputCoding {
    pub const ALL: [InputCoding; 7] = [
        InputCoding::Uni,
        InputCoding::Poi,
        InputCoding::Det,
        InputCoding::Pop,
        InputCoding::PopUni,
        InputCoding::PopPoi,
        InputCoding::PopDet,
    ];

    /// Does this scheme use Gaussian receptive fields?
    pub fn uses_population(self) -> bool {
        !matches!(self, InputCoding::Uni | InputCoding::Poi | InputCoding::Det)
    }

    /// Analog pass-through (no spiking at the input)?
    pub fn is_analog(self) -> bool {
        matches!(self, InputCoding::Pop)
    }

    pub fn rate_variant(self) -> Option<RateVariant> {
        match self {
            InputCoding::Uni | InputCoding::PopUni => Some(RateVariant::Uniform),
            InputCoding::Poi | InputCoding::PopPoi => Some(RateVariant::Poisson),
            InputCoding::Det | InputCoding::PopDet => Some(RateVariant::Deterministic),
            InputCoding::Pop => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InputCoding::Uni => "uni",
            InputCoding::Poi => "poi",
            InputCoding::Det => "det",
            InputCoding::Pop => "pop",
            InputCoding::PopUni => "pop-uni",
            InputCoding::PopPoi => "pop-poi",
            InputCoding::PopDet => "pop-det",
        }
    }
}

impl std::str::FromStr for InputCoding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        InputCoding::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::config("input_coding", format!("unknown coding `{s}`")))
    }
}

impl std::fmt::Display for InputCoding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Neuron model used in the actor body.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NeuronKind {
    Lif,
    Dn,
}

impl NeuronKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NeuronKind::Lif => "lif",
            NeuronKind::Dn => "dn",
        }
    }
}

impl std::str::FromStr for NeuronKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lif" => Ok(NeuronKind::Lif),
            "dn" => Ok(NeuronKind::Dn),
            other => Err(Error::config("neuron_type", format!("unknown neuron `{other}`"))),
        }
    }
}

/// Per-neuron dynamic-neuron parameters for one layer.
#[derive(Clone, Debug)]
pub struct ThetaArrays<T> {
    pub a: Array1<T>,
    pub b: Array1<T>,
    pub c: Array1<T>,
    pub d: Array1<T>,
}

impl<T: Scalar> ThetaArrays<T> {
    pub fn broadcast(theta: Theta<T>, width: usize) -> Self {
        ThetaArrays {
            a: Array1::from_elem(width, theta.a),
            b: Array1::from_elem(width, theta.b),
            c: Array1::from_elem(width, theta.c),
            d: Array1::from_elem(width, theta.d),
        }
    }

    pub fn random_unit(width: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut draw = || Array1::from_shape_fn(width, |_| T::sample_unit(rng));
        let a = draw();
        let b = draw();
        let c = draw();
        let d = draw();
        ThetaArrays { a, b, c, d }
    }

    pub fn zeros(width: usize) -> Self {
        ThetaArrays {
            a: Array1::zeros(width),
            b: Array1::zeros(width),
            c: Array1::zeros(width),
            d: Array1::zeros(width),
        }
    }
}

/// One spiking layer. Weights are stored input-major (`w_t[j]` holds the
/// outgoing weights of input line j) so that spike-driven propagation can
/// accumulate whole rows.
#[derive(Clone, Debug)]
pub struct SpikingLayer<T> {
    pub w_t: Array2<T>,
    pub b: Array1<T>,
    pub theta: ThetaArrays<T>,
}

impl<T: Scalar> SpikingLayer<T> {
    pub fn in_dim(&self) -> usize {
        self.w_t.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.w_t.ncols()
    }
}

/// Population decoder: one weight vector and bias per action dimension,
/// applied to that action's slice of output firing rates, squashed by tanh.
#[derive(Clone, Debug)]
pub struct PopDecoder<T> {
    /// m x out_pop.
    pub w: Array2<T>,
    /// m biases.
    pub b: Array1<T>,
}

impl<T: Scalar> PopDecoder<T> {
    pub fn action_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn out_pop(&self) -> usize {
        self.w.ncols()
    }
}

/// Decode spike counts into a bounded action: `fr = sc / T1`, then per
/// action dimension `a_j = tanh(w_d_j . fr_j + b_d_j)`.
pub fn decode<T: Scalar>(sc: &ArrayView1<T>, t1: usize, dec: &PopDecoder<T>) -> Vec<T> {
    let op = dec.out_pop();
    let t1s = T::from_f64(t1 as f64);
    (0..dec.action_dim())
        .map(|j| {
            let mut z = dec.b[j];
            for k in 0..op {
                z += dec.w[[j, k]] * (sc[j * op + k] / t1s);
            }
            z.tanh()
        })
        .collect()
}

/// Input fed to the first layer at every timestep.
#[derive(Clone, Debug)]
pub enum ForwardInput<T> {
    /// Analog stimulation used unchanged at each timestep (pop coding);
    /// N x (n*p).
    Analog(Array2<T>),
    /// Binary spike input per timestep; each matrix is N x d. For the
    /// pop-rate codings the stimulation the spikes were drawn from is kept
    /// for the encoder gradients.
    Spikes { per_t: Vec<Array2<T>>, stim: Option<Array2<T>> },
}

impl<T: Scalar> ForwardInput<T> {
    fn at(&self, t: usize) -> ArrayView2<'_, T> {
        match self {
            ForwardInput::Analog(a) => a.view(),
            ForwardInput::Spikes { per_t, .. } => per_t[t].view(),
        }
    }

    fn is_analog(&self) -> bool {
        matches!(self, ForwardInput::Analog(_))
    }
}

/// Recorded per-layer, per-timestep quantities: current, membrane potential,
/// recovery variable and spikes after each update.
#[derive(Clone, Debug)]
pub struct LayerTrace<T> {
    pub c: Vec<Array2<T>>,
    pub v: Vec<Array2<T>>,
    pub u: Vec<Array2<T>>,
    pub o: Vec<Array2<T>>,
}

/// Everything the backward pass replays.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    /// Raw input states, N x n.
    pub states: Array2<T>,
    pub input: ForwardInput<T>,
    pub layers: Vec<LayerTrace<T>>,
    /// Output-layer spike counts, N x (m * out_pop).
    pub sc: Array2<T>,
    /// sc / T1.
    pub fr: Array2<T>,
    /// Post-tanh actions, N x m.
    pub actions: Array2<T>,
}

/// Gradients for every parameter tensor of the actor. Layer weight
/// gradients use the same input-major layout as the weights.
#[derive(Clone, Debug)]
pub struct ActorGrads<T> {
    pub layers: Vec<(Array2<T>, Array1<T>)>,
    pub dec_w: Array2<T>,
    pub dec_b: Array1<T>,
    pub enc_mu: Option<Array2<T>>,
    pub enc_sigma: Option<Array2<T>>,
    pub theta: Option<Vec<ThetaArrays<T>>>,
}

impl<T: Scalar> ActorGrads<T> {
    pub fn is_finite(&self) -> bool {
        let fin = |a: &Array1<T>| a.iter().all(|x| x.is_finite());
        let fin2 = |a: &Array2<T>| a.iter().all(|x| x.is_finite());
        self.layers.iter().all(|(w, b)| fin2(w) && fin(b))
            && fin2(&self.dec_w)
            && fin(&self.dec_b)
            && self.enc_mu.as_ref().is_none_or(fin2)
            && self.enc_sigma.as_ref().is_none_or(fin2)
            && self.theta.as_ref().is_none_or(|ts| {
                ts.iter().all(|t| fin(&t.a) && fin(&t.b) && fin(&t.c) && fin(&t.d))
            })
    }

    pub fn sq_norm(&self) -> T {
        let s1 = |a: &Array1<T>| a.iter().map(|&x| x * x).sum::<T>();
        let s2 = |a: &Array2<T>| a.iter().map(|&x| x * x).sum::<T>();
        let mut total = T::zero();
        for (w, b) in &self.layers {
            total = total + s2(w) + s1(b);
        }
        total = total + s2(&self.dec_w) + s1(&self.dec_b);
        if let Some(m) = &self.enc_mu {
            total += s2(m);
        }
        if let Some(s) = &self.enc_sigma {
            total += s2(s);
        }
        if let Some(ts) = &self.theta {
            for t in ts {
                total = total + s1(&t.a) + s1(&t.b) + s1(&t.c) + s1(&t.d);
            }
        }
        total
    }
}

/// Construction-time settings for [`SpikingActor`].
#[derive(Clone, Debug)]
pub struct SpikingActorConfig<T> {
    pub coding: InputCoding,
    pub neuron: NeuronKind,
    pub hidden: Vec<usize>,
    pub pop_size: usize,
    pub out_pop: usize,
    pub t1: usize,
    pub surrogate_w: T,
    pub delta: T,
    pub lif: LifParams<T>,
    pub dn: DnParams<T>,
    /// Per-neuron learnable theta, initialized U(0, 1).
    pub learn_theta: bool,
}

impl<T: Scalar> Default for SpikingActorConfig<T> {
    fn default() -> Self {
        SpikingActorConfig {
            coding: InputCoding::Pop,
            neuron: NeuronKind::Dn,
            hidden: vec![256, 256],
            pop_size: 10,
            out_pop: 10,
            t1: 5,
            surrogate_w: T::from_f64(0.5),
            delta: T::from_f64(1e-3),
            lif: LifParams::default(),
            dn: DnParams::default(),
            learn_theta: false,
        }
    }
}

/// Population-coded spiking actor network.
#[derive(Clone, Debug)]
pub struct SpikingActor<T> {
    pub coding: InputCoding,
    pub neuron: NeuronKind,
    pub encoder: Option<PopulationEncoder<T>>,
    pub obs_low: Array1<T>,
    pub obs_high: Array1<T>,
    pub layers: Vec<SpikingLayer<T>>,
    pub decoder: PopDecoder<T>,
    pub t1: usize,
    pub lif: LifParams<T>,
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

impl<T: Scalar> SpikingActor<T> {
    pub fn new(
        cfg: &SpikingActorConfig<T>,
        obs_low: &[T],
        obs_high: &[T],
        action_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let n = obs_low.len();
        let input_dim = if cfg.coding.uses_population() { n * cfg.pop_size } else { n };
        let out_dim = action_dim * cfg.out_pop;

        let mut widths = Vec::with_capacity(cfg.hidden.len() + 2);
        widths.push(input_dim);
        widths.extend_from_slice(&cfg.hidden);
        widths.push(out_dim);

        let mut layers = Vec::with_capacity(widths.len() - 1);
        for win in widths.windows(2) {
            let (inp, out) = (win[0], win[1]);
            let bound = T::from_f64(1.0 / (inp as f64).sqrt());
            let mut w_t = Array2::zeros((inp, out));
            for x in w_t.iter_mut() {
                *x = T::sample_range(rng, -bound, bound);
            }
            let theta = if cfg.learn_theta {
                ThetaArrays::random_unit(out, rng)
            } else {
                ThetaArrays::broadcast(cfg.dn.theta, out)
            };
            layers.push(SpikingLayer { w_t, b: Array1::zeros(out), theta });
        }

        let dec_bound = T::from_f64(1.0 / (cfg.out_pop as f64).sqrt());
        let mut dec_w = Array2::zeros((action_dim, cfg.out_pop));
        for x in dec_w.iter_mut() {
            *x = T::sample_range(rng, -dec_bound, dec_bound);
        }

        let encoder = if cfg.coding.uses_population() {
            Some(PopulationEncoder::init(obs_low, obs_high, cfg.pop_size))
        } else {
            None
        };

        SpikingActor {
            coding: cfg.coding,
            neuron: cfg.neuron,
            encoder,
            obs_low: Array1::from_vec(obs_low.to_vec()),
            obs_high: Array1::from_vec(obs_high.to_vec()),
            layers,
            decoder: PopDecoder { w: dec_w, b: Array1::zeros(action_dim) },
            t1: cfg.t1,
            lif: cfg.lif,
            dn_v_th: cfg.dn.v_th,
            dn_d_c: cfg.dn.d_c,
            v_clamp: cfg.dn.v_clamp,
            surrogate_w: cfg.surrogate_w,
            delta: cfg.delta,
            learn_theta: cfg.learn_theta,
            n,
            m: action_dim,
            out_pop: cfg.out_pop,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Structural invariants: layer widths chain from the coded input to
    /// m * out_pop, the decoder partitions the output layer into m equal
    /// populations, and per-neuron parameter arrays match their layers.
    pub fn validate_shapes(&self) -> Result<()> {
        let mismatch = |msg: String| Err(Error::Dimension(msg));
        if self.layers.is_empty() {
            return mismatch("actor has no layers".into());
        }
        let input_dim = if self.coding.uses_population() {
            let enc = match &self.encoder {
                Some(e) => e,
                None => return mismatch("population coding without an encoder".into()),
            };
            if enc.state_dim() != self.n {
                return mismatch(format!(
                    "encoder covers {} state dims, actor expects {}",
                    enc.state_dim(),
                    self.n
                ));
            }
            if enc.mu.dim() != enc.sigma.dim() {
                return mismatch("encoder mu/sigma shapes differ".into());
            }
            self.n * enc.pop_size()
        } else {
            self.n
        };
        let mut expect = input_dim;
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.in_dim() != expect {
                return mismatch(format!(
                    "layer {l} has {} input lines, the chain provides {}",
                    layer.in_dim(),
                    expect
                ));
            }
            if layer.b.len() != layer.out_dim() {
                return mismatch(format!("layer {l} bias width"));
            }
            for arr in [&layer.theta.a, &layer.theta.b, &layer.theta.c, &layer.theta.d] {
                if arr.len() != layer.out_dim() {
                    return mismatch(format!("layer {l} theta width"));
                }
            }
            expect = layer.out_dim();
        }
        if expect != self.m * self.out_pop {
            return mismatch(format!(
                "output layer is {expect} wide, decoder needs {}",
                self.m * self.out_pop
            ));
        }
        if self.decoder.w.dim() != (self.m, self.out_pop) || self.decoder.b.len() != self.m {
            return mismatch("decoder shape".into());
        }
        if self.obs_low.len() != self.n || self.obs_high.len() != self.n {
            return mismatch("observation bounds length".into());
        }
        Ok(())
    }

    fn v_th(&self) -> T {
        match self.neuron {
            NeuronKind::Lif => self.lif.v_th,
            NeuronKind::Dn => self.dn_v_th,
        }
    }

    fn d_c(&self) -> T {
        match self.neuron {
            NeuronKind::Lif => self.lif.d_c,
            NeuronKind::Dn => self.dn_d_c,
        }
    }

    /// Build the first-layer input for a batch of raw states.
    fn build_input(&self, states: &ArrayView2<T>, rng: &mut ChaCha8Rng) -> Result<ForwardInput<T>> {
        let batch = states.nrows();
        if states.ncols() != self.n {
            return Err(Error::Dimension(format!(
                "state has {} dims, actor expects {}",
                states.ncols(),
                self.n
            )));
        }
        if self.coding.uses_population() {
            let enc = self.encoder.as_ref().expect("population coding without encoder");
            let p = enc.pop_size();
            let mut stim = Array2::zeros((batch, self.n * p));
            for (i, row) in states.rows().into_iter().enumerate() {
                let a = encode_population(row.as_slice().expect("contiguous state row"), enc)?;
                stim.row_mut(i).assign(&Array1::from_iter(a.iter().copied()));
            }
            if self.coding.is_analog() {
                return Ok(ForwardInput::Analog(stim));
            }
            let variant = self.coding.rate_variant().expect("pop-rate coding");
            let mut per_t = vec![Array2::zeros((batch, self.n * p)); self.t1];
            for i in 0..batch {
                let flat: Vec<T> = stim.row(i).to_vec();
                let train = match variant {
                    RateVariant::Uniform => encode_uniform(&flat, self.t1, rng)?,
                    RateVariant::Poisson => encode_poisson(&flat, self.t1, rng)?,
                    RateVariant::Deterministic => encode_deterministic(&flat, self.t1, self.delta)?,
                };
                for t in 0..self.t1 {
                    for d in 0..flat.len() {
                        per_t[t][[i, d]] = train.bits[[d, t]];
                    }
                }
            }
            Ok(ForwardInput::Spikes { per_t, stim: Some(stim) })
        } else {
            let variant = self.coding.rate_variant().expect("direct rate coding");
            let mut per_t = vec![Array2::zeros((batch, self.n)); self.t1];
            for i in 0..batch {
                let row = states.row(i);
                let norm = normalize_bounds(
                    row.as_slice().expect("contiguous state row"),
                    self.obs_low.as_slice().unwrap(),
                    self.obs_high.as_slice().unwrap(),
                );
                let train = match variant {
                    RateVariant::Uniform => encode_uniform(&norm, self.t1, rng)?,
                    RateVariant::Poisson => encode_poisson(&norm, self.t1, rng)?,
                    RateVariant::Deterministic => encode_deterministic(&norm, self.t1, self.delta)?,
                };
                for t in 0..self.t1 {
                    for d in 0..self.n {
                        per_t[t][[i, d]] = train.bits[[d, t]];
                    }
                }
            }
            Ok(ForwardInput::Spikes { per_t, stim: None })
        }
    }

    /// Synaptic drive for one layer given its input at one timestep. Binary
    /// inputs accumulate weight rows of the active lines; analog inputs go
    /// through a dense product.
    fn drive(&self, layer: &SpikingLayer<T>, input: &ArrayView2<T>, analog: bool) -> Array2<T> {
        if analog {
            let mut d = input.dot(&layer.w_t);
            for mut row in d.rows_mut() {
                row += &layer.b;
            }
            d
        } else {
            let batch = input.nrows();
            let out = layer.out_dim();
            let mut d = Array2::zeros((batch, out));
            let w = layer.w_t.as_slice().expect("contiguous weights");
            let b = layer.b.as_slice().unwrap();
            for i in 0..batch {
                let drow = &mut d.as_slice_mut().unwrap()[i * out..(i + 1) * out];
                drow.copy_from_slice(b);
                let srow = input.row(i);
                for (j, &s) in srow.iter().enumerate() {
                    if s > T::zero() {
                        let wrow = &w[j * out..(j + 1) * out];
                        for (dk, &wk) in drow.iter_mut().zip(wrow) {
                            *dk += wk;
                        }
                    }
                }
            }
            d
        }
    }

    /// Run the network over the time window. Returns actions (N x m) and,
    /// when requested, the full trace for the backward pass.
    pub fn forward_batch(
        &self,
        states: &ArrayView2<T>,
        rng: &mut ChaCha8Rng,
        want_trace: bool,
    ) -> Result<(Array2<T>, Option<ForwardTrace<T>>)> {
        let batch = states.nrows();
        let input = self.build_input(states, rng)?;
        let n_layers = self.layers.len();
        let out_dim = self.layers[n_layers - 1].out_dim();

        let mut c: Vec<Array2<T>> = self.layers.iter().map(|l| Array2::zeros((batch, l.out_dim()))).collect();
        let mut v = c.clone();
        let mut u = c.clone();
        let mut o = c.clone();
        let mut sc = Array2::zeros((batch, out_dim));

        let mut traces: Vec<LayerTrace<T>> = (0..n_layers)
            .map(|_| LayerTrace { c: vec![], v: vec![], u: vec![], o: vec![] })
            .collect();

        // For analog input the first-layer drive is constant over the window.
        let cached_drive0 = if input.is_analog() {
            Some(self.drive(&self.layers[0], &input.at(0), true))
        } else {
            None
        };

        for t in 0..self.t1 {
            for l in 0..n_layers {
                let drive = if l == 0 {
                    match &cached_drive0 {
                        Some(d) => d.clone(),
                        None => self.drive(&self.layers[0], &input.at(t), false),
                    }
                } else {
                    // previous layer's fresh spikes
                    let prev = o[l - 1].clone();
                    self.drive(&self.layers[l], &prev.view(), false)
                };
                self.step_layer(l, &mut c[l], &mut v[l], &mut u[l], &mut o[l], &drive);
                if want_trace {
                    traces[l].c.push(c[l].clone());
                    traces[l].v.push(v[l].clone());
                    traces[l].u.push(u[l].clone());
                    traces[l].o.push(o[l].clone());
                }
            }
            sc += &o[n_layers - 1];
        }

        let t1s = T::from_f64(self.t1 as f64);
        let fr = sc.mapv(|x| x / t1s);
        let actions = self.decode_batch(&fr.view());

        let trace = if want_trace {
            Some(ForwardTrace {
                states: states.to_owned(),
                input,
                layers: traces,
                sc,
                fr,
                actions: actions.clone(),
            })
        } else {
            None
        };
        Ok((actions, trace))
    }

    /// Single-state forward with trace (the per-sample contract).
    pub fn forward(
        &self,
        state: &[T],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<T>, ForwardTrace<T>)> {
        let s = Array2::from_shape_vec((1, state.len()), state.to_vec())
            .map_err(|e| Error::Dimension(e.to_string()))?;
        let (actions, trace) = self.forward_batch(&s.view(), rng, true)?;
        Ok((actions.row(0).to_vec(), trace.expect("trace requested")))
    }

    /// Action-only forward used by rollouts and target computations.
    pub fn act(&self, state: &[T], rng: &mut ChaCha8Rng) -> Result<Vec<T>> {
        let s = Array2::from_shape_vec((1, state.len()), state.to_vec())
            .map_err(|e| Error::Dimension(e.to_string()))?;
        let (actions, _) = self.forward_batch(&s.view(), rng, false)?;
        Ok(actions.row(0).to_vec())
    }

    fn step_layer(
        &self,
        l: usize,
        c: &mut Array2<T>,
        v: &mut Array2<T>,
        u: &mut Array2<T>,
        o: &mut Array2<T>,
        drive: &Array2<T>,
    ) {
        let width = self.layers[l].out_dim();
        let batch = c.nrows();
        let cs = c.as_slice_mut().unwrap();
        let vs = v.as_slice_mut().unwrap();
        let us = u.as_slice_mut().unwrap();
        let os = o.as_slice_mut().unwrap();
        let ds = drive.as_slice().unwrap();
        match self.neuron {
            NeuronKind::Dn => {
                let th = &self.layers[l].theta;
                let (ta, tb, tc, td) = (
                    th.a.as_slice().unwrap(),
                    th.b.as_slice().unwrap(),
                    th.c.as_slice().unwrap(),
                    th.d.as_slice().unwrap(),
                );
                for i in 0..batch {
                    let base = i * width;
                    for k in 0..width {
                        dn_unit_step(
                            &mut cs[base + k],
                            &mut vs[base + k],
                            &mut us[base + k],
                            &mut os[base + k],
                            ds[base + k],
                            ta[k],
                            tb[k],
                            tc[k],
                            td[k],
                            self.dn_v_th,
                            self.dn_d_c,
                            self.v_clamp,
                        );
                    }
                }
            }
            NeuronKind::Lif => {
                for idx in 0..batch * width {
                    lif_unit_step(
                        &mut cs[idx],
                        &mut vs[idx],
                        &mut os[idx],
                        ds[idx],
                        self.lif.d_c,
                        self.lif.v_f,
                        self.lif.v_th,
                    );
                }
            }
        }
    }

    /// Batched decode: firing rates to tanh-squashed actions.
    pub fn decode_batch(&self, fr: &ArrayView2<T>) -> Array2<T> {
        let batch = fr.nrows();
        let op = self.out_pop;
        let mut actions = Array2::zeros((batch, self.m));
        for j in 0..self.m {
            let block = fr.slice(ndarray::s![.., j * op..(j + 1) * op]);
            let z = block.dot(&self.decoder.w.row(j));
            for i in 0..batch {
                actions[[i, j]] = (z[i] + self.decoder.b[j]).tanh();
            }
        }
        actions
    }

    /// Membrane potential entering the update at step t (after the
    /// spike-triggered reset), reconstructed from the recorded trace.
    fn v_pre_at(&self, lt: &LayerTrace<T>, l: usize, t: usize) -> Array2<T> {
        let one = T::one();
        if t == 0 {
            return Array2::zeros(lt.v[0].raw_dim());
        }
        let v_prev = &lt.v[t - 1];
        let o_prev = &lt.o[t - 1];
        let theta_c = &self.layers[l].theta.c;
        let mut out = Array2::zeros(v_prev.raw_dim());
        for ((mut orow, vrow), prow) in
            out.rows_mut().into_iter().zip(v_prev.rows()).zip(o_prev.rows())
        {
            for k in 0..orow.len() {
                orow[k] = vrow[k] * (one - prow[k]) + prow[k] * theta_c[k];
            }
        }
        out
    }

    /// Surrogate-gradient backward over a recorded trace. `grad_actions`
    /// is dL/da per sample (any batch-mean scaling included by the caller);
    /// returned gradients are summed over the batch.
    pub fn backward_batch(
        &self,
        trace: &ForwardTrace<T>,
        grad_actions: &ArrayView2<T>,
    ) -> Result<ActorGrads<T>> {
        let batch = trace.states.nrows();
        if grad_actions.dim() != (batch, self.m) {
            return Err(Error::Dimension(format!(
                "grad_actions is {:?}, expected ({batch}, {})",
                grad_actions.dim(),
                self.m
            )));
        }
        if trace.layers.len() != self.layers.len()
            || trace.layers.iter().zip(&self.layers).any(|(lt, l)| {
                lt.o.len() != self.t1 || lt.o[0].ncols() != l.out_dim()
            })
        {
            return Err(Error::Dimension("trace does not match actor shape".into()));
        }
        let one = T::one();
        let op = self.out_pop;
        let n_layers = self.layers.len();
        let t1s = T::from_f64(self.t1 as f64);

        // tanh derivative at the top
        let mut g_z = grad_actions.to_owned();
        ndarray::Zip::from(&mut g_z).and(&trace.actions).for_each(|g, &a| {
            *g *= one - a * a;
        });

        // decoder gradients and the firing-rate gradient
        let mut dec_w = Array2::zeros(self.decoder.w.raw_dim());
        let mut dec_b = Array1::zeros(self.m);
        let mut g_fr = Array2::zeros((batch, n_layers_out(&self.layers)));
        for j in 0..self.m {
            let fr_block = trace.fr.slice(ndarray::s![.., j * op..(j + 1) * op]);
            let gz_col = g_z.column(j);
            // dL/dw_d_j = sum_i gz[i] * fr_j[i, :]
            let gw = fr_block.t().dot(&gz_col);
            dec_w.row_mut(j).assign(&gw);
            dec_b[j] = gz_col.sum();
            // dL/dfr_j[i, :] = gz[i] * w_d_j
            for i in 0..batch {
                for k in 0..op {
                    g_fr[[i, j * op + k]] = gz_col[i] * self.decoder.w[[j, k]];
                }
            }
        }

        // seed of the spike-count gradient, identical at every timestep
        let g_sc = g_fr.mapv(|x| x / t1s);

        let mut grads_layers: Vec<(Array2<T>, Array1<T>)> = self
            .layers
            .iter()
            .map(|l| (Array2::zeros(l.w_t.raw_dim()), Array1::zeros(l.out_dim())))
            .collect();
        let mut theta_grads: Option<Vec<ThetaArrays<T>>> = if self.learn_theta {
            Some(self.layers.iter().map(|l| ThetaArrays::zeros(l.out_dim())).collect())
        } else {
            None
        };

        // gradient wrt the current layer's spikes, per timestep
        let mut g_o: Vec<Array2<T>> = vec![g_sc.clone(); self.t1];

        for l in (0..n_layers).rev() {
            let lt = &trace.layers[l];
            let width = self.layers[l].out_dim();
            let mut g_v_next: Array2<T> = Array2::zeros((batch, width));
            let mut g_c_next: Array2<T> = Array2::zeros((batch, width));
            let mut g_c_per_t: Vec<Array2<T>> = vec![Array2::zeros((0, 0)); self.t1];
            let d_c = self.d_c();
            let v_th = self.v_th();
            let w_win = self.surrogate_w;

            for t in (0..self.t1).rev() {
                // current gradient: next step's membrane gradient plus its
                // own decayed future (zero past the window boundary)
                let mut g_c = g_v_next.clone();
                ndarray::Zip::from(&mut g_c).and(&g_c_next).for_each(|c, &cn| {
                    *c += d_c * cn;
                });

                // membrane gradient: spike path plus reset-gated future
                let mut g_v = Array2::zeros((batch, width));
                match self.neuron {
                    NeuronKind::Lif => {
                        ndarray::Zip::from(&mut g_v)
                            .and(&lt.v[t])
                            .and(&g_o[t])
                            .and(&lt.o[t])
                            .and(&g_v_next)
                            .for_each(|gv, &vp, &go, &ot, &gvn| {
                                let z = surrogate_window(vp, v_th, w_win);
                                *gv = z * go + (one - ot) * gvn;
                            });
                    }
                    NeuronKind::Dn => {
                        let v_pre = self.v_pre_at(lt, l, t);
                        ndarray::Zip::from(&mut g_v)
                            .and(&lt.v[t])
                            .and(&v_pre)
                            .and(&g_o[t])
                            .and(&lt.o[t])
                            .and(&g_v_next)
                            .for_each(|gv, &vp, &vpre, &go, &ot, &gvn| {
                                let z = surrogate_window(vp, v_th, w_win);
                                // d v_post / d v_pre of the quadratic update,
                                // taken at the post-reset potential
                                let dy = (one + one) * vpre;
                                *gv = z * dy * go + (one - ot) * gvn;
                            });
                    }
                }

                g_c_per_t[t] = g_c.clone();
                g_v_next = g_v;
                g_c_next = g_c;
            }

            // weight and bias gradients accumulated over the window
            let (gw, gb) = &mut grads_layers[l];
            for t in 0..self.t1 {
                let g_c = &g_c_per_t[t];
                *gb += &g_c.sum_axis(Axis(0));
                if l == 0 && trace.input.is_analog() {
                    // constant analog input: fold the window sum into one product below
                    continue;
                }
                let below: ArrayView2<T> =
                    if l == 0 { trace.input.at(t) } else { trace.layers[l - 1].o[t].view() };
                // binary input: scatter rows of the active lines
                let out = width;
                let gws = gw.as_slice_mut().unwrap();
                for i in 0..batch {
                    let gcrow = g_c.row(i);
                    let gcs = gcrow.as_slice().unwrap();
                    for (j, &s) in below.row(i).iter().enumerate() {
                        if s > T::zero() {
                            let grow = &mut gws[j * out..(j + 1) * out];
                            for (gkj, &gk) in grow.iter_mut().zip(gcs) {
                                *gkj += gk;
                            }
                        }
                    }
                }
            }
            if l == 0 && trace.input.is_analog() {
                let mut g_c_sum = Array2::zeros((batch, width));
                for t in 0..self.t1 {
                    g_c_sum += &g_c_per_t[t];
                }
                let stim = trace.input.at(0);
                let (gw, _) = &mut grads_layers[0];
                *gw += &stim.t().dot(&g_c_sum);
            }

            // theta gradients: forward sensitivity sweep over the window
            if let Some(tg) = theta_grads.as_mut() {
                if self.neuron == NeuronKind::Dn {
                    self.accumulate_theta_grads(l, lt, &g_o, &mut tg[l]);
                }
            }

            // propagate the spike gradient to the layer below
            if l > 0 || self.coding.uses_population() {
                let mut next_g_o = Vec::with_capacity(self.t1);
                for t in 0..self.t1 {
                    next_g_o.push(g_c_per_t[t].dot(&self.layers[l].w_t.t()));
                }
                if l > 0 {
                    g_o = next_g_o;
                } else {
                    // encoder gradients via the receptive-field chain
                    let enc = self.encoder.as_ref().expect("population encoder");
                    let p = enc.pop_size();
                    let mut up_sum = Array2::zeros((batch, self.n * p));
                    for g in &next_g_o {
                        up_sum += g;
                    }
                    let mut gmu = Array2::zeros((self.n, p));
                    let mut gsigma = Array2::zeros((self.n, p));
                    for i in 0..batch {
                        let srow = trace.states.row(i);
                        let up = Array2::from_shape_vec(
                            (self.n, p),
                            up_sum.row(i).to_vec(),
                        )
                        .expect("upstream reshape");
                        let (gm, gs) = crate::encoding::grad_population(
                            srow.as_slice().unwrap(),
                            enc,
                            &up.view(),
                        )?;
                        gmu += &gm;
                        gsigma += &gs;
                    }
                    return Ok(ActorGrads {
                        layers: grads_layers,
                        dec_w,
                        dec_b,
                        enc_mu: Some(gmu),
                        enc_sigma: Some(gsigma),
                        theta: theta_grads,
                    });
                }
            }
        }

        Ok(ActorGrads {
            layers: grads_layers,
            dec_w,
            dec_b,
            enc_mu: None,
            enc_sigma: None,
            theta: theta_grads,
        })
    }

    /// Per-neuron theta gradients for one layer: within-layer forward-mode
    /// sensitivities of the membrane potential (recorded spikes and gates
    /// held fixed) dotted with the surrogate spike gradient and the
    /// upstream spike gradient at every timestep.
    fn accumulate_theta_grads(
        &self,
        l: usize,
        lt: &LayerTrace<T>,
        g_o: &[Array2<T>],
        out: &mut ThetaArrays<T>,
    ) {
        let batch = lt.v[0].nrows();
        let width = lt.v[0].ncols();
        let one = T::one();
        let two = one + one;
        let th = &self.layers[l].theta;
        let v_th = self.dn_v_th;
        let w_win = self.surrogate_w;

        // sensitivities of v_post and u_post wrt each theta component
        let mut s_v = [
            Array2::<T>::zeros((batch, width)),
            Array2::zeros((batch, width)),
            Array2::zeros((batch, width)),
            Array2::zeros((batch, width)),
        ];
        let mut s_u = s_v.clone();

        for t in 0..self.t1 {
            for i in 0..batch {
                for k in 0..width {
                    let (o_prev, v_prev, u_prev) = if t == 0 {
                        (T::zero(), T::zero(), T::zero())
                    } else {
                        (lt.o[t - 1][[i, k]], lt.v[t - 1][[i, k]], lt.u[t - 1][[i, k]])
                    };
                    let v_pre = v_prev * (one - o_prev) + o_prev * th.c[k];
                    let u_pre = u_prev + o_prev * th.d[k];
                    let go_z = g_o[t][[i, k]] * surrogate_window(lt.v[t][[i, k]], v_th, w_win);

                    for comp in 0..4 {
                        let (sv_old, su_old) =
                            if t == 0 { (T::zero(), T::zero()) } else { (s_v[comp][[i, k]], s_u[comp][[i, k]]) };
                        let sv_pre = sv_old * (one - o_prev)
                            + if comp == 2 { o_prev } else { T::zero() };
                        let su_pre = su_old + if comp == 3 { o_prev } else { T::zero() };
                        let sv_post = two * v_pre * sv_pre - su_pre;
                        let mut su_post = su_pre + th.a[k] * (th.b[k] * sv_pre - su_pre);
                        if comp == 0 {
                            su_post += th.b[k] * v_pre - u_pre;
                        } else if comp == 1 {
                            su_post += th.a[k] * v_pre;
                        }
                        s_v[comp][[i, k]] = sv_post;
                        s_u[comp][[i, k]] = su_post;
                        let g = go_z * sv_post;
                        match comp {
                            0 => out.a[k] += g,
                            1 => out.b[k] += g,
                            2 => out.c[k] += g,
                            _ => out.d[k] += g,
                        }
                    }
                }
            }
        }
    }

    /// Collect every parameter tensor as mutable views paired with its
    /// gradient; used by the optimizer and the soft update.
    pub fn soft_update_from(&mut self, online: &Self, eta: T) {
        let one = T::one();
        let blend1 = |t: &mut Array1<T>, o: &Array1<T>| {
            ndarray::Zip::from(t).and(o).for_each(|t, &o| *t = eta * o + (one - eta) * *t)
        };
        let blend2 = |t: &mut Array2<T>, o: &Array2<T>| {
            ndarray::Zip::from(t).and(o).for_each(|t, &o| *t = eta * o + (one - eta) * *t)
        };
        for (tl, ol) in self.layers.iter_mut().zip(&online.layers) {
            blend2(&mut tl.w_t, &ol.w_t);
            blend1(&mut tl.b, &ol.b);
            blend1(&mut tl.theta.a, &ol.theta.a);
            blend1(&mut tl.theta.b, &ol.theta.b);
            blend1(&mut tl.theta.c, &ol.theta.c);
            blend1(&mut tl.theta.d, &ol.theta.d);
        }
        blend2(&mut self.decoder.w, &online.decoder.w);
        blend1(&mut self.decoder.b, &online.decoder.b);
        if let (Some(te), Some(oe)) = (self.encoder.as_mut(), online.encoder.as_ref()) {
            blend2(&mut te.mu, &oe.mu);
            blend2(&mut te.sigma, &oe.sigma);
        }
    }
}

fn n_layers_out<T: Scalar>(layers: &[SpikingLayer<T>]) -> usize {
    layers.last().map(|l| l.out_dim()).unwrap_or(0)
}

/// Adam state mirroring a [`SpikingActor`]'s tensors.
#[derive(Clone, Debug)]
pub struct SpikingAdam<T> {
    pub opt: Adam<T>,
    layers: Vec<(Moments<T, ndarray::Ix2>, Moments<T, ndarray::Ix1>)>,
    dec: (Moments<T, ndarray::Ix2>, Moments<T, ndarray::Ix1>),
    enc: Option<(Moments<T, ndarray::Ix2>, Moments<T, ndarray::Ix2>)>,
    theta: Option<Vec<[Moments<T, ndarray::Ix1>; 4]>>,
}

/// Clamp bound on learnable theta parameters; avoids degenerate dynamics.
pub const THETA_CLAMP: f64 = 2.0;

impl<T: Scalar> SpikingAdam<T> {
    pub fn new(actor: &SpikingActor<T>, lr: T) -> Self {
        let layers = actor
            .layers
            .iter()
            .map(|l| (Moments::zeros_like(&l.w_t), Moments::zeros_like(&l.b)))
            .collect();
        let dec = (Moments::zeros_like(&actor.decoder.w), Moments::zeros_like(&actor.decoder.b));
        let enc = actor
            .encoder
            .as_ref()
            .map(|e| (Moments::zeros_like(&e.mu), Moments::zeros_like(&e.sigma)));
        let theta = if actor.learn_theta {
            Some(
                actor
                    .layers
                    .iter()
                    .map(|l| {
                        [
                            Moments::zeros_like(&l.theta.a),
                            Moments::zeros_like(&l.theta.b),
                            Moments::zeros_like(&l.theta.c),
                            Moments::zeros_like(&l.theta.d),
                        ]
                    })
                    .collect(),
            )
        } else {
            None
        };
        SpikingAdam { opt: Adam::new(lr), layers, dec, enc, theta }
    }

    /// Moments flattened per tensor: layers (w, b)*, decoder w, decoder b,
    /// then encoder mu/sigma and per-layer theta a..d when present.
    pub fn export_moments(&self) -> (u64, Vec<Vec<T>>, Vec<Vec<T>>) {
        let mut m: Vec<Vec<T>> = Vec::new();
        let mut v: Vec<Vec<T>> = Vec::new();
        let push = |mm: &mut Vec<Vec<T>>, it: Box<dyn Iterator<Item = T> + '_>| {
            mm.push(it.collect())
        };
        for (mw, mb) in &self.layers {
            push(&mut m, Box::new(mw.m.iter().copied()));
            push(&mut v, Box::new(mw.v.iter().copied()));
            push(&mut m, Box::new(mb.m.iter().copied()));
            push(&mut v, Box::new(mb.v.iter().copied()));
        }
        push(&mut m, Box::new(self.dec.0.m.iter().copied()));
        push(&mut v, Box::new(self.dec.0.v.iter().copied()));
        push(&mut m, Box::new(self.dec.1.m.iter().copied()));
        push(&mut v, Box::new(self.dec.1.v.iter().copied()));
        if let Some((emu, esig)) = &self.enc {
            push(&mut m, Box::new(emu.m.iter().copied()));
            push(&mut v, Box::new(emu.v.iter().copied()));
            push(&mut m, Box::new(esig.m.iter().copied()));
            push(&mut v, Box::new(esig.v.iter().copied()));
        }
        if let Some(ts) = &self.theta {
            for moms in ts {
                for t in moms {
                    push(&mut m, Box::new(t.m.iter().copied()));
                    push(&mut v, Box::new(t.v.iter().copied()));
                }
            }
        }
        (self.opt.t, m, v)
    }

    pub fn import_moments(&mut self, t: u64, m: &[Vec<T>], v: &[Vec<T>]) -> Result<()> {
        use crate::critic::fill1;
        let mut idx = 0usize;
        let mut take = |m: &[Vec<T>], v: &[Vec<T>],
                        dm: &mut ndarray::ArrayViewMutD<T>,
                        dv: &mut ndarray::ArrayViewMutD<T>|
         -> Result<()> {
            let i = idx;
            idx += 1;
            if i >= m.len() {
                return Err(Error::Checkpoint("too few optimizer tensors".into()));
            }
            fill1(dm, &m[i])?;
            fill1(dv, &v[i])
        };
        self.opt.t = t;
        for (mw, mb) in self.layers.iter_mut() {
            take(m, v, &mut mw.m.view_mut().into_dyn(), &mut mw.v.view_mut().into_dyn())?;
            take(m, v, &mut mb.m.view_mut().into_dyn(), &mut mb.v.view_mut().into_dyn())?;
        }
        take(m, v, &mut self.dec.0.m.view_mut().into_dyn(), &mut self.dec.0.v.view_mut().into_dyn())?;
        take(m, v, &mut self.dec.1.m.view_mut().into_dyn(), &mut self.dec.1.v.view_mut().into_dyn())?;
        if let Some((emu, esig)) = self.enc.as_mut() {
            take(m, v, &mut emu.m.view_mut().into_dyn(), &mut emu.v.view_mut().into_dyn())?;
            take(m, v, &mut esig.m.view_mut().into_dyn(), &mut esig.v.view_mut().into_dyn())?;
        }
        if let Some(ts) = self.theta.as_mut() {
            for moms in ts {
                for tm in moms {
                    take(m, v, &mut tm.m.view_mut().into_dyn(), &mut tm.v.view_mut().into_dyn())?;
                }
            }
        }
        if idx != m.len() {
            return Err(Error::Checkpoint("optimizer tensor count mismatch".into()));
        }
        Ok(())
    }

    /// One Adam step over every actor tensor. Non-finite gradients abort
    /// without touching parameters; sigma is clamped back to its floor and
    /// learnable thetas to their bounds afterwards.
    pub fn apply(&mut self, actor: &mut SpikingActor<T>, grads: &ActorGrads<T>) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFiniteGradient("spiking actor"));
        }
        self.opt.begin_step();
        for (l, (gw, gb)) in grads.layers.iter().enumerate() {
            let (mw, mb) = &mut self.layers[l];
            self.opt.update(&mut actor.layers[l].w_t, &gw.view(), &mut mw.m, &mut mw.v);
            self.opt.update(&mut actor.layers[l].b, &gb.view(), &mut mb.m, &mut mb.v);
        }
        self.opt.update(&mut actor.decoder.w, &grads.dec_w.view(), &mut self.dec.0.m, &mut self.dec.0.v);
        self.opt.update(&mut actor.decoder.b, &grads.dec_b.view(), &mut self.dec.1.m, &mut self.dec.1.v);
        if let (Some(enc), Some((mm, ms)), Some(gm), Some(gs)) = (
            actor.encoder.as_mut(),
            self.enc.as_mut().map(|e| (&mut e.0, &mut e.1)),
            grads.enc_mu.as_ref(),
            grads.enc_sigma.as_ref(),
        ) {
            self.opt.update(&mut enc.mu, &gm.view(), &mut mm.m, &mut mm.v);
            self.opt.update(&mut enc.sigma, &gs.view(), &mut ms.m, &mut ms.v);
            enc.clamp_sigma();
        }
        if let (Some(tmoms), Some(tgrads)) = (self.theta.as_mut(), grads.theta.as_ref()) {
            let clamp = T::from_f64(THETA_CLAMP);
            for (l, (moms, tg)) in tmoms.iter_mut().zip(tgrads).enumerate() {
                let th = &mut actor.layers[l].theta;
                self.opt.update(&mut th.a, &tg.a.view(), &mut moms[0].m, &mut moms[0].v);
                self.opt.update(&mut th.b, &tg.b.view(), &mut moms[1].m, &mut moms[1].v);
                self.opt.update(&mut th.c, &tg.c.view(), &mut moms[2].m, &mut moms[2].v);
                self.opt.update(&mut th.d, &tg.d.view(), &mut moms[3].m, &mut moms[3].v);
                for arr in [&mut th.a, &mut th.b, &mut th.c, &mut th.d] {
                    arr.mapv_inplace(|x| x.min(clamp).max(-clamp));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neurons::LayerState;
    use ndarray::array;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn small_actor(coding: InputCoding, neuron: NeuronKind, seed: u64) -> SpikingActor<f64> {
        let cfg = SpikingActorConfig {
            coding,
            neuron,
            hidden: vec![6],
            pop_size: 3,
            out_pop: 4,
            t1: 5,
            ..SpikingActorConfig::default()
        };
        SpikingActor::new(&cfg, &[-1.0, -2.0], &[1.0, 2.0], 2, &mut rng(seed))
    }

    #[test]
    fn zero_weights_give_tanh_of_decoder_bias() {
        let mut actor = small_actor(InputCoding::Pop, NeuronKind::Dn, 0);
        for l in &mut actor.layers {
            l.w_t.fill(0.0);
            l.b.fill(0.0);
        }
        actor.decoder.b[0] = 0.7;
        actor.decoder.b[1] = -0.2;
        let (a, trace) = actor.forward(&[0.3, -0.5], &mut rng(1)).unwrap();
        assert!(trace.fr.iter().all(|&f| f == 0.0));
        assert!((a[0] - 0.7f64.tanh()).abs() < 1e-15);
        assert!((a[1] - (-0.2f64).tanh()).abs() < 1e-15);
    }

    #[test]
    fn firing_rates_are_bounded_counts() {
        let actor = small_actor(InputCoding::Pop, NeuronKind::Dn, 2);
        let (_, trace) = actor.forward(&[0.9, 1.4], &mut rng(3)).unwrap();
        for &f in trace.fr.iter() {
            assert!((0.0..=1.0).contains(&f));
        }
        for &s in trace.sc.iter() {
            assert!(s >= 0.0 && s <= actor.t1 as f64 && s.fract() == 0.0);
        }
        for &a in trace.actions.iter() {
            assert!((-1.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn pop_forward_is_deterministic() {
        let actor = small_actor(InputCoding::Pop, NeuronKind::Dn, 4);
        let a = actor.act(&[0.2, 0.4], &mut rng(5)).unwrap();
        let b = actor.act(&[0.2, 0.4], &mut rng(999)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_step_single_layer_matches_hand_computation() {
        // T1 = 1, one layer: drive = W a_e + b into one dn_step, then decode.
        let cfg = SpikingActorConfig {
            coding: InputCoding::Pop,
            neuron: NeuronKind::Dn,
            hidden: vec![],
            pop_size: 2,
            out_pop: 3,
            t1: 1,
            ..SpikingActorConfig::default()
        };
        let mut actor = SpikingActor::<f64>::new(&cfg, &[0.0], &[1.0], 1, &mut rng(6));
        actor.layers[0].w_t = array![[0.9, 0.0, 0.4], [0.0, 1.1, 0.2]];
        actor.layers[0].b = array![0.1, -0.05, 0.0];
        actor.decoder.w = array![[0.5, -0.3, 0.25]];
        actor.decoder.b = array![0.02];

        let s = [0.35];
        let enc = actor.encoder.as_ref().unwrap();
        let a_e = encode_population(&s, enc).unwrap();
        let drive = array![
            a_e[[0, 0]] * 0.9 + a_e[[0, 1]] * 0.0 + 0.1,
            a_e[[0, 0]] * 0.0 + a_e[[0, 1]] * 1.1 - 0.05,
            a_e[[0, 0]] * 0.4 + a_e[[0, 1]] * 0.2 + 0.0,
        ];
        let mut st = LayerState::<f64>::zeros(3);
        crate::neurons::dn_step(&mut st, &drive.view(), &DnParams::default());
        let expected = decode(&st.o.view(), 1, &actor.decoder);

        let (got, _) = actor.forward(&s, &mut rng(7)).unwrap();
        assert!((got[0] - expected[0]).abs() < 1e-12, "{} vs {}", got[0], expected[0]);
    }

    #[test]
    fn decode_edge_cases() {
        let dec = PopDecoder { w: array![[0.5f64, -1.0, 0.25]], b: array![0.1] };
        let t1 = 5;
        let zeros = array![0.0f64, 0.0, 0.0];
        let a = decode(&zeros.view(), t1, &dec);
        assert!((a[0] - 0.1f64.tanh()).abs() < 1e-15);

        let full = array![5.0f64, 5.0, 5.0];
        let a = decode(&full.view(), t1, &dec);
        assert!((a[0] - (0.5 - 1.0 + 0.25 + 0.1f64).tanh()).abs() < 1e-15);

        let sc = array![3.0f64, 1.0, 4.0];
        let a = decode(&sc.view(), t1, &dec);
        let z: f64 = 0.5 * 3.0 / 5.0 - 1.0 * 1.0 / 5.0 + 0.25 * 4.0 / 5.0 + 0.1;
        assert!((a[0] - z.tanh()).abs() < 1e-15);
    }

    #[test]
    fn zero_grad_action_zeroes_everything() {
        let actor = small_actor(InputCoding::Pop, NeuronKind::Dn, 8);
        let (_, trace) = actor.forward(&[0.5, -1.0], &mut rng(9)).unwrap();
        let g = array![[0.0f64, 0.0]];
        let grads = actor.backward_batch(&trace, &g.view()).unwrap();
        assert!(grads.layers.iter().all(|(w, b)| w.iter().all(|&x| x == 0.0)
            && b.iter().all(|&x| x == 0.0)));
        assert!(grads.dec_w.iter().all(|&x| x == 0.0));
        assert!(grads.enc_mu.unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn decoder_gradients_match_finite_differences() {
        // Spikes frozen in the trace make the decode path smooth; compare
        // against central differences of decode() alone.
        let actor = small_actor(InputCoding::Pop, NeuronKind::Dn, 10);
        let (_, trace) = actor.forward(&[0.4, 0.8], &mut rng(11)).unwrap();
        let g = array![[1.0f64, -0.5]];
        let grads = actor.backward_batch(&trace, &g.view()).unwrap();

        let h = 1e-6;
        let sc = trace.sc.row(0).to_owned();
        let weighted = |dec: &PopDecoder<f64>| -> f64 {
            let a = decode(&sc.view(), actor.t1, dec);
            1.0 * a[0] - 0.5 * a[1]
        };
        for j in 0..actor.m {
            for k in 0..actor.out_pop {
                let mut dp = actor.decoder.clone();
                dp.w[[j, k]] += h;
                let mut dm = actor.decoder.clone();
                dm.w[[j, k]] -= h;
                let fd = (weighted(&dp) - weighted(&dm)) / (2.0 * h);
                let got = grads.dec_w[[j, k]];
                let denom = fd.abs().max(1e-9);
                assert!(((got - fd) / denom).abs() < 1e-6, "w[{j},{k}]: {got} vs {fd}");
            }
            let mut dp = actor.decoder.clone();
            dp.b[j] += h;
            let mut dm = actor.decoder.clone();
            dm.b[j] -= h;
            let fd = (weighted(&dp) - weighted(&dm)) / (2.0 * h);
            let got = grads.dec_b[j];
            let denom = fd.abs().max(1e-9);
            assert!(((got - fd) / denom).abs() < 1e-6, "b[{j}]: {got} vs {fd}");
        }
    }

    #[test]
    fn apply_update_guards() {
        let mut actor = small_actor(InputCoding::Pop, NeuronKind::Dn, 12);
        let mut opt = SpikingAdam::new(&actor, 1e-3);
        let (_, trace) = actor.forward(&[0.1, 0.1], &mut rng(13)).unwrap();
        let mut grads = actor.backward_batch(&trace, &array![[0.3f64, 0.3]].view()).unwrap();

        // a poisoned gradient leaves parameters untouched
        let before = actor.layers[0].w_t.clone();
        grads.dec_b[0] = f64::NAN;
        assert!(matches!(
            opt.apply(&mut actor, &grads),
            Err(Error::NonFiniteGradient(_))
        ));
        assert_eq!(actor.layers[0].w_t, before);

        // zero grads leave parameters unchanged
        grads.dec_b[0] = 0.0;
        let zero = ActorGrads {
            layers: grads.layers.iter().map(|(w, b)| (Array2::zeros(w.raw_dim()), Array1::zeros(b.len()))).collect(),
            dec_w: Array2::zeros(grads.dec_w.raw_dim()),
            dec_b: Array1::zeros(grads.dec_b.len()),
            enc_mu: Some(Array2::zeros(actor.encoder.as_ref().unwrap().mu.raw_dim())),
            enc_sigma: Some(Array2::zeros(actor.encoder.as_ref().unwrap().sigma.raw_dim())),
            theta: None,
        };
        let w_before = actor.layers[1].w_t.clone();
        opt.apply(&mut actor, &zero).unwrap();
        assert_eq!(actor.layers[1].w_t, w_before);
    }

    #[test]
    fn sigma_driven_negative_is_clamped() {
        let mut actor = small_actor(InputCoding::Pop, NeuronKind::Dn, 14);
        actor.encoder.as_mut().unwrap().sigma.fill(1e-3 + 1e-5);
        let mut opt = SpikingAdam::new(&actor, 0.5);
        let (_, trace) = actor.forward(&[0.4, 0.2], &mut rng(15)).unwrap();
        let grads = actor.backward_batch(&trace, &array![[1.0f64, 1.0]].view()).unwrap();
        // a large lr drives sigma below the floor; the update clamps it back
        opt.apply(&mut actor, &grads).unwrap();
        for &s in actor.encoder.as_ref().unwrap().sigma.iter() {
            assert!(s >= 1e-3);
        }
    }

    #[test]
    fn soft_update_blends_every_tensor() {
        let online = small_actor(InputCoding::Pop, NeuronKind::Dn, 16);
        let mut target = small_actor(InputCoding::Pop, NeuronKind::Dn, 17);
        let before = target.layers[0].w_t[[0, 0]];
        let from = online.layers[0].w_t[[0, 0]];
        target.soft_update_from(&online, 0.25);
        assert!((target.layers[0].w_t[[0, 0]] - (0.25 * from + 0.75 * before)).abs() < 1e-15);
        // eta = 1 is a hard copy
        target.soft_update_from(&online, 1.0);
        assert_eq!(target.layers[0].w_t, online.layers[0].w_t);
        assert_eq!(target.encoder.as_ref().unwrap().mu, online.encoder.as_ref().unwrap().mu);
    }

    #[test]
    fn rate_codings_run_end_to_end() {
        for coding in [InputCoding::Uni, InputCoding::Poi, InputCoding::Det, InputCoding::PopPoi] {
            let actor = small_actor(coding, NeuronKind::Lif, 18);
            let (a, trace) = actor.forward(&[0.3, 1.0], &mut rng(19)).unwrap();
            assert_eq!(a.len(), 2);
            let g = array![[0.5f64, -0.25]];
            let grads = actor.backward_batch(&trace, &g.view()).unwrap();
            assert_eq!(grads.enc_mu.is_some(), coding.uses_population());
        }
    }
}
