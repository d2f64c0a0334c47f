//! Non-spiking actor variants: a plain MLP policy and a population-coded
//! MLP policy. Both share the critics' dense machinery and serve as the
//! baselines the spiking actor is compared against.

use ndarray::{Array1, Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;

use crate::actor::PopDecoder;
use crate::critic::{Activation, Mlp, MlpAdam, MlpGrads, MlpTrace, soft_update_mlp};
use crate::encoding::{encode_population, grad_population, PopulationEncoder};
use crate::error::{Error, Result};
use crate::optim::Moments;
use crate::scalar::Scalar;

/// Deep actor: either `state -> MLP -> tanh` or
/// `state -> population encoder -> MLP -> population decoder -> tanh`.
#[derive(Clone, Debug)]
pub struct DeepActor<T> {
    pub encoder: Option<PopulationEncoder<T>>,
    pub mlp: Mlp<T>,
    pub decoder: Option<PopDecoder<T>>,
    pub n: usize,
    pub m: usize,
    pub out_pop: usize,
}

/// Forward records for [`DeepActor::backward_batch`].
#[derive(Clone, Debug)]
pub struct DeepTrace<T> {
    pub states: Array2<T>,
    pub stim: Option<Array2<T>>,
    pub mlp: MlpTrace<T>,
    /// Post-tanh actions.
    pub actions: Array2<T>,
}

/// Gradients for the deep actor's tensors.
#[derive(Clone, Debug)]
pub struct DeepGrads<T> {
    pub mlp: MlpGrads<T>,
    pub dec_w: Option<Array2<T>>,
    pub dec_b: Option<Array1<T>>,
    pub enc_mu: Option<Array2<T>>,
    pub enc_sigma: Option<Array2<T>>,
}

impl<T: Scalar> DeepGrads<T> {
    pub fn is_finite(&self) -> bool {
        self.mlp.is_finite()
            && self.dec_w.as_ref().is_none_or(|a| a.iter().all(|x| x.is_finite()))
            && self.dec_b.as_ref().is_none_or(|a| a.iter().all(|x| x.is_finite()))
            && self.enc_mu.as_ref().is_none_or(|a| a.iter().all(|x| x.is_finite()))
            && self.enc_sigma.as_ref().is_none_or(|a| a.iter().all(|x| x.is_finite()))
    }

    pub fn sq_norm(&self) -> T {
        let s1 = |a: &Option<Array1<T>>| {
            a.as_ref().map_or(T::zero(), |a| a.iter().map(|&x| x * x).sum())
        };
        let s2 = |a: &Option<Array2<T>>| {
            a.as_ref().map_or(T::zero(), |a| a.iter().map(|&x| x * x).sum())
        };
        self.mlp.sq_norm() + s2(&self.dec_w) + s1(&self.dec_b) + s2(&self.enc_mu) + s2(&self.enc_sigma)
    }
}

impl<T: Scalar> DeepActor<T> {
    /// Plain MLP policy `(256, relu, 256, relu, m, tanh)`.
    pub fn plain(n: usize, m: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut sizes = vec![n];
        sizes.extend_from_slice(hidden);
        sizes.push(m);
        let mut acts = vec![Activation::Relu; hidden.len()];
        acts.push(Activation::Tanh);
        DeepActor { encoder: None, mlp: Mlp::new(&sizes, &acts, rng), decoder: None, n, m, out_pop: 0 }
    }

    /// Population-coded MLP policy: the encoder widens each state dimension
    /// into `p` stimulation values, the MLP ends in an `m * out_pop` relu
    /// layer that the population decoder reads out per action dimension.
    #[allow(clippy::too_many_arguments)]
    pub fn population(
        n: usize,
        m: usize,
        hidden: &[usize],
        pop_size: usize,
        out_pop: usize,
        obs_low: &[T],
        obs_high: &[T],
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut sizes = vec![n * pop_size];
        sizes.extend_from_slice(hidden);
        sizes.push(m * out_pop);
        let acts = vec![Activation::Relu; hidden.len() + 1];
        let mlp = Mlp::new(&sizes, &acts, rng);
        let bound = T::from_f64(1.0 / (out_pop as f64).sqrt());
        let mut dec_w = Array2::zeros((m, out_pop));
        for x in dec_w.iter_mut() {
            *x = T::sample_range(rng, -bound, bound);
        }
        DeepActor {
            encoder: Some(PopulationEncoder::init(obs_low, obs_high, pop_size)),
            mlp,
            decoder: Some(PopDecoder { w: dec_w, b: Array1::zeros(m) }),
            n,
            m,
            out_pop,
        }
    }

    pub fn forward_batch(
        &self,
        states: &ArrayView2<T>,
        want_trace: bool,
    ) -> Result<(Array2<T>, Option<DeepTrace<T>>)> {
        if states.ncols() != self.n {
            return Err(Error::Dimension(format!(
                "state has {} dims, actor expects {}",
                states.ncols(),
                self.n
            )));
        }
        let batch = states.nrows();
        let (mlp_in, stim) = match &self.encoder {
            Some(enc) => {
                let p = enc.pop_size();
                let mut stim = Array2::zeros((batch, self.n * p));
                for (i, row) in states.rows().into_iter().enumerate() {
                    let a = encode_population(row.as_slice().expect("contiguous row"), enc)?;
                    stim.row_mut(i).assign(&Array1::from_iter(a.iter().copied()));
                }
                (stim.clone(), Some(stim))
            }
            None => (states.to_owned(), None),
        };
        let (out, mlp_trace) = if want_trace {
            self.mlp.forward_batch(&mlp_in.view())?
        } else {
            let out = self.mlp.infer_batch(&mlp_in.view())?;
            (out, MlpTrace { input: Array2::zeros((0, 0)), post: Vec::new() })
        };
        let actions = match &self.decoder {
            Some(dec) => {
                let op = self.out_pop;
                let mut a = Array2::zeros((batch, self.m));
                for j in 0..self.m {
                    let block = out.slice(ndarray::s![.., j * op..(j + 1) * op]);
                    let z = block.dot(&dec.w.row(j));
                    for i in 0..batch {
                        a[[i, j]] = (z[i] + dec.b[j]).tanh();
                    }
                }
                a
            }
            // plain variant: tanh is the MLP's final activation
            None => out,
        };
        let trace = want_trace.then(|| DeepTrace {
            states: states.to_owned(),
            stim,
            mlp: mlp_trace,
            actions: actions.clone(),
        });
        Ok((actions, trace))
    }

    pub fn act(&self, state: &[T]) -> Result<Vec<T>> {
        if state.len() != self.n {
            return Err(Error::Dimension(format!(
                "state has {} dims, actor expects {}",
                state.len(),
                self.n
            )));
        }
        let mlp_in: Vec<T> = match &self.encoder {
            Some(enc) => encode_population(state, enc)?.into_iter().collect(),
            None => state.to_vec(),
        };
        let out = self.mlp.infer_one(&mlp_in)?;
        match &self.decoder {
            Some(dec) => {
                let op = self.out_pop;
                Ok((0..self.m)
                    .map(|j| {
                        let mut z = dec.b[j];
                        for k in 0..op {
                            z += dec.w[[j, k]] * out[j * op + k];
                        }
                        z.tanh()
                    })
                    .collect())
            }
            None => Ok(out.to_vec()),
        }
    }

    /// Exact backward over the recorded trace; gradients are summed over the
    /// batch (any mean scaling belongs to `grad_actions`).
    pub fn backward_batch(
        &self,
        trace: &DeepTrace<T>,
        grad_actions: &ArrayView2<T>,
    ) -> Result<DeepGrads<T>> {
        let batch = trace.states.nrows();
        if grad_actions.dim() != (batch, self.m) {
            return Err(Error::Dimension("grad_actions shape".into()));
        }
        let one = T::one();
        match &self.decoder {
            Some(dec) => {
                // tanh at the decoder output
                let mut g_z = grad_actions.to_owned();
                ndarray::Zip::from(&mut g_z).and(&trace.actions).for_each(|g, &a| {
                    *g *= one - a * a;
                });
                let op = self.out_pop;
                let h = trace.mlp.post.last().expect("mlp output");
                let mut dec_w = Array2::zeros(dec.w.raw_dim());
                let mut dec_b = Array1::zeros(self.m);
                let mut g_h = Array2::zeros((batch, self.m * op));
                for j in 0..self.m {
                    let block = h.slice(ndarray::s![.., j * op..(j + 1) * op]);
                    let gz_col = g_z.column(j);
                    dec_w.row_mut(j).assign(&block.t().dot(&gz_col));
                    dec_b[j] = gz_col.sum();
                    for i in 0..batch {
                        for k in 0..op {
                            g_h[[i, j * op + k]] = gz_col[i] * dec.w[[j, k]];
                        }
                    }
                }
                let (mlp_grads, g_in) = self.mlp.backward_batch(&trace.mlp, &g_h.view())?;
                let (enc_mu, enc_sigma) = self.encoder_grads(trace, &g_in)?;
                Ok(DeepGrads { mlp: mlp_grads, dec_w: Some(dec_w), dec_b: Some(dec_b), enc_mu, enc_sigma })
            }
            None => {
                let (mlp_grads, _) = self.mlp.backward_batch(&trace.mlp, grad_actions)?;
                Ok(DeepGrads { mlp: mlp_grads, dec_w: None, dec_b: None, enc_mu: None, enc_sigma: None })
            }
        }
    }

    fn encoder_grads(
        &self,
        trace: &DeepTrace<T>,
        g_stim: &Array2<T>,
    ) -> Result<(Option<Array2<T>>, Option<Array2<T>>)> {
        let enc = match &self.encoder {
            Some(e) => e,
            None => return Ok((None, None)),
        };
        let p = enc.pop_size();
        let mut gmu = Array2::zeros((self.n, p));
        let mut gsigma = Array2::zeros((self.n, p));
        for (i, row) in trace.states.rows().into_iter().enumerate() {
            let up = Array2::from_shape_vec((self.n, p), g_stim.row(i).to_vec())
                .expect("upstream reshape");
            let (gm, gs) = grad_population(row.as_slice().unwrap(), enc, &up.view())?;
            gmu += &gm;
            gsigma += &gs;
        }
        Ok((Some(gmu), Some(gsigma)))
    }

    pub fn soft_update_from(&mut self, online: &Self, eta: T) {
        let one = T::one();
        soft_update_mlp(&mut self.mlp, &online.mlp, eta);
        if let (Some(td), Some(od)) = (self.decoder.as_mut(), online.decoder.as_ref()) {
            ndarray::Zip::from(&mut td.w).and(&od.w).for_each(|t, &o| *t = eta * o + (one - eta) * *t);
            ndarray::Zip::from(&mut td.b).and(&od.b).for_each(|t, &o| *t = eta * o + (one - eta) * *t);
        }
        if let (Some(te), Some(oe)) = (self.encoder.as_mut(), online.encoder.as_ref()) {
            ndarray::Zip::from(&mut te.mu).and(&oe.mu).for_each(|t, &o| *t = eta * o + (one - eta) * *t);
            ndarray::Zip::from(&mut te.sigma).and(&oe.sigma).for_each(|t, &o| *t = eta * o + (one - eta) * *t);
        }
    }
}

/// Adam state for a [`DeepActor`].
#[derive(Clone, Debug)]
pub struct DeepAdam<T> {
    pub mlp: MlpAdam<T>,
    dec: Option<(Moments<T, ndarray::Ix2>, Moments<T, ndarray::Ix1>)>,
    enc: Option<(Moments<T, ndarray::Ix2>, Moments<T, ndarray::Ix2>)>,
}

impl<T: Scalar> DeepAdam<T> {
    pub fn new(actor: &DeepActor<T>, lr: T) -> Self {
        DeepAdam {
            mlp: MlpAdam::new(&actor.mlp, lr),
            dec: actor
                .decoder
                .as_ref()
                .map(|d| (Moments::zeros_like(&d.w), Moments::zeros_like(&d.b))),
            enc: actor
                .encoder
                .as_ref()
                .map(|e| (Moments::zeros_like(&e.mu), Moments::zeros_like(&e.sigma))),
        }
    }

    /// Moments flattened per tensor: the MLP's (w, b)*, then decoder and
    /// encoder tensors when present.
    pub fn export_moments(&self) -> (u64, Vec<Vec<T>>, Vec<Vec<T>>) {
        let (t, mut m, mut v) = self.mlp.export_moments();
        if let Some((dw, db)) = &self.dec {
            m.push(dw.m.iter().copied().collect());
            v.push(dw.v.iter().copied().collect());
            m.push(db.m.iter().copied().collect());
            v.push(db.v.iter().copied().collect());
        }
        if let Some((emu, esig)) = &self.enc {
            m.push(emu.m.iter().copied().collect());
            v.push(emu.v.iter().copied().collect());
            m.push(esig.m.iter().copied().collect());
            v.push(esig.v.iter().copied().collect());
        }
        (t, m, v)
    }

    pub fn import_moments(&mut self, t: u64, m: &[Vec<T>], v: &[Vec<T>]) -> Result<()> {
        use crate::critic::fill1;
        let mlp_count = self.mlp.layers.len() * 2;
        let mut expected = mlp_count;
        if self.dec.is_some() {
            expected += 2;
        }
        if self.enc.is_some() {
            expected += 2;
        }
        if m.len() != expected || v.len() != expected {
            return Err(Error::Checkpoint("optimizer tensor count mismatch".into()));
        }
        self.mlp.import_moments(t, &m[..mlp_count], &v[..mlp_count])?;
        let mut i = mlp_count;
        if let Some((dw, db)) = self.dec.as_mut() {
            fill1(&mut dw.m.view_mut().into_dyn(), &m[i])?;
            fill1(&mut dw.v.view_mut().into_dyn(), &v[i])?;
            fill1(&mut db.m.view_mut().into_dyn(), &m[i + 1])?;
            fill1(&mut db.v.view_mut().into_dyn(), &v[i + 1])?;
            i += 2;
        }
        if let Some((emu, esig)) = self.enc.as_mut() {
            fill1(&mut emu.m.view_mut().into_dyn(), &m[i])?;
            fill1(&mut emu.v.view_mut().into_dyn(), &v[i])?;
            fill1(&mut esig.m.view_mut().into_dyn(), &m[i + 1])?;
            fill1(&mut esig.v.view_mut().into_dyn(), &v[i + 1])?;
        }
        Ok(())
    }

    pub fn apply(&mut self, actor: &mut DeepActor<T>, grads: &DeepGrads<T>) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFiniteGradient("deep actor"));
        }
        self.mlp.apply(&mut actor.mlp, &grads.mlp)?;
        let opt = self.mlp.opt;
        if let (Some(dec), Some((mw, mb)), Some(gw), Some(gb)) = (
            actor.decoder.as_mut(),
            self.dec.as_mut().map(|d| (&mut d.0, &mut d.1)),
            grads.dec_w.as_ref(),
            grads.dec_b.as_ref(),
        ) {
            opt.update(&mut dec.w, &gw.view(), &mut mw.m, &mut mw.v);
            opt.update(&mut dec.b, &gb.view(), &mut mb.m, &mut mb.v);
        }
        if let (Some(enc), Some((mm, ms)), Some(gm), Some(gs)) = (
            actor.encoder.as_mut(),
            self.enc.as_mut().map(|e| (&mut e.0, &mut e.1)),
            grads.enc_mu.as_ref(),
            grads.enc_sigma.as_ref(),
        ) {
            opt.update(&mut enc.mu, &gm.view(), &mut mm.m, &mut mm.v);
            opt.update(&mut enc.sigma, &gs.view(), &mut ms.m, &mut ms.v);
            enc.clamp_sigma();
        }
        Ok(())
    }
}
