//! Fully-connected networks with exact analytic gradients, used for the twin
//! critics and for the non-spiking actor variants.

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::optim::{Adam, Moments};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            Activation::Linear => x,
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the post-activation value. For relu the
    /// subgradient at 0 is 0, which makes `post > 0` the exact mask.
    #[inline]
    fn derive_from_post<T: Scalar>(self, post: T) -> T {
        match self {
            Activation::Relu => {
                if post > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Linear => T::one(),
            Activation::Tanh => T::one() - post * post,
        }
    }
}

/// One affine layer; `w` is out x in.
#[derive(Clone, Debug)]
pub struct Dense<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    /// Uniform fan-in-scaled init, zero biases.
    pub fn init(inp: usize, out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = T::from_f64(1.0 / (inp as f64).sqrt());
        let mut w = Array2::zeros((out, inp));
        for x in w.iter_mut() {
            *x = T::sample_range(rng, -bound, bound);
        }
        Dense { w, b: Array1::zeros(out) }
    }
}

/// A plain multi-layer perceptron: affine layers with one activation each.
#[derive(Clone, Debug)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
    pub acts: Vec<Activation>,
}

/// Everything the backward pass needs: the input batch and every layer's
/// post-activation values.
#[derive(Clone, Debug)]
pub struct MlpTrace<T> {
    pub input: Array2<T>,
    pub post: Vec<Array2<T>>,
}

/// Per-layer weight and bias gradients.
#[derive(Clone, Debug)]
pub struct MlpGrads<T> {
    pub layers: Vec<(Array2<T>, Array1<T>)>,
}

impl<T: Scalar> MlpGrads<T> {
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().all(|x| x.is_finite()) && b.iter().all(|x| x.is_finite()))
    }

    pub fn sq_norm(&self) -> T {
        self.layers
            .iter()
            .map(|(w, b)| {
                w.iter().map(|&x| x * x).sum::<T>() + b.iter().map(|&x| x * x).sum::<T>()
            })
            .sum()
    }
}

impl<T: Scalar> Mlp<T> {
    pub fn new(sizes: &[usize], acts: &[Activation], rng: &mut ChaCha8Rng) -> Self {
        assert_eq!(sizes.len(), acts.len() + 1, "one activation per layer");
        let layers = sizes
            .windows(2)
            .map(|wn| Dense::init(wn[0], wn[1], rng))
            .collect();
        Mlp { layers, acts: acts.to_vec() }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map(|l| l.w.ncols()).unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.w.nrows()).unwrap_or(0)
    }

    /// Forward a batch (rows are samples); the trace records what backward
    /// needs.
    pub fn forward_batch(&self, x: &ArrayView2<T>) -> Result<(Array2<T>, MlpTrace<T>)> {
        let (out, trace) = self.forward_impl(x, true)?;
        Ok((out, trace.expect("trace requested")))
    }

    /// Trace-free forward for target computations and rollouts.
    pub fn infer_batch(&self, x: &ArrayView2<T>) -> Result<Array2<T>> {
        Ok(self.forward_impl(x, false)?.0)
    }

    fn forward_impl(
        &self,
        x: &ArrayView2<T>,
        want_trace: bool,
    ) -> Result<(Array2<T>, Option<MlpTrace<T>>)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "mlp input has {} columns, expected {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let mut trace = want_trace
            .then(|| MlpTrace { input: x.to_owned(), post: Vec::with_capacity(self.layers.len()) });
        let mut cur = x.to_owned();
        for (layer, &act) in self.layers.iter().zip(&self.acts) {
            let mut pre = if cur.nrows() == 1 {
                affine_one(&layer.w, &layer.b, cur.row(0).as_slice().expect("contiguous row"))
                    .insert_axis(Axis(0))
            } else {
                let mut p = cur.dot(&layer.w.t());
                for mut row in p.rows_mut() {
                    row += &layer.b;
                }
                p
            };
            pre.mapv_inplace(|z| act.apply(z));
            if let Some(t) = trace.as_mut() {
                t.post.push(pre.clone());
            }
            cur = pre;
        }
        Ok((cur, trace))
    }

    pub fn forward_one(&self, x: &ArrayView1<T>) -> Result<(Array1<T>, MlpTrace<T>)> {
        let x2 = x.to_owned().insert_axis(Axis(0));
        let (out, trace) = self.forward_batch(&x2.view())?;
        Ok((out.row(0).to_owned(), trace))
    }

    /// Trace-free single-sample forward (dot loops; avoids gemm packing
    /// overhead on one-row products).
    pub fn infer_one(&self, x: &[T]) -> Result<Array1<T>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "mlp input has {} values, expected {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut cur: Array1<T> = Array1::from_vec(x.to_vec());
        for (layer, &act) in self.layers.iter().zip(&self.acts) {
            let mut pre = affine_one(&layer.w, &layer.b, cur.as_slice().unwrap());
            pre.mapv_inplace(|z| act.apply(z));
            cur = pre;
        }
        Ok(cur)
    }

    /// Exact chain rule over the recorded trace. Returns parameter gradients
    /// and the gradient with respect to the input batch.
    pub fn backward_batch(
        &self,
        trace: &MlpTrace<T>,
        grad_out: &ArrayView2<T>,
    ) -> Result<(MlpGrads<T>, Array2<T>)> {
        if grad_out.dim() != trace.post.last().map(|p| p.dim()).unwrap_or((0, 0)) {
            return Err(Error::Dimension("grad_out does not match trace output".into()));
        }
        let n_layers = self.layers.len();
        let mut grads = MlpGrads { layers: Vec::with_capacity(n_layers) };
        let mut delta = grad_out.to_owned();
        for l in (0..n_layers).rev() {
            // through the activation
            let post = &trace.post[l];
            ndarray::Zip::from(&mut delta).and(post).for_each(|d, &p| {
                *d *= self.acts[l].derive_from_post(p);
            });
            let below: &Array2<T> = if l == 0 { &trace.input } else { &trace.post[l - 1] };
            let gw = delta.t().dot(below);
            let gb = delta.sum_axis(Axis(0));
            grads.layers.push((gw, gb));
            // for l == 0 this is the gradient with respect to the input
            delta = delta.dot(&self.layers[l].w);
        }
        grads.layers.reverse();
        Ok((grads, delta))
    }
}

/// Adam state mirroring an [`Mlp`]'s tensors.
#[derive(Clone, Debug)]
pub struct MlpAdam<T> {
    pub opt: Adam<T>,
    pub layers: Vec<(Moments<T, ndarray::Ix2>, Moments<T, ndarray::Ix1>)>,
}

impl<T: Scalar> MlpAdam<T> {
    pub fn new(net: &Mlp<T>, lr: T) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| (Moments::zeros_like(&l.w), Moments::zeros_like(&l.b)))
            .collect();
        MlpAdam { opt: Adam::new(lr), layers }
    }

    /// Moments flattened per tensor, layer order (w, b)*.
    pub fn export_moments(&self) -> (u64, Vec<Vec<T>>, Vec<Vec<T>>) {
        let mut m = Vec::new();
        let mut v = Vec::new();
        for (mw, mb) in &self.layers {
            m.push(mw.m.iter().copied().collect());
            v.push(mw.v.iter().copied().collect());
            m.push(mb.m.iter().copied().collect());
            v.push(mb.v.iter().copied().collect());
        }
        (self.opt.t, m, v)
    }

    pub fn import_moments(&mut self, t: u64, m: &[Vec<T>], v: &[Vec<T>]) -> Result<()> {
        if m.len() != self.layers.len() * 2 || v.len() != m.len() {
            return Err(Error::Checkpoint("optimizer tensor count mismatch".into()));
        }
        self.opt.t = t;
        for (l, (mw, mb)) in self.layers.iter_mut().enumerate() {
            fill1(&mut mw.m.view_mut().into_dyn(), &m[2 * l])?;
            fill1(&mut mw.v.view_mut().into_dyn(), &v[2 * l])?;
            fill1(&mut mb.m.view_mut().into_dyn(), &m[2 * l + 1])?;
            fill1(&mut mb.v.view_mut().into_dyn(), &v[2 * l + 1])?;
        }
        Ok(())
    }

    /// One optimizer step; rejects non-finite gradients without touching the
    /// parameters.
    pub fn apply(&mut self, net: &mut Mlp<T>, grads: &MlpGrads<T>) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFiniteGradient("mlp"));
        }
        self.opt.begin_step();
        for (l, (gw, gb)) in grads.layers.iter().enumerate() {
            let (mw, mb) = &mut self.layers[l];
            self.opt.update(&mut net.layers[l].w, &gw.view(), &mut mw.m, &mut mw.v);
            self.opt.update(&mut net.layers[l].b, &gb.view(), &mut mb.m, &mut mb.v);
        }
        Ok(())
    }
}

/// Action-value network Q(s, a): states and actions concatenated through a
/// (256, relu, 256, relu, 1, linear) stack.
#[derive(Clone, Debug)]
pub struct Critic<T> {
    pub net: Mlp<T>,
    pub n: usize,
    pub m: usize,
}

impl<T: Scalar> Critic<T> {
    pub fn new(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Self {
        let net = Mlp::new(
            &[n + m, 256, 256, 1],
            &[Activation::Relu, Activation::Relu, Activation::Linear],
            rng,
        );
        Critic { net, n, m }
    }

    pub fn join(&self, states: &ArrayView2<T>, actions: &ArrayView2<T>) -> Array2<T> {
        concatenate![Axis(1), *states, *actions]
    }

    /// Q-values for a batch, one row per sample.
    pub fn q_batch(
        &self,
        states: &ArrayView2<T>,
        actions: &ArrayView2<T>,
    ) -> Result<(Array1<T>, MlpTrace<T>)> {
        let x = self.join(states, actions);
        let (out, trace) = self.net.forward_batch(&x.view())?;
        Ok((out.column(0).to_owned(), trace))
    }

    /// Trace-free Q-values (target computations).
    pub fn q_values(&self, states: &ArrayView2<T>, actions: &ArrayView2<T>) -> Result<Array1<T>> {
        let x = self.join(states, actions);
        Ok(self.net.infer_batch(&x.view())?.column(0).to_owned())
    }

    /// Q-value for a single state-action pair.
    pub fn q_one(&self, s: &[T], a: &[T]) -> Result<T> {
        let x: Vec<T> = s.iter().chain(a.iter()).copied().collect();
        Ok(self.net.infer_one(&x)?[0])
    }

    /// Backward from per-sample dL/dq. Returns parameter gradients plus the
    /// gradient with respect to the action inputs (for the policy update).
    pub fn backward(
        &self,
        trace: &MlpTrace<T>,
        grad_q: &ArrayView1<T>,
    ) -> Result<(MlpGrads<T>, Array2<T>)> {
        let g = grad_q.to_owned().insert_axis(Axis(1));
        let (grads, gx) = self.net.backward_batch(trace, &g.view())?;
        let ga = gx.slice(ndarray::s![.., self.n..]).to_owned();
        Ok((grads, ga))
    }
}

/// `w x + b` for one sample over row-major weights.
fn affine_one<T: Scalar>(w: &Array2<T>, b: &Array1<T>, x: &[T]) -> Array1<T> {
    let mut out = b.clone();
    let ws = w.as_slice().expect("contiguous weights");
    let inp = w.ncols();
    for (k, o) in out.iter_mut().enumerate() {
        let row = &ws[k * inp..(k + 1) * inp];
        let mut acc = T::zero();
        for (&wi, &xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        *o += acc;
    }
    out
}

/// Refill a moment tensor from its flattened checkpoint form.
pub(crate) fn fill1<T: Scalar>(
    dst: &mut ndarray::ArrayViewMutD<T>,
    src: &[T],
) -> Result<()> {
    if dst.len() != src.len() {
        return Err(Error::Checkpoint("moment tensor length mismatch".into()));
    }
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = s;
    }
    Ok(())
}

/// Element-wise soft update `target = eta * online + (1 - eta) * target`
/// across two MLPs of identical shape.
pub fn soft_update_mlp<T: Scalar>(target: &mut Mlp<T>, online: &Mlp<T>, eta: T) {
    let one = T::one();
    for (tl, ol) in target.layers.iter_mut().zip(&online.layers) {
        ndarray::Zip::from(&mut tl.w).and(&ol.w).for_each(|t, &o| *t = eta * o + (one - eta) * *t);
        ndarray::Zip::from(&mut tl.b).and(&ol.b).for_each(|t, &o| *t = eta * o + (one - eta) * *t);
    }
}
