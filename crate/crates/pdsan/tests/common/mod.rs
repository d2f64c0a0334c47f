//! Independent oracles for the acceptance suite: plain scalar transcriptions
//! of the neuron updates and a straightforward loop-by-loop replay of the
//! actor's backward equations. Nothing here shares code with the library's
//! compute paths.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use ndarray::{Array1, Array2};
use pdsan::actor::{ForwardInput, ForwardTrace, NeuronKind, SpikingActor};

/// One dynamic-neuron update, written as a direct scalar transcription of
/// the forward recurrence.
#[allow(clippy::too_many_arguments)]
pub fn dn_oracle_step(
    c: f64,
    v: f64,
    u: f64,
    o: f64,
    drive: f64,
    theta: (f64, f64, f64, f64),
    v_th: f64,
    d_c: f64,
    clamp: Option<f64>,
) -> (f64, f64, f64, f64) {
    let (ta, tb, tc, td) = theta;
    let c_new = d_c * c + drive;
    let v_reset = v * (1.0 - o) + o * tc;
    let u_reset = u + o * td;
    let v_delta = v_reset * v_reset - v_reset - u_reset + c_new;
    let u_delta = ta * (tb * v_reset - u_reset);
    let mut v_new = v_reset + v_delta;
    if let Some(cl) = clamp {
        if v_new > cl {
            v_new = cl;
        }
        if v_new < -cl {
            v_new = -cl;
        }
    }
    let u_new = u_reset + u_delta;
    let o_new = if v_new > v_th { 1.0 } else { 0.0 };
    (c_new, v_new, u_new, o_new)
}

/// One LIF update, scalar transcription.
pub fn lif_oracle_step(
    c: f64,
    v: f64,
    o: f64,
    drive: f64,
    d_c: f64,
    v_f: f64,
    v_th: f64,
) -> (f64, f64, f64) {
    let c_new = d_c * c + drive;
    let v_new = v_f * v * (1.0 - o) + c_new;
    let o_new = if v_new > v_th { 1.0 } else { 0.0 };
    (c_new, v_new, o_new)
}

fn rect_window(v: f64, v_th: f64, w: f64) -> f64 {
    if (v - v_th).abs() < w {
        1.0
    } else {
        0.0
    }
}

/// Reference gradients mirroring the actor's tensor layout.
pub struct RefGrads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
    pub dec_w: Array2<f64>,
    pub dec_b: Array1<f64>,
    pub enc_mu: Option<Array2<f64>>,
    pub enc_sigma: Option<Array2<f64>>,
}

/// Replay the backward equations over a recorded single-sample trace with
/// plain nested loops:
///   - decoder: tanh derivative, then exact affine gradients per output
///     population;
///   - spike-count seed: the firing-rate gradient divided by the window
///     length, fed identically into every timestep's spike gradient;
///   - per layer, timestep descending: the current gradient takes the next
///     step's membrane gradient plus its own decayed future; the membrane
///     gradient takes the windowed spike path (times the membrane-update
///     derivative at the post-reset potential for dynamic neurons) plus the
///     reset-gated future; boundary gradients beyond the window are zero;
///   - weights accumulate input x current-gradient over the window; the
///     spike gradient of the layer below is the weight matrix applied to
///     the current gradient;
///   - receptive-field gradients from the summed stimulation gradient.
pub fn reference_backward(
    actor: &SpikingActor<f64>,
    trace: &ForwardTrace<f64>,
    grad_action: &[f64],
) -> RefGrads {
    assert_eq!(trace.states.nrows(), 1, "reference oracle is single-sample");
    let t1 = actor.t1;
    let m = actor.m;
    let op = actor.out_pop;
    let n_layers = actor.layers.len();
    let (v_th, d_c) = match actor.neuron {
        NeuronKind::Lif => (actor.lif.v_th, actor.lif.d_c),
        NeuronKind::Dn => (actor.dn_v_th, actor.dn_d_c),
    };
    let w_win = actor.surrogate_w;

    // decoder
    let mut g_z = vec![0.0; m];
    for j in 0..m {
        let a = trace.actions[[0, j]];
        g_z[j] = grad_action[j] * (1.0 - a * a);
    }
    let out_dim = actor.layers[n_layers - 1].out_dim();
    let mut dec_w = Array2::zeros((m, op));
    let mut dec_b = Array1::zeros(m);
    let mut g_fr = vec![0.0; out_dim];
    for j in 0..m {
        for k in 0..op {
            dec_w[[j, k]] = g_z[j] * trace.fr[[0, j * op + k]];
            g_fr[j * op + k] = g_z[j] * actor.decoder.w[[j, k]];
        }
        dec_b[j] = g_z[j];
    }
    let g_sc: Vec<f64> = g_fr.iter().map(|g| g / t1 as f64).collect();

    // spike gradient entering the top layer, equal at every timestep
    let mut g_o: Vec<Vec<f64>> = vec![g_sc.clone(); t1];

    let mut layers_out: Vec<(Array2<f64>, Array1<f64>)> = Vec::new();
    let mut enc_upstream: Option<Vec<f64>> = None;

    for l in (0..n_layers).rev() {
        let lt = &trace.layers[l];
        let width = actor.layers[l].out_dim();
        let in_dim = actor.layers[l].in_dim();
        let theta_c = &actor.layers[l].theta.c;

        let mut g_v_next = vec![0.0; width];
        let mut g_c_next = vec![0.0; width];
        let mut g_c_all: Vec<Vec<f64>> = vec![vec![0.0; width]; t1];

        for t in (0..t1).rev() {
            let mut g_c = vec![0.0; width];
            let mut g_v = vec![0.0; width];
            for i in 0..width {
                g_c[i] = g_v_next[i] + d_c * g_c_next[i];
                let v_post = lt.v[t][[0, i]];
                let o_now = lt.o[t][[0, i]];
                let spike_path = match actor.neuron {
                    NeuronKind::Lif => rect_window(v_post, v_th, w_win) * g_o[t][i],
                    NeuronKind::Dn => {
                        let v_pre = if t == 0 {
                            0.0
                        } else {
                            let v_prev = lt.v[t - 1][[0, i]];
                            let o_prev = lt.o[t - 1][[0, i]];
                            v_prev * (1.0 - o_prev) + o_prev * theta_c[i]
                        };
                        rect_window(v_post, v_th, w_win) * (2.0 * v_pre) * g_o[t][i]
                    }
                };
                g_v[i] = spike_path + (1.0 - o_now) * g_v_next[i];
            }
            g_c_all[t] = g_c.clone();
            g_v_next = g_v;
            g_c_next = g_c;
        }

        // parameter gradients
        let mut gw = Array2::zeros((in_dim, width));
        let mut gb = Array1::zeros(width);
        for t in 0..t1 {
            for i in 0..width {
                gb[i] += g_c_all[t][i];
            }
            for j in 0..in_dim {
                let below = if l == 0 {
                    match &trace.input {
                        ForwardInput::Analog(a) => a[[0, j]],
                        ForwardInput::Spikes { per_t, .. } => per_t[t][[0, j]],
                    }
                } else {
                    trace.layers[l - 1].o[t][[0, j]]
                };
                for i in 0..width {
                    gw[[j, i]] += below * g_c_all[t][i];
                }
            }
        }
        layers_out.push((gw, gb));

        // spike gradient for the layer below
        if l > 0 {
            let mut next: Vec<Vec<f64>> = vec![vec![0.0; in_dim]; t1];
            for t in 0..t1 {
                for j in 0..in_dim {
                    let mut acc = 0.0;
                    for i in 0..width {
                        acc += actor.layers[l].w_t[[j, i]] * g_c_all[t][i];
                    }
                    next[t][j] = acc;
                }
            }
            g_o = next;
        } else if actor.coding.uses_population() {
            let mut up = vec![0.0; in_dim];
            for t in 0..t1 {
                for (j, u) in up.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for i in 0..width {
                        acc += actor.layers[0].w_t[[j, i]] * g_c_all[t][i];
                    }
                    *u += acc;
                }
            }
            enc_upstream = Some(up);
        }
    }
    layers_out.reverse();

    // receptive-field gradients
    let (enc_mu, enc_sigma) = match (&actor.encoder, enc_upstream) {
        (Some(enc), Some(up)) => {
            let n = enc.state_dim();
            let p = enc.pop_size();
            let mut gmu = Array2::zeros((n, p));
            let mut gsig = Array2::zeros((n, p));
            for i in 0..n {
                let s = trace.states[[0, i]];
                for j in 0..p {
                    let mu = enc.mu[[i, j]];
                    let sg = enc.sigma[[i, j]];
                    let d = s - mu;
                    let a = (-(d * d) / (2.0 * sg * sg)).exp();
                    let g = up[i * p + j] * a;
                    gmu[[i, j]] = g * d / (sg * sg);
                    gsig[[i, j]] = g * d * d / (sg * sg * sg);
                }
            }
            (Some(gmu), Some(gsig))
        }
        _ => (None, None),
    };

    RefGrads { layers: layers_out, dec_w, dec_b, enc_mu, enc_sigma }
}

/// Largest absolute entry difference across two gradient sets.
pub fn max_grad_diff(a: &pdsan::actor::ActorGrads<f64>, b: &RefGrads) -> f64 {
    let mut worst: f64 = 0.0;
    let mut upd = |x: f64| {
        if x > worst {
            worst = x;
        }
    };
    for ((aw, ab), (bw, bb)) in a.layers.iter().zip(&b.layers) {
        for (x, y) in aw.iter().zip(bw.iter()) {
            upd((x - y).abs());
        }
        for (x, y) in ab.iter().zip(bb.iter()) {
            upd((x - y).abs());
        }
    }
    for (x, y) in a.dec_w.iter().zip(b.dec_w.iter()) {
        upd((x - y).abs());
    }
    for (x, y) in a.dec_b.iter().zip(b.dec_b.iter()) {
        upd((x - y).abs());
    }
    match (&a.enc_mu, &b.enc_mu) {
        (Some(am), Some(bm)) => {
            for (x, y) in am.iter().zip(bm.iter()) {
                upd((x - y).abs());
            }
        }
        (None, None) => {}
        _ => panic!("encoder gradient presence mismatch"),
    }
    match (&a.enc_sigma, &b.enc_sigma) {
        (Some(am), Some(bm)) => {
            for (x, y) in am.iter().zip(bm.iter()) {
                upd((x - y).abs());
            }
        }
        (None, None) => {}
        _ => panic!("encoder gradient presence mismatch"),
    }
    worst
}
