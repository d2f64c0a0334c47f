//! Discrete-time neuron updates (LIF and 2nd-order dynamic neurons), the
//! rectangular surrogate spike gradient, and continuous-time equilibrium
//! analysis of the underlying membrane ODEs.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dynamic-neuron parameter quadruple.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Theta<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
}

impl<T: Scalar> Theta<T> {
    /// The shipped dynamic-neuron parameters, pre-learned on a source task.
    pub fn pretrained() -> Self {
        Theta {
            a: T::from_f64(-0.172),
            b: T::from_f64(0.529),
            c: T::from_f64(0.021),
            d: T::from_f64(0.132),
        }
    }
}

/// 2nd-order dynamic-neuron configuration.
#[derive(Clone, Copy, Debug)]
pub struct DnParams<T> {
    pub theta: Theta<T>,
    /// Firing threshold.
    pub v_th: T,
    /// Current decay factor in [0, 1].
    pub d_c: T,
    /// Optional symmetric clamp on the membrane potential during training
    /// steps; guards against runaway growth of the quadratic term. `None`
    /// in analysis settings.
    pub v_clamp: Option<T>,
}

impl<T: Scalar> Default for DnParams<T> {
    fn default() -> Self {
        DnParams {
            theta: Theta::pretrained(),
            v_th: T::from_f64(0.5),
            d_c: T::from_f64(0.5),
            v_clamp: Some(T::from_f64(10.0)),
        }
    }
}

/// LIF configuration.
#[derive(Clone, Copy, Debug)]
pub struct LifParams<T> {
    /// Current decay factor in [0, 1].
    pub d_c: T,
    /// Voltage decay factor in [0, 1].
    pub v_f: T,
    /// Firing threshold.
    pub v_th: T,
}

impl<T: Scalar> Default for LifParams<T> {
    fn default() -> Self {
        LifParams { d_c: T::from_f64(0.5), v_f: T::from_f64(0.75), v_th: T::from_f64(0.5) }
    }
}

/// Per-layer neuron state. `o` holds the previous step's spikes as 0/1
/// values; `u` is the recovery variable and stays zero for LIF layers.
#[derive(Clone, Debug)]
pub struct LayerState<T> {
    pub c: Array1<T>,
    pub v: Array1<T>,
    pub u: Array1<T>,
    pub o: Array1<T>,
}

impl<T: Scalar> LayerState<T> {
    pub fn zeros(width: usize) -> Self {
        LayerState {
            c: Array1::zeros(width),
            v: Array1::zeros(width),
            u: Array1::zeros(width),
            o: Array1::zeros(width),
        }
    }

    pub fn width(&self) -> usize {
        self.c.len()
    }
}

/// One dynamic-neuron update for a single unit. Update order:
/// current decay + drive, spike-triggered resets of v and u, the quadratic
/// membrane delta, then thresholding.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
pub(crate) fn dn_unit_step<T: Scalar>(
    c: &mut T,
    v: &mut T,
    u: &mut T,
    o: &mut T,
    drive: T,
    theta_a: T,
    theta_b: T,
    theta_c: T,
    theta_d: T,
    v_th: T,
    d_c: T,
    v_clamp: Option<T>,
) {
    let one = T::one();
    *c = d_c * *c + drive;
    let v_r = *v * (one - *o) + *o * theta_c;
    let u_r = *u + *o * theta_d;
    let v_delta = v_r * v_r - v_r - u_r + *c;
    let u_delta = theta_a * (theta_b * v_r - u_r);
    let mut v_new = v_r + v_delta;
    if let Some(cl) = v_clamp {
        v_new = v_new.min(cl).max(-cl);
    }
    *v = v_new;
    *u = u_r + u_delta;
    *o = if v_new > v_th { one } else { T::zero() };
}

/// One LIF update for a single unit: decayed current plus drive, leaky
/// integration with hard reset through the (1 - o) factor, thresholding.
#[inline(always)]
pub(crate) fn lif_unit_step<T: Scalar>(
    c: &mut T,
    v: &mut T,
    o: &mut T,
    drive: T,
    d_c: T,
    v_f: T,
    v_th: T,
) {
    let one = T::one();
    *c = d_c * *c + drive;
    let v_new = v_f * *v * (one - *o) + *c;
    *v = v_new;
    *o = if v_new > v_th { one } else { T::zero() };
}

/// Advance a whole layer of dynamic neurons by one timestep. The drive is
/// the already-computed synaptic input `W o_prev + b`. Spikes land in
/// `state.o`.
pub fn dn_step<T: Scalar>(state: &mut LayerState<T>, drive: &ArrayView1<T>, p: &DnParams<T>) {
    debug_assert_eq!(state.width(), drive.len());
    for k in 0..state.width() {
        dn_unit_step(
            &mut state.c[k],
            &mut state.v[k],
            &mut state.u[k],
            &mut state.o[k],
            drive[k],
            p.theta.a,
            p.theta.b,
            p.theta.c,
            p.theta.d,
            p.v_th,
            p.d_c,
            p.v_clamp,
        );
    }
}

/// Like [`dn_step`] but with per-neuron theta parameters.
#[allow(clippy::too_many_arguments)]
pub fn dn_step_per_neuron<T: Scalar>(
    state: &mut LayerState<T>,
    drive: &ArrayView1<T>,
    theta_a: &ArrayView1<T>,
    theta_b: &ArrayView1<T>,
    theta_c: &ArrayView1<T>,
    theta_d: &ArrayView1<T>,
    v_th: T,
    d_c: T,
    v_clamp: Option<T>,
) {
    debug_assert_eq!(state.width(), drive.len());
    for k in 0..state.width() {
        dn_unit_step(
            &mut state.c[k],
            &mut state.v[k],
            &mut state.u[k],
            &mut state.o[k],
            drive[k],
            theta_a[k],
            theta_b[k],
            theta_c[k],
            theta_d[k],
            v_th,
            d_c,
            v_clamp,
        );
    }
}

/// Advance a whole LIF layer by one timestep.
pub fn lif_step<T: Scalar>(state: &mut LayerState<T>, drive: &ArrayView1<T>, p: &LifParams<T>) {
    debug_assert_eq!(state.width(), drive.len());
    for k in 0..state.width() {
        lif_unit_step(&mut state.c[k], &mut state.v[k], &mut state.o[k], drive[k], p.d_c, p.v_f, p.v_th);
    }
}

/// Rectangular surrogate for the spike derivative: 1 inside the open window
/// around the threshold, 0 outside.
#[inline]
pub fn surrogate_window<T: Scalar>(v: T, v_th: T, w: T) -> T {
    if (v - v_th).abs() < w {
        T::one()
    } else {
        T::zero()
    }
}

/// Vectorized [`surrogate_window`].
pub fn surrogate_grad<T: Scalar>(v: &ArrayView1<T>, v_th: T, w: T) -> Array1<T> {
    v.mapv(|x| surrogate_window(x, v_th, w))
}

/// Linear stability of an equilibrium: stable iff the field's derivative is
/// strictly negative at the root.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
}

/// Real equilibria of the membrane field `tau dV/dt = -V^N + I` for
/// N in {1, 2}, stable points first.
pub fn equilibrium_points<T: Scalar>(order: u32, i: T) -> Result<Vec<(T, Stability)>> {
    match order {
        1 => Ok(vec![(i, Stability::Stable)]),
        2 => {
            if i < T::zero() {
                Ok(vec![])
            } else if i == T::zero() {
                // double root with zero derivative: not asymptotically stable
                Ok(vec![(T::zero(), Stability::Unstable)])
            } else {
                let r = i.sqrt();
                Ok(vec![(r, Stability::Stable), (-r, Stability::Unstable)])
            }
        }
        n => Err(Error::InvalidArgument(format!("membrane order {n} unsupported (N <= 2)"))),
    }
}

/// Explicit-Euler trajectory of `tau dV/dt = -V^N + I` from `v0`; returns
/// `steps + 1` samples including the initial value.
pub fn integrate_membrane<T: Scalar>(
    order: u32,
    i: T,
    v0: T,
    tau: T,
    dt: T,
    steps: usize,
) -> Result<Vec<T>> {
    if !(order == 1 || order == 2) {
        return Err(Error::InvalidArgument(format!("membrane order {order} unsupported (N <= 2)")));
    }
    if dt <= T::zero() {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let ten = T::from_f64(10.0);
    if dt * ten >= tau {
        return Err(Error::InvalidArgument("dt must satisfy dt < tau / 10".into()));
    }
    let mut traj = Vec::with_capacity(steps + 1);
    let mut v = v0;
    traj.push(v);
    for _ in 0..steps {
        let field = if order == 1 { -v + i } else { -(v * v) + i };
        v += dt / tau * field;
        traj.push(v);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn dn_defaults() -> DnParams<f64> {
        DnParams::default()
    }

    #[test]
    fn dn_zero_state_zero_drive_stays_silent() {
        let mut state = LayerState::<f64>::zeros(4);
        let drive = Array1::zeros(4);
        for _ in 0..10 {
            dn_step(&mut state, &drive.view(), &dn_defaults());
        }
        assert!(state.v.iter().all(|&v| v == 0.0));
        assert!(state.u.iter().all(|&u| u == 0.0));
        assert!(state.o.iter().all(|&o| o == 0.0));
    }

    #[test]
    fn dn_reset_applies_theta_c_and_theta_d() {
        // A spike on the previous step pulls v to theta_c and bumps u by
        // theta_d before the quadratic delta applies. With c = 0 and zero
        // drive, the post-reset intermediates are (v_r, u_r) = (0.021, 0.132).
        let mut state = LayerState::<f64>::zeros(1);
        state.o[0] = 1.0;
        let drive = array![0.0];
        let p = dn_defaults();
        dn_step(&mut state, &drive.view(), &p);

        let v_r = 0.021f64;
        let u_r = 0.132f64;
        let v_delta = v_r * v_r - v_r - u_r;
        let u_delta = p.theta.a * (p.theta.b * v_r - u_r);
        assert_eq!(state.v[0], v_r + v_delta);
        assert_eq!(state.u[0], u_r + u_delta);
        assert_eq!(state.o[0], 0.0);
    }

    #[test]
    fn lif_zero_stays_zero_and_unit_drive_fires_immediately() {
        let p = LifParams::<f64>::default();
        let mut state = LayerState::zeros(1);
        let zero = array![0.0];
        lif_step(&mut state, &zero.view(), &p);
        assert_eq!(state.v[0], 0.0);
        assert_eq!(state.o[0], 0.0);

        // constant drive 1 from rest: c = 1, v = 1 > 0.5, spike at t = 1
        let mut state = LayerState::zeros(1);
        let one = array![1.0];
        lif_step(&mut state, &one.view(), &p);
        assert_eq!(state.c[0], 1.0);
        assert_eq!(state.v[0], 1.0);
        assert_eq!(state.o[0], 1.0);
    }

    #[test]
    fn surrogate_window_edges() {
        let v_th = 0.5f64;
        let w = 0.5f64;
        assert_eq!(surrogate_window(v_th, v_th, w), 1.0);
        // strict inequality at the window edge
        assert_eq!(surrogate_window(v_th + w, v_th, w), 0.0);
        assert_eq!(surrogate_window(v_th - w, v_th, w), 0.0);
        assert_eq!(surrogate_window(v_th + 10.0 * w, v_th, w), 0.0);
        assert_eq!(surrogate_window(v_th - 10.0 * w, v_th, w), 0.0);
    }

    proptest! {
        #[test]
        fn surrogate_invariant_under_rescaling(v in -3.0f64..3.0, alpha in 0.01f64..50.0) {
            let v_th = 0.5f64;
            let w = 0.25f64;
            prop_assert_eq!(
                surrogate_window(v, v_th, w),
                surrogate_window(alpha * v, alpha * v_th, alpha * w)
            );
        }

        #[test]
        fn spikes_are_binary(c in -2.0f64..2.0, v in -2.0f64..2.0, u in -2.0f64..2.0,
                             o in 0usize..2, drive in -2.0f64..2.0) {
            let mut state = LayerState::<f64>::zeros(1);
            state.c[0] = c;
            state.v[0] = v;
            state.u[0] = u;
            state.o[0] = o as f64;
            let d = array![drive];
            dn_step(&mut state, &d.view(), &dn_defaults());
            prop_assert!(state.o[0] == 0.0 || state.o[0] == 1.0);
        }
    }

    #[test]
    fn equilibria_first_and_second_order() {
        let e = equilibrium_points(1, 5.0f64).unwrap();
        assert_eq!(e, vec![(5.0, Stability::Stable)]);

        let e = equilibrium_points(2, 4.0f64).unwrap();
        assert_eq!(e, vec![(2.0, Stability::Stable), (-2.0, Stability::Unstable)]);

        let e = equilibrium_points(2, -1.0f64).unwrap();
        assert!(e.is_empty());

        assert!(equilibrium_points(3, 1.0f64).is_err());
    }

    #[test]
    fn integrate_first_order_matches_closed_form() {
        // V(t) = I (1 - e^{-t/tau}) from V(0) = 0
        let tau = 1.0f64;
        let dt = 0.01;
        let steps = 1000; // t = 10 tau
        let traj = integrate_membrane(1, 5.0, 0.0, tau, dt, steps).unwrap();
        for (k, &v) in traj.iter().enumerate().step_by(100) {
            let t = k as f64 * dt;
            let exact = 5.0 * (1.0 - (-t / tau).exp());
            assert!((v - exact).abs() < 0.03, "t={t}: {v} vs {exact}");
        }
        assert!((traj.last().unwrap() - 5.0).abs() < 1e-3);
    }

    #[test]
    fn integrate_second_order_basins() {
        // from 0 the trajectory is attracted to +sqrt(I)
        let traj = integrate_membrane(2, 4.0f64, 0.0, 1.0, 0.05, 400).unwrap();
        assert!((traj.last().unwrap() - 2.0).abs() < 1e-3);

        // below the unstable point -sqrt(I) it diverges to -inf
        let traj = integrate_membrane(2, 4.0f64, -3.0, 1.0, 0.05, 2000).unwrap();
        assert!(*traj.last().unwrap() < -1e6);
    }

    #[test]
    fn second_order_basin_of_attraction_grid() {
        // anything started above -sqrt(I) lands on +sqrt(I)
        for &i in &[0.5f64, 1.0, 2.5, 4.0, 9.0] {
            let root = i.sqrt();
            for frac in [-0.95, -0.5, 0.0, 0.5, 2.0, 5.0] {
                let v0 = root * frac;
                let traj = integrate_membrane(2, i, v0, 1.0, 0.02, 4000).unwrap();
                let end = *traj.last().unwrap();
                assert!((end - root).abs() < 1e-3, "I={i} v0={v0}: ended at {end}");
            }
        }
    }

    #[test]
    fn integrate_rejects_bad_dt() {
        assert!(integrate_membrane(1, 1.0f64, 0.0, 1.0, 0.0, 10).is_err());
        assert!(integrate_membrane(1, 1.0f64, 0.0, 1.0, -0.1, 10).is_err());
        assert!(integrate_membrane(1, 1.0f64, 0.0, 1.0, 0.2, 10).is_err());
    }
}
