//! Explicit embedded Runge-Kutta 5(4) integration with a stability cap.
//!
//! The model families integrated here are mildly stiff: on the fast clock
//! the voltage relaxes at an order-one rate while the slow gates crawl at
//! 1e-4, so an explicit method is viable provided accepted steps respect
//! the linear stability bound of the fastest local eigenvalue. Systems
//! report that rate and the stepper caps the step at `stability_cap / rate`
//! in addition to the usual embedded error control. Everything is
//! deterministic; reruns bit-reproduce.

use crate::error::{Error, Result};

/// A first-order system of dimension N with local stiffness information.
pub trait OdeSystem<const N: usize> {
    /// Right-hand side; may refuse evaluation outside its domain.
    fn rhs(&self, t: f64, y: &[f64; N]) -> Result<[f64; N]>;

    /// Magnitude estimate of the fastest local eigenvalue. Zero disables
    /// the stability cap.
    fn fastest_rate(&self, _t: f64, _y: &[f64; N]) -> f64 {
        0.0
    }

    /// Hard domain guard checked on accepted states.
    fn domain_check(&self, _t: f64, _y: &[f64; N]) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Initial trial step; the controller adapts from here.
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// Accepted steps satisfy h * fastest_rate <= stability_cap.
    pub stability_cap: f64,
    /// Keep every k-th accepted state (the final state is always kept).
    pub store_every: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            h_init: 1e-3,
            h_max: f64::INFINITY,
            max_steps: 200_000_000,
            stability_cap: 2.8,
            store_every: 1,
        }
    }
}

/// Absolute step floor relative to the current time magnitude.
const STEP_FLOOR: f64 = 1e-14;

/// Stored integration output plus step statistics.
#[derive(Debug, Clone)]
pub struct RawPath<const N: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; N]>,
    pub accepted: usize,
    pub rejected: usize,
    pub min_step: f64,
    pub max_step: f64,
}

// Dormand-Prince coefficients.
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B5: [f64; 6] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
/// Difference between the fifth- and fourth-order weights.
const ERR_W: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

fn axpy<const N: usize>(y: &[f64; N], h: f64, coef: &[f64], k: &[[f64; N]; 7]) -> [f64; N] {
    let mut out = *y;
    for (c, ki) in coef.iter().zip(k.iter()) {
        if *c != 0.0 {
            for i in 0..N {
                out[i] += h * c * ki[i];
            }
        }
    }
    out
}

/// One trial Dormand-Prince step. Returns the fifth-order solution, the
/// scaled error norm and the last stage (reusable as the next first
/// stage).
fn dp_step<S: OdeSystem<N>, const N: usize>(
    sys: &S,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<([f64; N], f64, [f64; N])> {
    let mut k = [[0.0; N]; 7];
    k[0] = *k1;
    k[1] = sys.rhs(t + C[0] * h, &axpy(y, h, &A2, &k))?;
    k[2] = sys.rhs(t + C[1] * h, &axpy(y, h, &A3, &k))?;
    k[3] = sys.rhs(t + C[2] * h, &axpy(y, h, &A4, &k))?;
    k[4] = sys.rhs(t + C[3] * h, &axpy(y, h, &A5, &k))?;
    k[5] = sys.rhs(t + C[4] * h, &axpy(y, h, &A6, &k))?;
    let y5 = axpy(y, h, &B5, &k);
    let k7 = sys.rhs(t + h, &y5)?;
    k[6] = k7;

    let mut err_sq = 0.0;
    for i in 0..N {
        let mut e = 0.0;
        for s in 0..7 {
            e += ERR_W[s] * k[s][i];
        }
        e *= h;
        let scale = abs_tol + rel_tol * y[i].abs().max(y5[i].abs());
        let r = e / scale;
        err_sq += r * r;
    }
    let err = (err_sq / N as f64).sqrt();
    Ok((y5, err, k7))
}

struct Stepper<'a, S: OdeSystem<N>, const N: usize> {
    sys: &'a S,
    opts: &'a OdeOptions,
    t: f64,
    y: [f64; N],
    k1: [f64; N],
    h: f64,
    accepted: usize,
    rejected: usize,
    min_step: f64,
    max_step: f64,
}

impl<'a, S: OdeSystem<N>, const N: usize> Stepper<'a, S, N> {
    fn new(sys: &'a S, t0: f64, y0: [f64; N], opts: &'a OdeOptions) -> Result<Self> {
        let k1 = sys.rhs(t0, &y0)?;
        Ok(Stepper {
            sys,
            opts,
            t: t0,
            y: y0,
            k1,
            h: opts.h_init.min(opts.h_max),
            accepted: 0,
            rejected: 0,
            min_step: f64::INFINITY,
            max_step: 0.0,
        })
    }

    /// Advance one accepted step, not crossing `t_end`. Returns the
    /// pre-step state so callers can bracket events.
    fn advance(&mut self, t_end: f64) -> Result<(f64, [f64; N])> {
        let mut last_rhs_err: Option<Error> = None;
        loop {
            let rate = self.sys.fastest_rate(self.t, &self.y);
            let mut h = self.h;
            if rate > 0.0 {
                h = h.min(self.opts.stability_cap / rate);
            }
            h = h.min(t_end - self.t).min(self.opts.h_max);
            if h <= STEP_FLOOR * self.t.abs().max(1.0) {
                return Err(last_rhs_err
                    .unwrap_or(Error::StepUnderflow { t: self.t, step: h }));
            }

            match dp_step(self.sys, self.t, &self.y, &self.k1, h, self.opts.rel_tol, self.opts.abs_tol)
            {
                Ok((y5, err, k7)) => {
                    if err.is_finite() && err <= 1.0 {
                        let t_prev = self.t;
                        let y_prev = self.y;
                        self.t += h;
                        self.y = y5;
                        self.k1 = k7;
                        self.accepted += 1;
                        self.min_step = self.min_step.min(h);
                        self.max_step = self.max_step.max(h);
                        let grow = if err == 0.0 { 5.0 } else { 0.9 * err.powf(-0.2) };
                        self.h = (h * grow.clamp(0.2, 5.0)).min(self.opts.h_max);
                        self.sys.domain_check(self.t, &self.y)?;
                        return Ok((t_prev, y_prev));
                    }
                    let shrink = if err.is_finite() { (0.9 * err.powf(-0.2)).max(0.1) } else { 0.1 };
                    self.h = h * shrink;
                    self.rejected += 1;
                }
                Err(e) => {
                    // A stage left the integrand's domain: treat as a
                    // rejection and retry shorter; surface the original
                    // error if the step dies away entirely.
                    last_rhs_err = Some(e);
                    self.h = h * 0.25;
                    self.rejected += 1;
                }
            }
        }
    }
}

/// Integrate from t0 to t_end, storing accepted states.
pub fn integrate_path<S: OdeSystem<N>, const N: usize>(
    sys: &S,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    opts: &OdeOptions,
) -> Result<RawPath<N>> {
    let mut stepper = Stepper::new(sys, t0, y0, opts)?;
    let every = opts.store_every.max(1);
    let mut path = RawPath {
        t: vec![t0],
        y: vec![y0],
        accepted: 0,
        rejected: 0,
        min_step: 0.0,
        max_step: 0.0,
    };
    while stepper.t < t_end {
        if stepper.accepted + stepper.rejected >= opts.max_steps {
            return Err(Error::StepUnderflow { t: stepper.t, step: stepper.h });
        }
        stepper.advance(t_end)?;
        if stepper.accepted % every == 0 || stepper.t >= t_end {
            path.t.push(stepper.t);
            path.y.push(stepper.y);
        }
    }
    path.accepted = stepper.accepted;
    path.rejected = stepper.rejected;
    path.min_step = stepper.min_step;
    path.max_step = stepper.max_step;
    Ok(path)
}

/// Integrate until `event` changes sign (after an arming period during
/// which it must first leave zero), then refine the crossing to the step
/// floor by bisection on the step length. Returns the crossing state.
pub fn integrate_to_event<S: OdeSystem<N>, const N: usize>(
    sys: &S,
    t0: f64,
    y0: [f64; N],
    t_max: f64,
    event: impl Fn(f64, &[f64; N]) -> f64,
    opts: &OdeOptions,
) -> Result<(f64, [f64; N])> {
    let mut stepper = Stepper::new(sys, t0, y0, opts)?;
    let mut g_prev = event(t0, &y0);
    let mut armed = g_prev != 0.0;
    while stepper.t < t_max {
        if stepper.accepted + stepper.rejected >= opts.max_steps {
            return Err(Error::StepUnderflow { t: stepper.t, step: stepper.h });
        }
        let (t_prev, y_prev) = stepper.advance(t_max)?;
        let g = event(stepper.t, &stepper.y);
        if !armed {
            if g != 0.0 {
                armed = true;
                g_prev = g;
            }
            continue;
        }
        if g == 0.0 {
            return Ok((stepper.t, stepper.y));
        }
        if g.signum() != g_prev.signum() {
            // Bisect the step length from the pre-crossing state.
            let k1 = sys.rhs(t_prev, &y_prev)?;
            let mut lo = 0.0;
            let mut hi = stepper.t - t_prev;
            let mut y_hit = stepper.y;
            let mut t_hit = stepper.t;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if mid <= STEP_FLOOR * t_prev.abs().max(1.0) {
                    break;
                }
                let (y5, _, _) =
                    dp_step(sys, t_prev, &y_prev, &k1, mid, opts.rel_tol, opts.abs_tol)?;
                let gm = event(t_prev + mid, &y5);
                if gm == 0.0 || gm.signum() != g_prev.signum() {
                    hi = mid;
                    y_hit = y5;
                    t_hit = t_prev + mid;
                } else {
                    lo = mid;
                }
                if hi - lo <= STEP_FLOOR * hi.abs().max(1.0) {
                    break;
                }
            }
            return Ok((t_hit, y_hit));
        }
        g_prev = g;
    }
    Err(Error::NotFound { what: "event crossing before the time horizon" })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Exponential;
    impl OdeSystem<1> for Exponential {
        fn rhs(&self, _t: f64, y: &[f64; 1]) -> Result<[f64; 1]> {
            Ok([-y[0]])
        }
        fn fastest_rate(&self, _t: f64, _y: &[f64; 1]) -> f64 {
            1.0
        }
    }

    struct Oscillator;
    impl OdeSystem<2> for Oscillator {
        fn rhs(&self, _t: f64, y: &[f64; 2]) -> Result<[f64; 2]> {
            Ok([y[1], -y[0]])
        }
    }

    /// Linear fast decay: accepted steps must honour the stability cap.
    struct StiffDecay;
    impl OdeSystem<1> for StiffDecay {
        fn rhs(&self, _t: f64, y: &[f64; 1]) -> Result<[f64; 1]> {
            Ok([-1000.0 * (y[0] - 1.0)])
        }
        fn fastest_rate(&self, _t: f64, _y: &[f64; 1]) -> f64 {
            1000.0
        }
    }

    #[test]
    fn exponential_decay_is_accurate() {
        let opts = OdeOptions { rel_tol: 1e-9, abs_tol: 1e-12, ..OdeOptions::default() };
        let path = integrate_path(&Exponential, 0.0, [1.0], 5.0, &opts).unwrap();
        let end = path.y.last().unwrap()[0];
        assert!((end - (-5.0_f64).exp()).abs() < 1e-9);
        assert!(path.rejected < path.accepted);
    }

    #[test]
    fn oscillator_preserves_energy_to_tolerance() {
        let opts = OdeOptions { rel_tol: 1e-10, abs_tol: 1e-12, ..OdeOptions::default() };
        let path =
            integrate_path(&Oscillator, 0.0, [1.0, 0.0], 20.0 * std::f64::consts::PI, &opts)
                .unwrap();
        for (t, y) in path.t.iter().zip(&path.y) {
            let energy = y[0] * y[0] + y[1] * y[1];
            assert!((energy - 1.0).abs() < 1e-7, "energy drift {energy} at t = {t}");
        }
    }

    #[test]
    fn stability_cap_bounds_accepted_steps() {
        let opts = OdeOptions { rel_tol: 1e-4, abs_tol: 1e-7, ..OdeOptions::default() };
        // Start on the slow manifold y = 1 so error control alone would
        // take huge steps; the cap must keep h * 1000 <= 2.8.
        let path = integrate_path(&StiffDecay, 0.0, [1.0 + 1e-9], 50.0, &opts).unwrap();
        assert!(path.max_step <= 2.8 / 1000.0 + 1e-12, "max step {}", path.max_step);
        assert!((path.y.last().unwrap()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn event_crossing_is_sharp() {
        let opts = OdeOptions { rel_tol: 1e-9, abs_tol: 1e-12, ..OdeOptions::default() };
        let (t, y) =
            integrate_to_event(&Exponential, 0.0, [1.0], 10.0, |_, y| y[0] - 0.5, &opts).unwrap();
        assert!((t - 0.5_f64.ln().abs()).abs() < 1e-9);
        assert!((y[0] - 0.5).abs() < 1e-10);
    }

    struct Walled;
    impl OdeSystem<1> for Walled {
        fn rhs(&self, _t: f64, y: &[f64; 1]) -> Result<[f64; 1]> {
            if y[0] > 1.0 {
                Err(Error::LeftDomain { t: 0.0, v: y[0] })
            } else {
                Ok([1.0])
            }
        }
    }

    #[test]
    fn rhs_refusal_surfaces_after_step_death() {
        let err = integrate_path(&Walled, 0.0, [0.5], 2.0, &OdeOptions::default()).unwrap_err();
        assert!(matches!(err, Error::LeftDomain { .. }));
    }
}
