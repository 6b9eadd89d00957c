//! Scratch probe: literal classical-kinetics field (exact tau ratios)
//! versus the normalized full field, at the anchor currents.

use hhscale::error::Result;
use hhscale::gating::{alpha, beta};
use hhscale::model;
use hhscale::ode::{integrate_path, OdeOptions, OdeSystem};
use hhscale::params::{GateKind, ModelParameters};

struct Lit<'a> {
    p: &'a ModelParameters,
}

impl OdeSystem<4> for Lit<'_> {
    fn rhs(&self, _t: f64, y: &[f64; 4]) -> Result<[f64; 4]> {
        let p = self.p;
        let (v, m, h, n) = (y[0], y[1], y[2], y[3]);
        let vm = v * p.k_v;
        let em = p.epsilon_membrane();
        Ok([
            model::rhs_v(v, m, h, n, p) / em,
            alpha(GateKind::M, vm) * (1.0 - m) - beta(GateKind::M, vm) * m,
            (alpha(GateKind::H, vm) * (1.0 - h) - beta(GateKind::H, vm) * h) / p.tau_h,
            (alpha(GateKind::N, vm) * (1.0 - n) - beta(GateKind::N, vm) * n) / p.tau_n,
        ])
    }

    fn fastest_rate(&self, _t: f64, y: &[f64; 4]) -> f64 {
        let p = self.p;
        let em = p.epsilon_membrane();
        let row_v = (model::rhs_v_dv(y[1], y[2], y[3], p).abs()
            + model::rhs_v_dm(y[0], y[1], y[2], p).abs()
            + model::rhs_v_dh(y[0], y[1], p).abs()
            + model::rhs_v_dn(y[0], y[3], p).abs())
            / em;
        let vm = y[0] * p.k_v;
        let row_m = alpha(GateKind::M, vm) + beta(GateKind::M, vm);
        row_v.max(row_m)
    }
}

struct Norm<'a> {
    p: &'a ModelParameters,
}

impl OdeSystem<4> for Norm<'_> {
    fn rhs(&self, _t: f64, y: &[f64; 4]) -> Result<[f64; 4]> {
        let p = self.p;
        let s = hhscale::params::FullState::from_array(*y);
        let f = model::full_vector_field(s, p);
        let scale = 1.0 / (p.gamma * p.epsilon_mid);
        Ok([f[0] * scale, f[1] * scale, f[2] * scale, f[3] * scale])
    }

    fn fastest_rate(&self, _t: f64, y: &[f64; 4]) -> f64 {
        let p = self.p;
        let em = p.gamma * p.epsilon_mid;
        (model::rhs_v_dv(y[1], y[2], y[3], p).abs()
            + model::rhs_v_dm(y[0], y[1], y[2], p).abs()
            + model::rhs_v_dh(y[0], y[1], p).abs()
            + model::rhs_v_dn(y[0], y[3], p).abs())
            / em
    }
}

fn v_equilibrium(p: &ModelParameters) -> f64 {
    let (mut lo, mut hi) = p.v_window();
    let f = |v: f64| model::steady_current_balance(v, p);
    // steady balance is positive at the bottom of the window for these currents
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct Report {
    spikes: usize,
    upper_mean: f64,
    upper_slow_frac: f64,
    below_mean: f64,
    below_sao_mean: f64,
    h_up: f64,
    h_down: f64,
    sao_swing: f64,
}

fn measure(t: &[f64], y: &[[f64; 4]], burn: f64) -> Report {
    let start = t.iter().position(|&x| x >= burn).unwrap_or(0);
    let t = &t[start..];
    let y = &y[start..];
    let v: Vec<f64> = y.iter().map(|s| s[0]).collect();
    let h: Vec<f64> = y.iter().map(|s| s[2]).collect();

    // Spikes: upward crossings of v = 0.
    let mut spikes = 0;
    for i in 1..v.len() {
        if v[i - 1] <= 0.0 && v[i] > 0.0 {
            spikes += 1;
        }
    }

    // Upper segments: v > -0.35. Below segments: v <= -0.35.
    let mut upper_durs = Vec::new();
    let mut below_durs = Vec::new();
    let mut upper_slow = 0.0;
    let mut upper_total = 0.0;
    let mut h_ups = Vec::new();
    let mut h_downs = Vec::new();
    let mut seg_start = 0usize;
    let mut above = v[0] > -0.35;
    for i in 1..v.len() {
        let now_above = v[i] > -0.35;
        if now_above != above {
            let dur = t[i] - t[seg_start];
            if above {
                upper_durs.push(dur);
                h_downs.push(h[i]);
            } else {
                below_durs.push(dur);
                h_ups.push(h[i]);
            }
            seg_start = i;
            above = now_above;
        }
        if now_above && i + 1 < v.len() {
            let dt = t[i + 1] - t[i - 1];
            if dt > 0.0 {
                let rate = ((v[i + 1] - v[i - 1]) / dt).abs();
                let w = 0.5 * dt;
                upper_total += w;
                if rate < 0.01 {
                    upper_slow += w;
                }
            }
        }
    }
    // Drop the unterminated first/last segments by using interior ones only.
    if upper_durs.len() > 1 {
        upper_durs.remove(0);
    }
    if below_durs.len() > 1 {
        below_durs.remove(0);
    }

    // SAO maxima while v < -0.4, hysteresis zigzag.
    let hyst = 1e-3;
    let mut sao_per_below = Vec::new();
    let mut count = 0usize;
    let mut swing_max: f64 = 0.0;
    let mut lo_v = v[0];
    let mut hi_v = v[0];
    let mut rising = true;
    let mut in_below = v[0] < -0.4;
    for i in 1..v.len() {
        let now_below = v[i] < -0.4;
        if now_below && !in_below {
            count = 0;
            lo_v = v[i];
            hi_v = v[i];
            rising = true;
        }
        if !now_below && in_below {
            sao_per_below.push(count);
        }
        if now_below {
            if rising {
                if v[i] > hi_v {
                    hi_v = v[i];
                } else if hi_v - v[i] > hyst {
                    count += 1;
                    swing_max = swing_max.max(hi_v - lo_v);
                    lo_v = v[i];
                    rising = false;
                }
            } else if v[i] < lo_v {
                lo_v = v[i];
            } else if v[i] - lo_v > hyst {
                swing_max = swing_max.max(hi_v - lo_v);
                hi_v = v[i];
                rising = true;
            }
        }
        in_below = now_below;
    }

    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    let mean_u = |xs: &[usize]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<usize>() as f64 / xs.len() as f64
        }
    };
    Report {
        spikes,
        upper_mean: mean(&upper_durs),
        upper_slow_frac: if upper_total > 0.0 { upper_slow / upper_total } else { 0.0 },
        below_mean: mean(&below_durs),
        below_sao_mean: mean_u(&sao_per_below),
        h_up: mean(&h_ups),
        h_down: mean(&h_downs),
        sao_swing: swing_max,
    }
}

fn main() {
    let duration = 3000.0;
    let burn = 1200.0;
    let opts = OdeOptions {
        rel_tol: 1e-7,
        abs_tol: 1e-10,
        h_init: 1e-5,
        h_max: 0.25,
        ..OdeOptions::default()
    };
    for &i_phys in &[20.051, 23.051, 23.5, 26.03452346, 26.1209956, 26.2] {
        for which in ["lit ", "norm"] {
            let p = ModelParameters::h_slow().with_current(i_phys);
            let v_eq = v_equilibrium(&p);
            let v0 = v_eq - 0.15;
            let vm0 = v0 * p.k_v;
            let y0 = [
                v0,
                alpha(GateKind::M, vm0) / (alpha(GateKind::M, vm0) + beta(GateKind::M, vm0)),
                alpha(GateKind::H, vm0) / (alpha(GateKind::H, vm0) + beta(GateKind::H, vm0)),
                alpha(GateKind::N, vm0) / (alpha(GateKind::N, vm0) + beta(GateKind::N, vm0)),
            ];
            let path = if which == "lit " {
                integrate_path(&Lit { p: &p }, 0.0, y0, duration, &opts)
            } else {
                integrate_path(&Norm { p: &p }, 0.0, y0, duration, &opts)
            };
            match path {
                Ok(path) => {
                    let r = measure(&path.t, &path.y, burn);
                    println!(
                        "I={i_phys:<11} {which} spikes={:<3} upper={:>7.2}ms slowfrac={:.2} below={:>7.2}ms saos={:>5.1} swing={:.4} h_up={:.4} h_down={:.4}",
                        r.spikes, r.upper_mean, r.upper_slow_frac, r.below_mean,
                        r.below_sao_mean, r.sao_swing, r.h_up, r.h_down
                    );
                    use std::io::Write;
                    let mut f = std::fs::File::create(format!(
                        "/tmp/trace_{}_{i_phys}.csv",
                        which.trim()
                    ))
                    .unwrap();
                    let mut last = f64::NEG_INFINITY;
                    for (t, y) in path.t.iter().zip(path.y.iter()) {
                        if *t >= burn && *t - last >= 0.05 {
                            writeln!(f, "{t:.4},{:.6},{:.6}", y[0], y[2]).unwrap();
                            last = *t;
                        }
                    }
                }
                Err(e) => println!("I={i_phys:<11} {which} FAILED: {e}"),
            }
        }
    }
}
