//! Scratch probe. Not part of the library.

use hhscale::dynamics::{integrate, SystemState, StateSeries};
use hhscale::gating::gate_inf_dimless;
use hhscale::params::{FullState, GateKind, ModelParameters, Regime};
use hhscale::reduction::{mu, nu};
use hhscale::geometry::{folded_singularities, true_equilibrium};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let i_phys: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(26.2);
    let duration: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000.0);
    let rel: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-5);
    let abs: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1e-8);
    let p = ModelParameters::h_slow().with_current(i_phys);
    let (eq, _, _) = true_equilibrium(Regime::HSlow, &p).unwrap();
    let v0 = eq[0] - 0.15;
    let h0 = eq[1];
    let n0 = nu(v0, h0, &p).unwrap().value;
    let m0 = mu(v0, h0, n0, &p).map(|g| g.value).unwrap_or_else(|_| gate_inf_dimless(GateKind::M, v0, &p));
    let traj = integrate(SystemState::Full(FullState::new(v0, m0, h0, n0)), duration, rel, abs, &p).unwrap();
    let StateSeries::Full(states) = &traj.states else { panic!() };
    let v: Vec<f64> = states.iter().map(|x| x.v).collect();
    let t = &traj.times;
    let n = v.len();
    let cut = t.partition_point(|&x| x < 0.3 * duration);
    let (qm, qp) = folded_singularities(Regime::HSlow, &p).unwrap();
    let above_band = (qp.v - 0.12, qp.v + 0.12);
    let below_band = (qm.v - 0.04, qm.v + 0.04);
    let vmax_all = v[cut..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spike_level = vmax_all - 0.25;
    let mut t_above = 0.0;
    let mut t_below = 0.0;
    let mut spikes = 0usize;
    let mut below_runs: Vec<f64> = Vec::new();
    let mut run_start: Option<f64> = None;
    for i in cut.max(1)..n {
        let dt = t[i] - t[i - 1];
        let x = v[i];
        if x > above_band.0 && x < above_band.1 { t_above += dt; }
        if x > below_band.0 && x < below_band.1 {
            t_below += dt;
            if run_start.is_none() { run_start = Some(t[i]); }
        } else if let Some(s) = run_start.take() {
            below_runs.push(t[i - 1] - s);
        }
        if v[i - 1] < spike_level && x >= spike_level { spikes += 1; }
    }
    if let Some(s) = run_start { below_runs.push(t[n - 1] - s); }
    let span = t[n - 1] - t[cut];
    below_runs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let top: Vec<String> = below_runs.iter().take(4).map(|x| format!("{x:.0}")).collect();
    println!(
        "I={i_phys:<12} rel={rel:.0e} spikes={spikes:3} above {:5.1}% ({:5.2}/spike) below {:5.1}%  longest below runs [{}]",
        100.0 * t_above / span,
        t_above / spikes.max(1) as f64,
        100.0 * t_below / span,
        top.join(", ")
    );
}
