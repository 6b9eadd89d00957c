//! Time integration of the four-dimensional membrane model and its
//! three-dimensional reduction, event extraction from voltage traces,
//! firing-pattern classification, and applied-current sweeps.
//!
//! Both systems are advanced on the common slow clock, on which a slow
//! gate with timescale ratio delta drifts at rate delta * gate_drift.
//! The four-dimensional field is the fast-clock field divided by
//! gamma * epsilon_mid; the reduced field is the intermediate-clock
//! field divided by epsilon_mid. Matched trajectories are therefore
//! directly comparable sample by sample.

use crate::error::{Error, Result};
use crate::gating::gate_inf_dimless;
use crate::geometry::{folded_singularities, true_equilibrium};
use crate::model::{
    full_vector_field, gate_drift_dv, gate_drift_dx, rhs_v_dh, rhs_v_dm, rhs_v_dn, rhs_v_dv,
};
use crate::ode::{integrate_path, OdeOptions, OdeSystem};
use crate::params::{FullState, GateKind, ModelParameters, ReducedState, Regime};
use crate::reduction::{eta, nu, reduced_vector_field};
use rayon::prelude::*;
use serde::Serialize;

/// Voltage margin beyond the reversal-potential box before a trajectory
/// is declared to have left the physical domain.
const DOMAIN_MARGIN: f64 = 0.1;
/// Gate values may overshoot [0, 1] transiently by at most this much.
const GATE_MARGIN: f64 = 0.1;
/// Central-difference step for the reduced-system layer rate.
const LAYER_RATE_STEP: f64 = 1e-6;
/// Offset added to the equilibrium voltage by `default_initial`.
const INITIAL_VOLTAGE_OFFSET: f64 = 0.05;
/// Minimum number of stored samples before events can be extracted.
const MIN_SAMPLES: usize = 8;

/// Which vector field a trajectory was generated by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SystemKind {
    Full4d,
    Reduced3d,
}

/// Initial condition tagged with the system it belongs to.
#[derive(Debug, Clone, Copy)]
pub enum SystemState {
    Full(FullState),
    Reduced(ReducedState),
}

impl SystemState {
    pub fn system(&self) -> SystemKind {
        match self {
            SystemState::Full(_) => SystemKind::Full4d,
            SystemState::Reduced(_) => SystemKind::Reduced3d,
        }
    }
}

/// State samples of one trajectory, in the system's own coordinates.
#[derive(Debug, Clone)]
pub enum StateSeries {
    Full(Vec<FullState>),
    Reduced(Vec<ReducedState>),
}

impl StateSeries {
    pub fn len(&self) -> usize {
        match self {
            StateSeries::Full(s) => s.len(),
            StateSeries::Reduced(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Integrator identification and step statistics for one trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct IntegrationMeta {
    pub method: &'static str,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub min_step: f64,
    pub max_step: f64,
}

/// A stored trajectory on the slow clock.
///
/// Invariants: `times` is strictly increasing and starts at zero, every
/// stored state is finite, the first state equals the initial condition
/// and `times.len() == states.len()`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: StateSeries,
    pub meta: IntegrationMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn system(&self) -> SystemKind {
        match self.states {
            StateSeries::Full(_) => SystemKind::Full4d,
            StateSeries::Reduced(_) => SystemKind::Reduced3d,
        }
    }

    pub fn voltage(&self, i: usize) -> f64 {
        match &self.states {
            StateSeries::Full(s) => s[i].v,
            StateSeries::Reduced(s) => s[i].v,
        }
    }

    pub fn voltages(&self) -> Vec<f64> {
        match &self.states {
            StateSeries::Full(s) => s.iter().map(|x| x.v).collect(),
            StateSeries::Reduced(s) => s.iter().map(|x| x.v).collect(),
        }
    }

    /// Slow coordinates (v, h, n) of sample `i`, dropping the fast gate
    /// for the four-dimensional system.
    pub fn slow_coordinates(&self, i: usize) -> ReducedState {
        match &self.states {
            StateSeries::Full(s) => ReducedState::new(s[i].v, s[i].h, s[i].n),
            StateSeries::Reduced(s) => s[i],
        }
    }
}

/// Four-dimensional field rescaled to the slow clock.
struct FullOnSlowClock<'a> {
    p: &'a ModelParameters,
}

impl OdeSystem<4> for FullOnSlowClock<'_> {
    fn rhs(&self, _t: f64, y: &[f64; 4]) -> Result<[f64; 4]> {
        let p = self.p;
        let f = full_vector_field(FullState::from_array(*y), p);
        let s = 1.0 / (p.gamma * p.epsilon_mid);
        Ok([f[0] * s, f[1] * s, f[2] * s, f[3] * s])
    }

    fn fastest_rate(&self, _t: f64, y: &[f64; 4]) -> f64 {
        let p = self.p;
        let [v, m, h, n] = *y;
        let s = 1.0 / (p.gamma * p.epsilon_mid);
        // Row sums of the slow-clock Jacobian bound its spectral radius.
        let row_v = s
            * (rhs_v_dv(m, h, n, p).abs()
                + rhs_v_dm(v, m, h, p).abs()
                + rhs_v_dh(v, m, p).abs()
                + rhs_v_dn(v, n, p).abs());
        let row_m = (gate_drift_dv(GateKind::M, v, m, p).abs()
            + gate_drift_dx(GateKind::M, v, p).abs())
            / p.epsilon_mid;
        let row_h = p.delta_h
            * (gate_drift_dv(GateKind::H, v, h, p).abs() + gate_drift_dx(GateKind::H, v, p).abs());
        let row_n = p.delta_n
            * (gate_drift_dv(GateKind::N, v, n, p).abs() + gate_drift_dx(GateKind::N, v, p).abs());
        row_v.max(row_m).max(row_h).max(row_n)
    }

    fn domain_check(&self, t: f64, y: &[f64; 4]) -> Result<()> {
        check_domain(t, y[0], &y[1..], self.p)
    }
}

/// Reduced field rescaled to the slow clock.
struct ReducedOnSlowClock<'a> {
    p: &'a ModelParameters,
}

impl OdeSystem<3> for ReducedOnSlowClock<'_> {
    fn rhs(&self, _t: f64, y: &[f64; 3]) -> Result<[f64; 3]> {
        let p = self.p;
        let f = reduced_vector_field(ReducedState::from_array(*y), p)?;
        let s = 1.0 / p.epsilon_mid;
        Ok([f[0] * s, f[1] * s, f[2] * s])
    }

    fn fastest_rate(&self, _t: f64, y: &[f64; 3]) -> f64 {
        let p = self.p;
        let [v, h, n] = *y;
        // The layer rate is the voltage sensitivity of the slaved
        // voltage equation; a central difference is accurate enough for
        // a step-size cap. Failures disable the cap and leave step
        // control to the error estimate alone.
        let plus = reduced_vector_field(ReducedState::new(v + LAYER_RATE_STEP, h, n), p);
        let minus = reduced_vector_field(ReducedState::new(v - LAYER_RATE_STEP, h, n), p);
        let layer = match (plus, minus) {
            (Ok(fp), Ok(fm)) => {
                (fp[0] - fm[0]).abs() / (2.0 * LAYER_RATE_STEP * p.epsilon_mid)
            }
            _ => return 0.0,
        };
        let row_h = p.delta_h
            * (gate_drift_dv(GateKind::H, v, h, p).abs() + gate_drift_dx(GateKind::H, v, p).abs());
        let row_n = p.delta_n
            * (gate_drift_dv(GateKind::N, v, n, p).abs() + gate_drift_dx(GateKind::N, v, p).abs());
        layer.max(row_h).max(row_n)
    }

    fn domain_check(&self, t: f64, y: &[f64; 3]) -> Result<()> {
        check_domain(t, y[0], &y[1..], self.p)
    }
}

fn check_domain(t: f64, v: f64, gates: &[f64], p: &ModelParameters) -> Result<()> {
    let (v_lo, v_hi) = (p.ebar_k - DOMAIN_MARGIN, p.ebar_na + DOMAIN_MARGIN);
    if !v.is_finite() || v < v_lo || v > v_hi {
        return Err(Error::LeftDomain { t, v });
    }
    for &x in gates {
        if !x.is_finite() || x < -GATE_MARGIN || x > 1.0 + GATE_MARGIN {
            return Err(Error::LeftDomain { t, v });
        }
    }
    Ok(())
}

/// Integrate either system for `duration` units of the slow clock.
pub fn integrate(
    initial: SystemState,
    duration: f64,
    rel_tol: f64,
    abs_tol: f64,
    p: &ModelParameters,
) -> Result<Trajectory> {
    if !(duration > 0.0) || !(rel_tol > 0.0) || !(abs_tol > 0.0) {
        return Err(Error::Config(
            "integration requires positive duration and tolerances".into(),
        ));
    }
    let opts = OdeOptions {
        rel_tol,
        abs_tol,
        h_init: 1e-6,
        // A step ceiling guarantees a minimum sampling density for the
        // event detector even on nearly stationary stretches.
        h_max: duration / 1024.0,
        ..OdeOptions::default()
    };
    let meta = |raw_rel: f64, raw_abs: f64, acc: usize, rej: usize, lo: f64, hi: f64| {
        IntegrationMeta {
            method: "Dormand-Prince 5(4), stability-capped",
            rel_tol: raw_rel,
            abs_tol: raw_abs,
            accepted_steps: acc,
            rejected_steps: rej,
            min_step: lo,
            max_step: hi,
        }
    };
    match initial {
        SystemState::Full(s) => {
            let sys = FullOnSlowClock { p };
            let raw = integrate_path(&sys, 0.0, s.to_array(), duration, &opts)?;
            let states = raw.y.iter().map(|a| FullState::from_array(*a)).collect();
            Ok(Trajectory {
                times: raw.t,
                states: StateSeries::Full(states),
                meta: meta(rel_tol, abs_tol, raw.accepted, raw.rejected, raw.min_step, raw.max_step),
            })
        }
        SystemState::Reduced(s) => {
            let sys = ReducedOnSlowClock { p };
            let raw = integrate_path(&sys, 0.0, s.to_array(), duration, &opts)?;
            let states = raw.y.iter().map(|a| ReducedState::from_array(*a)).collect();
            Ok(Trajectory {
                times: raw.t,
                states: StateSeries::Reduced(states),
                meta: meta(rel_tol, abs_tol, raw.accepted, raw.rejected, raw.min_step, raw.max_step),
            })
        }
    }
}

/// Canonical initial condition: the true equilibrium displaced by a
/// small voltage offset along the slow manifold, with the slaved gates
/// recomputed so the point starts on the two-dimensional critical
/// manifold of the active regime.
pub fn default_initial(
    system: SystemKind,
    regime: Regime,
    p: &ModelParameters,
) -> Result<SystemState> {
    let (eq, _, _) = true_equilibrium(regime, p)?;
    let [v_eq, h_eq, n_eq] = eq;
    let v = v_eq + INITIAL_VOLTAGE_OFFSET;
    let (h, n) = match regime {
        Regime::HSlow => (h_eq, nu(v, h_eq, p)?.value),
        Regime::NSlow => (eta(v, n_eq, p)?.value, n_eq),
    };
    Ok(match system {
        SystemKind::Reduced3d => SystemState::Reduced(ReducedState::new(v, h, n)),
        SystemKind::Full4d => {
            let m = gate_inf_dimless(GateKind::M, v, p);
            SystemState::Full(FullState::new(v, m, h, n))
        }
    })
}

/// Which side of the voltage split a slow epoch sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EpochSide {
    Above,
    Below,
}

/// A feature recovered from a voltage trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    /// A full-height spike: a local voltage maximum whose rise and fall
    /// both exceed the amplitude threshold.
    LargeOscillation { t_peak: f64, amplitude: f64 },
    /// A slow narrow-band interval, carrying its small-oscillation count.
    SlowEpoch {
        side: EpochSide,
        t_start: f64,
        t_end: f64,
        sao_count: usize,
    },
}

/// Operational thresholds of the event detector and classifier.
///
/// All fractions are relative to the post-transient voltage range of the
/// trace under analysis, so one configuration serves both regimes.
#[derive(Debug, Clone)]
pub struct ClassifierConfig {
    /// Rise and fall required of a large oscillation, as a fraction of
    /// the observed voltage range.
    pub amplitude_fraction: f64,
    /// Width of the narrow band defining a slow epoch, as a fraction of
    /// the observed voltage range.
    pub epoch_band_fraction: f64,
    /// Minimum epoch duration, as a fraction of the median spacing of
    /// large oscillations (or of the analysis window when none exist).
    pub epoch_min_fraction: f64,
    /// Voltage swings below this absolute size are never large
    /// oscillations, whatever the observed range.
    pub amplitude_floor: f64,
    /// Terminal traces whose voltage range stays below this are steady.
    pub steady_band: f64,
    /// A sub-threshold trace is also steady when its terminal-quarter
    /// range has shrunk to this fraction of the early-quarter range.
    pub contraction_fraction: f64,
    /// Fraction of the trace discarded as transient before analysis.
    pub transient_fraction: f64,
    /// Hysteresis for extremum detection, as a fraction of the range.
    pub hysteresis_fraction: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            amplitude_fraction: 0.5,
            epoch_band_fraction: 0.2,
            epoch_min_fraction: 0.15,
            amplitude_floor: 0.15,
            steady_band: 1e-4,
            contraction_fraction: 0.25,
            transient_fraction: 0.3,
            hysteresis_fraction: 1e-4,
        }
    }
}

/// Firing-pattern classes ordered by increasing drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PatternClass {
    /// The voltage settles to a constant.
    Steady,
    /// Mixed-mode oscillations with slow epochs on both sides of the
    /// voltage split and no spike between paired epochs.
    DoubleEpoch,
    /// Epochs on both sides with at least one spike between a pair.
    TransitionalMMO,
    /// Mixed-mode oscillations with slow epochs on the low side only.
    SingleEpoch,
    /// Spiking with no slow epochs at all.
    Relaxation,
}

impl std::fmt::Display for PatternClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PatternClass::Steady => "steady",
            PatternClass::DoubleEpoch => "double_epoch",
            PatternClass::TransitionalMMO => "transitional_mmo",
            PatternClass::SingleEpoch => "single_epoch",
            PatternClass::Relaxation => "relaxation",
        };
        f.write_str(s)
    }
}

/// Summary of one classified trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct PatternReport {
    pub class: PatternClass,
    /// Mean slow epochs above the split per repeating unit.
    pub epochs_above: f64,
    /// Mean slow epochs below the split per repeating unit.
    pub epochs_below: f64,
    /// Mean large oscillations per repeating unit.
    pub lao_count: f64,
    /// Small-oscillation count of each slow epoch, in time order.
    pub sao_counts: Vec<usize>,
    /// Repeat time on the slow clock; zero for steady traces.
    pub period_estimate: f64,
}

/// Indices of alternating extrema (index, is_maximum) under hysteresis:
/// consecutive extrema always alternate and differ by at least `hyst`.
fn alternating_extrema(v: &[f64], hyst: f64) -> Vec<(usize, bool)> {
    let mut out = Vec::new();
    if v.len() < 2 {
        return out;
    }
    let mut hi = 0usize;
    let mut lo = 0usize;
    // trend: None until the first confirmed move, then Some(rising).
    let mut trend: Option<bool> = None;
    for i in 1..v.len() {
        if v[i] > v[hi] {
            hi = i;
        }
        if v[i] < v[lo] {
            lo = i;
        }
        match trend {
            None => {
                if v[i] <= v[hi] - hyst {
                    out.push((hi, true));
                    trend = Some(false);
                    lo = i;
                } else if v[i] >= v[lo] + hyst {
                    out.push((lo, false));
                    trend = Some(true);
                    hi = i;
                }
            }
            Some(true) => {
                if v[i] <= v[hi] - hyst {
                    out.push((hi, true));
                    trend = Some(false);
                    lo = i;
                }
            }
            Some(false) => {
                if v[i] >= v[lo] + hyst {
                    out.push((lo, false));
                    trend = Some(true);
                    hi = i;
                }
            }
        }
    }
    out
}

/// Median of a small, unsorted sample.
fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = xs.len();
    if k == 0 {
        return 0.0;
    }
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

/// Events of a sampled voltage trace.
///
/// Large oscillations are local maxima whose rise from the preceding
/// minimum and fall to the following minimum both exceed
/// `amplitude_threshold`; one-sided large swings are transitions, not
/// spikes. Slow epochs are maximal narrow-band intervals outside the
/// spikes, kept when they last long enough, and sided by comparing
/// their mean voltage with `v_split`.
pub fn extract_events(
    times: &[f64],
    v: &[f64],
    v_split: f64,
    amplitude_threshold: f64,
    cfg: &ClassifierConfig,
) -> Result<Vec<Event>> {
    if times.len() != v.len() {
        return Err(Error::Config(
            "event extraction requires matching time and voltage lengths".into(),
        ));
    }
    if times.len() < MIN_SAMPLES {
        return Err(Error::TooShort {
            reason: format!("{} samples, need at least {}", times.len(), MIN_SAMPLES),
        });
    }
    let span = times[times.len() - 1] - times[0];
    if !(span > 0.0) {
        return Err(Error::TooShort {
            reason: "zero time span".into(),
        });
    }
    let v_min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let v_max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = v_max - v_min;
    if range <= 0.0 {
        return Ok(Vec::new());
    }

    let hyst = cfg.hysteresis_fraction * range;
    let ext = alternating_extrema(v, hyst);

    // Spikes: maxima with large rise and large fall. Each spike covers
    // the samples from its flanking minima (or the trace edge).
    let mut laos: Vec<(usize, usize, usize)> = Vec::new();
    for (k, &(idx, is_max)) in ext.iter().enumerate() {
        if !is_max {
            continue;
        }
        let rise = if k > 0 { v[idx] - v[ext[k - 1].0] } else { 0.0 };
        let fall = if k + 1 < ext.len() {
            v[idx] - v[ext[k + 1].0]
        } else {
            0.0
        };
        if rise > amplitude_threshold && fall > amplitude_threshold {
            let start = ext[k - 1].0;
            let end = ext[k + 1].0;
            laos.push((start, idx, end));
        }
    }

    // Epoch duration floor: a fraction of the median spike spacing, or
    // of the whole window when the trace never spikes.
    let min_duration = if laos.len() >= 2 {
        let mut gaps: Vec<f64> = laos
            .windows(2)
            .map(|w| times[w[1].1] - times[w[0].1])
            .collect();
        cfg.epoch_min_fraction * median(&mut gaps)
    } else {
        cfg.epoch_min_fraction * span * 0.25
    };
    let band = cfg.epoch_band_fraction * range;

    // Gaps: maximal index intervals not covered by any spike.
    let mut gaps: Vec<(usize, usize)> = Vec::new();
    let mut cursor = 0usize;
    for &(s, _, e) in &laos {
        if s > cursor {
            gaps.push((cursor, s));
        }
        cursor = cursor.max(e);
    }
    if cursor + 1 < v.len() {
        gaps.push((cursor, v.len() - 1));
    }

    // Narrow-band segmentation inside each gap: grow a window while its
    // voltage range stays inside the band, close it when violated.
    let mut epochs: Vec<(usize, usize)> = Vec::new();
    for &(a, b) in &gaps {
        let mut s = a;
        let mut wmin = v[a];
        let mut wmax = v[a];
        for i in a + 1..=b {
            wmin = wmin.min(v[i]);
            wmax = wmax.max(v[i]);
            if wmax - wmin > band {
                if times[i - 1] - times[s] >= min_duration {
                    epochs.push((s, i - 1));
                }
                s = i;
                wmin = v[i];
                wmax = v[i];
            }
        }
        if times[b] - times[s] >= min_duration {
            epochs.push((s, b));
        }
    }

    // Merge into a single time-ordered event stream.
    let mut events: Vec<(f64, Event)> = Vec::new();
    for &(_, peak, _) in &laos {
        let amplitude = v[peak] - v_min;
        events.push((
            times[peak],
            Event::LargeOscillation {
                t_peak: times[peak],
                amplitude,
            },
        ));
    }
    for &(s, e) in &epochs {
        let mean =
            v[s..=e].iter().sum::<f64>() / (e - s + 1) as f64;
        let side = if mean >= v_split {
            EpochSide::Above
        } else {
            EpochSide::Below
        };
        let sao_count = ext
            .iter()
            .filter(|&&(idx, is_max)| is_max && idx > s && idx < e)
            .count();
        events.push((
            times[s],
            Event::SlowEpoch {
                side,
                t_start: times[s],
                t_end: times[e],
                sao_count,
            },
        ));
    }
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(events.into_iter().map(|(_, e)| e).collect())
}

/// First stored index at or after the transient cut.
fn transient_cut(times: &[f64], fraction: f64) -> usize {
    let t_cut = times[0] + fraction * (times[times.len() - 1] - times[0]);
    times.partition_point(|&t| t < t_cut)
}

/// Classify the asymptotic firing pattern of a trajectory.
///
/// The leading transient is discarded, the voltage split is placed at
/// the midpoint of the two folded-singularity voltages, events are
/// extracted, and the event stream is matched against the pattern
/// classes. Traces with oscillations too small to carry spikes or
/// epochs are reported as unclassifiable rather than forced into a
/// class.
pub fn classify_pattern(
    traj: &Trajectory,
    regime: Regime,
    p: &ModelParameters,
    cfg: &ClassifierConfig,
) -> Result<PatternReport> {
    if traj.len() < MIN_SAMPLES {
        return Err(Error::TooShort {
            reason: format!("{} samples, need at least {}", traj.len(), MIN_SAMPLES),
        });
    }
    let all_v = traj.voltages();
    let cut = transient_cut(&traj.times, cfg.transient_fraction);
    let times = &traj.times[cut..];
    let v = &all_v[cut..];
    if times.len() < MIN_SAMPLES {
        return Err(Error::TooShort {
            reason: "post-transient window too short".into(),
        });
    }

    let range_of = |w: &[f64]| {
        let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let v_min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let v_max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = v_max - v_min;
    // Time quarters of the post-transient window: a decaying approach
    // to equilibrium contracts from the early quarter to the terminal
    // one, a sustained oscillation does not.
    let t0 = times[0];
    let t1 = times[times.len() - 1];
    let early_end = times.partition_point(|&t| t < t0 + 0.25 * (t1 - t0));
    let term_start = times.partition_point(|&t| t < t1 - 0.25 * (t1 - t0));
    let early_range = range_of(&v[..early_end.max(2)]);
    let terminal_range = range_of(&v[term_start.min(v.len() - 2)..]);

    let steady = PatternReport {
        class: PatternClass::Steady,
        epochs_above: 0.0,
        epochs_below: 0.0,
        lao_count: 0.0,
        sao_counts: Vec::new(),
        period_estimate: 0.0,
    };
    if range < cfg.steady_band {
        return Ok(steady);
    }

    // Sub-threshold traces never carry spikes: decayed or still
    // decaying ones are steady, persistent ones sit outside the
    // pattern classes.
    if range < cfg.amplitude_floor {
        if terminal_range < cfg.steady_band
            || terminal_range <= cfg.contraction_fraction * early_range
        {
            return Ok(steady);
        }
        return Err(Error::Unclassifiable {
            reason: format!("sub-threshold oscillation of range {range:.3e}"),
        });
    }

    let v_split = match folded_singularities(regime, p) {
        Ok((q_minus, q_plus)) => 0.5 * (q_minus.v + q_plus.v),
        Err(_) => 0.5 * (v_min + v_max),
    };
    let amplitude_threshold = (cfg.amplitude_fraction * range).max(cfg.amplitude_floor);
    let events = extract_events(times, v, v_split, amplitude_threshold, cfg)?;

    let mut lao_times: Vec<f64> = Vec::new();
    let mut above: Vec<(f64, f64)> = Vec::new();
    let mut below: Vec<(f64, f64)> = Vec::new();
    let mut sao_counts: Vec<usize> = Vec::new();
    for e in &events {
        match *e {
            Event::LargeOscillation { t_peak, .. } => lao_times.push(t_peak),
            Event::SlowEpoch {
                side,
                t_start,
                t_end,
                sao_count,
            } => {
                match side {
                    EpochSide::Above => above.push((t_start, t_end)),
                    EpochSide::Below => below.push((t_start, t_end)),
                }
                sao_counts.push(sao_count);
            }
        }
    }

    // Repeat markers: starts of below epochs when present, else spike
    // peaks. Two repeats are the minimum for a period estimate.
    let markers: Vec<f64> = if !below.is_empty() {
        below.iter().map(|&(s, _)| s).collect()
    } else {
        lao_times.clone()
    };
    let (period, repeats) = if markers.len() >= 3 {
        let period = (markers[markers.len() - 1] - markers[0]) / (markers.len() - 1) as f64;
        (period, (markers.len() - 1) as f64)
    } else {
        (0.0, 0.0)
    };
    if repeats < 2.0 {
        // A stray transient spike followed by terminal rest is steady.
        if terminal_range < cfg.steady_band {
            return Ok(steady);
        }
        return Err(Error::Unclassifiable {
            reason: format!(
                "only {} repeating units resolved; integrate longer",
                markers.len().saturating_sub(1)
            ),
        });
    }

    let per = |count: usize| count as f64 / repeats;
    // Markers are empty when the trace has neither spikes nor below
    // epochs, so reaching this point guarantees repeating structure.
    let class = if above.is_empty() && below.is_empty() {
        PatternClass::Relaxation
    } else if above.is_empty() {
        PatternClass::SingleEpoch
    } else if below.is_empty() {
        return Err(Error::Unclassifiable {
            reason: "slow epochs above the split only".into(),
        });
    } else {
        // Paired epochs on opposite sides: a spike strictly between an
        // adjacent above/below pair marks the transitional pattern.
        let mut intervals: Vec<(f64, f64, EpochSide)> = Vec::new();
        for &(s, e) in &above {
            intervals.push((s, e, EpochSide::Above));
        }
        for &(s, e) in &below {
            intervals.push((s, e, EpochSide::Below));
        }
        intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut spike_between_pair = false;
        for w in intervals.windows(2) {
            if w[0].2 != w[1].2 {
                let gap = (w[0].1, w[1].0);
                if lao_times.iter().any(|&t| t > gap.0 && t < gap.1) {
                    spike_between_pair = true;
                    break;
                }
            }
        }
        if spike_between_pair {
            PatternClass::TransitionalMMO
        } else {
            PatternClass::DoubleEpoch
        }
    };

    Ok(PatternReport {
        class,
        epochs_above: per(above.len()),
        epochs_below: per(below.len()),
        lao_count: per(lao_times.len()),
        sao_counts,
        period_estimate: period,
    })
}

/// Integration and classification settings for current sweeps.
#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub system: SystemKind,
    /// Slow-clock duration of each trajectory.
    pub duration: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Physical-current width below which a class boundary is resolved.
    pub resolution: f64,
    pub classifier: ClassifierConfig,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            system: SystemKind::Full4d,
            duration: 150.0,
            rel_tol: 1e-7,
            abs_tol: 1e-10,
            resolution: 0.05,
            classifier: ClassifierConfig::default(),
        }
    }
}

/// Outcome of classifying one current value: a pattern class, or a
/// persistent oscillation the classes do not cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepOutcome {
    Class(PatternClass),
    SmallOscillation,
}

impl std::fmt::Display for SweepOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepOutcome::Class(c) => c.fmt(f),
            SweepOutcome::SmallOscillation => f.write_str("small_oscillation"),
        }
    }
}

/// A refined boundary between two sweep outcomes.
#[derive(Debug, Clone, Serialize)]
pub struct ClassBoundary {
    pub i_low: f64,
    pub outcome_low: SweepOutcome,
    pub i_high: f64,
    pub outcome_high: SweepOutcome,
}

/// Grid samples and refined boundaries of one sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub samples: Vec<(f64, SweepOutcome)>,
    pub boundaries: Vec<ClassBoundary>,
}

/// Classify the asymptotic pattern at one physical current.
pub fn classify_at_current(
    i_physical: f64,
    regime: Regime,
    opts: &SweepOptions,
    base: &ModelParameters,
) -> Result<SweepOutcome> {
    let p = base.clone().with_current(i_physical);
    let initial = default_initial(opts.system, regime, &p)?;
    let traj = integrate(initial, opts.duration, opts.rel_tol, opts.abs_tol, &p)?;
    match classify_pattern(&traj, regime, &p, &opts.classifier) {
        Ok(report) => Ok(SweepOutcome::Class(report.class)),
        Err(Error::Unclassifiable { .. }) => Ok(SweepOutcome::SmallOscillation),
        Err(e) => Err(e),
    }
}

/// Sweep a physical-current interval, classify every grid point, and
/// bisect each boundary between distinct outcomes down to the requested
/// resolution.
pub fn sweep_current(
    i_range: (f64, f64),
    n_points: usize,
    regime: Regime,
    opts: &SweepOptions,
    base: &ModelParameters,
) -> Result<SweepReport> {
    let (lo, hi) = i_range;
    if !(hi > lo) || n_points < 2 {
        return Err(Error::Config(
            "sweep requires an increasing current range and at least two points".into(),
        ));
    }
    let grid: Vec<f64> = (0..n_points)
        .map(|k| lo + (hi - lo) * k as f64 / (n_points - 1) as f64)
        .collect();
    let samples: Vec<(f64, SweepOutcome)> = grid
        .par_iter()
        .map(|&i| classify_at_current(i, regime, opts, base).map(|o| (i, o)))
        .collect::<Result<Vec<_>>>()?;

    let mut boundaries = Vec::new();
    for w in samples.windows(2) {
        let (mut i_lo, out_lo) = w[0];
        let (mut i_hi, out_hi) = w[1];
        if out_lo == out_hi {
            continue;
        }
        let (b_lo, mut b_hi) = (out_lo, out_hi);
        while i_hi - i_lo > opts.resolution {
            let mid = 0.5 * (i_lo + i_hi);
            let out_mid = classify_at_current(mid, regime, opts, base)?;
            if out_mid == b_lo {
                i_lo = mid;
            } else {
                // Midpoints in a different class from both ends shrink
                // the bracket from above; interior windows narrower
                // than the resolution are reported as-is.
                i_hi = mid;
                b_hi = out_mid;
            }
        }
        boundaries.push(ClassBoundary {
            i_low: i_lo,
            outcome_low: b_lo,
            i_high: i_hi,
            outcome_high: b_hi,
        });
    }
    Ok(SweepReport { samples, boundaries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParameters;

    const TEST_REL_TOL: f64 = 1e-7;
    const TEST_ABS_TOL: f64 = 1e-10;

    #[test]
    fn alternating_extrema_finds_peaks_and_troughs() {
        // Four full sine periods sampled densely. The starting point
        // anchors the walk as a fifth minimum.
        let v: Vec<f64> = (0..400)
            .map(|i| (i as f64 * std::f64::consts::TAU / 100.0).sin())
            .collect();
        let ext = alternating_extrema(&v, 1e-3);
        let maxima = ext.iter().filter(|&&(_, m)| m).count();
        let minima = ext.iter().filter(|&&(_, m)| !m).count();
        assert_eq!(maxima, 4);
        assert_eq!(minima, 5);
        for w in ext.windows(2) {
            assert_ne!(w[0].1, w[1].1, "extrema must alternate");
        }
    }

    #[test]
    fn extrema_hysteresis_ignores_small_ripple() {
        // A slow ramp with ripple far below the hysteresis width: only
        // the anchoring start point is emitted, never a maximum.
        let v: Vec<f64> = (0..500)
            .map(|i| i as f64 * 1e-3 + 1e-6 * ((i as f64).sin()))
            .collect();
        let ext = alternating_extrema(&v, 0.05);
        assert!(ext.len() <= 1);
        assert!(ext.iter().all(|&(_, is_max)| !is_max));
    }

    #[test]
    fn constant_trace_yields_no_events() {
        let times: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let v = vec![-0.6; 100];
        let events =
            extract_events(&times, &v, -0.3, 0.3, &ClassifierConfig::default()).unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn too_few_samples_is_rejected() {
        let times = vec![0.0, 1.0, 2.0];
        let v = vec![0.0, 1.0, 0.0];
        let err = extract_events(&times, &v, 0.0, 0.5, &ClassifierConfig::default());
        assert!(matches!(err, Err(Error::TooShort { .. })));
    }

    #[test]
    fn one_sided_swings_are_not_large_oscillations() {
        // A staircase with an overshooting step: the peak rises far
        // above the low plateau but barely falls afterwards, so it is a
        // transition, not a spike.
        let mut times = Vec::new();
        let mut v = Vec::new();
        for i in 0..200 {
            times.push(i as f64 * 0.05);
            let t = i as f64 / 200.0;
            v.push(if t < 0.45 {
                -0.6
            } else if t < 0.5 {
                -0.6 + (t - 0.45) * 20.0 * 0.75
            } else {
                0.1 + 0.05 * (-(t - 0.5) * 40.0).exp()
            });
        }
        let cfg = ClassifierConfig::default();
        let events = extract_events(&times, &v, -0.25, 0.4, &cfg).unwrap();
        let spikes = events
            .iter()
            .filter(|e| matches!(e, Event::LargeOscillation { .. }))
            .count();
        assert_eq!(spikes, 0, "one-sided swing misread as a spike");
    }

    #[test]
    fn synthetic_spike_train_counts_spikes_and_epochs() {
        // Spikes from a low plateau: each spike rises and falls by the
        // full range; the plateaus between them are slow epochs.
        // The trailing plateau lets the last spike confirm its closing
        // minimum; a trace ending mid-fall would drop that spike.
        let mut times = Vec::new();
        let mut v = Vec::new();
        let dt = 0.01;
        for i in 0..4150 {
            let t = i as f64 * dt;
            times.push(t);
            let phase = t % 10.0;
            v.push(if phase < 9.0 {
                -0.6 + 0.002 * (phase * 3.0).sin()
            } else {
                -0.6 + 0.7 * (-((phase - 9.5) / 0.12).powi(2)).exp()
            });
        }
        let cfg = ClassifierConfig::default();
        let events = extract_events(&times, &v, -0.3, 0.35, &cfg).unwrap();
        let spikes = events
            .iter()
            .filter(|e| matches!(e, Event::LargeOscillation { .. }))
            .count();
        let epochs = events
            .iter()
            .filter(|e| matches!(e, Event::SlowEpoch { .. }))
            .count();
        assert_eq!(spikes, 4);
        assert!(epochs >= 3, "plateaus between spikes are epochs, got {epochs}");
        for e in &events {
            if let Event::SlowEpoch { side, .. } = e {
                assert_eq!(*side, EpochSide::Below);
            }
        }
    }

    #[test]
    fn default_initial_sits_on_the_critical_manifold() {
        for regime in [Regime::HSlow, Regime::NSlow] {
            let p = ModelParameters::for_regime(regime).with_current(20.0);
            let state = default_initial(SystemKind::Reduced3d, regime, &p).unwrap();
            let SystemState::Reduced(s) = state else {
                panic!("requested the reduced system");
            };
            // The slaved gate reproduces the graph value exactly.
            match regime {
                Regime::HSlow => {
                    let n = nu(s.v, s.h, &p).unwrap().value;
                    assert!((n - s.n).abs() < 1e-12);
                }
                Regime::NSlow => {
                    let h = eta(s.v, s.n, &p).unwrap().value;
                    assert!((h - s.h).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn trajectory_invariants_hold() {
        let p = ModelParameters::h_slow().with_current(20.0);
        let initial = default_initial(SystemKind::Full4d, Regime::HSlow, &p).unwrap();
        let traj = integrate(initial, 5.0, TEST_REL_TOL, TEST_ABS_TOL, &p).unwrap();
        assert_eq!(traj.times.len(), traj.states.len());
        assert_eq!(traj.times[0], 0.0);
        for w in traj.times.windows(2) {
            assert!(w[1] > w[0], "times must increase strictly");
        }
        let SystemState::Full(s0) = initial else {
            panic!()
        };
        let StateSeries::Full(states) = &traj.states else {
            panic!()
        };
        assert_eq!(states[0].to_array(), s0.to_array());
        for s in states {
            for x in s.to_array() {
                assert!(x.is_finite());
            }
        }
        let end = traj.times[traj.len() - 1];
        assert!((end - 5.0).abs() < 1e-9, "integration must reach the horizon");
    }

    #[test]
    fn equilibrium_initial_condition_stays_put() {
        let p = ModelParameters::h_slow().with_current(2.0);
        let (eq, _, _) = true_equilibrium(Regime::HSlow, &p).unwrap();
        let [v, h, n] = eq;
        let m = gate_inf_dimless(GateKind::M, v, &p);
        let initial = SystemState::Full(FullState::new(v, m, h, n));
        let traj = integrate(initial, 10.0, 1e-9, 1e-12, &p).unwrap();
        let StateSeries::Full(states) = &traj.states else {
            panic!()
        };
        let last = states[states.len() - 1];
        assert!(
            (last.v - v).abs() < 1e-6,
            "equilibrium drifted to v = {}",
            last.v
        );
    }

    #[test]
    fn steady_pattern_below_onset() {
        let p = ModelParameters::h_slow().with_current(2.0);
        let initial = default_initial(SystemKind::Full4d, Regime::HSlow, &p).unwrap();
        let traj = integrate(initial, 60.0, TEST_REL_TOL, TEST_ABS_TOL, &p).unwrap();
        let report =
            classify_pattern(&traj, Regime::HSlow, &p, &ClassifierConfig::default()).unwrap();
        assert_eq!(report.class, PatternClass::Steady);
    }

    #[test]
    fn invalid_tolerances_are_rejected() {
        let p = ModelParameters::h_slow().with_current(10.0);
        let initial = default_initial(SystemKind::Full4d, Regime::HSlow, &p).unwrap();
        let err = integrate(initial, -1.0, 1e-6, 1e-9, &p);
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
