//! Channel gating rates, steady states and voltage-dependent clocks.
//!
//! Rate constants follow the classical squid-axon fits and take their
//! argument in millivolts. Two of the opening rates are ratios of the form
//! s / (1 - exp(-s)) with a removable singularity (at -40 mV for m and
//! -55 mV for n); inside |s| < 1e-4 they are evaluated by the quadratic
//! Taylor polynomial, whose truncation error there is below 1e-18.
//!
//! Everything downstream of this module works with dimensionless voltage;
//! the `*_dimless` helpers do the v * k_v conversion so that the millivolt
//! constants above stay literal.

use crate::params::{GateKind, ModelParameters, TimescaleMax};

/// Threshold on the shifted argument below which the series expansion of
/// s / (1 - exp(-s)) replaces the direct formula.
const SERIES_CUTOFF: f64 = 1e-4;

/// s / (1 - exp(-s)), finite at s = 0 with value 1.
fn ratio_exp(s: f64) -> f64 {
    if s.abs() < SERIES_CUTOFF {
        1.0 + s / 2.0 + s * s / 12.0
    } else {
        s / (-(-s).exp_m1())
    }
}

/// d/ds of [`ratio_exp`].
fn ratio_exp_ds(s: f64) -> f64 {
    if s.abs() < SERIES_CUTOFF {
        0.5 + s / 6.0
    } else {
        let u = -(-s).exp_m1(); // 1 - exp(-s)
        (u - s * (1.0 - u)) / (u * u)
    }
}

/// Opening rate alpha_x(V), V in millivolts.
pub fn alpha(gate: GateKind, v_mv: f64) -> f64 {
    match gate {
        GateKind::M => ratio_exp((v_mv + 40.0) / 10.0),
        GateKind::H => 0.07 * (-(v_mv + 65.0) / 20.0).exp(),
        GateKind::N => 0.1 * ratio_exp((v_mv + 55.0) / 10.0),
    }
}

/// Closing rate beta_x(V), V in millivolts.
pub fn beta(gate: GateKind, v_mv: f64) -> f64 {
    match gate {
        GateKind::M => 4.0 * (-(v_mv + 65.0) / 18.0).exp(),
        GateKind::H => 1.0 / (1.0 + (-(v_mv + 35.0) / 10.0).exp()),
        GateKind::N => 0.125 * (-(v_mv + 65.0) / 80.0).exp(),
    }
}

/// d alpha / dV, V in millivolts.
pub fn alpha_dv(gate: GateKind, v_mv: f64) -> f64 {
    match gate {
        GateKind::M => ratio_exp_ds((v_mv + 40.0) / 10.0) / 10.0,
        GateKind::H => -0.07 / 20.0 * (-(v_mv + 65.0) / 20.0).exp(),
        GateKind::N => 0.01 * ratio_exp_ds((v_mv + 55.0) / 10.0),
    }
}

/// d beta / dV, V in millivolts.
pub fn beta_dv(gate: GateKind, v_mv: f64) -> f64 {
    match gate {
        GateKind::M => -4.0 / 18.0 * (-(v_mv + 65.0) / 18.0).exp(),
        GateKind::H => {
            let b = beta(GateKind::H, v_mv);
            b * (1.0 - b) / 10.0
        }
        GateKind::N => -0.125 / 80.0 * (-(v_mv + 65.0) / 80.0).exp(),
    }
}

/// Steady-state activation x_inf(V) = alpha / (alpha + beta), V in mV.
pub fn gate_inf(gate: GateKind, v_mv: f64) -> f64 {
    let a = alpha(gate, v_mv);
    a / (a + beta(gate, v_mv))
}

/// d x_inf / dV, V in millivolts.
pub fn gate_inf_dv(gate: GateKind, v_mv: f64) -> f64 {
    let a = alpha(gate, v_mv);
    let b = beta(gate, v_mv);
    let da = alpha_dv(gate, v_mv);
    let db = beta_dv(gate, v_mv);
    (da * b - a * db) / ((a + b) * (a + b))
}

/// Unnormalised gating time t_hat(V) = 1 / (alpha + beta) in milliseconds.
pub fn t_hat(gate: GateKind, v_mv: f64) -> f64 {
    1.0 / (alpha(gate, v_mv) + beta(gate, v_mv))
}

/// d t_hat / dV, V in millivolts.
pub fn t_hat_dv(gate: GateKind, v_mv: f64) -> f64 {
    let s = alpha(gate, v_mv) + beta(gate, v_mv);
    -(alpha_dv(gate, v_mv) + beta_dv(gate, v_mv)) / (s * s)
}

/// x_inf as a function of dimensionless voltage.
pub fn gate_inf_dimless(gate: GateKind, v: f64, p: &ModelParameters) -> f64 {
    gate_inf(gate, v * p.k_v)
}

/// d x_inf / dv (dimensionless voltage derivative).
pub fn gate_inf_dimless_dv(gate: GateKind, v: f64, p: &ModelParameters) -> f64 {
    p.k_v * gate_inf_dv(gate, v * p.k_v)
}

/// Inverse of the dimensionless gating time, 1 / t_hat, at dimensionless v.
fn inv_t_hat_dimless(gate: GateKind, v: f64, p: &ModelParameters) -> f64 {
    p.k_t * (alpha(gate, v * p.k_v) + beta(gate, v * p.k_v))
}

/// Maximise 1 / t_hat over the closed reversal-potential window.
///
/// A uniform scan (1e4 cells) brackets the maximum, golden-section search
/// shrinks the bracket below 1e-10. The window is closed: if the scan's best
/// cell touches an endpoint the endpoint is reported with `at_boundary`
/// set, since the golden bracket cannot extend past it.
pub fn timescale_max(gate: GateKind, p: &ModelParameters) -> TimescaleMax {
    const SCAN_POINTS: usize = 10_001;
    const BRACKET_TOL: f64 = 1e-10;

    let (lo, hi) = (p.ebar_k, p.ebar_na);
    let f = |v: f64| inv_t_hat_dimless(gate, v, p);

    let step = (hi - lo) / (SCAN_POINTS - 1) as f64;
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..SCAN_POINTS {
        let value = f(lo + step * i as f64);
        if value > best {
            best = value;
            best_i = i;
        }
    }

    if best_i == 0 || best_i == SCAN_POINTS - 1 {
        let v_arg = lo + step * best_i as f64;
        return TimescaleMax { value: best, v_arg, at_boundary: true };
    }

    let (a, b) = (lo + step * (best_i - 1) as f64, lo + step * (best_i + 1) as f64);
    let (v_arg, value) = crate::solve::golden_max(f, a, b, BRACKET_TOL);
    TimescaleMax { value, v_arg, at_boundary: false }
}

/// Convenience wrapper returning only the reference rate.
pub fn timescale_t(gate: GateKind, p: &ModelParameters) -> f64 {
    timescale_max(gate, p).value
}

/// Normalised gating time t_x(v) = T_x * t_hat(v) (dimensionless, >= 1 up
/// to the bracketing tolerance; equals 1 at the reference voltage).
pub fn t_scaled(gate: GateKind, v: f64, p: &ModelParameters) -> f64 {
    p.big_t(gate) / inv_t_hat_dimless(gate, v, p)
}

/// d t_scaled / dv (dimensionless voltage derivative).
pub fn t_scaled_dv(gate: GateKind, v: f64, p: &ModelParameters) -> f64 {
    p.big_t(gate) * p.k_v * t_hat_dv(gate, v * p.k_v) / p.k_t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParameters;

    /// Classical rate-constant values at the voltages where the formulas
    /// reduce to round numbers.
    #[test]
    fn rate_table_anchor_values() {
        assert_eq!(alpha(GateKind::M, -40.0), 1.0);
        assert_eq!(alpha(GateKind::N, -55.0), 0.1);
        assert!((alpha(GateKind::H, -65.0) - 0.07).abs() < 1e-15);
        assert!((beta(GateKind::M, -65.0) - 4.0).abs() < 1e-15);
        assert!((beta(GateKind::N, -65.0) - 0.125).abs() < 1e-15);
        assert!((beta(GateKind::H, -35.0) - 0.5).abs() < 1e-15);
    }

    /// The series fallback must join the direct formula continuously at the
    /// removable singularities.
    #[test]
    fn removable_singularities_are_continuous() {
        for dv in [-1e-6, -1e-5, 1e-5, 1e-6] {
            assert!((alpha(GateKind::M, -40.0 + dv) - 1.0).abs() < 1e-5);
            assert!((alpha(GateKind::N, -55.0 + dv) - 0.1).abs() < 1e-6);
        }
        // The two evaluation paths agree at the cutoff itself.
        let s = super::SERIES_CUTOFF;
        let direct = s / (-(-s).exp_m1());
        let series = 1.0 + s / 2.0 + s * s / 12.0;
        assert!((direct - series).abs() < 1e-14);
    }

    /// Closed-form voltage derivatives against central differences.
    #[test]
    fn rate_derivatives_match_finite_differences() {
        type Rate = fn(GateKind, f64) -> f64;
        let pairs: [(Rate, Rate); 4] = [
            (alpha, alpha_dv),
            (beta, beta_dv),
            (gate_inf, gate_inf_dv),
            (t_hat, t_hat_dv),
        ];
        let vs = [-75.0, -65.0, -55.0001, -48.3, -40.0001, -20.0, 0.0, 35.0, 49.0];
        let step = 1e-5;
        for gate in GateKind::ALL {
            for &v in &vs {
                for (f, df) in pairs {
                    let fd = (f(gate, v + step) - f(gate, v - step)) / (2.0 * step);
                    let cf = df(gate, v);
                    let scale = cf.abs().max(1e-6);
                    assert!(
                        (fd - cf).abs() / scale < 1e-6,
                        "{gate:?} at {v}: closed {cf} vs fd {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn steady_states_live_in_unit_interval() {
        for gate in GateKind::ALL {
            for i in 0..=200 {
                let v = -77.0 + i as f64 * (127.0 / 200.0);
                let x = gate_inf(gate, v);
                assert!(x > 0.0 && x < 1.0, "{gate:?} at {v}: {x}");
            }
        }
    }

    /// Reference rates for the default window: the m-gate clock is an order
    /// of magnitude faster than h and n, and all three maximise at the
    /// sodium-side endpoint.
    #[test]
    fn reference_rates_have_expected_magnitudes() {
        let p = ModelParameters::h_slow();
        let tm = timescale_max(GateKind::M, &p);
        let th = timescale_max(GateKind::H, &p);
        let tn = timescale_max(GateKind::N, &p);
        assert!(tm.value > 8.0 && tm.value < 11.0, "T_m = {}", tm.value);
        assert!(th.value > 0.9 && th.value < 1.1, "T_h = {}", th.value);
        assert!(tn.value > 0.9 && tn.value < 1.3, "T_n = {}", tn.value);
        for t in [tm, th, tn] {
            assert!(t.at_boundary);
            assert!((t.v_arg - p.ebar_na).abs() < 1e-12);
        }
    }

    /// Doubling the scan resolution must not move the maximum: the golden
    /// refinement already pins it to the bracket tolerance.
    #[test]
    fn timescale_max_is_scan_resolution_invariant() {
        let p = ModelParameters::h_slow();
        for gate in GateKind::ALL {
            let coarse = timescale_max(gate, &p).value;
            // Re-run the maximisation on a shifted window so the interior
            // path is exercised too: shrink the top so the maximiser moves
            // inside or stays at the new endpoint consistently.
            let mut q = p.clone();
            q.ebar_na = 0.499_937;
            q.refresh_timescales();
            let shifted = timescale_max(gate, &q).value;
            assert!(shifted <= coarse + 1e-12);
            let again = timescale_max(gate, &q).value;
            assert_eq!(shifted, again, "{gate:?} maximisation not deterministic");
        }
    }

    /// t_scaled is normalised: infimum 1 over the window, attained at the
    /// reference voltage.
    #[test]
    fn normalised_clock_has_unit_floor() {
        let p = ModelParameters::h_slow();
        for gate in GateKind::ALL {
            let mut min = f64::INFINITY;
            for i in 0..=4000 {
                let v = p.ebar_k + i as f64 * ((p.ebar_na - p.ebar_k) / 4000.0);
                min = min.min(t_scaled(gate, v, &p));
            }
            assert!(min >= 1.0 - 1e-9, "{gate:?}: min t_scaled {min}");
            assert!(min <= 1.0 + 1e-6, "{gate:?}: floor not attained, min {min}");
            let at_ref = t_scaled(gate, p.timescale_record(gate).v_arg, &p);
            assert!((at_ref - 1.0).abs() < 1e-12);
        }
    }
}
