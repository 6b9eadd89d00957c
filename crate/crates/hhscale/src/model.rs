//! The dimensionless membrane model: ionic current balance, gate drift
//! terms and the four-dimensional vector field on the fast clock.
//!
//! The field's clock hierarchy is v (order 1), m (order gamma), then h and
//! n (order gamma * epsilon_mid * delta). Setting a delta to 1 puts that
//! gate on the intermediate clock; a small delta makes it the slow
//! variable.

use crate::gating;
use crate::params::{FullState, GateKind, ModelParameters};

/// Convert an applied current in microamperes per square centimetre to the
/// dimensionless current.
pub fn rescale_current(i_phys: f64, p: &ModelParameters) -> f64 {
    i_phys / (p.k_v * p.g_na)
}

/// Inverse of [`rescale_current`].
pub fn physical_current(ibar: f64, p: &ModelParameters) -> f64 {
    ibar * p.k_v * p.g_na
}

/// Net membrane current: applied current minus sodium, potassium and leak
/// currents. Zero level sets of this function are the critical manifold of
/// the fast dynamics.
pub fn rhs_v(v: f64, m: f64, h: f64, n: f64, p: &ModelParameters) -> f64 {
    p.ibar
        - (v - p.ebar_na) * m * m * m * h
        - p.gbar_k * (v - p.ebar_k) * n * n * n * n
        - p.gbar_l * (v - p.ebar_l)
}

/// Partial of [`rhs_v`] in v at fixed gates.
pub fn rhs_v_dv(m: f64, h: f64, n: f64, p: &ModelParameters) -> f64 {
    -(m * m * m * h) - p.gbar_k * n * n * n * n - p.gbar_l
}

/// Partial of [`rhs_v`] in m.
pub fn rhs_v_dm(v: f64, m: f64, h: f64, p: &ModelParameters) -> f64 {
    -3.0 * (v - p.ebar_na) * m * m * h
}

/// Partial of [`rhs_v`] in h.
pub fn rhs_v_dh(v: f64, m: f64, p: &ModelParameters) -> f64 {
    -(v - p.ebar_na) * m * m * m
}

/// Partial of [`rhs_v`] in n.
pub fn rhs_v_dn(v: f64, n: f64, p: &ModelParameters) -> f64 {
    -4.0 * p.gbar_k * (v - p.ebar_k) * n * n * n
}

/// Relaxation drift of a gate on its own clock: (x_inf - x) / t_x.
pub fn gate_drift(gate: GateKind, v: f64, x: f64, p: &ModelParameters) -> f64 {
    (gating::gate_inf_dimless(gate, v, p) - x) / gating::t_scaled(gate, v, p)
}

/// Partial of [`gate_drift`] in v.
pub fn gate_drift_dv(gate: GateKind, v: f64, x: f64, p: &ModelParameters) -> f64 {
    let t = gating::t_scaled(gate, v, p);
    let dt = gating::t_scaled_dv(gate, v, p);
    let dxi = gating::gate_inf_dimless_dv(gate, v, p);
    dxi / t - (gating::gate_inf_dimless(gate, v, p) - x) * dt / (t * t)
}

/// Partial of [`gate_drift`] in the gate variable itself.
pub fn gate_drift_dx(gate: GateKind, v: f64, p: &ModelParameters) -> f64 {
    -1.0 / gating::t_scaled(gate, v, p)
}

/// The four-dimensional vector field on the fast clock.
pub fn full_vector_field(s: FullState, p: &ModelParameters) -> [f64; 4] {
    let ge = p.gamma * p.epsilon_mid;
    [
        rhs_v(s.v, s.m, s.h, s.n, p),
        p.gamma * gate_drift(GateKind::M, s.v, s.m, p),
        ge * p.delta_h * gate_drift(GateKind::H, s.v, s.h, p),
        ge * p.delta_n * gate_drift(GateKind::N, s.v, s.n, p),
    ]
}

/// Net current with every gate at its steady state; its zeros are the
/// equilibria of the full model (shared by both slow regimes).
pub fn steady_current_balance(v: f64, p: &ModelParameters) -> f64 {
    rhs_v(
        v,
        gating::gate_inf_dimless(GateKind::M, v, p),
        gating::gate_inf_dimless(GateKind::H, v, p),
        gating::gate_inf_dimless(GateKind::N, v, p),
        p,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParameters;

    #[test]
    fn current_rescaling_round_trips() {
        let p = ModelParameters::h_slow();
        assert_eq!(rescale_current(120.0, &p), 0.01);
        assert!((physical_current(rescale_current(20.0, &p), &p) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn current_balance_at_a_hand_checked_point() {
        let p = ModelParameters::h_slow().with_ibar(0.0);
        // -(0 - 0.5)*0.125*0.5 - 0.3*0.77*0.0625 - 0.0025*0.544
        let expected = 0.03125 - 0.014437_5 - 0.00136;
        assert!((rhs_v(0.0, 0.5, 0.5, 0.5, &p) - expected).abs() < 1e-15);
    }

    #[test]
    fn closed_form_partials_match_finite_differences() {
        let p = ModelParameters::h_slow().with_ibar(0.002);
        let (v, m, h, n) = (-0.3, 0.2, 0.55, 0.4);
        let e = 1e-6;
        let fd_v = (rhs_v(v + e, m, h, n, &p) - rhs_v(v - e, m, h, n, &p)) / (2.0 * e);
        let fd_m = (rhs_v(v, m + e, h, n, &p) - rhs_v(v, m - e, h, n, &p)) / (2.0 * e);
        let fd_h = (rhs_v(v, m, h + e, n, &p) - rhs_v(v, m, h - e, n, &p)) / (2.0 * e);
        let fd_n = (rhs_v(v, m, h, n + e, &p) - rhs_v(v, m, h, n - e, &p)) / (2.0 * e);
        assert!((fd_v - rhs_v_dv(m, h, n, &p)).abs() < 1e-9);
        assert!((fd_m - rhs_v_dm(v, m, h, &p)).abs() < 1e-9);
        assert!((fd_h - rhs_v_dh(v, m, &p)).abs() < 1e-9);
        assert!((fd_n - rhs_v_dn(v, n, &p)).abs() < 1e-9);

        for gate in GateKind::ALL {
            let fd = (gate_drift(gate, v + e, 0.37, &p) - gate_drift(gate, v - e, 0.37, &p))
                / (2.0 * e);
            assert!((fd - gate_drift_dv(gate, v, 0.37, &p)).abs() < 1e-7);
        }
    }

    /// With the narrative parameter values the h-component of the field
    /// carries the prefactor gamma * epsilon_mid * delta_h = 2.075e-4.
    #[test]
    fn clock_hierarchy_prefactors() {
        let p = ModelParameters::h_slow()
            .with_gamma(0.083)
            .with_epsilon_mid(0.1)
            .with_delta_h(0.025)
            .with_delta_n(1.0);
        let s = FullState::new(-0.2, 0.3, 0.6, 0.35);
        let f = full_vector_field(s, &p);
        let h_drift = gate_drift(GateKind::H, s.v, s.h, &p);
        let n_drift = gate_drift(GateKind::N, s.v, s.n, &p);
        assert!((f[2] / h_drift - 2.075e-4).abs() < 1e-18);
        assert!((f[3] / n_drift - 8.3e-3).abs() < 1e-17);
    }

    #[test]
    fn gate_drift_vanishes_at_steady_state() {
        let p = ModelParameters::h_slow();
        let v = -0.4;
        for gate in GateKind::ALL {
            let x = crate::gating::gate_inf_dimless(gate, v, &p);
            assert_eq!(gate_drift(gate, v, x, &p), 0.0);
            assert!(gate_drift(gate, v, x - 0.1, &p) > 0.0);
            assert!(gate_drift(gate, v, x + 0.1, &p) < 0.0);
        }
    }
}
