//! Model parameters, state vectors and the timescale bookkeeping that the
//! rest of the crate builds on.
//!
//! All dynamical variables are dimensionless: voltages are scaled by `k_v`
//! (millivolts per unit of v) and times by `k_t` (milliseconds per unit of
//! slow time). Gating-rate tables keep their physiological millivolt
//! arguments; conversion happens exactly once, at the call sites in
//! [`crate::gating`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gating;

/// The three gating variables of the sodium/potassium channel model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GateKind {
    /// Sodium activation (fast).
    M,
    /// Sodium inactivation.
    H,
    /// Potassium activation.
    N,
}

impl GateKind {
    pub const ALL: [GateKind; 3] = [GateKind::M, GateKind::H, GateKind::N];

    pub(crate) fn index(self) -> usize {
        match self {
            GateKind::M => 0,
            GateKind::H => 1,
            GateKind::N => 2,
        }
    }
}

/// Which gating variable is treated as the slow one.
///
/// The two regimes share the same critical manifold and fold curves but
/// project the slow drift onto different one-dimensional manifolds, so most
/// geometry and return-map entry points take a `Regime`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// Sodium inactivation h is slow (large tau_h).
    HSlow,
    /// Potassium activation n is slow (large tau_n).
    NSlow,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::HSlow => write!(f, "h_slow"),
            Regime::NSlow => write!(f, "n_slow"),
        }
    }
}

/// Result of maximising the inverse gating time over the physical voltage
/// window; used to normalise each gate's clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimescaleMax {
    /// Maximum of 1/t_hat over the closed window, i.e. the reference rate.
    pub value: f64,
    /// Dimensionless v at which the maximum is attained.
    pub v_arg: f64,
    /// True when the maximiser sits on the window boundary. All three gates
    /// hit the upper (sodium) endpoint at default parameters; the value is
    /// still the correct supremum over the open window.
    pub at_boundary: bool,
}

/// State of the four-dimensional model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FullState {
    pub v: f64,
    pub m: f64,
    pub h: f64,
    pub n: f64,
}

impl FullState {
    pub fn new(v: f64, m: f64, h: f64, n: f64) -> Self {
        FullState { v, m, h, n }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.v, self.m, self.h, self.n]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        FullState { v: a[0], m: a[1], h: a[2], n: a[3] }
    }
}

/// State of the three-dimensional reduction (m slaved to its graph).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReducedState {
    pub v: f64,
    pub h: f64,
    pub n: f64,
}

impl ReducedState {
    pub fn new(v: f64, h: f64, n: f64) -> Self {
        ReducedState { v, h, n }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.v, self.h, self.n]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        ReducedState { v: a[0], h: a[1], n: a[2] }
    }
}

/// Dimensionless model parameters plus the scaling constants relating them
/// to the physiological system.
///
/// Conductances are relative to the sodium conductance, reversal potentials
/// are in units of `k_v`. `ibar` is the dimensionless applied current; use
/// [`rescale_current`](crate::model::rescale_current) to convert from
/// microamperes per square centimetre.
///
/// Fields are public for plain-old-data access. The per-gate reference rates
/// are cached at construction; call [`ModelParameters::rebuilt`] after
/// mutating the reversal potentials or scaling constants so the cache is
/// refreshed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelParameters {
    /// Potassium conductance relative to sodium.
    pub gbar_k: f64,
    /// Leak conductance relative to sodium.
    pub gbar_l: f64,
    /// Sodium reversal potential (dimensionless).
    pub ebar_na: f64,
    /// Potassium reversal potential (dimensionless).
    pub ebar_k: f64,
    /// Leak reversal potential (dimensionless).
    pub ebar_l: f64,
    /// Dimensionless applied current.
    pub ibar: f64,
    /// Ratio of the membrane clock to the intermediate clock.
    pub gamma: f64,
    /// Intermediate timescale parameter (inverse of the fast-gate speedup).
    pub epsilon_mid: f64,
    /// Slow-gate ratio for h: reference rate over channel time constant.
    pub delta_h: f64,
    /// Slow-gate ratio for n.
    pub delta_n: f64,
    /// Channel time constants (dimensionless); documentation of the regime,
    /// consumed through [`ModelParameters::delta_from_tau`].
    pub tau_m: f64,
    pub tau_h: f64,
    pub tau_n: f64,
    /// Millivolts per unit of dimensionless voltage.
    pub k_v: f64,
    /// Milliseconds per unit of dimensionless slow time.
    pub k_t: f64,
    /// Membrane capacitance, microfarad per square centimetre.
    pub c_m: f64,
    /// Sodium conductance, millisiemens per square centimetre.
    pub g_na: f64,
    /// Cached per-gate reference rates (max of 1/t_hat over the window).
    t_scale: [TimescaleMax; 3],
}

impl ModelParameters {
    /// Parameters of the h-slow regime: tau_h large, n on the intermediate
    /// clock.
    pub fn h_slow() -> Self {
        Self::base(40.0, 1.0, 0.025, 1.0)
    }

    /// Parameters of the n-slow regime: tau_n large, h on the intermediate
    /// clock.
    pub fn n_slow() -> Self {
        Self::base(1.0, 100.0, 1.0, 0.01)
    }

    /// Defaults for a given regime.
    pub fn for_regime(regime: Regime) -> Self {
        match regime {
            Regime::HSlow => Self::h_slow(),
            Regime::NSlow => Self::n_slow(),
        }
    }

    fn base(tau_h: f64, tau_n: f64, delta_h: f64, delta_n: f64) -> Self {
        let mut p = ModelParameters {
            gbar_k: 0.3,
            gbar_l: 0.0025,
            ebar_na: 0.5,
            ebar_k: -0.77,
            ebar_l: -0.544,
            ibar: 0.0,
            gamma: 0.0, // set below from the capacitive ratio
            epsilon_mid: 0.1,
            delta_h,
            delta_n,
            tau_m: 1.0,
            tau_h,
            tau_n,
            k_v: 100.0,
            k_t: 1.0,
            c_m: 1.0,
            g_na: 120.0,
            t_scale: [TimescaleMax { value: 1.0, v_arg: 0.0, at_boundary: false }; 3],
        };
        p.gamma = p.epsilon_membrane() / p.epsilon_mid;
        p.refresh_timescales();
        p
    }

    /// Capacitive timescale ratio C / (k_t * g_Na); computed, never stored.
    pub fn epsilon_membrane(&self) -> f64 {
        self.c_m / (self.k_t * self.g_na)
    }

    /// Recompute the cached reference rates. Needed after mutating the
    /// reversal potentials or the voltage scale in place.
    pub fn refresh_timescales(&mut self) {
        for g in GateKind::ALL {
            self.t_scale[g.index()] = gating::timescale_max(g, self);
        }
    }

    /// Consuming form of [`refresh_timescales`](Self::refresh_timescales)
    /// for builder-style updates.
    pub fn rebuilt(mut self) -> Self {
        self.refresh_timescales();
        self
    }

    /// Cached reference rate for a gate (max of 1/t_hat over the window).
    pub fn big_t(&self, gate: GateKind) -> f64 {
        self.t_scale[gate.index()].value
    }

    /// Full record of the cached maximisation, including whether it hit the
    /// window boundary.
    pub fn timescale_record(&self, gate: GateKind) -> TimescaleMax {
        self.t_scale[gate.index()]
    }

    /// delta ratio implied by a channel time constant: reference rate over
    /// tau.
    pub fn delta_from_tau(&self, gate: GateKind, tau: f64) -> f64 {
        self.big_t(gate) / tau
    }

    pub fn with_ibar(mut self, ibar: f64) -> Self {
        self.ibar = ibar;
        self
    }

    /// Set the applied current in microamperes per square centimetre.
    pub fn with_current(self, i_phys: f64) -> Self {
        let ibar = crate::model::rescale_current(i_phys, &self);
        self.with_ibar(ibar)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_epsilon_mid(mut self, epsilon_mid: f64) -> Self {
        self.epsilon_mid = epsilon_mid;
        self
    }

    pub fn with_delta_h(mut self, delta_h: f64) -> Self {
        self.delta_h = delta_h;
        self
    }

    pub fn with_delta_n(mut self, delta_n: f64) -> Self {
        self.delta_n = delta_n;
        self
    }

    /// Physical voltage window (dimensionless), shrunk away from the two
    /// reversal-potential asymptotes where the graph formulas degenerate.
    pub fn v_window(&self) -> (f64, f64) {
        (self.ebar_k + Self::WINDOW_MARGIN, self.ebar_na - Self::WINDOW_MARGIN)
    }

    /// Margin keeping root brackets clear of the reversal potentials.
    pub const WINDOW_MARGIN: f64 = 1e-3;

    /// Check the structural invariants: positive conductances and timescale
    /// ratios, ordered reversal potentials, positive scaling constants.
    pub fn validate(&self) -> Result<()> {
        let positive: [(&str, f64); 9] = [
            ("gamma", self.gamma),
            ("epsilon_mid", self.epsilon_mid),
            ("delta_h", self.delta_h),
            ("delta_n", self.delta_n),
            ("k_v", self.k_v),
            ("k_t", self.k_t),
            ("c_m", self.c_m),
            ("g_na", self.g_na),
            ("tau_m", self.tau_m),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(Error::Config(format!("{name} must be strictly positive, got {value}")));
            }
        }
        if self.gbar_k < 0.0 || self.gbar_l < 0.0 {
            return Err(Error::Config("conductances must be nonnegative".into()));
        }
        if !(self.ebar_k < self.ebar_l && self.ebar_l < self.ebar_na) {
            return Err(Error::Config(format!(
                "reversal potentials must be ordered ebar_k < ebar_l < ebar_na, got {} / {} / {}",
                self.ebar_k, self.ebar_l, self.ebar_na
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacitive_ratio_is_computed_exactly() {
        let p = ModelParameters::h_slow();
        assert_eq!(p.epsilon_membrane(), 1.0 / 120.0);
    }

    #[test]
    fn default_gamma_is_capacitive_ratio_over_epsilon_mid() {
        let p = ModelParameters::h_slow();
        assert_eq!(p.gamma, (1.0 / 120.0) / 0.1);
    }

    #[test]
    fn validate_rejects_unordered_reversals() {
        let mut p = ModelParameters::h_slow();
        p.ebar_k = 0.6;
        assert!(p.validate().is_err());
    }

    #[test]
    fn regime_defaults_swap_slow_gate() {
        let h = ModelParameters::h_slow();
        let n = ModelParameters::n_slow();
        assert!(h.delta_h < h.delta_n);
        assert!(n.delta_n < n.delta_h);
        assert_eq!(h.tau_h, 40.0);
        assert_eq!(n.tau_n, 100.0);
    }
}
