//! Graph representations of the critical manifold and the family of
//! reduced flows living on it.
//!
//! The fast-gate graph `mu` solves the current balance for m, the
//! potassium graph `nu` solves it for n (with m slaved to its steady
//! state) and the inactivation graph `eta` solves it for h. Partial
//! derivatives are closed-form, obtained by implicit differentiation of
//! the defining polynomial identities, and are cross-checked against
//! central differences in the test suites.
//!
//! Flow hierarchy, fastest first: the three-dimensional reduction
//! [`reduced_vector_field`] (intermediate clock), the planar intermediate
//! flows at frozen slow gate, the slow flows projected onto the
//! one-dimensional manifolds, and their fold-regularised (desingularised)
//! forms which remain finite across the folds at the price of a time
//! rescaling that reverses orientation on the repelling branch.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gating;
use crate::model;
use crate::params::{GateKind, ModelParameters, ReducedState};

/// Denominator magnitude below which a graph evaluation is refused.
const DENOMINATOR_FLOOR: f64 = 1e-12;
/// Fast-gate graph v-partial magnitude below which the reduced field is
/// undefined.
const PARTIAL_FLOOR: f64 = 1e-12;
/// Fold-function magnitude below which a projected slow flow is refused.
const FOLD_FLOOR: f64 = 1e-10;
/// Step for the finite-difference second v-derivative of the slaved
/// current; first derivatives are closed-form so the difference is clean.
const DVV_STEP: f64 = 1e-6;

/// A graph value together with its first partial derivatives. Partials
/// with respect to arguments the graph does not depend on are zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GraphEvaluation {
    pub value: f64,
    pub partial_v: f64,
    pub partial_h: f64,
    pub partial_n: f64,
}

/// Symmetric second partials of the fast-gate graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphSecondPartials {
    pub vv: f64,
    pub vh: f64,
    pub vn: f64,
    pub hh: f64,
    pub hn: f64,
    pub nn: f64,
}

/// Fast-gate graph: the sign-preserving cube root solving the current
/// balance for m at given (v, h, n).
pub fn mu(v: f64, h: f64, n: f64, p: &ModelParameters) -> Result<GraphEvaluation> {
    let (eval, _) = mu_inner(v, h, n, p, false)?;
    Ok(eval)
}

/// Fast-gate graph with second partials (needed by the local stability
/// analysis, which differentiates the reduced field once more).
pub fn mu_with_second(
    v: f64,
    h: f64,
    n: f64,
    p: &ModelParameters,
) -> Result<(GraphEvaluation, GraphSecondPartials)> {
    let (eval, second) = mu_inner(v, h, n, p, true)?;
    Ok((eval, second.expect("second partials requested")))
}

fn mu_inner(
    v: f64,
    h: f64,
    n: f64,
    p: &ModelParameters,
    with_second: bool,
) -> Result<(GraphEvaluation, Option<GraphSecondPartials>)> {
    let den = (v - p.ebar_na) * h;
    if den.abs() < DENOMINATOR_FLOOR {
        return Err(Error::DegenerateDenominator { context: "fast-gate graph", value: den });
    }
    let n2 = n * n;
    let n3 = n2 * n;
    let num = p.ibar - p.gbar_k * (v - p.ebar_k) * n3 * n - p.gbar_l * (v - p.ebar_l);
    let value = (num / den).cbrt();

    // Implicit differentiation of value^3 * den = num.
    let num_v = -p.gbar_k * n3 * n - p.gbar_l;
    let num_n = -4.0 * p.gbar_k * (v - p.ebar_k) * n3;
    let den_v = h;
    let den_h = v - p.ebar_na;
    let m2 = value * value;
    let m3 = m2 * value;
    let slope = 3.0 * m2 * den;
    let partial_v = (num_v - m3 * den_v) / slope;
    let partial_h = (-m3 * den_h) / slope;
    let partial_n = num_n / slope;
    let eval = GraphEvaluation { value, partial_v, partial_h, partial_n };

    if !with_second {
        return Ok((eval, None));
    }

    // Differentiating 3 mu^2 mu_x den + mu^3 den_x = num_x once more:
    // mu_xy = (num_xy - mu^3 den_xy - 6 mu mu_x mu_y den
    //          - 3 mu^2 (mu_x den_y + mu_y den_x)) / (3 mu^2 den).
    let num_vn = -4.0 * p.gbar_k * n3;
    let num_nn = -12.0 * p.gbar_k * (v - p.ebar_k) * n2;
    let mixed = |num_xy: f64, den_xy: f64, mu_x: f64, mu_y: f64, den_x: f64, den_y: f64| {
        (num_xy - m3 * den_xy - 6.0 * value * mu_x * mu_y * den
            - 3.0 * m2 * (mu_x * den_y + mu_y * den_x))
            / slope
    };
    let second = GraphSecondPartials {
        vv: mixed(0.0, 0.0, partial_v, partial_v, den_v, den_v),
        vh: mixed(0.0, 1.0, partial_v, partial_h, den_v, den_h),
        vn: mixed(num_vn, 0.0, partial_v, partial_n, den_v, 0.0),
        hh: mixed(0.0, 0.0, partial_h, partial_h, den_h, den_h),
        hn: mixed(0.0, 0.0, partial_h, partial_n, den_h, 0.0),
        nn: mixed(num_nn, 0.0, partial_n, partial_n, 0.0, 0.0),
    };
    Ok((eval, Some(second)))
}

/// Potassium graph: positive quartic root solving the current balance for
/// n with the fast gate slaved to its steady state.
pub fn nu(v: f64, h: f64, p: &ModelParameters) -> Result<GraphEvaluation> {
    let q = p.gbar_k * (v - p.ebar_k);
    if q.abs() < DENOMINATOR_FLOOR {
        return Err(Error::DegenerateDenominator { context: "potassium graph", value: q });
    }
    let m_inf = gating::gate_inf_dimless(GateKind::M, v, p);
    let m_inf_dv = gating::gate_inf_dimless_dv(GateKind::M, v, p);
    let m3 = m_inf * m_inf * m_inf;
    let pnum = p.ibar - (v - p.ebar_na) * m3 * h - p.gbar_l * (v - p.ebar_l);
    let radicand = pnum / q;
    if radicand < 0.0 {
        return Err(Error::NegativeRadicand { v, radicand });
    }
    let value = radicand.sqrt().sqrt();

    let pnum_v = -m3 * h - 3.0 * (v - p.ebar_na) * m_inf * m_inf * m_inf_dv * h - p.gbar_l;
    let pnum_h = -(v - p.ebar_na) * m3;
    let q_v = p.gbar_k;
    let rad_v = (pnum_v * q - pnum * q_v) / (q * q);
    let rad_h = pnum_h / q;
    let v3 = value * value * value;
    let slope = 4.0 * v3;
    Ok(GraphEvaluation {
        value,
        partial_v: rad_v / slope,
        partial_h: rad_h / slope,
        partial_n: 0.0,
    })
}

/// Inactivation graph: rational expression solving the current balance for
/// h with the fast gate slaved to its steady state.
pub fn eta(v: f64, n: f64, p: &ModelParameters) -> Result<GraphEvaluation> {
    let m_inf = gating::gate_inf_dimless(GateKind::M, v, p);
    let m_inf_dv = gating::gate_inf_dimless_dv(GateKind::M, v, p);
    let m3 = m_inf * m_inf * m_inf;
    let b = (v - p.ebar_na) * m3;
    if b.abs() < DENOMINATOR_FLOOR {
        return Err(Error::DegenerateDenominator { context: "inactivation graph", value: b });
    }
    let n3 = n * n * n;
    let a = p.ibar - p.gbar_k * (v - p.ebar_k) * n3 * n - p.gbar_l * (v - p.ebar_l);
    let a_v = -p.gbar_k * n3 * n - p.gbar_l;
    let a_n = -4.0 * p.gbar_k * (v - p.ebar_k) * n3;
    let b_v = m3 + 3.0 * (v - p.ebar_na) * m_inf * m_inf * m_inf_dv;
    Ok(GraphEvaluation {
        value: a / b,
        partial_v: (a_v * b - a * b_v) / (b * b),
        partial_h: 0.0,
        partial_n: a_n / b,
    })
}

/// Net current with the fast gate slaved: the defining function of the
/// critical manifold of the intermediate dynamics.
pub fn slaved_current(v: f64, h: f64, n: f64, p: &ModelParameters) -> f64 {
    model::rhs_v(v, gating::gate_inf_dimless(GateKind::M, v, p), h, n, p)
}

/// v-partial of [`slaved_current`], including the fast-gate chain term.
/// Positive sign marks the repelling sheet.
pub fn slaved_current_dv(v: f64, h: f64, n: f64, p: &ModelParameters) -> f64 {
    let m_inf = gating::gate_inf_dimless(GateKind::M, v, p);
    let m_inf_dv = gating::gate_inf_dimless_dv(GateKind::M, v, p);
    model::rhs_v_dv(m_inf, h, n, p) + model::rhs_v_dm(v, m_inf, h, p) * m_inf_dv
}

/// h-partial of [`slaved_current`]; strictly positive below the sodium
/// reversal potential.
pub fn slaved_current_dh(v: f64, p: &ModelParameters) -> f64 {
    model::rhs_v_dh(v, gating::gate_inf_dimless(GateKind::M, v, p), p)
}

/// n-partial of [`slaved_current`]; strictly negative above the potassium
/// reversal potential.
pub fn slaved_current_dn(v: f64, n: f64, p: &ModelParameters) -> f64 {
    model::rhs_v_dn(v, n, p)
}

/// Mixed second partial d2/dv dh of [`slaved_current`], closed form.
pub fn slaved_current_dvh(v: f64, p: &ModelParameters) -> f64 {
    let m = gating::gate_inf_dimless(GateKind::M, v, p);
    let m_dv = gating::gate_inf_dimless_dv(GateKind::M, v, p);
    -(3.0 * m * m * m_dv * (v - p.ebar_na) + m * m * m)
}

/// Mixed second partial d2/dv dn of [`slaved_current`], closed form.
pub fn slaved_current_dvn(n: f64, p: &ModelParameters) -> f64 {
    -4.0 * p.gbar_k * n.powi(3)
}

/// Second v-partial of [`slaved_current`], by central difference of the
/// closed-form first partial. Used only to locate the tangential fold
/// connection, where it changes sign.
pub fn slaved_current_dvv(v: f64, h: f64, n: f64, p: &ModelParameters) -> f64 {
    (slaved_current_dv(v + DVV_STEP, h, n, p) - slaved_current_dv(v - DVV_STEP, h, n, p))
        / (2.0 * DVV_STEP)
}

/// The three-dimensional reduction on the intermediate clock: v slaved to
/// the fast-gate graph, h and n relaxing with their delta prefactors.
pub fn reduced_vector_field(s: ReducedState, p: &ModelParameters) -> Result<[f64; 3]> {
    let g = mu(s.v, s.h, s.n, p)?;
    if g.partial_v.abs() < PARTIAL_FLOOR {
        return Err(Error::PartialVanishes { v: s.v });
    }
    let m_inf = gating::gate_inf_dimless(GateKind::M, s.v, p);
    let t_m = gating::t_scaled(GateKind::M, s.v, p);
    let drift_h = model::gate_drift(GateKind::H, s.v, s.h, p);
    let drift_n = model::gate_drift(GateKind::N, s.v, s.n, p);
    let ed_h = p.epsilon_mid * p.delta_h;
    let ed_n = p.epsilon_mid * p.delta_n;
    let u = (m_inf - g.value) / (t_m * g.partial_v)
        - ed_h * drift_h * g.partial_h / g.partial_v
        - ed_n * drift_n * g.partial_n / g.partial_v;
    Ok([u, ed_h * drift_h, ed_n * drift_n])
}

/// Planar intermediate flow of the h-slow regime: v-drift along the
/// potassium graph at frozen h.
pub fn intermediate_flow_h(v: f64, h: f64, p: &ModelParameters) -> Result<f64> {
    let n = nu(v, h, p)?.value;
    Ok(slaved_current_dn(v, n, p) * model::gate_drift(GateKind::N, v, n, p))
}

/// Planar intermediate flow of the n-slow regime: v-drift along the
/// inactivation graph at frozen n.
pub fn intermediate_flow_n(v: f64, n: f64, p: &ModelParameters) -> Result<f64> {
    let h = eta(v, n, p)?.value;
    Ok(slaved_current_dh(v, p) * model::gate_drift(GateKind::H, v, h, p))
}

/// Coordinates of the h-slow one-dimensional manifold at a given v: the
/// potassium gate sits at steady state and h closes the current balance.
pub fn mh_point(v: f64, p: &ModelParameters) -> Result<(f64, f64)> {
    let n = gating::gate_inf_dimless(GateKind::N, v, p);
    let h = eta(v, n, p)?.value;
    Ok((h, n))
}

/// Coordinates of the n-slow one-dimensional manifold at a given v.
pub fn mn_point(v: f64, p: &ModelParameters) -> Result<(f64, f64)> {
    let h = gating::gate_inf_dimless(GateKind::H, v, p);
    let n = nu(v, h, p)?.value;
    Ok((h, n))
}

/// Fold function of the h-slow manifold: total v-derivative of the slaved
/// current along {n = n_inf(v)} at the manifold's h. Zeros are the
/// manifold's fold points.
pub fn mh_fold_function(v: f64, p: &ModelParameters) -> Result<f64> {
    let (h, n) = mh_point(v, p)?;
    let n_inf_dv = gating::gate_inf_dimless_dv(GateKind::N, v, p);
    Ok(slaved_current_dv(v, h, n, p) + slaved_current_dn(v, n, p) * n_inf_dv)
}

/// Fold function of the n-slow manifold.
pub fn mn_fold_function(v: f64, p: &ModelParameters) -> Result<f64> {
    let (h, n) = mn_point(v, p)?;
    let h_inf_dv = gating::gate_inf_dimless_dv(GateKind::H, v, p);
    Ok(slaved_current_dv(v, h, n, p) + slaved_current_dh(v, p) * h_inf_dv)
}

/// Slow flow projected onto the h-slow manifold: dv/dt of the slow drift,
/// finite away from the manifold's folds.
pub fn slow_flow_on_mh(v: f64, p: &ModelParameters) -> Result<f64> {
    let (h, n) = mh_point(v, p)?;
    let fold = mh_fold_function(v, p)?;
    if fold.abs() < FOLD_FLOOR {
        return Err(Error::FoldSingularity { v, denominator: fold });
    }
    let numerator = slaved_current_dv(v, h, n, p) * slaved_current_dh(v, p);
    Ok(numerator / fold * model::gate_drift(GateKind::H, v, h, p))
}

/// Slow flow projected onto the n-slow manifold.
pub fn slow_flow_on_mn(v: f64, p: &ModelParameters) -> Result<f64> {
    let (h, n) = mn_point(v, p)?;
    let fold = mn_fold_function(v, p)?;
    if fold.abs() < FOLD_FLOOR {
        return Err(Error::FoldSingularity { v, denominator: fold });
    }
    let numerator = slaved_current_dv(v, h, n, p) * slaved_current_dn(v, n, p);
    Ok(numerator / fold * model::gate_drift(GateKind::N, v, n, p))
}

/// Desingularised planar flow of the h-slow regime on the (v, h) chart of
/// the critical manifold. The time rescaling by minus the layer slope
/// removes the fold singularity; orientation is reversed on the repelling
/// sheet.
pub fn desingularized_flow_h(v: f64, h: f64, p: &ModelParameters) -> Result<[f64; 2]> {
    let n = nu(v, h, p)?.value;
    let drift_h = model::gate_drift(GateKind::H, v, h, p);
    let drift_n = model::gate_drift(GateKind::N, v, n, p);
    let dv = p.delta_h * slaved_current_dh(v, p) * drift_h
        + p.delta_n * slaved_current_dn(v, n, p) * drift_n;
    let dh = -p.delta_h * slaved_current_dv(v, h, n, p) * drift_h;
    Ok([dv, dh])
}

/// Desingularised planar flow of the n-slow regime on the (v, n) chart.
pub fn desingularized_flow_n(v: f64, n: f64, p: &ModelParameters) -> Result<[f64; 2]> {
    let h = eta(v, n, p)?.value;
    let drift_h = model::gate_drift(GateKind::H, v, h, p);
    let drift_n = model::gate_drift(GateKind::N, v, n, p);
    let dv = p.delta_h * slaved_current_dh(v, p) * drift_h
        + p.delta_n * slaved_current_dn(v, n, p) * drift_n;
    let dn = -p.delta_n * slaved_current_dv(v, h, n, p) * drift_n;
    Ok([dv, dn])
}
