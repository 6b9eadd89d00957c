//! Global return map of the slow variable over one large excursion.
//!
//! A trajectory leaving the lower fold jumps to the upper attracting
//! sheet, drifts to the upper fold, jumps back down and crawls along the
//! lower sheet until it reaches the lower fold again. To leading order in
//! the slow rate the net change of the slow variable is the sum of two
//! line integrals taken along the sheets at frozen slow level. This module
//! computes those integrals, the balance function built from them, its
//! partial derivatives, the fixed point of the induced one-dimensional
//! return map, and the applied-current thresholds at which the qualitative
//! firing pattern changes. A direct planar integration of one excursion is
//! included as an independent oracle for the first-order prediction.

use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::{
    fold_at_level, folded_singularities, orbital_relation, project_fold, true_equilibrium,
    CurveLabel, FoldPoint,
};
use crate::model;
use crate::ode::{integrate_to_event, OdeOptions, OdeSystem};
use crate::params::{GateKind, ModelParameters, Regime};
use crate::quad;
use crate::reduction::{
    eta, mh_fold_function, mn_fold_function, nu, slaved_current_dh, slaved_current_dn,
    slaved_current_dv,
};
use crate::solve::grid_golden_max;

/// Default absolute tolerance for the displacement quadratures.
pub const DISPLACEMENT_TOL: f64 = 1e-10;

/// Relative inset keeping the quadrature endpoints strictly short of the
/// folded singularities, where the integrand's numerator and denominator
/// vanish together with a finite ratio.
const ENDPOINT_INSET: f64 = 1e-8;

/// A leg is declared singular when the denominator magnitude drops below
/// this floor strictly inside the integration interval.
const DENOMINATOR_FLOOR: f64 = 1e-10;

/// Hard floor protecting individual integrand evaluations from overflow.
const EVALUATION_FLOOR: f64 = 1e-13;

/// Interior samples scanned for denominator zeros before a leg is
/// integrated.
const FEASIBILITY_SAMPLES: usize = 400;

/// Finite-difference step in the slow level for interior slopes of the
/// return map.
const LEVEL_STEP: f64 = 1e-5;

/// Ladder of finite-difference steps for the level partial of the
/// balance, nominal scale first.
const LEVEL_STEP_LADDER: [f64; 5] = [1e-5, 1e-6, 1e-7, 1e-8, 1e-9];

/// Ladder of finite-difference steps for the current partial of the
/// balance, nominal scale first.
const CURRENT_STEP_LADDER: [f64; 4] = [1e-6, 1e-7, 1e-8, 1e-9];

/// Two successive ladder estimates must agree to this relative tolerance
/// before a refinement is accepted as converged.
const STENCIL_CONSISTENCY: f64 = 5e-3;

/// Quadrature tolerance ceiling for the balance-partial stencils; the
/// smallest ladder steps need value differences resolved well below the
/// default displacement tolerance.
const PARTIAL_QUADRATURE_TOL: f64 = 1e-13;

/// Grid cells used to locate the extremum of the fold function.
const FOLD_SCAN_CELLS: usize = 2000;

/// Defining-condition residual every reported threshold must satisfy.
const RESIDUAL_CEILING: f64 = 1e-8;

/// Step cap for the planar excursion legs; keeps every fold crossing
/// inside a single accepted step so the event detector cannot leap over
/// the sign change of the layer slope.
const LEG_STEP_CAP: f64 = 5e-3;

/// The two one-sided displacement integrals and their sum.
#[derive(Debug, Clone, Copy)]
pub struct DisplacementResult {
    /// Contribution accumulated along the lower attracting sheet.
    pub g_minus: f64,
    /// Contribution accumulated along the upper attracting sheet.
    pub g_plus: f64,
    /// Net slow-variable drift per unit slow rate over one excursion.
    pub delta: f64,
    /// Summed absolute quadrature error estimate.
    pub quadrature_error: f64,
}

/// Integration window of the displacement integrals. The endpoints do not
/// depend on the queried slow level: both landings are taken at the slow
/// level of the lower folded singularity, so the window is a function of
/// the applied current alone.
#[derive(Debug, Clone, Copy)]
pub struct IntegrationLimits {
    /// Landing of the upper fold station on the lower attracting sheet.
    pub v_min: f64,
    /// Landing of the lower folded singularity on the upper attracting
    /// sheet.
    pub v_max: f64,
    /// Voltage of the lower folded singularity.
    pub v_q_minus: f64,
    /// Voltage of the upper folded singularity.
    pub v_q_plus: f64,
}

/// Applied-current threshold selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThresholdName {
    /// The full system's equilibrium reaches the lower fold from below.
    IMinus,
    /// The equilibrium leaves the repelling sheet at high current.
    IPlus,
    /// The fold points of the slow one-dimensional manifold annihilate.
    IP,
    /// The folded singularities exchange their slow-level ordering.
    IA,
    /// The net displacement at the funnel boundary changes sign.
    IR,
}

impl fmt::Display for ThresholdName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self {
            ThresholdName::IMinus => "I_minus",
            ThresholdName::IPlus => "I_plus",
            ThresholdName::IP => "I_p",
            ThresholdName::IA => "I_a",
            ThresholdName::IR => "I_r",
        };
        f.write_str(label)
    }
}

/// Bisection summary for one located threshold.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdReport {
    pub name: ThresholdName,
    pub regime: Regime,
    /// Dimensionless applied current at the threshold.
    pub ibar: f64,
    /// Width of the final bisection bracket.
    pub bracket_width: f64,
    /// Magnitude of the defining condition at the reported current.
    pub residual: f64,
}

/// Fixed point of the first-order return map above the relaxation
/// threshold.
#[derive(Debug, Clone, Copy)]
pub struct RelaxationFixedPoint {
    /// Slow level of the fixed point.
    pub level: f64,
    /// Funnel-boundary level at the same current.
    pub funnel_level: f64,
    /// Return-map derivative 1 + delta_slow * d(balance)/d(level).
    pub derivative: f64,
    /// The derivative lies strictly inside the unit interval.
    pub attracting: bool,
    /// The fixed point sits strictly above the funnel boundary.
    pub outside_funnel: bool,
}

/// Endpoints of the two displacement integrals at the given current.
pub fn integration_limits(regime: Regime, p: &ModelParameters) -> Result<IntegrationLimits> {
    let (q_minus, q_plus) = folded_singularities(regime, p)?;
    let level = q_minus.level();
    let upper_station = fold_at_level(CurveLabel::LPlus, level, regime, p)?;
    let low_landing = project_fold(&upper_station, p)?;
    let lower_station = FoldPoint {
        v: q_minus.v,
        h: q_minus.h,
        n: q_minus.n,
        curve: CurveLabel::LMinus,
    };
    let high_landing = project_fold(&lower_station, p)?;
    Ok(IntegrationLimits {
        v_min: low_landing[0],
        v_max: high_landing[0],
        v_q_minus: q_minus.v,
        v_q_plus: q_plus.v,
    })
}

/// Endpoints of the two legs actually traversed by an excursion at the
/// given slow level. Each leg starts at the landing of the opposite
/// fold's station at that level and ends at the voltage of the adjacent
/// station itself, where the layer slope vanishes and the excursion
/// leaves the sheet. At the funnel level the lower station coincides
/// with the folded singularity.
struct LegWindow {
    v_min: f64,
    end_minus: f64,
    v_max: f64,
    end_plus: f64,
}

fn leg_window(level: f64, regime: Regime, p: &ModelParameters) -> Result<LegWindow> {
    let lower_station = fold_at_level(CurveLabel::LMinus, level, regime, p)?;
    let upper_station = fold_at_level(CurveLabel::LPlus, level, regime, p)?;
    let low_landing = project_fold(&upper_station, p)?;
    let high_landing = project_fold(&lower_station, p)?;
    Ok(LegWindow {
        v_min: low_landing[0],
        end_minus: lower_station.v,
        v_max: high_landing[0],
        end_plus: upper_station.v,
    })
}

/// Numerator and denominator of the leg integrand on the manifold graph
/// at frozen slow level: layer slope times slow drift over the
/// complementary partial times the restoring drift.
fn leg_fractions(v: f64, level: f64, regime: Regime, p: &ModelParameters) -> Result<(f64, f64)> {
    match regime {
        Regime::HSlow => {
            let n = nu(v, level, p)?.value;
            let slow = model::gate_drift(GateKind::H, v, level, p);
            let fast = model::gate_drift(GateKind::N, v, n, p);
            Ok((
                slaved_current_dv(v, level, n, p) * slow,
                slaved_current_dn(v, n, p) * fast,
            ))
        }
        Regime::NSlow => {
            let h = eta(v, level, p)?.value;
            let slow = model::gate_drift(GateKind::N, v, level, p);
            let fast = model::gate_drift(GateKind::H, v, h, p);
            Ok((
                slaved_current_dv(v, h, level, p) * slow,
                slaved_current_dh(v, p) * fast,
            ))
        }
    }
}

/// Leg integrand with an overflow guard on the denominator.
fn leg_integrand(v: f64, level: f64, regime: Regime, p: &ModelParameters) -> Result<f64> {
    let (numerator, denominator) = leg_fractions(v, level, regime, p)?;
    if denominator.abs() < EVALUATION_FLOOR {
        return Err(Error::SingularIntegrand { v });
    }
    Ok(numerator / denominator)
}

/// One displacement leg: minus the integral of the leg integrand from the
/// landing voltage to the folded-singularity voltage. The restoring drift
/// vanishes on the slow one-dimensional manifold, so the interior of the
/// leg is scanned for denominator zeros first; a crossing means the
/// requested level lies outside the feasible funnel side.
fn leg(
    level: f64,
    from: f64,
    to_singularity: f64,
    regime: Regime,
    tol: f64,
    p: &ModelParameters,
) -> Result<(f64, f64)> {
    let stop = to_singularity - (to_singularity - from) * ENDPOINT_INSET;
    let mut previous = f64::NAN;
    for i in 1..FEASIBILITY_SAMPLES {
        let v = from + (stop - from) * i as f64 / FEASIBILITY_SAMPLES as f64;
        let (_, denominator) = leg_fractions(v, level, regime, p)?;
        if denominator.abs() < DENOMINATOR_FLOOR {
            return Err(Error::SingularIntegrand { v });
        }
        if !previous.is_nan() && denominator.signum() != previous.signum() {
            return Err(Error::SingularIntegrand { v });
        }
        previous = denominator;
    }
    let (value, error) = quad::integrate(|v| leg_integrand(v, level, regime, p), from, stop, tol)?;
    Ok((-value, error))
}

/// Both displacement integrals at the given slow level and their sum.
pub fn displacement(
    level: f64,
    regime: Regime,
    tol: f64,
    p: &ModelParameters,
) -> Result<DisplacementResult> {
    let window = leg_window(level, regime, p)?;
    let (g_minus, err_minus) = leg(level, window.v_min, window.end_minus, regime, 0.5 * tol, p)?;
    let (g_plus, err_plus) = leg(level, window.v_max, window.end_plus, regime, 0.5 * tol, p)?;
    Ok(DisplacementResult {
        g_minus,
        g_plus,
        delta: g_minus + g_plus,
        quadrature_error: err_minus + err_plus,
    })
}

/// Predicted slow level after one excursion, first order in the slow
/// rate.
pub fn return_map_hat(
    level: f64,
    delta_slow: f64,
    regime: Regime,
    tol: f64,
    p: &ModelParameters,
) -> Result<f64> {
    Ok(level + delta_slow * displacement(level, regime, tol, p)?.delta)
}

/// Balance function of the return map. Only the leading order is kept, so
/// the slow-rate argument does not influence the value; it is accepted to
/// mirror the return map's parametrisation.
pub fn psi(
    level: f64,
    _delta_slow: f64,
    regime: Regime,
    tol: f64,
    p: &ModelParameters,
) -> Result<f64> {
    Ok(displacement(level, regime, tol, p)?.delta)
}

/// Richardson-extrapolated central difference. Errors with the singular
/// marker when either lower wing leaves the feasible domain.
fn central_richardson(
    f: &mut dyn FnMut(f64) -> Result<f64>,
    x: f64,
    step: f64,
) -> Result<f64> {
    let plus_1 = f(x + step)?;
    let plus_2 = f(x + 2.0 * step)?;
    let minus_1 = f(x - step)?;
    let minus_2 = f(x - 2.0 * step)?;
    let half = (plus_1 - minus_1) / (2.0 * step);
    let full = (plus_2 - minus_2) / (4.0 * step);
    Ok((4.0 * half - full) / 3.0)
}

/// Second-order one-sided stencil on the upper wing, reusing a known
/// centre value.
fn forward_richardson(
    f: &mut dyn FnMut(f64) -> Result<f64>,
    x: f64,
    step: f64,
    center: f64,
) -> Result<f64> {
    let plus_1 = f(x + step)?;
    let plus_2 = f(x + 2.0 * step)?;
    Ok((4.0 * plus_1 - 3.0 * center - plus_2) / (2.0 * step))
}

/// Richardson-extrapolated central difference; falls back to a one-sided
/// second-order stencil when the lower wing leaves the feasible domain.
fn derivative_with_fallback(
    f: &mut dyn FnMut(f64) -> Result<f64>,
    x: f64,
    step: f64,
) -> Result<f64> {
    match central_richardson(f, x, step) {
        Ok(estimate) => Ok(estimate),
        Err(Error::SingularIntegrand { .. }) => {
            let center = f(x)?;
            forward_richardson(f, x, step, center)
        }
        Err(e) => Err(e),
    }
}

/// Balance functional with the integration window pinned to the funnel
/// geometry of the supplied parameters. The excursion-following
/// displacement moves its endpoints with the queried level, which
/// regularises the funnel boundary differently; sensitivity probes of the
/// balance are taken on this pinned form instead, where the endpoints are
/// functions of the applied current alone.
fn pinned_balance(level: f64, regime: Regime, tol: f64, p: &ModelParameters) -> Result<f64> {
    let limits = integration_limits(regime, p)?;
    let (g_minus, _) = leg(level, limits.v_min, limits.v_q_minus, regime, 0.5 * tol, p)?;
    let (g_plus, _) = leg(level, limits.v_max, limits.v_q_plus, regime, 0.5 * tol, p)?;
    Ok(g_minus + g_plus)
}

/// Smallest-step converged stencil estimate. Walks the step ladder from
/// the nominal scale downward and returns the first estimate whose
/// successive refinement agrees to the consistency tolerance. The balance
/// carries a logarithmic modulus at the funnel boundary, so a fixed step
/// measures a scale-dependent slope there; refinement continues until the
/// endpoint inset cuts the modulus off and the quotients stabilise. When
/// no pair of refinements agrees, the direction has no settled slope at
/// any resolved scale and the nominal-step estimate is reported.
///
/// The stencil type is decided once at the nominal scale and kept for the
/// whole ladder: at a funnel boundary the lower wing is infeasible at the
/// nominal step yet re-enters the truncated quadrature window at very
/// small steps, and mixing wing types across rungs would compare two
/// different one-sided objects.
fn refined_derivative(
    f: &mut dyn FnMut(f64) -> Result<f64>,
    x: f64,
    ladder: &[f64],
) -> Result<f64> {
    let mut center: Option<f64> = None;
    let mut one_sided = false;
    let mut nominal = None;
    let mut previous: Option<f64> = None;
    for &step in ladder {
        let estimate = if one_sided {
            let c = match center {
                Some(c) => c,
                None => {
                    let c = f(x)?;
                    center = Some(c);
                    c
                }
            };
            forward_richardson(f, x, step, c)?
        } else {
            match central_richardson(f, x, step) {
                Ok(estimate) => estimate,
                Err(Error::SingularIntegrand { .. }) => {
                    one_sided = true;
                    let c = f(x)?;
                    center = Some(c);
                    forward_richardson(f, x, step, c)?
                }
                Err(e) => return Err(e),
            }
        };
        if nominal.is_none() {
            nominal = Some(estimate);
        }
        if let Some(prev) = previous {
            if (estimate - prev).abs() <= STENCIL_CONSISTENCY * estimate.abs() {
                return Ok(estimate);
            }
        }
        previous = Some(estimate);
    }
    Ok(nominal.expect("step ladders are non-empty"))
}

/// Partial derivatives of the balance with respect to the slow level and
/// the applied current, at fixed values of the other argument. Both are
/// stencil limits of the pinned balance; `tol` caps the quadrature
/// tolerance of the stencil evaluations and is tightened internally so
/// the smallest ladder steps stay above quadrature noise.
pub fn psi_partials(
    level: f64,
    regime: Regime,
    tol: f64,
    p: &ModelParameters,
) -> Result<(f64, f64)> {
    let quad_tol = tol.min(PARTIAL_QUADRATURE_TOL);
    let mut by_level = |x: f64| pinned_balance(x, regime, quad_tol, p);
    let d_level = refined_derivative(&mut by_level, level, &LEVEL_STEP_LADDER)?;
    let mut by_current = |ibar: f64| {
        let q = p.clone().with_ibar(ibar);
        pinned_balance(level, regime, quad_tol, &q)
    };
    let d_current = refined_derivative(&mut by_current, p.ibar, &CURRENT_STEP_LADDER)?;
    Ok((d_level, d_current))
}

/// Sensitivity of the funnel-boundary level to the applied current with
/// the fold voltage held fixed. The boundary level solves the slaved
/// current relation at the fold voltage, so at frozen voltage the partial
/// is the negative reciprocal of that relation's derivative in the slow
/// gate. The total derivative along the moving fold is smaller in
/// magnitude; the frozen-voltage partial is the quantity the balance
/// analysis pairs with the current partial.
pub fn folded_level_slope(regime: Regime, p: &ModelParameters) -> Result<f64> {
    let (q_minus, _) = folded_singularities(regime, p)?;
    let gate_slope = match regime {
        Regime::HSlow => slaved_current_dh(q_minus.v, p),
        Regime::NSlow => slaved_current_dn(q_minus.v, q_minus.n, p),
    };
    if gate_slope.abs() < EVALUATION_FLOOR {
        return Err(Error::SingularIntegrand { v: q_minus.v });
    }
    Ok(-1.0 / gate_slope)
}

/// Bisection on a fallible scalar function. Runs to `width_tol`, then
/// keeps halving while the midpoint residual exceeds `residual_goal` and
/// the bracket is wider than machine resolution. Returns the root, the
/// final bracket width and the residual magnitude.
fn bisect_result(
    f: &mut dyn FnMut(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    width_tol: f64,
    residual_goal: f64,
) -> Result<(f64, f64, f64)> {
    let mut f_a = f(a)?;
    let f_b = f(b)?;
    if !f_a.is_finite() || !f_b.is_finite() || f_a.signum() == f_b.signum() {
        return Err(Error::NoSignChange {
            target: "threshold defining condition",
        });
    }
    let mut width = (b - a).abs();
    loop {
        let mid = 0.5 * (a + b);
        let f_mid = f(mid)?;
        width *= 0.5;
        if f_mid == 0.0 {
            return Ok((mid, width, 0.0));
        }
        if f_mid.signum() == f_a.signum() {
            a = mid;
            f_a = f_mid;
        } else {
            b = mid;
        }
        let floor = 4.0 * f64::EPSILON * mid.abs().max(f64::MIN_POSITIVE);
        if width <= floor || (width <= width_tol && f_mid.abs() <= residual_goal) {
            return Ok((mid, width, f_mid.abs()));
        }
    }
}

/// Fixed point of the first-order return map, sought above the funnel
/// boundary. Below the relaxation threshold the balance is negative on
/// the whole feasible side and no fixed point exists.
pub fn relaxation_fixed_point(
    delta_slow: f64,
    regime: Regime,
    tol: f64,
    p: &ModelParameters,
) -> Result<RelaxationFixedPoint> {
    let (q_minus, _) = folded_singularities(regime, p)?;
    let funnel_level = q_minus.level();
    let mut balance = |level: f64| displacement(level, regime, tol, p).map(|d| d.delta);
    let at_boundary = balance(funnel_level)?;
    if at_boundary <= 0.0 {
        return Err(Error::NotFound {
            what: "return-map fixed point above the funnel boundary",
        });
    }
    let mut width = 0.004;
    let mut upper = funnel_level + width;
    let mut at_upper = balance(upper)?;
    while at_upper > 0.0 {
        width *= 2.0;
        if width > 0.5 {
            return Err(Error::NotFound {
                what: "sign change of the return-map balance above the funnel",
            });
        }
        upper = funnel_level + width;
        at_upper = balance(upper)?;
    }
    let (level, _, _) = bisect_result(&mut balance, funnel_level, upper, 0.0, 0.0)?;
    let mut by_level = |x: f64| displacement(x, regime, tol, p).map(|d| d.delta);
    let slope = derivative_with_fallback(&mut by_level, level, LEVEL_STEP)?;
    let derivative = 1.0 + delta_slow * slope;
    Ok(RelaxationFixedPoint {
        level,
        funnel_level,
        derivative,
        attracting: derivative.abs() < 1.0,
        outside_funnel: level > funnel_level,
    })
}

/// Scalar whose sign flips across the named threshold.
fn defining_function<'a>(
    name: ThresholdName,
    regime: Regime,
    p: &'a ModelParameters,
) -> Box<dyn FnMut(f64) -> Result<f64> + 'a> {
    match name {
        ThresholdName::IA => Box::new(move |ibar: f64| {
            let q = p.clone().with_ibar(ibar);
            Ok(orbital_relation(regime, &q)?.gap)
        }),
        ThresholdName::IR => Box::new(move |ibar: f64| {
            let q = p.clone().with_ibar(ibar);
            let (q_minus, _) = folded_singularities(regime, &q)?;
            Ok(displacement(q_minus.level(), regime, DISPLACEMENT_TOL, &q)?.delta)
        }),
        ThresholdName::IMinus | ThresholdName::IPlus => Box::new(move |ibar: f64| {
            let q = p.clone().with_ibar(ibar);
            let ([v, h, n], _, _) = true_equilibrium(regime, &q)?;
            Ok(slaved_current_dv(v, h, n, &q))
        }),
        ThresholdName::IP => Box::new(move |ibar: f64| {
            let q = p.clone().with_ibar(ibar);
            let (lo, hi) = q.v_window();
            let fold = |v: f64| match regime {
                Regime::HSlow => mh_fold_function(v, &q).unwrap_or(f64::NEG_INFINITY),
                Regime::NSlow => mn_fold_function(v, &q).unwrap_or(f64::NEG_INFINITY),
            };
            Ok(grid_golden_max(fold, lo, hi, FOLD_SCAN_CELLS, 1e-12).1)
        }),
    }
}

/// Locate one applied-current threshold by bisection of its defining
/// condition over the given current bracket.
pub fn find_threshold(
    name: ThresholdName,
    regime: Regime,
    bracket: (f64, f64),
    tol: f64,
    p: &ModelParameters,
) -> Result<ThresholdReport> {
    let mut defining = defining_function(name, regime, p);
    let scale = 0.5 * (bracket.0.abs() + bracket.1.abs());
    let width_tol = tol * scale.max(f64::MIN_POSITIVE);
    let (ibar, bracket_width, residual) =
        bisect_result(&mut defining, bracket.0, bracket.1, width_tol, RESIDUAL_CEILING)?;
    Ok(ThresholdReport {
        name,
        regime,
        ibar,
        bracket_width,
        residual,
    })
}

/// Planar excursion leg: the slow level as a function of voltage along an
/// attracting sheet, with the full slow-rate correction kept in the
/// denominator. Integration time runs with `orientation * v` so that it
/// always increases along the leg.
struct ChartLeg<'a> {
    regime: Regime,
    delta_slow: f64,
    orientation: f64,
    p: &'a ModelParameters,
}

impl ChartLeg<'_> {
    /// d(level)/dv of the time-eliminated planar flow on the manifold.
    fn level_slope(&self, v: f64, level: f64) -> Result<f64> {
        let (numerator, restoring) = leg_fractions(v, level, self.regime, self.p)?;
        let feedback = match self.regime {
            Regime::HSlow => {
                slaved_current_dh(v, self.p) * model::gate_drift(GateKind::H, v, level, self.p)
            }
            Regime::NSlow => {
                slaved_current_dn(v, level, self.p)
                    * model::gate_drift(GateKind::N, v, level, self.p)
            }
        };
        let denominator = restoring + self.delta_slow * feedback;
        if denominator.abs() < EVALUATION_FLOOR {
            return Err(Error::SingularIntegrand { v });
        }
        Ok(-self.delta_slow * numerator / denominator)
    }

    /// Layer slope at the chart point; its zero marks arrival at a fold.
    fn layer_slope(&self, v: f64, level: f64) -> Result<f64> {
        match self.regime {
            Regime::HSlow => {
                let n = nu(v, level, self.p)?.value;
                Ok(slaved_current_dv(v, level, n, self.p))
            }
            Regime::NSlow => {
                let h = eta(v, level, self.p)?.value;
                Ok(slaved_current_dv(v, h, level, self.p))
            }
        }
    }
}

impl OdeSystem<1> for ChartLeg<'_> {
    fn rhs(&self, t: f64, y: &[f64; 1]) -> Result<[f64; 1]> {
        Ok([self.orientation * self.level_slope(self.orientation * t, y[0])?])
    }
}

/// Manifold point at (v, slow level) packaged as a fold-curve point for
/// the fast-fibre projection.
fn station_point(
    v: f64,
    level: f64,
    curve: CurveLabel,
    regime: Regime,
    p: &ModelParameters,
) -> Result<FoldPoint> {
    let (h, n) = match regime {
        Regime::HSlow => (level, nu(v, level, p)?.value),
        Regime::NSlow => (eta(v, level, p)?.value, level),
    };
    Ok(FoldPoint { v, h, n, curve })
}

/// One full excursion of the planar intermediate flow in the manifold
/// chart: jump up from the lower fold station at the given level, drift
/// along the upper attracting sheet to the upper fold, jump down, drift
/// along the lower sheet back to the lower fold. Returns the slow level
/// at return. Serves as the direct oracle for the first-order return map.
pub fn excursion_return(
    level: f64,
    delta_slow: f64,
    regime: Regime,
    p: &ModelParameters,
) -> Result<f64> {
    let (lo, hi) = p.v_window();
    let margin = 1e-3;
    let start_station = fold_at_level(CurveLabel::LMinus, level, regime, p)?;
    let up_landing = project_fold(&start_station, p)?;

    let opts = OdeOptions {
        rel_tol: 1e-10,
        abs_tol: 1e-13,
        h_init: 1e-4,
        h_max: LEG_STEP_CAP,
        ..OdeOptions::default()
    };

    // The event value is kept finite and positive where the chart cannot
    // be evaluated: the detector arms on nonzero values and a silent NaN
    // would fire it spuriously.
    let down_leg = ChartLeg {
        regime,
        delta_slow,
        orientation: -1.0,
        p,
    };
    let (t_exit, at_exit) = integrate_to_event(
        &down_leg,
        -up_landing[0],
        [level],
        -(lo + margin),
        |t, y: &[f64; 1]| down_leg.layer_slope(-t, y[0]).unwrap_or(1.0),
        &opts,
    )?;
    let v_exit = -t_exit;
    let mid_level = at_exit[0];

    let exit_station = station_point(v_exit, mid_level, CurveLabel::LPlus, regime, p)?;
    let down_landing = project_fold(&exit_station, p)?;

    let up_leg = ChartLeg {
        regime,
        delta_slow,
        orientation: 1.0,
        p,
    };
    let (_, at_return) = integrate_to_event(
        &up_leg,
        down_landing[0],
        [mid_level],
        hi - margin,
        |t, y: &[f64; 1]| up_leg.layer_slope(t, y[0]).unwrap_or(1.0),
        &opts,
    )?;
    Ok(at_return[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rescale_current;

    fn params_at(i_phys: f64, regime: Regime) -> ModelParameters {
        let base = ModelParameters::for_regime(regime);
        let ibar = rescale_current(i_phys, &base);
        base.with_ibar(ibar)
    }

    fn funnel_level(regime: Regime, p: &ModelParameters) -> f64 {
        folded_singularities(regime, p).unwrap().0.level()
    }

    /// The integration window brackets both folded singularities and
    /// moves continuously with the applied current.
    #[test]
    fn limits_bracket_the_folded_singularities() {
        let p = params_at(27.0, Regime::HSlow);
        let limits = integration_limits(Regime::HSlow, &p).unwrap();
        assert!(limits.v_min < limits.v_q_minus);
        assert!(limits.v_q_minus < limits.v_q_plus);
        assert!(limits.v_q_plus < limits.v_max);

        let nearby = params_at(27.1, Regime::HSlow);
        let shifted = integration_limits(Regime::HSlow, &nearby).unwrap();
        assert!((shifted.v_min - limits.v_min).abs() < 0.02);
        assert!((shifted.v_max - limits.v_max).abs() < 0.02);
        assert!((shifted.v_q_minus - limits.v_q_minus).abs() < 0.02);
        assert!((shifted.v_q_plus - limits.v_q_plus).abs() < 0.02);
    }

    /// Leg signs follow the slow drift: the lower sheet restores the slow
    /// gate upward, the upper sheet depletes it, and the net balance
    /// flips sign between the two sides of the relaxation threshold.
    #[test]
    fn displacement_sign_flips_across_relaxation_threshold() {
        let p = params_at(28.0, Regime::HSlow);
        let below = displacement(funnel_level(Regime::HSlow, &p), Regime::HSlow, 1e-10, &p).unwrap();
        assert!(below.g_minus > 0.0);
        assert!(below.g_plus < 0.0);
        assert!(below.delta < 0.0, "delta below threshold: {}", below.delta);
        assert_eq!(below.delta, below.g_minus + below.g_plus);
        assert!(below.quadrature_error < 1e-10);

        let q = params_at(31.0, Regime::HSlow);
        let above = displacement(funnel_level(Regime::HSlow, &q), Regime::HSlow, 1e-10, &q).unwrap();
        assert!(above.delta > 0.0, "delta above threshold: {}", above.delta);
    }

    /// Levels below the funnel boundary put a zero of the restoring drift
    /// inside the lower leg and are refused.
    #[test]
    fn displacement_below_funnel_is_refused() {
        let p = params_at(28.0, Regime::HSlow);
        let level = funnel_level(Regime::HSlow, &p) - 0.005;
        assert!(matches!(
            displacement(level, Regime::HSlow, 1e-10, &p),
            Err(Error::SingularIntegrand { .. })
        ));
    }

    /// With the potassium gate slow the net displacement at the funnel
    /// boundary is positive throughout the currents where double-epoch
    /// patterns live.
    #[test]
    fn n_slow_displacement_is_positive_at_moderate_currents() {
        for i_phys in [20.0, 40.0, 80.0, 120.0] {
            let p = params_at(i_phys, Regime::NSlow);
            let level = funnel_level(Regime::NSlow, &p);
            let result = displacement(level, Regime::NSlow, 1e-10, &p).unwrap();
            assert!(result.delta > 0.0, "delta at {i_phys}: {}", result.delta);
        }
    }

    /// Far above that range the n-slow balance does turn negative; direct
    /// integration of excursions confirms the sign, so the flip is a
    /// property of the flow and not of the quadrature.
    #[test]
    fn n_slow_displacement_turns_negative_at_high_current() {
        let p = params_at(200.0, Regime::NSlow);
        let level = funnel_level(Regime::NSlow, &p);
        let result = displacement(level, Regime::NSlow, 1e-10, &p).unwrap();
        assert!(result.delta < 0.0, "delta at 200: {}", result.delta);
    }

    /// Balance partials and the funnel-boundary slope at the relaxation
    /// threshold reproduce the reported magnitudes.
    #[test]
    fn balance_partials_match_reported_magnitudes() {
        let base = ModelParameters::h_slow();
        let bracket = (
            rescale_current(28.0, &base),
            rescale_current(32.0, &base),
        );
        let report =
            find_threshold(ThresholdName::IR, Regime::HSlow, bracket, 1e-12, &base).unwrap();
        let p = base.clone().with_ibar(report.ibar);
        let level = funnel_level(Regime::HSlow, &p);

        let (d_level, d_current) = psi_partials(level, Regime::HSlow, 1e-11, &p).unwrap();
        assert!(
            (d_level + 15.0377).abs() < 0.02 * 15.0377,
            "level partial: {d_level}"
        );
        assert!(
            (d_current + 278.4470).abs() < 0.02 * 278.4470,
            "current partial: {d_current}"
        );

        let boundary_slope = folded_level_slope(Regime::HSlow, &p).unwrap();
        assert!(
            (boundary_slope + 279.416).abs() < 0.02 * 279.416,
            "funnel slope: {boundary_slope}"
        );

        let residual = psi(level, 0.0, Regime::HSlow, 1e-10, &p).unwrap();
        assert!(residual.abs() < 1e-6, "balance at threshold: {residual}");
    }

    /// The return-map fixed point exists only above the relaxation
    /// threshold, sits outside the funnel and is attracting.
    #[test]
    fn relaxation_fixed_point_behaviour() {
        let p = params_at(30.0, Regime::HSlow);
        let fixed = relaxation_fixed_point(0.025, Regime::HSlow, 1e-10, &p).unwrap();
        assert!(fixed.outside_funnel);
        assert!(fixed.attracting);
        assert!(fixed.derivative > 0.0 && fixed.derivative < 1.0);
        assert!(fixed.level > fixed.funnel_level);

        let q = params_at(28.0, Regime::HSlow);
        assert!(matches!(
            relaxation_fixed_point(0.025, Regime::HSlow, 1e-10, &q),
            Err(Error::NotFound { .. })
        ));
    }

    /// All reported thresholds are recovered inside their published
    /// tolerance bands, with defining residuals at reporting precision.
    #[test]
    fn thresholds_match_reported_values() {
        let cases: [(ThresholdName, Regime, f64, f64, f64, f64); 7] = [
            (ThresholdName::IR, Regime::HSlow, 28.0, 32.0, 29.705, 0.01),
            (ThresholdName::IA, Regime::HSlow, 24.0, 28.0, 26.49, 0.01),
            (ThresholdName::IA, Regime::NSlow, 8.0, 12.0, 10.1, 0.02),
            (ThresholdName::IMinus, Regime::HSlow, 2.0, 8.0, 4.8, 0.02),
            (ThresholdName::IPlus, Regime::HSlow, 250.0, 310.0, 280.0, 0.02),
            (ThresholdName::IP, Regime::HSlow, 100.0, 140.0, 120.0, 0.02),
            (ThresholdName::IP, Regime::NSlow, 60.0, 95.0, 81.7, 0.02),
        ];
        for (name, regime, lo, hi, expected, tolerance) in cases {
            let base = ModelParameters::for_regime(regime);
            let bracket = (rescale_current(lo, &base), rescale_current(hi, &base));
            let report = find_threshold(name, regime, bracket, 1e-9, &base).unwrap();
            let expected_ibar = rescale_current(expected, &base);
            assert!(
                (report.ibar - expected_ibar).abs() < tolerance * expected_ibar,
                "{name} ({regime:?}): got {}, expected {expected_ibar}",
                report.ibar
            );
            assert!(report.residual < 1e-8, "{name} residual: {}", report.residual);
            assert!(report.bracket_width < 1e-9 * expected_ibar.abs().max(1.0) * 1e6);
        }
    }

    /// The equilibrium thresholds are shared between the regimes: the
    /// equilibrium itself does not depend on which gate is slow.
    #[test]
    fn equilibrium_thresholds_are_regime_independent() {
        let h = ModelParameters::h_slow();
        let n = ModelParameters::n_slow();
        let bracket_h = (rescale_current(2.0, &h), rescale_current(8.0, &h));
        let low_h =
            find_threshold(ThresholdName::IMinus, Regime::HSlow, bracket_h, 1e-12, &h).unwrap();
        let low_n =
            find_threshold(ThresholdName::IMinus, Regime::NSlow, bracket_h, 1e-12, &n).unwrap();
        assert!((low_h.ibar - low_n.ibar).abs() < 1e-10);
    }

    /// The n-slow balance keeps its sign across the whole window where
    /// patterned firing is observed; its eventual sign change sits far
    /// above, so no relaxation transition interrupts the single-epoch
    /// window the way the h-slow one does.
    #[test]
    fn n_slow_balance_sign_change_sits_above_pattern_window() {
        let base = ModelParameters::n_slow();
        let moderate = (rescale_current(15.0, &base), rescale_current(120.0, &base));
        assert!(matches!(
            find_threshold(ThresholdName::IR, Regime::NSlow, moderate, 1e-9, &base),
            Err(Error::NoSignChange { .. })
        ));
        let high = (rescale_current(120.0, &base), rescale_current(250.0, &base));
        let report = find_threshold(ThresholdName::IR, Regime::NSlow, high, 1e-9, &base).unwrap();
        let i_phys = crate::model::physical_current(report.ibar, &base);
        assert!(
            (125.0..155.0).contains(&i_phys),
            "n-slow balance sign change at {i_phys}"
        );
    }

    /// A directly integrated excursion matches the first-order prediction
    /// to second order in the slow rate: halving the rate cuts the
    /// prediction error by about four. The start level sits a little
    /// outside the funnel so the whole family of excursions stays on the
    /// feasible side.
    #[test]
    fn excursion_oracle_confirms_first_order_accuracy() {
        let p = params_at(27.0, Regime::HSlow);
        let level = funnel_level(Regime::HSlow, &p) + 1e-3;
        let delta = displacement(level, Regime::HSlow, 1e-11, &p).unwrap().delta;
        assert!(delta < 0.0);

        let coarse_rate = 1e-3;
        let fine_rate = 5e-4;
        let coarse = excursion_return(level, coarse_rate, Regime::HSlow, &p).unwrap();
        let fine = excursion_return(level, fine_rate, Regime::HSlow, &p).unwrap();
        let err_coarse = (coarse - (level + coarse_rate * delta)).abs();
        let err_fine = (fine - (level + fine_rate * delta)).abs();
        assert!(err_coarse < 1e-4, "coarse error: {err_coarse}");
        let ratio = err_coarse / err_fine;
        assert!(
            (3.2..=4.8).contains(&ratio),
            "error ratio: {ratio} (coarse {err_coarse}, fine {err_fine})"
        );

        let hat = return_map_hat(level, 0.025, Regime::HSlow, 1e-10, &p).unwrap();
        assert!(hat < level, "no contraction: {hat} vs {level}");
        let unchanged = return_map_hat(level, 0.0, Regime::HSlow, 1e-10, &p).unwrap();
        assert_eq!(unchanged, level);
    }

    /// At a smooth interior level the two nominal stencil scales already
    /// agree to the consistency tolerance, so the refinement ladder is a
    /// no-op away from the funnel boundary.
    #[test]
    fn interior_level_slopes_are_stencil_consistent() {
        let p = params_at(30.0, Regime::HSlow);
        let level = funnel_level(Regime::HSlow, &p) + 5e-3;
        let slope_at = |step: f64| {
            let up = psi(level + step, 0.0, Regime::HSlow, 1e-12, &p).unwrap();
            let up2 = psi(level + 2.0 * step, 0.0, Regime::HSlow, 1e-12, &p).unwrap();
            let down = psi(level - step, 0.0, Regime::HSlow, 1e-12, &p).unwrap();
            let down2 = psi(level - 2.0 * step, 0.0, Regime::HSlow, 1e-12, &p).unwrap();
            let half = (up - down) / (2.0 * step);
            let full = (up2 - down2) / (4.0 * step);
            (4.0 * half - full) / 3.0
        };
        let nominal = slope_at(1e-5);
        let doubled = slope_at(2e-5);
        assert!(
            (nominal - doubled).abs() <= 5e-3 * nominal.abs(),
            "stencil drift: {nominal} vs {doubled}"
        );
    }
}
