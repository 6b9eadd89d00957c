//! Singular geometry of the layered reduction: sheets of the
//! two-dimensional critical manifold, its fold curves, the one-dimensional
//! manifolds with their fold points and folded singularities, the true
//! equilibrium, fibre projections across folds, and singular cycles.
//!
//! All coordinates are dimensionless; the slow-variable "level" of a point
//! means its h-coordinate in the h-slow regime and its n-coordinate in the
//! n-slow one.

use crate::error::{Error, Result};
use crate::gating;
use crate::model;
use crate::params::{GateKind, ModelParameters, Regime};
use crate::reduction::{
    mh_fold_function, mh_point, mn_fold_function, mn_point, slaved_current, slaved_current_dh,
    slaved_current_dn, slaved_current_dv, slaved_current_dvh, slaved_current_dvn,
    slaved_current_dvv,
};
use crate::solve::{bisect, damped_newton2, grid_golden_max, sign_change_brackets, Newton2Eval};

/// Membership tolerance for points claimed to lie on the critical
/// manifold.
const ON_MANIFOLD_TOL: f64 = 1e-6;
/// Fold-condition band inside which a sheet query reports the boundary.
const FOLD_BAND: f64 = 1e-9;
/// Alignment tolerance on the signed gap between folded singularities.
const ALIGNMENT_TOL: f64 = 1e-9;
/// Grid density for scalar root scans along the voltage window.
const SCAN_POINTS: usize = 2000;

/// Sheet of the two-dimensional critical manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SheetLabel {
    /// Hyperpolarised attracting sheet.
    SAMinus,
    /// Repelling middle sheet.
    SR,
    /// Depolarised attracting sheet.
    SAPlus,
}

impl std::fmt::Display for SheetLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SheetLabel::SAMinus => write!(f, "S_a_minus"),
            SheetLabel::SR => write!(f, "S_r"),
            SheetLabel::SAPlus => write!(f, "S_a_plus"),
        }
    }
}

/// Sheet classification with the degenerate-case marker.
#[derive(Debug, Clone, Copy)]
pub struct SheetClass {
    pub label: SheetLabel,
    /// True when the layer slope vanishes to tolerance: the point sits on
    /// a fold curve and the label follows the tie rule (repelling).
    pub on_fold: bool,
}

/// Which fold curve of the critical manifold a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveLabel {
    LMinus,
    LPlus,
}

impl std::fmt::Display for CurveLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CurveLabel::LMinus => write!(f, "L_minus"),
            CurveLabel::LPlus => write!(f, "L_plus"),
        }
    }
}

/// A point where the layer problem loses normal hyperbolicity. The same
/// record carries fold points of the one-dimensional manifolds, labelled
/// by v-ordering.
#[derive(Debug, Clone, Copy)]
pub struct FoldPoint {
    pub v: f64,
    pub h: f64,
    pub n: f64,
    pub curve: CurveLabel,
}

/// Lower/upper branch tag, assigned by v-ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchSign {
    Minus,
    Plus,
}

/// Intersection of a one-dimensional critical manifold with a fold curve.
#[derive(Debug, Clone, Copy)]
pub struct FoldedSingularity {
    pub v: f64,
    pub h: f64,
    pub n: f64,
    pub branch: BranchSign,
    pub regime: Regime,
}

impl FoldedSingularity {
    /// Slow-variable coordinate relevant to the regime.
    pub fn level(&self) -> f64 {
        match self.regime {
            Regime::HSlow => self.h,
            Regime::NSlow => self.n,
        }
    }
}

/// Relative position of the two folded singularities in the slow variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrbitalKind {
    Connected,
    Aligned,
    Remote,
}

impl std::fmt::Display for OrbitalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OrbitalKind::Connected => write!(f, "Connected"),
            OrbitalKind::Aligned => write!(f, "Aligned"),
            OrbitalKind::Remote => write!(f, "Remote"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OrbitalRelation {
    pub kind: OrbitalKind,
    /// Signed level difference between the folded singularities, oriented
    /// along the slow drift on the depolarised branch: positive when the
    /// fast jump from the lower singularity lands upstream of the upper
    /// one, so the slow flow carries the orbit through it. The slow gate
    /// decays toward its depolarised rest state in the h-slow regime and
    /// grows in the n-slow one, so the orientation flips between regimes.
    pub gap: f64,
}

/// Branch of a one-dimensional critical manifold, by position relative to
/// its fold points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifoldBranch {
    Lower,
    Middle,
    Upper,
    /// No fold points: the manifold is a single branch.
    Undivided,
}

impl std::fmt::Display for ManifoldBranch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ManifoldBranch::Lower => write!(f, "lower"),
            ManifoldBranch::Middle => write!(f, "middle"),
            ManifoldBranch::Upper => write!(f, "upper"),
            ManifoldBranch::Undivided => write!(f, "undivided"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Fast,
    Intermediate,
    Slow,
}

impl std::fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SegmentKind::Fast => write!(f, "fast"),
            SegmentKind::Intermediate => write!(f, "intermediate"),
            SegmentKind::Slow => write!(f, "slow"),
        }
    }
}

/// Directed piece of a singular cycle; coordinates are (v, h, n).
#[derive(Debug, Clone, Copy)]
pub struct CycleSegment {
    pub kind: SegmentKind,
    pub start: [f64; 3],
    pub end: [f64; 3],
}

/// Closed concatenation of fast, intermediate, and slow segments.
#[derive(Debug, Clone)]
pub struct SingularCycle {
    pub segments: Vec<CycleSegment>,
}

impl SingularCycle {
    /// Largest endpoint mismatch around the loop, closure included.
    pub fn closure_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (a, b) in self
            .segments
            .iter()
            .zip(self.segments.iter().cycle().skip(1))
            .take(self.segments.len())
        {
            let d = (a.end[0] - b.start[0])
                .abs()
                .max((a.end[1] - b.start[1]).abs())
                .max((a.end[2] - b.start[2]).abs());
            worst = worst.max(d);
        }
        worst
    }
}

/// Fold curve sampling: continuation points plus the tangential connection
/// where the two curves meet.
#[derive(Debug, Clone)]
pub struct FoldCurveSet {
    pub points: Vec<FoldPoint>,
    /// The point where the second v-partial also vanishes, when the grid
    /// straddles it.
    pub connection: Option<FoldPoint>,
}

/// Classify a point of the critical manifold by the sign of the layer
/// slope; the attracting side is disambiguated by counting manifold
/// branches at lower v in the same (h, n) slice.
pub fn sheet_of(v: f64, h: f64, n: f64, p: &ModelParameters) -> Result<SheetClass> {
    let residual = slaved_current(v, h, n, p);
    if residual.abs() >= ON_MANIFOLD_TOL {
        return Err(Error::NotOnManifold { residual });
    }
    let slope = slaved_current_dv(v, h, n, p);
    if slope.abs() <= FOLD_BAND {
        return Ok(SheetClass { label: SheetLabel::SR, on_fold: true });
    }
    if slope > 0.0 {
        return Ok(SheetClass { label: SheetLabel::SR, on_fold: false });
    }
    // Attracting: the manifold is a graph in n over (v, h) inside the
    // window, so the fold curve splits each h-slice at the stations where
    // its h-coordinate matches. Below every station is the hyperpolarised
    // sheet, above every station the depolarised one.
    let (lo, hi) = p.v_window();
    let g = |vv: f64| match fold_seed(vv, p) {
        Ok((hf, _)) => hf - h,
        Err(_) => f64::NAN,
    };
    let mut stations = Vec::new();
    for (a, b) in sign_change_brackets(g, lo, hi, 800) {
        stations.push(bisect(g, a, b, 1e-12, "fold station of the h-slice")?);
    }
    let label = match (stations.first(), stations.last()) {
        (Some(&v1), Some(&v2)) => {
            if v <= 0.5 * (v1 + v2) {
                SheetLabel::SAMinus
            } else {
                SheetLabel::SAPlus
            }
        }
        _ => {
            // Slice misses the fold curve: a single attracting branch,
            // split at the curve's closest approach in h (the tangential
            // connection when the slice passes above it).
            let (v_star, _) = grid_golden_max(
                |vv| match fold_seed(vv, p) {
                    Ok((hf, _)) => -(hf - h).abs(),
                    Err(_) => f64::NEG_INFINITY,
                },
                lo,
                hi,
                800,
                1e-10,
            );
            if v < v_star {
                SheetLabel::SAMinus
            } else {
                SheetLabel::SAPlus
            }
        }
    };
    Ok(SheetClass { label, on_fold: false })
}

/// Solve the fold system {balance = 0, layer slope = 0} in (h, n) at fixed
/// v. The seed is refined by damped Newton; the system is linear in h and
/// n^4, so convergence is immediate from any seed with the correct n sign.
pub fn fold_at_v(v: f64, seed: (f64, f64), p: &ModelParameters) -> Result<(f64, f64)> {
    let eval = |h: f64, n: f64| Newton2Eval {
        r: [slaved_current(v, h, n, p), slaved_current_dv(v, h, n, p)],
        j: [
            [slaved_current_dh(v, p), slaved_current_dn(v, n, p)],
            [slaved_current_dvh(v, p), slaved_current_dvn(n, p)],
        ],
    };
    let (h, n, _) = damped_newton2(eval, seed.0, seed.1, 1e-13, 50)
        .ok_or(Error::NoFoldAtV { v, iterations: 50 })?;
    if !h.is_finite() || !n.is_finite() || n < 0.0 {
        return Err(Error::NoFoldAtV { v, iterations: 50 });
    }
    Ok((h, n))
}

/// Closed-form fold solution used to seed the continuation: the fold
/// system is linear in (h, n^4) at fixed v.
fn fold_seed(v: f64, p: &ModelParameters) -> Result<(f64, f64)> {
    let m = gating::gate_inf_dimless(GateKind::M, v, p);
    let m_dv = gating::gate_inf_dimless_dv(GateKind::M, v, p);
    let a1 = -m.powi(3) * (v - p.ebar_na);
    let b1 = -p.gbar_k * (v - p.ebar_k);
    let c1 = -(p.ibar - p.gbar_l * (v - p.ebar_l));
    let a2 = -(3.0 * m * m * m_dv * (v - p.ebar_na) + m.powi(3));
    let b2 = -p.gbar_k;
    let c2 = p.gbar_l;
    let det = a1 * b2 - a2 * b1;
    if det.abs() < 1e-14 {
        return Err(Error::NoFoldAtV { v, iterations: 0 });
    }
    let h = (c1 * b2 - c2 * b1) / det;
    let w = (a1 * c2 - a2 * c1) / det;
    if w < 0.0 {
        return Err(Error::NoFoldAtV { v, iterations: 0 });
    }
    Ok((h, w.powf(0.25)))
}

/// Trace both fold curves over a v-grid by Newton continuation, seeding
/// each solve from the previous point. Points are partitioned into the
/// lower and upper curve at the tangential connection, where the second
/// v-partial of the balance changes sign along the curve.
pub fn fold_curves(
    v_lo: f64,
    v_hi: f64,
    samples: usize,
    p: &ModelParameters,
) -> Result<FoldCurveSet> {
    let samples = samples.max(2);
    let mut raw: Vec<(f64, f64, f64)> = Vec::new();
    let mut seed: Option<(f64, f64)> = None;
    for i in 0..samples {
        let v = v_lo + (v_hi - v_lo) * i as f64 / (samples - 1) as f64;
        let s = match seed {
            Some(s) => s,
            None => match fold_seed(v, p) {
                Ok(s) => s,
                Err(_) => continue,
            },
        };
        match fold_at_v(v, s, p) {
            Ok((h, n)) => {
                raw.push((v, h, n));
                seed = Some((h, n));
            }
            Err(_) => {
                seed = None;
            }
        }
    }
    if raw.is_empty() {
        return Err(Error::NotFound { what: "fold curve inside the voltage window" });
    }

    // Locate the tangential connection along the curve.
    let curvature = |v: f64| -> Result<f64> {
        let (h, n) = fold_at_v(v, fold_seed(v, p)?, p)?;
        Ok(slaved_current_dvv(v, h, n, p))
    };
    let mut v_conn = None;
    for pair in raw.windows(2) {
        let (va, ha, na) = pair[0];
        let (vb, hb, nb) = pair[1];
        let ca = slaved_current_dvv(va, ha, na, p);
        let cb = slaved_current_dvv(vb, hb, nb, p);
        if ca.signum() != cb.signum() {
            let f = |v: f64| curvature(v).unwrap_or(f64::NAN);
            v_conn = Some(bisect(f, va, vb, 1e-12, "tangential fold connection")?);
            break;
        }
    }
    let connection = match v_conn {
        Some(v) => {
            let (h, n) = fold_at_v(v, fold_seed(v, p)?, p)?;
            let curve = if slaved_current_dvv(v + 1e-6, h, n, p) > 0.0 {
                CurveLabel::LMinus
            } else {
                CurveLabel::LPlus
            };
            Some(FoldPoint { v, h, n, curve })
        }
        None => None,
    };

    let split = v_conn.unwrap_or(f64::INFINITY);
    let points = raw
        .into_iter()
        .map(|(v, h, n)| FoldPoint {
            v,
            h,
            n,
            curve: if v < split { CurveLabel::LMinus } else { CurveLabel::LPlus },
        })
        .collect();
    Ok(FoldCurveSet { points, connection })
}

/// The fold-curve point at a given slow-variable level: h on the lower
/// curve for the h-slow regime, n for the n-slow one.
pub fn fold_at_level(
    curve: CurveLabel,
    level: f64,
    regime: Regime,
    p: &ModelParameters,
) -> Result<FoldPoint> {
    let (lo, hi) = fold_curve_v_range(curve, p)?;
    let coord = |v: f64| -> Result<f64> {
        let (h, n) = fold_at_v(v, fold_seed(v, p)?, p)?;
        Ok(match regime {
            Regime::HSlow => h,
            Regime::NSlow => n,
        })
    };
    let f = |v: f64| coord(v).map(|c| c - level).unwrap_or(f64::NAN);
    let brackets = sign_change_brackets(f, lo, hi, 400);
    let (a, b) = *brackets.first().ok_or(Error::NotFound {
        what: "fold-curve point at the requested slow level",
    })?;
    let v = bisect(f, a, b, 1e-13, "fold at level")?;
    let (h, n) = fold_at_v(v, fold_seed(v, p)?, p)?;
    Ok(FoldPoint { v, h, n, curve })
}

/// The v-range over which one of the fold curves exists, from a window
/// scan split at the tangential connection.
fn fold_curve_v_range(curve: CurveLabel, p: &ModelParameters) -> Result<(f64, f64)> {
    let (lo, hi) = p.v_window();
    let set = fold_curves(lo, hi, 1200, p)?;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for pt in set.points.iter().filter(|pt| pt.curve == curve) {
        min = min.min(pt.v);
        max = max.max(pt.v);
    }
    if min >= max {
        return Err(Error::NotFound { what: "requested fold curve inside the window" });
    }
    Ok((min, max))
}

/// Sample the h-slow one-dimensional manifold over a v-grid.
pub fn manifold_mh(v_grid: &[f64], p: &ModelParameters) -> Result<Vec<[f64; 3]>> {
    v_grid
        .iter()
        .map(|&v| {
            let (h, n) = mh_point(v, p)?;
            Ok([v, h, n])
        })
        .collect()
}

/// Sample the n-slow one-dimensional manifold over a v-grid.
pub fn manifold_mn(v_grid: &[f64], p: &ModelParameters) -> Result<Vec<[f64; 3]>> {
    v_grid
        .iter()
        .map(|&v| {
            let (h, n) = mn_point(v, p)?;
            Ok([v, h, n])
        })
        .collect()
}

/// Fold points of the h-slow manifold: zeros of its fold function, where
/// the manifold turns in the slow variable. Returns both or none.
pub fn fold_points_mh(p: &ModelParameters) -> Result<Vec<FoldPoint>> {
    fold_points_1d(p, &|v| mh_fold_function(v, p), &|v| mh_point(v, p))
}

/// Fold points of the n-slow manifold.
pub fn fold_points_mn(p: &ModelParameters) -> Result<Vec<FoldPoint>> {
    fold_points_1d(p, &|v| mn_fold_function(v, p), &|v| mn_point(v, p))
}

fn fold_points_1d(
    p: &ModelParameters,
    fold_fn: &dyn Fn(f64) -> Result<f64>,
    lift: &dyn Fn(f64) -> Result<(f64, f64)>,
) -> Result<Vec<FoldPoint>> {
    let (lo, hi) = p.v_window();
    let f = |v: f64| fold_fn(v).unwrap_or(f64::NAN);
    let brackets = sign_change_brackets(f, lo, hi, SCAN_POINTS);
    let mut out = Vec::new();
    for (a, b) in brackets {
        let v = bisect(f, a, b, 1e-13, "manifold fold point")?;
        let (h, n) = lift(v)?;
        out.push(FoldPoint { v, h, n, curve: CurveLabel::LMinus });
    }
    out.sort_by(|a, b| a.v.total_cmp(&b.v));
    for (i, pt) in out.iter_mut().enumerate() {
        pt.curve = if i == 0 { CurveLabel::LMinus } else { CurveLabel::LPlus };
    }
    if out.len() == 1 {
        // A tangency grazing zero is not a transversal fold pair.
        out.clear();
    }
    Ok(out)
}

/// Folded singularities of a regime: zeros of the layer slope along the
/// regime's one-dimensional manifold, ordered by v.
pub fn folded_singularities(
    regime: Regime,
    p: &ModelParameters,
) -> Result<(FoldedSingularity, FoldedSingularity)> {
    let lift = |v: f64| match regime {
        Regime::HSlow => mh_point(v, p),
        Regime::NSlow => mn_point(v, p),
    };
    let slope = |v: f64| -> f64 {
        match lift(v) {
            Ok((h, n)) => slaved_current_dv(v, h, n, p),
            Err(_) => f64::NAN,
        }
    };
    let (lo, hi) = p.v_window();
    let brackets = sign_change_brackets(slope, lo, hi, SCAN_POINTS);
    if brackets.len() < 2 {
        return Err(Error::NotFound { what: "two folded singularities in the window" });
    }
    let (a, b) = brackets[0];
    let (c, d) = brackets[brackets.len() - 1];
    let v_minus = bisect(slope, a, b, 1e-13, "lower folded singularity")?;
    let v_plus = bisect(slope, c, d, 1e-13, "upper folded singularity")?;
    let make = |v: f64, branch: BranchSign| -> Result<FoldedSingularity> {
        let (h, n) = lift(v)?;
        Ok(FoldedSingularity { v, h, n, branch, regime })
    };
    Ok((make(v_minus, BranchSign::Minus)?, make(v_plus, BranchSign::Plus)?))
}

/// Orbital relation of the folded singularities in the slow variable.
pub fn orbital_relation(regime: Regime, p: &ModelParameters) -> Result<OrbitalRelation> {
    let (q_minus, q_plus) = folded_singularities(regime, p)?;
    let gap = match regime {
        Regime::HSlow => q_minus.level() - q_plus.level(),
        Regime::NSlow => q_plus.level() - q_minus.level(),
    };
    let kind = if gap > ALIGNMENT_TOL {
        OrbitalKind::Connected
    } else if gap < -ALIGNMENT_TOL {
        OrbitalKind::Remote
    } else {
        OrbitalKind::Aligned
    };
    Ok(OrbitalRelation { kind, gap })
}

/// The full system's equilibrium: all gates at steady state and the
/// current balance closed. Reports the manifold branch (relative to the
/// regime's fold points) and the sheet.
pub fn true_equilibrium(
    regime: Regime,
    p: &ModelParameters,
) -> Result<([f64; 3], ManifoldBranch, SheetClass)> {
    let (lo, hi) = p.v_window();
    let f = |v: f64| model::steady_current_balance(v, p);
    let brackets = sign_change_brackets(f, lo, hi, SCAN_POINTS);
    let (a, b) = *brackets.first().ok_or(Error::NotFound {
        what: "equilibrium of the steady current balance",
    })?;
    let v = bisect(f, a, b, 1e-14, "true equilibrium")?;
    let h = gating::gate_inf_dimless(GateKind::H, v, p);
    let n = gating::gate_inf_dimless(GateKind::N, v, p);

    let folds = match regime {
        Regime::HSlow => fold_points_mh(p)?,
        Regime::NSlow => fold_points_mn(p)?,
    };
    let branch = if folds.len() == 2 {
        if v < folds[0].v {
            ManifoldBranch::Lower
        } else if v > folds[1].v {
            ManifoldBranch::Upper
        } else {
            ManifoldBranch::Middle
        }
    } else {
        ManifoldBranch::Undivided
    };
    let sheet = sheet_of(v, h, n, p)?;
    Ok(([v, h, n], branch, sheet))
}

/// Project a fold point along its fast fibre to the landing root on the
/// opposite attracting sheet: the other zero of the layer balance at
/// frozen (h, n).
pub fn project_fold(fold: &FoldPoint, p: &ModelParameters) -> Result<[f64; 3]> {
    let (lo, hi) = p.v_window();
    let f = |v: f64| slaved_current(v, fold.h, fold.n, p);
    // Step off the double root far enough for the balance to regain the
    // local parabolic sign.
    let mut margin = 1e-4;
    let (mut a, mut b) = (f64::NAN, f64::NAN);
    while margin < 0.05 {
        let (aa, bb) = match fold.curve {
            CurveLabel::LMinus => (fold.v + margin, hi),
            CurveLabel::LPlus => (lo, fold.v - margin),
        };
        if aa < bb && f(aa).signum() != f(bb).signum() {
            a = aa;
            b = bb;
            break;
        }
        margin *= 2.0;
    }
    if !a.is_finite() {
        return Err(Error::NoLandingPoint { v: fold.v });
    }
    let v_land = bisect(f, a, b, 1e-13, "fold projection").map_err(|_| Error::NoLandingPoint {
        v: fold.v,
    })?;
    Ok([v_land, fold.h, fold.n])
}

/// Solve for the point of a one-dimensional manifold branch at a given
/// slow level: v such that the manifold's level coordinate matches.
fn manifold_point_at_level(
    regime: Regime,
    level: f64,
    v_lo: f64,
    v_hi: f64,
    p: &ModelParameters,
) -> Result<[f64; 3]> {
    let lift = |v: f64| match regime {
        Regime::HSlow => mh_point(v, p),
        Regime::NSlow => mn_point(v, p),
    };
    let f = |v: f64| match lift(v) {
        Ok((h, n)) => match regime {
            Regime::HSlow => h - level,
            Regime::NSlow => n - level,
        },
        Err(_) => f64::NAN,
    };
    let brackets = sign_change_brackets(f, v_lo, v_hi, 800);
    let (a, b) = *brackets.first().ok_or(Error::NotFound {
        what: "manifold point at the requested slow level",
    })?;
    let v = bisect(f, a, b, 1e-13, "manifold at level")?;
    let (h, n) = lift(v)?;
    Ok([v, h, n])
}

/// Construct the singular cycle through the lower folded singularity,
/// concatenating slow, fast, and intermediate segments according to the
/// orbital relation.
pub fn singular_cycle(regime: Regime, p: &ModelParameters) -> Result<SingularCycle> {
    let (q_minus, q_plus) = folded_singularities(regime, p)?;
    let relation = orbital_relation(regime, p)?;
    let (lo, hi) = p.v_window();
    let qm = [q_minus.v, q_minus.h, q_minus.n];
    let qp = [q_plus.v, q_plus.h, q_plus.n];

    let fold_minus =
        FoldPoint { v: q_minus.v, h: q_minus.h, n: q_minus.n, curve: CurveLabel::LMinus };
    let land_up = project_fold(&fold_minus, p)?;

    let mut segments = Vec::new();
    match relation.kind {
        OrbitalKind::Connected | OrbitalKind::Aligned => {
            // Upper slow entry point: the upper branch at the lower
            // singularity's level.
            let upper_entry =
                manifold_point_at_level(regime, q_minus.level(), q_plus.v, hi, p)?;
            let fold_plus =
                FoldPoint { v: q_plus.v, h: q_plus.h, n: q_plus.n, curve: CurveLabel::LPlus };
            let land_down = project_fold(&fold_plus, p)?;
            let lower_entry =
                manifold_point_at_level(regime, q_plus.level(), lo, q_minus.v, p)?;
            segments.push(CycleSegment { kind: SegmentKind::Slow, start: lower_entry, end: qm });
            segments.push(CycleSegment { kind: SegmentKind::Fast, start: qm, end: land_up });
            segments.push(CycleSegment {
                kind: SegmentKind::Intermediate,
                start: land_up,
                end: upper_entry,
            });
            segments.push(CycleSegment { kind: SegmentKind::Slow, start: upper_entry, end: qp });
            segments.push(CycleSegment { kind: SegmentKind::Fast, start: qp, end: land_down });
            segments.push(CycleSegment {
                kind: SegmentKind::Intermediate,
                start: land_down,
                end: lower_entry,
            });
        }
        OrbitalKind::Remote => {
            // The upper sheet holds no manifold point at the landing
            // level: the intermediate flow runs into the upper fold curve
            // and drops back down, closing at the lower singularity.
            let upper_exit = fold_at_level(CurveLabel::LPlus, q_minus.level(), regime, p)?;
            let exit_pt = [upper_exit.v, upper_exit.h, upper_exit.n];
            let land_down = project_fold(&upper_exit, p)?;
            segments.push(CycleSegment { kind: SegmentKind::Slow, start: qm, end: qm });
            segments.push(CycleSegment { kind: SegmentKind::Fast, start: qm, end: land_up });
            segments.push(CycleSegment {
                kind: SegmentKind::Intermediate,
                start: land_up,
                end: exit_pt,
            });
            segments.push(CycleSegment { kind: SegmentKind::Fast, start: exit_pt, end: land_down });
            segments.push(CycleSegment {
                kind: SegmentKind::Intermediate,
                start: land_down,
                end: qm,
            });
        }
    }
    Ok(SingularCycle { segments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rescale_current;
    use crate::reduction::nu;

    fn at_current(i_phys: f64) -> ModelParameters {
        let p = ModelParameters::h_slow();
        let ibar = rescale_current(i_phys, &p);
        p.with_ibar(ibar)
    }

    #[test]
    fn fold_curve_points_satisfy_both_residuals() {
        let p = at_current(20.0);
        let (lo, hi) = p.v_window();
        let set = fold_curves(lo, hi, 600, &p).unwrap();
        assert!(set.points.len() > 100, "expected a long fold curve");
        for pt in &set.points {
            assert!(slaved_current(pt.v, pt.h, pt.n, &p).abs() < 1e-9);
            assert!(slaved_current_dv(pt.v, pt.h, pt.n, &p).abs() < 1e-9);
        }
        let conn = set.connection.expect("tangential connection inside the window");
        assert!(slaved_current_dvv(conn.v, conn.h, conn.n, &p).abs() < 1e-6);
    }

    /// The concatenated fold curve is U-shaped: the slow coordinate
    /// attains a single interior extremum, at the tangential connection.
    #[test]
    fn fold_curve_is_u_shaped() {
        let p = at_current(20.0);
        let (lo, hi) = p.v_window();
        let set = fold_curves(lo, hi, 600, &p).unwrap();
        let hs: Vec<f64> = set.points.iter().map(|pt| pt.h).collect();
        let mut extrema = 0;
        for w in hs.windows(3) {
            if (w[1] - w[0]) * (w[2] - w[1]) < 0.0 {
                extrema += 1;
            }
        }
        assert_eq!(extrema, 1, "single interior extremum expected");
        let conn = set.connection.unwrap();
        // The extremum sits at the connection.
        let h_ext = hs
            .windows(3)
            .zip(&set.points[1..])
            .find(|(w, _)| (w[1] - w[0]) * (w[2] - w[1]) < 0.0)
            .map(|(_, pt)| pt.v)
            .unwrap();
        assert!((h_ext - conn.v).abs() < 5e-3, "extremum at {h_ext}, connection at {}", conn.v);
    }

    #[test]
    fn continuation_is_seed_independent() {
        let p = at_current(20.0);
        let set = fold_curves(-0.7, -0.1, 300, &p).unwrap();
        // Re-solving from a displaced seed lands on the same fold point.
        for pt in set.points.iter().step_by(17) {
            let (h, n) = fold_at_v(pt.v, (pt.h + 0.04, pt.n + 0.04), &p).unwrap();
            assert!((h - pt.h).abs() < 1e-9);
            assert!((n - pt.n).abs() < 1e-9);
        }
    }

    #[test]
    fn manifold_fold_points_exist_below_annihilation_and_vanish_above() {
        let low = at_current(20.0);
        let pts = fold_points_mh(&low).unwrap();
        assert_eq!(pts.len(), 2);
        for pt in &pts {
            let sheet = sheet_of(pt.v, pt.h, pt.n, &low).unwrap();
            assert_eq!(sheet.label, SheetLabel::SR, "fold points sit on the repelling sheet");
        }
        let high = at_current(150.0);
        assert!(fold_points_mh(&high).unwrap().is_empty());
    }

    #[test]
    fn folded_singularities_lie_on_fold_and_manifold() {
        let p = at_current(20.0);
        let (qm, qp) = folded_singularities(Regime::HSlow, &p).unwrap();
        for q in [qm, qp] {
            assert!(slaved_current(q.v, q.h, q.n, &p).abs() < 1e-9);
            assert!(slaved_current_dv(q.v, q.h, q.n, &p).abs() < 1e-9);
            let (h, n) = mh_point(q.v, &p).unwrap();
            assert!((h - q.h).abs() < 1e-9 && (n - q.n).abs() < 1e-9);
        }
        assert!(qm.v < qp.v);
    }

    #[test]
    fn orbital_relation_flips_from_connected_to_remote() {
        assert_eq!(
            orbital_relation(Regime::HSlow, &at_current(20.0)).unwrap().kind,
            OrbitalKind::Connected
        );
        assert_eq!(
            orbital_relation(Regime::HSlow, &at_current(28.0)).unwrap().kind,
            OrbitalKind::Remote
        );
    }

    #[test]
    fn equilibrium_sheet_tracks_the_applied_current() {
        let (_, _, s_mid) = true_equilibrium(Regime::HSlow, &at_current(20.0)).unwrap();
        assert_eq!(s_mid.label, SheetLabel::SR);
        let (_, branch_low, s_low) = true_equilibrium(Regime::HSlow, &at_current(2.0)).unwrap();
        assert_eq!(s_low.label, SheetLabel::SAMinus);
        assert_eq!(branch_low, ManifoldBranch::Lower);
        let (_, branch_high, s_high) =
            true_equilibrium(Regime::HSlow, &at_current(300.0)).unwrap();
        assert!(matches!(s_high.label, SheetLabel::SAMinus | SheetLabel::SAPlus));
        assert_eq!(branch_high, ManifoldBranch::Undivided);
    }

    #[test]
    fn fold_projection_lands_on_opposite_attracting_sheet() {
        let p = at_current(27.0);
        let (qm, qp) = folded_singularities(Regime::HSlow, &p).unwrap();
        let fold = FoldPoint { v: qm.v, h: qm.h, n: qm.n, curve: CurveLabel::LMinus };
        let land = project_fold(&fold, &p).unwrap();
        assert!(slaved_current(land[0], land[1], land[2], &p).abs() < 1e-9);
        let sheet = sheet_of(land[0], land[1], land[2], &p).unwrap();
        assert_eq!(sheet.label, SheetLabel::SAPlus);
        assert!(land[0] > qp.v, "landing beyond the upper fold");
    }

    #[test]
    fn singular_cycle_closes_with_expected_slow_segments() {
        let connected = singular_cycle(Regime::HSlow, &at_current(20.0)).unwrap();
        assert!(connected.closure_defect() < 1e-6);
        let slow_count = connected
            .segments
            .iter()
            .filter(|s| s.kind == SegmentKind::Slow)
            .count();
        assert_eq!(slow_count, 2);

        let remote = singular_cycle(Regime::HSlow, &at_current(28.0)).unwrap();
        assert!(remote.closure_defect() < 1e-6);
        let slow_count = remote
            .segments
            .iter()
            .filter(|s| s.kind == SegmentKind::Slow)
            .count();
        assert_eq!(slow_count, 1);
    }

    #[test]
    fn off_manifold_query_is_refused() {
        let p = at_current(20.0);
        assert!(matches!(
            sheet_of(-0.3, 0.9, 0.9, &p),
            Err(Error::NotOnManifold { .. })
        ));
    }

    /// Points sampled on the potassium graph classify as one of the three
    /// sheets and respect the layer-slope sign.
    #[test]
    fn sheet_labels_respect_layer_slope() {
        let p = at_current(20.0);
        for &v in &[-0.7, -0.55, -0.45, -0.3, -0.1, 0.1] {
            for &h in &[0.05, 0.2, 0.5] {
                if let Ok(g) = nu(v, h, &p) {
                    let n = g.value;
                    let sheet = sheet_of(v, h, n, &p).unwrap();
                    let slope = slaved_current_dv(v, h, n, &p);
                    if slope > FOLD_BAND {
                        assert_eq!(sheet.label, SheetLabel::SR);
                    } else if slope < -FOLD_BAND {
                        assert_ne!(sheet.label, SheetLabel::SR);
                    }
                }
            }
        }
    }

    /// eta at the singularity levels reproduces the fold levels, so the
    /// level-indexed fold lookup agrees with the folded singularities.
    #[test]
    fn fold_at_level_recovers_folded_singularity() {
        let p = at_current(20.0);
        let (qm, _) = folded_singularities(Regime::HSlow, &p).unwrap();
        let pt = fold_at_level(CurveLabel::LMinus, qm.h, Regime::HSlow, &p).unwrap();
        assert!((pt.v - qm.v).abs() < 1e-8);
        assert!((pt.n - qm.n).abs() < 1e-8);
    }

    /// The n-slow folded singularities obey the same residuals, and the
    /// alignment current differs from the h-slow one.
    #[test]
    fn n_slow_singularities_and_relation() {
        let p0 = ModelParameters::n_slow();
        let p = p0.clone().with_ibar(rescale_current(9.0, &p0));
        let (qm, qp) = folded_singularities(Regime::NSlow, &p).unwrap();
        assert!(slaved_current(qm.v, qm.h, qm.n, &p).abs() < 1e-9);
        assert!(slaved_current_dv(qp.v, qp.h, qp.n, &p).abs() < 1e-9);
        // The activation gate grows along the depolarised branch, so the
        // connected arrangement has the lower singularity underneath.
        assert!(qm.n < qp.n);
        assert_eq!(
            orbital_relation(Regime::NSlow, &p).unwrap().kind,
            OrbitalKind::Connected
        );
        let p_hi = p0.clone().with_ibar(rescale_current(64.5, &p0));
        assert_eq!(
            orbital_relation(Regime::NSlow, &p_hi).unwrap().kind,
            OrbitalKind::Remote
        );
    }
}
