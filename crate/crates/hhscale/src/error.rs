//! Error type shared by every analysis module.
//!
//! Variants are named after the geometric or numerical obstruction that
//! produced them, so callers can branch on the situation (a fold reached, a
//! graph leaving its domain) rather than on message strings.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A graph formula divided by a quantity that is numerically zero,
    /// e.g. evaluating the fast-gate graph at h = 0 or v at the sodium
    /// reversal potential.
    #[error("graph denominator degenerate ({context}: |{value:.3e}| below threshold)")]
    DegenerateDenominator { context: &'static str, value: f64 },

    /// The quartic-root graph was asked for a point where the radicand is
    /// negative, i.e. off the real sheet of the critical manifold.
    #[error("negative radicand {radicand:.6e} in quartic-root graph at v = {v:.6}")]
    NegativeRadicand { v: f64, radicand: f64 },

    /// The v-partial of the fast-gate graph vanished, so the reduced
    /// vector field is not defined at this point.
    #[error("v-partial of the fast-gate graph vanished at v = {v:.6}")]
    PartialVanishes { v: f64 },

    /// A projected slow flow was evaluated on the fold of its manifold,
    /// where the time-rescaled (desingularised) form must be used instead.
    #[error("projected slow flow evaluated on a fold (|denominator| = {denominator:.3e} at v = {v:.6})")]
    FoldSingularity { v: f64, denominator: f64 },

    /// A point handed to a sheet classifier does not satisfy the manifold
    /// equation to the required residual.
    #[error("point is not on the critical manifold (residual {residual:.3e})")]
    NotOnManifold { residual: f64 },

    /// Newton continuation of the fold curve failed to converge at a grid
    /// station; the curve does not extend to this v.
    #[error("no fold point found at v = {v:.6} after {iterations} Newton iterations")]
    NoFoldAtV { v: f64, iterations: usize },

    /// A root-finding bracket never changed sign on the search window.
    #[error("no sign change found while searching for {target}")]
    NoSignChange { target: &'static str },

    /// A requested object (equilibrium, folded singularity, threshold) was
    /// not found on the search window.
    #[error("{what} not found on the search window")]
    NotFound { what: &'static str },

    /// Fast-fibre projection from a fold found no second intersection with
    /// the critical manifold.
    #[error("no landing point on the opposite attracting sheet from v = {v:.6}")]
    NoLandingPoint { v: f64 },

    /// The displacement integrand has a zero of its denominator strictly
    /// inside the integration leg; the return map is not defined at this
    /// level (the layer flow funnels into the slow manifold instead).
    #[error("displacement integrand singular inside the leg near v = {v:.6}")]
    SingularIntegrand { v: f64 },

    /// Adaptive quadrature could not reach the requested tolerance.
    #[error("quadrature error estimate {estimate:.3e} above tolerance {tolerance:.3e}")]
    QuadratureFailed { estimate: f64, tolerance: f64 },

    /// The step-size controller underflowed; the requested tolerance cannot
    /// be met at this state.
    #[error("integration step underflow at t = {t:.6} (step {step:.3e})")]
    StepUnderflow { t: f64, step: f64 },

    /// The trajectory left the inflated physical domain.
    #[error("trajectory left the physical domain at t = {t:.6} (v = {v:.6})")]
    LeftDomain { t: f64, v: f64 },

    /// A trajectory is too short for event extraction or classification.
    #[error("trajectory too short: {reason}")]
    TooShort { reason: String },

    /// No pattern class fits the extracted events.
    #[error("no firing-pattern class fits the extracted events ({reason})")]
    Unclassifiable { reason: String },

    /// Configuration rejected (unknown key, conflicting or malformed values).
    #[error("configuration error: {0}")]
    Config(String),
}
