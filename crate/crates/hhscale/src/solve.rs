//! Scalar root bracketing, bisection, golden-section extrema and a damped
//! two-dimensional Newton iteration.
//!
//! Every routine here is deterministic: fixed iteration schedules, no
//! randomised restarts, so repeated runs bit-reproduce.

use crate::error::{Error, Result};

/// Bisection on a bracketing interval. `f(a)` and `f(b)` must have opposite
/// signs; the returned abscissa has bracket width below `tol`.
pub fn bisect<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    tol: f64,
    target: &'static str,
) -> Result<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(Error::NoSignChange { target });
    }
    // 200 halvings take any physical bracket far below f64 resolution; the
    // width test is the real terminator.
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if (b - a).abs() <= tol || mid == a || mid == b {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Scan `n` uniform cells of [lo, hi] and return every sign-change bracket
/// of `f` (cells where the value is non-finite are skipped).
pub fn sign_change_brackets<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    n: usize,
) -> Vec<(f64, f64)> {
    let step = (hi - lo) / n as f64;
    let mut brackets = Vec::new();
    let mut x_prev = lo;
    let mut f_prev = f(lo);
    for i in 1..=n {
        let x = if i == n { hi } else { lo + step * i as f64 };
        let fx = f(x);
        if f_prev.is_finite() && fx.is_finite() && f_prev != 0.0 && f_prev.signum() != fx.signum()
        {
            brackets.push((x_prev, x));
        }
        x_prev = x;
        f_prev = fx;
    }
    brackets
}

/// Golden-section search for a maximum on [a, b]; `f` must be unimodal on
/// the bracket. Returns (argmax, max) once the bracket is below `tol`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Maximum of `f` over [lo, hi]: uniform scan with `n` cells, then
/// golden-section refinement of the best interior bracket.
pub fn grid_golden_max<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    n: usize,
    tol: f64,
) -> (f64, f64) {
    let step = (hi - lo) / n as f64;
    let mut best_i = 0usize;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=n {
        let x = if i == n { hi } else { lo + step * i as f64 };
        let fx = f(x);
        if fx > best {
            best = fx;
            best_i = i;
        }
    }
    if best_i == 0 || best_i == n {
        let x = if best_i == 0 { lo } else { hi };
        return (x, best);
    }
    let a = lo + step * (best_i - 1) as f64;
    let b = lo + step * (best_i + 1) as f64;
    golden_max(f, a, b, tol)
}

/// Residual and Jacobian of a two-dimensional system at a point.
pub struct Newton2Eval {
    pub r: [f64; 2],
    /// Row-major Jacobian [[dr0/dx, dr0/dy], [dr1/dx, dr1/dy]].
    pub j: [[f64; 2]; 2],
}

/// Damped Newton iteration on a 2-d system. Halves the step (up to 8 times)
/// whenever the residual norm fails to decrease. Converged when the
/// residual norm drops below `tol`.
pub fn damped_newton2<F: FnMut(f64, f64) -> Newton2Eval>(
    mut eval: F,
    mut x: f64,
    mut y: f64,
    tol: f64,
    max_iter: usize,
) -> Option<(f64, f64, f64)> {
    let norm = |r: [f64; 2]| r[0].hypot(r[1]);
    let mut e = eval(x, y);
    let mut res = norm(e.r);
    for _ in 0..max_iter {
        if res < tol {
            return Some((x, y, res));
        }
        let det = e.j[0][0] * e.j[1][1] - e.j[0][1] * e.j[1][0];
        if det.abs() < 1e-300 || !det.is_finite() {
            return None;
        }
        let dx = (e.r[0] * e.j[1][1] - e.r[1] * e.j[0][1]) / det;
        let dy = (e.r[1] * e.j[0][0] - e.r[0] * e.j[1][0]) / det;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let (xt, yt) = (x - lambda * dx, y - lambda * dy);
            let et = eval(xt, yt);
            let rt = norm(et.r);
            if rt.is_finite() && rt < res {
                x = xt;
                y = yt;
                e = et;
                res = rt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            // Take the smallest damped step anyway; if the residual is
            // genuinely stuck the iteration budget will expire.
            x -= lambda * dx;
            y -= lambda * dy;
            e = eval(x, y);
            res = norm(e.r);
        }
    }
    if res < tol {
        Some((x, y, res))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_cube_root() {
        let root = bisect(|x| x * x * x - 2.0, 0.0, 2.0, 1e-14, "cube root").unwrap();
        assert!((root - 2.0_f64.powf(1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn bisect_rejects_unbracketed_interval() {
        let err = bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12, "no root").unwrap_err();
        assert!(matches!(err, Error::NoSignChange { .. }));
    }

    #[test]
    fn brackets_catch_every_crossing() {
        let b = sign_change_brackets(|x| (x * std::f64::consts::PI).sin(), 0.1, 3.9, 400);
        assert_eq!(b.len(), 3); // crossings at 1, 2, 3
        for (lo, hi) in b {
            assert!(hi - lo < 0.01);
        }
    }

    #[test]
    fn golden_finds_quadratic_peak() {
        let (x, fx) = golden_max(|x| 3.0 - (x - 0.7) * (x - 0.7), 0.0, 2.0, 1e-12);
        assert!((x - 0.7).abs() < 1e-6);
        assert!((fx - 3.0).abs() < 1e-12);
    }

    #[test]
    fn newton2_solves_coupled_quadratics() {
        // x^2 + y^2 = 5, x*y = 2 -> (2, 1) from a loose seed.
        let sol = damped_newton2(
            |x, y| Newton2Eval {
                r: [x * x + y * y - 5.0, x * y - 2.0],
                j: [[2.0 * x, 2.0 * y], [y, x]],
            },
            2.5,
            0.5,
            1e-13,
            50,
        )
        .expect("converges");
        assert!((sol.0 - 2.0).abs() < 1e-9);
        assert!((sol.1 - 1.0).abs() < 1e-9);
    }
}
