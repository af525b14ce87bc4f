use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootSpec {
    pub lo: f64,
    pub hi: f64,
    pub x_tol: f64,
    pub f_tol: f64,
    pub max_iter: usize,
}

impl RootSpec {
    pub fn new(lo: f64, hi: f64) -> Self {
        let scale = 1f64.max(lo.abs()).max(hi.abs());
        Self {
            lo,
            hi,
            x_tol: 1e-13 * scale,
            f_tol: 1e-12,
            max_iter: 300,
        }
    }

    pub fn x_tol(mut self, x_tol: f64) -> Self {
        self.x_tol = x_tol;
        self
    }

    pub fn f_tol(mut self, f_tol: f64) -> Self {
        self.f_tol = f_tol;
        self
    }
}

fn opposite(a: f64, b: f64) -> bool {
    (a < 0.0) != (b < 0.0)
}

/// Root of a continuous residual that changes sign on `[lo, hi]`.
///
/// Illinois-modified regula falsi, falling back to bisection whenever a
/// step fails to halve the bracket. Exits once `|f| ≤ f_tol` and the
/// sign change is confined to a bracket of width `≤ x_tol`, or when the
/// bracket cannot shrink further in floating point.
pub fn solve_monotone<F>(mut residual: F, spec: &RootSpec) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (spec.lo, spec.hi);
    if !(a < b) {
        return Err(Error::Domain(format!("empty bracket [{a}, {b}]")));
    }
    let mut fa = residual(a)?;
    let mut fb = residual(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !opposite(fa, fb) {
        return Err(Error::NoBracket { lo: a, hi: b, f_lo: fa, f_hi: fb });
    }

    // +1 when the last update moved `a`, -1 for `b`
    let mut side = 0i8;
    let mut width_before = b - a;
    let mut stalls = 0;
    for _ in 0..spec.max_iter {
        let width = b - a;
        let mid = a + 0.5 * width;
        if mid <= a || mid >= b {
            return Ok(if fa.abs() <= fb.abs() { a } else { b });
        }
        let mut x = b - fb * (b - a) / (fb - fa);
        if !(x > a && x < b) || stalls >= 2 {
            x = mid;
            stalls = 0;
        }
        let fx = residual(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.abs() <= spec.f_tol {
            if width <= spec.x_tol {
                return Ok(x);
            }
            // confirm the sign change within ±x_tol/2 of x
            let xl = (x - 0.5 * spec.x_tol).max(a);
            let xr = (x + 0.5 * spec.x_tol).min(b);
            let fl = if xl == a { fa } else { residual(xl)? };
            let fr = if xr == b { fb } else { residual(xr)? };
            if fl == 0.0 || fr == 0.0 || opposite(fl, fr) {
                return Ok(x);
            }
            if opposite(fa, fl) {
                b = xl;
                fb = fl;
            } else {
                a = xr;
                fa = fr;
            }
            side = 0;
            continue;
        }
        if opposite(fa, fx) {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        if b - a > 0.5 * width_before {
            stalls += 1;
        } else {
            stalls = 0;
        }
        width_before = b - a;
    }
    let x = if fa.abs() <= fb.abs() { a } else { b };
    Err(Error::RootNoConvergence {
        x,
        residual: fa.abs().min(fb.abs()),
        iterations: spec.max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_root() {
        let r = solve_monotone(|x| Ok(x - 1.0), &RootSpec::new(0.0, 2.0)).unwrap();
        assert!((r - 1.0).abs() < 1e-13);
    }

    #[test]
    fn cube_root_of_two() {
        let spec = RootSpec::new(1.0, 2.0).f_tol(1e-14);
        let r = solve_monotone(|x| Ok(x * x * x - 2.0), &spec).unwrap();
        // 1.2599210498948732 by hand: 1.2599210498948732^3 = 2.0000000000000004
        assert!((r - 1.259_921_049_894_873_2).abs() < 1e-13);
    }

    #[test]
    fn decreasing_residual() {
        let r = solve_monotone(|x| Ok((-x).exp() - 0.5), &RootSpec::new(0.0, 5.0)).unwrap();
        assert!((r - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn no_sign_change() {
        match solve_monotone(|x| Ok(x * x + 1.0), &RootSpec::new(-1.0, 2.0)) {
            Err(Error::NoBracket { f_lo, f_hi, .. }) => {
                assert_eq!(f_lo, 2.0);
                assert_eq!(f_hi, 5.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bracket_independent() {
        let f = |x: f64| Ok(x.powi(5) + x - 3.0);
        let r1 = solve_monotone(f, &RootSpec::new(0.0, 2.0)).unwrap();
        let r2 = solve_monotone(f, &RootSpec::new(1.0, 10.0)).unwrap();
        let r3 = solve_monotone(f, &RootSpec::new(-5.0, 1.5)).unwrap();
        assert!((r1 - r2).abs() < 1e-12 && (r1 - r3).abs() < 1e-12);
    }

    #[test]
    fn steep_step_like_residual() {
        let r = solve_monotone(|x| Ok((1e6 * (x - 0.3)).tanh()), &RootSpec::new(0.0, 1.0)).unwrap();
        assert!((r - 0.3).abs() < 1e-12);
    }

    #[test]
    fn residual_errors_propagate() {
        let out = solve_monotone(|_| Err(Error::Domain("boom".into())), &RootSpec::new(0.0, 1.0));
        assert!(matches!(out, Err(Error::Domain(_))));
    }
}
