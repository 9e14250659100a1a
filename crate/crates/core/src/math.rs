//! Numerical helpers: libm-backed float methods for `no_std`, special
//! functions, bracketing root finders, a damped 2D Newton and tanh-sinh
//! quadrature.

use crate::error::{Error, Result};

/// Float methods that live in `std`, routed through `libm`. Test builds
/// link `std`, whose inherent methods shadow these, hence the
/// `allow(unused_imports)` at each import site.
pub trait Float: Copy {
    fn sqrt(self) -> f64;
    fn exp(self) -> f64;
    fn ln(self) -> f64;
    fn powf(self, e: f64) -> f64;
    fn powi(self, e: i32) -> f64;
    fn sin(self) -> f64;
    fn cos(self) -> f64;
    fn tan(self) -> f64;
    fn atan(self) -> f64;
    fn tanh(self) -> f64;
    fn cosh(self) -> f64;
    fn sinh(self) -> f64;
    fn floor(self) -> f64;
    fn exp_m1(self) -> f64;
}

impl Float for f64 {
    #[inline]
    fn sqrt(self) -> f64 {
        libm::sqrt(self)
    }
    #[inline]
    fn exp(self) -> f64 {
        libm::exp(self)
    }
    #[inline]
    fn ln(self) -> f64 {
        libm::log(self)
    }
    #[inline]
    fn powf(self, e: f64) -> f64 {
        libm::pow(self, e)
    }
    #[inline]
    fn powi(self, e: i32) -> f64 {
        libm::pow(self, e as f64)
    }
    #[inline]
    fn sin(self) -> f64 {
        libm::sin(self)
    }
    #[inline]
    fn cos(self) -> f64 {
        libm::cos(self)
    }
    #[inline]
    fn tan(self) -> f64 {
        libm::tan(self)
    }
    #[inline]
    fn atan(self) -> f64 {
        libm::atan(self)
    }
    #[inline]
    fn tanh(self) -> f64 {
        libm::tanh(self)
    }
    #[inline]
    fn cosh(self) -> f64 {
        libm::cosh(self)
    }
    #[inline]
    fn sinh(self) -> f64 {
        libm::sinh(self)
    }
    #[inline]
    fn floor(self) -> f64 {
        libm::floor(self)
    }
    #[inline]
    fn exp_m1(self) -> f64 {
        libm::expm1(self)
    }
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// Euler beta function `B(u, v) = Γ(u)Γ(v)/Γ(u+v)` for `u, v > 0`.
pub fn beta(u: f64, v: f64) -> f64 {
    (ln_gamma(u) + ln_gamma(v) - ln_gamma(u + v)).exp()
}

/// `(1 - e^{-εt}) / ε`, the discount weight of a unit-rate flow on `[0, t]`,
/// stable for small `εt`.
#[inline]
pub fn discount_integral(eps: f64, t: f64) -> f64 {
    if eps == 0.0 {
        t
    } else {
        -(-eps * t).exp_m1() / eps
    }
}

/// Bisection on a sign-changing bracket, finished when the bracket is below
/// `xtol` or the function value is exactly zero.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Numerical("bisection bracket does not change sign"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= xtol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Grows `hi` geometrically from `lo` until `f` changes sign.
pub fn bracket_upward<F: FnMut(f64) -> f64>(mut f: F, lo: f64, mut step: f64, max_hi: f64) -> Result<(f64, f64)> {
    let s0 = f(lo).signum();
    let mut prev = lo;
    while prev < max_hi {
        let hi = (prev + step).min(max_hi);
        if f(hi).signum() != s0 {
            return Ok((prev, hi));
        }
        prev = hi;
        step *= 2.0;
    }
    Err(Error::Numerical("no sign change found while bracketing"))
}

/// Outcome of [`newton2`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Newton2Outcome {
    pub x: [f64; 2],
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Damped Newton for `G(x) = 0` in the plane with a central-difference
/// Jacobian and backtracking on the max-norm residual. `project` maps trial
/// points back into the admissible region.
pub fn newton2<G, P>(mut g: G, project: P, x0: [f64; 2], tol: f64, max_iter: usize) -> Result<Newton2Outcome>
where
    G: FnMut([f64; 2]) -> Result<[f64; 2]>,
    P: Fn([f64; 2]) -> [f64; 2],
{
    let norm = |v: [f64; 2]| v[0].abs().max(v[1].abs());
    let mut x = project(x0);
    let mut gx = g(x)?;
    let mut res = norm(gx);
    for it in 0..max_iter {
        if res < tol {
            return Ok(Newton2Outcome { x, residual: res, iterations: it, converged: true });
        }
        let mut jac = [[0.0f64; 2]; 2];
        for k in 0..2 {
            let h = 1e-6 * (1.0 + x[k].abs());
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            // one-sided where the projection clips a difference point
            let (xp, xm) = (project(xp), project(xm));
            let span = xp[k] - xm[k];
            if span <= 0.0 {
                break;
            }
            let gp = g(xp)?;
            let gm = g(xm)?;
            jac[0][k] = (gp[0] - gm[0]) / span;
            jac[1][k] = (gp[1] - gm[1]) / span;
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let step = [
            -(jac[1][1] * gx[0] - jac[0][1] * gx[1]) / det,
            -(-jac[1][0] * gx[0] + jac[0][0] * gx[1]) / det,
        ];
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-6 {
            let trial = project([x[0] + t * step[0], x[1] + t * step[1]]);
            if let Ok(gt) = g(trial) {
                let rt = norm(gt);
                if rt.is_finite() && rt < res {
                    x = trial;
                    gx = gt;
                    res = rt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Ok(Newton2Outcome { x, residual: res, iterations: it + 1, converged: res < tol });
        }
    }
    Ok(Newton2Outcome { x, residual: res, iterations: max_iter, converged: res < tol })
}

/// Tanh-sinh quadrature of `f` over `[lo, hi]`. Endpoint singularities of
/// integrable power type are handled without special treatment; `f` is
/// never evaluated at the endpoints themselves.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    tanh_sinh_with_gaps(|x, _, _| if x <= lo || x >= hi { 0.0 } else { f(x) }, lo, hi)
}

/// [`tanh_sinh`] for integrands that need the node's distances `x − lo` and
/// `hi − x` without cancellation; `f` receives `(x, x − lo, hi − x)`.
pub fn tanh_sinh_with_gaps<F: Fn(f64, f64, f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let half = 0.5 * (hi - lo);
    let h = 1.0 / 64.0;
    let kmax = (6.0 / h) as i64;
    let pi2 = core::f64::consts::FRAC_PI_2;
    let mut sum = 0.0;
    for k in -kmax..=kmax {
        let t = k as f64 * h;
        let s = pi2 * t.sinh();
        let cs = s.cosh();
        let w = pi2 * t.cosh() / (cs * cs);
        if w < 1e-300 {
            continue;
        }
        // distance of the node from the nearer endpoint, in units of `half`,
        // computed without cancellation
        let tail = 1.0 / ((s.abs()).exp() * cs);
        let near = half * tail;
        if near <= 0.0 {
            continue;
        }
        let (x, from_lo, to_hi) =
            if s >= 0.0 { (hi - near, 2.0 * half - near, near) } else { (lo + near, near, 2.0 * half - near) };
        sum += w * f(x, from_lo, to_hi);
    }
    sum * h * half
}
