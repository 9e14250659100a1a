//! Registered cost ingredients: the running cost `c(x, y) = g(x) h(y)`,
//! the mean-field function `f` and the proportional control costs.

use alloc::vec::Vec;

use crate::error::{ensure, Error, Result};
#[allow(unused_imports)]
use crate::math::Float;

/// State part `g` of the running cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GFunction {
    /// `k x²`.
    Quadratic { k: f64 },
    /// `|x|^power` with `power > 1`.
    Power { power: f64 },
    /// `g ≡ 0`; not strictly convex, registered only so that control costs
    /// can be isolated in tests.
    Zero,
}

impl GFunction {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            GFunction::Quadratic { k } => k * x * x,
            GFunction::Power { power } => x.abs().powf(power),
            GFunction::Zero => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            GFunction::Quadratic { k } => ensure(k > 0.0 && k.is_finite(), "g.k", "must be positive"),
            GFunction::Power { power } => ensure(power > 1.0 && power.is_finite(), "g.power", "must exceed 1"),
            GFunction::Zero => Ok(()),
        }
    }
}

/// Population part `h` of the running cost; positive everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HFunction {
    Constant { value: f64 },
    /// `offset + e^y |cos y|`.
    ExpAbsCos { offset: f64 },
    /// `1 + |y|`.
    OnePlusAbs,
}

impl HFunction {
    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            HFunction::Constant { value } => value,
            HFunction::ExpAbsCos { offset } => offset + y.exp() * y.cos().abs(),
            HFunction::OnePlusAbs => 1.0 + y.abs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            HFunction::Constant { value } => ensure(value > 0.0 && value.is_finite(), "h.value", "must be positive"),
            HFunction::ExpAbsCos { offset } => ensure(offset > 0.0 && offset.is_finite(), "h.offset", "must be positive"),
            HFunction::OnePlusAbs => Ok(()),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, HFunction::Constant { .. })
    }

    /// `max h²` over `[lo, hi]` by a uniform scan with `points` nodes.
    pub fn max_sq_on(&self, lo: f64, hi: f64, points: usize) -> f64 {
        let n = points.max(2);
        let mut best: f64 = 0.0;
        for k in 0..n {
            let y = lo + (hi - lo) * k as f64 / (n - 1) as f64;
            let v = self.eval(y);
            best = best.max(v * v);
        }
        best
    }
}

/// Mean-field function `f`; the population statistic is `p = E f(X_∞)`.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanFieldFn {
    Identity,
    Abs,
    Square,
    /// Piecewise-linear interpolation of `(xs, ys)`, constant outside.
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
}

impl MeanFieldFn {
    pub fn tabulated(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        ensure(!xs.is_empty() && xs.len() == ys.len(), "f.table", "needs equally many xs and ys")?;
        ensure(xs.windows(2).all(|w| w[0] < w[1]), "f.xs", "must be strictly increasing")?;
        ensure(xs.iter().chain(ys.iter()).all(|v| v.is_finite()), "f.table", "must be finite")?;
        Ok(MeanFieldFn::Tabulated { xs, ys })
    }

    pub fn name(&self) -> &'static str {
        match self {
            MeanFieldFn::Identity => "identity",
            MeanFieldFn::Abs => "abs",
            MeanFieldFn::Square => "square",
            MeanFieldFn::Tabulated { .. } => "tabulated",
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            MeanFieldFn::Identity => x,
            MeanFieldFn::Abs => x.abs(),
            MeanFieldFn::Square => x * x,
            MeanFieldFn::Tabulated { xs, ys } => {
                let n = xs.len();
                if x <= xs[0] {
                    return ys[0];
                }
                if x >= xs[n - 1] {
                    return ys[n - 1];
                }
                let k = xs.partition_point(|&v| v <= x) - 1;
                let t = (x - xs[k]) / (xs[k + 1] - xs[k]);
                ys[k] + t * (ys[k + 1] - ys[k])
            }
        }
    }

    /// Points inside `(lo, hi)` where `f` is not smooth; quadrature splits
    /// there.
    pub fn kinks(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut out = Vec::new();
        match self {
            MeanFieldFn::Abs => {
                if lo < 0.0 && 0.0 < hi {
                    out.push(0.0);
                }
            }
            MeanFieldFn::Tabulated { xs, .. } => out.extend(xs.iter().copied().filter(|&x| lo < x && x < hi)),
            _ => {}
        }
        out
    }
}

/// Full cost description.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub g: GFunction,
    pub h: HFunction,
    pub f: MeanFieldFn,
    pub q_u: f64,
    pub q_d: f64,
}

impl CostSpec {
    pub fn new(g: GFunction, h: HFunction, f: MeanFieldFn, q_u: f64, q_d: f64) -> Result<Self> {
        let c = CostSpec { g, h, f, q_u, q_d };
        c.validate()?;
        Ok(c)
    }

    /// Quadratic `g`, equal control costs `q`.
    pub fn quadratic(h: HFunction, f: MeanFieldFn, q: f64) -> Result<Self> {
        Self::new(GFunction::Quadratic { k: 1.0 }, h, f, q, q)
    }

    /// Zero running cost; only the control costs remain.
    pub fn controls_only(q_u: f64, q_d: f64) -> Result<Self> {
        Self::new(GFunction::Zero, HFunction::Constant { value: 1.0 }, MeanFieldFn::Identity, q_u, q_d)
    }

    pub fn validate(&self) -> Result<()> {
        self.g.validate()?;
        self.h.validate()?;
        ensure(self.q_u > 0.0 && self.q_u.is_finite(), "q_u", "must be positive")?;
        ensure(self.q_d > 0.0 && self.q_d.is_finite(), "q_d", "must be positive")
    }

    #[inline]
    pub fn running(&self, x: f64, p: f64) -> f64 {
        self.g.eval(x) * self.h.eval(p)
    }

    /// For quadratic `g = k x²` with `q_u = q_d = q`, returns `(k, q)`:
    /// the class where the best response has a closed form.
    pub fn closed_form_params(&self) -> Result<(f64, f64)> {
        match self.g {
            GFunction::Quadratic { k } if self.q_u == self.q_d => Ok((k, self.q_u)),
            GFunction::Quadratic { .. } => Err(Error::OutsideClosedForm("q_u and q_d differ")),
            _ => Err(Error::OutsideClosedForm("g is not quadratic")),
        }
    }
}
