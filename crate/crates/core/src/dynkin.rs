//! The stopping game adjoint to the control problem at a fixed mean-field
//! value, its closed-form Nash thresholds for the compound Poisson model,
//! and per-path payoff kernels for Monte Carlo validation.

use alloc::vec::Vec;
use rand::Rng;

use crate::cost::CostSpec;
use crate::error::{ensure, Error, Result};
use crate::levy::{LevyModel, RootQuadratic};
use crate::math::{bisect, discount_integral};
#[allow(unused_imports)]
use crate::math::Float;
use crate::path::IncrementStream;
use crate::stats::MeanVar;

/// Residual tolerance for the threshold equations.
pub const THRESHOLD_TOLERANCE: f64 = 1e-10;

/// Orientation of the closed-form thresholds.
///
/// The closed-form equations describe the game played by `−X`. `Reflected`
/// maps their solution `(a, b)` to `(−b, −a)`, the thresholds for `X`
/// itself. `AsPrinted` returns `(a, b)` unchanged, which is what published
/// numerical examples report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdOrientation {
    #[default]
    Reflected,
    AsPrinted,
}

/// Constants of the closed-form threshold equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdConstants {
    pub r_i: f64,
    pub r_s: f64,
    pub pi_i: f64,
    pub pi_s: f64,
    pub e_i: f64,
    pub e_s: f64,
    pub f_i: f64,
    pub f_s: f64,
    pub g_i: f64,
    pub g_s: f64,
    /// Residual of the roots in the Laplace equation.
    pub root_residual: f64,
}

/// Computes the roots and the derived constants for discount rate `eps`.
pub fn cp_threshold_constants(model: &LevyModel, eps: f64, quadratic: RootQuadratic) -> Result<ThresholdConstants> {
    let (alpha1, alpha2) = match *model {
        LevyModel::CompoundPoissonTwoExp { alpha1, alpha2, .. } => (alpha1, alpha2),
        _ => return Err(Error::WrongFamily("compound_poisson")),
    };
    let roots = model.phi_roots(eps, quadratic)?;
    let (r_i, r_s) = (roots.r_i, roots.r_s);
    let pi_i = r_i / alpha2;
    let pi_s = r_s / alpha1;
    let c = ThresholdConstants {
        r_i,
        r_s,
        pi_i,
        pi_s,
        e_i: (1.0 - pi_i) / r_i,
        e_s: (1.0 - pi_s) / r_s,
        f_i: (r_i + r_s) / (r_i + pi_i * r_s),
        f_s: (r_i + r_s) / (pi_s * r_i + r_s),
        g_i: (1.0 - pi_i) * r_s / (r_i + pi_i * r_s),
        g_s: (1.0 - pi_s) * r_i / (pi_s * r_i + r_s),
        root_residual: roots.residual,
    };
    if !(c.g_i * c.g_s < 1.0) {
        return Err(Error::Numerical("G_I G_S >= 1: threshold equations are singular"));
    }
    Ok(c)
}

impl ThresholdConstants {
    /// The two fractions of the threshold equations at width `L = b − a`,
    /// written with negative exponents so that large `L` cannot overflow.
    fn fractions(&self, width: f64) -> (f64, f64) {
        let e = (-(self.r_i + self.r_s) * width).exp();
        let den = 1.0 - self.g_i * self.g_s * e;
        let g1 = (self.e_s * (-self.r_s * width).exp() - self.e_i * self.g_s * e) / den;
        let g2 = (-self.e_i * (-self.r_i * width).exp() + self.e_s * self.g_i * e) / den;
        (g1, g2)
    }

    /// Right-hand sides of the threshold equations at `(a, b)`.
    pub fn rhs(&self, delta: f64, a: f64, b: f64) -> (f64, f64) {
        let (g1, g2) = self.fractions(b - a);
        (-delta - self.e_i + self.f_i * g1, delta + self.e_s + self.f_s * g2)
    }

    /// Max-norm residual of the threshold equations at `(a, b)`.
    pub fn residual(&self, delta: f64, a: f64, b: f64) -> f64 {
        let (ra, rb) = self.rhs(delta, a, b);
        (a - ra).abs().max((b - rb).abs())
    }
}

/// Nash thresholds of the stopping game at a fixed stopping payoff `δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynkinSolution {
    pub a_star: f64,
    pub b_star: f64,
    pub delta: f64,
    /// Max-norm residual of the threshold equations.
    pub residual: f64,
    pub orientation: ThresholdOrientation,
    /// Optional `(x, V(x), stderr)` samples of the game value.
    pub value_samples: Vec<(f64, f64, f64)>,
}

/// Solves the threshold equations for stopping payoff `delta > 0`.
///
/// Both equations give `a` and `b` explicitly once `L = b − a` is known, so
/// the system collapses to the scalar equation `L = 2δ + E_I + E_S + F_S g2(L)
/// − F_I g1(L)`. Its left side minus its right side equals `−2δ` at `L = 0`
/// and grows without bound, so the root is bracketed and bisected to
/// machine precision.
pub fn cp_best_response(consts: &ThresholdConstants, delta: f64, orientation: ThresholdOrientation) -> Result<DynkinSolution> {
    ensure(delta > 0.0 && delta.is_finite(), "delta", "must be positive")?;
    let scalar = |l: f64| {
        let (ra, rb) = consts.rhs(delta, 0.0, l);
        l - (rb - ra)
    };
    let mut hi = 1.0;
    while scalar(hi) <= 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NoConvergence { iterations: 0, residual: f64::INFINITY });
        }
    }
    let width = bisect(scalar, 0.0, hi, 0.0)?;
    let (a, b) = consts.rhs(delta, 0.0, width);
    let residual = consts.residual(delta, a, b);
    if !(residual < THRESHOLD_TOLERANCE) {
        return Err(Error::RootResidual { residual });
    }
    let (a_star, b_star) = match orientation {
        ThresholdOrientation::AsPrinted => (a, b),
        ThresholdOrientation::Reflected => (-b, -a),
    };
    Ok(DynkinSolution { a_star, b_star, delta, residual, orientation, value_samples: Vec::new() })
}

/// Stopping game at a fixed mean-field value `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub model: LevyModel,
    pub eps: f64,
    pub p: f64,
    pub cost: CostSpec,
}

impl GameSpec {
    pub fn new(model: LevyModel, eps: f64, p: f64, cost: CostSpec) -> Result<Self> {
        model.validate()?;
        cost.validate()?;
        ensure(eps > 0.0 && eps.is_finite(), "epsilon", "must be positive")?;
        ensure(p.is_finite(), "p", "must be finite")?;
        Ok(GameSpec { model, eps, p, cost })
    }

    /// Stopping payoff `δ = ε q / (2 k h(p))` of the closed-form class.
    pub fn delta(&self) -> Result<f64> {
        let (k, q) = self.cost.closed_form_params()?;
        Ok(self.eps * q / (2.0 * k * self.cost.h.eval(self.p)))
    }

    /// `∂c/∂x (x, p)`.
    fn marginal_cost(&self, x: f64) -> f64 {
        let hp = self.cost.h.eval(self.p);
        match self.cost.g {
            crate::cost::GFunction::Quadratic { k } => 2.0 * k * x * hp,
            crate::cost::GFunction::Power { power } => power * x.abs().powf(power - 1.0) * x.signum() * hp,
            crate::cost::GFunction::Zero => 0.0,
        }
    }
}

/// Payoff of one path of the game started at `x` with stopping rules
/// `τ = inf{X ≤ a}` and `σ = inf{X ≥ b}`:
/// `∫_0^{τ∧σ} c_x(X_s, p) e^{−εs} ds + q_d e^{−εσ} 1{τ ≥ σ} − q_u e^{−ετ} 1{σ > τ}`.
///
/// The path is followed until exit or until the discount factor drops below
/// `1e−14`.
pub fn game_payoff_path<R: Rng + ?Sized>(stream: &IncrementStream, spec: &GameSpec, x: f64, a: f64, b: f64, rng: &mut R) -> f64 {
    if x <= a {
        return -spec.cost.q_u;
    }
    if x >= b {
        return spec.cost.q_d;
    }
    let eps = spec.eps;
    let t_max = -(1e-14f64).ln() / eps;
    let mut t = 0.0;
    let mut pos = x;
    let mut acc = 0.0;
    while t < t_max {
        let ev = stream.next(rng);
        acc += spec.marginal_cost(pos) * (-eps * t).exp() * discount_integral(eps, ev.dt);
        t += ev.dt;
        pos += ev.dx;
        if pos <= a {
            return acc - spec.cost.q_u * (-eps * t).exp();
        }
        if pos >= b {
            return acc + spec.cost.q_d * (-eps * t).exp();
        }
    }
    acc
}

/// One common-random-number sample of the payoffs at `(a, b)` and at the
/// four one-sided perturbations `a − h, a + h, b − h, b + h`.
pub fn saddle_sample<R: Rng + Clone>(stream: &IncrementStream, spec: &GameSpec, x: f64, a: f64, b: f64, h: f64, rng: &mut R) -> [f64; 5] {
    let start = rng.clone();
    let run = |aa: f64, bb: f64| {
        let mut r = start.clone();
        game_payoff_path(stream, spec, x, aa, bb, &mut r)
    };
    let out = [run(a, b), run(a - h, b), run(a + h, b), run(a, b - h), run(a, b + h)];
    // advance the caller's stream past everything any configuration used
    let mut r = start;
    game_payoff_path(stream, spec, x, a - h, b + h, &mut r);
    *rng = r;
    out
}

/// Differences of perturbed payoffs against the candidate thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SaddleReport {
    pub x: f64,
    pub perturbation: f64,
    pub base: MeanVar,
    pub a_minus: MeanVar,
    pub a_plus: MeanVar,
    pub b_minus: MeanVar,
    pub b_plus: MeanVar,
}

impl SaddleReport {
    pub fn new(x: f64, perturbation: f64) -> Self {
        SaddleReport { x, perturbation, ..Default::default() }
    }

    pub fn push(&mut self, sample: [f64; 5]) {
        self.base.push(sample[0]);
        self.a_minus.push(sample[1] - sample[0]);
        self.a_plus.push(sample[2] - sample[0]);
        self.b_minus.push(sample[3] - sample[0]);
        self.b_plus.push(sample[4] - sample[0]);
    }

    pub fn merge(&mut self, other: &SaddleReport) {
        self.base.merge(&other.base);
        self.a_minus.merge(&other.a_minus);
        self.a_plus.merge(&other.a_plus);
        self.b_minus.merge(&other.b_minus);
        self.b_plus.merge(&other.b_plus);
    }

    /// Moving `a` must not raise the payoff (the `τ` player maximises) and
    /// moving `b` must not lower it (the `σ` player minimises), each up to
    /// `z` standard errors.
    pub fn holds(&self, z: f64) -> bool {
        let up_ok = |m: &MeanVar| m.mean() <= z * se_or_zero(m);
        let down_ok = |m: &MeanVar| m.mean() >= -z * se_or_zero(m);
        up_ok(&self.a_minus) && up_ok(&self.a_plus) && down_ok(&self.b_minus) && down_ok(&self.b_plus)
    }
}

fn se_or_zero(m: &MeanVar) -> f64 {
    if m.variance() == 0.0 {
        0.0
    } else {
        m.std_err()
    }
}
