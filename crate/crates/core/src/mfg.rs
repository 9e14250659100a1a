//! Best-response map and ε-discounted mean-field equilibria.
//!
//! For quadratic `g`, equal control costs and the centred compound Poisson
//! model the best response to barriers `(a, b)` is explicit: compute
//! `p = p^{a,b}`, set `δ = ε q / (2 k h(p))` and solve the threshold
//! equations. Equilibria are fixed points of that map.

use alloc::vec::Vec;
use rand::Rng;

use crate::cost::CostSpec;
use crate::dynkin::{cp_best_response, cp_threshold_constants, ThresholdConstants};
use crate::error::{ensure, Error, Result};
use crate::levy::{LevyModel, RootQuadratic};
use crate::math::{discount_integral, newton2, Newton2Outcome};
#[allow(unused_imports)]
use crate::math::Float;
use crate::path::{Barriers, IncrementStream, Reflector};
use crate::stationary::{cp_mean_field, MeanFieldLaw};

pub use crate::dynkin::ThresholdOrientation;

/// Radius (max-norm) within which two equilibria are considered equal.
pub const MERGE_RADIUS: f64 = 1e-4;

/// The three places where the closed-form pipeline can follow either the
/// model-consistent formulas or the published ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Conventions {
    pub roots: RootQuadratic,
    pub law: MeanFieldLaw,
    pub orientation: ThresholdOrientation,
}

impl Conventions {
    /// Verified roots, the translation-invariant law, reflected thresholds.
    pub fn corrected() -> Self {
        Self::default()
    }

    /// Printed quadratic, printed mixture, printed orientation.
    pub fn as_printed() -> Self {
        Conventions { roots: RootQuadratic::AsPrinted, law: MeanFieldLaw::AsPrinted, orientation: ThresholdOrientation::AsPrinted }
    }
}

/// Closed-form best-response map `F(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponseMap {
    pub model: LevyModel,
    pub cost: CostSpec,
    pub eps: f64,
    pub conventions: Conventions,
    pub consts: ThresholdConstants,
    k: f64,
    q: f64,
}

impl BestResponseMap {
    pub fn new(model: LevyModel, cost: CostSpec, eps: f64, conventions: Conventions) -> Result<Self> {
        model.validate()?;
        cost.validate()?;
        ensure(eps > 0.0 && eps.is_finite(), "epsilon", "must be positive")?;
        let (k, q) = cost.closed_form_params()?;
        if !matches!(model, LevyModel::CompoundPoissonTwoExp { .. }) {
            return Err(Error::OutsideClosedForm("model is not compound Poisson"));
        }
        if model.mean().abs() > 1e-12 * (1.0 + model.jump_intensity()) {
            return Err(Error::OutsideClosedForm("E X_1 must vanish"));
        }
        let consts = cp_threshold_constants(&model, eps, conventions.roots)?;
        Ok(BestResponseMap { model, cost, eps, conventions, consts, k, q })
    }

    /// Mean-field value `p^{a,b}`.
    pub fn mean_field(&self, a: f64, b: f64) -> Result<f64> {
        Ok(cp_mean_field(&self.model, a, b, &self.cost.f, self.conventions.law)?.p)
    }

    /// `δ = ε q / (2 k h(p))`.
    pub fn delta_for(&self, p: f64) -> f64 {
        self.eps * self.q / (2.0 * self.k * self.cost.h.eval(p))
    }

    /// `F(a, b)`.
    pub fn apply(&self, a: f64, b: f64) -> Result<(f64, f64)> {
        let p = self.mean_field(a, b)?;
        let delta = self.delta_for(p);
        ensure(delta.is_finite() && delta > 0.0, "delta", "h(p) produced a non-positive or non-finite payoff")?;
        let s = cp_best_response(&self.consts, delta, self.conventions.orientation)?;
        Ok((s.a_star, s.b_star))
    }

    /// `max |F(a, b) − (a, b)|`.
    pub fn residual(&self, a: f64, b: f64) -> Result<f64> {
        let (fa, fb) = self.apply(a, b)?;
        Ok((fa - a).abs().max((fb - b).abs()))
    }
}

/// One-shot `F(a, b)`.
pub fn best_response(model: &LevyModel, cost: &CostSpec, eps: f64, a: f64, b: f64, conventions: Conventions) -> Result<(f64, f64)> {
    ensure(a <= 0.0 && 0.0 <= b, "barriers", "need a <= 0 <= b")?;
    BestResponseMap::new(*model, cost.clone(), eps, conventions)?.apply(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverMethod {
    Picard,
    Newton,
    /// Picard, switching to Newton when Picard stalls or oscillates.
    #[default]
    PicardThenNewton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquilibriumStatus {
    Converged,
    MaxIterations,
    /// Picard stopped reducing the residual; a smaller damping may help.
    Oscillating,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EquilibriumKind {
    Discounted { eps: f64 },
    Ergodic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub a_star: f64,
    pub b_star: f64,
    pub p_star: f64,
    /// `max |F(a*, b*) − (a*, b*)|`.
    pub fixed_point_residual: f64,
    pub iterations: usize,
    pub trace: Vec<[f64; 2]>,
    pub status: EquilibriumStatus,
    pub method: SolverMethod,
    pub init: [f64; 2],
    pub kind: EquilibriumKind,
}

impl EquilibriumResult {
    pub fn converged(&self) -> bool {
        self.status == EquilibriumStatus::Converged
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolverMethod,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { damping: 0.5, tol: 1e-10, max_iter: 2000, method: SolverMethod::PicardThenNewton }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        ensure(self.damping > 0.0 && self.damping <= 1.0, "damping", "must lie in (0, 1]")?;
        ensure(self.tol > 0.0, "tol", "must be positive")?;
        ensure(self.max_iter > 0, "max_iter", "must be positive")
    }
}

fn project(v: [f64; 2]) -> [f64; 2] {
    [v[0].min(0.0), v[1].max(0.0)]
}

/// Window over which Picard must shrink its best residual by `STALL_FACTOR`.
const STALL_WINDOW: usize = 40;
const STALL_FACTOR: f64 = 0.9;

/// Damped Picard iteration `(a, b) ← (1 − λ)(a, b) + λ F(a, b)` from
/// `init`, with a Newton fallback on `F(x) − x` depending on the method.
pub fn find_equilibrium(map: &BestResponseMap, init: [f64; 2], settings: &SolverSettings) -> Result<EquilibriumResult> {
    settings.validate()?;
    ensure(init[0].is_finite() && init[1].is_finite(), "init", "must be finite")?;
    let lam = settings.damping;
    let mut x = project(init);
    let mut trace = Vec::new();
    trace.push(x);
    let mut status = EquilibriumStatus::MaxIterations;
    let mut iterations = 0;
    let mut used = settings.method;

    if settings.method != SolverMethod::Newton {
        let mut best = f64::INFINITY;
        let mut best_at_window = f64::INFINITY;
        for it in 0..settings.max_iter {
            let (fa, fb) = map.apply(x[0], x[1])?;
            let res = (fa - x[0]).abs().max((fb - x[1]).abs());
            iterations = it + 1;
            if res < settings.tol {
                status = EquilibriumStatus::Converged;
                break;
            }
            best = best.min(res);
            if (it + 1) % STALL_WINDOW == 0 {
                if best > STALL_FACTOR * best_at_window {
                    status = EquilibriumStatus::Oscillating;
                    break;
                }
                best_at_window = best;
            }
            x = project([(1.0 - lam) * x[0] + lam * fa, (1.0 - lam) * x[1] + lam * fb]);
            trace.push(x);
        }
        if status == EquilibriumStatus::Converged || settings.method == SolverMethod::Picard {
            used = SolverMethod::Picard;
        }
    }

    if status != EquilibriumStatus::Converged && settings.method != SolverMethod::Picard {
        let start = if settings.method == SolverMethod::Newton { x } else { project(init) };
        let out = newton2(
            |v| {
                let (fa, fb) = map.apply(v[0], v[1])?;
                Ok([fa - v[0], fb - v[1]])
            },
            project,
            start,
            settings.tol,
            settings.max_iter.min(200),
        );
        let out = match out {
            Ok(o) => o,
            Err(_) => Newton2Outcome { x: start, residual: f64::INFINITY, iterations: 0, converged: false },
        };
        iterations += out.iterations;
        trace.push(out.x);
        if out.converged {
            x = out.x;
            status = EquilibriumStatus::Converged;
            used = SolverMethod::Newton;
        } else if settings.method == SolverMethod::Newton {
            x = out.x;
            status = EquilibriumStatus::Failed;
        }
    }

    let fixed_point_residual = map.residual(x[0], x[1])?;
    let p_star = map.mean_field(x[0], x[1])?;
    Ok(EquilibriumResult {
        a_star: x[0],
        b_star: x[1],
        p_star,
        fixed_point_residual,
        iterations,
        trace,
        status,
        method: used,
        init,
        kind: EquilibriumKind::Discounted { eps: map.eps },
    })
}

/// Placeholder result for a start whose iteration raised an error.
pub fn failed_run(map: &BestResponseMap, init: [f64; 2]) -> EquilibriumResult {
    EquilibriumResult {
        a_star: init[0],
        b_star: init[1],
        p_star: f64::NAN,
        fixed_point_residual: f64::INFINITY,
        iterations: 0,
        trace: Vec::new(),
        status: EquilibriumStatus::Failed,
        method: SolverMethod::Picard,
        init,
        kind: EquilibriumKind::Discounted { eps: map.eps },
    }
}

/// `n × n` grid of starting points over `[a_lo, a_hi] × [b_lo, b_hi]`.
pub fn init_grid(a_lo: f64, a_hi: f64, b_lo: f64, b_hi: f64, n: usize) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(n * n);
    let step = |lo: f64, hi: f64, k: usize| if n == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 };
    for i in 0..n {
        for j in 0..n {
            out.push([step(a_lo, a_hi, i), step(b_lo, b_hi, j)]);
        }
    }
    out
}

/// Distinct equilibria and the starts that failed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultiStart {
    pub equilibria: Vec<EquilibriumResult>,
    pub failures: Vec<EquilibriumResult>,
}

/// Merges converged runs within [`MERGE_RADIUS`] and sorts them by `a*`.
/// Each kept equilibrium's residual is recomputed with a freshly built map.
pub fn collect_equilibria(map: &BestResponseMap, runs: Vec<EquilibriumResult>) -> Result<MultiStart> {
    let fresh = BestResponseMap::new(map.model, map.cost.clone(), map.eps, map.conventions)?;
    let mut out = MultiStart::default();
    for mut r in runs {
        if !r.converged() {
            out.failures.push(r);
            continue;
        }
        let dup = out
            .equilibria
            .iter()
            .any(|e| (e.a_star - r.a_star).abs().max((e.b_star - r.b_star).abs()) < MERGE_RADIUS);
        if !dup {
            r.fixed_point_residual = fresh.residual(r.a_star, r.b_star)?;
            out.equilibria.push(r);
        }
    }
    out.equilibria.sort_by(|x, y| x.a_star.total_cmp(&y.a_star));
    Ok(out)
}

/// Runs [`find_equilibrium`] from every start and merges the results.
pub fn multi_start(map: &BestResponseMap, grid: &[[f64; 2]], settings: &SolverSettings) -> Result<MultiStart> {
    ensure(!grid.is_empty(), "grid", "must not be empty")?;
    settings.validate()?;
    let runs = grid.iter().map(|&init| find_equilibrium(map, init, settings).unwrap_or_else(|_| failed_run(map, init))).collect();
    collect_equilibria(map, runs)
}

/// One path of the ε-discounted cost of reflecting at `barriers` from `x0`
/// at frozen mean-field value `p`, truncated at `horizon`:
/// `q_u u₀ + q_d d₀ + ∫_0^T e^{−εs}(c(X_s, p) ds + q_u dU_s + q_d dD_s)`.
pub fn discounted_cost_path<R: Rng + ?Sized>(
    stream: &IncrementStream,
    cost: &CostSpec,
    eps: f64,
    barriers: Barriers,
    p: f64,
    x0: f64,
    horizon: f64,
    rng: &mut R,
) -> f64 {
    let (mut refl, push0) = Reflector::start(barriers, x0);
    let mut total = cost.q_u * push0.du + cost.q_d * push0.dd;
    let hp = cost.h.eval(p);
    let mut t = 0.0;
    while t < horizon {
        let ev = stream.next(rng);
        let dt = ev.dt.min(horizon - t);
        total += cost.g.eval(refl.x) * hp * (-eps * t).exp() * discount_integral(eps, dt);
        t += ev.dt;
        if t >= horizon {
            break;
        }
        let push = refl.step(ev.dx);
        total += (-eps * t).exp() * (cost.q_u * push.du + cost.q_d * push.dd);
    }
    total
}

/// Checks the truncation precondition `ε · horizon ≥ 10` and returns the
/// tail factor `e^{−ε·horizon}`.
pub fn truncation_factor(eps: f64, horizon: f64) -> Result<f64> {
    ensure(eps > 0.0, "epsilon", "must be positive")?;
    ensure(eps * horizon >= 10.0, "horizon", "needs epsilon * horizon >= 10")?;
    Ok((-eps * horizon).exp())
}
