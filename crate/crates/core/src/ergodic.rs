//! Long-run average (ergodic) problem: the stable closed form, regenerative
//! and batch-means estimators of long-run costs, and the pieces of the
//! abelian comparison `ε J_ε → J`.

use alloc::vec::Vec;
use rand::Rng;

use crate::cost::CostSpec;
use crate::error::{ensure, Error, Result};
use crate::math::bisect;
#[allow(unused_imports)]
use crate::math::Float;
use crate::path::{Barriers, IncrementStream, Reflector};
use crate::stationary::{stable_loss_rate, stable_rho, LossRate};
use crate::stats::{BatchMeans, MeanVar, RatioAccumulator};

/// Minimum number of regeneration cycles (or batches) before an estimate is
/// reported.
pub const MIN_CYCLES: u64 = 30;

/// Ergodic equilibrium of the strictly stable model with
/// `c(x, y) = x²(1 + |y|)`, `f(y) = y²` and `q_u = q_d = q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErgodicEquilibrium {
    pub a_star: f64,
    pub b_star: f64,
    pub d_star: f64,
    pub rho: f64,
    /// `E_π D^{0,1}_1` under the chosen loss-rate formula.
    pub loss_rate_1: f64,
    pub loss_rate: LossRate,
    /// `p* = E X_∞²` at the equilibrium.
    pub p_star: f64,
    /// Long-run cost `(1 + p*) p* + 2 q E_π D^{0,1}_1 / d*^{α−1}`.
    pub j_value: f64,
    /// Relative residual of `(b/(1−ρ))^{α+1} (α + 1 + b²ρ/(1−ρ))/(α + 1) = (α² − 1) q E D / (ρ(1 − ρ))`.
    pub residual: f64,
    /// `b*` from the published radical formula, with `(1 − α)^{α+1}` read
    /// as `(α − 1)^{α+1}`; it does not solve the equation above and is
    /// reported for comparison only.
    pub printed_radical_b: f64,
}

fn pre_radical_rhs(alpha: f64, q: f64, rho: f64, loss1: f64) -> f64 {
    (alpha * alpha - 1.0) * q * loss1 / (rho * (1.0 - rho))
}

/// Band width `d` of the best response to mean-field value `p`:
/// `d = ((α² − 1) q E D / ((1 + |p|) ρ(1 − ρ)))^{1/(α+1)}`, with `a = −dρ`.
pub fn stable_best_response(alpha: f64, c_plus: f64, c_minus: f64, q: f64, p: f64, which: LossRate) -> Result<(f64, f64)> {
    ensure(q > 0.0 && q.is_finite(), "q", "must be positive")?;
    ensure(p.is_finite(), "p", "must be finite")?;
    let rho = stable_rho(alpha, c_plus, c_minus)?;
    let loss1 = stable_loss_rate(alpha, c_plus, c_minus, 1.0, which)?;
    let d = (pre_radical_rhs(alpha, q, rho, loss1) / (1.0 + p.abs())).powf(1.0 / (alpha + 1.0));
    Ok((-d * rho, d * (1.0 - rho)))
}

/// Solves the equilibrium equations for `d* = b* − a*` by bisection on
/// `d^{α+1}(1 + d²ρ(1−ρ)/(α+1))`, which is increasing in `d`.
pub fn stable_ergodic_equilibrium(alpha: f64, c_plus: f64, c_minus: f64, q: f64, which: LossRate) -> Result<ErgodicEquilibrium> {
    ensure(q > 0.0 && q.is_finite(), "q", "must be positive")?;
    let rho = stable_rho(alpha, c_plus, c_minus)?;
    let loss1 = stable_loss_rate(alpha, c_plus, c_minus, 1.0, which)?;
    let rhs = pre_radical_rhs(alpha, q, rho, loss1);
    let var_coef = rho * (1.0 - rho) / (alpha + 1.0);
    let lhs = |d: f64| d.powf(alpha + 1.0) * (1.0 + var_coef * d * d);
    let mut hi = 1.0;
    while lhs(hi) < rhs {
        hi *= 2.0;
        if hi > 1e150 {
            return Err(Error::Numerical("equilibrium width does not bracket"));
        }
    }
    let d = bisect(|d| lhs(d) - rhs, 0.0, hi, 0.0)?;
    let b = d * (1.0 - rho);
    let a = -b * rho / (1.0 - rho);
    let printed = (b / (1.0 - rho)).powf(alpha + 1.0) * ((alpha + 1.0 + b * b * rho / (1.0 - rho)) / (alpha + 1.0));
    let residual = (printed - rhs).abs() / rhs;
    if !(residual < 1e-10) {
        return Err(Error::RootResidual { residual });
    }
    let p_star = var_coef * d * d;
    let j_value = (1.0 + p_star) * p_star + 2.0 * q * loss1 * d.powf(1.0 - alpha);
    Ok(ErgodicEquilibrium {
        a_star: a,
        b_star: b,
        d_star: d,
        rho,
        loss_rate_1: loss1,
        loss_rate: which,
        p_star,
        j_value,
        residual,
        printed_radical_b: printed_radical_b(alpha, q, rho, loss1),
    })
}

fn printed_radical_b(alpha: f64, q: f64, rho: f64, loss1: f64) -> f64 {
    let k = rho / (1.0 - rho).powf(alpha + 2.0);
    let lead = 1.0 / (alpha - 1.0).powf(alpha + 1.0);
    let disc = 1.0 / (alpha - 1.0).powf(2.0 * alpha + 2.0) + 4.0 * k * pre_radical_rhs(alpha, q, rho, loss1);
    let u = (-lead + disc.sqrt()) / (2.0 * k);
    if u > 0.0 {
        u.powf(1.0 / (alpha + 1.0))
    } else {
        f64::NAN
    }
}

/// How the long-run averages were estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErgodicMethod {
    /// Cycles between returns to the lower barrier after touching the upper
    /// one (every jump when `a = b`).
    Regenerative,
    /// Equal-length batches of one long path.
    BatchMeans,
}

/// Per-cycle sums of each cost component with the cycle lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicStats {
    pub method: ErgodicMethod,
    pub total: RatioAccumulator,
    pub running: RatioAccumulator,
    /// `q_u dU`.
    pub lower: RatioAccumulator,
    /// `q_d dD`.
    pub upper: RatioAccumulator,
    /// Per-batch totals (batch means only), for the correlation diagnostic.
    pub batches: BatchMeans,
}

impl ErgodicStats {
    pub fn new(method: ErgodicMethod) -> Self {
        ErgodicStats {
            method,
            total: RatioAccumulator::default(),
            running: RatioAccumulator::default(),
            lower: RatioAccumulator::default(),
            upper: RatioAccumulator::default(),
            batches: BatchMeans::new(),
        }
    }

    pub fn merge(&mut self, other: &ErgodicStats) {
        self.total.merge(&other.total);
        self.running.merge(&other.running);
        self.lower.merge(&other.lower);
        self.upper.merge(&other.upper);
        self.batches.merge(&other.batches);
    }

    fn push_cycle(&mut self, running: f64, lower: f64, upper: f64, length: f64) {
        self.total.push(running + lower + upper, length);
        self.running.push(running, length);
        self.lower.push(lower, length);
        self.upper.push(upper, length);
        if self.method == ErgodicMethod::BatchMeans {
            self.batches.push((running + lower + upper) / length);
        }
    }

    /// Ratio estimate of the long-run average cost; fails below
    /// [`MIN_CYCLES`] cycles.
    pub fn estimate(&self) -> Result<RegenerativeEstimate> {
        if self.total.n < MIN_CYCLES {
            return Err(Error::InsufficientSamples { got: self.total.n as usize, needed: MIN_CYCLES as usize });
        }
        Ok(RegenerativeEstimate::from_ratio(&self.total))
    }

    pub fn component(&self, acc: &RatioAccumulator) -> RegenerativeEstimate {
        RegenerativeEstimate::from_ratio(acc)
    }
}

/// Ratio estimate `E Z / E T` over cycles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegenerativeEstimate {
    pub cycle_count: u64,
    pub cycle_mean_reward: f64,
    pub cycle_mean_length: f64,
    pub ratio: f64,
    pub stderr: f64,
}

impl RegenerativeEstimate {
    pub fn from_ratio(acc: &RatioAccumulator) -> Self {
        RegenerativeEstimate {
            cycle_count: acc.n,
            cycle_mean_reward: acc.mean_reward(),
            cycle_mean_length: acc.mean_length(),
            ratio: acc.ratio(),
            stderr: acc.std_err(),
        }
    }
}

/// Long-run cost of reflecting at `barriers` with frozen mean-field value
/// `p`, from one path of length `horizon`.
///
/// Compound Poisson paths start at `a` and are cut into regeneration cycles;
/// the incomplete last cycle is dropped. Gridded models start at `x0`, drop
/// `burn_in` time units and use `n_batches` batches.
pub fn ergodic_cost_run<R: Rng + ?Sized>(
    stream: &IncrementStream,
    cost: &CostSpec,
    barriers: Barriers,
    p: f64,
    horizon: f64,
    x0: f64,
    burn_in: f64,
    n_batches: usize,
    rng: &mut R,
) -> Result<ErgodicStats> {
    barriers.check_model(stream.model())?;
    ensure(horizon > 0.0 && horizon.is_finite(), "horizon", "must be positive")?;
    let hp = cost.h.eval(p);
    if stream.is_exact() {
        let mut stats = ErgodicStats::new(ErgodicMethod::Regenerative);
        let degenerate = barriers.a == barriers.b;
        let (mut refl, _) = Reflector::start(barriers, barriers.a);
        let (mut run, mut low, mut up, mut len) = (0.0, 0.0, 0.0, 0.0);
        let mut touched = false;
        let mut t = 0.0;
        loop {
            let ev = stream.next(rng);
            if t + ev.dt > horizon {
                break;
            }
            run += cost.g.eval(refl.x) * hp * ev.dt;
            len += ev.dt;
            t += ev.dt;
            let push = refl.step(ev.dx);
            low += cost.q_u * push.du;
            up += cost.q_d * push.dd;
            touched |= refl.x == barriers.b;
            if degenerate || (touched && refl.x == barriers.a) {
                stats.push_cycle(run, low, up, len);
                (run, low, up, len) = (0.0, 0.0, 0.0, 0.0);
                touched = false;
            }
        }
        Ok(stats)
    } else {
        ensure(n_batches > 0, "n_batches", "must be positive")?;
        ensure(burn_in >= 0.0 && burn_in < horizon, "burn_in", "must lie in [0, horizon)")?;
        let mut stats = ErgodicStats::new(ErgodicMethod::BatchMeans);
        let dt = stream.grid_step();
        let burn_steps = libm::ceil(burn_in / dt) as u64;
        let steps_per_batch = (((horizon - burn_in) / dt) as u64 / n_batches as u64).max(1);
        let (mut refl, _) = Reflector::start(barriers, x0);
        for _ in 0..burn_steps {
            refl.step(stream.next(rng).dx);
        }
        for _ in 0..n_batches {
            let (mut run, mut low, mut up) = (0.0, 0.0, 0.0);
            for _ in 0..steps_per_batch {
                run += cost.g.eval(refl.x);
                let push = refl.step(stream.next(rng).dx);
                low += push.du;
                up += push.dd;
            }
            stats.push_cycle(run * hp * dt, cost.q_u * low, cost.q_d * up, steps_per_batch as f64 * dt);
        }
        Ok(stats)
    }
}

/// One `ε J_ε` estimate per discount rate together with the ergodic value.
#[derive(Debug, Clone, PartialEq)]
pub struct AbelianPoint {
    pub eps: f64,
    /// Samples of `ε J_ε` (one per path).
    pub scaled: MeanVar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbelianReport {
    pub points: Vec<AbelianPoint>,
    pub ergodic: RegenerativeEstimate,
    /// `|ε J_ε − J|` per point.
    pub gaps: Vec<f64>,
    /// Combined standard error for each successive pair of gaps.
    pub pair_sigmas: Vec<f64>,
    /// Every gap smaller than the previous one.
    pub decreasing: bool,
    /// Every successive drop larger than `z` combined standard errors.
    pub separated: bool,
}

/// Compares `ε J_ε` with `J` along a decreasing list of discount rates.
///
/// When two successive estimates lie on the same side of `J` the gap
/// difference does not involve `J`, so only their own errors enter;
/// otherwise the error of `J` is added twice.
pub fn analyze_abelian(points: Vec<AbelianPoint>, ergodic: RegenerativeEstimate, z: f64) -> Result<AbelianReport> {
    ensure(points.len() >= 3, "eps_list", "needs at least three entries")?;
    ensure(points.windows(2).all(|w| w[0].eps > w[1].eps), "eps_list", "must be strictly decreasing")?;
    let j = ergodic.ratio;
    let gaps: Vec<f64> = points.iter().map(|pt| (pt.scaled.mean() - j).abs()).collect();
    let mut pair_sigmas = Vec::new();
    let mut decreasing = true;
    let mut separated = true;
    for k in 0..points.len() - 1 {
        let (x, y) = (&points[k].scaled, &points[k + 1].scaled);
        let same_side = (x.mean() - j).signum() == (y.mean() - j).signum();
        let mut var = x.std_err().powi(2) + y.std_err().powi(2);
        if !same_side {
            var += 4.0 * ergodic.stderr * ergodic.stderr;
        }
        let sigma = var.sqrt();
        pair_sigmas.push(sigma);
        decreasing &= gaps[k + 1] < gaps[k];
        separated &= gaps[k] - gaps[k + 1] > z * sigma;
    }
    Ok(AbelianReport { points, ergodic, gaps, pair_sigmas, decreasing, separated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{GFunction, HFunction, MeanFieldFn};
    use crate::levy::LevyModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cp() -> LevyModel {
        LevyModel::compound_poisson(1.5, 1.0, 3.0, 2.0).unwrap()
    }

    #[test]
    fn symmetric_stable_equilibrium_is_centred() {
        let e = stable_ergodic_equilibrium(1.5, 1.0, 1.0, 0.5, LossRate::ModelConsistent).unwrap();
        assert_eq!(e.rho, 0.5);
        assert!((e.a_star + e.b_star).abs() < 1e-14);
        assert!(e.residual < 1e-10);
    }

    #[test]
    fn equilibrium_ratio_and_residual() {
        for which in [LossRate::ModelConsistent, LossRate::AsPrinted] {
            let e = stable_ergodic_equilibrium(1.5, 1.0, 2.0, 0.5, which).unwrap();
            assert!((e.a_star + e.b_star * e.rho / (1.0 - e.rho)).abs() < 1e-14);
            assert!(e.residual < 1e-10);
            assert!(e.a_star < 0.0 && e.b_star > 0.0);
            // the equilibrium is a best response to its own p*
            let (a, b) = stable_best_response(1.5, 1.0, 2.0, 0.5, e.p_star, which).unwrap();
            assert!((a - e.a_star).abs() < 1e-10 && (b - e.b_star).abs() < 1e-10);
        }
    }

    #[test]
    fn bands_widen_with_control_cost() {
        let mut prev: Option<ErgodicEquilibrium> = None;
        for q in [0.25, 0.5, 1.0] {
            let e = stable_ergodic_equilibrium(1.5, 1.0, 2.0, q, LossRate::ModelConsistent).unwrap();
            if let Some(p) = prev {
                assert!(e.b_star > p.b_star && e.a_star < p.a_star);
            }
            prev = Some(e);
        }
    }

    #[test]
    fn degenerate_band_charges_jump_magnitudes() {
        let cost = CostSpec::new(GFunction::Quadratic { k: 1.0 }, HFunction::Constant { value: 1.0 }, MeanFieldFn::Identity, 1.0, 2.0).unwrap();
        let stream = IncrementStream::new(cp(), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let st = ergodic_cost_run(&stream, &cost, Barriers::new(0.0, 0.0).unwrap(), 0.0, 20_000.0, 0.0, 0.0, 1, &mut rng).unwrap();
        let est = st.estimate().unwrap();
        // λ1/α1 q_u + λ2/α2 q_d
        let exact = 1.5 * 1.0 + 1.5 * 2.0;
        assert!((est.ratio - exact).abs() < 4.0 * est.stderr, "{est:?}");
        assert_eq!(st.component(&st.running).ratio, 0.0);
    }

    #[test]
    fn too_few_cycles_is_an_error() {
        let cost = CostSpec::controls_only(1.0, 1.0).unwrap();
        let stream = IncrementStream::new(cp(), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let st = ergodic_cost_run(&stream, &cost, Barriers::new(-1.0, 1.0).unwrap(), 0.0, 2.0, 0.0, 0.0, 1, &mut rng).unwrap();
        assert!(matches!(st.estimate(), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn abelian_analysis_flags() {
        let pt = |eps: f64, vals: &[f64]| AbelianPoint { eps, scaled: vals.iter().copied().collect() };
        let erg = RegenerativeEstimate { cycle_count: 100, cycle_mean_reward: 1.0, cycle_mean_length: 1.0, ratio: 1.0, stderr: 0.001 };
        let pts = alloc::vec![pt(0.2, &[1.8, 1.82, 1.78]), pt(0.1, &[1.4, 1.41, 1.39]), pt(0.05, &[1.2, 1.21, 1.19])];
        let r = analyze_abelian(pts, erg, 3.0).unwrap();
        assert!(r.decreasing && r.separated);
        let pts = alloc::vec![pt(0.2, &[1.8, 1.82]), pt(0.1, &[1.4, 1.41]), pt(0.15, &[1.2, 1.21])];
        assert!(analyze_abelian(pts, erg, 3.0).is_err());
    }
}
