//! Finite-population checks: players reflecting at the mean-field
//! equilibrium barriers interact through the empirical mean of the others'
//! stationary statistics. The empirical Nash gap is compared against the
//! Hoeffding-type bound `r(N)`.

use alloc::vec::Vec;
use rand::Rng;

use crate::cost::{CostSpec, GFunction, MeanFieldFn};
use crate::error::{ensure, Result};
#[allow(unused_imports)]
use crate::math::Float;
use crate::mfg::discounted_cost_path;
use crate::path::{Barriers, IncrementStream, Reflector};
use crate::stats::MeanVar;

/// Whether costs are long-run averages or discounted at rate `eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GapMode {
    Ergodic,
    Discounted { eps: f64 },
}

/// Exponent used in the concentration term of `r(N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HoeffdingExponent {
    /// `−2δ² / ((b − a)² N)`, as published. It tends to zero as `N` grows,
    /// so this term does not vanish.
    #[default]
    AsPublished,
    /// `−2δ² N / (b − a)²`, the usual Hoeffding rate for a sample mean of
    /// `N` values in `[a, b]`.
    SampleMean,
}

/// `r(N) = h_max · 4K e^{exponent} + 2K/N`, divided by `ε` in discounted
/// mode.
pub fn hoeffding_r(k: f64, delta: f64, a: f64, b: f64, n: usize, h_max: f64, mode: GapMode, exponent: HoeffdingExponent) -> Result<f64> {
    ensure(k >= 0.0 && k.is_finite(), "K", "must be non-negative")?;
    ensure(delta > 0.0 && delta.is_finite(), "delta", "must be positive")?;
    ensure(a <= b, "barriers", "need a <= b")?;
    ensure(n >= 1, "N", "must be positive")?;
    ensure(h_max >= 0.0 && h_max.is_finite(), "h_max", "must be non-negative")?;
    let nf = n as f64;
    let w2 = (b - a) * (b - a);
    let e = match exponent {
        HoeffdingExponent::AsPublished => -2.0 * delta * delta / (w2 * nf),
        HoeffdingExponent::SampleMean => -2.0 * delta * delta * nf / w2,
    };
    let r = h_max * 4.0 * k * e.exp() + 2.0 * k / nf;
    match mode {
        GapMode::Ergodic => Ok(r),
        GapMode::Discounted { eps } => {
            ensure(eps > 0.0, "epsilon", "must be positive")?;
            Ok(r / eps)
        }
    }
}

/// Time averages over the tail `[burn_in, horizon]` of one player's
/// reflected path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlayerTail {
    /// Estimate of the player's stationary statistic `f(X_∞)`.
    pub f_avg: f64,
    pub g_avg: f64,
    pub g2_avg: f64,
    /// Lower and upper control per unit time.
    pub u_rate: f64,
    pub d_rate: f64,
}

impl PlayerTail {
    /// Long-run cost against a frozen mean-field value `fbar`.
    pub fn cost(&self, cost: &CostSpec, fbar: f64) -> f64 {
        self.g_avg * cost.h.eval(fbar) + cost.q_u * self.u_rate + cost.q_d * self.d_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlayerSettings {
    pub x0: f64,
    pub horizon: f64,
    pub burn_in: f64,
}

impl PlayerSettings {
    pub fn validate(&self) -> Result<()> {
        ensure(self.x0.is_finite(), "x0", "must be finite")?;
        ensure(self.burn_in >= 0.0 && self.burn_in < self.horizon && self.horizon.is_finite(), "burn_in", "must lie in [0, horizon)")
    }
}

pub fn player_tail<R: Rng + ?Sized>(
    stream: &IncrementStream,
    barriers: Barriers,
    f: &MeanFieldFn,
    g: &GFunction,
    settings: &PlayerSettings,
    rng: &mut R,
) -> PlayerTail {
    let (mut refl, _) = Reflector::start(barriers, settings.x0);
    let (t0, t1) = (settings.burn_in, settings.horizon);
    let (mut fs, mut gs, mut g2s, mut us, mut ds) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut t = 0.0;
    while t < t1 {
        let ev = stream.next(rng);
        let overlap = (t + ev.dt).min(t1) - t.max(t0);
        if overlap > 0.0 {
            let gx = g.eval(refl.x);
            fs += f.eval(refl.x) * overlap;
            gs += gx * overlap;
            g2s += gx * gx * overlap;
        }
        t += ev.dt;
        if t >= t1 {
            break;
        }
        let push = refl.step(ev.dx);
        if t > t0 {
            us += push.du;
            ds += push.dd;
        }
    }
    let len = t1 - t0;
    PlayerTail { f_avg: fs / len, g_avg: gs / len, g2_avg: g2s / len, u_rate: us / len, d_rate: ds / len }
}

/// `f̄^{−i}`: mean of the other players' statistics.
pub fn empirical_mean_field_excluding(tails: &[PlayerTail], i: usize) -> f64 {
    let n = tails.len();
    let s: f64 = tails.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, t)| t.f_avg).sum();
    s / (n - 1) as f64
}

/// Long-run cost of every player against the others' empirical mean field.
pub fn ensemble_costs(tails: &[PlayerTail], cost: &CostSpec) -> Vec<f64> {
    (0..tails.len()).map(|i| tails[i].cost(cost, empirical_mean_field_excluding(tails, i))).collect()
}

/// One replica of the gap experiment for player 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NashGapSample {
    pub fbar: f64,
    /// Cost of each deviation; the same own-noise stream is reused for all.
    pub costs: Vec<f64>,
    /// `K` estimate: tail average of `g²` under the first strategy.
    pub g2: f64,
}

/// Simulates `n − 1` opponents at `base`, then player 0 under each entry of
/// `strategies` with common random numbers.
pub fn nash_gap_sample<R: Rng + Clone>(
    stream: &IncrementStream,
    cost: &CostSpec,
    base: Barriers,
    strategies: &[Barriers],
    n: usize,
    mode: GapMode,
    settings: &PlayerSettings,
    rng: &mut R,
) -> Result<NashGapSample> {
    ensure(n >= 2, "N", "needs at least two players")?;
    ensure(!strategies.is_empty(), "deviations", "must not be empty")?;
    settings.validate()?;
    base.check_model(stream.model())?;
    for s in strategies {
        s.check_model(stream.model())?;
    }
    let mut fsum = 0.0;
    for _ in 1..n {
        fsum += player_tail(stream, base, &cost.f, &cost.g, settings, rng).f_avg;
    }
    let fbar = fsum / (n - 1) as f64;
    let own = rng.clone();
    rng.random::<u64>();
    let mut costs = Vec::with_capacity(strategies.len());
    let mut g2 = 0.0;
    for (k, s) in strategies.iter().enumerate() {
        let tail = player_tail(stream, *s, &cost.f, &cost.g, settings, &mut own.clone());
        if k == 0 {
            g2 = tail.g2_avg;
        }
        costs.push(match mode {
            GapMode::Ergodic => tail.cost(cost, fbar),
            GapMode::Discounted { eps } => discounted_cost_path(stream, cost, eps, *s, fbar, settings.x0, settings.horizon, &mut own.clone()),
        });
    }
    Ok(NashGapSample { fbar, costs, g2 })
}

/// Replica averages; the first strategy is the equilibrium one.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NashGapAccumulator {
    pub base: MeanVar,
    /// `J(deviation) − J(base)` per strategy.
    pub diffs: Vec<MeanVar>,
    pub g2: MeanVar,
    pub fbar: MeanVar,
}

impl NashGapAccumulator {
    pub fn push(&mut self, s: &NashGapSample) {
        if self.diffs.is_empty() {
            self.diffs = alloc::vec![MeanVar::new(); s.costs.len()];
        }
        self.base.push(s.costs[0]);
        for (d, c) in self.diffs.iter_mut().zip(&s.costs) {
            d.push(c - s.costs[0]);
        }
        self.g2.push(s.g2);
        self.fbar.push(s.fbar);
    }

    pub fn merge(&mut self, other: &NashGapAccumulator) {
        if self.diffs.is_empty() {
            self.diffs = alloc::vec![MeanVar::new(); other.diffs.len()];
        }
        self.base.merge(&other.base);
        for (d, o) in self.diffs.iter_mut().zip(&other.diffs) {
            d.merge(o);
        }
        self.g2.merge(&other.g2);
        self.fbar.merge(&other.fbar);
    }

    /// `gap = J(base) − min_dev J(dev) ≥ 0`, with the standard error of the
    /// minimizing difference.
    pub fn report(&self, n: usize) -> NashGapReport {
        let (best, d) = self
            .diffs
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.mean().total_cmp(&y.1.mean()))
            .map(|(k, d)| (k, *d))
            .unwrap_or((0, MeanVar::new()));
        let gap = (-d.mean()).max(0.0);
        let gap_se = if best == 0 { 0.0 } else { d.std_err() };
        NashGapReport {
            n,
            replicas: self.base.count(),
            equilibrium_cost: self.base.mean(),
            gap,
            gap_se,
            best_deviation: best,
            k_estimate: self.g2.mean(),
            fbar_mean: self.fbar.mean(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NashGapReport {
    pub n: usize,
    pub replicas: u64,
    pub equilibrium_cost: f64,
    pub gap: f64,
    pub gap_se: f64,
    /// Index into the strategy list; 0 when no deviation helps.
    pub best_deviation: usize,
    pub k_estimate: f64,
    pub fbar_mean: f64,
}

/// `base` plus the eight neighbours `(a + i·step, b + j·step)`,
/// `i, j ∈ {−1, 0, 1}`, that keep `a ≤ 0 ≤ b`.
pub fn deviation_grid(base: Barriers, step: f64) -> Vec<Barriers> {
    let mut out = alloc::vec![base];
    for i in [-1.0, 0.0, 1.0] {
        for j in [-1.0, 0.0, 1.0] {
            if i == 0.0 && j == 0.0 {
                continue;
            }
            let (a, b) = (base.a + i * step, base.b + j * step);
            if a <= 0.0 && 0.0 <= b {
                if let Ok(bb) = Barriers::new(a, b) {
                    out.push(bb);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::HFunction;
    use crate::levy::LevyModel;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (IncrementStream, CostSpec) {
        let m = LevyModel::compound_poisson(1.5, 1.0, 3.0, 2.0).unwrap();
        let cost = CostSpec::quadratic(HFunction::ExpAbsCos { offset: 0.01 }, MeanFieldFn::Identity, 0.5).unwrap();
        (IncrementStream::new(m, 1.0).unwrap(), cost)
    }

    #[test]
    fn hoeffding_worked_example() {
        let r = hoeffding_r(1.0, 0.01, -1.0, 1.0, 100, 1.0, GapMode::Ergodic, HoeffdingExponent::AsPublished).unwrap();
        assert!((r - (4.0 * (-2e-4f64 / 400.0).exp() + 0.02)).abs() < 1e-15);
        let rd = hoeffding_r(1.0, 0.01, -1.0, 1.0, 100, 1.0, GapMode::Discounted { eps: 0.1 }, HoeffdingExponent::AsPublished).unwrap();
        assert!((rd - 10.0 * r).abs() < 1e-12);
        let rs = hoeffding_r(1.0, 0.5, -1.0, 1.0, 100, 1.0, GapMode::Ergodic, HoeffdingExponent::SampleMean).unwrap();
        assert!((rs - (4.0 * (-12.5f64).exp() + 0.02)).abs() < 1e-15);
    }

    #[test]
    fn deviating_to_own_strategy_has_zero_gap() {
        let (s, cost) = setup();
        let base = Barriers::new(-0.6, 0.8).unwrap();
        let st = PlayerSettings { x0: 0.0, horizon: 200.0, burn_in: 20.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for mode in [GapMode::Ergodic, GapMode::Discounted { eps: 0.1 }] {
            let smp = nash_gap_sample(&s, &cost, base, &[base, base], 5, mode, &st, &mut rng).unwrap();
            assert_eq!(smp.costs[0], smp.costs[1]);
            let mut acc = NashGapAccumulator::default();
            acc.push(&smp);
            assert_eq!(acc.report(5).gap, 0.0);
        }
    }

    #[test]
    fn deviation_grid_respects_origin() {
        let g = deviation_grid(Barriers::new(-0.05, 0.8).unwrap(), 0.1);
        assert_eq!(g[0], Barriers::new(-0.05, 0.8).unwrap());
        assert!(g.iter().all(|b| b.a <= 0.0 && b.b >= 0.0));
        assert_eq!(g.len(), 6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn costs_are_exchangeable(seeds in proptest::collection::vec(any::<u64>(), 3..6), rot in 1usize..5) {
            let (s, cost) = setup();
            let bar = Barriers::new(-0.6, 0.8).unwrap();
            let st = PlayerSettings { x0: 0.0, horizon: 30.0, burn_in: 5.0 };
            let tails = |seeds: &[u64]| -> Vec<PlayerTail> {
                seeds.iter().map(|&sd| player_tail(&s, bar, &cost.f, &cost.g, &st, &mut ChaCha8Rng::seed_from_u64(sd))).collect()
            };
            let c = ensemble_costs(&tails(&seeds), &cost);
            let mut perm = seeds.clone();
            let r = rot % perm.len();
            perm.rotate_left(r);
            let cp = ensemble_costs(&tails(&perm), &cost);
            for i in 0..seeds.len() {
                let j = (i + r) % seeds.len();
                prop_assert!((c[j] - cp[i]).abs() <= 1e-12 * (1.0 + c[j].abs()));
            }
        }
    }
}
