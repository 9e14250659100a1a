//! Seeded parallel Monte Carlo drivers.
//!
//! Work is split into `workers` contiguous chunks. Chunk `w` draws from the
//! ChaCha stream `w` of the master seed and partial results are merged in
//! chunk order, so output depends only on `(seed, workers)` and not on
//! thread scheduling.

use levy_mfg_core::dynkin::{game_payoff_path, saddle_sample, SaddleReport};
use levy_mfg_core::ergodic::{analyze_abelian, ergodic_cost_run, AbelianPoint, AbelianReport, ErgodicStats};
use levy_mfg_core::mfg::{discounted_cost_path, truncation_factor};
use levy_mfg_core::nplayer::{nash_gap_sample, GapMode, NashGapAccumulator, PlayerSettings};
use levy_mfg_core::path::IncrementStream;
use levy_mfg_core::stationary::{occupation_run, OccupationSettings, OccupationStats};
use levy_mfg_core::stats::MeanVar;
use levy_mfg_core::{Barriers, CostSpec, GameSpec, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Parallel {
    pub seed: u64,
    pub workers: usize,
}

impl Parallel {
    pub fn new(seed: u64, workers: usize) -> Self {
        Parallel { seed, workers: workers.max(1) }
    }

    pub fn rng(&self, worker: usize) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(worker as u64);
        r
    }

    /// Independent sub-experiment with a seed derived from `tag`.
    pub fn fork(&self, tag: u64) -> Parallel {
        // splitmix64 finaliser
        let mut z = self.seed ^ tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Parallel { seed: z ^ (z >> 31), workers: self.workers }
    }

    /// Sizes of the per-worker chunks of `n` items.
    pub fn chunks(&self, n: usize) -> Vec<usize> {
        let (q, r) = (n / self.workers, n % self.workers);
        (0..self.workers).map(|w| q + usize::from(w < r)).collect()
    }

    /// Runs `f(worker, chunk_len, rng)` per worker and returns the results in
    /// worker order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, usize, &mut ChaCha8Rng) -> T + Sync,
    {
        let sizes = self.chunks(n);
        sizes.into_par_iter().enumerate().map(|(w, len)| f(w, len, &mut self.rng(w))).collect()
    }

    /// Mean and variance of `n` i.i.d. draws of `sample`.
    pub fn mean<F>(&self, n: usize, sample: F) -> MeanVar
    where
        F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
    {
        let parts = self.map(n, |_, len, rng| (0..len).map(|_| sample(rng)).collect::<MeanVar>());
        let mut out = MeanVar::new();
        for p in &parts {
            out.merge(p);
        }
        out
    }
}

/// `M_x(τ(a), σ(b))` over `n_paths` paths.
pub fn mc_game_value(par: &Parallel, stream: &IncrementStream, spec: &GameSpec, x: f64, a: f64, b: f64, n_paths: usize) -> Result<MeanVar> {
    levy_mfg_core::Barriers::new(a, b)?;
    if n_paths < 2 {
        return Err(levy_mfg_core::Error::InsufficientSamples { got: n_paths, needed: 2 });
    }
    Ok(par.mean(n_paths, |rng| game_payoff_path(stream, spec, x, a, b, rng)))
}

/// Common-random-number comparison of `(a, b)` against `a ± h`, `b ± h`.
pub fn saddle_check(par: &Parallel, stream: &IncrementStream, spec: &GameSpec, x: f64, a: f64, b: f64, h: f64, n_paths: usize) -> SaddleReport {
    let parts = par.map(n_paths, |_, len, rng| {
        let mut rep = SaddleReport::new(x, h);
        for _ in 0..len {
            rep.push(saddle_sample(stream, spec, x, a, b, h, rng));
        }
        rep
    });
    let mut out = SaddleReport::new(x, h);
    for p in &parts {
        out.merge(p);
    }
    out
}

/// Discounted cost `J_ε(x0)` at frozen `p`; also returns the truncation
/// factor `e^{−ε·horizon}`.
pub fn discounted_cost_mc(
    par: &Parallel,
    stream: &IncrementStream,
    cost: &CostSpec,
    eps: f64,
    barriers: Barriers,
    p: f64,
    x0: f64,
    n_paths: usize,
    horizon: f64,
) -> Result<(MeanVar, f64)> {
    let tail = truncation_factor(eps, horizon)?;
    barriers.check_model(stream.model())?;
    if n_paths < 2 {
        return Err(levy_mfg_core::Error::InsufficientSamples { got: n_paths, needed: 2 });
    }
    Ok((par.mean(n_paths, |rng| discounted_cost_path(stream, cost, eps, barriers, p, x0, horizon, rng)), tail))
}

/// Long-run cost; the horizon is split evenly across workers.
pub fn ergodic_cost_mc(
    par: &Parallel,
    stream: &IncrementStream,
    cost: &CostSpec,
    barriers: Barriers,
    p: f64,
    horizon: f64,
    x0: f64,
    burn_in: f64,
    n_batches: usize,
) -> Result<ErgodicStats> {
    let per = horizon / par.workers as f64;
    let batches = n_batches.div_ceil(par.workers).max(1);
    let parts = par.map(par.workers, |_, _, rng| ergodic_cost_run(stream, cost, barriers, p, per + burn_in, x0, burn_in, batches, rng));
    let mut out: Option<ErgodicStats> = None;
    for p in parts {
        let p = p?;
        match out.as_mut() {
            Some(o) => o.merge(&p),
            None => out = Some(p),
        }
    }
    Ok(out.expect("at least one worker"))
}

/// Occupation statistics of reflected paths; the post-burn-in horizon and
/// the batches are split evenly across workers.
pub fn occupation_mc(par: &Parallel, stream: &IncrementStream, barriers: Barriers, x0: f64, settings: &OccupationSettings) -> Result<OccupationStats> {
    let per_batches = settings.n_batches.div_ceil(par.workers).max(1);
    let per_len = (settings.horizon - settings.burn_in) / par.workers as f64;
    let local = OccupationSettings { horizon: settings.burn_in + per_len, n_batches: per_batches, ..*settings };
    let parts = par.map(par.workers, |_, _, rng| occupation_run(stream, barriers, x0, &local, rng));
    let mut out: Option<OccupationStats> = None;
    for p in parts {
        let p = p?;
        match out.as_mut() {
            Some(o) => o.merge(&p),
            None => out = Some(p),
        }
    }
    Ok(out.expect("at least one worker"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbelianSettings {
    pub x0: f64,
    pub n_paths: usize,
    /// Each discounted path runs for `horizon_scale / ε` time units.
    pub horizon_scale: f64,
    pub ergodic_horizon: f64,
    /// Only used by gridded models.
    pub burn_in: f64,
    pub n_batches: usize,
    pub z: f64,
}

/// `ε J_ε(x0)` for each `ε` against the long-run cost `J` at frozen `p`.
pub fn abelian_check(
    par: &Parallel,
    stream: &IncrementStream,
    cost: &CostSpec,
    barriers: Barriers,
    p: f64,
    eps_list: &[f64],
    settings: &AbelianSettings,
) -> Result<AbelianReport> {
    let mut points = Vec::with_capacity(eps_list.len());
    for (k, &eps) in eps_list.iter().enumerate() {
        let horizon = settings.horizon_scale / eps;
        truncation_factor(eps, horizon)?;
        let sub = par.fork(k as u64);
        let scaled = sub.mean(settings.n_paths, |rng| eps * discounted_cost_path(stream, cost, eps, barriers, p, settings.x0, horizon, rng));
        points.push(AbelianPoint { eps, scaled });
    }
    let erg = ergodic_cost_mc(&par.fork(u64::MAX), stream, cost, barriers, p, settings.ergodic_horizon, 0.5 * (barriers.a + barriers.b), settings.burn_in, settings.n_batches)?;
    analyze_abelian(points, erg.estimate()?, settings.z)
}

/// Replicated gap experiment for one population size.
pub fn nash_gap_mc(
    par: &Parallel,
    stream: &IncrementStream,
    cost: &CostSpec,
    base: Barriers,
    strategies: &[Barriers],
    n: usize,
    mode: GapMode,
    settings: &PlayerSettings,
    replicas: usize,
) -> Result<NashGapAccumulator> {
    let parts = par.map(replicas, |_, len, rng| -> Result<NashGapAccumulator> {
        let mut acc = NashGapAccumulator::default();
        for _ in 0..len {
            acc.push(&nash_gap_sample(stream, cost, base, strategies, n, mode, settings, rng)?);
        }
        Ok(acc)
    });
    let mut out = NashGapAccumulator::default();
    for p in parts {
        out.merge(&p?);
    }
    Ok(out)
}

/// Result of the grid search for thresholds of a general model.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSearch {
    pub a: f64,
    pub b: f64,
    /// Mean payoffs, indexed `[i][j]` for `(a_grid[i], b_grid[j])`.
    pub values: Vec<Vec<f64>>,
    pub warning: &'static str,
}

pub const THRESHOLD_SEARCH_WARNING: &str = "thresholds from a noisy Monte Carlo grid search; for validation only";

/// Picks `a = argmax_i min_j M(a_i, b_j)` and `b = argmin_j max_i M(a_i, b_j)`
/// from game values on a grid, all on common random numbers.
pub fn mc_threshold_search(par: &Parallel, stream: &IncrementStream, spec: &GameSpec, x: f64, a_grid: &[f64], b_grid: &[f64], n_paths: usize) -> Result<ThresholdSearch> {
    if a_grid.is_empty() || b_grid.is_empty() {
        return Err(levy_mfg_core::Error::InvalidParameter { name: "grid", reason: "must not be empty" });
    }
    let mut values = vec![vec![0.0; b_grid.len()]; a_grid.len()];
    for (i, &a) in a_grid.iter().enumerate() {
        for (j, &b) in b_grid.iter().enumerate() {
            values[i][j] = mc_game_value(par, stream, spec, x, a, b, n_paths)?.mean();
        }
    }
    let ia = (0..a_grid.len())
        .max_by(|&i, &k| {
            let mi = values[i].iter().copied().fold(f64::INFINITY, f64::min);
            let mk = values[k].iter().copied().fold(f64::INFINITY, f64::min);
            mi.total_cmp(&mk)
        })
        .expect("non-empty");
    let jb = (0..b_grid.len())
        .min_by(|&j, &k| {
            let mj = values.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
            let mk = values.iter().map(|r| r[k]).fold(f64::NEG_INFINITY, f64::max);
            mj.total_cmp(&mk)
        })
        .expect("non-empty");
    Ok(ThresholdSearch { a: a_grid[ia], b: b_grid[jb], values, warning: THRESHOLD_SEARCH_WARNING })
}
