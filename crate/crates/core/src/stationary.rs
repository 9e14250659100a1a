//! Stationary laws of reflected processes and mean-field values.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use crate::cost::MeanFieldFn;
use crate::error::{ensure, Error, Result};
use crate::levy::LevyModel;
use crate::math::{beta, gamma, tanh_sinh, tanh_sinh_with_gaps};
#[allow(unused_imports)]
use crate::math::Float;
use crate::path::{Barriers, IncrementStream, Reflector};
use crate::stats::MeanVar;

/// Which compound Poisson stationary law to use for the mean-field value.
///
/// `TranslationInvariant` is the probability law of the reflected process.
/// `AsPrinted` is the signed mixture of the published display (atom at `b`
/// weighted by `a + 1/α2`, uniform part normalised by `b + 1/α2 + α1`); it
/// is not translation invariant, generally does not have mass one, and is
/// kept only to reproduce published numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanFieldLaw {
    #[default]
    TranslationInvariant,
    AsPrinted,
}

/// Which closed form to use for the stable loss rate `E_π D^{0,d}_1`.
///
/// `ModelConsistent` integrates the overshoot of the jump measure against
/// the stationary Beta law, with the jump measure normalised so that the
/// characteristic exponent is exactly the one simulated by
/// [`LevyModel::StrictlyStable`]. `AsPrinted` evaluates the published
/// display verbatim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossRate {
    #[default]
    ModelConsistent,
    AsPrinted,
}

/// Absolutely continuous part of a stationary law on `(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    None,
    Uniform { height: f64 },
    /// `Beta(u, v)` rescaled from `[0, 1]` to `[a, b]`.
    Beta { u: f64, v: f64 },
    /// Piecewise-constant density on equal bins of `[a, b]`.
    Histogram { heights: Vec<f64> },
}

/// Atoms at the barriers plus a density in between.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryLaw {
    pub a: f64,
    pub b: f64,
    pub atom_a: f64,
    pub atom_b: f64,
    pub density: Density,
}

/// `p = E f(X_∞)` together with the name of `f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldValue {
    pub p: f64,
    pub f_tag: &'static str,
}

impl StationaryLaw {
    pub fn point_mass(at: f64) -> Self {
        StationaryLaw { a: at, b: at, atom_a: 1.0, atom_b: 0.0, density: Density::None }
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    /// Mass of the density part.
    pub fn continuous_mass(&self) -> f64 {
        let w = self.width();
        match &self.density {
            Density::None => 0.0,
            Density::Uniform { height } => height * w,
            Density::Beta { .. } => 1.0 - self.atom_a - self.atom_b,
            Density::Histogram { heights } => heights.iter().sum::<f64>() * w / heights.len() as f64,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.atom_a + self.atom_b + self.continuous_mass()
    }

    /// Non-negative weights of total mass one within `tol`.
    pub fn is_probability(&self, tol: f64) -> bool {
        let nonneg = match &self.density {
            Density::Uniform { height } => *height >= 0.0,
            Density::Histogram { heights } => heights.iter().all(|&h| h >= 0.0),
            _ => true,
        };
        nonneg && self.atom_a >= 0.0 && self.atom_b >= 0.0 && (self.total_mass() - 1.0).abs() <= tol
    }

    /// Density at an interior point `x`.
    pub fn density_at(&self, x: f64) -> f64 {
        if !(self.a < x && x < self.b) {
            return 0.0;
        }
        let w = self.width();
        match &self.density {
            Density::None => 0.0,
            Density::Uniform { height } => *height,
            Density::Beta { u, v } => {
                let t = (x - self.a) / w;
                let mass = 1.0 - self.atom_a - self.atom_b;
                mass * t.powf(u - 1.0) * (1.0 - t).powf(v - 1.0) / (beta(*u, *v) * w)
            }
            Density::Histogram { heights } => {
                let n = heights.len();
                let k = (((x - self.a) / w * n as f64) as usize).min(n - 1);
                heights[k]
            }
        }
    }

    /// `∫ φ dπ` over atoms and density; `kinks` are interior points where
    /// `φ` is not smooth.
    pub fn integrate<F: Fn(f64) -> f64>(&self, phi: F, kinks: &[f64]) -> f64 {
        let mut total = self.atom_a * phi(self.a);
        if self.b > self.a {
            total += self.atom_b * phi(self.b);
        }
        let w = self.width();
        if w <= 0.0 {
            return total;
        }
        let mut cuts: Vec<f64> = vec![0.0];
        cuts.extend(kinks.iter().map(|&k| (k - self.a) / w).filter(|&t| 0.0 < t && t < 1.0));
        cuts.push(1.0);
        match &self.density {
            Density::None => {}
            Density::Uniform { height } => {
                for c in cuts.windows(2) {
                    total += height * w * tanh_sinh(|t| phi(self.a + w * t), c[0], c[1]);
                }
            }
            Density::Beta { u, v } => {
                let norm = (1.0 - self.atom_a - self.atom_b) / beta(*u, *v);
                let (u, v) = (*u, *v);
                for c in cuts.windows(2) {
                    total += norm * beta_piece(|t| phi(self.a + w * t), u, v, c[0], c[1]);
                }
            }
            Density::Histogram { heights } => {
                let n = heights.len() as f64;
                for (k, h) in heights.iter().enumerate() {
                    let (lo, hi) = (k as f64 / n, (k + 1) as f64 / n);
                    let mut edges: Vec<f64> = vec![lo];
                    edges.extend(cuts.iter().copied().filter(|&t| lo < t && t < hi));
                    edges.push(hi);
                    for e in edges.windows(2) {
                        total += h * w * tanh_sinh(|t| phi(self.a + w * t), e[0], e[1]);
                    }
                }
            }
        }
        total
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|x| x, &[])
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.integrate(|x| (x - m) * (x - m), &[])
    }

    /// Masses of the density part over `n` equal bins of `[a, b]`.
    pub fn bin_masses(&self, n: usize) -> Vec<f64> {
        let w = self.width();
        let mut out = vec![0.0; n];
        if w <= 0.0 || n == 0 {
            return out;
        }
        match &self.density {
            Density::None => {}
            Density::Uniform { height } => out.iter_mut().for_each(|m| *m = height * w / n as f64),
            Density::Beta { u, v } => {
                let norm = (1.0 - self.atom_a - self.atom_b) / beta(*u, *v);
                let (u, v) = (*u, *v);
                for (k, m) in out.iter_mut().enumerate() {
                    let (lo, hi) = (k as f64 / n as f64, (k + 1) as f64 / n as f64);
                    *m = norm * beta_piece(|_| 1.0, u, v, lo, hi);
                }
            }
            Density::Histogram { heights } => {
                let m = heights.len();
                for (j, h) in heights.iter().enumerate() {
                    // spread each source bin over the target bins it overlaps
                    let (lo, hi) = (j as f64 / m as f64, (j + 1) as f64 / m as f64);
                    for (k, o) in out.iter_mut().enumerate() {
                        let (tlo, thi) = (k as f64 / n as f64, (k + 1) as f64 / n as f64);
                        let overlap = (hi.min(thi) - lo.max(tlo)).max(0.0);
                        *o += h * w * overlap;
                    }
                }
            }
        }
        out
    }

    /// Masses seen by an occupation estimator that counts `[a, a + tol]` and
    /// `[b − tol, b]` as the atoms: `(atom_a, atom_b, bins)` with the bins
    /// covering only the rest of `[a, b]`.
    pub fn masses_with_tolerance(&self, n: usize, tol: f64) -> (f64, f64, Vec<f64>) {
        let w = self.width();
        if tol <= 0.0 || w <= 0.0 {
            return (self.atom_a, self.atom_b, self.bin_masses(n));
        }
        let (lo, hi) = (self.a + tol, self.b - tol);
        let zone = |l: f64, h: f64| {
            let ind = move |x: f64| if l <= x && x <= h { 1.0 } else { 0.0 };
            self.integrate(ind, &[l, h])
        };
        let (atom_a, atom_b) = (zone(self.a, lo), zone(hi, self.b));
        let bins = (0..n)
            .map(|k| {
                let l = (self.a + w * k as f64 / n as f64).max(lo);
                let h = (self.a + w * (k + 1) as f64 / n as f64).min(hi);
                if h > l {
                    let ind = move |x: f64| if l < x && x < h { 1.0 } else { 0.0 };
                    self.integrate(ind, &[l, h])
                } else {
                    0.0
                }
            })
            .collect();
        (atom_a, atom_b, bins)
    }

    /// Total-variation distance on the partition {a}, {b} and `n` bins.
    pub fn binned_tv_distance(&self, other: &StationaryLaw, n: usize) -> f64 {
        let x = self.bin_masses(n);
        let y = other.bin_masses(n);
        let mut s = (self.atom_a - other.atom_a).abs() + (self.atom_b - other.atom_b).abs();
        for k in 0..n {
            s += (x[k] - y[k]).abs();
        }
        0.5 * s
    }

    /// The same law moved by `shift`.
    pub fn translated(&self, shift: f64) -> Self {
        StationaryLaw { a: self.a + shift, b: self.b + shift, ..self.clone() }
    }
}

/// `∫_lo^hi φ(t) t^{u−1} (1 − t)^{v−1} dt` for `0 ≤ lo < hi ≤ 1`, with both
/// singular factors evaluated from exact distances to the endpoints.
fn beta_piece<F: Fn(f64) -> f64>(phi: F, u: f64, v: f64, lo: f64, hi: f64) -> f64 {
    tanh_sinh_with_gaps(
        |t, from_lo, to_hi| {
            let left = if lo == 0.0 { from_lo } else { t };
            let right = if hi == 1.0 { to_hi } else { 1.0 - t };
            phi(t) * left.powf(u - 1.0) * right.powf(v - 1.0)
        },
        lo,
        hi,
    )
}

/// `p = atom_a f(a) + atom_b f(b) + ∫ f · density`.
pub fn mean_field_value(law: &StationaryLaw, f: &MeanFieldFn) -> MeanFieldValue {
    let kinks = f.kinks(law.a, law.b);
    MeanFieldValue { p: law.integrate(|x| f.eval(x), &kinks), f_tag: f.name() }
}

fn cp_rates(model: &LevyModel) -> Result<(f64, f64)> {
    match *model {
        LevyModel::CompoundPoissonTwoExp { alpha1, alpha2, .. } => Ok((alpha1, alpha2)),
        _ => Err(Error::WrongFamily("compound_poisson")),
    }
}

/// Stationary law of the compound Poisson model reflected at `a ≤ b`.
///
/// With `d = b − a` and `Z = d + 1/α1 + 1/α2`: an atom `(1/α2)/Z` at `a`, an
/// atom `(1/α1)/Z` at `b` and the uniform density `1/Z` in between. For
/// `a = b` it is the point mass at `a`. Requires the centred model.
pub fn cp_stationary(model: &LevyModel, a: f64, b: f64) -> Result<StationaryLaw> {
    let (alpha1, alpha2) = cp_rates(model)?;
    let bars = Barriers::new(a, b)?;
    ensure(
        model.mean().abs() <= 1e-12 * (1.0 + model.jump_intensity()),
        "model",
        "stationary closed form needs E X_1 = 0",
    )?;
    if bars.a == bars.b {
        return Ok(StationaryLaw::point_mass(a));
    }
    let z = bars.width() + 1.0 / alpha1 + 1.0 / alpha2;
    Ok(StationaryLaw { a, b, atom_a: (1.0 / alpha2) / z, atom_b: (1.0 / alpha1) / z, density: Density::Uniform { height: 1.0 / z } })
}

/// The published mixture, evaluated literally; see [`MeanFieldLaw::AsPrinted`].
pub fn cp_stationary_as_printed(model: &LevyModel, a: f64, b: f64) -> Result<StationaryLaw> {
    let (alpha1, alpha2) = cp_rates(model)?;
    let bars = Barriers::new(a, b)?;
    if bars.a == bars.b {
        return Ok(StationaryLaw::point_mass(a));
    }
    let z = b + 1.0 / alpha2 + 1.0 / alpha1;
    let zu = b + 1.0 / alpha2 + alpha1;
    Ok(StationaryLaw {
        a,
        b,
        atom_a: (1.0 / alpha2) / z,
        atom_b: (a + 1.0 / alpha2) / z,
        density: Density::Uniform { height: 1.0 / zu },
    })
}

/// Mean-field value `p^{a,b}` for the compound Poisson model under the
/// chosen law; `p^{a,a} = f(a)`.
pub fn cp_mean_field(model: &LevyModel, a: f64, b: f64, f: &MeanFieldFn, law: MeanFieldLaw) -> Result<MeanFieldValue> {
    let l = match law {
        MeanFieldLaw::TranslationInvariant => cp_stationary(model, a, b)?,
        MeanFieldLaw::AsPrinted => cp_stationary_as_printed(model, a, b)?,
    };
    Ok(mean_field_value(&l, f))
}

fn check_stable(alpha: f64, c_plus: f64, c_minus: f64) -> Result<()> {
    LevyModel::StrictlyStable { alpha, c_plus, c_minus }.validate()
}

/// Positivity parameter `ρ = 1/2 + (πα)⁻¹ arctan(β tan(πα/2))` with
/// `β = (c⁺ − c⁻)/(c⁺ + c⁻)`.
pub fn stable_rho(alpha: f64, c_plus: f64, c_minus: f64) -> Result<f64> {
    check_stable(alpha, c_plus, c_minus)?;
    let skew = (c_plus - c_minus) / (c_plus + c_minus);
    Ok(0.5 + (skew * (PI * alpha / 2.0).tan()).atan() / (PI * alpha))
}

/// `Beta(αρ, α(1 − ρ))` rescaled to `[0, d]`, without atoms.
pub fn stable_stationary(alpha: f64, c_plus: f64, c_minus: f64, d: f64) -> Result<StationaryLaw> {
    ensure(d > 0.0 && d.is_finite(), "d", "must be positive")?;
    let rho = stable_rho(alpha, c_plus, c_minus)?;
    Ok(StationaryLaw { a: 0.0, b: d, atom_a: 0.0, atom_b: 0.0, density: Density::Beta { u: alpha * rho, v: alpha * (1.0 - rho) } })
}

/// `−Γ(−α) cos(πα/2)`: the factor between jump-measure coefficients and
/// the coefficients of the characteristic exponent.
pub fn stable_measure_factor(alpha: f64) -> f64 {
    -gamma(-alpha) * (PI * alpha / 2.0).cos()
}

/// Long-run upper control rate `E_π D^{0,d}_1`, equal to `E_π D^{0,1}_1 · d^{1−α}`.
pub fn stable_loss_rate(alpha: f64, c_plus: f64, c_minus: f64, d: f64, which: LossRate) -> Result<f64> {
    ensure(d > 0.0 && d.is_finite(), "d", "must be positive")?;
    let rho = stable_rho(alpha, c_plus, c_minus)?;
    let (ar, ac) = (alpha * rho, alpha * (1.0 - rho));
    let unit = match which {
        LossRate::ModelConsistent => {
            c_plus * beta(ar, 1.0 - ar) / (beta(ar, ac) * alpha * (alpha - 1.0)) / stable_measure_factor(alpha)
        }
        LossRate::AsPrinted => {
            (c_minus * beta(2.0 - ar, ar) + c_plus * beta(2.0 - ac, ac)) / (beta(ar, ac) * alpha * (alpha - 1.0) * (2.0 - alpha))
        }
    };
    Ok(unit * d.powf(1.0 - alpha))
}

/// Long-run lower control rate `E_π U^{0,d}_1` under the model-consistent
/// normalisation.
pub fn stable_gain_rate(alpha: f64, c_plus: f64, c_minus: f64, d: f64) -> Result<f64> {
    ensure(d > 0.0 && d.is_finite(), "d", "must be positive")?;
    let rho = stable_rho(alpha, c_plus, c_minus)?;
    let (ar, ac) = (alpha * rho, alpha * (1.0 - rho));
    let unit = c_minus * beta(1.0 - ac, ac) / (beta(ar, ac) * alpha * (alpha - 1.0)) / stable_measure_factor(alpha);
    Ok(unit * d.powf(1.0 - alpha))
}

/// Batch-wise occupation statistics of one or more reflected paths.
///
/// Each batch of length `batch_len` contributes one sample of every
/// component (atom fractions, bin fractions, first two moments), so standard
/// errors come from the spread across batches.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationStats {
    pub a: f64,
    pub b: f64,
    pub batch_len: f64,
    pub atom_a: MeanVar,
    pub atom_b: MeanVar,
    pub bins: Vec<MeanVar>,
    pub first_moment: MeanVar,
    pub second_moment: MeanVar,
    pub batch_means: Vec<f64>,
    pub batch_second: Vec<f64>,
}

impl OccupationStats {
    pub fn new(a: f64, b: f64, n_bins: usize, batch_len: f64) -> Self {
        OccupationStats {
            a,
            b,
            batch_len,
            atom_a: MeanVar::new(),
            atom_b: MeanVar::new(),
            bins: vec![MeanVar::new(); n_bins],
            first_moment: MeanVar::new(),
            second_moment: MeanVar::new(),
            batch_means: Vec::new(),
            batch_second: Vec::new(),
        }
    }

    pub fn batches(&self) -> u64 {
        self.atom_a.count()
    }

    pub fn merge(&mut self, other: &OccupationStats) {
        self.atom_a.merge(&other.atom_a);
        self.atom_b.merge(&other.atom_b);
        for (x, y) in self.bins.iter_mut().zip(other.bins.iter()) {
            x.merge(y);
        }
        self.first_moment.merge(&other.first_moment);
        self.second_moment.merge(&other.second_moment);
        self.batch_means.extend_from_slice(&other.batch_means);
        self.batch_second.extend_from_slice(&other.batch_second);
    }

    /// Estimated law with a histogram density.
    pub fn to_law(&self) -> StationaryLaw {
        let w = self.b - self.a;
        if w <= 0.0 {
            return StationaryLaw::point_mass(self.a);
        }
        let n = self.bins.len() as f64;
        let heights = self.bins.iter().map(|m| m.mean() * n / w).collect();
        StationaryLaw { a: self.a, b: self.b, atom_a: self.atom_a.mean(), atom_b: self.atom_b.mean(), density: Density::Histogram { heights } }
    }

    /// Mean and standard error of the stationary variance, by the delta
    /// method on the two moment series.
    pub fn variance_estimate(&self) -> (f64, f64) {
        let m1 = self.first_moment.mean();
        let m2 = self.second_moment.mean();
        // linearisation of m2 − m1² evaluated batch by batch
        let lin: MeanVar = self
            .batch_second
            .iter()
            .zip(self.batch_means.iter())
            .map(|(s, m)| s - 2.0 * m1 * m)
            .collect();
        (m2 - m1 * m1, lin.std_err())
    }
}

struct OccupationRun {
    stats: OccupationStats,
    atom_tol: f64,
    in_batch: f64,
    t_atom_a: f64,
    t_atom_b: f64,
    t_bins: Vec<f64>,
    t_x: f64,
    t_x2: f64,
}

impl OccupationRun {
    fn hold(&mut self, x: f64, mut dur: f64) {
        while dur > 0.0 {
            let room = self.stats.batch_len - self.in_batch;
            let take = dur.min(room);
            self.accumulate(x, take);
            dur -= take;
            if take >= room {
                self.close_batch();
            } else {
                self.in_batch += take;
            }
        }
    }

    fn accumulate(&mut self, x: f64, dt: f64) {
        let (a, b) = (self.stats.a, self.stats.b);
        self.t_x += x * dt;
        self.t_x2 += x * x * dt;
        if x - a <= self.atom_tol {
            self.t_atom_a += dt;
        } else if b - x <= self.atom_tol {
            self.t_atom_b += dt;
        } else {
            let n = self.t_bins.len();
            let k = (((x - a) / (b - a) * n as f64) as usize).min(n - 1);
            self.t_bins[k] += dt;
        }
    }

    fn close_batch(&mut self) {
        let len = self.stats.batch_len;
        self.stats.atom_a.push(self.t_atom_a / len);
        self.stats.atom_b.push(self.t_atom_b / len);
        for (acc, t) in self.stats.bins.iter_mut().zip(self.t_bins.iter_mut()) {
            acc.push(*t / len);
            *t = 0.0;
        }
        self.stats.first_moment.push(self.t_x / len);
        self.stats.second_moment.push(self.t_x2 / len);
        self.stats.batch_means.push(self.t_x / len);
        self.stats.batch_second.push(self.t_x2 / len);
        self.t_atom_a = 0.0;
        self.t_atom_b = 0.0;
        self.t_x = 0.0;
        self.t_x2 = 0.0;
        self.in_batch = 0.0;
    }
}

/// Settings for [`occupation_run`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupationSettings {
    pub horizon: f64,
    pub burn_in: f64,
    pub n_bins: usize,
    pub n_batches: usize,
    /// Distance from a barrier below which time counts toward its atom.
    pub atom_tol: f64,
}

impl OccupationSettings {
    /// Atom tolerance `grid_step^{1/2} (b − a)` for gridded models and
    /// exact hits for compound Poisson.
    pub fn default_atom_tol(stream: &IncrementStream, barriers: &Barriers) -> f64 {
        if stream.is_exact() {
            0.0
        } else {
            stream.grid_step().sqrt() * barriers.width()
        }
    }
}

/// Time-occupation of one reflected path started at `x0`, after discarding
/// `burn_in` time units.
pub fn occupation_run<R: Rng + ?Sized>(
    stream: &IncrementStream,
    barriers: Barriers,
    x0: f64,
    settings: &OccupationSettings,
    rng: &mut R,
) -> Result<OccupationStats> {
    barriers.check_model(stream.model())?;
    ensure(settings.horizon > settings.burn_in && settings.burn_in >= 0.0, "horizon", "must exceed burn_in")?;
    ensure(settings.n_bins > 0, "n_bins", "must be positive")?;
    ensure(settings.n_batches > 0, "n_batches", "must be positive")?;
    let batch_len = (settings.horizon - settings.burn_in) / settings.n_batches as f64;
    let mut run = OccupationRun {
        stats: OccupationStats::new(barriers.a, barriers.b, settings.n_bins, batch_len),
        atom_tol: settings.atom_tol,
        in_batch: 0.0,
        t_atom_a: 0.0,
        t_atom_b: 0.0,
        t_bins: vec![0.0; settings.n_bins],
        t_x: 0.0,
        t_x2: 0.0,
    };
    let (mut refl, _) = Reflector::start(barriers, x0);
    let mut t = 0.0;
    while t < settings.horizon {
        let ev = stream.next(rng);
        let end = (t + ev.dt).min(settings.horizon);
        if end > settings.burn_in {
            run.hold(refl.x, end - t.max(settings.burn_in));
        }
        t = end;
        refl.step(ev.dx);
    }
    // rounding can leave the final batch a hair short
    if run.in_batch > 0.5 * batch_len {
        run.close_batch();
    }
    Ok(run.stats)
}

/// Occupation-measure estimate of the stationary law; fails when fewer
/// than `min_batches` batches were collected.
pub fn mc_stationary(stats: &OccupationStats, min_batches: u64) -> Result<StationaryLaw> {
    if stats.batches() < min_batches {
        return Err(Error::InsufficientSamples { got: stats.batches() as usize, needed: min_batches as usize });
    }
    Ok(stats.to_law())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cp() -> LevyModel {
        LevyModel::compound_poisson(1.5, 1.0, 3.0, 2.0).unwrap()
    }

    #[test]
    fn cp_law_hand_values() {
        let l = cp_stationary(&cp(), -1.0, 1.0).unwrap();
        assert!((l.atom_a - 0.5 / 3.5).abs() < 1e-15);
        assert!((l.atom_b - 1.0 / 3.5).abs() < 1e-15);
        assert!((l.continuous_mass() - 2.0 / 3.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_cp_law_is_point_mass() {
        let l = cp_stationary(&cp(), 0.0, 0.0).unwrap();
        assert_eq!(l, StationaryLaw::point_mass(0.0));
        let v = mean_field_value(&l, &MeanFieldFn::Square);
        assert_eq!(v.p, 0.0);
        let l = cp_stationary(&cp(), 2.0, 2.0).unwrap();
        assert_eq!(mean_field_value(&l, &MeanFieldFn::Square).p, 4.0);
    }

    #[test]
    fn symmetric_rates_give_equal_atoms() {
        let m = LevyModel::compound_poisson(2.0, 1.5, 2.0, 1.5).unwrap();
        let l = cp_stationary(&m, -0.3, 0.8).unwrap();
        assert_eq!(l.atom_a, l.atom_b);
    }

    #[test]
    fn cp_law_rejects_bad_input() {
        assert!(cp_stationary(&cp(), 1.0, 0.0).is_err());
        let drifting = LevyModel::compound_poisson(1.0, 1.0, 3.0, 2.0).unwrap();
        assert!(cp_stationary(&drifting, -1.0, 1.0).is_err());
        let stable = LevyModel::stable(1.5, 1.0, 1.0).unwrap();
        assert!(cp_stationary(&stable, -1.0, 1.0).is_err());
    }

    #[test]
    fn cp_mean_matches_hand_integral() {
        let (a, b) = (-1.0, 1.0);
        let l = cp_stationary(&cp(), a, b).unwrap();
        let z = 3.5;
        let expect = a * 0.5 / z + b * 1.0 / z + (b * b - a * a) / (2.0 * z);
        assert!((l.mean() - expect).abs() < 1e-13);
        assert!((mean_field_value(&l, &MeanFieldFn::Identity).p - expect).abs() < 1e-13);
    }

    #[test]
    fn printed_mixture_reproduces_its_mean_display() {
        let (a, b) = (-0.5, 0.8);
        let (a1, a2) = (1.0, 2.0);
        let l = cp_stationary_as_printed(&cp(), a, b).unwrap();
        let display = (a / a2) / (b + 1.0 / a2 + 1.0 / a1)
            + (b * b / 2.0 - a * a / 2.0) / (b + 1.0 / a2 + a1)
            + b * (a + 1.0 / a2) / (b + 1.0 / a2 + 1.0 / a1);
        assert!((l.mean() - display).abs() < 1e-13);
        assert!(!l.is_probability(1e-6));
    }

    #[test]
    fn rho_examples() {
        assert_eq!(stable_rho(1.5, 1.0, 1.0).unwrap(), 0.5);
        let expect = 0.5 + (1.0f64 / 3.0).atan() / (1.5 * PI);
        assert!((stable_rho(1.5, 1.0, 2.0).unwrap() - expect).abs() < 1e-15);
        assert!(stable_rho(2.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn beta_law_moments() {
        let (alpha, d) = (1.5, 2.0);
        let rho = stable_rho(alpha, 1.0, 2.0).unwrap();
        let l = stable_stationary(alpha, 1.0, 2.0, d).unwrap();
        assert!(l.is_probability(1e-12));
        assert!((l.mean() - d * rho).abs() < 1e-9, "{} {}", l.mean(), d * rho);
        let var = d * d * rho * (1.0 - rho) / (alpha + 1.0);
        assert!((l.variance() - var).abs() < 1e-9);
        let masses: f64 = l.bin_masses(20).iter().sum();
        assert!((masses - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tolerance_zones_partition_the_mass() {
        let l = stable_stationary(1.5, 1.0, 2.0, 1.0).unwrap();
        let (za, zb, bins) = l.masses_with_tolerance(10, 0.03);
        let total = za + zb + bins.iter().sum::<f64>();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
        let plain = l.bin_masses(10);
        assert!((za + bins[0] - plain[0]).abs() < 1e-9);
        assert!((zb + bins[9] - plain[9]).abs() < 1e-9);
        let cp = cp_stationary(&cp(), -1.0, 1.0).unwrap();
        let (a0, b0, _) = cp.masses_with_tolerance(10, 0.0);
        assert_eq!((a0, b0), (cp.atom_a, cp.atom_b));
    }

    #[test]
    fn symmetric_beta_density_is_symmetric() {
        let l = stable_stationary(1.5, 1.0, 1.0, 1.0).unwrap();
        for x in [0.05, 0.2, 0.37] {
            assert!((l.density_at(x) - l.density_at(1.0 - x)).abs() < 1e-12);
        }
        assert!(stable_stationary(1.5, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn loss_rate_scaling_and_balance() {
        for which in [LossRate::ModelConsistent, LossRate::AsPrinted] {
            let one = stable_loss_rate(1.5, 1.0, 2.0, 1.0, which).unwrap();
            let three = stable_loss_rate(1.5, 1.0, 2.0, 3.0, which).unwrap();
            assert!(one > 0.0);
            assert!((three - one * 3f64.powf(-0.5)).abs() < 1e-14);
        }
        for (cp_, cm) in [(1.0, 2.0), (2.0, 1.0), (1.0, 1.0), (0.3, 5.0)] {
            for alpha in [1.2, 1.5, 1.8] {
                let d = stable_loss_rate(alpha, cp_, cm, 1.3, LossRate::ModelConsistent).unwrap();
                let u = stable_gain_rate(alpha, cp_, cm, 1.3).unwrap();
                assert!((d - u).abs() < 1e-10 * d, "{alpha} {cp_} {cm}: {d} {u}");
            }
        }
    }

    #[test]
    fn measure_factor_is_positive_on_the_index_range() {
        for alpha in [1.01, 1.5, 1.99] {
            assert!(stable_measure_factor(alpha) > 0.0);
        }
    }

    #[test]
    fn degenerate_occupation_sits_at_the_barrier() {
        let stream = IncrementStream::new(cp(), 1.0).unwrap();
        let s = OccupationSettings { horizon: 200.0, burn_in: 0.0, n_bins: 4, n_batches: 10, atom_tol: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let st = occupation_run(&stream, Barriers::new(0.5, 0.5).unwrap(), 0.0, &s, &mut rng).unwrap();
        assert_eq!(st.batches(), 10);
        assert!((st.atom_a.mean() - 1.0).abs() < 1e-12);
        let law = mc_stationary(&st, 5).unwrap();
        assert_eq!(law, StationaryLaw::point_mass(0.5));
        assert!(mc_stationary(&st, 50).is_err());
    }

    #[test]
    fn occupation_fractions_sum_to_one() {
        let stream = IncrementStream::new(cp(), 1.0).unwrap();
        let s = OccupationSettings { horizon: 500.0, burn_in: 10.0, n_bins: 7, n_batches: 7, atom_tol: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let st = occupation_run(&stream, Barriers::new(-1.0, 1.0).unwrap(), 0.0, &s, &mut rng).unwrap();
        let law = st.to_law();
        assert!(law.is_probability(1e-9), "{}", law.total_mass());
    }

    proptest! {
        #[test]
        fn cp_law_is_translation_covariant(a in -5.0f64..5.0, w in 0.0f64..6.0) {
            let m = cp();
            let b = a + w;
            let l = cp_stationary(&m, a, b).unwrap();
            let base = cp_stationary(&m, 0.0, b - a).unwrap().translated(a);
            prop_assert_eq!(l.atom_a, base.atom_a);
            prop_assert_eq!(l.atom_b, base.atom_b);
            prop_assert_eq!(&l.density, &base.density);
            prop_assert!(l.is_probability(1e-10));
        }

        #[test]
        fn constant_f_integrates_to_itself(a in -3.0f64..0.0, w in 0.0f64..4.0, kappa in -10.0f64..10.0, alpha in 1.05f64..1.95) {
            let f = MeanFieldFn::tabulated(alloc::vec![0.0], alloc::vec![kappa]).unwrap();
            let l = cp_stationary(&cp(), a, a + w).unwrap();
            prop_assert!((mean_field_value(&l, &f).p - kappa).abs() < 1e-10 * (1.0 + kappa.abs()));
            if w > 0.0 {
                let s = stable_stationary(alpha, 1.0, 2.0, w).unwrap();
                prop_assert!((mean_field_value(&s, &f).p - kappa).abs() < 1e-7 * (1.0 + kappa.abs()));
            }
        }

        #[test]
        fn mean_field_value_stays_in_range(a in -3.0f64..0.0, w in 0.0f64..4.0) {
            let l = cp_stationary(&cp(), a, a + w).unwrap();
            let p = mean_field_value(&l, &MeanFieldFn::Identity).p;
            prop_assert!(a - 1e-12 <= p && p <= a + w + 1e-12);
            let p2 = mean_field_value(&l, &MeanFieldFn::Abs).p;
            prop_assert!(p2 >= 0.0 && p2 <= a.abs().max((a + w).abs()) + 1e-12);
        }

        #[test]
        fn rho_in_unit_interval(alpha in 1.01f64..1.99, cp_ in 0.01f64..10.0, cm in 0.01f64..10.0) {
            let r = stable_rho(alpha, cp_, cm).unwrap();
            prop_assert!(r > 0.0 && r < 1.0);
        }
    }
}
