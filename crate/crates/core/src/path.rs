//! Path simulation and the two-sided Skorokhod map.
//!
//! Monte Carlo kernels stream increments through [`IncrementStream`] and
//! [`Reflector`] instead of materialising paths; [`simulate_path`] and
//! [`reflect`] build the same objects for inspection and export.

use alloc::vec::Vec;
use rand::Rng;

use crate::error::{ensure, Error, Result};
use crate::levy::{exp_draw, LevyModel};

/// Reflection barriers `a ≤ b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barriers {
    pub a: f64,
    pub b: f64,
}

impl Barriers {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        ensure(a.is_finite() && b.is_finite(), "barriers", "must be finite")?;
        if a > b {
            return Err(Error::BarrierOrder { a, b });
        }
        Ok(Barriers { a, b })
    }

    /// Barriers admissible for `model`: `a = b` only with bounded variation.
    pub fn for_model(a: f64, b: f64, model: &LevyModel) -> Result<Self> {
        let barriers = Self::new(a, b)?;
        barriers.check_model(model)?;
        Ok(barriers)
    }

    pub fn check_model(&self, model: &LevyModel) -> Result<()> {
        if self.a == self.b && !model.has_bounded_variation() {
            return Err(Error::DegenerateUnboundedVariation);
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, x: f64) -> bool {
        self.a <= x && x <= self.b
    }
}

/// One step of the push-after-increment Skorokhod recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reflector {
    pub barriers: Barriers,
    /// Current reflected position.
    pub x: f64,
}

/// Control increments produced by one reflection step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Push {
    pub du: f64,
    pub dd: f64,
}

impl Reflector {
    /// Starts at `x0`, applying the initial jump `(a − x0)⁺` or `(x0 − b)⁺`.
    pub fn start(barriers: Barriers, x0: f64) -> (Self, Push) {
        let mut r = Reflector { barriers, x: x0 };
        let push = r.project();
        (r, push)
    }

    #[inline]
    pub fn step(&mut self, dx: f64) -> Push {
        self.x += dx;
        self.project()
    }

    #[inline]
    fn project(&mut self) -> Push {
        let Barriers { a, b } = self.barriers;
        if self.x < a {
            let du = a - self.x;
            self.x = a;
            Push { du, dd: 0.0 }
        } else if self.x > b {
            let dd = self.x - b;
            self.x = b;
            Push { du: 0.0, dd }
        } else {
            Push::default()
        }
    }
}

/// Source of free increments: exact jump epochs for compound Poisson,
/// a fixed grid otherwise.
#[derive(Debug, Clone, Copy)]
pub struct IncrementStream {
    model: LevyModel,
    grid_step: f64,
}

/// One event of an [`IncrementStream`]: the process moves by `dx` after
/// waiting `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub dt: f64,
    pub dx: f64,
}

impl IncrementStream {
    pub fn new(model: LevyModel, grid_step: f64) -> Result<Self> {
        model.validate()?;
        ensure(grid_step > 0.0 && grid_step.is_finite(), "grid_step", "must be positive")?;
        Ok(IncrementStream { model, grid_step })
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    /// Whether events are exact jumps (piecewise-constant paths).
    pub fn is_exact(&self) -> bool {
        matches!(self.model, LevyModel::CompoundPoissonTwoExp { .. })
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    #[inline]
    pub fn next<R: Rng + ?Sized>(&self, rng: &mut R) -> Event {
        match self.model {
            LevyModel::CompoundPoissonTwoExp { lambda1, alpha1, lambda2, alpha2 } => {
                let total = lambda1 + lambda2;
                let dt = exp_draw(total, rng);
                let up = rng.random::<f64>() * total < lambda2;
                let dx = if up { exp_draw(alpha2, rng) } else { -exp_draw(alpha1, rng) };
                Event { dt, dx }
            }
            _ => {
                let dx = self
                    .model
                    .sample_increment(self.grid_step, rng)
                    .unwrap_or(0.0);
                Event { dt: self.grid_step, dx }
            }
        }
    }
}

/// A simulated free path on an increasing time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Exact jump epochs (compound Poisson only).
    pub jump_times: Vec<f64>,
    pub jump_sizes: Vec<f64>,
    pub bounded_variation: bool,
}

impl SamplePath {
    pub fn x0(&self) -> f64 {
        self.values[0]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Simulates `X` on `[0, horizon]` from `x0`.
///
/// Compound Poisson paths are exact: the grid is merged with every jump
/// epoch and values are càdlàg. Other models are sampled on the grid. Fails
/// with [`Error::ResourceLimit`] when the expected number of points exceeds
/// `max_points`.
pub fn simulate_path<R: Rng + ?Sized>(
    model: &LevyModel,
    x0: f64,
    horizon: f64,
    grid_step: f64,
    max_points: usize,
    rng: &mut R,
) -> Result<SamplePath> {
    ensure(x0.is_finite(), "x0", "must be finite")?;
    ensure(horizon > 0.0 && horizon.is_finite(), "horizon", "must be positive")?;
    let stream = IncrementStream::new(*model, grid_step)?;
    let expected = horizon / grid_step + model.jump_intensity() * horizon;
    if expected > max_points as f64 {
        return Err(Error::ResourceLimit { expected, cap: max_points });
    }
    let n_grid = libm::ceil(horizon / grid_step) as usize;
    let grid_time = |k: usize| if k >= n_grid { horizon } else { k as f64 * grid_step };

    let mut path = SamplePath {
        times: Vec::with_capacity(expected as usize + 2),
        values: Vec::with_capacity(expected as usize + 2),
        jump_times: Vec::new(),
        jump_sizes: Vec::new(),
        bounded_variation: model.has_bounded_variation(),
    };
    path.times.push(0.0);
    path.values.push(x0);
    let mut x = x0;
    if stream.is_exact() {
        let mut next_grid = 1;
        let mut t = 0.0;
        loop {
            let ev = stream.next(rng);
            let tj = t + ev.dt;
            while next_grid <= n_grid && grid_time(next_grid) < tj.min(horizon) {
                path.times.push(grid_time(next_grid));
                path.values.push(x);
                next_grid += 1;
            }
            if tj >= horizon {
                break;
            }
            x += ev.dx;
            t = tj;
            path.times.push(t);
            path.values.push(x);
            path.jump_times.push(t);
            path.jump_sizes.push(ev.dx);
        }
        if *path.times.last().unwrap_or(&0.0) < horizon {
            path.times.push(horizon);
            path.values.push(x);
        }
    } else {
        for k in 1..=n_grid {
            let dt = grid_time(k) - grid_time(k - 1);
            if dt <= 0.0 {
                continue;
            }
            x += model.sample_increment(dt, rng)?;
            path.times.push(grid_time(k));
            path.values.push(x);
        }
    }
    Ok(path)
}

/// A reflected path `X^{a,b} = X + U − D` on the grid of its base path.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectedPath {
    pub base: SamplePath,
    pub barriers: Barriers,
    pub x_reflected: Vec<f64>,
    pub u: Vec<f64>,
    pub d: Vec<f64>,
    pub u0: f64,
    pub d0: f64,
}

/// Applies the two-sided Skorokhod map to `path` point by point.
///
/// For `a = b` the reflected path is constant and `u`, `d` collect the
/// negative and positive parts of every increment.
pub fn reflect(path: &SamplePath, barriers: Barriers) -> Result<ReflectedPath> {
    if barriers.a == barriers.b && !path.bounded_variation {
        return Err(Error::DegenerateUnboundedVariation);
    }
    if path.is_empty() {
        return Err(Error::InvalidParameter { name: "path", reason: "must contain at least one point" });
    }
    let n = path.len();
    let mut x_reflected = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let (mut refl, push0) = Reflector::start(barriers, path.values[0]);
    let (mut cu, mut cd) = (push0.du, push0.dd);
    x_reflected.push(refl.x);
    u.push(cu);
    d.push(cd);
    for k in 1..n {
        let push = refl.step(path.values[k] - path.values[k - 1]);
        cu += push.du;
        cd += push.dd;
        // keep x = X + U − D exact in floating point at the barriers
        let x = if push.du > 0.0 || push.dd > 0.0 {
            refl.x
        } else {
            (path.values[k] + cu - cd).clamp(barriers.a, barriers.b)
        };
        refl.x = x;
        x_reflected.push(x);
        u.push(cu);
        d.push(cd);
    }
    Ok(ReflectedPath { base: path.clone(), barriers, x_reflected, u, d, u0: push0.du, d0: push0.dd })
}

/// Discrete complementarity sums `Σ (x − a)Δu`, `Σ (b − x)Δd` and the
/// total variation `u_T + d_T` they should be compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complementarity {
    pub lower: f64,
    pub upper: f64,
    pub total_variation: f64,
}

impl ReflectedPath {
    pub fn complementarity(&self) -> Complementarity {
        let Barriers { a, b } = self.barriers;
        let mut lower = (self.x_reflected[0] - a) * self.u[0];
        let mut upper = (b - self.x_reflected[0]) * self.d[0];
        for k in 1..self.x_reflected.len() {
            lower += (self.x_reflected[k] - a) * (self.u[k] - self.u[k - 1]);
            upper += (b - self.x_reflected[k]) * (self.d[k] - self.d[k - 1]);
        }
        let last = self.u.len() - 1;
        Complementarity { lower: lower.abs(), upper: upper.abs(), total_variation: self.u[last] + self.d[last] }
    }

    /// Largest `|x_reflected − (x + u − d)|` over the grid.
    pub fn identity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.x_reflected.len() {
            let e = (self.x_reflected[k] - (self.base.values[k] + self.u[k] - self.d[k])).abs();
            worst = worst.max(e);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn steps(values: &[f64]) -> SamplePath {
        SamplePath {
            times: (0..values.len()).map(|k| k as f64).collect(),
            values: values.to_vec(),
            jump_times: vec![],
            jump_sizes: vec![],
            bounded_variation: true,
        }
    }

    fn cp() -> LevyModel {
        LevyModel::compound_poisson(1.5, 1.0, 3.0, 2.0).unwrap()
    }

    #[test]
    fn hand_stepped_recursion() {
        // free path 0 → 3 → −7: the second move is −10 from the upper barrier
        let r = reflect(&steps(&[0.0, 3.0, -7.0]), Barriers::new(-1.0, 1.0).unwrap()).unwrap();
        assert_eq!(r.x_reflected, vec![0.0, 1.0, -1.0]);
        assert_eq!(r.u, vec![0.0, 0.0, 8.0]);
        assert_eq!(r.d, vec![0.0, 2.0, 2.0]);
    }

    #[test]
    fn constant_path_inside_band_is_untouched() {
        let r = reflect(&steps(&[0.3, 0.3, 0.3]), Barriers::new(-1.0, 1.0).unwrap()).unwrap();
        assert_eq!(r.x_reflected, vec![0.3; 3]);
        assert_eq!(r.u, vec![0.0; 3]);
        assert_eq!(r.d, vec![0.0; 3]);
    }

    #[test]
    fn initial_jump_above_upper_barrier() {
        let r = reflect(&steps(&[2.0, 2.0]), Barriers::new(-1.0, 1.0).unwrap()).unwrap();
        assert_eq!(r.d0, 1.0);
        assert_eq!(r.u0, 0.0);
        assert_eq!(r.x_reflected[0], 1.0);
    }

    #[test]
    fn single_up_jump_overshoot() {
        let r = reflect(&steps(&[0.0, 5.0]), Barriers::new(-1.0, 1.0).unwrap()).unwrap();
        assert_eq!(r.d[1] - r.d[0], 4.0);
    }

    #[test]
    fn degenerate_band_splits_increments() {
        let r = reflect(&steps(&[0.0, 2.0, -1.0, -0.5]), Barriers::new(0.0, 0.0).unwrap()).unwrap();
        assert_eq!(r.x_reflected, vec![0.0; 4]);
        assert_eq!(r.u, vec![0.0, 0.0, 3.0, 3.0]);
        assert_eq!(r.d, vec![0.0, 2.0, 2.0, 2.5]);
    }

    #[test]
    fn degenerate_band_rejected_for_unbounded_variation() {
        let stable = LevyModel::stable(1.5, 1.0, 2.0).unwrap();
        assert!(Barriers::for_model(0.0, 0.0, &stable).is_err());
        assert!(Barriers::new(1.0, 0.0).is_err());
        let mut p = steps(&[0.0, 1.0]);
        p.bounded_variation = false;
        assert!(reflect(&p, Barriers::new(0.0, 0.0).unwrap()).is_err());
    }

    #[test]
    fn brownian_without_noise_is_constant() {
        let m = LevyModel::brownian(0.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = simulate_path(&m, 0.7, 5.0, 0.5, 1000, &mut rng).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.7));
        assert_eq!(p.times.len(), 11);
    }

    #[test]
    fn compound_poisson_path_is_exact_and_ordered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = simulate_path(&cp(), 0.0, 10.0, 1.0, 10_000, &mut rng).unwrap();
        assert!(p.times.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(p.times[0], 0.0);
        assert_eq!(*p.times.last().unwrap(), 10.0);
        assert!(!p.jump_times.is_empty());
        let total: f64 = p.jump_sizes.iter().sum();
        assert!((p.values.last().unwrap() - total).abs() < 1e-12);
    }

    #[test]
    fn resource_cap_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = simulate_path(&cp(), 0.0, 1e6, 1.0, 1000, &mut rng).unwrap_err();
        assert!(matches!(err, Error::ResourceLimit { .. }));
    }

    proptest! {
        #[test]
        fn reflection_invariants(seed in 0u64..500, a in -3.0f64..0.0, w in 0.0f64..4.0, x0 in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = simulate_path(&cp(), x0, 20.0, 1.0, 100_000, &mut rng).unwrap();
            let b = a + w;
            let bars = Barriers::new(a, b).unwrap();
            let r = reflect(&p, bars).unwrap();
            prop_assert!(r.x_reflected.iter().all(|&x| bars.contains(x)));
            prop_assert!(r.u.windows(2).all(|s| s[1] >= s[0]));
            prop_assert!(r.d.windows(2).all(|s| s[1] >= s[0]));
            prop_assert_eq!(r.u[0], (a - x0).max(0.0));
            prop_assert_eq!(r.d[0], (x0 - b).max(0.0));
            prop_assert!(r.identity_error() <= 1e-12 * (1.0 + r.u.last().unwrap() + r.d.last().unwrap()));
            let c = r.complementarity();
            let tol = 1e-9 * w.max(1e-300) * c.total_variation.max(1.0);
            prop_assert!(c.lower <= tol && c.upper <= tol);
        }

        #[test]
        fn widening_never_adds_control(seed in 0u64..200, w in 0.0f64..3.0, extra in 0.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = simulate_path(&cp(), 0.0, 20.0, 1.0, 100_000, &mut rng).unwrap();
            let narrow = reflect(&p, Barriers::new(-w / 2.0, w / 2.0).unwrap()).unwrap();
            let wide = reflect(&p, Barriers::new(-w / 2.0 - extra, w / 2.0 + extra).unwrap()).unwrap();
            let n = p.len() - 1;
            prop_assert!(wide.u[n] + wide.d[n] <= narrow.u[n] + narrow.d[n] + 1e-9);
        }
    }
}
