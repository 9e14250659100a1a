//! Statistical properties of the parallel Monte Carlo drivers, checked
//! against exact identities, closed forms or perturbation arguments.

use levy_mfg::drivers::{discounted_cost_mc, ergodic_cost_mc, saddle_check};
use levy_mfg::Parallel;
use levy_mfg_core::cost::{CostSpec, GFunction, HFunction, MeanFieldFn};
use levy_mfg_core::dynkin::{cp_best_response, cp_threshold_constants, ThresholdOrientation};
use levy_mfg_core::ergodic::{stable_ergodic_equilibrium, ErgodicMethod};
use levy_mfg_core::mfg::{discounted_cost_path, init_grid, multi_start, BestResponseMap, Conventions, SolverSettings};
use levy_mfg_core::nplayer::{empirical_mean_field_excluding, player_tail, PlayerSettings};
use levy_mfg_core::path::IncrementStream;
use levy_mfg_core::stats::MeanVar;
use levy_mfg_core::{Barriers, GameSpec, LevyModel, LossRate, RootQuadratic};

fn cp() -> LevyModel {
    LevyModel::centered_compound_poisson(1.0, 3.0, 2.0).unwrap()
}

fn exact(model: LevyModel) -> IncrementStream {
    IncrementStream::new(model, 1e-3).unwrap()
}

fn within(x: f64, y: f64, se: f64, z: f64) -> bool {
    (x - y).abs() <= z * se
}

#[test]
fn starting_above_the_band_costs_exactly_the_initial_push() {
    let s = exact(cp());
    let cost = CostSpec::quadratic(HFunction::Constant { value: 1.0 }, MeanFieldFn::Identity, 0.7).unwrap();
    let bars = Barriers::new(-1.0, 1.0).unwrap();
    let par = Parallel::new(21, 3);
    let (inside, _) = discounted_cost_mc(&par, &s, &cost, 0.1, bars, 0.0, 1.0, 500, 150.0).unwrap();
    let (above, _) = discounted_cost_mc(&par, &s, &cost, 0.1, bars, 0.0, 2.0, 500, 150.0).unwrap();
    assert!((above.mean() - inside.mean() - 0.7).abs() < 1e-9);
    assert!((above.variance() - inside.variance()).abs() < 1e-9);
}

#[test]
fn equilibrium_band_beats_perturbed_bands_at_frozen_p() {
    let model = cp();
    let cost = CostSpec::quadratic(HFunction::ExpAbsCos { offset: 0.01 }, MeanFieldFn::Identity, 0.5).unwrap();
    let map = BestResponseMap::new(model, cost.clone(), 0.1, Conventions::corrected()).unwrap();
    let ms = multi_start(&map, &init_grid(-8.0, 0.0, 0.0, 8.0, 3), &SolverSettings::default()).unwrap();
    let e = &ms.equilibria[0];
    let base = Barriers::new(e.a_star, e.b_star).unwrap();
    let s = exact(model);
    let par = Parallel::new(5, 4);
    let j = |b: Barriers, rng: &mut rand_chacha::ChaCha8Rng| discounted_cost_path(&s, &cost, 0.1, b, e.p_star, 0.0, 150.0, rng);
    for (da, db) in [(-0.25, 0.0), (0.25, 0.0), (0.0, -0.25), (0.0, 0.25)] {
        let alt = Barriers::new(base.a + da, base.b + db).unwrap();
        // common random numbers: both bands see the same increments
        let diff = par.mean(4000, |rng| {
            let mut twin = rng.clone();
            j(alt, rng) - j(base, &mut twin)
        });
        assert!(diff.mean() >= -3.0 * diff.std_err(), "perturbation ({da}, {db}): {} +- {}", diff.mean(), diff.std_err());
    }
}

#[test]
fn ergodic_cost_forgets_the_starting_point() {
    let s = exact(cp());
    let cost = CostSpec::quadratic(HFunction::Constant { value: 1.0 }, MeanFieldFn::Identity, 1.0).unwrap();
    let bars = Barriers::new(-1.0, 1.0).unwrap();
    let from_a = ergodic_cost_mc(&Parallel::new(1, 2), &s, &cost, bars, 0.0, 20_000.0, -1.0, 0.0, 20).unwrap();
    let from_far = ergodic_cost_mc(&Parallel::new(2, 2), &s, &cost, bars, 0.0, 20_000.0, 6.0, 0.0, 20).unwrap();
    let (x, y) = (from_a.estimate().unwrap(), from_far.estimate().unwrap());
    assert_eq!(from_a.method, ErgodicMethod::Regenerative);
    assert!(within(x.ratio, y.ratio, (x.stderr.powi(2) + y.stderr.powi(2)).sqrt(), 3.0));
}

#[test]
fn regenerative_error_shrinks_like_root_horizon() {
    let s = exact(cp());
    let cost = CostSpec::quadratic(HFunction::Constant { value: 1.0 }, MeanFieldFn::Identity, 1.0).unwrap();
    let bars = Barriers::new(-1.0, 1.0).unwrap();
    let short = ergodic_cost_mc(&Parallel::new(3, 1), &s, &cost, bars, 0.0, 10_000.0, 0.0, 0.0, 20).unwrap().estimate().unwrap();
    let long = ergodic_cost_mc(&Parallel::new(3, 1), &s, &cost, bars, 0.0, 40_000.0, 0.0, 0.0, 20).unwrap().estimate().unwrap();
    let ratio = short.stderr / long.stderr;
    assert!((1.6..2.4).contains(&ratio), "stderr ratio {ratio}");
    assert!(within(short.ratio, long.ratio, (short.stderr.powi(2) + long.stderr.powi(2)).sqrt(), 3.0));
}

#[test]
fn stable_equilibrium_cost_matches_long_run_average() {
    let e = stable_ergodic_equilibrium(1.5, 1.0, 2.0, 0.5, LossRate::ModelConsistent).unwrap();
    let model = LevyModel::stable(1.5, 1.0, 2.0).unwrap();
    let cost = CostSpec::quadratic(HFunction::OnePlusAbs, MeanFieldFn::Square, 0.5).unwrap();
    let s = IncrementStream::new(model, 1e-3).unwrap();
    let bars = Barriers::new(e.a_star, e.b_star).unwrap();
    let st = ergodic_cost_mc(&Parallel::new(8, 4), &s, &cost, bars, e.p_star, 2000.0, 0.0, 10.0, 40).unwrap();
    assert_eq!(st.method, ErgodicMethod::BatchMeans);
    let est = st.estimate().unwrap();
    assert!(within(est.ratio, e.j_value, est.stderr, 3.0), "{} +- {} vs {}", est.ratio, est.stderr, e.j_value);
    let control = st.component(&st.lower).ratio + st.component(&st.upper).ratio;
    let closed = 2.0 * 0.5 * e.loss_rate_1 * e.d_star.powf(-0.5);
    assert!((control - closed).abs() < 0.1 * closed, "{control} vs {closed}");
}

#[test]
fn saddle_check_detects_a_wrong_lower_threshold() {
    let model = cp();
    let cost = CostSpec::quadratic(HFunction::Constant { value: 0.5 }, MeanFieldFn::Identity, 0.5).unwrap();
    let spec = GameSpec::new(model, 0.1, 0.0, cost).unwrap();
    let consts = cp_threshold_constants(&model, 0.1, RootQuadratic::Exact).unwrap();
    let sol = cp_best_response(&consts, spec.delta().unwrap(), ThresholdOrientation::Reflected).unwrap();
    let s = exact(model);
    let par = Parallel::new(13, 4);
    let x = 0.5 * (sol.a_star + sol.b_star);
    let good = saddle_check(&par, &s, &spec, x, sol.a_star, sol.b_star, 0.25, 20_000);
    assert!(good.holds(3.0));
    let bad = saddle_check(&par, &s, &spec, x, sol.a_star - 1.0, sol.b_star, 0.25, 20_000);
    assert!(!bad.holds(3.0));
}

#[test]
fn empirical_mean_field_variance_scales_inversely_with_population() {
    let s = exact(cp());
    let bars = Barriers::new(-1.0, 1.0).unwrap();
    let settings = PlayerSettings { x0: 0.0, horizon: 40.0, burn_in: 10.0 };
    let f = MeanFieldFn::Identity;
    let g = GFunction::Quadratic { k: 1.0 };
    let law_mean = levy_mfg_core::stationary::cp_stationary(&cp(), -1.0, 1.0).unwrap().mean();
    let sizes = [5usize, 17, 65];
    let mut points = Vec::new();
    for (k, &n) in sizes.iter().enumerate() {
        let par = Parallel::new(30 + k as u64, 4);
        let parts = par.map(600, |_, len, rng| {
            let mut mv = MeanVar::new();
            for _ in 0..len {
                let tails: Vec<_> = (0..n).map(|_| player_tail(&s, bars, &f, &g, &settings, rng)).collect();
                mv.push(empirical_mean_field_excluding(&tails, 0));
            }
            mv
        });
        let mut mv = MeanVar::new();
        for p in &parts {
            mv.merge(p);
        }
        // the law of large numbers centres on the stationary mean
        assert!(within(mv.mean(), law_mean, mv.std_err(), 4.0));
        points.push((((n - 1) as f64).ln(), mv.variance().ln()));
    }
    let (x0, y0) = points[0];
    let (x1, y1) = points[2];
    let slope = (y1 - y0) / (x1 - x0);
    assert!((slope + 1.0).abs() < 0.1, "slope {slope}");
}
