//! Subcommands. Each takes a validated configuration, writes its artifacts
//! and returns the enveloped JSON result.

use levy_mfg_core::cost::{GFunction, HFunction, MeanFieldFn};
use levy_mfg_core::dynkin::{cp_best_response, cp_threshold_constants};
use levy_mfg_core::ergodic::stable_ergodic_equilibrium;
use levy_mfg_core::mfg::{collect_equilibria, failed_run, find_equilibrium, init_grid, BestResponseMap, MultiStart};
use levy_mfg_core::nplayer::{deviation_grid, hoeffding_r, GapMode, HoeffdingExponent, NashGapReport, PlayerSettings};
use levy_mfg_core::path::{reflect, simulate_path, IncrementStream};
use levy_mfg_core::stationary::{cp_stationary, cp_stationary_as_printed, stable_stationary, OccupationSettings};
use levy_mfg_core::stats::MeanVar;
use levy_mfg_core::{Barriers, GameSpec, LevyModel, MeanFieldLaw, StationaryLaw};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::drivers::{abelian_check, ergodic_cost_mc, mc_game_value, mc_threshold_search, nash_gap_mc, occupation_mc, saddle_check, AbelianSettings, Parallel};
use crate::error::CliError;
use crate::output::{fmt, OutputWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    SolveDiscounted,
    SolveErgodic,
    BestResponse,
    Simulate,
    Stationary,
    Abelian,
    NplayerCheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SolveDiscounted => "solve-discounted",
            Command::SolveErgodic => "solve-ergodic",
            Command::BestResponse => "best-response",
            Command::Simulate => "simulate",
            Command::Stationary => "stationary",
            Command::Abelian => "abelian",
            Command::NplayerCheck => "nplayer-check",
        }
    }
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Value, CliError> {
    let out = OutputWriter::new(cfg, cmd.name())?;
    match cmd {
        Command::SolveDiscounted => solve_discounted(cfg, &out),
        Command::SolveErgodic => solve_ergodic(cfg, &out),
        Command::BestResponse => best_response(cfg, &out),
        Command::Simulate => simulate(cfg, &out),
        Command::Stationary => stationary(cfg, &out),
        Command::Abelian => abelian(cfg, &out),
        Command::NplayerCheck => nplayer_check(cfg, &out),
    }
}

fn parallel(cfg: &RunConfig) -> Parallel {
    Parallel::new(cfg.mc.seed, cfg.mc.workers)
}

fn stream(cfg: &RunConfig, model: LevyModel) -> Result<IncrementStream, CliError> {
    Ok(IncrementStream::new(model, cfg.mc.grid_step)?)
}

/// Multi-start over the configured grid, parallel across starts.
pub fn multi_start_parallel(cfg: &RunConfig) -> Result<(BestResponseMap, MultiStart), CliError> {
    let map = BestResponseMap::new(cfg.levy_model()?, cfg.cost_spec()?, cfg.solver.epsilon, cfg.conventions()?)?;
    let settings = cfg.solver_settings()?;
    let g = &cfg.solver.init_grid;
    let grid = init_grid(g.a[0], g.a[1], g.b[0], g.b[1], g.n);
    let runs = grid.par_iter().map(|&init| find_equilibrium(&map, init, &settings).unwrap_or_else(|_| failed_run(&map, init))).collect();
    let ms = collect_equilibria(&map, runs)?;
    Ok((map, ms))
}

fn solve_discounted(cfg: &RunConfig, out: &OutputWriter) -> Result<Value, CliError> {
    let (map, ms) = multi_start_parallel(cfg)?;
    let mut rows = Vec::new();
    for (k, e) in ms.equilibria.iter().enumerate() {
        for (it, p) in e.trace.iter().enumerate() {
            rows.push(vec![k.to_string(), it.to_string(), fmt(p[0]), fmt(p[1])]);
        }
    }
    let trace = out.csv("solve_discounted_trace.csv", &["equilibrium", "iteration", "a", "b"], rows)?;
    let eq: Vec<Value> = ms
        .equilibria
        .iter()
        .map(|e| {
            json!({
                "a": e.a_star, "b": e.b_star, "p": e.p_star,
                "residual": e.fixed_point_residual, "iterations": e.iterations,
                "method": format!("{:?}", e.method), "init": e.init,
            })
        })
        .collect();
    let result = json!({
        "epsilon": map.eps,
        "conventions": format!("{:?}", map.conventions),
        "equilibria": eq,
        "failed_starts": ms.failures.len(),
        "trace_csv_path": trace.map(|p| p.display().to_string()),
    });
    let v = out.json("solve_discounted.json", result)?;
    if ms.equilibria.is_empty() {
        return Err(CliError::NonConvergence(format!("no start out of {} converged", ms.failures.len())));
    }
    Ok(v)
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn solve_ergodic(cfg: &RunConfig, out: &OutputWriter) -> Result<Value, CliError> {
    let model = cfg.levy_model()?;
    let LevyModel::StrictlyStable { alpha, c_plus, c_minus } = model else {
        return Err(CliError::Config { field: "model.family".into(), message: "solve-ergodic needs the stable family".into() });
    };
    let cost = cfg.cost_spec()?;
    let in_class = cost.g == GFunction::Quadratic { k: 1.0 } && cost.h == HFunction::OnePlusAbs && cost.f == MeanFieldFn::Square && cost.q_u == cost.q_d;
    if !in_class {
        return Err(CliError::Config {
            field: "cost".into(),
            message: "solve-ergodic supports g = quadratic (k = 1), h = one_plus_abs, f = square, q_u = q_d".into(),
        });
    }
    let q = cost.q_u;
    let which = cfg.loss_rate()?;
    let e = stable_ergodic_equilibrium(alpha, c_plus, c_minus, q, which)?;
    let mut result = json!({
        "a_star": e.a_star, "b_star": e.b_star,
        "rounded": [round3(e.a_star), round3(e.b_star)],
        "d_star": e.d_star, "rho": e.rho, "p_star": e.p_star,
        "loss_rate": format!("{:?}", e.loss_rate), "loss_rate_1": e.loss_rate_1,
        "j_value": e.j_value, "residual": e.residual,
        "printed_radical_b": if e.printed_radical_b.is_finite() { json!(e.printed_radical_b) } else { Value::Null },
    });
    if cfg.mc.verify {
        let s = stream(cfg, model)?;
        let bars = Barriers::for_model(e.a_star, e.b_star, &model)?;
        let st = ergodic_cost_mc(&parallel(cfg), &s, &cost, bars, e.p_star, cfg.mc.horizon, 0.0, cfg.mc.burn_in, cfg.mc.n_batches)?;
        let est = st.estimate()?;
        let running = st.component(&st.running);
        let control = e.j_value - (1.0 + e.p_star) * e.p_star;
        result["mc"] = json!({
            "j": est.ratio, "stderr": est.stderr,
            "z": (est.ratio - e.j_value) / est.stderr,
            "running": running.ratio, "running_stderr": running.stderr,
            "running_closed_form": (1.0 + e.p_star) * e.p_star,
            "control": st.component(&st.lower).ratio + st.component(&st.upper).ratio,
            "control_closed_form": control,
            "batches": st.batches.batches.len(),
            "batch_lag1_correlation": st.batches.lag1_correlation(),
            "grid_step": cfg.mc.grid_step,
        });
    }
    out.json("solve_ergodic.json", result)
}

fn best_response(cfg: &RunConfig, out: &OutputWriter) -> Result<Value, CliError> {
    let model = cfg.levy_model()?;
    let cost = cfg.cost_spec()?;
    let eps = cfg.solver.epsilon;
    let p = cfg.solver.p.unwrap_or(0.0);
    let spec = GameSpec::new(model, eps, p, cost.clone())?;
    let par = parallel(cfg);
    let s = stream(cfg, model)?;
    if !matches!(model, LevyModel::CompoundPoissonTwoExp { .. }) || cost.closed_form_params().is_err() {
        // no closed form: validation-only grid search
        let grid: Vec<f64> = (1..=8).map(|k| 0.25 * k as f64).collect();
        let a_grid: Vec<f64> = grid.iter().map(|g| -g).collect();
        let srch = mc_threshold_search(&par, &s, &spec, 0.0, &a_grid, &grid, cfg.mc.n_paths)?;
        eprintln!("warning: {}", srch.warning);
        return out.json("best_response.json", json!({ "a_star": srch.a, "b_star": srch.b, "warning": srch.warning, "closed_form": false }));
    }
    let conv = cfg.conventions()?;
    let consts = cp_threshold_constants(&model, eps, conv.roots)?;
    let derived = spec.delta()?;
    let delta = cfg.solver.delta.unwrap_or(derived);
    let sol = cp_best_response(&consts, delta, conv.orientation)?;
    let mut result = json!({
        "a_star": sol.a_star, "b_star": sol.b_star, "delta": sol.delta, "residual": sol.residual,
        "orientation": format!("{:?}", sol.orientation),
        "constants": {
            "r_i": consts.r_i, "r_s": consts.r_s, "pi_i": consts.pi_i, "pi_s": consts.pi_s,
            "e_i": consts.e_i, "e_s": consts.e_s, "f_i": consts.f_i, "f_s": consts.f_s,
            "g_i": consts.g_i, "g_s": consts.g_s, "root_residual": consts.root_residual,
        },
        "closed_form": true,
    });
    // the game payoffs correspond to δ derived from p; skip them otherwise
    if (delta - derived).abs() <= 1e-12 * derived && cfg.mc.n_paths >= 2 {
        let w = sol.b_star - sol.a_star;
        let xs: Vec<f64> = (0..=20).map(|k| sol.a_star - 0.25 * w + 1.5 * w * k as f64 / 20.0).collect();
        let mut rows = Vec::new();
        for (k, &x) in xs.iter().enumerate() {
            let m = mc_game_value(&par.fork(k as u64), &s, &spec, x, sol.a_star, sol.b_star, cfg.mc.n_paths)?;
            rows.push(vec![fmt(x), fmt(m.mean()), fmt(m.std_err())]);
        }
        let csv = out.csv("best_response_values.csv", &["x", "V", "stderr"], rows)?;
        let x_mid = 0.5 * (sol.a_star + sol.b_star);
        let rep = saddle_check(&par.fork(1000), &s, &spec, x_mid, sol.a_star, sol.b_star, cfg.mc.perturbation, cfg.mc.n_paths);
        let d = |m: &MeanVar| json!({ "mean": m.mean(), "stderr": m.std_err() });
        result["value_csv_path"] = json!(csv.map(|p| p.display().to_string()));
        result["saddle"] = json!({
            "x": x_mid, "perturbation": cfg.mc.perturbation, "holds": rep.holds(cfg.mc.z),
            "a_minus": d(&rep.a_minus), "a_plus": d(&rep.a_plus), "b_minus": d(&rep.b_minus), "b_plus": d(&rep.b_plus),
        });
    }
    out.json("best_response.json", result)
}

fn simulate(cfg: &RunConfig, out: &OutputWriter) -> Result<Value, CliError> {
    let model = cfg.levy_model()?;
    let bars = cfg.barriers()?;
    bars.check_model(&model)?;
    let x0 = cfg.mc.x0.unwrap_or(0.0);
    let mut rng = parallel(cfg).rng(0);
    let path = simulate_path(&model, x0, cfg.mc.horizon, cfg.mc.grid_step, cfg.mc.max_points, &mut rng)?;
    let r = reflect(&path, bars)?;
    let rows = (0..path.len()).map(|k| vec![fmt(path.times[k]), fmt(path.values[k]), fmt(r.x_reflected[k]), fmt(r.u[k]), fmt(r.d[k])]);
    let csv = out.csv("simulate_path.csv", &["t", "x", "x_reflected", "u", "d"], rows)?;
    let c = r.complementarity();
    out.json(
        "simulate.json",
        json!({
            "points": path.len(), "jumps": path.jump_times.len(),
            "u0": r.u0, "d0": r.d0,
            "complementarity_lower": c.lower, "complementarity_upper": c.upper,
            "control_total_variation": c.total_variation,
            "identity_error": r.identity_error(),
            "path_csv_path": csv.map(|p| p.display().to_string()),
        }),
    )
}

/// Closed-form stationary law for the configured model, if there is one.
pub fn closed_form_law(model: &LevyModel, bars: Barriers, law: MeanFieldLaw) -> Result<Option<StationaryLaw>, CliError> {
    Ok(match *model {
        LevyModel::CompoundPoissonTwoExp { .. } => Some(match law {
            MeanFieldLaw::TranslationInvariant => cp_stationary(model, bars.a, bars.b)?,
            MeanFieldLaw::AsPrinted => cp_stationary_as_printed(model, bars.a, bars.b)?,
        }),
        LevyModel::StrictlyStable { alpha, c_plus, c_minus } => Some(stable_stationary(alpha, c_plus, c_minus, bars.width())?.translated(bars.a)),
        _ => None,
    })
}

fn z_of(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn stationary(cfg: &RunConfig, out: &OutputWriter) -> Result<Value, CliError> {
    let model = cfg.levy_model()?;
    let bars = cfg.barriers()?;
    bars.check_model(&model)?;
    let s = stream(cfg, model)?;
    let m = &cfg.mc;
    let settings = OccupationSettings {
        horizon: m.horizon,
        burn_in: m.burn_in,
        n_bins: m.n_bins,
        n_batches: m.n_batches,
        atom_tol: OccupationSettings::default_atom_tol(&s, &bars),
    };
    let x0 = m.x0.unwrap_or(0.5 * (bars.a + bars.b));
    let stats = occupation_mc(&parallel(cfg), &s, bars, x0, &settings)?;
    let mc = levy_mfg_core::stationary::mc_stationary(&stats, 30)?;
    let closed = closed_form_law(&model, bars, cfg.conventions()?.law)?;
    let n = m.n_bins;
    let cf = closed.as_ref().map(|l| l.masses_with_tolerance(n, settings.atom_tol));
    let cf_bins = cf.as_ref().map(|c| c.2.clone());
    let rows = (0..n).map(|k| {
        let w = bars.width() / n as f64;
        vec![
            fmt(bars.a + w * k as f64),
            fmt(bars.a + w * (k + 1) as f64),
            cf_bins.as_ref().map(|b| fmt(b[k])).unwrap_or_default(),
            fmt(stats.bins[k].mean()),
            fmt(stats.bins[k].std_err()),
        ]
    });
    let csv = out.csv("stationary_bins.csv", &["bin_lo", "bin_hi", "closed_form_mass", "mc_mass", "mc_stderr"], rows)?;
    let (var, var_se) = stats.variance_estimate();
    let mut result = json!({
        "a": bars.a, "b": bars.b,
        "mc": {
            "atom_a": stats.atom_a.mean(), "atom_a_stderr": stats.atom_a.std_err(),
            "atom_b": stats.atom_b.mean(), "atom_b_stderr": stats.atom_b.std_err(),
            "mean": mc.mean(), "mean_stderr": stats.first_moment.std_err(),
            "variance": var, "variance_stderr": var_se,
            "batches": stats.batches(),
        },
        "bins_csv_path": csv.map(|p| p.display().to_string()),
    });
    if let (Some(l), Some((za, zb, b))) = (&closed, &cf) {
        let max_bin_z = (0..n).map(|k| z_of(stats.bins[k].mean() - b[k], stats.bins[k].std_err()).abs()).fold(0.0, f64::max);
        result["closed_form"] = json!({
            "atom_a": l.atom_a, "atom_b": l.atom_b, "mean": l.mean(), "variance": l.variance(),
            "total_mass": l.total_mass(),
            "atom_tolerance": settings.atom_tol,
            "atom_a_with_tolerance": za, "atom_b_with_tolerance": zb,
        });
        result["z"] = json!({
            "atom_a": z_of(stats.atom_a.mean() - za, stats.atom_a.std_err()),
            "atom_b": z_of(stats.atom_b.mean() - zb, stats.atom_b.std_err()),
            "mean": z_of(mc.mean() - l.mean(), stats.first_moment.std_err()),
            "variance": z_of(var - l.variance(), var_se),
            "max_bin": max_bin_z,
        });
    }
    out.json("stationary.json", result)
}

fn abelian(cfg: &RunConfig, out: &OutputWriter) -> Result<Value, CliError> {
    let model = cfg.levy_model()?;
    let bars = cfg.barriers()?;
    bars.check_model(&model)?;
    let cost = cfg.cost_spec()?;
    let s = stream(cfg, model)?;
    let m = &cfg.mc;
    let settings = AbelianSettings {
        x0: m.x0.unwrap_or(bars.b + 2.0),
        n_paths: m.n_paths,
        horizon_scale: 12.0,
        ergodic_horizon: m.horizon,
        burn_in: m.burn_in,
        n_batches: m.n_batches,
        z: m.z,
    };
    let rep = abelian_check(&parallel(cfg), &s, &cost, bars, cfg.solver.p.unwrap_or(0.0), &m.eps_list, &settings)?;
    let rows = rep.points.iter().map(|pt| {
        vec![fmt(pt.eps), fmt(pt.scaled.mean()), fmt(pt.scaled.std_err()), fmt(rep.ergodic.ratio), fmt(rep.ergodic.stderr)]
    });
    let csv = out.csv("abelian.csv", &["eps", "eps_j_eps", "stderr", "j", "j_stderr"], rows)?;
    let v = out.json(
        "abelian.json",
        json!({
            "x0": settings.x0,
            "eps": rep.points.iter().map(|p| p.eps).collect::<Vec<_>>(),
            "eps_j_eps": rep.points.iter().map(|p| p.scaled.mean()).collect::<Vec<_>>(),
            "stderr": rep.points.iter().map(|p| p.scaled.std_err()).collect::<Vec<_>>(),
            "j": rep.ergodic.ratio, "j_stderr": rep.ergodic.stderr, "cycles": rep.ergodic.cycle_count,
            "gaps": rep.gaps, "pair_sigmas": rep.pair_sigmas,
            "decreasing": rep.decreasing, "separated": rep.separated,
            "csv_path": csv.map(|p| p.display().to_string()),
        }),
    )?;
    if !(rep.decreasing && rep.separated) {
        return Err(CliError::McBudget("successive discount rates are not separated; increase mc.n_paths or mc.horizon".into()));
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NPlayerRow {
    pub report: NashGapReport,
    pub r_bound: f64,
    pub r_bound_sample_mean: f64,
}

/// Gap reports for every configured population size at `bars`.
pub fn nplayer_rows(cfg: &RunConfig, bars: Barriers) -> Result<Vec<NPlayerRow>, CliError> {
    let model = cfg.levy_model()?;
    let cost = cfg.cost_spec()?;
    let s = stream(cfg, model)?;
    let m = &cfg.mc;
    let mode = match m.nplayer_mode.as_str() {
        "discounted" => GapMode::Discounted { eps: cfg.solver.epsilon },
        _ => GapMode::Ergodic,
    };
    if let GapMode::Discounted { eps } = mode {
        levy_mfg_core::mfg::truncation_factor(eps, m.horizon)?;
    }
    let settings = PlayerSettings { x0: m.x0.unwrap_or(0.0), horizon: m.horizon, burn_in: m.burn_in };
    let strategies = deviation_grid(bars, m.deviation_step);
    let h_max = cost.h.max_sq_on(bars.a, bars.b, 401);
    let par = parallel(cfg);
    let mut rows = Vec::new();
    for (k, &n) in m.n_players.iter().enumerate() {
        let acc = nash_gap_mc(&par.fork(k as u64), &s, &cost, bars, &strategies, n, mode, &settings, m.replicas)?;
        if acc.base.count() < 2 {
            return Err(CliError::McBudget("mc.replicas must be at least 2".into()));
        }
        let report = acc.report(n);
        let r = |e| hoeffding_r(report.k_estimate, m.hoeffding_delta, bars.a, bars.b, n, h_max, mode, e);
        rows.push(NPlayerRow { report, r_bound: r(HoeffdingExponent::AsPublished)?, r_bound_sample_mean: r(HoeffdingExponent::SampleMean)? });
    }
    Ok(rows)
}

/// Each gap is at most the previous one plus `z` combined standard errors.
pub fn gap_trend_non_increasing(rows: &[NPlayerRow], z: f64) -> bool {
    rows.windows(2).all(|w| {
        let (x, y) = (&w[0].report, &w[1].report);
        y.gap <= x.gap + z * (x.gap_se * x.gap_se + y.gap_se * y.gap_se).sqrt()
    })
}

fn nplayer_check(cfg: &RunConfig, out: &OutputWriter) -> Result<Value, CliError> {
    let bars = match cfg.barriers {
        Some(_) => cfg.barriers()?,
        None => {
            let (_, ms) = multi_start_parallel(cfg)?;
            let e = ms
                .equilibria
                .iter()
                .min_by(|x, y| (x.b_star - x.a_star).total_cmp(&(y.b_star - y.a_star)))
                .ok_or_else(|| CliError::NonConvergence("no equilibrium to test".into()))?;
            Barriers::new(e.a_star, e.b_star)?
        }
    };
    let rows = nplayer_rows(cfg, bars)?;
    let trend = gap_trend_non_increasing(&rows, cfg.mc.z);
    let list: Vec<Value> = rows
        .iter()
        .map(|r| {
            let g = &r.report;
            json!({
                "i": 0, "n": g.n, "replicas": g.replicas,
                "equilibrium_cost": g.equilibrium_cost,
                "best_deviation_cost": g.equilibrium_cost - g.gap,
                "empirical_gap": g.gap, "gap_stderr": g.gap_se,
                "best_deviation": g.best_deviation,
                "r_bound": r.r_bound,
                "r_bound_sample_mean_exponent": r.r_bound_sample_mean,
                "K": g.k_estimate, "delta": cfg.mc.hoeffding_delta,
                "fbar_mean": g.fbar_mean,
                "within_bound": g.gap <= r.r_bound,
            })
        })
        .collect();
    out.json(
        "nplayer_check.json",
        json!({
            "a": bars.a, "b": bars.b, "mode": cfg.mc.nplayer_mode,
            "deviations": deviation_grid(bars, cfg.mc.deviation_step).iter().map(|d| [d.a, d.b]).collect::<Vec<_>>(),
            "reports": list,
            "gap_trend_non_increasing": trend,
        }),
    )
}
