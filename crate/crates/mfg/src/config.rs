//! Run configuration: one TOML file with `model`, `cost`, `solver`, `mc` and
//! `output` sections, plus optional `barriers`. Values can be overridden
//! with `section.key=value` strings and, for the output directory and the
//! worker count, with environment variables.

use std::path::Path;

use levy_mfg_core::cost::{GFunction, HFunction, MeanFieldFn};
use levy_mfg_core::mfg::{SolverMethod, SolverSettings};
use levy_mfg_core::{Barriers, Conventions, CostSpec, LevyModel, LossRate, MeanFieldLaw, RootQuadratic, ThresholdOrientation};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const ENV_OUTPUT_DIR: &str = "LEVY_MFG_OUTPUT_DIR";
pub const ENV_WORKERS: &str = "LEVY_MFG_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub cost: CostSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub mc: McSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barriers: Option<BarrierSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSection {
    /// `lambda1` may be omitted; it is then fixed by `E X_1 = 0`.
    CompoundPoisson {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda1: Option<f64>,
        alpha1: f64,
        lambda2: f64,
        alpha2: f64,
    },
    Stable {
        alpha: f64,
        c_plus: f64,
        c_minus: f64,
    },
    Brownian {
        mu: f64,
        sigma: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    /// `quadratic`, `power` or `zero`.
    pub g: String,
    pub k: f64,
    pub power: Option<f64>,
    /// `constant`, `exp_abs_cos` or `one_plus_abs`.
    pub h: String,
    pub h_value: f64,
    pub h_offset: f64,
    /// `identity`, `abs`, `square` or `tabulated`.
    pub f: String,
    pub f_xs: Option<Vec<f64>>,
    pub f_ys: Option<Vec<f64>>,
    /// Shorthand for `q_u = q_d = q`.
    pub q: Option<f64>,
    pub q_u: Option<f64>,
    pub q_d: Option<f64>,
}

impl Default for CostSection {
    fn default() -> Self {
        CostSection {
            g: "quadratic".into(),
            k: 1.0,
            power: None,
            h: "constant".into(),
            h_value: 1.0,
            h_offset: 0.01,
            f: "identity".into(),
            f_xs: None,
            f_ys: None,
            q: Some(0.5),
            q_u: None,
            q_d: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitGrid {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub n: usize,
}

impl Default for InitGrid {
    fn default() -> Self {
        InitGrid { a: [-8.0, 0.0], b: [0.0, 8.0], n: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub epsilon: f64,
    pub tol: f64,
    pub damping: f64,
    pub max_iter: usize,
    /// `picard`, `newton` or `picard_then_newton`.
    pub method: String,
    pub init_grid: InitGrid,
    /// `corrected` or `as_printed`; the three fields below override parts.
    pub conventions: String,
    pub roots: Option<String>,
    pub law: Option<String>,
    pub orientation: Option<String>,
    /// `model_consistent` or `as_printed`.
    pub loss_rate: String,
    /// Frozen mean-field value for `best-response`, `abelian` and `simulate`.
    pub p: Option<f64>,
    /// Stopping payoff for `best-response`; derived from `p` when absent.
    pub delta: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            epsilon: 0.1,
            tol: 1e-10,
            damping: 0.5,
            max_iter: 2000,
            method: "picard_then_newton".into(),
            init_grid: InitGrid::default(),
            conventions: "corrected".into(),
            roots: None,
            law: None,
            orientation: None,
            loss_rate: "model_consistent".into(),
            p: None,
            delta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    /// Mandatory: runs are never seeded from the clock.
    pub seed: u64,
    #[serde(default = "d_n_paths")]
    pub n_paths: usize,
    #[serde(default = "d_horizon")]
    pub horizon: f64,
    #[serde(default = "d_burn_in")]
    pub burn_in: f64,
    /// Time step for models without an exact event simulation.
    #[serde(default = "d_grid_step")]
    pub grid_step: f64,
    #[serde(default = "d_workers")]
    pub workers: usize,
    #[serde(default = "d_n_bins")]
    pub n_bins: usize,
    #[serde(default = "d_n_batches")]
    pub n_batches: usize,
    #[serde(default)]
    pub x0: Option<f64>,
    #[serde(default = "d_perturbation")]
    pub perturbation: f64,
    #[serde(default = "d_eps_list")]
    pub eps_list: Vec<f64>,
    #[serde(default = "d_n_players")]
    pub n_players: Vec<usize>,
    #[serde(default = "d_replicas")]
    pub replicas: usize,
    #[serde(default = "d_deviation_step")]
    pub deviation_step: f64,
    #[serde(default = "d_hoeffding_delta")]
    pub hoeffding_delta: f64,
    /// `discounted` or `ergodic`.
    #[serde(default = "d_nplayer_mode")]
    pub nplayer_mode: String,
    /// Width of the acceptance band in standard errors.
    #[serde(default = "d_z")]
    pub z: f64,
    #[serde(default = "d_max_points")]
    pub max_points: usize,
    /// Run the Monte Carlo cross-check in `solve-ergodic`.
    #[serde(default = "d_verify")]
    pub verify: bool,
}

fn d_n_paths() -> usize {
    10_000
}
fn d_horizon() -> f64 {
    1000.0
}
fn d_burn_in() -> f64 {
    10.0
}
fn d_grid_step() -> f64 {
    1e-3
}
fn d_workers() -> usize {
    1
}
fn d_n_bins() -> usize {
    20
}
fn d_n_batches() -> usize {
    40
}
fn d_perturbation() -> f64 {
    0.25
}
fn d_eps_list() -> Vec<f64> {
    vec![0.2, 0.1, 0.05, 0.02]
}
fn d_n_players() -> Vec<usize> {
    vec![5, 20, 50, 80]
}
fn d_replicas() -> usize {
    200
}
fn d_deviation_step() -> f64 {
    0.1
}
fn d_hoeffding_delta() -> f64 {
    0.01
}
fn d_nplayer_mode() -> String {
    "discounted".into()
}
fn d_z() -> f64 {
    3.0
}
fn d_max_points() -> usize {
    10_000_000
}
fn d_verify() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    /// Any of `json`, `csv`.
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into(), formats: vec!["json".into(), "csv".into()] }
    }
}

impl OutputSection {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierSection {
    pub a: f64,
    pub b: f64,
}

fn cfg_err(field: &str, message: impl Into<String>) -> CliError {
    CliError::Config { field: field.into(), message: message.into() }
}

/// Parses `section.key=value`; `value` is read as a TOML literal when it
/// parses as one and as a bare string otherwise.
pub fn parse_override(spec: &str) -> Result<(Vec<String>, toml::Value), CliError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| cfg_err(spec, "override must look like section.key=value"))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.len() < 2 || path.iter().any(|p| p.is_empty()) {
        return Err(cfg_err(key, "override key must be section.key"));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    Ok((path, value))
}

pub fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), CliError> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| cfg_err(&path.join("."), format!("`{p}` is not a section")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| cfg_err("<file>", e.message().to_string()))?;
        for o in overrides {
            let (path, value) = parse_override(o)?;
            apply_override(&mut table, &path, value)?;
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| {
            let msg = e.message().to_string();
            let field = if msg.contains("seed") { "mc.seed".to_string() } else { "<config>".to_string() };
            cfg_err(&field, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, overrides, applies the environment and validates.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err("<file>", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    /// Best-effort output directory for error records when loading fails:
    /// the environment, then `output.dir` from the raw file, then `out`.
    pub fn output_dir_hint(path: &Path) -> String {
        if let Ok(dir) = std::env::var(ENV_OUTPUT_DIR) {
            return dir;
        }
        std::fs::read_to_string(path)
            .ok()
            .and_then(|t| toml::from_str::<toml::Table>(&t).ok())
            .and_then(|t| t.get("output")?.get("dir")?.as_str().map(str::to_string))
            .unwrap_or_else(|| "out".into())
    }

    pub fn apply_env<F: Fn(&str) -> Option<String>>(&mut self, get: F) -> Result<(), CliError> {
        if let Some(dir) = get(ENV_OUTPUT_DIR) {
            self.output.dir = dir;
        }
        if let Some(w) = get(ENV_WORKERS) {
            self.mc.workers = w.trim().parse().map_err(|_| cfg_err("mc.workers", format!("{ENV_WORKERS} must be a positive integer")))?;
        }
        self.validate()
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.levy_model()?;
        self.cost_spec()?;
        self.conventions()?;
        self.solver_settings()?;
        self.loss_rate()?;
        let s = &self.solver;
        if !(s.epsilon > 0.0 && s.epsilon.is_finite()) {
            return Err(cfg_err("solver.epsilon", "must be positive"));
        }
        if s.init_grid.n == 0 || s.init_grid.a[0] > s.init_grid.a[1] || s.init_grid.b[0] > s.init_grid.b[1] {
            return Err(cfg_err("solver.init_grid", "needs n > 0 and ordered ranges"));
        }
        if let Some(d) = s.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(cfg_err("solver.delta", "must be positive"));
            }
        }
        let m = &self.mc;
        if m.workers == 0 {
            return Err(cfg_err("mc.workers", "must be positive"));
        }
        if !(m.horizon > 0.0 && m.horizon.is_finite()) {
            return Err(cfg_err("mc.horizon", "must be positive"));
        }
        if !(m.burn_in >= 0.0 && m.burn_in < m.horizon) {
            return Err(cfg_err("mc.burn_in", "must lie in [0, horizon)"));
        }
        if !(m.grid_step > 0.0 && m.grid_step.is_finite()) {
            return Err(cfg_err("mc.grid_step", "must be positive"));
        }
        if m.n_bins == 0 || m.n_batches == 0 {
            return Err(cfg_err("mc.n_bins", "bins and batches must be positive"));
        }
        if !(m.perturbation >= 0.0 && m.perturbation.is_finite()) {
            return Err(cfg_err("mc.perturbation", "must be non-negative"));
        }
        if m.eps_list.iter().any(|e| !(*e > 0.0)) {
            return Err(cfg_err("mc.eps_list", "entries must be positive"));
        }
        if m.n_players.iter().any(|&n| n < 2) {
            return Err(cfg_err("mc.n_players", "entries must be at least 2"));
        }
        if !(m.hoeffding_delta > 0.0) {
            return Err(cfg_err("mc.hoeffding_delta", "must be positive"));
        }
        if !(m.z > 0.0) {
            return Err(cfg_err("mc.z", "must be positive"));
        }
        if !matches!(m.nplayer_mode.as_str(), "discounted" | "ergodic") {
            return Err(cfg_err("mc.nplayer_mode", "must be `discounted` or `ergodic`"));
        }
        for f in &self.output.formats {
            if !matches!(f.as_str(), "json" | "csv") {
                return Err(cfg_err("output.formats", format!("unknown format `{f}`")));
            }
        }
        if let Some(b) = self.barriers {
            Barriers::new(b.a, b.b).map_err(|e| cfg_err("barriers", e.to_string()))?;
        }
        Ok(())
    }

    pub fn levy_model(&self) -> Result<LevyModel, CliError> {
        let r = match self.model {
            ModelSection::CompoundPoisson { lambda1: Some(l1), alpha1, lambda2, alpha2 } => LevyModel::compound_poisson(l1, alpha1, lambda2, alpha2),
            ModelSection::CompoundPoisson { lambda1: None, alpha1, lambda2, alpha2 } => LevyModel::centered_compound_poisson(alpha1, lambda2, alpha2),
            ModelSection::Stable { alpha, c_plus, c_minus } => LevyModel::stable(alpha, c_plus, c_minus),
            ModelSection::Brownian { mu, sigma } => LevyModel::brownian(mu, sigma),
        };
        r.map_err(|e| match e {
            levy_mfg_core::Error::InvalidParameter { name, reason } => cfg_err(&format!("model.{name}"), reason),
            other => cfg_err("model", other.to_string()),
        })
    }

    pub fn cost_spec(&self) -> Result<CostSpec, CliError> {
        let c = &self.cost;
        let g = match c.g.as_str() {
            "quadratic" => GFunction::Quadratic { k: c.k },
            "power" => GFunction::Power { power: c.power.ok_or_else(|| cfg_err("cost.power", "required for g = power"))? },
            "zero" => GFunction::Zero,
            other => return Err(cfg_err("cost.g", format!("unknown g `{other}`"))),
        };
        let h = match c.h.as_str() {
            "constant" => HFunction::Constant { value: c.h_value },
            "exp_abs_cos" => HFunction::ExpAbsCos { offset: c.h_offset },
            "one_plus_abs" => HFunction::OnePlusAbs,
            other => return Err(cfg_err("cost.h", format!("unknown h `{other}`"))),
        };
        let f = match c.f.as_str() {
            "identity" => MeanFieldFn::Identity,
            "abs" => MeanFieldFn::Abs,
            "square" => MeanFieldFn::Square,
            "tabulated" => {
                let xs = c.f_xs.clone().ok_or_else(|| cfg_err("cost.f_xs", "required for f = tabulated"))?;
                let ys = c.f_ys.clone().ok_or_else(|| cfg_err("cost.f_ys", "required for f = tabulated"))?;
                MeanFieldFn::tabulated(xs, ys).map_err(|e| cfg_err("cost.f_xs", e.to_string()))?
            }
            other => return Err(cfg_err("cost.f", format!("unknown f `{other}`"))),
        };
        let q_u = c.q_u.or(c.q).ok_or_else(|| cfg_err("cost.q_u", "set q or q_u"))?;
        let q_d = c.q_d.or(c.q).ok_or_else(|| cfg_err("cost.q_d", "set q or q_d"))?;
        CostSpec::new(g, h, f, q_u, q_d).map_err(|e| match e {
            levy_mfg_core::Error::InvalidParameter { name, reason } => cfg_err(&format!("cost.{name}"), reason),
            other => cfg_err("cost", other.to_string()),
        })
    }

    pub fn conventions(&self) -> Result<Conventions, CliError> {
        let s = &self.solver;
        let mut c = match s.conventions.as_str() {
            "corrected" => Conventions::corrected(),
            "as_printed" => Conventions::as_printed(),
            other => return Err(cfg_err("solver.conventions", format!("unknown conventions `{other}`"))),
        };
        if let Some(r) = &s.roots {
            c.roots = match r.as_str() {
                "exact" => RootQuadratic::Exact,
                "as_printed" => RootQuadratic::AsPrinted,
                other => return Err(cfg_err("solver.roots", format!("unknown `{other}`"))),
            };
        }
        if let Some(l) = &s.law {
            c.law = match l.as_str() {
                "translation_invariant" => MeanFieldLaw::TranslationInvariant,
                "as_printed" => MeanFieldLaw::AsPrinted,
                other => return Err(cfg_err("solver.law", format!("unknown `{other}`"))),
            };
        }
        if let Some(o) = &s.orientation {
            c.orientation = match o.as_str() {
                "reflected" => ThresholdOrientation::Reflected,
                "as_printed" => ThresholdOrientation::AsPrinted,
                other => return Err(cfg_err("solver.orientation", format!("unknown `{other}`"))),
            };
        }
        Ok(c)
    }

    pub fn solver_settings(&self) -> Result<SolverSettings, CliError> {
        let s = &self.solver;
        let method = match s.method.as_str() {
            "picard" => SolverMethod::Picard,
            "newton" => SolverMethod::Newton,
            "picard_then_newton" => SolverMethod::PicardThenNewton,
            other => return Err(cfg_err("solver.method", format!("unknown method `{other}`"))),
        };
        let st = SolverSettings { damping: s.damping, tol: s.tol, max_iter: s.max_iter, method };
        st.validate().map_err(|e| match e {
            levy_mfg_core::Error::InvalidParameter { name, reason } => cfg_err(&format!("solver.{name}"), reason),
            other => cfg_err("solver", other.to_string()),
        })?;
        Ok(st)
    }

    pub fn loss_rate(&self) -> Result<LossRate, CliError> {
        match self.solver.loss_rate.as_str() {
            "model_consistent" => Ok(LossRate::ModelConsistent),
            "as_printed" => Ok(LossRate::AsPrinted),
            other => Err(cfg_err("solver.loss_rate", format!("unknown `{other}`"))),
        }
    }

    pub fn barriers(&self) -> Result<Barriers, CliError> {
        let b = self.barriers.ok_or_else(|| cfg_err("barriers", "section [barriers] with a and b is required"))?;
        Barriers::new(b.a, b.b).map_err(|e| cfg_err("barriers", e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[model]
family = "compound_poisson"
alpha1 = 1.0
lambda2 = 3.0
alpha2 = 2.0

[mc]
seed = 7
"#;

    #[test]
    fn defaults_and_centring() {
        let cfg = RunConfig::from_toml_str(BASE, &[]).unwrap();
        assert_eq!(cfg.levy_model().unwrap().mean(), 0.0);
        assert_eq!(cfg.solver.epsilon, 0.1);
        assert!(cfg.output.wants("csv"));
    }

    #[test]
    fn overrides_take_precedence() {
        let cfg = RunConfig::from_toml_str(BASE, &["solver.epsilon=0.05".into(), "cost.h=one_plus_abs".into(), "mc.eps_list=[0.3, 0.1, 0.01]".into()]).unwrap();
        assert_eq!(cfg.solver.epsilon, 0.05);
        assert_eq!(cfg.cost.h, "one_plus_abs");
        assert_eq!(cfg.mc.eps_list, vec![0.3, 0.1, 0.01]);
    }

    #[test]
    fn field_level_errors() {
        let e = RunConfig::from_toml_str(BASE, &["solver.epsilon=-0.1".into()]).unwrap_err();
        assert!(matches!(&e, CliError::Config { field, .. } if field == "solver.epsilon"), "{e}");
        let e = RunConfig::from_toml_str(BASE, &["cost.g=cubic".into()]).unwrap_err();
        assert!(matches!(&e, CliError::Config { field, .. } if field == "cost.g"));
        let no_seed = BASE.replace("seed = 7", "n_paths = 5");
        let e = RunConfig::from_toml_str(&no_seed, &[]).unwrap_err();
        assert!(matches!(&e, CliError::Config { field, .. } if field == "mc.seed"), "{e}");
        assert!(RunConfig::from_toml_str(BASE, &["model.alpha1=-1".into()]).is_err());
        assert!(RunConfig::from_toml_str(BASE, &["mc.typo=1".into()]).is_err());
        assert!(RunConfig::from_toml_str(BASE, &["noequals".into()]).is_err());
    }

    #[test]
    fn environment_overrides() {
        let mut cfg = RunConfig::from_toml_str(BASE, &[]).unwrap();
        let h0 = cfg.hash();
        cfg.apply_env(|k| match k {
            ENV_WORKERS => Some("4".into()),
            ENV_OUTPUT_DIR => Some("/tmp/x".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.mc.workers, 4);
        assert_eq!(cfg.output.dir, "/tmp/x");
        assert_ne!(cfg.hash(), h0);
        assert!(cfg.apply_env(|k| (k == ENV_WORKERS).then(|| "zero".into())).is_err());
    }

    #[test]
    fn hash_is_stable() {
        let a = RunConfig::from_toml_str(BASE, &[]).unwrap();
        let b = RunConfig::from_toml_str(BASE, &[]).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
