use std::fs::File;
use std::path::{Path, PathBuf};

use cocm_core::eiopa::{best_estimate, risk_margin_method2, scr};
use cocm_core::gaussian::{covariance_from_cohorts, read_covariance_csv, write_covariance_csv};
use cocm_core::life::value_recursion;
use cocm_core::oracle::{
    nested_mc_value, value_composition, value_exact, ArSampler, ConditionalSampler,
    ConstantSampler, GaussianSampler,
};
use cocm_core::valuation::w_normal_any;
use cocm_core::{
    ARModel, CocmError, Cohort, EiopaParams, GaussianModel, MakehamLaw, McConfig, ScenarioTree,
    Schedule, ValuationSpec,
};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use crate::output::{Cell, Table};

/// Why a command stopped.
#[derive(Debug)]
pub enum Failure {
    /// The configuration is unreadable or invalid.
    Config(String),
    /// The computation itself failed.
    Compute(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Compute(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config",
            Failure::Compute(_) => "computation",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Compute(m) => m,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

/// Errors met while computing: caller mistakes keep exit code 2, numeric
/// and resource failures get 3.
fn compute_err(e: CocmError) -> Failure {
    if e.is_configuration() {
        Failure::Config(e.to_string())
    } else {
        Failure::Compute(e.to_string())
    }
}

/// Settings shared by all commands.
pub struct Context {
    /// Directory against which relative paths in the config are resolved.
    pub base: PathBuf,
    pub seed: Option<u64>,
}

impl Context {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

fn parse<T: DeserializeOwned>(text: &str) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(config_err)
}

fn horizons(max: usize, given: Option<Vec<usize>>) -> Result<Vec<usize>, Failure> {
    if max == 0 {
        return Err(Failure::Config("T must be ≥ 1".into()));
    }
    match given {
        None => Ok((1..=max).collect()),
        Some(h) => {
            if let Some(bad) = h.iter().find(|&&t| t == 0 || t > max) {
                return Err(Failure::Config(format!("horizon {bad} outside 1..={max}")));
            }
            Ok(h)
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BinomialConfig {
    n: usize,
    age: f64,
    #[serde(rename = "T")]
    horizon: usize,
    #[serde(default)]
    makeham: MakehamLaw,
    #[serde(default)]
    valuation: ValuationSpec,
    horizons: Option<Vec<usize>>,
    /// Where to write the `G_t(n)` table of the longest horizon.
    g_table: Option<PathBuf>,
}

pub fn binomial(text: &str, ctx: &Context) -> Result<Table, Failure> {
    let cfg: BinomialConfig = parse(text)?;
    let sweep = horizons(cfg.horizon, cfg.horizons)?;
    cfg.makeham.validate().map_err(config_err)?;
    cfg.valuation
        .check_horizon(cfg.horizon)
        .map_err(config_err)?;
    let mut table = Table::new("binomial", &["T", "BE", "V0", "bound"]);
    let mut last = None;
    for &t in &sweep {
        let cohort = Cohort::new(cfg.n, cfg.age, t).map_err(config_err)?;
        let g = value_recursion(&cohort, &cfg.makeham, &cfg.valuation).map_err(compute_err)?;
        table.push(vec![
            t.into(),
            g.best_estimate.into(),
            g.value0().into(),
            g.bound.into(),
        ]);
        if last.as_ref().is_none_or(|(h, _)| *h < t) {
            last = Some((t, g));
        }
    }
    if let (Some(path), Some((_, g))) = (cfg.g_table, last) {
        let file = File::create(ctx.resolve(&path)).map_err(config_err)?;
        g.write_csv(file).map_err(compute_err)?;
    }
    Ok(table)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CohortConfig {
    n: usize,
    age: f64,
    #[serde(rename = "T")]
    horizon: usize,
    #[serde(default)]
    makeham: MakehamLaw,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianApproxConfig {
    cohorts: Vec<CohortConfig>,
    #[serde(default)]
    valuation: ValuationSpec,
    horizons: Option<Vec<usize>>,
    /// Where to write the covariance of the longest horizon.
    covariance_out: Option<PathBuf>,
}

pub fn gaussian_approx(text: &str, ctx: &Context) -> Result<Table, Failure> {
    let cfg: GaussianApproxConfig = parse(text)?;
    if cfg.cohorts.is_empty() {
        return Err(Failure::Config("at least one cohort is required".into()));
    }
    let max = cfg.cohorts.iter().map(|c| c.horizon).max().unwrap_or(0);
    let sweep = horizons(max, cfg.horizons)?;
    for c in &cfg.cohorts {
        Cohort::new(c.n, c.age, c.horizon).map_err(config_err)?;
        c.makeham.validate().map_err(config_err)?;
    }
    cfg.valuation.require_constant_eta().map_err(config_err)?;
    let mut table = Table::new("gaussian-approx", &["T", "V0_gaussian"]);
    for &t in &sweep {
        let cohorts: Vec<(Cohort, MakehamLaw)> = cfg
            .cohorts
            .iter()
            .map(|c| {
                let cohort = Cohort {
                    n: c.n,
                    age: c.age,
                    horizon: c.horizon.min(t),
                };
                (cohort, c.makeham)
            })
            .collect();
        let approx = covariance_from_cohorts(&cohorts).map_err(compute_err)?;
        table.push(vec![
            t.into(),
            approx
                .model
                .value0(&cfg.valuation)
                .map_err(compute_err)?
                .into(),
        ]);
        if t == max {
            if let Some(path) = &cfg.covariance_out {
                let file = File::create(ctx.resolve(path)).map_err(config_err)?;
                write_covariance_csv(file, approx.model.cov()).map_err(compute_err)?;
            }
        }
    }
    Ok(table)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EiopaConfig {
    n: usize,
    age: f64,
    #[serde(rename = "T")]
    horizon: usize,
    #[serde(default)]
    makeham: MakehamLaw,
    #[serde(default)]
    params: EiopaParams,
    horizons: Option<Vec<usize>>,
}

pub fn eiopa(text: &str, _ctx: &Context) -> Result<Table, Failure> {
    let cfg: EiopaConfig = parse(text)?;
    let sweep = horizons(cfg.horizon, cfg.horizons)?;
    cfg.makeham.validate().map_err(config_err)?;
    cfg.params.validate().map_err(config_err)?;
    let mut table = Table::new("eiopa", &["T", "BE", "SCR", "RM"]);
    for &t in &sweep {
        let cohort = Cohort::new(cfg.n, cfg.age, t).map_err(config_err)?;
        let be = best_estimate(&cohort, &cfg.makeham, 1).map_err(compute_err)?;
        let s = scr(&cohort, &cfg.makeham, &cfg.params).map_err(compute_err)?;
        let rm = risk_margin_method2(&cohort, &cfg.makeham, &cfg.params).map_err(compute_err)?;
        table.push(vec![t.into(), be.into(), s.into(), rm.into()]);
    }
    Ok(table)
}

/// Splits an optional `valuation` block off a config object so the rest
/// can be parsed by a model's own strict schema.
fn split_valuation(text: &str) -> Result<(Value, ValuationSpec), Failure> {
    let mut v: Value = parse(text)?;
    let obj = v
        .as_object_mut()
        .ok_or_else(|| Failure::Config("config must be a JSON object".into()))?;
    let spec = match obj.remove("valuation") {
        Some(s) => serde_json::from_value(s).map_err(config_err)?,
        None => ValuationSpec::default(),
    };
    Ok((v, spec))
}

pub fn ar(text: &str, _ctx: &Context) -> Result<Table, Failure> {
    let (rest, spec) = split_valuation(text)?;
    let model: ARModel = serde_json::from_value(rest).map_err(config_err)?;
    spec.require_constant_eta().map_err(config_err)?;
    let beta = model.betas();
    let delta = model.deltas(&spec).map_err(compute_err)?;
    let mut table = Table::new("ar", &["t", "beta", "delta"]);
    for t in 0..model.horizon() {
        table.push(vec![t.into(), beta[t].into(), delta[t].into()]);
    }
    Ok(table)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianConfig {
    covariance: Option<Vec<Vec<f64>>>,
    covariance_csv: Option<PathBuf>,
    schedule: Option<Schedule>,
    #[serde(default)]
    valuation: ValuationSpec,
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, Failure> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Failure::Config(
            "covariance must be a non-empty square array".into(),
        ));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn load_covariance(
    inline: Option<&Vec<Vec<f64>>>,
    file: Option<&PathBuf>,
    ctx: &Context,
) -> Result<DMatrix<f64>, Failure> {
    match (inline, file) {
        (Some(rows), None) => matrix(rows),
        (None, Some(path)) => {
            let f = File::open(ctx.resolve(path)).map_err(config_err)?;
            read_covariance_csv(f).map_err(config_err)
        }
        _ => Err(Failure::Config(
            "give exactly one of \"covariance\" and \"covariance_csv\"".into(),
        )),
    }
}

pub fn gaussian(text: &str, ctx: &Context) -> Result<Table, Failure> {
    let cfg: GaussianConfig = parse(text)?;
    let cov = load_covariance(cfg.covariance.as_ref(), cfg.covariance_csv.as_ref(), ctx)?;
    let schedule = cfg
        .schedule
        .unwrap_or_else(|| Schedule::identity(cov.nrows()));
    let model = GaussianModel::new(cov, schedule).map_err(compute_err)?;
    let spec = &cfg.valuation;
    let v0 = model.value0(spec).map_err(compute_err)?;
    let (lo, hi) = model.bounds(spec).map_err(compute_err)?;
    let w0 = w_normal_any(spec).map_err(compute_err)?;
    let mut table = Table::new("gaussian", &["V0", "lower", "upper", "W0"]);
    table.push(vec![v0.into(), lo.into(), hi.into(), w0.into()]);
    Ok(table)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleConfig {
    tree: Option<Value>,
    tree_file: Option<PathBuf>,
    mc: Option<McSection>,
    #[serde(default)]
    valuation: ValuationSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct McSection {
    sampler: SamplerConfig,
    outer_paths: usize,
    inner_samples: usize,
    seed: Option<u64>,
    #[serde(default = "default_max_draws")]
    max_draws: u64,
}

fn default_max_draws() -> u64 {
    McConfig::DEFAULT_MAX_DRAWS
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum SamplerConfig {
    Gaussian {
        covariance: Option<Vec<Vec<f64>>>,
        covariance_csv: Option<PathBuf>,
    },
    Ar(ARModel),
    Constant(Vec<f64>),
}

pub fn oracle(text: &str, ctx: &Context) -> Result<Table, Failure> {
    let cfg: OracleConfig = parse(text)?;
    let tree = match (&cfg.tree, &cfg.tree_file) {
        (Some(v), None) => Some(ScenarioTree::from_json(&v.to_string()).map_err(config_err)?),
        (None, Some(p)) => Some(ScenarioTree::load(ctx.resolve(p)).map_err(config_err)?),
        (None, None) => None,
        _ => {
            return Err(Failure::Config(
                "give at most one of \"tree\" and \"tree_file\"".into(),
            ))
        }
    };
    if tree.is_none() && cfg.mc.is_none() {
        return Err(Failure::Config(
            "nothing to value: give a tree or an \"mc\" block".into(),
        ));
    }
    let spec = &cfg.valuation;
    let mut table = Table::new("oracle", &["method", "value", "standard_error"]);
    if let Some(tree) = &tree {
        let exact = value_exact(tree, spec).map_err(compute_err)?[ScenarioTree::ROOT];
        let composed = value_composition(tree, spec).map_err(compute_err)?;
        table.push(vec!["exact".into(), exact.into(), Cell::Missing]);
        table.push(vec!["composition".into(), composed.into(), Cell::Missing]);
    }
    if let Some(mc) = cfg.mc {
        let sampler: Box<dyn ConditionalSampler> = match mc.sampler {
            SamplerConfig::Gaussian {
                covariance,
                covariance_csv,
            } => {
                let cov = load_covariance(covariance.as_ref(), covariance_csv.as_ref(), ctx)?;
                Box::new(GaussianSampler::new(&cov).map_err(compute_err)?)
            }
            SamplerConfig::Ar(model) => Box::new(ArSampler::new(model)),
            SamplerConfig::Constant(x) => Box::new(ConstantSampler(x)),
        };
        let config = McConfig {
            outer_paths: mc.outer_paths,
            inner_samples: mc.inner_samples,
            seed: ctx.seed.or(mc.seed).unwrap_or(0),
            max_draws: mc.max_draws,
        };
        let est = nested_mc_value(sampler.as_ref(), spec, &config).map_err(compute_err)?;
        table.push(vec![
            "nested_mc".into(),
            est.estimate.into(),
            est.standard_error.into(),
        ]);
    }
    Ok(table)
}
