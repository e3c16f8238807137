//! Ground-truth evaluators.
//!
//! [`ScenarioTree`] carries a finite adapted cash flow; [`value_exact`] runs
//! the backward recursion `V_t = W_t(X_{t+1} + V_{t+1})` node by node and
//! [`value_composition`] evaluates the composed form
//! `W_0 ∘ … ∘ W_{T−1}(X_1 + … + X_T)` on running sums. [`nested_mc_value`]
//! is a brute-force statistical valuer for models without a finite tree.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ar::{ARModel, Innovation};
use crate::distribution::DiscreteDistribution;
use crate::error::{CocmError, Result};
use crate::valuation::{w_apply_at, ValuationSpec};

const PROB_TOLERANCE: f64 = 1e-12;
pub const MAX_TREE_NODES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub t: usize,
    /// Transition probability from the parent (1 at the root).
    pub prob: f64,
    /// Cash-flow increment `X_t` realised on arrival at this node.
    pub x: f64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

/// Finite scenario tree; node 0 is the root at `t = 0` and every node is
/// stored after its parent.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    nodes: Vec<TreeNode>,
}

impl Default for ScenarioTree {
    fn default() -> Self {
        Self::new()
    }
}

impl ScenarioTree {
    /// A tree holding only the root.
    pub fn new() -> Self {
        ScenarioTree {
            nodes: vec![TreeNode {
                t: 0,
                prob: 1.0,
                x: 0.0,
                parent: None,
                children: Vec::new(),
            }],
        }
    }

    pub const ROOT: usize = 0;

    pub fn add_child(&mut self, parent: usize, prob: f64, x: f64) -> Result<usize> {
        if parent >= self.nodes.len() {
            return Err(CocmError::invalid(format!("no node {parent}")));
        }
        if !(prob > 0.0 && prob <= 1.0 + PROB_TOLERANCE) {
            return Err(CocmError::invalid(format!("transition probability {prob}")));
        }
        if !x.is_finite() {
            return Err(CocmError::invalid("cash-flow increments must be finite"));
        }
        if self.nodes.len() >= MAX_TREE_NODES {
            return Err(CocmError::Resource(format!(
                "scenario trees are limited to {MAX_TREE_NODES} nodes"
            )));
        }
        let id = self.nodes.len();
        let t = self.nodes[parent].t + 1;
        self.nodes.push(TreeNode {
            t,
            prob,
            x,
            parent: Some(parent),
            children: Vec::new(),
        });
        self.nodes[parent].children.push(id);
        Ok(id)
    }

    /// Check probabilities and that every leaf sits at the same depth `T ≥ 1`.
    pub fn validate(&self) -> Result<usize> {
        let mut depth = None;
        for (i, n) in self.nodes.iter().enumerate() {
            if n.children.is_empty() {
                match depth {
                    None => depth = Some(n.t),
                    Some(d) if d != n.t => {
                        return Err(CocmError::invalid(format!(
                            "leaf {i} at depth {} but other leaves at depth {d}",
                            n.t
                        )))
                    }
                    _ => {}
                }
            } else {
                let total: f64 = n.children.iter().map(|&c| self.nodes[c].prob).sum();
                if (total - 1.0).abs() > PROB_TOLERANCE {
                    return Err(CocmError::invalid(format!(
                        "children of node {i} have total probability {total}"
                    )));
                }
            }
        }
        match depth {
            Some(d) if d >= 1 => Ok(d),
            _ => Err(CocmError::invalid("a scenario tree needs depth T ≥ 1")),
        }
    }

    /// A chain with one child per node: the deterministic flow `cs`.
    pub fn deterministic(cs: &[f64]) -> Result<Self> {
        let mut tree = ScenarioTree::new();
        let mut at = Self::ROOT;
        for &c in cs {
            at = tree.add_child(at, 1.0, c)?;
        }
        tree.validate()?;
        Ok(tree)
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &TreeNode {
        &self.nodes[i]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Depth of the deepest node.
    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.t).max().unwrap_or(0)
    }

    /// `X_1 + … + X_t` at every node.
    pub fn cumulative_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate().skip(1) {
            out[i] = out[n.parent.expect("non-root")] + n.x;
        }
        out
    }

    /// The same tree with every increment replaced by `f(x)`.
    pub fn map_increments(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut tree = self.clone();
        for n in tree.nodes.iter_mut().skip(1) {
            n.x = f(n.x);
        }
        tree
    }

    /// The law over the children of `i` of `g(child)`.
    pub fn child_law(&self, i: usize, g: impl Fn(usize) -> f64) -> Result<DiscreteDistribution> {
        let children = &self.nodes[i].children;
        DiscreteDistribution::new(
            children.iter().map(|&c| g(c)).collect(),
            children.iter().map(|&c| self.nodes[c].prob).collect(),
        )
    }

    /// Parse the nested JSON form: an array of the root's children, each
    /// `{"p": prob, "x": increment, "children": [...]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let roots: Vec<NodeRepr> = serde_json::from_str(text)?;
        let mut tree = ScenarioTree::new();
        let mut stack: Vec<(usize, &NodeRepr)> =
            roots.iter().rev().map(|r| (Self::ROOT, r)).collect();
        while let Some((parent, repr)) = stack.pop() {
            let id = tree.add_child(parent, repr.p, repr.x)?;
            stack.extend(repr.children.iter().rev().map(|c| (id, c)));
        }
        tree.validate()?;
        Ok(tree)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.repr(Self::ROOT))?)
    }

    fn repr(&self, i: usize) -> Vec<NodeRepr> {
        self.nodes[i]
            .children
            .iter()
            .map(|&c| NodeRepr {
                p: self.nodes[c].prob,
                x: self.nodes[c].x,
                children: self.repr(c),
            })
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRepr {
    p: f64,
    x: f64,
    #[serde(default)]
    children: Vec<NodeRepr>,
}

/// `V_t` at every node: zero at the leaves and
/// `W_t(law of X_{t+1} + V_{t+1})` above.
pub fn value_exact(tree: &ScenarioTree, spec: &ValuationSpec) -> Result<Vec<f64>> {
    let depth = tree.validate()?;
    spec.check_horizon(depth)?;
    let mut v = vec![0.0; tree.len()];
    for i in (0..tree.len()).rev() {
        let node = tree.node(i);
        if !node.children.is_empty() {
            let law = tree.child_law(i, |c| tree.node(c).x + v[c])?;
            v[i] = w_apply_at(&law, spec, node.t)?;
        }
    }
    Ok(v)
}

/// `W_t ∘ … ∘ W_{T−1}(X_1 + … + X_T)` at every node, computed on the
/// running sums. At a node at time `t` this equals `X_1 + … + X_t + V_t`.
pub fn composition_values(tree: &ScenarioTree, spec: &ValuationSpec) -> Result<Vec<f64>> {
    let depth = tree.validate()?;
    spec.check_horizon(depth)?;
    let mut y = tree.cumulative_sums();
    for i in (0..tree.len()).rev() {
        let node = tree.node(i);
        if !node.children.is_empty() {
            let law = tree.child_law(i, |c| y[c])?;
            y[i] = w_apply_at(&law, spec, node.t)?;
        }
    }
    Ok(y)
}

/// `V_0 = W_0 ∘ … ∘ W_{T−1}(X_1 + … + X_T)`.
pub fn value_composition(tree: &ScenarioTree, spec: &ValuationSpec) -> Result<f64> {
    Ok(composition_values(tree, spec)?[ScenarioTree::ROOT])
}

/// `φ_{t,T}(Y) = −W_t ∘ … ∘ W_{T−1}(−Y_T)` at every node, for an adapted
/// process given by its value `y[i]` at each node.
pub fn phi(tree: &ScenarioTree, spec: &ValuationSpec, y: &[f64]) -> Result<Vec<f64>> {
    let depth = tree.validate()?;
    spec.check_horizon(depth)?;
    if y.len() != tree.len() {
        return Err(CocmError::invalid(format!(
            "process has {} values for {} nodes",
            y.len(),
            tree.len()
        )));
    }
    let mut out = y.to_vec();
    for i in (0..tree.len()).rev() {
        let node = tree.node(i);
        if !node.children.is_empty() {
            let law = tree.child_law(i, |c| -out[c])?;
            out[i] = -w_apply_at(&law, spec, node.t)?;
        }
    }
    Ok(out)
}

/// Draws `X_{t+1}` given the realised prefix `X_1, …, X_t`.
pub trait ConditionalSampler: Sync {
    fn horizon(&self) -> usize;
    fn sample(&self, prefix: &[f64], rng: &mut dyn RngCore) -> f64;
}

/// A deterministic flow.
pub struct ConstantSampler(pub Vec<f64>);

impl ConditionalSampler for ConstantSampler {
    fn horizon(&self) -> usize {
        self.0.len()
    }

    fn sample(&self, prefix: &[f64], _rng: &mut dyn RngCore) -> f64 {
        self.0[prefix.len()]
    }
}

/// Zero-mean Gaussian vector `X = L z` with `Σ = L Lᵀ`.
pub struct GaussianSampler {
    chol: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let chol = nalgebra::Cholesky::new(cov.clone())
            .ok_or_else(|| CocmError::Matrix("covariance is not positive definite".into()))?;
        Ok(GaussianSampler { chol: chol.l() })
    }
}

impl ConditionalSampler for GaussianSampler {
    fn horizon(&self) -> usize {
        self.chol.nrows()
    }

    fn sample(&self, prefix: &[f64], rng: &mut dyn RngCore) -> f64 {
        // recover the driving z_1..z_t by forward substitution
        let t = prefix.len();
        let l = &self.chol;
        let mut z = Vec::with_capacity(t);
        for k in 0..t {
            let s: f64 = (0..k).map(|j| l[(k, j)] * z[j]).sum();
            z.push((prefix[k] - s) / l[(k, k)]);
        }
        let mean: f64 = (0..t).map(|j| l[(t, j)] * z[j]).sum();
        let e: f64 = rng.sample(StandardNormal);
        mean + l[(t, t)] * e
    }
}

/// `X_{t+1} = α_{t+1} X_t + Z_{t+1}` with `X_0 = 0`.
pub struct ArSampler {
    model: ARModel,
}

impl ArSampler {
    pub fn new(model: ARModel) -> Self {
        ArSampler { model }
    }
}

impl ConditionalSampler for ArSampler {
    fn horizon(&self) -> usize {
        self.model.horizon()
    }

    fn sample(&self, prefix: &[f64], rng: &mut dyn RngCore) -> f64 {
        let t = prefix.len();
        let prev = prefix.last().copied().unwrap_or(0.0);
        let z = match &self.model.innovations()[t] {
            Innovation::Normal { sigma } => sigma * rng.sample::<f64, _>(StandardNormal),
            Innovation::Discrete(d) => {
                let u: f64 = rng.gen();
                d.quantile_unchecked(1.0 - u)
            }
        };
        self.model.alphas()[t] * prev + z
    }
}

/// Nested Monte Carlo settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    /// Independent replications of the whole nested estimator.
    pub outer_paths: usize,
    /// Conditional draws at every node of the simulated tree.
    pub inner_samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Upper limit on the total number of draws.
    #[serde(default = "default_max_draws")]
    pub max_draws: u64,
}

fn default_max_draws() -> u64 {
    McConfig::DEFAULT_MAX_DRAWS
}

impl McConfig {
    pub const MIN_INNER_SAMPLES: usize = 1000;
    pub const DEFAULT_MAX_DRAWS: u64 = 2_000_000_000;

    pub fn new(outer_paths: usize, inner_samples: usize, seed: u64) -> Self {
        McConfig {
            outer_paths,
            inner_samples,
            seed,
            max_draws: Self::DEFAULT_MAX_DRAWS,
        }
    }

    /// Total number of draws for horizon `T`: `outer · Σ_{k=1}^T inner^k`.
    pub fn draws(&self, horizon: usize) -> Option<u64> {
        let inner = self.inner_samples as u64;
        let mut level = 1u64;
        let mut total = 0u64;
        for _ in 0..horizon {
            level = level.checked_mul(inner)?;
            total = total.checked_add(level)?;
        }
        total.checked_mul(self.outer_paths as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub replications: Vec<f64>,
}

/// Nested Monte Carlo estimate of `V_0`.
///
/// Each replication simulates a full tree with `inner_samples` branches
/// per node and values it backward with `W_t` on the empirical child laws.
/// Replication `r` uses the ChaCha8 stream `r` under `seed`, so the result
/// does not depend on the thread count. The standard error is the sample
/// standard deviation over replications divided by `√outer_paths`.
pub fn nested_mc_value(
    sampler: &dyn ConditionalSampler,
    spec: &ValuationSpec,
    config: &McConfig,
) -> Result<McEstimate> {
    let horizon = sampler.horizon();
    if horizon == 0 {
        return Err(CocmError::domain("sampler horizon must be ≥ 1"));
    }
    spec.check_horizon(horizon)?;
    if config.inner_samples < McConfig::MIN_INNER_SAMPLES {
        return Err(CocmError::domain(format!(
            "inner_samples = {} is below {}; empirical quantiles would be unstable",
            config.inner_samples,
            McConfig::MIN_INNER_SAMPLES
        )));
    }
    if config.outer_paths < 2 {
        return Err(CocmError::domain(
            "outer_paths must be ≥ 2 to estimate an error",
        ));
    }
    match config.draws(horizon) {
        Some(n) if n <= config.max_draws => {}
        _ => {
            return Err(CocmError::Resource(format!(
                "{} replications of a {}-ary tree of depth {horizon} exceed {} draws",
                config.outer_paths, config.inner_samples, config.max_draws
            )))
        }
    }

    let replications = (0..config.outer_paths)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(r as u64);
            let mut prefix = Vec::with_capacity(horizon);
            nested_value(sampler, spec, config.inner_samples, &mut prefix, &mut rng)
        })
        .collect::<Result<Vec<f64>>>()?;

    let n = replications.len() as f64;
    let estimate = replications.iter().sum::<f64>() / n;
    let var = replications
        .iter()
        .map(|v| (v - estimate).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    Ok(McEstimate {
        estimate,
        standard_error: (var / n).sqrt(),
        replications,
    })
}

fn nested_value(
    sampler: &dyn ConditionalSampler,
    spec: &ValuationSpec,
    inner: usize,
    prefix: &mut Vec<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let t = prefix.len();
    let last = t + 1 == sampler.horizon();
    let mut ys = Vec::with_capacity(inner);
    for _ in 0..inner {
        let x = sampler.sample(prefix, rng);
        let v = if last {
            0.0
        } else {
            prefix.push(x);
            let v = nested_value(sampler, spec, inner, prefix, rng)?;
            prefix.pop();
            v
        };
        ys.push(x + v);
    }
    w_apply_at(&DiscreteDistribution::empirical(ys)?, spec, t)
}
