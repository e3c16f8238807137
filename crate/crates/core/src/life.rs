//! Term life insurance run-off: `N_0` independent lives aged `x`, each
//! paying one unit on death within `T` years.
//!
//! Deaths follow the nested binomial model
//! `D_{t+1} | N_t ~ Bin(N_t, q_{x+t})`, `N_{t+1} = N_t − D_{t+1}`, which is
//! Markov in the number of survivors. The value of the remaining death
//! payments is therefore a function `G_t(n)` with
//!
//! ```text
//! G_T(n) = 0,   G_t(n) = W_t(D + G_{t+1}(n − D)),  D ~ Bin(n, q_{x+t})
//! ```

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::{binomial_pmf, DiscreteDistribution, NEGLIGIBLE_PROB};
use crate::error::{CocmError, Result};
use crate::oracle::ScenarioTree;
use crate::valuation::{w_step, ValuationSpec};

/// Largest portfolio the exact recursion accepts by default.
pub const DEFAULT_MAX_CONTRACTS: usize = 5000;
/// Largest portfolio for the exact moment sums.
pub const MAX_MOMENT_CONTRACTS: usize = 2000;
/// Binomial probabilities at or below this are left out of the moment sums.
const MOMENT_CUTOFF: f64 = 1e-22;

/// Direction of the age term in the force of mortality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HazardSign {
    /// `μ_x = α + β e^{γx}`, increasing with age.
    #[default]
    Increasing,
    /// `μ_x = α + β e^{−γx}`.
    Decreasing,
}

/// Makeham force of mortality `μ_x = α + β e^{±γx}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MakehamLaw {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    #[serde(default)]
    pub hazard: HazardSign,
}

impl Default for MakehamLaw {
    fn default() -> Self {
        Self::M90
    }
}

impl MakehamLaw {
    /// Swedish M90 table for males.
    pub const M90: MakehamLaw = MakehamLaw {
        alpha: 0.001,
        beta: 0.000012,
        gamma: 0.101314,
        hazard: HazardSign::Increasing,
    };

    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let law = MakehamLaw {
            alpha,
            beta,
            gamma,
            hazard: HazardSign::Increasing,
        };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.gamma > 0.0)
            || ![self.alpha, self.beta, self.gamma]
                .iter()
                .all(|v| v.is_finite())
        {
            return Err(CocmError::domain(format!(
                "Makeham parameters need alpha ≥ 0, beta ≥ 0, gamma > 0; got {}, {}, {}",
                self.alpha, self.beta, self.gamma
            )));
        }
        Ok(())
    }

    fn signed_gamma(&self) -> f64 {
        match self.hazard {
            HazardSign::Increasing => self.gamma,
            HazardSign::Decreasing => -self.gamma,
        }
    }

    /// Force of mortality at age `x`.
    pub fn mu(&self, x: f64) -> f64 {
        self.alpha + self.beta * (self.signed_gamma() * x).exp()
    }

    /// `∫_x^{x+u} μ_s ds`.
    pub fn cumulative_hazard(&self, x: f64, u: f64) -> f64 {
        let g = self.signed_gamma();
        self.alpha * u + self.beta / g * (g * x).exp() * (g * u).exp_m1()
    }

    /// `S_x(u) = exp(−∫_x^{x+u} μ_s ds)`.
    pub fn survival(&self, x: f64, u: f64) -> f64 {
        (-self.cumulative_hazard(x, u)).exp()
    }

    /// One-year death probability at age `x`.
    pub fn q(&self, x: f64) -> f64 {
        -(-self.cumulative_hazard(x, 1.0)).exp_m1()
    }

    /// The law with force of mortality `factor · μ`.
    pub fn scaled(&self, factor: f64) -> Self {
        MakehamLaw {
            alpha: self.alpha * factor,
            beta: self.beta * factor,
            ..*self
        }
    }
}

/// A homogeneous group of contracts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cohort {
    /// Number of contracts `N_0`.
    pub n: usize,
    /// Age `x` at time 0.
    pub age: f64,
    /// Contract horizon `T` in years.
    #[serde(rename = "T")]
    pub horizon: usize,
}

impl Cohort {
    pub fn new(n: usize, age: f64, horizon: usize) -> Result<Self> {
        let c = Cohort { n, age, horizon };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(CocmError::domain("contract horizon T must be ≥ 1"));
        }
        if !(self.age >= 0.0 && self.age.is_finite()) {
            return Err(CocmError::domain(format!("age {} must be ≥ 0", self.age)));
        }
        Ok(())
    }
}

/// `q_t = q_{x+t}`, survival `p̃_i = Π_{k<i} (1 − q_k)` and deferred death
/// probabilities `q_{i|l} = q_i Π_{k=l}^{i−1} (1 − q_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeferredProbs {
    pub q: Vec<f64>,
    /// `p̃_0, …, p̃_T`.
    pub p_tilde: Vec<f64>,
    /// `q_def[i][l] = q_{i|l}` for `l ≤ i`, zero above the diagonal.
    pub q_def: Vec<Vec<f64>>,
}

impl DeferredProbs {
    pub fn from_q(q: Vec<f64>) -> Result<Self> {
        if let Some(bad) = q.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(CocmError::domain(format!(
                "death probability {bad} outside [0, 1]"
            )));
        }
        let n = q.len();
        let mut p_tilde = vec![1.0; n + 1];
        for i in 0..n {
            p_tilde[i + 1] = p_tilde[i] * (1.0 - q[i]);
        }
        let mut q_def = vec![vec![0.0; n]; n];
        for (i, row) in q_def.iter_mut().enumerate() {
            let mut surv = 1.0;
            for l in (0..=i).rev() {
                if l < i {
                    surv *= 1.0 - q[l];
                }
                row[l] = q[i] * surv;
            }
        }
        Ok(DeferredProbs { q, p_tilde, q_def })
    }

    pub fn horizon(&self) -> usize {
        self.q.len()
    }

    /// `E[D_1 + … + D_T] / N_0 = 1 − p̃_T`.
    pub fn death_probability(&self) -> f64 {
        self.q_def.iter().map(|r| r[0]).sum()
    }
}

/// Death probabilities for `cohort` under `law`, indexed by attained age.
pub fn deferred_probs(law: &MakehamLaw, cohort: &Cohort) -> DeferredProbs {
    let q = (0..cohort.horizon)
        .map(|t| law.q(cohort.age + t as f64))
        .collect();
    DeferredProbs::from_q(q).expect("Makeham probabilities lie in [0, 1]")
}

/// `ln k!` for `k ≤ n`.
struct LnFactorials(Vec<f64>);

impl LnFactorials {
    fn new(n: usize) -> Self {
        LnFactorials((0..=n).map(|k| libm::lgamma(k as f64 + 1.0)).collect())
    }

    /// Bin(n, q) probabilities above `cutoff`, as `(lo, pmf[lo..=hi])`.
    /// Scans out from the mode, so the cost is proportional to the retained
    /// support.
    fn support(&self, n: usize, q: f64, cutoff: f64) -> (usize, Vec<f64>) {
        if n == 0 || q <= 0.0 {
            return (0, vec![1.0]);
        }
        if q >= 1.0 {
            return (n, vec![1.0]);
        }
        let (ln_q, ln_1q) = (q.ln(), (-q).ln_1p());
        let f = &self.0;
        let pmf =
            |k: usize| (f[n] - f[k] - f[n - k] + k as f64 * ln_q + (n - k) as f64 * ln_1q).exp();
        let mode = (((n + 1) as f64 * q).floor() as usize).min(n);
        let mut lo = mode;
        while lo > 0 && pmf(lo - 1) > cutoff {
            lo -= 1;
        }
        let mut hi = mode;
        while hi < n && pmf(hi + 1) > cutoff {
            hi += 1;
        }
        (lo, (lo..=hi).map(pmf).collect())
    }

    /// Bin(n, q) with probabilities `≤ NEGLIGIBLE_PROB` dropped.
    fn binomial(&self, n: usize, q: f64) -> DiscreteDistribution {
        let (lo, probs) = self.support(n, q, NEGLIGIBLE_PROB);
        let values = (lo..lo + probs.len()).map(|k| k as f64).collect();
        DiscreteDistribution::new(values, probs).expect("mode carries mass")
    }
}

/// `G_t(n)` over `t = 0..=T`, `n = 0..=N_0`, with the recorded capital
/// requirements and buffer terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub n0: usize,
    pub horizon: usize,
    /// `g[t][n] = G_t(n)`, `t = 0..=T`.
    pub g: Vec<Vec<f64>>,
    /// `risk[t][n] = R_t(−Y_{t+1})` when `N_t = n`, `t = 0..T`.
    pub risk: Vec<Vec<f64>>,
    /// `bound_term[t][n] = R_t(−Y_{t+1}) − G_t(n)`.
    pub bound_term: Vec<Vec<f64>>,
    /// `Σ_t E[D_t]`.
    pub best_estimate: f64,
    /// `Σ_t η_t E[R_t(−Y_{t+1}) − V_t]` under the law of `N_t`; an upper
    /// bound for the centred value when the utility is the expectation.
    pub bound: f64,
}

impl ValueTable {
    /// `G_0(N_0)`, the value of the uncentred death payments.
    pub fn value_raw(&self) -> f64 {
        self.g[0][self.n0]
    }

    /// `V_0(D − E[D]) = G_0(N_0) − BE`.
    pub fn value0(&self) -> f64 {
        self.value_raw() - self.best_estimate
    }

    /// CSV with columns `t,n,G,risk,bound_term` for `t < T`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "n", "G", "risk", "bound_term"])?;
        for t in 0..self.horizon {
            for n in 0..=self.n0 {
                w.write_record([
                    t.to_string(),
                    n.to_string(),
                    self.g[t][n].to_string(),
                    self.risk[t][n].to_string(),
                    self.bound_term[t][n].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Exact nested binomial valuation of `cohort`.
pub fn value_recursion(
    cohort: &Cohort,
    law: &MakehamLaw,
    spec: &ValuationSpec,
) -> Result<ValueTable> {
    cohort.validate()?;
    law.validate()?;
    let probs = deferred_probs(law, cohort);
    value_recursion_q(cohort.n, &probs, spec, 1.0, DEFAULT_MAX_CONTRACTS)
}

/// The recursion for given one-year death probabilities, a benefit of
/// `benefit` per death and a cap on `N_0`.
pub fn value_recursion_q(
    n0: usize,
    probs: &DeferredProbs,
    spec: &ValuationSpec,
    benefit: f64,
    max_contracts: usize,
) -> Result<ValueTable> {
    if n0 > max_contracts {
        return Err(CocmError::Resource(format!(
            "N_0 = {n0} exceeds the exact-recursion limit {max_contracts}; \
             use the Gaussian approximation for large portfolios"
        )));
    }
    if !(benefit >= 0.0 && benefit.is_finite()) {
        return Err(CocmError::domain(format!("benefit {benefit} must be ≥ 0")));
    }
    let horizon = probs.horizon();
    if horizon == 0 {
        return Err(CocmError::domain("contract horizon T must be ≥ 1"));
    }
    spec.check_horizon(horizon)?;
    let lnf = LnFactorials::new(n0);

    let mut g = vec![vec![0.0; n0 + 1]; horizon + 1];
    let mut risk = vec![vec![0.0; n0 + 1]; horizon];
    let mut bound_term = vec![vec![0.0; n0 + 1]; horizon];
    for t in (0..horizon).rev() {
        let eta = spec.eta_at(t)?;
        let next = &g[t + 1];
        let steps: Vec<(f64, f64)> = (0..=n0)
            .into_par_iter()
            .map(|n| {
                let deaths = lnf.binomial(n, probs.q[t]);
                let law = step_law(&deaths, n, next, benefit)?;
                let s = w_step(&law, spec, eta);
                Ok((s.value, s.capital))
            })
            .collect::<Result<_>>()?;
        for (n, (v, r)) in steps.into_iter().enumerate() {
            g[t][n] = v;
            risk[t][n] = r;
            bound_term[t][n] = r - v;
        }
    }

    let best_estimate = benefit * n0 as f64 * probs.death_probability();
    let mut bound = 0.0;
    for (t, terms) in bound_term.iter().enumerate().take(horizon) {
        let state = forward_law(n0, probs.p_tilde[t]);
        let expected: f64 = state.iter().map(|(n, p)| p * terms[n as usize]).sum();
        bound += spec.eta_at(t)? * expected;
    }
    Ok(ValueTable {
        n0,
        horizon,
        g,
        risk,
        bound_term,
        best_estimate,
        bound,
    })
}

/// Law of `b·D + G_{t+1}(n − D)`.
fn step_law(
    deaths: &DiscreteDistribution,
    n: usize,
    next: &[f64],
    benefit: f64,
) -> Result<DiscreteDistribution> {
    let values = deaths
        .values()
        .iter()
        .map(|&d| benefit * d + next[n - d as usize])
        .collect();
    DiscreteDistribution::new(values, deaths.probs().to_vec())
}

fn forward_law(n0: usize, p: f64) -> DiscreteDistribution {
    let values = (0..=n0).map(|k| k as f64).collect();
    DiscreteDistribution::new(values, binomial_pmf(n0, p)).expect("binomial law")
}

/// Law of the number of survivors `N_t ~ Bin(N_0, p̃_t)`.
pub fn forward_state_dist(
    cohort: &Cohort,
    law: &MakehamLaw,
    t: usize,
) -> Result<DiscreteDistribution> {
    if t > cohort.horizon {
        return Err(CocmError::domain(format!(
            "time {t} beyond horizon {}",
            cohort.horizon
        )));
    }
    Ok(forward_law(
        cohort.n,
        deferred_probs(law, cohort).p_tilde[t],
    ))
}

/// Fully enumerated scenario tree of the death counts, using the same
/// truncated binomial transition laws as [`value_recursion`].
pub fn enumerate_tree(cohort: &Cohort, law: &MakehamLaw) -> Result<ScenarioTree> {
    cohort.validate()?;
    let probs = deferred_probs(law, cohort);
    let lnf = LnFactorials::new(cohort.n);
    let mut tree = ScenarioTree::new();
    let mut frontier = vec![(ScenarioTree::ROOT, cohort.n)];
    for t in 0..cohort.horizon {
        let mut next = Vec::new();
        for (node, n) in frontier {
            let deaths = lnf.binomial(n, probs.q[t]);
            for (d, p) in deaths.iter() {
                let child = tree.add_child(node, p, d)?;
                next.push((child, n - d as usize));
            }
        }
        frontier = next;
    }
    tree.validate()?;
    Ok(tree)
}

/// `E[D_i]` and `E[D_i D_j]`, `i, j = 1..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub second: DMatrix<f64>,
}

impl Moments {
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.mean.len();
        DMatrix::from_fn(n, n, |i, j| {
            self.second[(i, j)] - self.mean[i] * self.mean[j]
        })
    }
}

/// Moments of the yearly death counts by direct summation over
/// `N_i ~ Bin(N_0, p̃_i)`, `D_{i+1} | N_i ~ Bin(N_i, q_i)` and
/// `D_{j+1} | N_{i+1} ~ Bin(N_{i+1}, q_{j|i+1})`.
pub fn moments(cohort: &Cohort, law: &MakehamLaw) -> Result<Moments> {
    cohort.validate()?;
    moments_q(cohort.n, &deferred_probs(law, cohort))
}

pub fn moments_q(n0: usize, probs: &DeferredProbs) -> Result<Moments> {
    if n0 > MAX_MOMENT_CONTRACTS {
        return Err(CocmError::Resource(format!(
            "exact moment sums are limited to N_0 ≤ {MAX_MOMENT_CONTRACTS}, got {n0}"
        )));
    }
    let horizon = probs.horizon();
    let mean: Vec<f64> = (0..horizon)
        .map(|i| n0 as f64 * probs.q_def[i][0])
        .collect();
    let mut second = DMatrix::zeros(horizon, horizon);
    let lnf = LnFactorials::new(n0);
    for i in 0..horizon {
        let (n_lo, state) = lnf.support(n0, probs.p_tilde[i], MOMENT_CUTOFF);
        let mut sq = 0.0;
        let mut cross = vec![0.0; horizon];
        for (n, &pn) in (n_lo..).zip(&state) {
            let (x_lo, dx) = lnf.support(n, probs.q[i], MOMENT_CUTOFF);
            for (x, &px) in (x_lo..).zip(&dx) {
                let w = pn * px;
                sq += w * (x * x) as f64;
                if x == 0 {
                    continue;
                }
                for (j, c) in cross.iter_mut().enumerate().skip(i + 1) {
                    let (y_lo, dy) = lnf.support(n - x, probs.q_def[j][i + 1], MOMENT_CUTOFF);
                    let s: f64 = (y_lo..).zip(&dy).map(|(y, &py)| (x * y) as f64 * py).sum();
                    *c += w * s;
                }
            }
        }
        second[(i, i)] = sq;
        for j in i + 1..horizon {
            second[(i, j)] = cross[j];
            second[(j, i)] = cross[j];
        }
    }
    Ok(Moments { mean, second })
}

/// Covariance of the death counts from the categorical year of death of
/// each life: `Var D_i = N_0 q(1 − q)`, `Cov(D_i, D_j) = −N_0 q_i q_j` with
/// `q_i = q_{i−1|0}`.
pub fn multinomial_cov_oracle(cohort: &Cohort, law: &MakehamLaw) -> DMatrix<f64> {
    multinomial_cov_q(cohort.n, &deferred_probs(law, cohort))
}

pub fn multinomial_cov_q(n0: usize, probs: &DeferredProbs) -> DMatrix<f64> {
    let horizon = probs.horizon();
    let n = n0 as f64;
    DMatrix::from_fn(horizon, horizon, |i, j| {
        let (qi, qj) = (probs.q_def[i][0], probs.q_def[j][0]);
        if i == j {
            n * qi * (1.0 - qi)
        } else {
            -n * qi * qj
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::binomial;
    use crate::oracle::value_exact;
    use crate::valuation::w_apply;

    const Q50: f64 = 0.002_997_078_074_548_411;
    const P_TILDE_10: f64 = 0.957_977_460_652_279_7;

    fn m90() -> MakehamLaw {
        MakehamLaw::M90
    }

    /// Composite Simpson for the cumulative hazard.
    fn hazard_quadrature(law: &MakehamLaw, x: f64, u: f64) -> f64 {
        let n = 2000;
        let h = u / n as f64;
        let mut s = law.mu(x) + law.mu(x + u);
        for i in 1..n {
            s += law.mu(x + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn survival_examples() {
        let law = m90();
        assert_eq!(law.survival(50.0, 0.0), 1.0);
        let flat = MakehamLaw::new(0.02, 0.0, 0.1).unwrap();
        assert!((flat.survival(40.0, 3.0) - (-0.06f64).exp()).abs() < 1e-15);
        let q = 1.0 - law.survival(50.0, 1.0);
        assert!((q - 3.01e-3).abs() < 2e-5);
        assert!((law.q(50.0) - Q50).abs() < 1e-15);
        for (x, u) in [(50.0, 1.0), (30.0, 7.5), (80.0, 2.0)] {
            let quad = hazard_quadrature(&law, x, u);
            assert!((law.cumulative_hazard(x, u) - quad).abs() < 1e-12 * quad.max(1.0));
        }
        let printed = MakehamLaw {
            hazard: HazardSign::Decreasing,
            ..law
        };
        let quad = hazard_quadrature(&printed, 50.0, 4.0);
        assert!((printed.cumulative_hazard(50.0, 4.0) - quad).abs() < 1e-12);
        assert!(printed.q(60.0) < printed.q(50.0));
    }

    #[test]
    fn deferred_probability_identities() {
        let cohort = Cohort::new(1000, 50.0, 10).unwrap();
        let p = deferred_probs(&m90(), &cohort);
        for i in 0..10 {
            assert_eq!(p.q_def[i][i], p.q[i]);
        }
        let total: f64 = (0..10).map(|i| p.q_def[i][0]).sum::<f64>() + p.p_tilde[10];
        assert!((total - 1.0).abs() < 1e-15);
        assert!(p.q.windows(2).all(|w| w[0] < w[1]));
        assert!((p.p_tilde[10] - P_TILDE_10).abs() < 1e-14);
    }

    #[test]
    fn truncated_binomial_matches_reference() {
        let lnf = LnFactorials::new(1200);
        for (n, q) in [(1, 0.3), (7, 0.003), (1000, 0.003), (1200, 0.4)] {
            assert_eq!(lnf.binomial(n, q), binomial(n, q));
        }
    }

    #[test]
    fn recursion_examples() {
        let spec = ValuationSpec::default();
        let cohort = Cohort::new(6, 50.0, 3).unwrap();
        let table = value_recursion(&cohort, &m90(), &spec).unwrap();
        assert!(table.g.iter().all(|row| row[0] == 0.0));

        let one = Cohort::new(40, 50.0, 1).unwrap();
        let t1 = value_recursion(&one, &m90(), &spec).unwrap();
        assert!((t1.g[0][40] - w_apply(&binomial(40, Q50), &spec)).abs() < 1e-14);
        assert!((t1.best_estimate - 40.0 * Q50).abs() < 1e-13);
    }

    #[test]
    fn recursion_matches_tree() {
        let spec = ValuationSpec::default();
        let cohort = Cohort::new(4, 50.0, 3).unwrap();
        let table = value_recursion(&cohort, &m90(), &spec).unwrap();
        let tree = enumerate_tree(&cohort, &m90()).unwrap();
        let v = value_exact(&tree, &spec).unwrap();
        assert!((v[0] - table.value_raw()).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_contracts_and_bounded() {
        for spec in [
            ValuationSpec::default(),
            ValuationSpec::es(0.01, 0.06).unwrap(),
        ] {
            let cohort = Cohort::new(60, 50.0, 6).unwrap();
            let table = value_recursion(&cohort, &m90(), &spec).unwrap();
            for row in &table.g {
                assert!(row.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            }
            assert!(table.bound >= table.value0());
        }
    }

    #[test]
    fn homogeneity_and_zero_mortality() {
        let spec = ValuationSpec::es(0.05, 0.06).unwrap();
        let probs = deferred_probs(&m90(), &Cohort::new(1, 60.0, 4).unwrap());
        let a = value_recursion_q(30, &probs, &spec, 1.0, 100).unwrap();
        let b = value_recursion_q(30, &probs, &spec, 2.5, 100).unwrap();
        assert!((b.value_raw() - 2.5 * a.value_raw()).abs() < 1e-12);
        let zero = DeferredProbs::from_q(vec![0.0; 4]).unwrap();
        let z = value_recursion_q(30, &zero, &spec, 1.0, 100).unwrap();
        assert!(z.g.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn per_period_eta() {
        let cohort = Cohort::new(20, 50.0, 3).unwrap();
        let flat = value_recursion(&cohort, &m90(), &ValuationSpec::default()).unwrap();
        let same = ValuationSpec::default()
            .with_eta_per_period(vec![0.06; 3])
            .unwrap();
        assert_eq!(value_recursion(&cohort, &m90(), &same).unwrap(), flat);
        let high = ValuationSpec::default()
            .with_eta_per_period(vec![0.06, 0.06, 0.5])
            .unwrap();
        let t = value_recursion(&cohort, &m90(), &high).unwrap();
        assert!(t.value_raw() > flat.value_raw());
    }

    #[test]
    fn contract_cap() {
        let cohort = Cohort::new(5001, 50.0, 1).unwrap();
        assert!(matches!(
            value_recursion(&cohort, &m90(), &ValuationSpec::default()),
            Err(CocmError::Resource(_))
        ));
    }

    #[test]
    fn forward_states() {
        let cohort = Cohort::new(1000, 50.0, 10).unwrap();
        let s0 = forward_state_dist(&cohort, &m90(), 0).unwrap();
        assert_eq!(s0, DiscreteDistribution::point_mass(1000.0));
        let s = forward_state_dist(&cohort, &m90(), 10).unwrap();
        assert!((s.expectation() / (1000.0 * P_TILDE_10) - 1.0).abs() < 1e-6);
        assert!(forward_state_dist(&cohort, &m90(), 11).is_err());
    }

    #[test]
    fn moment_examples() {
        let law = m90();
        let single = Cohort::new(1, 50.0, 5).unwrap();
        let m = moments(&single, &law).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert!(m.second[(i, j)].abs() < 1e-18);
                }
            }
        }
        let cohort = Cohort::new(50, 50.0, 8).unwrap();
        let m = moments(&cohort, &law).unwrap();
        let p = deferred_probs(&law, &cohort);
        assert!((m.mean[0] - 50.0 * p.q_def[0][0]).abs() < 1e-15);
        let cov = m.covariance();
        let oracle = multinomial_cov_oracle(&cohort, &law);
        assert!((cov - &oracle).amax() < 1e-9);
        // total deaths are Bin(N_0, P(death ≤ T))
        let pd = p.death_probability();
        assert!((oracle.sum() - 50.0 * pd * (1.0 - pd)).abs() < 1e-12);
        assert!(moments(&Cohort::new(2001, 50.0, 2).unwrap(), &law).is_err());
        let largest = Cohort::new(2000, 50.0, 10).unwrap();
        let cov = moments(&largest, &law).unwrap().covariance();
        assert!((cov - multinomial_cov_oracle(&largest, &law)).amax() < 1e-9);
    }

    #[test]
    fn oracle_signs() {
        let c = multinomial_cov_oracle(&Cohort::new(7, 70.0, 6).unwrap(), &m90());
        for i in 0..6 {
            assert!(c[(i, i)] > 0.0);
            for j in 0..6 {
                if i != j {
                    assert!(c[(i, j)] <= 0.0);
                }
            }
        }
    }

    #[test]
    fn table_csv() {
        let table = value_recursion(
            &Cohort::new(2, 50.0, 2).unwrap(),
            &m90(),
            &ValuationSpec::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,n,G,risk,bound_term\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 3);
    }

    #[test]
    fn json_forms() {
        let c: Cohort = serde_json::from_str(r#"{"n":10,"age":50,"T":3}"#).unwrap();
        assert_eq!(c, Cohort::new(10, 50.0, 3).unwrap());
        let l: MakehamLaw =
            serde_json::from_str(r#"{"alpha":0.001,"beta":0.000012,"gamma":0.101314}"#).unwrap();
        assert_eq!(l, MakehamLaw::M90);
        let d: MakehamLaw = serde_json::from_str(
            r#"{"alpha":0.001,"beta":0.000012,"gamma":0.101314,"hazard":"decreasing"}"#,
        )
        .unwrap();
        assert_eq!(d.hazard, HazardSign::Decreasing);
        assert!(serde_json::from_str::<Cohort>(r#"{"n":1,"age":5,"T":2,"x":1}"#).is_err());
    }
}
