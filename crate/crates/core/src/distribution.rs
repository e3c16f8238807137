//! Finite real-valued distributions.
//!
//! A [`DiscreteDistribution`] is the exact stand-in for a conditional law at
//! a fixed node of a filtration. Support points are kept sorted and unique,
//! so two distributions describing the same law compare equal.

use serde::{Deserialize, Serialize};

use crate::error::{CocmError, Result};

/// Probabilities below this are treated as numerical noise by the model
/// constructors (binomial tails underflow long before they matter).
pub const NEGLIGIBLE_PROB: f64 = 1e-15;

/// Slack used when comparing a CDF level against a quantile level, so that
/// rounding in cumulative sums does not move a quantile across a jump.
const CDF_SLACK: f64 = 1e-14;

/// Serialised as `{"values": [...], "probs": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionRepr", into = "DistributionRepr")]
pub struct DiscreteDistribution {
    values: Vec<f64>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DistributionRepr {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl TryFrom<DistributionRepr> for DiscreteDistribution {
    type Error = CocmError;

    fn try_from(r: DistributionRepr) -> Result<Self> {
        DiscreteDistribution::new(r.values, r.probs)
    }
}

impl From<DiscreteDistribution> for DistributionRepr {
    fn from(d: DiscreteDistribution) -> Self {
        DistributionRepr {
            values: d.values,
            probs: d.probs,
        }
    }
}

impl DiscreteDistribution {
    /// Builds a distribution from support points and nonnegative weights.
    ///
    /// Values need not be sorted; equal values are merged and zero weights
    /// dropped. Weights are renormalised to sum to one.
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.len() != probs.len() {
            return Err(CocmError::invalid(format!(
                "{} support points but {} probabilities",
                values.len(),
                probs.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(CocmError::invalid(format!("non-finite support point {v}")));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(CocmError::invalid(format!("invalid probability {p}")));
        }
        Self::from_weighted(values.into_iter().zip(probs).collect(), 0.0)
    }

    /// Like [`new`](Self::new) but drops weights below `threshold` before
    /// renormalising.
    pub fn with_cutoff(values: Vec<f64>, probs: Vec<f64>, threshold: f64) -> Result<Self> {
        if values.len() != probs.len() {
            return Err(CocmError::invalid("support and probability lengths differ"));
        }
        Self::from_weighted(values.into_iter().zip(probs).collect(), threshold)
    }

    pub fn point_mass(c: f64) -> Self {
        DiscreteDistribution {
            values: vec![c],
            probs: vec![1.0],
            cdf: vec![1.0],
        }
    }

    /// Equal weights on the given points (duplicates accumulate weight).
    pub fn uniform(values: &[f64]) -> Result<Self> {
        let n = values.len();
        Self::new(values.to_vec(), vec![1.0 / n as f64; n])
    }

    /// The empirical law of a sample.
    pub fn empirical(mut sample: Vec<f64>) -> Result<Self> {
        if sample.is_empty() {
            return Err(CocmError::invalid("empty sample"));
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(CocmError::invalid("non-finite sample value"));
        }
        sample.sort_unstable_by(f64::total_cmp);
        let w = 1.0 / sample.len() as f64;
        let mut values = Vec::with_capacity(sample.len());
        let mut probs: Vec<f64> = Vec::with_capacity(sample.len());
        for v in sample {
            if values.last() == Some(&v) {
                *probs.last_mut().unwrap() += w;
            } else {
                values.push(v);
                probs.push(w);
            }
        }
        Ok(Self::from_sorted_unchecked(values, probs))
    }

    fn from_weighted(mut pairs: Vec<(f64, f64)>, threshold: f64) -> Result<Self> {
        pairs.retain(|&(_, p)| p > threshold);
        if pairs.is_empty() {
            return Err(CocmError::invalid("distribution has no positive mass"));
        }
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut values = Vec::with_capacity(pairs.len());
        let mut probs: Vec<f64> = Vec::with_capacity(pairs.len());
        for (v, p) in pairs {
            // -0.0 and 0.0 are the same support point
            let v = if v == 0.0 { 0.0 } else { v };
            if values.last() == Some(&v) {
                *probs.last_mut().unwrap() += p;
            } else {
                values.push(v);
                probs.push(p);
            }
        }
        Ok(Self::from_sorted_unchecked(values, probs))
    }

    /// `values` strictly increasing, `probs` positive.
    fn from_sorted_unchecked(values: Vec<f64>, mut probs: Vec<f64>) -> Self {
        let total: f64 = probs.iter().sum();
        if total != 1.0 {
            probs.iter_mut().for_each(|p| *p /= total);
        }
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        *cdf.last_mut().unwrap() = 1.0;
        DiscreteDistribution { values, probs, cdf }
    }

    /// Support points in increasing order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Cumulative probabilities at each support point; the last is exactly 1.
    pub fn cdf_levels(&self) -> &[f64] {
        &self.cdf
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// `P(Y ≤ y)`.
    pub fn cdf(&self, y: f64) -> f64 {
        match self.values.partition_point(|&v| v <= y) {
            0 => 0.0,
            k => self.cdf[k - 1],
        }
    }

    /// Left-continuous generalised inverse `min{y : F(y) ≥ u}` for `u ∈ (0, 1]`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(CocmError::domain(format!(
                "quantile level {u} outside (0, 1]"
            )));
        }
        Ok(self.quantile_unchecked(u))
    }

    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        let idx = self.cdf.partition_point(|&c| c < u - CDF_SLACK);
        self.values[idx.min(self.values.len() - 1)]
    }

    /// `∫_a^b F⁻¹(u) du` for `0 ≤ a ≤ b ≤ 1`, summed over the steps of the
    /// quantile function.
    pub fn quantile_integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        // first step whose interval (F_{i-1}, F_i] reaches past a
        let start = self.cdf.partition_point(|&c| c <= a);
        let mut total = 0.0;
        let mut lo = a;
        for i in start..self.values.len() {
            let hi = self.cdf[i].min(b);
            if hi > lo {
                total += self.values[i] * (hi - lo);
            }
            if self.cdf[i] >= b {
                break;
            }
            lo = self.cdf[i].max(a);
        }
        total
    }

    /// Law of `−Y`.
    pub fn negate(&self) -> Self {
        let values = self.values.iter().rev().map(|v| -v + 0.0).collect();
        let probs = self.probs.iter().rev().copied().collect();
        Self::from_sorted_unchecked(values, probs)
    }

    /// Law of `Y + λ`.
    pub fn shift(&self, lambda: f64) -> Self {
        self.pushforward(|y| y + lambda)
    }

    /// Law of `c·Y` for `c ≥ 0`.
    pub fn scale(&self, c: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(CocmError::domain(format!(
                "scale factor {c} must be finite and ≥ 0"
            )));
        }
        if c == 0.0 {
            return Ok(Self::point_mass(0.0));
        }
        Ok(self.pushforward(|y| c * y))
    }

    /// Law of `max(Y, 0)`.
    pub fn positive_part(&self) -> Self {
        self.pushforward(|y| y.max(0.0))
    }

    /// Image law under `f`; coinciding images are merged.
    pub fn pushforward(&self, f: impl Fn(f64) -> f64) -> Self {
        let pairs = self.iter().map(|(v, p)| (f(v), p)).collect();
        Self::from_weighted(pairs, 0.0).expect("image of a valid distribution")
    }

    pub fn expectation(&self) -> f64 {
        self.iter().map(|(v, p)| v * p).sum()
    }

    /// `E[(c − Y)_+]`.
    pub fn expected_shortfall_below(&self, c: f64) -> f64 {
        self.iter()
            .take_while(|&(v, _)| v < c)
            .map(|(v, p)| (c - v) * p)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.expectation();
        self.iter().map(|(v, p)| (v - m) * (v - m) * p).sum()
    }
}

/// Binomial(n, q) probabilities for `k = 0..=n`, computed in log space.
pub fn binomial_pmf(n: usize, q: f64) -> Vec<f64> {
    if q <= 0.0 {
        let mut pmf = vec![0.0; n + 1];
        pmf[0] = 1.0;
        return pmf;
    }
    if q >= 1.0 {
        let mut pmf = vec![0.0; n + 1];
        pmf[n] = 1.0;
        return pmf;
    }
    let ln_q = q.ln();
    let ln_1q = (-q).ln_1p();
    let ln_n_fact = libm::lgamma(n as f64 + 1.0);
    (0..=n)
        .map(|k| {
            let ln_choose =
                ln_n_fact - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0);
            (ln_choose + k as f64 * ln_q + (n - k) as f64 * ln_1q).exp()
        })
        .collect()
}

/// Binomial(n, q) as a distribution on `{0, ..., n}` with negligible tail
/// probabilities removed.
pub fn binomial(n: usize, q: f64) -> DiscreteDistribution {
    let pmf = binomial_pmf(n, q);
    let values = (0..=n).map(|k| k as f64).collect();
    DiscreteDistribution::with_cutoff(values, pmf, NEGLIGIBLE_PROB)
        .expect("binomial mode carries mass")
}
