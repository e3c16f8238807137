//! Autoregressive cash flows `X_t = α_t X_{t−1} + Z_t`, `X_0 = 0`, with
//! innovations `Z_t` independent of the past.
//!
//! With `β_T = 1` and `β_t = 1 + β_{t+1} α_{t+1}` the value is affine in the
//! current state,
//!
//! ```text
//! V_t = δ_t + β_{t+1} α_{t+1} X_t,   δ_{t−1} = δ_t + |β_t| W_{t−1}(sign(β_t) Z_t)
//! ```
//!
//! so `V_0 = Σ_t |β_{t+1}| W_t(sign(β_{t+1}) Z_{t+1})`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::distribution::DiscreteDistribution;
use crate::error::{CocmError, Result};
use crate::valuation::{w_apply, w_normal_any, ValuationSpec};

/// Law of one innovation `Z_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InnovationRepr", into = "InnovationRepr")]
pub enum Innovation {
    /// `N(0, σ²)`.
    Normal {
        sigma: f64,
    },
    Discrete(DiscreteDistribution),
}

impl Innovation {
    pub fn normal(sigma: f64) -> Result<Self> {
        if sigma > 0.0 && sigma.is_finite() {
            Ok(Innovation::Normal { sigma })
        } else {
            Err(CocmError::domain(format!(
                "innovation sigma {sigma} must be positive"
            )))
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Innovation::Normal { sigma } => sigma * sigma,
            Innovation::Discrete(d) => d.variance(),
        }
    }

    /// `W(s Z)` for `s = ±1`.
    fn signed_value(&self, negative: bool, spec: &ValuationSpec) -> Result<f64> {
        match self {
            // symmetric law: the sign does not matter
            Innovation::Normal { sigma } => Ok(sigma * w_normal_any(spec)?),
            Innovation::Discrete(d) if negative => Ok(w_apply(&d.negate(), spec)),
            Innovation::Discrete(d) => Ok(w_apply(d, spec)),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum InnovationRepr {
    NormalSigma(f64),
    Discrete(DiscreteDistribution),
}

impl TryFrom<InnovationRepr> for Innovation {
    type Error = CocmError;

    fn try_from(r: InnovationRepr) -> Result<Self> {
        match r {
            InnovationRepr::NormalSigma(s) => Innovation::normal(s),
            InnovationRepr::Discrete(d) => Ok(Innovation::Discrete(d)),
        }
    }
}

impl From<Innovation> for InnovationRepr {
    fn from(i: Innovation) -> Self {
        match i {
            Innovation::Normal { sigma } => InnovationRepr::NormalSigma(sigma),
            Innovation::Discrete(d) => InnovationRepr::Discrete(d),
        }
    }
}

/// An AR(1) cash flow over `T` periods.
///
/// JSON: `{"T": 3, "alpha": 0.5 | [..], "innovation": {"normal_sigma": 1} | [..]}`
/// where `alpha` and `innovation` are either one value for every period or
/// one per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArRepr", into = "ArRepr")]
pub struct ARModel {
    alphas: Vec<f64>,
    innovations: Vec<Innovation>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn expand(self, n: usize, what: &str) -> Result<Vec<T>> {
        match self {
            OneOrMany::One(v) => Ok(vec![v; n]),
            OneOrMany::Many(vs) if vs.len() == n => Ok(vs),
            OneOrMany::Many(vs) => Err(CocmError::domain(format!(
                "{what} has {} entries, expected T = {n}",
                vs.len()
            ))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArRepr {
    #[serde(rename = "T")]
    horizon: usize,
    alpha: OneOrMany<f64>,
    innovation: OneOrMany<Innovation>,
}

impl TryFrom<ArRepr> for ARModel {
    type Error = CocmError;

    fn try_from(r: ArRepr) -> Result<Self> {
        let alphas = r.alpha.expand(r.horizon, "alpha")?;
        let innovations = r.innovation.expand(r.horizon, "innovation")?;
        ARModel::new(alphas, innovations)
    }
}

impl From<ARModel> for ArRepr {
    fn from(m: ARModel) -> Self {
        ArRepr {
            horizon: m.horizon(),
            alpha: OneOrMany::Many(m.alphas),
            innovation: OneOrMany::Many(m.innovations),
        }
    }
}

impl ARModel {
    /// `alphas[t − 1] = α_t` and `innovations[t − 1]` is the law of `Z_t`.
    pub fn new(alphas: Vec<f64>, innovations: Vec<Innovation>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(CocmError::domain("AR horizon T must be ≥ 1"));
        }
        if alphas.len() != innovations.len() {
            return Err(CocmError::domain(format!(
                "{} coefficients but {} innovation laws",
                alphas.len(),
                innovations.len()
            )));
        }
        if alphas.iter().any(|a| !a.is_finite()) {
            return Err(CocmError::domain("AR coefficients must be finite"));
        }
        for z in &innovations {
            if let Innovation::Normal { sigma } = z {
                Innovation::normal(*sigma)?;
            }
        }
        Ok(ARModel {
            alphas,
            innovations,
        })
    }

    /// Constant coefficient and one innovation law for every period.
    pub fn iid(horizon: usize, alpha: f64, innovation: Innovation) -> Result<Self> {
        Self::new(vec![alpha; horizon], vec![innovation; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn innovations(&self) -> &[Innovation] {
        &self.innovations
    }

    /// `(β_1, …, β_T)`.
    pub fn betas(&self) -> Vec<f64> {
        let n = self.horizon();
        let mut beta = vec![1.0; n];
        for t in (0..n - 1).rev() {
            beta[t] = 1.0 + beta[t + 1] * self.alphas[t + 1];
        }
        beta
    }

    /// `(δ_0, …, δ_{T−1})`.
    pub fn deltas(&self, spec: &ValuationSpec) -> Result<Vec<f64>> {
        spec.require_constant_eta()?;
        let beta = self.betas();
        let n = self.horizon();
        let mut delta = vec![0.0; n];
        let mut acc = 0.0;
        for t in (0..n).rev() {
            // β_{t+1} and Z_{t+1} live at index t
            let b = beta[t];
            if b != 0.0 {
                acc += b.abs() * self.innovations[t].signed_value(b < 0.0, spec)?;
            }
            delta[t] = acc;
        }
        Ok(delta)
    }

    /// `V_0`.
    pub fn value0(&self, spec: &ValuationSpec) -> Result<f64> {
        Ok(self.deltas(spec)?[0])
    }

    /// `V_t = δ_t + β_{t+1} α_{t+1} x_t` for `0 ≤ t ≤ T − 1`.
    pub fn value_t(&self, spec: &ValuationSpec, t: usize, x_t: f64) -> Result<f64> {
        if t >= self.horizon() {
            return Err(CocmError::domain(format!(
                "time {t} outside 0..{}",
                self.horizon() - 1
            )));
        }
        let delta = self.deltas(spec)?;
        // β_{t+1} and α_{t+1} both sit at index t
        let slope = self.betas()[t] * self.alphas[t];
        Ok(delta[t] + slope * x_t)
    }

    /// Covariance of `(X_1, …, X_T)`: `A diag(Var Z) Aᵀ` with
    /// `A_{ts} = α_{s+1} ⋯ α_t`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.horizon();
        let mut a = DMatrix::zeros(n, n);
        for s in 0..n {
            a[(s, s)] = 1.0;
            for t in s + 1..n {
                a[(t, s)] = a[(t - 1, s)] * self.alphas[t];
            }
        }
        let var = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            n,
            self.innovations.iter().map(Innovation::variance),
        ));
        &a * var * a.transpose()
    }
}

/// `f(α) = Σ_{t=1}^T Σ_{j=0}^{T−t} α^j = (α^{T+1} − (T+1)α + T) / (1 − α)²`,
/// the multiplier of `W_0(Z_1)` for constant `α` and iid innovations.
pub fn f_alpha(alpha: f64, horizon: usize) -> Result<f64> {
    if !(alpha.abs() < 1.0) {
        return Err(CocmError::domain(format!(
            "|alpha| = {} must be < 1",
            alpha.abs()
        )));
    }
    let t = horizon as f64;
    if (1.0 - alpha).abs() < 0.5 {
        // the closed form cancels catastrophically near α = 1
        let mut sum = 0.0;
        let mut pow = 1.0;
        for j in 0..horizon {
            sum += (horizon - j) as f64 * pow;
            pow *= alpha;
        }
        Ok(sum)
    } else {
        Ok((alpha.powi(horizon as i32 + 1) - (t + 1.0) * alpha + t) / (1.0 - alpha).powi(2))
    }
}
