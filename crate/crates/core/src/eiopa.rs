//! Standard-formula style risk margin for the term life portfolio.
//!
//! The SCR is the increase in best estimate when mortality is stressed by a
//! fixed factor. Method 2 projects future SCRs proportionally to the best
//! estimate; the Article 37 form discounts a given SCR sequence.

use serde::{Deserialize, Serialize};

use crate::error::{CocmError, Result};
use crate::life::{deferred_probs, Cohort, DeferredProbs, MakehamLaw};

/// How the mortality stress is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StressMode {
    /// Scale the Makeham force of mortality.
    #[default]
    Mu,
    /// Scale the one-year death probabilities, capped at 1.
    Q,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EiopaParams {
    #[serde(rename = "coc", default = "default_rate")]
    pub coc_rate: f64,
    #[serde(rename = "stress", default = "default_stress")]
    pub stress_factor: f64,
    /// `rates[k]` is the annual spot rate for maturity `k + 1`. Empty means
    /// no discounting.
    #[serde(rename = "rates", default)]
    pub discount_curve: Vec<f64>,
    #[serde(default)]
    pub stress_mode: StressMode,
}

fn default_rate() -> f64 {
    0.06
}

fn default_stress() -> f64 {
    1.15
}

impl Default for EiopaParams {
    fn default() -> Self {
        EiopaParams {
            coc_rate: default_rate(),
            stress_factor: default_stress(),
            discount_curve: Vec::new(),
            stress_mode: StressMode::Mu,
        }
    }
}

impl EiopaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.coc_rate > 0.0 && self.coc_rate.is_finite()) {
            return Err(CocmError::domain(format!(
                "cost-of-capital rate {} must be > 0",
                self.coc_rate
            )));
        }
        if !(self.stress_factor > 0.0 && self.stress_factor.is_finite()) {
            return Err(CocmError::domain(format!(
                "stress factor {} must be > 0",
                self.stress_factor
            )));
        }
        if let Some(r) = self
            .discount_curve
            .iter()
            .find(|r| !(**r > -1.0 && r.is_finite()))
        {
            return Err(CocmError::domain(format!(
                "discount rate {r} must exceed −1"
            )));
        }
        Ok(())
    }

    /// Spot rate for maturity `k`, `k ≥ 1`.
    fn rate(&self, k: usize) -> Result<f64> {
        if self.discount_curve.is_empty() {
            return Ok(0.0);
        }
        self.discount_curve.get(k - 1).copied().ok_or_else(|| {
            CocmError::domain(format!(
                "discount curve has {} maturities, maturity {k} needed",
                self.discount_curve.len()
            ))
        })
    }
}

/// `BE_i = Σ_{j=i}^T N_0 q_{j−1|0}`, `1 ≤ i ≤ T`.
pub fn best_estimate(cohort: &Cohort, law: &MakehamLaw, i: usize) -> Result<f64> {
    cohort.validate()?;
    best_estimate_q(cohort.n, &deferred_probs(law, cohort), i)
}

pub fn best_estimate_q(n0: usize, probs: &DeferredProbs, i: usize) -> Result<f64> {
    let horizon = probs.horizon();
    if i == 0 || i > horizon {
        return Err(CocmError::domain(format!(
            "best estimate index {i} outside 1..={horizon}"
        )));
    }
    Ok(n0 as f64 * (i..=horizon).map(|j| probs.q_def[j - 1][0]).sum::<f64>())
}

fn stressed_probs(
    cohort: &Cohort,
    law: &MakehamLaw,
    params: &EiopaParams,
) -> Result<DeferredProbs> {
    match params.stress_mode {
        StressMode::Mu => Ok(deferred_probs(&law.scaled(params.stress_factor), cohort)),
        StressMode::Q => {
            let base = deferred_probs(law, cohort);
            DeferredProbs::from_q(
                base.q
                    .iter()
                    .map(|q| (q * params.stress_factor).min(1.0))
                    .collect(),
            )
        }
    }
}

/// `SCR = BE_1(stressed) − BE_1`.
pub fn scr(cohort: &Cohort, law: &MakehamLaw, params: &EiopaParams) -> Result<f64> {
    cohort.validate()?;
    params.validate()?;
    let stressed = stressed_probs(cohort, law, params)?;
    Ok(best_estimate_q(cohort.n, &stressed, 1)? - best_estimate(cohort, law, 1)?)
}

/// `RM = CoC · SCR / BE_1 · Σ_{i=1}^T BE_i`.
pub fn risk_margin_method2(cohort: &Cohort, law: &MakehamLaw, params: &EiopaParams) -> Result<f64> {
    let scr = scr(cohort, law, params)?;
    let probs = deferred_probs(law, cohort);
    let be: Vec<f64> = (1..=cohort.horizon)
        .map(|i| best_estimate_q(cohort.n, &probs, i))
        .collect::<Result<_>>()?;
    if be[0] == 0.0 {
        return Err(CocmError::domain(
            "best estimate BE_1 is zero, the SCR/BE ratio is undefined",
        ));
    }
    Ok(params.coc_rate * scr / be[0] * be.iter().sum::<f64>())
}

/// `RM = CoC · Σ_{t≥0} SCR(t) / (1 + r(t+1))^{t+1}`.
pub fn risk_margin_article37(scrs: &[f64], params: &EiopaParams) -> Result<f64> {
    params.validate()?;
    let mut rm = 0.0;
    for (t, s) in scrs.iter().enumerate() {
        let r = params.rate(t + 1)?;
        rm += s / (1.0 + r).powi(t as i32 + 1);
    }
    Ok(params.coc_rate * rm)
}
