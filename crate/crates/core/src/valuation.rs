//! The one-step operator
//! `W(Y) = R(−Y) − U((R(−Y) − Y)_+) / (1 + η)` and its relatives.

use serde::{Deserialize, Serialize};

use crate::distribution::DiscreteDistribution;
use crate::error::{CocmError, Result};
use crate::normal;
use crate::risk::{capital_requirement, utility, RiskMeasureKind, SpectralMeasure};

/// How the capital provider measures its compensation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "UtilityRepr", into = "UtilityRepr")]
pub enum UtilitySpec {
    /// Conditional expectation, i.e. the Lebesgue spectral measure.
    Expectation,
    Spectral(SpectralMeasure),
}

impl UtilitySpec {
    pub fn to_spectral(&self) -> SpectralMeasure {
        match self {
            UtilitySpec::Expectation => SpectralMeasure::lebesgue(),
            UtilitySpec::Spectral(m) => m.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum UtilityRepr {
    Name(String),
    Measure(SpectralMeasure),
}

impl TryFrom<UtilityRepr> for UtilitySpec {
    type Error = CocmError;

    fn try_from(r: UtilityRepr) -> Result<Self> {
        match r {
            UtilityRepr::Name(s) if s == "expectation" => Ok(UtilitySpec::Expectation),
            UtilityRepr::Name(s) => Err(CocmError::domain(format!(
                "unknown utility \"{s}\" (expected \"expectation\" or a spectral measure)"
            ))),
            UtilityRepr::Measure(m) => Ok(UtilitySpec::Spectral(m)),
        }
    }
}

impl From<UtilitySpec> for UtilityRepr {
    fn from(u: UtilitySpec) -> Self {
        match u {
            UtilitySpec::Expectation => UtilityRepr::Name("expectation".into()),
            UtilitySpec::Spectral(m) => UtilityRepr::Measure(m),
        }
    }
}

/// Parameters of the operator `W_t`.
///
/// `eta` is the cost-of-capital rate. Backward recursions over trees and the
/// life model also accept a per-period sequence `eta_per_period[t]` used at
/// step `t`; every closed form requires a constant rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ValuationSpecRepr", into = "ValuationSpecRepr")]
pub struct ValuationSpec {
    pub risk: RiskMeasureKind,
    pub utility: UtilitySpec,
    pub eta: f64,
    pub eta_per_period: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValuationSpecRepr {
    #[serde(default = "default_risk")]
    risk: RiskMeasureKind,
    #[serde(default = "default_utility")]
    utility: UtilitySpec,
    #[serde(default = "default_eta")]
    eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eta_per_period: Option<Vec<f64>>,
}

fn default_risk() -> RiskMeasureKind {
    RiskMeasureKind::VaR(DEFAULT_LEVEL)
}

fn default_utility() -> UtilitySpec {
    UtilitySpec::Expectation
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}

impl TryFrom<ValuationSpecRepr> for ValuationSpec {
    type Error = CocmError;

    fn try_from(r: ValuationSpecRepr) -> Result<Self> {
        let spec = ValuationSpec {
            risk: r.risk,
            utility: r.utility,
            eta: r.eta,
            eta_per_period: r.eta_per_period,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<ValuationSpec> for ValuationSpecRepr {
    fn from(s: ValuationSpec) -> Self {
        ValuationSpecRepr {
            risk: s.risk,
            utility: s.utility,
            eta: s.eta,
            eta_per_period: s.eta_per_period,
        }
    }
}

pub const DEFAULT_LEVEL: f64 = 0.005;
pub const DEFAULT_ETA: f64 = 0.06;

impl Default for ValuationSpec {
    /// VaR at 0.5%, expectation utility, η = 6%.
    fn default() -> Self {
        ValuationSpec {
            risk: default_risk(),
            utility: UtilitySpec::Expectation,
            eta: DEFAULT_ETA,
            eta_per_period: None,
        }
    }
}

impl ValuationSpec {
    pub fn new(risk: RiskMeasureKind, utility: UtilitySpec, eta: f64) -> Result<Self> {
        let spec = ValuationSpec {
            risk,
            utility,
            eta,
            eta_per_period: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// VaR at level `p` with expectation utility.
    pub fn var(p: f64, eta: f64) -> Result<Self> {
        Self::new(RiskMeasureKind::VaR(p), UtilitySpec::Expectation, eta)
    }

    /// Expected Shortfall at level `p` with expectation utility.
    pub fn es(p: f64, eta: f64) -> Result<Self> {
        Self::new(
            RiskMeasureKind::ExpectedShortfall(p),
            UtilitySpec::Expectation,
            eta,
        )
    }

    pub fn with_eta_per_period(mut self, etas: Vec<f64>) -> Result<Self> {
        self.eta_per_period = Some(etas);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.risk.validate()?;
        check_eta(self.eta)?;
        if let Some(etas) = &self.eta_per_period {
            if etas.is_empty() {
                return Err(CocmError::domain("eta_per_period is empty"));
            }
            for &e in etas {
                check_eta(e)?;
            }
        }
        Ok(())
    }

    /// The rate applied at step `t` (valuing `t → t + 1`).
    pub fn eta_at(&self, t: usize) -> Result<f64> {
        match &self.eta_per_period {
            None => Ok(self.eta),
            Some(etas) => etas.get(t).copied().ok_or_else(|| {
                CocmError::domain(format!(
                    "eta_per_period has {} entries but step {t} was requested",
                    etas.len()
                ))
            }),
        }
    }

    /// Check a per-period sequence covers `horizon` steps.
    pub fn check_horizon(&self, horizon: usize) -> Result<()> {
        match &self.eta_per_period {
            Some(etas) if etas.len() < horizon => Err(CocmError::domain(format!(
                "eta_per_period has {} entries, horizon is {horizon}",
                etas.len()
            ))),
            _ => Ok(()),
        }
    }

    /// The constant rate, or an error if a varying sequence was given.
    pub fn require_constant_eta(&self) -> Result<f64> {
        match &self.eta_per_period {
            Some(etas) if etas.iter().any(|&e| e != self.eta) => Err(CocmError::unsupported(
                "closed-form valuation requires a constant cost-of-capital rate",
            )),
            _ => Ok(self.eta),
        }
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(CocmError::domain(format!(
            "cost-of-capital rate {eta} must be positive"
        )))
    }
}

/// Components of one application of `W`: `R(−Y)` and `U((R(−Y) − Y)_+)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneStep {
    pub capital: f64,
    pub compensation: f64,
    pub value: f64,
}

/// `W(Y)` with an explicit rate, returning the intermediate quantities.
pub fn w_step(d: &DiscreteDistribution, spec: &ValuationSpec, eta: f64) -> OneStep {
    let capital = capital_requirement(d, &spec.risk);
    let compensation = match &spec.utility {
        UtilitySpec::Expectation => d.expected_shortfall_below(capital),
        UtilitySpec::Spectral(m) => utility(&d.negate().shift(capital).positive_part(), m),
    };
    OneStep {
        capital,
        compensation,
        value: capital - compensation / (1.0 + eta),
    }
}

/// `W(Y)` for `d` the law of `Y`, at the constant rate `spec.eta`.
pub fn w_apply(d: &DiscreteDistribution, spec: &ValuationSpec) -> f64 {
    w_step(d, spec, spec.eta).value
}

/// `W_t(Y)` at the rate for step `t`.
pub fn w_apply_at(d: &DiscreteDistribution, spec: &ValuationSpec, t: usize) -> Result<f64> {
    Ok(w_step(d, spec, spec.eta_at(t)?).value)
}

/// `W(ε)` for standard normal `ε` and expectation utility:
/// `R − (R Φ(R) + φ(R)) / (1 + η)` with `R = R(−ε)`.
pub fn w_normal(spec: &ValuationSpec) -> Result<f64> {
    if spec.utility != UtilitySpec::Expectation {
        return Err(CocmError::unsupported(
            "w_normal needs expectation utility; use w_normal_spectral",
        ));
    }
    let eta = spec.require_constant_eta()?;
    let r = crate::risk::normal_risk(&spec.risk)?;
    Ok(r - (r * normal::cdf(r) + normal::pdf(r)) / (1.0 + eta))
}

/// `W(ε)` for standard normal `ε` and any utility measure.
pub fn w_normal_spectral(spec: &ValuationSpec) -> Result<f64> {
    let eta = spec.require_constant_eta()?;
    let r = crate::risk::normal_risk(&spec.risk)?;
    let u = spec
        .utility
        .to_spectral()
        .integrate_shifted_normal_positive_part(r);
    Ok(r - u / (1.0 + eta))
}

/// `W(ε)` through whichever normal route fits the utility.
pub fn w_normal_any(spec: &ValuationSpec) -> Result<f64> {
    match spec.utility {
        UtilitySpec::Expectation => w_normal(spec),
        UtilitySpec::Spectral(_) => w_normal_spectral(spec),
    }
}

/// Step weight function `w` with `W(Y) = ∫ F⁻¹_Y(u) w(u) du`, as
/// `(breaks, levels)`.
///
/// Needs a risk density `m^R` that is nondecreasing and a utility density
/// `m^U` that is nonincreasing, both without atoms. Then with
/// `γ = P(Y ≤ R(−Y))` and `k = 1/(1+η)`,
///
/// ```text
/// w(u) = (1 − k ∫_0^γ m^U(1−v) dv) m^R(u) + k m^U(1−u) 1{u < γ}
/// ```
pub fn weight_function(
    d: &DiscreteDistribution,
    spec: &ValuationSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let eta = spec.require_constant_eta()?;
    let mr = spec.risk.to_spectral();
    let mu = spec.utility.to_spectral();
    if mr.has_atoms() || mu.has_atoms() {
        return Err(CocmError::unsupported(
            "weight-function form needs absolutely continuous measures",
        ));
    }
    if !mr.is_density_nondecreasing() {
        return Err(CocmError::unsupported("risk density must be nondecreasing"));
    }
    if !mu.is_density_nonincreasing() {
        return Err(CocmError::unsupported(
            "utility density must be nonincreasing",
        ));
    }

    let r = capital_requirement(d, &spec.risk);
    let gamma = d.cdf(r);
    let k = 1.0 / (1.0 + eta);
    let c1 = 1.0 - k * mu.mass_on(1.0 - gamma, 1.0);

    let mut breaks: Vec<f64> = vec![0.0, 1.0, gamma];
    breaks.extend_from_slice(mr.breaks());
    breaks.extend(mu.breaks().iter().map(|b| 1.0 - b));
    breaks.retain(|b| (0.0..=1.0).contains(b));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let levels = breaks
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let below = if mid < gamma {
                mu.density_at(1.0 - mid)
            } else {
                0.0
            };
            c1 * mr.density_at(mid) + k * below
        })
        .collect();
    Ok((breaks, levels))
}

/// `W(Y)` evaluated as `∫ F⁻¹_Y(u) w(u) du` with [`weight_function`].
pub fn spectral_weight_value(d: &DiscreteDistribution, spec: &ValuationSpec) -> Result<f64> {
    let (breaks, levels) = weight_function(d, spec)?;
    Ok(breaks
        .windows(2)
        .zip(&levels)
        .map(|(w, &l)| {
            if l == 0.0 {
                0.0
            } else {
                l * d.quantile_integral(w[0], w[1])
            }
        })
        .sum())
}

/// `(η R(−Y) + E[Y]) / (1 + η)`, an upper bound for `W(Y)` under
/// expectation utility.
pub fn one_step_upper_bound(d: &DiscreteDistribution, spec: &ValuationSpec) -> Result<f64> {
    if spec.utility != UtilitySpec::Expectation {
        return Err(CocmError::unsupported(
            "upper bound needs expectation utility",
        ));
    }
    let eta = spec.require_constant_eta()?;
    let r = capital_requirement(d, &spec.risk);
    Ok((eta * r + d.expectation()) / (1.0 + eta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const W0_VAR: f64 = 0.144_310_529_909_208_63;
    const W0_ES: f64 = 0.163_169_835_499_514;

    fn uni(v: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::uniform(v).unwrap()
    }

    #[test]
    fn w_apply_examples() {
        let spec = ValuationSpec::var(0.25, 0.06).unwrap();
        assert_eq!(w_apply(&DiscreteDistribution::point_mass(3.5), &spec), 3.5);
        let w = w_apply(&uni(&[-1.0, 1.0]), &spec);
        assert!((w - (1.0 - 1.0 / 1.06)).abs() < 1e-15);
        let d = uni(&[-0.3, 2.0, 5.5, 0.1]);
        let doubled = w_apply(&d.scale(2.0).unwrap(), &spec);
        assert!((doubled - 2.0 * w_apply(&d, &spec)).abs() < 1e-14);
    }

    #[test]
    fn spectral_utility_route_matches_expectation_route() {
        let d = uni(&[-2.0, 0.5, 1.0, 3.0, 4.0]);
        let e = ValuationSpec::es(0.3, 0.06).unwrap();
        let mut s = e.clone();
        s.utility = UtilitySpec::Spectral(SpectralMeasure::lebesgue());
        assert!((w_apply(&d, &e) - w_apply(&d, &s)).abs() < 1e-14);
    }

    #[test]
    fn w_normal_values() {
        let spec = ValuationSpec::default();
        assert!((w_normal(&spec).unwrap() - W0_VAR).abs() < 1e-12);
        let es = ValuationSpec::es(0.005, 0.06).unwrap();
        assert!((w_normal(&es).unwrap() - W0_ES).abs() < 1e-11);
        for s in [&spec, &es] {
            let r = crate::risk::normal_risk(&s.risk).unwrap();
            assert!(w_normal(s).unwrap() <= r * 0.06 / 1.06);
        }
        let huge = ValuationSpec::var(0.005, 1e6).unwrap();
        let r = crate::risk::normal_risk(&huge.risk).unwrap();
        assert!((w_normal(&huge).unwrap() - r).abs() < 1e-5);
    }

    #[test]
    fn w_normal_rejects_other_configurations() {
        let s = ValuationSpec {
            utility: UtilitySpec::Spectral(SpectralMeasure::es(0.5).unwrap()),
            ..ValuationSpec::default()
        };
        assert!(matches!(w_normal(&s), Err(CocmError::Unsupported(_))));
        let varying = ValuationSpec::default()
            .with_eta_per_period(vec![0.06, 0.05])
            .unwrap();
        assert!(matches!(w_normal(&varying), Err(CocmError::Unsupported(_))));
        let flat = ValuationSpec::default()
            .with_eta_per_period(vec![0.06, 0.06])
            .unwrap();
        assert!(w_normal(&flat).is_ok());
    }

    /// Composite Simpson on `[lo, hi]` split into `n` panels.
    fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn normal_spectral_matches_quadrature() {
        // integrate in x-space against φ to avoid the quantile singularities
        let mu = SpectralMeasure::new(vec![], vec![0.0, 0.3, 0.8], vec![2.5, 0.5]).unwrap();
        let mut spec = ValuationSpec::es(0.05, 0.06).unwrap();
        spec.utility = UtilitySpec::Spectral(mu.clone());
        let r = crate::risk::normal_risk(&spec.risk).unwrap();
        // split at the kink x = −r and at the density jumps
        let mut cuts = [
            -12.0,
            -r,
            normal::quantile(0.3),
            normal::quantile(0.8),
            12.0,
        ];
        cuts.sort_by(f64::total_cmp);
        let u: f64 = cuts
            .windows(2)
            .map(|w| {
                let mid = normal::cdf(0.5 * (w[0] + w[1]));
                let level = mu.density_at(mid);
                simpson(
                    |x| (r + x).max(0.0) * level * normal::pdf(x),
                    w[0],
                    w[1],
                    20_000,
                )
            })
            .sum();
        let expected = r - u / 1.06;
        assert!((w_normal_spectral(&spec).unwrap() - expected).abs() < 1e-9);

        let plain = ValuationSpec::es(0.05, 0.06).unwrap();
        assert!((w_normal_spectral(&plain).unwrap() - w_normal(&plain).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn weight_function_examples() {
        let spec = ValuationSpec::es(0.1, 0.06).unwrap();
        let z = DiscreteDistribution::point_mass(0.0);
        assert_eq!(spectral_weight_value(&z, &spec).unwrap(), 0.0);
        let one = DiscreteDistribution::point_mass(1.0);
        assert!((spectral_weight_value(&one, &spec).unwrap() - 1.0).abs() < 1e-14);
        let var = ValuationSpec::default();
        assert!(matches!(
            spectral_weight_value(&one, &var),
            Err(CocmError::Unsupported(_))
        ));
        let mut rising_u = spec.clone();
        rising_u.utility = UtilitySpec::Spectral(SpectralMeasure::es(0.5).unwrap());
        assert!(spectral_weight_value(&one, &rising_u).is_err());
    }

    #[test]
    fn upper_bound_examples() {
        let spec = ValuationSpec::var(0.25, 0.06).unwrap();
        let c = DiscreteDistribution::point_mass(-2.0);
        assert!((one_step_upper_bound(&c, &spec).unwrap() + 2.0).abs() < 1e-15);
        let d = uni(&[-1.0, 1.0]);
        let b = one_step_upper_bound(&d, &spec).unwrap();
        assert!((b - 0.06 / 1.06).abs() < 1e-15);
        assert!((b - w_apply(&d, &spec)).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let s: ValuationSpec = serde_json::from_str(r#"{"risk":{"es":0.01},"eta":0.1}"#).unwrap();
        assert_eq!(s, ValuationSpec::es(0.01, 0.1).unwrap());
        let d: ValuationSpec = serde_json::from_str("{}").unwrap();
        assert_eq!(d, ValuationSpec::default());
        let u: ValuationSpec =
            serde_json::from_str(r#"{"utility":{"density":[[0.0,0.5],[2.0]]}}"#).unwrap();
        assert!(matches!(u.utility, UtilitySpec::Spectral(_)));
        assert!(serde_json::from_str::<ValuationSpec>(r#"{"eta":-1}"#).is_err());
        assert!(serde_json::from_str::<ValuationSpec>(r#"{"etaa":0.1}"#).is_err());
        assert!(serde_json::from_str::<ValuationSpec>(r#"{"utility":"median"}"#).is_err());
        let text = serde_json::to_string(&u).unwrap();
        assert_eq!(serde_json::from_str::<ValuationSpec>(&text).unwrap(), u);
    }

    #[test]
    fn eta_schedule() {
        let s = ValuationSpec::default()
            .with_eta_per_period(vec![0.1, 0.2])
            .unwrap();
        assert_eq!(s.eta_at(1).unwrap(), 0.2);
        assert!(s.eta_at(2).is_err());
        assert!(s.check_horizon(3).is_err());
        assert!(ValuationSpec::default()
            .with_eta_per_period(vec![0.0])
            .is_err());
    }

    fn arb_dist() -> impl Strategy<Value = DiscreteDistribution> {
        prop::collection::vec((-10.0f64..10.0, 0.01f64..1.0), 1..8).prop_map(|pairs| {
            let (v, p): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            DiscreteDistribution::new(v, p).unwrap()
        })
    }

    fn arb_spec() -> impl Strategy<Value = ValuationSpec> {
        (
            prop::bool::ANY,
            0.005f64..0.5,
            0.01f64..0.5,
            prop::bool::ANY,
        )
            .prop_map(|(var, p, eta, spectral_u)| {
                let mut s = if var {
                    ValuationSpec::var(p, eta).unwrap()
                } else {
                    ValuationSpec::es(p, eta).unwrap()
                };
                if spectral_u {
                    let m = SpectralMeasure::new(vec![], vec![0.0, 0.5, 1.0], vec![1.5, 0.5]);
                    s.utility = UtilitySpec::Spectral(m.unwrap());
                }
                s
            })
    }

    proptest! {
        #[test]
        fn translation(d in arb_dist(), s in arb_spec(), l in -5.0f64..5.0) {
            prop_assert!((w_apply(&d.shift(l), &s) - w_apply(&d, &s) - l).abs() < 1e-10);
        }

        #[test]
        fn homogeneity(d in arb_dist(), s in arb_spec(), c in 0.0f64..5.0) {
            prop_assert!((w_apply(&d.scale(c).unwrap(), &s) - c * w_apply(&d, &s)).abs() < 1e-10);
        }

        #[test]
        fn monotonicity(d in arb_dist(), s in arb_spec(), bump in 0.0f64..2.0) {
            let up = d.pushforward(|y| y + bump * (1.0 + y.sin()));
            prop_assert!(w_apply(&up, &s) >= w_apply(&d, &s) - 1e-12);
        }

        #[test]
        fn bounded_by_capital(d in arb_dist(), s in arb_spec()) {
            let step = w_step(&d, &s, s.eta);
            prop_assert!(step.value <= step.capital + 1e-12);
        }

        #[test]
        fn upper_bound_dominates(d in arb_dist(), p in 0.005f64..0.5, eta in 0.01f64..0.5) {
            let s = ValuationSpec::var(p, eta).unwrap();
            prop_assert!(one_step_upper_bound(&d, &s).unwrap() >= w_apply(&d, &s) - 1e-12);
            let centred = d.shift(-d.expectation());
            let r = capital_requirement(&centred, &s.risk);
            prop_assert!(w_apply(&centred, &s) <= eta / (1.0 + eta) * r + 1e-10);
        }

        #[test]
        fn weight_form_matches(d in arb_dist(), p in 0.01f64..0.99, eta in 0.01f64..0.5, spectral_u in prop::bool::ANY) {
            let mut s = ValuationSpec::es(p, eta).unwrap();
            if spectral_u {
                let m = SpectralMeasure::new(vec![], vec![0.0, 0.2, 1.0], vec![3.0, 0.5]).unwrap();
                s.utility = UtilitySpec::Spectral(m);
            }
            let a = spectral_weight_value(&d, &s).unwrap();
            prop_assert!((a - w_apply(&d, &s)).abs() < 1e-10, "{} vs {}", a, w_apply(&d, &s));
        }
    }
}
