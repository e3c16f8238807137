use cocm_core::eiopa::{best_estimate, scr, EiopaParams};
use cocm_core::life::{value_recursion_q, Cohort, DeferredProbs, MakehamLaw};
use cocm_core::risk::{risk, utility};
use cocm_core::valuation::{one_step_upper_bound, w_apply};
use cocm_core::{
    ARModel, DiscreteDistribution, GaussianModel, Innovation, RiskMeasureKind, SpectralMeasure,
    ValuationSpec,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn arb_distribution() -> impl Strategy<Value = DiscreteDistribution> {
    prop::collection::vec((-10.0f64..10.0, 0.01f64..1.0), 1..15).prop_map(|pairs| {
        let (values, probs) = pairs.into_iter().unzip();
        DiscreteDistribution::new(values, probs).unwrap()
    })
}

fn arb_measure() -> impl Strategy<Value = SpectralMeasure> {
    prop_oneof![
        (0.001f64..0.999).prop_map(|p| SpectralMeasure::var(p).unwrap()),
        (0.001f64..1.0).prop_map(|p| SpectralMeasure::es(p).unwrap()),
    ]
}

fn arb_spec() -> impl Strategy<Value = ValuationSpec> {
    (0.001f64..0.5, 0.001f64..1.0, any::<bool>()).prop_map(|(p, eta, var)| {
        if var {
            ValuationSpec::var(p, eta).unwrap()
        } else {
            ValuationSpec::es(p, eta).unwrap()
        }
    })
}

fn arb_spd(max: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max).prop_flat_map(|n| {
        prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |a| {
            let a = DMatrix::from_vec(n, n, a);
            &a * a.transpose() + DMatrix::identity(n, n) * 0.05
        })
    })
}

fn tol(scale: f64) -> f64 {
    1e-11 * scale.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn risk_and_utility_are_monetary(d in arb_distribution(), m in arb_measure(), l in -5.0f64..5.0, c in 0.0f64..4.0) {
        let r = risk(&d, &m);
        let u = utility(&d, &m);
        prop_assert!((risk(&d.shift(l), &m) - (r - l)).abs() <= tol(r));
        prop_assert!((utility(&d.shift(l), &m) - (u + l)).abs() <= tol(u));
        prop_assert!((risk(&d.scale(c).unwrap(), &m) - c * r).abs() <= tol(r));
        let mean = d.expectation();
        let lebesgue = SpectralMeasure::lebesgue();
        prop_assert!((utility(&d, &lebesgue) - mean).abs() <= tol(mean));
        prop_assert!((risk(&d, &lebesgue) + mean).abs() <= tol(mean));
    }

    #[test]
    fn w_is_bounded_by_capital_and_mean(d in arb_distribution(), spec in arb_spec()) {
        let w = w_apply(&d, &spec);
        let capital = risk(&d.negate(), &spec.risk.to_spectral());
        prop_assert!(w <= capital + tol(capital));
        let bound = one_step_upper_bound(&d, &spec).unwrap();
        prop_assert!(w <= bound + tol(bound));
    }

    #[test]
    fn spec_json_round_trip(spec in arb_spec()) {
        let text = serde_json::to_string(&spec).unwrap();
        let back: ValuationSpec = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn gaussian_value_scales_with_sd(cov in arb_spd(6), c in 0.1f64..5.0) {
        let spec = ValuationSpec::default();
        let v = GaussianModel::natural(cov.clone()).unwrap().value0(&spec).unwrap();
        let scaled = GaussianModel::natural(cov * (c * c)).unwrap().value0(&spec).unwrap();
        prop_assert!((scaled - c * v).abs() <= tol(c * v));
    }

    #[test]
    fn ar_value_scales_with_innovations(alpha in -0.9f64..0.9, sigma in 0.1f64..3.0, t in 1usize..10, c in 0.0f64..4.0) {
        let spec = ValuationSpec::es(0.01, 0.06).unwrap();
        let base = ARModel::iid(t, alpha, Innovation::normal(sigma).unwrap()).unwrap();
        let scaled = ARModel::iid(t, alpha, Innovation::normal(c * sigma).unwrap()).unwrap();
        let v = base.value0(&spec).unwrap();
        prop_assert!((scaled.value0(&spec).unwrap() - c * v).abs() <= tol(c * v));
        let discrete = Innovation::Discrete(DiscreteDistribution::uniform(&[-sigma, sigma]).unwrap());
        let m = ARModel::iid(t, alpha, discrete).unwrap();
        prop_assert!(m.value0(&spec).unwrap() >= -tol(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn life_values_increase_with_contracts(q in prop::collection::vec(0.0f64..0.2, 1..5), n in 1usize..40) {
        let probs = DeferredProbs::from_q(q).unwrap();
        let table = value_recursion_q(n, &probs, &ValuationSpec::default(), 1.0, 100).unwrap();
        for row in &table.g {
            prop_assert!(row.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        }
        prop_assert!(table.bound >= table.value0() - 1e-12);
    }

    #[test]
    fn stress_raises_best_estimate(age in 20.0f64..90.0, t in 1usize..30, f in 1.0f64..2.0) {
        let cohort = Cohort::new(1000, age, t).unwrap();
        let law = MakehamLaw::M90;
        let params = EiopaParams { stress_factor: f, ..EiopaParams::default() };
        prop_assert!(scr(&cohort, &law, &params).unwrap() >= 0.0);
        let be: Vec<f64> = (1..=t).map(|i| best_estimate(&cohort, &law, i).unwrap()).collect();
        prop_assert!(be.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn risk_kind_json_forms() {
    let var: RiskMeasureKind = serde_json::from_str(r#"{"var":0.005}"#).unwrap();
    assert_eq!(var, RiskMeasureKind::VaR(0.005));
    let es: RiskMeasureKind = serde_json::from_str(r#"{"es":0.1}"#).unwrap();
    assert_eq!(es, RiskMeasureKind::ExpectedShortfall(0.1));
}
