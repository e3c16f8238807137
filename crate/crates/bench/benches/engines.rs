use std::hint::black_box;

use cocm_core::distribution::binomial;
use cocm_core::gaussian::covariance_from_cohorts;
use cocm_core::life::{moments, value_recursion};
use cocm_core::oracle::{nested_mc_value, GaussianSampler};
use cocm_core::valuation::w_apply;
use cocm_core::{ARModel, Cohort, Innovation, MakehamLaw, McConfig, ValuationSpec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn one_step(c: &mut Criterion) {
    let spec = ValuationSpec::default();
    let es = ValuationSpec::es(0.01, 0.06).unwrap();
    let d = binomial(1000, 0.01);
    c.bench_function("w_apply/binomial_1000/var", |b| {
        b.iter(|| w_apply(black_box(&d), &spec))
    });
    c.bench_function("w_apply/binomial_1000/es", |b| {
        b.iter(|| w_apply(black_box(&d), &es))
    });
}

fn life(c: &mut Criterion) {
    let spec = ValuationSpec::default();
    let mut group = c.benchmark_group("value_recursion");
    group.sample_size(10);
    for horizon in [5, 10, 30] {
        let cohort = Cohort::new(1000, 50.0, horizon).unwrap();
        group.bench_with_input(
            BenchmarkId::from_parameter(horizon),
            &cohort,
            |b, cohort| b.iter(|| value_recursion(cohort, &MakehamLaw::M90, &spec).unwrap()),
        );
    }
    group.finish();

    let cohort = Cohort::new(200, 50.0, 10).unwrap();
    c.bench_function("moments/n200_T10", |b| {
        b.iter(|| moments(black_box(&cohort), &MakehamLaw::M90).unwrap())
    });
}

fn gaussian(c: &mut Criterion) {
    let spec = ValuationSpec::default();
    let approx =
        covariance_from_cohorts(&[(Cohort::new(1000, 50.0, 30).unwrap(), MakehamLaw::M90)])
            .unwrap();
    c.bench_function("gaussian/value0_T30", |b| {
        b.iter(|| approx.model.value0(&spec).unwrap())
    });
    c.bench_function("gaussian/recursion_T30", |b| {
        b.iter(|| approx.model.value_by_recursion(&spec).unwrap())
    });

    let ar = ARModel::iid(50, 0.8, Innovation::normal(1.0).unwrap()).unwrap();
    c.bench_function("ar/deltas_T50", |b| b.iter(|| ar.deltas(&spec).unwrap()));
}

fn monte_carlo(c: &mut Criterion) {
    let spec = ValuationSpec::es(0.05, 0.06).unwrap();
    let model = ARModel::iid(2, 0.5, Innovation::normal(1.0).unwrap()).unwrap();
    let sampler = GaussianSampler::new(&model.covariance()).unwrap();
    let config = McConfig::new(2, 1000, 1);
    let mut group = c.benchmark_group("nested_mc");
    group.sample_size(10);
    group.bench_function("gaussian_T2", |b| {
        b.iter(|| nested_mc_value(&sampler, &spec, &config).unwrap())
    });
    group.finish();
}

criterion_group!(benches, one_step, life, gaussian, monte_carlo);
criterion_main!(benches);
