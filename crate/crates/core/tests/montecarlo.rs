//! Simulation properties at desk scale. Seeds are fixed, so every check is
//! deterministic.

use copula_bounds::corrmodels::CorrelationModel;
use copula_bounds::estimators::{
    estimator_benchmark, moment_start, one_step_efficient, BenchConfig, Estimator,
};
use copula_bounds::infobounds::{efficient_info, Regime};
use copula_bounds::lanlab::{mc_lan_experiment, LanConfig};
use copula_bounds::sampling::{
    column_ranks, normal_scores, replicate_seed, sample_gaussian, MarginSpec,
};

fn lan_config(
    model: CorrelationModel,
    regime: Regime,
    n: usize,
    reps: usize,
    seed: u64,
) -> LanConfig {
    LanConfig {
        model,
        theta: vec![0.5],
        s: vec![1.0],
        regime,
        n,
        reps,
        master_seed: seed,
        margins: MarginSpec::identity(),
    }
}

#[test]
fn likelihood_ratio_has_unit_mean() {
    let r = mc_lan_experiment(&lan_config(
        CorrelationModel::bivariate(),
        Regime::Equal,
        500,
        2000,
        101,
    ))
    .unwrap();
    let s = &r.summary;
    assert!(
        (s.mean_exp_lambda_y - 1.0).abs() < 3.0 * s.se_exp_lambda_y,
        "{} ± {}",
        s.mean_exp_lambda_y,
        s.se_exp_lambda_y
    );
}

#[test]
fn ar1_unequal_lan_variance() {
    let r = mc_lan_experiment(&lan_config(
        CorrelationModel::ar1(4).unwrap(),
        Regime::Unequal,
        2000,
        500,
        102,
    ))
    .unwrap();
    let sigma2 = efficient_info(&CorrelationModel::ar1(4).unwrap(), &[0.5], Regime::Unequal)
        .unwrap()
        .value[(0, 0)];
    assert_eq!(r.summary.sigma2, sigma2);
    let ratio = r.summary.var_lambda_hat / sigma2;
    assert!((ratio - 1.0).abs() < 0.15, "variance ratio {ratio}");
}

#[test]
fn report_does_not_depend_on_thread_count() {
    let config = lan_config(
        CorrelationModel::ar1(3).unwrap(),
        Regime::Unequal,
        150,
        120,
        103,
    );
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc_lan_experiment(&config).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn one_step_contracts_toward_truth() {
    let m = CorrelationModel::ar1(4).unwrap();
    let c = m.correlation(&[0.5]).unwrap();
    let median_step = |n: usize| {
        let mut steps: Vec<f64> = (0..200)
            .map(|rep| {
                let data = sample_gaussian(&c, n, replicate_seed(104 + n as u64, rep)).unwrap();
                let scores = normal_scores(&column_ranks(&data).unwrap());
                (one_step_efficient(&scores, &m, &[0.5]).unwrap().theta_hat[0] - 0.5).abs()
            })
            .collect();
        steps.sort_by(f64::total_cmp);
        steps[100]
    };
    let (small, large) = (median_step(400), median_step(6400));
    assert!(large < small, "{large} vs {small}");
}

#[test]
fn independent_data_start_near_zero() {
    let m = CorrelationModel::ar1(5).unwrap();
    let data = sample_gaussian(&m.correlation(&[0.0]).unwrap(), 3000, 105).unwrap();
    let start = moment_start(&normal_scores(&column_ranks(&data).unwrap()), &m).unwrap();
    assert!(start[0].abs() < 0.05, "{start:?}");
}

#[test]
fn estimators_do_not_beat_the_bound() {
    for (model, est) in [
        (CorrelationModel::bivariate(), Estimator::NormalScores),
        (CorrelationModel::bivariate(), Estimator::OneStep),
        (
            CorrelationModel::exchangeable(3).unwrap(),
            Estimator::OneStep,
        ),
    ] {
        let report = estimator_benchmark(&BenchConfig {
            model,
            theta: vec![0.5],
            n: 500,
            reps: 1000,
            master_seed: 106,
            estimators: vec![est],
            margins: MarginSpec::identity(),
        })
        .unwrap();
        let row = report.row(est, 0).unwrap();
        assert!(
            row.n_var_hat >= 0.85 * row.bound_inv_info,
            "{model} {est}: {} vs {}",
            row.n_var_hat,
            row.bound_inv_info
        );
        assert_eq!(row.failures, 0);
    }
}

#[test]
fn unstructured_benchmark_reports_each_component() {
    let report = estimator_benchmark(&BenchConfig {
        model: CorrelationModel::unstructured(3).unwrap(),
        theta: vec![0.3, 0.1, -0.2],
        n: 300,
        reps: 50,
        master_seed: 107,
        estimators: vec![Estimator::OneStep],
        margins: MarginSpec::identity(),
    })
    .unwrap();
    assert_eq!(report.rows.len(), 3);
    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("estimator,family,theta_true,n,R,mean_hat,n_var_hat,bound_inv_info\n"));
    assert!(text.contains("one-step[2],unstructured:3,"));
    for row in &report.rows {
        assert!((row.mean_hat - report.config.theta[row.component]).abs() < 0.05);
    }
}
