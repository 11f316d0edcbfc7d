//! Checks against independently coded references and frozen high-precision
//! values.

use copula_bounds::corrmodels::CorrelationModel;
use copula_bounds::infobounds::{closed_form_info, efficient_info, ClosedForm, Regime};
use copula_bounds::lanlab::{loglik, Precisions};
use copula_bounds::sampling::{inv_norm_cdf, sample_gaussian, score_set, DataMatrix};
use nalgebra::{DMatrix, DVector};

/// erf by its Maclaurin series; fine for |x| < 3.
fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    while term.abs() > 1e-18 * sum.abs() {
        n += 1.0;
        term *= -x * x / n;
        sum += term / (2.0 * n + 1.0);
    }
    2.0 / std::f64::consts::PI.sqrt() * sum
}

fn phi_series(x: f64) -> f64 {
    0.5 * (1.0 + erf_series(x / std::f64::consts::SQRT_2))
}

fn quantile_by_bisection(u: f64) -> f64 {
    let (mut lo, mut hi) = (-5.0, 5.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi_series(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn quantile_against_series_and_bisection() {
    for u in [0.975, 0.5 + 1e-9, 0.6, 0.9, 0.01, 0.001, 0.3333] {
        let got = inv_norm_cdf(u).unwrap();
        let want = quantile_by_bisection(u);
        assert!((got - want).abs() < 1e-12, "u={u}: {got} vs {want}");
    }
    assert!((inv_norm_cdf(0.975).unwrap() - 1.959963984540054).abs() < 1e-12);
}

#[test]
fn score_set_sums_of_squares() {
    // 40-digit mpmath evaluation of Σ Φ⁻¹(i/(n+1))²
    let cases = [
        (3, 0.9098728462391454),
        (100, 92.276_029_375_776),
        (1000, 988.0349200389828),
        (2000, 1986.735109232332),
    ];
    for (n, want) in cases {
        let got: f64 = score_set(n).iter().map(|s| s * s).sum();
        assert!((got - want).abs() < 1e-12 * want, "n={n}: {got}");
    }
}

/// Gaussian log likelihood with an explicit inverse and determinant.
fn dense_loglik(data: &DataMatrix, c: &DMatrix<f64>, var_scale: &[f64]) -> f64 {
    let p = c.nrows();
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        p,
        var_scale.iter().map(|v| 1.0 / v.sqrt()),
    ));
    let sigma = &d * c * &d;
    let inv = sigma.clone().try_inverse().unwrap();
    let det = sigma.determinant();
    let mut total = 0.0;
    for row in data.values().row_iter() {
        let y = row.transpose();
        total += -0.5
            * (p as f64 * (2.0 * std::f64::consts::PI).ln()
                + det.ln()
                + (y.transpose() * &inv * &y)[(0, 0)]);
    }
    total
}

#[test]
fn loglik_against_dense_evaluation() {
    let m = CorrelationModel::bivariate();
    let one = DataMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
    let c = m.correlation(&[0.5]).unwrap().into_inner();
    let got = loglik(&one, &m, &[0.5], &Precisions::unit()).unwrap();
    assert!((got - dense_loglik(&one, &c, &[1.0, 1.0])).abs() < 1e-12);

    let m = CorrelationModel::ar1(4).unwrap();
    let c = m.correlation(&[-0.35]).unwrap();
    let data = sample_gaussian(&c, 25, 17).unwrap();
    let psi = [0.5, 1.2, 2.0, 0.9];
    let got = loglik(
        &data,
        &m,
        &[-0.35],
        &Precisions::PerCoordinate(psi.to_vec()),
    )
    .unwrap();
    let want = dense_loglik(&data, c.as_matrix(), &psi);
    assert!((got - want).abs() < 1e-10 * want.abs());
    let got = loglik(&data, &m, &[-0.35], &Precisions::Common(1.7)).unwrap();
    let want = dense_loglik(&data, c.as_matrix(), &[1.7; 4]);
    assert!((got - want).abs() < 1e-10 * want.abs());
}

#[test]
fn frozen_information_values() {
    let ar1 = CorrelationModel::ar1(4).unwrap();
    let cases = [
        (0.5, Regime::Known, 20.0 / 3.0),
        (0.5, Regime::Equal, 14.0 / 3.0),
        (0.5, Regime::Unequal, 4.5),
        (0.3, Regime::Known, 3.9487984542929584),
        (0.3, Regime::Equal, 3.4597270861007114),
        (0.3, Regime::Unequal, 3.4102765366501617),
    ];
    for (t, regime, want) in cases {
        let got = efficient_info(&ar1, &[t], regime)
            .unwrap()
            .scalar()
            .unwrap();
        assert!((got - want).abs() < 1e-10 * want, "{t} {regime}: {got}");
        let closed = closed_form_info(ClosedForm::Ar1 { p: 4 }, t, regime).unwrap();
        assert!((closed - want).abs() < 1e-10 * want);
    }
    let exch = CorrelationModel::exchangeable(4).unwrap();
    assert!(
        (efficient_info(&exch, &[0.5], Regime::Known)
            .unwrap()
            .scalar()
            .unwrap()
            - 6.72)
            .abs()
            < 1e-10
    );
    assert!(
        (efficient_info(&exch, &[0.5], Regime::Equal)
            .unwrap()
            .scalar()
            .unwrap()
            - 3.84)
            .abs()
            < 1e-10
    );
    let circ = CorrelationModel::circular();
    assert!(
        (efficient_info(&circ, &[0.5], Regime::Known)
            .unwrap()
            .scalar()
            .unwrap()
            - 32.0 / 3.0)
            .abs()
            < 1e-10
    );
}

#[test]
fn data_csv_round_trip() {
    let c = CorrelationModel::exchangeable(3)
        .unwrap()
        .correlation(&[0.2])
        .unwrap();
    let data = sample_gaussian(&c, 10, 1).unwrap();
    let mut buf = Vec::new();
    data.write_csv(&mut buf).unwrap();
    assert_eq!(DataMatrix::read_csv(buf.as_slice()).unwrap(), data);
}
