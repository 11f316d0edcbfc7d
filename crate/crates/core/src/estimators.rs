//! Rank-based estimators of the copula parameter and a Monte Carlo harness
//! comparing their spread with the information bound.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::corrmodels::{upper_pairs, CorrelationModel, Family};
use crate::error::{Error, Result};
use crate::fmt::full;
use crate::infobounds::{efficient_info, InfoDecomposition, Regime};
use crate::linalg::Cholesky;
use crate::sampling::{
    apply_margins, column_ranks, normal_scores, replicate_seed, sample_gaussian, score_set,
    MarginSpec, ScoreMatrix,
};
use crate::stats;

/// Smallest eigenvalue kept when projecting a correlation estimate.
pub const EIGEN_FLOOR: f64 = 1e-4;

/// Distance from the domain boundary enforced on starting values.
const START_MARGIN: f64 = 1e-4;

/// Step halvings tried before giving up on a one-step update.
const MAX_BACKTRACK: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub theta_hat: Vec<f64>,
    pub iterations: usize,
    /// False when the estimate had to be pulled back towards or onto the
    /// boundary of the parameter domain.
    pub converged: bool,
}

fn require_scores(scores: &ScoreMatrix, model: &CorrelationModel) -> Result<()> {
    if scores.p() != model.p() {
        return Err(Error::Shape(format!(
            "scores have {} columns, model {model} has dimension {}",
            scores.p(),
            model.p()
        )));
    }
    if scores.n() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 rows, got {}",
            scores.n()
        )));
    }
    Ok(())
}

/// `Σ_i y_ij y_ik / Σ_i Φ⁻¹(i/(n+1))²` for all column pairs.
fn score_correlation(scores: &ScoreMatrix) -> DMatrix<f64> {
    let y = scores.scores();
    let denom: f64 = score_set(y.nrows()).iter().map(|s| s * s).sum();
    let mut r = (y.transpose() * y) / denom;
    r.fill_diagonal(1.0);
    r
}

/// The van der Waerden (normal scores) rank correlation of two columns.
/// A ratio of ±1 is reported as is, with `converged = false`.
pub fn normal_scores_correlation(scores: &ScoreMatrix) -> Result<EstimateResult> {
    if scores.p() != 2 {
        return Err(Error::Shape(format!(
            "normal scores correlation needs 2 columns, got {}",
            scores.p()
        )));
    }
    if scores.n() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 rows, got {}",
            scores.n()
        )));
    }
    let y = scores.scores();
    let num = y.column(0).dot(&y.column(1));
    let denom: f64 = score_set(y.nrows()).iter().map(|s| s * s).sum();
    let theta = (num / denom).clamp(-1.0, 1.0);
    Ok(EstimateResult {
        theta_hat: vec![theta],
        iterations: 0,
        converged: theta.abs() < 1.0,
    })
}

fn clamp_interval(x: f64, (lo, hi): (f64, f64)) -> f64 {
    x.clamp(lo + START_MARGIN, hi - START_MARGIN)
}

/// Method-of-moments starting value from the normal-scores correlation
/// matrix, always strictly inside the domain.
pub fn moment_start(scores: &ScoreMatrix, model: &CorrelationModel) -> Result<Vec<f64>> {
    require_scores(scores, model)?;
    let r = score_correlation(scores);
    let p = model.p();
    let average = |pairs: &[(usize, usize)]| {
        pairs.iter().map(|&(j, k)| r[(j, k)]).sum::<f64>() / pairs.len() as f64
    };
    let theta = match model.family() {
        Family::Exchangeable => {
            let pairs: Vec<_> = upper_pairs(p).collect();
            vec![average(&pairs)]
        }
        Family::Ar1 => {
            let pairs: Vec<_> = (0..p - 1).map(|j| (j, j + 1)).collect();
            vec![average(&pairs)]
        }
        Family::Circular => {
            let pairs: Vec<_> = (0..p).map(|j| (j, (j + 1) % p)).collect();
            vec![average(&pairs)]
        }
        Family::Unstructured => return Ok(project_unstructured(&r)),
    };
    let interval = model.domain_interval().expect("one-parameter family");
    Ok(vec![clamp_interval(theta[0], interval)])
}

/// Off-diagonal entries of `r` after flooring its eigenvalues and
/// rescaling to unit diagonal.
fn project_unstructured(r: &DMatrix<f64>) -> Vec<f64> {
    let p = r.nrows();
    let eig = SymmetricEigen::new(r.clone());
    let m = if eig.eigenvalues.min() < EIGEN_FLOOR {
        let floored = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
        let m = &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
        let d = m.diagonal().map(|v| 1.0 / v.sqrt());
        DMatrix::from_fn(p, p, |j, k| m[(j, k)] * d[j] * d[k])
    } else {
        r.clone()
    };
    upper_pairs(p)
        .map(|(j, k)| m[(j, k)].clamp(-1.0 + START_MARGIN, 1.0 - START_MARGIN))
        .collect()
}

/// Mean efficient score `(1/n) Σ_i [l̇_θ(ŷ_i) − I_θΨ I_ΨΨ⁻¹ l̇_Ψ(ŷ_i)]` at
/// `theta`, with unit variances and one unknown variance per coordinate.
pub fn mean_efficient_score(
    scores: &ScoreMatrix,
    model: &CorrelationModel,
    theta: &[f64],
) -> Result<DVector<f64>> {
    require_scores(scores, model)?;
    let pt = model.at(theta)?;
    let info = InfoDecomposition::from_point(&pt);
    let y = scores.scores();
    let n = y.nrows() as f64;
    let m = (y.transpose() * y) / n;
    let b = pt.b.as_matrix();
    let bm = b * &m;
    let dot_theta = DVector::from_fn(pt.q(), |k, _| {
        (-pt.bc[k].trace() + (&pt.bc[k] * b).dot(&m)) / 2.0
    });
    let dot_psi = DVector::from_fn(pt.p(), |j, _| (1.0 - bm[(j, j)]) / 2.0);
    // I_θΨ I_ΨΨ⁻¹ l̇_Ψ
    let adjust = &info.i_tpsi_un
        * info.nuisance_solve(&DMatrix::from_column_slice(pt.p(), 1, dot_psi.as_slice()))?;
    Ok(dot_theta - adjust.column(0))
}

/// One Newton step on the efficient score from `theta0`. A step that
/// leaves the domain is halved until it fits and reported as not
/// converged.
pub fn one_step_efficient(
    scores: &ScoreMatrix,
    model: &CorrelationModel,
    theta0: &[f64],
) -> Result<EstimateResult> {
    let score = mean_efficient_score(scores, model, theta0)?;
    let eff = efficient_info(model, theta0, Regime::Unequal)?;
    let step = Cholesky::factor(&eff.value)?.solve(&score);
    let mut scale = 1.0;
    for _ in 0..MAX_BACKTRACK {
        let theta: Vec<f64> = theta0
            .iter()
            .zip(step.iter())
            .map(|(t, d)| t + scale * d)
            .collect();
        if model.domain_check(&theta) {
            return Ok(EstimateResult {
                theta_hat: theta,
                iterations: 1,
                converged: scale == 1.0,
            });
        }
        scale /= 2.0;
    }
    Ok(EstimateResult {
        theta_hat: theta0.to_vec(),
        iterations: 1,
        converged: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// Normal scores rank correlation; two-dimensional models only.
    NormalScores,
    /// Moment start followed by one efficient-score step.
    OneStep,
}

impl Estimator {
    pub const ALL: [Estimator; 2] = [Estimator::NormalScores, Estimator::OneStep];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::NormalScores => "normal-scores",
            Estimator::OneStep => "one-step",
        }
    }

    fn supports(self, model: &CorrelationModel) -> bool {
        match self {
            Estimator::NormalScores => model.p() == 2,
            Estimator::OneStep => true,
        }
    }

    pub fn fit(self, scores: &ScoreMatrix, model: &CorrelationModel) -> Result<EstimateResult> {
        match self {
            Estimator::NormalScores => normal_scores_correlation(scores),
            Estimator::OneStep => one_step_efficient(scores, model, &moment_start(scores, model)?),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal-scores" | "nscore" | "vdw" => Ok(Estimator::NormalScores),
            "one-step" | "onestep" => Ok(Estimator::OneStep),
            other => Err(Error::InvalidInput(format!("unknown estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub model: CorrelationModel,
    pub theta: Vec<f64>,
    pub n: usize,
    pub reps: usize,
    pub master_seed: u64,
    pub estimators: Vec<Estimator>,
    pub margins: MarginSpec,
}

/// One estimator fitted to one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub rep: usize,
    pub seed: u64,
    pub estimator: Estimator,
    /// The fit, or the error message if it failed.
    pub outcome: std::result::Result<EstimateResult, String>,
}

/// Moments of one component of one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub estimator: Estimator,
    pub component: usize,
    pub theta_true: f64,
    /// Replicates that produced an estimate.
    pub reps: usize,
    pub failures: usize,
    pub mean_hat: f64,
    pub n_var_hat: f64,
    /// Diagonal entry of the inverse efficient information (unequal
    /// variances).
    pub bound_inv_info: f64,
}

pub const BENCH_CSV_HEADER: [&str; 8] = [
    "estimator",
    "family",
    "theta_true",
    "n",
    "R",
    "mean_hat",
    "n_var_hat",
    "bound_inv_info",
];

pub const BENCH_RECORD_CSV_HEADER: [&str; 7] = [
    "rep",
    "seed",
    "estimator",
    "component",
    "theta_hat",
    "converged",
    "error",
];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub bound: DMatrix<f64>,
    pub records: Vec<BenchRecord>,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    fn summarize(
        config: &BenchConfig,
        bound: &DMatrix<f64>,
        records: &[BenchRecord],
    ) -> Vec<BenchRow> {
        let mut rows = Vec::new();
        for &est in &config.estimators {
            let fits: Vec<&EstimateResult> = records
                .iter()
                .filter(|r| r.estimator == est)
                .filter_map(|r| r.outcome.as_ref().ok())
                .collect();
            let failures = records
                .iter()
                .filter(|r| r.estimator == est && r.outcome.is_err())
                .count();
            for (k, &theta_true) in config.theta.iter().enumerate() {
                let xs: Vec<f64> = fits.iter().map(|f| f.theta_hat[k]).collect();
                let (mean_hat, n_var_hat) = if xs.len() >= 2 {
                    (stats::mean(&xs), config.n as f64 * stats::variance(&xs))
                } else {
                    (f64::NAN, f64::NAN)
                };
                rows.push(BenchRow {
                    estimator: est,
                    component: k,
                    theta_true,
                    reps: xs.len(),
                    failures,
                    mean_hat,
                    n_var_hat,
                    bound_inv_info: bound[(k, k)],
                });
            }
        }
        rows
    }

    /// Rebuild the summary rows from the per-replicate records.
    pub fn recompute(&self) -> Vec<BenchRow> {
        Self::summarize(&self.config, &self.bound, &self.records)
    }

    pub fn row(&self, estimator: Estimator, component: usize) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.component == component)
    }

    /// Summary CSV. Multi-parameter models get one row per component, with
    /// the estimator named `name[k]`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let q = self.config.theta.len();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(BENCH_CSV_HEADER)?;
        for r in &self.rows {
            let name = if q == 1 {
                r.estimator.name().to_string()
            } else {
                format!("{}[{}]", r.estimator, r.component)
            };
            w.write_record([
                name,
                self.config.model.to_string(),
                full(r.theta_true),
                self.config.n.to_string(),
                r.reps.to_string(),
                full(r.mean_hat),
                full(r.n_var_hat),
                full(r.bound_inv_info),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_records_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(BENCH_RECORD_CSV_HEADER)?;
        for r in &self.records {
            let (rep, seed, est) = (
                r.rep.to_string(),
                r.seed.to_string(),
                r.estimator.to_string(),
            );
            match &r.outcome {
                Ok(fit) => {
                    for (k, v) in fit.theta_hat.iter().enumerate() {
                        let converged = fit.converged.to_string();
                        w.write_record([
                            &rep,
                            &seed,
                            &est,
                            &k.to_string(),
                            &full(*v),
                            &converged,
                            "",
                        ])?;
                    }
                }
                Err(msg) => w.write_record([&rep, &seed, &est, "", "", "", msg.as_str()])?,
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Fit every estimator in `config` to `reps` seeded samples. Failed fits
/// are recorded and left out of the moments.
pub fn estimator_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    if config.reps < 2 || config.n < 3 {
        return Err(Error::InvalidInput(format!(
            "need n >= 3 and reps >= 2, got n={} reps={}",
            config.n, config.reps
        )));
    }
    if config.estimators.is_empty() {
        return Err(Error::InvalidInput("no estimators requested".into()));
    }
    if let Some(est) = config
        .estimators
        .iter()
        .find(|e| !e.supports(&config.model))
    {
        return Err(Error::InvalidInput(format!(
            "estimator {est} does not support {}",
            config.model
        )));
    }
    let c = config.model.correlation(&config.theta)?;
    let bound = efficient_info(&config.model, &config.theta, Regime::Unequal)?.inverse()?;
    let per_rep: Vec<Vec<BenchRecord>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let seed = replicate_seed(config.master_seed, rep as u64);
            let scores = sample_gaussian(&c, config.n, seed)
                .and_then(|d| {
                    if config.margins.is_identity() {
                        Ok(d)
                    } else {
                        apply_margins(&d, &config.margins)
                    }
                })
                .and_then(|d| column_ranks(&d))
                .map(|r| normal_scores(&r));
            config
                .estimators
                .iter()
                .map(|&estimator| {
                    let outcome = match &scores {
                        Ok(s) => estimator.fit(s, &config.model),
                        Err(e) => Err(Error::InvalidInput(e.to_string())),
                    };
                    BenchRecord {
                        rep,
                        seed,
                        estimator,
                        outcome: outcome.map_err(|e| e.to_string()),
                    }
                })
                .collect()
        })
        .collect();
    let records: Vec<BenchRecord> = per_rep.into_iter().flatten().collect();
    let rows = BenchReport::summarize(config, &bound, &records);
    Ok(BenchReport {
        config: config.clone(),
        bound,
        records,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::Margin;

    fn scores_of(columns: &[Vec<f64>]) -> ScoreMatrix {
        let n = columns[0].len();
        ScoreMatrix::new(DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i])).unwrap()
    }

    fn sample_scores(model: &CorrelationModel, theta: &[f64], n: usize, seed: u64) -> ScoreMatrix {
        let d = sample_gaussian(&model.correlation(theta).unwrap(), n, seed).unwrap();
        normal_scores(&column_ranks(&d).unwrap())
    }

    #[test]
    fn perfect_concordance_and_reversal() {
        let s = score_set(7);
        let same = normal_scores_correlation(&scores_of(&[s.clone(), s.clone()])).unwrap();
        assert_eq!(same.theta_hat, vec![1.0]);
        assert!(!same.converged);
        let rev: Vec<f64> = s.iter().rev().copied().collect();
        let opp = normal_scores_correlation(&scores_of(&[s.clone(), rev])).unwrap();
        assert_eq!(opp.theta_hat, vec![-1.0]);
        assert!(normal_scores_correlation(&scores_of(&[s.clone(), s.clone(), s])).is_err());
    }

    #[test]
    fn antisymmetric_under_reversal() {
        let sc = sample_scores(&CorrelationModel::bivariate(), &[0.4], 101, 3);
        let flipped = ScoreMatrix::new(DMatrix::from_fn(101, 2, |i, j| {
            if j == 0 {
                sc.scores()[(i, 0)]
            } else {
                -sc.scores()[(i, 1)]
            }
        }))
        .unwrap();
        let a = normal_scores_correlation(&sc).unwrap().theta_hat[0];
        let b = normal_scores_correlation(&flipped).unwrap().theta_hat[0];
        assert_eq!(a, -b);
    }

    #[test]
    fn bivariate_efficient_score() {
        let theta = 0.35;
        let m = CorrelationModel::bivariate();
        let sc = sample_scores(&m, &[theta], 80, 4);
        let y = sc.scores();
        let d = 1.0 - theta * theta;
        let want: f64 = (0..80)
            .map(|i| {
                let (a, b) = (y[(i, 0)], y[(i, 1)]);
                (a * b - theta * (a * a + b * b) / 2.0) / (d * d)
            })
            .sum::<f64>()
            / 80.0;
        let got = mean_efficient_score(&sc, &m, &[theta]).unwrap()[0];
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn one_step_is_deterministic_and_in_domain() {
        let m = CorrelationModel::ar1(4).unwrap();
        let sc = sample_scores(&m, &[0.5], 500, 8);
        let a = one_step_efficient(&sc, &m, &[0.5]).unwrap();
        let b = one_step_efficient(&sc, &m, &[0.5]).unwrap();
        assert_eq!(a, b);
        assert!(a.converged && m.domain_check(&a.theta_hat));
        assert!((a.theta_hat[0] - 0.5).abs() < 0.1);
    }

    #[test]
    fn one_step_backtracks_out_of_domain() {
        // inflated scores push a full step far past θ = 1
        let s: Vec<f64> = score_set(50).iter().map(|v| 10.0 * v).collect();
        let sc = scores_of(&[s.clone(), s]);
        let m = CorrelationModel::bivariate();
        let r = one_step_efficient(&sc, &m, &[0.5]).unwrap();
        assert!(!r.converged);
        assert!(m.domain_check(&r.theta_hat) && r.theta_hat[0] > 0.5);
    }

    #[test]
    fn moment_start_examples() {
        let m = CorrelationModel::exchangeable(4).unwrap();
        let start = moment_start(&sample_scores(&m, &[0.5], 4000, 1), &m).unwrap();
        assert!((start[0] - 0.5).abs() < 0.05);
        let u = CorrelationModel::unstructured(3).unwrap();
        let start = moment_start(&sample_scores(&u, &[0.0, 0.0, 0.0], 4000, 2), &u).unwrap();
        assert!(start.iter().all(|t| t.abs() < 0.06));
    }

    #[test]
    fn unstructured_projection_stays_pd() {
        // columns 0 and 1 identical, column 2 reversed: R is singular
        let s = score_set(30);
        let rev: Vec<f64> = s.iter().rev().copied().collect();
        let u = CorrelationModel::unstructured(3).unwrap();
        let start = moment_start(&scores_of(&[s.clone(), s, rev]), &u).unwrap();
        assert!(u.domain_check(&start), "{start:?}");
    }

    #[test]
    fn benchmark_is_rank_invariant() {
        let mut config = BenchConfig {
            model: CorrelationModel::bivariate(),
            theta: vec![0.3],
            n: 200,
            reps: 20,
            master_seed: 5,
            estimators: Estimator::ALL.to_vec(),
            margins: MarginSpec::identity(),
        };
        let plain = estimator_benchmark(&config).unwrap();
        config.margins = MarginSpec::uniform(Margin::Cube);
        let warped = estimator_benchmark(&config).unwrap();
        assert_eq!(plain.records, warped.records);
        assert_eq!(plain.recompute(), plain.rows);
        let bound = plain
            .row(Estimator::NormalScores, 0)
            .unwrap()
            .bound_inv_info;
        assert!((bound - 0.91_f64.powi(2)).abs() < 1e-12);

        config.model = CorrelationModel::ar1(3).unwrap();
        assert!(estimator_benchmark(&config).unwrap_err().is_validation());
    }
}
