//! Seeded Monte Carlo experiments on the local likelihood ratio.

use std::io::Write;

use rayon::prelude::*;

use super::{quad_diff_stats, LanSetup, QuadStats};
use crate::corrmodels::CorrelationModel;
use crate::error::{Error, Result};
use crate::fmt::full;
use crate::infobounds::{efficient_info, Regime};
use crate::sampling::{
    apply_margins, column_ranks, normal_scores, replicate_seed, sample_gaussian, MarginSpec,
};
use crate::sampling::{norm_cdf, DataMatrix, ScoreMatrix};
use crate::stats;

pub const MIN_REPLICATES: usize = 100;

pub const REPLICATE_CSV_HEADER: [&str; 8] = [
    "rep",
    "seed",
    "lambda_y",
    "lambda_hat",
    "diff",
    "s_n",
    "q_n",
    "l_n",
];

#[derive(Debug, Clone, PartialEq)]
pub struct LanConfig {
    pub model: CorrelationModel,
    pub theta: Vec<f64>,
    pub s: Vec<f64>,
    pub regime: Regime,
    pub n: usize,
    pub reps: usize,
    pub master_seed: u64,
    /// Applied to the latent Gaussian sample before `λ_y` and the ranks.
    pub margins: MarginSpec,
}

/// One replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlrSample {
    pub rep: usize,
    pub seed: u64,
    pub lambda_y: f64,
    pub lambda_hat: f64,
    /// `lambda_y - lambda_hat`.
    pub diff: f64,
    pub quad: QuadStats,
    /// Tied pairs broken while ranking.
    pub ties: usize,
}

/// Aggregates over the replicates of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub mean_lambda_hat: f64,
    pub var_lambda_hat: f64,
    pub mean_lambda_y: f64,
    pub var_lambda_y: f64,
    /// `s' I_eff s`.
    pub sigma2: f64,
    pub predicted_mean: f64,
    pub predicted_var: f64,
    pub mean_exp_lambda_y: f64,
    pub se_exp_lambda_y: f64,
    pub abs_diff_median: f64,
    pub abs_diff_q90: f64,
    pub abs_diff_max: f64,
    pub skewness_lambda_hat: f64,
    pub excess_kurtosis_lambda_hat: f64,
    /// Kolmogorov distance of the `λ_ŷ` sample from `N(-σ²/2, σ²)`.
    pub ks_lambda_hat: f64,
    pub total_ties: usize,
}

impl McSummary {
    fn compute(records: &[LlrSample], sigma2: f64) -> Self {
        let hat: Vec<f64> = records.iter().map(|r| r.lambda_hat).collect();
        let ly: Vec<f64> = records.iter().map(|r| r.lambda_y).collect();
        let ely: Vec<f64> = ly.iter().map(|v| v.exp()).collect();
        let abs_diff = stats::sorted(records.iter().map(|r| r.diff.abs()));
        let sd = sigma2.sqrt();
        let ks = if sd > 0.0 {
            stats::ks_distance(&hat, |x| norm_cdf((x + sigma2 / 2.0) / sd))
        } else {
            stats::ks_distance(&hat, |x| if x >= 0.0 { 1.0 } else { 0.0 })
        };
        McSummary {
            mean_lambda_hat: stats::mean(&hat),
            var_lambda_hat: stats::variance(&hat),
            mean_lambda_y: stats::mean(&ly),
            var_lambda_y: stats::variance(&ly),
            sigma2,
            predicted_mean: -sigma2 / 2.0,
            predicted_var: sigma2,
            mean_exp_lambda_y: stats::mean(&ely),
            se_exp_lambda_y: (stats::variance(&ely) / ely.len() as f64).sqrt(),
            abs_diff_median: stats::quantile_sorted(&abs_diff, 0.5),
            abs_diff_q90: stats::quantile_sorted(&abs_diff, 0.9),
            abs_diff_max: *abs_diff.last().unwrap(),
            skewness_lambda_hat: stats::skewness(&hat),
            excess_kurtosis_lambda_hat: stats::excess_kurtosis(&hat),
            ks_lambda_hat: ks,
            total_ties: records.iter().map(|r| r.ties).sum(),
        }
    }

    /// Standard error of the `λ_ŷ` sample mean.
    pub fn se_mean_lambda_hat(&self, reps: usize) -> f64 {
        (self.var_lambda_hat / reps as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub config: LanConfig,
    pub records: Vec<LlrSample>,
    pub summary: McSummary,
}

impl McReport {
    /// Rebuild the summary from the stored records.
    pub fn recompute(&self) -> McSummary {
        McSummary::compute(&self.records, self.summary.sigma2)
    }

    pub fn write_replicates_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPLICATE_CSV_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.rep.to_string(),
                r.seed.to_string(),
                full(r.lambda_y),
                full(r.lambda_hat),
                full(r.diff),
                full(r.quad.s_n),
                full(r.quad.q_n),
                full(r.quad.l_n),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `key,value` rows with the configuration, predicted and empirical
    /// moments and the diagnostics.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let c = &self.config;
        let s = &self.summary;
        let join = |v: &[f64]| v.iter().map(|x| full(*x)).collect::<Vec<_>>().join(";");
        let rows: Vec<(&str, String)> = vec![
            ("model", c.model.to_string()),
            ("theta", join(&c.theta)),
            ("s", join(&c.s)),
            ("regime", c.regime.to_string()),
            ("n", c.n.to_string()),
            ("reps", c.reps.to_string()),
            ("master_seed", c.master_seed.to_string()),
            ("margins", c.margins.to_string()),
            ("sigma2", full(s.sigma2)),
            ("predicted_mean", full(s.predicted_mean)),
            ("predicted_var", full(s.predicted_var)),
            ("mean_lambda_hat", full(s.mean_lambda_hat)),
            ("se_mean_lambda_hat", full(s.se_mean_lambda_hat(c.reps))),
            ("var_lambda_hat", full(s.var_lambda_hat)),
            ("mean_lambda_y", full(s.mean_lambda_y)),
            ("var_lambda_y", full(s.var_lambda_y)),
            ("mean_exp_lambda_y", full(s.mean_exp_lambda_y)),
            ("se_exp_lambda_y", full(s.se_exp_lambda_y)),
            ("abs_diff_median", full(s.abs_diff_median)),
            ("abs_diff_q90", full(s.abs_diff_q90)),
            ("abs_diff_max", full(s.abs_diff_max)),
            ("skewness_lambda_hat", full(s.skewness_lambda_hat)),
            (
                "excess_kurtosis_lambda_hat",
                full(s.excess_kurtosis_lambda_hat),
            ),
            ("ks_lambda_hat", full(s.ks_lambda_hat)),
            ("total_ties", s.total_ties.to_string()),
        ];
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["key", "value"])?;
        for (k, v) in rows {
            w.write_record([k, v.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One replicate's latent sample, observed sample and scores.
fn draw(
    setup: &LanSetup,
    margins: &MarginSpec,
    seed: u64,
) -> Result<(DataMatrix, DataMatrix, ScoreMatrix, usize)> {
    let latent = sample_gaussian(&setup.point.c, setup.pert.n, seed)?;
    let observed = if margins.is_identity() {
        latent.clone()
    } else {
        apply_margins(&latent, margins)?
    };
    let ranks = column_ranks(&observed)?;
    let ties = ranks.ties();
    Ok((latent, observed, normal_scores(&ranks), ties))
}

fn run_replicate(
    setup: &LanSetup,
    margins: &MarginSpec,
    rep: usize,
    seed: u64,
) -> Result<LlrSample> {
    let (latent, observed, scores, ties) = draw(setup, margins, seed)?;
    let lambda_y = setup.lambda_y(&observed)?;
    let lambda_hat = setup.lambda_hat(&scores)?;
    let quad = quad_diff_stats(&latent, &scores, &setup.a)?;
    Ok(LlrSample {
        rep,
        seed,
        lambda_y,
        lambda_hat,
        diff: lambda_y - lambda_hat,
        quad,
        ties,
    })
}

/// Collect per-replicate results in order, reporting the lowest failing
/// replicate so the error does not depend on scheduling.
fn collect_ordered<T>(results: Vec<(usize, u64, Result<T>)>) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(results.len());
    for (rep, seed, r) in results {
        match r {
            Ok(v) => out.push(v),
            Err(e) => {
                return Err(Error::Replicate {
                    rep,
                    seed,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(out)
}

/// Simulate `reps` samples from the Gaussian copula at `θ` and record the
/// exact and rank-based local log-likelihood ratios in direction `s`.
/// Replicates run in parallel on the current rayon pool; the report does
/// not depend on the number of threads.
pub fn mc_lan_experiment(config: &LanConfig) -> Result<McReport> {
    if config.reps < MIN_REPLICATES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_REPLICATES} replicates, got {}",
            config.reps
        )));
    }
    if config.n < 2 {
        return Err(Error::InvalidInput(format!(
            "sample size must be at least 2, got {}",
            config.n
        )));
    }
    let setup = LanSetup::new(
        &config.model,
        &config.theta,
        &config.s,
        config.n,
        config.regime,
    )?;
    let sigma2 = efficient_info(&config.model, &config.theta, config.regime)?.quad(&config.s);
    let results: Vec<_> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let seed = replicate_seed(config.master_seed, rep as u64);
            (rep, seed, run_replicate(&setup, &config.margins, rep, seed))
        })
        .collect();
    let records = collect_ordered(results)?;
    let summary = McSummary::compute(&records, sigma2);
    Ok(McReport {
        config: config.clone(),
        records,
        summary,
    })
}

pub const QUADCONV_CSV_HEADER: [&str; 8] = [
    "n",
    "reps",
    "median_abs_s",
    "iqr_abs_s",
    "median_abs_q",
    "iqr_abs_q",
    "median_abs_l",
    "iqr_abs_l",
];

/// Spread of `|S_n|`, `|Q_n|`, `|L_n|` at one sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConvRow {
    pub n: usize,
    pub reps: usize,
    pub median_abs_s: f64,
    pub iqr_abs_s: f64,
    pub median_abs_q: f64,
    pub iqr_abs_q: f64,
    pub median_abs_l: f64,
    pub iqr_abs_l: f64,
}

impl QuadConvRow {
    pub fn write_csv<W: Write>(rows: &[QuadConvRow], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(QUADCONV_CSV_HEADER)?;
        for r in rows {
            w.write_record([
                r.n.to_string(),
                r.reps.to_string(),
                full(r.median_abs_s),
                full(r.iqr_abs_s),
                full(r.median_abs_q),
                full(r.iqr_abs_q),
                full(r.median_abs_l),
                full(r.iqr_abs_l),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn median_iqr(xs: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v = stats::sorted(xs);
    (
        stats::quantile_sorted(&v, 0.5),
        stats::quantile_sorted(&v, 0.75) - stats::quantile_sorted(&v, 0.25),
    )
}

/// Quadratic-form statistics for `A = Σ s_k A_k` across sample sizes.
/// Sample size `ns[i]` uses master seed `replicate_seed(master_seed, i)`.
pub fn quad_convergence(
    model: &CorrelationModel,
    theta: &[f64],
    s: &[f64],
    regime: Regime,
    ns: &[usize],
    reps: usize,
    master_seed: u64,
) -> Result<Vec<QuadConvRow>> {
    if reps == 0 || ns.is_empty() {
        return Err(Error::InvalidInput(
            "need at least one sample size and one replicate".into(),
        ));
    }
    let mut rows = Vec::with_capacity(ns.len());
    for (i, &n) in ns.iter().enumerate() {
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "sample size must be at least 2, got {n}"
            )));
        }
        let setup = LanSetup::new(model, theta, s, n, regime)?;
        let master = replicate_seed(master_seed, i as u64);
        let results: Vec<_> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let seed = replicate_seed(master, rep as u64);
                let q = draw(&setup, &MarginSpec::identity(), seed)
                    .and_then(|(latent, _, scores, _)| quad_diff_stats(&latent, &scores, &setup.a));
                (rep, seed, q)
            })
            .collect();
        let stats = collect_ordered(results)?;
        let (median_abs_s, iqr_abs_s) = median_iqr(stats.iter().map(|q| q.s_n.abs()));
        let (median_abs_q, iqr_abs_q) = median_iqr(stats.iter().map(|q| q.q_n.abs()));
        let (median_abs_l, iqr_abs_l) = median_iqr(stats.iter().map(|q| q.l_n.abs()));
        rows.push(QuadConvRow {
            n,
            reps,
            median_abs_s,
            iqr_abs_s,
            median_abs_q,
            iqr_abs_q,
            median_abs_l,
            iqr_abs_l,
        });
    }
    Ok(rows)
}
