use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "copula-bounds",
    version,
    about = "Information bounds and rank-based LAN experiments for Gaussian copulas"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate inverse information bounds over a parameter grid.
    Bounds {
        #[command(flatten)]
        common: CommonArgs,
        /// Also write the known→equal and equal→unequal bound differences.
        #[arg(long)]
        differences: bool,
    },
    /// Check whether diag(B C_θ) is constant along a grid.
    Symmetry {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Monte Carlo check of the local likelihood ratio and its rank approximation.
    Lan {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Spread of the quadratic-form statistics S_n, Q_n, L_n across sample sizes.
    Quadconv {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Benchmark rank-based estimators against the information bound.
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
    },
}

/// Flags shared by every subcommand. Each one may also come from the
/// config file; a flag given here wins.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Read settings from a config file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// exchangeable, ar1, circular, unstructured or bivariate.
    #[arg(long)]
    pub family: Option<String>,

    /// Dimension of the correlation matrix.
    #[arg(long)]
    pub p: Option<String>,

    /// Parameter value; comma-separated for several parameters.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<String>,

    /// Grid `lo:hi:count`, endpoints included.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,

    /// known, equal or unequal; comma-separated where several make sense.
    #[arg(long)]
    pub regime: Option<String>,

    /// Sample size; comma-separated list for quadconv.
    #[arg(long)]
    pub n: Option<String>,

    /// Monte Carlo replicates.
    #[arg(long)]
    pub reps: Option<String>,

    /// Master seed (required by randomized commands).
    #[arg(long)]
    pub seed: Option<String>,

    /// Monotone margin transforms, e.g. `exp` or `exp;cube;identity`.
    #[arg(long, allow_hyphen_values = true)]
    pub margins: Option<String>,

    /// Output directory; without it the main table goes to stdout.
    #[arg(long, value_name = "DIR")]
    pub out: Option<String>,

    /// Worker threads (results do not depend on this).
    #[arg(long)]
    pub threads: Option<String>,

    /// Local direction s; comma-separated for several parameters.
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<String>,

    /// Estimators: normal-scores, one-step.
    #[arg(long)]
    pub estimators: Option<String>,

    /// Relative tolerance for the symmetry verdict.
    #[arg(long)]
    pub tol: Option<String>,
}

impl CommonArgs {
    /// Flags given on the command line, as `(key, value)` pairs in config
    /// file syntax.
    pub fn overrides(&self) -> Vec<(&'static str, String)> {
        let fields = [
            ("family", &self.family),
            ("p", &self.p),
            ("theta", &self.theta),
            ("grid", &self.grid),
            ("regime", &self.regime),
            ("n", &self.n),
            ("reps", &self.reps),
            ("seed", &self.seed),
            ("margins", &self.margins),
            ("out", &self.out),
            ("threads", &self.threads),
            ("s", &self.s),
            ("estimators", &self.estimators),
            ("tol", &self.tol),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
            .collect()
    }
}
