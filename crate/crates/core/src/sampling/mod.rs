//! Gaussian copula samples, columnwise ranks and normal scores.

pub mod normal;
pub mod stream;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::corrmodels::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::fmt as numfmt;

pub use normal::{inv_norm_cdf, norm_cdf, norm_pdf};
pub use stream::{replicate_seed, NormalStream};

/// An `n × p` matrix of observations, one row per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 rows, got {}",
                values.nrows()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::InvalidInput("data has no columns".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let n = values.nrows();
            return Err(Error::InvalidInput(format!(
                "non-finite entry at row {}, column {}",
                pos % n,
                pos / n
            )));
        }
        Ok(DataMatrix { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Write as headerless CSV, one row per observation.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_matrix_csv(&self.values, out)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(input);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidInput(format!("cannot parse '{f}' as a number")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let p = rows.first().map_or(0, Vec::len);
        let n = rows.len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        if flat.len() != n * p {
            return Err(Error::Shape("ragged CSV rows".into()));
        }
        DataMatrix::new(DMatrix::from_row_slice(n, p, &flat))
    }
}

fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| numfmt::full(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Columnwise ranks, 1 = smallest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankMatrix {
    ranks: DMatrix<u32>,
    ties: usize,
}

impl RankMatrix {
    /// Wrap raw ranks after checking each column is a permutation of `1..=n`.
    pub fn new(ranks: DMatrix<u32>) -> Result<Self> {
        let n = ranks.nrows();
        if n < 2 {
            return Err(Error::InvalidInput("need at least 2 rows".into()));
        }
        for (j, col) in ranks.column_iter().enumerate() {
            let mut seen = vec![false; n];
            for &r in col.iter() {
                let r = r as usize;
                if r == 0 || r > n || std::mem::replace(&mut seen[r - 1], true) {
                    return Err(Error::InvalidInput(format!(
                        "column {j} is not a permutation of 1..={n}"
                    )));
                }
            }
        }
        Ok(RankMatrix { ranks, ties: 0 })
    }

    pub fn n(&self) -> usize {
        self.ranks.nrows()
    }

    pub fn p(&self) -> usize {
        self.ranks.ncols()
    }

    pub fn ranks(&self) -> &DMatrix<u32> {
        &self.ranks
    }

    /// Number of exactly tied adjacent pairs broken by row index.
    pub fn ties(&self) -> usize {
        self.ties
    }
}

/// Normal scores `Φ⁻¹(R/(n+1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    scores: DMatrix<f64>,
}

impl ScoreMatrix {
    /// Wrap precomputed scores; entries must be finite.
    pub fn new(scores: DMatrix<f64>) -> Result<Self> {
        if scores.nrows() < 2 || scores.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "score matrix must be at least 2x1, got {}x{}",
                scores.nrows(),
                scores.ncols()
            )));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite score".into()));
        }
        Ok(ScoreMatrix { scores })
    }

    pub fn n(&self) -> usize {
        self.scores.nrows()
    }

    pub fn p(&self) -> usize {
        self.scores.ncols()
    }

    pub fn scores(&self) -> &DMatrix<f64> {
        &self.scores
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_matrix_csv(&self.scores, out)
    }
}

/// Strictly increasing, continuous transform applied to one column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Margin {
    Identity,
    /// `exp(x)`
    Exponential,
    /// Standard logistic quantile of `Φ(x)`: `log Φ(x) − log Φ(−x)`.
    LogisticQuantile,
    /// `x³`
    Cube,
    /// `a·x + b` with `a > 0`.
    Affine {
        a: f64,
        b: f64,
    },
}

impl Margin {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Margin::Identity => x,
            Margin::Exponential => x.exp(),
            Margin::LogisticQuantile => norm_cdf(x).ln() - norm_cdf(-x).ln(),
            Margin::Cube => x * x * x,
            Margin::Affine { a, b } => a * x + b,
        }
    }
}

impl fmt::Display for Margin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Margin::Identity => f.write_str("identity"),
            Margin::Exponential => f.write_str("exp"),
            Margin::LogisticQuantile => f.write_str("logistic"),
            Margin::Cube => f.write_str("cube"),
            Margin::Affine { a, b } => write!(f, "affine({a},{b})"),
        }
    }
}

impl FromStr for Margin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "identity" | "id" => return Ok(Margin::Identity),
            "exp" | "exponential" => return Ok(Margin::Exponential),
            "logistic" | "logistic-quantile" => return Ok(Margin::LogisticQuantile),
            "cube" => return Ok(Margin::Cube),
            _ => {}
        }
        let args = lower
            .strip_prefix("affine(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::InvalidInput(format!("unknown margin transform '{s}'")))?;
        let parts: Vec<&str> = args.split(',').collect();
        let nums = parts
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::InvalidInput(format!("bad affine arguments in '{s}'")))?;
        match nums.as_slice() {
            [a, b] if *a > 0.0 && a.is_finite() && b.is_finite() => {
                Ok(Margin::Affine { a: *a, b: *b })
            }
            _ => Err(Error::InvalidInput(format!(
                "affine needs (a > 0, b), got '{s}'"
            ))),
        }
    }
}

/// One transform per column; a single transform applies to every column.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginSpec(Vec<Margin>);

impl MarginSpec {
    pub fn new(margins: Vec<Margin>) -> Self {
        MarginSpec(margins)
    }

    pub fn uniform(margin: Margin) -> Self {
        MarginSpec(vec![margin])
    }

    pub fn identity() -> Self {
        Self::uniform(Margin::Identity)
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|m| *m == Margin::Identity)
    }

    pub fn margins(&self) -> &[Margin] {
        &self.0
    }

    fn for_column(&self, j: usize, p: usize) -> Result<Margin> {
        match self.0.len() {
            1 => Ok(self.0[0]),
            len if len == p => Ok(self.0[j]),
            len => Err(Error::Shape(format!(
                "{len} margin transforms for {p} columns"
            ))),
        }
    }
}

impl Default for MarginSpec {
    fn default() -> Self {
        Self::identity()
    }
}

impl fmt::Display for MarginSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(Margin::to_string).collect();
        f.write_str(&parts.join(";"))
    }
}

/// Transforms separated by `;`, or by `,` outside parentheses.
impl FromStr for MarginSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = Vec::new();
        let mut depth = 0usize;
        let mut start = 0;
        for (i, ch) in s.char_indices() {
            match ch {
                '(' => depth += 1,
                ')' => depth = depth.saturating_sub(1),
                ',' | ';' if depth == 0 => {
                    parts.push(&s[start..i]);
                    start = i + 1;
                }
                _ => {}
            }
        }
        parts.push(&s[start..]);
        let margins = parts
            .into_iter()
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Margin>>>()?;
        if margins.is_empty() {
            return Err(Error::InvalidInput("empty margin specification".into()));
        }
        Ok(MarginSpec(margins))
    }
}

/// `n` draws from `N_p(0, C)` as `L z`, `L` the lower Cholesky factor. The
/// same `(C, n, seed)` always yields bitwise identical output.
pub fn sample_gaussian(c: &CorrelationMatrix, n: usize, seed: u64) -> Result<DataMatrix> {
    sample_gaussian_with(c, n, &mut NormalStream::new(seed))
}

pub fn sample_gaussian_with(
    c: &CorrelationMatrix,
    n: usize,
    stream: &mut NormalStream,
) -> Result<DataMatrix> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "sample size must be at least 2, got {n}"
        )));
    }
    let chol = c.cholesky()?;
    let l = chol.l();
    let p = c.p();
    let mut values = DMatrix::zeros(n, p);
    let mut z = vec![0.0; p];
    for i in 0..n {
        for zj in z.iter_mut() {
            *zj = stream.next_normal();
        }
        for j in 0..p {
            let mut s = 0.0;
            for (k, zk) in z.iter().enumerate().take(j + 1) {
                s += l[(j, k)] * zk;
            }
            values[(i, j)] = s;
        }
    }
    Ok(DataMatrix { values })
}

/// Apply the per-column transforms.
pub fn apply_margins(data: &DataMatrix, margins: &MarginSpec) -> Result<DataMatrix> {
    let p = data.p();
    let mut values = data.values.clone();
    for j in 0..p {
        let m = margins.for_column(j, p)?;
        if m == Margin::Identity {
            continue;
        }
        for v in values.column_mut(j).iter_mut() {
            *v = m.apply(*v);
        }
    }
    DataMatrix::new(values)
}

/// Ranks within each column. Exact ties are broken by row index.
pub fn column_ranks(data: &DataMatrix) -> Result<RankMatrix> {
    let n = data.n();
    let p = data.p();
    let mut ranks = DMatrix::<u32>::zeros(n, p);
    let mut ties = 0;
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for j in 0..p {
        let col = data.values.column(j);
        order.clear();
        order.extend(0..n);
        // stable sort keeps row order among equal values
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        for (r, &i) in order.iter().enumerate() {
            ranks[(i, j)] = (r + 1) as u32;
        }
        ties += order.windows(2).filter(|w| col[w[0]] == col[w[1]]).count();
    }
    Ok(RankMatrix { ranks, ties })
}

/// `Φ⁻¹(i/(n+1))` for `i = 1..=n`, exactly antisymmetric: the score of rank
/// `n+1-i` is the negation of the score of rank `i`.
pub fn score_set(n: usize) -> Vec<f64> {
    let denom = (n + 1) as f64;
    let mut s = vec![0.0; n];
    for i in 1..=n {
        let mirror = n + 1 - i;
        s[i - 1] = if 2 * i < n + 1 {
            normal::quantile(i as f64 / denom)
        } else if 2 * i == n + 1 {
            0.0
        } else {
            -normal::quantile(mirror as f64 / denom)
        };
    }
    s
}

pub fn normal_scores(ranks: &RankMatrix) -> ScoreMatrix {
    let table = score_set(ranks.n());
    ScoreMatrix {
        scores: ranks.ranks.map(|r| table[r as usize - 1]),
    }
}
