//! Local log-likelihood ratios of the Gaussian copula model and their
//! rank-based approximations.
//!
//! Variances are parameterized by precisions `ψ` (inverse variances). The
//! reference point is always unit precision, and a local perturbation moves
//! `(θ, ψ)` to `(θ + s/√n, 1 + t/√n)`.

mod experiment;

pub use experiment::{
    mc_lan_experiment, quad_convergence, LanConfig, LlrSample, McReport, McSummary, QuadConvRow,
    QUADCONV_CSV_HEADER, REPLICATE_CSV_HEADER,
};

use nalgebra::{DMatrix, DVector};

use crate::corrmodels::{CorrelationModel, ModelPoint};
use crate::error::{Error, Result};
use crate::infobounds::{InfoDecomposition, Regime};
use crate::linalg::Cholesky;
use crate::sampling::{DataMatrix, ScoreMatrix};

/// Tolerance of the construction-time check on `diag((A + A')C)`,
/// relative to `max(1, p·max|A|)`. Near the domain boundary `A` grows like
/// the squared condition number of `C` and an absolute bound would reject
/// pure rounding error.
pub const A_MATRIX_TOL: f64 = 1e-8;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Marginal precisions of a multivariate normal with correlation `C`.
#[derive(Debug, Clone, PartialEq)]
pub enum Precisions {
    /// One precision shared by all coordinates.
    Common(f64),
    /// One precision per coordinate.
    PerCoordinate(Vec<f64>),
}

impl Precisions {
    pub fn unit() -> Self {
        Precisions::Common(1.0)
    }

    fn validate(&self, p: usize) -> Result<()> {
        let ok = match self {
            Precisions::Common(v) => v.is_finite() && *v > 0.0,
            Precisions::PerCoordinate(v) => {
                if v.len() != p {
                    return Err(Error::Shape(format!(
                        "{} precisions for dimension {p}",
                        v.len()
                    )));
                }
                v.iter().all(|x| x.is_finite() && *x > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "precisions must be positive, got {self:?}"
            )))
        }
    }

    fn sqrt_at(&self, j: usize) -> f64 {
        match self {
            Precisions::Common(v) => v.sqrt(),
            Precisions::PerCoordinate(v) => v[j].sqrt(),
        }
    }

    fn log_sum(&self, p: usize) -> f64 {
        match self {
            Precisions::Common(v) => p as f64 * v.ln(),
            Precisions::PerCoordinate(v) => v.iter().map(|x| x.ln()).sum(),
        }
    }
}

/// Gaussian log-likelihood of the rows of `data` under correlation
/// `C(θ)` and the given marginal precisions.
pub fn loglik(
    data: &DataMatrix,
    model: &CorrelationModel,
    theta: &[f64],
    prec: &Precisions,
) -> Result<f64> {
    let chol = model.correlation(theta)?.cholesky()?;
    loglik_with(&chol, data, prec)
}

fn loglik_with(chol: &Cholesky, data: &DataMatrix, prec: &Precisions) -> Result<f64> {
    let p = chol.dim();
    if data.p() != p {
        return Err(Error::Shape(format!(
            "data has {} columns, model has dimension {p}",
            data.p()
        )));
    }
    prec.validate(p)?;
    let n = data.n();
    let values = data.values();
    let scale: Vec<f64> = (0..p).map(|j| prec.sqrt_at(j)).collect();
    let mut row = vec![0.0; p];
    let mut scratch = vec![0.0; p];
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..p {
            row[j] = scale[j] * values[(i, j)];
        }
        quad += chol.inv_quad_form(&row, &mut scratch);
    }
    // log|B| = -log|C|
    let per_row = -(p as f64) * LN_2PI + prec.log_sum(p) - chol.log_det();
    Ok((n as f64 * per_row - quad) / 2.0)
}

/// Perturbation of the variance parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum NuisanceShift {
    /// Variances held at one.
    None,
    /// Common precision moves to `1 + t/√n`.
    Common(f64),
    /// Precision `j` moves to `1 + t_j/√n`.
    PerCoordinate(Vec<f64>),
}

impl NuisanceShift {
    fn matches(&self, regime: Regime) -> bool {
        matches!(
            (self, regime),
            (NuisanceShift::None, Regime::Known)
                | (NuisanceShift::Common(_), Regime::Equal)
                | (NuisanceShift::PerCoordinate(_), Regime::Unequal)
        )
    }
}

/// A √n-local move `(θ, 1) → (θ + s/√n, 1 + t/√n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPerturbation {
    pub s: Vec<f64>,
    pub t: NuisanceShift,
    pub n: usize,
}

impl LocalPerturbation {
    pub fn new(s: Vec<f64>, t: NuisanceShift, n: usize) -> Self {
        LocalPerturbation { s, t, n }
    }

    /// The information-optimal nuisance direction for `s`: `t = h's` in the
    /// equal regime, `t = H s` in the unequal regime.
    pub fn optimal(
        model: &CorrelationModel,
        theta: &[f64],
        s: &[f64],
        n: usize,
        regime: Regime,
    ) -> Result<Self> {
        let t = match regime {
            Regime::Known => NuisanceShift::None,
            _ => h_vector(model, theta, regime)?.contract(s)?,
        };
        Ok(LocalPerturbation {
            s: s.to_vec(),
            t,
            n,
        })
    }

    fn root_n(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    /// `θ + s/√n`.
    pub fn perturbed_theta(&self, theta: &[f64]) -> Vec<f64> {
        let r = self.root_n();
        theta.iter().zip(&self.s).map(|(t, s)| t + s / r).collect()
    }

    /// `1 + t/√n`.
    pub fn perturbed_precisions(&self) -> Precisions {
        let r = self.root_n();
        match &self.t {
            NuisanceShift::None => Precisions::unit(),
            NuisanceShift::Common(t) => Precisions::Common(1.0 + t / r),
            NuisanceShift::PerCoordinate(t) => {
                Precisions::PerCoordinate(t.iter().map(|t| 1.0 + t / r).collect())
            }
        }
    }

    /// Checks lengths, that `θ + s/√n` stays in the domain and that the
    /// perturbed precisions stay positive.
    pub fn validate(&self, model: &CorrelationModel, theta: &[f64], regime: Regime) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("perturbation needs n >= 1".into()));
        }
        if self.s.len() != model.q() || theta.len() != model.q() {
            return Err(Error::Shape(format!(
                "s has length {}, theta {}, model expects {}",
                self.s.len(),
                theta.len(),
                model.q()
            )));
        }
        if !self.t.matches(regime) {
            return Err(Error::InvalidInput(format!(
                "nuisance shift {:?} does not fit the {regime} regime",
                self.t
            )));
        }
        let shifted = self.perturbed_theta(theta);
        if !model.domain_check(&shifted) {
            return Err(Error::Domain {
                family: model.to_string(),
                theta: shifted,
            });
        }
        self.perturbed_precisions().validate(model.p())
    }
}

/// Nuisance directions `h_k`, one per copula parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum HVector {
    /// Scalar `h_k = tr(B C_θk)/p`.
    Equal(Vec<f64>),
    /// Column `k` is `h_k = 2(I + B∘C)⁻¹ diag(B C_θk)`; p×q.
    Unequal(DMatrix<f64>),
}

impl HVector {
    /// The nuisance shift `t` paired with copula direction `s`.
    pub fn contract(&self, s: &[f64]) -> Result<NuisanceShift> {
        match self {
            HVector::Equal(h) => {
                check_len(s, h.len())?;
                Ok(NuisanceShift::Common(
                    h.iter().zip(s).map(|(h, s)| h * s).sum(),
                ))
            }
            HVector::Unequal(h) => {
                check_len(s, h.ncols())?;
                let t = h * DVector::from_column_slice(s);
                Ok(NuisanceShift::PerCoordinate(t.as_slice().to_vec()))
            }
        }
    }

    /// `h_k` as a p-vector (the equal-regime scalar is replicated).
    pub fn component(&self, k: usize, p: usize) -> DVector<f64> {
        match self {
            HVector::Equal(h) => DVector::from_element(p, h[k]),
            HVector::Unequal(h) => h.column(k).into_owned(),
        }
    }
}

fn check_len(s: &[f64], q: usize) -> Result<()> {
    if s.len() == q {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "direction has length {}, model has {q} parameters",
            s.len()
        )))
    }
}

fn no_nuisance() -> Error {
    Error::NotAvailable("the known-variance regime has no nuisance direction".into())
}

pub fn h_vector(model: &CorrelationModel, theta: &[f64], regime: Regime) -> Result<HVector> {
    let pt = model.at(theta)?;
    h_from_point(&pt, &InfoDecomposition::from_point(&pt), regime)
}

fn h_from_point(pt: &ModelPoint, info: &InfoDecomposition, regime: Regime) -> Result<HVector> {
    let p = pt.p() as f64;
    match regime {
        Regime::Known => Err(no_nuisance()),
        Regime::Equal => Ok(HVector::Equal(
            pt.bc.iter().map(|bc| bc.trace() / p).collect(),
        )),
        Regime::Unequal => {
            let diag = DMatrix::from_fn(pt.p(), pt.q(), |j, k| pt.bc[k][(j, j)]);
            // 2(I + B∘C)⁻¹ = (1/2) I_ΨΨ⁻¹
            Ok(HVector::Unequal(info.nuisance_solve(&diag)? / 2.0))
        }
    }
}

/// The matrices `A_k` whose quadratic forms `y'A_k y` make up the copula
/// part of the efficient score.
#[derive(Debug, Clone)]
pub struct AMatrixStack {
    regime: Regime,
    mats: Vec<DMatrix<f64>>,
    /// Largest `|diag((A_k + A_k')C)|` seen at construction.
    residual: f64,
    /// The same, divided by `max(1, p·max|A_k|)`.
    relative_residual: f64,
}

impl AMatrixStack {
    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn get(&self, k: usize) -> &DMatrix<f64> {
        &self.mats[k]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DMatrix<f64>> {
        self.mats.iter()
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn relative_residual(&self) -> f64 {
        self.relative_residual
    }

    /// `Σ_k s_k A_k`.
    pub fn contract(&self, s: &[f64]) -> Result<DMatrix<f64>> {
        check_len(s, self.mats.len())?;
        let p = self.mats[0].nrows();
        Ok(self
            .mats
            .iter()
            .zip(s)
            .fold(DMatrix::zeros(p, p), |acc, (a, s)| acc + a * *s))
    }
}

pub fn a_matrices(model: &CorrelationModel, theta: &[f64], regime: Regime) -> Result<AMatrixStack> {
    let pt = model.at(theta)?;
    let h = h_from_point(&pt, &InfoDecomposition::from_point(&pt), regime)?;
    a_from_point(&pt, &h, regime)
}

fn a_from_point(pt: &ModelPoint, h: &HVector, regime: Regime) -> Result<AMatrixStack> {
    let b = pt.b.as_matrix();
    let c = pt.c.as_matrix();
    let p = pt.p();
    let mut mats = Vec::with_capacity(pt.q());
    let mut residual: f64 = 0.0;
    let mut relative_residual: f64 = 0.0;
    for (k, bc) in pt.bc.iter().enumerate() {
        let hk = h.component(k, p);
        // (B C_θk B - D(h_k) B) / 2
        let mut a = bc * b;
        for j in 0..p {
            for l in 0..p {
                a[(j, l)] -= hk[j] * b[(j, l)];
            }
        }
        a /= 2.0;
        let check = (&a + a.transpose()) * c;
        let worst = check.diagonal().amax();
        let relative = worst / (p as f64 * a.amax()).max(1.0);
        if relative.is_nan() || relative > A_MATRIX_TOL {
            return Err(Error::AMatrixCondition { k, residual: worst });
        }
        residual = residual.max(worst);
        relative_residual = relative_residual.max(relative);
        mats.push(a);
    }
    Ok(AMatrixStack {
        regime,
        mats,
        residual,
        relative_residual,
    })
}

/// Exact local log-likelihood ratio
/// `log L(θ + s/√n, 1 + t/√n; y) − log L(θ, 1; y)`.
pub fn lambda_y(
    data: &DataMatrix,
    model: &CorrelationModel,
    theta: &[f64],
    pert: &LocalPerturbation,
    regime: Regime,
) -> Result<f64> {
    pert.validate(model, theta, regime)?;
    let base = model.correlation(theta)?.cholesky()?;
    let moved = model
        .correlation(&pert.perturbed_theta(theta))?
        .cholesky()?;
    Ok(loglik_with(&moved, data, &pert.perturbed_precisions())?
        - loglik_with(&base, data, &Precisions::unit())?)
}

/// Rank-measurable approximation `λ_ŷ` to the local log-likelihood ratio
/// in direction `s`, with the nuisance direction set to its optimal value.
pub fn lambda_hat(
    scores: &ScoreMatrix,
    model: &CorrelationModel,
    theta: &[f64],
    s: &[f64],
    regime: Regime,
) -> Result<f64> {
    LanSetup::new(model, theta, s, scores.n(), regime)?.lambda_hat(scores)
}

/// Everything needed to evaluate `λ_y`, `λ_ŷ` and the quadratic-form
/// statistics repeatedly at one `(model, θ, s, regime, n)`.
#[derive(Debug, Clone)]
pub(crate) struct LanSetup {
    pub pert: LocalPerturbation,
    pub point: ModelPoint,
    pub moved: Cholesky,
    /// `Σ s_k A_k`.
    pub a: DMatrix<f64>,
    /// `u'Ju` for `u = (s, t)` and `J` the joint information.
    pub penalty: f64,
}

impl LanSetup {
    pub fn new(
        model: &CorrelationModel,
        theta: &[f64],
        s: &[f64],
        n: usize,
        regime: Regime,
    ) -> Result<Self> {
        if regime == Regime::Known {
            return Err(no_nuisance());
        }
        check_len(s, model.q())?;
        let point = model.at(theta)?;
        let info = InfoDecomposition::from_point(&point);
        let h = h_from_point(&point, &info, regime)?;
        let t = h.contract(s)?;
        let pert = LocalPerturbation::new(s.to_vec(), t, n);
        pert.validate(model, theta, regime)?;
        let moved = model
            .correlation(&pert.perturbed_theta(theta))?
            .cholesky()?;
        let a = a_from_point(&point, &h, regime)?.contract(s)?;

        let mut u = s.to_vec();
        match &pert.t {
            NuisanceShift::Common(t) => u.push(*t),
            NuisanceShift::PerCoordinate(t) => u.extend_from_slice(t),
            NuisanceShift::None => {}
        }
        let u = DVector::from_vec(u);
        let penalty = (u.transpose() * info.joint(regime) * &u)[(0, 0)];
        Ok(LanSetup {
            pert,
            point,
            moved,
            a,
            penalty,
        })
    }

    pub fn lambda_y(&self, data: &DataMatrix) -> Result<f64> {
        Ok(
            loglik_with(&self.moved, data, &self.pert.perturbed_precisions())?
                - loglik_with(&self.point.chol, data, &Precisions::unit())?,
        )
    }

    pub fn lambda_hat(&self, scores: &ScoreMatrix) -> Result<f64> {
        let p = self.point.p();
        if scores.p() != p {
            return Err(Error::Shape(format!(
                "scores have {} columns, model has dimension {p}",
                scores.p()
            )));
        }
        if scores.n() != self.pert.n {
            return Err(Error::Shape(format!(
                "scores have {} rows, setup expects {}",
                scores.n(),
                self.pert.n
            )));
        }
        let y = scores.scores();
        let n = y.nrows() as f64;
        // Σ_i y_i y_i'
        let m = y.transpose() * y;
        let b = self.point.b.as_matrix();

        let mut total = 0.0;
        for (bc, s) in self.point.bc.iter().zip(&self.pert.s) {
            // Σ_i l̇_θk(y_i) = (-n tr(B C_θk) + tr(B C_θk B M)) / 2
            let bcb = bc * b;
            total += s * (-n * bc.trace() + bcb.dot(&m)) / 2.0;
        }
        let bm = b * &m;
        match &self.pert.t {
            NuisanceShift::Common(t) => total += t * (n * p as f64 - bm.trace()) / 2.0,
            NuisanceShift::PerCoordinate(t) => {
                for (j, tj) in t.iter().enumerate() {
                    total += tj * (n - bm[(j, j)]) / 2.0;
                }
            }
            NuisanceShift::None => {}
        }
        Ok(total / n.sqrt() - self.penalty / 2.0)
    }
}

/// `S_n`, `Q_n` and `L_n` for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuadStats {
    pub s_n: f64,
    pub q_n: f64,
    pub l_n: f64,
}

/// Compare quadratic forms of the scores with those of the latent data:
/// `S_n = n^{-1/2} Σ (ŷ'Aŷ − y'Ay)`, `Q_n = n^{-1/2} Σ (ŷ−y)'Ã(ŷ−y)` and
/// `L_n = n^{-1/2} Σ (ŷ−y)'Ãy`, where `Ã = (A + A')/2`.
pub fn quad_diff_stats(
    data: &DataMatrix,
    scores: &ScoreMatrix,
    a: &DMatrix<f64>,
) -> Result<QuadStats> {
    let (n, p) = (data.n(), data.p());
    if scores.n() != n || scores.p() != p || a.nrows() != p || a.ncols() != p {
        return Err(Error::Shape(format!(
            "data {n}x{p}, scores {}x{}, A {}x{}",
            scores.n(),
            scores.p(),
            a.nrows(),
            a.ncols()
        )));
    }
    let sym = (a + a.transpose()) / 2.0;
    let y = data.values();
    let yh = scores.scores();
    let mut d = vec![0.0; p];
    let mut out = QuadStats::default();
    for i in 0..n {
        for j in 0..p {
            d[j] = yh[(i, j)] - y[(i, j)];
        }
        for j in 0..p {
            let mut ay = 0.0;
            let mut ad = 0.0;
            let mut ayh = 0.0;
            for l in 0..p {
                ay += sym[(j, l)] * y[(i, l)];
                ad += sym[(j, l)] * d[l];
                ayh += sym[(j, l)] * yh[(i, l)];
            }
            out.s_n += yh[(i, j)] * ayh - y[(i, j)] * ay;
            out.q_n += d[j] * ad;
            out.l_n += d[j] * ay;
        }
    }
    let r = (n as f64).sqrt();
    out.s_n /= r;
    out.q_n /= r;
    out.l_n /= r;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrmodels::Family;
    use crate::infobounds::efficient_info;
    use crate::sampling::{column_ranks, normal_scores, sample_gaussian};

    fn one_row(values: &[f64]) -> DataMatrix {
        let mut m = DMatrix::zeros(2, values.len());
        for (j, v) in values.iter().enumerate() {
            m[(0, j)] = *v;
            m[(1, j)] = *v;
        }
        DataMatrix::new(m).unwrap()
    }

    #[test]
    fn loglik_at_origin() {
        let ll = loglik(
            &one_row(&[0.0, 0.0]),
            &CorrelationModel::bivariate(),
            &[0.0],
            &Precisions::unit(),
        )
        .unwrap();
        // two identical rows
        assert!((ll / 2.0 + LN_2PI).abs() < 1e-14);
    }

    #[test]
    fn loglik_bivariate_by_hand() {
        let data = one_row(&[1.0, 1.0]);
        let ll = loglik(
            &data,
            &CorrelationModel::bivariate(),
            &[0.5],
            &Precisions::unit(),
        )
        .unwrap()
            / 2.0;
        // B = [1 -0.5; -0.5 1] / 0.75, y'By = 1/0.75 * (2 - 1) = 4/3
        let want = -LN_2PI + 0.5 * (4.0_f64 / 3.0).ln() - 0.5 * 4.0 / 3.0;
        assert!((ll - want).abs() < 1e-12);
    }

    #[test]
    fn regimes_agree_at_unit_precision() {
        let model = CorrelationModel::ar1(3).unwrap();
        let data = sample_gaussian(&model.correlation(&[0.4]).unwrap(), 20, 3).unwrap();
        let a = loglik(&data, &model, &[0.4], &Precisions::Common(1.0)).unwrap();
        let b = loglik(
            &data,
            &model,
            &[0.4],
            &Precisions::PerCoordinate(vec![1.0; 3]),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bivariate_h() {
        let m = CorrelationModel::bivariate();
        let HVector::Equal(h) = h_vector(&m, &[0.5], Regime::Equal).unwrap() else {
            panic!()
        };
        assert!((h[0] + 2.0 / 3.0).abs() < 1e-14);
        let HVector::Unequal(hu) = h_vector(&m, &[0.5], Regime::Unequal).unwrap() else {
            panic!()
        };
        assert!(hu.iter().all(|v| (v + 2.0 / 3.0).abs() < 1e-12));
        assert!(h_vector(&m, &[0.5], Regime::Known).is_err());
    }

    #[test]
    fn h_vanishes_at_independence() {
        for fam in Family::ALL {
            let m =
                CorrelationModel::new(fam, if fam == Family::Circular { 4 } else { 3 }).unwrap();
            let theta = vec![0.0; m.q()];
            for regime in [Regime::Equal, Regime::Unequal] {
                let h = h_vector(&m, &theta, regime).unwrap();
                for k in 0..m.q() {
                    assert!(h.component(k, m.p()).amax() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn symmetric_family_unequal_h_is_constant() {
        let m = CorrelationModel::exchangeable(4).unwrap();
        let HVector::Equal(h) = h_vector(&m, &[0.3], Regime::Equal).unwrap() else {
            panic!()
        };
        let hu = h_vector(&m, &[0.3], Regime::Unequal)
            .unwrap()
            .component(0, 4);
        assert!(hu.iter().all(|v| (v - h[0]).abs() < 1e-12));
    }

    #[test]
    fn ar1_unequal_h() {
        let hu = h_vector(&CorrelationModel::ar1(4).unwrap(), &[0.5], Regime::Unequal)
            .unwrap()
            .component(0, 4);
        let want = [-0.75, -1.25, -1.25, -0.75];
        for (a, b) in hu.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bivariate_a_matrix() {
        let theta: f64 = 0.5;
        let a = a_matrices(&CorrelationModel::bivariate(), &[theta], Regime::Equal).unwrap();
        let f = 1.0 / (2.0 * (1.0 - theta * theta).powi(2));
        let want = DMatrix::from_row_slice(2, 2, &[-theta * f, f, f, -theta * f]);
        assert!((a.get(0) - want).amax() < 1e-12);
        let c = CorrelationModel::bivariate()
            .correlation(&[theta])
            .unwrap()
            .into_inner();
        assert!((a.get(0) * c).diagonal().amax() < 1e-12);
    }

    #[test]
    fn a_condition_holds_for_ar1_unequal() {
        let a = a_matrices(&CorrelationModel::ar1(4).unwrap(), &[0.5], Regime::Unequal).unwrap();
        assert!(a.residual() <= 1e-12);
        // rounding dominates this close to the boundary, but only relatively
        let near = a_matrices(&CorrelationModel::circular(), &[0.999], Regime::Unequal).unwrap();
        assert!(near.relative_residual() <= 1e-12);
        assert!(a_matrices(&CorrelationModel::ar1(4).unwrap(), &[0.5], Regime::Known).is_err());
    }

    #[test]
    fn lambda_y_zero_direction() {
        let m = CorrelationModel::bivariate();
        let data = sample_gaussian(&m.correlation(&[0.5]).unwrap(), 50, 1).unwrap();
        let pert = LocalPerturbation::new(vec![0.0], NuisanceShift::Common(0.0), 50);
        assert_eq!(
            lambda_y(&data, &m, &[0.5], &pert, Regime::Equal).unwrap(),
            0.0
        );
        let wrong = LocalPerturbation::new(vec![0.0], NuisanceShift::None, 50);
        assert!(lambda_y(&data, &m, &[0.5], &wrong, Regime::Equal).is_err());
        let outside = LocalPerturbation::new(vec![10.0], NuisanceShift::Common(0.0), 50);
        assert!(matches!(
            lambda_y(&data, &m, &[0.5], &outside, Regime::Equal),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn lambda_hat_zero_direction_and_penalty() {
        let cases = [
            (CorrelationModel::ar1(4).unwrap(), Regime::Unequal),
            (CorrelationModel::exchangeable(4).unwrap(), Regime::Equal),
            (CorrelationModel::exchangeable(4).unwrap(), Regime::Unequal),
        ];
        for (m, regime) in cases {
            let data = sample_gaussian(&m.correlation(&[0.5]).unwrap(), 200, 9).unwrap();
            let scores = normal_scores(&column_ranks(&data).unwrap());
            assert_eq!(
                lambda_hat(&scores, &m, &[0.5], &[0.0], regime).unwrap(),
                0.0
            );
            let setup = LanSetup::new(&m, &[0.5], &[1.3], 200, regime).unwrap();
            let eff = efficient_info(&m, &[0.5], regime).unwrap().quad(&[1.3]);
            assert!((setup.penalty - eff).abs() < 1e-10 * eff);
        }
    }

    #[test]
    fn equal_regime_needs_symmetry() {
        // AR(1) with p = 4 has a non-constant diag(B C_θ)
        let err =
            a_matrices(&CorrelationModel::ar1(4).unwrap(), &[0.5], Regime::Equal).unwrap_err();
        assert!(matches!(err, Error::AMatrixCondition { k: 0, .. }));
        assert!(err.is_validation());
    }

    #[test]
    fn lambda_hat_matches_per_row_scores() {
        // direct evaluation of the score functions row by row
        let theta = 0.4;
        let m = CorrelationModel::bivariate();
        let data = sample_gaussian(&m.correlation(&[theta]).unwrap(), 100, 5).unwrap();
        let scores = normal_scores(&column_ranks(&data).unwrap());
        let y = scores.scores();
        let d = 1.0 - theta * theta;
        let mut sum = 0.0;
        for i in 0..100 {
            let (a, b) = (y[(i, 0)], y[(i, 1)]);
            sum += (a * b - theta * (a * a + b * b) / 2.0) / (d * d);
        }
        let s = 0.7;
        let info = 1.0 / (d * d);
        let want = s * sum / 10.0 - s * s * info / 2.0;
        let got = lambda_hat(&scores, &m, &[theta], &[s], Regime::Equal).unwrap();
        assert!((got - want).abs() < 1e-10, "{got} {want}");
    }

    #[test]
    fn quad_stats_identities() {
        let m = CorrelationModel::bivariate();
        let data = sample_gaussian(&m.correlation(&[0.5]).unwrap(), 300, 2).unwrap();
        let scores = normal_scores(&column_ranks(&data).unwrap());
        let a = a_matrices(&m, &[0.5], Regime::Equal)
            .unwrap()
            .get(0)
            .clone();
        let q = quad_diff_stats(&data, &scores, &a).unwrap();
        assert!((q.s_n - q.q_n - 2.0 * q.l_n).abs() <= 1e-9 * q.s_n.abs().max(1.0));
        assert_eq!(
            quad_diff_stats(&data, &scores, &DMatrix::zeros(2, 2)).unwrap(),
            QuadStats::default()
        );
        let same = ScoreMatrix::new(data.values().clone()).unwrap();
        assert_eq!(
            quad_diff_stats(&data, &same, &a).unwrap(),
            QuadStats::default()
        );
        assert!(quad_diff_stats(&data, &scores, &DMatrix::zeros(3, 3)).is_err());
    }
}
