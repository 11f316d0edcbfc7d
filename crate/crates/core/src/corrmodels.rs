//! Structured correlation families `C(θ)`, their analytic derivatives, and
//! the precision matrix `B = C⁻¹`.
//!
//! Four families are built in:
//!
//! * **Exchangeable**: every off-diagonal entry equals `θ`, domain
//!   `(-1/(p-1), 1)`.
//! * **Circular**: 4×4 circulant with first row `(1, θ, θ², θ)`, domain
//!   `(-1, 1)`.
//! * **AR1**: `c_jk = θ^|j-k|`, domain `(-1, 1)`.
//! * **Unstructured**: the `p(p-1)/2` upper-triangle entries in row-major
//!   order, domain the open set of positive definite matrices.
//!
//! Domains are open and a margin of `1e-8` is kept from every boundary.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, Cholesky};

/// Distance kept from the boundary of every parameter domain.
pub const BOUNDARY_MARGIN: f64 = 1e-8;

/// Order of the built-in circular family.
pub const CIRCULAR_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Exchangeable,
    Circular,
    Ar1,
    Unstructured,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Exchangeable,
        Family::Circular,
        Family::Ar1,
        Family::Unstructured,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Exchangeable => "exchangeable",
            Family::Circular => "circular",
            Family::Ar1 => "ar1",
            Family::Unstructured => "unstructured",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exchangeable" | "exch" => Ok(Family::Exchangeable),
            "circular" | "circ" => Ok(Family::Circular),
            "ar1" => Ok(Family::Ar1),
            "unstructured" => Ok(Family::Unstructured),
            other => Err(Error::InvalidInput(format!(
                "unknown correlation family '{other}'"
            ))),
        }
    }
}

/// A correlation family of a fixed dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CorrelationModel {
    family: Family,
    p: usize,
}

impl CorrelationModel {
    pub fn new(family: Family, p: usize) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidInput(format!(
                "dimension must be at least 2, got {p}"
            )));
        }
        if family == Family::Circular && p != CIRCULAR_DIM {
            return Err(Error::InvalidInput(format!(
                "the circular family is defined for p = {CIRCULAR_DIM} only, got {p}"
            )));
        }
        Ok(CorrelationModel { family, p })
    }

    pub fn exchangeable(p: usize) -> Result<Self> {
        Self::new(Family::Exchangeable, p)
    }

    pub fn ar1(p: usize) -> Result<Self> {
        Self::new(Family::Ar1, p)
    }

    pub fn circular() -> Self {
        CorrelationModel {
            family: Family::Circular,
            p: CIRCULAR_DIM,
        }
    }

    pub fn unstructured(p: usize) -> Result<Self> {
        Self::new(Family::Unstructured, p)
    }

    /// The bivariate normal copula (exchangeable with `p = 2`).
    pub fn bivariate() -> Self {
        CorrelationModel {
            family: Family::Exchangeable,
            p: 2,
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of free parameters.
    pub fn q(&self) -> usize {
        match self.family {
            Family::Unstructured => self.p * (self.p - 1) / 2,
            _ => 1,
        }
    }

    /// Open interval of a one-parameter family, before the boundary margin.
    pub fn domain_interval(&self) -> Option<(f64, f64)> {
        match self.family {
            Family::Exchangeable => Some((-1.0 / (self.p as f64 - 1.0), 1.0)),
            Family::Circular | Family::Ar1 => Some((-1.0, 1.0)),
            Family::Unstructured => None,
        }
    }

    /// True iff `theta` lies in the interior of the family's domain, at least
    /// [`BOUNDARY_MARGIN`] away from its boundary.
    pub fn domain_check(&self, theta: &[f64]) -> bool {
        if theta.len() != self.q() || theta.iter().any(|t| !t.is_finite()) {
            return false;
        }
        match self.family {
            Family::Exchangeable | Family::Ar1 => {
                let (lo, hi) = self.domain_interval().unwrap();
                theta[0] > lo + BOUNDARY_MARGIN && theta[0] < hi - BOUNDARY_MARGIN
            }
            Family::Circular => {
                theta[0].abs() < 1.0 - BOUNDARY_MARGIN
                    && Cholesky::factor_with_floor(&self.raw_matrix(theta), BOUNDARY_MARGIN).is_ok()
            }
            Family::Unstructured => {
                theta.iter().all(|t| t.abs() < 1.0 - BOUNDARY_MARGIN)
                    && Cholesky::factor_with_floor(&self.raw_matrix(theta), BOUNDARY_MARGIN).is_ok()
            }
        }
    }

    fn domain_error(&self, theta: &[f64]) -> Error {
        Error::Domain {
            family: self.to_string(),
            theta: theta.to_vec(),
        }
    }

    fn check_len(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.q() {
            return Err(Error::Shape(format!(
                "{} expects {} parameter(s), got {}",
                self,
                self.q(),
                theta.len()
            )));
        }
        Ok(())
    }

    /// Evaluate the family pattern without any validation.
    fn raw_matrix(&self, theta: &[f64]) -> DMatrix<f64> {
        let p = self.p;
        match self.family {
            Family::Exchangeable => {
                DMatrix::from_fn(p, p, |j, k| if j == k { 1.0 } else { theta[0] })
            }
            Family::Ar1 => DMatrix::from_fn(p, p, |j, k| theta[0].powi(j.abs_diff(k) as i32)),
            Family::Circular => {
                let t = theta[0];
                let row = [1.0, t, t * t, t];
                DMatrix::from_fn(p, p, |j, k| row[(k + p - j) % p])
            }
            Family::Unstructured => {
                let mut c = DMatrix::identity(p, p);
                for (idx, (j, k)) in upper_pairs(p).enumerate() {
                    c[(j, k)] = theta[idx];
                    c[(k, j)] = theta[idx];
                }
                c
            }
        }
    }

    /// `C(θ)`.
    pub fn correlation(&self, theta: &[f64]) -> Result<CorrelationMatrix> {
        self.check_len(theta)?;
        if self.family == Family::Unstructured {
            if theta
                .iter()
                .any(|t| !t.is_finite() || t.abs() >= 1.0 - BOUNDARY_MARGIN)
            {
                return Err(self.domain_error(theta));
            }
            let c = self.raw_matrix(theta);
            Cholesky::factor_with_floor(&c, BOUNDARY_MARGIN)?;
            return Ok(CorrelationMatrix(c));
        }
        if !self.domain_check(theta) {
            return Err(self.domain_error(theta));
        }
        Ok(CorrelationMatrix(self.raw_matrix(theta)))
    }

    /// Analytic derivatives `∂C/∂θ_k`.
    pub fn gradient(&self, theta: &[f64]) -> Result<GradientStack> {
        // same validation as `correlation`
        self.correlation(theta)?;
        let p = self.p;
        let mats = match self.family {
            Family::Exchangeable => {
                vec![DMatrix::from_fn(
                    p,
                    p,
                    |j, k| if j == k { 0.0 } else { 1.0 },
                )]
            }
            Family::Ar1 => {
                let t = theta[0];
                vec![DMatrix::from_fn(p, p, |j, k| {
                    let lag = j.abs_diff(k);
                    if lag == 0 {
                        0.0
                    } else {
                        lag as f64 * t.powi(lag as i32 - 1)
                    }
                })]
            }
            Family::Circular => {
                let row = [0.0, 1.0, 2.0 * theta[0], 1.0];
                vec![DMatrix::from_fn(p, p, |j, k| row[(k + p - j) % p])]
            }
            Family::Unstructured => upper_pairs(p)
                .map(|(j, k)| {
                    let mut e = DMatrix::zeros(p, p);
                    e[(j, k)] = 1.0;
                    e[(k, j)] = 1.0;
                    e
                })
                .collect(),
        };
        Ok(GradientStack(mats))
    }

    /// Bundle of `C`, its factor, `B` and the derivative stack at `theta`.
    pub fn at(&self, theta: &[f64]) -> Result<ModelPoint> {
        ModelPoint::new(*self, theta)
    }

    /// `max - min` of `diag(B C_θk)` for each parameter.
    pub fn symmetry_spread(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let pt = self.at(theta)?;
        Ok(pt
            .bc
            .iter()
            .map(|m| {
                let d = m.diagonal();
                d.max() - d.min()
            })
            .collect())
    }

    /// Per parameter: are the diagonal entries of `B C_θk` all equal (within
    /// `tol`)? When true for every `k`, the equal- and unequal-variance
    /// nuisance adjustments coincide.
    pub fn symmetry_condition(&self, theta: &[f64], tol: f64) -> Result<Vec<bool>> {
        Ok(self
            .symmetry_spread(theta)?
            .into_iter()
            .map(|s| s <= tol)
            .collect())
    }
}

impl fmt::Display for CorrelationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.family, self.p)
    }
}

/// Parses `family:p`, or `bivariate`, or a bare family name (`circular`).
impl FromStr for CorrelationModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("bivariate") {
            return Ok(CorrelationModel::bivariate());
        }
        match s.split_once(':') {
            Some((fam, p)) => {
                let p: usize = p
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad dimension in '{s}'")))?;
                CorrelationModel::new(fam.parse()?, p)
            }
            None => match s.parse::<Family>()? {
                Family::Circular => Ok(CorrelationModel::circular()),
                fam => Err(Error::InvalidInput(format!(
                    "family '{fam}' needs a dimension, e.g. '{fam}:4'"
                ))),
            },
        }
    }
}

/// Index pairs `(j, k)`, `j < k`, in row-major upper-triangle order.
pub fn upper_pairs(p: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..p).flat_map(move |j| ((j + 1)..p).map(move |k| (j, k)))
}

/// Symmetric, unit-diagonal, positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix(DMatrix<f64>);

impl CorrelationMatrix {
    /// Validate an arbitrary matrix as a correlation matrix.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let p = m.nrows();
        if m.ncols() != p || p == 0 {
            return Err(Error::Shape(format!(
                "correlation matrix must be square, got {}x{}",
                p,
                m.ncols()
            )));
        }
        for j in 0..p {
            if m[(j, j)] != 1.0 {
                return Err(Error::InvalidInput(format!(
                    "diagonal entry {j} is {}, not 1",
                    m[(j, j)]
                )));
            }
            for k in 0..j {
                if m[(j, k)] != m[(k, j)] || !m[(j, k)].is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "entries ({j},{k}) and ({k},{j}) differ"
                    )));
                }
            }
        }
        Cholesky::factor(&m)?;
        Ok(CorrelationMatrix(m))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn p(&self) -> usize {
        self.0.nrows()
    }

    pub fn cholesky(&self) -> Result<Cholesky> {
        Cholesky::factor(&self.0)
    }
}

/// `B = C⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionMatrix(DMatrix<f64>);

impl PrecisionMatrix {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Invert a correlation matrix through its Cholesky factor.
pub fn precision(c: &CorrelationMatrix) -> Result<PrecisionMatrix> {
    Ok(PrecisionMatrix(c.cholesky()?.inverse()))
}

/// `[∂C/∂θ_1, …, ∂C/∂θ_q]`; each entry symmetric with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientStack(Vec<DMatrix<f64>>);

impl GradientStack {
    pub fn new(mats: Vec<DMatrix<f64>>) -> Self {
        GradientStack(mats)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DMatrix<f64>> {
        self.0.iter()
    }
}

impl std::ops::Index<usize> for GradientStack {
    type Output = DMatrix<f64>;

    fn index(&self, k: usize) -> &DMatrix<f64> {
        &self.0[k]
    }
}

/// Central-difference gradient for user-supplied correlation functions.
///
/// Step for parameter `k` is `ε^{1/3} · max(1, |θ_k|)`. The result is
/// symmetrized and its diagonal zeroed.
pub fn finite_difference_gradient<F>(f: F, theta: &[f64]) -> Result<GradientStack>
where
    F: Fn(&[f64]) -> Result<DMatrix<f64>>,
{
    let base = f64::EPSILON.cbrt();
    let mut mats = Vec::with_capacity(theta.len());
    let mut work = theta.to_vec();
    for k in 0..theta.len() {
        let h = base * theta[k].abs().max(1.0);
        work[k] = theta[k] + h;
        let plus = f(&work)?;
        work[k] = theta[k] - h;
        let minus = f(&work)?;
        work[k] = theta[k];
        let mut d = linalg::symmetrize(&((plus - minus) / (2.0 * h)));
        d.fill_diagonal(0.0);
        mats.push(d);
    }
    Ok(GradientStack(mats))
}

/// A model evaluated at one parameter value, with the quantities every
/// information and likelihood computation needs.
#[derive(Debug, Clone)]
pub struct ModelPoint {
    pub model: CorrelationModel,
    pub theta: Vec<f64>,
    pub c: CorrelationMatrix,
    pub chol: Cholesky,
    pub b: PrecisionMatrix,
    pub grads: GradientStack,
    /// `B C_θk` for each `k`.
    pub bc: Vec<DMatrix<f64>>,
}

impl ModelPoint {
    pub fn new(model: CorrelationModel, theta: &[f64]) -> Result<Self> {
        let c = model.correlation(theta)?;
        let grads = model.gradient(theta)?;
        let chol = c.cholesky()?;
        let b = PrecisionMatrix(chol.inverse());
        let bc = grads.iter().map(|g| b.as_matrix() * g).collect();
        Ok(ModelPoint {
            model,
            theta: theta.to_vec(),
            c,
            chol,
            b,
            grads,
            bc,
        })
    }

    pub fn p(&self) -> usize {
        self.model.p()
    }

    pub fn q(&self) -> usize {
        self.model.q()
    }

    /// `B_θk = -B C_θk B`.
    pub fn precision_derivative(&self, k: usize) -> DMatrix<f64> {
        -(&self.bc[k] * self.b.as_matrix())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        (a - b).abs().max() <= tol
    }

    #[test]
    fn exchangeable_zero_is_identity() {
        let m = CorrelationModel::exchangeable(3).unwrap();
        let c = m.correlation(&[0.0]).unwrap();
        assert_eq!(c.as_matrix(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn ar1_pattern() {
        let m = CorrelationModel::ar1(4).unwrap();
        let c = m.correlation(&[0.5]).unwrap();
        let row: Vec<f64> = c.as_matrix().row(0).iter().copied().collect();
        assert_eq!(row, vec![1.0, 0.5, 0.25, 0.125]);
    }

    #[test]
    fn circular_pattern() {
        let m = CorrelationModel::circular();
        let c = m.correlation(&[0.5]).unwrap();
        let c = c.as_matrix();
        let row: Vec<f64> = c.row(0).iter().copied().collect();
        assert_eq!(row, vec![1.0, 0.5, 0.25, 0.5]);
        // each row is the cyclic shift of the previous one
        for j in 1..4 {
            for k in 0..4 {
                assert_eq!(c[(j, k)], c[(j - 1, (k + 3) % 4)]);
            }
        }
    }

    #[test]
    fn circular_needs_p4() {
        assert!(CorrelationModel::new(Family::Circular, 5).is_err());
    }

    #[test]
    fn unstructured_row_major_fill() {
        let m = CorrelationModel::unstructured(3).unwrap();
        let c = m.correlation(&[0.1, 0.2, 0.3]).unwrap();
        let c = c.as_matrix();
        assert_eq!((c[(0, 1)], c[(0, 2)], c[(1, 2)]), (0.1, 0.2, 0.3));
        assert_eq!((c[(1, 0)], c[(2, 0)], c[(2, 1)]), (0.1, 0.2, 0.3));
    }

    #[test]
    fn unstructured_indefinite_is_definiteness_error() {
        let m = CorrelationModel::unstructured(3).unwrap();
        let err = m.correlation(&[0.9, 0.9, -0.9]).unwrap_err();
        assert!(
            matches!(err, Error::NotPositiveDefinite { pivot: 2, .. }),
            "{err}"
        );
        assert!(!m.domain_check(&[0.9, 0.9, -0.9]));
    }

    #[test]
    fn out_of_domain_is_domain_error() {
        let m = CorrelationModel::exchangeable(4).unwrap();
        assert!(!m.domain_check(&[-0.5]));
        assert!(matches!(m.correlation(&[-0.5]), Err(Error::Domain { .. })));
        assert!(CorrelationModel::ar1(4).unwrap().domain_check(&[0.999]));
        assert!(!CorrelationModel::ar1(4)
            .unwrap()
            .domain_check(&[1.0 - 1e-9]));
        assert!(!CorrelationModel::ar1(4).unwrap().domain_check(&[0.1, 0.2]));
        assert!(!CorrelationModel::ar1(4).unwrap().domain_check(&[f64::NAN]));
    }

    #[test]
    fn simple_gradients() {
        let ar = CorrelationModel::ar1(2).unwrap();
        let g = ar.gradient(&[0.3]).unwrap();
        assert_eq!(g[0], DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let ex = CorrelationModel::exchangeable(3).unwrap();
        let g = ex.gradient(&[0.7]).unwrap();
        assert_eq!(
            g[0],
            DMatrix::from_fn(3, 3, |j, k| if j == k { 0.0 } else { 1.0 })
        );
    }

    #[test]
    fn ar1_gradient_matches_central_difference() {
        let m = CorrelationModel::ar1(4).unwrap();
        let g = m.gradient(&[0.5]).unwrap();
        assert_eq!(g[0][(0, 2)], 1.0);
        let h = 1e-6;
        let plus = m.correlation(&[0.5 + h]).unwrap().into_inner();
        let minus = m.correlation(&[0.5 - h]).unwrap().into_inner();
        let fd = (plus - minus) / (2.0 * h);
        assert!((fd[(0, 2)] - 1.0).abs() < 1e-8);
        assert!(close(&fd, &g[0], 1e-8));
    }

    #[test]
    fn fallback_gradient_agrees_with_analytic() {
        let m = CorrelationModel::circular();
        let fd =
            finite_difference_gradient(|t| Ok(m.correlation(t)?.into_inner()), &[0.4]).unwrap();
        let g = m.gradient(&[0.4]).unwrap();
        assert!(close(&fd[0], &g[0], 1e-9));
    }

    #[test]
    fn precision_examples() {
        let eye = CorrelationMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(
            precision(&eye).unwrap().into_inner(),
            DMatrix::identity(3, 3)
        );

        let c = CorrelationModel::bivariate().correlation(&[0.5]).unwrap();
        let b = precision(&c).unwrap().into_inner();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]) / 0.75;
        assert!(close(&b, &expect, 1e-14));

        let c = CorrelationModel::ar1(3)
            .unwrap()
            .correlation(&[0.5])
            .unwrap();
        let b = precision(&c).unwrap().into_inner();
        assert!(b[(0, 2)].abs() < 1e-14, "AR1 precision is tridiagonal");
        let prod = &b * c.as_matrix();
        assert!(close(&prod, &DMatrix::identity(3, 3), 1e-12));
    }

    #[test]
    fn correlation_matrix_validation() {
        assert!(
            CorrelationMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.3, 1.0])).is_err()
        );
        assert!(
            CorrelationMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0])).is_err()
        );
        assert!(matches!(
            CorrelationMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn symmetry_examples() {
        let ex = CorrelationModel::exchangeable(4).unwrap();
        assert_eq!(ex.symmetry_condition(&[0.5], 1e-10).unwrap(), vec![true]);
        assert_eq!(
            CorrelationModel::circular()
                .symmetry_condition(&[0.5], 1e-10)
                .unwrap(),
            vec![true]
        );
        assert_eq!(
            CorrelationModel::ar1(4)
                .unwrap()
                .symmetry_condition(&[0.5], 1e-10)
                .unwrap(),
            vec![false]
        );
        // bivariate AR1 coincides with the exchangeable model
        assert_eq!(
            CorrelationModel::ar1(2)
                .unwrap()
                .symmetry_condition(&[0.5], 1e-10)
                .unwrap(),
            vec![true]
        );

        let pt = CorrelationModel::ar1(3).unwrap().at(&[0.5]).unwrap();
        let d = pt.bc[0].diagonal();
        let expect = [-2.0 / 3.0, -4.0 / 3.0, -2.0 / 3.0];
        for (a, b) in d.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn descriptor_round_trip() {
        for m in [
            CorrelationModel::ar1(4).unwrap(),
            CorrelationModel::circular(),
            CorrelationModel::unstructured(3).unwrap(),
            CorrelationModel::bivariate(),
        ] {
            assert_eq!(m.to_string().parse::<CorrelationModel>().unwrap(), m);
        }
        assert_eq!(
            "bivariate".parse::<CorrelationModel>().unwrap(),
            CorrelationModel::bivariate()
        );
        assert!("ar1".parse::<CorrelationModel>().is_err());
    }
}
