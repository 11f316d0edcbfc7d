//! Fisher information for the copula parameter `θ` and its efficient
//! (nuisance-adjusted) versions under three treatments of the marginal
//! variances:
//!
//! * `Known`: variances fixed, information `I_θθ`;
//! * `Equal`: one common unknown precision `ψ`;
//! * `Unequal`: a separate unknown precision per coordinate.
//!
//! All blocks are evaluated at unit variances; the efficient information for
//! `θ` does not depend on the variance values.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::corrmodels::{CorrelationModel, Family, ModelPoint};
use crate::error::{Error, Result};
use crate::fmt as numfmt;
use crate::linalg::{self, Cholesky};

/// Largest condition number accepted for `I_ΨΨ` before inversion.
pub const MAX_NUISANCE_CONDITION: f64 = 1e12;

/// Distance kept from the domain boundary by [`default_grid`].
pub const GRID_TRIM: f64 = 1e-3;

pub const DEFAULT_GRID_POINTS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Known,
    Equal,
    Unequal,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Known, Regime::Equal, Regime::Unequal];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Known => "known",
            Regime::Equal => "equal",
            Regime::Unequal => "unequal",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "known" => Ok(Regime::Known),
            "equal" => Ok(Regime::Equal),
            "unequal" => Ok(Regime::Unequal),
            other => Err(Error::InvalidInput(format!("unknown regime '{other}'"))),
        }
    }
}

/// Every information block at one `θ`, at unit variances.
#[derive(Debug, Clone)]
pub struct InfoDecomposition {
    /// `I_θθ`, q×q.
    pub i_tt: DMatrix<f64>,
    /// `I_θψ` for the common precision, length q.
    pub i_tpsi_eq: DVector<f64>,
    /// `I_ψψ = p/2`.
    pub i_psipsi_eq: f64,
    /// `I_θΨ`, q×p; row k is `-diag(B C_θk)/2`.
    pub i_tpsi_un: DMatrix<f64>,
    /// `I_ΨΨ = (I + B∘C)/4`, p×p.
    pub i_psipsi_un: DMatrix<f64>,
}

impl InfoDecomposition {
    pub fn compute(model: &CorrelationModel, theta: &[f64]) -> Result<Self> {
        Ok(Self::from_point(&model.at(theta)?))
    }

    pub fn from_point(pt: &ModelPoint) -> Self {
        let p = pt.p();
        let q = pt.q();
        let i_tt = theta_block(pt);
        let i_tpsi_eq = DVector::from_fn(q, |k, _| -pt.bc[k].trace() / 2.0);
        let i_tpsi_un = DMatrix::from_fn(q, p, |k, j| -pt.bc[k][(j, j)] / 2.0);
        let b = pt.b.as_matrix();
        let c = pt.c.as_matrix();
        let i_psipsi_un = (DMatrix::identity(p, p) + b.component_mul(c)) / 4.0;
        InfoDecomposition {
            i_tt,
            i_tpsi_eq,
            i_psipsi_eq: p as f64 / 2.0,
            i_tpsi_un,
            i_psipsi_un,
        }
    }

    pub fn q(&self) -> usize {
        self.i_tt.nrows()
    }

    pub fn p(&self) -> usize {
        self.i_psipsi_un.nrows()
    }

    /// Efficient information for `θ` under a variance regime.
    pub fn efficient(&self, regime: Regime) -> Result<EfficientInfo> {
        let value = match regime {
            Regime::Known => self.i_tt.clone(),
            Regime::Equal => {
                &self.i_tt - &self.i_tpsi_eq * self.i_tpsi_eq.transpose() / self.i_psipsi_eq
            }
            Regime::Unequal => {
                let solved = self.nuisance_solve(&self.i_tpsi_un.transpose())?;
                &self.i_tt - &self.i_tpsi_un * solved
            }
        };
        Ok(EfficientInfo {
            regime,
            value: linalg::symmetrize(&value),
        })
    }

    /// `I_ΨΨ⁻¹ X` with the condition-number guard.
    pub fn nuisance_solve(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let chol = Cholesky::factor(&self.i_psipsi_un)?;
        let condition = linalg::spd_condition(&self.i_psipsi_un);
        if condition > MAX_NUISANCE_CONDITION {
            return Err(Error::IllConditioned { condition });
        }
        Ok(chol.solve_matrix(x))
    }

    /// Joint information for `(θ, nuisance)`; `(q+1)` or `(q+p)` square.
    pub fn joint(&self, regime: Regime) -> DMatrix<f64> {
        let q = self.q();
        match regime {
            Regime::Known => self.i_tt.clone(),
            Regime::Equal => {
                let mut m = DMatrix::zeros(q + 1, q + 1);
                m.view_mut((0, 0), (q, q)).copy_from(&self.i_tt);
                for k in 0..q {
                    m[(k, q)] = self.i_tpsi_eq[k];
                    m[(q, k)] = self.i_tpsi_eq[k];
                }
                m[(q, q)] = self.i_psipsi_eq;
                m
            }
            Regime::Unequal => {
                let p = self.p();
                let mut m = DMatrix::zeros(q + p, q + p);
                m.view_mut((0, 0), (q, q)).copy_from(&self.i_tt);
                m.view_mut((0, q), (q, p)).copy_from(&self.i_tpsi_un);
                m.view_mut((q, 0), (p, q))
                    .copy_from(&self.i_tpsi_un.transpose());
                m.view_mut((q, q), (p, p)).copy_from(&self.i_psipsi_un);
                m
            }
        }
    }
}

/// `I_θθ`, entry `(j,k) = tr(B C_θj B C_θk)/2`.
fn theta_block(pt: &ModelPoint) -> DMatrix<f64> {
    let q = pt.q();
    let mut m = DMatrix::zeros(q, q);
    for j in 0..q {
        for k in j..q {
            // tr(XY) = sum_ab X_ab Y_ba
            let v = pt.bc[j].dot(&pt.bc[k].transpose()) / 2.0;
            m[(j, k)] = v;
            m[(k, j)] = v;
        }
    }
    m
}

#[derive(Debug, Clone)]
pub struct EfficientInfo {
    pub regime: Regime,
    pub value: DMatrix<f64>,
}

impl EfficientInfo {
    /// The scalar value for one-parameter models.
    pub fn scalar(&self) -> Option<f64> {
        (self.value.nrows() == 1).then(|| self.value[(0, 0)])
    }

    /// The variance bound `I⁻¹`.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        Ok(Cholesky::factor(&self.value)?.inverse())
    }

    /// `s' I s`.
    pub fn quad(&self, s: &[f64]) -> f64 {
        let s = DVector::from_column_slice(s);
        (s.transpose() * &self.value * &s)[(0, 0)]
    }
}

pub fn info_theta(model: &CorrelationModel, theta: &[f64]) -> Result<DMatrix<f64>> {
    Ok(theta_block(&model.at(theta)?))
}

pub fn cross_info_equal(model: &CorrelationModel, theta: &[f64]) -> Result<DVector<f64>> {
    Ok(InfoDecomposition::compute(model, theta)?.i_tpsi_eq)
}

pub fn cross_info_unequal(model: &CorrelationModel, theta: &[f64]) -> Result<DMatrix<f64>> {
    Ok(InfoDecomposition::compute(model, theta)?.i_tpsi_un)
}

pub fn psi_info_unequal(model: &CorrelationModel, theta: &[f64]) -> Result<DMatrix<f64>> {
    Ok(InfoDecomposition::compute(model, theta)?.i_psipsi_un)
}

pub fn efficient_info(
    model: &CorrelationModel,
    theta: &[f64],
    regime: Regime,
) -> Result<EfficientInfo> {
    InfoDecomposition::compute(model, theta)?.efficient(regime)
}

/// One-parameter families with a published closed (or reduced) form for
/// their information.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosedForm {
    Bivariate,
    Exchangeable {
        p: usize,
    },
    Circular,
    /// Reduced form through `d = diag(B C_θ)` with the tridiagonal AR(1)
    /// precision written out explicitly.
    Ar1 {
        p: usize,
    },
}

impl ClosedForm {
    pub fn for_model(model: &CorrelationModel) -> Result<Self> {
        match model.family() {
            Family::Exchangeable => Ok(ClosedForm::Exchangeable { p: model.p() }),
            Family::Circular => Ok(ClosedForm::Circular),
            Family::Ar1 => Ok(ClosedForm::Ar1 { p: model.p() }),
            Family::Unstructured => Err(Error::NotAvailable(format!("{model} has no closed form"))),
        }
    }
}

/// Information from the closed-form expressions. This is an oracle for
/// [`efficient_info`] and shares no code with it.
pub fn closed_form_info(form: ClosedForm, theta: f64, regime: Regime) -> Result<f64> {
    let t = theta;
    match form {
        ClosedForm::Bivariate => {
            if t.abs() >= 1.0 {
                return Err(Error::Domain {
                    family: "bivariate".into(),
                    theta: vec![t],
                });
            }
            let den = (1.0 - t * t).powi(2);
            Ok(match regime {
                Regime::Known => (1.0 + t * t) / den,
                Regime::Equal | Regime::Unequal => 1.0 / den,
            })
        }
        ClosedForm::Exchangeable { p } => {
            let pf = p as f64;
            if p < 2 || t <= -1.0 / (pf - 1.0) || t >= 1.0 {
                return Err(Error::Domain {
                    family: format!("exchangeable:{p}"),
                    theta: vec![t],
                });
            }
            Ok(match regime {
                Regime::Known => {
                    let g = 1.0 / (1.0 + (pf - 1.0) * t);
                    pf * (pf * g * g - 2.0 * g + 1.0) / (2.0 * (1.0 - t).powi(2))
                }
                Regime::Equal | Regime::Unequal => {
                    pf * (pf - 1.0) / (2.0 * ((pf - 1.0) * t + 1.0).powi(2) * (1.0 - t).powi(2))
                }
            })
        }
        ClosedForm::Circular => {
            if t.abs() >= 1.0 {
                return Err(Error::Domain {
                    family: "circular:4".into(),
                    theta: vec![t],
                });
            }
            let den = (1.0 - t * t).powi(2);
            Ok(match regime {
                Regime::Known => 4.0 * (1.0 + 2.0 * t * t) / den,
                Regime::Equal | Regime::Unequal => 4.0 / den,
            })
        }
        ClosedForm::Ar1 { p } => {
            if p < 2 || t.abs() >= 1.0 {
                return Err(Error::Domain {
                    family: format!("ar1:{p}"),
                    theta: vec![t],
                });
            }
            let s = 1.0 - t * t;
            let b = DMatrix::from_fn(p, p, |j, k| {
                if j == k {
                    if j == 0 || j == p - 1 {
                        1.0 / s
                    } else {
                        (1.0 + t * t) / s
                    }
                } else if j.abs_diff(k) == 1 {
                    -t / s
                } else {
                    0.0
                }
            });
            let c = DMatrix::from_fn(p, p, |j, k| t.powi(j.abs_diff(k) as i32));
            let ct = DMatrix::from_fn(p, p, |j, k| {
                let lag = j.abs_diff(k) as i32;
                if lag == 0 {
                    0.0
                } else {
                    lag as f64 * t.powi(lag - 1)
                }
            });
            let bct = &b * &ct;
            let i_tt = (&bct * &bct).trace() / 2.0;
            let d = bct.diagonal();
            Ok(match regime {
                Regime::Known => i_tt,
                Regime::Equal => i_tt - d.sum().powi(2) / (2.0 * p as f64),
                Regime::Unequal => {
                    let m = (b.component_mul(&c) + DMatrix::identity(p, p))
                        .try_inverse()
                        .ok_or(Error::NotPositiveDefinite {
                            pivot: 0,
                            value: 0.0,
                        })?;
                    i_tt - (d.transpose() * m * &d)[(0, 0)]
                }
            })
        }
    }
}

/// One row of a [`BoundCurve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPoint {
    pub theta: f64,
    pub inv_known: Option<f64>,
    pub inv_equal: Option<f64>,
    pub inv_unequal: Option<f64>,
}

impl BoundPoint {
    pub fn get(&self, regime: Regime) -> Option<f64> {
        match regime {
            Regime::Known => self.inv_known,
            Regime::Equal => self.inv_equal,
            Regime::Unequal => self.inv_unequal,
        }
    }
}

/// Inverse efficient information along a grid of a one-parameter family.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCurve {
    pub model: CorrelationModel,
    pub points: Vec<BoundPoint>,
}

pub const BOUND_CSV_HEADER: [&str; 4] = [
    "theta",
    "inv_info_known",
    "inv_info_equal",
    "inv_info_unequal",
];
pub const DIFFERENCE_CSV_HEADER: [&str; 3] = ["theta", "equal_minus_known", "unequal_minus_equal"];

impl BoundCurve {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(BOUND_CSV_HEADER)?;
        for pt in &self.points {
            w.write_record([
                numfmt::full(pt.theta),
                numfmt::opt(pt.inv_known),
                numfmt::opt(pt.inv_equal),
                numfmt::opt(pt.inv_unequal),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `(θ, I_θθ·ψ⁻¹ − I_θθ⁻¹, I_θθ·Ψ⁻¹ − I_θθ·ψ⁻¹)`; needs all three regimes.
    pub fn differences(&self) -> Result<Vec<(f64, f64, f64)>> {
        self.points
            .iter()
            .map(|pt| match (pt.inv_known, pt.inv_equal, pt.inv_unequal) {
                (Some(k), Some(e), Some(u)) => Ok((pt.theta, e - k, u - e)),
                _ => Err(Error::InvalidInput(
                    "differences need all three regimes".into(),
                )),
            })
            .collect()
    }

    pub fn write_differences_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = self.differences()?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(DIFFERENCE_CSV_HEADER)?;
        for (t, a, b) in rows {
            w.write_record([numfmt::full(t), numfmt::full(a), numfmt::full(b)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evenly spaced grid including both endpoints.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let last = (count - 1) as f64;
            (0..count)
                .map(|i| {
                    if i == count - 1 {
                        hi
                    } else {
                        lo + (hi - lo) * i as f64 / last
                    }
                })
                .collect()
        }
    }
}

/// The family's domain trimmed by [`GRID_TRIM`] at both ends, `count` points.
pub fn default_grid(model: &CorrelationModel, count: usize) -> Result<Vec<f64>> {
    let (lo, hi) = model
        .domain_interval()
        .ok_or_else(|| Error::InvalidInput(format!("{model} has no one-dimensional domain")))?;
    Ok(linspace(lo + GRID_TRIM, hi - GRID_TRIM, count))
}

/// Tabulate inverse efficient information over a grid. Regimes not listed
/// are left empty. Grid points are evaluated in parallel; the output order
/// follows the grid.
pub fn bound_curve(
    model: &CorrelationModel,
    grid: &[f64],
    regimes: &[Regime],
) -> Result<BoundCurve> {
    if model.q() != 1 {
        return Err(Error::InvalidInput(format!(
            "bound curves need a one-parameter family, {model} has {} parameters",
            model.q()
        )));
    }
    if grid
        .windows(2)
        .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
    {
        return Err(Error::InvalidInput(
            "grid must be strictly increasing".into(),
        ));
    }
    if let Some(&bad) = grid.iter().find(|&&t| !model.domain_check(&[t])) {
        return Err(Error::Domain {
            family: model.to_string(),
            theta: vec![bad],
        });
    }
    let points = grid
        .par_iter()
        .map(|&t| {
            let info = InfoDecomposition::compute(model, &[t])?;
            let inv = |r: Regime| -> Result<Option<f64>> {
                if !regimes.contains(&r) {
                    return Ok(None);
                }
                Ok(Some(1.0 / info.efficient(r)?.value[(0, 0)]))
            };
            Ok(BoundPoint {
                theta: t,
                inv_known: inv(Regime::Known)?,
                inv_equal: inv(Regime::Equal)?,
                inv_unequal: inv(Regime::Unequal)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundCurve {
        model: *model,
        points,
    })
}
