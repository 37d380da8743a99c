//! Brute-force batch PCA used as ground truth: the pooled (uncentered)
//! second-moment matrix of the whole dataset, a cyclic Jacobi
//! eigendecomposition, and subspace comparison metrics.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::{frobenius, orthonormality_defect, projector_distance};
use crate::types::Dataset;

const SYMMETRY_TOL: f64 = 1e-10;
const ORTHONORMAL_INPUT_TOL: f64 = 1e-6;
const MAX_JACOBI_SWEEPS: usize = 100;

/// Eigenvalues in descending order with matching eigenvector columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSolution {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

impl EigenSolution {
    /// The leading `k` eigenvectors as a `d × k` basis.
    pub fn top_k(&self, k: usize) -> Result<Array2<f64>> {
        let d = self.eigenvectors.nrows();
        if k == 0 || k > d {
            return Err(Error::BadDimensions { d, k });
        }
        Ok(self.eigenvectors.slice(ndarray::s![.., ..k]).to_owned())
    }
}

/// `C = (1/(B·N)) Σ x xᵀ` over every (instance, time) row, no centering.
pub fn pooled_covariance(ds: &Dataset) -> Array2<f64> {
    let rows = flatten_rows(ds);
    let mut c = rows.t().dot(&rows);
    c /= rows.nrows() as f64;
    symmetrize(&mut c);
    c
}

fn symmetrize(c: &mut Array2<f64>) {
    let d = c.nrows();
    for i in 0..d {
        for j in 0..i {
            let m = 0.5 * (c[[i, j]] + c[[j, i]]);
            c[[i, j]] = m;
            c[[j, i]] = m;
        }
    }
}

/// All `B·N` rows of the tensor as one `(B·N) × d` matrix.
pub(crate) fn flatten_rows(ds: &Dataset) -> Array2<f64> {
    let v = ds.values();
    let (b, n, d) = v.dim();
    v.as_standard_layout()
        .into_owned()
        .into_shape_with_order((b * n, d))
        .expect("standard layout reshapes")
}

/// Full symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues come back descending; each eigenvector's largest-magnitude
/// entry is made positive.
pub fn batch_pca(c: ArrayView2<'_, f64>) -> Result<EigenSolution> {
    let (d, d2) = c.dim();
    if d != d2 || d == 0 {
        return Err(Error::ShapeMismatch(format!(
            "expected a square matrix, got {d}×{d2}"
        )));
    }
    let scale = c.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let asym = (0..d)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .fold(0.0f64, |m, (i, j)| m.max((c[[i, j]] - c[[j, i]]).abs()));
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }

    let mut a = c.to_owned();
    symmetrize(&mut a);
    let mut v = Array2::<f64>::eye(d);
    let total = frobenius(a.view());

    for _ in 0..MAX_JACOBI_SWEEPS {
        let off = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * total {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cos = 1.0 / (t * t + 1.0).sqrt();
                let sin = t * cos;

                a[[p, p]] -= t * apq;
                a[[q, q]] += t * apq;
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
                for r in 0..d {
                    if r != p && r != q {
                        let arp = a[[r, p]];
                        let arq = a[[r, q]];
                        a[[r, p]] = cos * arp - sin * arq;
                        a[[p, r]] = a[[r, p]];
                        a[[r, q]] = sin * arp + cos * arq;
                        a[[q, r]] = a[[r, q]];
                    }
                    let vrp = v[[r, p]];
                    let vrq = v[[r, q]];
                    v[[r, p]] = cos * vrp - sin * vrq;
                    v[[r, q]] = sin * vrp + cos * vrq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]));
    let eigenvalues: Array1<f64> = order.iter().map(|&i| a[[i, i]]).collect();
    let mut eigenvectors = v.select(Axis(1), &order);
    for mut col in eigenvectors.axis_iter_mut(Axis(1)) {
        let lead = col.iter().copied().fold(
            0.0f64,
            |best, x| if x.abs() > best.abs() { x } else { best },
        );
        if lead < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
    Ok(EigenSolution {
        eigenvalues,
        eigenvectors,
    })
}

/// Top-`k` eigenbasis of the pooled covariance of `ds`.
pub fn oracle_basis(ds: &Dataset, k: usize) -> Result<Array2<f64>> {
    batch_pca(pooled_covariance(ds).view())?.top_k(k)
}

/// Normalized projector distance `‖Q1Q1ᵀ − Q2Q2ᵀ‖_F / √(2k)`, in `[0, 1]`.
pub fn subspace_distance(q1: ArrayView2<'_, f64>, q2: ArrayView2<'_, f64>) -> Result<f64> {
    if q1.dim() != q2.dim() {
        return Err(Error::ShapeMismatch(format!(
            "bases {:?} and {:?} differ in shape",
            q1.dim(),
            q2.dim()
        )));
    }
    for q in [q1, q2] {
        let defect = orthonormality_defect(q);
        if defect > ORTHONORMAL_INPUT_TOL {
            return Err(Error::NotOrthonormal(defect));
        }
    }
    Ok(projector_distance(q1, q2).min(1.0))
}

/// Relative Frobenius error `‖X − Xqqᵀ‖_F / ‖X‖_F` of projecting every row
/// of the dataset onto `span(q)`.
pub fn reconstruction_error(ds: &Dataset, q: ArrayView2<'_, f64>) -> Result<f64> {
    if q.nrows() != ds.n_vars() {
        return Err(Error::ShapeMismatch(format!(
            "basis has {} rows, dataset has {} variables",
            q.nrows(),
            ds.n_vars()
        )));
    }
    let defect = orthonormality_defect(q);
    if defect > ORTHONORMAL_INPUT_TOL {
        return Err(Error::NotOrthonormal(defect));
    }
    let x = flatten_rows(ds);
    let norm = frobenius(x.view());
    if norm == 0.0 {
        return Err(Error::ZeroData);
    }
    if q.ncols() == q.nrows() {
        return Ok(0.0);
    }
    let residual = &x - &x.dot(&q).dot(&q.t());
    Ok(frobenius(residual.view()) / norm)
}
