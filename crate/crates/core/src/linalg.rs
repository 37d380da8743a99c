//! Small dense kernels shared by the streaming engine and the oracle.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Below this magnitude a diagonal entry of R marks the iterate as rank deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Thin Householder QR of a `d × k` matrix (`k <= d`) with the sign of R's
/// diagonal forced non-negative, so the factorization is unique for full-rank
/// input.
pub fn qr_orthonormalize(w: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    let (d, k) = w.dim();
    if k == 0 || k > d {
        return Err(Error::BadDimensions { d, k });
    }
    let mut a = w.to_owned();
    let mut reflectors: Vec<Array1<f64>> = Vec::with_capacity(k);

    for c in 0..k {
        let x = a.slice(s![c.., c]);
        let norm = x.dot(&x).sqrt();
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x.to_owned();
        v[0] -= alpha;
        let vnorm = v.dot(&v).sqrt();
        if vnorm > 0.0 {
            v /= vnorm;
            let mut block = a.slice_mut(s![c.., c..]);
            let proj = v.dot(&block);
            for (mut row, &vi) in block.axis_iter_mut(Axis(0)).zip(v.iter()) {
                row.scaled_add(-2.0 * vi, &proj);
            }
        }
        reflectors.push(v);
    }

    let mut r = a.slice(s![..k, ..]).to_owned();
    for i in 0..k {
        for j in 0..i {
            r[[i, j]] = 0.0;
        }
    }

    let mut q = Array2::<f64>::eye(d).slice(s![.., ..k]).to_owned();
    for (c, v) in reflectors.iter().enumerate().rev() {
        if v.iter().all(|&x| x == 0.0) {
            continue;
        }
        let mut block = q.slice_mut(s![c.., ..]);
        let proj = v.dot(&block);
        for (mut row, &vi) in block.axis_iter_mut(Axis(0)).zip(v.iter()) {
            row.scaled_add(-2.0 * vi, &proj);
        }
    }

    for i in 0..k {
        if r[[i, i]] < 0.0 {
            r.row_mut(i).mapv_inplace(|x| -x);
            q.column_mut(i).mapv_inplace(|x| -x);
        }
        if r[[i, i]] < RANK_TOL {
            return Err(Error::RankDeficient {
                column: i,
                magnitude: r[[i, i]],
            });
        }
    }
    Ok((q, r))
}

/// `‖QᵀQ − I‖_F`.
pub fn orthonormality_defect(q: ArrayView2<'_, f64>) -> f64 {
    let gram = q.t().dot(&q);
    let k = gram.nrows();
    let mut acc = 0.0;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            acc += (gram[[i, j]] - target).powi(2);
        }
    }
    acc.sqrt()
}

/// `‖Q1Q1ᵀ − Q2Q2ᵀ‖_F / √(2k)` without any orthonormality check.
///
/// The projector difference is formed explicitly: the trace identity
/// `2k − 2‖Q1ᵀQ2‖_F²` cancels catastrophically near zero distance.
pub(crate) fn projector_distance(q1: ArrayView2<'_, f64>, q2: ArrayView2<'_, f64>) -> f64 {
    let k = q1.ncols();
    let diff = q1.dot(&q1.t()) - q2.dot(&q2.t());
    let fro = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
    fro / (2.0 * k as f64).sqrt()
}

/// Euclidean norm of each column.
pub fn column_norms(w: ArrayView2<'_, f64>) -> Array1<f64> {
    w.axis_iter(Axis(1)).map(|c| c.dot(&c).sqrt()).collect()
}

pub fn frobenius(m: ArrayView2<'_, f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `rows × cols` matrix with i.i.d. standard-normal entries, filled row-major.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Orthonormal `d × k` basis drawn as the Q factor of a Gaussian matrix,
/// redrawing on the (measure-zero) rank-deficient case.
pub fn random_orthonormal<R: Rng + ?Sized>(rng: &mut R, d: usize, k: usize) -> Result<Array2<f64>> {
    if k == 0 || k > d {
        return Err(Error::BadDimensions { d, k });
    }
    loop {
        let h = gaussian_matrix(rng, d, k);
        match qr_orthonormalize(h.view()) {
            Ok((q, _)) => return Ok(q),
            Err(Error::RankDeficient { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
}
