//! Independent reference evaluations used by the integration and acceptance
//! tests. Everything here works on plain nested `Vec`s with explicit loops and
//! shares no code with the library beyond the starting basis it is handed.

#![allow(dead_code, clippy::needless_range_loop)]

pub type Mat = Vec<Vec<f64>>;

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    let mut out = zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            let mut s = 0.0;
            for l in 0..m {
                s += a[i][l] * b[l][j];
            }
            out[i][j] = s;
        }
    }
    out
}

/// `(1/B) Σ_b x_b x_bᵀ` from a `B × d` slice.
pub fn sample_covariance(x: &Mat) -> Mat {
    let (b, d) = (x.len(), x[0].len());
    let mut c = zeros(d, d);
    for row in x {
        for i in 0..d {
            for j in 0..d {
                c[i][j] += row[i] * row[j];
            }
        }
    }
    for row in c.iter_mut() {
        for v in row.iter_mut() {
            *v /= b as f64;
        }
    }
    c
}

/// `W = Q + (1/B)XᵀX Q`, covariance formed explicitly.
pub fn dense_bootstrap(q: &Mat, x: &Mat) -> Mat {
    let cq = matmul(&sample_covariance(x), q);
    q.iter()
        .zip(cq)
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u + v).collect())
        .collect()
}

/// `W = (j−1)/j · Q_prev diag(λ) Q_prevᵀ q_iter + (1/j)(1/B)XᵀX q_iter`,
/// with the history matrix formed explicitly.
pub fn dense_history(q_prev: &Mat, lambda: &[f64], q_iter: &Mat, x: &Mat, j: usize) -> Mat {
    let d = q_prev.len();
    let k = lambda.len();
    let jf = j as f64;
    let mut h = zeros(d, d);
    for r in 0..d {
        for c in 0..d {
            let mut s = 0.0;
            for t in 0..k {
                s += q_prev[r][t] * lambda[t] * q_prev[c][t];
            }
            h[r][c] = (jf - 1.0) / jf * s;
        }
    }
    let hq = matmul(&h, q_iter);
    let cq = matmul(&sample_covariance(x), q_iter);
    hq.iter()
        .zip(cq)
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u + v / jf).collect())
        .collect()
}

/// Classical Gram–Schmidt on the columns of `w`; the implied R has a
/// positive diagonal.
pub fn gram_schmidt(w: &Mat) -> Mat {
    let (d, k) = (w.len(), w[0].len());
    let mut q = zeros(d, k);
    for c in 0..k {
        let mut v: Vec<f64> = (0..d).map(|r| w[r][c]).collect();
        for p in 0..c {
            let dot: f64 = (0..d).map(|r| q[r][p] * w[r][c]).sum();
            for r in 0..d {
                v[r] -= dot * q[r][p];
            }
        }
        // second pass for numerical safety
        for p in 0..c {
            let dot: f64 = (0..d).map(|r| q[r][p] * v[r]).sum();
            for r in 0..d {
                v[r] -= dot * q[r][p];
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for r in 0..d {
            q[r][c] = v[r] / norm;
        }
    }
    q
}

pub fn projector_gap(a: &Mat, b: &Mat) -> f64 {
    let (d, k) = (a.len(), a[0].len());
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            let pa: f64 = (0..k).map(|t| a[i][t] * a[j][t]).sum();
            let pb: f64 = (0..k).map(|t| b[i][t] * b[j][t]).sum();
            s += (pa - pb).powi(2);
        }
    }
    s.sqrt() / (2.0 * k as f64).sqrt()
}

pub fn col_norms(w: &Mat) -> Vec<f64> {
    (0..w[0].len())
        .map(|c| w.iter().map(|row| row[c] * row[c]).sum::<f64>().sqrt())
        .collect()
}

pub struct Scripted {
    /// `B × N × k`
    pub y: Vec<Mat>,
    /// eigenvalue estimates after each batch
    pub lambdas: Vec<Vec<f64>>,
    pub q_final: Mat,
}

/// Step-by-step evaluation of the streaming algorithm with a global weight
/// counter: bootstrap at the first time point, history updates after, every
/// batch projected with the basis reached at its last point.
pub fn scripted_compress(
    values: &[Mat],
    time_batch: usize,
    q0: Mat,
    tol: f64,
    max_iters: usize,
) -> Scripted {
    let (b, n) = (values.len(), values[0].len());
    let k = q0[0].len();
    let mut q = q0;
    let mut lambda = vec![0.0; k];
    let mut y = vec![zeros(n, k); b];
    let mut lambdas = Vec::new();
    let mut j = 0;

    let mut start = 0;
    while start < n {
        let end = (start + time_batch).min(n);
        for t in start..end {
            j += 1;
            let x: Mat = (0..b).map(|i| values[i][t].clone()).collect();
            let mut iterate = q.clone();
            let mut w = zeros(iterate.len(), k);
            for _ in 0..max_iters {
                w = if j == 1 {
                    dense_bootstrap(&iterate, &x)
                } else {
                    dense_history(&q, &lambda, &iterate, &x, j)
                };
                let next = gram_schmidt(&w);
                let gap = projector_gap(&next, &iterate);
                iterate = next;
                if gap <= tol {
                    break;
                }
            }
            q = iterate;
            lambda = col_norms(&w);
        }
        for i in 0..b {
            for t in start..end {
                let row = matmul(&vec![values[i][t].clone()], &q);
                y[i][t] = row[0].clone();
            }
        }
        lambdas.push(lambda.clone());
        start = end;
    }
    Scripted {
        y,
        lambdas,
        q_final: q,
    }
}

/// Deterministic xorshift stream mapped to roughly standard-normal values
/// (Irwin–Hall with 12 uniforms), for inputs that must not depend on the
/// library's own generators.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed.wrapping_mul(0x2545_F491_4F6C_DD1D) | 1)
    }

    pub fn uniform(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn normal(&mut self) -> f64 {
        (0..12).map(|_| self.uniform()).sum::<f64>() - 6.0
    }

    pub fn matrix(&mut self, r: usize, c: usize) -> Mat {
        (0..r)
            .map(|_| (0..c).map(|_| self.normal()).collect())
            .collect()
    }
}
