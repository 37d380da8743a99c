//! Temporal streaming batch PCA.
//!
//! Time points are absorbed one at a time, in temporal order, each one as a
//! power iteration with QR re-orthonormalization. The very first point
//! bootstraps from a random Gaussian basis with `W = Q + (1/B)XᵀXQ`. Every
//! later point `j` blends the carried rank-k history with the new sample
//! covariance:
//!
//! ```text
//! W = (j−1)/j · Q_{j−1} Λ_{j−1} Q_{j−1}ᵀ Q + 1/j · (1/B) XᵀX Q
//! ```
//!
//! and the eigenvalue estimates are the column norms of the final `W`. At the
//! end of each time batch the batch is projected onto the current basis, and
//! that basis is carried into the next batch.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, column_norms, projector_distance, qr_orthonormalize, RANK_TOL};
use crate::types::{
    BatchView, CompactRepresentation, CounterMode, Dataset, EigenSnapshot, Pooling,
    ProjectionState, RunConfig, TimePointSlice,
};

/// What happened inside one "until converged" loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerIterationReport {
    /// Global time index of the absorbed point.
    pub time_index: usize,
    /// Weight counter used for the update (`1` means bootstrap).
    pub counter: usize,
    pub sweeps_used: usize,
    pub final_subspace_delta: f64,
    pub converged: bool,
    /// Times the iterate was redrawn because `W` vanished.
    pub restarts: usize,
    /// Largest `‖QᵀQ − I‖_F` over every post-QR iterate of this loop.
    pub max_orthonormality_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub batch: usize,
    pub start: usize,
    pub len: usize,
    pub inner: Vec<InnerIterationReport>,
}

impl BatchReport {
    pub fn all_converged(&self) -> bool {
        self.inner.iter().all(|r| r.converged)
    }
}

/// Random orthonormal starting state, `H ~ N(0, I)` then `H = QR`.
pub fn init_state(d: usize, k: usize, seed: u64) -> Result<ProjectionState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_state_with(d, k, &mut rng)
}

fn init_state_with(d: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<ProjectionState> {
    let q = linalg::random_orthonormal(rng, d, k)?;
    Ok(ProjectionState {
        q,
        lambda: Array1::zeros(k),
        time_index: 0,
    })
}

fn check_shapes(q: ArrayView2<'_, f64>, x: &TimePointSlice<'_>) -> Result<()> {
    if q.nrows() != x.n_vars() {
        return Err(Error::ShapeMismatch(format!(
            "basis has {} rows but the time point has {} variables",
            q.nrows(),
            x.n_vars()
        )));
    }
    if x.n_instances() == 0 {
        return Err(Error::ShapeMismatch("time point has no instances".into()));
    }
    Ok(())
}

/// `(1/B) XᵀX Q`, evaluated as `Xᵀ(XQ)` so the `d × d` covariance is never formed.
fn covariance_times(x: &TimePointSlice<'_>, q: ArrayView2<'_, f64>) -> Array2<f64> {
    let m = x.matrix();
    let b = m.nrows() as f64;
    let mut out = m.t().dot(&m.dot(&q));
    out /= b;
    out
}

/// Bootstrap update for the first absorbed point: `W = Q + (1/B)XᵀXQ`.
pub fn bootstrap_update(q: ArrayView2<'_, f64>, x: &TimePointSlice<'_>) -> Result<Array2<f64>> {
    check_shapes(q, x)?;
    let mut w = covariance_times(x, q);
    w += &q;
    Ok(w)
}

/// Weights `((j−1)/j, 1/j)` given to history and to the new point.
pub fn history_weights(j: usize) -> (f64, f64) {
    let fresh = 1.0 / j as f64;
    (1.0 - fresh, fresh)
}

/// History-weighted update for counter `j >= 2`:
/// `W = (j−1)/j · QΛQᵀ·q_iter + 1/j · (1/B)XᵀX·q_iter`, with `Q`, `Λ` from `state`.
pub fn history_update(
    state: &ProjectionState,
    q_iter: ArrayView2<'_, f64>,
    x: &TimePointSlice<'_>,
    j: usize,
) -> Result<Array2<f64>> {
    if j < 2 {
        return Err(Error::BadCounter(j));
    }
    check_shapes(q_iter, x)?;
    if state.q.dim() != q_iter.dim() {
        return Err(Error::ShapeMismatch(format!(
            "state basis is {:?}, iterate is {:?}",
            state.q.dim(),
            q_iter.dim()
        )));
    }
    let (past, fresh) = history_weights(j);

    // Q (Λ (Qᵀ q_iter)), O(d k²)
    let mut coeffs = state.q.t().dot(&q_iter);
    for (mut row, &l) in coeffs.axis_iter_mut(Axis(0)).zip(state.lambda.iter()) {
        row *= l * past;
    }
    let mut w = state.q.dot(&coeffs);
    w.scaled_add(fresh, &covariance_times(x, q_iter));
    Ok(w)
}

/// Eigenvalue estimates: Euclidean norm of each column of `W`.
pub fn estimate_eigenvalues(w: ArrayView2<'_, f64>) -> Array1<f64> {
    column_norms(w)
}

/// Absorbs one time point: power iteration with QR until successive iterates
/// are within `config.tol` subspace distance or `config.max_inner_iters`
/// sweeps have run. `j == 1` selects the bootstrap rule.
///
/// `rng` is only drawn from when `W` vanishes entirely, in which case the
/// iterate is replaced by a fresh random basis.
pub fn inner_converge(
    state: &ProjectionState,
    x: &TimePointSlice<'_>,
    j: usize,
    config: &RunConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(ProjectionState, InnerIterationReport)> {
    if j == 0 {
        return Err(Error::BadCounter(j));
    }
    check_shapes(state.q.view(), x)?;
    let (d, k) = state.q.dim();

    let mut q_iter = state.q.clone();
    let mut w_final = Array2::zeros((d, k));
    let mut delta = f64::INFINITY;
    let mut sweeps = 0;
    let mut restarts = 0;
    let mut max_defect: f64 = 0.0;
    let mut converged = false;

    while sweeps < config.max_inner_iters {
        sweeps += 1;
        let w = if j == 1 {
            bootstrap_update(q_iter.view(), x)?
        } else {
            history_update(state, q_iter.view(), x, j)?
        };
        if linalg::frobenius(w.view()) < RANK_TOL {
            restarts += 1;
            let fresh = linalg::random_orthonormal(rng, d, k)?;
            delta = projector_distance(fresh.view(), q_iter.view());
            q_iter = fresh;
            w_final = w;
            continue;
        }
        let (q_new, _) = qr_orthonormalize(w.view())?;
        max_defect = max_defect.max(linalg::orthonormality_defect(q_new.view()));
        delta = projector_distance(q_new.view(), q_iter.view());
        q_iter = q_new;
        w_final = w;
        if delta <= config.tol {
            converged = true;
            break;
        }
    }

    let next = ProjectionState {
        q: q_iter,
        lambda: estimate_eigenvalues(w_final.view()),
        time_index: state.time_index + 1,
    };
    let report = InnerIterationReport {
        time_index: state.time_index,
        counter: j,
        sweeps_used: sweeps,
        final_subspace_delta: delta,
        converged,
        restarts,
        max_orthonormality_defect: max_defect,
    };
    Ok((next, report))
}

/// Absorbs every point of `batch` in order, then projects the whole batch on
/// the resulting basis. Returns the new state, `Y_i` (`B × T_actual × k`) and
/// the per-point reports.
pub fn process_batch(
    state: ProjectionState,
    batch: &BatchView<'_>,
    config: &RunConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(ProjectionState, Array3<f64>, BatchReport)> {
    let mut state = state;
    let mut inner = Vec::with_capacity(batch.len());
    for (local, time) in batch.time_indices().enumerate() {
        let j = match config.counter {
            CounterMode::Global => state.time_index + 1,
            CounterMode::PerBatch => local + 1,
        };
        let x = batch.time_point(local);
        let (next, report) =
            inner_converge(&state, &x, j, config, rng).map_err(|e| e.at_time(time))?;
        state = next;
        inner.push(report);
    }
    let projected = project(batch, state.q.view());
    let report = BatchReport {
        batch: batch.index(),
        start: batch.time_indices().start,
        len: batch.len(),
        inner,
    };
    Ok((state, projected, report))
}

/// `Y = X Q` applied at every time step of the batch.
fn project(batch: &BatchView<'_>, q: ArrayView2<'_, f64>) -> Array3<f64> {
    let values = batch.values();
    let (b, t, _) = values.dim();
    let mut out = Array3::zeros((b, t, q.ncols()));
    for (x_t, mut y_t) in values.axis_iter(Axis(1)).zip(out.axis_iter_mut(Axis(1))) {
        y_t.assign(&x_t.dot(&q));
    }
    out
}

/// Stateful driver that owns the carried projection and the seeded generator.
#[derive(Debug, Clone)]
pub struct StreamingPca {
    config: RunConfig,
    state: ProjectionState,
    rng: ChaCha8Rng,
}

impl StreamingPca {
    /// Fresh engine for `d` variables; the starting basis is the same one
    /// [`init_state`] returns for `config.seed`.
    pub fn new(d: usize, config: RunConfig) -> Result<Self> {
        let k = config.components;
        if k == 0 || k > d {
            return Err(Error::BadDimensions { d, k });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let state = init_state_with(d, k, &mut rng)?;
        Ok(StreamingPca { config, state, rng })
    }

    pub fn state(&self) -> &ProjectionState {
        &self.state
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Feeds one batch; on error the engine keeps its pre-batch state.
    pub fn push_batch(&mut self, batch: &BatchView<'_>) -> Result<(Array3<f64>, BatchReport)> {
        let mut rng = self.rng.clone();
        let (state, y, report) = process_batch(self.state.clone(), batch, &self.config, &mut rng)?;
        self.state = state;
        self.rng = rng;
        Ok((y, report))
    }
}

/// Runs the whole sequence and assembles the compact representation.
pub fn compress(ds: &Dataset, config: &RunConfig) -> Result<CompactRepresentation> {
    config.validate(ds.n_vars(), ds.n_times())?;
    let mut engine = StreamingPca::new(ds.n_vars(), config.clone())?;
    let n_batches = ds.n_batches(config.time_batch);
    let n_out = match config.pooling {
        Pooling::None => ds.n_times(),
        Pooling::MeanOverBatch => n_batches,
    };
    let mut values = Array3::zeros((ds.n_instances(), n_out, config.components));
    let mut eigen_trajectory = Vec::with_capacity(n_batches);
    let mut reports = Vec::with_capacity(n_batches);

    for i in 0..n_batches {
        let batch = ds.slice_batch(i, config.time_batch)?;
        let (y, report) = engine.push_batch(&batch)?;
        match config.pooling {
            Pooling::None => {
                let range = batch.time_indices();
                values.slice_mut(s![.., range, ..]).assign(&y);
            }
            Pooling::MeanOverBatch => {
                let mean = y.mean_axis(Axis(1)).expect("batches are non-empty");
                values.slice_mut(s![.., i, ..]).assign(&mean);
            }
        }
        eigen_trajectory.push(EigenSnapshot {
            batch: i,
            lambda: engine.state().lambda.to_vec(),
        });
        reports.push(report);
    }

    if let Some(((b, t, c), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite {
            instance: b,
            time: t,
            variable: c,
        });
    }

    Ok(CompactRepresentation {
        values,
        labels: ds.labels().map(<[usize]>::to_vec),
        eigen_trajectory,
        reports,
        final_state: engine.state,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormality_defect;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn state(q: Array2<f64>, lambda: Array1<f64>, time_index: usize) -> ProjectionState {
        ProjectionState::new(q, lambda, time_index).unwrap()
    }

    #[test]
    fn init_is_orthonormal_and_deterministic() {
        let s = init_state(3, 3, 1).unwrap();
        assert!(orthonormality_defect(s.q.view()) < 1e-12);
        assert_eq!(s.lambda, Array1::<f64>::zeros(3));
        assert_eq!(s.time_index, 0);
        assert_eq!(init_state(5, 2, 42).unwrap(), init_state(5, 2, 42).unwrap());
        assert!(matches!(
            init_state(2, 3, 0),
            Err(Error::BadDimensions { d: 2, k: 3 })
        ));
        assert!(matches!(
            init_state(2, 0, 0),
            Err(Error::BadDimensions { .. })
        ));
    }

    #[test]
    fn bootstrap_zero_data_returns_q() {
        let x = Array2::zeros((2, 2));
        let w =
            bootstrap_update(array![[1.0], [0.0]].view(), &TimePointSlice::new(x.view())).unwrap();
        assert_eq!(w, array![[1.0], [0.0]]);
    }

    #[test]
    fn bootstrap_single_row() {
        let x = array![[1.0, 0.0]];
        let w =
            bootstrap_update(array![[1.0], [0.0]].view(), &TimePointSlice::new(x.view())).unwrap();
        assert_eq!(w, array![[2.0], [0.0]]);
    }

    #[test]
    fn bootstrap_shape_mismatch() {
        let x = Array2::zeros((2, 3));
        assert!(matches!(
            bootstrap_update(array![[1.0], [0.0]].view(), &TimePointSlice::new(x.view())),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn history_zero_data_term() {
        let s = state(array![[1.0], [0.0]], array![4.0], 1);
        let x = Array2::zeros((2, 2));
        let w = history_update(
            &s,
            array![[1.0], [0.0]].view(),
            &TimePointSlice::new(x.view()),
            2,
        )
        .unwrap();
        assert_eq!(w, array![[2.0], [0.0]]);
    }

    #[test]
    fn history_both_terms_vanish() {
        let s = state(array![[1.0], [0.0]], array![0.0], 1);
        let x = Array2::zeros((2, 2));
        let w = history_update(
            &s,
            array![[1.0], [0.0]].view(),
            &TimePointSlice::new(x.view()),
            2,
        )
        .unwrap();
        assert_eq!(w, Array2::<f64>::zeros((2, 1)));
    }

    #[test]
    fn history_rejects_small_counter() {
        let s = state(array![[1.0], [0.0]], array![1.0], 0);
        let x = Array2::zeros((2, 2));
        for j in [0, 1] {
            assert!(matches!(
                history_update(&s, s.q.view(), &TimePointSlice::new(x.view()), j),
                Err(Error::BadCounter(_))
            ));
        }
    }

    #[test]
    fn eigenvalue_examples() {
        assert_eq!(
            estimate_eigenvalues(Array2::zeros((3, 2)).view()),
            array![0.0, 0.0]
        );
        assert_eq!(
            estimate_eigenvalues(array![[3.0], [4.0]].view()),
            array![5.0]
        );
        assert_eq!(
            estimate_eigenvalues(array![[1.0, 0.0], [0.0, 2.0]].view()),
            array![1.0, 2.0]
        );
    }

    #[test]
    fn converges_to_dominant_axis() {
        // XᵀX / B = diag(4, 1)
        let x = array![[2.0, 0.0], [0.0, 1.0]] * 2f64.sqrt();
        let config = RunConfig::new(1, 1)
            .with_tol(1e-8)
            .with_max_inner_iters(1000);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s0 = init_state(2, 1, 3).unwrap();
        let (s1, report) =
            inner_converge(&s0, &TimePointSlice::new(x.view()), 1, &config, &mut rng).unwrap();
        assert!(report.converged);
        assert_abs_diff_eq!(s1.q[[0, 0]].abs(), 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(s1.q[[1, 0]], 0.0, epsilon = 1e-7);
        // W = (I + C) q at the fixed point, so its norm is 1 + 4.
        assert_abs_diff_eq!(s1.lambda[0], 5.0, epsilon = 1e-6);
        assert_eq!(s1.time_index, 1);
    }

    #[test]
    fn zero_data_bootstrap_is_fixed_point() {
        let x = Array2::zeros((3, 4));
        let config = RunConfig::new(1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s0 = init_state(4, 2, 9).unwrap();
        let (s1, report) =
            inner_converge(&s0, &TimePointSlice::new(x.view()), 1, &config, &mut rng).unwrap();
        assert_eq!(report.sweeps_used, 1);
        assert!(report.converged);
        assert_abs_diff_eq!(s1.q, s0.q, epsilon = 1e-14);
        assert_abs_diff_eq!(s1.lambda, array![1.0, 1.0], epsilon = 1e-14);
    }

    #[test]
    fn sweep_cap_is_respected() {
        let x = array![[1.0, 0.9, 0.0], [0.2, 1.0, 0.5], [0.3, 0.1, 1.0]];
        let config = RunConfig::new(1, 1).with_max_inner_iters(1).with_tol(1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s0 = init_state(3, 1, 5).unwrap();
        let (s1, report) =
            inner_converge(&s0, &TimePointSlice::new(x.view()), 1, &config, &mut rng).unwrap();
        assert_eq!(report.sweeps_used, 1);
        assert!(!report.converged);
        assert_eq!(s1.time_index, 1);
    }

    #[test]
    fn vanishing_w_restarts_iterate() {
        let s = state(array![[1.0], [0.0]], array![0.0], 1);
        let x = Array2::zeros((2, 2));
        let config = RunConfig::new(1, 1).with_max_inner_iters(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (next, report) =
            inner_converge(&s, &TimePointSlice::new(x.view()), 2, &config, &mut rng).unwrap();
        assert_eq!(report.restarts, 3);
        assert!(!report.converged);
        assert!(orthonormality_defect(next.q.view()) < 1e-12);
        assert_eq!(next.lambda, array![0.0]);
    }

    #[test]
    fn single_point_batch_matches_inner_step() {
        let values = Array3::from_shape_fn((3, 1, 3), |(b, _, v)| ((b * 3 + v) as f64).sin());
        let ds = Dataset::new(values, None).unwrap();
        let config = RunConfig::new(1, 2).with_seed(4);
        let s0 = init_state(3, 2, 4).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (s_batch, y, _) = process_batch(
            s0.clone(),
            &ds.slice_batch(0, 1).unwrap(),
            &config,
            &mut rng,
        )
        .unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = ds.slice_time_point(0).unwrap();
        let (s_inner, _) = inner_converge(&s0, &x, 1, &config, &mut rng).unwrap();
        assert_eq!(s_batch, s_inner);
        assert_eq!(y.index_axis(Axis(1), 0), x.matrix().dot(&s_inner.q));
    }

    #[test]
    fn errors_carry_time_index() {
        // d = k = 2 with a rank-1 history and zero data: W = QΛQᵀq has rank 1.
        let values = Array3::zeros((2, 3, 2));
        let ds = Dataset::new(values, None).unwrap();
        let s = state(Array2::eye(2), array![1.0, 0.0], 1);
        let config = RunConfig::new(3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = process_batch(s, &ds.slice_batch(0, 3).unwrap(), &config, &mut rng).unwrap_err();
        match err {
            Error::AtTime { time: 0, source } => {
                assert!(matches!(*source, Error::RankDeficient { column: 1, .. }))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_batch_single_snapshot() {
        let values = Array3::from_shape_fn((3, 4, 2), |(b, t, v)| (b + t * v) as f64 + 0.5);
        let ds = Dataset::new(values, None).unwrap();
        let rep = compress(&ds, &RunConfig::new(4, 1)).unwrap();
        assert_eq!(rep.eigen_trajectory.len(), 1);
        assert_eq!(rep.values.dim(), (3, 4, 1));
    }

    #[test]
    fn mean_pooling_shape() {
        let values =
            Array3::from_shape_fn((2, 10, 3), |(b, t, v)| ((b + 2 * t + 3 * v) as f64).cos());
        let ds = Dataset::new(values, Some(vec![0, 1])).unwrap();
        let config = RunConfig::new(4, 2).with_pooling(Pooling::MeanOverBatch);
        let rep = compress(&ds, &config).unwrap();
        assert_eq!(rep.values.dim(), (2, 3, 2));
        assert_eq!(rep.eigen_trajectory.len(), 3);
        assert_eq!(rep.labels, Some(vec![0, 1]));

        let plain = compress(&ds, &RunConfig::new(4, 2)).unwrap();
        let tail_mean = plain
            .values
            .slice(s![.., 8..10, ..])
            .mean_axis(Axis(1))
            .unwrap();
        assert_abs_diff_eq!(rep.values.slice(s![.., 2, ..]), tail_mean, epsilon = 1e-15);
    }

    #[test]
    fn compress_rejects_bad_config() {
        let ds = Dataset::new(Array3::ones((2, 4, 3)), None).unwrap();
        assert!(matches!(
            compress(&ds, &RunConfig::new(2, 4)),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            compress(&ds, &RunConfig::new(5, 1)),
            Err(Error::InvalidConfig(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn weights_sum_to_one(j in 2usize..10_000_000) {
                let (past, fresh) = history_weights(j);
                prop_assert_eq!(past + fresh, 1.0);
                prop_assert!((past - (j - 1) as f64 / j as f64).abs() <= f64::EPSILON);
            }
        }
    }
}
