//! Shared data model: the input tensor, its per-time and per-batch views,
//! the carried projection state, run configuration and the compressed output.

use std::ops::Range;

use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::streaming::BatchReport;

/// A multivariate time-series dataset stored as an `instances × time × variables`
/// tensor of 64-bit reals, with optional per-instance class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Array3<f64>,
    labels: Option<Vec<usize>>,
    names: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset, checking every invariant.
    pub fn new(values: Array3<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        validate_dataset(Dataset {
            values,
            labels,
            names: None,
        })
    }

    /// Attaches variable names; their count must equal the number of variables.
    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_vars() {
            return Err(Error::ShapeMismatch(format!(
                "{} variable names for {} variables",
                names.len(),
                self.n_vars()
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn values(&self) -> ArrayView3<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array3<f64> {
        self.values
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Number of instances (B).
    pub fn n_instances(&self) -> usize {
        self.values.len_of(Axis(0))
    }

    /// Sequence length (N).
    pub fn n_times(&self) -> usize {
        self.values.len_of(Axis(1))
    }

    /// Number of variables (d).
    pub fn n_vars(&self) -> usize {
        self.values.len_of(Axis(2))
    }

    /// All instances at one time index, as a `B × d` matrix.
    pub fn slice_time_point(&self, n: usize) -> Result<TimePointSlice<'_>> {
        if n >= self.n_times() {
            return Err(Error::IndexOutOfRange {
                index: n,
                len: self.n_times(),
            });
        }
        Ok(TimePointSlice(self.values.index_axis(Axis(1), n)))
    }

    /// Number of time batches of length `time_batch`, counting a short tail.
    pub fn n_batches(&self, time_batch: usize) -> usize {
        self.n_times().div_ceil(time_batch.max(1))
    }

    /// The `i`-th contiguous block of `time_batch` time points. The last block
    /// is shorter when `time_batch` does not divide the sequence length.
    pub fn slice_batch(&self, i: usize, time_batch: usize) -> Result<BatchView<'_>> {
        if time_batch == 0 {
            return Err(Error::InvalidConfig("time batch must be >= 1".into()));
        }
        let count = self.n_batches(time_batch);
        if i >= count {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: count,
            });
        }
        let start = i * time_batch;
        let end = (start + time_batch).min(self.n_times());
        Ok(BatchView {
            index: i,
            start,
            values: self.values.slice(s![.., start..end, ..]),
        })
    }

    /// Keeps the instances at `indices`, in that order.
    pub fn select_instances(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n_instances()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.n_instances(),
            });
        }
        let values = self.values.select(Axis(0), indices);
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        let mut out = Dataset::new(values, labels)?;
        out.names.clone_from(&self.names);
        Ok(out)
    }

    /// Stacks two datasets along the instance axis.
    pub fn concat_instances(&self, other: &Dataset) -> Result<Dataset> {
        if self.n_times() != other.n_times() || self.n_vars() != other.n_vars() {
            return Err(Error::ShapeMismatch(format!(
                "cannot stack {:?} with {:?}",
                self.values.shape(),
                other.values.shape()
            )));
        }
        let values = ndarray::concatenate(Axis(0), &[self.values.view(), other.values.view()])
            .expect("shapes checked above");
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Dataset::new(values, labels)
    }
}

/// Checks that the tensor is non-empty and finite and that labels, if any,
/// cover every instance exactly once.
pub fn validate_dataset(ds: Dataset) -> Result<Dataset> {
    let shape = ds.values.shape();
    if shape.contains(&0) {
        return Err(Error::ShapeMismatch(format!(
            "dataset dimensions must all be >= 1, got {shape:?}"
        )));
    }
    if let Some(((instance, time, variable), _)) =
        ds.values.indexed_iter().find(|(_, v)| !v.is_finite())
    {
        return Err(Error::NonFinite {
            instance,
            time,
            variable,
        });
    }
    if let Some(labels) = &ds.labels {
        if labels.len() != ds.n_instances() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} instances",
                labels.len(),
                ds.n_instances()
            )));
        }
    }
    Ok(ds)
}

/// The values of every instance at one time point (`B × d`).
#[derive(Debug, Clone, Copy)]
pub struct TimePointSlice<'a>(ArrayView2<'a, f64>);

impl<'a> TimePointSlice<'a> {
    pub fn new(matrix: ArrayView2<'a, f64>) -> Self {
        TimePointSlice(matrix)
    }

    pub fn matrix(&self) -> ArrayView2<'a, f64> {
        self.0
    }

    pub fn n_instances(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.0.ncols()
    }
}

/// One time batch `X_i`, stored `B × T_actual × d`.
#[derive(Debug, Clone, Copy)]
pub struct BatchView<'a> {
    index: usize,
    start: usize,
    values: ArrayView3<'a, f64>,
}

impl<'a> BatchView<'a> {
    pub fn new(index: usize, start: usize, values: ArrayView3<'a, f64>) -> Self {
        BatchView {
            index,
            start,
            values,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// Global time indices covered by this batch.
    pub fn time_indices(&self) -> Range<usize> {
        self.start..self.start + self.len()
    }

    pub fn len(&self) -> usize {
        self.values.len_of(Axis(1))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> ArrayView3<'a, f64> {
        self.values
    }

    /// The `j`-th time point of the batch (local index).
    pub fn time_point(&self, j: usize) -> TimePointSlice<'a> {
        TimePointSlice(self.values.index_axis_move(Axis(1), j))
    }
}

/// The carried spectral history: orthonormal basis `q` (`d × k`), eigenvalue
/// estimates `lambda` and the number of time points absorbed so far.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionState {
    pub(crate) q: Array2<f64>,
    pub(crate) lambda: Array1<f64>,
    pub(crate) time_index: usize,
}

/// Orthonormality tolerance for [`ProjectionState`].
pub const ORTHONORMAL_TOL: f64 = 1e-8;

impl ProjectionState {
    pub fn new(q: Array2<f64>, lambda: Array1<f64>, time_index: usize) -> Result<Self> {
        let (d, k) = q.dim();
        if k == 0 || k > d {
            return Err(Error::BadDimensions { d, k });
        }
        if lambda.len() != k {
            return Err(Error::ShapeMismatch(format!(
                "lambda has {} entries for {k} components",
                lambda.len()
            )));
        }
        if lambda.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidConfig(
                "eigenvalue estimates must be finite and non-negative".into(),
            ));
        }
        let defect = crate::linalg::orthonormality_defect(q.view());
        if defect > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal(defect));
        }
        Ok(ProjectionState {
            q,
            lambda,
            time_index,
        })
    }

    pub fn q(&self) -> &Array2<f64> {
        &self.q
    }

    pub fn lambda(&self) -> &Array1<f64> {
        &self.lambda
    }

    pub fn time_index(&self) -> usize {
        self.time_index
    }

    pub fn n_vars(&self) -> usize {
        self.q.nrows()
    }

    pub fn n_components(&self) -> usize {
        self.q.ncols()
    }
}

/// Temporal pooling applied to each emitted batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// Keep every time step.
    #[default]
    None,
    /// Average each batch over its time axis down to one step.
    MeanOverBatch,
}

/// Scope of the `j` counter that weights history against new data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CounterMode {
    /// `j` counts every time point since the start of the sequence.
    #[default]
    Global,
    /// `j` restarts at every batch; the first point of each batch is a
    /// bootstrap step seeded with the carried basis.
    PerBatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Time points per batch (T).
    pub time_batch: usize,
    /// Retained principal components (K).
    pub components: usize,
    /// Subspace-distance threshold for the inner power iteration.
    pub tol: f64,
    pub max_inner_iters: usize,
    pub seed: u64,
    pub pooling: Pooling,
    pub counter: CounterMode,
}

impl RunConfig {
    pub const DEFAULT_TOL: f64 = 1e-6;
    pub const DEFAULT_MAX_INNER_ITERS: usize = 100;

    pub fn new(time_batch: usize, components: usize) -> Self {
        RunConfig {
            time_batch,
            components,
            tol: Self::DEFAULT_TOL,
            max_inner_iters: Self::DEFAULT_MAX_INNER_ITERS,
            seed: 0,
            pooling: Pooling::None,
            counter: CounterMode::Global,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_inner_iters(mut self, iters: usize) -> Self {
        self.max_inner_iters = iters;
        self
    }

    pub fn with_pooling(mut self, pooling: Pooling) -> Self {
        self.pooling = pooling;
        self
    }

    pub fn with_counter(mut self, counter: CounterMode) -> Self {
        self.counter = counter;
        self
    }

    /// Checks the configuration against a dataset with `d` variables and
    /// sequence length `n`.
    pub fn validate(&self, d: usize, n: usize) -> Result<()> {
        if self.components == 0 || self.components > d {
            return Err(Error::InvalidConfig(format!(
                "components K = {} violates 1 <= K <= d = {d}",
                self.components
            )));
        }
        if self.time_batch == 0 || self.time_batch > n {
            return Err(Error::InvalidConfig(format!(
                "time batch T = {} violates 1 <= T <= N = {n}",
                self.time_batch
            )));
        }
        if self.tol <= 0.0 || !self.tol.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive and finite, got {}",
                self.tol
            )));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::InvalidConfig("max_inner_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Eigenvalue estimates recorded at the end of one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSnapshot {
    pub batch: usize,
    pub lambda: Vec<f64>,
}

/// Output of a compression run: `B × N_out × k` projected values plus the
/// per-batch eigenvalue trajectory and convergence reports.
#[derive(Debug, Clone)]
pub struct CompactRepresentation {
    pub values: Array3<f64>,
    pub labels: Option<Vec<usize>>,
    pub eigen_trajectory: Vec<EigenSnapshot>,
    pub reports: Vec<BatchReport>,
    /// State after the last time point of the sequence.
    pub final_state: ProjectionState,
    pub config: RunConfig,
}

impl CompactRepresentation {
    pub fn n_instances(&self) -> usize {
        self.values.len_of(Axis(0))
    }

    pub fn n_times(&self) -> usize {
        self.values.len_of(Axis(1))
    }

    pub fn n_components(&self) -> usize {
        self.values.len_of(Axis(2))
    }

    /// Fraction of inner loops that met the tolerance.
    pub fn converged_fraction(&self) -> f64 {
        let (hit, total) = self
            .reports
            .iter()
            .flat_map(|b| &b.inner)
            .fold((0usize, 0usize), |(h, t), r| {
                (h + r.converged as usize, t + 1)
            });
        if total == 0 {
            1.0
        } else {
            hit as f64 / total as f64
        }
    }
}
