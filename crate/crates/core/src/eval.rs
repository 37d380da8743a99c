//! Desk-scale evaluation: planted-covariance synthetic data, a 1-NN
//! classification proxy, `(T, K)` parameter sweeps and wall-clock scaling.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::{Array1, Array2, Array3, ArrayView3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::format_f64;
use crate::linalg::random_orthonormal;
use crate::oracle::{flatten_rows, reconstruction_error};
use crate::streaming::compress;
use crate::types::{CompactRepresentation, Dataset, RunConfig};

/// Switch to a second eigenbasis from time `change_point` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub change_point: usize,
    pub basis_seed: u64,
}

/// Rows at every time point are drawn from `N(V·offset_c, V diag(λ) Vᵀ)`,
/// where `V` is a random rotation and `c = instance % classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub instances: usize,
    pub length: usize,
    pub vars: usize,
    /// Non-increasing, strictly positive, one per variable.
    pub eigenvalues: Vec<f64>,
    pub rotation_seed: u64,
    pub drift: Option<Drift>,
    /// Per-class mean, in the rotated (latent) coordinates.
    pub class_offsets: Option<Vec<Vec<f64>>>,
}

impl SyntheticSpec {
    pub fn stationary(
        instances: usize,
        length: usize,
        eigenvalues: Vec<f64>,
        rotation_seed: u64,
    ) -> Self {
        SyntheticSpec {
            instances,
            length,
            vars: eigenvalues.len(),
            eigenvalues,
            rotation_seed,
            drift: None,
            class_offsets: None,
        }
    }

    pub fn with_drift(mut self, change_point: usize, basis_seed: u64) -> Self {
        self.drift = Some(Drift {
            change_point,
            basis_seed,
        });
        self
    }

    pub fn with_class_offsets(mut self, offsets: Vec<Vec<f64>>) -> Self {
        self.class_offsets = Some(offsets);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.instances == 0 || self.length == 0 || self.vars == 0 {
            return Err(Error::InvalidConfig(
                "synthetic B, N and d must be >= 1".into(),
            ));
        }
        if self.eigenvalues.len() != self.vars {
            return Err(Error::InvalidConfig(format!(
                "{} eigenvalues for {} variables",
                self.eigenvalues.len(),
                self.vars
            )));
        }
        if self.eigenvalues.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
            return Err(Error::InvalidConfig(
                "eigenvalues must be positive and finite".into(),
            ));
        }
        if self.eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidConfig(
                "eigenvalues must be in descending order".into(),
            ));
        }
        if let Some(drift) = &self.drift {
            if drift.change_point == 0 || drift.change_point >= self.length {
                return Err(Error::InvalidConfig(format!(
                    "change point {} must lie strictly inside (0, {})",
                    drift.change_point, self.length
                )));
            }
        }
        if let Some(offsets) = &self.class_offsets {
            if offsets.is_empty() || offsets.iter().any(|o| o.len() != self.vars) {
                return Err(Error::InvalidConfig(format!(
                    "class offsets must be non-empty vectors of length {}",
                    self.vars
                )));
            }
        }
        Ok(())
    }

    /// The planted rotation in effect before any drift.
    pub fn basis(&self) -> Result<Array2<f64>> {
        rotation(self.rotation_seed, self.vars)
    }

    /// The planted rotation after the change point, if any.
    pub fn drift_basis(&self) -> Result<Option<Array2<f64>>> {
        self.drift
            .as_ref()
            .map(|d| rotation(d.basis_seed, self.vars))
            .transpose()
    }
}

fn rotation(seed: u64, d: usize) -> Result<Array2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_orthonormal(&mut rng, d, d)
}

/// Named generator settings used by the CLI; all randomness derives from `seed`.
pub fn preset(name: &str, seed: u64) -> Result<SyntheticSpec> {
    let rot = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5EED;
    let spec = match name {
        "stationary" => SyntheticSpec::stationary(64, 200, vec![5.0, 3.0, 1.0, 0.5, 0.2, 0.1], rot),
        "stationary-2class" => {
            let mut a = vec![0.0; 8];
            a[0] = 1.5;
            let b: Vec<f64> = a.iter().map(|x| -x).collect();
            SyntheticSpec::stationary(40, 100, vec![4.0, 2.0, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1], rot)
                .with_class_offsets(vec![a, b])
        }
        "toy" => SyntheticSpec::stationary(8, 16, vec![2.0, 1.0, 0.25], rot)
            .with_class_offsets(vec![vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]]),
        "drift" => SyntheticSpec::stationary(64, 200, vec![5.0, 3.0, 1.0, 0.5, 0.2, 0.1], rot)
            .with_drift(100, rot ^ 0xD21F7),
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown preset `{other}` (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(spec)
}

pub const PRESETS: [&str; 4] = ["stationary", "stationary-2class", "drift", "toy"];

/// Draws a dataset from `spec`; identical `(spec, seed)` give identical tensors.
pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let (b, n, d) = (spec.instances, spec.length, spec.vars);
    let before = spec.basis()?;
    let after = spec.drift_basis()?;
    let scales: Array1<f64> = spec.eigenvalues.iter().map(|l| l.sqrt()).collect();
    let classes = spec.class_offsets.as_ref().map_or(1, Vec::len);
    let offsets: Vec<Array1<f64>> = match &spec.class_offsets {
        Some(o) => o.iter().map(|v| Array1::from(v.clone())).collect(),
        None => vec![Array1::zeros(d)],
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Array3::zeros((b, n, d));
    for i in 0..b {
        let offset = &offsets[i % classes];
        for t in 0..n {
            let basis = match (&after, &spec.drift) {
                (Some(v2), Some(drift)) if t >= drift.change_point => v2,
                _ => &before,
            };
            let z: Array1<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let latent = &z * &scales + offset;
            values
                .index_axis_mut(Axis(0), i)
                .index_axis_mut(Axis(0), t)
                .assign(&basis.dot(&latent));
        }
    }
    let labels = spec
        .class_offsets
        .as_ref()
        .map(|_| (0..b).map(|i| i % classes).collect());
    Dataset::new(values, labels)
}

/// Subtracts each variable's mean over all rows.
pub fn center_variables(ds: &Dataset) -> Result<Dataset> {
    let mean = flatten_rows(ds)
        .mean_axis(Axis(0))
        .expect("dataset is non-empty");
    let mut values = ds.values().to_owned();
    values -= &mean;
    let out = Dataset::new(values, ds.labels().map(<[usize]>::to_vec))?;
    match ds.names() {
        Some(names) => out.with_names(names.to_vec()),
        None => Ok(out),
    }
}

/// Anything that offers an `instances × time × features` tensor with labels.
pub trait LabeledSeries {
    fn series(&self) -> ArrayView3<'_, f64>;
    fn class_labels(&self) -> Option<&[usize]>;
}

impl LabeledSeries for Dataset {
    fn series(&self) -> ArrayView3<'_, f64> {
        self.values()
    }

    fn class_labels(&self) -> Option<&[usize]> {
        self.labels()
    }
}

impl LabeledSeries for CompactRepresentation {
    fn series(&self) -> ArrayView3<'_, f64> {
        self.values.view()
    }

    fn class_labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }
}

/// k-NN accuracy with Euclidean distance on flattened `(time × feature)`
/// vectors. Votes are majority; ties go to the class of the nearest tied
/// neighbour, and equal distances to the lower training index.
pub fn knn_proxy<A: LabeledSeries, B: LabeledSeries>(
    train: &A,
    test: &B,
    k_neighbors: usize,
) -> Result<f64> {
    let train_idx: Vec<usize> = (0..train.series().len_of(Axis(0))).collect();
    let test_idx: Vec<usize> = (0..test.series().len_of(Axis(0))).collect();
    knn_indexed(train, &train_idx, test, &test_idx, k_neighbors)
}

/// k-NN accuracy between two index subsets of one labelled tensor.
pub fn holdout_accuracy<A: LabeledSeries>(
    data: &A,
    train_idx: &[usize],
    test_idx: &[usize],
    k_neighbors: usize,
) -> Result<f64> {
    knn_indexed(data, train_idx, data, test_idx, k_neighbors)
}

fn knn_indexed<A: LabeledSeries, B: LabeledSeries>(
    train: &A,
    train_idx: &[usize],
    test: &B,
    test_idx: &[usize],
    k_neighbors: usize,
) -> Result<f64> {
    let (tr, te) = (train.series(), test.series());
    let (tr_labels, te_labels) = match (train.class_labels(), test.class_labels()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Unlabeled),
    };
    let width = |s: &ArrayView3<'_, f64>| s.len_of(Axis(1)) * s.len_of(Axis(2));
    if width(&tr) != width(&te) {
        return Err(Error::DimensionMismatch {
            train: width(&tr),
            test: width(&te),
        });
    }
    if train_idx.is_empty() || test_idx.is_empty() || k_neighbors == 0 {
        return Err(Error::InvalidConfig(
            "k-NN needs at least one training and one test instance and k >= 1".into(),
        ));
    }
    let k = k_neighbors.min(train_idx.len());

    let mut correct = 0usize;
    for &t in test_idx {
        let query = te.index_axis(Axis(0), t);
        let mut dists: Vec<(f64, usize)> = train_idx
            .iter()
            .map(|&r| {
                let cand = tr.index_axis(Axis(0), r);
                let dist = query
                    .iter()
                    .zip(cand.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                (dist, r)
            })
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let neighbours = &dists[..k];

        let mut votes: Vec<(usize, usize, usize)> = Vec::new(); // (label, count, first rank)
        for (rank, &(_, r)) in neighbours.iter().enumerate() {
            let label = tr_labels[r];
            match votes.iter_mut().find(|v| v.0 == label) {
                Some(v) => v.1 += 1,
                None => votes.push((label, 1, rank)),
            }
        }
        let predicted = votes
            .iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
            .map(|v| v.0)
            .expect("k >= 1");
        correct += (predicted == te_labels[t]) as usize;
    }
    Ok(correct as f64 / test_idx.len() as f64)
}

/// One `(T, K)` cell of a parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub time_batch: usize,
    pub components: usize,
    /// 1-NN accuracy on the split from [`stratified_halves`].
    pub accuracy: Option<f64>,
    pub reconstruction_error: Option<f64>,
    pub wall_time_s: f64,
    pub converged_fraction: f64,
    /// Non-convergence, rank deficiency or non-finite output.
    pub unstable: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cell(&self, time_batch: usize, components: usize) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.time_batch == time_batch && c.components == components)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "time_batch,components,accuracy,reconstruction_error,wall_time_s,converged_fraction,unstable,error\n",
        );
        let opt = |x: Option<f64>| x.map(format_f64).unwrap_or_default();
        for c in &self.cells {
            let error = c
                .error
                .as_deref()
                .map(|e| format!("\"{}\"", e.replace('"', "\"\"")))
                .unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.time_batch,
                c.components,
                opt(c.accuracy),
                opt(c.reconstruction_error),
                format_f64(c.wall_time_s),
                format_f64(c.converged_fraction),
                c.unstable,
                error
            )
            .unwrap();
        }
        out
    }
}

/// Splits instance indices so that, within each class, members alternate
/// between the training half (first, third, ...) and the test half.
pub fn stratified_halves(labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut seen = std::collections::HashMap::new();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, label) in labels.iter().enumerate() {
        let count = seen.entry(label).or_insert(0usize);
        if *count % 2 == 0 {
            train.push(i);
        } else {
            test.push(i);
        }
        *count += 1;
    }
    (train, test)
}

fn run_cell(ds: &Dataset, template: &RunConfig, time_batch: usize, components: usize) -> SweepCell {
    let config = RunConfig {
        time_batch,
        components,
        ..template.clone()
    };
    let start = Instant::now();
    let result = compress(ds, &config);
    let wall_time_s = start.elapsed().as_secs_f64();

    let mut cell = SweepCell {
        time_batch,
        components,
        accuracy: None,
        reconstruction_error: None,
        wall_time_s,
        converged_fraction: 0.0,
        unstable: false,
        error: None,
    };
    match result {
        Ok(rep) => {
            cell.converged_fraction = rep.converged_fraction();
            cell.unstable = cell.converged_fraction < 1.0;
            cell.reconstruction_error = reconstruction_error(ds, rep.final_state.q().view()).ok();
            if let Some(labels) = &rep.labels {
                let (train, test) = stratified_halves(labels);
                cell.accuracy = holdout_accuracy(&rep, &train, &test, 1).ok();
            }
        }
        Err(e) => {
            cell.unstable = e.is_numerical() || matches!(e, Error::NonFinite { .. });
            cell.error = Some(e.to_string());
        }
    }
    cell
}

/// Runs compress + 1-NN + reconstruction error for every `(T, K)` pair,
/// `jobs` cells at a time. Per-cell failures are recorded, not raised.
pub fn sweep(
    ds: &Dataset,
    t_values: &[usize],
    k_values: &[usize],
    template: &RunConfig,
    jobs: usize,
) -> Result<SweepResult> {
    if let Some(&k) = k_values.iter().find(|&&k| k > ds.n_vars()) {
        return Err(Error::InvalidConfig(format!(
            "components K = {k} violates K <= d = {}",
            ds.n_vars()
        )));
    }
    let grid: Vec<(usize, usize)> = t_values
        .iter()
        .flat_map(|&t| k_values.iter().map(move |&k| (t, k)))
        .collect();
    let cells = if jobs <= 1 {
        grid.iter()
            .map(|&(t, k)| run_cell(ds, template, t, k))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
        pool.install(|| {
            grid.par_iter()
                .map(|&(t, k)| run_cell(ds, template, t, k))
                .collect()
        })
    };
    Ok(SweepResult { cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub length: usize,
    pub median_s: f64,
    pub runs_s: Vec<f64>,
}

/// Median wall time of `compress` over at least three repeats, for `base`
/// regenerated at each sequence length. Data generation is not timed.
/// Repeats are interleaved across lengths so slow phases of a shared machine
/// hit every length alike.
pub fn bench_scaling(
    base: &SyntheticSpec,
    lengths: &[usize],
    config: &RunConfig,
    repeats: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let repeats = repeats.max(3);
    let datasets = lengths
        .iter()
        .map(|&length| {
            let ds = generate(
                &SyntheticSpec {
                    length,
                    ..base.clone()
                },
                seed,
            )?;
            // warm-up
            compress(&ds, config)?;
            Ok(ds)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut runs: Vec<Vec<f64>> = vec![Vec::with_capacity(repeats); lengths.len()];
    for _ in 0..repeats {
        for (ds, times) in datasets.iter().zip(runs.iter_mut()) {
            let start = Instant::now();
            let rep = compress(ds, config)?;
            times.push(start.elapsed().as_secs_f64());
            std::hint::black_box(rep);
        }
    }
    Ok(lengths
        .iter()
        .zip(runs)
        .map(|(&length, runs_s)| {
            let mut sorted = runs_s.clone();
            sorted.sort_by(f64::total_cmp);
            BenchRow {
                length,
                median_s: sorted[sorted.len() / 2],
                runs_s,
            }
        })
        .collect())
}

pub fn bench_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("length,median_s,runs\n");
    for r in rows {
        let runs: Vec<String> = r.runs_s.iter().map(|x| format_f64(*x)).collect();
        writeln!(
            out,
            "{},{},{}",
            r.length,
            format_f64(r.median_s),
            runs.join(";")
        )
        .unwrap();
    }
    out
}
