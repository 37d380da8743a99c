//! Dataset readers and writers.
//!
//! * long-form CSV: `instance,time,v0,…,v{d−1}[,label]`, one row per
//!   (instance, time) pair;
//! * the equal-length subset of the UEA `.ts` format;
//! * compact representations as long-form CSV plus a JSON sidecar.
//!
//! Every writer goes through a temporary file in the destination directory
//! that is renamed into place only once the content is complete.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::streaming::BatchReport;
use crate::types::{CompactRepresentation, Dataset, EigenSnapshot, RunConfig};

/// Shortest decimal text that parses back to the identical `f64`.
pub fn format_f64(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// Writes `contents` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Long-form CSV
// ---------------------------------------------------------------------------

pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(BufReader::new(file))
}

pub fn read_csv_from<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    let fields: Vec<&str> = header.iter().collect();
    if fields.len() < 3 || fields[0] != "instance" || fields[1] != "time" {
        return Err(Error::ParseError {
            line: 1,
            column: 1,
            message: "header must start with `instance,time` followed by at least one value column"
                .into(),
        });
    }
    let has_label = fields.last() == Some(&"label");
    let d = fields.len() - 2 - has_label as usize;
    if d == 0 {
        return Err(Error::ParseError {
            line: 1,
            column: 1,
            message: "no value columns".into(),
        });
    }
    let names: Vec<String> = fields[2..2 + d].iter().map(|s| s.to_string()).collect();

    let mut cells: BTreeMap<(i64, i64), Vec<f64>> = BTreeMap::new();
    let mut labels: HashMap<i64, String> = HashMap::new();
    let mut label_order: Vec<String> = Vec::new();
    let mut instances = BTreeSet::new();
    let mut times = BTreeSet::new();

    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != fields.len() {
            return Err(Error::RaggedRow {
                line,
                expected: fields.len(),
                found: record.len(),
            });
        }
        let index = |col: usize| -> Result<i64> {
            record[col]
                .parse::<i64>()
                .ok()
                .filter(|v| *v >= 0)
                .ok_or_else(|| Error::ParseError {
                    line,
                    column: col + 1,
                    message: format!("expected a non-negative integer, found `{}`", &record[col]),
                })
        };
        let instance = index(0)?;
        let time = index(1)?;
        let mut row = Vec::with_capacity(d);
        for col in 2..2 + d {
            let v = record[col].parse::<f64>().map_err(|_| Error::ParseError {
                line,
                column: col + 1,
                message: format!("expected a number, found `{}`", &record[col]),
            })?;
            row.push(v);
        }
        if has_label {
            let label = record[fields.len() - 1].to_string();
            if label.is_empty() {
                return Err(Error::ParseError {
                    line,
                    column: fields.len(),
                    message: "empty label".into(),
                });
            }
            match labels.get(&instance) {
                Some(prev) if *prev != label => return Err(Error::InconsistentLabel(instance)),
                Some(_) => {}
                None => {
                    if !label_order.contains(&label) {
                        label_order.push(label.clone());
                    }
                    labels.insert(instance, label);
                }
            }
        }
        if cells.insert((instance, time), row).is_some() {
            return Err(Error::DuplicateCell {
                instance,
                time,
                line,
            });
        }
        instances.insert(instance);
        times.insert(time);
    }

    if cells.is_empty() {
        return Err(Error::ShapeMismatch("CSV contains no data rows".into()));
    }
    let instances: Vec<i64> = instances.into_iter().collect();
    let times: Vec<i64> = times.into_iter().collect();
    let mut values = Array3::zeros((instances.len(), times.len(), d));
    for (b, &inst) in instances.iter().enumerate() {
        for (n, &t) in times.iter().enumerate() {
            let row = cells.get(&(inst, t)).ok_or(Error::MissingCell {
                instance: inst,
                time: t,
            })?;
            for (v, &x) in row.iter().enumerate() {
                values[[b, n, v]] = x;
            }
        }
    }

    let labels = has_label.then(|| dense_labels(&instances, &labels, &label_order));
    Dataset::new(values, labels)?.with_names(names)
}

/// Integer labels are kept as-is; anything else is numbered by first appearance.
fn dense_labels(instances: &[i64], labels: &HashMap<i64, String>, order: &[String]) -> Vec<usize> {
    let numeric: Option<Vec<usize>> = instances
        .iter()
        .map(|i| labels[i].parse::<usize>().ok())
        .collect();
    numeric.unwrap_or_else(|| {
        let rank: HashMap<&str, usize> = order
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        instances.iter().map(|i| rank[labels[i].as_str()]).collect()
    })
}

fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    Error::ParseError {
        line,
        column: 0,
        message: e.to_string(),
    }
}

/// Long-form CSV text for a dataset; inverse of [`read_csv_from`].
pub fn dataset_to_csv(ds: &Dataset) -> String {
    let d = ds.n_vars();
    let mut out = String::from("instance,time");
    match ds.names() {
        Some(names) => names.iter().for_each(|n| write!(out, ",{n}").unwrap()),
        None => (0..d).for_each(|v| write!(out, ",v{v}").unwrap()),
    }
    if ds.labels().is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    let values = ds.values();
    for b in 0..ds.n_instances() {
        for n in 0..ds.n_times() {
            write!(out, "{b},{n}").unwrap();
            for v in 0..d {
                write!(out, ",{}", format_f64(values[[b, n, v]])).unwrap();
            }
            if let Some(labels) = ds.labels() {
                write!(out, ",{}", labels[b]).unwrap();
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), dataset_to_csv(ds).as_bytes())
}

// ---------------------------------------------------------------------------
// UEA .ts
// ---------------------------------------------------------------------------

pub fn read_ts(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ts_from(BufReader::new(file))
}

#[derive(Default)]
struct TsHeader {
    univariate: Option<bool>,
    dimensions: Option<usize>,
    equal_length: Option<bool>,
    series_length: Option<usize>,
    class_label: Option<bool>,
    class_names: Vec<String>,
}

fn ts_bool(value: Option<&str>, key: &str, line: u64) -> Result<bool> {
    match value.map(str::to_ascii_lowercase).as_deref() {
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        other => Err(Error::ParseError {
            line,
            column: 1,
            message: format!("`@{key}` expects true or false, found {other:?}"),
        }),
    }
}

fn ts_usize(value: Option<&str>, key: &str, line: u64) -> Result<usize> {
    value
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::ParseError {
            line,
            column: 1,
            message: format!("`@{key}` expects a positive integer"),
        })
}

pub fn read_ts_from<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut header = TsHeader::default();
    let mut in_data = false;
    let mut cases: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut case_labels: Vec<String> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line.map_err(|e| Error::io("<ts input>", e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !in_data {
            let Some(meta) = trimmed.strip_prefix('@') else {
                return Err(Error::ParseError {
                    line: line_no,
                    column: 1,
                    message: "expected a `@` metadata line before `@data`".into(),
                });
            };
            let mut parts = meta.split_whitespace();
            let key = parts.next().unwrap_or("").to_ascii_lowercase();
            let value = parts.next();
            match key.as_str() {
                "data" => {
                    finish_header(&header)?;
                    in_data = true;
                }
                "univariate" => header.univariate = Some(ts_bool(value, &key, line_no)?),
                "dimensions" => header.dimensions = Some(ts_usize(value, &key, line_no)?),
                "equallength" => header.equal_length = Some(ts_bool(value, &key, line_no)?),
                "serieslength" => header.series_length = Some(ts_usize(value, &key, line_no)?),
                "classlabel" => {
                    let flag = ts_bool(value, &key, line_no)?;
                    header.class_label = Some(flag);
                    header.class_names = parts.map(str::to_string).collect();
                }
                "timestamps" if ts_bool(value, &key, line_no)? => {
                    return Err(Error::UnsupportedFeature(
                        "time-stamped series (`@timeStamps true`)".into(),
                    ));
                }
                "targetlabel" if ts_bool(value, &key, line_no)? => {
                    return Err(Error::UnsupportedFeature(
                        "regression targets (`@targetLabel true`)".into(),
                    ));
                }
                // @problemName, @missing and anything unknown carry nothing we use
                _ => {}
            }
            continue;
        }

        let (dims, label) = parse_ts_case(&line, line_no, &header)?;
        if let Some(first) = cases.first() {
            if dims[0].len() != first[0].len() {
                return Err(Error::ParseError {
                    line: line_no,
                    column: 1,
                    message: format!(
                        "series length {} differs from earlier cases ({})",
                        dims[0].len(),
                        first[0].len()
                    ),
                });
            }
        }
        cases.push(dims);
        if let Some(l) = label {
            case_labels.push(l);
        }
    }

    if !in_data {
        return Err(Error::MetadataMissing("`@data` section".into()));
    }
    if cases.is_empty() {
        return Err(Error::MetadataMissing("no cases after `@data`".into()));
    }

    let (b, d, n) = (cases.len(), cases[0].len(), cases[0][0].len());
    let values = Array3::from_shape_fn((b, n, d), |(i, t, v)| cases[i][v][t]);
    let labels = header.class_label.unwrap_or(false).then(|| {
        let mut order: Vec<&str> = Vec::new();
        case_labels
            .iter()
            .map(|l| match order.iter().position(|o| o == l) {
                Some(i) => i,
                None => {
                    order.push(l);
                    order.len() - 1
                }
            })
            .collect()
    });
    Dataset::new(values, labels)
}

fn finish_header(h: &TsHeader) -> Result<()> {
    if h.univariate.is_none() && h.dimensions.is_none() {
        return Err(Error::MetadataMissing(
            "`@univariate` or `@dimensions`".into(),
        ));
    }
    if h.univariate == Some(true) && h.dimensions.is_some_and(|d| d != 1) {
        return Err(Error::ParseError {
            line: 0,
            column: 0,
            message: "`@univariate true` conflicts with `@dimensions`".into(),
        });
    }
    if h.equal_length == Some(false) {
        return Err(Error::UnsupportedFeature(
            "variable-length series (`@equalLength false`); only equal-length data can be compressed"
                .into(),
        ));
    }
    if h.equal_length == Some(true) && h.series_length.is_none() {
        return Err(Error::MetadataMissing("`@seriesLength`".into()));
    }
    if h.class_label.is_none() {
        return Err(Error::MetadataMissing("`@classLabel`".into()));
    }
    Ok(())
}

type TsCase = (Vec<Vec<f64>>, Option<String>);

fn parse_ts_case(line: &str, line_no: u64, h: &TsHeader) -> Result<TsCase> {
    // (byte offset, text) for each `:`-separated field
    let mut fields: Vec<(usize, &str)> = Vec::new();
    let mut start = 0;
    for part in line.split(':') {
        fields.push((start, part));
        start += part.len() + 1;
    }
    let err = |offset: usize, message: String| Error::ParseError {
        line: line_no,
        column: offset + 1,
        message,
    };

    let label = if h.class_label == Some(true) {
        let (offset, text) = fields.pop().expect("split yields at least one field");
        let text = text.trim();
        if fields.is_empty() {
            return Err(err(offset, "case has a label but no dimensions".into()));
        }
        if text.is_empty() {
            return Err(err(offset, "missing class label".into()));
        }
        if !h.class_names.is_empty() && !h.class_names.iter().any(|c| c == text) {
            return Err(err(
                offset,
                format!("class label `{text}` not declared in `@classLabel`"),
            ));
        }
        Some(text.to_string())
    } else {
        None
    };

    let expected_dims = match (h.dimensions, h.univariate) {
        (Some(d), _) => d,
        (None, Some(true)) => 1,
        (None, _) => fields.len(),
    };
    if fields.len() != expected_dims {
        return Err(err(
            0,
            format!(
                "expected {expected_dims} dimensions, found {}",
                fields.len()
            ),
        ));
    }

    let mut dims = Vec::with_capacity(fields.len());
    for (offset, text) in fields {
        let mut series = Vec::new();
        let mut pos = offset;
        for tok in text.split(',') {
            let value = tok.trim();
            if value == "?" {
                return Err(Error::UnsupportedFeature(format!(
                    "missing values (`?`) at line {line_no}, column {}",
                    pos + 1
                )));
            }
            let x: f64 = value
                .parse()
                .map_err(|_| err(pos, format!("expected a number, found `{value}`")))?;
            if !x.is_finite() {
                return Err(err(pos, format!("non-finite value `{value}`")));
            }
            series.push(x);
            pos += tok.len() + 1;
        }
        if let Some(len) = h.series_length {
            if series.len() != len {
                return Err(err(
                    offset,
                    format!(
                        "series has {} values, `@seriesLength` is {len}",
                        series.len()
                    ),
                ));
            }
        }
        dims.push(series);
    }
    if dims.iter().any(|s| s.len() != dims[0].len()) {
        return Err(err(0, "dimensions of one case differ in length".into()));
    }
    Ok((dims, label))
}

// ---------------------------------------------------------------------------
// Compact representation
// ---------------------------------------------------------------------------

/// JSON sidecar written next to a compact representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub config: RunConfig,
    pub eigen_trajectory: Vec<EigenSnapshot>,
    pub reports: Vec<BatchReport>,
    pub shape: [usize; 3],
    pub final_lambda: Vec<f64>,
}

/// `y.csv` → `y.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

pub fn compact_to_csv(rep: &CompactRepresentation) -> String {
    let k = rep.n_components();
    let mut out = String::from("instance,time");
    (0..k).for_each(|c| write!(out, ",c{c}").unwrap());
    if rep.labels.is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for b in 0..rep.n_instances() {
        for n in 0..rep.n_times() {
            write!(out, "{b},{n}").unwrap();
            for c in 0..k {
                write!(out, ",{}", format_f64(rep.values[[b, n, c]])).unwrap();
            }
            if let Some(labels) = &rep.labels {
                write!(out, ",{}", labels[b]).unwrap();
            }
            out.push('\n');
        }
    }
    out
}

pub fn sidecar(rep: &CompactRepresentation) -> Sidecar {
    Sidecar {
        config: rep.config.clone(),
        eigen_trajectory: rep.eigen_trajectory.clone(),
        reports: rep.reports.clone(),
        shape: [rep.n_instances(), rep.n_times(), rep.n_components()],
        final_lambda: rep.final_state.lambda().to_vec(),
    }
}

/// Writes `path` (long-form CSV) and its [`sidecar_path`]. Neither file
/// appears unless both could be fully written.
pub fn write_compact(rep: &CompactRepresentation, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let meta_path = sidecar_path(path);
    let csv = compact_to_csv(rep);
    let meta = serde_json::to_string_pretty(&sidecar(rep))
        .expect("sidecar contains only finite numbers and strings");

    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let stage = |bytes: &[u8], target: &Path| -> Result<tempfile::NamedTempFile> {
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(target, e))?;
        tmp.write_all(bytes).map_err(|e| Error::io(target, e))?;
        tmp.flush().map_err(|e| Error::io(target, e))?;
        Ok(tmp)
    };
    let csv_tmp = stage(csv.as_bytes(), path)?;
    let meta_tmp = stage(meta.as_bytes(), &meta_path)?;
    meta_tmp
        .persist(&meta_path)
        .map_err(|e| Error::io(&meta_path, e.error))?;
    csv_tmp
        .persist(path)
        .map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_sidecar(path: impl AsRef<Path>) -> Result<Sidecar> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::ParseError {
        line: e.line() as u64,
        column: e.column(),
        message: e.to_string(),
    })
}
