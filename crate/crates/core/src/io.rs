//! File formats: dataset CSV (wide or long), labels CSV, criterion table CSV
//! and fitted-model JSON. Every float is written with 17 significant digits.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::de::Deserializer;
use serde::ser::{Error as _, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::basis::SampleGrid;
use crate::cluster::Partition;
use crate::error::{Error, Result};
use crate::gmm::{FitReport, GmmParams};
use crate::model_select::SelectionTable;
use crate::projection::{FunctionalDataset, Layout, Series};

/// Scientific notation with 17 significant digits; parses back to the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A float that serializes to JSON with 17 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sig17(pub f64);

impl Serialize for Sig17 {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(S::Error::custom("cannot serialize a non-finite float"));
        }
        RawValue::from_string(fmt_f64(self.0))
            .map_err(S::Error::custom)?
            .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Sig17 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        f64::deserialize(deserializer).map(Sig17)
    }
}

fn parse_error(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_number(field: &str, line: u64, col: usize) -> Result<f64> {
    let value: f64 = field
        .parse()
        .map_err(|_| parse_error(line, format!("column {}: '{field}' is not a number", col + 1)))?;
    if !value.is_finite() {
        return Err(Error::data_at(line as usize, Some(col + 1), "value is not finite"));
    }
    Ok(value)
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(None)
        .from_reader(input)
}

fn read_records<R: Read>(input: R) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut records = Vec::new();
    for (k, rec) in csv_reader(input).records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(k as u64 + 1, |p| p.line());
            parse_error(line, e.to_string())
        })?;
        let line = rec.position().map_or(k as u64 + 1, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        records.push((line, rec));
    }
    Ok(records)
}

/// Reads a dataset, choosing the layout from the header: `t,<t_1>,...` for
/// the wide layout, `id,t,z` for the long layout.
pub fn read_dataset<R: Read>(input: R) -> Result<FunctionalDataset> {
    let records = read_records(input)?;
    let Some((header_line, header)) = records.first() else {
        return Err(parse_error(1, "dataset file is empty"));
    };
    let first = header.get(0).unwrap_or("").to_ascii_lowercase();
    let fields: Vec<String> = header.iter().map(str::to_ascii_lowercase).collect();
    if fields == ["id", "t", "z"] {
        read_long(&records[1..])
    } else if first == "t" {
        read_wide(*header_line, header, &records[1..])
    } else {
        Err(parse_error(
            *header_line,
            "unrecognized header: expected 't,<t_1>,...,<t_m>' or 'id,t,z'",
        ))
    }
}

fn read_wide(
    header_line: u64,
    header: &csv::StringRecord,
    rows: &[(u64, csv::StringRecord)],
) -> Result<FunctionalDataset> {
    let points = header
        .iter()
        .enumerate()
        .skip(1)
        .map(|(col, f)| parse_number(f, header_line, col))
        .collect::<Result<Vec<_>>>()?;
    let grid = SampleGrid::new(points).map_err(|e| parse_error(header_line, e.to_string()))?;
    let m = grid.len();
    if rows.is_empty() {
        return Err(parse_error(header_line, "dataset has a header but no rows"));
    }
    let mut ids = Vec::with_capacity(rows.len());
    let mut values = DMatrix::zeros(rows.len(), m);
    for (i, (line, rec)) in rows.iter().enumerate() {
        if rec.len() != m + 1 {
            return Err(parse_error(
                *line,
                format!("expected {} fields, found {}", m + 1, rec.len()),
            ));
        }
        ids.push(rec[0].to_string());
        for j in 0..m {
            values[(i, j)] = parse_number(&rec[j + 1], *line, j + 1)?;
        }
    }
    FunctionalDataset::rectangular_with_ids(ids, grid, values)
}

fn read_long(rows: &[(u64, csv::StringRecord)]) -> Result<FunctionalDataset> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut ids: Vec<String> = Vec::new();
    let mut groups: Vec<Vec<(f64, f64, u64)>> = Vec::new();
    for (line, rec) in rows {
        if rec.len() != 3 {
            return Err(parse_error(*line, format!("expected 3 fields, found {}", rec.len())));
        }
        let t = parse_number(&rec[1], *line, 1)?;
        let z = parse_number(&rec[2], *line, 2)?;
        let slot = *index.entry(rec[0].to_string()).or_insert_with(|| {
            ids.push(rec[0].to_string());
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[slot].push((t, z, *line));
    }
    if groups.is_empty() {
        return Err(parse_error(1, "dataset has a header but no rows"));
    }
    let series = groups
        .into_iter()
        .map(|mut obs| {
            obs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if let Some(w) = obs.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(parse_error(w[1].2, format!("repeated time {} within a series", w[1].0)));
            }
            Ok(Series {
                grid: SampleGrid::new(obs.iter().map(|o| o.0).collect())?,
                values: DVector::from_iterator(obs.len(), obs.iter().map(|o| o.1)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FunctionalDataset::irregular_with_ids(ids, series)
}

pub fn write_dataset(dataset: &FunctionalDataset) -> String {
    let mut out = String::new();
    match dataset.layout() {
        Layout::Rectangular { grid, values } => {
            out.push('t');
            for &t in grid.points() {
                let _ = write!(out, ",{}", fmt_f64(t));
            }
            out.push('\n');
            for (i, id) in dataset.ids().iter().enumerate() {
                out.push_str(id);
                for j in 0..values.ncols() {
                    let _ = write!(out, ",{}", fmt_f64(values[(i, j)]));
                }
                out.push('\n');
            }
        }
        Layout::Irregular(series) => {
            out.push_str("id,t,z\n");
            for (id, s) in dataset.ids().iter().zip(series) {
                for (t, z) in s.grid.points().iter().zip(s.values.iter()) {
                    let _ = writeln!(out, "{id},{},{}", fmt_f64(*t), fmt_f64(*z));
                }
            }
        }
    }
    out
}

pub fn write_labels(partition: &Partition) -> String {
    let mut out = String::from("label\n");
    for l in partition.labels() {
        let _ = writeln!(out, "{l}");
    }
    out
}

pub fn read_labels<R: Read>(input: R) -> Result<Partition> {
    let records = read_records(input)?;
    let Some((line, header)) = records.first() else {
        return Err(parse_error(1, "labels file is empty"));
    };
    if header.len() != 1 || !header[0].eq_ignore_ascii_case("label") {
        return Err(parse_error(*line, "expected the header 'label'"));
    }
    let mut labels = Vec::with_capacity(records.len() - 1);
    for (line, rec) in &records[1..] {
        if rec.len() != 1 {
            return Err(parse_error(*line, format!("expected 1 field, found {}", rec.len())));
        }
        let label: usize = rec[0]
            .parse()
            .map_err(|_| parse_error(*line, format!("'{}' is not a positive integer", &rec[0])))?;
        if label == 0 {
            return Err(parse_error(*line, "labels are 1-based"));
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(parse_error(*line, "labels file has no rows"));
    }
    Partition::from_labels(labels)
}

pub fn write_criterion_table(table: &SelectionTable) -> String {
    let mut out = String::from("g,loglik,penalty,criterion,chosen\n");
    for row in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.g,
            fmt_f64(row.loglik),
            row.penalty,
            fmt_f64(row.criterion),
            u8::from(row.g == table.chosen_g)
        );
    }
    out
}

/// JSON form of a fitted mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub g: usize,
    pub d: usize,
    pub weights: Vec<Sig17>,
    pub means: Vec<Vec<Sig17>>,
    pub covariances: Vec<Vec<Vec<Sig17>>>,
    pub loglik: Sig17,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

impl ModelFile {
    pub fn from_report(report: &FitReport) -> Self {
        let p = &report.params;
        let d = p.dim();
        Self {
            g: p.g(),
            d,
            weights: p.weights().iter().map(|&w| Sig17(w)).collect(),
            means: p.means().iter().map(|m| m.iter().map(|&v| Sig17(v)).collect()).collect(),
            covariances: p
                .covariances()
                .iter()
                .map(|c| (0..d).map(|r| (0..d).map(|k| Sig17(c[(r, k)])).collect()).collect())
                .collect(),
            loglik: Sig17(report.loglik()),
            iterations: report.iterations,
            converged: report.converged,
            seed: report.seed,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn params(&self) -> Result<GmmParams> {
        let d = self.d;
        let means = self
            .means
            .iter()
            .map(|m| DVector::from_iterator(m.len(), m.iter().map(|v| v.0)))
            .collect();
        let covariances = self
            .covariances
            .iter()
            .map(|c| {
                if c.len() != d || c.iter().any(|r| r.len() != d) {
                    return Err(Error::Config(format!("covariances must be {d} x {d}")));
                }
                Ok(DMatrix::from_fn(d, d, |r, k| c[r][k].0))
            })
            .collect::<Result<Vec<_>>>()?;
        GmmParams::new(self.weights.iter().map(|w| w.0).collect(), means, covariances)
    }
}
