//! Feature tables: schema, projection, CSV persistence and stratified folds.

use std::collections::BTreeSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_NAMES};
use crate::ingest::Condition;

pub const LABEL_COLUMN: &str = "label";

/// Which class labels a reader accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSet {
    /// Any label string.
    Open,
    /// Only the five engine condition names.
    Conditions,
}

/// Labelled numeric instances over a named feature schema.
///
/// Values are stored row-major; `labels[i]` indexes `class_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    class_names: Vec<String>,
    values: Vec<f64>,
    labels: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct Instance<'a> {
    pub values: &'a [f64],
    pub label: usize,
}

impl Dataset {
    /// Builds a dataset with an explicit class list.
    pub fn new(
        feature_names: Vec<String>,
        class_names: Vec<String>,
        rows: Vec<(Vec<f64>, usize)>,
    ) -> Result<Self> {
        check_unique(&feature_names)?;
        check_unique(&class_names)?;
        let width = feature_names.len();
        let mut values = Vec::with_capacity(rows.len() * width);
        let mut labels = Vec::with_capacity(rows.len());
        for (i, (row, label)) in rows.into_iter().enumerate() {
            if row.len() != width {
                return Err(Error::MalformedRow {
                    row: i + 1,
                    message: format!("expected {width} values, got {}", row.len()),
                });
            }
            if label >= class_names.len() {
                return Err(Error::MalformedRow {
                    row: i + 1,
                    message: format!("label index {label} out of range"),
                });
            }
            values.extend(row);
            labels.push(label);
        }
        Ok(Dataset {
            feature_names,
            class_names,
            values,
            labels,
        })
    }

    /// Builds a dataset from string-labelled rows; classes are the sorted
    /// unique labels.
    pub fn from_labeled_rows<S: AsRef<str>>(
        feature_names: Vec<String>,
        rows: Vec<(Vec<f64>, S)>,
    ) -> Result<Self> {
        let classes: Vec<String> = rows
            .iter()
            .map(|(_, l)| l.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let rows = rows
            .into_iter()
            .map(|(v, l)| {
                let idx = classes.binary_search_by(|c| c.as_str().cmp(l.as_ref())).expect("label collected");
                (v, idx)
            })
            .collect();
        Dataset::new(feature_names, classes, rows)
    }

    /// Full 13-feature table from extracted vectors; every vector needs a label.
    pub fn from_feature_vectors(vectors: &[FeatureVector]) -> Result<Self> {
        let rows = vectors
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let label = f.condition.ok_or_else(|| Error::MalformedRow {
                    row: i + 1,
                    message: "feature vector has no condition label".into(),
                })?;
                Ok((f.values().to_vec(), label.as_str()))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::from_labeled_rows(FEATURE_NAMES.iter().map(|s| s.to_string()).collect(), rows)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.n_features();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn instance(&self, i: usize) -> Instance<'_> {
        Instance {
            values: self.row(i),
            label: self.labels[i],
        }
    }

    pub fn instances(&self) -> impl Iterator<Item = Instance<'_>> + '_ {
        (0..self.len()).map(|i| self.instance(i))
    }

    /// Value of feature `f` for instance `i`.
    pub fn value(&self, i: usize, f: usize) -> f64 {
        self.values[i * self.n_features() + f]
    }

    pub fn column(&self, f: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.value(i, f))
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Instances at `indices`, in that order, with the same schema.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(indices.len() * self.n_features());
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Dataset {
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            values,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Keeps only the named features, in the given order.
    pub fn project<S: AsRef<str>>(&self, keep: &[S]) -> Result<Dataset> {
        if keep.is_empty() {
            return Err(Error::InvalidArgument("projection needs at least one feature".into()));
        }
        let cols = keep
            .iter()
            .map(|k| self.feature_index(k.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let names: Vec<String> = cols.iter().map(|&c| self.feature_names[c].clone()).collect();
        check_unique(&names)?;
        let mut values = Vec::with_capacity(self.len() * cols.len());
        for i in 0..self.len() {
            let row = self.row(i);
            values.extend(cols.iter().map(|&c| row[c]));
        }
        Ok(Dataset {
            feature_names: names,
            class_names: self.class_names.clone(),
            values,
            labels: self.labels.clone(),
        })
    }
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(Error::DuplicateFeature(n.clone()));
        }
    }
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>, labels: LabelSet) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset_from(file, labels)
}

/// Parses the comma-separated feature table. The last header column must be
/// `label`; every other column is a numeric feature.
pub fn read_dataset_from<R: Read>(reader: R, labels: LabelSet) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let mut names: Vec<String> = header.iter().map(str::to_string).collect();
    match names.pop() {
        Some(last) if last == LABEL_COLUMN => {}
        _ => {
            return Err(Error::MalformedHeader(format!(
                "last column must be {LABEL_COLUMN:?}"
            )))
        }
    }
    if names.is_empty() {
        return Err(Error::MalformedHeader("no feature columns".into()));
    }
    check_unique(&names)?;

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        if record.len() != names.len() + 1 {
            return Err(Error::MalformedRow {
                row: row_no,
                message: format!("expected {} fields, got {}", names.len() + 1, record.len()),
            });
        }
        let values = record
            .iter()
            .take(names.len())
            .zip(&names)
            .map(|(field, name)| {
                field.parse::<f64>().map_err(|_| Error::MalformedRow {
                    row: row_no,
                    message: format!("column {name:?}: cannot parse {field:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let label = record[names.len()].to_string();
        if labels == LabelSet::Conditions {
            label.parse::<Condition>()?;
        }
        rows.push((values, label));
    }
    Dataset::from_labeled_rows(names, rows)
}

pub fn write_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_to(d, file)
}

pub fn write_dataset_to<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header: Vec<&str> = d.feature_names.iter().map(String::as_str).collect();
    header.push(LABEL_COLUMN);
    wtr.write_record(&header)?;
    for inst in d.instances() {
        let mut record: Vec<String> = inst.values.iter().map(|v| v.to_string()).collect();
        record.push(d.class_names[inst.label].clone());
        wtr.write_record(&record)?;
    }
    wtr.flush().map_err(|e| Error::io("<dataset>", e))?;
    Ok(())
}

/// Fold index per instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    k: usize,
    assignment: Vec<usize>,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }
}

/// Shuffles each class with a seeded permutation and deals it round-robin
/// over `k` folds.
pub fn stratified_folds(d: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    let counts = d.class_counts();
    let max = counts.iter().copied().filter(|&c| c > 0).min().unwrap_or(0);
    if k < 2 || k > max {
        return Err(Error::FoldCount { k, max });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; d.len()];
    for class in 0..d.n_classes() {
        let mut members: Vec<usize> = (0..d.len()).filter(|&i| d.labels[i] == class).collect();
        members.shuffle(&mut rng);
        for (pos, idx) in members.into_iter().enumerate() {
            assignment[idx] = pos % k;
        }
    }
    Ok(FoldAssignment { k, assignment })
}
