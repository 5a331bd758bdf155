//! Confusion matrices, cross-validation and the feature-count sweep.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{stratified_folds, Dataset};
use crate::dtree::FeatureRanking;
use crate::error::{Error, Result};
use crate::kstar::KStarModel;

pub const FAULT_CLASS: &str = "Fault";

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = class_names.len();
        if n == 0 {
            return Err(Error::InvalidArgument("confusion matrix needs at least one class".into()));
        }
        if counts.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument(format!(
                "confusion counts must be {n}x{n}"
            )));
        }
        Ok(ConfusionMatrix {
            class_names,
            counts,
        })
    }

    pub fn zeros(class_names: Vec<String>) -> Self {
        let n = class_names.len();
        ConfusionMatrix {
            class_names,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (row, o) in self.counts.iter_mut().zip(&other.counts) {
            for (c, v) in row.iter_mut().zip(o) {
                *c += v;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Overall accuracy in percent.
    pub fn accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::InvalidArgument("accuracy of an empty confusion matrix".into()));
        }
        Ok(100.0 * self.trace() as f64 / total as f64)
    }

    /// Recall per true class, in percent.
    pub fn per_class_recall(&self) -> Result<Vec<f64>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let sum: u64 = row.iter().sum();
                if sum == 0 {
                    Err(Error::InvalidArgument(format!(
                        "class {:?} has no test instances",
                        self.class_names[i]
                    )))
                } else {
                    Ok(100.0 * row[i] as f64 / sum as f64)
                }
            })
            .collect()
    }

    /// Merges every class except `normal_class` into a single fault class.
    /// The result is ordered [Fault, normal].
    pub fn fault_vs_normal_collapse(&self, normal_class: &str) -> Result<ConfusionMatrix> {
        let normal = self
            .class_names
            .iter()
            .position(|c| c == normal_class)
            .ok_or_else(|| Error::UnknownLabel(normal_class.to_string()))?;
        let bucket = |i: usize| usize::from(i == normal);
        let mut counts = vec![vec![0u64; 2]; 2];
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                counts[bucket(i)][bucket(j)] += c;
            }
        }
        ConfusionMatrix::new(vec![FAULT_CLASS.to_string(), normal_class.to_string()], counts)
    }

    /// Table layout: a header of predicted classes, one row per true class.
    pub fn render(&self) -> String {
        let width = self
            .class_names
            .iter()
            .map(String::len)
            .chain(self.counts.iter().flatten().map(|c| c.to_string().len()))
            .chain(std::iter::once("TESTING".len()))
            .max()
            .unwrap_or(0)
            + 2;
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "TESTING");
        for c in &self.class_names {
            let _ = write!(out, "{c:>width$}");
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            let _ = write!(out, "{name:<width$}");
            for c in row {
                let _ = write!(out, "{c:>width$}");
            }
            out.push('\n');
        }
        out
    }
}

/// How test predictions are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Stratified k-fold cross-validation.
    CrossValidation { folds: usize, seed: u64 },
    /// Train and test on the full dataset.
    Resubstitution,
}

/// Stratified k-fold cross-validation of K*. Folds run in parallel and are
/// summed in fold order.
pub fn cross_validate(d: &Dataset, k: usize, blend: f64, seed: u64) -> Result<ConfusionMatrix> {
    let folds = stratified_folds(d, k, seed)?;
    let per_fold = (0..k)
        .into_par_iter()
        .map(|fold| {
            let model = KStarModel::new(d.subset(&folds.train_indices(fold)), blend)?;
            let test_idx = folds.test_indices(fold);
            let test = d.subset(&test_idx);
            let mut cm = ConfusionMatrix::zeros(d.class_names().to_vec());
            for ((pred, _), &truth) in model.predict_dataset(&test)?.iter().zip(test.labels()) {
                cm.record(truth, *pred);
            }
            Ok(cm)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = ConfusionMatrix::zeros(d.class_names().to_vec());
    for cm in &per_fold {
        total.add(cm);
    }
    Ok(total)
}

pub fn resubstitute(d: &Dataset, blend: f64) -> Result<ConfusionMatrix> {
    let model = KStarModel::new(d.clone(), blend)?;
    let mut cm = ConfusionMatrix::zeros(d.class_names().to_vec());
    for ((pred, _), &truth) in model.predict_dataset(d)?.iter().zip(d.labels()) {
        cm.record(truth, *pred);
    }
    Ok(cm)
}

pub fn evaluate(d: &Dataset, protocol: Protocol, blend: f64) -> Result<ConfusionMatrix> {
    match protocol {
        Protocol::CrossValidation { folds, seed } => cross_validate(d, folds, blend, seed),
        Protocol::Resubstitution => resubstitute(d, blend),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub feature_count: usize,
    /// Percent.
    pub accuracy: f64,
    pub features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn render(&self) -> String {
        let mut out = String::from("No. of features  Kstar accuracy (%)\n");
        for p in &self.points {
            let _ = writeln!(out, "{:<16} {:.1}", p.feature_count, p.accuracy);
        }
        out
    }
}

/// Cross-validated accuracy on the top-m ranked features for m = 1..=|features|.
/// Every point uses the same fold seed.
pub fn feature_sweep(
    d: &Dataset,
    ranking: &FeatureRanking,
    k: usize,
    blend: f64,
    seed: u64,
) -> Result<SweepResult> {
    let names = ranking.names();
    let mut ranked: Vec<&str> = names.clone();
    ranked.sort_unstable();
    let mut schema: Vec<&str> = d.feature_names().iter().map(String::as_str).collect();
    schema.sort_unstable();
    if ranked != schema {
        return Err(Error::InvalidArgument(
            "ranking must list every dataset feature exactly once".into(),
        ));
    }
    let points = (1..=names.len())
        .into_par_iter()
        .map(|m| {
            let subset = &names[..m];
            let cm = cross_validate(&d.project(subset)?, k, blend, seed)?;
            Ok(SweepPoint {
                feature_count: m,
                accuracy: cm.accuracy()?,
                features: subset.iter().map(|s| s.to_string()).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { points })
}

/// Everything reported about one evaluated confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Option<Protocol>,
    pub blend: Option<f64>,
    pub features: Vec<String>,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub per_class_recall: Vec<f64>,
    pub collapse: Option<CollapseReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub fault_as_normal: u64,
    pub normal_as_fault: u64,
}

impl EvalReport {
    /// Builds a report; the fault/normal collapse is included when
    /// `normal_class` is one of the matrix classes.
    pub fn from_confusion(
        confusion: ConfusionMatrix,
        normal_class: &str,
        features: Vec<String>,
        protocol: Option<Protocol>,
        blend: Option<f64>,
    ) -> Result<Self> {
        let accuracy = confusion.accuracy()?;
        let per_class_recall = confusion.per_class_recall()?;
        let collapse = if confusion.class_names.iter().any(|c| c == normal_class) {
            let c = confusion.fault_vs_normal_collapse(normal_class)?;
            Some(CollapseReport {
                accuracy: c.accuracy()?,
                fault_as_normal: c.counts[0][1],
                normal_as_fault: c.counts[1][0],
                confusion: c,
            })
        } else {
            None
        };
        Ok(EvalReport {
            protocol,
            blend,
            features,
            confusion,
            accuracy,
            per_class_recall,
            collapse,
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        if !self.features.is_empty() {
            let _ = writeln!(out, "Features ({}): {}", self.features.len(), self.features.join(", "));
        }
        out.push_str(&self.confusion.render());
        let _ = writeln!(out, "Overall accuracy: {:.1}%", self.accuracy);
        out.push_str("Recall (%):");
        for (name, r) in self.confusion.class_names.iter().zip(&self.per_class_recall) {
            let _ = write!(out, " {name} {r:.1}");
        }
        out.push('\n');
        if let Some(c) = &self.collapse {
            out.push_str("Fault vs normal:\n");
            out.push_str(&c.confusion.render());
            let _ = writeln!(out, "Fault/normal accuracy: {:.1}%", c.accuracy);
        }
        out
    }
}
