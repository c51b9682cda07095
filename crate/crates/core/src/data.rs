//! Datasets, CSV ingestion, train/validation/test splitting and a seeded
//! Gaussian-cluster generator.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Label;

/// Row-major feature matrix with one integer label per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n_features: usize,
    features: Vec<f64>,
    labels: Vec<Label>,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(
        n_features: usize,
        features: Vec<f64>,
        labels: Vec<Label>,
        feature_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if features.len() != n_features * labels.len() {
            return Err(Error::FeatureMismatch {
                expected: n_features * labels.len(),
                found: features.len(),
            });
        }
        if let Some(names) = &feature_names {
            if names.len() != n_features {
                return Err(Error::FeatureMismatch {
                    expected: n_features,
                    found: names.len(),
                });
            }
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            let row = pos / n_features.max(1);
            return Err(Error::Parse {
                row,
                column: (pos % n_features.max(1)).to_string(),
                message: "non-finite feature value".into(),
            });
        }
        Ok(Self {
            n_features,
            features,
            labels,
            feature_names,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_features) {
            return Err(Error::FeatureMismatch {
                expected: n_features,
                found: bad.len(),
            });
        }
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch(labels.len(), rows.len()));
        }
        Self::new(n_features, rows.concat(), labels, None)
    }

    pub fn empty(n_features: usize) -> Self {
        Self {
            n_features,
            features: Vec::new(),
            labels: Vec::new(),
            feature_names: None,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows()).map(|i| self.row(i))
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Feature names, falling back to `f0, f1, ...`.
    pub fn names_or_default(&self) -> Vec<String> {
        match &self.feature_names {
            Some(n) => n.clone(),
            None => (0..self.n_features).map(|i| format!("f{i}")).collect(),
        }
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features {
            return Err(Error::FeatureMismatch {
                expected: self.n_features,
                found: names.len(),
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    /// Distinct labels in order of first appearance.
    pub fn classes(&self) -> Vec<Label> {
        let mut seen = Vec::new();
        for &l in &self.labels {
            if !seen.contains(&l) {
                seen.push(l);
            }
        }
        seen
    }

    pub fn class_counts(&self) -> BTreeMap<Label, usize> {
        let mut counts = BTreeMap::new();
        for &l in &self.labels {
            *counts.entry(l).or_insert(0) += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            n_features: self.n_features,
            features,
            labels,
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn filter(&self, mut keep: impl FnMut(Label) -> bool) -> Dataset {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| keep(self.labels[i])).collect();
        self.subset(&idx)
    }

    pub fn map_labels(mut self, mut f: impl FnMut(Label) -> Label) -> Dataset {
        for l in &mut self.labels {
            *l = f(*l);
        }
        self
    }

    pub fn relabel_all(self, label: Label) -> Dataset {
        self.map_labels(|_| label)
    }

    pub fn push_row(&mut self, row: &[f64], label: Label) -> Result<()> {
        if row.len() != self.n_features {
            return Err(Error::FeatureMismatch {
                expected: self.n_features,
                found: row.len(),
            });
        }
        self.features.extend_from_slice(row);
        self.labels.push(label);
        Ok(())
    }

    /// Writes the dataset as CSV with a trailing `label` column.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.names_or_default();
        header.push("label".into());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| format!("{v}")).collect();
            rec.push(self.labels[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Which CSV column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl Default for LabelColumn {
    fn default() -> Self {
        LabelColumn::Name("label".into())
    }
}

impl From<&str> for LabelColumn {
    fn from(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        }
    }
}

/// Reads a headed CSV file; every column other than the label column must be
/// numeric.
pub fn load_csv(path: impl AsRef<Path>, label_column: &LabelColumn) -> Result<Dataset> {
    read_csv(path.as_ref(), label_column, true).map(|(ds, _)| ds)
}

/// Like [`load_csv`], but a missing label column is allowed: every column is
/// then a feature, all labels are 0 and the flag is `false`.
pub fn load_csv_unlabeled(path: impl AsRef<Path>, label_column: &LabelColumn) -> Result<(Dataset, bool)> {
    read_csv(path.as_ref(), label_column, false)
}

fn read_csv(path: &Path, label_column: &LabelColumn, require_label: bool) -> Result<(Dataset, bool)> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let found = match label_column {
        LabelColumn::Name(name) => headers.iter().position(|h| h == name),
        LabelColumn::Index(i) => (*i < headers.len()).then_some(*i),
    };
    let label_idx = match found {
        Some(i) => i,
        None if require_label => {
            return Err(Error::MissingLabelColumn(match label_column {
                LabelColumn::Name(n) => n.clone(),
                LabelColumn::Index(i) => i.to_string(),
            }))
        }
        None => usize::MAX,
    };
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        // 1-based data row numbers, header excluded.
        let row = r + 1;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: "*".into(),
                message: format!("{} cells, header has {}", record.len(), headers.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            if c == label_idx {
                let l = parse_label(cell).ok_or_else(|| Error::Parse {
                    row,
                    column: headers[c].clone(),
                    message: format!("label {cell:?} is not an integer"),
                })?;
                labels.push(l);
            } else {
                let v = cell
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        row,
                        column: headers[c].clone(),
                        message: format!("{cell:?} is not a finite number"),
                    })?;
                features.push(v);
            }
        }
        if label_idx == usize::MAX {
            labels.push(0);
        }
    }
    Dataset::new(names.len(), features, labels, Some(names)).map(|ds| (ds, label_idx != usize::MAX))
}

/// Integer labels, also accepting integral floats such as `3.0`.
fn parse_label(cell: &str) -> Option<Label> {
    cell.parse::<Label>().ok().or_else(|| {
        let v = cell.parse::<f64>().ok()?;
        (v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15).then_some(v as Label)
    })
}

/// Train/validation fractions; the remainder is the test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.6,
            val_fraction: 0.2,
            seed: 0,
            stratified: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |f: f64| f > 0.0 && f < 1.0;
        if !ok(self.train_fraction) || !ok(self.val_fraction) {
            return Err(Error::InvalidSplit("fractions must lie in (0, 1)".into()));
        }
        if self.train_fraction + self.val_fraction >= 1.0 {
            return Err(Error::InvalidSplit(
                "train + validation fractions must leave room for a test split".into(),
            ));
        }
        Ok(())
    }

    /// Row counts (train, val, test) for a group of `n` rows.
    fn counts(&self, n: usize, at_least_one: bool) -> (usize, usize, usize) {
        let mut tr = ((n as f64 * self.train_fraction).round() as usize).min(n);
        let mut va = ((n as f64 * self.val_fraction).round() as usize).min(n - tr);
        if at_least_one && n >= 3 {
            tr = tr.clamp(1, n - 2);
            va = va.clamp(1, n - 1 - tr);
        }
        (tr, va, n - tr - va)
    }
}

/// Disjoint, exhaustive train/validation/test partition. Rows keep their
/// original relative order inside each part.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (mut tr, mut va, mut te) = (Vec::new(), Vec::new(), Vec::new());
    let groups: Vec<Vec<usize>> = if spec.stratified {
        let mut classes = ds.classes();
        classes.sort_unstable();
        let mut groups = Vec::new();
        for c in classes {
            let idx: Vec<usize> = (0..ds.n_rows()).filter(|&i| ds.label(i) == c).collect();
            if idx.len() < 3 {
                return Err(Error::ClassTooSmall {
                    label: c,
                    count: idx.len(),
                    required: 3,
                });
            }
            groups.push(idx);
        }
        groups
    } else {
        vec![(0..ds.n_rows()).collect()]
    };
    for mut idx in groups {
        idx.shuffle(&mut rng);
        let (ntr, nva, _) = spec.counts(idx.len(), spec.stratified);
        tr.extend_from_slice(&idx[..ntr]);
        va.extend_from_slice(&idx[ntr..ntr + nva]);
        te.extend_from_slice(&idx[ntr + nva..]);
    }
    tr.sort_unstable();
    va.sort_unstable();
    te.sort_unstable();
    Ok((ds.subset(&tr), ds.subset(&va), ds.subset(&te)))
}

/// Rows of `a` followed by rows of `b`. An empty side is ignored.
pub fn concat(a: &Dataset, b: &Dataset) -> Result<Dataset> {
    if a.is_empty() {
        return Ok(b.clone());
    }
    if b.is_empty() {
        return Ok(a.clone());
    }
    if a.n_features != b.n_features {
        return Err(Error::FeatureMismatch {
            expected: a.n_features,
            found: b.n_features,
        });
    }
    let mut out = a.clone();
    out.features.extend_from_slice(&b.features);
    out.labels.extend_from_slice(&b.labels);
    Ok(out)
}

/// Cluster centers with pairwise distance `separation * sqrt(n_features)`.
///
/// While `n_classes <= n_features` the centers sit on scaled basis vectors
/// and are exactly equidistant. Beyond that, extra centers get random
/// directions at the same radius and are only approximately equidistant.
pub fn cluster_centers(
    n_classes: usize,
    n_features: usize,
    separation: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let radius = separation * (n_features as f64).sqrt() / std::f64::consts::SQRT_2;
    (0..n_classes)
        .map(|c| {
            if c < n_features {
                let mut v = vec![0.0; n_features];
                v[c] = radius;
                v
            } else {
                let dir: Vec<f64> = (0..n_features).map(|_| StandardNormal.sample(rng)).collect();
                let norm = dir.iter().map(|x: &f64| x * x).sum::<f64>().sqrt().max(1e-12);
                dir.into_iter().map(|x| x * radius / norm).collect()
            }
        })
        .collect()
}

/// Unit-variance Gaussian clusters labeled `0..n_classes`, class by class.
pub fn synth_clusters(
    n_classes: usize,
    n_features: usize,
    n_per_class: usize,
    separation: f64,
    seed: u64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = cluster_centers(n_classes, n_features, separation, &mut rng);
    let mut features = Vec::with_capacity(n_classes * n_per_class * n_features);
    let mut labels = Vec::with_capacity(n_classes * n_per_class);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..n_per_class {
            for &mu in center {
                let z: f64 = StandardNormal.sample(&mut rng);
                features.push(mu + z);
            }
            labels.push(c as Label);
        }
    }
    Dataset::new(n_features, features, labels, None).expect("generator output is consistent")
}
