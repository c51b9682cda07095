//! Base classifier pool: k-nearest neighbors, CART decision trees, Gaussian
//! naive Bayes and SAMME AdaBoost over decision stumps.
//!
//! Every model standardizes its inputs with statistics fitted on its own
//! training set and only ever predicts labels of its frame. Fitting is fully
//! deterministic: ties are broken by ordering (lowest feature index, lowest
//! threshold, lowest frame index, lowest training row), never by an RNG.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::frame::{Frame, Label};
use crate::metrics::compute_metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Knn,
    DecisionTree,
    GaussianNb,
    AdaBoostStumps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    Euclidean,
    Manhattan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteWeighting {
    Uniform,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    Gini,
    Entropy,
}

/// A classifier kind together with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    Knn {
        n_neighbors: usize,
        metric: DistanceMetric,
        weighting: VoteWeighting,
    },
    DecisionTree {
        max_depth: usize,
        criterion: SplitCriterion,
    },
    GaussianNb,
    AdaBoostStumps {
        n_estimators: usize,
        learning_rate: f64,
    },
}

impl ClassifierSpec {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierSpec::Knn { .. } => ClassifierKind::Knn,
            ClassifierSpec::DecisionTree { .. } => ClassifierKind::DecisionTree,
            ClassifierSpec::GaussianNb => ClassifierKind::GaussianNb,
            ClassifierSpec::AdaBoostStumps { .. } => ClassifierKind::AdaBoostStumps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ClassifierSpec::Knn { n_neighbors: 0, .. } => Err(Error::InvalidHyperparameter(
                "n_neighbors must be >= 1".into(),
            )),
            ClassifierSpec::DecisionTree { max_depth: 0, .. } => Err(
                Error::InvalidHyperparameter("max_depth must be >= 1".into()),
            ),
            ClassifierSpec::AdaBoostStumps { n_estimators: 0, .. } => Err(
                Error::InvalidHyperparameter("n_estimators must be >= 1".into()),
            ),
            ClassifierSpec::AdaBoostStumps { learning_rate, .. }
                if !(learning_rate > 0.0 && learning_rate.is_finite()) =>
            {
                Err(Error::InvalidHyperparameter(
                    "learning_rate must be > 0".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    /// Hyperparameters used for the bulk-good-system pool.
    pub fn tuned_pool() -> Vec<ClassifierSpec> {
        vec![
            ClassifierSpec::AdaBoostStumps {
                n_estimators: 10,
                learning_rate: 0.01,
            },
            ClassifierSpec::DecisionTree {
                max_depth: 10,
                criterion: SplitCriterion::Entropy,
            },
            ClassifierSpec::Knn {
                n_neighbors: 7,
                metric: DistanceMetric::Manhattan,
                weighting: VoteWeighting::Distance,
            },
            ClassifierSpec::GaussianNb,
        ]
    }
}

impl fmt::Display for ClassifierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassifierSpec::Knn {
                n_neighbors,
                metric,
                weighting,
            } => write!(f, "KNN(k={n_neighbors},{metric:?},{weighting:?})"),
            ClassifierSpec::DecisionTree {
                max_depth,
                criterion,
            } => write!(f, "DTR(depth={max_depth},{criterion:?})"),
            ClassifierSpec::GaussianNb => write!(f, "NBY"),
            ClassifierSpec::AdaBoostStumps {
                n_estimators,
                learning_rate,
            } => write!(f, "ADB(n={n_estimators},lr={learning_rate})"),
        }
    }
}

/// Per-feature z-score fitted on training data. Constant features get a
/// standard deviation of 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(ds: &Dataset) -> Self {
        let n = ds.n_rows() as f64;
        let f = ds.n_features();
        let mut mean = vec![0.0; f];
        for row in ds.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; f];
        for row in ds.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum TreeNode {
    Leaf {
        class: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { class } => return class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stump {
    tree: Tree,
    alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
enum FittedState {
    Knn {
        points: Vec<Vec<f64>>,
        classes: Vec<usize>,
    },
    Tree {
        tree: Tree,
    },
    GaussianNb {
        classes: Vec<usize>,
        means: Vec<Vec<f64>>,
        vars: Vec<Vec<f64>>,
        log_priors: Vec<f64>,
    },
    AdaBoost {
        stumps: Vec<Stump>,
    },
}

/// A trained base classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    spec: ClassifierSpec,
    frame: Frame,
    standardizer: Standardizer,
    n_features: usize,
    state: FittedState,
}

impl ClassifierModel {
    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn predict(&self, features: &[f64]) -> Result<Label> {
        if features.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: features.len(),
            });
        }
        let x = self.standardizer.apply(features);
        let idx = match &self.state {
            FittedState::Knn { points, classes } => {
                let ClassifierSpec::Knn {
                    n_neighbors,
                    metric,
                    weighting,
                } = self.spec
                else {
                    unreachable!("knn state carries a knn spec")
                };
                knn_vote(
                    points,
                    classes,
                    &x,
                    n_neighbors,
                    metric,
                    weighting,
                    self.frame.len(),
                )
            }
            FittedState::Tree { tree } => tree.predict(&x),
            FittedState::GaussianNb {
                classes,
                means,
                vars,
                log_priors,
            } => {
                let mut best = (f64::NEG_INFINITY, usize::MAX);
                for (j, &c) in classes.iter().enumerate() {
                    let ll: f64 = log_priors[j]
                        + x.iter()
                            .zip(&means[j])
                            .zip(&vars[j])
                            .map(|((v, m), s2)| {
                                -0.5 * (2.0 * std::f64::consts::PI * s2).ln()
                                    - (v - m) * (v - m) / (2.0 * s2)
                            })
                            .sum::<f64>();
                    if ll > best.0 || (ll == best.0 && c < best.1) {
                        best = (ll, c);
                    }
                }
                best.1
            }
            FittedState::AdaBoost { stumps } => {
                let mut scores = vec![0.0; self.frame.len()];
                for s in stumps {
                    scores[s.tree.predict(&x)] += s.alpha;
                }
                argmax_lowest(&scores)
            }
        };
        Ok(self.frame.label_at(idx))
    }

    pub fn predict_all(&self, ds: &Dataset) -> Result<Vec<Label>> {
        ds.rows().map(|r| self.predict(r)).collect()
    }

    /// Number of boosting rounds kept (AdaBoost only).
    pub fn n_stumps(&self) -> Option<usize> {
        match &self.state {
            FittedState::AdaBoost { stumps } => Some(stumps.len()),
            _ => None,
        }
    }
}

fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn knn_vote(
    points: &[Vec<f64>],
    classes: &[usize],
    x: &[f64],
    k: usize,
    metric: DistanceMetric,
    weighting: VoteWeighting,
    n_classes: usize,
) -> usize {
    let mut dist: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = match metric {
                DistanceMetric::Euclidean => p
                    .iter()
                    .zip(x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
                DistanceMetric::Manhattan => p.iter().zip(x).map(|(a, b)| (a - b).abs()).sum(),
            };
            (d, i)
        })
        .collect();
    let k = k.min(dist.len());
    let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, by_dist);
        dist.truncate(k);
    }
    dist.sort_by(by_dist);

    let mut votes = vec![0.0; n_classes];
    let exact = dist.iter().any(|(d, _)| *d == 0.0);
    for &(d, i) in &dist {
        let w = match weighting {
            VoteWeighting::Uniform => 1.0,
            // Exact matches take the whole vote.
            VoteWeighting::Distance if exact => f64::from(u8::from(d == 0.0)),
            VoteWeighting::Distance => 1.0 / d,
        };
        votes[classes[i]] += w;
    }
    argmax_lowest(&votes)
}

fn impurity(counts: &[f64], total: f64, criterion: SplitCriterion) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    match criterion {
        SplitCriterion::Gini => 1.0 - counts.iter().map(|c| (c / total).powi(2)).sum::<f64>(),
        SplitCriterion::Entropy => -counts
            .iter()
            .filter(|&&c| c > 0.0)
            .map(|c| {
                let p = c / total;
                p * p.log2()
            })
            .sum::<f64>(),
    }
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    w: &'a [f64],
    n_classes: usize,
    max_depth: usize,
    criterion: SplitCriterion,
    nodes: Vec<TreeNode>,
}

impl TreeBuilder<'_> {
    fn class_weights(&self, idx: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.n_classes];
        for &i in idx {
            c[self.y[i]] += self.w[i];
        }
        c
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.class_weights(&idx);
        let total: f64 = counts.iter().sum();
        let leaf = TreeNode::Leaf {
            class: argmax_lowest(&counts),
        };
        let node = self.nodes.len();
        self.nodes.push(leaf);
        let parent = impurity(&counts, total, self.criterion);
        if depth >= self.max_depth || idx.len() < 2 || parent <= 1e-12 {
            return node;
        }
        let Some((feature, threshold)) = self.best_split(&idx, total, parent) else {
            return node;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.into_iter().partition(|&i| self.x[i][feature] <= threshold);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[node] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        node
    }

    /// Lowest weighted child impurity; ties keep the earlier (feature,
    /// threshold) candidate.
    fn best_split(&self, idx: &[usize], total: f64, parent: f64) -> Option<(usize, f64)> {
        let n_features = self.x[idx[0]].len();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for f in 0..n_features {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left = vec![0.0; self.n_classes];
            let mut right = self.class_weights(&order);
            let mut wl = 0.0;
            for pos in 0..order.len() - 1 {
                let i = order[pos];
                left[self.y[i]] += self.w[i];
                right[self.y[i]] -= self.w[i];
                wl += self.w[i];
                let (v, next) = (self.x[i][f], self.x[order[pos + 1]][f]);
                if next <= v {
                    continue;
                }
                let wr = total - wl;
                let score = (wl * impurity(&left, wl, self.criterion)
                    + wr * impurity(&right, wr, self.criterion))
                    / total;
                if best.is_none_or(|(b, _, _)| score < b - 1e-12) {
                    best = Some((score, f, v + (next - v) / 2.0));
                }
            }
        }
        best.filter(|(score, _, _)| *score < parent - 1e-12)
            .map(|(_, f, t)| (f, t))
    }
}

fn fit_tree(
    x: &[Vec<f64>],
    y: &[usize],
    w: &[f64],
    n_classes: usize,
    max_depth: usize,
    criterion: SplitCriterion,
) -> Tree {
    let mut b = TreeBuilder {
        x,
        y,
        w,
        n_classes,
        max_depth,
        criterion,
        nodes: Vec::new(),
    };
    b.build((0..x.len()).collect(), 0);
    Tree { nodes: b.nodes }
}

fn fit_gaussian_nb(x: &[Vec<f64>], y: &[usize], n_classes: usize) -> FittedState {
    let n_features = x[0].len();
    // Variance floor relative to the widest feature.
    let mut max_var: f64 = 0.0;
    for f in 0..n_features {
        let m = x.iter().map(|r| r[f]).sum::<f64>() / x.len() as f64;
        let v = x.iter().map(|r| (r[f] - m).powi(2)).sum::<f64>() / x.len() as f64;
        max_var = max_var.max(v);
    }
    let eps = 1e-9 * max_var.max(1e-12);

    let mut classes = Vec::new();
    let mut means = Vec::new();
    let mut vars = Vec::new();
    let mut log_priors = Vec::new();
    for c in 0..n_classes {
        let rows: Vec<&Vec<f64>> = x.iter().zip(y).filter(|(_, &l)| l == c).map(|(r, _)| r).collect();
        if rows.is_empty() {
            continue;
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..n_features)
            .map(|f| rows.iter().map(|r| r[f]).sum::<f64>() / n)
            .collect();
        let var: Vec<f64> = (0..n_features)
            .map(|f| rows.iter().map(|r| (r[f] - mean[f]).powi(2)).sum::<f64>() / n + eps)
            .collect();
        classes.push(c);
        means.push(mean);
        vars.push(var);
        log_priors.push((n / x.len() as f64).ln());
    }
    FittedState::GaussianNb {
        classes,
        means,
        vars,
        log_priors,
    }
}

/// SAMME boosting. Rounds stop early once a stump is no better than chance,
/// fits the data perfectly, or would raise the ensemble's training error, so
/// training error never grows with `n_estimators`.
fn fit_adaboost(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    n_estimators: usize,
    learning_rate: f64,
) -> FittedState {
    let n = x.len();
    let present = {
        let mut seen = vec![false; n_classes];
        y.iter().for_each(|&c| seen[c] = true);
        seen.iter().filter(|s| **s).count()
    };
    let k = present.max(2) as f64;
    let mut w = vec![1.0 / n as f64; n];
    let mut scores = vec![vec![0.0; n_classes]; n];
    let mut stumps: Vec<Stump> = Vec::new();
    // Training errors of the ensemble after each accepted stump; the fitted
    // model keeps the shortest prefix with the fewest errors, so adding
    // estimators can never raise the training error.
    let mut prefix_errors: Vec<usize> = Vec::new();
    for _ in 0..n_estimators {
        let tree = fit_tree(x, y, &w, n_classes, 1, SplitCriterion::Gini);
        let preds: Vec<usize> = x.iter().map(|r| tree.predict(r)).collect();
        let wsum: f64 = w.iter().sum();
        let err: f64 = preds
            .iter()
            .zip(y)
            .zip(&w)
            .filter(|((p, t), _)| p != t)
            .map(|(_, wi)| wi)
            .sum::<f64>()
            / wsum;
        if err <= 0.0 || err >= 1.0 - 1.0 / k {
            if stumps.is_empty() {
                stumps.push(Stump { tree, alpha: 1.0 });
                prefix_errors.push(preds.iter().zip(y).filter(|(p, t)| p != t).count());
            }
            break;
        }
        let alpha = learning_rate * (((1.0 - err) / err).ln() + (k - 1.0).ln());
        for (s, &p) in scores.iter_mut().zip(&preds) {
            s[p] += alpha;
        }
        prefix_errors.push(
            scores
                .iter()
                .zip(y)
                .filter(|(s, t)| argmax_lowest(s) != **t)
                .count(),
        );
        for ((wi, p), t) in w.iter_mut().zip(&preds).zip(y) {
            if p != t {
                *wi *= alpha.exp();
            }
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|wi| *wi /= total);
        stumps.push(Stump { tree, alpha });
    }
    let best = prefix_errors
        .iter()
        .enumerate()
        .min_by_key(|&(i, &e)| (e, i))
        .map_or(stumps.len(), |(i, _)| i + 1);
    stumps.truncate(best);
    FittedState::AdaBoost { stumps }
}

/// Fits a model. Labels in `train` must all belong to `frame`.
pub fn train(spec: &ClassifierSpec, train: &Dataset, frame: &Frame) -> Result<ClassifierModel> {
    spec.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let y: Vec<usize> = train
        .labels()
        .iter()
        .map(|&l| frame.index_of(l).ok_or(Error::UnknownLabel(l)))
        .collect::<Result<_>>()?;
    let standardizer = Standardizer::fit(train);
    let x: Vec<Vec<f64>> = train.rows().map(|r| standardizer.apply(r)).collect();
    let n_classes = frame.len();
    let state = match *spec {
        ClassifierSpec::Knn { .. } => FittedState::Knn { points: x, classes: y },
        ClassifierSpec::DecisionTree {
            max_depth,
            criterion,
        } => FittedState::Tree {
            tree: fit_tree(&x, &y, &vec![1.0; x.len()], n_classes, max_depth, criterion),
        },
        ClassifierSpec::GaussianNb => fit_gaussian_nb(&x, &y, n_classes),
        ClassifierSpec::AdaBoostStumps {
            n_estimators,
            learning_rate,
        } => fit_adaboost(&x, &y, n_classes, n_estimators, learning_rate),
    };
    Ok(ClassifierModel {
        spec: spec.clone(),
        frame: frame.clone(),
        standardizer,
        n_features: train.n_features(),
        state,
    })
}

/// Hyperparameter grid for one classifier kind; candidates are expanded in
/// row-major order of the fields as declared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HyperGrid {
    Knn {
        n_neighbors: Vec<usize>,
        metric: Vec<DistanceMetric>,
        weighting: Vec<VoteWeighting>,
    },
    DecisionTree {
        max_depth: Vec<usize>,
        criterion: Vec<SplitCriterion>,
    },
    GaussianNb,
    AdaBoostStumps {
        n_estimators: Vec<usize>,
        learning_rate: Vec<f64>,
    },
}

impl HyperGrid {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            HyperGrid::Knn { .. } => ClassifierKind::Knn,
            HyperGrid::DecisionTree { .. } => ClassifierKind::DecisionTree,
            HyperGrid::GaussianNb => ClassifierKind::GaussianNb,
            HyperGrid::AdaBoostStumps { .. } => ClassifierKind::AdaBoostStumps,
        }
    }

    pub fn candidates(&self) -> Vec<ClassifierSpec> {
        let mut out = Vec::new();
        match self {
            HyperGrid::Knn {
                n_neighbors,
                metric,
                weighting,
            } => {
                for &k in n_neighbors {
                    for &m in metric {
                        for &w in weighting {
                            out.push(ClassifierSpec::Knn {
                                n_neighbors: k,
                                metric: m,
                                weighting: w,
                            });
                        }
                    }
                }
            }
            HyperGrid::DecisionTree {
                max_depth,
                criterion,
            } => {
                for &d in max_depth {
                    for &c in criterion {
                        out.push(ClassifierSpec::DecisionTree {
                            max_depth: d,
                            criterion: c,
                        });
                    }
                }
            }
            HyperGrid::GaussianNb => out.push(ClassifierSpec::GaussianNb),
            HyperGrid::AdaBoostStumps {
                n_estimators,
                learning_rate,
            } => {
                for &n in n_estimators {
                    for &lr in learning_rate {
                        out.push(ClassifierSpec::AdaBoostStumps {
                            n_estimators: n,
                            learning_rate: lr,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn default_for(kind: ClassifierKind) -> HyperGrid {
        match kind {
            ClassifierKind::Knn => HyperGrid::Knn {
                n_neighbors: vec![1, 3, 5, 7],
                metric: vec![DistanceMetric::Euclidean, DistanceMetric::Manhattan],
                weighting: vec![VoteWeighting::Uniform, VoteWeighting::Distance],
            },
            ClassifierKind::DecisionTree => HyperGrid::DecisionTree {
                max_depth: vec![3, 5, 10],
                criterion: vec![SplitCriterion::Gini, SplitCriterion::Entropy],
            },
            ClassifierKind::GaussianNb => HyperGrid::GaussianNb,
            ClassifierKind::AdaBoostStumps => HyperGrid::AdaBoostStumps {
                n_estimators: vec![10, 50],
                learning_rate: vec![0.01, 0.1, 1.0],
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best: ClassifierSpec,
    pub best_f1: f64,
    /// Validation macro-F1 per candidate; `None` when training failed.
    pub scores: Vec<(ClassifierSpec, Option<f64>)>,
    pub warnings: Vec<String>,
}

/// Picks the grid candidate with the highest validation macro-F1; ties keep
/// the earlier candidate. Candidates that fail to train are skipped with a
/// warning.
pub fn grid_search(
    grid: &HyperGrid,
    train_set: &Dataset,
    val: &Dataset,
    frame: &Frame,
) -> Result<GridSearchResult> {
    search_specs(&grid.candidates(), train_set, val, frame)
}

pub fn search_specs(
    candidates: &[ClassifierSpec],
    train_set: &Dataset,
    val: &Dataset,
    frame: &Frame,
) -> Result<GridSearchResult> {
    if candidates.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut best: Option<(ClassifierSpec, f64)> = None;
    let mut scores = Vec::new();
    let mut warnings = Vec::new();
    let mut last_err = None;
    for spec in candidates {
        let scored = train(spec, train_set, frame).and_then(|m| {
            let pred = m.predict_all(val)?;
            Ok(compute_metrics(val.labels(), &pred, frame)?.macro_f1)
        });
        match scored {
            Ok(f1) => {
                if best.as_ref().is_none_or(|(_, b)| f1 > *b) {
                    best = Some((spec.clone(), f1));
                }
                scores.push((spec.clone(), Some(f1)));
            }
            Err(e) => {
                warnings.push(format!("skipped {spec}: {e}"));
                scores.push((spec.clone(), None));
                last_err = Some(e);
            }
        }
    }
    match best {
        Some((best, best_f1)) => Ok(GridSearchResult {
            best,
            best_f1,
            scores,
            warnings,
        }),
        None => Err(last_err.unwrap_or(Error::EmptyGrid)),
    }
}
