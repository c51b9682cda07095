//! Experiment scenarios and the batch commands behind the CLI.
//!
//! Every scenario derives all randomness from the configured seed, runs
//! independent work in parallel and writes its reports in a fixed order, so
//! reruns reproduce identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{DataSource, ExperimentConfig};
use super::model_file::ModelFile;
use super::report::{fmt_f, metrics_text, write_confusion, write_metrics, write_table};
use crate::assessment::{kb_load, match_assessment, Assessment, KnowledgeBase};
use crate::bpa::SensitivityFactor;
use crate::classifiers::{grid_search, ClassifierKind, ClassifierSpec, HyperGrid};
use crate::data::{concat, load_csv, load_csv_unlabeled, split, synth_clusters, Dataset, LabelColumn, SplitSpec};
use crate::ecet::{ec_infer, EnsembleClassifier, EnsembleVerdict};
use crate::error::{Error, Result};
use crate::frame::{Frame, Label};
use crate::infusion::{system_fuse, SystemVerdict};
use crate::klafate::{KnowledgeVerdict, RuleModel};
use crate::metrics::{compute_metrics, summarize_uncertainty, MetricsReport};
use crate::update::{
    append_notifications, klafate_update_signal, verdict_flag, AnomalyDetector, ModelUpdater, Phase,
    UncertaintySample, UpdateConfig,
};

/// Data, models and splits shared by all scenarios.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub frame: Frame,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    /// Rows of the withheld class replayed in streams.
    pub unknown_stream: Dataset,
    /// Rows of the withheld class kept for scoring after retraining.
    pub unknown_holdout: Dataset,
    pub ensemble: Option<EnsembleClassifier>,
    pub rules: Option<RuleModel>,
    pub kb: Option<KnowledgeBase>,
    pub feature_names: Vec<String>,
    pub notes: Vec<String>,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data {
        DataSource::Synthetic(s) => {
            let ds = synth_clusters(s.n_classes, s.n_features, s.n_per_class, s.separation, cfg.seed);
            let offset = s.label_offset;
            let ds = ds.map_labels(|l| l + offset);
            match &s.feature_names {
                Some(names) => ds.with_feature_names(names.clone()),
                None => Ok(ds),
            }
        }
        DataSource::Csv { path, label_column } => load_csv(path, &LabelColumn::from(label_column.as_str())),
    }
}

/// Short member tag in the style of the result tables.
pub fn member_tag(spec: &ClassifierSpec) -> &'static str {
    match spec.kind() {
        ClassifierKind::Knn => "KNN",
        ClassifierKind::DecisionTree => "DTR",
        ClassifierKind::GaussianNb => "NBY",
        ClassifierKind::AdaBoostStumps => "ADB",
    }
}

fn member_names(specs: &[ClassifierSpec]) -> Vec<String> {
    specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let tag = member_tag(s);
            if specs.iter().filter(|o| member_tag(o) == tag).count() > 1 {
                format!("{tag}{}", i + 1)
            } else {
                tag.to_string()
            }
        })
        .collect()
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let mut classes = data.classes();
    classes.sort_unstable();
    if let Some(a) = cfg.anomaly_class {
        if !classes.contains(&a) {
            return Err(Error::InvalidConfig(format!(
                "anomaly class {a} does not occur in the data"
            )));
        }
    }
    let frame_labels = match &cfg.frame {
        Some(f) => f.clone(),
        None => classes
            .iter()
            .copied()
            .filter(|&l| Some(l) != cfg.anomaly_class)
            .collect(),
    };
    if cfg.anomaly_class.is_some_and(|a| frame_labels.contains(&a)) {
        return Err(Error::InvalidConfig(
            "the anomaly class is also listed as a known class".into(),
        ));
    }
    let frame = Frame::new(frame_labels)?;
    cfg.update.validate(&frame)?;

    let known = data.filter(|l| frame.contains(l));
    let unknown = match cfg.anomaly_class {
        Some(a) => data.filter(|l| l == a),
        None => Dataset::empty(data.n_features()),
    };
    let split_spec = SplitSpec {
        seed: cfg.seed,
        ..cfg.split
    };
    let (train, val, test) = split(&known, &split_spec)?;
    let mut idx: Vec<usize> = (0..unknown.n_rows()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed));
    let half = idx.len() / 2;
    let (mut a, mut b) = (idx[..half].to_vec(), idx[half..].to_vec());
    a.sort_unstable();
    b.sort_unstable();
    let unknown_stream = unknown.subset(&a);
    let unknown_holdout = unknown.subset(&b);
    let feature_names = data.names_or_default();

    let k = SensitivityFactor::new(cfg.sensitivity_exponent)?;
    let mut notes = Vec::new();
    let ensemble = if cfg.members.is_empty() {
        None
    } else {
        let specs = if cfg.grid_search {
            cfg.members
                .iter()
                .map(|m| {
                    let r = grid_search(&HyperGrid::default_for(m.kind()), &train, &val, &frame)?;
                    notes.extend(r.warnings);
                    notes.push(format!("grid search chose {} (val macro-F1 {:.4})", r.best, r.best_f1));
                    Ok(r.best)
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            cfg.members.clone()
        };
        Some(EnsembleClassifier::fit(&specs, &train, &val, &frame, k, cfg.weights)?)
    };
    let rules = match &cfg.rules {
        Some(p) => {
            let r = RuleModel::load(p)?;
            if !r.frame().same_as(&frame) {
                return Err(Error::InvalidConfig(format!(
                    "rule frame {} differs from the data frame {}",
                    r.frame(),
                    frame
                )));
            }
            r.bind(&feature_names)?;
            Some(r)
        }
        None => None,
    };
    let kb = match &cfg.kb {
        Some(p) => Some(kb_load(p, &frame)?),
        None => None,
    };
    Ok(Prepared {
        frame,
        train,
        val,
        test,
        unknown_stream,
        unknown_holdout,
        ensemble,
        rules,
        kb,
        feature_names,
        notes,
    })
}

/// Ensemble verdict of one row, plus the rule and system verdicts when a
/// rule model is given.
pub type RowVerdict = (EnsembleVerdict, Option<(KnowledgeVerdict, SystemVerdict)>);

/// Ensemble and (optional) system verdicts for every row, in row order.
pub fn infer_rows(
    ec: &EnsembleClassifier,
    rules: Option<&RuleModel>,
    names: &[String],
    ds: &Dataset,
) -> Result<Vec<RowVerdict>> {
    let bound = rules.map(|r| r.bind(names)).transpose()?;
    let rows: Vec<&[f64]> = ds.rows().collect();
    rows.par_iter()
        .map(|row| {
            let v = ec_infer(ec, row)?;
            let sys = match &bound {
                Some(b) => {
                    let ke = b.infer(row)?;
                    let s = system_fuse(&v, &ke.mass)?;
                    Some((ke, s))
                }
                None => None,
            };
            Ok((v, sys))
        })
        .collect()
}

/// Piecewise-constant stream. `plan` lists the class of each segment;
/// `anomaly_label` marks segments drawn from the withheld class. With
/// probability `noise_rate` a row is swapped for a row of another known
/// class while its ground truth stays unchanged.
pub fn build_stream(
    prep: &Prepared,
    plan: &[(Label, usize)],
    noise_rate: f64,
    anomaly_label: Label,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset> {
    let mut pools: BTreeMap<Label, Dataset> = BTreeMap::new();
    for &l in prep.frame.labels() {
        let rows = prep.test.filter(|x| x == l);
        if rows.is_empty() {
            return Err(Error::ClassTooSmall {
                label: l,
                count: 0,
                required: 1,
            });
        }
        pools.insert(l, rows);
    }
    let known = prep.frame.labels();
    let mut out = Dataset::empty(prep.test.n_features());
    for &(class, len) in plan {
        let pool = if class == anomaly_label {
            if prep.unknown_stream.is_empty() {
                return Err(Error::InvalidConfig(
                    "the stream needs an anomaly class but none is configured".into(),
                ));
            }
            &prep.unknown_stream
        } else {
            &pools[&class]
        };
        for _ in 0..len {
            let row = if rng.random::<f64>() < noise_rate {
                let others: Vec<Label> = known.iter().copied().filter(|&l| l != class).collect();
                let p = &pools[&others[rng.random_range(0..others.len())]];
                p.row(rng.random_range(0..p.n_rows())).to_vec()
            } else {
                pool.row(rng.random_range(0..pool.n_rows())).to_vec()
            };
            out.push_row(&row, class)?;
        }
    }
    out.with_feature_names(prep.feature_names.clone())
}

fn require_ensemble(prep: &Prepared) -> Result<&EnsembleClassifier> {
    prep.ensemble
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("this experiment needs ensemble members".into()))
}

fn stream_rng(cfg: &ExperimentConfig) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1))
}

fn label_columns(prefix: &str, labels: &[Label]) -> Vec<String> {
    labels.iter().map(|l| format!("{prefix}_{l}")).collect()
}

fn prepare_out(cfg: &ExperimentConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out)?;
    Ok(cfg.out.clone())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model_path: PathBuf,
    pub test_metrics: MetricsReport,
}

/// Fits the ensemble, scores it on the test split and writes a model file.
pub fn run_train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    let prep = prepare(cfg)?;
    let ec = require_ensemble(&prep)?;
    let out = prepare_out(cfg)?;
    let verdicts = infer_rows(ec, None, &prep.feature_names, &prep.test)?;
    let pred: Vec<Label> = verdicts.iter().map(|(v, _)| v.y_ec).collect();
    let report = compute_metrics(prep.test.labels(), &pred, &prep.frame)?;
    write_metrics(out.join("train_metrics.csv"), &report)?;
    write_confusion(out.join("train_confusion.csv"), &report)?;
    let model_path = out.join("model.evifuse");
    ModelFile {
        ensemble: ec.clone(),
        train: prep.train.clone(),
        val: prep.val.clone(),
        update: cfg.update.clone(),
    }
    .save(&model_path)?;
    let mut s = String::new();
    let _ = writeln!(s, "members: {}", member_names(&ec.specs()).join(", "));
    for n in &prep.notes {
        let _ = writeln!(s, "note: {n}");
    }
    s.push_str(&metrics_text("test split", &report));
    std::fs::write(out.join("train_summary.txt"), s)?;
    Ok(TrainOutcome {
        model_path,
        test_metrics: report,
    })
}

#[derive(Debug, Clone)]
pub struct WindowAblationOutcome {
    pub rows: Vec<(usize, MetricsReport)>,
    pub files: Vec<PathBuf>,
}

/// Stream inference with one withheld class, once per window size. Rows
/// flagged by the detector are labeled with the anomaly label.
pub fn run_window_ablation(cfg: &ExperimentConfig, window_sizes: &[usize]) -> Result<WindowAblationOutcome> {
    if window_sizes.is_empty() {
        return Err(Error::InvalidConfig("at least one window size is required".into()));
    }
    let prep = prepare(cfg)?;
    let ec = require_ensemble(&prep)?;
    if cfg.anomaly_class.is_none() {
        return Err(Error::InvalidConfig("window ablation needs an anomaly class".into()));
    }
    let a_k = cfg.update.anomaly_label;
    let mut rng = stream_rng(cfg);
    let mut plan = Vec::new();
    for _ in 0..cfg.stream.repeats {
        let mut classes: Vec<Label> = prep.frame.labels().to_vec();
        classes.push(a_k);
        classes.shuffle(&mut rng);
        plan.extend(classes.into_iter().map(|c| (c, cfg.stream.segment_length)));
    }
    let stream = build_stream(&prep, &plan, cfg.stream.noise_rate, a_k, &mut rng)?;
    let verdicts = infer_rows(ec, prep.rules.as_ref(), &prep.feature_names, &stream)?;

    let flags: Vec<(bool, Label)> = verdicts
        .iter()
        .map(|(v, sys)| {
            let s = sys.as_ref().map(|(_, s)| s);
            (verdict_flag(v, s, &cfg.update), s.map_or(v.y_ec, |s| s.y_sys))
        })
        .collect();
    let per_size: Vec<(usize, Vec<Label>)> = window_sizes
        .par_iter()
        .map(|&ws| {
            let dcfg = UpdateConfig {
                window_size: ws,
                threshold_size: usize::MAX,
                ..cfg.update.clone()
            };
            let mut det = AnomalyDetector::new(dcfg, stream.n_features());
            let y = stream
                .rows()
                .zip(&flags)
                .map(|(row, &(flag, base))| det.step_flag(row, flag, base).map(|s| s.y_a))
                .collect::<Result<Vec<_>>>()?;
            Ok((ws, y))
        })
        .collect::<Result<Vec<_>>>()?;

    let out = prepare_out(cfg)?;
    let mut classes = prep.frame.labels().to_vec();
    classes.push(a_k);
    let mut header = vec!["window_size".to_string(), "macro_f1".into(), "accuracy".into()];
    header.extend(label_columns("f1", &classes));
    header.extend(label_columns("fdr", &classes));
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "window ablation: {} rows, {} segments, anomaly label {a_k}",
        stream.n_rows(),
        plan.len()
    );
    for (ws, y) in &per_size {
        let r = compute_metrics(stream.labels(), y, &prep.frame)?;
        let mut row = vec![ws.to_string(), fmt_f(r.macro_f1), fmt_f(r.accuracy)];
        row.extend(classes.iter().map(|&l| fmt_f(r.f1_of(l))));
        row.extend(classes.iter().map(|&l| fmt_f(r.class(l).map_or(0.0, |c| c.fdr))));
        rows.push(row);
        summary.push_str(&metrics_text(&format!("window size {ws}"), &r));
        reports.push((*ws, r));
    }
    let table = out.join("window_ablation.csv");
    write_table(&table, &header, &rows)?;

    let mut theader: Vec<String> = [
        "index", "truth", "y_ec", "y_sys", "u_d", "u_y", "conflict_d", "conflict_y", "u_d_sys", "u_y_sys", "flag",
    ]
    .map(String::from)
    .to_vec();
    theader.extend(window_sizes.iter().map(|w| format!("y_a_w{w}")));
    let trows: Vec<Vec<String>> = verdicts
        .iter()
        .enumerate()
        .map(|(i, (v, sys))| {
            let s = sys.as_ref().map(|(_, s)| s);
            let mut r = vec![
                i.to_string(),
                stream.label(i).to_string(),
                v.y_ec.to_string(),
                s.map_or(String::new(), |s| s.y_sys.to_string()),
                fmt_f(v.u_d),
                fmt_f(v.u_y),
                fmt_f(v.conflict_d),
                fmt_f(v.conflict_y),
                s.map_or(String::new(), |s| fmt_f(s.u_d_sys)),
                s.map_or(String::new(), |s| fmt_f(s.u_y_sys)),
                u8::from(flags[i].0).to_string(),
            ];
            r.extend(per_size.iter().map(|(_, y)| y[i].to_string()));
            r
        })
        .collect();
    let trace = out.join("window_trace.csv");
    write_table(&trace, &theader, &trows)?;

    let u_d: Vec<f64> = verdicts.iter().map(|(v, _)| v.conflict_d).collect();
    let u_y: Vec<f64> = verdicts.iter().map(|(v, _)| v.conflict_y).collect();
    let _ = writeln!(summary, "conflict by true class (dempster mean/max, yager mean/max):");
    for u in summarize_uncertainty(stream.labels(), &u_d, &u_y) {
        let _ = writeln!(
            summary,
            "  class {:>4}  {:.4} / {:.4}   {:.4} / {:.4}",
            u.label, u.mean_u_d, u.max_u_d, u.mean_u_y, u.max_u_y
        );
    }
    let text = out.join("window_ablation.txt");
    std::fs::write(&text, summary)?;
    Ok(WindowAblationOutcome {
        rows: reports,
        files: vec![table, trace, text],
    })
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub threshold_size: usize,
    pub window_size: usize,
    pub patience: usize,
    /// Stream index at which the first retrain finished.
    pub retrained_at: Option<usize>,
    pub retrains: usize,
    pub awaiting_confirmation: bool,
    pub metrics: MetricsReport,
    pub frame: Frame,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub cells: Vec<SweepCell>,
    pub files: Vec<PathBuf>,
}

/// Two-batch protocol per cell of the retraining grid. Batch one streams the
/// known classes and one long run of the withheld class through the
/// updater; batch two (test rows plus withheld rows relabeled to the
/// anomaly label) scores the resulting model.
pub fn run_retrain_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    let cells = cfg.sweep.cells();
    if cells.is_empty() {
        return Err(Error::InvalidConfig("the sweep grid is empty".into()));
    }
    let prep = prepare(cfg)?;
    let ec = require_ensemble(&prep)?;
    if cfg.anomaly_class.is_none() {
        return Err(Error::InvalidConfig("the retraining sweep needs an anomaly class".into()));
    }
    let a_k = cfg.update.anomaly_label;
    for &(th, ws, pt) in &cells {
        UpdateConfig {
            threshold_size: th,
            window_size: ws,
            patience: pt,
            ..cfg.update.clone()
        }
        .validate(&prep.frame)?;
    }

    let mut rng = stream_rng(cfg);
    let mut plan = Vec::new();
    let mut head: Vec<Label> = prep.frame.labels().to_vec();
    head.shuffle(&mut rng);
    plan.extend(head.iter().map(|&c| (c, cfg.stream.segment_length)));
    plan.push((a_k, cfg.stream.anomaly_length));
    head.shuffle(&mut rng);
    plan.extend(head.iter().map(|&c| (c, cfg.stream.segment_length)));
    let batch1 = build_stream(&prep, &plan, cfg.stream.noise_rate, a_k, &mut rng)?;
    let batch2 = concat(&prep.test, &prep.unknown_holdout.clone().relabel_all(a_k))?
        .with_feature_names(prep.feature_names.clone())?;
    let split_spec = SplitSpec {
        seed: cfg.seed,
        ..cfg.split
    };

    let results: Vec<(SweepCell, Vec<crate::update::RetrainReport>)> = cells
        .par_iter()
        .map(|&(th, ws, pt)| {
            let ucfg = UpdateConfig {
                threshold_size: th,
                window_size: ws,
                patience: pt,
                ..cfg.update.clone()
            };
            let mut up = ModelUpdater::new(
                ec.clone(),
                prep.rules.clone(),
                prep.train.clone().with_feature_names(prep.feature_names.clone())?,
                prep.val.clone(),
                ucfg,
                split_spec,
            )?;
            let mut retrained_at = None;
            let mut awaiting = false;
            for (i, row) in batch1.rows().enumerate() {
                let o = up.observe(row)?;
                if o.retrained.is_some() && retrained_at.is_none() {
                    retrained_at = Some(i);
                }
                awaiting |= o.step.phase == Phase::RetrainReady && o.retrained.is_none();
            }
            let pred = batch2
                .rows()
                .map(|row| {
                    let (v, s) = up.infer(row)?;
                    Ok(s.map_or(v.y_ec, |s| s.y_sys))
                })
                .collect::<Result<Vec<_>>>()?;
            let frame = up.ensemble().frame().clone();
            let metrics = compute_metrics(batch2.labels(), &pred, &frame)?;
            Ok((
                SweepCell {
                    threshold_size: th,
                    window_size: ws,
                    patience: pt,
                    retrained_at,
                    retrains: up.reports().len(),
                    awaiting_confirmation: awaiting && up.reports().is_empty(),
                    metrics,
                    frame,
                },
                up.reports().to_vec(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let out = prepare_out(cfg)?;
    let mut classes = prep.frame.labels().to_vec();
    classes.push(a_k);
    let mut header: Vec<String> = [
        "threshold_size", "window_size", "patience", "retrained", "retrained_at", "macro_f1", "known_macro_f1",
    ]
    .map(String::from)
    .to_vec();
    header.extend(label_columns("f1", &classes));
    let mut rows = Vec::new();
    let mut files = Vec::new();
    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "retraining sweep: batch one {} rows (anomaly run of {}), batch two {} rows",
        batch1.n_rows(),
        cfg.stream.anomaly_length,
        batch2.n_rows()
    );
    for (cell, reports) in &results {
        let mut row = vec![
            cell.threshold_size.to_string(),
            cell.window_size.to_string(),
            cell.patience.to_string(),
            cell.retrains.to_string(),
            cell.retrained_at.map_or(String::new(), |i| i.to_string()),
            fmt_f(cell.metrics.macro_f1),
            fmt_f(cell.metrics.macro_f1_over(prep.frame.labels())),
        ];
        row.extend(classes.iter().map(|&l| fmt_f(cell.metrics.f1_of(l))));
        rows.push(row);
        let tag = format!("th{}_ws{}_pt{}", cell.threshold_size, cell.window_size, cell.patience);
        for (j, r) in reports.iter().enumerate() {
            let p = out.join(format!("retrain_report_{tag}_{j}.json"));
            r.write(&p)?;
            files.push(p);
        }
        let status = match (cell.retrained_at, cell.awaiting_confirmation) {
            (Some(i), _) => format!("retrained at row {i}"),
            (None, true) => "retrain awaiting confirmation (semi-automatic)".into(),
            (None, false) => "not retrained".into(),
        };
        summary.push_str(&metrics_text(&format!("{tag}: {status}"), &cell.metrics));
    }
    let table = out.join("retrain_sweep.csv");
    write_table(&table, &header, &rows)?;
    let text = out.join("retrain_sweep.txt");
    std::fs::write(&text, summary)?;
    files.insert(0, text);
    files.insert(0, table);
    Ok(SweepOutcome {
        cells: results.into_iter().map(|(c, _)| c).collect(),
        files,
    })
}

#[derive(Debug, Clone)]
pub struct FusionAblationOutcome {
    /// `(model name, metrics)` in table order.
    pub rows: Vec<(String, MetricsReport)>,
    pub notices: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl FusionAblationOutcome {
    pub fn macro_f1(&self, name: &str) -> Option<f64> {
        self.rows.iter().find(|(n, _)| n == name).map(|(_, r)| r.macro_f1)
    }
}

/// Rule model alone, each member, every member pair, the full ensemble and
/// the system fusion, all on the test split.
pub fn run_fusion_ablation(cfg: &ExperimentConfig) -> Result<FusionAblationOutcome> {
    let prep = prepare(cfg)?;
    let ds = &prep.test;
    let truth = ds.labels();
    let mut rows: Vec<(String, MetricsReport)> = Vec::new();
    let mut notices = Vec::new();

    let ke: Option<Vec<KnowledgeVerdict>> = match &prep.rules {
        Some(r) => {
            let b = r.bind(&prep.feature_names)?;
            Some(ds.rows().map(|row| b.infer(row)).collect::<Result<_>>()?)
        }
        None => {
            notices.push("no rule model configured: rule and system rows skipped".into());
            None
        }
    };
    if let Some(ke) = &ke {
        let pred: Vec<Label> = ke.iter().map(|v| v.y_ke).collect();
        rows.push(("KEXT".into(), compute_metrics(truth, &pred, &prep.frame)?));
    }

    let mut ec_verdicts = None;
    match &prep.ensemble {
        Some(ec) => {
            let names = member_names(&ec.specs());
            let n = names.len();
            let member_rows: Vec<(String, MetricsReport)> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let pred = ec.members()[i].predict_all(ds)?;
                    Ok((names[i].clone(), compute_metrics(truth, &pred, &prep.frame)?))
                })
                .collect::<Result<_>>()?;
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            let pair_rows: Vec<(String, MetricsReport)> = pairs
                .par_iter()
                .map(|&(i, j)| {
                    let sub = ec.select(&[i, j])?;
                    let pred = ds
                        .rows()
                        .map(|r| ec_infer(&sub, r).map(|v| v.y_ec))
                        .collect::<Result<Vec<_>>>()?;
                    Ok((
                        format!("{}-{}", names[i], names[j]),
                        compute_metrics(truth, &pred, &prep.frame)?,
                    ))
                })
                .collect::<Result<_>>()?;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| member_rows[b].1.macro_f1.total_cmp(&member_rows[a].1.macro_f1).then(a.cmp(&b)));
            if n >= 2 {
                let (i, j) = (order[0].min(order[1]), order[0].max(order[1]));
                notices.push(format!(
                    "{}-{} (the two strongest members) stands in for the SVM-KNN pair; no SVM is in the pool",
                    names[i], names[j]
                ));
            }
            rows.extend(member_rows);
            rows.extend(pair_rows);
            let verdicts = infer_rows(ec, prep.rules.as_ref(), &prep.feature_names, ds)?;
            let pred: Vec<Label> = verdicts.iter().map(|(v, _)| v.y_ec).collect();
            rows.push(("ECET".into(), compute_metrics(truth, &pred, &prep.frame)?));
            if prep.rules.is_some() {
                let pred: Vec<Label> = verdicts
                    .iter()
                    .map(|(v, s)| s.as_ref().map_or(v.y_ec, |(_, s)| s.y_sys))
                    .collect();
                rows.push(("INFUSION".into(), compute_metrics(truth, &pred, &prep.frame)?));
            }
            ec_verdicts = Some(verdicts);
        }
        None => notices.push("no ensemble members configured: only the rule model is scored".into()),
    }

    let out = prepare_out(cfg)?;
    let classes = prep.frame.labels();
    let mut header = vec!["model".to_string(), "macro_f1".into(), "accuracy".into()];
    header.extend(label_columns("f1", classes));
    let table_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, r)| {
            let mut row = vec![name.clone(), fmt_f(r.macro_f1), fmt_f(r.accuracy)];
            row.extend(classes.iter().map(|&l| fmt_f(r.f1_of(l))));
            row
        })
        .collect();
    let table = out.join("fusion_ablation.csv");
    write_table(&table, &header, &table_rows)?;

    let theader: Vec<String> = [
        "index", "truth", "y_ke", "u_ke", "y_ec", "u_d", "u_y", "y_sys", "u_d_sys", "u_y_sys",
    ]
    .map(String::from)
    .to_vec();
    let trows: Vec<Vec<String>> = (0..ds.n_rows())
        .map(|i| {
            let k = ke.as_ref().map(|k| &k[i]);
            let e = ec_verdicts.as_ref().map(|v| &v[i]);
            let s = e.and_then(|(_, s)| s.as_ref()).map(|(_, s)| s);
            vec![
                i.to_string(),
                truth[i].to_string(),
                k.map_or(String::new(), |k| k.y_ke.to_string()),
                k.map_or(String::new(), |k| fmt_f(k.u)),
                e.map_or(String::new(), |(v, _)| v.y_ec.to_string()),
                e.map_or(String::new(), |(v, _)| fmt_f(v.u_d)),
                e.map_or(String::new(), |(v, _)| fmt_f(v.u_y)),
                s.map_or(String::new(), |s| s.y_sys.to_string()),
                s.map_or(String::new(), |s| fmt_f(s.u_d_sys)),
                s.map_or(String::new(), |s| fmt_f(s.u_y_sys)),
            ]
        })
        .collect();
    let trace = out.join("fusion_trace.csv");
    write_table(&trace, &theader, &trows)?;

    let mut summary = String::from("fusion ablation on the test split\n");
    for n in &notices {
        let _ = writeln!(summary, "notice: {n}");
    }
    for (name, r) in &rows {
        summary.push_str(&metrics_text(name, r));
    }
    let text = out.join("fusion_ablation.txt");
    std::fs::write(&text, summary)?;
    Ok(FusionAblationOutcome {
        rows,
        notices,
        files: vec![table, trace, text],
    })
}

/// Options of the streaming `infer` command.
#[derive(Debug, Clone, Default)]
pub struct InferOptions {
    pub rules: Option<PathBuf>,
    pub label_column: Option<String>,
    /// Overrides of the update parameters stored in the model file.
    pub update: Option<UpdateConfig>,
    pub confirm_retrain: bool,
}

#[derive(Debug, Clone)]
pub struct InferOutcome {
    pub rows: usize,
    pub retrains: usize,
    pub awaiting_confirmation: bool,
    pub notifications: usize,
    pub files: Vec<PathBuf>,
}

/// Streams a CSV file through a saved model with anomaly detection and
/// retraining; writes per-row verdicts and, after a retrain, the updated
/// model.
pub fn run_infer(model_path: &Path, data_path: &Path, out: &Path, opts: &InferOptions) -> Result<InferOutcome> {
    let model = ModelFile::load(model_path)?;
    let label_column = LabelColumn::from(opts.label_column.as_deref().unwrap_or("label"));
    let (data, labeled) = load_csv_unlabeled(data_path, &label_column)?;
    let rules = opts.rules.as_ref().map(RuleModel::load).transpose()?;
    let update = opts.update.clone().unwrap_or(model.update.clone());
    let train = model.train.clone().with_feature_names(data.names_or_default())?;
    let mut up = ModelUpdater::new(model.ensemble.clone(), rules, train, model.val.clone(), update.clone(), SplitSpec::default())?;
    if opts.confirm_retrain {
        up.confirm_retrain();
    }
    std::fs::create_dir_all(out)?;
    let mut header: Vec<String> = vec!["index".into()];
    if labeled {
        header.push("truth".into());
    }
    header.extend(
        [
            "y_ec", "y_sys", "y_a", "phase", "u_d", "u_y", "conflict_d", "conflict_y", "u_d_sys", "u_y_sys", "members",
        ]
        .map(String::from),
    );
    let mut rows = Vec::new();
    let mut series = Vec::new();
    let mut awaiting = false;
    let mut files = Vec::new();
    for (i, row) in data.rows().enumerate() {
        let o = up.observe(row)?;
        let mut r = vec![i.to_string()];
        if labeled {
            r.push(data.label(i).to_string());
        }
        let s = o.sys.as_ref();
        r.extend([
            o.ec.y_ec.to_string(),
            s.map_or(String::new(), |s| s.y_sys.to_string()),
            o.step.y_a.to_string(),
            o.step.phase.to_string(),
            fmt_f(o.ec.u_d),
            fmt_f(o.ec.u_y),
            fmt_f(o.ec.conflict_d),
            fmt_f(o.ec.conflict_y),
            s.map_or(String::new(), |s| fmt_f(s.u_d_sys)),
            s.map_or(String::new(), |s| fmt_f(s.u_y_sys)),
            o.ec.member_predictions.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(";"),
        ]);
        rows.push(r);
        if let Some(s) = s {
            series.push(UncertaintySample {
                u_d_sys: s.conflict_d_sys,
                u_y_sys: s.conflict_y_sys,
                u_ke: Some(s.source_masses[1].theta()),
            });
        }
        awaiting |= o.step.phase == Phase::RetrainReady && o.retrained.is_none() && !up.is_pending();
    }
    let table = out.join("predictions.csv");
    write_table(&table, &header, &rows)?;
    files.push(table);
    let notes = klafate_update_signal(&series, &update);
    if !notes.is_empty() {
        let p = out.join("notifications.jsonl");
        append_notifications(&p, &notes)?;
        files.push(p);
    }
    for (j, r) in up.reports().iter().enumerate() {
        let p = out.join(format!("retrain_report_{j}.json"));
        r.write(&p)?;
        files.push(p);
    }
    if !up.reports().is_empty() {
        let p = out.join("model_updated.evifuse");
        ModelFile {
            ensemble: up.ensemble().clone(),
            train: up.train_set().clone(),
            val: up.val_set().clone(),
            update: up.detector().config().clone(),
        }
        .save(&p)?;
        files.push(p);
    }
    Ok(InferOutcome {
        rows: data.n_rows(),
        retrains: up.reports().len(),
        awaiting_confirmation: awaiting && up.reports().is_empty(),
        notifications: notes.len(),
        files,
    })
}

/// System fusion of a saved ensemble with a rule model, plus the matched
/// troubleshooting content when a knowledge base is given.
pub fn run_fuse(
    model_path: &Path,
    rules_path: &Path,
    kb_path: Option<&Path>,
    data_path: &Path,
    label_column: Option<&str>,
    out: &Path,
) -> Result<PathBuf> {
    let model = ModelFile::load(model_path)?;
    let rules = RuleModel::load(rules_path)?;
    if !rules.frame().same_as(model.ensemble.frame()) {
        return Err(Error::FrameMismatch);
    }
    let kb = kb_path.map(|p| kb_load(p, rules.frame())).transpose()?;
    let (data, labeled) = load_csv_unlabeled(data_path, &LabelColumn::from(label_column.unwrap_or("label")))?;
    let verdicts = infer_rows(&model.ensemble, Some(&rules), &data.names_or_default(), &data)?;
    std::fs::create_dir_all(out)?;
    let mut header: Vec<String> = vec!["index".into()];
    if labeled {
        header.push("truth".into());
    }
    header.extend(
        [
            "y_ec", "y_ke", "y_sys", "u_ke", "u_d_sys", "u_y_sys", "conflict_d_sys", "conflict_y_sys",
            "failure_mode", "recommendations",
        ]
        .map(String::from),
    );
    let rows: Vec<Vec<String>> = verdicts
        .iter()
        .enumerate()
        .map(|(i, (v, sys))| {
            let (ke, s) = sys.as_ref().expect("rules are configured");
            let mut r = vec![i.to_string()];
            if labeled {
                r.push(data.label(i).to_string());
            }
            let (fm, rec) = match kb.as_ref().map(|kb| match_assessment(kb, s.y_sys)) {
                Some(Assessment::Matched(t)) => (t.failure_mode.clone(), t.recommendations.join("; ")),
                Some(Assessment::NoAssessment) => ("no assessment".into(), String::new()),
                None => (String::new(), String::new()),
            };
            r.extend([
                v.y_ec.to_string(),
                ke.y_ke.to_string(),
                s.y_sys.to_string(),
                fmt_f(ke.u),
                fmt_f(s.u_d_sys),
                fmt_f(s.u_y_sys),
                fmt_f(s.conflict_d_sys),
                fmt_f(s.conflict_y_sys),
                fm,
                rec,
            ]);
            r
        })
        .collect();
    let p = out.join("fusion.csv");
    write_table(&p, &header, &rows)?;
    Ok(p)
}

/// Scores a predictions table against its `truth` column. The prediction
/// column defaults to the first of `y_a`, `y_sys`, `y_ec` that is present
/// and non-empty.
pub fn run_report(predictions: &Path, column: Option<&str>, out: &Path) -> Result<MetricsReport> {
    if !predictions.exists() {
        return Err(Error::FileNotFound(predictions.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(predictions)?;
    let headers: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;
    let pos = |name: &str| headers.iter().position(|h| h == name);
    let truth_col = pos("truth").ok_or_else(|| Error::MissingLabelColumn("truth".into()))?;
    let pred_col = match column {
        Some(c) => pos(c).ok_or_else(|| Error::MissingLabelColumn(c.into()))?,
        None => ["y_a", "y_sys", "y_ec"]
            .iter()
            .filter_map(|c| pos(c))
            .find(|&i| records.iter().all(|r| !r[i].is_empty()))
            .ok_or_else(|| Error::MissingLabelColumn("y_a|y_sys|y_ec".into()))?,
    };
    let parse = |r: &csv::StringRecord, c: usize, row: usize| {
        r[c].trim().parse::<Label>().map_err(|_| Error::Parse {
            row: row + 1,
            column: headers[c].clone(),
            message: format!("{:?} is not an integer label", &r[c]),
        })
    };
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for (i, r) in records.iter().enumerate() {
        truth.push(parse(r, truth_col, i)?);
        pred.push(parse(r, pred_col, i)?);
    }
    let mut labels = truth.clone();
    labels.sort_unstable();
    labels.dedup();
    let frame = Frame::new(labels)?;
    let report = compute_metrics(&truth, &pred, &frame)?;
    std::fs::create_dir_all(out)?;
    write_metrics(out.join("metrics.csv"), &report)?;
    write_confusion(out.join("confusion.csv"), &report)?;
    std::fs::write(
        out.join("report.txt"),
        metrics_text(&format!("{} vs truth", headers[pred_col]), &report),
    )?;
    Ok(report)
}
