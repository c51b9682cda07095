//! Model files and the file-based experiment runners.

use evifuse::harness::config::{DataSource, SyntheticSpec};
use evifuse::harness::experiments::{run_infer, run_report, run_train, InferOptions};
use evifuse::harness::{ExperimentConfig, ModelFile, MODEL_MAGIC};
use evifuse::update::UpdateConfig;
use evifuse::Error;

fn small_config(out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        data: DataSource::Synthetic(SyntheticSpec {
            n_classes: 4,
            n_features: 5,
            n_per_class: 120,
            ..SyntheticSpec::default()
        }),
        anomaly_class: Some(3),
        out: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

#[test]
fn model_file_round_trips_and_rejects_foreign_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let t = run_train(&cfg).unwrap();
    assert!(t.test_metrics.macro_f1 >= 0.9);
    let text = std::fs::read_to_string(&t.model_path).unwrap();
    assert!(text.starts_with(MODEL_MAGIC));
    let m = ModelFile::load(&t.model_path).unwrap();
    assert_eq!(ModelFile::from_text(&m.to_text().unwrap()).unwrap(), m);
    assert_eq!(m.update, cfg.update);

    let foreign = text.replacen(MODEL_MAGIC, "SOMETHING-ELSE", 1);
    assert!(matches!(ModelFile::from_text(&foreign), Err(Error::ModelFormat(_))));
    let truncated = &text[..text.len() / 2];
    assert!(matches!(ModelFile::from_text(truncated), Err(Error::ModelFormat(_))));
    assert!(matches!(
        ModelFile::load(dir.path().join("missing.evifuse")),
        Err(Error::FileNotFound(_))
    ));
}

#[test]
fn infer_then_report_on_a_known_stream() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let t = run_train(&cfg).unwrap();
    let m = ModelFile::load(&t.model_path).unwrap();
    let csv = dir.path().join("stream.csv");
    let names = m.train.names_or_default();
    let mut w = String::new();
    w.push_str(&names.join(","));
    w.push_str(",label\n");
    // Constant-class segments, as a process would produce them.
    let mut order: Vec<usize> = (0..m.val.n_rows()).collect();
    order.sort_by_key(|&i| m.val.label(i));
    for i in order {
        let (row, l) = (m.val.row(i), m.val.label(i));
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        w.push_str(&format!("{},{l}\n", cells.join(",")));
    }
    std::fs::write(&csv, w).unwrap();
    let out = dir.path().join("infer");
    // Segments here are only 24 rows, so use a short window; the stored
    // window of 20 would lag about 10 rows at every class switch.
    let opts = InferOptions {
        update: Some(UpdateConfig {
            window_size: 2,
            ..m.update.clone()
        }),
        ..InferOptions::default()
    };
    let r = run_infer(&t.model_path, &csv, &out, &opts).unwrap();
    assert_eq!(r.rows, m.val.n_rows());
    assert_eq!(r.retrains, 0);
    let report = run_report(&out.join("predictions.csv"), None, &dir.path().join("report")).unwrap();
    assert!(report.accuracy >= 0.9, "smoothed accuracy {}", report.accuracy);
    let raw = run_report(&out.join("predictions.csv"), Some("y_ec"), &dir.path().join("raw")).unwrap();
    assert!(raw.accuracy >= 0.9, "raw accuracy {}", raw.accuracy);
    assert!(matches!(
        run_report(&out.join("predictions.csv"), Some("nope"), &dir.path().join("raw")),
        Err(Error::MissingLabelColumn(_))
    ));
    for f in ["metrics.csv", "confusion.csv", "report.txt"] {
        assert!(dir.path().join("report").join(f).exists(), "{f}");
    }
}

#[test]
fn invalid_configs_are_rejected_before_any_work() {
    let mut cfg = ExperimentConfig::default();
    cfg.members.truncate(1);
    assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    let e = ExperimentConfig::from_json("{ \"seed\": \"x\" }").unwrap_err();
    assert!(e.to_string().contains("line 1"), "{e}");
    assert!(matches!(
        ExperimentConfig::load("/nonexistent/config.json"),
        Err(Error::FileNotFound(_))
    ));
}
