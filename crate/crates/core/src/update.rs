//! Uncertainty-monitored anomaly detection, anomalous-data collection and
//! retraining of the ensemble on a frame extended by the anomaly label.
//!
//! The detector watches the conflict produced while folding evidence. An
//! observation is flagged when both the Dempster and the Yager conflict of a
//! tier exceed their thresholds. Flags pass through a prediction window, so
//! isolated spikes do not start a run and short gaps do not end one. A run is
//! committed to the anomaly buffer once it outlasts the detection patience;
//! once the buffer holds `threshold_size` rows the ensemble can be retrained.

use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use crate::classifiers::{grid_search, HyperGrid};
use crate::data::{concat, split, Dataset, SplitSpec};
use crate::ecet::{ec_infer, EnsembleClassifier, EnsembleVerdict, PredictionWindow, WindowMode};
use crate::error::{Error, Result};
use crate::frame::{Frame, Label};
use crate::infusion::{system_fuse, SystemVerdict};
use crate::klafate::RuleModel;
use crate::metrics::compute_metrics;

pub const DEFAULT_ANOMALY_LABEL: Label = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpdateConfig {
    pub tr_d_max: f64,
    pub tr_y_max: f64,
    /// Minimum committed anomaly rows before retraining.
    pub threshold_size: usize,
    /// Prediction window capacity.
    pub window_size: usize,
    pub window_mode: WindowMode,
    /// Consecutive flags needed before a run is committed.
    pub patience: usize,
    pub anomaly_label: Label,
    /// Re-run the default grid search for each member when retraining.
    pub research_hyperparameters: bool,
    /// Retrain only after an explicit confirmation.
    pub semi_automatic: bool,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        Self {
            tr_d_max: 0.5,
            tr_y_max: 0.5,
            threshold_size: 100,
            window_size: 20,
            window_mode: WindowMode::Majority,
            patience: 15,
            anomaly_label: DEFAULT_ANOMALY_LABEL,
            research_hyperparameters: false,
            semi_automatic: false,
        }
    }
}

impl UpdateConfig {
    pub fn validate(&self, frame: &Frame) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !unit(self.tr_d_max) || !unit(self.tr_y_max) {
            return Err(Error::InvalidConfig(
                "uncertainty thresholds must lie in (0, 1)".into(),
            ));
        }
        if self.patience == 0 || self.threshold_size == 0 {
            return Err(Error::InvalidConfig(
                "patience and threshold size must be positive".into(),
            ));
        }
        if self.threshold_size < self.patience {
            return Err(Error::InvalidConfig(format!(
                "threshold size {} is smaller than patience {}",
                self.threshold_size, self.patience
            )));
        }
        if frame.contains(self.anomaly_label) {
            return Err(Error::InvalidConfig(format!(
                "anomaly label {} is already a known class",
                self.anomaly_label
            )));
        }
        Ok(())
    }
}

/// `C_A`: a tier fires when both of its readings exceed their thresholds;
/// the observation is anomalous when either tier fires. Without a rule
/// model only the ensemble tier exists.
pub fn anomaly_flag(ec: (f64, f64), sys: Option<(f64, f64)>, cfg: &UpdateConfig) -> bool {
    let fires = |(d, y): (f64, f64)| d > cfg.tr_d_max && y > cfg.tr_y_max;
    fires(ec) || sys.is_some_and(fires)
}

/// Flag of one observation from its verdicts, read from the last-step
/// conflicts of each fold.
pub fn verdict_flag(ec: &EnsembleVerdict, sys: Option<&SystemVerdict>, cfg: &UpdateConfig) -> bool {
    anomaly_flag(
        (ec.conflict_d, ec.conflict_y),
        sys.map(|s| (s.conflict_d_sys, s.conflict_y_sys)),
        cfg,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Normal,
    Suspect,
    Collecting,
    RetrainReady,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Sequential anomaly detector for one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyDetector {
    cfg: UpdateConfig,
    i_a: usize,
    temp: Dataset,
    committed: Dataset,
    run_committed: bool,
    window: PredictionWindow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub y_a: Label,
    /// Flag before smoothing.
    pub raw_flag: bool,
    /// Flag after smoothing; this is what drives the state machine.
    pub c_a: bool,
    pub phase: Phase,
}

impl AnomalyDetector {
    pub fn new(cfg: UpdateConfig, n_features: usize) -> Self {
        let window = PredictionWindow::new(cfg.window_size, cfg.window_mode);
        Self {
            cfg,
            i_a: 0,
            temp: Dataset::empty(n_features),
            committed: Dataset::empty(n_features),
            run_committed: false,
            window,
        }
    }

    pub fn config(&self) -> &UpdateConfig {
        &self.cfg
    }

    pub fn anomaly_label(&self) -> Label {
        self.cfg.anomaly_label
    }

    pub fn consecutive(&self) -> usize {
        self.i_a
    }

    pub fn temp_buffer(&self) -> &Dataset {
        &self.temp
    }

    pub fn committed_buffer(&self) -> &Dataset {
        &self.committed
    }

    pub fn phase(&self) -> Phase {
        if self.committed.n_rows() >= self.cfg.threshold_size {
            Phase::RetrainReady
        } else if !self.committed.is_empty() {
            Phase::Collecting
        } else if self.i_a > 0 {
            Phase::Suspect
        } else {
            Phase::Normal
        }
    }

    /// Clears all buffers and switches to a fresh anomaly label.
    pub fn reset(&mut self, anomaly_label: Label) {
        self.cfg.anomaly_label = anomaly_label;
        self.i_a = 0;
        self.temp = Dataset::empty(self.temp.n_features());
        self.committed = Dataset::empty(self.committed.n_features());
        self.run_committed = false;
        self.window.clear();
    }

    /// Advances the state machine with an already computed raw flag.
    /// `base_label` is the label reported when the observation is not
    /// anomalous.
    pub fn step_flag(&mut self, observation: &[f64], raw_flag: bool, base_label: Label) -> Result<StepOutcome> {
        let a_k = self.cfg.anomaly_label;
        let y_a = self.window.push(if raw_flag { a_k } else { base_label });
        let c_a = y_a == a_k;
        if c_a {
            self.i_a += 1;
            if self.run_committed {
                self.committed.push_row(observation, a_k)?;
            } else {
                self.temp.push_row(observation, a_k)?;
                if self.i_a > self.cfg.patience {
                    self.committed = concat(&self.committed, &self.temp)?;
                    self.temp = Dataset::empty(self.temp.n_features());
                    self.run_committed = true;
                }
            }
        } else {
            self.i_a = 0;
            self.temp = Dataset::empty(self.temp.n_features());
            self.run_committed = false;
        }
        Ok(StepOutcome {
            y_a,
            raw_flag,
            c_a,
            phase: self.phase(),
        })
    }

    /// Read-only variant of [`Self::step_flag`] used while a retrain is
    /// pending: the label is smoothed but nothing is collected.
    fn observe_only(&mut self, raw_flag: bool, base_label: Label) -> StepOutcome {
        let a_k = self.cfg.anomaly_label;
        let y_a = self.window.push(if raw_flag { a_k } else { base_label });
        StepOutcome {
            y_a,
            raw_flag,
            c_a: y_a == a_k,
            phase: self.phase(),
        }
    }
}

/// One detector step from the verdicts of an observation. The base label is
/// the system prediction when a rule model is fused, the ensemble's
/// otherwise.
pub fn detector_step(
    state: &mut AnomalyDetector,
    observation: &[f64],
    ec: &EnsembleVerdict,
    sys: Option<&SystemVerdict>,
) -> Result<StepOutcome> {
    let flag = verdict_flag(ec, sys, &state.cfg);
    let base = sys.map_or(ec.y_ec, |s| s.y_sys);
    state.step_flag(observation, flag, base)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberScore {
    pub member: String,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainReport {
    pub anomaly_label: Label,
    pub next_anomaly_label: Label,
    pub frame_before: Vec<Label>,
    pub frame_after: Vec<Label>,
    pub committed_rows: usize,
    pub anomaly_train_rows: usize,
    pub anomaly_val_rows: usize,
    pub anomaly_test_rows: usize,
    pub train_rows: usize,
    pub val_rows: usize,
    pub threshold_size: usize,
    pub window_size: usize,
    pub patience: usize,
    pub hyperparameters_searched: bool,
    /// Validation macro-F1 of the old members on the old validation set.
    pub before: Vec<MemberScore>,
    /// Validation macro-F1 of the retrained members on the new validation set.
    pub after: Vec<MemberScore>,
}

impl RetrainReport {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RetrainOutcome {
    pub ensemble: EnsembleClassifier,
    pub frame: Frame,
    pub report: RetrainReport,
    pub train: Dataset,
    pub val: Dataset,
    /// Held-out committed anomaly rows, labeled with the anomaly label.
    pub anomaly_test: Dataset,
}

fn member_scores(ec: &EnsembleClassifier, val: &Dataset) -> Result<Vec<MemberScore>> {
    ec.members()
        .iter()
        .map(|m| {
            let f1 = if val.is_empty() {
                0.0
            } else {
                compute_metrics(val.labels(), &m.predict_all(val)?, ec.frame())?.macro_f1
            };
            Ok(MemberScore {
                member: m.spec().to_string(),
                macro_f1: f1,
            })
        })
        .collect()
}

/// Retrains every member from scratch on the old training data plus the
/// committed anomaly rows, over the frame extended by the anomaly label.
/// Resets `state` with the next unused label.
pub fn retrain(
    ec: &EnsembleClassifier,
    old_train: &Dataset,
    old_val: &Dataset,
    state: &mut AnomalyDetector,
    split_spec: &SplitSpec,
) -> Result<RetrainOutcome> {
    let phase = state.phase();
    if phase != Phase::RetrainReady {
        return Err(Error::NotReady(phase.to_string()));
    }
    let a_k = state.anomaly_label();
    let committed = state.committed_buffer();
    let (tr_a, va_a, te_a) = split(committed, split_spec)?;
    let smallest = tr_a.n_rows().min(va_a.n_rows()).min(te_a.n_rows());
    if smallest < 3 {
        return Err(Error::ClassTooSmall {
            label: a_k,
            count: smallest,
            required: 3,
        });
    }
    let train = concat(old_train, &tr_a)?;
    let val = concat(old_val, &va_a)?;
    let frame = ec.frame().extend(a_k)?;

    let specs = if state.cfg.research_hyperparameters {
        ec.specs()
            .iter()
            .map(|s| Ok(grid_search(&HyperGrid::default_for(s.kind()), &train, &val, &frame)?.best))
            .collect::<Result<Vec<_>>>()?
    } else {
        ec.specs()
    };
    let ensemble = EnsembleClassifier::fit(&specs, &train, &val, &frame, ec.k(), ec.policy())?;
    let next = frame.next_unused_from(a_k + 1);
    let report = RetrainReport {
        anomaly_label: a_k,
        next_anomaly_label: next,
        frame_before: ec.frame().labels().to_vec(),
        frame_after: frame.labels().to_vec(),
        committed_rows: committed.n_rows(),
        anomaly_train_rows: tr_a.n_rows(),
        anomaly_val_rows: va_a.n_rows(),
        anomaly_test_rows: te_a.n_rows(),
        train_rows: train.n_rows(),
        val_rows: val.n_rows(),
        threshold_size: state.cfg.threshold_size,
        window_size: state.cfg.window_size,
        patience: state.cfg.patience,
        hyperparameters_searched: state.cfg.research_hyperparameters,
        before: member_scores(ec, old_val)?,
        after: member_scores(&ensemble, &val)?,
    };
    state.reset(next);
    Ok(RetrainOutcome {
        ensemble,
        frame,
        report,
        train,
        val,
        anomaly_test: te_a,
    })
}

/// Where retraining runs once the detector is ready.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrainMode {
    /// On the calling thread, before the next observation.
    #[default]
    Inline,
    /// On a worker thread; the old model keeps answering until the new one
    /// is swapped in between two observations.
    Background,
}

/// Everything produced for one streamed observation.
#[derive(Debug, Clone)]
pub struct Observation {
    pub ec: EnsembleVerdict,
    pub sys: Option<SystemVerdict>,
    pub step: StepOutcome,
    /// Set when a retrain finished during this call.
    pub retrained: Option<RetrainReport>,
}

/// Runs the ensemble (and rule model), the detector and retraining over a
/// stream.
#[derive(Debug)]
pub struct ModelUpdater {
    ensemble: EnsembleClassifier,
    rules: Option<RuleModel>,
    feature_names: Vec<String>,
    train: Dataset,
    val: Dataset,
    detector: AnomalyDetector,
    split_spec: SplitSpec,
    mode: RetrainMode,
    confirmed: bool,
    pending: Option<JoinHandle<Result<(RetrainOutcome, AnomalyDetector)>>>,
    reports: Vec<RetrainReport>,
    anomaly_tests: Vec<Dataset>,
}

impl ModelUpdater {
    pub fn new(
        ensemble: EnsembleClassifier,
        rules: Option<RuleModel>,
        train: Dataset,
        val: Dataset,
        cfg: UpdateConfig,
        split_spec: SplitSpec,
    ) -> Result<Self> {
        cfg.validate(ensemble.frame())?;
        let feature_names = train.names_or_default();
        if let Some(r) = &rules {
            if !r.frame().same_as(ensemble.frame()) {
                return Err(Error::FrameMismatch);
            }
            r.bind(&feature_names)?;
        }
        let detector = AnomalyDetector::new(cfg, ensemble.n_features());
        Ok(Self {
            ensemble,
            rules,
            feature_names,
            train,
            val,
            detector,
            split_spec,
            mode: RetrainMode::Inline,
            confirmed: false,
            pending: None,
            reports: Vec::new(),
            anomaly_tests: Vec::new(),
        })
    }

    pub fn with_mode(mut self, mode: RetrainMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn ensemble(&self) -> &EnsembleClassifier {
        &self.ensemble
    }

    pub fn rules(&self) -> Option<&RuleModel> {
        self.rules.as_ref()
    }

    pub fn detector(&self) -> &AnomalyDetector {
        &self.detector
    }

    pub fn train_set(&self) -> &Dataset {
        &self.train
    }

    pub fn val_set(&self) -> &Dataset {
        &self.val
    }

    pub fn reports(&self) -> &[RetrainReport] {
        &self.reports
    }

    /// Held-out anomaly rows of every retrain so far.
    pub fn anomaly_tests(&self) -> &[Dataset] {
        &self.anomaly_tests
    }

    pub fn is_pending(&self) -> bool {
        self.pending.is_some()
    }

    /// Allows the next retrain in semi-automatic mode.
    pub fn confirm_retrain(&mut self) {
        self.confirmed = true;
    }

    /// Fused verdicts without touching the detector.
    pub fn infer(&self, row: &[f64]) -> Result<(EnsembleVerdict, Option<SystemVerdict>)> {
        let ec = ec_infer(&self.ensemble, row)?;
        let sys = match &self.rules {
            Some(r) => {
                let ke = r.bind(&self.feature_names)?.infer(row)?;
                Some(system_fuse(&ec, &ke.mass)?)
            }
            None => None,
        };
        Ok((ec, sys))
    }

    pub fn observe(&mut self, row: &[f64]) -> Result<Observation> {
        let mut retrained = self.poll_pending(false)?;
        let (ec, sys) = self.infer(row)?;
        let flag = verdict_flag(&ec, sys.as_ref(), self.detector.config());
        let base = sys.as_ref().map_or(ec.y_ec, |s| s.y_sys);
        let step = if self.pending.is_some() {
            self.detector.observe_only(flag, base)
        } else {
            self.detector.step_flag(row, flag, base)?
        };
        if step.phase == Phase::RetrainReady && self.pending.is_none() {
            let allowed = !self.detector.config().semi_automatic || self.confirmed;
            if allowed {
                self.confirmed = false;
                match self.mode {
                    RetrainMode::Inline => {
                        let mut detector = self.detector.clone();
                        let outcome = retrain(&self.ensemble, &self.train, &self.val, &mut detector, &self.split_spec)?;
                        retrained = Some(self.install(outcome, detector)?);
                    }
                    RetrainMode::Background => self.spawn_retrain(),
                }
            }
        }
        Ok(Observation {
            ec,
            sys,
            step,
            retrained,
        })
    }

    /// Waits for a background retrain, if any, and installs its result.
    pub fn finish_pending(&mut self) -> Result<Option<RetrainReport>> {
        self.poll_pending(true)
    }

    fn spawn_retrain(&mut self) {
        let ensemble = self.ensemble.clone();
        let train = self.train.clone();
        let val = self.val.clone();
        let mut detector = self.detector.clone();
        let split_spec = self.split_spec;
        self.pending = Some(std::thread::spawn(move || {
            let outcome = retrain(&ensemble, &train, &val, &mut detector, &split_spec)?;
            Ok((outcome, detector))
        }));
    }

    fn poll_pending(&mut self, block: bool) -> Result<Option<RetrainReport>> {
        let ready = self.pending.as_ref().is_some_and(|h| block || h.is_finished());
        if !ready {
            return Ok(None);
        }
        let handle = self.pending.take().expect("checked above");
        let (outcome, detector) = handle
            .join()
            .map_err(|_| Error::InvalidConfig("retraining worker panicked".into()))??;
        self.install(outcome, detector).map(Some)
    }

    fn install(&mut self, outcome: RetrainOutcome, detector: AnomalyDetector) -> Result<RetrainReport> {
        if let Some(r) = &self.rules {
            self.rules = Some(r.extend_frame(outcome.report.anomaly_label)?);
        }
        self.ensemble = outcome.ensemble;
        self.train = outcome.train;
        self.val = outcome.val;
        self.detector = detector;
        self.anomaly_tests.push(outcome.anomaly_test);
        self.reports.push(outcome.report.clone());
        Ok(outcome.report)
    }
}

/// Which tier raised a knowledge-update notification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalTier {
    System,
    Knowledge,
    Both,
}

/// One uncertainty reading fed to [`klafate_update_signal`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySample {
    pub u_d_sys: f64,
    pub u_y_sys: f64,
    /// Θ mass of the rule model, when one is configured.
    pub u_ke: Option<f64>,
}

/// Request for the expert team to review the rule model. Nothing is changed
/// automatically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    /// Index of the sample at which the run reached the patience.
    pub index: usize,
    pub run_start: usize,
    pub tier: SignalTier,
    pub u_d_sys: f64,
    pub u_y_sys: f64,
    pub u_ke: Option<f64>,
}

fn sample_tier(s: &UncertaintySample, cfg: &UpdateConfig) -> Option<SignalTier> {
    let sys = s.u_d_sys > cfg.tr_d_max && s.u_y_sys > cfg.tr_y_max;
    let ke = s.u_ke.is_some_and(|u| u > cfg.tr_d_max);
    match (sys, ke) {
        (true, true) => Some(SignalTier::Both),
        (true, false) => Some(SignalTier::System),
        (false, true) => Some(SignalTier::Knowledge),
        (false, false) => None,
    }
}

/// Debounced trigger: one notification per run of high-uncertainty samples
/// once the run reaches `cfg.patience` samples.
pub fn klafate_update_signal(series: &[UncertaintySample], cfg: &UpdateConfig) -> Vec<Notification> {
    let mut out = Vec::new();
    let mut run = 0usize;
    for (i, s) in series.iter().enumerate() {
        match sample_tier(s, cfg) {
            Some(tier) => {
                run += 1;
                if run == cfg.patience {
                    out.push(Notification {
                        index: i,
                        run_start: i + 1 - run,
                        tier,
                        u_d_sys: s.u_d_sys,
                        u_y_sys: s.u_y_sys,
                        u_ke: s.u_ke,
                    });
                }
            }
            None => run = 0,
        }
    }
    out
}

/// Appends notifications to `path`, one JSON record per line.
pub fn append_notifications(path: impl AsRef<Path>, notes: &[Notification]) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    for n in notes {
        writeln!(f, "{}", serde_json::to_string(n)?)?;
    }
    Ok(())
}
