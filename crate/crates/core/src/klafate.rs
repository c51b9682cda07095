//! Expert rule model: ordered threshold rules over named process variables.
//!
//! Rules are conjunctions of conditions and are evaluated first-match, so
//! overlapping rules resolve deterministically by their order in the file.
//! When no rule fires the model answers with its default label at weight 1.
//!
//! Rule file (JSON):
//!
//! ```json
//! {
//!   "frame": [1, 2, 3],
//!   "default_label": 3,
//!   "sensitivity_exponent": 4,
//!   "rules": [
//!     { "label": 1, "conditions": [
//!         { "variable": "level", "op": ">", "value": 80.0, "weight": 0.9 },
//!         { "variable": "pressure", "op": "within", "low": 1.0, "high": 2.5, "weight": 0.7 }
//!     ] }
//!   ]
//! }
//! ```
//!
//! `op` is one of `<`, `<=`, `>`, `>=`, `==`, `within` (inclusive bounds).
//! `sensitivity_exponent` is optional and defaults to 4.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bpa::{prediction_to_mass, ConfidenceWeights, SensitivityFactor};
use crate::error::{Error, Result};
use crate::evidence::{argmax_class, MassFunction};
use crate::frame::{Frame, Label};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op")]
pub enum Comparator {
    #[serde(rename = "<")]
    Less { value: f64 },
    #[serde(rename = "<=")]
    LessEq { value: f64 },
    #[serde(rename = ">")]
    Greater { value: f64 },
    #[serde(rename = ">=")]
    GreaterEq { value: f64 },
    #[serde(rename = "==")]
    Equal { value: f64 },
    #[serde(rename = "within")]
    Within { low: f64, high: f64 },
}

impl Comparator {
    pub fn holds(&self, x: f64) -> bool {
        match *self {
            Comparator::Less { value } => x < value,
            Comparator::LessEq { value } => x <= value,
            Comparator::Greater { value } => x > value,
            Comparator::GreaterEq { value } => x >= value,
            Comparator::Equal { value } => x == value,
            Comparator::Within { low, high } => (low..=high).contains(&x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleCondition {
    pub variable: String,
    #[serde(flatten)]
    pub comparator: Comparator,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeRule {
    pub label: Label,
    pub conditions: Vec<RuleCondition>,
}

impl KnowledgeRule {
    /// Mean of the condition weights.
    pub fn weight(&self) -> f64 {
        self.conditions.iter().map(|c| c.weight).sum::<f64>() / self.conditions.len() as f64
    }
}

/// Anything that can look up a process variable by name.
pub trait VariableLookup {
    fn value(&self, name: &str) -> Option<f64>;
}

impl VariableLookup for HashMap<String, f64> {
    fn value(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl VariableLookup for HashMap<&str, f64> {
    fn value(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

/// A feature row paired with its column names.
#[derive(Debug, Clone, Copy)]
pub struct NamedRow<'a> {
    pub names: &'a [String],
    pub values: &'a [f64],
}

impl VariableLookup for NamedRow<'_> {
    fn value(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .and_then(|i| self.values.get(i).copied())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RuleFile {
    frame: Vec<Label>,
    default_label: Label,
    #[serde(default)]
    sensitivity_exponent: Option<u32>,
    rules: Vec<KnowledgeRule>,
}

/// Ordered rules plus an "otherwise" label.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleModel {
    frame: Frame,
    rules: Vec<KnowledgeRule>,
    default_label: Label,
    k: SensitivityFactor,
}

impl RuleModel {
    pub fn new(
        frame: Frame,
        rules: Vec<KnowledgeRule>,
        default_label: Label,
        k: SensitivityFactor,
    ) -> Result<Self> {
        let bad = |field: String, message: String| Error::RuleFile { field, message };
        if !frame.contains(default_label) {
            return Err(bad(
                "default_label".into(),
                format!("label {default_label} is not in the frame"),
            ));
        }
        for (i, r) in rules.iter().enumerate() {
            if !frame.contains(r.label) {
                return Err(bad(
                    format!("rules[{i}].label"),
                    format!("label {} is not in the frame", r.label),
                ));
            }
            if r.conditions.is_empty() {
                return Err(bad(
                    format!("rules[{i}].conditions"),
                    "a rule needs at least one condition".into(),
                ));
            }
            for (j, c) in r.conditions.iter().enumerate() {
                let at = format!("rules[{i}].conditions[{j}]");
                if !(0.0..=1.0).contains(&c.weight) {
                    return Err(bad(format!("{at}.weight"), format!("{} outside [0, 1]", c.weight)));
                }
                if let Comparator::Within { low, high } = c.comparator {
                    if low >= high {
                        return Err(bad(at, format!("range needs low < high, got [{low}, {high}]")));
                    }
                }
                if c.variable.trim().is_empty() {
                    return Err(bad(format!("{at}.variable"), "empty variable name".into()));
                }
            }
        }
        Ok(Self {
            frame,
            rules,
            default_label,
            k,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: RuleFile = serde_json::from_str(text).map_err(|e| Error::RuleFile {
            field: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        let frame = Frame::new(file.frame).map_err(|e| Error::RuleFile {
            field: "frame".into(),
            message: e.to_string(),
        })?;
        let k = match file.sensitivity_exponent {
            Some(f) => SensitivityFactor::new(f).map_err(|e| Error::RuleFile {
                field: "sensitivity_exponent".into(),
                message: e.to_string(),
            })?,
            None => SensitivityFactor::default(),
        };
        Self::new(frame, file.rules, file.default_label, k)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = RuleFile {
            frame: self.frame.labels().to_vec(),
            default_label: self.default_label,
            sensitivity_exponent: Some(self.k.exponent()),
            rules: self.rules.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn rules(&self) -> &[KnowledgeRule] {
        &self.rules
    }

    pub fn default_label(&self) -> Label {
        self.default_label
    }

    pub fn k(&self) -> SensitivityFactor {
        self.k
    }

    /// Same rules on a frame grown by `label`; no rule ever names it.
    pub fn extend_frame(&self, label: Label) -> Result<Self> {
        Ok(Self {
            frame: self.frame.extend(label)?,
            ..self.clone()
        })
    }

    /// Distinct variable names in order of first use.
    pub fn variables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in self.rules.iter().flat_map(|r| &r.conditions) {
            if !out.contains(&c.variable.as_str()) {
                out.push(&c.variable);
            }
        }
        out
    }

    /// Resolves variable names against dataset columns once, for fast
    /// evaluation over many rows.
    pub fn bind(&self, names: &[String]) -> Result<BoundRuleModel<'_>> {
        let columns = self
            .rules
            .iter()
            .map(|r| {
                r.conditions
                    .iter()
                    .map(|c| {
                        names
                            .iter()
                            .position(|n| *n == c.variable)
                            .ok_or_else(|| Error::MissingVariable(c.variable.clone()))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundRuleModel {
            model: self,
            columns,
        })
    }
}

/// A [`RuleModel`] whose variables are mapped to row positions.
#[derive(Debug, Clone)]
pub struct BoundRuleModel<'a> {
    model: &'a RuleModel,
    columns: Vec<Vec<usize>>,
}

impl BoundRuleModel<'_> {
    pub fn eval(&self, row: &[f64]) -> (Label, f64) {
        for (rule, cols) in self.model.rules.iter().zip(&self.columns) {
            if rule
                .conditions
                .iter()
                .zip(cols)
                .all(|(c, &i)| c.comparator.holds(row[i]))
            {
                return (rule.label, rule.weight());
            }
        }
        (self.model.default_label, 1.0)
    }

    pub fn infer(&self, row: &[f64]) -> Result<KnowledgeVerdict> {
        let (label, w) = self.eval(row);
        knowledge_verdict(self.model, label, w)
    }
}

/// First rule whose conditions all hold; `(default_label, 1.0)` otherwise.
pub fn rule_eval(model: &RuleModel, observation: &impl VariableLookup) -> Result<(Label, f64)> {
    for rule in &model.rules {
        let mut fires = true;
        for c in &rule.conditions {
            let x = observation
                .value(&c.variable)
                .ok_or_else(|| Error::MissingVariable(c.variable.clone()))?;
            if !c.comparator.holds(x) {
                fires = false;
                break;
            }
        }
        if fires {
            return Ok((rule.label, rule.weight()));
        }
    }
    Ok((model.default_label, 1.0))
}

/// Mass of the active rule, its scalar weight applied to every class.
pub fn rule_to_mass(model: &RuleModel, active_label: Label, w_active: f64) -> Result<MassFunction> {
    let weights = ConfidenceWeights::uniform(model.frame.clone(), w_active)?;
    prediction_to_mass(active_label, &weights, model.k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeVerdict {
    pub y_ke: Label,
    pub mass: MassFunction,
    pub u: f64,
    pub active_label: Label,
    pub w_active: f64,
}

impl KnowledgeVerdict {
    /// A zero-weight rule contributes no evidence.
    pub fn abstained(&self) -> bool {
        self.w_active == 0.0
    }
}

fn knowledge_verdict(model: &RuleModel, active_label: Label, w_active: f64) -> Result<KnowledgeVerdict> {
    let mass = rule_to_mass(model, active_label, w_active)?;
    Ok(KnowledgeVerdict {
        y_ke: argmax_class(&mass),
        u: mass.theta(),
        mass,
        active_label,
        w_active,
    })
}

pub fn klafate_infer(model: &RuleModel, observation: &impl VariableLookup) -> Result<KnowledgeVerdict> {
    let (label, w) = rule_eval(model, observation)?;
    knowledge_verdict(model, label, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_model(weights: &[f64]) -> RuleModel {
        let conditions = weights
            .iter()
            .map(|&w| RuleCondition {
                variable: "temp".into(),
                comparator: Comparator::Greater { value: 80.0 },
                weight: w,
            })
            .collect();
        RuleModel::new(
            Frame::new(vec![1, 2, 3]).unwrap(),
            vec![KnowledgeRule { label: 1, conditions }],
            3,
            SensitivityFactor::default(),
        )
        .unwrap()
    }

    fn obs(temp: f64) -> HashMap<String, f64> {
        HashMap::from([("temp".to_string(), temp)])
    }

    #[test]
    fn single_rule_and_otherwise_arm() {
        let m = temp_model(&[0.9]);
        assert_eq!(rule_eval(&m, &obs(85.0)).unwrap(), (1, 0.9));
        assert_eq!(rule_eval(&m, &obs(70.0)).unwrap(), (3, 1.0));
        let v = klafate_infer(&m, &obs(85.0)).unwrap();
        assert_eq!(v.y_ke, 1);
        assert!((v.u - 0.1).abs() < 1e-12);
        let v = klafate_infer(&m, &obs(70.0)).unwrap();
        assert_eq!(v.y_ke, 3);
        assert!(v.u.abs() < 1e-9);
    }

    #[test]
    fn rule_weight_is_condition_mean() {
        let m = temp_model(&[0.8, 0.6]);
        let (_, w) = rule_eval(&m, &obs(85.0)).unwrap();
        assert!((w - 0.7).abs() < 1e-12);
    }

    #[test]
    fn masses_follow_the_active_weight() {
        let m = temp_model(&[1.0]);
        let full = rule_to_mass(&m, 1, 1.0).unwrap();
        for (a, b) in full.singletons().iter().zip([0.9999, 0.00005, 0.00005]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(full.theta().abs() < 1e-12);
        let scaled = rule_to_mass(&m, 1, 0.7).unwrap();
        for (a, b) in scaled.singletons().iter().zip(full.singletons()) {
            assert!((a - 0.7 * b).abs() < 1e-12);
        }
        assert!((scaled.theta() - 0.3).abs() < 1e-12);
        let none = rule_to_mass(&m, 1, 0.0).unwrap();
        assert_eq!(none.theta(), 1.0);
        assert!(matches!(rule_to_mass(&m, 7, 1.0), Err(Error::LabelNotInFrame(7))));
    }

    #[test]
    fn abstaining_rule_is_vacuous() {
        let m = temp_model(&[0.0]);
        let v = klafate_infer(&m, &obs(90.0)).unwrap();
        assert!(v.abstained());
        assert_eq!(v.u, 1.0);
        assert_eq!(v.y_ke, 1);
    }

    #[test]
    fn missing_variable() {
        let m = temp_model(&[0.9]);
        let empty: HashMap<String, f64> = HashMap::new();
        assert!(matches!(rule_eval(&m, &empty), Err(Error::MissingVariable(v)) if v == "temp"));
        assert!(matches!(m.bind(&["x".to_string()]), Err(Error::MissingVariable(_))));
    }

    #[test]
    fn json_round_trip_and_diagnostics() {
        let text = r#"{
            "frame": [1, 2, 3],
            "default_label": 3,
            "rules": [
                {"label": 1, "conditions": [{"variable": "a", "op": "within", "low": 0, "high": 1, "weight": 0.5}]},
                {"label": 2, "conditions": [{"variable": "b", "op": "<=", "value": 4, "weight": 1}]}
            ]
        }"#;
        let m = RuleModel::from_json(text).unwrap();
        assert_eq!(m.variables(), vec!["a", "b"]);
        assert_eq!(RuleModel::from_json(&m.to_json().unwrap()).unwrap(), m);

        let names = vec!["b".to_string(), "a".to_string()];
        let bound = m.bind(&names).unwrap();
        assert_eq!(bound.eval(&[9.0, 1.0]), (1, 0.5));
        assert_eq!(bound.eval(&[4.0, 2.0]), (2, 1.0));
        assert_eq!(bound.eval(&[5.0, 2.0]), (3, 1.0));
        let row = NamedRow {
            names: &names,
            values: &[4.0, 2.0],
        };
        assert_eq!(rule_eval(&m, &row).unwrap(), (2, 1.0));

        let bad_range = text.replace("\"high\": 1", "\"high\": -1");
        assert!(matches!(
            RuleModel::from_json(&bad_range),
            Err(Error::RuleFile { field, .. }) if field == "rules[0].conditions[0]"
        ));
        let bad_label = text.replace("\"label\": 2", "\"label\": 9");
        assert!(matches!(
            RuleModel::from_json(&bad_label),
            Err(Error::RuleFile { field, .. }) if field == "rules[1].label"
        ));
        assert!(matches!(
            RuleModel::from_json("{\n \"frame\": [1,2],\n oops }"),
            Err(Error::RuleFile { field, .. }) if field.starts_with("line 3")
        ));
    }
}
