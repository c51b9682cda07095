//! Frame of discernment: the ordered set of class labels every evidence
//! source reasons about.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer class label (fault-case ID).
pub type Label = i64;

/// Ordered, duplicate-free set of at least two class labels.
///
/// Cloning is cheap: the label list is shared. Index positions never change
/// for the lifetime of a frame, and [`Frame::extend`] only appends.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Label>", into = "Vec<Label>")]
pub struct Frame {
    labels: Arc<[Label]>,
}

impl Frame {
    pub fn new(labels: impl Into<Vec<Label>>) -> Result<Self> {
        let labels = labels.into();
        if labels.len() < 2 {
            return Err(Error::TooFewLabels(labels.len()));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::DuplicateLabel(*l));
            }
        }
        Ok(Self {
            labels: labels.into(),
        })
    }

    /// Returns a new frame with `label` appended last.
    pub fn extend(&self, label: Label) -> Result<Self> {
        if self.contains(label) {
            return Err(Error::DuplicateLabel(label));
        }
        let mut labels = self.labels.to_vec();
        labels.push(label);
        Ok(Self {
            labels: labels.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn index_of(&self, label: Label) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn contains(&self, label: Label) -> bool {
        self.labels.contains(&label)
    }

    pub fn label_at(&self, index: usize) -> Label {
        self.labels[index]
    }

    /// Cheap identity check first, structural equality second.
    pub fn same_as(&self, other: &Frame) -> bool {
        Arc::ptr_eq(&self.labels, &other.labels) || self.labels == other.labels
    }

    /// Smallest label `>= start` that is not in the frame.
    pub fn next_unused_from(&self, start: Label) -> Label {
        let mut candidate = start;
        while self.contains(candidate) {
            candidate += 1;
        }
        candidate
    }
}

impl TryFrom<Vec<Label>> for Frame {
    type Error = Error;

    fn try_from(labels: Vec<Label>) -> Result<Self> {
        Frame::new(labels)
    }
}

impl From<Frame> for Vec<Label> {
    fn from(frame: Frame) -> Self {
        frame.labels.to_vec()
    }
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Frame{:?}", &*self.labels)
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.labels.iter().map(|l| l.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}
