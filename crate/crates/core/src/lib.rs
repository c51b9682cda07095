//! Decision-level fusion of a classifier ensemble and an expert rule model
//! under Dempster-Shafer evidence theory, with uncertainty-driven anomaly
//! detection and automatic retraining.

pub mod assessment;
pub mod bpa;
pub mod classifiers;
pub mod data;
pub mod ecet;
pub mod error;
pub mod evidence;
pub mod frame;
pub mod harness;
pub mod infusion;
pub mod klafate;
pub mod metrics;
pub mod update;

pub use error::{Error, Result};
pub use frame::{Frame, Label};
