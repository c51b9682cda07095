//! System-level fusion of the ensemble and the rule model.
//!
//! The system label always comes from the Dempster fold; the Yager fold is
//! carried alongside for uncertainty monitoring only.

use crate::ecet::EnsembleVerdict;
use crate::error::Result;
use crate::evidence::{argmax_class, combine_many, CombinationRule, MassFunction};
use crate::frame::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemVerdict {
    pub y_sys: Label,
    /// Θ mass of the Dempster fold.
    pub u_d_sys: f64,
    /// Θ mass of the Yager fold.
    pub u_y_sys: f64,
    /// Conflict of the last Dempster step.
    pub conflict_d_sys: f64,
    /// Conflict of the last Yager step.
    pub conflict_y_sys: f64,
    pub source_masses: Vec<MassFunction>,
    pub fused_mass: MassFunction,
    pub yager_mass: MassFunction,
}

/// Fuses the ensemble's Dempster mass with the rule-model mass.
pub fn system_fuse(ec_verdict: &EnsembleVerdict, ke_mass: &MassFunction) -> Result<SystemVerdict> {
    system_fuse_n(&[ec_verdict.fused_mass.clone(), ke_mass.clone()])
}

/// Left fold over any number of sources with both rules.
pub fn system_fuse_n(masses: &[MassFunction]) -> Result<SystemVerdict> {
    let yager = combine_many(masses, CombinationRule::Yager)?;
    let dempster = combine_many(masses, CombinationRule::Dempster)?;
    Ok(SystemVerdict {
        y_sys: argmax_class(&dempster.fused),
        u_d_sys: dempster.fused.theta().clamp(0.0, 1.0),
        u_y_sys: yager.fused.theta().clamp(0.0, 1.0),
        conflict_d_sys: dempster.conflict.clamp(0.0, 1.0),
        conflict_y_sys: yager.conflict.clamp(0.0, 1.0),
        source_masses: masses.to_vec(),
        fused_mass: dempster.fused,
        yager_mass: yager.fused,
    })
}
