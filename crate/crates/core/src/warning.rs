//! Spray-window decision from predicted phase and nymph composition.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::features::{NymphStageRatios, PhaseLabel};

/// Operator configuration for the spray warning. The defaults target the
/// window where stages 2 and 3 dominate; they are not field-validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarningRule {
    pub watched_stages: BTreeSet<u8>,
    pub threshold: f64,
    pub require_phase3: bool,
}

impl Default for WarningRule {
    fn default() -> Self {
        WarningRule {
            watched_stages: [2, 3].into_iter().collect(),
            threshold: 0.55,
            require_phase3: true,
        }
    }
}

impl WarningRule {
    pub fn new(watched_stages: impl IntoIterator<Item = u8>, threshold: f64, require_phase3: bool) -> Result<Self, String> {
        let rule = WarningRule {
            watched_stages: watched_stages.into_iter().collect(),
            threshold,
            require_phase3,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(format!("warning threshold must lie in (0, 1], got {}", self.threshold));
        }
        if self.watched_stages.is_empty() {
            return Err("at least one watched stage is required".into());
        }
        if let Some(s) = self.watched_stages.iter().find(|s| !(1..=5).contains(*s)) {
            return Err(format!("watched stage {s} is outside 1..=5"));
        }
        Ok(())
    }

    /// Share of the composition that falls in the watched stages.
    pub fn watched_mass(&self, ratios: &NymphStageRatios) -> f64 {
        self.watched_stages.iter().map(|&s| ratios.stage(s as usize)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WarningStatus {
    NoAction,
    Watch,
    SprayWindow,
}

impl fmt::Display for WarningStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WarningStatus::NoAction => "no-action",
            WarningStatus::Watch => "watch",
            WarningStatus::SprayWindow => "spray-window",
        })
    }
}

pub fn warning_decision(phase: PhaseLabel, ratios: &NymphStageRatios, rule: &WarningRule) -> WarningStatus {
    let mass = rule.watched_mass(ratios);
    let in_field = phase == PhaseLabel::WheatField;
    if (in_field || !rule.require_phase3) && mass >= rule.threshold {
        WarningStatus::SprayWindow
    } else if in_field && mass >= rule.threshold / 2.0 {
        WarningStatus::Watch
    } else {
        WarningStatus::NoAction
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(v: [f64; 5]) -> NymphStageRatios {
        NymphStageRatios::new(v).unwrap()
    }

    #[test]
    fn examples() {
        let rule = WarningRule::default();
        let peak = r([0.0, 0.3, 0.3, 0.2, 0.2]);
        assert_eq!(warning_decision(PhaseLabel::WinterQuarters, &peak, &rule), WarningStatus::NoAction);
        assert_eq!(warning_decision(PhaseLabel::WheatField, &peak, &rule), WarningStatus::SprayWindow);
        let early = r([0.8, 0.1, 0.1, 0.0, 0.0]);
        assert_eq!(warning_decision(PhaseLabel::WheatField, &early, &rule), WarningStatus::NoAction);
        let rising = r([0.6, 0.2, 0.1, 0.1, 0.0]);
        assert_eq!(warning_decision(PhaseLabel::WheatField, &rising, &rule), WarningStatus::Watch);
    }

    #[test]
    fn phase_gate_can_be_lifted() {
        let rule = WarningRule {
            require_phase3: false,
            ..WarningRule::default()
        };
        let peak = r([0.0, 0.3, 0.3, 0.2, 0.2]);
        assert_eq!(warning_decision(PhaseLabel::Migration, &peak, &rule), WarningStatus::SprayWindow);
        let rising = r([0.6, 0.2, 0.1, 0.1, 0.0]);
        assert_eq!(warning_decision(PhaseLabel::Migration, &rising, &rule), WarningStatus::NoAction);
    }

    #[test]
    fn rule_validation() {
        assert!(WarningRule::new([2, 3], 0.0, true).is_err());
        assert!(WarningRule::new([2, 3], 1.0, true).is_ok());
        assert!(WarningRule::new([], 0.5, true).is_err());
        assert!(WarningRule::new([6], 0.5, true).is_err());
    }

    proptest! {
        #[test]
        fn more_watched_mass_never_downgrades(
            base in prop::array::uniform5(0.0f64..1.0),
            shift in 0.0f64..1.0,
            phase in 1u8..=3,
            threshold in 0.05f64..=1.0,
            gate in any::<bool>(),
        ) {
            let total: f64 = base.iter().sum();
            prop_assume!(total > 1e-6);
            let before = base.map(|v| v / total);
            // Move a fraction of the unwatched mass (stages 1, 4, 5) into stage 2.
            let mut after = before;
            let mut moved = 0.0;
            for i in [0, 3, 4] {
                let m = after[i] * shift;
                after[i] -= m;
                moved += m;
            }
            after[1] += moved;
            let fix = |mut v: [f64; 5]| {
                let residue = 1.0 - v.iter().sum::<f64>();
                v[1] += residue;
                NymphStageRatios::new(v.map(|x| x.max(0.0))).unwrap()
            };
            let rule = WarningRule::new([2, 3], threshold, gate).unwrap();
            let phase = PhaseLabel::from_index(phase as usize - 1).unwrap();
            let a = warning_decision(phase, &fix(before), &rule);
            let b = warning_decision(phase, &fix(after), &rule);
            prop_assert!(b >= a);
        }
    }
}
