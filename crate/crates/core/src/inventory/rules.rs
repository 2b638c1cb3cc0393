use std::fmt;
use std::str::FromStr;

use super::snapshot::{Grams, InventorySnapshot};
use super::InventoryError;
use crate::sensors::WEIGHT_SLOTS;

/// What a deficiency rule counts or weighs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleTarget {
    /// Triggered egg switches.
    Eggs,
    /// Pressed bottle buttons.
    Bottles,
    /// Weight slots holding something.
    Weights,
    /// Grams on one weight slot.
    WeightSlot(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Minimum {
    Count(usize),
    Mass(Grams),
}

/// `target >= minimum`, written one per line as e.g. `eggs >= 6` or
/// `weight[0] >= 200`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeficiencyRule {
    pub target: RuleTarget,
    pub minimum: Minimum,
}

impl fmt::Display for DeficiencyRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.target, self.minimum) {
            (RuleTarget::Eggs, Minimum::Count(n)) => write!(f, "eggs >= {n}"),
            (RuleTarget::Bottles, Minimum::Count(n)) => write!(f, "bottles >= {n}"),
            (RuleTarget::Weights, Minimum::Count(n)) => write!(f, "weights >= {n}"),
            (RuleTarget::WeightSlot(i), Minimum::Mass(g)) => write!(f, "weight[{i}] >= {g}"),
            (t, m) => write!(f, "{t:?} >= {m:?}"),
        }
    }
}

impl FromStr for DeficiencyRule {
    type Err = InventoryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || InventoryError::BadRule(s.trim().to_string());
        let (lhs, rhs) = s.split_once(">=").ok_or_else(bad)?;
        let (lhs, rhs) = (lhs.trim(), rhs.trim());
        let count = || rhs.parse::<usize>().map(Minimum::Count).map_err(|_| bad());
        match lhs {
            "eggs" => Ok(DeficiencyRule {
                target: RuleTarget::Eggs,
                minimum: count()?,
            }),
            "bottles" => Ok(DeficiencyRule {
                target: RuleTarget::Bottles,
                minimum: count()?,
            }),
            "weights" => Ok(DeficiencyRule {
                target: RuleTarget::Weights,
                minimum: count()?,
            }),
            _ => {
                let idx = lhs
                    .strip_prefix("weight[")
                    .and_then(|r| r.strip_suffix(']'))
                    .and_then(|i| i.trim().parse::<usize>().ok())
                    .filter(|i| *i < WEIGHT_SLOTS)
                    .ok_or_else(bad)?;
                let grams = rhs
                    .trim_end_matches('g')
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|g| g.is_finite() && *g >= 0.0)
                    .ok_or_else(bad)?;
                Ok(DeficiencyRule {
                    target: RuleTarget::WeightSlot(idx),
                    minimum: Minimum::Mass(Grams::from_f64(grams)),
                })
            }
        }
    }
}

/// Parses a rules file: one rule per line, `#` starts a comment.
pub fn parse_rules(text: &str) -> Result<Vec<DeficiencyRule>, InventoryError> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observed {
    Count(usize),
    Mass(Grams),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alert {
    pub rule: DeficiencyRule,
    pub current: Observed,
}

impl fmt::Display for Alert {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.rule.target, self.current, self.rule.minimum) {
            (RuleTarget::WeightSlot(i), Observed::Mass(g), Minimum::Mass(min)) => {
                write!(f, "weight[{i}] {g} g < {min} g")
            }
            (target, Observed::Count(n), Minimum::Count(min)) => {
                let name = match target {
                    RuleTarget::Eggs => "eggs",
                    RuleTarget::Bottles => "bottles",
                    _ => "weights",
                };
                write!(f, "{name} {n} < {min}")
            }
            (_, current, _) => write!(f, "{} violated ({current:?})", self.rule),
        }
    }
}

/// Violated rules in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AlertReport {
    pub alerts: Vec<Alert>,
}

impl AlertReport {
    pub fn is_empty(&self) -> bool {
        self.alerts.is_empty()
    }
}

pub fn evaluate_deficiencies(snapshot: &InventorySnapshot, rules: &[DeficiencyRule]) -> AlertReport {
    let alerts = rules
        .iter()
        .filter_map(|rule| {
            let current = match rule.target {
                RuleTarget::Eggs => Observed::Count(snapshot.egg_count()),
                RuleTarget::Bottles => Observed::Count(snapshot.bottle_count()),
                RuleTarget::Weights => Observed::Count(snapshot.present_weight_count()),
                RuleTarget::WeightSlot(i) => Observed::Mass(snapshot.weights[i].grams),
            };
            let met = match (current, rule.minimum) {
                (Observed::Count(n), Minimum::Count(min)) => n >= min,
                (Observed::Mass(g), Minimum::Mass(min)) => g >= min,
                _ => false,
            };
            (!met).then_some(Alert {
                rule: *rule,
                current,
            })
        })
        .collect();
    AlertReport { alerts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inventory::snapshot::WeightSlot;
    use crate::sensors::TempLevel;

    fn snap(eggs: usize, slot0: f64) -> InventorySnapshot {
        let mut s = InventorySnapshot {
            timestamp_ms: 0,
            seq: 0,
            weights: [WeightSlot::EMPTY; 6],
            eggs: [false; 16],
            bottles: [false; 4],
            temp_level: TempLevel::Off,
            image_ref: None,
        };
        for e in s.eggs.iter_mut().take(eggs) {
            *e = true;
        }
        s.weights[0].grams = Grams::from_f64(slot0);
        s.weights[0].present = slot0 >= 50.0;
        s
    }

    #[test]
    fn eggs_rule() {
        let rules = parse_rules("eggs >= 6").unwrap();
        assert!(evaluate_deficiencies(&snap(11, 0.0), &rules).is_empty());
        let report = evaluate_deficiencies(&snap(0, 0.0), &rules);
        assert_eq!(report.alerts.len(), 1);
        assert_eq!(report.alerts[0].current, Observed::Count(0));
        assert_eq!(report.alerts[0].to_string(), "eggs 0 < 6");
    }

    #[test]
    fn weight_slot_rule() {
        let rules = parse_rules("weight[0] >= 200").unwrap();
        let report = evaluate_deficiencies(&snap(0, 150.0), &rules);
        assert_eq!(report.alerts[0].current, Observed::Mass(Grams::from_f64(150.0)));
        assert_eq!(report.alerts[0].to_string(), "weight[0] 150.0 g < 200.0 g");
        assert!(evaluate_deficiencies(&snap(0, 200.0), &rules).is_empty());
    }

    #[test]
    fn declaration_order_kept() {
        let rules = parse_rules("# stock\nbottles >= 1\neggs >= 3 # breakfast\nweights >= 1\n").unwrap();
        let report = evaluate_deficiencies(&snap(0, 0.0), &rules);
        let names: Vec<String> = report.alerts.iter().map(|a| a.to_string()).collect();
        assert_eq!(names, vec!["bottles 0 < 1", "eggs 0 < 3", "weights 0 < 1"]);
    }

    #[test]
    fn rule_display_round_trips() {
        for text in ["eggs >= 6", "bottles >= 2", "weights >= 1", "weight[5] >= 12.5"] {
            let rule: DeficiencyRule = text.parse().unwrap();
            assert_eq!(rule.to_string().parse::<DeficiencyRule>().unwrap(), rule);
        }
    }

    #[test]
    fn bad_rules() {
        for text in ["eggs > 6", "milk >= 1", "weight[6] >= 5", "eggs >= -1", "weight[0] >= x"] {
            assert!(text.parse::<DeficiencyRule>().is_err(), "{text}");
        }
    }
}
