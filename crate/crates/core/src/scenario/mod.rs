//! Scripted fridge sessions replayed end to end on a virtual clock.
//!
//! A scenario file is a JSON array of events, each an object with an `at`
//! time in milliseconds, an `action` name and that action's fields:
//!
//! ```json
//! [
//!   {"at": 0,    "action": "PlaceWeight", "slot": 0, "grams": 500},
//!   {"at": 2000, "action": "PlaceEgg", "tray": 0, "slot": 3, "size": "small"},
//!   {"at": 4000, "action": "QuotaSet", "limit": 3}
//! ]
//! ```

mod run;

pub use run::{run, run_with_store, write_outputs, FaultyLink, RunError, RunSummary, RunTrace, Violation};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::sensors::{EggSize, TempLevel, BOTTLE_SLOTS, EGG_TRAYS, SLOTS_PER_TRAY, WEIGHT_SLOTS};

/// Heaviest load a scenario may put on one weight slot.
pub const MAX_SCENARIO_GRAMS: f64 = 10_000.0;

pub const ACTIONS: [&str; 11] = [
    "PlaceWeight",
    "RemoveWeight",
    "PlaceEgg",
    "RemoveEgg",
    "SettleEgg",
    "PlaceBottle",
    "RemoveBottle",
    "SetTempLevel",
    "QuotaSet",
    "QuotaReset",
    "CorruptBus",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", deny_unknown_fields)]
pub enum Action {
    PlaceWeight { slot: usize, grams: f64 },
    RemoveWeight { slot: usize },
    PlaceEgg { tray: usize, slot: usize, size: EggSize },
    RemoveEgg { tray: usize, slot: usize },
    /// Reseats an egg so a loose switch closes.
    SettleEgg { tray: usize, slot: usize },
    PlaceBottle { slot: usize, ml: u32 },
    RemoveBottle { slot: usize },
    SetTempLevel { level: TempLevel },
    QuotaSet { limit: u32 },
    /// Starts a fresh quota period.
    QuotaReset,
    /// Flips one bit in each of the next `frames` bus responses.
    CorruptBus { frames: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEvent {
    pub at_ms: u64,
    pub action: Action,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("scenario is not valid JSON: {0}")]
    Json(String),
    #[error("scenario must be a JSON array of event objects")]
    NotAnArray,
    #[error("event {index}: unknown action {name:?}")]
    UnknownAction { index: usize, name: String },
    #[error("event {index}: {msg}")]
    BadEvent { index: usize, msg: String },
    #[error("event {index}: {what} out of range")]
    BadIndex { index: usize, what: String },
    #[error("event {index}: time {at} ms is before the previous event at {prev} ms")]
    Unsorted { index: usize, at: u64, prev: u64 },
}

fn check_index(index: usize, what: &str, value: usize, bound: usize) -> Result<(), ScenarioError> {
    if value < bound {
        Ok(())
    } else {
        Err(ScenarioError::BadIndex {
            index,
            what: format!("{what} {value} (limit {bound})"),
        })
    }
}

fn check_action(index: usize, action: &Action) -> Result<(), ScenarioError> {
    match *action {
        Action::PlaceWeight { slot, grams } => {
            check_index(index, "weight slot", slot, WEIGHT_SLOTS)?;
            if !(grams.is_finite() && (0.0..=MAX_SCENARIO_GRAMS).contains(&grams)) {
                return Err(ScenarioError::BadEvent {
                    index,
                    msg: format!("grams {grams} outside 0..={MAX_SCENARIO_GRAMS}"),
                });
            }
            Ok(())
        }
        Action::RemoveWeight { slot } => check_index(index, "weight slot", slot, WEIGHT_SLOTS),
        Action::PlaceEgg { tray, slot, .. } | Action::RemoveEgg { tray, slot } | Action::SettleEgg { tray, slot } => {
            check_index(index, "egg tray", tray, EGG_TRAYS)?;
            check_index(index, "egg slot", slot, SLOTS_PER_TRAY)
        }
        Action::PlaceBottle { slot, .. } | Action::RemoveBottle { slot } => {
            check_index(index, "bottle slot", slot, BOTTLE_SLOTS)
        }
        Action::SetTempLevel { .. } | Action::QuotaSet { .. } | Action::QuotaReset | Action::CorruptBus { .. } => Ok(()),
    }
}

/// Parses and validates a scenario. Events must already be in time order;
/// events sharing a timestamp keep their file order.
pub fn parse_scenario(octets: &[u8]) -> Result<Vec<ScenarioEvent>, ScenarioError> {
    let doc: Value = serde_json::from_slice(octets).map_err(|e| ScenarioError::Json(e.to_string()))?;
    let items = doc.as_array().ok_or(ScenarioError::NotAnArray)?;
    let mut events = Vec::with_capacity(items.len());
    let mut prev = 0u64;
    for (index, item) in items.iter().enumerate() {
        let bad = |msg: String| ScenarioError::BadEvent { index, msg };
        let mut obj = item
            .as_object()
            .cloned()
            .ok_or_else(|| bad("event is not an object".into()))?;
        let at_ms = obj
            .remove("at")
            .ok_or_else(|| bad("missing \"at\"".into()))?
            .as_u64()
            .ok_or_else(|| bad("\"at\" must be a non-negative integer".into()))?;
        let name = obj
            .get("action")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing \"action\"".into()))?;
        if !ACTIONS.contains(&name) {
            return Err(ScenarioError::UnknownAction {
                index,
                name: name.to_string(),
            });
        }
        let action: Action = serde_json::from_value(Value::Object(obj)).map_err(|e| bad(e.to_string()))?;
        check_action(index, &action)?;
        if at_ms < prev {
            return Err(ScenarioError::Unsorted { index, at: at_ms, prev });
        }
        prev = at_ms;
        events.push(ScenarioEvent { at_ms, action });
    }
    Ok(events)
}

/// Canonical JSON text of a scenario, one event per line.
pub fn scenario_to_json(events: &[ScenarioEvent]) -> String {
    let mut out = String::from("[\n");
    for (i, e) in events.iter().enumerate() {
        let mut v = serde_json::to_value(&e.action).expect("actions serialize");
        if let Value::Object(obj) = &mut v {
            obj.insert("at".into(), Value::from(e.at_ms));
        }
        out.push_str("  ");
        out.push_str(&v.to_string());
        out.push_str(if i + 1 < events.len() { ",\n" } else { "\n" });
    }
    out.push_str("]\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_array() {
        assert_eq!(parse_scenario(b"[]").unwrap(), vec![]);
    }

    #[test]
    fn single_egg() {
        let ev = parse_scenario(br#"[{"at":500,"action":"PlaceEgg","tray":1,"slot":7,"size":"small"}]"#).unwrap();
        assert_eq!(
            ev,
            vec![ScenarioEvent {
                at_ms: 500,
                action: Action::PlaceEgg {
                    tray: 1,
                    slot: 7,
                    size: EggSize::Small
                }
            }]
        );
    }

    #[test]
    fn errors_are_distinct() {
        assert!(matches!(parse_scenario(b"[{"), Err(ScenarioError::Json(_))));
        assert_eq!(parse_scenario(b"{}"), Err(ScenarioError::NotAnArray));
        assert_eq!(
            parse_scenario(br#"[{"at":0,"action":"Explode"}]"#),
            Err(ScenarioError::UnknownAction {
                index: 0,
                name: "Explode".into()
            })
        );
        assert!(matches!(
            parse_scenario(br#"[{"at":0,"action":"PlaceEgg","tray":2,"slot":0,"size":"big"}]"#),
            Err(ScenarioError::BadIndex { index: 0, .. })
        ));
        assert!(matches!(
            parse_scenario(br#"[{"at":0,"action":"RemoveWeight","slot":6}]"#),
            Err(ScenarioError::BadIndex { .. })
        ));
        assert_eq!(
            parse_scenario(br#"[{"at":5,"action":"QuotaReset"},{"at":4,"action":"QuotaReset"}]"#),
            Err(ScenarioError::Unsorted {
                index: 1,
                at: 4,
                prev: 5
            })
        );
        assert!(matches!(
            parse_scenario(br#"[{"at":0,"action":"RemoveWeight"}]"#),
            Err(ScenarioError::BadEvent { .. })
        ));
        assert!(matches!(
            parse_scenario(br#"[{"at":0,"action":"RemoveWeight","slot":0,"extra":1}]"#),
            Err(ScenarioError::BadEvent { .. })
        ));
        assert!(matches!(
            parse_scenario(br#"[{"at":-1,"action":"QuotaReset"}]"#),
            Err(ScenarioError::BadEvent { .. })
        ));
        assert!(matches!(
            parse_scenario(br#"[{"at":0,"action":"PlaceWeight","slot":0,"grams":20000}]"#),
            Err(ScenarioError::BadEvent { .. })
        ));
    }

    #[test]
    fn every_action_round_trips() {
        let events = vec![
            ScenarioEvent { at_ms: 0, action: Action::PlaceWeight { slot: 0, grams: 500.0 } },
            ScenarioEvent { at_ms: 1, action: Action::RemoveWeight { slot: 5 } },
            ScenarioEvent { at_ms: 2, action: Action::PlaceEgg { tray: 0, slot: 1, size: EggSize::Big } },
            ScenarioEvent { at_ms: 3, action: Action::RemoveEgg { tray: 1, slot: 1 } },
            ScenarioEvent { at_ms: 4, action: Action::SettleEgg { tray: 1, slot: 2 } },
            ScenarioEvent { at_ms: 5, action: Action::PlaceBottle { slot: 3, ml: 750 } },
            ScenarioEvent { at_ms: 6, action: Action::RemoveBottle { slot: 3 } },
            ScenarioEvent { at_ms: 7, action: Action::SetTempLevel { level: TempLevel::T3 } },
            ScenarioEvent { at_ms: 8, action: Action::QuotaSet { limit: 3 } },
            ScenarioEvent { at_ms: 9, action: Action::QuotaReset },
            ScenarioEvent { at_ms: 9, action: Action::CorruptBus { frames: 2 } },
        ];
        assert_eq!(events.len(), ACTIONS.len());
        let text = scenario_to_json(&events);
        assert_eq!(parse_scenario(text.as_bytes()).unwrap(), events);
    }

    proptest! {
        #[test]
        fn equal_times_keep_file_order(times in proptest::collection::vec(0u64..5, 0..40)) {
            let mut times = times;
            times.sort();
            let events: Vec<ScenarioEvent> = times
                .iter()
                .enumerate()
                .map(|(i, &t)| ScenarioEvent { at_ms: t, action: Action::QuotaSet { limit: i as u32 } })
                .collect();
            let parsed = parse_scenario(scenario_to_json(&events).as_bytes()).unwrap();
            let limits: Vec<u32> = parsed
                .iter()
                .map(|e| match e.action { Action::QuotaSet { limit } => limit, _ => unreachable!() })
                .collect();
            prop_assert_eq!(limits, (0..events.len() as u32).collect::<Vec<_>>());
        }
    }
}
