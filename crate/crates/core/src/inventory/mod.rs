//! Inventory snapshots built from calibrated register scans, change detection
//! between snapshots, stock deficiency rules and the snapshot interchange
//! format.

mod codec;
mod diff;
mod rules;
mod snapshot;

pub use codec::{parse_snapshot, serialize_snapshot};
pub use diff::{changed_fields, diff, ChangeSet, Field};
pub use rules::{
    evaluate_deficiencies, parse_rules, Alert, AlertReport, DeficiencyRule, Minimum, Observed,
    RuleTarget,
};
pub use snapshot::{build_snapshot, Grams, InventorySnapshot, WeightSlot};

use thiserror::Error;

pub const DEFAULT_PRESENCE_THRESHOLD_G: f64 = 50.0;
pub const DEFAULT_WEIGHT_DEADBAND_G: f64 = 20.0;

/// Alias object always holding the newest inventory document.
pub const LATEST_NAME: &str = "latest.json";

pub fn inventory_name(seq: u64) -> String {
    format!("inventory_{seq}.json")
}

pub fn image_name(seq: u64) -> String {
    format!("body_{seq}.jpg")
}

/// True for `inventory_<anything>.json`.
pub fn is_inventory_name(path: &str) -> bool {
    path.len() > "inventory_.json".len() && path.starts_with("inventory_") && path.ends_with(".json")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InventoryError {
    #[error("snapshot sequence must increase: {prev} -> {next}")]
    NonMonotonicSeq { prev: u64, next: u64 },
    #[error("malformed snapshot document: {0}")]
    Malformed(String),
    #[error("snapshot document lacks field {0:?}")]
    MissingField(String),
    #[error("snapshot field {field:?} should be {expected}")]
    WrongType { field: String, expected: String },
    #[error("cannot parse rule {0:?}")]
    BadRule(String),
}
