//! Canonical JSON encoding of snapshots.
//!
//! Keys are sorted, there is no insignificant whitespace, timestamps and
//! sequence numbers are integers and masses always carry exactly one decimal.
//! Equal snapshots therefore always encode to identical octets.

use std::fmt::Write as _;

use serde_json::{Map, Value};

use super::snapshot::{Grams, InventorySnapshot, WeightSlot};
use super::InventoryError;
use crate::sensors::{TempLevel, BOTTLE_SLOTS, EGG_SLOTS, WEIGHT_SLOTS};

fn bools(out: &mut String, values: &[bool]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(if *v { "true" } else { "false" });
    }
    out.push(']');
}

pub fn serialize_snapshot(snapshot: &InventorySnapshot) -> Vec<u8> {
    let mut out = String::with_capacity(512);
    out.push_str("{\"bottles\":");
    bools(&mut out, &snapshot.bottles);
    out.push_str(",\"eggs\":");
    bools(&mut out, &snapshot.eggs);
    out.push_str(",\"image_ref\":");
    match &snapshot.image_ref {
        Some(name) => out.push_str(&Value::String(name.clone()).to_string()),
        None => out.push_str("null"),
    }
    let _ = write!(
        out,
        ",\"seq\":{},\"temp_level\":\"{}\",\"timestamp\":{},\"weights\":[",
        snapshot.seq, snapshot.temp_level, snapshot.timestamp_ms
    );
    for (i, w) in snapshot.weights.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(
            out,
            "{{\"clamped\":{},\"grams\":{},\"present\":{},\"uncertainty\":{}}}",
            w.clamped, w.grams, w.present, w.uncertainty
        );
    }
    out.push_str("]}");
    out.into_bytes()
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value, InventoryError> {
    obj.get(name)
        .ok_or_else(|| InventoryError::MissingField(name.to_string()))
}

fn wrong(name: &str, expected: &str) -> InventoryError {
    InventoryError::WrongType {
        field: name.to_string(),
        expected: expected.to_string(),
    }
}

fn as_u64(obj: &Map<String, Value>, name: &str) -> Result<u64, InventoryError> {
    field(obj, name)?
        .as_u64()
        .ok_or_else(|| wrong(name, "non-negative integer"))
}

fn as_bool(v: &Value, name: &str) -> Result<bool, InventoryError> {
    v.as_bool().ok_or_else(|| wrong(name, "boolean"))
}

fn as_grams(v: &Value, name: &str) -> Result<Grams, InventoryError> {
    v.as_f64()
        .filter(|g| g.is_finite() && *g >= 0.0)
        .map(Grams::from_f64)
        .ok_or_else(|| wrong(name, "non-negative number"))
}

fn bool_array<const N: usize>(obj: &Map<String, Value>, name: &str) -> Result<[bool; N], InventoryError> {
    let items = field(obj, name)?
        .as_array()
        .filter(|a| a.len() == N)
        .ok_or_else(|| wrong(name, &format!("array of {N} booleans")))?;
    let mut out = [false; N];
    for (slot, v) in out.iter_mut().zip(items) {
        *slot = as_bool(v, name)?;
    }
    Ok(out)
}

pub fn parse_snapshot(octets: &[u8]) -> Result<InventorySnapshot, InventoryError> {
    let doc: Value =
        serde_json::from_slice(octets).map_err(|e| InventoryError::Malformed(e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| InventoryError::Malformed("document is not an object".into()))?;

    let level_name = field(obj, "temp_level")?
        .as_str()
        .ok_or_else(|| wrong("temp_level", "string"))?;
    let temp_level: TempLevel = level_name
        .parse()
        .map_err(|_| wrong("temp_level", "temperature level name"))?;

    let image_ref = match field(obj, "image_ref")? {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        _ => return Err(wrong("image_ref", "string or null")),
    };

    let raw_weights = field(obj, "weights")?
        .as_array()
        .filter(|a| a.len() == WEIGHT_SLOTS)
        .ok_or_else(|| wrong("weights", &format!("array of {WEIGHT_SLOTS} objects")))?;
    let mut weights = [WeightSlot::EMPTY; WEIGHT_SLOTS];
    for (slot, v) in weights.iter_mut().zip(raw_weights) {
        let w = v.as_object().ok_or_else(|| wrong("weights", "object"))?;
        *slot = WeightSlot {
            grams: as_grams(field(w, "grams")?, "grams")?,
            uncertainty: as_grams(field(w, "uncertainty")?, "uncertainty")?,
            present: as_bool(field(w, "present")?, "present")?,
            clamped: as_bool(field(w, "clamped")?, "clamped")?,
        };
    }

    Ok(InventorySnapshot {
        timestamp_ms: as_u64(obj, "timestamp")?,
        seq: as_u64(obj, "seq")?,
        weights,
        eggs: bool_array::<EGG_SLOTS>(obj, "eggs")?,
        bottles: bool_array::<BOTTLE_SLOTS>(obj, "bottles")?,
        temp_level,
        image_ref,
    })
}
