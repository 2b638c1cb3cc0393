use std::fmt;

use crate::bus::SlaveReadings;
use crate::calibration::{counts_to_grams, CalibrationError, CalibrationSet};
use crate::sensors::{RawWeightReading, TempLevel, BOTTLE_SLOTS, EGG_SLOTS, WEIGHT_SLOTS};

/// A mass quantised to tenths of a gram, the resolution snapshots carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Grams(i64);

impl Grams {
    pub const ZERO: Grams = Grams(0);

    pub fn from_tenths(tenths: i64) -> Self {
        Grams(tenths)
    }

    /// Rounds to the nearest tenth.
    pub fn from_f64(grams: f64) -> Self {
        Grams((grams * 10.0).round() as i64)
    }

    pub fn tenths(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 10.0
    }

    pub fn abs_diff(self, other: Grams) -> Grams {
        Grams((self.0 - other.0).abs())
    }
}

impl fmt::Display for Grams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let t = self.0.unsigned_abs();
        let text = format!("{sign}{}.{}", t / 10, t % 10);
        f.pad(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WeightSlot {
    pub grams: Grams,
    pub uncertainty: Grams,
    pub present: bool,
    /// The raw estimate was negative and clamped to zero.
    pub clamped: bool,
}

impl WeightSlot {
    pub const EMPTY: WeightSlot = WeightSlot {
        grams: Grams::ZERO,
        uncertainty: Grams::ZERO,
        present: false,
        clamped: false,
    };
}

/// Calibrated state of every compartment at one instant.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InventorySnapshot {
    pub timestamp_ms: u64,
    pub seq: u64,
    pub weights: [WeightSlot; WEIGHT_SLOTS],
    pub eggs: [bool; EGG_SLOTS],
    pub bottles: [bool; BOTTLE_SLOTS],
    pub temp_level: TempLevel,
    pub image_ref: Option<String>,
}

impl InventorySnapshot {
    pub fn egg_count(&self) -> usize {
        self.eggs.iter().filter(|e| **e).count()
    }

    pub fn bottle_count(&self) -> usize {
        self.bottles.iter().filter(|b| **b).count()
    }

    pub fn present_weight_count(&self) -> usize {
        self.weights.iter().filter(|w| w.present).count()
    }

    /// Occupancy fingerprint used as the camera scene: `empty` when nothing is
    /// stocked, otherwise one digit per slot for weights, eggs and bottles.
    pub fn scene_id(&self) -> String {
        let bits = |it: &mut dyn Iterator<Item = bool>| -> String {
            it.map(|b| if b { '1' } else { '0' }).collect()
        };
        let w = bits(&mut self.weights.iter().map(|w| w.present));
        let e = bits(&mut self.eggs.iter().copied());
        let b = bits(&mut self.bottles.iter().copied());
        if !w.contains('1') && !e.contains('1') && !b.contains('1') {
            "empty".to_string()
        } else {
            format!("w{w}-e{e}-b{b}")
        }
    }
}

/// Calibrates one register scan into a snapshot. The sequence number
/// continues from `prev`, or starts at 0.
pub fn build_snapshot(
    readings: &SlaveReadings,
    calibration: &CalibrationSet,
    timestamp_ms: u64,
    prev: Option<&InventorySnapshot>,
    presence_threshold: Grams,
) -> Result<InventorySnapshot, CalibrationError> {
    let mut weights = [WeightSlot::EMPTY; WEIGHT_SLOTS];
    for (id, slot) in weights.iter_mut().enumerate() {
        let curve = calibration
            .curve(id)
            .ok_or(CalibrationError::MissingSensor(id))?;
        let reading = RawWeightReading::new(
            id,
            i64::from(readings.weight_counts[id]),
            readings.temp_level,
        )?;
        let est = counts_to_grams(curve, &reading)?;
        let grams = Grams::from_f64(est.grams);
        *slot = WeightSlot {
            grams,
            uncertainty: Grams::from_f64(est.uncertainty_grams),
            present: grams >= presence_threshold,
            clamped: est.clamped,
        };
    }
    Ok(InventorySnapshot {
        timestamp_ms,
        seq: prev.map_or(0, |p| p.seq + 1),
        weights,
        eggs: readings.eggs,
        bottles: readings.bottles,
        temp_level: readings.temp_level,
        image_ref: None,
    })
}
