//! Simulated transducers: load cells, egg-tray limit switches, bottle push
//! buttons and the body camera.
//!
//! Every model is a pure function of its parameters plus a caller-supplied
//! random source, so a simulation is reproducible from its seed alone.

mod bottle;
mod camera;
mod egg;
mod weight;

pub use bottle::{bottle_switch_state, BottleSlotModel, DEFAULT_BOTTLE_THRESHOLD_ML};
pub use camera::{camera_capture, ImageBlob};
pub use egg::{egg_switch_state, EggMode, EggSize, EggSwitchState, EggTable, EggTriggerStats};
pub use weight::{
    read_weight, RawWeightReading, WeightChannelModel, COUNTS_MAX, COUNTS_MIN,
    DEFAULT_NOISE_SPAN, SENSOR1_GAIN_COUNTS_PER_GRAM, SENSOR1_OFFSETS,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fixed sensor population of the refrigerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensorLayout {
    pub weight_slots: usize,
    pub egg_trays: usize,
    pub slots_per_tray: usize,
    pub bottle_slots: usize,
    pub cameras: usize,
}

impl SensorLayout {
    pub const FRIDGE: SensorLayout = SensorLayout {
        weight_slots: WEIGHT_SLOTS,
        egg_trays: EGG_TRAYS,
        slots_per_tray: SLOTS_PER_TRAY,
        bottle_slots: BOTTLE_SLOTS,
        cameras: 1,
    };

    pub const fn egg_slots(&self) -> usize {
        self.egg_trays * self.slots_per_tray
    }
}

pub const WEIGHT_SLOTS: usize = 6;
pub const EGG_TRAYS: usize = 2;
pub const SLOTS_PER_TRAY: usize = 8;
pub const EGG_SLOTS: usize = EGG_TRAYS * SLOTS_PER_TRAY;
pub const BOTTLE_SLOTS: usize = 4;

/// Symbolic fridge temperature level. `Off` is the compressor-off state; the
/// on-state levels carry no degree values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TempLevel {
    Off,
    T1,
    T2,
    T3,
    T4,
    T5,
}

impl TempLevel {
    pub const ALL: [TempLevel; 6] = [
        TempLevel::Off,
        TempLevel::T1,
        TempLevel::T2,
        TempLevel::T3,
        TempLevel::T4,
        TempLevel::T5,
    ];
    pub const ON_LEVELS: [TempLevel; 5] = [
        TempLevel::T1,
        TempLevel::T2,
        TempLevel::T3,
        TempLevel::T4,
        TempLevel::T5,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<TempLevel> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TempLevel::Off => "off",
            TempLevel::T1 => "t1",
            TempLevel::T2 => "t2",
            TempLevel::T3 => "t3",
            TempLevel::T4 => "t4",
            TempLevel::T5 => "t5",
        }
    }
}

impl fmt::Display for TempLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TempLevel {
    type Err = SensorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "off" => Ok(TempLevel::Off),
            "t1" | "temp1" => Ok(TempLevel::T1),
            "t2" | "temp2" => Ok(TempLevel::T2),
            "t3" | "temp3" => Ok(TempLevel::T3),
            "t4" | "temp4" => Ok(TempLevel::T4),
            "t5" | "temp5" => Ok(TempLevel::T5),
            _ => Err(SensorError::UnknownTempLevel(s.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("mass must be a finite non-negative number of grams, got {0}")]
    InvalidMass(f64),
    #[error("sensor {sensor_id} saturated: {value} counts exceeds the 24-bit range")]
    Saturated { sensor_id: usize, value: i64 },
    #[error("egg tray {tray} slot {slot} out of range")]
    EggIndex { tray: usize, slot: usize },
    #[error("unknown temperature level {0:?}")]
    UnknownTempLevel(String),
    #[error("unknown egg size {0:?}")]
    UnknownEggSize(String),
}
