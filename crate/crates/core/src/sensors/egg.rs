use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{SensorError, EGG_SLOTS, EGG_TRAYS, SLOTS_PER_TRAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EggSize {
    Small,
    Normal,
    Big,
}

impl EggSize {
    pub const ALL: [EggSize; 3] = [EggSize::Small, EggSize::Normal, EggSize::Big];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            EggSize::Small => "small",
            EggSize::Normal => "normal",
            EggSize::Big => "big",
        }
    }
}

impl fmt::Display for EggSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EggSize {
    type Err = SensorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "small" => Ok(EggSize::Small),
            "normal" => Ok(EggSize::Normal),
            "big" => Ok(EggSize::Big),
            _ => Err(SensorError::UnknownEggSize(s.to_string())),
        }
    }
}

/// What a limit switch reports for its egg cup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EggSwitchState {
    Triggered,
    /// An egg is seated badly and has not closed the switch.
    Loose,
    Open,
}

impl EggSwitchState {
    pub fn is_triggered(self) -> bool {
        self == EggSwitchState::Triggered
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EggMode {
    /// Replay the measured Good/Loose grid cell for the exact tray and slot.
    Deterministic,
    /// Trigger with the measured per-size success ratio.
    Seeded,
}

impl FromStr for EggMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "deterministic" => Ok(EggMode::Deterministic),
            "seeded" => Ok(EggMode::Seeded),
            other => Err(format!("unknown egg mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EggTriggerStats {
    pub size_class: EggSize,
    pub good_count_of_16: u32,
}

impl EggTriggerStats {
    pub fn probability(&self) -> f64 {
        f64::from(self.good_count_of_16) / EGG_SLOTS as f64
    }
}

/// Good (true) / Loose (false) trigger grid per egg size, tray and switch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EggTable {
    good: [[[bool; SLOTS_PER_TRAY]; EGG_TRAYS]; 3],
}

impl EggTable {
    pub fn from_cells(good: [[[bool; SLOTS_PER_TRAY]; EGG_TRAYS]; 3]) -> Self {
        EggTable { good }
    }

    /// The trigger test grid measured on the prototype's egg trays.
    pub fn measured() -> Self {
        crate::fixtures::limit_switch_table().expect("embedded limit switch fixture is valid")
    }

    pub fn is_good(&self, size: EggSize, tray: usize, slot: usize) -> bool {
        self.good[size.index()][tray][slot]
    }

    pub fn stats(&self, size: EggSize) -> EggTriggerStats {
        let good_count_of_16 = self.good[size.index()]
            .iter()
            .flatten()
            .filter(|g| **g)
            .count() as u32;
        EggTriggerStats {
            size_class: size,
            good_count_of_16,
        }
    }

    pub fn switch_state<R: Rng + ?Sized>(
        &self,
        tray: usize,
        slot: usize,
        occupied: bool,
        size: EggSize,
        mode: EggMode,
        rng: &mut R,
    ) -> Result<EggSwitchState, SensorError> {
        if tray >= EGG_TRAYS || slot >= SLOTS_PER_TRAY {
            return Err(SensorError::EggIndex { tray, slot });
        }
        if !occupied {
            return Ok(EggSwitchState::Open);
        }
        let good = match mode {
            EggMode::Deterministic => self.is_good(size, tray, slot),
            EggMode::Seeded => rng.random_bool(self.stats(size).probability()),
        };
        Ok(if good {
            EggSwitchState::Triggered
        } else {
            EggSwitchState::Loose
        })
    }
}

/// [`EggTable::switch_state`] against the measured grid.
pub fn egg_switch_state<R: Rng + ?Sized>(
    tray: usize,
    slot: usize,
    occupied: bool,
    size: EggSize,
    mode: EggMode,
    rng: &mut R,
) -> Result<EggSwitchState, SensorError> {
    EggTable::measured().switch_state(tray, slot, occupied, size, mode, rng)
}
