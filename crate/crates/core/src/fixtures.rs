//! Measured sensor tables shipped as CSV.
//!
//! * `table1_off_state.csv`: `mass_g,replicate,counts` for sensor #1 with the
//!   compressor off.
//! * `table2_on_state.csv`: `mass_g,temp,counts` for sensor #1 at five
//!   compressor-on temperature levels.
//! * `table3_push_button.csv`: `volume_ml,state` bottle trigger test.
//! * `table4_limit_switch.csv`: `size_class,tray,slot,quality` egg trigger test
//!   (trays and slots are 1-based, quality is `Good` or `Loose`).

use std::io::Read;

use serde::Deserialize;
use thiserror::Error;

use crate::calibration::CalibrationSample;
use crate::sensors::{EggSize, EggTable, TempLevel, EGG_TRAYS, SLOTS_PER_TRAY};

pub const TABLE1_CSV: &str = include_str!("../fixtures/table1_off_state.csv");
pub const TABLE2_CSV: &str = include_str!("../fixtures/table2_on_state.csv");
pub const TABLE3_CSV: &str = include_str!("../fixtures/table3_push_button.csv");
pub const TABLE4_CSV: &str = include_str!("../fixtures/table4_limit_switch.csv");

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {msg}")]
    Invalid { row: usize, msg: String },
}

#[derive(Debug, Deserialize)]
struct Table1Row {
    mass_g: f64,
    #[allow(dead_code)]
    replicate: u32,
    counts: i32,
}

#[derive(Debug, Deserialize)]
struct Table2Row {
    mass_g: f64,
    temp: String,
    counts: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub struct PushButtonRow {
    pub volume_ml: u32,
    #[serde(deserialize_with = "on_off")]
    pub state: bool,
}

#[derive(Debug, Deserialize)]
struct LimitSwitchRow {
    size_class: String,
    tray: usize,
    slot: usize,
    quality: String,
}

fn on_off<'de, D: serde::Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.as_str() {
        "ON" => Ok(true),
        "OFF" => Ok(false),
        other => Err(serde::de::Error::custom(format!("expected ON/OFF, got {other}"))),
    }
}

fn rows<T: for<'de> Deserialize<'de>, R: Read>(reader: R) -> Result<Vec<T>, FixtureError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(FixtureError::from)).collect()
}

/// Compressor-off samples; every row is at [`TempLevel::Off`].
pub fn read_off_state<R: Read>(reader: R) -> Result<Vec<CalibrationSample>, FixtureError> {
    Ok(rows::<Table1Row, _>(reader)?
        .into_iter()
        .map(|r| CalibrationSample {
            mass: r.mass_g,
            counts: r.counts,
            temp_level: TempLevel::Off,
        })
        .collect())
}

pub fn read_on_state<R: Read>(reader: R) -> Result<Vec<CalibrationSample>, FixtureError> {
    rows::<Table2Row, _>(reader)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let temp_level = r.temp.parse::<TempLevel>().map_err(|e| FixtureError::Invalid {
                row: i + 1,
                msg: e.to_string(),
            })?;
            if temp_level == TempLevel::Off {
                return Err(FixtureError::Invalid {
                    row: i + 1,
                    msg: "on-state table cannot hold the off level".into(),
                });
            }
            Ok(CalibrationSample {
                mass: r.mass_g,
                counts: r.counts,
                temp_level,
            })
        })
        .collect()
}

pub fn read_push_button<R: Read>(reader: R) -> Result<Vec<PushButtonRow>, FixtureError> {
    rows(reader)
}

pub fn read_limit_switch<R: Read>(reader: R) -> Result<EggTable, FixtureError> {
    let mut good = [[[false; SLOTS_PER_TRAY]; EGG_TRAYS]; 3];
    let mut seen = [[[false; SLOTS_PER_TRAY]; EGG_TRAYS]; 3];
    for (i, r) in rows::<LimitSwitchRow, _>(reader)?.into_iter().enumerate() {
        let invalid = |msg: String| FixtureError::Invalid { row: i + 1, msg };
        let size = r
            .size_class
            .parse::<EggSize>()
            .map_err(|e| invalid(e.to_string()))?;
        if !(1..=EGG_TRAYS).contains(&r.tray) || !(1..=SLOTS_PER_TRAY).contains(&r.slot) {
            return Err(invalid(format!("tray {} slot {} out of range", r.tray, r.slot)));
        }
        let cell = match r.quality.as_str() {
            "Good" => true,
            "Loose" => false,
            other => return Err(invalid(format!("unknown quality {other:?}"))),
        };
        let s = EggSize::ALL.iter().position(|x| *x == size).unwrap_or(0);
        good[s][r.tray - 1][r.slot - 1] = cell;
        seen[s][r.tray - 1][r.slot - 1] = true;
    }
    if seen.iter().flatten().flatten().any(|s| !s) {
        return Err(FixtureError::Invalid {
            row: 0,
            msg: "limit switch grid is incomplete".into(),
        });
    }
    Ok(EggTable::from_cells(good))
}

pub fn off_state_samples() -> Vec<CalibrationSample> {
    read_off_state(TABLE1_CSV.as_bytes()).expect("embedded table 1 is valid")
}

pub fn on_state_samples() -> Vec<CalibrationSample> {
    read_on_state(TABLE2_CSV.as_bytes()).expect("embedded table 2 is valid")
}

pub fn push_button_rows() -> Vec<PushButtonRow> {
    read_push_button(TABLE3_CSV.as_bytes()).expect("embedded table 3 is valid")
}

pub fn limit_switch_table() -> Result<EggTable, FixtureError> {
    read_limit_switch(TABLE4_CSV.as_bytes())
}
