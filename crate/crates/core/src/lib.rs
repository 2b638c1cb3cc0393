//! Simulated inventory-monitoring refrigerator.
//!
//! Load cells, egg-cup limit switches and bottle push buttons are scanned by
//! a slave node and read by a master gateway over a checksummed register
//! protocol. The gateway calibrates raw counts into grams, builds snapshots
//! and uploads them, only on change, to a revisioned object store through
//! signed and quota-limited requests. A client reads the newest snapshot back
//! and reports deficiencies. The [`scenario`] module drives the whole chain
//! on a virtual clock.

pub mod bus;
pub mod calibration;
pub mod client;
pub mod cloud;
pub mod config;
pub mod fixtures;
pub mod gateway;
pub mod inventory;
pub mod scenario;
pub mod sensors;

pub use bus::{BusLink, FrameError, RegisterFile, SlaveNode, SlaveReadings};
pub use calibration::{counts_to_grams, fit_curve, CalibrationCurve, CalibrationError, CalibrationSample, CalibrationSet, MassEstimate};
pub use client::{cmd_status, ReportFormat, StatusOutput, StatusReport, Watcher};
pub use cloud::{ChoreoCredentials, ChoreoService, CloudError, Latest, ObjectStore, QuotaLedger};
pub use config::{Config, ConfigError};
pub use gateway::{Gateway, GatewayConfig, GatewayState};
pub use inventory::{AlertReport, ChangeSet, DeficiencyRule, Grams, InventoryError, InventorySnapshot};
pub use scenario::{parse_scenario, run, RunTrace, ScenarioError, ScenarioEvent};
pub use sensors::{EggMode, EggSize, SensorError, TempLevel};
