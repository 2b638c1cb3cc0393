//! Master node loop: poll the slave, calibrate, and upload only on change.
//!
//! Snapshot sequence numbers count published snapshots, so the store holds
//! `inventory_0.json`, `inventory_1.json`, … without gaps. When an upload is
//! refused for quota the newest unsent snapshot is parked in `pending` and
//! later polls overwrite it; whatever is pending when quota returns is what
//! gets sent.

use std::fmt;
use std::path::PathBuf;

use serde::Deserialize;
use thiserror::Error;

use crate::bus::{decode_response, encode_read_request, unpack_registers, BusLink, RegisterFile, SlaveReadings, REGISTER_FILE_LEN};
use crate::calibration::{CalibrationError, CalibrationSet};
use crate::cloud::{CloudError, Uploader};
use crate::inventory::{
    build_snapshot, changed_fields, image_name, inventory_name, serialize_snapshot, Grams,
    InventorySnapshot, DEFAULT_PRESENCE_THRESHOLD_G, DEFAULT_WEIGHT_DEADBAND_G,
};
use crate::sensors::camera_capture;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackoffPolicy {
    pub initial_ms: u64,
    pub multiplier: f64,
    pub cap_ms: u64,
}

impl Default for BackoffPolicy {
    fn default() -> Self {
        BackoffPolicy {
            initial_ms: 1000,
            multiplier: 2.0,
            cap_ms: 60_000,
        }
    }
}

impl BackoffPolicy {
    /// Wait before retry number `attempt` (0-based).
    pub fn delay_ms(&self, attempt: u32) -> u64 {
        let raw = self.initial_ms as f64 * self.multiplier.powi(attempt.min(1024) as i32);
        if raw >= self.cap_ms as f64 {
            self.cap_ms
        } else {
            raw.round() as u64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub poll_interval_ms: u64,
    pub weight_deadband_g: f64,
    pub presence_threshold_g: f64,
    pub backoff: BackoffPolicy,
    /// Capture an image with every n-th published snapshot; 0 disables.
    pub image_every_n: u64,
    /// Re-publish an unchanged state after this long; 0 disables.
    pub heartbeat_ms: u64,
    pub calibration: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            poll_interval_ms: 1000,
            weight_deadband_g: DEFAULT_WEIGHT_DEADBAND_G,
            presence_threshold_g: DEFAULT_PRESENCE_THRESHOLD_G,
            backoff: BackoffPolicy::default(),
            image_every_n: 1,
            heartbeat_ms: 0,
            calibration: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("gateway setting {0} is out of range")]
    BadConfig(&'static str),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        let b = &self.backoff;
        if self.poll_interval_ms == 0 {
            return Err(GatewayError::BadConfig("poll_interval_ms"));
        }
        if !(self.weight_deadband_g.is_finite() && self.weight_deadband_g >= 0.0) {
            return Err(GatewayError::BadConfig("weight_deadband_g"));
        }
        if !(self.presence_threshold_g.is_finite() && self.presence_threshold_g >= 0.0) {
            return Err(GatewayError::BadConfig("presence_threshold_g"));
        }
        if !(b.multiplier.is_finite() && b.multiplier > 1.0) {
            return Err(GatewayError::BadConfig("backoff.multiplier"));
        }
        if b.initial_ms == 0 || b.cap_ms < b.initial_ms {
            return Err(GatewayError::BadConfig("backoff"));
        }
        Ok(())
    }

    pub fn deadband(&self) -> Grams {
        Grams::from_f64(self.weight_deadband_g)
    }

    pub fn presence_threshold(&self) -> Grams {
        Grams::from_f64(self.presence_threshold_g)
    }
}

/// What one cycle did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleAction {
    Skip,
    Upload,
    Heartbeat,
    QuotaDefer,
    TransportDefer,
    BusError,
    UploadError,
}

impl fmt::Display for CycleAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CycleAction::Skip => "skip",
            CycleAction::Upload => "upload",
            CycleAction::Heartbeat => "heartbeat",
            CycleAction::QuotaDefer => "quota-defer",
            CycleAction::TransportDefer => "transport-defer",
            CycleAction::BusError => "bus-error",
            CycleAction::UploadError => "upload-error",
        })
    }
}

/// One line of the gateway event log: `ts seq action [detail]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogLine {
    pub ts_ms: u64,
    pub seq: Option<u64>,
    pub action: CycleAction,
    pub detail: String,
}

impl fmt::Display for LogLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.seq {
            Some(seq) => write!(f, "{} {} {}", self.ts_ms, seq, self.action)?,
            None => write!(f, "{} - {}", self.ts_ms, self.action)?,
        }
        if !self.detail.is_empty() {
            write!(f, " {}", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetrySchedule {
    pub attempt: u32,
    pub next_at_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GatewayState {
    pub last_uploaded: Option<InventorySnapshot>,
    /// Most recent snapshot built from the bus, sent or not.
    pub current: Option<InventorySnapshot>,
    pub pending: Option<InventorySnapshot>,
    pub retry: Option<RetrySchedule>,
    pub upload_count: u64,
    pub image_count: u64,
    pub skip_count: u64,
    pub error_count: u64,
    pub defer_count: u64,
    /// Polls whose snapshot differed from the last published one.
    pub changes_observed: u64,
    pub last_upload_ms: Option<u64>,
    uploaded_image: Option<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct Gateway {
    pub config: GatewayConfig,
    calibration: CalibrationSet,
    pub state: GatewayState,
    log: Vec<LogLine>,
}

enum Publish {
    Done(u64),
    Failed(CloudError),
}

impl Gateway {
    pub fn new(config: GatewayConfig, calibration: CalibrationSet) -> Result<Self, GatewayError> {
        config.validate()?;
        Ok(Gateway {
            config,
            calibration,
            state: GatewayState::default(),
            log: Vec::new(),
        })
    }

    pub fn calibration(&self) -> &CalibrationSet {
        &self.calibration
    }

    pub fn log(&self) -> &[LogLine] {
        &self.log
    }

    pub fn log_text(&self) -> String {
        self.log.iter().map(|l| format!("{l}\n")).collect()
    }

    fn record(&mut self, ts_ms: u64, seq: Option<u64>, action: CycleAction, detail: String) -> CycleAction {
        let line = LogLine {
            ts_ms,
            seq,
            action,
            detail,
        };
        log::debug!("{line}");
        self.log.push(line);
        action
    }

    fn read_window(bus: &mut dyn BusLink) -> Result<SlaveReadings, String> {
        let request = encode_read_request(0, REGISTER_FILE_LEN).map_err(|e| e.to_string())?;
        let payload = decode_response(&bus.exchange(&request)).map_err(|e| e.to_string())?;
        let file = RegisterFile::from_slice(&payload).map_err(|e| e.to_string())?;
        unpack_registers(&file)
            .map(|(readings, _)| readings)
            .map_err(|e| e.to_string())
    }

    /// Reads the full register window, retrying once.
    fn read_bus(bus: &mut dyn BusLink) -> Result<SlaveReadings, String> {
        Self::read_window(bus).or_else(|first| {
            log::debug!("bus read failed ({first}), retrying");
            Self::read_window(bus)
        })
    }

    fn backoff_active(&self, now_ms: u64) -> bool {
        self.state.retry.is_some_and(|r| now_ms < r.next_at_ms)
    }

    fn image_due(&self, seq: u64) -> bool {
        self.config.image_every_n > 0 && seq.is_multiple_of(self.config.image_every_n)
    }

    /// Image (when due) then inventory document. A quota or transport
    /// failure part-way leaves `last_uploaded` untouched.
    fn publish(&mut self, store: &mut dyn Uploader, snapshot: &mut InventorySnapshot, now_ms: u64) -> Publish {
        snapshot.image_ref = None;
        if self.image_due(snapshot.seq) {
            let name = image_name(snapshot.seq);
            let blob = camera_capture(&snapshot.scene_id());
            let key = (name.clone(), blob.digest());
            if self.state.uploaded_image.as_ref() != Some(&key) {
                if let Err(e) = store.upload(&name, blob.bytes(), now_ms) {
                    return Publish::Failed(e);
                }
                self.state.image_count += 1;
                self.state.uploaded_image = Some(key);
            }
            snapshot.image_ref = Some(name);
        }
        match store.upload(&inventory_name(snapshot.seq), &serialize_snapshot(snapshot), now_ms) {
            Ok(rev) => Publish::Done(rev),
            Err(e) => Publish::Failed(e),
        }
    }

    /// Publishes `snapshot` and books the outcome.
    fn attempt(
        &mut self,
        store: &mut dyn Uploader,
        mut snapshot: InventorySnapshot,
        now_ms: u64,
        success: CycleAction,
        detail: String,
    ) -> CycleAction {
        let seq = snapshot.seq;
        match self.publish(store, &mut snapshot, now_ms) {
            Publish::Done(rev) => {
                self.state.upload_count += 1;
                self.state.last_upload_ms = Some(now_ms);
                self.state.last_uploaded = Some(snapshot);
                self.state.pending = None;
                self.state.retry = None;
                let detail = if detail.is_empty() {
                    format!("rev={rev}")
                } else {
                    format!("rev={rev} {detail}")
                };
                self.record(now_ms, Some(seq), success, detail)
            }
            Publish::Failed(e) if e.is_retryable() => {
                let attempt = self.state.retry.map_or(0, |r| r.attempt + 1);
                let next_at_ms = now_ms + self.config.backoff.delay_ms(attempt);
                self.state.retry = Some(RetrySchedule { attempt, next_at_ms });
                self.state.pending = Some(snapshot);
                self.state.defer_count += 1;
                let action = if matches!(e, CloudError::QuotaExceeded { .. }) {
                    CycleAction::QuotaDefer
                } else {
                    CycleAction::TransportDefer
                };
                self.record(now_ms, Some(seq), action, format!("retry_at={next_at_ms}"))
            }
            Publish::Failed(e) => {
                log::warn!("upload of snapshot {seq} failed: {e}");
                self.state.error_count += 1;
                self.state.pending = None;
                self.state.retry = None;
                self.record(now_ms, Some(seq), CycleAction::UploadError, e.to_string())
            }
        }
    }

    /// One poll: read the bus, build a snapshot and publish it if it differs
    /// from the last published one.
    pub fn poll_cycle(
        &mut self,
        bus: &mut dyn BusLink,
        store: &mut dyn Uploader,
        now_ms: u64,
    ) -> Result<CycleAction, GatewayError> {
        let readings = match Self::read_bus(bus) {
            Ok(r) => r,
            Err(e) => {
                self.state.error_count += 1;
                return Ok(self.record(now_ms, None, CycleAction::BusError, e));
            }
        };
        let candidate = build_snapshot(
            &readings,
            &self.calibration,
            now_ms,
            self.state.last_uploaded.as_ref(),
            self.config.presence_threshold(),
        )?;
        self.state.current = Some(candidate.clone());
        let seq = candidate.seq;

        let (changed, detail) = match &self.state.last_uploaded {
            None => (true, "initial".to_string()),
            Some(prev) => {
                let fields = changed_fields(prev, &candidate, self.config.deadband());
                let names: Vec<String> = fields.iter().map(ToString::to_string).collect();
                (!fields.is_empty(), names.join(","))
            }
        };

        if !changed {
            // the store already shows this state; anything parked is stale
            self.state.pending = None;
            self.state.retry = None;
            let heartbeat_due = self.config.heartbeat_ms > 0
                && self
                    .state
                    .last_upload_ms
                    .is_some_and(|t| now_ms >= t + self.config.heartbeat_ms);
            if heartbeat_due {
                return Ok(self.attempt(store, candidate, now_ms, CycleAction::Heartbeat, String::new()));
            }
            self.state.skip_count += 1;
            return Ok(self.record(now_ms, Some(seq), CycleAction::Skip, String::new()));
        }

        self.state.changes_observed += 1;
        if self.backoff_active(now_ms) {
            let retry_at = self.state.retry.map_or(now_ms, |r| r.next_at_ms);
            self.state.pending = Some(candidate);
            self.state.defer_count += 1;
            let action = CycleAction::QuotaDefer;
            return Ok(self.record(now_ms, Some(seq), action, format!("retry_at={retry_at}")));
        }
        Ok(self.attempt(store, candidate, now_ms, CycleAction::Upload, detail))
    }

    /// Retries the parked snapshot if its backoff has elapsed. Returns
    /// `None` when there was nothing to do.
    pub fn recover(&mut self, store: &mut dyn Uploader, now_ms: u64) -> Option<CycleAction> {
        if self.backoff_active(now_ms) {
            return None;
        }
        let pending = self.state.pending.clone()?;
        Some(self.attempt(store, pending, now_ms, CycleAction::Upload, "recovered".into()))
    }

    /// Earliest time a parked snapshot may be retried.
    pub fn next_retry_ms(&self) -> Option<u64> {
        self.state.pending.as_ref()?;
        Some(self.state.retry.map_or(0, |r| r.next_at_ms))
    }
}
