//! Read side: fetch the newest inventory document and render it with its
//! deficiency alerts.

use std::fmt::Write as _;
use std::str::FromStr;

use serde_json::json;

use crate::cloud::{CloudError, Latest, LatestSource};
use crate::inventory::{evaluate_deficiencies, parse_snapshot, AlertReport, DeficiencyRule, InventoryError, InventorySnapshot};
use crate::sensors::SLOTS_PER_TRAY;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ALERTS: i32 = 1;
pub const EXIT_UNAVAILABLE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown format {other:?} (text or json)")),
        }
    }
}

/// One store revision as the user sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct StatusReport {
    pub revision: u64,
    pub snapshot: InventorySnapshot,
    pub alerts: AlertReport,
    pub staleness_s: u64,
}

impl StatusReport {
    pub fn build(latest: &Latest, rules: &[DeficiencyRule], now_ms: u64) -> Result<Self, InventoryError> {
        let snapshot = parse_snapshot(&latest.octets)?;
        Ok(StatusReport {
            revision: latest.revision,
            alerts: evaluate_deficiencies(&snapshot, rules),
            staleness_s: now_ms.saturating_sub(snapshot.timestamp_ms) / 1000,
            snapshot,
        })
    }

    pub fn exit_code(&self) -> i32 {
        if self.alerts.is_empty() {
            EXIT_OK
        } else {
            EXIT_ALERTS
        }
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Text => self.render_text(),
            ReportFormat::Json => self.render_json(),
        }
    }

    pub fn render_text(&self) -> String {
        let s = &self.snapshot;
        let mut out = String::new();
        let _ = writeln!(out, "revision  {}", self.revision);
        let _ = writeln!(out, "snapshot  seq {} at {} ms", s.seq, s.timestamp_ms);
        let _ = writeln!(out, "age       {} s", self.staleness_s);
        let _ = writeln!(out, "temp      {}", s.temp_level);
        let _ = writeln!(out, "image     {}", s.image_ref.as_deref().unwrap_or("-"));
        let _ = writeln!(out);
        let _ = writeln!(out, "weights   {}/{} present", s.present_weight_count(), s.weights.len());
        for (i, w) in s.weights.iter().enumerate() {
            let mark = match (w.present, w.clamped) {
                (true, _) => "present",
                (false, true) => "empty (clamped)",
                (false, false) => "empty",
            };
            let _ = writeln!(out, "  [{i}] {:>8} g  +/- {:>5} g  {mark}", w.grams, w.uncertainty);
        }
        let _ = writeln!(out, "eggs      {}/{}", s.egg_count(), s.eggs.len());
        for (tray, cups) in s.eggs.chunks(SLOTS_PER_TRAY).enumerate() {
            let row: String = cups.iter().map(|e| if *e { 'o' } else { '.' }).collect();
            let _ = writeln!(out, "  tray {tray}  {row}");
        }
        let row: String = s.bottles.iter().map(|b| if *b { 'o' } else { '.' }).collect();
        let _ = writeln!(out, "bottles   {}/{}  {row}", s.bottle_count(), s.bottles.len());
        let _ = writeln!(out);
        if self.alerts.is_empty() {
            let _ = writeln!(out, "alerts    none");
        } else {
            let _ = writeln!(out, "alerts    {}", self.alerts.alerts.len());
            for a in &self.alerts.alerts {
                let _ = writeln!(out, "  {a}");
            }
        }
        out
    }

    pub fn render_json(&self) -> String {
        let s = &self.snapshot;
        let weights: Vec<_> = s
            .weights
            .iter()
            .map(|w| {
                json!({
                    "grams": w.grams.as_f64(),
                    "uncertainty": w.uncertainty.as_f64(),
                    "present": w.present,
                    "clamped": w.clamped,
                })
            })
            .collect();
        let doc = json!({
            "revision": self.revision,
            "seq": s.seq,
            "timestamp": s.timestamp_ms,
            "staleness_s": self.staleness_s,
            "temp_level": s.temp_level.name(),
            "image_ref": s.image_ref,
            "weights": weights,
            "eggs": { "count": s.egg_count(), "slots": s.eggs.to_vec() },
            "bottles": { "count": s.bottle_count(), "slots": s.bottles.to_vec() },
            "alerts": self.alerts.alerts.iter().map(ToString::to_string).collect::<Vec<_>>(),
        });
        doc.to_string() + "\n"
    }
}

/// Rendered output of one status command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatusOutput {
    pub stdout: String,
    pub stderr: String,
    pub exit_code: i32,
    pub revision: Option<u64>,
}

fn unavailable(msg: String) -> StatusOutput {
    StatusOutput {
        stdout: String::new(),
        stderr: msg + "\n",
        exit_code: EXIT_UNAVAILABLE,
        revision: None,
    }
}

/// Fetches and renders the newest snapshot. Exit code 0 means no alerts,
/// 1 alerts present, 2 nothing could be shown.
pub fn cmd_status(
    source: &mut dyn LatestSource,
    rules: &[DeficiencyRule],
    now_ms: u64,
    format: ReportFormat,
) -> StatusOutput {
    let latest = match source.fetch_latest() {
        Ok(l) => l,
        Err(CloudError::EmptyStore) => return unavailable("store holds no inventory yet".into()),
        Err(e) => return unavailable(format!("cannot reach store: {e}")),
    };
    match StatusReport::build(&latest, rules, now_ms) {
        Ok(report) => StatusOutput {
            stdout: report.render(format),
            stderr: String::new(),
            exit_code: report.exit_code(),
            revision: Some(report.revision),
        },
        Err(e) => unavailable(format!("revision {} is unreadable: {e}", latest.revision)),
    }
}

/// Re-renders only when the store revision moves.
#[derive(Debug, Clone, Default)]
pub struct Watcher {
    last_revision: Option<u64>,
}

impl Watcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_revision(&self) -> Option<u64> {
        self.last_revision
    }

    /// One watch tick; returns the report when there is something new.
    /// Fetch failures are logged and skipped.
    pub fn poll(
        &mut self,
        source: &mut dyn LatestSource,
        rules: &[DeficiencyRule],
        now_ms: u64,
        format: ReportFormat,
    ) -> Option<StatusOutput> {
        let latest = match source.fetch_latest() {
            Ok(l) => l,
            Err(CloudError::EmptyStore) => return None,
            Err(e) => {
                log::warn!("watch: fetch failed: {e}");
                return None;
            }
        };
        if self.last_revision == Some(latest.revision) {
            return None;
        }
        match StatusReport::build(&latest, rules, now_ms) {
            Ok(report) => {
                self.last_revision = Some(report.revision);
                Some(StatusOutput {
                    stdout: report.render(format),
                    stderr: String::new(),
                    exit_code: report.exit_code(),
                    revision: Some(report.revision),
                })
            }
            Err(e) => {
                log::warn!("watch: revision {} unreadable: {e}", latest.revision);
                None
            }
        }
    }
}
