use std::fmt::{self, Write as _};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{Action, ScenarioEvent};
use crate::bus::{BusLink, RegisterError, SlaveNode, SlaveReadings};
use crate::calibration::{fit_curve, sweep_samples, CalibrationError, CalibrationSet};
use crate::client::{cmd_status, ReportFormat};
use crate::cloud::{ChoreoService, CloudError, LocalEndpoint, ObjectStore};
use crate::config::{Config, ConfigError};
use crate::gateway::{CycleAction, Gateway, GatewayError};
use crate::inventory::{changed_fields, parse_snapshot, InventoryError, InventorySnapshot};
use crate::sensors::{
    read_weight, BottleSlotModel, EggMode, EggSize, EggSwitchState, EggTable, SensorError, TempLevel,
    WeightChannelModel, BOTTLE_SLOTS, EGG_SLOTS, SLOTS_PER_TRAY, WEIGHT_SLOTS,
};

const STREAM_WEIGHT: u64 = 0;
const STREAM_EGGS: u64 = 16;
const STREAM_BUS: u64 = 17;
const STREAM_CALIBRATION: u64 = 32;

const CALIBRATION_MASSES: [f64; 6] = [0.0, 100.0, 200.0, 300.0, 400.0, 500.0];
const CALIBRATION_REPLICATES: usize = 5;

/// Independent stream `stream` of the run seed, so each sensor's noise is
/// unaffected by how many other sensors draw.
fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Register(#[from] RegisterError),
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Rule(#[from] InventoryError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Bus link that flips one seeded bit in each of the next few responses.
#[derive(Debug, Clone)]
pub struct FaultyLink {
    pub slave: SlaveNode,
    corrupt_remaining: u32,
    rng: ChaCha8Rng,
}

impl FaultyLink {
    pub fn new(slave: SlaveNode, rng: ChaCha8Rng) -> Self {
        FaultyLink {
            slave,
            corrupt_remaining: 0,
            rng,
        }
    }

    pub fn corrupt_next(&mut self, frames: u32) {
        self.corrupt_remaining = self.corrupt_remaining.saturating_add(frames);
    }
}

impl BusLink for FaultyLink {
    fn exchange(&mut self, request: &[u8]) -> Vec<u8> {
        let mut response = self.slave.respond(request);
        if self.corrupt_remaining > 0 && !response.is_empty() {
            let bit = self.rng.random_range(0..response.len() * 8);
            response[bit / 8] ^= 1 << (bit % 8);
            self.corrupt_remaining -= 1;
        }
        response
    }
}

/// An invariant that did not hold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub cycle: usize,
    pub ts_ms: u64,
    pub invariant: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cycle {} at {} ms: {}: {}", self.cycle, self.ts_ms, self.invariant, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub seed: u64,
    pub cycles: usize,
    pub events: usize,
    pub upload_count: u64,
    pub image_count: u64,
    pub skip_count: u64,
    pub error_count: u64,
    pub defer_count: u64,
    pub changes_observed: u64,
    pub objects: usize,
    pub inventory_objects: usize,
    pub max_seq: Option<u64>,
    pub pending: bool,
    pub quota_used: u32,
    pub quota_limit: u32,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let max_seq = self.max_seq.map_or("-".to_string(), |s| s.to_string());
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "cycles = {}", self.cycles)?;
        writeln!(f, "events = {}", self.events)?;
        writeln!(f, "uploads = {}", self.upload_count)?;
        writeln!(f, "images = {}", self.image_count)?;
        writeln!(f, "skips = {}", self.skip_count)?;
        writeln!(f, "errors = {}", self.error_count)?;
        writeln!(f, "deferrals = {}", self.defer_count)?;
        writeln!(f, "changes = {}", self.changes_observed)?;
        writeln!(f, "objects = {}", self.objects)?;
        writeln!(f, "inventory_objects = {}", self.inventory_objects)?;
        writeln!(f, "max_seq = {max_seq}")?;
        writeln!(f, "pending = {}", self.pending)?;
        writeln!(f, "quota = {}/{}", self.quota_used, self.quota_limit)
    }
}

/// Everything a run produced. Fully determined by scenario, seed and config.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub summary: RunSummary,
    pub gateway_log: String,
    pub manifest: String,
    pub report: String,
    pub report_exit_code: i32,
    pub violations: Vec<Violation>,
    /// Newest inventory document in the store, decoded.
    pub latest: Option<InventorySnapshot>,
    /// Snapshot the gateway built last, sent or not.
    pub current: Option<InventorySnapshot>,
    pub last_uploaded: Option<InventorySnapshot>,
}

impl RunTrace {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn summary_text(&self) -> String {
        let mut out = self.summary.to_string();
        if self.violations.is_empty() {
            out.push_str("violations = 0\n");
        } else {
            let _ = writeln!(out, "violations = {}", self.violations.len());
            for v in &self.violations {
                let _ = writeln!(out, "  {v}");
            }
        }
        out
    }

    /// All artifacts concatenated; byte-identical across repeated runs.
    pub fn render(&self) -> String {
        format!(
            "[summary]\n{}\n[gateway]\n{}\n[manifest]\n{}\n[report]\n{}",
            self.summary_text(),
            self.gateway_log,
            self.manifest,
            self.report
        )
    }
}

/// Writes `trace.log`, `MANIFEST`, `report.txt` and `summary.txt`.
pub fn write_outputs(trace: &RunTrace, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("trace.log"), &trace.gateway_log)?;
    std::fs::write(dir.join("MANIFEST"), &trace.manifest)?;
    std::fs::write(dir.join("report.txt"), &trace.report)?;
    std::fs::write(dir.join("summary.txt"), trace.summary_text())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Cup {
    size: EggSize,
    state: EggSwitchState,
}

struct Fridge {
    masses: [f64; WEIGHT_SLOTS],
    eggs: [Option<Cup>; EGG_SLOTS],
    bottles: [Option<u32>; BOTTLE_SLOTS],
    temp: TempLevel,
    models: Vec<WeightChannelModel>,
    weight_rngs: Vec<ChaCha8Rng>,
    egg_rng: ChaCha8Rng,
    egg_table: EggTable,
    egg_mode: EggMode,
    bottle_model: BottleSlotModel,
}

impl Fridge {
    fn scan(&mut self) -> Result<SlaveReadings, SensorError> {
        let mut readings = SlaveReadings::empty(self.temp, [0; WEIGHT_SLOTS]);
        for i in 0..WEIGHT_SLOTS {
            readings.weight_counts[i] =
                read_weight(&self.models[i], self.masses[i], self.temp, &mut self.weight_rngs[i])?.counts;
        }
        for (out, cup) in readings.eggs.iter_mut().zip(&self.eggs) {
            *out = cup.is_some_and(|c| c.state.is_triggered());
        }
        for (out, bottle) in readings.bottles.iter_mut().zip(&self.bottles) {
            *out = bottle.is_some_and(|ml| self.bottle_model.is_pressed(ml));
        }
        Ok(readings)
    }

    fn place_egg(&mut self, tray: usize, slot: usize, size: EggSize) -> Result<(), SensorError> {
        let state = self
            .egg_table
            .switch_state(tray, slot, true, size, self.egg_mode, &mut self.egg_rng)?;
        self.eggs[tray * SLOTS_PER_TRAY + slot] = Some(Cup { size, state });
        Ok(())
    }
}

fn calibrate(config: &Config, models: &[WeightChannelModel], seed: u64) -> Result<CalibrationSet, RunError> {
    if let Some(path) = &config.gateway.calibration {
        return Ok(CalibrationSet::parse(&std::fs::read_to_string(path)?)?);
    }
    let curves = models
        .iter()
        .enumerate()
        .map(|(i, model)| {
            let mut rng = stream(seed, STREAM_CALIBRATION + i as u64);
            let samples = sweep_samples(model, &CALIBRATION_MASSES, &TempLevel::ALL, CALIBRATION_REPLICATES, &mut rng)?;
            fit_curve(&samples)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CalibrationSet { curves })
}

/// Replays `events` against an in-memory store.
pub fn run(events: &[ScenarioEvent], seed: u64, config: &Config) -> Result<RunTrace, RunError> {
    run_with_store(events, seed, config, ObjectStore::in_memory())
}

/// Replays `events` against `store`, polling every `poll_interval_ms` of
/// virtual time until `tail_ms` after the last event and nothing is parked.
pub fn run_with_store(
    events: &[ScenarioEvent],
    seed: u64,
    config: &Config,
    store: ObjectStore,
) -> Result<RunTrace, RunError> {
    config.validate()?;
    let rules = config.client.rules()?;
    let creds = config.credentials.credentials()?;
    let start = config.sim.start_ms;
    let service = Arc::new(ChoreoService::new(store, creds.clone(), config.quota.ledger(start))?);
    let mut endpoint = LocalEndpoint::new(service.clone(), creds);

    let models: Vec<WeightChannelModel> = (0..WEIGHT_SLOTS)
        .map(|i| {
            WeightChannelModel::derived(i, config.sensors.offset_deltas[i]).with_noise(config.sensors.noise_span_counts)
        })
        .collect();
    let calibration = calibrate(config, &models, seed)?;
    let mut gateway = Gateway::new(config.gateway.clone(), calibration)?;
    let mut fridge = Fridge {
        masses: [0.0; WEIGHT_SLOTS],
        eggs: [None; EGG_SLOTS],
        bottles: [None; BOTTLE_SLOTS],
        temp: TempLevel::Off,
        weight_rngs: (0..WEIGHT_SLOTS as u64).map(|i| stream(seed, STREAM_WEIGHT + i)).collect(),
        models,
        egg_rng: stream(seed, STREAM_EGGS),
        egg_table: EggTable::measured(),
        egg_mode: config.sensors.egg_mode,
        bottle_model: BottleSlotModel::new(config.sensors.bottle_threshold_ml)
            .ok_or(ConfigError::Range("sensors.bottle_threshold_ml"))?,
    };
    let mut link = FaultyLink::new(SlaveNode::new(), stream(seed, STREAM_BUS));

    let poll = config.gateway.poll_interval_ms;
    let last_event = events.last().map_or(0, |e| e.at_ms);
    let end = last_event.saturating_add(config.sim.tail_ms);
    let hard_end = end.saturating_add(4 * config.gateway.backoff.cap_ms);
    let mut violations = Vec::new();
    let mut next_event = 0;
    let mut t = 0u64;
    let mut cycles = 0usize;
    let mut last_ts;

    loop {
        let now = start + t;
        while next_event < events.len() && events[next_event].at_ms <= t {
            apply(&events[next_event].action, &mut fridge, &service, &mut link, now)?;
            next_event += 1;
        }
        link.slave.update(fridge.scan()?)?;
        let before = gateway.state.last_uploaded.clone();
        let action = gateway.poll_cycle(&mut link, &mut endpoint, now)?;
        check_cycle(&gateway, &service, action, before.as_ref(), cycles, now, &mut violations);
        cycles += 1;
        last_ts = now;
        t += poll;
        let quiet = next_event >= events.len() && t > end;
        if (quiet && gateway.state.pending.is_none()) || t > hard_end {
            break;
        }
    }

    let status = cmd_status(&mut endpoint, &rules, last_ts, ReportFormat::Text);
    let latest = match service.fetch_latest() {
        Ok(l) => Some(parse_snapshot(&l.octets)?),
        Err(CloudError::EmptyStore) => None,
        Err(e) => return Err(e.into()),
    };
    let (objects, inventory_objects, max_seq) = service.with_store(|s| {
        let max_seq = s
            .inventory_objects()
            .filter_map(|o| parse_snapshot(&o.octets).ok())
            .map(|snap| snap.seq)
            .max();
        (s.objects().len(), s.inventory_objects().count(), max_seq)
    });
    let ledger = service.ledger();
    let st = &gateway.state;
    let summary = RunSummary {
        seed,
        cycles,
        events: events.len(),
        upload_count: st.upload_count,
        image_count: st.image_count,
        skip_count: st.skip_count,
        error_count: st.error_count,
        defer_count: st.defer_count,
        changes_observed: st.changes_observed,
        objects,
        inventory_objects,
        max_seq,
        pending: st.pending.is_some(),
        quota_used: ledger.used,
        quota_limit: ledger.limit,
    };

    let mut final_check = |invariant: &'static str, detail: String| {
        violations.push(Violation {
            cycle: cycles,
            ts_ms: last_ts,
            invariant,
            detail,
        })
    };
    let reported_seq = latest.as_ref().map(|s| s.seq);
    if status.revision.is_some() && reported_seq != max_seq {
        final_check("recency", format!("report shows seq {reported_seq:?}, store max is {max_seq:?}"));
    }
    if st.pending.is_none() {
        if latest.as_ref() != st.last_uploaded.as_ref() {
            final_check("consistency", "store latest differs from last upload".into());
        }
        if let (Some(l), Some(c)) = (&latest, &st.current) {
            let fields = changed_fields(l, c, gateway.config.deadband());
            if !fields.is_empty() {
                final_check("consistency", format!("store lags current state in {} fields", fields.len()));
            }
        }
    }

    let report = if status.stdout.is_empty() {
        status.stderr.clone()
    } else {
        status.stdout.clone()
    };
    Ok(RunTrace {
        summary,
        gateway_log: gateway.log_text(),
        manifest: service.manifest_text(),
        report,
        report_exit_code: status.exit_code,
        violations,
        latest,
        current: gateway.state.current.clone(),
        last_uploaded: gateway.state.last_uploaded.clone(),
    })
}

fn apply(
    action: &Action,
    fridge: &mut Fridge,
    service: &ChoreoService,
    link: &mut FaultyLink,
    now: u64,
) -> Result<(), RunError> {
    match *action {
        Action::PlaceWeight { slot, grams } => fridge.masses[slot] = grams,
        Action::RemoveWeight { slot } => fridge.masses[slot] = 0.0,
        Action::PlaceEgg { tray, slot, size } => fridge.place_egg(tray, slot, size)?,
        Action::RemoveEgg { tray, slot } => fridge.eggs[tray * SLOTS_PER_TRAY + slot] = None,
        Action::SettleEgg { tray, slot } => {
            if let Some(cup) = &mut fridge.eggs[tray * SLOTS_PER_TRAY + slot] {
                cup.state = EggSwitchState::Triggered;
            }
        }
        Action::PlaceBottle { slot, ml } => fridge.bottles[slot] = Some(ml),
        Action::RemoveBottle { slot } => fridge.bottles[slot] = None,
        Action::SetTempLevel { level } => fridge.temp = level,
        Action::QuotaSet { limit } => service.set_quota_limit(limit),
        Action::QuotaReset => {
            service.reset_period(now);
        }
        Action::CorruptBus { frames } => link.corrupt_next(frames),
    }
    Ok(())
}

fn check_cycle(
    gateway: &Gateway,
    service: &ChoreoService,
    action: CycleAction,
    before: Option<&InventorySnapshot>,
    cycle: usize,
    ts_ms: u64,
    violations: &mut Vec<Violation>,
) {
    let mut fail = |invariant: &'static str, detail: String| {
        violations.push(Violation {
            cycle,
            ts_ms,
            invariant,
            detail,
        })
    };
    let st = &gateway.state;
    let stored = service.with_store(|s| s.inventory_objects().count()) as u64;
    if stored != st.upload_count {
        fail("conservation", format!("{stored} inventory objects, {} uploads", st.upload_count));
    }
    if action == CycleAction::Upload {
        if let (Some(prev), Some(next)) = (before, &st.last_uploaded) {
            if changed_fields(prev, next, gateway.config.deadband()).is_empty() {
                fail("no-duplicate", format!("snapshot {} equals its predecessor", next.seq));
            }
        }
    }
    if gateway.config.heartbeat_ms == 0 && st.upload_count > 1 + st.changes_observed {
        fail(
            "coalescing",
            format!("{} uploads for {} changes", st.upload_count, st.changes_observed),
        );
    }
    if st.pending.is_some() && st.retry.is_none() {
        fail("pending", "snapshot parked without a retry schedule".into());
    }
}
