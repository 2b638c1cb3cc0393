use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use fridgesim_core::calibration::{fit_curve, CalibrationSet};
use fridgesim_core::client::{cmd_status, ReportFormat, Watcher, EXIT_UNAVAILABLE};
use fridgesim_core::cloud::http::HttpServer;
use fridgesim_core::cloud::{open_source, ChoreoService, ObjectStore};
use fridgesim_core::config::{Config, DEFAULT_CONFIG};
use fridgesim_core::fixtures;
use fridgesim_core::inventory::{parse_rules, DeficiencyRule};
use fridgesim_core::scenario::{parse_scenario, run_with_store, write_outputs};

#[derive(Parser)]
#[command(name = "fridgesim", version, about = "Inventory-monitoring fridge simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a scenario and write trace, MANIFEST, report and summary.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Object store directory; defaults to <out>/store.
        #[arg(long, env = "FRIDGESIM_STORE")]
        store: Option<PathBuf>,
    },
    /// Show the newest inventory snapshot and its alerts.
    ///
    /// Exit code 0: no alerts, 1: alerts, 2: nothing to show.
    Status {
        /// Store directory or http:// endpoint.
        #[arg(long, env = "FRIDGESIM_STORE")]
        store: String,
        /// Rules file, one `target >= minimum` per line.
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Take rules from a config file's [client] section.
        #[arg(long, conflicts_with = "rules")]
        config: Option<PathBuf>,
        #[arg(long)]
        watch: bool,
        /// Seconds between polls in watch mode.
        #[arg(long, default_value_t = 5.0)]
        interval: f64,
        #[arg(long, default_value = "text")]
        format: ReportFormat,
        /// Wall-clock time in Unix ms used for the age line.
        #[arg(long)]
        now: Option<u64>,
    },
    /// Serve a store directory over HTTP.
    Serve {
        #[arg(long, env = "FRIDGESIM_STORE")]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fit calibration curves from the weight tables and write a calibration file.
    Calibrate {
        /// Compressor-off CSV (mass_g, replicate, counts); built-in table if omitted.
        #[arg(long)]
        off: Option<PathBuf>,
        /// Compressor-on CSV (mass_g, temp, counts); built-in table if omitted.
        #[arg(long)]
        on: Option<PathBuf>,
        /// Fit the compressor-off table only.
        #[arg(long, conflicts_with = "on")]
        off_only: bool,
        /// Channel offset shifts are read from [sensors] offset_deltas.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default configuration.
    Config,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn cmd_run(scenario: &Path, seed: u64, config: Option<&Path>, out: &Path, store: Option<&Path>) -> Result<u8> {
    let config = load_config(config)?;
    let octets = std::fs::read(scenario).with_context(|| format!("reading {}", scenario.display()))?;
    let events = parse_scenario(&octets).with_context(|| format!("parsing {}", scenario.display()))?;
    let store_dir = store.map(Path::to_path_buf).unwrap_or_else(|| out.join("store"));
    let store = ObjectStore::open(&store_dir).with_context(|| format!("opening store {}", store_dir.display()))?;
    if store.last_revision() > 0 {
        bail!("store {} already holds objects; use a fresh directory", store_dir.display());
    }
    let trace = run_with_store(&events, seed, &config, store)?;
    write_outputs(&trace, out).with_context(|| format!("writing {}", out.display()))?;
    print!("{}", trace.summary_text());
    Ok(if trace.is_clean() { 0 } else { 1 })
}

fn read_rules(rules: Option<&Path>, config: Option<&Path>) -> Result<Vec<DeficiencyRule>> {
    if let Some(path) = rules {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return parse_rules(&text).with_context(|| format!("parsing {}", path.display()));
    }
    Ok(load_config(config)?.client.rules()?)
}

fn cmd_status_loop(
    store: &str,
    rules: Option<&Path>,
    config: Option<&Path>,
    watch: bool,
    interval: f64,
    format: ReportFormat,
    now: Option<u64>,
) -> Result<u8> {
    let rules = read_rules(rules, config)?;
    let mut source = open_source(store);
    let clock = || now.unwrap_or_else(now_ms);
    if !watch {
        let out = cmd_status(source.as_mut(), &rules, clock(), format);
        print!("{}", out.stdout);
        eprint!("{}", out.stderr);
        return Ok(out.exit_code as u8);
    }
    if !(interval.is_finite() && interval > 0.0) {
        bail!("--interval must be a positive number of seconds");
    }
    let mut watcher = Watcher::new();
    loop {
        if let Some(out) = watcher.poll(source.as_mut(), &rules, clock(), format) {
            print!("{}", out.stdout);
            if format == ReportFormat::Text {
                println!();
            }
            std::io::stdout().flush()?;
        }
        std::thread::sleep(Duration::from_secs_f64(interval));
    }
}

fn cmd_serve(store: &Path, addr: &str, config: Option<&Path>) -> Result<u8> {
    let config = load_config(config)?;
    let store = ObjectStore::open(store).with_context(|| format!("opening store {}", store.display()))?;
    let service = ChoreoService::new(store, config.credentials.credentials()?, config.quota.ledger(now_ms()))?;
    let server = HttpServer::start(Arc::new(service), addr)?;
    eprintln!("serving on {}", server.url());
    server.join();
    Ok(0)
}

fn cmd_calibrate(off: Option<&Path>, on: Option<&Path>, off_only: bool, config: Option<&Path>, out: &Path) -> Result<u8> {
    let config = load_config(config)?;
    let mut samples = match off {
        Some(p) => fixtures::read_off_state(std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?)?,
        None => fixtures::off_state_samples(),
    };
    if !off_only {
        samples.extend(match on {
            Some(p) => fixtures::read_on_state(std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?)?,
            None => fixtures::on_state_samples(),
        });
    }
    let base = fit_curve(&samples)?;
    let curves = config
        .sensors
        .offset_deltas
        .iter()
        .map(|delta| {
            let mut c = base.clone();
            for o in c.offset_counts_by_level.iter_mut().flatten() {
                *o += delta;
            }
            c
        })
        .collect();
    let set = CalibrationSet { curves };
    std::fs::write(out, set.to_text()).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "{} samples, gain {:.4} counts/g, r2 {:.6}, max residual {:.1} counts",
        samples.len(),
        base.gain_counts_per_gram,
        base.r_squared,
        base.residual_max_counts
    );
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            scenario,
            seed,
            config,
            out,
            store,
        } => cmd_run(scenario, *seed, config.as_deref(), out, store.as_deref()),
        Command::Status {
            store,
            rules,
            config,
            watch,
            interval,
            format,
            now,
        } => cmd_status_loop(store, rules.as_deref(), config.as_deref(), *watch, *interval, *format, *now),
        Command::Serve { store, addr, config } => cmd_serve(store, addr, config.as_deref()),
        Command::Calibrate {
            off,
            on,
            off_only,
            config,
            out,
        } => cmd_calibrate(off.as_deref(), on.as_deref(), *off_only, config.as_deref(), out),
        Command::Config => {
            print!("{DEFAULT_CONFIG}");
            Ok(0)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("fridgesim: {e:#}");
            let code = if matches!(cli.command, Command::Status { .. }) {
                EXIT_UNAVAILABLE as u8
            } else {
                1
            };
            ExitCode::from(code)
        }
    }
}
