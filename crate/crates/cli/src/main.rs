//! Command-line front end for the drift-detection toolkit.
//!
//! Subcommands cover the full workflow: `calibrate` builds a detector
//! profile from a CSV baseline or a bundled fixture, `detect` replays
//! samples through a calibrated detector, `emulate` produces labelled
//! synthetic streams (optionally accepting live drift injections on
//! stdin), `experiment` runs the seeded evaluation suite, `fleet-sim`
//! exercises the peer-classification scenarios, and `bench` measures
//! ingest throughput.
//!
//! Exit codes: 0 success, 1 unusable input (bad file, bad flag, malformed
//! data), 2 completed with degraded calibrations, 3 internal error. The
//! `DRIFT_SEED` environment variable overrides every seed flag and config
//! seed.

use std::fs;
use std::io::{self, BufRead, Write as _};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use driftkit_core::bus::Bus;
use driftkit_core::calibration::{
    calibrate, BaselineStats, CalibrationProfile, GridSpec, DEFAULT_BASELINE_LEN,
};
use driftkit_core::detector::WindowModel;
use driftkit_core::driftgen::{
    read_csv_path, ColumnMap, CsvRow, Emulator, InjectCommand, SensorProfile,
};
use driftkit_core::harness::{bench, env_seed, fleet_sim, run_experiment, ExperimentConfig};
use driftkit_core::{Detector, Error, Result};

#[derive(Parser)]
#[command(
    name = "driftkit",
    version,
    about = "Streaming drift detection: calibrate, detect, emulate, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a detector profile from a CSV baseline or a bundled fixture.
    Calibrate {
        /// CSV file of baseline samples, or a fixture name
        /// (temperature, humidity, pressure).
        input: String,
        /// Profile destination; a `.json` extension selects JSON, anything
        /// else the flat `key = value` format.
        #[arg(long)]
        out: PathBuf,
        /// Sensor label for CSV input; picks the matching window-model
        /// fixture and defaults to the CSV's sensor column (or
        /// "temperature").
        #[arg(long)]
        sensor: Option<String>,
        /// Baseline prefix length taken from the CSV (default: up to 100).
        #[arg(long)]
        baseline_len: Option<usize>,
    },
    /// Replay samples through a calibrated detector; drift events stream to
    /// stdout as JSON lines.
    Detect {
        /// Detector profile written by `calibrate`.
        #[arg(long)]
        profile: PathBuf,
        /// CSV file, or `bus:<pattern>` to read `{"topic", "value"}` JSON
        /// lines from stdin routed through the in-process bus.
        #[arg(long)]
        input: String,
        /// KS subsampling seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Emit an emulated sensor stream as labelled CSV on stdout.
    Emulate {
        /// Detector profile supplying the baseline distribution.
        #[arg(long)]
        profile: PathBuf,
        /// Samples to emit.
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
        /// Stream seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Apply drift-injection commands (JSON lines on stdin, e.g.
        /// {"kind":"abrupt","q_offset":5.0,"length":800}) between samples;
        /// acknowledgements go to stderr.
        #[arg(long)]
        inject_listen: bool,
        /// Pause between samples, for interactive injection sessions.
        #[arg(long, default_value_t = 0)]
        throttle_ms: u64,
    },
    /// Run the seeded experiment suite described by a JSON config file.
    Experiment {
        /// JSON document mirroring the experiment config fields; `{}` runs
        /// the defaults.
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a deterministic fleet scenario over a device manifest.
    FleetSim {
        /// JSON array of device records:
        /// {"device_id", "sensor_type", "tags": {...}}.
        #[arg(long)]
        manifest: PathBuf,
        /// One of: natural, abnormal, mixed.
        #[arg(long)]
        scenario: String,
        /// Scenario seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Measure single-stream ingest throughput with a calibrated detector.
    Bench {
        /// Detector profile to instantiate.
        #[arg(long)]
        profile: PathBuf,
        /// Samples to ingest.
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        /// Input-noise seed.
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn main() {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(exit_code(&err));
        }
    }
}

/// Maps error variants onto the documented exit codes.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Input(_) | Error::Format(_) | Error::Csv(_) | Error::Io(_) => 1,
        Error::State(_) | Error::Busy(_) | Error::BusClosed | Error::Json(_) => 3,
    }
}

/// Seed precedence: `DRIFT_SEED` beats the command-line flag.
fn effective_seed(flag: u64) -> Result<u64> {
    Ok(env_seed()?.unwrap_or(flag))
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Calibrate { input, out, sensor, baseline_len } => {
            cmd_calibrate(&input, &out, sensor.as_deref(), baseline_len)
        }
        Command::Detect { profile, input, seed } => {
            cmd_detect(&profile, &input, effective_seed(seed)?)
        }
        Command::Emulate { profile, samples, seed, inject_listen, throttle_ms } => {
            cmd_emulate(&profile, samples, effective_seed(seed)?, inject_listen, throttle_ms)
        }
        Command::Experiment { config } => cmd_experiment(&config),
        Command::FleetSim { manifest, scenario, seed } => {
            cmd_fleet_sim(&manifest, &scenario, effective_seed(seed)?)
        }
        Command::Bench { profile, samples, seed } => {
            cmd_bench(&profile, samples, effective_seed(seed)?)
        }
    }
}

/// Reads a profile in the format implied by the file extension.
fn load_profile(path: &Path) -> Result<CalibrationProfile> {
    let text = fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        Ok(serde_json::from_str(&text)?)
    } else {
        CalibrationProfile::from_flat_text(&text)
    }
}

fn save_profile(profile: &CalibrationProfile, path: &Path) -> Result<()> {
    let text = if path.extension().is_some_and(|e| e == "json") {
        let mut json = serde_json::to_string_pretty(profile)?;
        json.push('\n');
        json
    } else {
        profile.to_flat_text()
    };
    fs::write(path, text)?;
    Ok(())
}

/// CSV import that tolerates files without device/sensor columns.
fn read_rows(path: &Path) -> Result<Vec<CsvRow>> {
    let full = ColumnMap::default();
    let minimal = ColumnMap { device_id: None, sensor_type: None, ..ColumnMap::default() };
    let import = read_csv_path(path, &full).or_else(|_| read_csv_path(path, &minimal))?;
    if import.skipped > 0 {
        eprintln!("skipped {} malformed rows", import.skipped);
    }
    Ok(import.rows)
}

fn cmd_calibrate(
    input: &str,
    out: &Path,
    sensor: Option<&str>,
    baseline_len: Option<usize>,
) -> Result<i32> {
    if let Some(fixture) = CalibrationProfile::fixture(input) {
        save_profile(&fixture, out)?;
        eprintln!("wrote bundled {input} profile to {}", out.display());
        return Ok(0);
    }

    let rows = read_rows(Path::new(input))?;
    if rows.is_empty() {
        return Err(Error::input(format!("{input}: no usable rows")));
    }
    let sensor_type = sensor
        .map(str::to_string)
        .or_else(|| {
            let s = &rows[0].sensor_type;
            (!s.is_empty()).then(|| s.clone())
        })
        .unwrap_or_else(|| "temperature".into());
    let window_model = match sensor_type.as_str() {
        "humidity" => WindowModel::humidity(),
        "pressure" => WindowModel::pressure(),
        _ => WindowModel::temperature(),
    };

    let available = rows.len();
    let take = match baseline_len {
        Some(n) if n > available => {
            return Err(Error::input(format!(
                "baseline length {n} exceeds the {available} rows available"
            )));
        }
        Some(n) => n,
        None => available.min(DEFAULT_BASELINE_LEN),
    };
    let values: Vec<f64> = rows.iter().take(take).map(|r| r.sample.value).collect();
    let stats = BaselineStats::collect(&values)?;
    let profile = calibrate(&sensor_type, &stats, &GridSpec::default(), window_model)?;
    let degraded = profile.degraded;
    save_profile(&profile, out)?;
    eprintln!(
        "calibrated {sensor_type} on {take} samples: delta={}, beta={}, lambda={}, alpha={}, \
         l_r={}{}",
        profile.delta,
        profile.beta,
        profile.lambda,
        profile.alpha,
        profile.l_r,
        if degraded { " (degraded: no zero-alarm grid point for some estimator)" } else { "" }
    );
    Ok(if degraded { 2 } else { 0 })
}

/// One stdin line routed through the bus for `detect --input bus:<pattern>`.
#[derive(Debug, Deserialize, serde::Serialize)]
struct BusSample {
    topic: String,
    value: f64,
}

fn cmd_detect(profile_path: &Path, input: &str, seed: u64) -> Result<i32> {
    let profile = load_profile(profile_path)?;
    let params = profile.detector_params(seed);
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut events = 0usize;
    let mut samples = 0u64;

    if let Some(pattern) = input.strip_prefix("bus:") {
        let bus = Bus::new();
        let subscription = bus.subscribe(pattern)?;
        let mut detector = Detector::new(pattern, params)?;
        for line in io::stdin().lock().lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let msg: BusSample = serde_json::from_str(&line)?;
            bus.publish_json(&msg.topic, &msg)?;
            for delivered in subscription.drain() {
                let msg: BusSample = delivered.json()?;
                samples += 1;
                let outcome = detector.ingest_value(msg.value)?;
                if let Some(event) = outcome.event {
                    events += 1;
                    serde_json::to_writer(&mut out, &event)?;
                    out.write_all(b"\n")?;
                }
            }
        }
    } else {
        let rows = read_rows(Path::new(input))?;
        let stream_id = Path::new(input)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "stream".into());
        let mut detector = Detector::new(stream_id, params)?;
        for row in rows {
            samples += 1;
            let outcome = detector.ingest(&row.sample)?;
            if let Some(event) = outcome.event {
                events += 1;
                serde_json::to_writer(&mut out, &event)?;
                out.write_all(b"\n")?;
            }
        }
    }
    out.flush()?;
    eprintln!("{samples} samples, {events} drift events");
    Ok(0)
}

fn cmd_emulate(
    profile_path: &Path,
    samples: u64,
    seed: u64,
    inject_listen: bool,
    throttle_ms: u64,
) -> Result<i32> {
    let profile = load_profile(profile_path)?;
    let sensor = SensorProfile {
        sensor_type: profile.sensor_type.clone(),
        mu_prime: profile.baseline.mu_prime,
        sigma2: profile.baseline.sigma2,
        sample_period_ms: 10_000,
    };
    let mut emulator = Emulator::new(sensor, seed)?;

    let commands = inject_listen.then(|| {
        let (tx, rx) = mpsc::channel::<String>();
        std::thread::spawn(move || {
            for line in io::stdin().lock().lines() {
                match line {
                    Ok(line) if !line.trim().is_empty() => {
                        if tx.send(line).is_err() {
                            break;
                        }
                    }
                    Ok(_) => {}
                    Err(_) => break,
                }
            }
        });
        rx
    });

    let stdout = io::stdout();
    let mut writer = csv::Writer::from_writer(stdout.lock());
    writer.write_record(["timestamp", "device_id", "sensor_type", "value", "label"])?;
    for _ in 0..samples {
        if let Some(rx) = &commands {
            for line in rx.try_iter() {
                match serde_json::from_str::<InjectCommand>(&line)
                    .map_err(Error::from)
                    .and_then(|cmd| emulator.apply_command(&cmd))
                {
                    Ok(at) => eprintln!("injection accepted, starts at sample {at}"),
                    Err(err) => eprintln!("injection rejected: {err}"),
                }
            }
        }
        let (sample, label) = emulator.next_sample();
        writer.write_record([
            sample.timestamp_ms.to_string(),
            "emulated-0".to_string(),
            emulator.profile().sensor_type.clone(),
            sample.value.to_string(),
            label.to_string(),
        ])?;
        if throttle_ms > 0 {
            writer.flush()?;
            std::thread::sleep(std::time::Duration::from_millis(throttle_ms));
        }
    }
    writer.flush()?;
    Ok(0)
}

fn cmd_experiment(config_path: &Path) -> Result<i32> {
    let config = ExperimentConfig::load(config_path)?;
    let report = run_experiment(&config)?;
    for a in &report.aggregates {
        println!(
            "sensor={} variant={} q_multiple={:.4} runs={} mean_f1={:.4} std_f1={:.4}",
            a.sensor,
            a.variant.label(),
            a.q_multiple,
            a.runs,
            a.mean_f1,
            a.std_f1
        );
    }
    let degraded = report.degraded_rows();
    eprintln!(
        "{} rows in {:.1} s{}",
        report.runtime.rows,
        report.runtime.total_ms as f64 / 1e3,
        if degraded > 0 { format!(", {degraded} degraded") } else { String::new() }
    );
    Ok(if degraded > 0 { 2 } else { 0 })
}

fn cmd_fleet_sim(manifest_path: &Path, scenario: &str, seed: u64) -> Result<i32> {
    let text = fs::read_to_string(manifest_path)?;
    let devices: Vec<driftkit_core::fleet::DeviceMetadata> = serde_json::from_str(&text)?;
    let scenario = scenario.parse()?;
    let report = fleet_sim(&devices, scenario, seed)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(0)
}

fn cmd_bench(profile_path: &Path, samples: usize, seed: u64) -> Result<i32> {
    let profile = load_profile(profile_path)?;
    let params = profile.detector_params(seed);
    let report = bench(&params, samples, seed)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(0)
}
