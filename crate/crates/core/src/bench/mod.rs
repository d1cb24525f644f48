//! Benchmark harness: runs broker, provider and consumer in one process
//! over loopback HTTP and compares plain against compressed transfers.

mod cli;
mod config;

pub use cli::cli_main;
pub use config::BenchConfig;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::broker::{self, BrokerClient, Registry};
use crate::consumer::{poll_until_done, ConsumerConfig};
use crate::provider::{self, CompressMode, GeneratorSpec, ProviderConfig, ProviderError, RunningProvider};
use crate::timing::{join_provider_rows, metrics_from_csv, timings_to_csv, Mode, Outcome, ProviderTiming, Stage, TransactionTiming};
use crate::transport::{self, HttpClient, Method, ServerHandle, TransportError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("{0}")]
    Io(String),
    #[error("could not start broker: {0}")]
    Broker(TransportError),
    #[error("no timing rows to report")]
    NoRows,
}

fn provider_error_kind(e: &ProviderError) -> &'static str {
    match e {
        ProviderError::InvalidConfig(_) | ProviderError::UnknownTemplate(_) | ProviderError::Codec(_) => "invalid-config",
        ProviderError::Envelope(_) => "envelope",
        ProviderError::Transport(TransportError::PortInUse(_)) => "port-in-use",
        ProviderError::Transport(_) => "transport",
        ProviderError::Registration { .. } => "registration",
    }
}

/// Fetches and parses a provider's `/metrics` log.
pub fn fetch_metrics(base_url: &str, timeout: Duration) -> Result<Vec<ProviderTiming>, String> {
    let response = HttpClient::new(timeout)
        .send(Method::Get, &format!("{base_url}/metrics"), &[], None)
        .map_err(|e| e.to_string())?;
    if response.status != 200 {
        return Err(format!("metrics request returned status {}", response.status));
    }
    metrics_from_csv(&response.body_text()).map_err(|e| e.to_string())
}

fn start_broker() -> Result<ServerHandle, BenchError> {
    transport::serve(broker::routes(Arc::new(Registry::new())), 0).map_err(BenchError::Broker)
}

fn provider_config(config: &BenchConfig, broker_url: &str, mode: Mode, record_count: usize) -> ProviderConfig {
    let mut p = ProviderConfig::new(&config.service_name, broker_url);
    p.compress_mode = match mode {
        Mode::Plain => CompressMode::Never,
        Mode::Compressed => CompressMode::Always,
    };
    p.payload_spec = GeneratorSpec::new(record_count, config.seed).with_template(&config.template_id);
    p.codec_params = config.codec_params;
    p.broker_timeout = config.request_timeout;
    p
}

fn run_cell(
    config: &BenchConfig,
    broker_url: &str,
    mode: Mode,
    record_count: usize,
    first_id: u64,
) -> Vec<TransactionTiming> {
    let started: Result<RunningProvider, ProviderError> =
        provider::start(provider_config(config, broker_url, mode, record_count));
    let running = match started {
        Ok(p) => p,
        Err(e) => {
            log::error!("cell {mode}/{record_count}: provider did not start: {e}");
            let mut row = TransactionTiming::new(first_id);
            row.mode = Some(mode);
            row.record_count = Some(record_count);
            row.outcome = Outcome::Failed { stage: Stage::Startup, kind: provider_error_kind(&e).to_string() };
            return vec![row];
        }
    };

    let mut consumer = ConsumerConfig::new(broker_url, &config.service_name);
    consumer.iterations = config.iterations;
    consumer.codec_params = config.codec_params;
    consumer.request_timeout = config.request_timeout;
    consumer.first_transaction_id = first_id;
    let mut rows = poll_until_done(&consumer);

    match fetch_metrics(&running.base_url(), config.request_timeout) {
        Ok(metrics) => join_provider_rows(&mut rows, &metrics),
        Err(e) => log::warn!("cell {mode}/{record_count}: no provider metrics: {e}"),
    }
    for row in &mut rows {
        row.mode = row.mode.or(Some(mode));
        row.record_count = row.record_count.or(Some(record_count));
    }

    if let Err(e) = BrokerClient::new(broker_url, config.request_timeout).unregister(&config.service_name) {
        log::warn!("could not unregister {}: {e}", config.service_name);
    }
    running.shutdown();
    rows
}

/// Runs every (record count, mode) cell in turn against a fresh provider
/// and returns the joined consumer and provider timings.
pub fn run_experiment(config: &BenchConfig) -> Result<Vec<TransactionTiming>, BenchError> {
    config.validate()?;
    let broker = start_broker()?;
    let broker_url = broker.base_url();
    let mut rows = Vec::new();
    let mut next_id = 1u64;
    for &record_count in &config.record_counts {
        for &mode in &config.modes {
            log::info!("cell {mode}/{record_count}: {} iterations", config.iterations);
            let cell = run_cell(config, &broker_url, mode, record_count, next_id);
            next_id += config.iterations as u64;
            rows.extend(cell);
        }
    }
    broker.shutdown();
    Ok(rows)
}

/// Median of sorted values; the mean of the two middle values for even
/// counts.
fn median(sorted: &[u64]) -> Option<u64> {
    match sorted.len() {
        0 => None,
        n if n % 2 == 1 => Some(sorted[n / 2]),
        n => Some((sorted[n / 2 - 1] + sorted[n / 2]) / 2),
    }
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[u64], p: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub mode: Option<Mode>,
    pub record_count: Option<usize>,
    pub count: usize,
    pub ok: usize,
    pub median_us: Option<u64>,
    pub p95_us: Option<u64>,
    pub mean_wire_bytes: Option<f64>,
    /// Plain over compressed mean wire bytes for this record count.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub cells: Vec<CellSummary>,
    pub table: String,
    pub csv: String,
}

impl Report {
    pub fn write_csv(&self, path: &Path) -> Result<(), BenchError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| BenchError::Io(format!("cannot create {}: {e}", dir.display())))?;
        }
        std::fs::write(path, &self.csv).map_err(|e| BenchError::Io(format!("cannot write {}: {e}", path.display())))
    }
}

fn summarize(rows: &[&TransactionTiming]) -> (usize, Option<u64>, Option<u64>, Option<f64>) {
    let ok: Vec<_> = rows.iter().filter(|r| r.outcome.is_ok()).collect();
    let mut durations: Vec<u64> = ok.iter().map(|r| r.end_to_end_us()).collect();
    durations.sort_unstable();
    let wire: Vec<u64> = ok.iter().filter_map(|r| r.wire_bytes).collect();
    let mean = (!wire.is_empty()).then(|| wire.iter().sum::<u64>() as f64 / wire.len() as f64);
    (ok.len(), median(&durations), percentile(&durations, 95.0), mean)
}

/// Per-cell statistics over successful transactions, as a text table, plus
/// the full timing CSV.
pub fn report(rows: &[TransactionTiming]) -> Result<Report, BenchError> {
    if rows.is_empty() {
        return Err(BenchError::NoRows);
    }
    let mut groups: BTreeMap<(Option<usize>, Option<Mode>), Vec<&TransactionTiming>> = BTreeMap::new();
    for row in rows {
        groups.entry((row.record_count, row.mode)).or_default().push(row);
    }
    let mut cells: Vec<CellSummary> = groups
        .iter()
        .map(|(&(record_count, mode), group)| {
            let (ok, median_us, p95_us, mean_wire_bytes) = summarize(group);
            CellSummary { mode, record_count, count: group.len(), ok, median_us, p95_us, mean_wire_bytes, ratio: None }
        })
        .collect();
    let wire_of = |cells: &[CellSummary], count, mode| {
        cells.iter().find(|c| c.record_count == count && c.mode == Some(mode)).and_then(|c| c.mean_wire_bytes)
    };
    let ratios: Vec<Option<f64>> = cells
        .iter()
        .map(|c| match (wire_of(&cells, c.record_count, Mode::Plain), wire_of(&cells, c.record_count, Mode::Compressed)) {
            (Some(p), Some(z)) if z > 0.0 => Some(p / z),
            _ => None,
        })
        .collect();
    for (cell, ratio) in cells.iter_mut().zip(ratios) {
        cell.ratio = ratio;
    }

    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<11} {:>8} {:>6} {:>6} {:>12} {:>12} {:>14} {:>7}",
        "mode", "records", "count", "ok", "median_us", "p95_us", "mean_wire_B", "ratio"
    );
    let na = |v: Option<String>| v.unwrap_or_else(|| "n/a".to_string());
    for c in &cells {
        let _ = writeln!(
            table,
            "{:<11} {:>8} {:>6} {:>6} {:>12} {:>12} {:>14} {:>7}",
            na(c.mode.map(|m| m.to_string())),
            na(c.record_count.map(|n| n.to_string())),
            c.count,
            c.ok,
            na(c.median_us.map(|v| v.to_string())),
            na(c.p95_us.map(|v| v.to_string())),
            na(c.mean_wire_bytes.map(|v| format!("{v:.1}"))),
            na(c.ratio.map(|v| format!("{v:.2}"))),
        );
    }
    Ok(Report { cells, table, csv: timings_to_csv(rows) })
}
