//! Per-stage timers and the transaction timing record shared by the
//! provider, consumer and benchmark.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use thiserror::Error;

/// Column order of the timing CSV.
pub const TIMING_CSV_HEADER: &str = "transaction_id,mode,record_count,t_generate_us,t_compress_us,t_publish_send_us,t_lookup_us,t_invoke_us,t_decompress_us,t_consume_us,payload_bytes,wire_bytes,digest,outcome";

/// Column order of the provider's `/metrics` CSV.
pub const METRICS_CSV_HEADER: &str =
    "transaction_id,mode,record_count,t_generate_us,t_compress_us,t_publish_send_us,payload_bytes,wire_bytes";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimingError {
    #[error("CSV header mismatch: {0:?}")]
    Header(String),
    #[error("CSV row {row}: {message}")]
    Row { row: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Generate,
    Compress,
    PublishSend,
    Lookup,
    Invoke,
    Parse,
    Decompress,
    Consume,
    /// Bench-only: the provider for a cell could not be started.
    Startup,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Compress => "compress",
            Stage::PublishSend => "publish_send",
            Stage::Lookup => "lookup",
            Stage::Invoke => "invoke",
            Stage::Parse => "parse",
            Stage::Decompress => "decompress",
            Stage::Consume => "consume",
            Stage::Startup => "startup",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "generate" => Stage::Generate,
            "compress" => Stage::Compress,
            "publish_send" => Stage::PublishSend,
            "lookup" => Stage::Lookup,
            "invoke" => Stage::Invoke,
            "parse" => Stage::Parse,
            "decompress" => Stage::Decompress,
            "consume" => Stage::Consume,
            "startup" => Stage::Startup,
            other => return Err(format!("unknown stage {other:?}")),
        })
    }
}

/// A monotonic clock reading tagged with the stage it closes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimerStamp {
    pub stage: Stage,
    pub at: Instant,
}

pub fn timer_stamp(stage: Stage) -> TimerStamp {
    TimerStamp { stage, at: Instant::now() }
}

/// Sequence of stamps; each stage lasts from the previous stamp to its own.
#[derive(Debug, Clone)]
pub struct StageTimer {
    start: Instant,
    stamps: Vec<TimerStamp>,
}

impl Default for StageTimer {
    fn default() -> Self {
        Self::start()
    }
}

impl StageTimer {
    pub fn start() -> Self {
        Self { start: Instant::now(), stamps: Vec::new() }
    }

    /// Closes `stage` at the current instant and returns its duration.
    pub fn stamp(&mut self, stage: Stage) -> Duration {
        let stamp = timer_stamp(stage);
        let since = self.stamps.last().map_or(self.start, |s| s.at);
        self.stamps.push(stamp);
        stamp.at.saturating_duration_since(since)
    }

    pub fn stamps(&self) -> &[TimerStamp] {
        &self.stamps
    }

    pub fn elapsed(&self) -> Duration {
        self.start.elapsed()
    }

    pub fn duration_of(&self, stage: Stage) -> Option<Duration> {
        let mut prev = self.start;
        for s in &self.stamps {
            if s.stage == stage {
                return Some(s.at.saturating_duration_since(prev));
            }
            prev = s.at;
        }
        None
    }

    pub fn micros_of(&self, stage: Stage) -> Option<u64> {
        self.duration_of(stage).map(micros)
    }
}

pub fn micros(d: Duration) -> u64 {
    u64::try_from(d.as_micros()).unwrap_or(u64::MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Plain,
    Compressed,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Plain => "plain",
            Mode::Compressed => "compressed",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "plain" => Ok(Mode::Plain),
            "compressed" => Ok(Mode::Compressed),
            other => Err(format!("unknown mode {other:?} (expected plain or compressed)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Failed { stage: Stage, kind: String },
}

impl Outcome {
    pub fn is_ok(&self) -> bool {
        matches!(self, Outcome::Ok)
    }

    pub fn failed_stage(&self) -> Option<Stage> {
        match self {
            Outcome::Ok => None,
            Outcome::Failed { stage, .. } => Some(*stage),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Ok => f.write_str("ok"),
            Outcome::Failed { stage, kind } => write!(f, "failed:{stage}:{kind}"),
        }
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "ok" {
            return Ok(Outcome::Ok);
        }
        let rest = s.strip_prefix("failed:").ok_or_else(|| format!("bad outcome {s:?}"))?;
        let (stage, kind) = rest.split_once(':').unwrap_or((rest, ""));
        Ok(Outcome::Failed { stage: stage.parse()?, kind: kind.to_string() })
    }
}

/// One transaction as seen by both endpoints. `None` durations are stages
/// that did not run (compress/decompress in plain mode) or were not
/// reached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionTiming {
    pub transaction_id: u64,
    pub mode: Option<Mode>,
    pub record_count: Option<usize>,
    pub t_generate: Option<u64>,
    pub t_compress: Option<u64>,
    pub t_publish_send: Option<u64>,
    pub t_lookup: Option<u64>,
    pub t_invoke: Option<u64>,
    pub t_decompress: Option<u64>,
    pub t_consume: Option<u64>,
    pub payload_bytes: Option<u64>,
    pub wire_bytes: Option<u64>,
    pub digest: Option<u64>,
    pub outcome: Outcome,
}

impl TransactionTiming {
    pub fn new(transaction_id: u64) -> Self {
        Self {
            transaction_id,
            mode: None,
            record_count: None,
            t_generate: None,
            t_compress: None,
            t_publish_send: None,
            t_lookup: None,
            t_invoke: None,
            t_decompress: None,
            t_consume: None,
            payload_bytes: None,
            wire_bytes: None,
            digest: None,
            outcome: Outcome::Ok,
        }
    }

    /// Consumer-observed latency: lookup, invoke, decompress and consume.
    pub fn end_to_end_us(&self) -> u64 {
        [self.t_lookup, self.t_invoke, self.t_decompress, self.t_consume].iter().flatten().sum()
    }

    pub fn durations(&self) -> [(Stage, Option<u64>); 7] {
        [
            (Stage::Generate, self.t_generate),
            (Stage::Compress, self.t_compress),
            (Stage::PublishSend, self.t_publish_send),
            (Stage::Lookup, self.t_lookup),
            (Stage::Invoke, self.t_invoke),
            (Stage::Decompress, self.t_decompress),
            (Stage::Consume, self.t_consume),
        ]
    }

    /// Fills provider-side fields from the matching `/metrics` row.
    pub fn merge_provider(&mut self, row: &ProviderTiming) {
        debug_assert_eq!(self.transaction_id, row.transaction_id);
        self.t_generate = row.t_generate;
        self.t_compress = row.t_compress;
        self.t_publish_send = row.t_publish_send;
        self.mode = self.mode.or(Some(row.mode));
        self.record_count = self.record_count.or(row.record_count);
        self.payload_bytes = self.payload_bytes.or(Some(row.payload_bytes));
    }

    pub fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.transaction_id.to_string(),
            self.mode.map(|m| m.to_string()).unwrap_or_default(),
            self.record_count.map(|c| c.to_string()).unwrap_or_default(),
            opt(self.t_generate),
            opt(self.t_compress),
            opt(self.t_publish_send),
            opt(self.t_lookup),
            opt(self.t_invoke),
            opt(self.t_decompress),
            opt(self.t_consume),
            opt(self.payload_bytes),
            opt(self.wire_bytes),
            self.digest.map(|d| format!("{d:016x}")).unwrap_or_default(),
            self.outcome.to_string(),
        ]
    }

    pub fn from_csv_fields(row: usize, fields: &[&str]) -> Result<Self, TimingError> {
        let err = |message: String| TimingError::Row { row, message };
        if fields.len() != 14 {
            return Err(err(format!("expected 14 fields, got {}", fields.len())));
        }
        let num = |i: usize| -> Result<Option<u64>, TimingError> {
            if fields[i].is_empty() {
                Ok(None)
            } else {
                fields[i].parse().map(Some).map_err(|_| err(format!("field {i}: bad number {:?}", fields[i])))
            }
        };
        Ok(Self {
            transaction_id: num(0)?.ok_or_else(|| err("missing transaction_id".into()))?,
            mode: if fields[1].is_empty() { None } else { Some(fields[1].parse().map_err(err)?) },
            record_count: num(2)?.map(|c| c as usize),
            t_generate: num(3)?,
            t_compress: num(4)?,
            t_publish_send: num(5)?,
            t_lookup: num(6)?,
            t_invoke: num(7)?,
            t_decompress: num(8)?,
            t_consume: num(9)?,
            payload_bytes: num(10)?,
            wire_bytes: num(11)?,
            digest: if fields[12].is_empty() {
                None
            } else {
                Some(u64::from_str_radix(fields[12], 16).map_err(|_| err(format!("bad digest {:?}", fields[12])))?)
            },
            outcome: fields[13].parse().map_err(err)?,
        })
    }
}

/// Provider-side half of a transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderTiming {
    pub transaction_id: u64,
    pub mode: Mode,
    pub record_count: Option<usize>,
    pub t_generate: Option<u64>,
    pub t_compress: Option<u64>,
    pub t_publish_send: Option<u64>,
    pub payload_bytes: u64,
    pub wire_bytes: u64,
}

impl ProviderTiming {
    pub fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.transaction_id.to_string(),
            self.mode.to_string(),
            self.record_count.map(|c| c.to_string()).unwrap_or_default(),
            opt(self.t_generate),
            opt(self.t_compress),
            opt(self.t_publish_send),
            self.payload_bytes.to_string(),
            self.wire_bytes.to_string(),
        ]
    }
}

fn write_csv<I: IntoIterator<Item = Vec<String>>>(header: &str, rows: I) -> String {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let _ = writer.write_record(header.split(','));
    for row in rows {
        let _ = writer.write_record(&row);
    }
    String::from_utf8(writer.into_inner().unwrap_or_default()).unwrap_or_default()
}

fn read_csv(header: &str, text: &str) -> Result<Vec<Vec<String>>, TimingError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut rows = reader.records();
    let first = match rows.next() {
        Some(Ok(r)) => r.iter().collect::<Vec<_>>().join(","),
        Some(Err(e)) => return Err(TimingError::Header(e.to_string())),
        None => return Err(TimingError::Header(String::new())),
    };
    if first != header {
        return Err(TimingError::Header(first));
    }
    rows.enumerate()
        .map(|(i, r)| {
            r.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| TimingError::Row { row: i + 1, message: e.to_string() })
        })
        .collect()
}

pub fn timings_to_csv(rows: &[TransactionTiming]) -> String {
    write_csv(TIMING_CSV_HEADER, rows.iter().map(TransactionTiming::csv_fields))
}

pub fn timings_from_csv(text: &str) -> Result<Vec<TransactionTiming>, TimingError> {
    read_csv(TIMING_CSV_HEADER, text)?
        .iter()
        .enumerate()
        .map(|(i, r)| TransactionTiming::from_csv_fields(i + 1, &r.iter().map(String::as_str).collect::<Vec<_>>()))
        .collect()
}

pub fn metrics_to_csv(rows: &[ProviderTiming]) -> String {
    write_csv(METRICS_CSV_HEADER, rows.iter().map(ProviderTiming::csv_fields))
}

pub fn metrics_from_csv(text: &str) -> Result<Vec<ProviderTiming>, TimingError> {
    read_csv(METRICS_CSV_HEADER, text)?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let row = i + 1;
            let err = |message: String| TimingError::Row { row, message };
            if r.len() != 8 {
                return Err(err(format!("expected 8 fields, got {}", r.len())));
            }
            let opt = |j: usize| -> Result<Option<u64>, TimingError> {
                if r[j].is_empty() {
                    Ok(None)
                } else {
                    r[j].parse().map(Some).map_err(|_| err(format!("field {j}: bad number {:?}", r[j])))
                }
            };
            let req = |j: usize| opt(j)?.ok_or_else(|| err(format!("field {j} is required")));
            Ok(ProviderTiming {
                transaction_id: req(0)?,
                mode: r[1].parse().map_err(err)?,
                record_count: opt(2)?.map(|c| c as usize),
                t_generate: opt(3)?,
                t_compress: opt(4)?,
                t_publish_send: opt(5)?,
                payload_bytes: req(6)?,
                wire_bytes: req(7)?,
            })
        })
        .collect()
}

/// Merges provider rows into consumer rows by transaction id.
pub fn join_provider_rows(rows: &mut [TransactionTiming], provider: &[ProviderTiming]) {
    for row in rows.iter_mut() {
        if let Some(p) = provider.iter().rev().find(|p| p.transaction_id == row.transaction_id) {
            row.merge_provider(p);
        }
    }
}
