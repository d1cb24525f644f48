use std::path::{Path, PathBuf};
use std::time::Duration;

use super::BenchError;
use crate::codec::CodecParams;
use crate::provider::{DEFAULT_TEMPLATE, TEMPLATES};
use crate::timing::Mode;

/// Benchmark sweep. Read from a line-oriented `key=value` file; lists are
/// comma-separated, `#` starts a comment.
///
/// ```text
/// iterations=20
/// record_counts=50,200,1000
/// modes=plain,compressed
/// seed=7
/// output=timings.csv
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub iterations: usize,
    pub record_counts: Vec<usize>,
    pub modes: Vec<Mode>,
    pub seed: u64,
    pub output: PathBuf,
    pub codec_params: CodecParams,
    pub template_id: String,
    pub service_name: String,
    pub request_timeout: Duration,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            iterations: 20,
            record_counts: vec![50, 200, 1000],
            modes: vec![Mode::Plain, Mode::Compressed],
            seed: 1,
            output: PathBuf::from("timings.csv"),
            codec_params: CodecParams::default(),
            template_id: DEFAULT_TEMPLATE.to_string(),
            service_name: "MsgService".to_string(),
            request_timeout: Duration::from_millis(5000),
        }
    }
}

fn list<T>(value: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(parse).collect()
}

fn number<T: std::str::FromStr>(value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("{value:?} is not a valid number"))
}

impl BenchConfig {
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let mut config = BenchConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| BenchError::Config { line: line_no, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(err(format!("duplicate key {key}")));
            }
            seen.push(key.to_string());
            let result: Result<(), String> = (|| {
                match key {
                    "iterations" => config.iterations = number(value)?,
                    "record_counts" => config.record_counts = list(value, number)?,
                    "modes" => config.modes = list(value, |s| s.parse())?,
                    "seed" => config.seed = number(value)?,
                    "output" => config.output = PathBuf::from(value),
                    "window_size" => config.codec_params.window_size = number(value)?,
                    "lookahead_size" => config.codec_params.lookahead_size = number(value)?,
                    "min_match_len" => config.codec_params.min_match_len = number(value)?,
                    "initial_read_capacity" => config.codec_params.initial_read_capacity = number(value)?,
                    "template_id" => config.template_id = value.to_string(),
                    "service_name" => config.service_name = value.to_string(),
                    "request_timeout_ms" => config.request_timeout = Duration::from_millis(number(value)?),
                    other => return Err(format!("unknown key {other}")),
                }
                Ok(())
            })();
            result.map_err(err)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Io(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let invalid = |message: String| Err(BenchError::Config { line: 0, message });
        if self.iterations == 0 {
            return invalid("iterations must be at least 1".into());
        }
        if self.record_counts.is_empty() {
            return invalid("record_counts must not be empty".into());
        }
        if self.modes.is_empty() {
            return invalid("modes must not be empty".into());
        }
        if !TEMPLATES.contains(&self.template_id.as_str()) {
            return invalid(format!("unknown template_id {:?}", self.template_id));
        }
        if !crate::is_valid_service_name(&self.service_name) {
            return invalid(format!("invalid service_name {:?}", self.service_name));
        }
        if self.request_timeout.is_zero() {
            return invalid("request_timeout_ms must be positive".into());
        }
        self.codec_params.validate().map_err(|e| BenchError::Config { line: 0, message: e.to_string() })
    }
}
