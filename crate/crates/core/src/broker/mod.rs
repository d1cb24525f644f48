//! Service broker: providers publish where they live, requesters look them up.
//!
//! The registry is an in-memory map guarded by a single mutex; the HTTP
//! front end in [`routes`] may serve any number of requests concurrently.

mod api;
mod client;

pub use api::routes;
pub use client::{BrokerClient, BrokerClientError};

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BrokerError {
    #[error("invalid service record: {0}")]
    Invalid(String),
    #[error("service {0} is not registered")]
    NotFound(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceRecord {
    pub service_name: String,
    pub endpoint_url: String,
    pub wsdl_url: String,
    /// Milliseconds since the Unix epoch, stamped by the broker.
    pub registered_at: u64,
}

fn check_absolute(field: &str, value: &str) -> Result<(), BrokerError> {
    match Url::parse(value) {
        Ok(u) if u.has_host() => Ok(()),
        _ => Err(BrokerError::Invalid(format!("{field} must be an absolute URL, got {value:?}"))),
    }
}

impl ServiceRecord {
    pub fn new(
        service_name: impl Into<String>,
        endpoint_url: impl Into<String>,
        wsdl_url: impl Into<String>,
    ) -> Result<Self, BrokerError> {
        let record = Self {
            service_name: service_name.into(),
            endpoint_url: endpoint_url.into(),
            wsdl_url: wsdl_url.into(),
            registered_at: 0,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<(), BrokerError> {
        if !crate::is_valid_service_name(&self.service_name) {
            return Err(BrokerError::Invalid(format!("invalid service name {:?}", self.service_name)));
        }
        check_absolute("endpoint_url", &self.endpoint_url)?;
        check_absolute("wsdl_url", &self.wsdl_url)
    }

    /// `key=value` lines: endpoint_url, wsdl_url, registered_at.
    pub fn to_text(&self) -> String {
        format!(
            "endpoint_url={}\nwsdl_url={}\nregistered_at={}\n",
            self.endpoint_url, self.wsdl_url, self.registered_at
        )
    }

    /// Same as [`to_text`](Self::to_text) with a leading service_name line.
    pub fn to_listing_text(&self) -> String {
        format!("service_name={}\n{}", self.service_name, self.to_text())
    }

    /// Parses `key=value` lines. `service_name` is used when the text does
    /// not carry one.
    pub fn parse_text(text: &str, service_name: Option<&str>) -> Result<Self, BrokerError> {
        let fields = parse_fields(text)?;
        let get = |key: &str| fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone());
        let name = get("service_name")
            .or(service_name.map(str::to_string))
            .ok_or_else(|| BrokerError::Invalid("missing service_name".into()))?;
        let endpoint = get("endpoint_url").ok_or_else(|| BrokerError::Invalid("missing endpoint_url".into()))?;
        let wsdl = get("wsdl_url").ok_or_else(|| BrokerError::Invalid("missing wsdl_url".into()))?;
        let registered_at = match get("registered_at") {
            Some(v) => v.parse().map_err(|_| BrokerError::Invalid(format!("bad registered_at {v:?}")))?,
            None => 0,
        };
        let mut record = Self::new(name, endpoint, wsdl)?;
        record.registered_at = registered_at;
        Ok(record)
    }
}

const KNOWN_KEYS: [&str; 4] = ["service_name", "endpoint_url", "wsdl_url", "registered_at"];

fn parse_fields(text: &str) -> Result<Vec<(String, String)>, BrokerError> {
    let mut fields: Vec<(String, String)> = Vec::new();
    for line in text.lines().map(|l| l.trim_end_matches('\r')).filter(|l| !l.trim().is_empty()) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| BrokerError::Invalid(format!("expected key=value, got {line:?}")))?;
        let key = key.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(BrokerError::Invalid(format!("unknown key {key:?}")));
        }
        if fields.iter().any(|(k, _)| k == key) {
            return Err(BrokerError::Invalid(format!("duplicate key {key:?}")));
        }
        fields.push((key.to_string(), value.trim().to_string()));
    }
    Ok(fields)
}

/// Parses a `GET /services` body: records separated by blank lines.
pub fn parse_listing(text: &str) -> Result<Vec<ServiceRecord>, BrokerError> {
    text.replace("\r\n", "\n")
        .split("\n\n")
        .filter(|block| !block.trim().is_empty())
        .map(|block| ServiceRecord::parse_text(block, None))
        .collect()
}

pub fn render_listing(records: &[ServiceRecord]) -> String {
    records.iter().map(ServiceRecord::to_listing_text).collect::<Vec<_>>().join("\n")
}

fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

#[derive(Debug, Default)]
pub struct Registry {
    services: Mutex<BTreeMap<String, ServiceRecord>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, BTreeMap<String, ServiceRecord>> {
        self.services.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    /// Stores `record`, replacing any earlier one with the same name, and
    /// returns it as stored (with `registered_at` set).
    pub fn publish(&self, mut record: ServiceRecord) -> Result<ServiceRecord, BrokerError> {
        record.validate()?;
        let mut services = self.lock();
        let previous = services.get(&record.service_name).map(|r| r.registered_at).unwrap_or(0);
        record.registered_at = now_millis().max(previous);
        services.insert(record.service_name.clone(), record.clone());
        log::info!("published {} -> {}", record.service_name, record.endpoint_url);
        Ok(record)
    }

    pub fn lookup(&self, service_name: &str) -> Result<ServiceRecord, BrokerError> {
        self.lock().get(service_name).cloned().ok_or_else(|| BrokerError::NotFound(service_name.to_string()))
    }

    /// Every record, sorted by service name.
    pub fn list_services(&self) -> Vec<ServiceRecord> {
        self.lock().values().cloned().collect()
    }

    pub fn unregister(&self, service_name: &str) -> Result<ServiceRecord, BrokerError> {
        let removed = self.lock().remove(service_name).ok_or_else(|| BrokerError::NotFound(service_name.to_string()))?;
        log::info!("unregistered {service_name}");
        Ok(removed)
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.lock().is_empty()
    }

    /// Writes one JSON object per line.
    pub fn save_snapshot(&self, path: &Path) -> Result<(), BrokerError> {
        let records = self.list_services();
        let tmp = path.with_extension("tmp");
        let write = || -> std::io::Result<()> {
            let mut file = fs::File::create(&tmp)?;
            for record in &records {
                let line = serde_json::to_string(record).map_err(std::io::Error::other)?;
                writeln!(file, "{line}")?;
            }
            file.sync_all()?;
            fs::rename(&tmp, path)
        };
        write().map_err(|e| BrokerError::Snapshot(format!("{}: {e}", path.display())))
    }

    /// Loads a snapshot written by [`save_snapshot`](Self::save_snapshot).
    /// Records keep their original `registered_at`.
    pub fn load_snapshot(path: &Path) -> Result<Self, BrokerError> {
        let file = fs::File::open(path).map_err(|e| BrokerError::Snapshot(format!("{}: {e}", path.display())))?;
        let registry = Self::new();
        {
            let mut services = registry.lock();
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| BrokerError::Snapshot(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: ServiceRecord = serde_json::from_str(&line)
                    .map_err(|e| BrokerError::Snapshot(format!("line {}: {e}", n + 1)))?;
                record.validate()?;
                services.insert(record.service_name.clone(), record);
            }
        }
        Ok(registry)
    }
}
