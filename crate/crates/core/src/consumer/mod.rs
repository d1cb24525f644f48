//! Requester side: looks the service up at the broker, invokes it, checks
//! the response format, decompresses when flagged and consumes the payload.

use std::time::Duration;

use thiserror::Error;

use crate::broker::{BrokerClient, BrokerClientError, ServiceRecord};
use crate::codec::{decompress, deserialize_tokens, CodecError, CodecParams};
use crate::envelope::{build_request, parse_envelope, Body, EnvelopeError, Fault, MessagePayload, SoapEnvelope, SoapRequest};
use crate::provider::GET_MESSAGE;
use crate::timing::{micros, Mode, Outcome, Stage, StageTimer, TransactionTiming};
use crate::transport::{soap_action, HttpClient, TransportError};

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsumerConfig {
    pub broker_url: String,
    pub service_name: String,
    pub iterations: usize,
    pub codec_params: CodecParams,
    pub request_timeout: Duration,
    /// Consecutive failed transactions after which polling stops.
    pub failure_limit: usize,
    /// Id of the first transaction; later ones count up from here.
    pub first_transaction_id: u64,
}

impl ConsumerConfig {
    pub fn new(broker_url: impl Into<String>, service_name: impl Into<String>) -> Self {
        Self {
            broker_url: broker_url.into(),
            service_name: service_name.into(),
            iterations: 1,
            codec_params: CodecParams::default(),
            request_timeout: Duration::from_millis(5000),
            failure_limit: 3,
            first_transaction_id: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ConsumerError> {
        let invalid = |m: String| Err(ConsumerError::InvalidConfig(m));
        if self.iterations == 0 {
            return invalid("iterations must be at least 1".into());
        }
        if self.request_timeout.is_zero() {
            return invalid("request timeout must be positive".into());
        }
        if self.failure_limit == 0 {
            return invalid("failure limit must be at least 1".into());
        }
        if !crate::is_valid_service_name(&self.service_name) {
            return invalid(format!("invalid service name {:?}", self.service_name));
        }
        self.codec_params.validate().map_err(|e| ConsumerError::InvalidConfig(e.to_string()))
    }

    fn broker(&self) -> BrokerClient {
        BrokerClient::new(&self.broker_url, self.request_timeout)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConsumerError {
    #[error("invalid consumer configuration: {0}")]
    InvalidConfig(String),
    #[error("broker unreachable: {0}")]
    BrokerUnreachable(TransportError),
    #[error("service {0} is not registered")]
    NotFound(String),
    #[error("broker answered unexpectedly: {0}")]
    BrokerProtocol(String),
    #[error("request timed out")]
    Timeout,
    #[error("connection refused: {0}")]
    ConnectionRefused(String),
    #[error("unexpected HTTP status {status}")]
    Protocol { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(TransportError),
    #[error("malformed envelope: {0}")]
    MalformedEnvelope(EnvelopeError),
    #[error("provider returned fault {}: {}", .0.code, .0.reason)]
    FaultReceived(Fault),
    #[error("decompressed {actual} bytes but originalSize is {expected}")]
    SizeMismatch { expected: u64, actual: u64 },
    #[error("compressed block has a bad magic number")]
    BadMagic,
    #[error("compressed block is truncated")]
    Truncated,
    #[error("malformed token stream: {0}")]
    MalformedStream(CodecError),
}

impl ConsumerError {
    /// Short label written into the outcome column.
    pub fn kind(&self) -> &'static str {
        match self {
            ConsumerError::InvalidConfig(_) => "invalid-config",
            ConsumerError::BrokerUnreachable(_) => "broker-unreachable",
            ConsumerError::NotFound(_) => "not-found",
            ConsumerError::BrokerProtocol(_) => "broker-protocol",
            ConsumerError::Timeout => "timeout",
            ConsumerError::ConnectionRefused(_) => "connection-refused",
            ConsumerError::Protocol { .. } => "protocol",
            ConsumerError::Transport(_) => "transport",
            ConsumerError::MalformedEnvelope(_) => "malformed-envelope",
            ConsumerError::FaultReceived(_) => "fault-received",
            ConsumerError::SizeMismatch { .. } => "size-mismatch",
            ConsumerError::BadMagic => "bad-magic",
            ConsumerError::Truncated => "truncated-stream",
            ConsumerError::MalformedStream(_) => "malformed-stream",
        }
    }
}

impl From<BrokerClientError> for ConsumerError {
    fn from(e: BrokerClientError) -> Self {
        match e {
            BrokerClientError::Unreachable(t) => ConsumerError::BrokerUnreachable(t),
            BrokerClientError::NotFound(name) => ConsumerError::NotFound(name),
            BrokerClientError::Rejected(m) => ConsumerError::BrokerProtocol(m),
            BrokerClientError::Protocol { status, body } => {
                ConsumerError::BrokerProtocol(format!("status {status}: {}", body.trim()))
            }
        }
    }
}

impl From<TransportError> for ConsumerError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Timeout => ConsumerError::Timeout,
            TransportError::ConnectFailure(m) => ConsumerError::ConnectionRefused(m),
            TransportError::Protocol { status, body } => ConsumerError::Protocol { status, body },
            other => ConsumerError::Transport(other),
        }
    }
}

impl From<CodecError> for ConsumerError {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::BadMagic { .. } => ConsumerError::BadMagic,
            CodecError::Truncated { .. } => ConsumerError::Truncated,
            CodecError::LengthMismatch { expected, actual } => ConsumerError::SizeMismatch { expected, actual },
            other => ConsumerError::MalformedStream(other),
        }
    }
}

/// A failed transaction: what went wrong, where, and the timings gathered
/// up to that point.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{stage} failed: {error}")]
pub struct StageError {
    pub stage: Stage,
    pub error: ConsumerError,
    pub timing: Box<TransactionTiming>,
}

pub fn lookup_service(config: &ConsumerConfig) -> Result<ServiceRecord, ConsumerError> {
    Ok(config.broker().lookup(&config.service_name)?)
}

/// Posts a `operation` request to the record's endpoint and returns the
/// response body. Faults arrive as 500 responses and are returned as text.
pub fn ws_receiver_proxy(
    record: &ServiceRecord,
    operation: &str,
    transaction_id: Option<u64>,
    timeout: Duration,
) -> Result<String, ConsumerError> {
    let mut request = SoapRequest::new(operation);
    request.transaction_id = transaction_id;
    let xml = build_request(&request).map_err(|e| ConsumerError::InvalidConfig(e.to_string()))?;
    let action = soap_action(&record.service_name, operation);
    Ok(HttpClient::new(timeout).soap_post(&record.endpoint_url, &xml, &action)?)
}

/// Parses the response and rejects faults.
pub fn receive(raw: &str) -> Result<SoapEnvelope, ConsumerError> {
    let envelope = parse_envelope(raw).map_err(ConsumerError::MalformedEnvelope)?;
    if let Some(fault) = envelope.fault_info() {
        return Err(ConsumerError::FaultReceived(fault.clone()));
    }
    Ok(envelope)
}

/// Restores a compressed block and checks it against `original_size`.
pub fn decompress_block(block: &[u8], original_size: u64, params: &CodecParams) -> Result<Vec<u8>, ConsumerError> {
    let stream = deserialize_tokens(block)?;
    if stream.original_length != original_size {
        return Err(ConsumerError::SizeMismatch { expected: original_size, actual: stream.original_length });
    }
    let bytes = decompress(&stream, params)?;
    if bytes.len() as u64 != original_size {
        return Err(ConsumerError::SizeMismatch { expected: original_size, actual: bytes.len() as u64 });
    }
    Ok(bytes)
}

/// Turns a received envelope into a plain payload.
pub fn decode(envelope: SoapEnvelope, params: &CodecParams) -> Result<MessagePayload, ConsumerError> {
    match envelope.into_body() {
        Body::Plain(payload) => Ok(payload),
        Body::Compressed { block, original_size } => {
            decompress_block(&block, original_size, params).map(MessagePayload::xml)
        }
        Body::Fault(fault) => Err(ConsumerError::FaultReceived(fault)),
    }
}

pub fn on_message(raw: &str, params: &CodecParams) -> Result<MessagePayload, ConsumerError> {
    decode(receive(raw)?, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Consumption {
    pub length: u64,
    pub digest: u64,
}

pub fn consume(payload: &MessagePayload) -> Consumption {
    Consumption { length: payload.len() as u64, digest: fnv1a64(payload.bytes()) }
}

/// One full transaction: lookup, invoke, parse, decompress, consume.
pub fn ws_provider_service(
    config: &ConsumerConfig,
    transaction_id: u64,
) -> Result<(MessagePayload, TransactionTiming), StageError> {
    let mut timing = TransactionTiming::new(transaction_id);
    let mut timer = StageTimer::start();
    let fail = |stage: Stage, error: ConsumerError, mut timing: TransactionTiming| {
        timing.outcome = Outcome::Failed { stage, kind: error.kind().to_string() };
        StageError { stage, error, timing: Box::new(timing) }
    };

    let record = match lookup_service(config) {
        Ok(r) => r,
        Err(e) => return Err(fail(Stage::Lookup, e, timing)),
    };
    timing.t_lookup = Some(micros(timer.stamp(Stage::Lookup)));

    let raw = match ws_receiver_proxy(&record, GET_MESSAGE, Some(transaction_id), config.request_timeout) {
        Ok(raw) => raw,
        Err(e) => return Err(fail(Stage::Invoke, e, timing)),
    };
    timing.wire_bytes = Some(raw.len() as u64);
    let envelope = match receive(&raw) {
        Ok(env) => env,
        Err(e) => return Err(fail(Stage::Parse, e, timing)),
    };
    timing.t_invoke = Some(micros(timer.stamp(Stage::Invoke)));
    timing.mode = Some(if envelope.is_compressed() { Mode::Compressed } else { Mode::Plain });

    let payload = if envelope.is_compressed() {
        match decode(envelope, &config.codec_params) {
            Ok(p) => {
                timing.t_decompress = Some(micros(timer.stamp(Stage::Decompress)));
                p
            }
            Err(e) => return Err(fail(Stage::Decompress, e, timing)),
        }
    } else {
        match decode(envelope, &config.codec_params) {
            Ok(p) => p,
            Err(e) => return Err(fail(Stage::Parse, e, timing)),
        }
    };

    let report = consume(&payload);
    timing.t_consume = Some(micros(timer.stamp(Stage::Consume)));
    timing.payload_bytes = Some(report.length);
    timing.digest = Some(report.digest);
    Ok((payload, timing))
}

/// Runs `iterations` sequential transactions, stopping early after
/// `failure_limit` consecutive failures. Failed transactions are returned
/// as rows with a failed outcome.
pub fn poll_until_done(config: &ConsumerConfig) -> Vec<TransactionTiming> {
    let mut rows = Vec::with_capacity(config.iterations);
    let mut consecutive = 0;
    for i in 0..config.iterations {
        let id = config.first_transaction_id + i as u64;
        match ws_provider_service(config, id) {
            Ok((_, timing)) => {
                consecutive = 0;
                rows.push(timing);
            }
            Err(e) => {
                log::warn!("transaction {id}: {e}");
                rows.push(*e.timing);
                consecutive += 1;
                if consecutive >= config.failure_limit {
                    log::warn!("stopping after {consecutive} consecutive failures");
                    break;
                }
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{compress, serialize_tokens};
    use crate::envelope::build_envelope;
    use proptest::prelude::*;

    fn compressed_xml(bytes: &[u8], original_size: u64) -> String {
        let block = serialize_tokens(&compress(bytes, &CodecParams::default()).unwrap());
        build_envelope(&SoapEnvelope::compressed(GET_MESSAGE, block, original_size)).unwrap()
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), FNV_OFFSET_BASIS);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn consume_records_length_and_digest() {
        let c = consume(&MessagePayload::xml(""));
        assert_eq!(c, Consumption { length: 0, digest: FNV_OFFSET_BASIS });
        let p = MessagePayload::xml("same");
        assert_eq!(consume(&p), consume(&p));
        assert_eq!(consume(&MessagePayload::xml("ab")).length, 2);
    }

    #[test]
    fn on_message_plain() {
        let raw = build_envelope(&SoapEnvelope::plain(GET_MESSAGE, MessagePayload::xml("hi"))).unwrap();
        assert_eq!(on_message(&raw, &CodecParams::default()).unwrap().bytes(), b"hi");
    }

    #[test]
    fn on_message_compressed() {
        let data = vec![b'A'; 1024];
        let out = on_message(&compressed_xml(&data, 1024), &CodecParams::default()).unwrap();
        assert_eq!(out.bytes(), &data[..]);
    }

    #[test]
    fn on_message_size_mismatch() {
        let data = vec![b'A'; 1024];
        let err = on_message(&compressed_xml(&data, 1025), &CodecParams::default()).unwrap_err();
        assert_eq!(err.kind(), "size-mismatch");
    }

    #[test]
    fn on_message_bad_block() {
        let env = |block: Vec<u8>, n| build_envelope(&SoapEnvelope::compressed(GET_MESSAGE, block, n)).unwrap();
        let p = CodecParams::default();
        assert_eq!(on_message(&env(b"CMX2\0\0\0\0\0\0\0\0".to_vec(), 0), &p).unwrap_err(), ConsumerError::BadMagic);
        assert_eq!(on_message(&env(b"CMX1\0\0".to_vec(), 0), &p).unwrap_err(), ConsumerError::Truncated);
        // reference before any output
        let mut block = b"CMX1\0\0\0\0\0\0\0\x01".to_vec();
        block.extend_from_slice(&[0, 1, 0, 1, b'x']);
        assert_eq!(on_message(&env(block, 1), &p).unwrap_err().kind(), "malformed-stream");
    }

    #[test]
    fn on_message_fault_and_garbage() {
        let raw = build_envelope(&SoapEnvelope::fault(None, Fault::server("boom"))).unwrap();
        let err = on_message(&raw, &CodecParams::default()).unwrap_err();
        assert!(matches!(&err, ConsumerError::FaultReceived(f) if f.reason == "boom"));
        assert_eq!(on_message("not xml", &CodecParams::default()).unwrap_err().kind(), "malformed-envelope");
    }

    #[test]
    fn transport_errors_map_to_kinds() {
        assert_eq!(ConsumerError::from(TransportError::Timeout).kind(), "timeout");
        assert_eq!(ConsumerError::from(TransportError::ConnectFailure("x".into())).kind(), "connection-refused");
        let e = ConsumerError::from(BrokerClientError::Unreachable(TransportError::Timeout));
        assert_eq!(e.kind(), "broker-unreachable");
        assert_eq!(ConsumerError::from(BrokerClientError::NotFound("S".into())).kind(), "not-found");
    }

    #[test]
    fn config_validation() {
        let base = ConsumerConfig::new("http://127.0.0.1:1", "MsgService");
        assert!(base.validate().is_ok());
        assert_eq!(base.request_timeout, Duration::from_millis(5000));
        let mut c = base.clone();
        c.iterations = 0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.request_timeout = Duration::ZERO;
        assert!(c.validate().is_err());
    }

    #[test]
    fn broker_down_fails_at_lookup() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        drop(listener);
        let mut config = ConsumerConfig::new(format!("http://127.0.0.1:{port}"), "MsgService");
        config.iterations = 5;
        config.request_timeout = Duration::from_millis(500);
        let rows = poll_until_done(&config);
        assert_eq!(rows.len(), 3);
        for row in &rows {
            assert_eq!(row.outcome.to_string(), "failed:lookup:broker-unreachable");
        }
        assert_eq!(rows.iter().map(|r| r.transaction_id).collect::<Vec<_>>(), [1, 2, 3]);
    }

    proptest! {
        #[test]
        fn on_message_inverts_both_paths(data in proptest::collection::vec(any::<u8>(), 0..2048)) {
            let params = CodecParams::default();
            let out = on_message(&compressed_xml(&data, data.len() as u64), &params).unwrap();
            prop_assert_eq!(out.bytes(), &data[..]);
            if crate::envelope::check_representable(&data).is_ok() {
                let raw = build_envelope(&SoapEnvelope::plain(GET_MESSAGE, MessagePayload::xml(data.clone()))).unwrap();
                let out = on_message(&raw, &params).unwrap();
                prop_assert_eq!(out.bytes(), &data[..]);
            }
        }
    }
}
