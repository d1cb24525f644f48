//! SOAP 1.1 envelopes carrying plain or `CMX1`-compressed payloads, and the
//! WSDL 1.1 document describing a provider service.

mod base64;
mod soap;
mod wsdl;
pub mod xml;

pub use self::base64::{decode_base64, encode_base64, Base64Error};
pub use soap::{build_envelope, check_representable, build_request, parse_envelope, parse_request, SoapRequest};
pub use wsdl::{generate_wsdl, ServiceDescriptor};

use std::fmt;

use thiserror::Error;

pub const SOAP_ENV_NS: &str = "http://schemas.xmlsoap.org/soap/envelope/";
pub const CMX_NS: &str = "urn:cmx:messaging:1";
pub const COMPRESSION_ALGORITHM: &str = "CMX1-LZ77";
pub const DEFAULT_CONTENT_TYPE: &str = "text/xml";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EnvelopeError {
    #[error("not XML: {0}")]
    NotXml(String),
    #[error("missing SOAP element: {0}")]
    MissingElement(&'static str),
    #[error("unexpected element {0} in envelope")]
    UnexpectedElement(String),
    #[error("unknown body element {0}")]
    UnknownBodyElement(String),
    #[error("invalid {name} attribute: {value:?}")]
    InvalidAttribute { name: &'static str, value: String },
    #[error("inconsistent envelope: {0}")]
    Inconsistent(String),
    #[error("compressed block: {0}")]
    Base64(#[from] Base64Error),
    #[error("invalid envelope parts: {0}")]
    InvalidParts(String),
    #[error("payload cannot be carried as XML text (offending byte at {position}); send it compressed")]
    UnrepresentablePayload { position: usize },
    #[error("invalid operation name {0:?}")]
    InvalidOperation(String),
    #[error("invalid service descriptor: {0}")]
    InvalidDescriptor(String),
}

/// Application message: raw bytes plus a media type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessagePayload {
    bytes: Vec<u8>,
    content_type: String,
}

impl MessagePayload {
    pub fn new(bytes: impl Into<Vec<u8>>, content_type: impl Into<String>) -> Result<Self, EnvelopeError> {
        let content_type = content_type.into();
        if content_type.trim().is_empty() {
            return Err(EnvelopeError::InvalidParts("content type must not be empty".into()));
        }
        Ok(Self { bytes: bytes.into(), content_type })
    }

    /// Payload with the default `text/xml` media type.
    pub fn xml(bytes: impl Into<Vec<u8>>) -> Self {
        Self { bytes: bytes.into(), content_type: DEFAULT_CONTENT_TYPE.to_string() }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn content_type(&self) -> &str {
        &self.content_type
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultCode {
    VersionMismatch,
    MustUnderstand,
    Client,
    Server,
}

impl FaultCode {
    pub fn as_str(self) -> &'static str {
        match self {
            FaultCode::VersionMismatch => "VersionMismatch",
            FaultCode::MustUnderstand => "MustUnderstand",
            FaultCode::Client => "Client",
            FaultCode::Server => "Server",
        }
    }

    /// Accepts the bare local name or a prefixed QName such as `soap:Server`.
    pub fn parse(text: &str) -> Option<Self> {
        let local = text.trim().rsplit(':').next().unwrap_or_default();
        // SOAP 1.1 allows dotted refinements like Server.Timeout.
        match local.split('.').next().unwrap_or_default() {
            "VersionMismatch" => Some(FaultCode::VersionMismatch),
            "MustUnderstand" => Some(FaultCode::MustUnderstand),
            "Client" => Some(FaultCode::Client),
            "Server" => Some(FaultCode::Server),
            _ => None,
        }
    }
}

impl fmt::Display for FaultCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fault {
    pub code: FaultCode,
    pub reason: String,
}

impl Fault {
    pub fn new(code: FaultCode, reason: impl Into<String>) -> Self {
        Self { code, reason: reason.into() }
    }

    pub fn client(reason: impl Into<String>) -> Self {
        Self::new(FaultCode::Client, reason)
    }

    pub fn server(reason: impl Into<String>) -> Self {
        Self::new(FaultCode::Server, reason)
    }
}

/// What the envelope body carries. Exactly one of these is present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    Plain(MessagePayload),
    /// Serialized `CMX1` block and the byte count it decompresses to.
    Compressed { block: Vec<u8>, original_size: u64 },
    Fault(Fault),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SoapEnvelope {
    operation: Option<String>,
    transaction_id: Option<u64>,
    body: Body,
}

impl SoapEnvelope {
    pub fn plain(operation: impl Into<String>, payload: MessagePayload) -> Self {
        Self { operation: Some(operation.into()), transaction_id: None, body: Body::Plain(payload) }
    }

    pub fn compressed(operation: impl Into<String>, block: Vec<u8>, original_size: u64) -> Self {
        Self {
            operation: Some(operation.into()),
            transaction_id: None,
            body: Body::Compressed { block, original_size },
        }
    }

    pub fn fault(operation: Option<String>, fault: Fault) -> Self {
        Self { operation, transaction_id: None, body: Body::Fault(fault) }
    }

    /// Assembles an envelope from optional parts, enforcing that exactly one
    /// body kind is supplied and that `compressed` agrees with it.
    pub fn from_parts(
        operation: impl Into<String>,
        compressed: bool,
        payload: Option<MessagePayload>,
        block: Option<(Vec<u8>, u64)>,
        fault: Option<Fault>,
    ) -> Result<Self, EnvelopeError> {
        let operation = operation.into();
        let present = [payload.is_some(), block.is_some(), fault.is_some()].iter().filter(|p| **p).count();
        if present != 1 {
            return Err(EnvelopeError::InvalidParts(format!(
                "exactly one of payload, compressed block or fault is required, got {present}"
            )));
        }
        if compressed != block.is_some() {
            return Err(EnvelopeError::InvalidParts(format!(
                "compressed flag is {compressed} but a compressed block was {}",
                if block.is_some() { "given" } else { "not given" }
            )));
        }
        let body = match (payload, block, fault) {
            (Some(p), None, None) => Body::Plain(p),
            (None, Some((block, original_size)), None) => Body::Compressed { block, original_size },
            (None, None, Some(f)) => Body::Fault(f),
            _ => unreachable!("checked above"),
        };
        Ok(Self { operation: Some(operation), transaction_id: None, body })
    }

    pub fn with_transaction_id(mut self, id: u64) -> Self {
        self.transaction_id = Some(id);
        self
    }

    pub fn set_transaction_id(&mut self, id: Option<u64>) {
        self.transaction_id = id;
    }

    pub fn operation(&self) -> Option<&str> {
        self.operation.as_deref()
    }

    pub fn transaction_id(&self) -> Option<u64> {
        self.transaction_id
    }

    pub fn body(&self) -> &Body {
        &self.body
    }

    pub fn into_body(self) -> Body {
        self.body
    }

    pub fn is_compressed(&self) -> bool {
        matches!(self.body, Body::Compressed { .. })
    }

    pub fn payload(&self) -> Option<&MessagePayload> {
        match &self.body {
            Body::Plain(p) => Some(p),
            _ => None,
        }
    }

    pub fn compressed_block(&self) -> Option<&[u8]> {
        match &self.body {
            Body::Compressed { block, .. } => Some(block),
            _ => None,
        }
    }

    pub fn original_size(&self) -> Option<u64> {
        match &self.body {
            Body::Compressed { original_size, .. } => Some(*original_size),
            _ => None,
        }
    }

    pub fn fault_info(&self) -> Option<&Fault> {
        match &self.body {
            Body::Fault(f) => Some(f),
            _ => None,
        }
    }
}

/// Operation names double as XML element names in requests.
pub fn is_valid_operation(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_parts_rejects_two_bodies() {
        let r = SoapEnvelope::from_parts(
            "getMessage",
            true,
            Some(MessagePayload::xml("hi")),
            Some((vec![1, 2, 3], 3)),
            None,
        );
        assert!(matches!(r, Err(EnvelopeError::InvalidParts(_))));
    }

    #[test]
    fn from_parts_rejects_flag_mismatch() {
        let r = SoapEnvelope::from_parts("getMessage", true, Some(MessagePayload::xml("hi")), None, None);
        assert!(matches!(r, Err(EnvelopeError::InvalidParts(_))));
        let r = SoapEnvelope::from_parts("getMessage", false, None, Some((vec![], 0)), None);
        assert!(matches!(r, Err(EnvelopeError::InvalidParts(_))));
        let r = SoapEnvelope::from_parts("getMessage", false, None, None, None);
        assert!(matches!(r, Err(EnvelopeError::InvalidParts(_))));
    }

    #[test]
    fn from_parts_builds_each_kind() {
        let e = SoapEnvelope::from_parts("getMessage", false, Some(MessagePayload::xml("hi")), None, None).unwrap();
        assert!(!e.is_compressed());
        assert_eq!(e.payload().unwrap().bytes(), b"hi");
        let e = SoapEnvelope::from_parts("getMessage", true, None, Some((vec![9], 1)), None).unwrap();
        assert_eq!(e.original_size(), Some(1));
        let e = SoapEnvelope::from_parts("getMessage", false, None, None, Some(Fault::server("boom"))).unwrap();
        assert_eq!(e.fault_info().unwrap().code, FaultCode::Server);
    }

    #[test]
    fn empty_content_type_rejected() {
        assert!(MessagePayload::new("x", " ").is_err());
    }

    #[test]
    fn fault_code_forms() {
        assert_eq!(FaultCode::parse("soap:Server"), Some(FaultCode::Server));
        assert_eq!(FaultCode::parse("Client"), Some(FaultCode::Client));
        assert_eq!(FaultCode::parse("env:Server.Timeout"), Some(FaultCode::Server));
        assert_eq!(FaultCode::parse("Sender"), None);
    }

    #[test]
    fn operation_names() {
        assert!(is_valid_operation("getMessage"));
        assert!(is_valid_operation("_op-1.x"));
        assert!(!is_valid_operation(""));
        assert!(!is_valid_operation("1op"));
        assert!(!is_valid_operation("get Message"));
    }
}
