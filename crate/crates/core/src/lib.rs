//! Compressed SOAP message exchange between a provider and a consumer,
//! mediated by a service broker.

pub mod bench;
pub mod broker;
pub mod codec;
pub mod consumer;
pub mod envelope;
pub mod provider;
pub mod timing;
pub mod transport;

/// Service names appear in URL paths and XML names.
pub fn is_valid_service_name(name: &str) -> bool {
    !name.is_empty() && name.len() <= 128 && name.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}
