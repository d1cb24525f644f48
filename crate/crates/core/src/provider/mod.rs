//! Provider web service: generates the message, decides whether to
//! compress it, wraps it in SOAP and serves it; registers itself with the
//! broker on startup.

mod generator;
mod service;

pub use generator::{generate_message, GeneratorSpec, DEFAULT_TEMPLATE, TEMPLATES};
pub use service::{provider_routes, publish_service, start, MetricsLog, RunningProvider};

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

use crate::broker::BrokerClientError;
use crate::codec::{compress, serialize_tokens, CodecError, CodecParams};
use crate::envelope::{check_representable, EnvelopeError, Fault, MessagePayload, SoapEnvelope, SoapRequest};
use crate::timing::{micros, timer_stamp, Mode, ProviderTiming, Stage, StageTimer, TimerStamp};
use crate::transport::TransportError;

/// The only operation the provider serves.
pub const GET_MESSAGE: &str = "getMessage";

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("invalid provider configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown payload template {0:?}")]
    UnknownTemplate(String),
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("could not register with the broker after {attempts} attempts: {last}")]
    Registration { attempts: u32, last: BrokerClientError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompressMode {
    Always,
    Never,
    /// Compress when the payload is at least `compress_threshold` bytes.
    Auto,
}

impl fmt::Display for CompressMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompressMode::Always => "always",
            CompressMode::Never => "never",
            CompressMode::Auto => "auto",
        })
    }
}

impl FromStr for CompressMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "always" => Ok(CompressMode::Always),
            "never" => Ok(CompressMode::Never),
            "auto" => Ok(CompressMode::Auto),
            other => Err(format!("unknown compress mode {other:?} (expected always, never or auto)")),
        }
    }
}

/// Broker registration retries: `attempts` tries, sleeping `base_delay`
/// after the first failure and doubling after each further one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_delay: Duration::from_millis(200) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderConfig {
    pub service_name: String,
    /// Address to bind and to advertise in the endpoint URL.
    pub host: String,
    /// 0 asks the OS for a free port.
    pub listen_port: u16,
    pub broker_url: String,
    pub compress_mode: CompressMode,
    pub compress_threshold: usize,
    pub payload_spec: GeneratorSpec,
    pub codec_params: CodecParams,
    pub registration: RetryPolicy,
    pub broker_timeout: Duration,
}

impl ProviderConfig {
    pub fn new(service_name: impl Into<String>, broker_url: impl Into<String>) -> Self {
        Self {
            service_name: service_name.into(),
            host: "127.0.0.1".into(),
            listen_port: 0,
            broker_url: broker_url.into(),
            compress_mode: CompressMode::Auto,
            compress_threshold: 512,
            payload_spec: GeneratorSpec::default(),
            codec_params: CodecParams::default(),
            registration: RetryPolicy::default(),
            broker_timeout: Duration::from_secs(2),
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if !crate::is_valid_service_name(&self.service_name) {
            return Err(ProviderError::InvalidConfig(format!("invalid service name {:?}", self.service_name)));
        }
        if self.host.is_empty() {
            return Err(ProviderError::InvalidConfig("host must not be empty".into()));
        }
        if url::Url::parse(&self.broker_url).map(|u| !u.has_host()).unwrap_or(true) {
            return Err(ProviderError::InvalidConfig(format!("broker URL {:?} is not absolute", self.broker_url)));
        }
        if self.registration.attempts == 0 {
            return Err(ProviderError::InvalidConfig("registration needs at least one attempt".into()));
        }
        if !TEMPLATES.contains(&self.payload_spec.template_id.as_str()) {
            return Err(ProviderError::UnknownTemplate(self.payload_spec.template_id.clone()));
        }
        self.codec_params.validate()?;
        Ok(())
    }
}

pub fn should_compress(payload: &MessagePayload, config: &ProviderConfig) -> bool {
    match config.compress_mode {
        CompressMode::Always => true,
        CompressMode::Never => false,
        CompressMode::Auto => payload.len() >= config.compress_threshold,
    }
}

/// Wraps `payload` verbatim. Fails when the bytes cannot travel as XML text.
pub fn normal_msg_handler(payload: MessagePayload) -> Result<SoapEnvelope, ProviderError> {
    check_representable(payload.bytes())?;
    Ok(SoapEnvelope::plain(GET_MESSAGE, payload))
}

/// Compresses `payload` into a `CMX1` block envelope.
pub fn compress_msg_handler(payload: &MessagePayload, params: &CodecParams) -> Result<SoapEnvelope, ProviderError> {
    let stream = compress(payload.bytes(), params)?;
    Ok(SoapEnvelope::compressed(GET_MESSAGE, serialize_tokens(&stream), payload.len() as u64))
}

/// Monotonic reading labelled with a provider stage.
pub fn provider_timer_stamp(stage: Stage) -> TimerStamp {
    timer_stamp(stage)
}

/// Result of one dispatched request, before serialization.
#[derive(Debug)]
pub struct Dispatched {
    pub envelope: SoapEnvelope,
    /// Present when a message was generated: provider-side stage timings.
    /// `t_publish_send` and `wire_bytes` are filled in by the caller once
    /// the envelope is serialized.
    pub timing: Option<ProviderTiming>,
    pub timer: StageTimer,
}

/// Routes a request: generate, then compress or wrap as-is. Unsupported
/// operations produce a Client fault, internal failures a Server fault.
pub fn controller_dispatch(request: &SoapRequest, config: &ProviderConfig) -> Dispatched {
    let mut timer = StageTimer::start();
    let with_id = |env: SoapEnvelope| match request.transaction_id {
        Some(id) => env.with_transaction_id(id),
        None => env,
    };
    if request.operation != GET_MESSAGE {
        let fault = Fault::client(format!("unsupported operation {}", request.operation));
        return Dispatched { envelope: with_id(SoapEnvelope::fault(Some(request.operation.clone()), fault)), timing: None, timer };
    }

    let server_fault = |e: ProviderError, timer: StageTimer| Dispatched {
        envelope: with_id(SoapEnvelope::fault(Some(GET_MESSAGE.into()), Fault::server(e.to_string()))),
        timing: None,
        timer,
    };

    let payload = match generate_message(&config.payload_spec) {
        Ok(p) => p,
        Err(e) => return server_fault(e, timer),
    };
    let t_generate = micros(timer.stamp(Stage::Generate));
    let payload_bytes = payload.len() as u64;

    let (result, mode, t_compress) = if should_compress(&payload, config) {
        let r = compress_msg_handler(&payload, &config.codec_params);
        (r, Mode::Compressed, Some(micros(timer.stamp(Stage::Compress))))
    } else {
        (normal_msg_handler(payload), Mode::Plain, None)
    };
    match result {
        Ok(envelope) => Dispatched {
            envelope: with_id(envelope),
            timing: Some(ProviderTiming {
                transaction_id: request.transaction_id.unwrap_or(0),
                mode,
                record_count: Some(config.payload_spec.record_count),
                t_generate: Some(t_generate),
                t_compress,
                t_publish_send: None,
                payload_bytes,
                wire_bytes: 0,
            }),
            timer,
        },
        Err(e) => server_fault(e, timer),
    }
}
