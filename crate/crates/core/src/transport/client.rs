use std::io::ErrorKind;
use std::time::Duration;

use url::Url;

use super::{Headers, HttpResponse, Method, TransportError, SOAP_CONTENT_TYPE};

const MAX_RESPONSE_BODY: u64 = 64 << 20;

/// `urn:cmx:{service}#{operation}`, the SOAPAction value (unquoted).
pub fn soap_action(service: &str, operation: &str) -> String {
    format!("urn:cmx:{service}#{operation}")
}

/// Blocking HTTP/1.1 client with a per-request deadline.
#[derive(Debug, Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    timeout: Duration,
}

impl HttpClient {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .proxy(None)
            .max_redirects(0)
            .build()
            .new_agent();
        Self { agent, timeout }
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn send(
        &self,
        method: Method,
        url: &str,
        headers: &[(&str, &str)],
        body: Option<&[u8]>,
    ) -> Result<HttpResponse, TransportError> {
        let parsed = Url::parse(url).map_err(|_| TransportError::InvalidUrl(url.to_string()))?;
        if parsed.scheme() != "http" || parsed.host().is_none() {
            return Err(TransportError::InvalidUrl(url.to_string()));
        }
        let result = match method {
            Method::Get | Method::Delete => {
                let mut req = if method == Method::Get { self.agent.get(url) } else { self.agent.delete(url) };
                for (k, v) in headers {
                    req = req.header(*k, *v);
                }
                req.call()
            }
            Method::Post | Method::Put => {
                let mut req = if method == Method::Post { self.agent.post(url) } else { self.agent.put(url) };
                for (k, v) in headers {
                    req = req.header(*k, *v);
                }
                req.send(body.unwrap_or_default())
            }
        };
        let mut response = result.map_err(classify)?;
        let status = response.status().as_u16();
        let mut out_headers = Headers::new();
        for (name, value) in response.headers() {
            if let Ok(v) = value.to_str() {
                out_headers.append(name.as_str(), v);
            }
        }
        let body = response.body_mut().with_config().limit(MAX_RESPONSE_BODY).read_to_vec().map_err(classify)?;
        Ok(HttpResponse { status, headers: out_headers, body })
    }

    /// POSTs a SOAP envelope and returns the response envelope text.
    ///
    /// A 500 carrying XML is the SOAP Fault path and is returned like a
    /// 200; every other status is a protocol error.
    pub fn soap_post(&self, endpoint_url: &str, envelope: &str, soap_action: &str) -> Result<String, TransportError> {
        if envelope.is_empty() {
            return Err(TransportError::Io("refusing to send an empty envelope".into()));
        }
        let action = format!("\"{soap_action}\"");
        let response = self.send(
            Method::Post,
            endpoint_url,
            &[("Content-Type", SOAP_CONTENT_TYPE), ("SOAPAction", &action)],
            Some(envelope.as_bytes()),
        )?;
        let text = String::from_utf8(response.body)
            .map_err(|e| TransportError::Protocol { status: response.status, body: String::from_utf8_lossy(e.as_bytes()).into_owned() })?;
        match response.status {
            200 => Ok(text),
            500 if text.trim_start().starts_with('<') => Ok(text),
            status => Err(TransportError::Protocol { status, body: text }),
        }
    }
}

/// One-shot form of [`HttpClient::soap_post`].
pub fn soap_post(endpoint_url: &str, envelope: &str, soap_action: &str, timeout: Duration) -> Result<String, TransportError> {
    HttpClient::new(timeout).soap_post(endpoint_url, envelope, soap_action)
}

fn classify(error: ureq::Error) -> TransportError {
    match error {
        ureq::Error::Timeout(_) => TransportError::Timeout,
        ureq::Error::Io(e) => match e.kind() {
            ErrorKind::TimedOut | ErrorKind::WouldBlock => TransportError::Timeout,
            ErrorKind::ConnectionRefused | ErrorKind::ConnectionReset | ErrorKind::ConnectionAborted
            | ErrorKind::NotConnected | ErrorKind::AddrNotAvailable => TransportError::ConnectFailure(e.to_string()),
            _ => TransportError::Io(e.to_string()),
        },
        ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
            TransportError::ConnectFailure(error.to_string())
        }
        ureq::Error::BadUri(u) => TransportError::InvalidUrl(u),
        other => TransportError::Io(other.to_string()),
    }
}
