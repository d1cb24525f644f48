//! SOAP over HTTP/1.1 and the plain HTTP plumbing shared by the broker,
//! provider and consumer.

mod client;
mod server;

pub use client::{soap_action, soap_post, HttpClient};
pub use server::{serve, serve_on, HandlerError, Router, ServerHandle};

use std::fmt;

use thiserror::Error;

pub const SOAP_CONTENT_TYPE: &str = "text/xml; charset=utf-8";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("could not connect: {0}")]
    ConnectFailure(String),
    #[error("unexpected HTTP status {status}")]
    Protocol { status: u16, body: String },
    #[error("invalid URL {0:?}")]
    InvalidUrl(String),
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("transport I/O error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Get,
    Post,
    Put,
    Delete,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Post => "POST",
            Method::Put => "PUT",
            Method::Delete => "DELETE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "GET" => Some(Method::Get),
            "POST" => Some(Method::Post),
            "PUT" => Some(Method::Put),
            "DELETE" => Some(Method::Delete),
            _ => None,
        }
    }

    /// Whether a request body is meaningful for this method.
    pub fn permits_body(self) -> bool {
        matches!(self, Method::Post | Method::Put)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Header list with case-insensitive name lookup. Order is preserved.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Headers(Vec<(String, String)>);

impl Headers {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }

    /// Replaces every existing value for `name`.
    pub fn set(&mut self, name: impl Into<String>, value: impl Into<String>) {
        let name = name.into();
        self.0.retain(|(k, _)| !k.eq_ignore_ascii_case(&name));
        self.0.push((name, value.into()));
    }

    pub fn append(&mut self, name: impl Into<String>, value: impl Into<String>) {
        self.0.push((name.into(), value.into()));
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: Method,
    pub path: String,
    pub query: Option<String>,
    pub headers: Headers,
    pub body: Vec<u8>,
}

impl HttpRequest {
    pub fn new(method: Method, path: impl Into<String>) -> Self {
        Self { method, path: path.into(), query: None, headers: Headers::new(), body: Vec::new() }
    }

    pub fn body_text(&self) -> Result<&str, HandlerError> {
        std::str::from_utf8(&self.body).map_err(|_| HandlerError::new("request body is not UTF-8"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Headers,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn new(status: u16, content_type: &str, body: impl Into<Vec<u8>>) -> Self {
        let mut headers = Headers::new();
        headers.set("Content-Type", content_type);
        Self { status, headers, body: body.into() }
    }

    pub fn text(status: u16, body: impl Into<String>) -> Self {
        Self::new(status, "text/plain; charset=utf-8", body.into())
    }

    pub fn xml(status: u16, body: impl Into<String>) -> Self {
        Self::new(status, SOAP_CONTENT_TYPE, body.into())
    }

    pub fn not_found() -> Self {
        Self::text(404, "not found\n")
    }

    pub fn body_text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn set_replaces_any_casing() {
        let mut h = Headers::new();
        h.append("content-type", "a");
        h.append("CONTENT-TYPE", "b");
        h.set("Content-Type", "c");
        assert_eq!(h.len(), 1);
        assert_eq!(h.get("content-type"), Some("c"));
    }

    #[test]
    fn methods() {
        assert_eq!(Method::parse("PUT"), Some(Method::Put));
        assert_eq!(Method::parse("PATCH"), None);
        assert!(Method::Post.permits_body());
        assert!(!Method::Get.permits_body());
    }

    proptest! {
        #[test]
        fn lookup_ignores_case(name in "[A-Za-z][A-Za-z0-9-]{0,20}", flips in proptest::collection::vec(any::<bool>(), 21)) {
            let mut h = Headers::new();
            h.append(name.clone(), "value");
            let probe: String = name
                .chars()
                .zip(flips.iter())
                .map(|(c, &f)| if f { c.to_ascii_uppercase() } else { c.to_ascii_lowercase() })
                .collect();
            prop_assert_eq!(h.get(&probe), Some("value"));
        }
    }
}
