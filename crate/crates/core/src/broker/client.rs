use std::time::Duration;

use thiserror::Error;

use super::{parse_listing, ServiceRecord};
use crate::transport::{HttpClient, Method, TransportError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BrokerClientError {
    #[error("broker unreachable: {0}")]
    Unreachable(TransportError),
    #[error("service {0} is not registered")]
    NotFound(String),
    #[error("broker rejected the request: {0}")]
    Rejected(String),
    #[error("unexpected broker response (status {status}): {body}")]
    Protocol { status: u16, body: String },
}

/// Client for the broker's HTTP API.
#[derive(Debug, Clone)]
pub struct BrokerClient {
    base_url: String,
    http: HttpClient,
}

impl BrokerClient {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        Self { base_url: base_url.into().trim_end_matches('/').to_string(), http: HttpClient::new(timeout) }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn url(&self, name: Option<&str>) -> String {
        match name {
            Some(n) => format!("{}/services/{n}", self.base_url),
            None => format!("{}/services", self.base_url),
        }
    }

    fn call(&self, method: Method, name: Option<&str>, body: Option<&[u8]>) -> Result<String, BrokerClientError> {
        let headers = [("Content-Type", "text/plain; charset=utf-8")];
        let response = self
            .http
            .send(method, &self.url(name), if body.is_some() { &headers } else { &[] }, body)
            .map_err(|e| match e {
                TransportError::InvalidUrl(_) => BrokerClientError::Rejected(e.to_string()),
                e => BrokerClientError::Unreachable(e),
            })?;
        let text = response.body_text();
        match response.status {
            200 => Ok(text),
            404 => Err(BrokerClientError::NotFound(name.unwrap_or_default().to_string())),
            400 => Err(BrokerClientError::Rejected(text.trim().to_string())),
            status => Err(BrokerClientError::Protocol { status, body: text }),
        }
    }

    fn record(&self, text: &str, name: &str) -> Result<ServiceRecord, BrokerClientError> {
        ServiceRecord::parse_text(text, Some(name))
            .map_err(|e| BrokerClientError::Protocol { status: 200, body: e.to_string() })
    }

    pub fn publish(&self, record: &ServiceRecord) -> Result<ServiceRecord, BrokerClientError> {
        record.validate().map_err(|e| BrokerClientError::Rejected(e.to_string()))?;
        let body = format!("endpoint_url={}\nwsdl_url={}\n", record.endpoint_url, record.wsdl_url);
        let text = self.call(Method::Put, Some(&record.service_name), Some(body.as_bytes()))?;
        self.record(&text, &record.service_name)
    }

    pub fn lookup(&self, service_name: &str) -> Result<ServiceRecord, BrokerClientError> {
        if !crate::is_valid_service_name(service_name) {
            return Err(BrokerClientError::NotFound(service_name.to_string()));
        }
        let text = self.call(Method::Get, Some(service_name), None)?;
        self.record(&text, service_name)
    }

    pub fn list(&self) -> Result<Vec<ServiceRecord>, BrokerClientError> {
        let text = self.call(Method::Get, None, None)?;
        parse_listing(&text).map_err(|e| BrokerClientError::Protocol { status: 200, body: e.to_string() })
    }

    pub fn unregister(&self, service_name: &str) -> Result<(), BrokerClientError> {
        self.call(Method::Delete, Some(service_name), None).map(|_| ())
    }
}
