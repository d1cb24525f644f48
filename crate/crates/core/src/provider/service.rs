use std::net::{IpAddr, SocketAddr, ToSocketAddrs};
use std::sync::{Arc, Mutex, OnceLock};
use std::thread;
use std::time::Instant;

use super::{controller_dispatch, ProviderConfig, ProviderError, GET_MESSAGE};
use crate::broker::{BrokerClient, BrokerClientError, ServiceRecord};
use crate::envelope::{build_envelope, generate_wsdl, parse_request, Fault, ServiceDescriptor, SoapEnvelope};
use crate::timing::{metrics_to_csv, micros, ProviderTiming};
use crate::transport::{serve_on, soap_action, HttpRequest, HttpResponse, Method, Router, ServerHandle};

/// Append-only log of provider-side timings, one row per served message.
#[derive(Debug, Default)]
pub struct MetricsLog {
    rows: Mutex<Vec<ProviderTiming>>,
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, row: ProviderTiming) {
        self.rows.lock().unwrap_or_else(|p| p.into_inner()).push(row);
    }

    pub fn snapshot(&self) -> Vec<ProviderTiming> {
        self.rows.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn to_csv(&self) -> String {
        metrics_to_csv(&self.snapshot())
    }
}

fn fault_response(request_id: Option<u64>, fault: Fault) -> HttpResponse {
    let mut envelope = SoapEnvelope::fault(Some(GET_MESSAGE.into()), fault);
    envelope.set_transaction_id(request_id);
    match build_envelope(&envelope) {
        Ok(xml) => HttpResponse::xml(500, xml),
        Err(e) => HttpResponse::text(500, format!("could not build fault: {e}\n")),
    }
}

fn handle_soap(config: &ProviderConfig, metrics: &MetricsLog, req: &HttpRequest) -> HttpResponse {
    let Ok(text) = std::str::from_utf8(&req.body) else {
        return fault_response(None, Fault::client("request body is not UTF-8"));
    };
    let request = match parse_request(text) {
        Ok(r) => r,
        Err(e) => return fault_response(None, Fault::client(e.to_string())),
    };
    if let Some(action) = req.headers.get("SOAPAction") {
        let action = action.trim().trim_matches('"');
        let expected = soap_action(&config.service_name, &request.operation);
        if !action.is_empty() && action != expected {
            return fault_response(
                request.transaction_id,
                Fault::client(format!("SOAPAction {action:?} does not match {expected:?}")),
            );
        }
    }

    let started = Instant::now();
    let dispatched = controller_dispatch(&request, config);
    let xml = match build_envelope(&dispatched.envelope) {
        Ok(xml) => xml,
        Err(e) => return fault_response(request.transaction_id, Fault::server(e.to_string())),
    };
    let send = started.elapsed().saturating_sub(dispatched.timer.elapsed());
    if let Some(mut timing) = dispatched.timing {
        timing.t_publish_send = Some(micros(send));
        timing.wire_bytes = xml.len() as u64;
        metrics.push(timing);
    }
    let status = if dispatched.envelope.fault_info().is_some() { 500 } else { 200 };
    HttpResponse::xml(status, xml)
}

/// Routes for one provider: the SOAP endpoint, its WSDL and the metrics log.
/// `wsdl` is filled in once the listening address is known.
pub fn provider_routes(config: Arc<ProviderConfig>, metrics: Arc<MetricsLog>, wsdl: Arc<OnceLock<String>>) -> Router {
    let endpoint = format!("/ws/{}", config.service_name);
    let metrics_for_log = Arc::clone(&metrics);
    Router::new()
        .route(endpoint.clone(), move |req: &HttpRequest| {
            if req.path != endpoint {
                return Ok(HttpResponse::not_found());
            }
            Ok(match req.method {
                Method::Post => handle_soap(&config, &metrics, req),
                Method::Get if req.query.as_deref().is_some_and(|q| q.eq_ignore_ascii_case("wsdl")) => {
                    match wsdl.get() {
                        Some(doc) => HttpResponse::xml(200, doc.clone()),
                        None => HttpResponse::text(503, "WSDL not ready\n"),
                    }
                }
                _ => HttpResponse::text(405, "method not allowed\n"),
            })
        })
        .route("/metrics", move |req: &HttpRequest| {
            Ok(match req.method {
                Method::Get => HttpResponse::new(200, "text/csv; charset=utf-8", metrics_for_log.to_csv()),
                _ => HttpResponse::text(405, "method not allowed\n"),
            })
        })
}

/// Registers `record`, retrying only while the broker is unreachable.
pub fn publish_service(
    record: &ServiceRecord,
    broker: &BrokerClient,
    policy: super::RetryPolicy,
) -> Result<ServiceRecord, ProviderError> {
    let mut delay = policy.base_delay;
    let mut attempt = 1;
    loop {
        match broker.publish(record) {
            Ok(ack) => return Ok(ack),
            Err(e @ BrokerClientError::Unreachable(_)) if attempt < policy.attempts => {
                log::warn!("broker at {} unreachable (attempt {attempt}): {e}", broker.base_url());
                thread::sleep(delay);
                delay *= 2;
                attempt += 1;
            }
            Err(last) => return Err(ProviderError::Registration { attempts: attempt, last }),
        }
    }
}

/// A provider that is serving and registered with the broker.
#[derive(Debug)]
pub struct RunningProvider {
    server: ServerHandle,
    config: Arc<ProviderConfig>,
    metrics: Arc<MetricsLog>,
    record: ServiceRecord,
}

impl RunningProvider {
    pub fn endpoint_url(&self) -> &str {
        &self.record.endpoint_url
    }

    pub fn wsdl_url(&self) -> &str {
        &self.record.wsdl_url
    }

    pub fn base_url(&self) -> String {
        self.server.base_url()
    }

    pub fn port(&self) -> u16 {
        self.server.port()
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    /// The record the broker acknowledged.
    pub fn record(&self) -> &ServiceRecord {
        &self.record
    }

    pub fn metrics(&self) -> Vec<ProviderTiming> {
        self.metrics.snapshot()
    }

    pub fn shutdown(self) {
        self.server.shutdown();
    }
}

fn bind_addr(host: &str, port: u16) -> Result<SocketAddr, ProviderError> {
    if let Ok(ip) = host.parse::<IpAddr>() {
        return Ok(SocketAddr::new(ip, port));
    }
    (host, port)
        .to_socket_addrs()
        .map_err(|e| ProviderError::InvalidConfig(format!("cannot resolve host {host:?}: {e}")))?
        .next()
        .ok_or_else(|| ProviderError::InvalidConfig(format!("host {host:?} has no addresses")))
}

/// Starts serving, then publishes the service record. A provider that
/// cannot register is shut down again.
pub fn start(config: ProviderConfig) -> Result<RunningProvider, ProviderError> {
    config.validate()?;
    let addr = bind_addr(&config.host, config.listen_port)?;
    let config = Arc::new(config);
    let metrics = Arc::new(MetricsLog::new());
    let wsdl = Arc::new(OnceLock::new());
    let server = serve_on(provider_routes(Arc::clone(&config), Arc::clone(&metrics), Arc::clone(&wsdl)), addr)?;

    let host = if config.host.contains(':') { format!("[{}]", config.host) } else { config.host.clone() };
    let endpoint_url = format!("http://{host}:{}/ws/{}", server.port(), config.service_name);
    let wsdl_url = format!("{endpoint_url}?wsdl");
    let descriptor = ServiceDescriptor::new(&config.service_name, &endpoint_url, vec![GET_MESSAGE.to_string()])?;
    let _ = wsdl.set(generate_wsdl(&descriptor));

    let record = ServiceRecord::new(&config.service_name, &endpoint_url, &wsdl_url)
        .map_err(|e| ProviderError::InvalidConfig(e.to_string()))?;
    let broker = BrokerClient::new(&config.broker_url, config.broker_timeout);
    match publish_service(&record, &broker, config.registration) {
        Ok(record) => {
            log::info!("{} serving at {endpoint_url}", config.service_name);
            Ok(RunningProvider { server, config, metrics, record })
        }
        Err(e) => {
            server.shutdown();
            Err(e)
        }
    }
}
