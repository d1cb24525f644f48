use std::fmt;
use std::io::ErrorKind;
use std::net::{Ipv4Addr, SocketAddr, TcpListener};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::thread::JoinHandle;

use tokio::sync::oneshot;

use super::{Headers, HttpRequest, HttpResponse, Method, TransportError};
use crate::envelope::{build_envelope, Fault, SoapEnvelope};

const MAX_REQUEST_BODY: usize = 16 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandlerError(String);

impl HandlerError {
    pub fn new(message: impl Into<String>) -> Self {
        Self(message.into())
    }

    pub fn message(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for HandlerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for HandlerError {}

type Handler = Arc<dyn Fn(&HttpRequest) -> Result<HttpResponse, HandlerError> + Send + Sync>;

/// Path-prefix router. The longest registered prefix that matches a whole
/// number of path segments wins.
#[derive(Clone, Default)]
pub struct Router {
    routes: Vec<(String, Handler)>,
}

impl fmt::Debug for Router {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.routes.iter().map(|(p, _)| p)).finish()
    }
}

fn prefix_matches(prefix: &str, path: &str) -> bool {
    if prefix == "/" {
        return true;
    }
    let prefix = prefix.trim_end_matches('/');
    path == prefix || (path.starts_with(prefix) && path.as_bytes().get(prefix.len()) == Some(&b'/'))
}

impl Router {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn route<F>(mut self, prefix: impl Into<String>, handler: F) -> Self
    where
        F: Fn(&HttpRequest) -> Result<HttpResponse, HandlerError> + Send + Sync + 'static,
    {
        self.routes.push((prefix.into(), Arc::new(handler)));
        self
    }

    /// Runs the matching handler. Handler errors and panics become 500s:
    /// a SOAP Fault under `/ws/`, plain text elsewhere.
    pub fn dispatch(&self, request: &HttpRequest) -> HttpResponse {
        let Some((_, handler)) = self
            .routes
            .iter()
            .filter(|(prefix, _)| prefix_matches(prefix, &request.path))
            .max_by_key(|(prefix, _)| prefix.trim_end_matches('/').len())
        else {
            return HttpResponse::not_found();
        };
        let outcome = catch_unwind(AssertUnwindSafe(|| handler(request)));
        let message = match outcome {
            Ok(Ok(response)) => return response,
            Ok(Err(e)) => e.0,
            Err(panic) => panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "handler panicked".to_string()),
        };
        log::warn!("{} {} failed: {message}", request.method, request.path);
        internal_error(&request.path, &message)
    }
}

fn internal_error(path: &str, message: &str) -> HttpResponse {
    if path.starts_with("/ws/") {
        let fault = SoapEnvelope::fault(None, Fault::server(message.replace(|c| !crate::envelope::xml::is_xml_char(c), "?")));
        match build_envelope(&fault) {
            Ok(xml) => HttpResponse::xml(500, xml),
            Err(_) => HttpResponse::text(500, "internal error\n"),
        }
    } else {
        HttpResponse::text(500, format!("internal error: {message}\n"))
    }
}

/// A running HTTP server. Dropping the handle shuts it down.
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    /// `http://host:port` of the listener.
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting, lets in-flight requests finish, then returns.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Serves `router` on `127.0.0.1:port`; port 0 picks a free port.
pub fn serve(router: Router, port: u16) -> Result<ServerHandle, TransportError> {
    serve_on(router, SocketAddr::from((Ipv4Addr::LOCALHOST, port)))
}

pub fn serve_on(router: Router, addr: SocketAddr) -> Result<ServerHandle, TransportError> {
    let listener = TcpListener::bind(addr).map_err(|e| match e.kind() {
        ErrorKind::AddrInUse => TransportError::PortInUse(addr.port()),
        _ => TransportError::Io(format!("bind {addr}: {e}")),
    })?;
    listener.set_nonblocking(true).map_err(|e| TransportError::Io(e.to_string()))?;
    let local = listener.local_addr().map_err(|e| TransportError::Io(e.to_string()))?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .thread_name("cmx-http")
        .build()
        .map_err(|e| TransportError::Io(e.to_string()))?;

    let (tx, rx) = oneshot::channel::<()>();
    let router = Arc::new(router);
    let thread = std::thread::Builder::new()
        .name(format!("cmx-serve-{}", local.port()))
        .spawn(move || {
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(listener) {
                    Ok(l) => l,
                    Err(e) => {
                        log::error!("listener on {local}: {e}");
                        return;
                    }
                };
                let app = axum::Router::new().fallback(move |req: axum::extract::Request| handle(router.clone(), req));
                let shutdown = async {
                    let _ = rx.await;
                };
                if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
                    log::error!("server on {local}: {e}");
                }
            });
        })
        .map_err(|e| TransportError::Io(e.to_string()))?;
    log::debug!("listening on {local}");
    Ok(ServerHandle { addr: local, shutdown: Some(tx), thread: Some(thread) })
}

async fn handle(router: Arc<Router>, req: axum::extract::Request) -> axum::response::Response {
    let (parts, body) = req.into_parts();
    let Some(method) = Method::parse(parts.method.as_str()) else {
        return into_axum(HttpResponse::text(405, "method not allowed\n"));
    };
    let body = match axum::body::to_bytes(body, MAX_REQUEST_BODY).await {
        Ok(b) => b.to_vec(),
        Err(_) => return into_axum(HttpResponse::text(413, "request body too large\n")),
    };
    let mut headers = Headers::new();
    for (name, value) in &parts.headers {
        if let Ok(v) = value.to_str() {
            headers.append(name.as_str(), v);
        }
    }
    let request = HttpRequest {
        method,
        path: parts.uri.path().to_string(),
        query: parts.uri.query().map(str::to_string),
        headers,
        body,
    };
    let path = request.path.clone();
    let response = tokio::task::spawn_blocking(move || router.dispatch(&request))
        .await
        .unwrap_or_else(|e| internal_error(&path, &e.to_string()));
    into_axum(response)
}

fn into_axum(response: HttpResponse) -> axum::response::Response {
    let mut builder = axum::http::Response::builder().status(response.status);
    for (name, value) in response.headers.iter() {
        builder = builder.header(name, value);
    }
    builder
        .body(axum::body::Body::from(response.body))
        .unwrap_or_else(|_| axum::http::Response::new(axum::body::Body::from("bad response\n")))
}
