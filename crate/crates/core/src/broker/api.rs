use std::sync::Arc;

use super::{render_listing, BrokerError, Registry, ServiceRecord};
use crate::transport::{HttpRequest, HttpResponse, Method, Router};

/// HTTP front end:
///
/// ```text
/// PUT    /services/{name}   endpoint_url=..\nwsdl_url=..   -> 200 | 400
/// GET    /services/{name}                                  -> 200 | 404
/// GET    /services                                         -> 200
/// DELETE /services/{name}                                  -> 200 | 404
/// ```
pub fn routes(registry: Arc<Registry>) -> Router {
    Router::new().route("/services", move |req: &HttpRequest| Ok(handle(&registry, req)))
}

fn error_response(e: BrokerError) -> HttpResponse {
    match e {
        BrokerError::NotFound(_) => HttpResponse::text(404, format!("{e}\n")),
        BrokerError::Invalid(_) => HttpResponse::text(400, format!("{e}\n")),
        BrokerError::Snapshot(_) => HttpResponse::text(500, format!("{e}\n")),
    }
}

fn handle(registry: &Registry, req: &HttpRequest) -> HttpResponse {
    let rest = req.path.trim_start_matches("/services");
    let name = rest.trim_start_matches('/');
    if name.is_empty() {
        return match req.method {
            Method::Get => HttpResponse::text(200, render_listing(&registry.list_services())),
            _ => HttpResponse::text(405, "method not allowed\n"),
        };
    }
    if name.contains('/') {
        return HttpResponse::not_found();
    }
    let result = match req.method {
        Method::Put => {
            let Ok(text) = std::str::from_utf8(&req.body) else {
                return HttpResponse::text(400, "body is not UTF-8\n");
            };
            ServiceRecord::parse_text(text, Some(name)).and_then(|record| {
                if record.service_name != name {
                    return Err(BrokerError::Invalid(format!(
                        "body names {} but the path names {name}",
                        record.service_name
                    )));
                }
                registry.publish(record)
            })
        }
        Method::Get => registry.lookup(name),
        Method::Delete => registry.unregister(name),
        Method::Post => return HttpResponse::text(405, "method not allowed\n"),
    };
    match result {
        Ok(record) => HttpResponse::text(200, record.to_text()),
        Err(e) => error_response(e),
    }
}
