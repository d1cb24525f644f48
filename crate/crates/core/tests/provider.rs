use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use cmx::broker::{self, BrokerClient, Registry};
use cmx::consumer::{fnv1a64, poll_until_done, ws_provider_service, ConsumerConfig};
use cmx::envelope::{build_request, parse_envelope, FaultCode, SoapRequest};
use cmx::provider::{self, generate_message, CompressMode, GeneratorSpec, ProviderConfig, ProviderError, RetryPolicy};
use cmx::timing::{metrics_from_csv, Mode, Stage};
use cmx::transport::{self, HttpClient, Method, ServerHandle, TransportError};

fn broker() -> ServerHandle {
    transport::serve(broker::routes(Arc::new(Registry::new())), 0).unwrap()
}

fn config(broker_url: &str, name: &str, mode: CompressMode) -> ProviderConfig {
    let mut c = ProviderConfig::new(name, broker_url);
    c.compress_mode = mode;
    c.payload_spec = GeneratorSpec::new(30, 11);
    c
}

fn post(url: &str, body: &str, action: Option<&str>) -> (u16, String) {
    let mut headers = vec![("Content-Type", "text/xml; charset=utf-8")];
    if let Some(a) = action {
        headers.push(("SOAPAction", a));
    }
    let r = HttpClient::new(Duration::from_secs(5)).send(Method::Post, url, &headers, Some(body.as_bytes())).unwrap();
    (r.status, r.body_text())
}

#[test]
fn serves_wsdl_and_registers() {
    let b = broker();
    let p = provider::start(config(&b.base_url(), "MsgService", CompressMode::Auto)).unwrap();
    let record = BrokerClient::new(b.base_url(), Duration::from_secs(2)).lookup("MsgService").unwrap();
    assert_eq!(record.endpoint_url, p.endpoint_url());
    assert_eq!(record.wsdl_url, format!("{}?wsdl", p.endpoint_url()));

    let r = HttpClient::new(Duration::from_secs(2)).send(Method::Get, &record.wsdl_url, &[], None).unwrap();
    assert_eq!(r.status, 200);
    let wsdl = r.body_text();
    roxmltree::Document::parse(&wsdl).unwrap();
    assert!(wsdl.contains(&format!("location=\"{}\"", p.endpoint_url())));
    assert!(wsdl.contains("urn:cmx:MsgService#getMessage"));
    p.shutdown();
}

#[test]
fn both_modes_deliver_the_generated_payload() {
    let b = broker();
    let expected = generate_message(&GeneratorSpec::new(30, 11)).unwrap();
    for (mode, want) in [(CompressMode::Never, Mode::Plain), (CompressMode::Always, Mode::Compressed)] {
        let p = provider::start(config(&b.base_url(), "MsgService", mode)).unwrap();
        let c = ConsumerConfig::new(b.base_url(), "MsgService");
        let (payload, timing) = ws_provider_service(&c, 42).unwrap();
        assert_eq!(payload.bytes(), expected.bytes());
        assert_eq!(timing.mode, Some(want));
        assert_eq!(timing.digest, Some(fnv1a64(expected.bytes())));
        assert_eq!(timing.t_decompress.is_some(), want == Mode::Compressed);
        p.shutdown();
    }
}

#[test]
fn metrics_log_rows_per_transaction() {
    let b = broker();
    let p = provider::start(config(&b.base_url(), "MsgService", CompressMode::Always)).unwrap();
    let mut c = ConsumerConfig::new(b.base_url(), "MsgService");
    c.iterations = 3;
    c.first_transaction_id = 100;
    let rows = poll_until_done(&c);
    assert!(rows.iter().all(|r| r.outcome.is_ok()));

    let r = HttpClient::new(Duration::from_secs(2)).send(Method::Get, &format!("{}/metrics", p.base_url()), &[], None).unwrap();
    assert_eq!(r.headers.get("content-type"), Some("text/csv; charset=utf-8"));
    let metrics = metrics_from_csv(&r.body_text()).unwrap();
    assert_eq!(metrics.iter().map(|m| m.transaction_id).collect::<Vec<_>>(), [100, 101, 102]);
    for (m, row) in metrics.iter().zip(&rows) {
        assert_eq!(m.mode, Mode::Compressed);
        assert!(m.t_generate.is_some() && m.t_compress.is_some() && m.t_publish_send.is_some());
        assert_eq!(m.wire_bytes, row.wire_bytes.unwrap());
        assert_eq!(m.payload_bytes, row.payload_bytes.unwrap());
    }
    assert_eq!(p.metrics(), metrics);
    p.shutdown();
}

#[test]
fn request_faults() {
    let b = broker();
    let p = provider::start(config(&b.base_url(), "MsgService", CompressMode::Never)).unwrap();
    let url = p.endpoint_url().to_string();

    let unknown = build_request(&SoapRequest::new("unknownOp").with_transaction_id(5)).unwrap();
    let (status, body) = post(&url, &unknown, None);
    assert_eq!(status, 500);
    let env = parse_envelope(&body).unwrap();
    assert_eq!(env.fault_info().unwrap().code, FaultCode::Client);
    assert_eq!(env.transaction_id(), Some(5));

    let (status, body) = post(&url, "<not-soap/>", None);
    assert_eq!(status, 500);
    assert_eq!(parse_envelope(&body).unwrap().fault_info().unwrap().code, FaultCode::Client);

    let ok = build_request(&SoapRequest::new("getMessage")).unwrap();
    let (status, body) = post(&url, &ok, Some("\"urn:cmx:Other#getMessage\""));
    assert_eq!(status, 500);
    assert!(parse_envelope(&body).unwrap().fault_info().unwrap().reason.contains("SOAPAction"));
    let (status, _) = post(&url, &ok, Some("\"urn:cmx:MsgService#getMessage\""));
    assert_eq!(status, 200);

    let r = HttpClient::new(Duration::from_secs(2)).send(Method::Delete, &url, &[], None).unwrap();
    assert_eq!(r.status, 405);
    let r = HttpClient::new(Duration::from_secs(2)).send(Method::Post, &format!("{url}/extra"), &[], Some(b"x")).unwrap();
    assert_eq!(r.status, 404);
    p.shutdown();
}

#[test]
fn never_mode_never_compresses() {
    let b = broker();
    let mut c = config(&b.base_url(), "MsgService", CompressMode::Never);
    c.payload_spec = GeneratorSpec::new(400, 3);
    let p = provider::start(c).unwrap();
    let ops = ["getMessage", "getMessage", "nope", "getMessage", "other", "getMessage"];
    for (i, op) in ops.iter().cycle().take(30).enumerate() {
        let mut req = SoapRequest::new(*op);
        if i % 2 == 0 {
            req = req.with_transaction_id(i as u64);
        }
        let (_, body) = post(p.endpoint_url(), &build_request(&req).unwrap(), None);
        assert!(!body.contains("CompressedPayload"));
    }
    p.shutdown();
}

#[test]
fn auto_mode_follows_threshold() {
    let b = broker();
    for (records, threshold, compressed) in [(1, 100_000, false), (30, 512, true)] {
        let mut c = config(&b.base_url(), "MsgService", CompressMode::Auto);
        c.payload_spec = GeneratorSpec::new(records, 1);
        c.compress_threshold = threshold;
        let p = provider::start(c).unwrap();
        let (_, timing) = ws_provider_service(&ConsumerConfig::new(b.base_url(), "MsgService"), 1).unwrap();
        assert_eq!(timing.mode == Some(Mode::Compressed), compressed);
        p.shutdown();
    }
}

#[test]
fn republish_moves_the_endpoint() {
    let b = broker();
    let first = provider::start(config(&b.base_url(), "MsgService", CompressMode::Never)).unwrap();
    let first_url = first.endpoint_url().to_string();
    first.shutdown();
    let second = provider::start(config(&b.base_url(), "MsgService", CompressMode::Never)).unwrap();
    let record = BrokerClient::new(b.base_url(), Duration::from_secs(2)).lookup("MsgService").unwrap();
    assert_eq!(record.endpoint_url, second.endpoint_url());
    assert_ne!(second.endpoint_url(), first_url);
    second.shutdown();
}

#[test]
fn broker_down_fails_startup_after_retries() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut c = config(&format!("http://127.0.0.1:{port}"), "MsgService", CompressMode::Never);
    c.registration = RetryPolicy { attempts: 3, base_delay: Duration::from_millis(50) };
    let started = Instant::now();
    let err = provider::start(c).unwrap_err();
    // 50 ms then 100 ms of back-off between the three attempts.
    assert!(started.elapsed() >= Duration::from_millis(150));
    match err {
        ProviderError::Registration { attempts, .. } => assert_eq!(attempts, 3),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(RetryPolicy::default(), RetryPolicy { attempts: 3, base_delay: Duration::from_millis(200) });
}

#[test]
fn port_in_use_is_reported() {
    let b = broker();
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let mut c = config(&b.base_url(), "MsgService", CompressMode::Never);
    c.listen_port = taken.local_addr().unwrap().port();
    assert!(matches!(provider::start(c), Err(ProviderError::Transport(TransportError::PortInUse(_)))));
}

#[test]
fn concurrent_consumers() {
    let b = broker();
    let p = provider::start(config(&b.base_url(), "MsgService", CompressMode::Always)).unwrap();
    let expected = fnv1a64(generate_message(&GeneratorSpec::new(30, 11)).unwrap().bytes());
    let workers: Vec<_> = (0..4)
        .map(|w| {
            let url = b.base_url();
            thread::spawn(move || {
                let mut c = ConsumerConfig::new(url, "MsgService");
                c.iterations = 5;
                c.first_transaction_id = w * 100;
                poll_until_done(&c)
            })
        })
        .collect();
    for w in workers {
        let rows = w.join().unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r.outcome.is_ok() && r.digest == Some(expected)));
    }
    assert_eq!(p.metrics().len(), 20);
    p.shutdown();
}

#[test]
fn provider_death_mid_poll() {
    let b = broker();
    let p = provider::start(config(&b.base_url(), "MsgService", CompressMode::Never)).unwrap();
    let mut c = ConsumerConfig::new(b.base_url(), "MsgService");
    c.iterations = 2;
    let mut rows = poll_until_done(&c);
    p.shutdown();
    c.iterations = 5;
    c.first_transaction_id = 3;
    c.request_timeout = Duration::from_millis(500);
    rows.extend(poll_until_done(&c));
    assert_eq!(rows.len(), 5);
    assert!(rows[..2].iter().all(|r| r.outcome.is_ok()));
    for r in &rows[2..] {
        assert_eq!(r.outcome.failed_stage(), Some(Stage::Invoke));
        assert_eq!(r.outcome.to_string(), "failed:invoke:connection-refused");
    }
}
