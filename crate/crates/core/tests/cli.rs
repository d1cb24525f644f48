use std::io::{BufRead, BufReader};
use std::process::{Command, Stdio};
use std::time::Duration;

use cmx::timing::{timings_from_csv, TIMING_CSV_HEADER};

fn cmx() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cmx"))
}

#[test]
fn help_exits_zero() {
    for args in [&["--help"][..], &["broker", "--help"], &["provider", "--help"], &["consumer", "--help"], &["bench", "--help"]] {
        let out = cmx().args(args).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
}

#[test]
fn usage_errors_exit_one() {
    let out = cmx().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    let out = cmx().args(["broker", "--unknown-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--unknown-flag"));
    assert_eq!(cmx().output().unwrap().status.code(), Some(1));
}

#[test]
fn missing_config_exits_two() {
    let out = cmx().args(["bench", "--config", "missing.cfg"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing.cfg"), "{err}");
    assert!(err.to_lowercase().contains("no such file"), "{err}");
}

#[test]
fn bench_writes_csv_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.cfg");
    let csv = dir.path().join("out").join("timings.csv");
    std::fs::write(&cfg, format!("iterations=2\nrecord_counts=5\nmodes=plain,compressed\nseed=3\noutput={}\n", csv.display())).unwrap();
    let out = cmx().args(["bench", "--config"]).arg(&cfg).env("CMX_LOG", "error").output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.starts_with("mode"));
    assert_eq!(table.lines().count(), 3);

    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some(TIMING_CSV_HEADER));
    let rows = timings_from_csv(&text).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.outcome.is_ok()));
}

/// Starts a long-running subcommand and waits for its first stdout line.
fn spawn_line(args: &[&str]) -> (std::process::Child, Option<String>) {
    let mut child = cmx().args(args).env("CMX_LOG", "error").stdout(Stdio::piped()).spawn().unwrap();
    let mut line = String::new();
    let stdout = child.stdout.take().unwrap();
    let got = BufReader::new(stdout).read_line(&mut line).ok().filter(|n| *n > 0).map(|_| line.trim().to_string());
    (child, got)
}

#[test]
fn broker_provider_consumer_processes() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let broker_port = port.to_string();
    let mut broker = cmx().args(["broker", "--port", &broker_port]).env("CMX_LOG", "error").spawn().unwrap();
    let broker_url = format!("http://127.0.0.1:{port}");
    let deadline = std::time::Instant::now() + Duration::from_secs(10);
    while std::net::TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(std::time::Instant::now() < deadline, "broker did not start");
        std::thread::sleep(Duration::from_millis(50));
    }

    let (mut provider, endpoint) = spawn_line(&[
        "provider", "--broker", &broker_url, "--port", "0", "--service", "CliService", "--mode", "always", "--records", "20",
    ]);
    let endpoint = endpoint.expect("provider printed no endpoint");
    assert!(endpoint.ends_with("/ws/CliService"), "{endpoint}");

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("c.csv");
    let out = cmx()
        .args(["consumer", "--broker", &broker_url, "--service", "CliService", "--iterations", "3", "--out"])
        .arg(&csv)
        .env("CMX_LOG", "error")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = timings_from_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.outcome.is_ok() && r.t_compress.is_some() && r.t_decompress.is_some()));

    let out = cmx()
        .args(["consumer", "--broker", &broker_url, "--service", "Absent", "--timeout-ms", "500"])
        .env("CMX_LOG", "error")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("failed:lookup:not-found"));

    provider.kill().unwrap();
    broker.kill().unwrap();
    let _ = provider.wait();
    let _ = broker.wait();
}
