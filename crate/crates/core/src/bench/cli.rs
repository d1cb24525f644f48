use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use super::{fetch_metrics, report, run_experiment, BenchConfig};
use crate::broker::{self, Registry};
use crate::consumer::{poll_until_done, ConsumerConfig};
use crate::provider::{self, CompressMode, GeneratorSpec, ProviderConfig, DEFAULT_TEMPLATE};
use crate::timing::{join_provider_rows, timings_to_csv};
use crate::transport;

#[derive(Debug, Parser)]
#[command(name = "cmx", version, about = "Compressed SOAP message exchange: broker, provider, consumer and benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the service broker (registry) until interrupted.
    Broker(BrokerArgs),
    /// Run a provider, register it with the broker and serve until interrupted.
    Provider(ProviderArgs),
    /// Look up a service and invoke it repeatedly, writing timing CSV.
    Consumer(ConsumerArgs),
    /// Run an in-process plain vs compressed benchmark from a config file.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct BrokerArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Load the registry from this file on start and save it on shutdown.
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProviderArgs {
    /// Broker base URL, e.g. http://127.0.0.1:8080
    #[arg(long)]
    broker: String,
    #[arg(long, default_value_t = 8081)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value = "MsgService")]
    service: String,
    /// always, never or auto
    #[arg(long, default_value = "auto")]
    mode: CompressMode,
    /// Payload size in bytes from which auto mode compresses.
    #[arg(long, default_value_t = 512)]
    threshold: usize,
    #[arg(long, default_value_t = 100)]
    records: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = DEFAULT_TEMPLATE)]
    template: String,
}

#[derive(Debug, Args)]
struct ConsumerArgs {
    #[arg(long)]
    broker: String,
    #[arg(long, default_value = "MsgService")]
    service: String,
    #[arg(long, default_value_t = 1)]
    iterations: usize,
    /// Timing CSV destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 5000)]
    timeout_ms: u64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config file's output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("CMX_LOG", "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp_millis().try_init();
}

fn wait_for_interrupt() -> Result<(), String> {
    let (tx, rx) = mpsc::channel();
    ctrlc::set_handler(move || {
        let _ = tx.send(());
    })
    .map_err(|e| format!("cannot install signal handler: {e}"))?;
    let _ = rx.recv();
    Ok(())
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), String> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_broker(args: BrokerArgs) -> Result<(), String> {
    let registry = match &args.snapshot {
        Some(path) if path.exists() => Registry::load_snapshot(path).map_err(|e| e.to_string())?,
        _ => Registry::new(),
    };
    let registry = Arc::new(registry);
    let addr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| format!("bad listen address {}:{}: {e}", args.host, args.port))?;
    let server = transport::serve_on(broker::routes(Arc::clone(&registry)), addr).map_err(|e| e.to_string())?;
    log::info!("broker listening on {}", server.base_url());
    wait_for_interrupt()?;
    server.shutdown();
    if let Some(path) = &args.snapshot {
        registry.save_snapshot(path).map_err(|e| e.to_string())?;
        log::info!("saved {} records to {}", registry.len(), path.display());
    }
    Ok(())
}

fn run_provider(args: ProviderArgs) -> Result<(), String> {
    let mut config = ProviderConfig::new(args.service, args.broker);
    config.host = args.host;
    config.listen_port = args.port;
    config.compress_mode = args.mode;
    config.compress_threshold = args.threshold;
    config.payload_spec = GeneratorSpec::new(args.records, args.seed).with_template(args.template);
    let running = provider::start(config).map_err(|e| e.to_string())?;
    println!("{}", running.endpoint_url());
    wait_for_interrupt()?;
    running.shutdown();
    Ok(())
}

fn run_consumer(args: ConsumerArgs) -> Result<(), String> {
    let mut config = ConsumerConfig::new(args.broker, args.service);
    config.iterations = args.iterations;
    config.request_timeout = Duration::from_millis(args.timeout_ms);
    config.validate().map_err(|e| e.to_string())?;
    let mut rows = poll_until_done(&config);

    // Provider-side columns come from its /metrics log when it is reachable.
    if let Ok(record) = crate::consumer::lookup_service(&config) {
        if let Ok(mut base) = url::Url::parse(&record.endpoint_url) {
            base.set_path("");
            base.set_query(None);
            match fetch_metrics(base.as_str().trim_end_matches('/'), config.request_timeout) {
                Ok(metrics) => join_provider_rows(&mut rows, &metrics),
                Err(e) => log::warn!("no provider metrics: {e}"),
            }
        }
    }
    write_output(args.out.as_deref(), &timings_to_csv(&rows))?;
    let ok = rows.iter().filter(|r| r.outcome.is_ok()).count();
    log::info!("{ok} of {} transactions succeeded", rows.len());
    if ok == 0 {
        return Err("no transaction succeeded".into());
    }
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<(), String> {
    let mut config = BenchConfig::load(&args.config).map_err(|e| e.to_string())?;
    if let Some(out) = args.out {
        config.output = out;
    }
    let rows = run_experiment(&config).map_err(|e| e.to_string())?;
    let report = report(&rows).map_err(|e| e.to_string())?;
    report.write_csv(&config.output).map_err(|e| e.to_string())?;
    print!("{}", report.table);
    log::info!("wrote {} rows to {}", rows.len(), config.output.display());
    Ok(())
}

/// Entry point for the `cmx` binary. Returns 0 on success, 1 on a usage
/// error and 2 when the command itself fails.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging();
    let result = match cli.command {
        Command::Broker(args) => run_broker(args),
        Command::Provider(args) => run_provider(args),
        Command::Consumer(args) => run_consumer(args),
        Command::Bench(args) => run_bench(args),
    };
    match result {
        Ok(()) => 0,
        Err(message) => {
            eprintln!("cmx: {message}");
            2
        }
    }
}
