use std::net::SocketAddr;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use quicprobe::faultsrv::{serve, Fault, ServerConfig, DEFAULT_BODY_SIZE};

/// A small QUIC responder that misbehaves on request.
#[derive(Parser)]
#[command(name = "faultsrv", version)]
struct Args {
    /// Address to listen on, e.g. 127.0.0.1:4433.
    #[arg(long, required_unless_present = "list_faults")]
    listen: Option<SocketAddr>,
    /// Fault to inject; `none` for a compliant server.
    #[arg(long, default_value = "none")]
    fault: Fault,
    /// Size of the body served for every path.
    #[arg(long, default_value_t = DEFAULT_BODY_SIZE)]
    body_size: usize,
    /// Seed of the scripted handshake; clients must use the same one.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// List the faults and the scenario each one should fail, then exit.
    #[arg(long)]
    list_faults: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: Args) -> Result<()> {
    if args.list_faults {
        for fault in Fault::ALL {
            let (scenario, code) = fault.designated_failure().expect("every fault fails a scenario");
            println!("{:<24} {scenario} {code}", fault.name());
        }
        return Ok(());
    }
    let listen = args.listen.expect("clap requires --listen");
    let config = ServerConfig::new(listen, args.fault).with_body_size(args.body_size).with_seed(args.seed);
    let handle = serve(config).context("starting the server")?;
    log::info!("listening on {} with fault {}", handle.local_addr(), args.fault);
    handle.wait().context("server loop")?;
    Ok(())
}
