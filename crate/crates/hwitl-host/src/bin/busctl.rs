//! Bus console: issue one protocol command against a responder and report
//! the outcome through the documented exit codes.

use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use hwitl::InitiatorBridge;
use hwitl_host::busctl::{execute, parse_hex_u32, BusCommand, EXIT_TRANSPORT};
use hwitl_host::channel::{connect, ChannelSpec};

#[derive(Parser)]
#[command(name = "busctl", about = "Issue bus transactions to a responder")]
struct Args {
    /// Channel spec (tcp:HOST:PORT, pipe:PATH, serial:DEV:BAUD). Falls back
    /// to $HWITL_CHANNEL.
    #[arg(long, env = "HWITL_CHANNEL")]
    channel: String,

    /// Base address added to every access, hex.
    #[arg(long, default_value = "0", value_parser = parse_hex_u32)]
    base: u32,

    /// Response deadline in milliseconds.
    #[arg(long, default_value_t = 500)]
    deadline_ms: u64,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Read the 32-bit word at ADDR (hex).
    Read {
        #[arg(value_parser = parse_hex_u32)]
        addr: u32,
    },
    /// Write VALUE (hex) to ADDR (hex).
    Write {
        #[arg(value_parser = parse_hex_u32)]
        addr: u32,
        #[arg(value_parser = parse_hex_u32)]
        value: u32,
    },
    /// Fetch the pending-interrupt bitmask.
    Irqs,
    /// Reset the responder. No response is expected.
    Reset,
    /// Send a millisecond wall-time timestamp.
    Settime { millis: u32 },
    /// End the responder session.
    Exit,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let spec: ChannelSpec = match args.channel.parse() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("busctl: {e}");
            return ExitCode::from(2);
        }
    };
    let channel = match connect(&spec) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("busctl: cannot connect {spec}: {e}");
            return ExitCode::from(EXIT_TRANSPORT as u8);
        }
    };
    let mut bridge = InitiatorBridge::new(channel);
    bridge.set_base_address(args.base);
    bridge.set_response_deadline(Duration::from_millis(args.deadline_ms));

    let cmd = match args.command {
        Cmd::Read { addr } => BusCommand::Read { addr },
        Cmd::Write { addr, value } => BusCommand::Write { addr, value },
        Cmd::Irqs => BusCommand::Irqs,
        Cmd::Reset => BusCommand::Reset,
        Cmd::Settime { millis } => BusCommand::SetTime { millis },
        Cmd::Exit => BusCommand::Exit,
    };
    let outcome = execute(&mut bridge, cmd);
    println!("{}", outcome.line);
    ExitCode::from(outcome.code as u8)
}
