//! Race the software GCD against the responder's accelerator peripheral.

use std::process::ExitCode;

use clap::Parser;
use hwitl::InitiatorBridge;
use hwitl_host::channel::{connect, ChannelSpec};
use hwitl_host::gcdbench::{format_table, parse_pairs, run, BUILTIN_PAIRS};

#[derive(Parser)]
#[command(
    name = "gcdbench",
    about = "Benchmark gcd(a, b): local software vs the accelerator peripheral"
)]
struct Args {
    /// Channel spec of a responder with the GCD peripheral. Falls back to
    /// $HWITL_CHANNEL.
    #[arg(long, env = "HWITL_CHANNEL")]
    channel: String,

    /// Pairs file, one 'A B' decimal pair per line. Defaults to the
    /// built-in table.
    #[arg(long)]
    pairs: Option<std::path::PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let pairs = match &args.pairs {
        None => BUILTIN_PAIRS.to_vec(),
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("gcdbench: cannot read {}: {e}", path.display());
                    return ExitCode::from(1);
                }
            };
            match parse_pairs(&text) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("gcdbench: {e}");
                    return ExitCode::from(1);
                }
            }
        }
    };
    let spec: ChannelSpec = match args.channel.parse() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("gcdbench: {e}");
            return ExitCode::from(2);
        }
    };
    let channel = match connect(&spec) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("gcdbench: cannot connect {spec}: {e}");
            return ExitCode::from(1);
        }
    };
    let mut bridge = InitiatorBridge::new(channel);
    match run(&mut bridge, &pairs) {
        Ok(rows) => {
            print!("{}", format_table(&rows));
            let _ = bridge.exit();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("gcdbench: {e}");
            ExitCode::from(1)
        }
    }
}
