//! Decode a protocol capture into a human-readable transaction listing.

use std::io::Read;
use std::process::ExitCode;

use clap::Parser;
use hwitl_host::capture::{decode_transactions, format_entry, parse_capture};

#[derive(Parser)]
#[command(
    name = "tracecat",
    about = "Decode a captured byte trace into transactions"
)]
struct Args {
    /// Capture file (`<t_us> <I|R> <hex-byte>` per line); '-' or absent
    /// reads stdin.
    file: Option<std::path::PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match &args.file {
        Some(path) if path.as_os_str() != "-" => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("tracecat: cannot read {}: {e}", path.display());
                return ExitCode::from(1);
            }
        },
        _ => {
            let mut buf = String::new();
            if let Err(e) = std::io::stdin().read_to_string(&mut buf) {
                eprintln!("tracecat: stdin: {e}");
                return ExitCode::from(1);
            }
            buf
        }
    };
    let records = match parse_capture(text.as_bytes()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("tracecat: {e}");
            return ExitCode::from(1);
        }
    };
    for entry in decode_transactions(&records) {
        println!("{}", format_entry(&entry));
    }
    ExitCode::SUCCESS
}
