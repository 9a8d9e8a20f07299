//! Responder daemon: hosts the peripheral emulator behind a listening
//! channel, one session per connection.

use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use hwitl::memmap;
use hwitl::peripherals::RtcPins;
use hwitl_host::channel::ChannelSpec;
use hwitl_host::daemon::{serve, DaemonConfig};
use hwitl_host::mapfile::{MapConfig, RtcConfig};

#[derive(Parser)]
#[command(name = "responderd", about = "Serve the bus-bridge responder emulator")]
struct Args {
    /// Listen spec: tcp:HOST:PORT or pipe:PATH.
    #[arg(long, default_value = "tcp:127.0.0.1:7450")]
    listen: String,

    /// Watchdog timeout in milliseconds; a partial frame older than this is
    /// discarded.
    #[arg(long, default_value_t = 2.0)]
    watchdog_ms: f64,

    /// Memory-map file (NAME BASE MASK KIND [irq-line] per line). Defaults
    /// to the built-in map.
    #[arg(long)]
    map: Option<std::path::PathBuf>,

    /// Attach the 3-wire RTC to a GPIO bank: `BANK[:CE,SCLK,IO]`.
    #[arg(long)]
    rtc: Option<String>,

    /// Interrupt line for the RTC tick.
    #[arg(long, default_value_t = memmap::RTC_IRQ_LINE)]
    rtc_irq_line: u8,

    /// Preset pin levels for a GPIO bank, NAME=HEX. Repeatable.
    #[arg(long = "pins", value_name = "NAME=HEX")]
    pins: Vec<String>,

    /// Serve the virtual-breadboard side channel on this TCP spec.
    #[arg(long)]
    breadboard: Option<String>,

    /// Serve one session and exit.
    #[arg(long)]
    once: bool,
}

fn parse_rtc(arg: &str, irq_line: u8) -> Result<RtcConfig, String> {
    let (bank, pins) = match arg.split_once(':') {
        None => (arg, RtcPins::default()),
        Some((bank, spec)) => {
            let nums: Vec<&str> = spec.split(',').collect();
            let [ce, sclk, io] = nums.as_slice() else {
                return Err(format!("--rtc pins must be CE,SCLK,IO, got '{spec}'"));
            };
            let parse = |s: &str| {
                s.parse::<u8>()
                    .ok()
                    .filter(|p| *p < 32)
                    .ok_or_else(|| format!("bad pin index '{s}'"))
            };
            (
                bank,
                RtcPins {
                    ce: parse(ce)?,
                    sclk: parse(sclk)?,
                    io: parse(io)?,
                },
            )
        }
    };
    Ok(RtcConfig {
        bank: bank.to_string(),
        pins,
        irq_line: Some(irq_line),
    })
}

fn build_config(args: &Args) -> Result<DaemonConfig, String> {
    let listen: ChannelSpec = args.listen.parse().map_err(|e| format!("{e}"))?;
    let mut map = match &args.map {
        None => MapConfig::standard(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read map file {}: {e}", path.display()))?;
            MapConfig::parse(&text).map_err(|e| format!("map file {}: {e}", path.display()))?
        }
    };
    if let Some(rtc) = &args.rtc {
        map.rtc = Some(parse_rtc(rtc, args.rtc_irq_line)?);
    }
    for preset in &args.pins {
        let Some((name, value)) = preset.split_once('=') else {
            return Err(format!("--pins wants NAME=HEX, got '{preset}'"));
        };
        let value = u32::from_str_radix(value.trim_start_matches("0x"), 16)
            .map_err(|_| format!("bad pin levels '{preset}'"))?;
        map.initial_pins.push((name.to_string(), value));
    }
    let breadboard = args
        .breadboard
        .as_ref()
        .map(|s| s.parse::<ChannelSpec>().map_err(|e| format!("{e}")))
        .transpose()?;
    if args.watchdog_ms <= 0.0 || !args.watchdog_ms.is_finite() {
        return Err(format!("bad watchdog {} ms", args.watchdog_ms));
    }
    Ok(DaemonConfig {
        listen,
        watchdog: Duration::from_secs_f64(args.watchdog_ms / 1000.0),
        map,
        breadboard,
        once: args.once,
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = match build_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("responderd: {e}");
            return ExitCode::from(1);
        }
    };
    match serve(config, |line| println!("{line}")) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("responderd: {e}");
            ExitCode::from(1)
        }
    }
}
