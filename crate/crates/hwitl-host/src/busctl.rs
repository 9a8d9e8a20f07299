//! One-shot bus operations and their exit-code mapping, shared between the
//! `busctl` binary and tests.
//!
//! Exit codes partition outcomes:
//!
//! | code | meaning                               |
//! |------|---------------------------------------|
//! | 0    | acknowledged ok                       |
//! | 2    | usage error (argument parsing)        |
//! | 3    | responder acked `not_mapped`          |
//! | 4    | responder acked `command_not_supported` |
//! | 5    | transport failure (deadline, closed)  |
//! | 6    | protocol violation (bad ack, `never`) |

use hwitl::{AccessStatus, BusAccessResult, Channel, Fault, InitiatorBridge};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NOT_MAPPED: i32 = 3;
pub const EXIT_NOT_SUPPORTED: i32 = 4;
pub const EXIT_TRANSPORT: i32 = 5;
pub const EXIT_PROTOCOL: i32 = 6;

/// The operations the console exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusCommand {
    Read { addr: u32 },
    Write { addr: u32, value: u32 },
    Irqs,
    Reset,
    SetTime { millis: u32 },
    Exit,
}

/// Formatted result plus process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub line: String,
    pub code: i32,
}

fn code_for(result: &BusAccessResult) -> i32 {
    match result.status {
        AccessStatus::Ok => EXIT_OK,
        AccessStatus::AddressError => EXIT_NOT_MAPPED,
        AccessStatus::GenericError => match result.fault {
            Some(Fault::NotSupported) => EXIT_NOT_SUPPORTED,
            Some(Fault::Transport(_)) => EXIT_TRANSPORT,
            Some(Fault::Protocol(_)) | Some(Fault::NeverAck) => EXIT_PROTOCOL,
            Some(Fault::InvalidLength(_)) | None => EXIT_USAGE,
        },
    }
}

fn describe_failure(result: &BusAccessResult) -> String {
    match result.status {
        AccessStatus::AddressError => "not_mapped".into(),
        AccessStatus::GenericError => match &result.fault {
            Some(Fault::NotSupported) => "command_not_supported".into(),
            Some(f) => format!("error: {f}"),
            None => "error".into(),
        },
        AccessStatus::Ok => unreachable!("not a failure"),
    }
}

/// Run one command against an already-connected bridge.
pub fn execute<C: Channel>(bridge: &mut InitiatorBridge<C>, cmd: BusCommand) -> Outcome {
    match cmd {
        BusCommand::Read { addr } => {
            let r = bridge.read(addr);
            if r.is_ok() {
                Outcome {
                    line: format!("0x{:08x} ok", r.data),
                    code: EXIT_OK,
                }
            } else {
                Outcome {
                    line: describe_failure(&r),
                    code: code_for(&r),
                }
            }
        }
        BusCommand::Write { addr, value } => {
            let r = bridge.write(addr, value);
            if r.is_ok() {
                Outcome {
                    line: "ok".into(),
                    code: EXIT_OK,
                }
            } else {
                Outcome {
                    line: describe_failure(&r),
                    code: code_for(&r),
                }
            }
        }
        BusCommand::Irqs => {
            let r = bridge.poll_pending_irqs();
            if r.is_ok() {
                Outcome {
                    line: format!("0x{:08x} ok", r.data),
                    code: EXIT_OK,
                }
            } else {
                Outcome {
                    line: describe_failure(&r),
                    code: code_for(&r),
                }
            }
        }
        BusCommand::Reset => {
            let r = bridge.reset();
            if r.is_ok() {
                Outcome {
                    line: "reset sent".into(),
                    code: EXIT_OK,
                }
            } else {
                Outcome {
                    line: describe_failure(&r),
                    code: code_for(&r),
                }
            }
        }
        BusCommand::SetTime { millis } => {
            let r = bridge.set_time(millis);
            if r.is_ok() {
                Outcome {
                    line: "ok".into(),
                    code: EXIT_OK,
                }
            } else {
                Outcome {
                    line: describe_failure(&r),
                    code: code_for(&r),
                }
            }
        }
        BusCommand::Exit => {
            let r = bridge.exit();
            if r.is_ok() {
                Outcome {
                    line: "ok".into(),
                    code: EXIT_OK,
                }
            } else {
                Outcome {
                    line: describe_failure(&r),
                    code: code_for(&r),
                }
            }
        }
    }
}

/// Parse a `0x`-prefixed or bare hex u32, the format all busctl addresses
/// and values use.
pub fn parse_hex_u32(s: &str) -> Result<u32, String> {
    let trimmed = s.trim_start_matches("0x").trim_start_matches("0X");
    u32::from_str_radix(trimmed, 16).map_err(|_| format!("'{s}' is not a hex value"))
}
