//! Capture files and the transaction decoder behind `tracecat`.
//!
//! A capture is a text file with one observed byte per line:
//!
//! ```text
//! <t_microseconds> <dir> <hex-byte>
//! ```
//!
//! where `dir` is `I` for initiator-to-responder bytes and `R` for the
//! response direction. The format is easy to produce from logic-analyzer
//! exports and is exactly what [`hwitl::transport::Tap`] records.
//!
//! The decoder replays the byte stream through the protocol parser and
//! reconstructs the transaction sequence, flagging anything that does not
//! decode. Every captured byte is attributed to exactly one decoded entry,
//! so byte counts always add up.

use std::io::{BufRead, Write};
use std::time::Duration;

use hwitl::protocol::{decode_response, ParseEvent, Request, RequestParser, ResponseStatus};
use hwitl::transport::{Direction, TapRecord};
use hwitl::Command;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn micros_string(t: Duration) -> String {
    format!("{}", t.as_nanos() as f64 / 1000.0)
}

/// Write records in the capture line format.
pub fn write_capture<W: Write>(mut w: W, records: &[TapRecord]) -> std::io::Result<()> {
    for r in records {
        let dir = match r.direction {
            Direction::ToResponder => 'I',
            Direction::ToInitiator => 'R',
        };
        writeln!(w, "{} {} {:02x}", micros_string(r.at), dir, r.byte)?;
    }
    Ok(())
}

/// Parse a capture file. Blank lines and `#` comments are skipped.
pub fn parse_capture<R: BufRead>(r: R) -> Result<Vec<TapRecord>, CaptureError> {
    let mut records = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let mut fields = text.split_whitespace();
        let (Some(t), Some(dir), Some(byte), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(CaptureError::Parse {
                line: lineno,
                msg: format!("expected '<t_us> <I|R> <hex-byte>', got '{text}'"),
            });
        };
        let t: f64 = t.parse().map_err(|_| CaptureError::Parse {
            line: lineno,
            msg: format!("bad timestamp '{t}'"),
        })?;
        if !t.is_finite() || t < 0.0 {
            return Err(CaptureError::Parse {
                line: lineno,
                msg: format!("bad timestamp '{t}'"),
            });
        }
        let direction = match dir {
            "I" => Direction::ToResponder,
            "R" => Direction::ToInitiator,
            other => {
                return Err(CaptureError::Parse {
                    line: lineno,
                    msg: format!("direction must be I or R, got '{other}'"),
                })
            }
        };
        let byte = u8::from_str_radix(byte.trim_start_matches("0x"), 16).map_err(|_| {
            CaptureError::Parse {
                line: lineno,
                msg: format!("bad hex byte '{byte}'"),
            }
        })?;
        records.push(TapRecord {
            at: Duration::from_nanos((t * 1000.0).round() as u64),
            direction,
            byte,
        });
    }
    Ok(records)
}

/// One reconstructed request/response exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionTrace {
    pub t_start: Duration,
    pub t_end: Duration,
    pub command: Command,
    pub address: Option<u32>,
    pub request_payload: Option<u32>,
    pub status: Option<ResponseStatus>,
    pub response_payload: Option<u32>,
    /// Last request byte to first response byte.
    pub response_latency: Option<Duration>,
    pub byte_count: usize,
    /// Set when the exchange was present but defective.
    pub note: Option<String>,
}

impl TransactionTrace {
    pub fn total(&self) -> Duration {
        self.t_end.saturating_sub(self.t_start)
    }
}

/// A decoded capture entry: a transaction, or bytes that did not decode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEntry {
    Transaction(TransactionTrace),
    Corrupt {
        at: Duration,
        byte_count: usize,
        reason: String,
    },
}

impl TraceEntry {
    pub fn byte_count(&self) -> usize {
        match self {
            TraceEntry::Transaction(t) => t.byte_count,
            TraceEntry::Corrupt { byte_count, .. } => *byte_count,
        }
    }
}

/// Reconstruct the transaction sequence from captured bytes.
pub fn decode_transactions(records: &[TapRecord]) -> Vec<TraceEntry> {
    let mut entries = Vec::new();
    let mut i = 0;
    while i < records.len() {
        // Response bytes with no request in flight do not decode.
        if records[i].direction == Direction::ToInitiator {
            let start = i;
            while i < records.len() && records[i].direction == Direction::ToInitiator {
                i += 1;
            }
            entries.push(TraceEntry::Corrupt {
                at: records[start].at,
                byte_count: i - start,
                reason: "response bytes without a request".into(),
            });
            continue;
        }

        // Assemble one request.
        let t_start = records[i].at;
        let mut parser = RequestParser::new();
        let req_first = i;
        let request = loop {
            if i >= records.len() || records[i].direction != Direction::ToResponder {
                entries.push(TraceEntry::Corrupt {
                    at: t_start,
                    byte_count: i - req_first,
                    reason: "request frame cut short".into(),
                });
                break None;
            }
            match parser.feed(records[i].byte) {
                ParseEvent::NeedMore => i += 1,
                ParseEvent::Complete(req) => {
                    i += 1;
                    break Some(req);
                }
                ParseEvent::Error(e) => {
                    i += 1;
                    entries.push(TraceEntry::Corrupt {
                        at: t_start,
                        byte_count: i - req_first,
                        reason: e.to_string(),
                    });
                    break None;
                }
            }
        };
        let Some(request) = request else { continue };
        let t_req_end = records[i - 1].at;
        let command = request.command();
        let (address, request_payload) = request_fields(&request);
        let request_bytes = i - req_first;

        // Collect the response frame.
        let want = command.response_len();
        let resp_first = i;
        while i < records.len()
            && i - resp_first < want
            && records[i].direction == Direction::ToInitiator
        {
            i += 1;
        }
        let got = i - resp_first;
        let resp = &records[resp_first..i];
        let mut note = None;
        let (status, response_payload) = if want == 0 {
            (None, None)
        } else if got < want {
            note = Some(if got == 0 {
                "no response captured".to_string()
            } else {
                format!("response cut short ({got} of {want} bytes)")
            });
            // A lone status byte still decodes.
            let status = resp
                .first()
                .and_then(|r| ResponseStatus::unpack(r.byte).ok());
            (status, None)
        } else {
            let bytes: Vec<u8> = resp.iter().map(|r| r.byte).collect();
            match decode_response(command, &bytes) {
                Ok(d) => (Some(d.status), d.payload),
                Err(e) => {
                    note = Some(e.to_string());
                    (None, None)
                }
            }
        };

        let t_end = if got > 0 {
            records[i - 1].at
        } else {
            t_req_end
        };
        let response_latency = resp.first().map(|r| r.at.saturating_sub(t_req_end));
        entries.push(TraceEntry::Transaction(TransactionTrace {
            t_start,
            t_end,
            command,
            address,
            request_payload,
            status,
            response_payload,
            response_latency,
            byte_count: request_bytes + got,
            note,
        }));
    }
    entries
}

fn request_fields(req: &Request) -> (Option<u32>, Option<u32>) {
    match *req {
        Request::Read { address } => (Some(address), None),
        Request::Write { address, payload } => (Some(address), Some(payload)),
        Request::SetTime { millis } => (Some(millis), None),
        Request::Reset | Request::GetPendingIrqs | Request::Exit => (None, None),
    }
}

fn status_string(status: &Option<ResponseStatus>) -> String {
    match status {
        None => "?".into(),
        Some(s) => {
            let ack = match s.ack {
                hwitl::Ack::Never => "never",
                hwitl::Ack::Ok => "ok",
                hwitl::Ack::NotMapped => "not_mapped",
                hwitl::Ack::CommandNotSupported => "command_not_supported",
            };
            if s.irq_waiting {
                format!("{ack}[irq]")
            } else {
                ack.into()
            }
        }
    }
}

fn fmt_us(t: Duration) -> String {
    format!("{:.2}", t.as_nanos() as f64 / 1000.0)
}

/// One display line per entry.
pub fn format_entry(entry: &TraceEntry) -> String {
    match entry {
        TraceEntry::Corrupt {
            at,
            byte_count,
            reason,
        } => {
            format!(
                "@{} µs PROTOCOL ERROR: {reason} ({byte_count} byte{})",
                fmt_us(*at),
                if *byte_count == 1 { "" } else { "s" }
            )
        }
        TraceEntry::Transaction(t) => {
            let status = status_string(&t.status);
            let mut line = format!("@{} µs ", fmt_us(t.t_start));
            match t.command {
                Command::Read => {
                    line += &format!("READ 0x{:08x} → {status}", t.address.unwrap_or(0));
                    if let Some(p) = t.response_payload {
                        line += &format!(" 0x{p:08x}");
                    }
                }
                Command::Write => {
                    line += &format!(
                        "WRITE 0x{:08x} ← 0x{:08x} → {status}",
                        t.address.unwrap_or(0),
                        t.request_payload.unwrap_or(0)
                    );
                }
                Command::GetPendingIrqs => {
                    line += &format!("IRQS → {status}");
                    if let Some(p) = t.response_payload {
                        line += &format!(" 0x{p:08x}");
                    }
                }
                Command::SetTime => {
                    line += &format!("SETTIME {} ms → {status}", t.address.unwrap_or(0));
                }
                Command::Reset => line += "RESET",
                Command::Exit => {
                    line += &format!("EXIT → {status}");
                }
            }
            line += &format!(", total {} µs", fmt_us(t.total()));
            if let Some(lat) = t.response_latency {
                line += &format!(", latency {} µs", fmt_us(lat));
            }
            if let Some(note) = &t.note {
                line += &format!(" [{note}]");
            }
            line
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hwitl::protocol::encode_request;
    use proptest::prelude::*;

    fn record(at_us: f64, direction: Direction, byte: u8) -> TapRecord {
        TapRecord {
            at: Duration::from_nanos((at_us * 1000.0).round() as u64),
            direction,
            byte,
        }
    }

    /// The bench read exchange: request at one byte per 86.8 µs, response
    /// finishing 848.25 µs after the first request byte.
    fn golden_read_capture() -> Vec<TapRecord> {
        let req = [0x01u8, 0x08, 0x10, 0x00, 0x50];
        let resp = [0x01u8, 0x81, 0x00, 0x00, 0x00];
        let mut records = Vec::new();
        for (k, &b) in req.iter().enumerate() {
            records.push(record(k as f64 * 86.8, Direction::ToResponder, b));
        }
        for (k, &b) in resp.iter().enumerate() {
            records.push(record(501.05 + k as f64 * 86.8, Direction::ToInitiator, b));
        }
        records
    }

    #[test]
    fn capture_round_trips_through_text() {
        let records = golden_read_capture();
        let mut text = Vec::new();
        write_capture(&mut text, &records).unwrap();
        let parsed = parse_capture(text.as_slice()).unwrap();
        assert_eq!(parsed, records);
    }

    #[test]
    fn golden_read_formats_like_the_bench_trace() {
        let entries = decode_transactions(&golden_read_capture());
        assert_eq!(entries.len(), 1);
        let line = format_entry(&entries[0]);
        assert!(
            line.contains("READ 0x50001008 → ok 0x00000081, total 848.25 µs"),
            "{line}"
        );
    }

    #[test]
    fn golden_write_formats_like_the_bench_trace() {
        let req = encode_request(&hwitl::Request::Write {
            address: 0x5000_1000,
            payload: 0,
        });
        let mut records = Vec::new();
        for (k, &b) in req.iter().enumerate() {
            records.push(record(k as f64 * 86.8, Direction::ToResponder, b));
        }
        records.push(record(859.75, Direction::ToInitiator, 0x01));
        let entries = decode_transactions(&records);
        assert_eq!(entries.len(), 1);
        let line = format_entry(&entries[0]);
        assert!(
            line.contains("WRITE 0x50001000 ← 0x00000000 → ok, total 859.75 µs"),
            "{line}"
        );
    }

    #[test]
    fn empty_capture_decodes_to_nothing() {
        assert!(decode_transactions(&[]).is_empty());
        let parsed = parse_capture("".as_bytes()).unwrap();
        assert!(parsed.is_empty());
    }

    #[test]
    fn reset_has_no_response_and_no_latency() {
        let records = vec![record(10.0, Direction::ToResponder, 0x00)];
        let entries = decode_transactions(&records);
        let TraceEntry::Transaction(t) = &entries[0] else {
            panic!("expected transaction")
        };
        assert_eq!(t.command, Command::Reset);
        assert_eq!(t.response_latency, None);
        assert_eq!(t.byte_count, 1);
    }

    #[test]
    fn bad_command_byte_is_flagged_inline() {
        let mut records = vec![record(0.0, Direction::ToResponder, 0x42)];
        records.push(record(5.0, Direction::ToResponder, 0x00));
        let entries = decode_transactions(&records);
        assert_eq!(entries.len(), 2);
        assert!(matches!(
            entries[0],
            TraceEntry::Corrupt { byte_count: 1, .. }
        ));
        assert!(matches!(entries[1], TraceEntry::Transaction(_)));
    }

    #[test]
    fn stray_response_bytes_are_flagged() {
        let records = vec![
            record(0.0, Direction::ToInitiator, 0x01),
            record(1.0, Direction::ToInitiator, 0x02),
        ];
        let entries = decode_transactions(&records);
        assert_eq!(entries.len(), 1);
        assert!(matches!(
            entries[0],
            TraceEntry::Corrupt { byte_count: 2, .. }
        ));
    }

    #[test]
    fn missing_response_is_noted() {
        let req = encode_request(&hwitl::Request::Read { address: 0x10 });
        let records: Vec<TapRecord> = req
            .iter()
            .enumerate()
            .map(|(k, &b)| record(k as f64, Direction::ToResponder, b))
            .collect();
        let entries = decode_transactions(&records);
        let TraceEntry::Transaction(t) = &entries[0] else {
            panic!("expected transaction")
        };
        assert_eq!(t.note.as_deref(), Some("no response captured"));
        assert_eq!(t.byte_count, 5);
    }

    #[test]
    fn parse_rejects_malformed_lines() {
        assert!(parse_capture("notanumber I 01".as_bytes()).is_err());
        assert!(parse_capture("1.0 X 01".as_bytes()).is_err());
        assert!(parse_capture("1.0 I zz".as_bytes()).is_err());
        assert!(parse_capture("1.0 I".as_bytes()).is_err());
    }

    proptest! {
        /// The decoder is a left inverse of the encoder: a tapped session of
        /// random well-formed transactions decodes back to the exact
        /// transaction sequence.
        #[test]
        fn decoder_reconstructs_random_sessions(
            ops in proptest::collection::vec((0u8..5, any::<u32>(), any::<u32>()), 1..60)
        ) {
            use hwitl::memmap;
            use hwitl::peripherals::{GpioBank, PinBoard};
            use hwitl::transport::{Tap, VirtualClock};
            use hwitl::{InitiatorBridge, ResponderChannel};

            let mut gpio_a = GpioBank::new();
            gpio_a.set_hook(Box::new(PinBoard::new(0x81)));
            let core = memmap::standard_responder(gpio_a, GpioBank::new());
            let clock = VirtualClock::new();
            let tap = Tap::new(ResponderChannel::with_clock(core, clock.clone()), clock.clone());
            let mut bridge = InitiatorBridge::new(tap);

            let mut issued = Vec::new();
            for (kind, addr, value) in ops {
                // Spread transactions out in time so they are distinguishable.
                clock.advance(Duration::from_micros(1000));
                match kind {
                    0 => {
                        bridge.read(addr);
                        issued.push((Command::Read, Some(addr), None));
                    }
                    1 => {
                        bridge.write(addr, value);
                        issued.push((Command::Write, Some(addr), Some(value)));
                    }
                    2 => {
                        bridge.poll_pending_irqs();
                        issued.push((Command::GetPendingIrqs, None, None));
                    }
                    3 => {
                        bridge.reset();
                        issued.push((Command::Reset, None, None));
                    }
                    _ => {
                        bridge.set_time(value);
                        issued.push((Command::SetTime, Some(value), None));
                    }
                }
            }
            let records = bridge.channel_mut().take_records();
            let entries = decode_transactions(&records);
            prop_assert_eq!(entries.len(), issued.len());
            for (entry, (cmd, addr, payload)) in entries.iter().zip(&issued) {
                let TraceEntry::Transaction(t) = entry else {
                    return Err(TestCaseError::fail(format!("corrupt entry {entry:?}")));
                };
                prop_assert_eq!(t.command, *cmd);
                prop_assert_eq!(t.address, *addr);
                prop_assert_eq!(t.request_payload, *payload);
                prop_assert!(t.note.is_none(), "note {:?}", t.note);
            }
        }

        /// Byte conservation: every captured byte lands in exactly one entry
        /// no matter how mangled the stream is.
        #[test]
        fn decoded_byte_counts_sum_to_capture_size(
            bytes in proptest::collection::vec(any::<u8>(), 0..200),
            dirs in proptest::collection::vec(any::<bool>(), 0..200),
        ) {
            let records: Vec<TapRecord> = bytes
                .iter()
                .zip(dirs.iter().chain(std::iter::repeat(&true)))
                .enumerate()
                .map(|(k, (&byte, &to_resp))| TapRecord {
                    at: Duration::from_micros(k as u64),
                    direction: if to_resp {
                        Direction::ToResponder
                    } else {
                        Direction::ToInitiator
                    },
                    byte,
                })
                .collect();
            let entries = decode_transactions(&records);
            let total: usize = entries.iter().map(|e| e.byte_count()).sum();
            prop_assert_eq!(total, records.len());
        }
    }
}
