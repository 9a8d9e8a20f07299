//! Bit-exact encoding, decoding, and streaming parsing of the
//! initiator/responder wire protocol.
//!
//! Every request starts with a one-byte command. Depending on the command it
//! is followed by a 4-byte address and, for writes, a 4-byte payload. All
//! multi-byte fields are little endian on the wire.
//!
//! ```text
//! request                    response
//! ┌─────┐                    ┌────────┐
//! │ cmd │ reset/irqs/exit    │ status │ write/setTime/exit (1 byte)
//! └─────┘                    ├────────┼──────────────────┐
//! ┌─────┬──────────────┐     │ status │ payload (4, LE)  │ read/irqs
//! │ cmd │ address (LE) │     └────────┴──────────────────┘
//! ├─────┼──────────────┼──────────────┐
//! │ cmd │ address (LE) │ payload (LE) │ write
//! └─────┴──────────────┴──────────────┘
//! ```
//!
//! `reset` is the special case: the responder resets immediately and sends
//! no response at all.
//!
//! The status byte packs an acknowledgment code in bits 0..=6 and an
//! `irq_waiting` flag in bit 7.
//!
//! Little endian is the wire contract. The `wire-bigendian` cargo feature
//! flips every multi-byte field at build time for interop experiments
//! against byte-swapped implementations; the byte-exact test suite assumes
//! the default order.

use alloc::vec::Vec;
use thiserror::Error;

#[cfg(not(feature = "wire-bigendian"))]
#[inline]
fn word_to_wire(v: u32) -> [u8; 4] {
    v.to_le_bytes()
}

#[cfg(not(feature = "wire-bigendian"))]
#[inline]
fn word_from_wire(b: [u8; 4]) -> u32 {
    u32::from_le_bytes(b)
}

#[cfg(feature = "wire-bigendian")]
#[inline]
fn word_to_wire(v: u32) -> [u8; 4] {
    v.to_be_bytes()
}

#[cfg(feature = "wire-bigendian")]
#[inline]
fn word_from_wire(b: [u8; 4]) -> u32 {
    u32::from_be_bytes(b)
}

/// Largest possible request frame (write: command + address + payload).
pub const MAX_REQUEST_LEN: usize = 9;

/// Largest possible response frame (status + payload).
pub const MAX_RESPONSE_LEN: usize = 5;

/// Errors raised while decoding wire bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ProtocolError {
    /// The command byte is outside the defined range.
    #[error("unknown command byte {0:#04x}")]
    UnknownCommand(u8),
    /// The low 7 bits of a status byte are not a defined acknowledgment.
    #[error("unknown ack code {0:#04x}")]
    UnknownAck(u8),
    /// A response buffer did not have the exact length for its command.
    #[error("response length {got} does not match expected {expected}")]
    WrongLength { expected: usize, got: usize },
}

/// Command tags, one byte on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Command {
    Reset = 0,
    Read = 1,
    Write = 2,
    GetPendingIrqs = 3,
    SetTime = 4,
    Exit = 5,
}

impl Command {
    /// All defined commands, in tag order.
    pub const ALL: [Command; 6] = [
        Command::Reset,
        Command::Read,
        Command::Write,
        Command::GetPendingIrqs,
        Command::SetTime,
        Command::Exit,
    ];

    pub const fn tag(self) -> u8 {
        self as u8
    }

    /// Exact request frame length for this command, including the command byte.
    pub const fn request_len(self) -> usize {
        match self {
            Command::Reset | Command::GetPendingIrqs | Command::Exit => 1,
            Command::Read | Command::SetTime => 5,
            Command::Write => 9,
        }
    }

    /// Exact response frame length for this command. `Reset` gets no response.
    pub const fn response_len(self) -> usize {
        match self {
            Command::Reset => 0,
            Command::Read | Command::GetPendingIrqs => 5,
            Command::Write | Command::SetTime | Command::Exit => 1,
        }
    }

    /// Whether the response carries a 4-byte payload after the status byte.
    pub const fn response_has_payload(self) -> bool {
        self.response_len() == MAX_RESPONSE_LEN
    }
}

impl TryFrom<u8> for Command {
    type Error = ProtocolError;

    fn try_from(b: u8) -> Result<Self, ProtocolError> {
        match b {
            0 => Ok(Command::Reset),
            1 => Ok(Command::Read),
            2 => Ok(Command::Write),
            3 => Ok(Command::GetPendingIrqs),
            4 => Ok(Command::SetTime),
            5 => Ok(Command::Exit),
            other => Err(ProtocolError::UnknownCommand(other)),
        }
    }
}

/// Acknowledgment codes carried in bits 0..=6 of the status byte.
///
/// `Never` (0) is reserved: a conforming responder does not transmit it, so
/// receiving one lets the initiator tell an all-zero line fault apart from a
/// real acknowledgment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Ack {
    Never = 0,
    Ok = 1,
    NotMapped = 2,
    CommandNotSupported = 3,
}

impl Ack {
    pub const fn code(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Ack {
    type Error = ProtocolError;

    fn try_from(b: u8) -> Result<Self, ProtocolError> {
        match b {
            0 => Ok(Ack::Never),
            1 => Ok(Ack::Ok),
            2 => Ok(Ack::NotMapped),
            3 => Ok(Ack::CommandNotSupported),
            other => Err(ProtocolError::UnknownAck(other)),
        }
    }
}

/// The one-byte response status: ack code plus the `irq_waiting` flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResponseStatus {
    pub ack: Ack,
    /// Bit 7: some peripheral on the responder has a pending interrupt.
    pub irq_waiting: bool,
}

impl ResponseStatus {
    pub const IRQ_BIT: u8 = 0x80;

    pub const fn new(ack: Ack, irq_waiting: bool) -> Self {
        Self { ack, irq_waiting }
    }

    pub const fn pack(self) -> u8 {
        self.ack.code() | if self.irq_waiting { Self::IRQ_BIT } else { 0 }
    }

    pub fn unpack(b: u8) -> Result<Self, ProtocolError> {
        let ack = Ack::try_from(b & !Self::IRQ_BIT)?;
        Ok(Self {
            ack,
            irq_waiting: b & Self::IRQ_BIT != 0,
        })
    }
}

/// A fully formed request. Field presence is enforced by construction:
/// only writes carry a payload, only read/write/setTime carry an address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Request {
    Reset,
    Read {
        address: u32,
    },
    Write {
        address: u32,
        payload: u32,
    },
    GetPendingIrqs,
    /// The 4-byte address field carries an unsigned millisecond timestamp.
    SetTime {
        millis: u32,
    },
    Exit,
}

impl Request {
    pub const fn command(&self) -> Command {
        match self {
            Request::Reset => Command::Reset,
            Request::Read { .. } => Command::Read,
            Request::Write { .. } => Command::Write,
            Request::GetPendingIrqs => Command::GetPendingIrqs,
            Request::SetTime { .. } => Command::SetTime,
            Request::Exit => Command::Exit,
        }
    }

    /// Serialized frame length in bytes.
    pub const fn encoded_len(&self) -> usize {
        self.command().request_len()
    }
}

/// Encode a request into its exact wire bytes.
pub fn encode_request(req: &Request) -> Vec<u8> {
    let mut out = Vec::with_capacity(req.encoded_len());
    out.push(req.command().tag());
    match *req {
        Request::Reset | Request::GetPendingIrqs | Request::Exit => {}
        Request::Read { address } | Request::SetTime { millis: address } => {
            out.extend_from_slice(&word_to_wire(address));
        }
        Request::Write { address, payload } => {
            out.extend_from_slice(&word_to_wire(address));
            out.extend_from_slice(&word_to_wire(payload));
        }
    }
    debug_assert_eq!(out.len(), req.encoded_len());
    out
}

/// Encode a response for `cmd`. The payload must be given exactly when the
/// command's response carries one (read, getPendingIRQs). `Reset` yields an
/// empty byte sequence.
pub fn encode_response(cmd: Command, status: ResponseStatus, payload: Option<u32>) -> Vec<u8> {
    debug_assert_eq!(payload.is_some(), cmd.response_has_payload());
    let mut out = Vec::with_capacity(cmd.response_len());
    if cmd == Command::Reset {
        return out;
    }
    out.push(status.pack());
    if let Some(p) = payload {
        out.extend_from_slice(&word_to_wire(p));
    }
    out
}

/// A decoded response: status byte plus the optional 4-byte payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodedResponse {
    pub status: ResponseStatus,
    pub payload: Option<u32>,
}

/// Decode the response bytes for `cmd`. The buffer must hold exactly the
/// frame for that command.
pub fn decode_response(cmd: Command, bytes: &[u8]) -> Result<DecodedResponse, ProtocolError> {
    let expected = cmd.response_len();
    if bytes.len() != expected {
        return Err(ProtocolError::WrongLength {
            expected,
            got: bytes.len(),
        });
    }
    if expected == 0 {
        // Reset has no response; modeled as an ok status with no payload.
        return Ok(DecodedResponse {
            status: ResponseStatus::new(Ack::Ok, false),
            payload: None,
        });
    }
    let status = ResponseStatus::unpack(bytes[0])?;
    let payload = if cmd.response_has_payload() {
        Some(word_from_wire([bytes[1], bytes[2], bytes[3], bytes[4]]))
    } else {
        None
    };
    Ok(DecodedResponse { status, payload })
}

/// Result of feeding one byte to the streaming request parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseEvent {
    /// The frame is incomplete; feed more bytes.
    NeedMore,
    /// A full request was assembled from the preceding bytes.
    Complete(Request),
    /// The byte did not fit the protocol. The parser has returned to idle.
    Error(ProtocolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    AwaitingAddress,
    AwaitingPayload,
}

/// Streaming request parser. Feed it one byte at a time; it assembles frames
/// and never buffers across frame boundaries.
///
/// After [`ParseEvent::Complete`] or [`ParseEvent::Error`] the parser is idle
/// again and the next byte starts a fresh frame.
#[derive(Debug, Clone)]
pub struct RequestParser {
    phase: Phase,
    command: Option<Command>,
    buf: [u8; 8],
    filled: usize,
    consumed: usize,
}

impl RequestParser {
    pub const fn new() -> Self {
        Self {
            phase: Phase::Idle,
            command: None,
            buf: [0; 8],
            filled: 0,
            consumed: 0,
        }
    }

    /// True when the parser sits between frames.
    pub fn is_idle(&self) -> bool {
        self.phase == Phase::Idle
    }

    /// Bytes consumed since the parser last was idle.
    pub fn consumed(&self) -> usize {
        self.consumed
    }

    /// Drop any partially accumulated frame and return to idle.
    pub fn reset(&mut self) {
        self.phase = Phase::Idle;
        self.command = None;
        self.filled = 0;
        self.consumed = 0;
    }

    /// Consume exactly one byte.
    pub fn feed(&mut self, b: u8) -> ParseEvent {
        self.consumed += 1;
        match self.phase {
            Phase::Idle => match Command::try_from(b) {
                Err(e) => {
                    self.reset();
                    ParseEvent::Error(e)
                }
                Ok(cmd) => match cmd {
                    Command::Reset => self.complete(Request::Reset),
                    Command::GetPendingIrqs => self.complete(Request::GetPendingIrqs),
                    Command::Exit => self.complete(Request::Exit),
                    Command::Read | Command::Write | Command::SetTime => {
                        self.command = Some(cmd);
                        self.filled = 0;
                        self.phase = Phase::AwaitingAddress;
                        ParseEvent::NeedMore
                    }
                },
            },
            Phase::AwaitingAddress => {
                self.buf[self.filled] = b;
                self.filled += 1;
                if self.filled < 4 {
                    return ParseEvent::NeedMore;
                }
                let address = word_from_wire([self.buf[0], self.buf[1], self.buf[2], self.buf[3]]);
                match self.command {
                    Some(Command::Read) => self.complete(Request::Read { address }),
                    Some(Command::SetTime) => self.complete(Request::SetTime { millis: address }),
                    Some(Command::Write) => {
                        self.phase = Phase::AwaitingPayload;
                        ParseEvent::NeedMore
                    }
                    _ => unreachable!("address phase only entered for read/write/setTime"),
                }
            }
            Phase::AwaitingPayload => {
                self.buf[self.filled] = b;
                self.filled += 1;
                if self.filled < 8 {
                    return ParseEvent::NeedMore;
                }
                let address = word_from_wire([self.buf[0], self.buf[1], self.buf[2], self.buf[3]]);
                let payload = word_from_wire([self.buf[4], self.buf[5], self.buf[6], self.buf[7]]);
                self.complete(Request::Write { address, payload })
            }
        }
    }

    fn complete(&mut self, req: Request) -> ParseEvent {
        debug_assert_eq!(self.consumed, req.encoded_len());
        self.reset();
        ParseEvent::Complete(req)
    }
}

impl Default for RequestParser {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn encode_read_request_wire_bytes() {
        let req = Request::Read {
            address: 0x5000_1008,
        };
        assert_eq!(encode_request(&req), vec![0x01, 0x08, 0x10, 0x00, 0x50]);
    }

    #[test]
    fn encode_write_request_wire_bytes() {
        let req = Request::Write {
            address: 0x5000_1000,
            payload: 0x0000_0000,
        };
        assert_eq!(
            encode_request(&req),
            vec![0x02, 0x00, 0x10, 0x00, 0x50, 0x00, 0x00, 0x00, 0x00]
        );
    }

    #[test]
    fn encode_reset_is_single_byte() {
        assert_eq!(encode_request(&Request::Reset), vec![0x00]);
    }

    #[test]
    fn address_bytes_are_little_endian() {
        let bytes = encode_request(&Request::Read {
            address: 0x0102_0304,
        });
        assert_eq!(&bytes[1..5], &[0x04, 0x03, 0x02, 0x01]);
    }

    #[test]
    fn request_lengths_match_commands() {
        let cases = [
            (Request::Reset, 1),
            (Request::Read { address: 0 }, 5),
            (
                Request::Write {
                    address: 0,
                    payload: 0,
                },
                9,
            ),
            (Request::GetPendingIrqs, 1),
            (Request::SetTime { millis: 0 }, 5),
            (Request::Exit, 1),
        ];
        for (req, len) in cases {
            assert_eq!(encode_request(&req).len(), len);
            assert_eq!(req.encoded_len(), len);
        }
    }

    #[test]
    fn response_lengths_match_commands() {
        assert_eq!(Command::Read.response_len(), 5);
        assert_eq!(Command::Write.response_len(), 1);
        assert_eq!(Command::GetPendingIrqs.response_len(), 5);
        assert_eq!(Command::SetTime.response_len(), 1);
        assert_eq!(Command::Exit.response_len(), 1);
        assert_eq!(Command::Reset.response_len(), 0);
    }

    #[test]
    fn parser_assembles_read_frame_byte_by_byte() {
        let mut p = RequestParser::new();
        for &b in &[0x01, 0x08, 0x10, 0x00] {
            assert_eq!(p.feed(b), ParseEvent::NeedMore);
        }
        assert_eq!(
            p.feed(0x50),
            ParseEvent::Complete(Request::Read {
                address: 0x5000_1008
            })
        );
        assert!(p.is_idle());
    }

    #[test]
    fn parser_completes_reset_after_one_byte() {
        let mut p = RequestParser::new();
        assert_eq!(p.feed(0x00), ParseEvent::Complete(Request::Reset));
    }

    #[test]
    fn parser_rejects_unknown_command() {
        let mut p = RequestParser::new();
        assert_eq!(
            p.feed(0x07),
            ParseEvent::Error(ProtocolError::UnknownCommand(0x07))
        );
        assert!(p.is_idle());
        // The parser recovers: a valid frame parses right after the error.
        assert_eq!(p.feed(0x00), ParseEvent::Complete(Request::Reset));
    }

    #[test]
    fn encode_read_response_wire_bytes() {
        let status = ResponseStatus::new(Ack::Ok, false);
        assert_eq!(
            encode_response(Command::Read, status, Some(0x0000_0081)),
            vec![0x01, 0x81, 0x00, 0x00, 0x00]
        );
    }

    #[test]
    fn encode_write_ack_is_single_byte() {
        let status = ResponseStatus::new(Ack::Ok, false);
        assert_eq!(encode_response(Command::Write, status, None), vec![0x01]);
    }

    #[test]
    fn encode_status_with_irq_bit_over_not_mapped() {
        let status = ResponseStatus::new(Ack::NotMapped, true);
        assert_eq!(encode_response(Command::Write, status, None), vec![0x82]);
    }

    #[test]
    fn reset_response_is_empty() {
        let status = ResponseStatus::new(Ack::Ok, false);
        assert!(encode_response(Command::Reset, status, None).is_empty());
    }

    #[test]
    fn decode_read_response() {
        let r = decode_response(Command::Read, &[0x01, 0x81, 0x00, 0x00, 0x00]).unwrap();
        assert_eq!(r.status, ResponseStatus::new(Ack::Ok, false));
        assert_eq!(r.payload, Some(0x0000_0081));
    }

    #[test]
    fn decode_write_ack_with_irq_bit() {
        let r = decode_response(Command::Write, &[0x81]).unwrap();
        assert_eq!(r.status, ResponseStatus::new(Ack::Ok, true));
        assert_eq!(r.payload, None);
    }

    #[test]
    fn decode_rejects_unknown_ack() {
        assert_eq!(
            decode_response(Command::Write, &[0x05]),
            Err(ProtocolError::UnknownAck(0x05))
        );
    }

    #[test]
    fn decode_rejects_short_response() {
        assert_eq!(
            decode_response(Command::Read, &[0x01, 0x81]),
            Err(ProtocolError::WrongLength {
                expected: 5,
                got: 2
            })
        );
    }

    #[test]
    fn status_pack_unpack_round_trips_defined_bytes() {
        for b in 0..=u8::MAX {
            let low = b & !ResponseStatus::IRQ_BIT;
            if low <= 3 {
                assert_eq!(ResponseStatus::unpack(b).unwrap().pack(), b);
            } else {
                assert!(ResponseStatus::unpack(b).is_err());
            }
        }
    }

    #[test]
    fn irq_flag_is_independent_of_ack() {
        for ack in [
            Ack::Never,
            Ack::Ok,
            Ack::NotMapped,
            Ack::CommandNotSupported,
        ] {
            for irq in [false, true] {
                let s = ResponseStatus::new(ack, irq);
                let back = ResponseStatus::unpack(s.pack()).unwrap();
                assert_eq!(back, s);
            }
        }
    }
}
