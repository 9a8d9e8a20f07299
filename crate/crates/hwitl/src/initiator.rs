//! Initiator-side bridge: the client that makes a remote responder look
//! like a local memory-mapped peripheral.
//!
//! The bridge serializes one request/response exchange at a time, remaps
//! addresses by a fixed base, accounts per-access bus delays, and handles
//! sub-word accesses with the zero-extended temporary-word scheme of the
//! reference transport: a short write widens into the low bytes of a zeroed
//! 32-bit word, a short read performs a full word read and hands back the
//! low bytes.

use alloc::boxed::Box;
use core::time::Duration;

use thiserror::Error;

use crate::protocol::{
    decode_response, encode_request, Ack, DecodedResponse, ProtocolError, Request,
};
use crate::transport::{Channel, ChannelError, VirtualClock};

/// Default time the bridge waits for a response before declaring the
/// transaction failed. Generous against a ~1 ms transaction, but finite so
/// a hung responder surfaces as an error.
pub const DEFAULT_RESPONSE_DEADLINE: Duration = Duration::from_millis(500);

/// How the bridge realizes the bit-bang delay helper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimePolicy {
    /// Delays sleep in host time; pick this when the far side of the pins
    /// lives in real time.
    #[default]
    WallClockLocked,
    /// Delays advance a virtual clock instead of sleeping.
    SimulationTime,
}

/// Diagnostic detail for failed accesses.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Fault {
    #[error("transport: {0}")]
    Transport(#[from] ChannelError),
    #[error("protocol: {0}")]
    Protocol(#[from] ProtocolError),
    /// The reserved ack code 0 arrived; treated as a line-level fault.
    #[error("responder acked 'never'")]
    NeverAck,
    #[error("command not supported by responder")]
    NotSupported,
    #[error("buffer length {0} not one of 1, 2, 4")]
    InvalidLength(usize),
}

/// Outcome classification mirroring a transaction-level bus return code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessStatus {
    Ok,
    /// The responder had no peripheral at the address.
    AddressError,
    /// Everything else: transport faults, protocol faults, unsupported
    /// commands, the reserved `never` ack.
    GenericError,
}

/// Result of one bus access through the bridge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusAccessResult {
    pub status: AccessStatus,
    /// Read payload or pending-IRQ bitmask; 0 for writes and failures.
    pub data: u32,
    /// The bridge's total accounted bus delay after this access.
    pub accumulated_delay: Duration,
    /// Present exactly when `status == GenericError`.
    pub fault: Option<Fault>,
}

impl BusAccessResult {
    pub fn is_ok(&self) -> bool {
        self.status == AccessStatus::Ok
    }
}

type IrqCallback = Box<dyn FnMut(u32) + Send>;
type WallSleeper = fn(Duration);

pub struct InitiatorBridge<C> {
    channel: C,
    base_address: u32,
    read_delay: Duration,
    write_delay: Duration,
    response_deadline: Duration,
    accumulated_delay: Duration,
    time_policy: TimePolicy,
    wall_sleeper: Option<WallSleeper>,
    sim_clock: Option<VirtualClock>,
    irq_callback: Option<IrqCallback>,
    last_pending: u32,
    transactions: u64,
}

impl<C: Channel> InitiatorBridge<C> {
    pub fn new(channel: C) -> Self {
        Self {
            channel,
            base_address: 0,
            read_delay: Duration::ZERO,
            write_delay: Duration::ZERO,
            response_deadline: DEFAULT_RESPONSE_DEADLINE,
            accumulated_delay: Duration::ZERO,
            time_policy: TimePolicy::default(),
            wall_sleeper: None,
            sim_clock: None,
            irq_callback: None,
            last_pending: 0,
            transactions: 0,
        }
    }

    /// Offset added to every access before it goes on the wire.
    pub fn set_base_address(&mut self, base: u32) {
        self.base_address = base;
    }

    /// Per-access delays accounted to `accumulated_delay`.
    pub fn set_delays(&mut self, read: Duration, write: Duration) {
        self.read_delay = read;
        self.write_delay = write;
    }

    pub fn set_response_deadline(&mut self, deadline: Duration) {
        self.response_deadline = deadline;
    }

    pub fn set_time_policy(&mut self, policy: TimePolicy) {
        self.time_policy = policy;
    }

    /// Host-time sleep function used under [`TimePolicy::WallClockLocked`].
    pub fn set_wall_sleeper(&mut self, sleeper: WallSleeper) {
        self.wall_sleeper = Some(sleeper);
    }

    /// Clock advanced by delays under [`TimePolicy::SimulationTime`].
    pub fn set_sim_clock(&mut self, clock: VirtualClock) {
        self.sim_clock = Some(clock);
    }

    /// Invoked with the pending-line bitmask whenever a poll returns a
    /// nonzero mask.
    pub fn set_irq_callback(&mut self, callback: impl FnMut(u32) + Send + 'static) {
        self.irq_callback = Some(Box::new(callback));
    }

    pub fn accumulated_delay(&self) -> Duration {
        self.accumulated_delay
    }

    /// Completed wire exchanges so far (responses received, plus resets).
    pub fn transaction_count(&self) -> u64 {
        self.transactions
    }

    /// Bitmask from the most recent IRQ poll.
    pub fn last_pending(&self) -> u32 {
        self.last_pending
    }

    pub fn channel_mut(&mut self) -> &mut C {
        &mut self.channel
    }

    pub fn into_channel(self) -> C {
        self.channel
    }

    /// One full exchange. Exactly one transaction is in flight at any time;
    /// the `&mut self` receiver is the serialization gate.
    fn transact(&mut self, req: Request) -> Result<DecodedResponse, Fault> {
        let wire = encode_request(&req);
        self.channel.send_all(&wire)?;
        let cmd = req.command();
        let n = cmd.response_len();
        if n == 0 {
            // Reset: fire and forget.
            self.transactions += 1;
            return Ok(DecodedResponse {
                status: crate::protocol::ResponseStatus::new(Ack::Ok, false),
                payload: None,
            });
        }
        let mut buf = [0u8; crate::protocol::MAX_RESPONSE_LEN];
        self.channel
            .recv_exact(&mut buf[..n], self.response_deadline)?;
        let resp = decode_response(cmd, &buf[..n])?;
        self.transactions += 1;
        if resp.status.ack == Ack::Never {
            return Err(Fault::NeverAck);
        }
        Ok(resp)
    }

    fn failed(&self, fault: Fault) -> BusAccessResult {
        BusAccessResult {
            status: AccessStatus::GenericError,
            data: 0,
            accumulated_delay: self.accumulated_delay,
            fault: Some(fault),
        }
    }

    /// Map an acked exchange onto a bus result, charging `delay` for the
    /// completed exchange.
    fn settle(&mut self, resp: DecodedResponse, delay: Duration) -> BusAccessResult {
        self.accumulated_delay += delay;
        let (status, fault) = match resp.status.ack {
            Ack::Ok => (AccessStatus::Ok, None),
            Ack::NotMapped => (AccessStatus::AddressError, None),
            Ack::CommandNotSupported => (AccessStatus::GenericError, Some(Fault::NotSupported)),
            Ack::Never => unreachable!("filtered in transact"),
        };
        BusAccessResult {
            data: if status == AccessStatus::Ok {
                resp.payload.unwrap_or(0)
            } else {
                0
            },
            status,
            accumulated_delay: self.accumulated_delay,
            fault,
        }
    }

    /// Read the 32-bit word at `base_address + addr`.
    pub fn read(&mut self, addr: u32) -> BusAccessResult {
        let req = Request::Read {
            address: self.base_address.wrapping_add(addr),
        };
        match self.transact(req) {
            Ok(resp) => self.settle(resp, self.read_delay),
            Err(fault) => self.failed(fault),
        }
    }

    /// Write the 32-bit word at `base_address + addr`.
    pub fn write(&mut self, addr: u32, value: u32) -> BusAccessResult {
        let req = Request::Write {
            address: self.base_address.wrapping_add(addr),
            payload: value,
        };
        match self.transact(req) {
            Ok(resp) => self.settle(resp, self.write_delay),
            Err(fault) => self.failed(fault),
        }
    }

    /// Sub-word read: performs a full 32-bit read and copies the low
    /// `buf.len()` bytes (little-endian order) into `buf`.
    pub fn read_buf(&mut self, addr: u32, buf: &mut [u8]) -> BusAccessResult {
        if !matches!(buf.len(), 1 | 2 | 4) {
            return self.failed(Fault::InvalidLength(buf.len()));
        }
        let result = self.read(addr);
        if result.is_ok() {
            let bytes = result.data.to_le_bytes();
            buf.copy_from_slice(&bytes[..buf.len()]);
        }
        result
    }

    /// Sub-word write: zero-extends `buf` into the low bytes of a 32-bit
    /// word and writes the full word. The upper register bytes are
    /// clobbered with zeros; the protocol always carries 4 payload bytes.
    pub fn write_buf(&mut self, addr: u32, buf: &[u8]) -> BusAccessResult {
        if !matches!(buf.len(), 1 | 2 | 4) {
            return self.failed(Fault::InvalidLength(buf.len()));
        }
        let mut bytes = [0u8; 4];
        bytes[..buf.len()].copy_from_slice(buf);
        self.write(addr, u32::from_le_bytes(bytes))
    }

    /// Send the one-byte reset. No response follows; the responder is back
    /// in its initial state afterwards. The locally cached pending bitmask
    /// is cleared.
    pub fn reset(&mut self) -> BusAccessResult {
        match self.transact(Request::Reset) {
            Ok(_) => {
                self.last_pending = 0;
                BusAccessResult {
                    status: AccessStatus::Ok,
                    data: 0,
                    accumulated_delay: self.accumulated_delay,
                    fault: None,
                }
            }
            Err(fault) => self.failed(fault),
        }
    }

    /// Ask the responder for its pending-interrupt bitmask. On success the
    /// IRQ callback fires if the mask is nonzero.
    pub fn poll_pending_irqs(&mut self) -> BusAccessResult {
        match self.transact(Request::GetPendingIrqs) {
            Ok(resp) => {
                let result = self.settle(resp, Duration::ZERO);
                if result.is_ok() {
                    self.last_pending = result.data;
                    if result.data != 0 {
                        if let Some(cb) = self.irq_callback.as_mut() {
                            cb(result.data);
                        }
                    }
                }
                result
            }
            Err(fault) => self.failed(fault),
        }
    }

    /// Push a wall-time millisecond timestamp to the responder. Responders
    /// without a taker ack `command_not_supported`, which surfaces as a
    /// generic error carrying [`Fault::NotSupported`].
    pub fn set_time(&mut self, millis: u32) -> BusAccessResult {
        match self.transact(Request::SetTime { millis }) {
            Ok(resp) => self.settle(resp, Duration::ZERO),
            Err(fault) => self.failed(fault),
        }
    }

    /// Ask the responder to end the session.
    pub fn exit(&mut self) -> BusAccessResult {
        match self.transact(Request::Exit) {
            Ok(resp) => self.settle(resp, Duration::ZERO),
            Err(fault) => self.failed(fault),
        }
    }

    /// The bit-bang timing helper: sleeps or advances virtual time per the
    /// configured policy. With no sleeper or clock installed it is a no-op.
    pub fn delay(&mut self, d: Duration) {
        match self.time_policy {
            TimePolicy::WallClockLocked => {
                if let Some(sleep) = self.wall_sleeper {
                    sleep(d);
                }
            }
            TimePolicy::SimulationTime => {
                if let Some(clock) = &self.sim_clock {
                    clock.advance(d);
                }
            }
        }
    }

    pub fn delay_microseconds(&mut self, us: u32) {
        self.delay(Duration::from_micros(us as u64));
    }
}
