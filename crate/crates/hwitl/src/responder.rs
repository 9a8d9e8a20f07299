//! Responder-side emulator: receive parser, mask-mapped bus dispatch,
//! response builder, and the frame watchdog.
//!
//! A [`ResponderCore`] consumes request bytes one at a time and hands back
//! the bytes to transmit. It is a single-threaded event loop by contract:
//! one core per session, timestamps injected by the caller so the watchdog
//! is deterministic under test.

use alloc::boxed::Box;
use alloc::collections::VecDeque;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::time::Duration;

use thiserror::Error;

use crate::peripherals::{EnvDevice, PeripheralModel};
use crate::protocol::{
    encode_response, Ack, Command, ParseEvent, Request, RequestParser, ResponseStatus,
};
use crate::transport::{Channel, ChannelError, Clock, LineModel, LinePacer, VirtualClock};

/// Address-decode rule: address `a` belongs to the peripheral iff
/// `(a & mask) == base`. The register offset within the peripheral is
/// `a & !mask`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusMapping {
    base: u32,
    mask: u32,
}

impl BusMapping {
    /// Requires the base to be representable under its own mask.
    pub fn new(base: u32, mask: u32) -> Result<Self, MapError> {
        if base & !mask != 0 {
            return Err(MapError::InvalidMapping { base, mask });
        }
        Ok(Self { base, mask })
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn matches(&self, addr: u32) -> bool {
        addr & self.mask == self.base
    }

    pub fn offset(&self, addr: u32) -> u32 {
        addr & !self.mask
    }

    /// Whether any address matches both mappings. Two valid mappings
    /// intersect exactly when they agree on their shared mask bits.
    pub fn overlaps(&self, other: &BusMapping) -> bool {
        self.base & other.mask == other.base & self.mask
    }
}

/// Registration errors.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("base {base:#010x} has bits outside mask {mask:#010x}")]
    InvalidMapping { base: u32, mask: u32 },
    #[error("mapping {base:#010x}/{mask:#010x} overlaps peripheral '{existing}'")]
    Overlap {
        base: u32,
        mask: u32,
        existing: String,
    },
}

/// A registered bus peripheral.
pub struct PeripheralSlot {
    name: String,
    mapping: BusMapping,
    model: Box<dyn PeripheralModel>,
    irq_line: Option<u8>,
}

impl PeripheralSlot {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mapping(&self) -> BusMapping {
        self.mapping
    }

    pub fn irq_line(&self) -> Option<u8> {
        self.irq_line
    }

    pub fn model_mut(&mut self) -> &mut dyn PeripheralModel {
        self.model.as_mut()
    }
}

/// An off-bus device living in the responder's environment, kept ticking by
/// the session and able to raise an interrupt line.
struct Attachment {
    device: Rc<RefCell<dyn EnvDevice>>,
    irq_line: Option<u8>,
}

/// What kind of bus access to dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
}

/// Per-session transaction counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub reads: u64,
    pub writes: u64,
    pub resets: u64,
    pub irq_polls: u64,
    pub set_times: u64,
    pub exits: u64,
    pub protocol_errors: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Serving,
    Exited,
}

/// Default watchdog: the parser abandons a partial frame after this much
/// silence on the line.
pub const DEFAULT_WATCHDOG: Duration = Duration::from_millis(2);

pub struct ResponderCore {
    slots: Vec<PeripheralSlot>,
    attachments: Vec<Attachment>,
    parser: RequestParser,
    watchdog: Duration,
    last_event: Duration,
    state: SessionState,
    stats: SessionStats,
}

impl ResponderCore {
    pub fn new() -> Self {
        Self {
            slots: Vec::new(),
            attachments: Vec::new(),
            parser: RequestParser::new(),
            watchdog: DEFAULT_WATCHDOG,
            last_event: Duration::ZERO,
            state: SessionState::Serving,
            stats: SessionStats::default(),
        }
    }

    pub fn set_watchdog(&mut self, timeout: Duration) {
        self.watchdog = timeout;
    }

    pub fn watchdog(&self) -> Duration {
        self.watchdog
    }

    pub fn stats(&self) -> SessionStats {
        self.stats
    }

    pub fn session_state(&self) -> SessionState {
        self.state
    }

    /// True while a frame is partially accumulated.
    pub fn mid_frame(&self) -> bool {
        !self.parser.is_idle()
    }

    pub fn slots(&self) -> impl Iterator<Item = &PeripheralSlot> {
        self.slots.iter()
    }

    /// Mutable access to a registered peripheral's model, by name.
    pub fn slot_mut(&mut self, name: &str) -> Option<&mut PeripheralSlot> {
        self.slots.iter_mut().find(|s| s.name == name)
    }

    /// Add a peripheral behind a mapping. Overlapping mappings are rejected
    /// so that at most one slot matches any address.
    pub fn register_peripheral(
        &mut self,
        name: &str,
        mapping: BusMapping,
        model: Box<dyn PeripheralModel>,
        irq_line: Option<u8>,
    ) -> Result<(), MapError> {
        if let Some(existing) = self.slots.iter().find(|s| s.mapping.overlaps(&mapping)) {
            return Err(MapError::Overlap {
                base: mapping.base,
                mask: mapping.mask,
                existing: existing.name.clone(),
            });
        }
        self.slots.push(PeripheralSlot {
            name: String::from(name),
            mapping,
            model,
            irq_line,
        });
        Ok(())
    }

    /// Attach an environment device (not bus-mapped) so it gets ticked,
    /// reset, offered `setTime`, and polled for interrupts.
    pub fn attach_device(&mut self, device: Rc<RefCell<dyn EnvDevice>>, irq_line: Option<u8>) {
        self.attachments.push(Attachment { device, irq_line });
    }

    /// Route one bus access. A matching slot answers with `Ack::Ok`;
    /// anything else is `not_mapped` with a zero read payload.
    pub fn dispatch(&mut self, kind: AccessKind, addr: u32, value: u32) -> (Ack, u32) {
        match self.slots.iter_mut().find(|s| s.mapping.matches(addr)) {
            Some(slot) => {
                let offset = slot.mapping.offset(addr);
                match kind {
                    AccessKind::Read => (Ack::Ok, slot.model.reg_read(offset)),
                    AccessKind::Write => {
                        slot.model.reg_write(offset, value);
                        (Ack::Ok, 0)
                    }
                }
            }
            None => (Ack::NotMapped, 0),
        }
    }

    /// OR of all pending interrupt flags, sampled now.
    pub fn any_pending(&self) -> bool {
        self.slots.iter().any(|s| s.model.pending_irq())
            || self
                .attachments
                .iter()
                .any(|a| a.device.borrow().pending_irq())
    }

    /// Pending-line bitmask: bit `i` set when a source on line `i` is
    /// pending.
    pub fn pending_mask(&self) -> u32 {
        let mut mask = 0u32;
        for slot in &self.slots {
            if let Some(line) = slot.irq_line {
                if slot.model.pending_irq() {
                    mask |= 1 << line;
                }
            }
        }
        for att in &self.attachments {
            if let Some(line) = att.irq_line {
                if att.device.borrow().pending_irq() {
                    mask |= 1 << line;
                }
            }
        }
        mask
    }

    /// Consume one request byte. Returns the bytes to transmit, empty when
    /// the frame is incomplete, was malformed, or the command has no
    /// response. Malformed bytes drop silently: the wire has no way to nack
    /// a command byte, so the parser resets and the initiator's deadline
    /// does the rest.
    pub fn serve_byte(&mut self, b: u8, now: Duration) -> Vec<u8> {
        if self.state == SessionState::Exited {
            return Vec::new();
        }
        // A partial frame older than the watchdog is stale: discard it and
        // let this byte start fresh.
        if self.mid_frame() && now.saturating_sub(self.last_event) >= self.watchdog {
            self.parser.reset();
        }
        self.last_event = now;
        match self.parser.feed(b) {
            ParseEvent::NeedMore => Vec::new(),
            ParseEvent::Error(_) => {
                self.stats.protocol_errors += 1;
                Vec::new()
            }
            ParseEvent::Complete(req) => {
                self.tick_all(now);
                self.execute(req)
            }
        }
    }

    /// Idle-time housekeeping: expire a stale partial frame and let
    /// time-based peripherals advance.
    pub fn watchdog_tick(&mut self, now: Duration) {
        if self.mid_frame() && now.saturating_sub(self.last_event) >= self.watchdog {
            self.parser.reset();
        }
        self.tick_all(now);
    }

    fn tick_all(&mut self, now: Duration) {
        for slot in &mut self.slots {
            slot.model.tick(now);
        }
        for att in &self.attachments {
            att.device.borrow_mut().tick(now);
        }
    }

    /// Return every peripheral and attachment to its power-on state.
    pub fn reset_all(&mut self) {
        for slot in &mut self.slots {
            slot.model.reset();
        }
        for att in &self.attachments {
            att.device.borrow_mut().reset();
        }
        self.parser.reset();
    }

    fn execute(&mut self, req: Request) -> Vec<u8> {
        match req {
            Request::Reset => {
                self.stats.resets += 1;
                self.reset_all();
                Vec::new()
            }
            Request::Read { address } => {
                self.stats.reads += 1;
                let (ack, payload) = self.dispatch(AccessKind::Read, address, 0);
                self.respond(Command::Read, ack, Some(payload))
            }
            Request::Write { address, payload } => {
                self.stats.writes += 1;
                let (ack, _) = self.dispatch(AccessKind::Write, address, payload);
                self.respond(Command::Write, ack, None)
            }
            Request::GetPendingIrqs => {
                self.stats.irq_polls += 1;
                let mask = self.pending_mask();
                let out = self.respond(Command::GetPendingIrqs, Ack::Ok, Some(mask));
                self.ack_reported(mask);
                out
            }
            Request::SetTime { millis } => {
                self.stats.set_times += 1;
                let mut accepted = false;
                for slot in &mut self.slots {
                    accepted |= slot.model.set_time(millis);
                }
                for att in &self.attachments {
                    accepted |= att.device.borrow_mut().set_time(millis);
                }
                let ack = if accepted {
                    Ack::Ok
                } else {
                    Ack::CommandNotSupported
                };
                self.respond(Command::SetTime, ack, None)
            }
            Request::Exit => {
                self.stats.exits += 1;
                let out = self.respond(Command::Exit, Ack::Ok, None);
                self.state = SessionState::Exited;
                self.reset_all();
                out
            }
        }
    }

    fn respond(&self, cmd: Command, ack: Ack, payload: Option<u32>) -> Vec<u8> {
        let status = ResponseStatus::new(ack, self.any_pending());
        encode_response(cmd, status, payload)
    }

    fn ack_reported(&mut self, mask: u32) {
        for slot in &mut self.slots {
            if let Some(line) = slot.irq_line {
                if mask & (1 << line) != 0 {
                    slot.model.irq_ack();
                }
            }
        }
        for att in &self.attachments {
            if let Some(line) = att.irq_line {
                if mask & (1 << line) != 0 {
                    att.device.borrow_mut().irq_ack();
                }
            }
        }
    }
}

impl Default for ResponderCore {
    fn default() -> Self {
        Self::new()
    }
}

/// How a session ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionOutcome {
    /// The initiator sent the `exit` command.
    Exited,
    /// The peer closed the channel between frames.
    PeerClosed,
    /// The peer closed the channel with a frame partially received.
    TruncatedFrame,
    /// The channel failed.
    ChannelFault(ChannelError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionReport {
    pub stats: SessionStats,
    pub outcome: SessionOutcome,
}

/// Serve one session: pull bytes from the channel, feed the core, transmit
/// whatever it produces, and keep the watchdog ticking while the line is
/// quiet. Returns when the initiator exits or the channel goes away.
pub fn run_session<C: Channel, K: Clock>(
    core: &mut ResponderCore,
    channel: &mut C,
    clock: &K,
) -> SessionReport {
    let tick_interval = core.watchdog().max(Duration::from_micros(100));
    let outcome = loop {
        let mut byte = [0u8; 1];
        match channel.recv_exact(&mut byte, tick_interval) {
            Ok(()) => {
                let out = core.serve_byte(byte[0], clock.now());
                if !out.is_empty() {
                    if let Err(e) = channel.send_all(&out) {
                        break SessionOutcome::ChannelFault(e);
                    }
                }
                if core.session_state() == SessionState::Exited {
                    break SessionOutcome::Exited;
                }
            }
            Err(ChannelError::DeadlineExceeded { .. }) => {
                core.watchdog_tick(clock.now());
            }
            Err(ChannelError::Closed) => {
                break if core.mid_frame() {
                    SessionOutcome::TruncatedFrame
                } else {
                    SessionOutcome::PeerClosed
                };
            }
            Err(e) => break SessionOutcome::ChannelFault(e),
        }
    };
    SessionReport {
        stats: core.stats(),
        outcome,
    }
}

/// A [`Channel`] whose far end is a [`ResponderCore`] served synchronously
/// in-process, on a shared virtual clock.
///
/// With a line model attached, every byte in either direction advances the
/// clock by one byte time, so end-to-end transaction timings can be read off
/// the clock deterministically.
pub struct ResponderChannel {
    core: ResponderCore,
    clock: VirtualClock,
    line: Option<LinePacer>,
    rx: VecDeque<u8>,
}

impl ResponderChannel {
    pub fn new(core: ResponderCore) -> Self {
        Self::with_clock(core, VirtualClock::new())
    }

    pub fn with_clock(core: ResponderCore, clock: VirtualClock) -> Self {
        Self {
            core,
            clock,
            line: None,
            rx: VecDeque::new(),
        }
    }

    pub fn with_line_model(core: ResponderCore, clock: VirtualClock, line: LineModel) -> Self {
        let mut ch = Self::with_clock(core, clock);
        ch.line = Some(LinePacer::new(line));
        ch
    }

    pub fn core(&self) -> &ResponderCore {
        &self.core
    }

    pub fn core_mut(&mut self) -> &mut ResponderCore {
        &mut self.core
    }

    pub fn clock(&self) -> VirtualClock {
        self.clock.clone()
    }

    /// Run the responder's idle housekeeping at the current virtual time.
    pub fn tick(&mut self) {
        self.core.watchdog_tick(self.clock.now());
    }
}

impl Channel for ResponderChannel {
    fn send_all(&mut self, bytes: &[u8]) -> Result<(), ChannelError> {
        for &b in bytes {
            if self.core.session_state() == SessionState::Exited {
                return Err(ChannelError::Closed);
            }
            if let Some(line) = &mut self.line {
                self.clock.advance(line.charge(1));
            }
            let out = self.core.serve_byte(b, self.clock.now());
            if !out.is_empty() {
                if let Some(line) = &mut self.line {
                    self.clock.advance(line.charge(out.len()));
                }
                self.rx.extend(out);
            }
        }
        Ok(())
    }

    fn recv_exact(&mut self, buf: &mut [u8], deadline: Duration) -> Result<(), ChannelError> {
        if self.rx.len() < buf.len() {
            if self.line.is_some() {
                self.clock.advance(deadline);
            }
            return Err(ChannelError::DeadlineExceeded {
                delivered: self.rx.len(),
                requested: buf.len(),
            });
        }
        for slot in buf.iter_mut() {
            *slot = self.rx.pop_front().expect("length checked above");
        }
        Ok(())
    }
}
