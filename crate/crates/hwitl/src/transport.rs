//! Byte-stream channels connecting initiator and responder, plus the serial
//! line timing model used when no physical link is present.
//!
//! A [`Channel`] delivers bytes in order with stream semantics and supports
//! per-call receive deadlines. Concrete OS-backed channels (TCP, local pipe,
//! serial device) live in the host companion crate; this module provides the
//! deterministic in-memory pieces.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};
use core::time::Duration;

use alloc::collections::VecDeque;
use thiserror::Error;

/// Errors surfaced by channel operations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChannelError {
    /// The peer has gone away or the channel was shut down.
    #[error("channel closed")]
    Closed,
    /// The deadline passed before `requested` bytes arrived. The `delivered`
    /// bytes that did arrive stay buffered and remain consumable.
    #[error("deadline exceeded after {delivered} of {requested} bytes")]
    DeadlineExceeded { delivered: usize, requested: usize },
    /// An OS-level fault reported by a host-backed channel.
    #[error("channel fault: {0}")]
    Device(String),
}

/// An ordered, duplicate-free byte stream with no message boundaries.
///
/// One logical user owns a channel at a time; channels may be handed between
/// threads but not shared concurrently.
pub trait Channel {
    /// Queue all bytes for in-order delivery.
    fn send_all(&mut self, bytes: &[u8]) -> Result<(), ChannelError>;

    /// Fill `buf` with exactly `buf.len()` bytes in arrival order.
    ///
    /// On [`ChannelError::DeadlineExceeded`] no bytes are consumed: whatever
    /// had arrived is still buffered for the next call.
    fn recv_exact(&mut self, buf: &mut [u8], deadline: Duration) -> Result<(), ChannelError>;
}

impl<C: Channel + ?Sized> Channel for alloc::boxed::Box<C> {
    fn send_all(&mut self, bytes: &[u8]) -> Result<(), ChannelError> {
        (**self).send_all(bytes)
    }

    fn recv_exact(&mut self, buf: &mut [u8], deadline: Duration) -> Result<(), ChannelError> {
        (**self).recv_exact(buf, deadline)
    }
}

/// A source of timestamps. Sessions and watchdogs take their notion of time
/// from here so tests can run on a virtual clock.
pub trait Clock {
    fn now(&self) -> Duration;
}

/// A manually advanced clock, shared by cloning.
///
/// Nanosecond resolution; all clones observe the same instant.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock(Arc<AtomicU64>);

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, d: Duration) {
        self.0.fetch_add(d.as_nanos() as u64, Ordering::Relaxed);
    }

    pub fn set(&self, t: Duration) {
        self.0.store(t.as_nanos() as u64, Ordering::Relaxed);
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.0.load(Ordering::Relaxed))
    }
}

/// Timing model of an asynchronous serial line: every byte occupies
/// `bits_per_byte` bit times in each direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineModel {
    /// Line rate in bits per second.
    pub baud: u32,
    /// Bits on the wire per data byte. 10 covers 8N1 (start + 8 data + stop).
    pub bits_per_byte: u32,
}

impl LineModel {
    /// 8N1 framing at the given baud rate.
    pub const fn new(baud: u32) -> Self {
        Self {
            baud,
            bits_per_byte: 10,
        }
    }

    /// Time to move `bytes` bytes across the line.
    pub fn transfer_time(&self, bytes: usize) -> Duration {
        let bits = bytes as u128 * self.bits_per_byte as u128;
        Duration::from_nanos((bits * 1_000_000_000 / self.baud as u128) as u64)
    }

    /// Time for one byte.
    pub fn byte_time(&self) -> Duration {
        self.transfer_time(1)
    }
}

/// Modeled wall time of one full request/response exchange over a serial
/// line: both directions pay per byte, nothing overlaps.
pub fn modeled_transaction_time(
    model: &LineModel,
    request_bytes: usize,
    response_bytes: usize,
) -> Duration {
    model.transfer_time(request_bytes + response_bytes)
}

/// Charges line time incrementally without accumulating rounding error:
/// after any sequence of charges the total equals
/// [`LineModel::transfer_time`] of all bytes so far.
#[derive(Debug, Clone)]
pub struct LinePacer {
    model: LineModel,
    bits: u128,
    charged_nanos: u128,
}

impl LinePacer {
    pub fn new(model: LineModel) -> Self {
        Self {
            model,
            bits: 0,
            charged_nanos: 0,
        }
    }

    /// Line time owed for the next `bytes` bytes.
    pub fn charge(&mut self, bytes: usize) -> Duration {
        self.bits += bytes as u128 * self.model.bits_per_byte as u128;
        let total = self.bits * 1_000_000_000 / self.model.baud as u128;
        let delta = total - self.charged_nanos;
        self.charged_nanos = total;
        Duration::from_nanos(delta as u64)
    }
}

/// In-memory loopback: bytes sent come back on the same endpoint, in order.
///
/// With a line model attached, each sent byte advances the shared virtual
/// clock by one byte time; receives are free (the traversal was already paid
/// for on send). A receive that cannot be satisfied burns the full deadline
/// on the virtual clock.
#[derive(Debug, Default)]
pub struct Loopback {
    queue: VecDeque<u8>,
    paced: Option<(LinePacer, VirtualClock)>,
    closed: bool,
}

impl Loopback {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_line_model(model: LineModel, clock: VirtualClock) -> Self {
        Self {
            queue: VecDeque::new(),
            paced: Some((LinePacer::new(model), clock)),
            closed: false,
        }
    }

    pub fn close(&mut self) {
        self.closed = true;
    }
}

impl Channel for Loopback {
    fn send_all(&mut self, bytes: &[u8]) -> Result<(), ChannelError> {
        if self.closed {
            return Err(ChannelError::Closed);
        }
        if let Some((pacer, clock)) = &mut self.paced {
            clock.advance(pacer.charge(bytes.len()));
        }
        self.queue.extend(bytes);
        Ok(())
    }

    fn recv_exact(&mut self, buf: &mut [u8], deadline: Duration) -> Result<(), ChannelError> {
        if self.queue.len() < buf.len() {
            if self.closed {
                return Err(ChannelError::Closed);
            }
            if let Some((_, clock)) = &self.paced {
                clock.advance(deadline);
            }
            return Err(ChannelError::DeadlineExceeded {
                delivered: self.queue.len(),
                requested: buf.len(),
            });
        }
        for slot in buf.iter_mut() {
            *slot = self.queue.pop_front().expect("length checked above");
        }
        Ok(())
    }
}

/// Which side of the link a tapped byte traveled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Initiator to responder (a request byte).
    ToResponder,
    /// Responder to initiator (a response byte).
    ToInitiator,
}

/// One observed byte with its timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapRecord {
    pub at: Duration,
    pub direction: Direction,
    pub byte: u8,
}

/// Wraps a channel on the initiator side and records every byte that crosses
/// it, timestamped against the given clock. The byte stream itself is passed
/// through untouched.
pub struct Tap<C, K> {
    inner: C,
    clock: K,
    records: Vec<TapRecord>,
}

impl<C: Channel, K: Clock> Tap<C, K> {
    pub fn new(inner: C, clock: K) -> Self {
        Self {
            inner,
            clock,
            records: Vec::new(),
        }
    }

    pub fn records(&self) -> &[TapRecord] {
        &self.records
    }

    pub fn take_records(&mut self) -> Vec<TapRecord> {
        core::mem::take(&mut self.records)
    }

    pub fn into_inner(self) -> C {
        self.inner
    }

    pub fn inner_mut(&mut self) -> &mut C {
        &mut self.inner
    }
}

impl<C: Channel, K: Clock> Channel for Tap<C, K> {
    fn send_all(&mut self, bytes: &[u8]) -> Result<(), ChannelError> {
        self.inner.send_all(bytes)?;
        let at = self.clock.now();
        self.records.extend(bytes.iter().map(|&byte| TapRecord {
            at,
            direction: Direction::ToResponder,
            byte,
        }));
        Ok(())
    }

    fn recv_exact(&mut self, buf: &mut [u8], deadline: Duration) -> Result<(), ChannelError> {
        self.inner.recv_exact(buf, deadline)?;
        let at = self.clock.now();
        self.records.extend(buf.iter().map(|&byte| TapRecord {
            at,
            direction: Direction::ToInitiator,
            byte,
        }));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn loopback_returns_sent_bytes() {
        let mut ch = Loopback::new();
        ch.send_all(&[0x01]).unwrap();
        let mut buf = [0u8; 1];
        ch.recv_exact(&mut buf, Duration::from_millis(1)).unwrap();
        assert_eq!(buf, [0x01]);
    }

    #[test]
    fn closed_loopback_rejects_send() {
        let mut ch = Loopback::new();
        ch.close();
        assert_eq!(ch.send_all(&[0x01]), Err(ChannelError::Closed));
    }

    #[test]
    fn deadline_reports_partial_and_keeps_bytes() {
        let mut ch = Loopback::new();
        ch.send_all(&[0xAA, 0xBB]).unwrap();
        let mut buf = [0u8; 5];
        assert_eq!(
            ch.recv_exact(&mut buf, Duration::from_millis(1)),
            Err(ChannelError::DeadlineExceeded {
                delivered: 2,
                requested: 5
            })
        );
        // The two delivered bytes were not dropped.
        ch.send_all(&[0xCC, 0xDD, 0xEE]).unwrap();
        ch.recv_exact(&mut buf, Duration::from_millis(1)).unwrap();
        assert_eq!(buf, [0xAA, 0xBB, 0xCC, 0xDD, 0xEE]);
    }

    #[test]
    fn line_model_transaction_times() {
        let m = LineModel::new(115_200);
        // 10 bytes of traffic is 100 bit times: 868.055 us.
        assert_eq!(
            modeled_transaction_time(&m, 5, 5),
            Duration::from_nanos(868_055)
        );
        assert_eq!(
            modeled_transaction_time(&m, 9, 1),
            Duration::from_nanos(868_055)
        );
        assert_eq!(modeled_transaction_time(&m, 0, 0), Duration::ZERO);
    }

    #[test]
    fn paced_loopback_advances_clock_per_byte() {
        let clock = VirtualClock::new();
        let mut ch = Loopback::with_line_model(LineModel::new(115_200), clock.clone());
        ch.send_all(&[0u8; 10]).unwrap();
        let elapsed = clock.now();
        assert!(elapsed >= Duration::from_micros(868));
        assert!(elapsed < Duration::from_micros(869));
        let mut buf = [0u8; 10];
        ch.recv_exact(&mut buf, Duration::from_millis(1)).unwrap();
        assert_eq!(clock.now(), elapsed);
    }

    #[test]
    fn tap_records_both_directions() {
        let clock = VirtualClock::new();
        let mut ch = Tap::new(Loopback::new(), clock.clone());
        ch.send_all(&[0x01, 0x02]).unwrap();
        clock.advance(Duration::from_micros(5));
        let mut buf = [0u8; 2];
        ch.recv_exact(&mut buf, Duration::from_millis(1)).unwrap();
        let recs = ch.records();
        assert_eq!(recs.len(), 4);
        assert_eq!(recs[0].direction, Direction::ToResponder);
        assert_eq!(recs[3].direction, Direction::ToInitiator);
        assert_eq!(recs[3].at, Duration::from_micros(5));
        assert_eq!(
            recs.iter().map(|r| r.byte).collect::<Vec<_>>(),
            vec![0x01, 0x02, 0x01, 0x02]
        );
    }

    proptest::proptest! {
        #[test]
        fn loopback_delivers_any_sequence_unchanged(data in proptest::collection::vec(proptest::prelude::any::<u8>(), 0..512)) {
            let mut ch = Loopback::new();
            ch.send_all(&data).unwrap();
            let mut buf = vec![0u8; data.len()];
            if !data.is_empty() {
                ch.recv_exact(&mut buf, Duration::from_millis(1)).unwrap();
            }
            proptest::prop_assert_eq!(buf, data);
        }
    }
}
