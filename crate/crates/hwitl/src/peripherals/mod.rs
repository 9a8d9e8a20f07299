//! Register-accurate peripheral models hosted by the responder emulator.
//!
//! A [`PeripheralModel`] sits behind a bus mapping and answers 32-bit
//! register reads and writes at offsets within its window. Devices that are
//! not on the bus at all, such as a clock chip wired to GPIO pins, implement
//! only [`EnvDevice`] and hang off the responder as attachments.

use alloc::sync::Arc;
use core::sync::atomic::{AtomicU32, Ordering};
use core::time::Duration;

mod gcd;
mod gpio;
mod rtc;

pub use gcd::{subtraction_gcd, GcdAccelerator, GcdRun};
pub use gpio::{GpioBank, PinHook};
pub use rtc::{rtc_on_bank, RtcPinHook, RtcPins, ThreeWireRtc};

/// Behavior shared by everything the responder hosts: bus peripherals and
/// off-bus environment devices alike.
pub trait EnvDevice {
    /// Return to power-on state. Invoked by the protocol `reset` command.
    fn reset(&mut self);

    /// Observe the passage of session time. `now` is monotonic within a
    /// session; models must tolerate arbitrary gaps.
    fn tick(&mut self, _now: Duration) {}

    /// Whether this device currently has an interrupt pending.
    fn pending_irq(&self) -> bool {
        false
    }

    /// The pending interrupt was reported in a `getPendingIRQs` bitmask.
    fn irq_ack(&mut self) {}

    /// Offered the wall-time timestamp from a `setTime` command. Return true
    /// to acknowledge; the default declines.
    fn set_time(&mut self, _millis: u32) -> bool {
        false
    }
}

/// A bus-mapped peripheral: [`EnvDevice`] plus a 32-bit register file.
///
/// Reads of offsets a model does not define return 0; writes to them are
/// ignored. The mapping has already claimed the address, so refusing with
/// `not_mapped` would be wrong.
pub trait PeripheralModel: EnvDevice {
    fn reg_read(&mut self, offset: u32) -> u32;
    fn reg_write(&mut self, offset: u32, value: u32);
}

/// Single 32-bit latch register at offset 0, the on-board LED word.
#[derive(Debug, Default)]
pub struct InternalLed {
    val: u32,
}

impl InternalLed {
    pub const VAL_OFFSET: u32 = 0x0;

    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self) -> u32 {
        self.val
    }
}

impl EnvDevice for InternalLed {
    fn reset(&mut self) {
        self.val = 0;
    }
}

impl PeripheralModel for InternalLed {
    fn reg_read(&mut self, offset: u32) -> u32 {
        if offset == Self::VAL_OFFSET {
            self.val
        } else {
            0
        }
    }

    fn reg_write(&mut self, offset: u32, value: u32) {
        if offset == Self::VAL_OFFSET {
            self.val = value;
        }
    }
}

/// Placeholder occupying the UART slot of the default memory map: all reads
/// return 0, writes are accepted and discarded.
#[derive(Debug, Default)]
pub struct UartStub;

impl UartStub {
    pub fn new() -> Self {
        Self
    }
}

impl EnvDevice for UartStub {
    fn reset(&mut self) {}
}

impl PeripheralModel for UartStub {
    fn reg_read(&mut self, _offset: u32) -> u32 {
        0
    }

    fn reg_write(&mut self, _offset: u32, _value: u32) {}
}

/// Pin levels shared between a GPIO bank and the outside world, safe to poke
/// from another thread while a session runs.
///
/// `levels` is what the environment presents to the bank's input sampler;
/// `driven`/`driven_mask` mirror what the bank last drove out.
#[derive(Debug, Clone, Default)]
pub struct PinBoard {
    levels: Arc<AtomicU32>,
    driven: Arc<AtomicU32>,
    driven_mask: Arc<AtomicU32>,
}

impl PinBoard {
    pub fn new(initial_levels: u32) -> Self {
        let board = Self::default();
        board.set_levels(initial_levels);
        board
    }

    /// Set the levels the environment presents on the pins.
    pub fn set_levels(&self, levels: u32) {
        self.levels.store(levels, Ordering::Relaxed);
    }

    pub fn levels(&self) -> u32 {
        self.levels.load(Ordering::Relaxed)
    }

    /// Levels the bank currently drives, already masked to output pins.
    pub fn driven(&self) -> u32 {
        self.driven.load(Ordering::Relaxed) & self.driven_mask.load(Ordering::Relaxed)
    }

    pub fn driven_mask(&self) -> u32 {
        self.driven_mask.load(Ordering::Relaxed)
    }
}

impl PinHook for PinBoard {
    fn drive(&mut self, levels: u32, direction: u32) {
        self.driven.store(levels, Ordering::Relaxed);
        self.driven_mask.store(direction, Ordering::Relaxed);
    }

    fn sample(&mut self) -> u32 {
        self.levels.load(Ordering::Relaxed)
    }
}
