//! Pin-level model of a 3-wire real-time clock, the kind that gets
//! bit-banged over GPIO rather than sitting on the bus.
//!
//! The interface is a simplified DS1302-style shift protocol on three pins:
//! CE (chip enable), SCLK (shift clock), and a bidirectional IO line. While
//! CE is high the chip latches one bit per SCLK rising edge. The first eight
//! bits form a command byte, LSB first: bit 0 is the read flag, bits 1..=5
//! address a register. A write command is followed by eight more latched
//! bits of data; after a read command the chip shifts the addressed register
//! out on SCLK falling edges, LSB first. Dropping CE aborts any transfer.
//!
//! Registers (single-byte, BCD):
//!
//! | addr | register |
//! |------|----------|
//! | 0    | seconds  |
//! | 1    | minutes  |
//! | 2    | hours    |
//!
//! The clock keeps running across the protocol `reset` command, the way a
//! battery-backed part on the bench would; only the shift interface state
//! and the pending tick flag are cleared.

use super::{EnvDevice, GpioBank, PinHook};
use alloc::boxed::Box;
use alloc::rc::Rc;
use core::cell::RefCell;
use core::time::Duration;

const SECONDS_PER_DAY: u64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ShiftState {
    Idle,
    Command {
        bits: u8,
        latch: u8,
    },
    WriteData {
        addr: u8,
        bits: u8,
        latch: u8,
    },
    ReadData {
        shift: u8,
        bits: u8,
    },
    /// Transfer finished; wait for CE to drop.
    Done,
}

#[derive(Debug)]
pub struct ThreeWireRtc {
    seconds_of_day: u32,
    frac_nanos: u64,
    last_tick: Option<Duration>,
    state: ShiftState,
    prev_ce: bool,
    prev_sclk: bool,
    io_out: bool,
    tick_pending: bool,
}

impl ThreeWireRtc {
    pub const REG_SECONDS: u8 = 0;
    pub const REG_MINUTES: u8 = 1;
    pub const REG_HOURS: u8 = 2;

    pub fn new() -> Self {
        Self {
            seconds_of_day: 0,
            frac_nanos: 0,
            last_tick: None,
            state: ShiftState::Idle,
            prev_ce: false,
            prev_sclk: false,
            io_out: false,
            tick_pending: false,
        }
    }

    /// Current time as seconds since midnight.
    pub fn seconds_of_day(&self) -> u32 {
        self.seconds_of_day
    }

    /// Drive the three wires to new levels. Edges are detected internally,
    /// so calling this without any change is harmless. Returns the level the
    /// chip presents on IO.
    pub fn clock_edge(&mut self, ce: bool, sclk: bool, io_in: bool) -> bool {
        if !ce {
            self.state = ShiftState::Idle;
        } else {
            let rising = sclk && !self.prev_sclk;
            let falling = !sclk && self.prev_sclk;
            if rising {
                self.on_rising(io_in);
            } else if falling {
                self.on_falling();
            }
        }
        self.prev_ce = ce;
        self.prev_sclk = sclk;
        self.io_out
    }

    fn on_rising(&mut self, io_in: bool) {
        match self.state {
            ShiftState::Idle => {
                self.state = ShiftState::Command {
                    bits: 1,
                    latch: io_in as u8,
                };
            }
            ShiftState::Command { bits, latch } => {
                let latch = latch | ((io_in as u8) << bits);
                let bits = bits + 1;
                if bits < 8 {
                    self.state = ShiftState::Command { bits, latch };
                } else {
                    let addr = (latch >> 1) & 0x1F;
                    if latch & 1 != 0 {
                        self.state = ShiftState::ReadData {
                            shift: self.reg_value(addr),
                            bits: 0,
                        };
                    } else {
                        self.state = ShiftState::WriteData {
                            addr,
                            bits: 0,
                            latch: 0,
                        };
                    }
                }
            }
            ShiftState::WriteData { addr, bits, latch } => {
                let latch = latch | ((io_in as u8) << bits);
                let bits = bits + 1;
                if bits < 8 {
                    self.state = ShiftState::WriteData { addr, bits, latch };
                } else {
                    self.write_reg(addr, latch);
                    self.state = ShiftState::Done;
                }
            }
            // Output phase advances on falling edges only.
            ShiftState::ReadData { .. } | ShiftState::Done => {}
        }
    }

    fn on_falling(&mut self) {
        if let ShiftState::ReadData { shift, bits } = self.state {
            self.io_out = shift & 1 != 0;
            let bits = bits + 1;
            if bits < 8 {
                self.state = ShiftState::ReadData {
                    shift: shift >> 1,
                    bits,
                };
            } else {
                self.state = ShiftState::Done;
            }
        }
    }

    fn reg_value(&self, addr: u8) -> u8 {
        let s = self.seconds_of_day;
        match addr {
            Self::REG_SECONDS => to_bcd((s % 60) as u8),
            Self::REG_MINUTES => to_bcd((s / 60 % 60) as u8),
            Self::REG_HOURS => to_bcd((s / 3600) as u8),
            _ => 0,
        }
    }

    fn write_reg(&mut self, addr: u8, value: u8) {
        let Some(v) = from_bcd(value) else { return };
        let (sec, min, hour) = (
            self.seconds_of_day % 60,
            self.seconds_of_day / 60 % 60,
            self.seconds_of_day / 3600,
        );
        let (sec, min, hour) = match addr {
            Self::REG_SECONDS if v < 60 => (v as u32, min, hour),
            Self::REG_MINUTES if v < 60 => (sec, v as u32, hour),
            Self::REG_HOURS if v < 24 => (sec, min, v as u32),
            // Out-of-range values and unknown registers are ignored.
            _ => return,
        };
        self.seconds_of_day = hour * 3600 + min * 60 + sec;
        self.frac_nanos = 0;
    }
}

impl Default for ThreeWireRtc {
    fn default() -> Self {
        Self::new()
    }
}

impl EnvDevice for ThreeWireRtc {
    fn reset(&mut self) {
        self.state = ShiftState::Idle;
        self.io_out = false;
        self.tick_pending = false;
    }

    fn tick(&mut self, now: Duration) {
        let last = self.last_tick.replace(now).unwrap_or(now);
        let elapsed = now.saturating_sub(last);
        let total = self.frac_nanos + elapsed.as_nanos() as u64;
        let whole = total / 1_000_000_000;
        self.frac_nanos = total % 1_000_000_000;
        if whole > 0 {
            self.seconds_of_day = ((self.seconds_of_day as u64 + whole) % SECONDS_PER_DAY) as u32;
            self.tick_pending = true;
        }
    }

    fn pending_irq(&self) -> bool {
        self.tick_pending
    }

    fn irq_ack(&mut self) {
        self.tick_pending = false;
    }

    fn set_time(&mut self, millis: u32) -> bool {
        let total = millis as u64;
        self.seconds_of_day = ((total / 1000) % SECONDS_PER_DAY) as u32;
        self.frac_nanos = (total % 1000) * 1_000_000;
        true
    }
}

fn to_bcd(v: u8) -> u8 {
    debug_assert!(v < 100);
    (v / 10) << 4 | (v % 10)
}

fn from_bcd(b: u8) -> Option<u8> {
    let (hi, lo) = (b >> 4, b & 0xF);
    if hi > 9 || lo > 9 {
        return None;
    }
    Some(hi * 10 + lo)
}

/// Which GPIO bank bits the three wires are soldered to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RtcPins {
    pub ce: u8,
    pub sclk: u8,
    pub io: u8,
}

impl Default for RtcPins {
    fn default() -> Self {
        Self {
            ce: 0,
            sclk: 1,
            io: 2,
        }
    }
}

/// Adapter wiring a shared [`ThreeWireRtc`] to a GPIO bank's pin hook.
///
/// Pins the bank configures as outputs carry the bank's levels; the IO pin
/// falls back to the chip's driver when the bank leaves it as input. Any
/// other undriven pin reads low.
pub struct RtcPinHook {
    rtc: Rc<RefCell<ThreeWireRtc>>,
    pins: RtcPins,
}

impl RtcPinHook {
    pub fn new(rtc: Rc<RefCell<ThreeWireRtc>>, pins: RtcPins) -> Self {
        Self { rtc, pins }
    }
}

impl PinHook for RtcPinHook {
    fn drive(&mut self, levels: u32, direction: u32) {
        let mut rtc = self.rtc.borrow_mut();
        let pin = |bit: u8| -> bool {
            let mask = 1u32 << bit;
            if direction & mask != 0 {
                levels & mask != 0
            } else if bit == self.pins.io {
                rtc.io_out
            } else {
                false
            }
        };
        let (ce, sclk, io) = (pin(self.pins.ce), pin(self.pins.sclk), pin(self.pins.io));
        rtc.clock_edge(ce, sclk, io);
    }

    fn sample(&mut self) -> u32 {
        (self.rtc.borrow().io_out as u32) << self.pins.io
    }
}

/// Solder an RTC onto `bank` and hand back the shared chip for attaching to
/// a responder and for test inspection.
pub fn rtc_on_bank(bank: &mut GpioBank, pins: RtcPins) -> Rc<RefCell<ThreeWireRtc>> {
    let rtc = Rc::new(RefCell::new(ThreeWireRtc::new()));
    bank.set_hook(Box::new(RtcPinHook::new(rtc.clone(), pins)));
    rtc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::peripherals::PeripheralModel;

    struct Wire {
        rtc: ThreeWireRtc,
        ce: bool,
        sclk: bool,
        io: bool,
    }

    impl Wire {
        fn new(rtc: ThreeWireRtc) -> Self {
            Self {
                rtc,
                ce: false,
                sclk: false,
                io: false,
            }
        }

        fn apply(&mut self) -> bool {
            self.rtc.clock_edge(self.ce, self.sclk, self.io)
        }

        fn write_byte(&mut self, byte: u8) {
            for k in 0..8 {
                self.io = byte >> k & 1 != 0;
                self.apply();
                self.sclk = true;
                self.apply();
                self.sclk = false;
                self.apply();
            }
        }

        fn read_byte(&mut self) -> u8 {
            let mut out = 0u8;
            for k in 0..8 {
                if self.apply() {
                    out |= 1 << k;
                }
                self.sclk = true;
                self.apply();
                self.sclk = false;
                self.apply();
            }
            out
        }

        fn transfer_write(&mut self, addr: u8, data: u8) {
            self.ce = true;
            self.apply();
            self.write_byte(addr << 1);
            self.write_byte(data);
            self.ce = false;
            self.sclk = false;
            self.apply();
        }

        fn transfer_read(&mut self, addr: u8) -> u8 {
            self.ce = true;
            self.apply();
            self.write_byte(addr << 1 | 1);
            let v = self.read_byte();
            self.ce = false;
            self.sclk = false;
            self.apply();
            v
        }
    }

    #[test]
    fn write_then_read_seconds_round_trips() {
        let mut w = Wire::new(ThreeWireRtc::new());
        w.transfer_write(ThreeWireRtc::REG_SECONDS, 0x30);
        assert_eq!(w.transfer_read(ThreeWireRtc::REG_SECONDS), 0x30);
    }

    #[test]
    fn ce_drop_mid_byte_aborts_without_register_change() {
        let mut w = Wire::new(ThreeWireRtc::new());
        w.transfer_write(ThreeWireRtc::REG_SECONDS, 0x15);
        // Start a second write but drop CE after three data bits.
        w.ce = true;
        w.apply();
        w.write_byte(ThreeWireRtc::REG_SECONDS << 1);
        for k in 0..3 {
            w.io = 0x42 >> k & 1 != 0;
            w.apply();
            w.sclk = true;
            w.apply();
            w.sclk = false;
            w.apply();
        }
        w.ce = false;
        w.apply();
        assert_eq!(w.transfer_read(ThreeWireRtc::REG_SECONDS), 0x15);
    }

    /// One-second BCD stepper, independent of the seconds-of-day arithmetic
    /// inside the model.
    struct BcdClock {
        sec: u8,
        min: u8,
        hour: u8,
    }

    impl BcdClock {
        fn step(&mut self) {
            self.sec += 1;
            if self.sec == 60 {
                self.sec = 0;
                self.min += 1;
            }
            if self.min == 60 {
                self.min = 0;
                self.hour += 1;
            }
            if self.hour == 24 {
                self.hour = 0;
            }
        }
    }

    #[test]
    fn sixty_second_advance_wraps_seconds_with_minute_carry() {
        let mut rtc = ThreeWireRtc::new();
        rtc.set_time(0);
        rtc.tick(Duration::ZERO);
        rtc.tick(Duration::from_secs(60));

        let mut oracle = BcdClock {
            sec: 0,
            min: 0,
            hour: 0,
        };
        for _ in 0..60 {
            oracle.step();
        }
        assert_eq!(rtc.reg_value(ThreeWireRtc::REG_SECONDS), to_bcd(oracle.sec));
        assert_eq!(rtc.reg_value(ThreeWireRtc::REG_MINUTES), to_bcd(oracle.min));
        assert_eq!(oracle.sec, 0);
        assert_eq!(oracle.min, 1);
    }

    #[test]
    fn bcd_stepper_agrees_at_hour_and_day_boundaries() {
        for target in [59u64, 60, 3_599, 3_600, 86_399, 86_400, 90_061] {
            let mut rtc = ThreeWireRtc::new();
            rtc.set_time(0);
            rtc.tick(Duration::ZERO);
            rtc.tick(Duration::from_secs(target));

            let mut oracle = BcdClock {
                sec: 0,
                min: 0,
                hour: 0,
            };
            for _ in 0..target {
                oracle.step();
            }
            assert_eq!(
                (
                    rtc.reg_value(ThreeWireRtc::REG_HOURS),
                    rtc.reg_value(ThreeWireRtc::REG_MINUTES),
                    rtc.reg_value(ThreeWireRtc::REG_SECONDS),
                ),
                (to_bcd(oracle.hour), to_bcd(oracle.min), to_bcd(oracle.sec)),
                "after {target} seconds"
            );
        }
    }

    #[test]
    fn set_time_lands_on_the_millisecond() {
        let mut rtc = ThreeWireRtc::new();
        assert!(rtc.set_time(1000));
        assert_eq!(rtc.seconds_of_day(), 1);
        assert_eq!(rtc.reg_value(ThreeWireRtc::REG_SECONDS), 0x01);
    }

    #[test]
    fn tick_sets_pending_and_ack_clears_it() {
        let mut rtc = ThreeWireRtc::new();
        rtc.tick(Duration::ZERO);
        assert!(!rtc.pending_irq());
        rtc.tick(Duration::from_millis(400));
        assert!(!rtc.pending_irq());
        rtc.tick(Duration::from_millis(1100));
        assert!(rtc.pending_irq());
        rtc.irq_ack();
        assert!(!rtc.pending_irq());
    }

    #[test]
    fn protocol_reset_keeps_the_time() {
        let mut rtc = ThreeWireRtc::new();
        rtc.set_time(12_000);
        rtc.reset();
        assert_eq!(rtc.seconds_of_day(), 12);
    }

    #[test]
    fn invalid_bcd_write_is_ignored() {
        let mut w = Wire::new(ThreeWireRtc::new());
        w.transfer_write(ThreeWireRtc::REG_SECONDS, 0x30);
        w.transfer_write(ThreeWireRtc::REG_SECONDS, 0x7A);
        w.transfer_write(ThreeWireRtc::REG_SECONDS, 0x99); // BCD but >= 60
        assert_eq!(w.transfer_read(ThreeWireRtc::REG_SECONDS), 0x30);
    }

    #[test]
    fn pin_hook_drives_the_protocol_through_a_bank() {
        let mut bank = GpioBank::new();
        let rtc = rtc_on_bank(&mut bank, RtcPins::default());
        rtc.borrow_mut().set_time(45_000); // 45 seconds past midnight

        let pins = RtcPins::default();
        let bit = |p: u8| 1u32 << p;

        // All three pins start as outputs, levels low.
        bank.reg_write(
            GpioBank::DIRECTION_OFFSET,
            bit(pins.ce) | bit(pins.sclk) | bit(pins.io),
        );
        bank.reg_write(GpioBank::OUTPUT_OFFSET, 0);

        let mut level = 0u32;
        let set = |bank: &mut GpioBank, mask: u32, on: bool, level: &mut u32| {
            if on {
                *level |= mask;
            } else {
                *level &= !mask;
            }
            bank.reg_write(GpioBank::OUTPUT_OFFSET, *level);
        };

        set(&mut bank, bit(pins.ce), true, &mut level);
        // Command 0x01: read seconds.
        for k in 0..8 {
            set(&mut bank, bit(pins.io), 0x01 >> k & 1 != 0, &mut level);
            set(&mut bank, bit(pins.sclk), true, &mut level);
            set(&mut bank, bit(pins.sclk), false, &mut level);
        }
        // Release IO so the chip can drive it.
        bank.reg_write(GpioBank::DIRECTION_OFFSET, bit(pins.ce) | bit(pins.sclk));
        let mut out = 0u8;
        for k in 0..8 {
            if bank.reg_read(GpioBank::INPUT_OFFSET) & bit(pins.io) != 0 {
                out |= 1 << k;
            }
            set(&mut bank, bit(pins.sclk), true, &mut level);
            set(&mut bank, bit(pins.sclk), false, &mut level);
        }
        assert_eq!(out, 0x45);
    }
}
