//! 32-bit GPIO bank with three registers and an external pin hook.
//!
//! Register layout:
//!
//! | offset | register  |                                              |
//! |--------|-----------|----------------------------------------------|
//! | 0x0    | direction | bit = 1 drives the pin from `output`         |
//! | 0x4    | output    | levels for output pins                       |
//! | 0x8    | input     | read-only, sampled pin levels on input pins  |

use super::{EnvDevice, PeripheralModel};
use alloc::boxed::Box;
use core::time::Duration;

/// External wiring of a GPIO bank.
///
/// `drive` fires whenever `output` or `direction` changes; only bits whose
/// direction bit is 1 are actually driven. `sample` returns the levels the
/// environment presents; the bank masks them to input pins itself.
pub trait PinHook {
    fn drive(&mut self, levels: u32, direction: u32);
    fn sample(&mut self) -> u32;
}

pub struct GpioBank {
    direction: u32,
    output: u32,
    hook: Option<Box<dyn PinHook>>,
}

impl GpioBank {
    pub const DIRECTION_OFFSET: u32 = 0x0;
    pub const OUTPUT_OFFSET: u32 = 0x4;
    pub const INPUT_OFFSET: u32 = 0x8;

    pub fn new() -> Self {
        Self {
            direction: 0,
            output: 0,
            hook: None,
        }
    }

    pub fn with_hook(hook: Box<dyn PinHook>) -> Self {
        let mut bank = Self::new();
        bank.set_hook(hook);
        bank
    }

    pub fn set_hook(&mut self, hook: Box<dyn PinHook>) {
        self.hook = Some(hook);
        self.redrive();
    }

    pub fn direction(&self) -> u32 {
        self.direction
    }

    pub fn output(&self) -> u32 {
        self.output
    }

    fn redrive(&mut self) {
        if let Some(hook) = self.hook.as_mut() {
            hook.drive(self.output, self.direction);
        }
    }
}

impl Default for GpioBank {
    fn default() -> Self {
        Self::new()
    }
}

impl EnvDevice for GpioBank {
    fn reset(&mut self) {
        self.direction = 0;
        self.output = 0;
        self.redrive();
    }

    fn tick(&mut self, _now: Duration) {}
}

impl PeripheralModel for GpioBank {
    fn reg_read(&mut self, offset: u32) -> u32 {
        match offset {
            Self::DIRECTION_OFFSET => self.direction,
            Self::OUTPUT_OFFSET => self.output,
            Self::INPUT_OFFSET => {
                let sampled = self.hook.as_mut().map_or(0, |h| h.sample());
                sampled & !self.direction
            }
            _ => 0,
        }
    }

    fn reg_write(&mut self, offset: u32, value: u32) {
        match offset {
            Self::DIRECTION_OFFSET => {
                self.direction = value;
                self.redrive();
            }
            Self::OUTPUT_OFFSET => {
                self.output = value;
                self.redrive();
            }
            // The input register and undefined offsets ignore writes.
            _ => {}
        }
    }
}
