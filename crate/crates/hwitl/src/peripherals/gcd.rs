//! Greatest-common-divisor accelerator and the plain-software baseline it is
//! benchmarked against.
//!
//! Register layout:
//!
//! | offset | register | access     |
//! |--------|----------|------------|
//! | 0x00   | a        | read/write |
//! | 0x04   | b        | read/write |
//! | 0x08   | valid    | read/write, nonzero write starts a computation |
//! | 0x0C   | ready    | read-only  |
//! | 0x10   | res      | read-only  |
//!
//! Writing `a` or `b` clears `ready`. The emulated datapath completes
//! immediately by default; `with_ready_latency` makes `ready` read 0 for a
//! configurable number of polls first, for studies that care about the
//! polling loop itself.

use super::{EnvDevice, PeripheralModel};

#[derive(Debug, Default)]
pub struct GcdAccelerator {
    a: u32,
    b: u32,
    valid: u32,
    ready: u32,
    res: u32,
    latency: u32,
    countdown: u32,
}

impl GcdAccelerator {
    pub const A_OFFSET: u32 = 0x00;
    pub const B_OFFSET: u32 = 0x04;
    pub const VALID_OFFSET: u32 = 0x08;
    pub const READY_OFFSET: u32 = 0x0C;
    pub const RES_OFFSET: u32 = 0x10;

    pub fn new() -> Self {
        Self::default()
    }

    /// `ready` reads 0 for the first `polls` reads after a start.
    pub fn with_ready_latency(polls: u32) -> Self {
        Self {
            latency: polls,
            ..Self::default()
        }
    }

    fn start(&mut self) {
        self.res = if self.a == 0 || self.b == 0 {
            self.a.max(self.b)
        } else {
            binary_gcd(self.a, self.b)
        };
        self.ready = 1;
        self.countdown = self.latency;
    }
}

impl EnvDevice for GcdAccelerator {
    fn reset(&mut self) {
        let latency = self.latency;
        *self = Self::default();
        self.latency = latency;
    }
}

impl PeripheralModel for GcdAccelerator {
    fn reg_read(&mut self, offset: u32) -> u32 {
        match offset {
            Self::A_OFFSET => self.a,
            Self::B_OFFSET => self.b,
            Self::VALID_OFFSET => self.valid,
            Self::READY_OFFSET => {
                if self.countdown > 0 {
                    self.countdown -= 1;
                    0
                } else {
                    self.ready
                }
            }
            Self::RES_OFFSET => self.res,
            _ => 0,
        }
    }

    fn reg_write(&mut self, offset: u32, value: u32) {
        match offset {
            Self::A_OFFSET => {
                self.a = value;
                self.ready = 0;
            }
            Self::B_OFFSET => {
                self.b = value;
                self.ready = 0;
            }
            Self::VALID_OFFSET => {
                self.valid = value;
                if value != 0 {
                    self.start();
                }
            }
            _ => {}
        }
    }
}

/// Stein's binary GCD, the datapath a shift-and-subtract hardware block
/// would implement.
fn binary_gcd(mut a: u32, mut b: u32) -> u32 {
    debug_assert!(a != 0 && b != 0);
    let shift = (a | b).trailing_zeros();
    a >>= a.trailing_zeros();
    loop {
        b >>= b.trailing_zeros();
        if a > b {
            core::mem::swap(&mut a, &mut b);
        }
        b -= a;
        if b == 0 {
            return a << shift;
        }
    }
}

/// Result of the software baseline run: the GCD plus how many subtraction
/// loop iterations it took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GcdRun {
    pub result: u32,
    pub steps: u64,
}

/// The subtraction form of Euclid's algorithm, iteration-counted. This is
/// the software implementation the accelerator is raced against; its step
/// count grows with the imbalance of the inputs.
pub fn subtraction_gcd(a: u32, b: u32) -> GcdRun {
    if a == 0 || b == 0 {
        return GcdRun {
            result: a.max(b),
            steps: 0,
        };
    }
    let (mut a, mut b) = (a, b);
    let mut steps = 0u64;
    while a != b {
        if a > b {
            a -= b;
        } else {
            b -= a;
        }
        steps += 1;
    }
    GcdRun { result: a, steps }
}
