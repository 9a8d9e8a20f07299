//! Default responder memory map, matching the case-study FPGA layout.
//!
//! | peripheral | base        | mask        | irq line |
//! |------------|-------------|-------------|----------|
//! | LED        | 0x5000_0000 | 0xffff_fff0 | -        |
//! | GPIO A     | 0x5000_1000 | 0xffff_fff0 | 0        |
//! | GPIO B     | 0x5000_2000 | 0xffff_fff0 | 1        |
//! | UART stub  | 0x5000_3000 | 0xffff_fff0 | -        |
//! | GCD        | 0x5000_4000 | 0xffff_ff00 | -        |
//!
//! Line 2 is reserved for an RTC attached to GPIO B.

use alloc::boxed::Box;

use crate::peripherals::{GcdAccelerator, GpioBank, InternalLed, UartStub};
use crate::responder::{BusMapping, ResponderCore};

pub const LED_BASE: u32 = 0x5000_0000;
pub const GPIO_A_BASE: u32 = 0x5000_1000;
pub const GPIO_B_BASE: u32 = 0x5000_2000;
pub const UART_BASE: u32 = 0x5000_3000;
pub const GCD_BASE: u32 = 0x5000_4000;

/// Mask for the 16-byte register blocks (LED, GPIO banks, UART stub).
pub const REGISTER_BLOCK_MASK: u32 = 0xffff_fff0;
/// The GCD block reserves a 256-byte window.
pub const GCD_BLOCK_MASK: u32 = 0xffff_ff00;

pub const GPIO_A_IRQ_LINE: u8 = 0;
pub const GPIO_B_IRQ_LINE: u8 = 1;
pub const RTC_IRQ_LINE: u8 = 2;

/// Build a responder with the default map, using the given GPIO banks so
/// callers can wire pin hooks before registration.
pub fn standard_responder(gpio_a: GpioBank, gpio_b: GpioBank) -> ResponderCore {
    let mut core = ResponderCore::new();
    let mapping = |base, mask| BusMapping::new(base, mask).expect("static map is valid");
    core.register_peripheral(
        "LED",
        mapping(LED_BASE, REGISTER_BLOCK_MASK),
        Box::new(InternalLed::new()),
        None,
    )
    .expect("static map has no overlaps");
    core.register_peripheral(
        "GPIOA",
        mapping(GPIO_A_BASE, REGISTER_BLOCK_MASK),
        Box::new(gpio_a),
        Some(GPIO_A_IRQ_LINE),
    )
    .expect("static map has no overlaps");
    core.register_peripheral(
        "GPIOB",
        mapping(GPIO_B_BASE, REGISTER_BLOCK_MASK),
        Box::new(gpio_b),
        Some(GPIO_B_IRQ_LINE),
    )
    .expect("static map has no overlaps");
    core.register_peripheral(
        "UART",
        mapping(UART_BASE, REGISTER_BLOCK_MASK),
        Box::new(UartStub::new()),
        None,
    )
    .expect("static map has no overlaps");
    core.register_peripheral(
        "GCD",
        mapping(GCD_BASE, GCD_BLOCK_MASK),
        Box::new(GcdAccelerator::new()),
        None,
    )
    .expect("static map has no overlaps");
    core
}

/// Default map with unwired GPIO banks.
pub fn standard_responder_plain() -> ResponderCore {
    standard_responder(GpioBank::new(), GpioBank::new())
}
