//! Hardware-in-the-loop bus bridge toolkit.
//!
//! An *initiator* (a virtual prototype or test harness) issues memory-mapped
//! read/write transactions over a lean byte protocol; a *responder* (an FPGA
//! bridge, or the emulator in this crate) decodes them, routes them to
//! peripherals selected by mask mappings, and answers with a status byte
//! carrying an interrupt flag.
//!
//! This crate is the transport-agnostic core: the wire codec and streaming
//! parser in [`protocol`], channel and line-timing abstractions in
//! [`transport`], the client bridge in [`initiator`], the emulator in
//! [`responder`], register-accurate device models in [`peripherals`], and
//! the default case-study memory map in [`memmap`]. OS-backed channels, the
//! daemon, and the command-line tools live in the companion host crate.
//!
//! No interaction with the operating system happens here; timestamps are
//! injected, so whole sessions run deterministically on a virtual clock.
//!
//! # Example
//!
//! Drive an in-process responder carrying the default memory map, with a
//! switch array sampled on GPIO bank A:
//!
//! ```
//! use hwitl::memmap;
//! use hwitl::peripherals::{GpioBank, PinBoard};
//! use hwitl::{InitiatorBridge, ResponderChannel};
//!
//! let switches = PinBoard::new(0x81);
//! let mut gpio_a = GpioBank::new();
//! gpio_a.set_hook(Box::new(switches.clone()));
//! let core = memmap::standard_responder(gpio_a, GpioBank::new());
//!
//! let mut bridge = InitiatorBridge::new(ResponderChannel::new(core));
//! let result = bridge.read(0x5000_1008);
//! assert!(result.is_ok());
//! assert_eq!(result.data, 0x0000_0081);
//! ```
//!
//! The same bridge drives any [`Channel`] implementation, so code tested
//! against the emulator talks to real hardware unchanged.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod initiator;
pub mod memmap;
pub mod peripherals;
pub mod protocol;
pub mod responder;
pub mod transport;

pub use initiator::{AccessStatus, BusAccessResult, Fault, InitiatorBridge, TimePolicy};
pub use protocol::{Ack, Command, Request, RequestParser, ResponseStatus};
pub use responder::{BusMapping, ResponderChannel, ResponderCore, SessionReport};
pub use transport::{Channel, ChannelError, Clock, LineModel, VirtualClock};
