//! Declarative responder configuration: the memory-map file format, the
//! built-in default map, and construction of ready-to-serve cores.
//!
//! Map files are line based, `#` comments allowed:
//!
//! ```text
//! NAME BASE MASK KIND [irq-line]
//! ```
//!
//! with `BASE`/`MASK` in hex and `KIND` one of `led`, `gpio`, `uart`, `gcd`.
//! Example:
//!
//! ```text
//! LED   0x50000000 0xfffffff0 led
//! GPIOA 0x50001000 0xfffffff0 gpio 0
//! ```
//!
//! A [`MapConfig`] is plain data and `Send`, so the daemon can carry one
//! across threads and build a fresh core per session.

use std::collections::HashMap;
use std::rc::Rc;
use std::time::Duration;

use hwitl::memmap;
use hwitl::peripherals::{
    GcdAccelerator, GpioBank, InternalLed, PinBoard, RtcPinHook, RtcPins, ThreeWireRtc, UartStub,
};
use hwitl::responder::{BusMapping, MapError, ResponderCore};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeripheralKind {
    Led,
    Gpio,
    Uart,
    Gcd,
}

impl PeripheralKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "led" => Self::Led,
            "gpio" => Self::Gpio,
            "uart" => Self::Uart,
            "gcd" => Self::Gcd,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapEntry {
    pub name: String,
    pub base: u32,
    pub mask: u32,
    pub kind: PeripheralKind,
    pub irq_line: Option<u8>,
}

/// An RTC soldered onto one of the GPIO banks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtcConfig {
    pub bank: String,
    pub pins: RtcPins,
    pub irq_line: Option<u8>,
}

impl Default for RtcConfig {
    fn default() -> Self {
        Self {
            bank: "GPIOB".into(),
            pins: RtcPins::default(),
            irq_line: Some(memmap::RTC_IRQ_LINE),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MapConfig {
    pub entries: Vec<MapEntry>,
    pub rtc: Option<RtcConfig>,
    /// Initial pin levels per GPIO bank name.
    pub initial_pins: Vec<(String, u32)>,
}

#[derive(Debug, Error)]
pub enum MapConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("rtc bank '{0}' is not a gpio entry in the map")]
    RtcBank(String),
}

/// Everything a session needs: the core plus handles to poke pin levels
/// from outside (one handle per hooked GPIO bank).
pub struct BuiltResponder {
    pub core: ResponderCore,
    pub rtc: Option<Rc<std::cell::RefCell<ThreeWireRtc>>>,
}

impl MapConfig {
    /// The default case-study layout: LED, two GPIO banks, UART stub, GCD.
    pub fn standard() -> Self {
        let e = |name: &str, base, mask, kind, irq_line| MapEntry {
            name: name.into(),
            base,
            mask,
            kind,
            irq_line,
        };
        Self {
            entries: vec![
                e(
                    "LED",
                    memmap::LED_BASE,
                    memmap::REGISTER_BLOCK_MASK,
                    PeripheralKind::Led,
                    None,
                ),
                e(
                    "GPIOA",
                    memmap::GPIO_A_BASE,
                    memmap::REGISTER_BLOCK_MASK,
                    PeripheralKind::Gpio,
                    Some(memmap::GPIO_A_IRQ_LINE),
                ),
                e(
                    "GPIOB",
                    memmap::GPIO_B_BASE,
                    memmap::REGISTER_BLOCK_MASK,
                    PeripheralKind::Gpio,
                    Some(memmap::GPIO_B_IRQ_LINE),
                ),
                e(
                    "UART",
                    memmap::UART_BASE,
                    memmap::REGISTER_BLOCK_MASK,
                    PeripheralKind::Uart,
                    None,
                ),
                e(
                    "GCD",
                    memmap::GCD_BASE,
                    memmap::GCD_BLOCK_MASK,
                    PeripheralKind::Gcd,
                    None,
                ),
            ],
            rtc: None,
            initial_pins: Vec::new(),
        }
    }

    /// Parse map-file text into entries (RTC and pin presets come from
    /// flags, not the file).
    pub fn parse(text: &str) -> Result<Self, MapConfigError> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 4 || fields.len() > 5 {
                return Err(MapConfigError::Parse {
                    line: lineno,
                    msg: format!("expected 'NAME BASE MASK KIND [irq-line]', got '{line}'"),
                });
            }
            let hex = |s: &str, what: &str| {
                u32::from_str_radix(s.trim_start_matches("0x"), 16).map_err(|_| {
                    MapConfigError::Parse {
                        line: lineno,
                        msg: format!("bad {what} '{s}'"),
                    }
                })
            };
            let base = hex(fields[1], "base")?;
            let mask = hex(fields[2], "mask")?;
            let kind = PeripheralKind::parse(fields[3]).ok_or_else(|| MapConfigError::Parse {
                line: lineno,
                msg: format!("unknown peripheral kind '{}'", fields[3]),
            })?;
            let irq_line = fields
                .get(4)
                .map(|s| {
                    s.parse::<u8>()
                        .ok()
                        .filter(|l| *l < 32)
                        .ok_or_else(|| MapConfigError::Parse {
                            line: lineno,
                            msg: format!("bad irq line '{s}' (0..=31)"),
                        })
                })
                .transpose()?;
            // Validate the mapping here so a broken file fails at load time.
            BusMapping::new(base, mask)?;
            entries.push(MapEntry {
                name: fields[0].to_string(),
                base,
                mask,
                kind,
                irq_line,
            });
        }
        Ok(Self {
            entries,
            ..Self::default()
        })
    }

    /// Pre-create one shared pin board per GPIO bank (minus the RTC's bank,
    /// whose pins belong to the chip).
    pub fn make_pin_boards(&self) -> HashMap<String, PinBoard> {
        let rtc_bank = self.rtc.as_ref().map(|r| r.bank.as_str());
        let mut boards = HashMap::new();
        for entry in &self.entries {
            if entry.kind == PeripheralKind::Gpio && Some(entry.name.as_str()) != rtc_bank {
                let initial = self
                    .initial_pins
                    .iter()
                    .find(|(n, _)| *n == entry.name)
                    .map(|(_, v)| *v)
                    .unwrap_or(0);
                boards.insert(entry.name.clone(), PinBoard::new(initial));
            }
        }
        boards
    }

    /// Build a core wired to the given pin boards. Boards are cloned, so
    /// several sessions can share one breadboard.
    pub fn build(
        &self,
        watchdog: Duration,
        boards: &HashMap<String, PinBoard>,
    ) -> Result<BuiltResponder, MapConfigError> {
        let mut core = ResponderCore::new();
        core.set_watchdog(watchdog);
        let mut rtc_handle = None;
        for entry in &self.entries {
            let mapping = BusMapping::new(entry.base, entry.mask)?;
            let model: Box<dyn hwitl::peripherals::PeripheralModel> = match entry.kind {
                PeripheralKind::Led => Box::new(InternalLed::new()),
                PeripheralKind::Uart => Box::new(UartStub::new()),
                PeripheralKind::Gcd => Box::new(GcdAccelerator::new()),
                PeripheralKind::Gpio => {
                    let mut bank = GpioBank::new();
                    if let Some(rtc) = self.rtc.as_ref().filter(|r| r.bank == entry.name) {
                        let chip = Rc::new(std::cell::RefCell::new(ThreeWireRtc::new()));
                        bank.set_hook(Box::new(RtcPinHook::new(chip.clone(), rtc.pins)));
                        rtc_handle = Some((chip, rtc.irq_line));
                    } else if let Some(board) = boards.get(&entry.name) {
                        bank.set_hook(Box::new(board.clone()));
                    }
                    Box::new(bank)
                }
            };
            core.register_peripheral(&entry.name, mapping, model, entry.irq_line)?;
        }
        if let Some(rtc) = &self.rtc {
            let Some((chip, irq_line)) = rtc_handle else {
                return Err(MapConfigError::RtcBank(rtc.bank.clone()));
            };
            core.attach_device(chip.clone(), irq_line);
            return Ok(BuiltResponder {
                core,
                rtc: Some(chip),
            });
        }
        Ok(BuiltResponder { core, rtc: None })
    }

    /// One-line-per-peripheral rendering for daemon startup logs.
    pub fn describe(&self) -> Vec<String> {
        let mut lines: Vec<String> = self
            .entries
            .iter()
            .map(|e| {
                let kind = match e.kind {
                    PeripheralKind::Led => "led",
                    PeripheralKind::Gpio => "gpio",
                    PeripheralKind::Uart => "uart",
                    PeripheralKind::Gcd => "gcd",
                };
                let irq = e.irq_line.map(|l| format!(" irq {l}")).unwrap_or_default();
                format!(
                    "{:<8} 0x{:08x}/0x{:08x} {kind}{irq}",
                    e.name, e.base, e.mask
                )
            })
            .collect();
        if let Some(rtc) = &self.rtc {
            let irq = rtc
                .irq_line
                .map(|l| format!(" irq {l}"))
                .unwrap_or_default();
            lines.push(format!(
                "{:<8} on {} pins ce={} sclk={} io={} rtc{irq}",
                "RTC", rtc.bank, rtc.pins.ce, rtc.pins.sclk, rtc.pins.io
            ));
        }
        lines
    }
}
