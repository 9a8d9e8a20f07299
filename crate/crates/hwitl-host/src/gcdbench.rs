//! GCD benchmark runner: races the local subtraction implementation against
//! the responder's accelerator and checks they agree.

use std::time::{Duration, Instant};

use hwitl::memmap;
use hwitl::peripherals::{subtraction_gcd, GcdAccelerator};
use hwitl::{Channel, InitiatorBridge};
use thiserror::Error;

/// The five input pairs of the bundled benchmark table.
pub const BUILTIN_PAIRS: [(u32, u32); 5] = [
    (10_154, 3),
    (101_654, 3),
    (1_051_654, 3),
    (10_512_654, 3),
    (36_546, 1_051_654),
];

/// Ready polls before giving up on the accelerator.
const READY_POLL_LIMIT: u32 = 1_000;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("bus access failed for ({a}, {b}): {detail}")]
    Access { a: u32, b: u32, detail: String },
    #[error("accelerator never became ready for ({a}, {b})")]
    NeverReady { a: u32, b: u32 },
    #[error("results disagree for ({a}, {b}): software {sw}, accelerator {hw}")]
    Mismatch { a: u32, b: u32, sw: u32, hw: u32 },
    #[error("pairs file line {line}: {msg}")]
    PairsFile { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchRow {
    pub a: u32,
    pub b: u32,
    pub result: u32,
    pub sw_steps: u64,
    pub sw_time: Duration,
    pub hw_transactions: u64,
    pub hw_time: Duration,
}

/// Drive one computation through the accelerator's register protocol.
/// Returns the result and how many wire transactions it took.
pub fn accelerator_gcd<C: Channel>(
    bridge: &mut InitiatorBridge<C>,
    a: u32,
    b: u32,
) -> Result<(u32, u64), BenchError> {
    let before = bridge.transaction_count();
    let access = |r: hwitl::BusAccessResult, what: &str| {
        if r.is_ok() {
            Ok(r.data)
        } else {
            Err(BenchError::Access {
                a,
                b,
                detail: format!(
                    "{what}: {}",
                    r.fault
                        .map(|f| f.to_string())
                        .unwrap_or_else(|| "not_mapped".into())
                ),
            })
        }
    };
    access(
        bridge.write(memmap::GCD_BASE + GcdAccelerator::A_OFFSET, a),
        "write a",
    )?;
    access(
        bridge.write(memmap::GCD_BASE + GcdAccelerator::B_OFFSET, b),
        "write b",
    )?;
    access(
        bridge.write(memmap::GCD_BASE + GcdAccelerator::VALID_OFFSET, 1),
        "write valid",
    )?;
    let mut ready = false;
    for _ in 0..READY_POLL_LIMIT {
        if access(
            bridge.read(memmap::GCD_BASE + GcdAccelerator::READY_OFFSET),
            "poll ready",
        )? != 0
        {
            ready = true;
            break;
        }
    }
    if !ready {
        return Err(BenchError::NeverReady { a, b });
    }
    let res = access(
        bridge.read(memmap::GCD_BASE + GcdAccelerator::RES_OFFSET),
        "read res",
    )?;
    Ok((res, bridge.transaction_count() - before))
}

/// Run the benchmark for every pair. A software/accelerator disagreement
/// aborts the run.
pub fn run<C: Channel>(
    bridge: &mut InitiatorBridge<C>,
    pairs: &[(u32, u32)],
) -> Result<Vec<BenchRow>, BenchError> {
    let mut rows = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        let sw_start = Instant::now();
        let sw = subtraction_gcd(a, b);
        let sw_time = sw_start.elapsed();

        let hw_start = Instant::now();
        let (hw_result, hw_transactions) = accelerator_gcd(bridge, a, b)?;
        let hw_time = hw_start.elapsed();

        if hw_result != sw.result {
            return Err(BenchError::Mismatch {
                a,
                b,
                sw: sw.result,
                hw: hw_result,
            });
        }
        rows.push(BenchRow {
            a,
            b,
            result: hw_result,
            sw_steps: sw.steps,
            sw_time,
            hw_transactions,
            hw_time,
        });
    }
    Ok(rows)
}

/// Parse a pairs file: one `A B` pair per line, decimal, `#` comments.
pub fn parse_pairs(text: &str) -> Result<Vec<(u32, u32)>, BenchError> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(BenchError::PairsFile {
                line: idx + 1,
                msg: format!("expected 'A B', got '{line}'"),
            });
        };
        let parse = |s: &str| {
            s.parse::<u32>().map_err(|_| BenchError::PairsFile {
                line: idx + 1,
                msg: format!("bad number '{s}'"),
            })
        };
        pairs.push((parse(a)?, parse(b)?));
    }
    Ok(pairs)
}

/// Render rows as an aligned table.
pub fn format_table(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>10} {:>10} {:>10} {:>12} {:>12} {:>8} {:>12} {:>6}\n",
        "A", "B", "GCD", "SW steps", "SW time", "HW txns", "HW time", "agree"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:>10} {:>10} {:>10} {:>12} {:>12} {:>8} {:>12} {:>6}\n",
            r.a,
            r.b,
            r.result,
            r.sw_steps,
            format!("{:.2?}", r.sw_time),
            r.hw_transactions,
            format!("{:.2?}", r.hw_time),
            "yes"
        ));
    }
    out
}
