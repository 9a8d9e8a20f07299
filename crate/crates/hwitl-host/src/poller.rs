//! Background interrupt polling: a thread that periodically asks the
//! responder for its pending-line bitmask through the shared bridge.
//!
//! The bridge mutex is the serialization gate: poll transactions and data
//! transactions interleave, never overlap.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use hwitl::{Channel, InitiatorBridge};

/// Default poll cadence, on the order of one transaction time at 115200
/// baud so interrupt latency stays within a protocol round trip.
pub const DEFAULT_POLL_INTERVAL: Duration = Duration::from_millis(1);

pub struct IrqPoller {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl IrqPoller {
    /// Start polling. The bridge's IRQ callback (see
    /// [`InitiatorBridge::set_irq_callback`]) fires on every nonzero mask.
    pub fn spawn<C: Channel + Send + 'static>(
        bridge: Arc<Mutex<InitiatorBridge<C>>>,
        interval: Duration,
    ) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let stop_flag = Arc::clone(&stop);
        let handle = std::thread::spawn(move || {
            while !stop_flag.load(Ordering::Relaxed) {
                std::thread::sleep(interval);
                if stop_flag.load(Ordering::Relaxed) {
                    break;
                }
                let mut bridge = bridge.lock().expect("bridge lock");
                let result = bridge.poll_pending_irqs();
                if !result.is_ok() {
                    // A dead channel will not come back; stop polling.
                    break;
                }
            }
        });
        Self {
            stop,
            handle: Some(handle),
        }
    }

    /// Stop the thread and wait for it.
    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for IrqPoller {
    fn drop(&mut self) {
        self.shutdown();
    }
}
