//! Host-side half of the hwitl toolkit: OS-backed channels, the responder
//! daemon, capture decoding, and the plumbing behind the command-line tools.

pub mod busctl;
pub mod capture;
pub mod channel;
pub mod daemon;
pub mod gcdbench;
pub mod mapfile;
pub mod poller;

use std::time::Instant;

/// Monotonic host clock, measured from construction.
#[derive(Debug, Clone, Copy)]
pub struct HostClock(Instant);

impl HostClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl hwitl::Clock for HostClock {
    fn now(&self) -> std::time::Duration {
        self.0.elapsed()
    }
}
