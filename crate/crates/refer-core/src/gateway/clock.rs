//! Injectable time source. Rate limiting, retry backoff, latency capture,
//! and record timestamps all go through a [`Clock`] so that tests and golden
//! fixtures run instantly and deterministically.

use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary origin.
    fn monotonic(&self) -> Duration;
    /// Wall-clock milliseconds since the Unix epoch.
    fn unix_millis(&self) -> u64;
    fn sleep(&self, duration: Duration);
}

/// Real time.
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn monotonic(&self) -> Duration {
        self.origin.elapsed()
    }

    fn unix_millis(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Frozen at zero; sleeps are no-ops. Makes every duration and timestamp in
/// a run byte-reproducible.
pub struct FixedClock;

impl Clock for FixedClock {
    fn monotonic(&self) -> Duration {
        Duration::ZERO
    }

    fn unix_millis(&self) -> u64 {
        0
    }

    fn sleep(&self, _duration: Duration) {}
}

/// Virtual time that only advances when something sleeps.
pub struct VirtualClock {
    now: Mutex<Duration>,
}

impl VirtualClock {
    pub fn new() -> Self {
        VirtualClock {
            now: Mutex::new(Duration::ZERO),
        }
    }

    pub fn advance(&self, by: Duration) {
        *self.now.lock().unwrap() += by;
    }
}

impl Default for VirtualClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for VirtualClock {
    fn monotonic(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn unix_millis(&self) -> u64 {
        self.monotonic().as_millis() as u64
    }

    fn sleep(&self, duration: Duration) {
        self.advance(duration);
    }
}
