//! Token-bucket rate limiting, one bucket per provider.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::clock::Clock;

/// Requests-per-minute token bucket. `acquire` blocks (via the clock's
/// sleep) until a token is available.
pub struct RateLimiter {
    capacity: f64,
    refill_per_sec: f64,
    state: Mutex<BucketState>,
    clock: Arc<dyn Clock>,
}

struct BucketState {
    tokens: f64,
    last: Duration,
}

impl RateLimiter {
    pub fn per_minute(requests_per_minute: u32, clock: Arc<dyn Clock>) -> Self {
        let capacity = requests_per_minute.max(1) as f64;
        RateLimiter {
            capacity,
            refill_per_sec: capacity / 60.0,
            state: Mutex::new(BucketState {
                tokens: capacity,
                last: clock.monotonic(),
            }),
            clock,
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().unwrap();
                let now = self.clock.monotonic();
                let elapsed = now.saturating_sub(state.last).as_secs_f64();
                state.tokens = (state.tokens + elapsed * self.refill_per_sec).min(self.capacity);
                state.last = now;
                if state.tokens >= 1.0 {
                    state.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - state.tokens) / self.refill_per_sec)
            };
            self.clock.sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::clock::VirtualClock;

    #[test]
    fn burst_up_to_capacity_then_throttle() {
        let clock = Arc::new(VirtualClock::new());
        let limiter = RateLimiter::per_minute(60, clock.clone());
        for _ in 0..60 {
            limiter.acquire();
        }
        assert_eq!(clock.monotonic(), Duration::ZERO);
        // Bucket is empty; the 61st request must wait one refill interval.
        limiter.acquire();
        assert!(clock.monotonic() >= Duration::from_millis(990));
    }

    #[test]
    fn refill_restores_tokens() {
        let clock = Arc::new(VirtualClock::new());
        let limiter = RateLimiter::per_minute(6, clock.clone());
        for _ in 0..6 {
            limiter.acquire();
        }
        clock.advance(Duration::from_secs(20)); // 2 tokens refilled
        limiter.acquire();
        limiter.acquire();
        assert_eq!(clock.monotonic(), Duration::from_secs(20));
    }
}
