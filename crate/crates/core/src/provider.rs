//! Plumbing shared by chat and embedding providers: errors, retries with
//! exponential backoff, request budgets and call counters.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited by provider")]
    RateLimited,
    #[error("no fixture entry for {0}")]
    FixtureMiss(String),
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("provider misconfigured: {0}")]
    Config(String),
}

impl ProviderError {
    /// Errors worth retrying.
    pub fn is_transient(&self) -> bool {
        match self {
            Self::RateLimited | Self::Transport(_) => true,
            Self::Http { status, .. } => *status == 408 || *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay_ms: 0,
            max_delay_ms: 0,
        }
    }

    /// Delay before retry number `attempt` (1-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64
            .checked_shl(attempt.saturating_sub(1))
            .unwrap_or(u64::MAX);
        Duration::from_millis(
            self.base_delay_ms
                .saturating_mul(factor)
                .min(self.max_delay_ms),
        )
    }

    /// Runs `op` until it succeeds, fails permanently, or attempts run out.
    /// Returns the result together with the number of attempts made.
    pub fn run<T>(
        &self,
        mut op: impl FnMut() -> Result<T, ProviderError>,
    ) -> (Result<T, ProviderError>, u32) {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match op() {
                Err(e) if e.is_transient() && attempt < self.max_attempts.max(1) => {
                    log::warn!("transient provider error (attempt {attempt}): {e}");
                    let d = self.delay(attempt);
                    if !d.is_zero() {
                        std::thread::sleep(d);
                    }
                }
                other => return (other, attempt),
            }
        }
    }
}

/// Spaces requests so that no more than `requests_per_minute` are issued.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(requests_per_minute: u32) -> Self {
        let rpm = requests_per_minute.max(1);
        Self {
            interval: Duration::from_secs_f64(60.0 / f64::from(rpm)),
            next: Mutex::new(None),
        }
    }

    /// Blocks until the caller may issue one request.
    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().expect("rate limiter lock");
            let now = Instant::now();
            let slot = match *next {
                Some(t) if t > now => t,
                _ => now,
            };
            *next = Some(slot + self.interval);
            slot.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// Counts provider traffic, split into network requests and local replays.
#[derive(Debug, Default)]
pub struct CallCounter {
    network: AtomicU64,
    replayed: AtomicU64,
}

impl CallCounter {
    pub fn record(&self, network: bool) {
        if network {
            self.network.fetch_add(1, Ordering::Relaxed);
        } else {
            self.replayed.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn snapshot(&self) -> CallCounts {
        CallCounts {
            network: self.network.load(Ordering::Relaxed),
            replayed: self.replayed.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub network: u64,
    pub replayed: u64,
}

/// Hex SHA-256 of `text`.
pub fn sha256_hex(text: &str) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_attempts: 10,
            base_delay_ms: 100,
            max_delay_ms: 1000,
        };
        assert_eq!(p.delay(1), Duration::from_millis(100));
        assert_eq!(p.delay(2), Duration::from_millis(200));
        assert_eq!(p.delay(4), Duration::from_millis(800));
        assert_eq!(p.delay(5), Duration::from_millis(1000));
        assert_eq!(p.delay(70), Duration::from_millis(1000));
    }

    #[test]
    fn retries_transient_then_succeeds() {
        let mut calls = 0;
        let (res, attempts) = RetryPolicy::no_delay(5).run(|| {
            calls += 1;
            if calls < 3 {
                Err(ProviderError::RateLimited)
            } else {
                Ok(calls)
            }
        });
        assert_eq!(res, Ok(3));
        assert_eq!(attempts, 3);
    }

    #[test]
    fn gives_up_after_bound() {
        let (res, attempts) = RetryPolicy::no_delay(4).run(|| -> Result<(), _> {
            Err(ProviderError::Http {
                status: 503,
                body: String::new(),
            })
        });
        assert!(res.is_err());
        assert_eq!(attempts, 4);
    }

    #[test]
    fn permanent_errors_are_not_retried() {
        let (res, attempts) = RetryPolicy::no_delay(4)
            .run(|| -> Result<(), _> { Err(ProviderError::Auth("bad key".into())) });
        assert!(matches!(res, Err(ProviderError::Auth(_))));
        assert_eq!(attempts, 1);
    }

    #[test]
    fn counter_splits_network_and_replay() {
        let c = CallCounter::default();
        c.record(false);
        c.record(false);
        c.record(true);
        assert_eq!(
            c.snapshot(),
            CallCounts {
                network: 1,
                replayed: 2
            }
        );
    }

    #[test]
    fn limiter_spaces_requests() {
        let l = RateLimiter::per_minute(6000); // 10 ms apart
        let start = Instant::now();
        for _ in 0..4 {
            l.acquire();
        }
        assert!(start.elapsed() >= Duration::from_millis(25));
    }
}
