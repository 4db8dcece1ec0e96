use std::sync::Mutex;
use std::time::Duration;

use rand::Rng;

/// Exponential backoff: the n-th retry waits `base * factor^(n-1)` plus a
/// non-negative jitter of up to `jitter` of that delay.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base: Duration,
    pub factor: u32,
    pub jitter: f64,
}

impl RetryPolicy {
    pub fn new(max_retries: u32) -> Self {
        Self { max_retries, base: Duration::from_secs(1), factor: 2, jitter: 0.25 }
    }

    pub fn min_delay_for_retry(&self, retry: u32) -> Duration {
        let exp = retry.saturating_sub(1).min(16);
        self.base.saturating_mul(self.factor.saturating_pow(exp))
    }

    pub fn delay_for_retry(&self, retry: u32) -> Duration {
        let floor = self.min_delay_for_retry(retry);
        if self.jitter <= 0.0 {
            return floor;
        }
        let extra = rand::rng().random_range(0.0..=self.jitter);
        floor + floor.mul_f64(extra)
    }
}

pub trait Clock: Send + Sync {
    fn sleep(&self, duration: Duration);
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Records requested sleeps instead of blocking.
#[derive(Default)]
pub struct VirtualClock {
    sleeps: Mutex<Vec<Duration>>,
}

impl VirtualClock {
    pub fn sleeps(&self) -> Vec<Duration> {
        self.sleeps.lock().expect("clock lock poisoned").clone()
    }

    pub fn total(&self) -> Duration {
        self.sleeps().iter().sum()
    }
}

impl Clock for VirtualClock {
    fn sleep(&self, duration: Duration) {
        self.sleeps.lock().expect("clock lock poisoned").push(duration);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_floor_doubles() {
        let p = RetryPolicy::new(5);
        for n in 1..=6 {
            let floor = Duration::from_secs(1 << (n - 1));
            assert_eq!(p.min_delay_for_retry(n), floor);
            for _ in 0..20 {
                let d = p.delay_for_retry(n);
                assert!(d >= floor && d <= floor.mul_f64(1.25));
            }
        }
    }
}
