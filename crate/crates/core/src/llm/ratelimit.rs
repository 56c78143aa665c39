use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

const WINDOW: Duration = Duration::from_secs(60);

/// Sliding-window limiter: at most `per_minute` grants in any 60 s window.
#[derive(Debug)]
pub struct RateLimiter {
    per_minute: u32,
    grants: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    /// `per_minute == 0` means unlimited.
    pub fn new(per_minute: u32) -> Self {
        RateLimiter {
            per_minute,
            grants: Mutex::new(VecDeque::new()),
        }
    }

    /// Records a grant at `now` if allowed, otherwise returns how long to wait.
    pub fn try_acquire_at(&self, now: Instant) -> Result<(), Duration> {
        if self.per_minute == 0 {
            return Ok(());
        }
        let mut grants = self.grants.lock().expect("rate limiter lock");
        while let Some(&oldest) = grants.front() {
            if now.saturating_duration_since(oldest) >= WINDOW {
                grants.pop_front();
            } else {
                break;
            }
        }
        if grants.len() < self.per_minute as usize {
            grants.push_back(now);
            Ok(())
        } else {
            let oldest = *grants.front().expect("non-empty window");
            Err(WINDOW - now.saturating_duration_since(oldest))
        }
    }

    /// Blocks until a request may be sent.
    pub fn acquire(&self) {
        loop {
            match self.try_acquire_at(Instant::now()) {
                Ok(()) => return,
                Err(wait) => std::thread::sleep(wait),
            }
        }
    }
}
