use std::time::Duration;

/// Exponential backoff: `attempts` tries, sleeping `base`, `2*base`, ... between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(attempts: u32) -> Self {
        RetryPolicy {
            attempts,
            base: Duration::ZERO,
        }
    }

    pub fn delay(&self, retry: u32) -> Duration {
        self.base.saturating_mul(1u32 << retry.min(16))
    }

    /// Runs `f` until it succeeds, fails permanently, or attempts run out.
    /// `f` returns `Err((error, retryable))`.
    pub fn run<T, E>(&self, mut f: impl FnMut(u32) -> Result<T, (E, bool)>) -> Result<T, E> {
        let attempts = self.attempts.max(1);
        let mut attempt = 0;
        loop {
            match f(attempt) {
                Ok(v) => return Ok(v),
                Err((e, retryable)) => {
                    if !retryable || attempt + 1 >= attempts {
                        return Err(e);
                    }
                    let d = self.delay(attempt);
                    tracing::debug!(attempt, delay_ms = d.as_millis() as u64, "retrying");
                    std::thread::sleep(d);
                    attempt += 1;
                }
            }
        }
    }
}
