use crate::error::{Error, Result};

/// Admission control keeping sampled items per inserted item near
/// `samples_per_insert`, within `tolerance * samples_per_insert` items.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateLimiterConfig {
    pub samples_per_insert: f64,
    pub tolerance: f64,
    pub min_size_to_sample: usize,
}

impl RateLimiterConfig {
    pub fn new(samples_per_insert: f64, tolerance: f64, min_size_to_sample: usize) -> Self {
        Self { samples_per_insert, tolerance, min_size_to_sample }
    }

    pub fn validate(&self) -> Result<()> {
        let spi = self.samples_per_insert;
        if !(spi > 0.0 && spi.is_finite()) {
            return Err(Error::Config(format!("samples_per_insert must be > 0, got {spi}")));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        // Sampling stops at S = floor(SPI (I + tol)); inserting resumes at
        // S >= SPI (I + 1 - tol). Both blocked at once needs this gap < 1 item.
        if spi * (2.0 * self.tolerance - 1.0) < 1.0 {
            return Err(Error::Config(format!(
                "rate limiter band too narrow (SPI {spi}, tolerance {}): inserts and samples could both block",
                self.tolerance
            )));
        }
        if self.min_size_to_sample == 0 {
            return Err(Error::Config("min_size_to_sample must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    Insert,
    Sample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Block,
}

/// Pure admission decision given cumulative inserts, cumulative sampled
/// items and the current table size.
///
/// Inserts are never blocked while the table is still below the sampling
/// threshold, since no sample can have been refused on their account yet.
pub fn admit(config: Option<&RateLimiterConfig>, inserts: u64, sampled: u64, size: usize, event: Event) -> Decision {
    let Some(c) = config else {
        return Decision::Allow;
    };
    let spi = c.samples_per_insert;
    let band = c.tolerance * spi;
    let (i, s) = (inserts as f64, sampled as f64);
    let allowed = match event {
        Event::Sample => size >= c.min_size_to_sample && s + 1.0 <= spi * i + band,
        Event::Insert => size < c.min_size_to_sample || s >= spi * (i + 1.0) - band,
    };
    if allowed {
        Decision::Allow
    } else {
        Decision::Block
    }
}
