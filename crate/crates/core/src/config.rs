//! Detector parameters.

use std::fmt;

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 10;
pub const DEFAULT_EPOCH_SIZE: usize = 5000;
pub const DEFAULT_TRAIN_THRESHOLD: f64 = 0.99;
pub const DEFAULT_DETECT_FRACTION: f64 = 0.10;

/// Window size, epoch size and the two decision thresholds.
///
/// The detection threshold is stored as a fraction of the epoch length so
/// that a short trailing epoch gets a proportionally smaller threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Config {
    pub window: usize,
    pub epoch_size: usize,
    pub train_threshold: f64,
    pub detect_fraction: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            window: DEFAULT_WINDOW,
            epoch_size: DEFAULT_EPOCH_SIZE,
            train_threshold: DEFAULT_TRAIN_THRESHOLD,
            detect_fraction: DEFAULT_DETECT_FRACTION,
        }
    }
}

impl Config {
    pub fn new(
        window: usize,
        epoch_size: usize,
        train_threshold: f64,
        detect_fraction: f64,
    ) -> Result<Self> {
        let config = Config {
            window,
            epoch_size,
            train_threshold,
            detect_fraction,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::config("window", "must be positive"));
        }
        // Bag counts are stored as u16.
        if self.window > u16::MAX as usize {
            return Err(Error::config(
                "window",
                format!("must be at most {}", u16::MAX),
            ));
        }
        if self.epoch_size == 0 {
            return Err(Error::config("epoch-size", "must be positive"));
        }
        if self.window > self.epoch_size {
            return Err(Error::config(
                "window",
                format!(
                    "window {} exceeds epoch size {}",
                    self.window, self.epoch_size
                ),
            ));
        }
        if !(self.train_threshold > 0.0 && self.train_threshold <= 1.0) {
            return Err(Error::config(
                "train-threshold",
                format!("{} not in (0, 1]", self.train_threshold),
            ));
        }
        if !(self.detect_fraction > 0.0 && self.detect_fraction <= 1.0) {
            return Err(Error::config(
                "detect-fraction",
                format!("{} not in (0, 1]", self.detect_fraction),
            ));
        }
        Ok(())
    }

    /// Mismatch threshold for an epoch of `len` calls.
    pub fn detect_threshold(&self, len: usize) -> f64 {
        self.detect_fraction * len as f64
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "w={} S={} Tt={} TdFrac={}",
            self.window, self.epoch_size, self.train_threshold, self.detect_fraction
        )
    }
}
