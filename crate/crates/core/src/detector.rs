//! Per-epoch mismatch counting against a frozen model.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use crate::engine::{for_each_bag, window_count};
use crate::error::{Error, Result};
use crate::ingest::RawTrace;
use crate::trainer::TrainedModel;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochVerdict {
    pub epoch_index: usize,
    pub windows_scanned: usize,
    pub mismatches: usize,
    pub threshold_used: f64,
    pub anomalous: bool,
    /// The epoch was shorter than the window and could not be scanned.
    pub short: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Totals {
    pub epochs: usize,
    pub anomalous_epochs: usize,
    pub windows: usize,
    pub mismatches: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionReport {
    pub verdicts: Vec<EpochVerdict>,
    /// OR over the per-epoch flags.
    pub trace_anomalous: bool,
    pub totals: Totals,
}

/// Counts windows of `epoch` whose bag is not in the model's database.
/// An epoch is anomalous when mismatches strictly exceed
/// `detect_fraction * epoch.len()`.
pub fn scan_epoch(model: &TrainedModel, epoch_index: usize, epoch: &[usize]) -> EpochVerdict {
    let config = model.config();
    let threshold_used = config.detect_threshold(epoch.len());
    let db = model.db();
    let short = epoch.len() < config.window;
    if short {
        log::warn!(
            "epoch {epoch_index}: {} calls is shorter than window {}",
            epoch.len(),
            config.window
        );
    }
    let mut mismatches = 0;
    for_each_bag(epoch, config.window, db.n_s(), |bag| {
        if !db.contains(bag) {
            mismatches += 1;
        }
    });
    EpochVerdict {
        epoch_index,
        windows_scanned: window_count(epoch.len(), config.window),
        mismatches,
        threshold_used,
        anomalous: mismatches as f64 > threshold_used,
        short,
    }
}

pub fn detect(model: &TrainedModel, trace: &RawTrace) -> DetectionReport {
    detect_slots(model, &model.resolve_trace(trace))
}

/// Scans full epochs, plus a trailing partial epoch if it holds at least
/// one window. Epochs are scanned in parallel; verdicts stay in order.
pub fn detect_slots(model: &TrainedModel, slots: &[usize]) -> DetectionReport {
    let config = model.config();
    let n_s = model.index().n_s();
    assert!(
        slots.iter().all(|&s| s < n_s),
        "slot stream not resolved against this model"
    );
    let verdicts: Vec<EpochVerdict> = slots
        .par_chunks(config.epoch_size)
        .enumerate()
        .filter(|(_, epoch)| epoch.len() >= config.window)
        .map(|(i, epoch)| scan_epoch(model, i, epoch))
        .collect();
    DetectionReport::from_verdicts(verdicts)
}

impl DetectionReport {
    pub fn from_verdicts(verdicts: Vec<EpochVerdict>) -> Self {
        let totals = Totals {
            epochs: verdicts.len(),
            anomalous_epochs: verdicts.iter().filter(|v| v.anomalous).count(),
            windows: verdicts.iter().map(|v| v.windows_scanned).sum(),
            mismatches: verdicts.iter().map(|v| v.mismatches).sum(),
        };
        DetectionReport {
            trace_anomalous: totals.anomalous_epochs > 0,
            verdicts,
            totals,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.verdicts.is_empty()
    }

    pub fn anomalous_epochs(&self) -> impl Iterator<Item = usize> + '_ {
        self.verdicts.iter().filter(|v| v.anomalous).map(|v| v.epoch_index)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "{self}")?;
        out.flush()?;
        Ok(())
    }

    /// Parses the text produced by `Display`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut verdicts = Vec::new();
        let mut summary = None;
        for (n, line) in text.lines().enumerate() {
            let bad = || Error::Input(format!("report line {}: {line:?}", n + 1));
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("summary ") {
                summary = Some(rest.to_owned());
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 5 {
                return Err(bad());
            }
            let epoch_index = toks[0].parse().map_err(|_| bad())?;
            let windows_scanned = toks[1].parse().map_err(|_| bad())?;
            let mismatches = toks[2].parse().map_err(|_| bad())?;
            let threshold_used = toks[3].parse().map_err(|_| bad())?;
            let anomalous = match toks[4] {
                "1" => true,
                "0" => false,
                _ => return Err(bad()),
            };
            verdicts.push(EpochVerdict {
                epoch_index,
                windows_scanned,
                mismatches,
                threshold_used,
                anomalous,
                short: windows_scanned == 0,
            });
        }
        if summary.is_none() {
            return Err(Error::Input("report has no summary line".into()));
        }
        Ok(Self::from_verdicts(verdicts))
    }
}

impl fmt::Display for DetectionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# epoch_index windows mismatches threshold anomalous")?;
        for v in &self.verdicts {
            writeln!(
                f,
                "{} {} {} {} {}",
                v.epoch_index, v.windows_scanned, v.mismatches, v.threshold_used, v.anomalous as u8
            )?;
        }
        let t = &self.totals;
        writeln!(
            f,
            "summary epochs={} anomalous_epochs={} windows={} mismatches={} trace_anomalous={}",
            t.epochs, t.anomalous_epochs, t.windows, t.mismatches, self.trace_anomalous as u8
        )
    }
}
