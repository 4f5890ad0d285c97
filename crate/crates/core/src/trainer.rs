//! Epoch-by-epoch training of the normal-behavior database, and the
//! persisted model format.
//!
//! After every epoch the database is diffed against its state before the
//! epoch, giving a frequency-change vector `C_k`. From the second epoch on,
//! `C_k` is compared with `C_{k-1}` by cosine similarity; training stops
//! once two consecutive similarities reach the training threshold.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::catalog::{build_index, SyscallIndex};
use crate::config::Config;
use crate::engine::{BehaviorDb, ChangeVector};
use crate::error::{Error, Result};
use crate::ingest::{CountTable, RawTrace};

pub const MODEL_MAGIC: &str = "boscids-model";
pub const MODEL_VERSION: u32 = 1;

/// Cosine of the angle between two change vectors. The shorter vector is
/// zero-extended to the longer one's length. Two zero vectors are
/// identical (1.0); a zero and a non-zero vector are orthogonal (0.0).
pub fn cosine_similarity(a: &ChangeVector, b: &ChangeVector) -> f64 {
    let dot: f64 = a
        .deltas
        .iter()
        .zip(&b.deltas)
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum();
    let norm = |v: &ChangeVector| v.deltas.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    match (na == 0.0, nb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        (false, false) => (dot / (na * nb)).clamp(-1.0, 1.0),
    }
}

/// Similarity between epoch `k` and epoch `k - 1` (1-based, `k >= 2`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityRecord {
    pub k: usize,
    pub cos_theta: f64,
}

/// Frozen result of training.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    index: SyscallIndex,
    db: BehaviorDb,
    config: Config,
    history: Vec<SimilarityRecord>,
    epochs_trained: usize,
    converged: bool,
}

impl TrainedModel {
    pub fn index(&self) -> &SyscallIndex {
        &self.index
    }

    pub fn db(&self) -> &BehaviorDb {
        &self.db
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    /// Same model, different detection fraction. Training-side parameters
    /// are left alone.
    pub fn with_detect_fraction(mut self, fraction: f64) -> Result<Self> {
        let mut config = self.config;
        config.detect_fraction = fraction;
        config.validate()?;
        self.config = config;
        Ok(self)
    }

    pub fn history(&self) -> &[SimilarityRecord] {
        &self.history
    }

    pub fn epochs_trained(&self) -> usize {
        self.epochs_trained
    }

    /// Whether the stopping rule fired before the trace ran out.
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Calls consumed by training.
    pub fn calls_trained(&self) -> usize {
        self.epochs_trained * self.config.epoch_size
    }

    /// Resolves a trace against this model's frozen index.
    pub fn resolve_trace(&self, trace: &RawTrace) -> Vec<usize> {
        resolve_trace(&self.index, trace)
    }
}

fn resolve_trace(index: &SyscallIndex, trace: &RawTrace) -> Vec<usize> {
    let by_symbol: Vec<usize> = trace.symbols().iter().map(|s| index.resolve(s)).collect();
    trace.codes().iter().map(|&c| by_symbol[c as usize]).collect()
}

/// Builds the index from `counts`, then trains on `trace`.
pub fn train(trace: &RawTrace, counts: &CountTable, config: Config) -> Result<TrainedModel> {
    config.validate()?;
    let index = build_index(counts);
    let slots = resolve_trace(&index, trace);
    train_slots(index, &slots, config)
}

/// Trains on a stream already resolved against `index`.
///
/// Only full epochs are used; a trailing partial epoch is ignored. If the
/// trace runs out before the stopping rule fires, the model is returned
/// with [`TrainedModel::converged`] false.
pub fn train_slots(index: SyscallIndex, slots: &[usize], config: Config) -> Result<TrainedModel> {
    config.validate()?;
    let epoch_size = config.epoch_size;
    if slots.len() / epoch_size < 2 {
        return Err(Error::TooShort {
            calls: slots.len(),
            epoch_size,
        });
    }
    let n_s = index.n_s();
    if let Some(&bad) = slots.iter().find(|&&s| s >= n_s) {
        return Err(Error::Input(format!("slot {bad} out of range for n_s={n_s}")));
    }

    let mut db = BehaviorDb::new(n_s);
    let mut history = Vec::new();
    let mut previous: Option<ChangeVector> = None;
    let mut epochs_trained = 0;
    let mut converged = false;

    for (i, epoch) in slots.chunks_exact(epoch_size).enumerate() {
        let k = i + 1;
        let before = db.snapshot();
        db.insert_epoch(epoch, config.window);
        let change = db.diff(&before)?;
        epochs_trained = k;

        if let Some(prev) = &previous {
            let cos_theta = cosine_similarity(&change, prev);
            log::debug!("epoch {k}: cos={cos_theta:.9} entries={}", db.len());
            history.push(SimilarityRecord { k, cos_theta });
            let n = history.len();
            if n >= 2
                && history[n - 1].cos_theta >= config.train_threshold
                && history[n - 2].cos_theta >= config.train_threshold
            {
                converged = true;
                break;
            }
        }
        previous = Some(change);
    }

    if !converged {
        log::warn!(
            "training did not converge after {epochs_trained} epochs (Tt={})",
            config.train_threshold
        );
    }

    Ok(TrainedModel {
        index,
        db,
        config,
        history,
        epochs_trained,
        converged,
    })
}

impl TrainedModel {
    /// Serializes to the line-oriented model format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = String::new();
        let c = &self.config;
        // Writing to a String never fails.
        let _ = writeln!(out, "{MODEL_MAGIC} v{MODEL_VERSION}");
        let _ = writeln!(
            out,
            "w={} S={} Tt={} TdFrac={}",
            c.window, c.epoch_size, c.train_threshold, c.detect_fraction
        );
        let _ = writeln!(out, "ns={} retained={}", self.index.n_s(), self.index.retained());
        for name in self.index.slots() {
            out.push_str(name);
            out.push('\n');
        }
        out.push_str("@other\n");
        let _ = writeln!(out, "entries={}", self.db.len());
        for (bag, freq) in self.db.entries() {
            for (i, count) in bag.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{count}");
            }
            let _ = writeln!(out, ":{freq}");
        }
        let _ = writeln!(out, "history={}", self.history.len());
        for rec in &self.history {
            let _ = writeln!(out, "{} {:.9}", rec.k, rec.cos_theta);
        }
        let crc = crc32fast::hash(out.as_bytes());
        let _ = writeln!(out, "crc32={crc:08x}");
        out.into_bytes()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&self.to_bytes())?;
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header_end = bytes.iter().position(|&b| b == b'\n').unwrap_or(bytes.len());
        let header = std::str::from_utf8(&bytes[..header_end]).unwrap_or("");
        match header.strip_prefix(MODEL_MAGIC).map(str::trim) {
            Some(v) if v == format!("v{MODEL_VERSION}") => {}
            Some(v) if !v.is_empty() => {
                return Err(Error::model(
                    "version",
                    format!("unsupported version {v:?}, expected v{MODEL_VERSION}"),
                ))
            }
            _ => {
                return Err(Error::model(
                    "version",
                    format!("missing `{MODEL_MAGIC} v{MODEL_VERSION}` header"),
                ))
            }
        }

        let crc_at = find_crc_line(bytes).ok_or_else(|| {
            Error::model("checksum", "missing trailing crc32 line (truncated file?)")
        })?;
        let body = &bytes[..crc_at];
        let crc_line = std::str::from_utf8(&bytes[crc_at..])
            .map_err(|_| Error::model("checksum", "crc32 line is not ASCII"))?;
        let stored = crc_line
            .trim_end_matches('\n')
            .strip_prefix("crc32=")
            .and_then(|h| u32::from_str_radix(h, 16).ok())
            .ok_or_else(|| Error::model("checksum", format!("malformed line {crc_line:?}")))?;
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(Error::model(
                "checksum",
                format!("crc32 mismatch: stored {stored:08x}, computed {actual:08x}"),
            ));
        }

        let body = std::str::from_utf8(body)
            .map_err(|_| Error::model("header", "file is not valid UTF-8"))?;
        parse_body(body)
    }
}

/// Offset of the final `crc32=` line, which must end the file.
fn find_crc_line(bytes: &[u8]) -> Option<usize> {
    if !bytes.ends_with(b"\n") {
        return None;
    }
    let last = &bytes[..bytes.len() - 1];
    let start = last.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    bytes[start..].starts_with(b"crc32=").then_some(start)
}

fn field<'a>(token: Option<&'a str>, key: &str, section: &'static str) -> Result<&'a str> {
    token
        .and_then(|t| t.strip_prefix(key))
        .and_then(|t| t.strip_prefix('='))
        .ok_or_else(|| Error::model(section, format!("expected `{key}=<value>`")))
}

fn number<T: std::str::FromStr>(s: &str, section: &'static str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::model(section, format!("bad number {s:?}")))
}

fn parse_body(body: &str) -> Result<TrainedModel> {
    let mut lines = body.lines().skip(1);
    let mut next = |section: &'static str| {
        lines
            .next()
            .ok_or_else(|| Error::model(section, "unexpected end of file"))
    };

    let line = next("config")?;
    let mut toks = line.split_whitespace();
    let window = number(field(toks.next(), "w", "config")?, "config")?;
    let epoch_size = number(field(toks.next(), "S", "config")?, "config")?;
    let train_threshold = number(field(toks.next(), "Tt", "config")?, "config")?;
    let detect_fraction = number(field(toks.next(), "TdFrac", "config")?, "config")?;
    let config = Config::new(window, epoch_size, train_threshold, detect_fraction)
        .map_err(|e| Error::model("config", e.to_string()))?;

    let line = next("slots")?;
    let mut toks = line.split_whitespace();
    let n_s: usize = number(field(toks.next(), "ns", "slots")?, "slots")?;
    let retained: usize = number(field(toks.next(), "retained", "slots")?, "slots")?;
    if n_s != retained + 1 {
        return Err(Error::model("slots", format!("ns={n_s} but retained={retained}")));
    }
    let mut names = Vec::with_capacity(retained);
    loop {
        let name = next("slots")?;
        if name == "@other" {
            break;
        }
        if !crate::ingest::is_syscall_name(name) {
            return Err(Error::model("slots", format!("invalid slot name {name:?}")));
        }
        names.push(name.to_owned());
    }
    if names.len() != retained {
        return Err(Error::model(
            "slots",
            format!("retained={retained} but {} names listed", names.len()),
        ));
    }
    let index = SyscallIndex::from_slots(names);
    if index.retained() != retained {
        return Err(Error::model("slots", "duplicate or reserved slot name"));
    }

    let entries: usize = number(field(Some(next("entries")?), "entries", "entries")?, "entries")?;
    let mut db = BehaviorDb::new(n_s);
    let mut bag = Vec::with_capacity(n_s);
    for i in 0..entries {
        let line = next("entries")?;
        let (counts, freq) = line
            .split_once(':')
            .ok_or_else(|| Error::model("entries", format!("entry {i}: missing ':'")))?;
        bag.clear();
        for tok in counts.split_whitespace() {
            bag.push(number::<u16>(tok, "entries")?);
        }
        let freq: u64 = number(freq.trim(), "entries")?;
        if bag.iter().map(|&c| c as usize).sum::<usize>() != config.window {
            return Err(Error::model("entries", format!("entry {i}: counts do not sum to w")));
        }
        db.push_entry(&bag, freq)
            .map_err(|e| Error::model("entries", format!("entry {i}: {e}")))?;
    }

    let n_hist: usize = number(field(Some(next("history")?), "history", "history")?, "history")?;
    let mut history = Vec::with_capacity(n_hist);
    for i in 0..n_hist {
        let line = next("history")?;
        let (k, cos) = line
            .split_once(' ')
            .ok_or_else(|| Error::model("history", format!("record {i}: expected `k cos`")))?;
        let k: usize = number(k, "history")?;
        let cos_theta: f64 = number(cos.trim(), "history")?;
        if k != i + 2 || !(-1.0..=1.0).contains(&cos_theta) {
            return Err(Error::model("history", format!("record {i}: bad values {line:?}")));
        }
        history.push(SimilarityRecord { k, cos_theta });
    }
    if let Ok(extra) = next("trailer") {
        return Err(Error::model("trailer", format!("unexpected line {extra:?}")));
    }

    let n = history.len();
    let converged = n >= 2
        && history[n - 1].cos_theta >= config.train_threshold
        && history[n - 2].cos_theta >= config.train_threshold;

    Ok(TrainedModel {
        index,
        db,
        config,
        history,
        epochs_trained: n + 1,
        converged,
    })
}
