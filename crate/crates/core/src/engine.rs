//! Sliding-window bags of system calls and the normal-behavior database.

use std::collections::HashMap;
use std::fmt;
use std::slice;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Count vector over the slots of a [`crate::SyscallIndex`]. Two bags are
/// the same bag iff their count vectors are equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bosc(Box<[u16]>);

impl Bosc {
    pub fn from_counts(counts: Vec<u16>) -> Self {
        Bosc(counts.into_boxed_slice())
    }

    pub fn counts(&self) -> &[u16] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sum of all counts, i.e. the window size that produced the bag.
    pub fn total(&self) -> usize {
        self.0.iter().map(|&c| c as usize).sum()
    }
}

impl AsRef<[u16]> for Bosc {
    fn as_ref(&self) -> &[u16] {
        &self.0
    }
}

impl fmt::Display for Bosc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str("]")
    }
}

/// Counts slot multiplicities in one window.
pub fn bag_of(window: &[usize], n_s: usize) -> Result<Bosc> {
    let mut counts = vec![0u16; n_s];
    for &slot in window {
        let c = counts.get_mut(slot).ok_or_else(|| {
            Error::Input(format!("slot {slot} out of range for n_s={n_s}"))
        })?;
        *c = c
            .checked_add(1)
            .ok_or_else(|| Error::Input("window too large for u16 counts".into()))?;
    }
    Ok(Bosc::from_counts(counts))
}

/// Stride-1 windows over one epoch. An epoch shorter than the window
/// yields nothing and reports itself via [`EpochWindows::is_short`].
#[derive(Debug, Clone)]
pub struct EpochWindows<'a> {
    inner: slice::Windows<'a, usize>,
    short: bool,
}

impl<'a> EpochWindows<'a> {
    pub fn is_short(&self) -> bool {
        self.short
    }
}

impl<'a> Iterator for EpochWindows<'a> {
    type Item = &'a [usize];

    fn next(&mut self) -> Option<Self::Item> {
        self.inner.next()
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.inner.size_hint()
    }
}

impl ExactSizeIterator for EpochWindows<'_> {}

pub fn epoch_windows(epoch: &[usize], window: usize) -> EpochWindows<'_> {
    assert!(window > 0, "window size must be positive");
    let short = epoch.len() < window;
    if short {
        log::debug!("epoch of {} calls is shorter than window {window}", epoch.len());
    }
    EpochWindows {
        inner: epoch.windows(window),
        short,
    }
}

/// Number of windows an epoch of `len` calls produces.
pub fn window_count(len: usize, window: usize) -> usize {
    (len + 1).saturating_sub(window)
}

/// Calls `f` with the bag of every window of `epoch`, maintaining the
/// counts incrementally (one decrement and one increment per step).
///
/// Panics if a slot is `>= n_s` or a count overflows `u16`.
pub fn for_each_bag(epoch: &[usize], window: usize, n_s: usize, mut f: impl FnMut(&[u16])) {
    if window == 0 || epoch.len() < window {
        return;
    }
    let mut counts = vec![0u16; n_s];
    for &slot in &epoch[..window] {
        counts[slot] += 1;
    }
    f(&counts);
    for (&out, &inc) in epoch.iter().zip(&epoch[window..]) {
        counts[out] -= 1;
        counts[inc] += 1;
        f(&counts);
    }
}

static NEXT_LINEAGE: AtomicU64 = AtomicU64::new(1);

fn fresh_lineage() -> u64 {
    NEXT_LINEAGE.fetch_add(1, Ordering::Relaxed)
}

/// Map from bag to frequency, remembering first-insertion order.
///
/// Entries are append-only, so a snapshot taken from this database is
/// always a prefix of its later states. Each database (and each clone)
/// carries its own lineage id; diffing against a snapshot from another
/// lineage is an error.
#[derive(Debug)]
pub struct BehaviorDb {
    n_s: usize,
    lineage: u64,
    index: HashMap<Arc<[u16]>, usize>,
    keys: Vec<Arc<[u16]>>,
    freqs: Vec<u64>,
}

impl Clone for BehaviorDb {
    fn clone(&self) -> Self {
        BehaviorDb {
            n_s: self.n_s,
            lineage: fresh_lineage(),
            index: self.index.clone(),
            keys: self.keys.clone(),
            freqs: self.freqs.clone(),
        }
    }
}

impl PartialEq for BehaviorDb {
    fn eq(&self, other: &Self) -> bool {
        self.n_s == other.n_s && self.keys == other.keys && self.freqs == other.freqs
    }
}

impl BehaviorDb {
    pub fn new(n_s: usize) -> Self {
        BehaviorDb {
            n_s,
            lineage: fresh_lineage(),
            index: HashMap::new(),
            keys: Vec::new(),
            freqs: Vec::new(),
        }
    }

    /// Bag length this database accepts.
    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Sum of all frequencies, i.e. the number of windows inserted.
    pub fn total(&self) -> u64 {
        self.freqs.iter().sum()
    }

    /// Increments the bag's frequency (inserting it at 1 if new) and
    /// returns the new frequency.
    pub fn insert(&mut self, bag: &[u16]) -> u64 {
        assert_eq!(bag.len(), self.n_s, "bag length must equal n_s");
        if let Some(&i) = self.index.get(bag) {
            self.freqs[i] += 1;
            return self.freqs[i];
        }
        self.push_new(bag, 1);
        1
    }

    fn push_new(&mut self, bag: &[u16], freq: u64) {
        let key: Arc<[u16]> = Arc::from(bag);
        self.index.insert(key.clone(), self.keys.len());
        self.keys.push(key);
        self.freqs.push(freq);
    }

    /// Appends a brand-new entry with a given frequency (model loading).
    pub(crate) fn push_entry(&mut self, bag: &[u16], freq: u64) -> Result<()> {
        if bag.len() != self.n_s {
            return Err(Error::Input(format!(
                "bag has {} slots, expected {}",
                bag.len(),
                self.n_s
            )));
        }
        if freq == 0 {
            return Err(Error::Input("zero frequency".into()));
        }
        if self.index.contains_key(bag) {
            return Err(Error::Input("duplicate bag".into()));
        }
        self.push_new(bag, freq);
        Ok(())
    }

    pub fn contains(&self, bag: &[u16]) -> bool {
        self.index.contains_key(bag)
    }

    pub fn frequency(&self, bag: &[u16]) -> Option<u64> {
        self.index.get(bag).map(|&i| self.freqs[i])
    }

    /// `(bag, frequency)` in first-insertion order.
    pub fn entries(&self) -> impl ExactSizeIterator<Item = (&[u16], u64)> + '_ {
        self.keys.iter().map(|k| &k[..]).zip(self.freqs.iter().copied())
    }

    /// Inserts every window bag of `epoch`; returns how many windows there were.
    pub fn insert_epoch(&mut self, epoch: &[usize], window: usize) -> usize {
        let mut n = 0;
        let n_s = self.n_s;
        for_each_bag(epoch, window, n_s, |bag| {
            self.insert(bag);
            n += 1;
        });
        n
    }

    pub fn snapshot(&self) -> DbSnapshot {
        DbSnapshot {
            lineage: self.lineage,
            freqs: self.freqs.clone(),
        }
    }

    /// Frequency change since `before`, indexed by this database's
    /// insertion order. Entries absent from the snapshot count from zero.
    pub fn diff(&self, before: &DbSnapshot) -> Result<ChangeVector> {
        if before.lineage != self.lineage {
            return Err(Error::Lineage(
                "snapshot was taken from a different database".into(),
            ));
        }
        if before.freqs.len() > self.freqs.len() {
            return Err(Error::Lineage(format!(
                "snapshot has {} entries, database only {}",
                before.freqs.len(),
                self.freqs.len()
            )));
        }
        let deltas = self
            .freqs
            .iter()
            .enumerate()
            .map(|(i, &after)| after as i64 - before.freqs.get(i).copied().unwrap_or(0) as i64)
            .collect();
        Ok(ChangeVector { deltas })
    }
}

pub fn db_diff(before: &DbSnapshot, after: &BehaviorDb) -> Result<ChangeVector> {
    after.diff(before)
}

/// Frozen copy of a database's frequencies at one point in time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DbSnapshot {
    lineage: u64,
    freqs: Vec<u64>,
}

impl DbSnapshot {
    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }
}

/// Per-entry frequency deltas over one epoch (`C_k`).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChangeVector {
    pub deltas: Vec<i64>,
}

impl ChangeVector {
    pub fn new(deltas: Vec<i64>) -> Self {
        ChangeVector { deltas }
    }

    /// Number of database entries after the epoch (`n_k`).
    pub fn n_k(&self) -> usize {
        self.deltas.len()
    }

    pub fn sum(&self) -> i64 {
        self.deltas.iter().sum()
    }
}
