//! Syscall name to BoSC slot mapping.

use std::collections::HashMap;

use crate::ingest::CountTable;

/// Reserved name of the catch-all slot.
pub const OTHER: &str = "other";

/// Frozen name→slot index. Frequent names get their own slot in count
/// order; everything else, including names never seen at build time,
/// resolves to the final `other` slot.
#[derive(Debug, Clone)]
pub struct SyscallIndex {
    slots: Vec<String>,
    lookup: HashMap<String, usize>,
    /// The rarity cutoff used at build time. Not persisted in model files.
    other_threshold: Option<u64>,
}

impl PartialEq for SyscallIndex {
    fn eq(&self, other: &Self) -> bool {
        self.slots == other.slots
    }
}

impl Eq for SyscallIndex {}

impl SyscallIndex {
    /// A name is retained iff its count is at least the number of distinct
    /// names in the table.
    pub fn build(counts: &CountTable) -> Self {
        let threshold = counts.len() as u64;
        let slots = counts
            .entries()
            .iter()
            .filter(|(name, count)| *count >= threshold && name != OTHER)
            .map(|(name, _)| name.clone())
            .collect();
        let mut index = Self::from_slots(slots);
        index.other_threshold = Some(threshold);
        index
    }

    /// Index with explicitly given slot names, in order. Duplicates and the
    /// reserved `other` name are dropped.
    pub fn from_slots(names: Vec<String>) -> Self {
        let mut slots = Vec::with_capacity(names.len());
        let mut lookup = HashMap::with_capacity(names.len());
        for name in names {
            if name == OTHER || lookup.contains_key(&name) {
                continue;
            }
            lookup.insert(name.clone(), slots.len());
            slots.push(name);
        }
        SyscallIndex {
            slots,
            lookup,
            other_threshold: None,
        }
    }

    pub fn resolve(&self, name: &str) -> usize {
        self.lookup.get(name).copied().unwrap_or(self.slots.len())
    }

    /// Retained names in slot order.
    pub fn slots(&self) -> &[String] {
        &self.slots
    }

    pub fn retained(&self) -> usize {
        self.slots.len()
    }

    pub fn other_slot(&self) -> usize {
        self.slots.len()
    }

    /// Total slots, `other` included.
    pub fn n_s(&self) -> usize {
        self.slots.len() + 1
    }

    pub fn other_threshold(&self) -> Option<u64> {
        self.other_threshold
    }

    pub fn slot_name(&self, slot: usize) -> Option<&str> {
        match slot.cmp(&self.slots.len()) {
            std::cmp::Ordering::Less => Some(&self.slots[slot]),
            std::cmp::Ordering::Equal => Some(OTHER),
            std::cmp::Ordering::Greater => None,
        }
    }
}

pub fn build_index(counts: &CountTable) -> SyscallIndex {
    SyscallIndex::build(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(pairs: &[(&str, u64)]) -> CountTable {
        CountTable::from_entries(pairs.iter().map(|(n, c)| (n.to_string(), *c)).collect()).unwrap()
    }

    #[test]
    fn drops_names_below_distinct_count() {
        let idx = build_index(&table(&[("read", 100), ("write", 80), ("futex", 2)]));
        assert_eq!(idx.slots(), ["read", "write"]);
        assert_eq!(idx.n_s(), 3);
        assert_eq!(idx.other_threshold(), Some(3));
        assert_eq!(idx.resolve("read"), 0);
        assert_eq!(idx.resolve("write"), 1);
        assert_eq!(idx.resolve("futex"), 2);
        assert_eq!(idx.resolve("ptrace"), 2);
    }

    #[test]
    fn empty_table_has_only_other() {
        let idx = build_index(&CountTable::default());
        assert_eq!(idx.n_s(), 1);
        assert_eq!(idx.other_slot(), 0);
        assert_eq!(idx.resolve("anything"), 0);
    }

    #[test]
    fn retention_is_inclusive_at_threshold() {
        let idx = build_index(&table(&[("a", 3), ("b", 3), ("c", 2)]));
        assert_eq!(idx.slots(), ["a", "b"]);
    }

    #[test]
    fn forty_two_frequent_names_give_43_slots() {
        let pairs: Vec<(String, u64)> = (0..42).map(|i| (format!("sc{i:02}"), 42 + i)).collect();
        let idx = build_index(&CountTable::from_entries(pairs).unwrap());
        assert_eq!(idx.retained(), 42);
        assert_eq!(idx.n_s(), 43);
        // one name at exactly 41 < 42 distinct would be dropped
        let mut pairs: Vec<(String, u64)> = (0..41).map(|i| (format!("sc{i:02}"), 100)).collect();
        pairs.push(("rare".into(), 41));
        let idx = build_index(&CountTable::from_entries(pairs).unwrap());
        assert_eq!(idx.retained(), 41);
        assert_eq!(idx.resolve("rare"), 41);
    }

    #[test]
    fn reserved_name_never_gets_a_slot() {
        let idx = SyscallIndex::from_slots(vec!["other".into(), "read".into(), "read".into()]);
        assert_eq!(idx.slots(), ["read"]);
        assert_eq!(idx.slot_name(1), Some(OTHER));
        assert_eq!(idx.slot_name(2), None);
    }
}
