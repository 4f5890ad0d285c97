#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use boscids::{
    count_table, gen_anomalous, gen_normal, train, Config, InjectionMode, InjectionSpec, Label,
    RawTrace, SourceSpec, TrainedModel,
};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// Every window's bag counted from scratch, windows confined to full
/// epochs. Returns frequencies keyed by bag and the order in which bags
/// were first seen.
pub fn brute_force_db(
    slots: &[usize],
    epoch_size: usize,
    window: usize,
    n_s: usize,
) -> (HashMap<Vec<u16>, u64>, Vec<Vec<u16>>) {
    let mut freqs: HashMap<Vec<u16>, u64> = HashMap::new();
    let mut order = Vec::new();
    let full = slots.len() / epoch_size * epoch_size;
    let mut e = 0;
    while e < full {
        let mut start = e;
        while start + window <= e + epoch_size {
            let mut bag = vec![0u16; n_s];
            for s in &slots[start..start + window] {
                bag[*s] += 1;
            }
            let f = freqs.entry(bag.clone()).or_insert(0);
            if *f == 0 {
                order.push(bag);
            }
            *f += 1;
            start += 1;
        }
        e += epoch_size;
    }
    (freqs, order)
}

/// Source used by the detection suites (seed 7, 64 names, Zipf 1.0).
pub fn suite_source() -> SourceSpec {
    SourceSpec::synthetic(64, 1.0, 7).unwrap()
}

/// Model trained at the default parameters on 100 clean epochs.
pub fn suite_model() -> TrainedModel {
    let config = Config::default();
    let clean = gen_normal(&suite_source(), 100 * config.epoch_size).unwrap();
    train(&clean, &count_table(&clean), config).unwrap()
}

/// Fresh walk (seed 8) over `epochs` epochs with burst_repeat injections
/// at intensity 0.5 into `targets`.
pub fn suite_test_trace(epochs: usize, targets: &[usize]) -> (RawTrace, Vec<Label>) {
    let epoch_size = Config::default().epoch_size;
    let inj = InjectionSpec {
        target_epochs: targets.iter().copied().collect::<BTreeSet<_>>(),
        mode: InjectionMode::BurstRepeat,
        intensity: 0.5,
        epoch_size,
    };
    gen_anomalous(&suite_source().reseeded(8), epochs * epoch_size, &inj).unwrap()
}
