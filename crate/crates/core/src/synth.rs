//! Deterministic synthetic workloads.
//!
//! Normal traces are order-1 Markov walks over a syscall alphabet. Anomalous
//! traces are normal traces with selected epochs partly overwritten.
//!
//! All randomness comes from ChaCha20 (RFC 8439 block function, 20 rounds)
//! keyed with the 64-bit seed in little-endian order followed by 24 zero
//! bytes. Per-epoch injection streams use the same key with the ChaCha
//! stream id set to `epoch + 1`. Floats are drawn as the top 53 bits of a
//! `u64` and bounded integers by rejection sampling, so output does not
//! depend on any distribution code outside this module.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::evaluator::Label;
use crate::ingest::{is_syscall_name, RawTrace};

/// Names used (in this order) for generated alphabets.
const SYSCALL_NAMES: &[&str] = &[
    "read", "write", "futex", "epoll_wait", "recvfrom", "sendto", "poll", "lseek", "pread64",
    "pwrite64", "fstat", "close", "openat", "mmap", "munmap", "mprotect", "brk", "clock_gettime",
    "gettimeofday", "select", "fcntl", "ioctl", "getpid", "rt_sigaction", "rt_sigprocmask",
    "accept", "accept4", "setsockopt", "getsockopt", "shutdown", "fsync", "fdatasync", "madvise",
    "nanosleep", "sched_yield", "stat", "lstat", "access", "getdents64", "unlink", "rename",
    "mkdir", "rmdir", "readlink", "dup", "dup2", "pipe", "socket", "connect", "bind", "listen",
    "getsockname", "getpeername", "writev", "readv", "sendmsg", "recvmsg", "clone", "wait4",
    "exit_group", "set_robust_list", "getrusage", "times", "sysinfo", "uname", "getuid",
    "geteuid", "getgid", "getegid", "statfs", "fstatfs", "ftruncate", "fallocate", "io_submit",
    "io_getevents", "eventfd2", "timerfd_settime", "prctl", "arch_prctl", "sched_getaffinity",
];

/// Names that never appear in generated alphabets; used for injected
/// novel calls.
const NOVEL_NAMES: &[&str] = &[
    "ptrace", "execve", "init_module", "finit_module", "kexec_load", "setuid", "setgid",
    "chroot", "mount", "umount2", "pivot_root", "process_vm_writev", "keyctl", "bpf",
    "perf_event_open", "personality", "userfaultfd", "memfd_create",
];

/// Probability of a row's first (primary) successor.
const PRIMARY_WEIGHT: f64 = 0.95;
/// Number of successors per transition row, primary included.
const BRANCHING: usize = 2;

/// Seeded generator used throughout this module.
pub fn rng_for(seed: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    ChaCha20Rng::from_seed(key)
}

fn unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `0..n` (`n > 0`).
fn below(rng: &mut impl RngCore, n: usize) -> usize {
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let x = rng.next_u64();
        if x < zone {
            return (x % n) as usize;
        }
    }
}

/// First index whose cumulative weight exceeds `u`. Rounding can leave
/// `u` past the last entry; then the last positive-weight index wins.
fn pick(cumulative: &[f64], u: f64) -> usize {
    let i = cumulative.partition_point(|&c| c <= u);
    if i < cumulative.len() {
        return i;
    }
    (0..cumulative.len())
        .rev()
        .find(|&j| cumulative[j] > if j == 0 { 0.0 } else { cumulative[j - 1] })
        .unwrap_or(0)
}

fn zipf_weights(n: usize, s: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|r| 1.0 / ((r + 1) as f64).powf(s)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn cumulative(row: &[f64]) -> Vec<f64> {
    row.iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

/// A Markov source over a syscall alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub alphabet: Vec<String>,
    /// Row-stochastic; `transition[i][j]` is P(next = j | current = i).
    pub transition: Vec<Vec<f64>>,
    /// Zipf exponent of the start-state distribution (and, for
    /// [`SourceSpec::synthetic`], of successor popularity).
    pub zipf_s: f64,
    pub seed: u64,
}

impl SourceSpec {
    pub fn new(
        alphabet: Vec<String>,
        transition: Vec<Vec<f64>>,
        zipf_s: f64,
        seed: u64,
    ) -> Result<Self> {
        let spec = SourceSpec {
            alphabet,
            transition,
            zipf_s,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.alphabet.len();
        if n == 0 {
            return Err(Error::Input("empty alphabet".into()));
        }
        let mut seen = HashSet::with_capacity(n);
        for name in &self.alphabet {
            if !is_syscall_name(name) {
                return Err(Error::Input(format!("invalid syscall name {name:?}")));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Input(format!("duplicate alphabet name {name:?}")));
            }
        }
        if self.transition.len() != n {
            return Err(Error::Input(format!(
                "transition has {} rows for {n} names",
                self.transition.len()
            )));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Input(format!("transition row {i} has {} columns", row.len())));
            }
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::Input(format!("transition row {i} has a bad probability")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Input(format!("transition row {i} sums to {sum}")));
            }
        }
        if !(self.zipf_s.is_finite() && self.zipf_s >= 0.0) {
            return Err(Error::Input(format!("zipf exponent {} must be >= 0", self.zipf_s)));
        }
        Ok(())
    }

    /// A sparse random source over the first `names` entries of a built-in
    /// syscall list (`names` up to 80; beyond that, `sc_<n>` names).
    ///
    /// Each row has a few successors drawn by Zipf popularity, with most
    /// of the mass on the first one, so hot calls dominate and the walk
    /// settles into a handful of recurring loops.
    pub fn synthetic(names: usize, zipf_s: f64, seed: u64) -> Result<Self> {
        if names == 0 {
            return Err(Error::Input("alphabet size must be positive".into()));
        }
        let alphabet: Vec<String> = (0..names)
            .map(|i| match SYSCALL_NAMES.get(i) {
                Some(name) => (*name).to_owned(),
                None => format!("sc_{i}"),
            })
            .collect();
        let popularity = zipf_weights(names, zipf_s);
        let mut rng = rng_for(seed);
        let branching = BRANCHING.min(names);

        let mut transition = Vec::with_capacity(names);
        for _ in 0..names {
            // weighted sampling without replacement
            let mut weights = popularity.clone();
            let mut successors = Vec::with_capacity(branching);
            for _ in 0..branching {
                let total: f64 = weights.iter().sum();
                let cum = cumulative(&weights);
                let j = pick(&cum, unit(&mut rng) * total);
                successors.push(j);
                weights[j] = 0.0;
            }
            let mut row = vec![0.0; names];
            if branching == 1 {
                row[successors[0]] = 1.0;
            } else {
                row[successors[0]] = PRIMARY_WEIGHT;
                let rest = (1.0 - PRIMARY_WEIGHT) / (branching - 1) as f64;
                for &j in &successors[1..] {
                    row[j] = rest;
                }
            }
            transition.push(row);
        }
        Self::new(alphabet, transition, zipf_s, seed)
    }

    /// Same transition matrix, different walk seed.
    pub fn reseeded(&self, seed: u64) -> Self {
        SourceSpec {
            seed,
            ..self.clone()
        }
    }

    fn cumulative_rows(&self) -> Vec<Vec<f64>> {
        self.transition.iter().map(|row| cumulative(row)).collect()
    }
}

/// Walk of `total_calls` steps as alphabet indices.
fn walk(spec: &SourceSpec, total_calls: usize) -> Vec<u32> {
    let rows = spec.cumulative_rows();
    let start = cumulative(&zipf_weights(spec.alphabet.len(), spec.zipf_s));
    let mut rng = rng_for(spec.seed);
    let mut out = Vec::with_capacity(total_calls);
    if total_calls == 0 {
        return out;
    }
    let mut state = pick(&start, unit(&mut rng));
    out.push(state as u32);
    for _ in 1..total_calls {
        state = pick(&rows[state], unit(&mut rng));
        out.push(state as u32);
    }
    out
}

fn trace_from_walk(spec: &SourceSpec, codes: &[u32]) -> RawTrace {
    let mut trace = RawTrace::with_capacity(codes.len());
    for name in &spec.alphabet {
        trace.intern(name);
    }
    for &c in codes {
        trace.push_symbol(c);
    }
    trace.meta.source = format!("synthetic seed={}", spec.seed);
    trace
}

/// Markov walk over the alphabet, fully determined by `spec.seed`.
pub fn gen_normal(spec: &SourceSpec, total_calls: usize) -> Result<RawTrace> {
    spec.validate()?;
    if total_calls == 0 {
        return Err(Error::Input("total_calls must be positive".into()));
    }
    Ok(trace_from_walk(spec, &walk(spec, total_calls)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InjectionMode {
    /// Random positions replaced by names outside the alphabet.
    NovelNames,
    /// A contiguous stretch walked with a relabeled transition matrix.
    ShuffledTransitions,
    /// A contiguous stretch tiled with a short repeated motif.
    BurstRepeat,
}

impl InjectionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            InjectionMode::NovelNames => "novel_names",
            InjectionMode::ShuffledTransitions => "shuffled_transitions",
            InjectionMode::BurstRepeat => "burst_repeat",
        }
    }
}

impl FromStr for InjectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "novel_names" => Ok(InjectionMode::NovelNames),
            "shuffled_transitions" => Ok(InjectionMode::ShuffledTransitions),
            "burst_repeat" => Ok(InjectionMode::BurstRepeat),
            other => Err(Error::Input(format!("unknown injection mode {other:?}"))),
        }
    }
}

impl fmt::Display for InjectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectionSpec {
    pub target_epochs: BTreeSet<usize>,
    pub mode: InjectionMode,
    /// Fraction of each target epoch's calls that is overwritten, in (0, 1].
    pub intensity: f64,
    /// Epoch partition the targets refer to.
    pub epoch_size: usize,
}

impl InjectionSpec {
    fn validate(&self, total_calls: usize) -> Result<usize> {
        if !(self.intensity > 0.0 && self.intensity <= 1.0) {
            return Err(Error::Input(format!(
                "intensity {} not in (0, 1]",
                self.intensity
            )));
        }
        if self.epoch_size == 0 {
            return Err(Error::Input("epoch size must be positive".into()));
        }
        let epochs = total_calls.div_ceil(self.epoch_size);
        if let Some(&bad) = self.target_epochs.iter().find(|&&e| e >= epochs) {
            return Err(Error::Input(format!(
                "target epoch {bad} out of range (trace has {epochs} epochs)"
            )));
        }
        Ok(epochs)
    }
}

/// Normal trace with the target epochs partly overwritten, plus one label
/// per epoch (the trailing partial epoch included).
pub fn gen_anomalous(
    spec: &SourceSpec,
    total_calls: usize,
    inj: &InjectionSpec,
) -> Result<(RawTrace, Vec<Label>)> {
    spec.validate()?;
    if total_calls == 0 {
        return Err(Error::Input("total_calls must be positive".into()));
    }
    let epochs = inj.validate(total_calls)?;
    let mut codes = walk(spec, total_calls);
    let mut trace = trace_from_walk(spec, &[]);
    let n = spec.alphabet.len();

    let novel: Vec<u32> = {
        let alphabet: HashSet<&str> = spec.alphabet.iter().map(String::as_str).collect();
        let mut pool: Vec<String> = NOVEL_NAMES
            .iter()
            .filter(|name| !alphabet.contains(**name))
            .map(|s| (*s).to_owned())
            .collect();
        let mut k = 0;
        while pool.len() < 4 {
            let name = format!("novel_{k}");
            if !alphabet.contains(name.as_str()) {
                pool.push(name);
            }
            k += 1;
        }
        pool.iter().map(|name| trace.intern(name)).collect()
    };
    let rows = spec.cumulative_rows();

    for &e in &inj.target_epochs {
        let start = e * inj.epoch_size;
        let end = (start + inj.epoch_size).min(total_calls);
        let len = end - start;
        let count = ((inj.intensity * len as f64).round() as usize).clamp(1, len);
        let mut rng = rng_for(spec.seed);
        rng.set_stream(e as u64 + 1);
        match inj.mode {
            InjectionMode::NovelNames => {
                // partial Fisher-Yates over positions
                let mut positions: Vec<usize> = (0..len).collect();
                for i in 0..count {
                    let j = i + below(&mut rng, len - i);
                    positions.swap(i, j);
                    codes[start + positions[i]] = novel[below(&mut rng, novel.len())];
                }
            }
            InjectionMode::ShuffledTransitions => {
                let offset = below(&mut rng, len - count + 1);
                let mut perm: Vec<usize> = (0..n).collect();
                for i in (1..n).rev() {
                    perm.swap(i, below(&mut rng, i + 1));
                }
                let mut inverse = vec![0; n];
                for (i, &p) in perm.iter().enumerate() {
                    inverse[p] = i;
                }
                let mut state = match (start + offset).checked_sub(1) {
                    Some(p) if (codes[p] as usize) < n => codes[p] as usize,
                    _ => below(&mut rng, n),
                };
                let region = &mut codes[start..end];
                for slot in &mut region[offset..offset + count] {
                    let relabeled = pick(&rows[perm[state]], unit(&mut rng));
                    state = inverse[relabeled];
                    *slot = state as u32;
                }
            }
            InjectionMode::BurstRepeat => {
                let offset = below(&mut rng, len - count + 1);
                let motif_len = 2 + below(&mut rng, 4);
                let motif: Vec<u32> = (0..motif_len).map(|_| below(&mut rng, n) as u32).collect();
                let region = &mut codes[start + offset..start + offset + count];
                for (i, slot) in region.iter_mut().enumerate() {
                    *slot = motif[i % motif_len];
                }
            }
        }
    }

    for &c in &codes {
        trace.push_symbol(c);
    }
    trace.meta.source = format!(
        "synthetic seed={} inject={} intensity={}",
        spec.seed, inj.mode, inj.intensity
    );
    let labels = (0..epochs)
        .map(|e| {
            if inj.target_epochs.contains(&e) {
                Label::Malicious
            } else {
                Label::Normal
            }
        })
        .collect();
    Ok((trace, labels))
}
