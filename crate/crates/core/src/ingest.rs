//! Tracer output ingestion.
//!
//! Turns strace-style text into an ordered stream of bare syscall names
//! (arguments, return values and pids stripped) and a count table sorted by
//! occurrence. Lines that do not parse are tallied as garbage and skipped.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Classification of one line of tracer output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LineKind {
    Call,
    Unfinished,
    Resumed,
    Signal,
    Exit,
    Garbage,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTraceLine {
    pub kind: LineKind,
    pub pid: Option<u32>,
    pub name: Option<String>,
}

impl RawTraceLine {
    fn bare(kind: LineKind, pid: Option<u32>) -> Self {
        RawTraceLine {
            kind,
            pid,
            name: None,
        }
    }

    fn named(kind: LineKind, pid: Option<u32>, name: &str) -> Self {
        RawTraceLine {
            kind,
            pid,
            name: Some(name.to_owned()),
        }
    }
}

/// `[A-Za-z_][A-Za-z0-9_]*`
pub fn is_syscall_name(s: &str) -> bool {
    let mut bytes = s.bytes();
    match bytes.next() {
        Some(b) if b.is_ascii_alphabetic() || b == b'_' => {}
        _ => return false,
    }
    bytes.all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

/// Length of the identifier at the start of `s`, 0 if there is none.
fn ident_len(s: &str) -> usize {
    let bytes = s.as_bytes();
    match bytes.first() {
        Some(b) if b.is_ascii_alphabetic() || *b == b'_' => {}
        _ => return 0,
    }
    bytes
        .iter()
        .position(|b| !(b.is_ascii_alphanumeric() || *b == b'_'))
        .unwrap_or(bytes.len())
}

/// Strips `[pid N]`, a bare leading pid (`strace -f -o` style) and
/// timestamp columns. Returns the pid, if any, and the remainder.
fn strip_prefix(line: &str) -> (Option<u32>, &str) {
    let mut rest = line.trim_start();
    let mut pid = None;

    if let Some(after) = rest.strip_prefix("[pid") {
        if let Some(close) = after.find(']') {
            pid = after[..close].trim().parse().ok();
            rest = after[close + 1..].trim_start();
        }
    } else {
        let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
        if digits > 0
            && rest[digits..]
                .bytes()
                .next()
                .is_some_and(|b| b.is_ascii_whitespace())
        {
            pid = rest[..digits].parse().ok();
            rest = rest[digits..].trim_start();
        }
    }

    // -t / -tt / -ttt / -r columns: digits, ':' and '.' only.
    for _ in 0..2 {
        let len = rest
            .bytes()
            .take_while(|b| b.is_ascii_digit() || *b == b':' || *b == b'.')
            .count();
        if len == 0
            || !rest[len..]
                .bytes()
                .next()
                .is_some_and(|b| b.is_ascii_whitespace())
        {
            break;
        }
        rest = rest[len..].trim_start();
    }
    (pid, rest)
}

/// Classifies one line of strace output. Never fails: anything that does
/// not match a known shape is [`LineKind::Garbage`].
pub fn parse_line(line: &str) -> RawTraceLine {
    let line = line.trim_end();
    let (pid, rest) = strip_prefix(line);

    if rest.starts_with("--- ") && rest.ends_with(" ---") {
        return RawTraceLine::bare(LineKind::Signal, pid);
    }
    if rest.starts_with("+++ ") && rest.ends_with(" +++") {
        return RawTraceLine::bare(LineKind::Exit, pid);
    }
    if let Some(after) = rest.strip_prefix("<... ") {
        if let Some(end) = after.find(" resumed>") {
            let name = &after[..end];
            if is_syscall_name(name) {
                return RawTraceLine::named(LineKind::Resumed, pid, name);
            }
        }
        return RawTraceLine::bare(LineKind::Garbage, pid);
    }

    let len = ident_len(rest);
    if len > 0 && rest.as_bytes().get(len) == Some(&b'(') {
        let kind = if rest.contains("<unfinished ...>") {
            LineKind::Unfinished
        } else {
            LineKind::Call
        };
        return RawTraceLine::named(kind, pid, &rest[..len]);
    }
    RawTraceLine::bare(LineKind::Garbage, pid)
}

/// Where a trace came from and how much of it was discarded.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceMeta {
    pub source: String,
    pub lines: usize,
    pub garbage: usize,
}

impl fmt::Display for SourceMeta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} lines, {} garbage",
            self.source, self.lines, self.garbage
        )
    }
}

/// Ordered syscall-name stream. Names are interned; each call is stored as
/// a symbol id into [`RawTrace::symbols`].
#[derive(Debug, Clone, Default)]
pub struct RawTrace {
    symbols: Vec<String>,
    lookup: HashMap<String, u32>,
    calls: Vec<u32>,
    pub meta: SourceMeta,
}

impl PartialEq for RawTrace {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.iter().eq(other.iter())
    }
}

impl Eq for RawTrace {}

impl RawTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(calls: usize) -> Self {
        RawTrace {
            calls: Vec::with_capacity(calls),
            ..Self::default()
        }
    }

    /// Builds a trace from names. Invalid names are rejected.
    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut trace = RawTrace::new();
        for name in names {
            let name = name.as_ref();
            if !is_syscall_name(name) {
                return Err(Error::Input(format!("invalid syscall name {name:?}")));
            }
            trace.push(name);
        }
        Ok(trace)
    }

    /// Appends a call. The caller guarantees `name` is a valid syscall name.
    pub fn push(&mut self, name: &str) {
        let id = self.intern(name);
        self.calls.push(id);
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.lookup.get(name) {
            return id;
        }
        let id = u32::try_from(self.symbols.len()).expect("symbol table overflow");
        self.symbols.push(name.to_owned());
        self.lookup.insert(name.to_owned(), id);
        id
    }

    pub fn push_symbol(&mut self, id: u32) {
        assert!((id as usize) < self.symbols.len(), "unknown symbol {id}");
        self.calls.push(id);
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&str> {
        self.calls.get(i).map(|&id| self.symbols[id as usize].as_str())
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &str> + '_ {
        self.calls.iter().map(|&id| self.symbols[id as usize].as_str())
    }

    /// Distinct names in first-occurrence order.
    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn codes(&self) -> &[u32] {
        &self.calls
    }

    pub fn to_names(&self) -> Vec<String> {
        self.iter().map(str::to_owned).collect()
    }

    /// One name per line, LF-terminated.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        for name in self.iter() {
            out.write_all(name.as_bytes())?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a trace file (one name per line). Blank lines are skipped.
    pub fn read_from<R: BufRead>(reader: R, source: &str) -> Result<Self> {
        let mut trace = RawTrace::new();
        let mut lines = 0;
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            lines += 1;
            let name = line.trim();
            if name.is_empty() {
                continue;
            }
            if !is_syscall_name(name) {
                return Err(Error::Input(format!(
                    "{source}:{}: invalid syscall name {name:?}",
                    n + 1
                )));
            }
            trace.push(name);
        }
        trace.meta = SourceMeta {
            source: source.to_owned(),
            lines,
            garbage: 0,
        };
        Ok(trace)
    }
}

impl<S: AsRef<str>> Extend<S> for RawTrace {
    fn extend<T: IntoIterator<Item = S>>(&mut self, iter: T) {
        for name in iter {
            self.push(name.as_ref());
        }
    }
}

fn ingest_line(trace: &mut RawTrace, line: &str) {
    trace.meta.lines += 1;
    let parsed = parse_line(line);
    match parsed.kind {
        LineKind::Call | LineKind::Unfinished => {
            trace.push(parsed.name.as_deref().expect("call lines carry a name"))
        }
        LineKind::Garbage => trace.meta.garbage += 1,
        LineKind::Resumed | LineKind::Signal | LineKind::Exit => {}
    }
}

/// Extracts the call stream from tracer output lines.
///
/// An interrupted call is counted once, at its `<unfinished ...>` line; the
/// matching `<... resumed>` line is dropped.
pub fn ingest<I, S>(lines: I) -> RawTrace
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut trace = RawTrace::new();
    for line in lines {
        ingest_line(&mut trace, line.as_ref());
    }
    trace
}

/// [`ingest`] over a reader. Non-UTF-8 lines are treated as garbage; only
/// read failures are errors.
pub fn ingest_reader<R: BufRead>(mut reader: R, source: &str) -> Result<RawTrace> {
    let mut trace = RawTrace::new();
    trace.meta.source = source.to_owned();
    let mut buf = Vec::with_capacity(256);
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        match std::str::from_utf8(&buf) {
            Ok(line) => ingest_line(&mut trace, line),
            Err(_) => {
                trace.meta.lines += 1;
                trace.meta.garbage += 1;
            }
        }
    }
    if trace.meta.garbage > 0 {
        log::warn!("{}", trace.meta);
    }
    Ok(trace)
}

/// Distinct names with occurrence counts, sorted by count descending then
/// name ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountTable {
    entries: Vec<(String, u64)>,
}

impl CountTable {
    /// Sorts and validates arbitrary `(name, count)` pairs.
    pub fn from_entries(mut entries: Vec<(String, u64)>) -> Result<Self> {
        for (name, count) in &entries {
            if !is_syscall_name(name) {
                return Err(Error::Input(format!("invalid syscall name {name:?}")));
            }
            if *count == 0 {
                return Err(Error::Input(format!("zero count for {name:?}")));
            }
        }
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Input(format!("duplicate name {:?}", w[0].0)));
        }
        Ok(CountTable { entries })
    }

    pub fn entries(&self) -> &[(String, u64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|(_, c)| c).sum()
    }

    /// `name<TAB>count` per line, LF-terminated.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        for (name, count) in &self.entries {
            writeln!(out, "{name}\t{count}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R, source: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed = line
                .split_once('\t')
                .and_then(|(name, count)| Some((name, count.trim().parse::<u64>().ok()?)));
            match parsed {
                Some((name, count)) => entries.push((name.to_owned(), count)),
                None => {
                    return Err(Error::Input(format!(
                        "{source}:{}: expected name<TAB>count, got {line:?}",
                        n + 1
                    )))
                }
            }
        }
        Self::from_entries(entries)
    }
}

pub fn count_table(trace: &RawTrace) -> CountTable {
    let mut counts = vec![0u64; trace.symbols().len()];
    for &id in trace.codes() {
        counts[id as usize] += 1;
    }
    let mut entries: Vec<(String, u64)> = trace
        .symbols()
        .iter()
        .zip(counts)
        .filter(|(_, c)| *c > 0)
        .map(|(name, c)| (name.clone(), c))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    CountTable { entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kind(line: &str) -> LineKind {
        parse_line(line).kind
    }

    #[test]
    fn plain_call() {
        let l = parse_line(r#"read(3, "x"..., 1024) = 512"#);
        assert_eq!(l.kind, LineKind::Call);
        assert_eq!(l.name.as_deref(), Some("read"));
        assert_eq!(l.pid, None);
    }

    #[test]
    fn pid_prefixed_call() {
        let l = parse_line("[pid  1234] futex(0x7f..., FUTEX_WAIT) = -1 EAGAIN");
        assert_eq!(l.kind, LineKind::Call);
        assert_eq!(l.pid, Some(1234));
        assert_eq!(l.name.as_deref(), Some("futex"));
    }

    #[test]
    fn bare_pid_and_timestamps() {
        let l = parse_line("4321  12:01:02.123456 openat(AT_FDCWD, \"/etc\", O_RDONLY) = 3");
        assert_eq!(l.pid, Some(4321));
        assert_eq!(l.name.as_deref(), Some("openat"));
        let l = parse_line("1008333      0.000045 close(3) = 0");
        assert_eq!((l.pid, l.name.as_deref()), (Some(1008333), Some("close")));
        let l = parse_line("1700000000.123456 brk(NULL) = 0x55d");
        assert_eq!((l.pid, l.name.as_deref()), (None, Some("brk")));
    }

    #[test]
    fn resumed_and_unfinished() {
        let l = parse_line("<... read resumed> ) = 0");
        assert_eq!(l.kind, LineKind::Resumed);
        assert_eq!(l.name.as_deref(), Some("read"));
        let l = parse_line("[pid 7] read(3,  <unfinished ...>");
        assert_eq!(l.kind, LineKind::Unfinished);
        assert_eq!((l.pid, l.name.as_deref()), (Some(7), Some("read")));
        let l = parse_line("[pid 7] <... epoll_wait resumed>[], 1, 100) = 0");
        assert_eq!(l.kind, LineKind::Resumed);
        assert_eq!(l.name.as_deref(), Some("epoll_wait"));
    }

    #[test]
    fn signals_exits_garbage() {
        assert_eq!(kind("--- SIGCHLD {si_signo=SIGCHLD} ---"), LineKind::Signal);
        assert_eq!(kind("[pid 12] --- SIGSEGV {si_signo=SIGSEGV} ---"), LineKind::Signal);
        assert_eq!(kind("+++ exited with 0 +++"), LineKind::Exit);
        assert_eq!(kind("+++ killed by SIGKILL +++"), LineKind::Exit);
        assert_eq!(kind("1008333      0.000045 ???( <unfinished ...>"), LineKind::Garbage);
        assert_eq!(kind(""), LineKind::Garbage);
        assert_eq!(kind("% time     seconds  usecs/call     calls    errors syscall"), LineKind::Garbage);
        assert_eq!(kind("read (3)"), LineKind::Garbage);
        assert_eq!(kind("<... 9bad resumed>"), LineKind::Garbage);
    }

    #[test]
    fn non_call_lines_have_no_name() {
        for line in ["--- SIGCHLD ---", "+++ exited with 1 +++", "foo bar"] {
            assert!(parse_line(line).name.is_none(), "{line}");
        }
    }

    #[test]
    fn ingest_counts_interrupted_once() {
        let t = ingest([
            "open(\"/x\", O_RDONLY) = 3",
            "read(3, <unfinished ...>",
            "<... read resumed>) = 1",
            "close(3) = 0",
        ]);
        assert_eq!(t.to_names(), ["open", "read", "close"]);
        assert!(ingest(Vec::<&str>::new()).is_empty());
    }

    #[test]
    fn ingest_reader_tallies_garbage_and_bad_utf8() {
        let input: &[u8] = b"read(0) = 1\n\xff\xfe\nnonsense\r\nwrite(1) = 1\r\n";
        let t = ingest_reader(input, "mem").unwrap();
        assert_eq!(t.to_names(), ["read", "write"]);
        assert_eq!(t.meta.lines, 4);
        assert_eq!(t.meta.garbage, 2);
    }

    #[test]
    fn count_table_examples() {
        let t = RawTrace::from_names(["a", "b", "a"]).unwrap();
        assert_eq!(
            count_table(&t).entries(),
            &[("a".to_owned(), 2), ("b".to_owned(), 1)]
        );
        assert!(count_table(&RawTrace::new()).is_empty());
        let t = RawTrace::from_names(["y", "x", "y", "x"]).unwrap();
        assert_eq!(
            count_table(&t).entries(),
            &[("x".to_owned(), 2), ("y".to_owned(), 2)]
        );
    }

    #[test]
    fn count_table_file_round_trip() {
        let t = RawTrace::from_names(["b", "a", "b", "c"]).unwrap();
        let table = count_table(&t);
        let mut buf = Vec::new();
        table.write_to(&mut buf).unwrap();
        assert_eq!(buf, b"b\t2\na\t1\nc\t1\n");
        assert_eq!(CountTable::read_from(&buf[..], "mem").unwrap(), table);
        assert!(CountTable::read_from(&b"a 1\n"[..], "mem").is_err());
        assert!(CountTable::read_from(&b"a\t1\na\t2\n"[..], "mem").is_err());
    }

    #[test]
    fn trace_file_rejects_bad_names() {
        let err = RawTrace::read_from(&b"read\n1bad\n"[..], "t").unwrap_err();
        assert!(err.to_string().contains("t:2"), "{err}");
    }
}
