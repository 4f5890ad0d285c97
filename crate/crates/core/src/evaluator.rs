//! True/false positive rates against ground-truth epoch labels.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::detector::DetectionReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Normal,
    Malicious,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Malicious => "malicious",
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" | "N" => Ok(Label::Normal),
            "malicious" | "M" => Ok(Label::Malicious),
            other => Err(Error::Input(format!("unknown label {other:?}"))),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Writes a sidecar label file: `epoch_index<TAB>label` per line.
pub fn write_labels<W: Write>(labels: &[Label], mut out: W) -> Result<()> {
    for (i, label) in labels.iter().enumerate() {
        writeln!(out, "{i}\t{label}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a sidecar label file. Epoch indices must run 0, 1, 2, ...
pub fn read_labels<R: BufRead>(reader: R, source: &str) -> Result<Vec<Label>> {
    let mut labels = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Input(format!("{source}:{}: expected epoch_index<TAB>label", n + 1));
        let (idx, label) = line.split_once('\t').ok_or_else(bad)?;
        let idx: usize = idx.trim().parse().map_err(|_| bad())?;
        if idx != labels.len() {
            return Err(Error::Input(format!(
                "{source}:{}: epoch index {idx} out of sequence",
                n + 1
            )));
        }
        labels.push(label.trim().parse()?);
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledTrace {
    pub id: String,
    pub labels: Vec<Label>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabeledCorpus {
    pub items: Vec<LabeledTrace>,
}

impl LabeledCorpus {
    pub fn push(&mut self, id: impl Into<String>, labels: Vec<Label>) {
        self.items.push(LabeledTrace {
            id: id.into(),
            labels,
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Granularity {
    Epoch,
    Window,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Epoch => "epoch",
            Granularity::Window => "window",
        }
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epoch" => Ok(Granularity::Epoch),
            "window" => Ok(Granularity::Window),
            other => Err(Error::Input(format!(
                "unknown granularity {other:?}, expected epoch or window"
            ))),
        }
    }
}

/// TPR = tp / malicious, FPR = fp / normal. A rate with a zero
/// denominator is `None`, not 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub granularity: Granularity,
    pub n_tp: u64,
    pub n_fp: u64,
    pub n_malicious: u64,
    pub n_normal: u64,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
}

fn rate(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Aligns reports with labels by trace id and counts outcomes.
///
/// At epoch granularity each verdict is one unit. At window granularity
/// each scanned window is one unit, and a mismatched window counts as a
/// positive.
pub fn compute_metrics(
    reports: &[(String, DetectionReport)],
    corpus: &LabeledCorpus,
    granularity: Granularity,
) -> Result<Metrics> {
    let mut by_id: HashMap<&str, &DetectionReport> = HashMap::with_capacity(reports.len());
    for (id, report) in reports {
        if by_id.insert(id.as_str(), report).is_some() {
            return Err(Error::Alignment(format!("duplicate report for trace {id:?}")));
        }
    }
    if by_id.len() != corpus.items.len() {
        return Err(Error::Alignment(format!(
            "{} reports but {} labeled traces",
            by_id.len(),
            corpus.items.len()
        )));
    }

    let (mut tp, mut fp, mut malicious, mut normal) = (0u64, 0u64, 0u64, 0u64);
    for item in &corpus.items {
        let report = by_id
            .get(item.id.as_str())
            .ok_or_else(|| Error::Alignment(format!("no report for trace {:?}", item.id)))?;
        if report.verdicts.len() != item.labels.len() {
            return Err(Error::Alignment(format!(
                "trace {:?}: {} verdicts but {} labels",
                item.id,
                report.verdicts.len(),
                item.labels.len()
            )));
        }
        for (pos, (v, &label)) in report.verdicts.iter().zip(&item.labels).enumerate() {
            if v.epoch_index != pos {
                return Err(Error::Alignment(format!(
                    "trace {:?}: verdict {pos} is for epoch {}",
                    item.id, v.epoch_index
                )));
            }
            let (units, positives) = match granularity {
                Granularity::Epoch => (1, v.anomalous as u64),
                Granularity::Window => (v.windows_scanned as u64, v.mismatches as u64),
            };
            match label {
                Label::Malicious => {
                    malicious += units;
                    tp += positives;
                }
                Label::Normal => {
                    normal += units;
                    fp += positives;
                }
            }
        }
    }

    Ok(Metrics {
        granularity,
        n_tp: tp,
        n_fp: fp,
        n_malicious: malicious,
        n_normal: normal,
        tpr: rate(tp, malicious),
        fpr: rate(fp, normal),
    })
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "undefined".to_owned(), |r| format!("{r:.6}"))
}

impl Metrics {
    /// One-line human summary, e.g. `epoch level: TPR 100.00% (5/5), FPR 0.00% (0/340)`.
    pub fn summary(&self) -> String {
        let pct = |r: Option<f64>| r.map_or_else(|| "undefined".to_owned(), |r| format!("{:.2}%", r * 100.0));
        format!(
            "{} level: TPR {} ({}/{}), FPR {} ({}/{})",
            self.granularity.as_str(),
            pct(self.tpr),
            self.n_tp,
            self.n_malicious,
            pct(self.fpr),
            self.n_fp,
            self.n_normal
        )
    }
}

/// Machine-readable row.
impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "granularity={} tp={} fp={} malicious={} normal={} tpr={} fpr={}",
            self.granularity.as_str(),
            self.n_tp,
            self.n_fp,
            self.n_malicious,
            self.n_normal,
            fmt_rate(self.tpr),
            fmt_rate(self.fpr)
        )
    }
}
