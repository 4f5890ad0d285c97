//! Offline anomaly detection over system-call traces using bags of system
//! calls (BoSC) collected with a sliding window.
//!
//! The pipeline is:
//!
//! 1. [`ingest`] turns tracer output into a plain syscall-name stream and a
//!    count table.
//! 2. [`catalog`] maps names to BoSC slots, folding rare names into `other`.
//! 3. [`engine`] slides a window over each epoch and keeps the
//!    normal-behavior frequency database.
//! 4. [`trainer`] grows the database epoch by epoch until consecutive
//!    frequency-change vectors agree, then freezes it into a model.
//! 5. [`detector`] counts unseen bags per epoch and raises anomaly flags.
//! 6. [`evaluator`] turns verdicts plus ground truth into TPR/FPR.
//!
//! [`synth`] produces deterministic labeled traces for experiments and
//! [`cli`] wires everything behind the `boscids` binary.

pub mod catalog;
pub mod cli;
pub mod config;
pub mod detector;
pub mod engine;
pub mod error;
pub mod evaluator;
pub mod ingest;
pub mod synth;
pub mod trainer;

pub use catalog::SyscallIndex;
pub use config::Config;
pub use detector::{detect, detect_slots, scan_epoch, DetectionReport, EpochVerdict};
pub use engine::{bag_of, epoch_windows, BehaviorDb, Bosc, ChangeVector, DbSnapshot};
pub use error::{Error, Result};
pub use evaluator::{compute_metrics, Granularity, Label, LabeledCorpus, Metrics};
pub use ingest::{count_table, ingest, parse_line, CountTable, LineKind, RawTrace, RawTraceLine};
pub use synth::{gen_anomalous, gen_normal, InjectionMode, InjectionSpec, SourceSpec};
pub use trainer::{cosine_similarity, train, train_slots, SimilarityRecord, TrainedModel};
