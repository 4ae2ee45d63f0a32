//! Canonical event log, sessionization, dataset preparation and the
//! synthetic log generator.

mod dataset;
mod event;
mod session;
mod synthetic;

pub use dataset::{prepare_dataset, Dataset, DatasetStats, ItemVocab, PrepareReport, UserVocab, Vocab, MIN_QUERIES};
pub use event::{parse_events, write_events, Event, EventKind, ItemId, ParsedEvents, QueryId, SessionId, MAX_MALFORMED_FRACTION};
pub use session::{sessionize, Action, Grade, QueryBlock, Session, DEFAULT_GAP_MS};
pub use synthetic::{generate_synthetic, GeneratorCounts, GroundTruth, SyntheticConfig, SyntheticCorpus};

/// Parses, sessionizes and prepares a JSONL event stream in one go.
pub fn load_dataset<R: std::io::BufRead>(reader: R, gap_ms: i64) -> crate::Result<Dataset> {
    let parsed = parse_events(reader)?;
    prepare_dataset(&sessionize(&parsed.events, gap_ms))
}
