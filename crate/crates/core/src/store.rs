//! On-disk store: canonical JSON snapshot, newline-delimited audit log and
//! a lock file enforcing a single writer.
//!
//! ```text
//! <dir>/store.json     {"digest":..,"format_version":1,"state":{..}}
//! <dir>/audit.ndjson   one AuditEvent per line, seq 1, 2, 3, ...
//! <dir>/store.lock     present while a writer holds the store
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::audit::{AuditEvent, ReplayError};
use crate::canonical::{digest_hex, fnv1a64, to_canonical_string, value_to_canonical_string};
use crate::domain::{Category, DomainError};
use crate::ids::{AchievementId, ResourceId};
use crate::portal::{Clock, NewAchievement, Portal};
use crate::state::State;

pub const FORMAT_VERSION: u64 = 1;
pub const SNAPSHOT_FILE: &str = "store.json";
pub const AUDIT_FILE: &str = "audit.ndjson";
pub const LOCK_FILE: &str = "store.lock";
pub const IMPORT_HEADER: [&str; 6] = ["owner", "category", "year", "attr_name", "attr_value", "evidence_uri"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("snapshot digest does not match its content")]
    DigestMismatch,
    #[error("snapshot format version {0} is not supported")]
    SchemaVersionUnsupported(u64),
    #[error("integrity violation: {0}")]
    IntegrityViolation(String),
    #[error("import header must be {expected}, found {found}")]
    HeaderMismatch { expected: String, found: String },
    #[error("store {0} is locked by another writer")]
    StoreLocked(PathBuf),
    #[error("no store at {0}")]
    NotInitialized(PathBuf),
    #[error("a store already exists at {0}")]
    AlreadyInitialized(PathBuf),
    #[error("malformed audit log: {0}")]
    MalformedAudit(String),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Io(_) => "IO_ERROR",
            Self::DigestMismatch => "DIGEST_MISMATCH",
            Self::SchemaVersionUnsupported(_) => "SCHEMA_VERSION_UNSUPPORTED",
            Self::IntegrityViolation(_) => "INTEGRITY_VIOLATION",
            Self::HeaderMismatch { .. } => "HEADER_MISMATCH",
            Self::StoreLocked(_) => "STORE_LOCKED",
            Self::NotInitialized(_) => "STORE_NOT_INITIALIZED",
            Self::AlreadyInitialized(_) => "STORE_EXISTS",
            Self::MalformedAudit(_) => "MALFORMED_AUDIT",
            Self::Replay(e) => e.code(),
        }
    }
}

impl From<io::Error> for StoreError {
    fn from(e: io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

/// Canonical serialization of a state.
pub fn state_bytes(state: &State) -> Vec<u8> {
    to_canonical_string(state)
        .expect("state serializes")
        .into_bytes()
}

pub fn state_digest(state: &State) -> String {
    digest_hex(fnv1a64(&state_bytes(state)))
}

#[derive(Serialize)]
struct SnapshotOut<'a> {
    digest: String,
    format_version: u64,
    state: &'a State,
}

/// Snapshot file contents for `state`.
pub fn encode_snapshot(state: &State) -> Vec<u8> {
    let out = SnapshotOut {
        digest: state_digest(state),
        format_version: FORMAT_VERSION,
        state,
    };
    let mut bytes = to_canonical_string(&out).expect("snapshot serializes").into_bytes();
    bytes.push(b'\n');
    bytes
}

/// Parse and verify snapshot bytes.
pub fn decode_snapshot(bytes: &[u8]) -> Result<State, StoreError> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|_| StoreError::DigestMismatch)?;
    let version = doc
        .get("format_version")
        .and_then(Value::as_u64)
        .ok_or(StoreError::DigestMismatch)?;
    if version != FORMAT_VERSION {
        return Err(StoreError::SchemaVersionUnsupported(version));
    }
    let digest = doc.get("digest").and_then(Value::as_str).ok_or(StoreError::DigestMismatch)?;
    let raw_state = doc.get("state").ok_or(StoreError::DigestMismatch)?;
    let canonical = value_to_canonical_string(raw_state);
    if digest_hex(fnv1a64(canonical.as_bytes())) != digest {
        return Err(StoreError::DigestMismatch);
    }
    let state: State = serde_json::from_value(raw_state.clone())
        .map_err(|e| StoreError::IntegrityViolation(e.to_string()))?;
    state.check_integrity().map_err(StoreError::IntegrityViolation)?;
    Ok(state)
}

/// Write `contents` to `path` via a temporary file and rename.
fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn save_snapshot(state: &State, path: &Path) -> Result<String, StoreError> {
    write_atomic(path, &encode_snapshot(state))?;
    Ok(state_digest(state))
}

pub fn load_snapshot(path: &Path) -> Result<State, StoreError> {
    let bytes = fs::read(path)?;
    decode_snapshot(&bytes)
}

/// Append events to an audit file and flush them to disk.
pub fn append_audit(path: &Path, events: &[AuditEvent]) -> Result<(), StoreError> {
    if events.is_empty() {
        return Ok(());
    }
    let mut buf = Vec::new();
    for ev in events {
        buf.extend(to_canonical_string(ev).expect("event serializes").into_bytes());
        buf.push(b'\n');
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&buf)?;
    f.sync_all()?;
    Ok(())
}

/// Read an audit file, checking that sequence numbers run 1, 2, 3, ...
pub fn read_audit(path: &Path) -> Result<Vec<AuditEvent>, StoreError> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out: Vec<AuditEvent> = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: AuditEvent = serde_json::from_str(&line)
            .map_err(|e| StoreError::MalformedAudit(format!("line {}: {e}", i + 1)))?;
        let expected = out.len() as u64 + 1;
        if ev.seq != expected {
            return Err(ReplayError::SequenceGap {
                expected,
                found: ev.seq,
            }
            .into());
        }
        out.push(ev);
    }
    Ok(out)
}

/// Exclusive writer lock, released on drop.
#[derive(Debug)]
pub struct StoreLock {
    path: PathBuf,
}

impl StoreLock {
    pub fn acquire(dir: &Path) -> Result<Self, StoreError> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(StoreError::StoreLocked(dir.to_path_buf())),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Outcome of replaying a store's audit log from genesis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub events: u64,
    pub snapshot_digest: String,
    pub replayed_digest: String,
    pub consistent: bool,
}

/// A store directory.
#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    lock: Option<StoreLock>,
}

impl Store {
    /// Create a store holding the genesis state and its audit events.
    pub fn init(dir: &Path, clock: Clock) -> Result<(Self, State), StoreError> {
        fs::create_dir_all(dir)?;
        if dir.join(SNAPSHOT_FILE).exists() || dir.join(AUDIT_FILE).exists() {
            return Err(StoreError::AlreadyInitialized(dir.to_path_buf()));
        }
        let lock = StoreLock::acquire(dir)?;
        let mut portal = Portal::genesis(clock);
        let store = Self {
            dir: dir.to_path_buf(),
            lock: Some(lock),
        };
        store.commit(&portal.take_pending(), portal.state())?;
        Ok((store, portal.into_state()))
    }

    /// Open for writing; fails with `StoreLocked` if another writer holds it.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        Self::check_exists(dir)?;
        let lock = StoreLock::acquire(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            lock: Some(lock),
        })
    }

    /// Open without taking the writer lock. `commit` is refused.
    pub fn open_read_only(dir: &Path) -> Result<Self, StoreError> {
        Self::check_exists(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            lock: None,
        })
    }

    fn check_exists(dir: &Path) -> Result<(), StoreError> {
        if dir.join(SNAPSHOT_FILE).is_file() {
            Ok(())
        } else {
            Err(StoreError::NotInitialized(dir.to_path_buf()))
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn is_writable(&self) -> bool {
        self.lock.is_some()
    }

    pub fn snapshot_path(&self) -> PathBuf {
        self.dir.join(SNAPSHOT_FILE)
    }

    pub fn audit_path(&self) -> PathBuf {
        self.dir.join(AUDIT_FILE)
    }

    /// Current state: the snapshot plus any audit events recorded after it
    /// (left behind if a previous writer stopped between the two writes).
    pub fn load(&self) -> Result<State, StoreError> {
        let mut state = load_snapshot(&self.snapshot_path())?;
        let events = read_audit(&self.audit_path())?;
        if (events.len() as u64) < state.audit_head {
            return Err(StoreError::IntegrityViolation(format!(
                "snapshot is at event {} but the audit log ends at {}",
                state.audit_head,
                events.len()
            )));
        }
        state.replay(&events[state.audit_head as usize..])?;
        Ok(state)
    }

    /// Persist new events and the state they produced. Events are durable
    /// before the snapshot is replaced.
    pub fn commit(&self, events: &[AuditEvent], state: &State) -> Result<String, StoreError> {
        if self.lock.is_none() {
            return Err(StoreError::Io("store is open read-only".into()));
        }
        append_audit(&self.audit_path(), events)?;
        save_snapshot(state, &self.snapshot_path())
    }

    pub fn audit(&self) -> Result<Vec<AuditEvent>, StoreError> {
        read_audit(&self.audit_path())
    }

    /// Replay the audit log from an empty state and compare with the snapshot.
    pub fn replay(&self) -> Result<ReplayReport, StoreError> {
        let snapshot = load_snapshot(&self.snapshot_path())?;
        let events = self.audit()?;
        let mut replayed = State::genesis();
        replayed.replay(&events[..(snapshot.audit_head as usize).min(events.len())])?;
        let snapshot_digest = state_digest(&snapshot);
        let replayed_digest = state_digest(&replayed);
        Ok(ReplayReport {
            events: snapshot.audit_head,
            consistent: snapshot_digest == replayed_digest,
            snapshot_digest,
            replayed_digest,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub line: u64,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ImportReport {
    pub imported: Vec<AchievementId>,
    pub errors: Vec<RowError>,
}

#[derive(Debug, Deserialize)]
struct ImportRow {
    owner: String,
    category: String,
    year: String,
    attr_name: String,
    attr_value: String,
    evidence_uri: String,
}

fn parse_row(portal: &Portal, row: &ImportRow) -> Result<NewAchievement, DomainError> {
    let owner = ResourceId::new(row.owner.trim())?;
    let category: Category = row
        .category
        .trim()
        .parse()
        .map_err(|_| DomainError::SchemaViolation(format!("unknown category {:?}", row.category)))?;
    let year: i32 = row
        .year
        .trim()
        .parse()
        .map_err(|_| DomainError::SchemaViolation(format!("year {:?} is not an integer", row.year)))?;
    let mut attributes = std::collections::BTreeMap::new();
    let name = row.attr_name.trim();
    if !name.is_empty() {
        let ty = portal
            .state()
            .schema
            .attribute_type(category, name)
            .ok_or_else(|| DomainError::SchemaViolation(format!("attribute {name:?} is not declared for category {category}")))?;
        let value = ty.parse_value(&row.attr_value).ok_or_else(|| {
            DomainError::SchemaViolation(format!("value {:?} does not fit attribute {name:?}", row.attr_value))
        })?;
        attributes.insert(name.to_string(), value);
    }
    let evidence = row.evidence_uri.trim();
    Ok(NewAchievement {
        owner,
        category,
        attributes,
        year,
        evidence_uri: (!evidence.is_empty()).then(|| evidence.to_string()),
        verified_by: None,
    })
}

impl Portal {
    /// Attach one achievement per CSV row. Invalid rows are reported with
    /// their line number; with `atomic` any invalid row cancels the import.
    pub fn import_achievements(&mut self, input: impl Read, atomic: bool) -> Result<ImportReport, StoreError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::Headers).from_reader(input);
        let header = rdr
            .headers()
            .map_err(|e| StoreError::HeaderMismatch {
                expected: IMPORT_HEADER.join(","),
                found: e.to_string(),
            })?
            .clone();
        if header.iter().ne(IMPORT_HEADER) {
            return Err(StoreError::HeaderMismatch {
                expected: IMPORT_HEADER.join(","),
                found: header.iter().collect::<Vec<_>>().join(","),
            });
        }
        let saved = (self.state().clone(), self.pending().len());
        let mut report = ImportReport::default();
        for record in rdr.records() {
            let (line, result) = match record {
                Ok(rec) => {
                    let line = rec.position().map_or(0, |p| p.line());
                    let parsed = rec
                        .deserialize::<ImportRow>(Some(&header))
                        .map_err(|e| DomainError::SchemaViolation(e.to_string()))
                        .and_then(|row| parse_row(self, &row))
                        .and_then(|req| self.attach_achievement(req));
                    (line, parsed)
                }
                Err(e) => (
                    e.position().map_or(0, |p| p.line()),
                    Err(DomainError::SchemaViolation(e.to_string())),
                ),
            };
            match result {
                Ok(a) => report.imported.push(a.id),
                Err(e) => report.errors.push(RowError {
                    line,
                    code: e.code().to_string(),
                    message: e.to_string(),
                }),
            }
        }
        if atomic && !report.errors.is_empty() {
            self.restore(saved.0, saved.1);
            report.imported.clear();
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_bytes_are_canonical() {
        let s = State::genesis();
        let a = encode_snapshot(&s);
        let b = encode_snapshot(&s.clone());
        assert_eq!(a, b);
        assert_eq!(decode_snapshot(&a).unwrap(), s);
        assert!(a.starts_with(b"{\"digest\":\""));
    }

    #[test]
    fn version_is_checked_before_digest() {
        let s = State::genesis();
        let text = String::from_utf8(encode_snapshot(&s)).unwrap();
        let bumped = text.replace("\"format_version\":1", "\"format_version\":9");
        assert_eq!(
            decode_snapshot(bumped.as_bytes()).unwrap_err(),
            StoreError::SchemaVersionUnsupported(9)
        );
    }

    #[test]
    fn garbage_is_a_digest_mismatch() {
        assert_eq!(decode_snapshot(b"{not json").unwrap_err(), StoreError::DigestMismatch);
    }
}
