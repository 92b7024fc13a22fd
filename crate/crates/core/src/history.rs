//! Per-user login history with a size cap and incrementally maintained
//! global counters.
//!
//! Writers serialize on one mutex; readers take [`HistorySnapshot`]s, which
//! are immutable and always reflect a state between two appends.
//!
//! # Log format
//!
//! A store can be attached to an append log: UTF-8, one JSON record per line,
//! each line terminated by `\n`.
//!
//! ```text
//! {"op":"append","entry":{"user":"alice","timestamp":1700000000,"seq":7,"features":{...}}}
//! {"op":"evict","user":"alice","seq":3}
//! ```
//!
//! `features` holds the [`NormalizedFeatures`] fields in declaration order.
//! Counters are not persisted; they are rebuilt from the entries on load.
//! Compaction rewrites the log with one `append` line per live entry.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::counters::GlobalCounters;
use crate::engine::ScoringContext;
use crate::error::StoreError;
use crate::model::{NormalizedFeatures, UserId};
use crate::reputation::IpReputation;

/// Default per-user history cap.
pub const DEFAULT_HISTORY_CAP: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoginHistoryEntry {
    pub user: UserId,
    /// UTC, seconds since the epoch. Stored, not scored.
    pub timestamp: i64,
    /// Strictly increasing across the store, hence per user.
    pub seq: u64,
    pub features: NormalizedFeatures,
}

impl AsRef<NormalizedFeatures> for LoginHistoryEntry {
    fn as_ref(&self) -> &NormalizedFeatures {
        &self.features
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum LogRecord {
    Append { entry: LoginHistoryEntry },
    Evict { user: UserId, seq: u64 },
}

#[derive(Debug, Clone, Default)]
struct State {
    users: HashMap<UserId, Vec<LoginHistoryEntry>>,
    counters: GlobalCounters,
    next_seq: u64,
}

impl State {
    fn apply(&mut self, record: LogRecord) -> Result<(), String> {
        match record {
            LogRecord::Append { entry } => {
                let list = self.users.entry(entry.user.clone()).or_default();
                if list.last().is_some_and(|last| last.seq >= entry.seq) {
                    return Err(format!("sequence {} not increasing for {}", entry.seq, entry.user));
                }
                self.counters.add(&entry.user, &entry.features);
                self.next_seq = self.next_seq.max(entry.seq + 1);
                list.push(entry);
            }
            LogRecord::Evict { user, seq } => {
                let list = self.users.get_mut(&user).ok_or_else(|| format!("evict for unknown user {user}"))?;
                let pos = list
                    .iter()
                    .position(|e| e.seq == seq)
                    .ok_or_else(|| format!("evict of missing entry {seq} for {user}"))?;
                let gone = list.remove(pos);
                if list.is_empty() {
                    self.users.remove(&user);
                }
                self.counters.remove(&gone.user, &gone.features);
            }
        }
        Ok(())
    }

    fn evict_oldest(&mut self, user: &UserId) -> Option<LoginHistoryEntry> {
        let list = self.users.get_mut(user)?;
        let gone = list.remove(0);
        if list.is_empty() {
            self.users.remove(user);
        }
        self.counters.remove(&gone.user, &gone.features);
        Some(gone)
    }

    fn entry_count(&self) -> usize {
        self.users.values().map(Vec::len).sum()
    }

    /// Live entries in sequence order.
    fn entries(&self) -> Vec<&LoginHistoryEntry> {
        let mut all: Vec<&LoginHistoryEntry> = self.users.values().flatten().collect();
        all.sort_by_key(|e| e.seq);
        all
    }
}

/// A consistent view of histories and counters.
#[derive(Debug, Clone)]
pub struct HistorySnapshot {
    state: Arc<State>,
}

impl HistorySnapshot {
    /// Entries of `user` in sequence order; empty for unknown users.
    pub fn user_history(&self, user: &UserId) -> &[LoginHistoryEntry] {
        self.state.users.get(user).map_or(&[], Vec::as_slice)
    }

    pub fn counters(&self) -> &GlobalCounters {
        &self.state.counters
    }

    pub fn users(&self) -> impl Iterator<Item = &UserId> {
        self.state.users.keys()
    }

    pub fn entry_count(&self) -> usize {
        self.state.entry_count()
    }

    pub fn entries(&self) -> Vec<&LoginHistoryEntry> {
        self.state.entries()
    }

    /// Counters rebuilt from scratch over the stored entries.
    pub fn recount(&self) -> GlobalCounters {
        GlobalCounters::recount(self.state.users.values().flatten().map(|e| (&e.user, &e.features)))
    }

    pub fn scoring_context<'a>(
        &'a self,
        user: &'a UserId,
        reputation: &'a dyn IpReputation,
    ) -> ScoringContext<'a, LoginHistoryEntry> {
        ScoringContext { user, history: self.user_history(user), counters: self.counters(), reputation }
    }
}

struct LogWriter {
    path: PathBuf,
    file: BufWriter<File>,
    lines: usize,
}

impl LogWriter {
    fn write(&mut self, records: &[LogRecord]) -> std::io::Result<()> {
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r).map_err(std::io::Error::other)?;
            buf.push(b'\n');
        }
        self.file.write_all(&buf)?;
        self.file.flush()?;
        self.lines += records.len();
        Ok(())
    }
}

pub struct HistoryStore {
    state: RwLock<Arc<State>>,
    writer: Mutex<Option<LogWriter>>,
    cap: Option<usize>,
}

impl std::fmt::Debug for HistoryStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HistoryStore").field("cap", &self.cap).finish_non_exhaustive()
    }
}

impl HistoryStore {
    /// In-memory store. `cap` of `None` keeps every entry.
    pub fn new(cap: Option<usize>) -> Self {
        HistoryStore { state: RwLock::new(Arc::new(State::default())), writer: Mutex::new(None), cap }
    }

    /// Loads `path` if it exists and attaches it as the append log.
    pub fn open(path: &Path, cap: Option<usize>) -> Result<Self, StoreError> {
        let store = HistoryStore::new(cap);
        if path.exists() {
            store.load(path)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let lines = if path.exists() { std::fs::read_to_string(path)?.lines().count() } else { 0 };
        *store.writer.lock() = Some(LogWriter { path: path.to_owned(), file: BufWriter::new(file), lines });
        Ok(store)
    }

    pub fn cap(&self) -> Option<usize> {
        self.cap
    }

    pub fn snapshot(&self) -> HistorySnapshot {
        HistorySnapshot { state: self.state.read().clone() }
    }

    pub fn user_history(&self, user: &UserId) -> Vec<LoginHistoryEntry> {
        self.snapshot().user_history(user).to_vec()
    }

    /// Stores a login and, when the user goes over the cap, evicts and
    /// returns their oldest entry. If the log write fails nothing changes.
    pub fn append(
        &self,
        user: &UserId,
        timestamp: i64,
        features: NormalizedFeatures,
    ) -> Result<Option<LoginHistoryEntry>, StoreError> {
        let mut writer = self.writer.lock();
        let current = self.state.read().clone();
        let entry = LoginHistoryEntry { user: user.clone(), timestamp, seq: current.next_seq, features };
        let held = current.users.get(user).map_or(0, Vec::len);
        let evict = match self.cap {
            Some(cap) if held + 1 > cap => current.users.get(user).and_then(|l| l.first()).map(|e| e.seq),
            _ => None,
        };
        drop(current);

        if let Some(log) = writer.as_mut() {
            let mut records = vec![LogRecord::Append { entry: entry.clone() }];
            if let Some(seq) = evict {
                records.push(LogRecord::Evict { user: user.clone(), seq });
            }
            log.write(&records)?;
        }

        let evicted = {
            let mut guard = self.state.write();
            let state = Arc::make_mut(&mut guard);
            state.apply(LogRecord::Append { entry }).expect("sequence numbers are issued in order");
            match self.cap {
                Some(cap) if state.users.get(user).map_or(0, Vec::len) > cap => state.evict_oldest(user),
                _ => None,
            }
        };

        if let Some(log) = writer.as_mut() {
            let live = self.state.read().entry_count();
            if log.lines > 2 * live + 1024 {
                let snapshot = self.snapshot();
                if let Err(e) = compact_into(&log.path, &snapshot).and_then(|_| reopen(log)) {
                    tracing::warn!(error = %e, "history log compaction failed");
                }
            }
        }
        Ok(evicted)
    }

    /// Writes the current state as a compacted log to `path`.
    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let _writer = self.writer.lock();
        compact_into(path, &self.snapshot())?;
        Ok(())
    }

    /// Replaces the in-memory state with the contents of a log file. On any
    /// error the store keeps its previous state.
    pub fn load(&self, path: &Path) -> Result<(), StoreError> {
        let text = std::fs::read_to_string(path)?;
        let mut state = parse_log(&text)?;
        if let Some(cap) = self.cap {
            let over: Vec<UserId> =
                state.users.iter().filter(|(_, l)| l.len() > cap).map(|(u, _)| u.clone()).collect();
            for user in over {
                while state.users.get(&user).map_or(0, Vec::len) > cap {
                    state.evict_oldest(&user);
                }
            }
        }
        let _writer = self.writer.lock();
        *self.state.write() = Arc::new(state);
        Ok(())
    }
}

fn parse_log(text: &str) -> Result<State, StoreError> {
    let mut state = State::default();
    if text.is_empty() {
        return Ok(state);
    }
    if !text.ends_with('\n') {
        return Err(StoreError::Corrupt { line: text.lines().count(), message: "truncated final record".into() });
    }
    for (idx, line) in text.lines().enumerate() {
        let corrupt = |message: String| StoreError::Corrupt { line: idx + 1, message };
        let record: LogRecord = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
        state.apply(record).map_err(corrupt)?;
    }
    Ok(state)
}

fn compact_into(path: &Path, snapshot: &HistorySnapshot) -> std::io::Result<()> {
    let tmp = path.with_extension("compact.tmp");
    {
        let mut out = BufWriter::new(File::create(&tmp)?);
        for entry in snapshot.entries() {
            serde_json::to_writer(&mut out, &LogRecord::Append { entry: entry.clone() })
                .map_err(std::io::Error::other)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        out.get_ref().sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

fn reopen(log: &mut LogWriter) -> std::io::Result<()> {
    let file = OpenOptions::new().append(true).open(&log.path)?;
    log.lines = std::fs::read_to_string(&log.path)?.lines().count();
    log.file = BufWriter::new(file);
    Ok(())
}
