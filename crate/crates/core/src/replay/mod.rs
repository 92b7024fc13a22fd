//! Reference-test replay: score a login dataset in order, each row against
//! all successful logins before it, and compare score files.

mod dataset;

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;
use std::path::Path;

pub use self::dataset::{load_dataset, read_dataset, ColumnMapping, DatasetRow};
use crate::config::RiskConfig;
use crate::engine::{FeatureSet, RiskEngine};
use crate::error::{CompareError, EngineError};
use crate::history::HistoryStore;
use crate::model::{RiskScore, UserId};
use crate::reputation::NoReputation;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReplayOptions {
    /// Score RTT as a third feature.
    pub include_rtt: bool,
    /// Per-user history cap; `None` keeps every login.
    pub history_cap: Option<usize>,
}

impl ReplayOptions {
    pub fn engine<T: Scalar>(&self, config: RiskConfig<T>) -> RiskEngine<T> {
        let features =
            if self.include_rtt { FeatureSet::standard(&config) } else { FeatureSet::ip_and_user_agent(&config) };
        RiskEngine::new(config, features)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRow<T = f64> {
    pub global_index: u64,
    pub user: UserId,
    pub score: RiskScore<T>,
}

/// Scores successful rows at positions `start..start + count` of the
/// successful-row sequence. Every successful row before and inside the window
/// is added to the history after it was scored; rows of users without any
/// earlier login are added but not emitted, their score would be zero.
pub fn replay<T: Scalar>(
    rows: &[DatasetRow],
    start: usize,
    count: usize,
    engine: &RiskEngine<T>,
    options: &ReplayOptions,
) -> Result<Vec<ScoredRow<T>>, EngineError> {
    let store = HistoryStore::new(options.history_cap);
    let end = start.saturating_add(count);
    let mut out = Vec::new();
    for (pos, row) in rows.iter().filter(|r| r.login_successful).enumerate() {
        if pos >= end {
            break;
        }
        if pos >= start {
            let snapshot = store.snapshot();
            let ctx = snapshot.scoring_context(&row.user, &NoReputation);
            if !ctx.history.is_empty() {
                let score = engine.risk_score(&row.features, &ctx)?;
                out.push(ScoredRow { global_index: row.global_index, user: row.user.clone(), score });
            }
        }
        store
            .append(&row.user, 0, row.features.clone())
            .expect("in-memory history append cannot fail");
    }
    Ok(out)
}

/// Contiguous windows over `len` replay positions. Every shard but the
/// trailing ones holds `ceil(len / n)` positions; surplus shards are empty.
pub fn shard(len: usize, n_shards: usize) -> Vec<Range<usize>> {
    let n = n_shards.max(1);
    let chunk = len.div_ceil(n);
    (0..n).map(|i| (i * chunk).min(len)..((i + 1) * chunk).min(len)).collect()
}

/// Number of rows `replay` walks over.
pub fn replayable_len(rows: &[DatasetRow]) -> usize {
    rows.iter().filter(|r| r.login_successful).count()
}

/// Replays each shard on its own thread and concatenates the outputs in shard order.
pub fn replay_sharded<T: Scalar>(
    rows: &[DatasetRow],
    n_shards: usize,
    engine: &RiskEngine<T>,
    options: &ReplayOptions,
) -> Result<Vec<ScoredRow<T>>, EngineError> {
    let shards = shard(replayable_len(rows), n_shards);
    let outputs: Vec<Result<Vec<ScoredRow<T>>, EngineError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = shards
            .iter()
            .map(|range| scope.spawn(move || replay(rows, range.start, range.len(), engine, options)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("replay shard panicked")).collect()
    });
    let mut all = Vec::new();
    for out in outputs {
        all.extend(out?);
    }
    Ok(all)
}

pub const SCORES_HEADER: &str = "global_index,user_id,risk_score";

/// CSV with a header line and scores at ten decimal places.
pub fn write_scores<T: Scalar, W: Write>(mut out: W, rows: &[ScoredRow<T>]) -> std::io::Result<()> {
    writeln!(out, "{SCORES_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.global_index, r.user, r.score)?;
    }
    out.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreLine {
    pub global_index: u64,
    pub user: String,
    pub score: f64,
}

pub fn read_scores<R: BufRead>(reader: R, name: &str) -> Result<Vec<ScoreLine>, CompareError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let text = line.trim();
        if text.is_empty() || (line_no == 1 && text == SCORES_HEADER) {
            continue;
        }
        let err = |message: &str| CompareError::Parse { path: name.to_owned(), line: line_no, message: message.to_owned() };
        let mut fields = text.split(',');
        let (Some(index), Some(user), Some(score), None) = (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(err("expected global_index,user_id,risk_score"));
        };
        let global_index = index.trim().parse().map_err(|_| err("global index is not an integer"))?;
        let score = match score.trim() {
            "inf" | "+inf" | "infinity" => f64::INFINITY,
            s => s.parse().map_err(|_| err("risk score is not a number"))?,
        };
        out.push(ScoreLine { global_index, user: user.trim().to_owned(), score });
    }
    Ok(out)
}

pub fn load_scores(path: &Path) -> Result<Vec<ScoreLine>, CompareError> {
    let file = std::fs::File::open(path)?;
    read_scores(std::io::BufReader::new(file), &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub row: usize,
    pub global_index: u64,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub rows: usize,
    pub max_abs_diff: f64,
    pub max_rel_diff: f64,
    pub mismatches: usize,
    pub first_mismatch: Option<Mismatch>,
    /// Set when the files do not line up row for row.
    pub structural: Option<String>,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.structural.is_none() && self.mismatches == 0
    }
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rows compared: {}", self.rows)?;
        writeln!(f, "max abs diff: {:e}", self.max_abs_diff)?;
        writeln!(f, "max rel diff: {:e}", self.max_rel_diff)?;
        writeln!(f, "mismatches: {}", self.mismatches)?;
        if let Some(m) = &self.first_mismatch {
            writeln!(f, "first mismatch: row {} (global index {}): {} vs {}", m.row, m.global_index, m.a, m.b)?;
        }
        if let Some(s) = &self.structural {
            writeln!(f, "structural mismatch: {s}")?;
        }
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

fn diffs(a: f64, b: f64) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    let abs = (a - b).abs();
    let scale = a.abs().max(b.abs());
    (abs, if scale == 0.0 { 0.0 } else { abs / scale })
}

/// Row-aligned comparison on (global index, score). A score differs when its
/// absolute difference exceeds `tol`.
pub fn compare(a: &[ScoreLine], b: &[ScoreLine], tol: f64) -> CompareReport {
    let mut report = CompareReport {
        rows: a.len().min(b.len()),
        max_abs_diff: 0.0,
        max_rel_diff: 0.0,
        mismatches: 0,
        first_mismatch: None,
        structural: None,
    };
    if a.len() != b.len() {
        report.structural = Some(format!("row counts differ: {} vs {}", a.len(), b.len()));
    }
    for (row, (x, y)) in a.iter().zip(b).enumerate() {
        if x.global_index != y.global_index {
            report.structural =
                Some(format!("row {}: global index {} vs {}", row + 1, x.global_index, y.global_index));
            report.rows = row;
            break;
        }
        let (abs, rel) = diffs(x.score, y.score);
        report.max_abs_diff = report.max_abs_diff.max(abs);
        report.max_rel_diff = report.max_rel_diff.max(rel);
        if abs > tol || abs.is_nan() {
            report.mismatches += 1;
            if report.first_mismatch.is_none() {
                report.first_mismatch = Some(Mismatch { row: row + 1, global_index: x.global_index, a: x.score, b: y.score });
            }
        }
    }
    report
}
