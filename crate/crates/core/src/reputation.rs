//! IP reputation lists in the FireHOL ipset/netset text format.
//!
//! One address or CIDR prefix per line. Blank lines and lines starting with
//! `#` are ignored; a bare address is a /32 or /128.

use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, SystemTime};

use parking_lot::RwLock;

use crate::error::ReputationError;
use crate::net::{Cidr, PrefixTrie};

/// Default refresh period; upstream lists are rebuilt daily.
pub const DEFAULT_REFRESH_INTERVAL: Duration = Duration::from_secs(24 * 60 * 60);

/// Membership test used by the attack-probability term.
pub trait IpReputation: Send + Sync {
    fn is_listed(&self, ip: &IpAddr) -> bool;
}

/// Reputation source with no entries.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoReputation;

impl IpReputation for NoReputation {
    fn is_listed(&self, _ip: &IpAddr) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceInfo {
    pub source: String,
    pub loaded_at: SystemTime,
}

#[derive(Debug, Clone)]
pub struct ReputationSet {
    prefixes: PrefixTrie<()>,
    info: SourceInfo,
}

impl Default for ReputationSet {
    fn default() -> Self {
        ReputationSet::empty("empty")
    }
}

impl ReputationSet {
    pub fn empty(source: &str) -> Self {
        ReputationSet {
            prefixes: PrefixTrie::new(),
            info: SourceInfo { source: source.to_owned(), loaded_at: SystemTime::now() },
        }
    }

    pub fn from_prefixes<I: IntoIterator<Item = Cidr>>(source: &str, prefixes: I) -> Self {
        let mut set = ReputationSet::empty(source);
        for p in prefixes {
            set.prefixes.insert(p, ());
        }
        set
    }

    /// Parses list text; the first malformed line aborts with its line number.
    pub fn parse_list(text: &str, source: &str) -> Result<Self, ReputationError> {
        let mut set = ReputationSet::empty(source);
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let prefix: Cidr = line
                .parse()
                .map_err(|_| ReputationError::Parse { line: idx + 1, text: line.to_owned() })?;
            set.prefixes.insert(prefix, ());
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, ReputationError> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ReputationError::Source { source_name: name.clone(), message: e.to_string() })?;
        Self::parse_list(&text, &name)
    }

    pub fn contains(&self, ip: &IpAddr) -> bool {
        self.prefixes.contains(ip)
    }

    /// Number of distinct prefixes.
    pub fn len(&self) -> usize {
        self.prefixes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prefixes.is_empty()
    }

    pub fn info(&self) -> &SourceInfo {
        &self.info
    }
}

impl IpReputation for ReputationSet {
    fn is_listed(&self, ip: &IpAddr) -> bool {
        self.contains(ip)
    }
}

pub fn parse_list(text: &str) -> Result<ReputationSet, ReputationError> {
    ReputationSet::parse_list(text, "inline")
}

/// Where a refresh reads the list from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReputationSource {
    File(PathBuf),
    /// Already fetched text, e.g. from an HTTP client, with a name for metadata.
    Text { name: String, body: String },
}

/// The active reputation set. Lookups read an immutable snapshot; a refresh
/// swaps in a new one only after it parsed completely.
#[derive(Debug, Default)]
pub struct ReputationHandle {
    active: RwLock<Arc<ReputationSet>>,
}

impl ReputationHandle {
    pub fn new(set: ReputationSet) -> Self {
        ReputationHandle { active: RwLock::new(Arc::new(set)) }
    }

    pub fn current(&self) -> Arc<ReputationSet> {
        self.active.read().clone()
    }

    /// On failure the previous set stays active and the error is returned.
    pub fn refresh(&self, source: &ReputationSource) -> Result<Arc<ReputationSet>, ReputationError> {
        let parsed = match source {
            ReputationSource::File(path) => ReputationSet::load(path),
            ReputationSource::Text { name, body } => ReputationSet::parse_list(body, name),
        };
        match parsed {
            Ok(set) => {
                let set = Arc::new(set);
                *self.active.write() = set.clone();
                tracing::info!(source = %set.info().source, prefixes = set.len(), "reputation list refreshed");
                Ok(set)
            }
            Err(e) => {
                tracing::warn!(error = %e, "reputation refresh failed, keeping previous list");
                Err(e)
            }
        }
    }
}

impl IpReputation for ReputationHandle {
    fn is_listed(&self, ip: &IpAddr) -> bool {
        self.active.read().contains(ip)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = "# comment\n192.0.2.5\n198.51.100.0/24";

    fn ip(s: &str) -> IpAddr {
        s.parse().unwrap()
    }

    #[test]
    fn parses_example_list() {
        let set = parse_list(EXAMPLE).unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.contains(&ip("198.51.100.77")));
        assert!(set.contains(&ip("192.0.2.5")));
        assert!(!set.contains(&ip("192.0.2.6")));
        assert!(!set.contains(&ip("203.0.113.1")));
    }

    #[test]
    fn empty_and_comment_only() {
        assert!(parse_list("").unwrap().is_empty());
        assert!(parse_list("#\n\n   \n# x\n").unwrap().is_empty());
    }

    #[test]
    fn malformed_line_is_reported() {
        match parse_list("not-an-ip") {
            Err(ReputationError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        match parse_list("10.0.0.0/8\n# ok\n10.0.0.0/99\n") {
            Err(ReputationError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ipv6_entries() {
        let set = parse_list("2001:db8::/32\n2001:db9::1\n").unwrap();
        assert!(set.contains(&ip("2001:db8:ffff::1")));
        assert!(set.contains(&ip("2001:db9::1")));
        assert!(!set.contains(&ip("2001:db9::2")));
    }

    #[test]
    fn refresh_keeps_old_set_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.netset");
        std::fs::write(&good, EXAMPLE).unwrap();
        let handle = ReputationHandle::default();
        assert!(!handle.is_listed(&ip("192.0.2.5")));

        handle.refresh(&ReputationSource::File(good.clone())).unwrap();
        assert!(handle.is_listed(&ip("192.0.2.5")));
        assert_eq!(handle.current().info().source, good.display().to_string());

        assert!(handle.refresh(&ReputationSource::File(dir.path().join("missing"))).is_err());
        assert!(handle.is_listed(&ip("192.0.2.5")));

        let bad = ReputationSource::Text { name: "bad".into(), body: "garbage\n".into() };
        assert!(handle.refresh(&bad).is_err());
        assert!(handle.is_listed(&ip("192.0.2.5")));

        let empty = dir.path().join("empty.netset");
        std::fs::write(&empty, "").unwrap();
        handle.refresh(&ReputationSource::File(empty)).unwrap();
        assert!(!handle.is_listed(&ip("192.0.2.5")));
    }
}
