//! IP to (ASN, country) resolution from an offline prefix table.
//!
//! Table format, one row per line, `#` starts a comment line:
//!
//! ```text
//! cidr,asn,country
//! 10.0.0.0/8,AS100,DE
//! 2001:db8::/32,300,US
//! ```
//!
//! The header row is optional. ASN may carry an `AS` prefix; empty ASN or
//! country fields mean unknown.

use std::net::IpAddr;
use std::path::Path;

use crate::error::ResolverError;
use crate::net::{Cidr, PrefixTrie};

/// Anything that can map an address to its ASN and country.
pub trait IpResolver: Send + Sync {
    fn resolve(&self, ip: &IpAddr) -> (Option<u32>, Option<String>);
}

/// Resolver that knows nothing; every address resolves to unknown.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullResolver;

impl IpResolver for NullResolver {
    fn resolve(&self, _ip: &IpAddr) -> (Option<u32>, Option<String>) {
        (None, None)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Origin {
    asn: Option<u32>,
    country: Option<String>,
}

/// Longest-prefix-match table loaded from CSV.
#[derive(Debug, Clone, Default)]
pub struct PrefixTableResolver {
    table: PrefixTrie<Origin>,
}

impl PrefixTableResolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prefix: Cidr, asn: Option<u32>, country: Option<&str>) {
        let country = country.map(|c| c.to_ascii_uppercase());
        self.table.insert(prefix, Origin { asn, country });
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn from_csv_str(text: &str) -> Result<Self, ResolverError> {
        let mut resolver = PrefixTableResolver::new();
        let mut seen_row = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let row = raw.trim();
            if row.is_empty() || row.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = row.split(',').map(str::trim).collect();
            if !seen_row && fields.first().is_some_and(|f| f.eq_ignore_ascii_case("cidr")) {
                seen_row = true;
                continue;
            }
            seen_row = true;
            let err = |message: String| ResolverError::Row { line, message };
            let [cidr, asn, country] = fields[..] else {
                return Err(err(format!("expected 3 fields, found {}", fields.len())));
            };
            let prefix: Cidr = cidr.parse().map_err(|e| err(format!("{e}")))?;
            let asn = parse_asn(asn).map_err(err)?;
            let country = match country {
                "" => None,
                c if c.len() == 2 && c.bytes().all(|b| b.is_ascii_alphabetic()) => Some(c),
                c => return Err(err(format!("country {c:?} is not a two-letter code"))),
            };
            resolver.insert(prefix, asn, country);
        }
        Ok(resolver)
    }

    pub fn load(path: &Path) -> Result<Self, ResolverError> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }
}

fn parse_asn(field: &str) -> Result<Option<u32>, String> {
    if field.is_empty() {
        return Ok(None);
    }
    let digits = field
        .strip_prefix("AS")
        .or_else(|| field.strip_prefix("as"))
        .unwrap_or(field);
    digits
        .parse()
        .map(Some)
        .map_err(|_| format!("ASN {field:?} is not a number"))
}

impl IpResolver for PrefixTableResolver {
    fn resolve(&self, ip: &IpAddr) -> (Option<u32>, Option<String>) {
        match self.table.get(ip) {
            Some(origin) => (origin.asn, origin.country.clone()),
            None => (None, None),
        }
    }
}
