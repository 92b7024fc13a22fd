//! CIDR prefixes and a binary prefix trie used for IP-to-ASN resolution and
//! reputation membership.

use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use crate::error::CidrError;

/// An address prefix with host bits cleared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cidr {
    addr: IpAddr,
    len: u8,
}

fn width(addr: &IpAddr) -> u8 {
    match addr {
        IpAddr::V4(_) => 32,
        IpAddr::V6(_) => 128,
    }
}

/// Address bits left-aligned at the top of the family width.
fn bits(addr: &IpAddr) -> u128 {
    match addr {
        IpAddr::V4(a) => u128::from(u32::from(*a)),
        IpAddr::V6(a) => u128::from(*a),
    }
}

fn mask(len: u8, width: u8) -> u128 {
    if len == 0 {
        0
    } else {
        let full = if width == 128 { u128::MAX } else { (1u128 << width) - 1 };
        full & !((1u128 << (width - len)) - 1)
    }
}

impl Cidr {
    pub fn new(addr: IpAddr, len: u8) -> Result<Self, CidrError> {
        let w = width(&addr);
        if len > w {
            return Err(CidrError::PrefixTooLong { addr: addr.to_string(), len });
        }
        let masked = bits(&addr) & mask(len, w);
        let addr = match addr {
            IpAddr::V4(_) => IpAddr::V4((masked as u32).into()),
            IpAddr::V6(_) => IpAddr::V6(masked.into()),
        };
        Ok(Cidr { addr, len })
    }

    /// A single address as /32 or /128.
    pub fn host(addr: IpAddr) -> Self {
        Cidr { addr, len: width(&addr) }
    }

    pub fn addr(&self) -> IpAddr {
        self.addr
    }

    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, ip: &IpAddr) -> bool {
        if self.addr.is_ipv4() != ip.is_ipv4() {
            return false;
        }
        let w = width(ip);
        bits(ip) & mask(self.len, w) == bits(&self.addr)
    }
}

impl FromStr for Cidr {
    type Err = CidrError;

    /// Accepts `addr/len` or a bare address.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let malformed = || CidrError::Malformed(s.to_owned());
        match s.split_once('/') {
            Some((addr, len)) => {
                let addr: IpAddr = addr.parse().map_err(|_| malformed())?;
                if len.is_empty() || !len.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(malformed());
                }
                let len: u8 = len.parse().map_err(|_| malformed())?;
                Cidr::new(addr, len)
            }
            None => s.parse().map(Cidr::host).map_err(|_| malformed()),
        }
    }
}

impl fmt::Display for Cidr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.len)
    }
}

#[derive(Debug, Clone)]
struct Node<V> {
    children: [Option<u32>; 2],
    value: Option<V>,
}

impl<V> Node<V> {
    fn empty() -> Self {
        Node { children: [None, None], value: None }
    }
}

#[derive(Debug, Clone)]
struct FamilyTrie<V> {
    nodes: Vec<Node<V>>,
    width: u8,
}

impl<V> FamilyTrie<V> {
    fn new(width: u8) -> Self {
        FamilyTrie { nodes: vec![Node::empty()], width }
    }

    fn bit(&self, key: u128, depth: u8) -> usize {
        ((key >> (self.width - 1 - depth)) & 1) as usize
    }

    fn insert(&mut self, key: u128, len: u8, value: V) -> Option<V> {
        let mut node = 0usize;
        for depth in 0..len {
            let b = self.bit(key, depth);
            node = match self.nodes[node].children[b] {
                Some(next) => next as usize,
                None => {
                    let next = self.nodes.len();
                    self.nodes.push(Node::empty());
                    self.nodes[node].children[b] = Some(next as u32);
                    next
                }
            };
        }
        self.nodes[node].value.replace(value)
    }

    fn longest_match(&self, key: u128) -> Option<(u8, &V)> {
        let mut node = 0usize;
        let mut best = self.nodes[0].value.as_ref().map(|v| (0, v));
        for depth in 0..self.width {
            match self.nodes[node].children[self.bit(key, depth)] {
                Some(next) => node = next as usize,
                None => break,
            }
            if let Some(v) = self.nodes[node].value.as_ref() {
                best = Some((depth + 1, v));
            }
        }
        best
    }
}

/// Binary trie keyed by prefix, one tree per address family.
/// Lookups walk at most 32 or 128 nodes.
#[derive(Debug, Clone)]
pub struct PrefixTrie<V> {
    v4: FamilyTrie<V>,
    v6: FamilyTrie<V>,
    len: usize,
}

impl<V> Default for PrefixTrie<V> {
    fn default() -> Self {
        PrefixTrie { v4: FamilyTrie::new(32), v6: FamilyTrie::new(128), len: 0 }
    }
}

impl<V> PrefixTrie<V> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a prefix, replacing and returning any value already stored for it.
    pub fn insert(&mut self, prefix: Cidr, value: V) -> Option<V> {
        let key = bits(&prefix.addr());
        let old = match prefix.addr() {
            IpAddr::V4(_) => self.v4.insert(key, prefix.len(), value),
            IpAddr::V6(_) => self.v6.insert(key, prefix.len(), value),
        };
        if old.is_none() {
            self.len += 1;
        }
        old
    }

    /// Value of the longest stored prefix containing `ip`, with that prefix length.
    pub fn longest_match(&self, ip: &IpAddr) -> Option<(u8, &V)> {
        match ip {
            IpAddr::V4(_) => self.v4.longest_match(bits(ip)),
            IpAddr::V6(_) => self.v6.longest_match(bits(ip)),
        }
    }

    pub fn get(&self, ip: &IpAddr) -> Option<&V> {
        self.longest_match(ip).map(|(_, v)| v)
    }

    pub fn contains(&self, ip: &IpAddr) -> bool {
        self.longest_match(ip).is_some()
    }

    /// Number of distinct prefixes stored.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}
