//! Network boundary checks: stop pages served from a wider network from
//! reaching hosts on a narrower one (public -> LAN -> this machine).
//!
//! Two modes exist. `PreResolve` resolves the target before anything is sent
//! and decides on the resolved address. `LearnOnReply` cannot resolve ahead of
//! time: unknown hostnames are let through once, the peer address seen on the
//! reply is cached, and later requests to that hostname are decided from the
//! cache.

mod proxy;

use std::collections::HashMap;
use std::fmt;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::str::FromStr;
use std::sync::RwLock;
use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use proxy::{run_proxy, DecisionLogLine, Proxy, ProxyConfig, REASON_HEADER};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NbsError {
    #[error("malformed IP address {0:?}")]
    Address(String),
    #[error("malformed target {0:?}")]
    Target(String),
    #[error("unknown address class {0:?}")]
    Class(String),
    #[error("unknown mode {0:?} (expected preresolve or learn)")]
    Mode(String),
    #[error("pre-resolve mode needs a resolved address for {0:?}")]
    Unresolved(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AddressClass {
    Loopback,
    Private,
    LinkLocal,
    UniqueLocal,
    Unspecified,
    Public,
}

impl AddressClass {
    pub const ALL: [AddressClass; 6] = [
        AddressClass::Loopback,
        AddressClass::Private,
        AddressClass::LinkLocal,
        AddressClass::UniqueLocal,
        AddressClass::Unspecified,
        AddressClass::Public,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AddressClass::Loopback => "loopback",
            AddressClass::Private => "private",
            AddressClass::LinkLocal => "link_local",
            AddressClass::UniqueLocal => "unique_local",
            AddressClass::Unspecified => "unspecified",
            AddressClass::Public => "public",
        }
    }

    /// Position in the boundary lattice; wider networks rank higher.
    /// Unspecified has no rank of its own.
    fn rank(self) -> Option<u8> {
        match self {
            AddressClass::Public => Some(3),
            AddressClass::Private | AddressClass::UniqueLocal | AddressClass::LinkLocal => Some(2),
            AddressClass::Loopback => Some(1),
            AddressClass::Unspecified => None,
        }
    }
}

impl fmt::Display for AddressClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AddressClass {
    type Err = NbsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        AddressClass::ALL
            .into_iter()
            .find(|c| c.as_str() == norm)
            .ok_or_else(|| NbsError::Class(s.to_string()))
    }
}

fn classify_v4(ip: Ipv4Addr) -> AddressClass {
    let [a, b, ..] = ip.octets();
    match (a, b) {
        _ if ip.is_unspecified() => AddressClass::Unspecified,
        (127, _) => AddressClass::Loopback,
        (10, _) | (192, 168) => AddressClass::Private,
        (172, b) if (16..32).contains(&b) => AddressClass::Private,
        (169, 254) => AddressClass::LinkLocal,
        _ => AddressClass::Public,
    }
}

fn classify_v6(ip: Ipv6Addr) -> AddressClass {
    if let Some(v4) = ip.to_ipv4_mapped() {
        return classify_v4(v4);
    }
    let first = ip.segments()[0];
    if ip.is_unspecified() {
        AddressClass::Unspecified
    } else if ip.is_loopback() {
        AddressClass::Loopback
    } else if first & 0xffc0 == 0xfe80 {
        AddressClass::LinkLocal
    } else if first & 0xfe00 == 0xfc00 {
        AddressClass::UniqueLocal
    } else {
        AddressClass::Public
    }
}

/// Total over all addresses. IPv4-mapped IPv6 addresses take the class of the
/// embedded IPv4 address.
pub fn classify_address(ip: IpAddr) -> AddressClass {
    match ip {
        IpAddr::V4(v4) => classify_v4(v4),
        IpAddr::V6(v6) => classify_v6(v6),
    }
}

pub fn classify_str(s: &str) -> Result<AddressClass, NbsError> {
    s.trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .parse::<IpAddr>()
        .map(classify_address)
        .map_err(|_| NbsError::Address(s.to_string()))
}

/// True when a request moves from a wider network to a strictly narrower one.
/// An unspecified destination always counts as crossing; an unspecified source
/// is treated as public.
pub fn crosses_boundary(src: AddressClass, dst: AddressClass) -> bool {
    match (src.rank().unwrap_or(3), dst.rank()) {
        (_, None) => true,
        (s, Some(d)) => d < s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NbsMode {
    PreResolve,
    LearnOnReply,
}

impl FromStr for NbsMode {
    type Err = NbsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "preresolve" | "pre-resolve" | "pre_resolve" => Ok(NbsMode::PreResolve),
            "learn" | "learnonreply" | "learn-on-reply" | "learn_on_reply" => {
                Ok(NbsMode::LearnOnReply)
            }
            _ => Err(NbsError::Mode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecisionKind {
    Allow,
    AllowAndLearn,
    Block,
}

impl fmt::Display for DecisionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryDecision {
    pub kind: DecisionKind,
    pub reason: String,
    /// Class the decision was based on; `None` when the target is unknown.
    pub target_class: Option<AddressClass>,
}

impl BoundaryDecision {
    pub fn is_block(&self) -> bool {
        self.kind == DecisionKind::Block
    }

    fn judge(origin: AddressClass, target: &str, class: AddressClass) -> Self {
        if !crosses_boundary(origin, class) {
            return Self {
                kind: DecisionKind::Allow,
                reason: format!("{origin} origin to {class} target {target} crosses no boundary"),
                target_class: Some(class),
            };
        }
        let reason = if class == AddressClass::Unspecified {
            format!(
                "{origin} origin to {class} address for {target}: 0.0.0.0/:: usually means a DNS filter blocked the name"
            )
        } else {
            format!("{origin} origin must not reach {class} target {target}")
        };
        Self {
            kind: DecisionKind::Block,
            reason,
            target_class: Some(class),
        }
    }
}

/// `host`, `host:port`, `[v6]:port` or a bare IPv6 literal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    pub host: String,
    pub port: Option<u16>,
}

impl Target {
    pub fn parse(s: &str) -> Result<Self, NbsError> {
        let bad = || NbsError::Target(s.to_string());
        let s = s.trim();
        if s.is_empty() {
            return Err(bad());
        }
        if let Some(rest) = s.strip_prefix('[') {
            let (host, tail) = rest.split_once(']').ok_or_else(bad)?;
            host.parse::<Ipv6Addr>().map_err(|_| bad())?;
            let port = match tail {
                "" => None,
                t => Some(
                    t.strip_prefix(':')
                        .ok_or_else(bad)?
                        .parse()
                        .map_err(|_| bad())?,
                ),
            };
            return Ok(Self {
                host: host.to_string(),
                port,
            });
        }
        if s.parse::<Ipv6Addr>().is_ok() {
            return Ok(Self {
                host: s.to_string(),
                port: None,
            });
        }
        let (host, port) = match s.rsplit_once(':') {
            Some((h, p)) => (h, Some(p.parse().map_err(|_| bad())?)),
            None => (s, None),
        };
        if host.is_empty() || host.contains(|c: char| c.is_whitespace() || c == '/' || c == '@') {
            return Err(bad());
        }
        Ok(Self {
            host: normalize_host(host),
            port,
        })
    }

    pub fn ip(&self) -> Option<IpAddr> {
        self.host.parse().ok()
    }
}

fn normalize_host(host: &str) -> String {
    host.trim_end_matches('.').to_ascii_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheEntry {
    pub class: AddressClass,
    pub ip: IpAddr,
    pub learned_at: SystemTime,
}

/// Hostname classes learned from replies. Readers share the lock; writers
/// are serialized and the last write for a hostname wins.
#[derive(Debug, Default)]
pub struct LearnCache {
    entries: RwLock<HashMap<String, CacheEntry>>,
}

impl LearnCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe_reply(&self, hostname: &str, ip: IpAddr) -> AddressClass {
        let class = classify_address(ip);
        let entry = CacheEntry {
            class,
            ip,
            learned_at: SystemTime::now(),
        };
        self.entries
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(normalize_host(hostname), entry);
        class
    }

    pub fn lookup(&self, hostname: &str) -> Option<CacheEntry> {
        self.entries
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(&normalize_host(hostname))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Free-function form of [`LearnCache::observe_reply`].
pub fn observe_reply(cache: &LearnCache, hostname: &str, ip: IpAddr) -> AddressClass {
    cache.observe_reply(hostname, ip)
}

/// Decides whether a request from a page of `origin_class` to `target_host`
/// may proceed. Literal IP targets are their own resolution in both modes.
pub fn decide(
    mode: NbsMode,
    origin_class: AddressClass,
    target_host: &str,
    resolved: Option<IpAddr>,
    cache: &LearnCache,
) -> Result<BoundaryDecision, NbsError> {
    let target = Target::parse(target_host)?;
    let host = target.host.as_str();
    if let Some(ip) = target.ip() {
        return Ok(BoundaryDecision::judge(
            origin_class,
            host,
            classify_address(ip),
        ));
    }
    match mode {
        NbsMode::PreResolve => {
            let ip = resolved.ok_or_else(|| NbsError::Unresolved(host.to_string()))?;
            Ok(BoundaryDecision::judge(
                origin_class,
                host,
                classify_address(ip),
            ))
        }
        NbsMode::LearnOnReply => match cache.lookup(host) {
            Some(entry) => Ok(BoundaryDecision::judge(origin_class, host, entry.class)),
            None => Ok(BoundaryDecision {
                kind: DecisionKind::AllowAndLearn,
                reason: format!("address of {host} unknown; learning it from the reply"),
                target_class: None,
            }),
        },
    }
}
