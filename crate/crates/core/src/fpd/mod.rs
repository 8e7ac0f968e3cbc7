//! Fingerprinting detection from API call counts.
//!
//! Calls are counted per endpoint and scored against a tree of weighted
//! groups. A leaf contributes its edge weight once the endpoint has been
//! called at least `min_calls` times. A group sums its children's
//! contributions and fires as a unit: its value is that sum when the sum
//! reaches the group threshold and is positive, otherwise zero, and a fired
//! group contributes its edge weight to its parent. The root value is the
//! page score. Only counts matter, so call order never affects a verdict.

mod config;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{load_fpd_config, FpdConfig, SeverityCuts, FPD_SCHEMA_VERSION};
pub use report::{render_report, EndpointCount, GroupReport, Report};

use config::Child;

#[derive(Debug, Error, PartialEq)]
pub enum FpdError {
    #[error("invalid FPD config at {location}: {message}")]
    Config { location: String, message: String },
    #[error("invalid trace at {location}: {message}")]
    Trace { location: String, message: String },
    #[error("unknown mode {0:?} (expected passive, notify or block)")]
    Mode(String),
}

fn default_count() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiCallEvent {
    pub t_ms: f64,
    pub endpoint: String,
    #[serde(default = "default_count")]
    pub count: u64,
}

impl ApiCallEvent {
    pub fn new(t_ms: f64, endpoint: impl Into<String>, count: u64) -> Self {
        Self {
            t_ms,
            endpoint: endpoint.into(),
            count,
        }
    }
}

/// A page's recorded API calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trace {
    pub page: String,
    pub events: Vec<ApiCallEvent>,
}

impl Trace {
    pub fn from_json(doc: &str) -> Result<Self, FpdError> {
        let trace: Trace = serde_json::from_str(doc).map_err(|e| FpdError::Trace {
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        for (i, e) in trace.events.iter().enumerate() {
            let bad = |message: &str| FpdError::Trace {
                location: format!("events[{i}]"),
                message: message.to_string(),
            };
            if e.endpoint.is_empty() {
                return Err(bad("empty endpoint"));
            }
            if e.count == 0 {
                return Err(bad("count must be >= 1"));
            }
            if !e.t_ms.is_finite() {
                return Err(bad("t_ms must be finite"));
            }
        }
        Ok(trace)
    }

    pub fn to_state(&self) -> FpdState {
        let mut state = FpdState::new(&self.page);
        for e in &self.events {
            state.ingest(e);
        }
        state
    }
}

/// Per-endpoint call counters for one page.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FpdState {
    page: String,
    counters: BTreeMap<String, u64>,
}

impl FpdState {
    pub fn new(page: impl Into<String>) -> Self {
        Self {
            page: page.into(),
            counters: BTreeMap::new(),
        }
    }

    pub fn page(&self) -> &str {
        &self.page
    }

    pub fn ingest(&mut self, e: &ApiCallEvent) {
        let c = self.counters.entry(e.endpoint.clone()).or_insert(0);
        *c = c.saturating_add(e.count);
    }

    pub fn count(&self, endpoint: &str) -> u64 {
        self.counters.get(endpoint).copied().unwrap_or(0)
    }

    pub fn counters(&self) -> &BTreeMap<String, u64> {
        &self.counters
    }
}

/// Free-function form of [`FpdState::ingest`].
pub fn ingest(mut state: FpdState, e: &ApiCallEvent) -> FpdState {
    state.ingest(e);
    state
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Green,
    Yellow,
    Orange,
    Red,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Green => "green",
            Severity::Yellow => "yellow",
            Severity::Orange => "orange",
            Severity::Red => "red",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpdVerdict {
    /// Root value: the root sum if the root fired, otherwise zero.
    pub score: f64,
    /// Root sum before the root threshold is applied; drives `severity`.
    pub raw_score: f64,
    pub threshold: f64,
    pub detected: bool,
    pub severity: Severity,
    /// Fired groups, in config order.
    pub fired_groups: Vec<String>,
}

struct Evaluation {
    value: Vec<f64>,
    sum: Vec<f64>,
}

fn evaluate_groups(state: &FpdState, cfg: &FpdConfig) -> Evaluation {
    fn visit(
        k: usize,
        state: &FpdState,
        cfg: &FpdConfig,
        memo: &mut Vec<Option<(f64, f64)>>,
    ) -> (f64, f64) {
        if let Some(v) = memo[k] {
            return v;
        }
        let group = &cfg.groups[k];
        let mut sum = 0.0;
        for edge in &group.children {
            let active = match &edge.child {
                Child::Endpoint { name, min_calls } => state.count(name) >= *min_calls,
                Child::Group(c) => visit(*c, state, cfg, memo).0 > 0.0,
            };
            if active {
                sum += edge.weight;
            }
        }
        let value = if sum > 0.0 && sum >= group.threshold {
            sum
        } else {
            0.0
        };
        memo[k] = Some((value, sum));
        (value, sum)
    }
    let mut memo = vec![None; cfg.groups.len()];
    for k in 0..cfg.groups.len() {
        visit(k, state, cfg, &mut memo);
    }
    let (value, sum) = memo
        .into_iter()
        .map(|m| m.expect("all groups visited"))
        .unzip();
    Evaluation { value, sum }
}

pub fn evaluate(state: &FpdState, cfg: &FpdConfig) -> FpdVerdict {
    let ev = evaluate_groups(state, cfg);
    let threshold = cfg.root_threshold();
    let score = ev.value[cfg.root];
    let raw_score = ev.sum[cfg.root];
    let cuts = cfg.severity_cuts();
    let severity = if raw_score >= threshold {
        Severity::Red
    } else if raw_score >= cuts.orange * threshold {
        Severity::Orange
    } else if raw_score >= cuts.yellow * threshold {
        Severity::Yellow
    } else {
        Severity::Green
    };
    let fired_groups = cfg
        .groups
        .iter()
        .zip(&ev.value)
        .filter(|(_, &v)| v > 0.0)
        .map(|(g, _)| g.name.clone())
        .collect();
    FpdVerdict {
        score,
        raw_score,
        threshold,
        detected: score >= threshold,
        severity,
        fired_groups,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FpdMode {
    /// Observe and report only.
    Passive,
    Notify,
    Block,
}

impl FromStr for FpdMode {
    type Err = FpdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "passive" => Ok(FpdMode::Passive),
            "notify" => Ok(FpdMode::Notify),
            "block" => Ok(FpdMode::Block),
            other => Err(FpdError::Mode(other.to_string())),
        }
    }
}

/// Reaction to a detection. Neither directive can recall data the page
/// already sent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockDirective {
    BlockSubsequentAsyncRequests,
    ClearPageStorage,
}

pub fn block_directives(verdict: &FpdVerdict, mode: FpdMode) -> Vec<BlockDirective> {
    if verdict.detected && mode == FpdMode::Block {
        vec![
            BlockDirective::BlockSubsequentAsyncRequests,
            BlockDirective::ClearPageStorage,
        ]
    } else {
        Vec::new()
    }
}
