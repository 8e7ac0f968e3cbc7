use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{BlockDirective, FpdConfig, FpdState, FpdVerdict, Severity};

pub const NO_ACTIVITY: &str = "no fingerprinting activity";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointCount {
    pub endpoint: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub name: String,
    pub value: f64,
    /// Called endpoints anywhere below this group.
    pub endpoints: Vec<EndpointCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub page: String,
    pub detected: bool,
    pub severity: Severity,
    pub score: f64,
    pub raw_score: f64,
    pub threshold: f64,
    pub groups: Vec<GroupReport>,
    /// Called endpoints that no group of the config knows about.
    pub unclassified: Vec<EndpointCount>,
    #[serde(default)]
    pub directives: Vec<BlockDirective>,
}

pub fn render_report(state: &FpdState, cfg: &FpdConfig, verdict: &FpdVerdict) -> Report {
    let values = super::evaluate_groups(state, cfg).value;
    let groups = verdict
        .fired_groups
        .iter()
        .filter_map(|name| cfg.group_index(name).map(|k| (name, k)))
        .map(|(name, k)| {
            let endpoints = cfg
                .subtree_endpoints(k)
                .into_iter()
                .filter_map(|ep| {
                    let count = state.count(ep);
                    (count > 0).then(|| EndpointCount {
                        endpoint: ep.to_string(),
                        count,
                    })
                })
                .collect();
            GroupReport {
                name: name.clone(),
                value: values[k],
                endpoints,
            }
        })
        .collect::<Vec<_>>();
    let unclassified = state
        .counters()
        .iter()
        .filter(|(ep, _)| !cfg.knows_endpoint(ep))
        .map(|(ep, &count)| EndpointCount {
            endpoint: ep.clone(),
            count,
        })
        .collect();
    Report {
        page: state.page().to_string(),
        detected: verdict.detected,
        severity: verdict.severity,
        score: verdict.score,
        raw_score: verdict.raw_score,
        threshold: verdict.threshold,
        groups,
        unclassified,
        directives: Vec::new(),
    }
}

impl Report {
    pub fn with_directives(mut self, directives: Vec<BlockDirective>) -> Self {
        self.directives = directives;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(doc: &str) -> serde_json::Result<Self> {
        serde_json::from_str(doc)
    }

    /// Plain-text rendering of the same content as the JSON form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Fingerprinting report for {}", self.page);
        let _ = writeln!(
            out,
            "verdict: {} (severity {}, score {} of threshold {}, raw {})",
            if self.detected {
                "fingerprinting detected"
            } else {
                "not detected"
            },
            self.severity,
            self.score,
            self.threshold,
            self.raw_score
        );
        if self.groups.is_empty() {
            let _ = writeln!(out, "{NO_ACTIVITY}");
        }
        for g in &self.groups {
            let _ = writeln!(out, "group {} (value {})", g.name, g.value);
            for e in &g.endpoints {
                let _ = writeln!(out, "  {}: {}", e.endpoint, e.count);
            }
        }
        if !self.unclassified.is_empty() {
            let _ = writeln!(out, "unclassified endpoints:");
            for e in &self.unclassified {
                let _ = writeln!(out, "  {}: {}", e.endpoint, e.count);
            }
        }
        for d in &self.directives {
            let _ = writeln!(out, "directive: {d:?}");
        }
        out
    }
}
