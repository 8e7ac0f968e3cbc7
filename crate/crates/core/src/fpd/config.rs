use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::FpdError;

pub const FPD_SCHEMA_VERSION: u32 = 1;

const DEFAULT_CONFIG: &str = include_str!("../../data/fpd_default.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDocument {
    schema_version: u32,
    root: String,
    #[serde(default)]
    severity: SeverityCuts,
    groups: Vec<GroupDocument>,
}

/// Severity cut points as fractions of the root threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeverityCuts {
    pub yellow: f64,
    pub orange: f64,
}

impl Default for SeverityCuts {
    fn default() -> Self {
        Self {
            yellow: 0.25,
            orange: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupDocument {
    name: String,
    threshold: f64,
    children: Vec<ChildDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChildDocument {
    #[serde(default)]
    group: Option<String>,
    #[serde(default)]
    endpoint: Option<String>,
    weight: f64,
    #[serde(default)]
    min_calls: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Child {
    Group(usize),
    Endpoint { name: String, min_calls: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Edge {
    pub(crate) child: Child,
    pub(crate) weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Group {
    pub(crate) name: String,
    pub(crate) threshold: f64,
    pub(crate) children: Vec<Edge>,
}

/// Validated detection tree. Groups are stored in document order.
#[derive(Debug, Clone, PartialEq)]
pub struct FpdConfig {
    pub(crate) groups: Vec<Group>,
    pub(crate) root: usize,
    pub(crate) severity: SeverityCuts,
    endpoints: BTreeSet<String>,
}

fn invalid(location: impl Into<String>, message: impl Into<String>) -> FpdError {
    FpdError::Config {
        location: location.into(),
        message: message.into(),
    }
}

pub fn load_fpd_config(document: &str) -> Result<FpdConfig, FpdError> {
    let doc: ConfigDocument = serde_json::from_str(document).map_err(|e| {
        invalid(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    if doc.schema_version != FPD_SCHEMA_VERSION {
        return Err(invalid(
            "schema_version",
            format!("unsupported version {}", doc.schema_version),
        ));
    }
    let cuts = doc.severity;
    if !(0.0 < cuts.yellow && cuts.yellow <= cuts.orange && cuts.orange < 1.0) {
        return Err(invalid("severity", "need 0 < yellow <= orange < 1"));
    }

    let mut index = HashMap::new();
    for (i, g) in doc.groups.iter().enumerate() {
        if g.name.is_empty() {
            return Err(invalid(format!("groups[{i}].name"), "empty group name"));
        }
        if index.insert(g.name.as_str(), i).is_some() {
            return Err(invalid(
                format!("groups[{i}].name"),
                format!("duplicate group {:?}", g.name),
            ));
        }
    }
    let root = *index
        .get(doc.root.as_str())
        .ok_or_else(|| invalid("root", format!("unknown group {:?}", doc.root)))?;

    let mut endpoints = BTreeSet::new();
    let mut groups = Vec::with_capacity(doc.groups.len());
    for (i, g) in doc.groups.iter().enumerate() {
        if !g.threshold.is_finite() || g.threshold < 0.0 {
            return Err(invalid(
                format!("groups[{i}].threshold"),
                "threshold must be finite and >= 0",
            ));
        }
        if i == root && g.threshold <= 0.0 {
            return Err(invalid(
                format!("groups[{i}].threshold"),
                "root threshold must be > 0",
            ));
        }
        let mut children = Vec::with_capacity(g.children.len());
        for (j, c) in g.children.iter().enumerate() {
            let at = format!("groups[{i}].children[{j}]");
            if !c.weight.is_finite() || c.weight <= 0.0 {
                return Err(invalid(
                    format!("{at}.weight"),
                    format!("weight must be > 0, got {}", c.weight),
                ));
            }
            let child = match (&c.group, &c.endpoint) {
                (Some(name), None) => {
                    if c.min_calls.is_some() {
                        return Err(invalid(
                            format!("{at}.min_calls"),
                            "min_calls applies to endpoints only",
                        ));
                    }
                    let k = *index.get(name.as_str()).ok_or_else(|| {
                        invalid(format!("{at}.group"), format!("unknown group {name:?}"))
                    })?;
                    Child::Group(k)
                }
                (None, Some(name)) => {
                    if name.is_empty() {
                        return Err(invalid(format!("{at}.endpoint"), "empty endpoint"));
                    }
                    let min_calls = c.min_calls.unwrap_or(1);
                    if min_calls == 0 {
                        return Err(invalid(format!("{at}.min_calls"), "min_calls must be >= 1"));
                    }
                    endpoints.insert(name.clone());
                    Child::Endpoint {
                        name: name.clone(),
                        min_calls,
                    }
                }
                _ => {
                    return Err(invalid(
                        at,
                        "child needs exactly one of `group` or `endpoint`",
                    ))
                }
            };
            children.push(Edge {
                child,
                weight: c.weight,
            });
        }
        groups.push(Group {
            name: g.name.clone(),
            threshold: g.threshold,
            children,
        });
    }

    if let Some(path) = find_cycle(&groups) {
        let names: Vec<&str> = path.iter().map(|&k| groups[k].name.as_str()).collect();
        return Err(invalid(
            format!("groups[{}]", path[0]),
            format!("cycle: {}", names.join(" -> ")),
        ));
    }

    Ok(FpdConfig {
        groups,
        root,
        severity: cuts,
        endpoints,
    })
}

/// Depth-first search; returns the group path of the first cycle found.
fn find_cycle(groups: &[Group]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    fn visit(
        k: usize,
        groups: &[Group],
        marks: &mut [Mark],
        stack: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        marks[k] = Mark::Active;
        stack.push(k);
        for edge in &groups[k].children {
            if let Child::Group(c) = edge.child {
                match marks[c] {
                    Mark::Active => {
                        let start = stack.iter().position(|&s| s == c).unwrap();
                        let mut cycle = stack[start..].to_vec();
                        cycle.push(c);
                        return Some(cycle);
                    }
                    Mark::New => {
                        if let Some(cycle) = visit(c, groups, marks, stack) {
                            return Some(cycle);
                        }
                    }
                    Mark::Done => {}
                }
            }
        }
        stack.pop();
        marks[k] = Mark::Done;
        None
    }
    let mut marks = vec![Mark::New; groups.len()];
    let mut stack = Vec::new();
    (0..groups.len()).find_map(|k| {
        if marks[k] == Mark::New {
            visit(k, groups, &mut marks, &mut stack)
        } else {
            None
        }
    })
}

impl FpdConfig {
    /// The shipped detection tree. Its weights are hand-calibrated defaults.
    pub fn shipped() -> Self {
        load_fpd_config(DEFAULT_CONFIG).expect("shipped FPD config is valid")
    }

    pub fn root_name(&self) -> &str {
        &self.groups[self.root].name
    }

    pub fn root_threshold(&self) -> f64 {
        self.groups[self.root].threshold
    }

    pub fn severity_cuts(&self) -> SeverityCuts {
        self.severity
    }

    pub fn knows_endpoint(&self, endpoint: &str) -> bool {
        self.endpoints.contains(endpoint)
    }

    pub fn endpoints(&self) -> impl Iterator<Item = &str> {
        self.endpoints.iter().map(String::as_str)
    }

    pub fn group_names(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().map(|g| g.name.as_str())
    }

    pub(crate) fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }

    /// Endpoints reachable from group `k`.
    pub(crate) fn subtree_endpoints(&self, k: usize) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        let mut stack = vec![k];
        let mut seen = vec![false; self.groups.len()];
        while let Some(g) = stack.pop() {
            if std::mem::replace(&mut seen[g], true) {
                continue;
            }
            for edge in &self.groups[g].children {
                match &edge.child {
                    Child::Group(c) => stack.push(*c),
                    Child::Endpoint { name, .. } => {
                        out.insert(name.as_str());
                    }
                }
            }
        }
        out
    }
}
