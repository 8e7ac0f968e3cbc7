use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FarbleError;

pub const PROFILE_SCHEMA_VERSION: u32 = 1;

const SHIPPED: &str = include_str!("../../data/profiles.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileId {
    P1,
    P2,
    P3,
}

impl ProfileId {
    pub const ALL: [ProfileId; 3] = [ProfileId::P1, ProfileId::P2, ProfileId::P3];

    pub fn as_str(self) -> &'static str {
        match self {
            ProfileId::P1 => "p1",
            ProfileId::P2 => "p2",
            ProfileId::P3 => "p3",
        }
    }
}

impl fmt::Display for ProfileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProfileId {
    type Err = FarbleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "p1" => Ok(ProfileId::P1),
            "p2" => Ok(ProfileId::P2),
            "p3" => Ok(ProfileId::P3),
            other => Err(FarbleError::Profile(format!("unknown profile {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProtectionAction {
    /// Per-origin deterministic perturbation.
    LittleLie,
    PassThrough,
    Block,
    /// A fixed value, identical for every origin and session.
    FixedFake,
}

impl fmt::Display for ProtectionAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointGroup {
    pub fingerprintable: bool,
    pub endpoints: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogDocument {
    schema_version: u32,
    groups: BTreeMap<String, EndpointGroup>,
    profiles: BTreeMap<ProfileId, BTreeMap<String, ProtectionAction>>,
}

/// Endpoint groups plus the three profile strategy tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileCatalog {
    groups: BTreeMap<String, EndpointGroup>,
    endpoint_group: BTreeMap<String, String>,
    tables: BTreeMap<ProfileId, BTreeMap<String, ProtectionAction>>,
}

impl ProfileCatalog {
    /// The catalog compiled into the crate.
    pub fn shipped() -> Self {
        Self::from_json(SHIPPED).expect("shipped profile catalog is valid")
    }

    pub fn from_json(doc: &str) -> Result<Self, FarbleError> {
        let doc: CatalogDocument =
            serde_json::from_str(doc).map_err(|e| FarbleError::Profile(e.to_string()))?;
        if doc.schema_version != PROFILE_SCHEMA_VERSION {
            return Err(FarbleError::Profile(format!(
                "unsupported schema_version {}",
                doc.schema_version
            )));
        }
        let mut endpoint_group = BTreeMap::new();
        for (name, group) in &doc.groups {
            for ep in &group.endpoints {
                if let Some(prev) = endpoint_group.insert(ep.clone(), name.clone()) {
                    return Err(FarbleError::Profile(format!(
                        "endpoint {ep:?} listed in both {prev:?} and {name:?}"
                    )));
                }
            }
        }
        for id in ProfileId::ALL {
            let table = doc
                .profiles
                .get(&id)
                .ok_or_else(|| FarbleError::Profile(format!("profile {id} missing")))?;
            if let Some(extra) = table.keys().find(|g| !doc.groups.contains_key(*g)) {
                return Err(FarbleError::Profile(format!(
                    "profile {id}: unknown group {extra:?}"
                )));
            }
            for (name, group) in &doc.groups {
                let action = *table.get(name).ok_or_else(|| {
                    FarbleError::Profile(format!("profile {id}: group {name:?} has no action"))
                })?;
                check_profile_rule(id, name, group, action)?;
            }
        }
        Ok(Self {
            groups: doc.groups,
            endpoint_group,
            tables: doc.profiles,
        })
    }

    pub fn profile(&self, id: ProfileId) -> ProtectionProfile {
        ProtectionProfile {
            id,
            actions: self.tables[&id].clone(),
            endpoint_group: self.endpoint_group.clone(),
        }
    }

    pub fn groups(&self) -> &BTreeMap<String, EndpointGroup> {
        &self.groups
    }

    pub fn endpoints(&self) -> impl Iterator<Item = &str> {
        self.endpoint_group.keys().map(String::as_str)
    }
}

fn check_profile_rule(
    id: ProfileId,
    name: &str,
    group: &EndpointGroup,
    action: ProtectionAction,
) -> Result<(), FarbleError> {
    use ProtectionAction::*;
    let ok = match id {
        ProfileId::P1 => !group.fingerprintable || action == LittleLie,
        ProfileId::P2 => !group.fingerprintable || action == PassThrough,
        ProfileId::P3 => matches!(action, Block | FixedFake),
    };
    if ok {
        Ok(())
    } else {
        Err(FarbleError::Profile(format!(
            "profile {id}: action {action} not allowed for group {name:?}"
        )))
    }
}

/// One profile's strategy table together with the endpoint catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtectionProfile {
    id: ProfileId,
    actions: BTreeMap<String, ProtectionAction>,
    endpoint_group: BTreeMap<String, String>,
}

impl ProtectionProfile {
    pub fn id(&self) -> ProfileId {
        self.id
    }

    pub fn group_of(&self, endpoint: &str) -> Option<&str> {
        self.endpoint_group.get(endpoint).map(String::as_str)
    }

    pub fn action_for_group(&self, group: &str) -> Option<ProtectionAction> {
        self.actions.get(group).copied()
    }
}

/// Unknown endpoints pass through untouched.
pub fn resolve_protection(profile: &ProtectionProfile, endpoint: &str) -> ProtectionAction {
    profile
        .group_of(endpoint)
        .and_then(|g| profile.action_for_group(g))
        .unwrap_or(ProtectionAction::PassThrough)
}
