//! Scenario files: who matches whom, under which protocol and parameters.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use privmatch::bloom::AttributePool;
use privmatch::protocol::ematch::EMatchConfig;
use privmatch::protocol::ProtocolId;
use privmatch::similarity::{AttributeProfile, DEFAULT_KAPPA};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const TABLE2: &str = include_str!("../scenarios/table2.json");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("initiator {0:?} must name exactly one user")]
    Initiator(String),
    #[error("scenario needs at least one responder")]
    NoResponders,
    #[error("duplicate user name {0:?}")]
    DuplicateUser(String),
    #[error("user {user:?}: {source}")]
    Profile { user: String, source: privmatch::ProfileError },
    #[error("user {user:?}: threshold {threshold} outside [0, 1]")]
    Threshold { user: String, threshold: f64 },
    #[error("attribute pool: {0}")]
    Pool(#[from] privmatch::BloomError),
    #[error("{0}")]
    Invalid(String),
}

/// Which protocol a scenario runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize, clap::ValueEnum)]
pub enum ProtocolKind {
    #[default]
    #[serde(rename = "pmatch")]
    #[value(name = "pmatch")]
    PMatch,
    #[serde(rename = "pmatch+")]
    #[value(name = "pmatch+")]
    PMatchPlus,
    #[serde(rename = "ematch")]
    #[value(name = "ematch")]
    EMatch,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [ProtocolKind::PMatch, ProtocolKind::PMatchPlus, ProtocolKind::EMatch];

    pub fn id(self) -> ProtocolId {
        match self {
            ProtocolKind::PMatch => ProtocolId::PMatch,
            ProtocolKind::PMatchPlus => ProtocolId::PMatchPlus,
            ProtocolKind::EMatch => ProtocolId::EMatch,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ProtocolKind::PMatch => "pmatch",
            ProtocolKind::PMatchPlus => "pmatch+",
            ProtocolKind::EMatch => "ematch",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ProtocolKind {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| ScenarioError::Invalid(format!("unknown protocol {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub name: String,
    /// Responder acceptance threshold; unused for the initiator.
    #[serde(default)]
    pub threshold: f64,
    /// `[attribute id, priority]` pairs.
    pub attributes: Vec<(String, u32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EMatchParams {
    pub lambda: u32,
    pub l: u32,
    pub lprime: u32,
    pub pool_seed: String,
    pub min_attributes: usize,
}

impl Default for EMatchParams {
    fn default() -> Self {
        Self {
            lambda: 400,
            l: 12,
            lprime: 11,
            pool_seed: "privmatch-pool".into(),
            min_attributes: privmatch::protocol::ematch::DEFAULT_MIN_ATTRIBUTES,
        }
    }
}

impl EMatchParams {
    pub fn config(&self, threshold: f64) -> EMatchConfig {
        EMatchConfig {
            lambda: self.lambda,
            l: self.l,
            lprime: self.lprime,
            threshold,
            min_attributes: self.min_attributes,
            pool_seed: self.pool_seed.as_bytes().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub key: String,
    pub hash: String,
    pub transcript: String,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            key: "key".into(),
            hash: "hash".into(),
            transcript: "transcript".into(),
        }
    }
}

fn default_kappa() -> u32 {
    DEFAULT_KAPPA
}

fn default_prime_bits() -> u64 {
    256
}

fn default_trials() -> u32 {
    1
}

fn default_link() -> f64 {
    crate::transport::BLUETOOTH_KBPS
}

/// A complete experiment description, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub protocol: ProtocolKind,
    #[serde(default = "default_kappa")]
    pub kappa: u32,
    #[serde(default = "default_prime_bits")]
    pub prime_bits: u64,
    /// Name of the user who starts every session.
    pub initiator: String,
    pub users: Vec<UserSpec>,
    /// Global attribute order for E-match indices; defaults to the sorted union.
    #[serde(default)]
    pub attribute_pool: Option<Vec<String>>,
    #[serde(default)]
    pub ematch: EMatchParams,
    #[serde(default)]
    pub seeds: Seeds,
    /// Default trial count for Monte Carlo runs over this scenario.
    #[serde(default = "default_trials")]
    pub trials: u32,
    #[serde(default = "default_link")]
    pub link_kbps: f64,
}

/// A responder ready to be matched.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub name: String,
    pub profile: AttributeProfile,
    pub threshold: f64,
}

/// A validated scenario with parsed profiles.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub initiator_name: String,
    pub initiator: AttributeProfile,
    pub candidates: Vec<Candidate>,
    pub pool: AttributePool,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The five-candidate experiment with Alice as initiator.
    pub fn table2() -> Self {
        Self::from_json(TABLE2).expect("bundled scenario parses")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn prepare(&self) -> Result<Prepared, ScenarioError> {
        if self.kappa == 0 {
            return Err(ScenarioError::Invalid("kappa must be at least 1".into()));
        }
        if self.prime_bits < 16 {
            return Err(ScenarioError::Invalid(format!("prime_bits {} too small", self.prime_bits)));
        }
        if self.link_kbps.is_nan() || self.link_kbps <= 0.0 {
            return Err(ScenarioError::Invalid("link_kbps must be positive".into()));
        }
        let mut seen = HashSet::new();
        for u in &self.users {
            if !seen.insert(u.name.as_str()) {
                return Err(ScenarioError::DuplicateUser(u.name.clone()));
            }
        }
        if self.users.iter().filter(|u| u.name == self.initiator).count() != 1 {
            return Err(ScenarioError::Initiator(self.initiator.clone()));
        }
        let profile = |u: &UserSpec| {
            AttributeProfile::new(u.attributes.iter().map(|(a, p)| (a.as_str(), *p)), self.kappa).map_err(|source| ScenarioError::Profile {
                user: u.name.clone(),
                source,
            })
        };
        let mut initiator = None;
        let mut candidates = Vec::new();
        for u in &self.users {
            let p = profile(u)?;
            if u.name == self.initiator {
                initiator = Some(p);
                continue;
            }
            if !(0.0..=1.0).contains(&u.threshold) {
                return Err(ScenarioError::Threshold {
                    user: u.name.clone(),
                    threshold: u.threshold,
                });
            }
            candidates.push(Candidate {
                name: u.name.clone(),
                profile: p,
                threshold: u.threshold,
            });
        }
        if candidates.is_empty() {
            return Err(ScenarioError::NoResponders);
        }
        let pool = match &self.attribute_pool {
            Some(list) => AttributePool::new(list.iter().map(String::as_str), self.kappa)?,
            None => {
                let mut all: Vec<&str> = self
                    .users
                    .iter()
                    .flat_map(|u| u.attributes.iter().map(|(a, _)| a.as_str()))
                    .collect();
                all.sort_unstable();
                all.dedup();
                AttributePool::new(all, self.kappa)?
            }
        };
        Ok(Prepared {
            initiator_name: self.initiator.clone(),
            initiator: initiator.expect("initiator checked above"),
            candidates,
            pool,
        })
    }
}
