//! Scenario documents: topology, scheduler choice and a timed action script.
//!
//! Documents are TOML. Links are referenced by their index in
//! `topology.links`; a link joins one local and one remote interface, and
//! every (local, remote) combination must have exactly one link.

use std::collections::BTreeSet;
use std::net::{IpAddr, SocketAddr};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EndpointAddress, InterfacePair, SchedulerKind};
use crate::report::TimelineReport;
use crate::simnet::{self, SimConfig};

/// Destination port used for every remote interface unless overridden.
pub const DEFAULT_REMOTE_PORT: u16 = 5001;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub duration_ms: u64,
    #[serde(default)]
    pub scheduler: SchedulerKind,
    /// Primary links when `scheduler = "ppos"`; defaults to link 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub primary_links: Vec<usize>,
    pub topology: Topology,
    #[serde(default)]
    pub actions: Vec<TimedAction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub local: Vec<IpAddr>,
    pub remote: Vec<IpAddr>,
    #[serde(default = "default_remote_port")]
    pub remote_port: u16,
    pub links: Vec<LinkDef>,
}

fn default_remote_port() -> u16 {
    DEFAULT_REMOTE_PORT
}

fn default_up() -> bool {
    true
}

fn is_true(v: &bool) -> bool {
    *v
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDef {
    pub local: usize,
    pub remote: usize,
    pub bandwidth_bps: u64,
    pub delay_ms: u64,
    #[serde(default = "default_up", skip_serializing_if = "is_true")]
    pub up: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    SetSubPrio,
    SetActiveList,
    SetBackupList,
    EnablePpos,
    LinkDown,
    LinkUp,
}

impl ActionKind {
    fn needs_links(self) -> bool {
        matches!(self, ActionKind::SetSubPrio | ActionKind::LinkDown | ActionKind::LinkUp)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedAction {
    pub at_ms: u64,
    pub action: ActionKind,
    /// Target links. For `set_sub_prio` the live sub-flow on each link's
    /// pair is addressed; for the list actions the links name the pairs.
    #[serde(default)]
    pub links: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low_prio: Option<bool>,
}

impl TimedAction {
    pub fn at(&self) -> Duration {
        Duration::from_millis(self.at_ms)
    }
}

impl Scenario {
    pub fn duration(&self) -> Duration {
        Duration::from_millis(self.duration_ms)
    }

    pub fn local_endpoints(&self) -> Vec<EndpointAddress> {
        self.topology.local.iter().map(|ip| SocketAddr::new(*ip, 0)).collect()
    }

    pub fn remote_endpoints(&self) -> Vec<EndpointAddress> {
        self.topology
            .remote
            .iter()
            .map(|ip| SocketAddr::new(*ip, self.topology.remote_port))
            .collect()
    }

    /// Interface pair carried by link `link`. The scenario must be valid.
    pub fn link_pair(&self, link: usize) -> Result<InterfacePair> {
        let def = self
            .topology
            .links
            .get(link)
            .ok_or_else(|| Error::Validation(format!("unknown link {link}")))?;
        InterfacePair::new(self.topology.local[def.local], self.topology.remote[def.remote])
    }

    pub fn link_pairs(&self, links: &[usize]) -> Result<Vec<InterfacePair>> {
        links.iter().map(|&l| self.link_pair(l)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::Validation(msg));
        if self.duration_ms == 0 {
            return invalid(format!("scenario `{}` has zero duration", self.name));
        }
        let topo = &self.topology;
        if topo.local.is_empty() || topo.remote.is_empty() {
            return invalid("topology needs at least one local and one remote interface".into());
        }

        let mut seen = BTreeSet::new();
        for (i, link) in topo.links.iter().enumerate() {
            if link.local >= topo.local.len() {
                return invalid(format!("link {i} references unknown local interface {}", link.local));
            }
            if link.remote >= topo.remote.len() {
                return invalid(format!("link {i} references unknown remote interface {}", link.remote));
            }
            if link.bandwidth_bps == 0 {
                return invalid(format!("link {i} has zero bandwidth"));
            }
            self.link_pair(i)?;
            if !seen.insert((link.local, link.remote)) {
                return invalid(format!(
                    "link {i} duplicates the pair (local {}, remote {})",
                    link.local, link.remote
                ));
            }
        }
        for l in 0..topo.local.len() {
            for r in 0..topo.remote.len() {
                if !seen.contains(&(l, r)) {
                    return invalid(format!(
                        "no link for pair {}-{}",
                        topo.local[l], topo.remote[r]
                    ));
                }
            }
        }

        let check_links = |links: &[usize], what: &str| -> Result<()> {
            match links.iter().find(|&&l| l >= topo.links.len()) {
                Some(l) => invalid(format!(
                    "{what} references link {l}, but the topology has {} links",
                    topo.links.len()
                )),
                None => Ok(()),
            }
        };
        check_links(&self.primary_links, "primary_links")?;
        if self.scheduler == SchedulerKind::Default && !self.primary_links.is_empty() {
            return invalid("primary_links given without scheduler = \"ppos\"".into());
        }

        for action in &self.actions {
            let what = format!("action {:?} at {} ms", action.action, action.at_ms);
            if action.at_ms > self.duration_ms {
                return invalid(format!("{what} is after the end of the scenario"));
            }
            check_links(&action.links, &what)?;
            if action.action.needs_links() && action.links.is_empty() {
                return invalid(format!("{what} names no links"));
            }
            match (action.action, action.low_prio) {
                (ActionKind::SetSubPrio, None) => {
                    return invalid(format!("{what} is missing low_prio"));
                }
                (ActionKind::SetSubPrio, Some(_)) | (_, None) => {}
                (_, Some(_)) => return invalid(format!("{what} does not take low_prio")),
            }
        }
        if self.actions.windows(2).any(|w| w[0].at_ms > w[1].at_ms) {
            return invalid("actions are not sorted by time".into());
        }
        Ok(())
    }

    pub fn to_document(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }
}

/// Parses and validates a scenario document. Actions are stably sorted by
/// time.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut scenario: Scenario = toml::from_str(text).map_err(|err| {
        let line = err
            .span()
            .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::Syntax {
            line,
            message: err.message().to_string(),
        }
    })?;
    scenario.actions.sort_by_key(|a| a.at_ms);
    scenario.validate()?;
    Ok(scenario)
}

const BUILTINS: &[(&str, &str)] = &[
    ("fig4", include_str!("../scenarios/fig4.toml")),
    ("fig5", include_str!("../scenarios/fig5.toml")),
    ("fig6_default", include_str!("../scenarios/fig6_default.toml")),
    ("fig6_ppos", include_str!("../scenarios/fig6_ppos.toml")),
    ("steady_default", include_str!("../scenarios/steady_default.toml")),
    ("steady_ppos", include_str!("../scenarios/steady_ppos.toml")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(name, _)| *name)
}

pub fn builtin_document(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, doc)| *doc)
}

pub fn builtin(name: &str) -> Option<Scenario> {
    builtin_document(name).map(|doc| parse_scenario(doc).expect("built-in scenario is valid"))
}

/// Environment variable that forces the primary-path-only scheduler on.
pub const PRIMARY_PATH_ONLY_ENV: &str = "MPFLOW_PRIMARY_PATH_ONLY";

/// True when `MPFLOW_PRIMARY_PATH_ONLY` is set to a non-empty value other
/// than `0`.
pub fn primary_path_only_from_env() -> bool {
    std::env::var(PRIMARY_PATH_ONLY_ENV).is_ok_and(|v| !v.is_empty() && v != "0")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    pub bucket_ms: u64,
    /// Reserved for stochastic extensions; the engine is deterministic and
    /// ignores it.
    pub seed: u64,
    /// Enable PPoS at t=0 on the first interface pair, whatever the
    /// scenario says.
    pub force_ppos: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            bucket_ms: 1000,
            seed: 0,
            force_ppos: false,
        }
    }
}

pub fn run_scenario(scenario: &Scenario, options: &RunOptions) -> Result<TimelineReport> {
    if options.bucket_ms == 0 {
        return Err(Error::Config("bucket width must be positive".into()));
    }
    let mut scenario = scenario.clone();
    if options.force_ppos && scenario.scheduler != SchedulerKind::Ppos {
        scenario.scheduler = SchedulerKind::Ppos;
        scenario.primary_links.clear();
    }
    let config = SimConfig {
        bucket: Duration::from_millis(options.bucket_ms),
        ..SimConfig::default()
    };
    simnet::run(&scenario, config)
}

/// Resolves a built-in scenario name or a path to a scenario document.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario> {
    if let Some(doc) = builtin_document(name_or_path) {
        return parse_scenario(doc);
    }
    let text = std::fs::read_to_string(name_or_path)
        .map_err(|e| Error::Io(format!("{name_or_path}: {e}")))?;
    parse_scenario(&text)
}
