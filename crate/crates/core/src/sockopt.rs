//! Application-facing sub-flow priority controls.
//!
//! * `set_subflow_priority` flips one live sub-flow between active and
//!   backup and queues an MP_PRIO for the peer.
//! * The active and backup interface lists decide the backup flag of every
//!   sub-flow created after they are set, so priorities survive sub-flow
//!   re-creation. Existing sub-flows are never reclassified by a list change.
//! * `enable_primary_path_only` pins traffic to a set of primary pairs.

use log::warn;

use crate::error::{Error, Result};
use crate::model::{ConnectionState, InterfacePair, SchedulerKind, SubflowId};
use crate::wire::MpPrioOption;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubPrioRequest {
    pub id: SubflowId,
    pub low_prio: bool,
}

/// The active and backup interface lists, each with set semantics.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PriorityLists {
    active: Vec<InterfacePair>,
    backup: Vec<InterfacePair>,
}

fn dedup(pairs: impl IntoIterator<Item = InterfacePair>) -> Vec<InterfacePair> {
    let mut out: Vec<InterfacePair> = Vec::new();
    for pair in pairs {
        if !out.contains(&pair) {
            out.push(pair);
        }
    }
    out
}

impl PriorityLists {
    pub fn new(
        active: impl IntoIterator<Item = InterfacePair>,
        backup: impl IntoIterator<Item = InterfacePair>,
    ) -> Self {
        PriorityLists {
            active: dedup(active),
            backup: dedup(backup),
        }
    }

    pub fn active(&self) -> &[InterfacePair] {
        &self.active
    }

    pub fn backup(&self) -> &[InterfacePair] {
        &self.backup
    }
}

/// Backup flag for a new sub-flow on `pair`.
///
/// A non-empty active list makes its members active and everything else
/// backup, and it wins over the backup list. Otherwise members of the backup
/// list are backup. With both lists empty every sub-flow is active.
pub fn classify_subflow_priority(pair: &InterfacePair, lists: &PriorityLists) -> bool {
    if !lists.active.is_empty() {
        !lists.active.contains(pair)
    } else if !lists.backup.is_empty() {
        lists.backup.contains(pair)
    } else {
        false
    }
}

impl ConnectionState {
    /// Under PPoS a sub-flow off the primary pairs cannot be made active.
    pub fn set_subflow_priority(&mut self, req: SubPrioRequest) -> Result<()> {
        let ppos = self.primary_path_only.then(|| self.primary_pairs.clone());
        let sf = self.alive_subflow_mut(req.id)?;
        if let Some(primaries) = ppos {
            if !req.low_prio && !primaries.contains(&sf.pair()) {
                return Err(Error::Validation(format!(
                    "sub-flow {} is not on a primary pair and must stay backup",
                    req.id
                )));
            }
        }
        sf.low_prio = req.low_prio;
        self.outbox.push_back(MpPrioOption {
            backup_flag: req.low_prio,
            addr_id: Some(req.id.0),
        });
        Ok(())
    }

    /// Applies an MP_PRIO received on sub-flow `arrived_on`. Returns whether
    /// a sub-flow was updated; options naming no live sub-flow are dropped.
    pub fn apply_remote_mp_prio(&mut self, opt: &MpPrioOption, arrived_on: SubflowId) -> bool {
        let target = opt.addr_id.map_or(arrived_on, SubflowId);
        match self.alive_subflow_mut(target) {
            Ok(sf) => {
                sf.low_prio = opt.backup_flag;
                true
            }
            Err(_) => {
                warn!("ignoring MP_PRIO for unknown sub-flow {target}");
                false
            }
        }
    }

    pub fn set_active_interface_list(&mut self, pairs: Vec<InterfacePair>) -> Result<()> {
        validate_pairs(&pairs)?;
        self.lists.active = dedup(pairs);
        Ok(())
    }

    pub fn set_backup_interface_list(&mut self, pairs: Vec<InterfacePair>) -> Result<()> {
        validate_pairs(&pairs)?;
        self.lists.backup = dedup(pairs);
        Ok(())
    }

    /// Switches the connection to the primary-path-only scheduler.
    ///
    /// Live sub-flows off the primary pairs become backup and live primary
    /// sub-flows become active; each flag that actually changes is announced
    /// with an MP_PRIO. Later sub-flows get the same treatment at birth.
    pub fn enable_primary_path_only(&mut self, primary_pairs: Vec<InterfacePair>) -> Result<()> {
        if primary_pairs.is_empty() {
            return Err(Error::Validation("primary pair set is empty".into()));
        }
        let known = self.interface_pairs();
        if let Some(bad) = primary_pairs.iter().find(|p| !known.contains(p)) {
            return Err(Error::Validation(format!(
                "primary pair {bad} is not an interface pair of this connection"
            )));
        }
        self.primary_pairs = dedup(primary_pairs);
        self.primary_path_only = true;
        self.scheduler = SchedulerKind::Ppos;

        let changes: Vec<SubPrioRequest> = self
            .subflows()
            .iter()
            .filter(|sf| sf.alive)
            .filter_map(|sf| {
                let low_prio = !self.primary_pairs.contains(&sf.pair());
                (sf.low_prio != low_prio).then_some(SubPrioRequest { id: sf.id, low_prio })
            })
            .collect();
        for req in changes {
            self.set_subflow_priority(req)?;
        }
        Ok(())
    }
}

fn validate_pairs(pairs: &[InterfacePair]) -> Result<()> {
    // Pairs can only be built with matching families; re-check in case the
    // type grows other constructors.
    for pair in pairs {
        InterfacePair::new(pair.src(), pair.dst())?;
    }
    Ok(())
}
