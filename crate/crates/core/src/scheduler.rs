//! Per-segment sub-flow selection.
//!
//! Sub-flows form two tiers: active (`low_prio == false`) and backup. A tier
//! is in use while at least one of its members is available (alive and not
//! backing off after a timeout); a member whose window is full makes the
//! sender wait rather than spill onto the next tier. Within a tier the
//! lowest smoothed RTT wins, ties going to the lowest id.

use crate::model::{ConnectionState, SchedulerKind, SubflowId, SubflowState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecisionReason {
    ActivePath,
    BackupFallback,
    PrimaryPath,
    NoPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchedulerDecision {
    pub chosen: Option<SubflowId>,
    pub reason: DecisionReason,
}

impl SchedulerDecision {
    pub const NO_PATH: SchedulerDecision = SchedulerDecision {
        chosen: None,
        reason: DecisionReason::NoPath,
    };

    fn pick(sf: Option<&SubflowState>, reason: DecisionReason) -> Self {
        match sf {
            Some(sf) => SchedulerDecision { chosen: Some(sf.id), reason },
            None => Self::NO_PATH,
        }
    }
}

/// Available (see [`SubflowState::is_available`]) with room for one more
/// `mss`-sized segment under `window`.
pub fn is_schedulable(sf: &SubflowState, mss: u64, window: u64) -> bool {
    sf.is_available() && sf.inflight_bytes + mss <= window
}

/// Lowest-srtt schedulable member of `tier`, or `None` when the tier has no
/// available member. An unmeasured srtt sorts as zero.
fn pick_from_tier<'a>(
    tier: impl Iterator<Item = &'a SubflowState> + Clone,
    mss: u64,
    window: u64,
) -> Option<Option<&'a SubflowState>> {
    if !tier.clone().any(SubflowState::is_available) {
        return None;
    }
    Some(
        tier.filter(|sf| is_schedulable(sf, mss, window))
            .min_by_key(|sf| (sf.srtt.unwrap_or_default(), sf.id)),
    )
}

fn select_tiers<'a>(
    candidates: impl Iterator<Item = &'a SubflowState> + Clone,
    mss: u64,
    window: u64,
    first_reason: DecisionReason,
) -> SchedulerDecision {
    let active = candidates.clone().filter(|sf| !sf.low_prio);
    if let Some(pick) = pick_from_tier(active, mss, window) {
        return SchedulerDecision::pick(pick, first_reason);
    }
    let backup = candidates.filter(|sf| sf.low_prio);
    match pick_from_tier(backup, mss, window) {
        Some(pick) => SchedulerDecision::pick(pick, DecisionReason::BackupFallback),
        None => SchedulerDecision::NO_PATH,
    }
}

/// Lowest-RTT selection over active sub-flows, falling back to backup
/// sub-flows only when no active one is available.
pub fn select_default(conn: &ConnectionState, mss: u64, window: u64) -> SchedulerDecision {
    select_tiers(conn.subflows().iter(), mss, window, DecisionReason::ActivePath)
}

/// Primary-path-only selection: primary-pair sub-flows carry everything
/// while any of them is available; otherwise the remaining sub-flows are
/// scheduled as by [`select_default`]. Selection is re-run for every
/// segment, so traffic returns to a restored primary path immediately.
pub fn select_ppos(conn: &ConnectionState, mss: u64, window: u64) -> SchedulerDecision {
    let primaries = conn.primary_pairs();
    let on_primary = |sf: &&SubflowState| primaries.contains(&sf.pair());
    if let Some(pick) = pick_from_tier(conn.subflows().iter().filter(on_primary), mss, window) {
        return SchedulerDecision::pick(pick, DecisionReason::PrimaryPath);
    }
    let rest = conn.subflows().iter().filter(|sf| !on_primary(sf));
    select_tiers(rest, mss, window, DecisionReason::BackupFallback)
}

impl ConnectionState {
    pub fn select_subflow(&self, mss: u64, window: u64) -> SchedulerDecision {
        match self.scheduler() {
            SchedulerKind::Ppos if self.primary_path_only() => select_ppos(self, mss, window),
            _ => select_default(self, mss, window),
        }
    }
}
