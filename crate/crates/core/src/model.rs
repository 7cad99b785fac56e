//! Connection and sub-flow state, plus the full-mesh path manager.
//!
//! A [`ConnectionState`] is the meta-connection: it owns every sub-flow ever
//! created on it (dead ones included, so ids are never reused), the
//! per-connection priority lists and the scheduler selection.

use std::collections::VecDeque;
use std::fmt;
use std::net::{IpAddr, SocketAddr};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sockopt::PriorityLists;
use crate::wire::MpPrioOption;

/// An interface address plus port. Address width always matches the family.
pub type EndpointAddress = SocketAddr;

/// Local ports of sub-flows are `SUBFLOW_PORT_BASE + id`.
pub const SUBFLOW_PORT_BASE: u16 = 40000;

/// Retransmission timeout used before the first RTT sample.
pub const INITIAL_RTO: Duration = Duration::from_millis(1000);
/// Lower clamp on the retransmission timeout.
pub const MIN_RTO: Duration = Duration::from_millis(200);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AddressFamily {
    V4,
    V6,
}

impl AddressFamily {
    pub fn of(addr: &IpAddr) -> Self {
        match addr {
            IpAddr::V4(_) => AddressFamily::V4,
            IpAddr::V6(_) => AddressFamily::V6,
        }
    }
}

/// A (source interface, destination interface) pair. Ports are not part of
/// the identity; the priority lists match on addresses only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InterfacePair {
    src: IpAddr,
    dst: IpAddr,
}

impl InterfacePair {
    pub fn new(src: IpAddr, dst: IpAddr) -> Result<Self> {
        if AddressFamily::of(&src) != AddressFamily::of(&dst) {
            return Err(Error::Validation(format!(
                "interface pair {src} -> {dst} mixes address families"
            )));
        }
        Ok(InterfacePair { src, dst })
    }

    pub fn from_tuple(local: &EndpointAddress, remote: &EndpointAddress) -> Result<Self> {
        Self::new(local.ip(), remote.ip())
    }

    pub fn src(&self) -> IpAddr {
        self.src
    }

    pub fn dst(&self) -> IpAddr {
        self.dst
    }

    pub fn family(&self) -> AddressFamily {
        AddressFamily::of(&self.src)
    }
}

impl fmt::Display for InterfacePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.src, self.dst)
    }
}

/// Per-connection sub-flow identifier. Assigned monotonically, never reused.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SubflowId(pub u8);

impl fmt::Display for SubflowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    #[default]
    Default,
    Ppos,
}

impl SchedulerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchedulerKind::Default => "default",
            SchedulerKind::Ppos => "ppos",
        }
    }
}

impl std::str::FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(SchedulerKind::Default),
            "ppos" => Ok(SchedulerKind::Ppos),
            other => Err(Error::Config(format!("unknown scheduler `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubflowState {
    pub id: SubflowId,
    pub local: EndpointAddress,
    pub remote: EndpointAddress,
    /// Backup sub-flow when set.
    pub low_prio: bool,
    pub alive: bool,
    /// `None` until the first acknowledgment has been processed.
    pub srtt: Option<Duration>,
    /// Current (possibly backed-off) retransmission timeout.
    pub rto: Duration,
    pub inflight_bytes: u64,
    pub consecutive_timeouts: u32,
    pub bytes_sent_total: u64,
    pub bytes_acked_total: u64,
}

impl SubflowState {
    fn new(id: SubflowId, local: EndpointAddress, remote: EndpointAddress, low_prio: bool) -> Self {
        SubflowState {
            id,
            local,
            remote,
            low_prio,
            alive: true,
            srtt: None,
            rto: INITIAL_RTO,
            inflight_bytes: 0,
            consecutive_timeouts: 0,
            bytes_sent_total: 0,
            bytes_acked_total: 0,
        }
    }

    pub fn pair(&self) -> InterfacePair {
        // Tuples are validated on creation.
        InterfacePair {
            src: self.local.ip(),
            dst: self.remote.ip(),
        }
    }

    pub fn tuple(&self) -> (EndpointAddress, EndpointAddress) {
        (self.local, self.remote)
    }

    /// Alive and not currently backing off after a retransmission timeout.
    ///
    /// A sub-flow whose last transmission timed out is treated as
    /// potentially failed until an acknowledgment arrives again; schedulers
    /// skip it when deciding whether a tier has any usable member.
    pub fn is_available(&self) -> bool {
        self.alive && self.consecutive_timeouts == 0
    }

    /// Folds an RTT sample into the smoothed estimate (gain 1/8) and
    /// recomputes the timeout as `max(2 * srtt, 200 ms)`.
    pub fn on_rtt_sample(&mut self, sample: Duration) {
        let srtt = match self.srtt {
            None => sample,
            Some(prev) => (prev * 7 + sample) / 8,
        };
        self.srtt = Some(srtt);
        self.rto = (srtt * 2).max(MIN_RTO);
    }

    /// Base timeout for the current estimate, without backoff.
    pub fn base_rto(&self) -> Duration {
        match self.srtt {
            Some(srtt) => (srtt * 2).max(MIN_RTO),
            None => INITIAL_RTO,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConnectionState {
    subflows: Vec<SubflowState>,
    next_id: u16,
    pub(crate) lists: PriorityLists,
    pub(crate) primary_path_only: bool,
    pub(crate) primary_pairs: Vec<InterfacePair>,
    pub(crate) scheduler: SchedulerKind,
    local_addrs: Vec<EndpointAddress>,
    remote_addrs: Vec<EndpointAddress>,
    pub(crate) outbox: VecDeque<MpPrioOption>,
}

impl ConnectionState {
    /// Builds a connection and its full mesh of sub-flows, local-index major.
    ///
    /// A `ppos` scheduler kind only records the selection; PPoS proper is
    /// switched on through `enable_primary_path_only`, which also fixes the
    /// primary pairs.
    pub fn new_connection(
        local_addrs: Vec<EndpointAddress>,
        remote_addrs: Vec<EndpointAddress>,
        scheduler: SchedulerKind,
    ) -> Result<Self> {
        if local_addrs.is_empty() {
            return Err(Error::Config("no local addresses".into()));
        }
        if remote_addrs.is_empty() {
            return Err(Error::Config("no remote addresses".into()));
        }
        let family = AddressFamily::of(&local_addrs[0].ip());
        if let Some(bad) = local_addrs
            .iter()
            .chain(&remote_addrs)
            .find(|a| AddressFamily::of(&a.ip()) != family)
        {
            return Err(Error::Config(format!(
                "address {bad} does not match the connection's address family"
            )));
        }

        let mut conn = ConnectionState {
            subflows: Vec::new(),
            next_id: 1,
            lists: PriorityLists::default(),
            primary_path_only: false,
            primary_pairs: Vec::new(),
            scheduler,
            local_addrs,
            remote_addrs,
            outbox: VecDeque::new(),
        };
        for local in conn.local_addrs.clone() {
            for remote in conn.remote_addrs.clone() {
                conn.create_subflow(local.ip(), remote)?;
            }
        }
        Ok(conn)
    }

    /// A connection under the passive ("default") path manager: it creates
    /// no sub-flows itself and only accepts joins from the peer.
    pub fn new_passive(
        local_addrs: Vec<EndpointAddress>,
        remote_addrs: Vec<EndpointAddress>,
        scheduler: SchedulerKind,
    ) -> Result<Self> {
        if local_addrs.is_empty() || remote_addrs.is_empty() {
            return Err(Error::Config("passive connection needs addresses on both sides".into()));
        }
        Ok(ConnectionState {
            subflows: Vec::new(),
            next_id: 1,
            lists: PriorityLists::default(),
            primary_path_only: false,
            primary_pairs: Vec::new(),
            scheduler,
            local_addrs,
            remote_addrs,
            outbox: VecDeque::new(),
        })
    }

    pub fn local_addrs(&self) -> &[EndpointAddress] {
        &self.local_addrs
    }

    pub fn remote_addrs(&self) -> &[EndpointAddress] {
        &self.remote_addrs
    }

    /// Every (local, remote) interface pair of the full mesh, in creation order.
    pub fn interface_pairs(&self) -> Vec<InterfacePair> {
        self.local_addrs
            .iter()
            .flat_map(|l| {
                self.remote_addrs
                    .iter()
                    .map(move |r| InterfacePair { src: l.ip(), dst: r.ip() })
            })
            .collect()
    }

    /// All sub-flows ever created, dead ones included, in id order.
    pub fn subflows(&self) -> &[SubflowState] {
        &self.subflows
    }

    pub fn subflow(&self, id: SubflowId) -> Option<&SubflowState> {
        self.subflows.iter().find(|sf| sf.id == id)
    }

    pub fn subflow_mut(&mut self, id: SubflowId) -> Option<&mut SubflowState> {
        self.subflows.iter_mut().find(|sf| sf.id == id)
    }

    pub(crate) fn alive_subflow_mut(&mut self, id: SubflowId) -> Result<&mut SubflowState> {
        self.subflows
            .iter_mut()
            .find(|sf| sf.id == id && sf.alive)
            .ok_or(Error::NotFound(id))
    }

    /// The live sub-flow currently bound to `pair`, if any.
    pub fn alive_subflow_on(&self, pair: &InterfacePair) -> Option<&SubflowState> {
        self.subflows.iter().find(|sf| sf.alive && sf.pair() == *pair)
    }

    pub fn lists(&self) -> &PriorityLists {
        &self.lists
    }

    pub fn primary_path_only(&self) -> bool {
        self.primary_path_only
    }

    pub fn primary_pairs(&self) -> &[InterfacePair] {
        &self.primary_pairs
    }

    pub fn scheduler(&self) -> SchedulerKind {
        self.scheduler
    }

    /// MP_PRIO signals waiting to be carried to the peer.
    pub fn outbox(&self) -> &VecDeque<MpPrioOption> {
        &self.outbox
    }

    pub fn drain_outbox(&mut self) -> Vec<MpPrioOption> {
        self.outbox.drain(..).collect()
    }

    /// Ids of live sub-flows, in id order.
    pub fn list_subflow_ids(&self) -> Vec<SubflowId> {
        self.subflows.iter().filter(|sf| sf.alive).map(|sf| sf.id).collect()
    }

    pub fn get_subflow_tuple(&self, id: SubflowId) -> Result<(EndpointAddress, EndpointAddress)> {
        self.subflow(id).map(SubflowState::tuple).ok_or(Error::NotFound(id))
    }

    /// Opens a sub-flow over an explicit 4-tuple. Its priority is derived
    /// from the lists as they stand now.
    pub fn open_subflow(&mut self, tuple: (EndpointAddress, EndpointAddress)) -> Result<SubflowId> {
        let pair = InterfacePair::from_tuple(&tuple.0, &tuple.1)?;
        if self.subflows.iter().any(|sf| sf.alive && sf.tuple() == tuple) {
            return Err(Error::AlreadyExists(format!("{}->{}", tuple.0, tuple.1)));
        }
        let low_prio = self.priority_for(&pair);
        let id = self.allocate_id()?;
        self.subflows.push(SubflowState::new(id, tuple.0, tuple.1, low_prio));
        Ok(id)
    }

    /// Creates a sub-flow on an interface pair with the deterministic local
    /// port `SUBFLOW_PORT_BASE + id`. Used by the path manager for the
    /// initial mesh and for re-establishment.
    pub fn create_subflow(&mut self, local: IpAddr, remote: EndpointAddress) -> Result<SubflowId> {
        let id = self.peek_id()?;
        let port = SUBFLOW_PORT_BASE + u16::from(id.0);
        self.open_subflow((SocketAddr::new(local, port), remote))
    }

    /// Mirrors a sub-flow opened by the peer, keeping the peer's id and the
    /// backup flag it announced.
    pub fn join_subflow(
        &mut self,
        id: SubflowId,
        tuple: (EndpointAddress, EndpointAddress),
        low_prio: bool,
    ) -> Result<()> {
        InterfacePair::from_tuple(&tuple.0, &tuple.1)?;
        if self.subflow(id).is_some() {
            return Err(Error::AlreadyExists(format!("sub-flow id {id}")));
        }
        self.subflows.push(SubflowState::new(id, tuple.0, tuple.1, low_prio));
        self.subflows.sort_by_key(|sf| sf.id);
        self.next_id = self.next_id.max(u16::from(id.0) + 1);
        Ok(())
    }

    pub fn close_subflow(&mut self, id: SubflowId) -> Result<()> {
        let sf = self.alive_subflow_mut(id)?;
        sf.alive = false;
        Ok(())
    }

    /// Backup flag a sub-flow created now on `pair` would receive.
    pub fn priority_for(&self, pair: &InterfacePair) -> bool {
        if self.primary_path_only {
            !self.primary_pairs.contains(pair)
        } else {
            crate::sockopt::classify_subflow_priority(pair, &self.lists)
        }
    }

    fn peek_id(&self) -> Result<SubflowId> {
        u8::try_from(self.next_id).map(SubflowId).map_err(|_| Error::IdsExhausted)
    }

    fn allocate_id(&mut self) -> Result<SubflowId> {
        let id = self.peek_id()?;
        self.next_id += 1;
        Ok(id)
    }
}
