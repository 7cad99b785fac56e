//! Deterministic discrete-event simulation of one MPTCP connection.
//!
//! The sender has an infinite backlog and keeps every schedulable sub-flow's
//! window full of MSS-sized segments. Each link serializes segments in FIFO
//! order at its bandwidth, then delays them by its one-way delay; acks come
//! back after one more one-way delay. A link that goes down drops everything
//! in flight on it and everything sent while it stays down.
//!
//! Failures are detected by retransmission timeouts. Idle sub-flows send a
//! zero-byte keepalive probe once per keepalive interval so that failures
//! of idle backup paths are noticed too. A sub-flow that times out
//! `FAILURE_TIMEOUTS` times in a row is declared dead, its unacknowledged
//! bytes are handed back to the scheduler, and the path manager retries its
//! interface pair every `reestablish_interval` until the link is back.
//!
//! All time is kept as `Duration` since the start of the run; ties between
//! events at the same instant are broken by insertion order.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::time::Duration;

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::model::{ConnectionState, InterfacePair, SchedulerKind, SubflowId};
use crate::report::{GenealogyEntry, ThroughputBucket, TimelineReport};
use crate::scenario::{ActionKind, Scenario, TimedAction};
use crate::sockopt::SubPrioRequest;
use crate::wire::{decode_mp_prio, encode_mp_prio};

/// Consecutive timeouts after which a sub-flow is declared dead.
pub const FAILURE_TIMEOUTS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub mss: u64,
    /// Fixed per-sub-flow send window in bytes.
    pub window: u64,
    pub bucket: Duration,
    pub reestablish_interval: Duration,
    pub keepalive_interval: Duration,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            mss: 1460,
            window: 32 * 1460,
            bucket: Duration::from_millis(1000),
            reestablish_interval: Duration::from_millis(1000),
            keepalive_interval: Duration::from_millis(1000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkSpec {
    pub link_id: usize,
    pub pair: InterfacePair,
    pub bandwidth_bps: u64,
    pub one_way_delay: Duration,
    pub up: bool,
}

impl LinkSpec {
    pub fn serialization_time(&self, bytes: u64) -> Duration {
        let nanos = u128::from(bytes) * 8 * 1_000_000_000 / u128::from(self.bandwidth_bps);
        Duration::from_nanos(nanos as u64)
    }
}

#[derive(Debug)]
struct Link {
    spec: LinkSpec,
    busy_until: Duration,
    /// Bumped whenever the link goes down; packets from an older epoch are lost.
    epoch: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtoOutcome {
    /// The timer was backed off; outstanding data should be retransmitted.
    Backoff { rto: Duration },
    /// The sub-flow is dead; its unacknowledged bytes go back to the scheduler.
    Dead { requeued_bytes: u64 },
}

/// Applies one retransmission timeout to sub-flow `id`: doubles the timer,
/// and on the `FAILURE_TIMEOUTS`-th consecutive timeout marks the sub-flow
/// dead and releases its in-flight bytes.
pub fn handle_rto(conn: &mut ConnectionState, id: SubflowId) -> Result<RtoOutcome> {
    let sf = conn.alive_subflow_mut(id)?;
    sf.consecutive_timeouts += 1;
    if sf.consecutive_timeouts >= FAILURE_TIMEOUTS {
        sf.alive = false;
        let requeued_bytes = std::mem::take(&mut sf.inflight_bytes);
        Ok(RtoOutcome::Dead { requeued_bytes })
    } else {
        sf.rto *= 2;
        Ok(RtoOutcome::Backoff { rto: sf.rto })
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    bytes: u64,
    sent_at: Duration,
    retransmitted: bool,
}

#[derive(Debug, Default)]
struct TxState {
    segments: BTreeMap<u64, Segment>,
    next_seg: u64,
    rto_generation: u64,
    keepalive_generation: u64,
}

#[derive(Debug, Clone)]
enum EventKind {
    Wake,
    SegmentArrival { link: usize, epoch: u64, subflow: SubflowId, seg: u64 },
    AckArrival { link: usize, epoch: u64, subflow: SubflowId, seg: u64 },
    MpPrioArrival { link: usize, epoch: u64, subflow: SubflowId, option: Vec<u8> },
    RtoFire { subflow: SubflowId, generation: u64 },
    Keepalive { subflow: SubflowId, generation: u64 },
    LinkChange { link: usize, up: bool },
    AppAction(TimedAction),
    ReestablishAttempt { link: usize },
}

#[derive(Debug)]
struct Scheduled {
    at: Duration,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

pub struct Simulator {
    config: SimConfig,
    scenario: Scenario,
    now: Duration,
    end: Duration,
    queue: BinaryHeap<Reverse<Scheduled>>,
    next_seq: u64,
    links: Vec<Link>,
    link_of: BTreeMap<InterfacePair, usize>,
    sender: ConnectionState,
    receiver: ConnectionState,
    tx: BTreeMap<SubflowId, TxState>,
    requeued_bytes: u64,
    offered_bytes: u64,
    acked: BTreeMap<(usize, SubflowId), u64>,
    /// (alive, low_prio) of every sub-flow at the end of each bucket.
    snapshots: Vec<BTreeMap<SubflowId, (bool, bool)>>,
    genealogy: Vec<GenealogyEntry>,
    reestablishing: BTreeSet<usize>,
}

impl Simulator {
    /// Builds both endpoints and the links for `scenario`. The sender uses
    /// the full-mesh path manager; the receiver only accepts joins.
    pub fn new(scenario: &Scenario, config: SimConfig) -> Result<Self> {
        scenario.validate()?;
        if config.mss == 0 || config.bucket.is_zero() {
            return Err(Error::Config("mss and bucket width must be positive".into()));
        }
        let locals = scenario.local_endpoints();
        let remotes = scenario.remote_endpoints();
        let sender = ConnectionState::new_connection(locals.clone(), remotes.clone(), SchedulerKind::Default)?;
        let receiver = ConnectionState::new_passive(remotes, locals, SchedulerKind::Default)?;

        let mut links = Vec::with_capacity(scenario.topology.links.len());
        let mut link_of = BTreeMap::new();
        for (link_id, def) in scenario.topology.links.iter().enumerate() {
            let pair = scenario.link_pair(link_id)?;
            link_of.insert(pair, link_id);
            links.push(Link {
                spec: LinkSpec {
                    link_id,
                    pair,
                    bandwidth_bps: def.bandwidth_bps,
                    one_way_delay: Duration::from_millis(def.delay_ms),
                    up: def.up,
                },
                busy_until: Duration::ZERO,
                epoch: 0,
            });
        }

        let mut sim = Simulator {
            config,
            scenario: scenario.clone(),
            now: Duration::ZERO,
            end: scenario.duration(),
            queue: BinaryHeap::new(),
            next_seq: 0,
            links,
            link_of,
            sender,
            receiver,
            tx: BTreeMap::new(),
            requeued_bytes: 0,
            offered_bytes: 0,
            acked: BTreeMap::new(),
            snapshots: Vec::new(),
            genealogy: Vec::new(),
            reestablishing: BTreeSet::new(),
        };

        let initial: Vec<SubflowId> = sim.sender.list_subflow_ids();
        for id in initial {
            sim.register_subflow(id)?;
        }
        if scenario.scheduler == SchedulerKind::Ppos {
            let primaries = if scenario.primary_links.is_empty() {
                vec![sim.sender.interface_pairs()[0]]
            } else {
                scenario.link_pairs(&scenario.primary_links)?
            };
            sim.sender.enable_primary_path_only(primaries)?;
            sim.deliver_outbox();
        }
        for action in &scenario.actions {
            sim.push(action.at(), EventKind::AppAction(action.clone()));
        }
        sim.push(Duration::ZERO, EventKind::Wake);
        Ok(sim)
    }

    pub fn sender(&self) -> &ConnectionState {
        &self.sender
    }

    pub fn receiver(&self) -> &ConnectionState {
        &self.receiver
    }

    pub fn links(&self) -> impl Iterator<Item = &LinkSpec> {
        self.links.iter().map(|l| &l.spec)
    }

    /// New data bytes handed to the scheduler so far (retransmissions of
    /// requeued data excluded).
    pub fn offered_bytes(&self) -> u64 {
        self.offered_bytes
    }

    /// Schedules a link state change at `at`.
    pub fn set_link_state(&mut self, link_id: usize, up: bool, at: Duration) -> Result<()> {
        if link_id >= self.links.len() {
            return Err(Error::Validation(format!("unknown link {link_id}")));
        }
        self.push(at, EventKind::LinkChange { link: link_id, up });
        Ok(())
    }

    /// Runs the event loop to the end of the scenario.
    pub fn run(&mut self) -> Result<TimelineReport> {
        let buckets = self.bucket_count();
        while let Some(Reverse(head)) = self.queue.peek() {
            let at = head.at;
            if at >= self.end {
                break;
            }
            while self.snapshots.len() < buckets && self.bucket_end(self.snapshots.len()) <= at {
                self.snapshot();
            }
            self.now = at;
            while self.queue.peek().is_some_and(|Reverse(ev)| ev.at == at) {
                let Reverse(ev) = self.queue.pop().expect("peeked");
                self.process(ev.kind)?;
            }
            self.pump();
        }
        while self.snapshots.len() < buckets {
            self.snapshot();
        }
        self.now = self.end;
        Ok(self.report())
    }

    fn bucket_count(&self) -> usize {
        let bucket = self.config.bucket.as_nanos();
        self.end.as_nanos().div_ceil(bucket) as usize
    }

    fn bucket_end(&self, bucket: usize) -> Duration {
        self.config.bucket * (bucket as u32 + 1)
    }

    fn bucket_of(&self, t: Duration) -> usize {
        (t.as_nanos() / self.config.bucket.as_nanos()) as usize
    }

    fn push(&mut self, at: Duration, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Scheduled { at, seq, kind }));
    }

    fn snapshot(&mut self) {
        let state = self
            .sender
            .subflows()
            .iter()
            .map(|sf| (sf.id, (sf.alive, sf.low_prio)))
            .collect();
        self.snapshots.push(state);
    }

    fn process(&mut self, kind: EventKind) -> Result<()> {
        match kind {
            EventKind::Wake => {}
            EventKind::SegmentArrival { link, epoch, subflow, seg } => {
                if self.link_alive(link, epoch) {
                    let delay = self.links[link].spec.one_way_delay;
                    self.push(self.now + delay, EventKind::AckArrival { link, epoch, subflow, seg });
                }
            }
            EventKind::AckArrival { link, epoch, subflow, seg } => {
                if self.link_alive(link, epoch) {
                    self.on_ack(subflow, seg);
                }
            }
            EventKind::MpPrioArrival { link, epoch, subflow, option } => {
                if self.link_alive(link, epoch) {
                    match decode_mp_prio(&option) {
                        Ok(opt) => {
                            self.receiver.apply_remote_mp_prio(&opt, subflow);
                        }
                        Err(err) => warn!("dropping undecodable MP_PRIO: {err}"),
                    }
                }
            }
            EventKind::RtoFire { subflow, generation } => self.on_rto(subflow, generation)?,
            EventKind::Keepalive { subflow, generation } => self.on_keepalive(subflow, generation),
            EventKind::LinkChange { link, up } => self.apply_link_state(link, up),
            EventKind::AppAction(action) => self.apply_action(&action)?,
            EventKind::ReestablishAttempt { link } => self.on_reestablish_attempt(link)?,
        }
        Ok(())
    }

    fn link_alive(&self, link: usize, epoch: u64) -> bool {
        let link = &self.links[link];
        link.spec.up && link.epoch == epoch
    }

    fn link_for(&self, id: SubflowId) -> usize {
        let pair = self.sender.subflow(id).expect("known sub-flow").pair();
        self.link_of[&pair]
    }

    /// Queues `bytes` on `link`; returns the arrival time at the far end,
    /// or `None` when the link is down.
    fn transmit(&mut self, link: usize, bytes: u64) -> Option<(Duration, u64)> {
        let now = self.now;
        let link = &mut self.links[link];
        if !link.spec.up {
            return None;
        }
        let start = link.busy_until.max(now);
        link.busy_until = start + link.spec.serialization_time(bytes);
        Some((link.busy_until + link.spec.one_way_delay, link.epoch))
    }

    fn send_segment(&mut self, id: SubflowId, bytes: u64) {
        let link = self.link_for(id);
        let tx = self.tx.get_mut(&id).expect("registered sub-flow");
        let seg = tx.next_seg;
        tx.next_seg += 1;
        tx.segments.insert(seg, Segment { bytes, sent_at: self.now, retransmitted: false });
        let timer_idle = tx.segments.len() == 1;
        if let Some((arrival, epoch)) = self.transmit(link, bytes) {
            self.push(arrival, EventKind::SegmentArrival { link, epoch, subflow: id, seg });
        }
        if timer_idle {
            self.arm_rto(id);
        }
    }

    fn pump(&mut self) {
        let (mss, window) = (self.config.mss, self.config.window);
        while let Some(id) = self.sender.select_subflow(mss, window).chosen {
            if self.requeued_bytes >= mss {
                self.requeued_bytes -= mss;
            } else {
                self.offered_bytes += mss - self.requeued_bytes;
                self.requeued_bytes = 0;
            }
            let sf = self.sender.subflow_mut(id).expect("chosen sub-flow exists");
            sf.inflight_bytes += mss;
            sf.bytes_sent_total += mss;
            self.send_segment(id, mss);
        }
    }

    fn arm_rto(&mut self, id: SubflowId) {
        let rto = self.sender.subflow(id).expect("known sub-flow").rto;
        let tx = self.tx.get_mut(&id).expect("registered sub-flow");
        tx.rto_generation += 1;
        let generation = tx.rto_generation;
        self.push(self.now + rto, EventKind::RtoFire { subflow: id, generation });
    }

    fn disarm_rto(&mut self, id: SubflowId) {
        if let Some(tx) = self.tx.get_mut(&id) {
            tx.rto_generation += 1;
        }
    }

    fn schedule_keepalive(&mut self, id: SubflowId) {
        let tx = self.tx.get_mut(&id).expect("registered sub-flow");
        tx.keepalive_generation += 1;
        let generation = tx.keepalive_generation;
        self.push(self.now + self.config.keepalive_interval, EventKind::Keepalive { subflow: id, generation });
    }

    fn on_ack(&mut self, id: SubflowId, seg: u64) {
        let now = self.now;
        let bucket = self.bucket_of(now);
        let Some(sf) = self.sender.subflow_mut(id).filter(|sf| sf.alive) else {
            return;
        };
        let tx = self.tx.get_mut(&id).expect("registered sub-flow");
        let Some(segment) = tx.segments.remove(&seg) else {
            return;
        };
        sf.inflight_bytes -= segment.bytes;
        sf.bytes_acked_total += segment.bytes;
        if segment.retransmitted {
            sf.rto = sf.base_rto();
        } else {
            sf.on_rtt_sample(now - segment.sent_at);
        }
        sf.consecutive_timeouts = 0;
        if segment.bytes > 0 {
            *self.acked.entry((bucket, id)).or_default() += segment.bytes;
        }
        if tx.segments.is_empty() {
            self.disarm_rto(id);
            self.schedule_keepalive(id);
        } else {
            self.arm_rto(id);
        }
    }

    fn on_rto(&mut self, id: SubflowId, generation: u64) -> Result<()> {
        let current = self.tx.get(&id).is_some_and(|tx| tx.rto_generation == generation);
        let alive = self.sender.subflow(id).is_some_and(|sf| sf.alive);
        if !current || !alive {
            return Ok(());
        }
        match handle_rto(&mut self.sender, id)? {
            RtoOutcome::Backoff { rto } => {
                debug!("{:?}: sub-flow {id} timed out, rto now {rto:?}", self.now);
                let link = self.link_for(id);
                let now = self.now;
                let outstanding: Vec<(u64, u64)> = {
                    let tx = self.tx.get_mut(&id).expect("registered sub-flow");
                    tx.segments
                        .iter_mut()
                        .map(|(&seg, s)| {
                            s.sent_at = now;
                            s.retransmitted = true;
                            (seg, s.bytes)
                        })
                        .collect()
                };
                for (seg, bytes) in outstanding {
                    if let Some((arrival, epoch)) = self.transmit(link, bytes) {
                        self.push(arrival, EventKind::SegmentArrival { link, epoch, subflow: id, seg });
                    }
                }
                self.arm_rto(id);
            }
            RtoOutcome::Dead { requeued_bytes } => {
                debug!("{:?}: sub-flow {id} declared dead", self.now);
                self.requeued_bytes += requeued_bytes;
                self.on_subflow_died(id);
            }
        }
        Ok(())
    }

    fn on_subflow_died(&mut self, id: SubflowId) {
        if let Some(tx) = self.tx.get_mut(&id) {
            tx.segments.clear();
            tx.rto_generation += 1;
            tx.keepalive_generation += 1;
        }
        let now = self.now;
        if let Some(entry) = self.genealogy.iter_mut().find(|e| e.subflow_id == id) {
            entry.died_at = Some(now);
        }
        if self.receiver.close_subflow(id).is_err() {
            debug!("receiver had no live mirror of sub-flow {id}");
        }
        let link = self.link_for(id);
        if self.reestablishing.insert(link) {
            self.push(now + self.config.reestablish_interval, EventKind::ReestablishAttempt { link });
        }
    }

    fn on_keepalive(&mut self, id: SubflowId, generation: u64) {
        let alive = self.sender.subflow(id).is_some_and(|sf| sf.alive);
        let Some(tx) = self.tx.get(&id) else { return };
        if !alive || tx.keepalive_generation != generation || !tx.segments.is_empty() {
            return;
        }
        self.send_segment(id, 0);
    }

    fn on_reestablish_attempt(&mut self, link: usize) -> Result<()> {
        let pair = self.links[link].spec.pair;
        if self.sender.alive_subflow_on(&pair).is_some() {
            self.reestablishing.remove(&link);
            return Ok(());
        }
        if !self.links[link].spec.up {
            self.push(self.now + self.config.reestablish_interval, EventKind::ReestablishAttempt { link });
            return Ok(());
        }
        self.reestablishing.remove(&link);
        let remote = *self
            .sender
            .remote_addrs()
            .iter()
            .find(|r| r.ip() == pair.dst())
            .expect("link pairs come from the connection's addresses");
        let id = self.sender.create_subflow(pair.src(), remote)?;
        debug!("{:?}: re-established {pair} as sub-flow {id}", self.now);
        self.register_subflow(id)
    }

    /// Mirrors a fresh sender sub-flow on the receiver and starts tracking it.
    fn register_subflow(&mut self, id: SubflowId) -> Result<()> {
        let sf = self.sender.subflow(id).expect("known sub-flow").clone();
        self.receiver.join_subflow(id, (sf.remote, sf.local), sf.low_prio)?;
        self.tx.insert(id, TxState::default());
        self.genealogy.push(GenealogyEntry {
            subflow_id: id,
            pair: sf.pair(),
            created_at: self.now,
            died_at: None,
        });
        self.schedule_keepalive(id);
        Ok(())
    }

    fn apply_link_state(&mut self, link: usize, up: bool) {
        let now = self.now;
        let link = &mut self.links[link];
        if link.spec.up == up {
            return;
        }
        link.spec.up = up;
        if !up {
            link.epoch += 1;
            link.busy_until = now;
        }
    }

    fn apply_action(&mut self, action: &TimedAction) -> Result<()> {
        match action.action {
            ActionKind::SetSubPrio => {
                let low_prio = action.low_prio.unwrap_or(false);
                for pair in self.scenario.link_pairs(&action.links)? {
                    match self.sender.alive_subflow_on(&pair).map(|sf| sf.id) {
                        Some(id) => self.sender.set_subflow_priority(SubPrioRequest { id, low_prio })?,
                        None => warn!("set_sub_prio at {} ms: no live sub-flow on {pair}", action.at_ms),
                    }
                }
            }
            ActionKind::SetActiveList => {
                let pairs = self.scenario.link_pairs(&action.links)?;
                self.sender.set_active_interface_list(pairs)?;
            }
            ActionKind::SetBackupList => {
                let pairs = self.scenario.link_pairs(&action.links)?;
                self.sender.set_backup_interface_list(pairs)?;
            }
            ActionKind::EnablePpos => {
                let pairs = if action.links.is_empty() {
                    vec![self.sender.interface_pairs()[0]]
                } else {
                    self.scenario.link_pairs(&action.links)?
                };
                self.sender.enable_primary_path_only(pairs)?;
            }
            ActionKind::LinkDown | ActionKind::LinkUp => {
                let up = action.action == ActionKind::LinkUp;
                for &link in &action.links {
                    self.apply_link_state(link, up);
                }
            }
        }
        self.deliver_outbox();
        Ok(())
    }

    /// Sends queued MP_PRIO options to the receiver over the path of the
    /// sub-flow each one addresses.
    fn deliver_outbox(&mut self) {
        for opt in self.sender.drain_outbox() {
            let Some(id) = opt.addr_id.map(SubflowId) else { continue };
            let link = self.link_for(id);
            let l = &self.links[link];
            if !l.spec.up {
                continue;
            }
            let at = self.now + l.spec.one_way_delay;
            let epoch = l.epoch;
            self.push(at, EventKind::MpPrioArrival { link, epoch, subflow: id, option: encode_mp_prio(&opt) });
        }
    }

    fn report(&self) -> TimelineReport {
        let bucket_ms = self.config.bucket.as_millis() as u64;
        let mut rows = Vec::new();
        for (b, snapshot) in self.snapshots.iter().enumerate() {
            let start = self.config.bucket * b as u32;
            let end = self.bucket_end(b);
            for entry in &self.genealogy {
                let existed = entry.created_at < end && entry.died_at.is_none_or(|d| d > start);
                if !existed {
                    continue;
                }
                let (alive, low_prio) = snapshot.get(&entry.subflow_id).copied().unwrap_or((false, false));
                rows.push(ThroughputBucket {
                    bucket_start_ms: start.as_millis() as u64,
                    subflow_id: entry.subflow_id,
                    pair: entry.pair,
                    bytes_acked: self.acked.get(&(b, entry.subflow_id)).copied().unwrap_or(0),
                    low_prio,
                    alive,
                });
            }
        }
        rows.sort_by_key(|r| (r.bucket_start_ms, r.subflow_id));
        TimelineReport {
            bucket_ms,
            duration_ms: self.end.as_millis() as u64,
            rows,
            subflow_genealogy: self.genealogy.clone(),
        }
    }
}

/// Builds a simulator for `scenario` and runs it to completion.
pub fn run(scenario: &Scenario, config: SimConfig) -> Result<TimelineReport> {
    Simulator::new(scenario, config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{builtin, parse_scenario, TimedAction};

    fn single_link(scheduler: &str) -> Scenario {
        let extra = if scheduler == "ppos" { "primary_links = [0]\n" } else { "" };
        parse_scenario(&format!(
            "name = \"one\"\nduration_ms = 10000\nscheduler = \"{scheduler}\"\n{extra}\n\
             [topology]\nlocal = [\"10.0.0.1\"]\nremote = [\"10.0.1.2\"]\n\n\
             [[topology.links]]\nlocal = 0\nremote = 0\nbandwidth_bps = 1000000\ndelay_ms = 100\n"
        ))
        .unwrap()
    }

    fn action(at_ms: u64, action: ActionKind, links: Vec<usize>, low_prio: Option<bool>) -> TimedAction {
        TimedAction { at_ms, action, links, low_prio }
    }

    #[test]
    fn serialization_time_is_exact() {
        let spec = LinkSpec {
            link_id: 0,
            pair: InterfacePair::new("10.0.0.1".parse().unwrap(), "10.0.1.2".parse().unwrap()).unwrap(),
            bandwidth_bps: 1_000_000,
            one_way_delay: Duration::from_millis(100),
            up: true,
        };
        assert_eq!(spec.serialization_time(1460), Duration::from_micros(11_680));
        assert_eq!(spec.serialization_time(0), Duration::ZERO);
    }

    #[test]
    fn rto_schedule_matches_doubling_oracle() {
        let scenario = single_link("default");
        let mut sim = Simulator::new(&scenario, SimConfig::default()).unwrap();
        let id = SubflowId(1);
        sim.sender.subflow_mut(id).unwrap().on_rtt_sample(Duration::from_millis(200));

        // Oracle: expiries at base, base*(1+2), base*(1+2+4) after the last ack.
        let base = Duration::from_millis(200 * 2);
        let expected: Vec<Duration> = (1..=3u32).map(|k| base * ((1 << k) - 1)).collect();

        let mut elapsed = Duration::ZERO;
        let mut fired = Vec::new();
        loop {
            elapsed += sim.sender.subflow(id).unwrap().rto;
            fired.push(elapsed);
            if let RtoOutcome::Dead { .. } = handle_rto(&mut sim.sender, id).unwrap() {
                break;
            }
        }
        assert_eq!(fired, expected);
        assert_eq!(fired[2], Duration::from_millis(2800));
        assert!(!sim.sender.subflow(id).unwrap().alive);
        assert!(handle_rto(&mut sim.sender, id).is_err());
    }

    #[test]
    fn death_requeues_inflight_bytes() {
        let scenario = single_link("default");
        let mut conn = Simulator::new(&scenario, SimConfig::default()).unwrap().sender;
        let id = SubflowId(1);
        conn.subflow_mut(id).unwrap().inflight_bytes = 4380;
        assert!(matches!(handle_rto(&mut conn, id), Ok(RtoOutcome::Backoff { .. })));
        assert!(matches!(handle_rto(&mut conn, id), Ok(RtoOutcome::Backoff { .. })));
        assert_eq!(handle_rto(&mut conn, id), Ok(RtoOutcome::Dead { requeued_bytes: 4380 }));
        assert_eq!(conn.subflow(id).unwrap().inflight_bytes, 0);
        assert!(conn.list_subflow_ids().is_empty());
    }

    #[test]
    fn spurious_timeout_is_cleared_by_ack() {
        let scenario = single_link("default");
        let mut sim = Simulator::new(&scenario, SimConfig::default()).unwrap();
        let id = SubflowId(1);
        sim.sender.subflow_mut(id).unwrap().inflight_bytes += 1460;
        sim.send_segment(id, 1460);
        let generation = sim.tx[&id].rto_generation;
        sim.on_rto(id, generation).unwrap();
        assert_eq!(sim.sender.subflow(id).unwrap().consecutive_timeouts, 1);
        assert!(!sim.sender.subflow(id).unwrap().is_available());
        sim.now = Duration::from_millis(300);
        sim.on_ack(id, 0);
        let sf = sim.sender.subflow(id).unwrap();
        assert_eq!(sf.consecutive_timeouts, 0);
        assert!(sf.alive && sf.is_available());
        assert_eq!(sf.inflight_bytes, 0);
    }

    #[test]
    fn single_path_saturates_its_link() {
        let report = run(&single_link("default"), SimConfig::default()).unwrap();
        let steady: Vec<u64> = (2..10).map(|b| report.total_bytes(b)).collect();
        let mean = steady.iter().sum::<u64>() as f64 / steady.len() as f64;
        let bps = mean * 8.0;
        assert!((bps - 1_000_000.0).abs() / 1_000_000.0 < 0.02, "{bps}");
    }

    #[test]
    fn ppos_on_a_single_path_equals_default() {
        let a = run(&single_link("default"), SimConfig::default()).unwrap();
        let b = run(&single_link("ppos"), SimConfig::default()).unwrap();
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn link_failure_death_time_follows_backed_off_timer() {
        let mut scenario = single_link("default");
        scenario.duration_ms = 20_000;
        scenario.actions = vec![action(5000, ActionKind::LinkDown, vec![0], None)];
        let report = run(&scenario, SimConfig::default()).unwrap();
        let died = report.subflow_genealogy[0].died_at.expect("sub-flow dies");
        // Saturated closed loop: rtt = window / rate = 32 * 11.68 ms, rto = 2 * rtt.
        let rtt = Duration::from_micros(32 * 11_680);
        let total = rtt * 2 * 7;
        let down = Duration::from_millis(5000);
        assert!(died <= down + total && died >= down + total - rtt, "{died:?}");
    }

    #[test]
    fn restored_link_is_rejoined_at_next_attempt() {
        let report = run(&builtin("fig4").unwrap(), SimConfig::default()).unwrap();
        let s1_successor = &report.subflow_genealogy[3];
        assert_eq!(s1_successor.subflow_id, SubflowId(4));
        assert_eq!(s1_successor.pair, report.subflow_genealogy[0].pair);
        let created = s1_successor.created_at;
        assert!(created >= Duration::from_millis(55_000) && created <= Duration::from_millis(56_000));
    }

    #[test]
    fn dropping_an_idle_backup_link_changes_nothing_observable() {
        let mut base = builtin("steady_default").unwrap();
        base.actions = vec![action(0, ActionKind::SetSubPrio, vec![1, 2], Some(true))];
        let mut with_drop = base.clone();
        with_drop.actions.push(action(5000, ActionKind::LinkDown, vec![2], None));
        let a = run(&base, SimConfig::default()).unwrap();
        let b = run(&with_drop, SimConfig::default()).unwrap();
        for bucket in 0..a.bucket_count() {
            assert_eq!(a.bytes(bucket, SubflowId(1)), b.bytes(bucket, SubflowId(1)));
            assert_eq!(b.bytes(bucket, SubflowId(3)), 0);
        }
    }

    #[test]
    fn receiver_mirrors_priorities_through_mp_prio() {
        for name in ["fig4", "fig5", "fig6_ppos"] {
            let mut sim = Simulator::new(&builtin(name).unwrap(), SimConfig::default()).unwrap();
            sim.run().unwrap();
            let sender: Vec<_> = sim.sender().subflows().iter().filter(|s| s.alive).map(|s| (s.id, s.low_prio)).collect();
            let receiver: Vec<_> = sim.receiver().subflows().iter().filter(|s| s.alive).map(|s| (s.id, s.low_prio)).collect();
            assert_eq!(sender, receiver, "{name}");
        }
    }

    #[test]
    fn conservation_and_rate_bound() {
        for name in ["fig4", "fig6_default", "fig6_ppos"] {
            let mut sim = Simulator::new(&builtin(name).unwrap(), SimConfig::default()).unwrap();
            let report = sim.run().unwrap();
            let mut acked_total = 0;
            for sf in sim.sender().subflows() {
                assert!(sf.bytes_acked_total <= sf.bytes_sent_total, "{name} {}", sf.id);
                acked_total += sf.bytes_acked_total;
            }
            assert!(acked_total <= sim.offered_bytes());
            let limit = 1_000_000 / 8 + 1460;
            for bucket in 0..report.bucket_count() {
                for link in sim.links() {
                    let bytes: u64 = report
                        .rows_in_bucket(bucket)
                        .filter(|r| r.pair == link.pair)
                        .map(|r| r.bytes_acked)
                        .sum();
                    assert!(bytes <= limit, "{name} bucket {bucket} link {}: {bytes}", link.link_id);
                }
            }
        }
    }

    #[test]
    fn dead_subflows_stay_silent() {
        let report = run(&builtin("fig4").unwrap(), SimConfig::default()).unwrap();
        for entry in &report.subflow_genealogy {
            let Some(died) = entry.died_at else { continue };
            let after: u64 = report
                .rows
                .iter()
                .filter(|r| r.subflow_id == entry.subflow_id && Duration::from_millis(r.bucket_start_ms) > died)
                .map(|r| r.bytes_acked)
                .sum();
            assert_eq!(after, 0);
        }
    }

    #[test]
    fn unknown_link_state_change_is_rejected() {
        let mut sim = Simulator::new(&single_link("default"), SimConfig::default()).unwrap();
        assert!(matches!(sim.set_link_state(3, false, Duration::ZERO), Err(Error::Validation(_))));
        sim.set_link_state(0, false, Duration::from_millis(2000)).unwrap();
        let report = sim.run().unwrap();
        assert!(report.total_bytes(5) == 0);
    }
}
