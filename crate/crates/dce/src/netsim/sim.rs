//! Deterministic discrete-event simulation of the tree network.
//!
//! Time is integer nanoseconds. Events are processed in (time, sequence)
//! order, where the sequence number is a monotone counter assigned at
//! scheduling time, so simultaneous events have a fixed, reproducible order.
//! A store-and-forward hop charges queueing (waiting for the egress link to
//! free up), serialization (clocking the packet onto the wire) and
//! propagation; the three components are recorded per hop, and their sum
//! plus the emission instant equals the arrival instant exactly.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use thiserror::Error;

use crate::id::{NodeId, PairId};
use crate::timing::{SampleRow, Timestamp, TimingRecord};

use super::packet::{Packet, PacketKind};
use super::poisson::{PoissonSource, PoissonSourceSpec};
use super::topology::{TreeTopology, MTU};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("node {0} is not a receiver of this topology")]
    UnknownReceiver(NodeId),
    #[error("a measurement pair needs two distinct receivers")]
    InvalidPair,
    #[error("packet size {0} outside 1..={MTU} bytes")]
    InvalidPacketSize(u32),
    #[error("emission at {at} ns is in the simulator's past ({now} ns)")]
    ScheduleInPast { at: i64, now: i64 },
    #[error("serial order repeats a destination")]
    DuplicateDestination,
    #[error("mark at position {0} does not name the adjacent hosts at that position")]
    InconsistentMark(usize),
    #[error("packet {0} is not a marked measurement packet")]
    NotMeasurementPacket(u64),
}

/// Per-node clock model: reading = true + offset + drift_ppm * true / 1e6.
///
/// Offsets are the normal case the estimator must tolerate; drift is an
/// exploratory knob with no accuracy claim attached.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClockSpec {
    pub offset_ns: i64,
    pub drift_ppm: i64,
}

impl ClockSpec {
    pub fn reading(&self, true_ns: i64) -> Timestamp {
        let drift = (true_ns as i128 * self.drift_ppm as i128) / 1_000_000;
        Timestamp(true_ns + self.offset_ns + drift as i64)
    }
}

/// Delay decomposition of one hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HopRecord {
    pub from: NodeId,
    pub to: NodeId,
    pub queueing_ns: i64,
    pub serialization_ns: i64,
    pub propagation_ns: i64,
}

impl HopRecord {
    pub fn total_ns(&self) -> i64 {
        self.queueing_ns + self.serialization_ns + self.propagation_ns
    }
}

/// Full per-packet trace: header, emission instant, per-hop decomposition
/// and (unless dropped) the arrival instant, all on the true clock.
#[derive(Debug, Clone)]
pub struct PacketRecord {
    pub packet: Packet,
    pub emit_ns: i64,
    pub hops: Vec<HopRecord>,
    pub arrival_ns: Option<i64>,
    pub dropped: bool,
}

impl PacketRecord {
    pub fn total_delay_ns(&self) -> Option<i64> {
        self.arrival_ns.map(|a| a - self.emit_ns)
    }
}

/// One timed arrival of a marked packet, attributed to a host pair.
///
/// `arrival` is on the destination's clock and `sender_ts` on the sender's;
/// `arrival_true_ns` keeps the ground truth for oracle comparisons.
#[derive(Debug, Clone, Copy)]
pub struct MeasurementArrival {
    pub pair: PairId,
    pub k: u64,
    pub dst: NodeId,
    pub packet_id: u64,
    pub sender_ts: Timestamp,
    pub arrival: Timestamp,
    pub arrival_true_ns: i64,
}

/// Marks the packets at `leading_pos` and `leading_pos + 1` of a serial as a
/// timed back-to-back pair with sample index `k`.
#[derive(Debug, Clone, Copy)]
pub struct SerialMark {
    pub leading_pos: usize,
    pub pair: PairId,
    pub k: u64,
}

#[derive(Debug)]
enum EventKind {
    Launch { packet_idx: usize },
    SourceEmit { source_idx: usize },
    Arrive { packet_idx: usize, node: NodeId },
}

struct Event {
    time: i64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so the std max-heap pops the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

#[derive(Debug, Default)]
struct EdgeState {
    busy_until: i64,
    /// Packets occupying the buffer: (serialization finish time, bytes).
    in_queue: VecDeque<(i64, u32)>,
    queued_bytes: u64,
}

struct InFlight {
    record: PacketRecord,
    route: Vec<NodeId>,
    hop_cursor: usize,
    memberships: Vec<(PairId, u64)>,
}

/// Owns all simulation state; strictly single-threaded. Independent
/// instances may run concurrently.
pub struct Simulator {
    topo: TreeTopology,
    now: i64,
    seq: u64,
    heap: BinaryHeap<Event>,
    edges: BTreeMap<(NodeId, NodeId), EdgeState>,
    packets: Vec<InFlight>,
    sources: Vec<PoissonSource>,
    bg_cutoff: Option<i64>,
    clocks: BTreeMap<NodeId, ClockSpec>,
    arrival_inbox: Vec<MeasurementArrival>,
    arrival_log: Vec<MeasurementArrival>,
    events_processed: u64,
}

impl Simulator {
    pub fn new(topo: TreeTopology) -> Self {
        Self {
            topo,
            now: 0,
            seq: 0,
            heap: BinaryHeap::new(),
            edges: BTreeMap::new(),
            packets: Vec::new(),
            sources: Vec::new(),
            bg_cutoff: None,
            clocks: BTreeMap::new(),
            arrival_inbox: Vec::new(),
            arrival_log: Vec::new(),
            events_processed: 0,
        }
    }

    pub fn topology(&self) -> &TreeTopology {
        &self.topo
    }

    pub fn now(&self) -> i64 {
        self.now
    }

    pub fn events_processed(&self) -> u64 {
        self.events_processed
    }

    pub fn set_clock(&mut self, node: NodeId, clock: ClockSpec) {
        self.clocks.insert(node, clock);
    }

    pub fn clock_reading(&self, node: NodeId, true_ns: i64) -> Timestamp {
        self.clocks
            .get(&node)
            .copied()
            .unwrap_or_default()
            .reading(true_ns)
    }

    fn sender_clock_reading(&self, true_ns: i64) -> Timestamp {
        self.clock_reading(self.topo.root(), true_ns)
    }

    fn push_event(&mut self, time: i64, kind: EventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Event { time, seq, kind });
    }

    /// Register a background flow. Inactive (zero-rate) sources emit nothing.
    pub fn add_poisson_source(&mut self, spec: PoissonSourceSpec) {
        let mut source = PoissonSource::new(spec);
        if source.is_active() {
            let first = self.now + source.next_gap_ns();
            let idx = self.sources.len();
            self.push_event(first, EventKind::SourceEmit { source_idx: idx });
        }
        self.sources.push(source);
    }

    /// Emit one serial: one packet per entry of `order`, enqueued at the
    /// root's egress at the same instant and in order, so consecutive
    /// packets leave back-to-back. Marked adjacent positions form timed
    /// pairs; every packet still delivers its payload regardless of marks.
    pub fn emit_serial(
        &mut self,
        serial_id: u64,
        order: &[NodeId],
        size: u32,
        at: Timestamp,
        marks: &[SerialMark],
    ) -> Result<(), SimError> {
        if size == 0 || size > MTU {
            return Err(SimError::InvalidPacketSize(size));
        }
        if at.0 < self.now {
            return Err(SimError::ScheduleInPast {
                at: at.0,
                now: self.now,
            });
        }
        for (i, &dst) in order.iter().enumerate() {
            if !self.topo.is_receiver(dst) {
                return Err(SimError::UnknownReceiver(dst));
            }
            if order[..i].contains(&dst) {
                return Err(SimError::DuplicateDestination);
            }
        }
        for mark in marks {
            let lead = mark.leading_pos;
            if lead + 1 >= order.len() {
                return Err(SimError::InconsistentMark(lead));
            }
            let expected = PairId::new(order[lead], order[lead + 1]).ok_or(SimError::InvalidPair)?;
            if expected != mark.pair {
                return Err(SimError::InconsistentMark(lead));
            }
        }

        let sender_ts = self.sender_clock_reading(at.0);
        for (pos, &dst) in order.iter().enumerate() {
            let leading = marks.iter().find(|m| m.leading_pos == pos);
            let trailing = marks.iter().find(|m| m.leading_pos + 1 == pos);
            let ir_mark = leading.or(trailing).map(|m| m.pair);
            let pair_index = leading.or(trailing).map(|m| m.k);
            let memberships: Vec<(PairId, u64)> = leading
                .iter()
                .chain(trailing.iter())
                .map(|m| (m.pair, m.k))
                .collect();
            let id = self.packets.len() as u64;
            let packet = Packet {
                id,
                size,
                src: self.topo.root(),
                dst,
                kind: PacketKind::Measurement,
                serial_id: Some(serial_id),
                pair_index,
                ir_mark,
                sender_ts: Some(sender_ts),
            };
            let idx = self.register_packet(packet, at.0, memberships);
            self.push_event(at.0, EventKind::Launch { packet_idx: idx });
        }
        Ok(())
    }

    /// Emit one back-to-back pair to `(a, b)`: the second packet begins
    /// serialization the instant the first finishes.
    pub fn emit_pair(
        &mut self,
        serial_id: u64,
        k: u64,
        a: NodeId,
        b: NodeId,
        size: u32,
        at: Timestamp,
    ) -> Result<(), SimError> {
        let pair = PairId::new(a, b).ok_or(SimError::InvalidPair)?;
        self.emit_serial(
            serial_id,
            &[a, b],
            size,
            at,
            &[SerialMark {
                leading_pos: 0,
                pair,
                k,
            }],
        )
    }

    fn register_packet(
        &mut self,
        packet: Packet,
        emit_ns: i64,
        memberships: Vec<(PairId, u64)>,
    ) -> usize {
        let route = self.topo.route(packet.src, packet.dst);
        let idx = self.packets.len();
        self.packets.push(InFlight {
            record: PacketRecord {
                packet,
                emit_ns,
                hops: Vec::with_capacity(route.len().saturating_sub(1)),
                arrival_ns: None,
                dropped: false,
            },
            route,
            hop_cursor: 0,
            memberships,
        });
        idx
    }

    /// Drain timed arrivals accumulated since the last call.
    pub fn take_measurement_arrivals(&mut self) -> Vec<MeasurementArrival> {
        std::mem::take(&mut self.arrival_inbox)
    }

    /// Process every event up to and including `t`, then advance the clock
    /// to `t`.
    pub fn run_until(&mut self, t: i64) {
        while let Some(ev) = self.heap.peek() {
            if ev.time > t {
                break;
            }
            let ev = self.heap.pop().expect("peeked event exists");
            self.now = ev.time;
            self.events_processed += 1;
            self.dispatch(ev);
        }
        self.now = self.now.max(t);
    }

    /// Stop background emission at `bg_cutoff_ns` and drain every remaining
    /// event, letting in-flight packets complete.
    pub fn run_to_completion(&mut self, bg_cutoff_ns: i64) {
        self.bg_cutoff = Some(bg_cutoff_ns);
        while let Some(ev) = self.heap.pop() {
            self.now = ev.time;
            self.events_processed += 1;
            self.dispatch(ev);
        }
    }

    /// Convenience wrapper: run everything scheduled, with background
    /// traffic cut off at `horizon_ns`, and hand back the outputs.
    pub fn run(mut self, horizon_ns: i64) -> SimOutput {
        self.run_to_completion(horizon_ns);
        self.into_output()
    }

    fn dispatch(&mut self, ev: Event) {
        match ev.kind {
            EventKind::Launch { packet_idx } => self.start_packet(packet_idx),
            EventKind::SourceEmit { source_idx } => self.fire_source(source_idx),
            EventKind::Arrive { packet_idx, node } => self.arrive(packet_idx, node),
        }
    }

    fn fire_source(&mut self, source_idx: usize) {
        if self.bg_cutoff.is_some_and(|c| self.now > c) {
            return;
        }
        let source = &mut self.sources[source_idx];
        let spec = source.spec.clone();
        let gap = source.next_gap_ns();
        let next = self.now + gap;
        if self.bg_cutoff.is_none_or(|c| next <= c) {
            self.push_event(next, EventKind::SourceEmit { source_idx });
        }
        let id = self.packets.len() as u64;
        let packet = Packet {
            id,
            size: spec.packet_size,
            src: spec.host,
            dst: spec.sink,
            kind: PacketKind::Background,
            serial_id: None,
            pair_index: None,
            ir_mark: None,
            sender_ts: None,
        };
        let idx = self.register_packet(packet, self.now, Vec::new());
        self.start_packet(idx);
    }

    fn start_packet(&mut self, packet_idx: usize) {
        let from = self.packets[packet_idx].route[0];
        if self.packets[packet_idx].route.len() < 2 {
            // Degenerate self-delivery; complete immediately.
            self.complete(packet_idx, from);
            return;
        }
        let to = self.packets[packet_idx].route[1];
        self.packets[packet_idx].hop_cursor = 1;
        self.transit(packet_idx, from, to);
    }

    fn arrive(&mut self, packet_idx: usize, node: NodeId) {
        let flight = &self.packets[packet_idx];
        if node == flight.record.packet.dst {
            self.complete(packet_idx, node);
            return;
        }
        let next = flight.route[flight.hop_cursor + 1];
        self.packets[packet_idx].hop_cursor += 1;
        self.transit(packet_idx, node, next);
    }

    fn transit(&mut self, packet_idx: usize, from: NodeId, to: NodeId) {
        let size = self.packets[packet_idx].record.packet.size;
        let link = *self
            .topo
            .link(from, to)
            .expect("route steps along existing links");
        let serialization_ns = link.serialization_ns(size);
        let edge = self.edges.entry((from, to)).or_default();

        while let Some(&(finish, bytes)) = edge.in_queue.front() {
            if finish <= self.now {
                edge.in_queue.pop_front();
                edge.queued_bytes -= bytes as u64;
            } else {
                break;
            }
        }
        if let Some(cap) = link.byte_cap {
            if edge.queued_bytes + size as u64 > cap {
                self.packets[packet_idx].record.dropped = true;
                return;
            }
        }

        let queueing_ns = (edge.busy_until - self.now).max(0);
        let finish = self.now + queueing_ns + serialization_ns;
        edge.busy_until = finish;
        edge.in_queue.push_back((finish, size));
        edge.queued_bytes += size as u64;

        self.packets[packet_idx].record.hops.push(HopRecord {
            from,
            to,
            queueing_ns,
            serialization_ns,
            propagation_ns: link.propagation_ns,
        });
        self.push_event(
            finish + link.propagation_ns,
            EventKind::Arrive {
                packet_idx,
                node: to,
            },
        );
    }

    fn complete(&mut self, packet_idx: usize, node: NodeId) {
        self.packets[packet_idx].record.arrival_ns = Some(self.now);
        if self.packets[packet_idx].memberships.is_empty() {
            return;
        }
        let arrival = self.clock_reading(node, self.now);
        let packet_id = self.packets[packet_idx].record.packet.id;
        let sender_ts = self.packets[packet_idx]
            .record
            .packet
            .sender_ts
            .expect("marked packets carry a sender stamp");
        let memberships = self.packets[packet_idx].memberships.clone();
        for (pair, k) in memberships {
            let arrival = MeasurementArrival {
                pair,
                k,
                dst: node,
                packet_id,
                sender_ts,
                arrival,
                arrival_true_ns: self.now,
            };
            self.arrival_inbox.push(arrival);
            self.arrival_log.push(arrival);
        }
    }

    pub fn into_output(self) -> SimOutput {
        SimOutput {
            topology: self.topo,
            packets: self.packets.into_iter().map(|p| p.record).collect(),
            arrival_log: self.arrival_log,
            events_processed: self.events_processed,
        }
    }
}

/// Ground-truth delay columns for one pair, aligned with the rows of the
/// corresponding [`TimingRecord`].
#[derive(Debug, Clone, Copy)]
pub struct TruthRow {
    pub k: u64,
    /// True one-way delay of the packet delivered to `pair.lo()`.
    pub delay_lo_ns: i64,
    /// True one-way delay of the packet delivered to `pair.hi()`.
    pub delay_hi_ns: i64,
    /// Shared-path delay of the `pair.lo()` packet.
    pub shared_lo_ns: i64,
}

/// Everything a finished simulation hands back: full traces, the timed
/// arrival log, and the topology they refer to.
pub struct SimOutput {
    pub topology: TreeTopology,
    pub packets: Vec<PacketRecord>,
    pub arrival_log: Vec<MeasurementArrival>,
    pub events_processed: u64,
}

struct PairSlot {
    sender_ts: Timestamp,
    lo: Option<(u64, Timestamp, i64)>,
    hi: Option<(u64, Timestamp, i64)>,
}

impl SimOutput {
    fn pair_slots(&self) -> BTreeMap<PairId, BTreeMap<u64, PairSlot>> {
        let mut by_pair: BTreeMap<PairId, BTreeMap<u64, PairSlot>> = BTreeMap::new();
        for arr in &self.arrival_log {
            let slot = by_pair
                .entry(arr.pair)
                .or_default()
                .entry(arr.k)
                .or_insert(PairSlot {
                    sender_ts: arr.sender_ts,
                    lo: None,
                    hi: None,
                });
            let leg = (arr.packet_id, arr.arrival, arr.arrival_true_ns);
            if arr.dst == arr.pair.lo() {
                slot.lo = Some(leg);
            } else {
                slot.hi = Some(leg);
            }
        }
        by_pair
    }

    /// Group timed arrivals into one record per pair. Samples missing a leg
    /// (lost packet on either side) are dropped from both halves. The
    /// constant-interval hint survives only when the surviving emissions are
    /// still exactly evenly spaced; otherwise the record carries the sender
    /// schedule instead.
    pub fn pair_records(&self, delta_hint: Option<i64>) -> Vec<TimingRecord> {
        let mut records = Vec::new();
        for (pair, slots) in self.pair_slots() {
            let rows: Vec<SampleRow> = slots
                .iter()
                .filter_map(|(&k, slot)| {
                    let (_, arrival_a, _) = slot.lo?;
                    let (_, arrival_b, _) = slot.hi?;
                    Some(SampleRow {
                        k,
                        sender_ts: slot.sender_ts,
                        arrival_a,
                        arrival_b,
                    })
                })
                .collect();
            if rows.len() < 2 {
                continue;
            }
            records.push(
                TimingRecord::from_samples(pair, &rows, delta_hint)
                    .expect("grouped samples satisfy record invariants"),
            );
        }
        records
    }

    /// True delay columns for `pair`, row-aligned with
    /// [`SimOutput::pair_records`] output for the same pair.
    pub fn truth_rows(&self, pair: PairId) -> Vec<TruthRow> {
        let slots = match self.pair_slots().remove(&pair) {
            Some(s) => s,
            None => return Vec::new(),
        };
        slots
            .iter()
            .filter_map(|(&k, slot)| {
                let (lo_id, _, lo_true) = slot.lo?;
                let (hi_id, _, hi_true) = slot.hi?;
                let lo_rec = &self.packets[lo_id as usize];
                let hi_rec = &self.packets[hi_id as usize];
                let shared_lo =
                    super::trace::shared_path_delay_for(&self.topology, lo_rec, pair).ok()?;
                Some(TruthRow {
                    k,
                    delay_lo_ns: lo_true - lo_rec.emit_ns,
                    delay_hi_ns: hi_true - hi_rec.emit_ns,
                    shared_lo_ns: shared_lo,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::topology::{LinkEntry, TopologySpec, TreeTopology, DEFAULT_BANDWIDTH_BPS};

    fn link(from: &str, to: &str, prop: i64) -> LinkEntry {
        LinkEntry {
            from: from.into(),
            to: to.into(),
            bandwidth_bps: DEFAULT_BANDWIDTH_BPS,
            propagation_ns: prop,
            byte_cap: None,
        }
    }

    fn fig_tree() -> TreeTopology {
        TreeTopology::build(&TopologySpec {
            root: "f".into(),
            links: vec![
                link("f", "s", 10_000),
                link("s", "a", 10_000),
                link("s", "b", 10_000),
            ],
            receivers: vec!["a".into(), "b".into()],
            background_hosts: vec![],
        })
        .unwrap()
    }

    fn ids(topo: &TreeTopology) -> (NodeId, NodeId) {
        (
            topo.node_by_name("a").unwrap(),
            topo.node_by_name("b").unwrap(),
        )
    }

    #[test]
    fn pair_to_same_receiver_rejected() {
        let topo = fig_tree();
        let (a, _) = ids(&topo);
        let mut sim = Simulator::new(topo);
        assert_eq!(
            sim.emit_pair(0, 0, a, a, 800, Timestamp(0)).unwrap_err(),
            SimError::InvalidPair
        );
    }

    #[test]
    fn oversized_packet_rejected() {
        let topo = fig_tree();
        let (a, b) = ids(&topo);
        let mut sim = Simulator::new(topo);
        assert_eq!(
            sim.emit_pair(0, 0, a, b, 2000, Timestamp(0)).unwrap_err(),
            SimError::InvalidPacketSize(2000)
        );
    }

    #[test]
    fn non_receiver_destination_rejected() {
        let topo = fig_tree();
        let s = topo.node_by_name("s").unwrap();
        let (a, _) = ids(&topo);
        let mut sim = Simulator::new(topo);
        assert_eq!(
            sim.emit_pair(0, 0, a, s, 800, Timestamp(0)).unwrap_err(),
            SimError::UnknownReceiver(s)
        );
    }

    /// On an idle network the trailing packet reaches the branching router
    /// exactly one shared-link serialization time after the leading one.
    #[test]
    fn back_to_back_gap_at_branch_is_one_serialization() {
        let topo = fig_tree();
        let (a, b) = ids(&topo);
        let s = topo.node_by_name("s").unwrap();
        let mut sim = Simulator::new(topo);
        sim.emit_pair(0, 0, a, b, 800, Timestamp(0)).unwrap();
        let out = sim.run(1_000_000);

        // Arrival time at the branch router = emission + hops up to s.
        let at_branch = |rec: &PacketRecord| -> i64 {
            let mut t = rec.emit_ns;
            for hop in &rec.hops {
                t += hop.total_ns();
                if hop.to == s {
                    return t;
                }
            }
            panic!("packet never crossed the branch router");
        };
        let lead = &out.packets[0];
        let trail = &out.packets[1];
        assert_eq!(at_branch(trail) - at_branch(lead), 64_000);
    }

    /// 800-byte packet, 100 Mbit/s, 10 us propagation, idle queue: the
    /// shared hop contributes exactly 74 us.
    #[test]
    fn idle_hop_delay_closed_form() {
        let topo = fig_tree();
        let (a, b) = ids(&topo);
        let mut sim = Simulator::new(topo);
        sim.emit_pair(0, 0, a, b, 800, Timestamp(0)).unwrap();
        let out = sim.run(1_000_000);
        let lead = &out.packets[0];
        assert_eq!(lead.hops[0].queueing_ns, 0);
        assert_eq!(lead.hops[0].serialization_ns + lead.hops[0].propagation_ns, 74_000);
        // Total = shared + branch, exactly.
        let shared = super::super::trace::shared_path_delay(&out.topology, lead).unwrap();
        let branch: i64 = lead.hops.last().unwrap().total_ns();
        assert_eq!(lead.total_delay_ns().unwrap(), shared + branch);
    }

    #[test]
    fn conservation_holds_per_packet() {
        let topo = fig_tree();
        let (a, b) = ids(&topo);
        let mut sim = Simulator::new(topo);
        for k in 0..50 {
            sim.emit_pair(0, k, a, b, 1200, Timestamp(k as i64 * 200_000))
                .unwrap();
        }
        let out = sim.run(100_000_000);
        assert_eq!(out.packets.len(), 100);
        for rec in &out.packets {
            let total: i64 = rec.hops.iter().map(|h| h.total_ns()).sum();
            assert_eq!(rec.emit_ns + total, rec.arrival_ns.unwrap());
        }
    }

    /// Identical inputs and seeds must produce identical traces.
    #[test]
    fn same_seed_same_trace() {
        let build = || {
            let topo = fig_tree();
            let (a, b) = ids(&topo);
            let mut sim = Simulator::new(topo);
            let host = sim.topology().root();
            let sink = a;
            sim.add_poisson_source(PoissonSourceSpec {
                host,
                sink,
                rate_bytes_per_sec: 4_000_000.0,
                packet_size: 1000,
                seed: 11,
            });
            for k in 0..100 {
                sim.emit_pair(0, k, a, b, 800, Timestamp(k as i64 * 500_000))
                    .unwrap();
            }
            sim.run(60_000_000)
        };
        let out1 = build();
        let out2 = build();
        assert_eq!(out1.packets.len(), out2.packets.len());
        for (p1, p2) in out1.packets.iter().zip(&out2.packets) {
            assert_eq!(p1.emit_ns, p2.emit_ns);
            assert_eq!(p1.arrival_ns, p2.arrival_ns);
            assert_eq!(p1.hops, p2.hops);
        }
    }

    /// No background traffic and constant-size pairs: every delay is
    /// identical, so the pair record detrends to all zeros.
    #[test]
    fn idle_network_record_has_zero_jitter() {
        let topo = fig_tree();
        let (a, b) = ids(&topo);
        let mut sim = Simulator::new(topo);
        let delta = 1_000_000;
        for k in 0..10 {
            sim.emit_pair(0, k, a, b, 800, Timestamp(k as i64 * delta))
                .unwrap();
        }
        let out = sim.run(100_000_000);
        let records = out.pair_records(Some(delta));
        assert_eq!(records.len(), 1);
        let record = &records[0];
        assert_eq!(record.delta_const, Some(delta));
        let series = crate::timing::build_relative_series(record).unwrap();
        assert!(series.values_a.iter().all(|&v| v == 0));
        assert!(series.values_b.iter().all(|&v| v == 0));
    }

    /// Clock offsets on receivers and sender shift raw timestamps but leave
    /// the record's detrended series untouched.
    #[test]
    fn clock_offsets_cancel_in_records() {
        let run = |offsets: bool| {
            let topo = fig_tree();
            let (a, b) = ids(&topo);
            let mut sim = Simulator::new(topo);
            if offsets {
                let f = sim.topology().root();
                sim.set_clock(f, ClockSpec { offset_ns: 5_000_000_000, drift_ppm: 0 });
                sim.set_clock(a, ClockSpec { offset_ns: -3_000_000_000, drift_ppm: 0 });
                sim.set_clock(b, ClockSpec { offset_ns: 12_000_000_000, drift_ppm: 0 });
            }
            let host = sim.topology().root();
            sim.add_poisson_source(PoissonSourceSpec {
                host,
                sink: a,
                rate_bytes_per_sec: 3_000_000.0,
                packet_size: 900,
                seed: 5,
            });
            for k in 0..40 {
                sim.emit_pair(0, k, a, b, 800, Timestamp(k as i64 * 400_000))
                    .unwrap();
            }
            let out = sim.run(40_000_000);
            let records = out.pair_records(Some(400_000));
            crate::timing::build_relative_series(&records[0]).unwrap()
        };
        let plain = run(false);
        let skewed = run(true);
        assert_eq!(plain.values_a, skewed.values_a);
        assert_eq!(plain.values_b, skewed.values_b);
    }

    #[test]
    fn byte_cap_drops_trigger_paired_deletion() {
        let topo = TreeTopology::build(&TopologySpec {
            root: "f".into(),
            links: vec![
                LinkEntry {
                    from: "f".into(),
                    to: "s".into(),
                    bandwidth_bps: DEFAULT_BANDWIDTH_BPS,
                    propagation_ns: 10_000,
                    byte_cap: Some(2_000),
                },
                link("s", "a", 10_000),
                link("s", "b", 10_000),
            ],
            receivers: vec!["a".into(), "b".into()],
            background_hosts: vec![],
        })
        .unwrap();
        let (a, b) = ids(&topo);
        let mut sim = Simulator::new(topo);
        // Four packets of 800 B at one instant: the first two fit under the
        // 2000 B cap, the third and fourth are dropped.
        sim.emit_pair(0, 0, a, b, 800, Timestamp(0)).unwrap();
        sim.emit_pair(1, 1, a, b, 800, Timestamp(0)).unwrap();
        sim.emit_pair(2, 2, a, b, 800, Timestamp(10_000_000)).unwrap();
        let out = sim.run(100_000_000);
        let dropped: Vec<u64> = out
            .packets
            .iter()
            .filter(|p| p.dropped)
            .map(|p| p.packet.id)
            .collect();
        assert_eq!(dropped, vec![2, 3]);
        // Sample k = 1 lost both legs; the record keeps k = 0 and k = 2.
        let records = out.pair_records(Some(1));
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].sample_count(), 1);
    }

    #[test]
    fn emission_in_the_past_rejected() {
        let topo = fig_tree();
        let (a, b) = ids(&topo);
        let mut sim = Simulator::new(topo);
        sim.run_until(5_000);
        assert!(matches!(
            sim.emit_pair(0, 0, a, b, 800, Timestamp(1_000)),
            Err(SimError::ScheduleInPast { .. })
        ));
    }
}
