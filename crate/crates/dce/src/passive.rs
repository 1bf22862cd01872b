//! Passive measurement scheduling over regular data distribution.
//!
//! When one source streams the same content blocks to N hosts, every serial
//! (one block duplicated to all N hosts) already contains N-1 adjacent
//! back-to-back packet pairs for free. Marking those adjacencies and rotating
//! the destination order lets the source collect delay samples for every one
//! of the N(N-1)/2 host pairs without sending a single extra packet: rounds
//! are bounded by N-1, so coverage costs O(N) rotations rather than O(N²)
//! dedicated probe campaigns.

use std::collections::BTreeMap;
use std::io::{self, Write};

use thiserror::Error;

use crate::id::{NodeId, PairId};
use crate::netsim::{SerialMark, SimError, Simulator};
use crate::timing::{SampleRow, Timestamp, TimingRecord};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PassiveError {
    #[error("need at least two hosts, got {0}")]
    TooFewHosts(usize),
    #[error("pair {0:?} is not marked in the active round")]
    UnmarkedPair(HostPair),
    #[error("threshold must be positive")]
    ZeroThreshold,
    #[error("driver needs one receiver node per host, got {nodes} for {hosts} hosts")]
    HostCountMismatch { nodes: usize, hosts: usize },
    #[error("sender jitter half-range {half} ns must be non-negative and below half the serial interval {delta} ns")]
    JitterTooLarge { half: i64, delta: i64 },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Unordered pair of host indices (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HostPair {
    lo: usize,
    hi: usize,
}

impl HostPair {
    pub fn new(a: usize, b: usize) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Self { lo: a, hi: b }),
            std::cmp::Ordering::Greater => Some(Self { lo: b, hi: a }),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }
}

/// Destination order for the serials of one round, with the adjacent
/// positions currently marked as timed pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerialPlan {
    pub round: usize,
    pub order: Vec<usize>,
    /// Leading positions p; the marked pair is (order[p], order[p+1]).
    pub ir_positions: Vec<usize>,
}

impl SerialPlan {
    pub fn marked_pairs(&self) -> Vec<HostPair> {
        self.ir_positions
            .iter()
            .map(|&p| {
                HostPair::new(self.order[p], self.order[p + 1])
                    .expect("order is a permutation, adjacent entries differ")
            })
            .collect()
    }
}

/// Zigzag destination order for one rotation: starting at `round`, hosts are
/// taken alternately forward and backward (r, r+1, r-1, r+2, r-2, ...) mod N.
/// Rotating the start point walks the adjacency set over every host pair.
fn zigzag_order(round: usize, n: usize) -> Vec<usize> {
    let r = round as i64;
    let n_i = n as i64;
    (0..n_i)
        .map(|s| {
            let offset = if s % 2 == 1 { (s + 1) / 2 } else { -(s / 2) };
            (r + offset).rem_euclid(n_i) as usize
        })
        .collect()
}

/// Bookkeeping for the rotation schedule: per-pair sample counts against the
/// threshold, and the active round.
#[derive(Debug, Clone)]
pub struct ScheduleState {
    n_hosts: usize,
    tau: u64,
    counts: BTreeMap<HostPair, u64>,
    round: usize,
}

impl ScheduleState {
    pub fn new(n_hosts: usize, tau: u64) -> Result<Self, PassiveError> {
        if n_hosts < 2 {
            return Err(PassiveError::TooFewHosts(n_hosts));
        }
        if tau == 0 {
            return Err(PassiveError::ZeroThreshold);
        }
        let mut counts = BTreeMap::new();
        for i in 0..n_hosts {
            for j in (i + 1)..n_hosts {
                counts.insert(HostPair::new(i, j).unwrap(), 0);
            }
        }
        Ok(Self {
            n_hosts,
            tau,
            counts,
            round: 0,
        })
    }

    pub fn n_hosts(&self) -> usize {
        self.n_hosts
    }

    pub fn tau(&self) -> u64 {
        self.tau
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Upper bound on rotations; coverage always completes within it.
    pub fn planned_rounds(&self) -> usize {
        self.n_hosts - 1
    }

    pub fn counts(&self) -> &BTreeMap<HostPair, u64> {
        &self.counts
    }

    fn retired(&self, pair: HostPair) -> bool {
        self.counts[&pair] >= self.tau
    }

    fn active_pairs_of_round(&self, round: usize) -> Vec<(usize, HostPair)> {
        let order = zigzag_order(round, self.n_hosts);
        (0..self.n_hosts - 1)
            .filter_map(|p| {
                let pair = HostPair::new(order[p], order[p + 1]).unwrap();
                (!self.retired(pair)).then_some((p, pair))
            })
            .collect()
    }

    /// The ordering and markings to use for serials of the current round.
    /// Pairs that already reached the threshold are left unmarked.
    pub fn plan_round(&self) -> SerialPlan {
        let order = zigzag_order(self.round, self.n_hosts);
        let ir_positions = self
            .active_pairs_of_round(self.round)
            .into_iter()
            .map(|(p, _)| p)
            .collect();
        SerialPlan {
            round: self.round,
            order,
            ir_positions,
        }
    }

    pub fn is_marked(&self, pair: HostPair) -> bool {
        self.active_pairs_of_round(self.round)
            .iter()
            .any(|&(_, p)| p == pair)
    }

    /// Count one completed sample for a pair marked in the active round.
    /// Reaching the threshold retires the pair; once every marked pair of
    /// the round is retired, the rotation advances past any rounds whose
    /// adjacencies are all retired already.
    pub fn record_sample(&mut self, pair: HostPair) -> Result<(), PassiveError> {
        if !self.is_marked(pair) {
            return Err(PassiveError::UnmarkedPair(pair));
        }
        *self.counts.get_mut(&pair).expect("all pairs are tracked") += 1;
        if self.active_pairs_of_round(self.round).is_empty() {
            while self.round + 1 < self.planned_rounds() {
                self.round += 1;
                if !self.active_pairs_of_round(self.round).is_empty() {
                    return Ok(());
                }
            }
            // Saturate on the last round; coverage_complete is the signal.
            self.round = self.planned_rounds() - 1;
        }
        Ok(())
    }

    /// True once every host pair has reached the threshold.
    pub fn coverage_complete(&self) -> bool {
        self.counts.values().all(|&c| c >= self.tau)
    }
}

/// Dump the full rotation plan as CSV: per round, the destination order, the
/// marked adjacent pairs, and each pair's current sample count.
pub fn write_schedule_csv<W: Write>(state: &ScheduleState, w: &mut W) -> io::Result<()> {
    writeln!(w, "round,order,marked_pairs,pair_counts")?;
    for round in 0..state.planned_rounds() {
        let order = zigzag_order(round, state.n_hosts());
        let order_s: Vec<String> = order.iter().map(|h| h.to_string()).collect();
        let pairs: Vec<HostPair> = (0..state.n_hosts() - 1)
            .map(|p| HostPair::new(order[p], order[p + 1]).unwrap())
            .collect();
        let pairs_s: Vec<String> = pairs
            .iter()
            .map(|p| format!("{}-{}", p.lo(), p.hi()))
            .collect();
        let counts_s: Vec<String> = pairs
            .iter()
            .map(|p| format!("{}-{}:{}", p.lo(), p.hi(), state.counts()[p]))
            .collect();
        writeln!(
            w,
            "{},{},{},{}",
            round,
            order_s.join(">"),
            pairs_s.join(";"),
            counts_s.join(";"),
        )?;
    }
    Ok(())
}

/// Behaviour of the block-distribution driver.
#[derive(Debug, Clone)]
pub struct DriveConfig {
    /// Receiver node per host index; `receivers[i]` is host i.
    pub receivers: Vec<NodeId>,
    pub packet_size: u32,
    /// Gap between consecutive serials.
    pub delta_ns: i64,
    pub start_at_ns: i64,
    /// Hard stop on the number of serials, as a guard against starvation
    /// (heavy loss could otherwise keep a pair below the threshold forever).
    pub max_serials: u64,
    /// Uniform jitter half-range applied to each serial's emission instant.
    /// `None` keeps the constant interval; the timed records then carry it.
    pub sender_jitter_ns: Option<i64>,
    pub jitter_seed: u64,
}

/// Outcome of one drive run: the per-pair timed records plus how many
/// serials and rounds the schedule actually consumed.
#[derive(Debug)]
pub struct DriveOutcome {
    pub records: Vec<TimingRecord>,
    pub serials_sent: u64,
    pub rounds_used: usize,
    pub packets_emitted: u64,
}

struct PendingSample {
    sender_ts: Timestamp,
    lo: Option<Timestamp>,
    hi: Option<Timestamp>,
}

/// Distribute content blocks while the schedule state directs the ordering
/// and marking, feeding completed samples back into the state until every
/// pair reaches the threshold (or the serial budget runs out).
///
/// Each serial emits exactly one packet per host, marked or not, so
/// measurement adds zero packets over plain distribution.
pub fn drive(
    sim: &mut Simulator,
    state: &mut ScheduleState,
    cfg: &DriveConfig,
) -> Result<DriveOutcome, PassiveError> {
    use rand::{Rng, SeedableRng};
    if cfg.receivers.len() != state.n_hosts() {
        return Err(PassiveError::HostCountMismatch {
            nodes: cfg.receivers.len(),
            hosts: state.n_hosts(),
        });
    }
    if let Some(half) = cfg.sender_jitter_ns {
        if half < 0 || 2 * half >= cfg.delta_ns {
            return Err(PassiveError::JitterTooLarge {
                half,
                delta: cfg.delta_ns,
            });
        }
    }
    let mut jitter_rng = rand_chacha::ChaCha12Rng::seed_from_u64(cfg.jitter_seed);
    let host_of: BTreeMap<NodeId, usize> = cfg
        .receivers
        .iter()
        .enumerate()
        .map(|(i, &n)| (n, i))
        .collect();
    let node_pair = |pair: HostPair| -> PairId {
        PairId::new(cfg.receivers[pair.lo()], cfg.receivers[pair.hi()])
            .expect("hosts map to distinct receivers")
    };

    let mut next_k: BTreeMap<PairId, u64> = BTreeMap::new();
    let mut pending: BTreeMap<(PairId, u64), PendingSample> = BTreeMap::new();
    let mut samples: BTreeMap<PairId, Vec<SampleRow>> = BTreeMap::new();
    let mut serials_sent = 0u64;
    let mut packets_emitted = 0u64;
    let mut rounds_seen = 1usize;

    let collect =
        |sim: &mut Simulator,
         state: &mut ScheduleState,
         pending: &mut BTreeMap<(PairId, u64), PendingSample>,
         samples: &mut BTreeMap<PairId, Vec<SampleRow>>| {
            for arr in sim.take_measurement_arrivals() {
                let slot = pending.entry((arr.pair, arr.k)).or_insert(PendingSample {
                    sender_ts: arr.sender_ts,
                    lo: None,
                    hi: None,
                });
                if arr.dst == arr.pair.lo() {
                    slot.lo = Some(arr.arrival);
                } else {
                    slot.hi = Some(arr.arrival);
                }
                if let (Some(lo), Some(hi)) = (slot.lo, slot.hi) {
                    let sender_ts = slot.sender_ts;
                    pending.remove(&(arr.pair, arr.k));
                    samples.entry(arr.pair).or_default().push(SampleRow {
                        k: arr.k,
                        sender_ts,
                        arrival_a: lo,
                        arrival_b: hi,
                    });
                    let host_pair = HostPair::new(
                        host_of[&arr.pair.lo()],
                        host_of[&arr.pair.hi()],
                    )
                    .expect("distinct receivers map to distinct hosts");
                    // Stragglers of an already-retired pair still enter the
                    // record but no longer count against the threshold.
                    if state.is_marked(host_pair) {
                        state
                            .record_sample(host_pair)
                            .expect("marked pair accepts samples");
                    }
                }
            }
        };

    // Jitter for the upcoming serial is drawn one step ahead so the clock
    // can be advanced exactly to the next emission instant; the validated
    // bound |jitter| < delta/2 keeps emission times strictly increasing.
    let mut draw_jitter = |rng: &mut rand_chacha::ChaCha12Rng| match cfg.sender_jitter_ns {
        Some(half) if half > 0 => rng.gen_range(-half..=half),
        _ => 0,
    };
    let mut jitter = draw_jitter(&mut jitter_rng);
    while !state.coverage_complete() && serials_sent < cfg.max_serials {
        let plan = state.plan_round();
        rounds_seen = rounds_seen.max(plan.round + 1);
        let at = cfg.start_at_ns + serials_sent as i64 * cfg.delta_ns + jitter;
        let order_nodes: Vec<NodeId> = plan.order.iter().map(|&h| cfg.receivers[h]).collect();
        let marks: Vec<SerialMark> = plan
            .ir_positions
            .iter()
            .map(|&p| {
                let pair = node_pair(
                    HostPair::new(plan.order[p], plan.order[p + 1]).expect("adjacent hosts differ"),
                );
                let k = next_k.entry(pair).or_insert(0);
                let mark = SerialMark {
                    leading_pos: p,
                    pair,
                    k: *k,
                };
                *k += 1;
                mark
            })
            .collect();
        sim.emit_serial(serials_sent, &order_nodes, cfg.packet_size, Timestamp(at), &marks)?;
        packets_emitted += order_nodes.len() as u64;
        serials_sent += 1;
        jitter = draw_jitter(&mut jitter_rng);
        let next_at = cfg.start_at_ns + serials_sent as i64 * cfg.delta_ns + jitter;
        sim.run_until(next_at);
        collect(sim, state, &mut pending, &mut samples);
    }

    // Let everything still in flight land, then pick up the tail.
    let drain_until = cfg.start_at_ns + (serials_sent as i64 + 2) * cfg.delta_ns;
    sim.run_to_completion(drain_until);
    collect(sim, state, &mut pending, &mut samples);

    let records = samples
        .into_iter()
        .filter(|(_, rows)| rows.len() >= 2)
        .map(|(pair, rows)| {
            let hint = cfg.sender_jitter_ns.is_none().then_some(cfg.delta_ns);
            TimingRecord::from_samples(pair, &rows, hint)
                .expect("completed samples satisfy record invariants")
        })
        .collect();
    Ok(DriveOutcome {
        records,
        serials_sent,
        rounds_used: rounds_seen,
        packets_emitted,
    })
}
