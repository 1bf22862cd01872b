//! Packet headers as the simulator sees them.

use crate::id::{NodeId, PairId};
use crate::timing::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketKind {
    Measurement,
    Background,
}

impl PacketKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PacketKind::Measurement => "measurement",
            PacketKind::Background => "background",
        }
    }
}

/// Wire-visible header of a simulated packet.
///
/// Measurement packets always carry the sender's emission stamp (on the
/// sender's clock); the indicator mark tells a receiver that this packet
/// belongs to a timed back-to-back pair and to which host pair. A packet in
/// the middle of a serial can belong to two adjacent marked pairs; the mark
/// then names the pair it leads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub id: u64,
    pub size: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: PacketKind,
    pub serial_id: Option<u64>,
    pub pair_index: Option<u64>,
    pub ir_mark: Option<PairId>,
    pub sender_ts: Option<Timestamp>,
}
