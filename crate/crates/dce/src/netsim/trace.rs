//! Trace inspection helpers and the CSV export format.

use std::io::{self, Write};

use crate::id::PairId;

use super::sim::{PacketRecord, SimError, SimOutput};
use super::topology::TreeTopology;

/// Delay accumulated on the links shared by both members of `pair`: from the
/// root down to their branching router.
pub fn shared_path_delay_for(
    topo: &TreeTopology,
    rec: &PacketRecord,
    pair: PairId,
) -> Result<i64, SimError> {
    let branch = topo
        .branch_point(pair)
        .unwrap_or_else(|| topo.lowest_common_ancestor(pair.lo(), pair.hi()));
    let mut sum = 0;
    if branch == topo.root() {
        return Ok(0);
    }
    for hop in &rec.hops {
        sum += hop.total_ns();
        if hop.to == branch {
            return Ok(sum);
        }
    }
    Err(SimError::NotMeasurementPacket(rec.packet.id))
}

/// Same, taking the pair from the packet's own indicator mark.
pub fn shared_path_delay(topo: &TreeTopology, rec: &PacketRecord) -> Result<i64, SimError> {
    let pair = rec
        .packet
        .ir_mark
        .ok_or(SimError::NotMeasurementPacket(rec.packet.id))?;
    shared_path_delay_for(topo, rec, pair)
}

/// Write the full packet trace as CSV.
///
/// Columns: packet_id, kind, serial_id, k, src, dst, sender_ts_ns,
/// arrival_ns, shared_delay_ns, total_delay_ns. Optional fields are empty
/// for packets they do not apply to (background packets carry no serial or
/// stamp; dropped packets have no arrival). Rows are ordered by packet id,
/// so equal runs produce byte-identical files.
pub fn write_trace_csv<W: Write>(out: &SimOutput, w: &mut W) -> io::Result<()> {
    writeln!(
        w,
        "packet_id,kind,serial_id,k,src,dst,sender_ts_ns,arrival_ns,shared_delay_ns,total_delay_ns"
    )?;
    let topo = &out.topology;
    for rec in &out.packets {
        let p = &rec.packet;
        let opt_u64 = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_i64 = |v: Option<i64>| v.map(|x| x.to_string()).unwrap_or_default();
        let shared = match p.ir_mark {
            Some(pair) if rec.arrival_ns.is_some() => {
                shared_path_delay_for(topo, rec, pair).ok()
            }
            _ => None,
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            p.id,
            p.kind.as_str(),
            opt_u64(p.serial_id),
            opt_u64(p.pair_index),
            topo.name(p.src),
            topo.name(p.dst),
            opt_i64(p.sender_ts.map(|t| t.nanos())),
            opt_i64(rec.arrival_ns),
            opt_i64(shared),
            opt_i64(rec.total_delay_ns()),
        )?;
    }
    Ok(())
}
