//! Deterministic discrete-event simulation of a rooted tree network with
//! FIFO store-and-forward links and Poisson background traffic.
//!
//! The simulator is the test bench for the estimator: it produces both the
//! receiver-clock timestamps the estimator is allowed to see and the
//! per-link ground truth it is judged against.

pub mod packet;
pub mod poisson;
pub mod sim;
pub mod topology;
pub mod trace;

pub use packet::{Packet, PacketKind};
pub use poisson::{PoissonSource, PoissonSourceSpec};
pub use sim::{
    ClockSpec, HopRecord, MeasurementArrival, PacketRecord, SerialMark, SimError, SimOutput,
    Simulator, TruthRow,
};
pub use topology::{
    LinkEntry, LinkSpec, TopologyError, TopologySpec, TreeTopology, DEFAULT_BANDWIDTH_BPS,
    DEFAULT_PROPAGATION_NS, MTU,
};
pub use trace::{shared_path_delay, shared_path_delay_for, write_trace_csv};
