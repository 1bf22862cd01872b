//! Delay-correlation estimation between receiver pairs, from arrival
//! timestamps alone.
//!
//! Two receivers served by the same sender share a path prefix up to their
//! branching router. Queueing on that shared prefix delays both receivers'
//! packets together, so the covariance of their one-way delays equals the
//! delay variance of the shared segment — an internal network property
//! readable from the edge. Measuring it needs no clock synchronization:
//! back-to-back packet pairs, per-receiver baseline subtraction and
//! sender-offset detrending cancel every per-clock constant before the
//! covariance is taken.
//!
//! The crate has four parts:
//!
//! * [`timing`] turns raw per-clock timestamps into detrended series;
//! * [`estimator`] computes covariance/correlation estimates and the
//!   outlier filter;
//! * [`netsim`] is a deterministic discrete-event tree-network simulator
//!   with FIFO links, Poisson background traffic and full per-hop ground
//!   truth;
//! * [`passive`] schedules measurements inside regular data distribution,
//!   rotating destination orders so every receiver pair is covered with no
//!   extra packets.

pub mod estimator;
pub mod id;
pub mod netsim;
pub mod passive;
pub mod timing;

pub use id::{NodeId, PairId};
pub use timing::Timestamp;
