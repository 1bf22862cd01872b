//! Node and receiver-pair identifiers shared across the crate.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of a node in the simulated network.
///
/// Ids are dense indices assigned by the topology builder; the builder keeps
/// the mapping back to the human-readable node names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// An unordered pair of distinct receivers.
///
/// Stored normalized (`lo < hi`) so it can key maps regardless of the order
/// the two receivers were named in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairId {
    lo: NodeId,
    hi: NodeId,
}

impl PairId {
    /// Returns `None` when both ids name the same node.
    pub fn new(a: NodeId, b: NodeId) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Self { lo: a, hi: b }),
            std::cmp::Ordering::Greater => Some(Self { lo: b, hi: a }),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn lo(&self) -> NodeId {
        self.lo
    }

    pub fn hi(&self) -> NodeId {
        self.hi
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.lo == node || self.hi == node
    }

    /// The other member of the pair, or `None` if `node` is not a member.
    pub fn partner(&self, node: NodeId) -> Option<NodeId> {
        if node == self.lo {
            Some(self.hi)
        } else if node == self.hi {
            Some(self.lo)
        } else {
            None
        }
    }
}

impl fmt::Display for PairId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_normalizes_order() {
        let a = NodeId(3);
        let b = NodeId(1);
        let p = PairId::new(a, b).unwrap();
        assert_eq!(p.lo(), b);
        assert_eq!(p.hi(), a);
        assert_eq!(p, PairId::new(b, a).unwrap());
    }

    #[test]
    fn degenerate_pair_rejected() {
        assert!(PairId::new(NodeId(2), NodeId(2)).is_none());
    }

    #[test]
    fn partner_lookup() {
        let p = PairId::new(NodeId(0), NodeId(5)).unwrap();
        assert_eq!(p.partner(NodeId(0)), Some(NodeId(5)));
        assert_eq!(p.partner(NodeId(5)), Some(NodeId(0)));
        assert_eq!(p.partner(NodeId(9)), None);
    }
}
