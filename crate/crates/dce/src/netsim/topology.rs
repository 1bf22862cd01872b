//! Tree topology construction and validation.
//!
//! Routing is the tree: every packet travels from its source up to the lowest
//! common ancestor of source and destination, then down. A node's route to
//! the root is unique, so the branching router of any receiver pair is
//! well-defined.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::id::{NodeId, PairId};

/// Largest packet the simulator accepts, in bytes.
pub const MTU: u32 = 1500;

/// Default link rate: 100 Mbit/s.
pub const DEFAULT_BANDWIDTH_BPS: u64 = 100_000_000;

/// Default one-way propagation delay per link.
pub const DEFAULT_PROPAGATION_NS: i64 = 100_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("routing loop detected at node '{0}'")]
    RoutingLoop(String),
    #[error("node '{0}' is not connected to the root")]
    Disconnected(String),
    #[error("node '{0}' has multiple parents")]
    MultipleParents(String),
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("link from '{from}' to '{to}' has invalid parameters: {reason}")]
    BadLink {
        from: String,
        to: String,
        reason: String,
    },
    #[error("topology needs at least two receivers, got {0}")]
    TooFewReceivers(usize),
}

/// One directed parent-to-child edge in the declarative description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkEntry {
    pub from: String,
    pub to: String,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_bps: u64,
    #[serde(default = "default_propagation")]
    pub propagation_ns: i64,
    /// Optional queue capacity in bytes; unbounded when absent.
    #[serde(default)]
    pub byte_cap: Option<u64>,
}

fn default_bandwidth() -> u64 {
    DEFAULT_BANDWIDTH_BPS
}

fn default_propagation() -> i64 {
    DEFAULT_PROPAGATION_NS
}

/// Declarative topology description, the on-disk schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub root: String,
    pub links: Vec<LinkEntry>,
    pub receivers: Vec<String>,
    #[serde(default)]
    pub background_hosts: Vec<String>,
}

/// Transmission characteristics of one link (used for both directions).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkSpec {
    pub bandwidth_bps: u64,
    pub propagation_ns: i64,
    pub byte_cap: Option<u64>,
}

impl LinkSpec {
    /// Time to clock `bytes` onto the wire, rounded up to whole ns.
    pub fn serialization_ns(&self, bytes: u32) -> i64 {
        let bits = bytes as u128 * 8;
        let ns = (bits * 1_000_000_000 + self.bandwidth_bps as u128 - 1)
            / self.bandwidth_bps as u128;
        ns as i64
    }
}

/// A validated rooted tree with per-link parameters and precomputed
/// branching routers for every receiver pair.
#[derive(Debug, Clone)]
pub struct TreeTopology {
    names: Vec<String>,
    root: NodeId,
    parent: Vec<Option<NodeId>>,
    depth: Vec<u32>,
    links: BTreeMap<(NodeId, NodeId), LinkSpec>,
    receivers: Vec<NodeId>,
    background_hosts: Vec<NodeId>,
    branch_points: BTreeMap<PairId, NodeId>,
}

impl TreeTopology {
    pub fn build(spec: &TopologySpec) -> Result<Self, TopologyError> {
        let mut names: Vec<String> = Vec::new();
        let mut seen: BTreeMap<String, NodeId> = BTreeMap::new();
        // Interning pass; root first so NodeId(0) is always the root.
        let assign = |name: &str, names: &mut Vec<String>, seen: &mut BTreeMap<String, NodeId>| {
            if let Some(&id) = seen.get(name) {
                return id;
            }
            let id = NodeId(names.len() as u32);
            names.push(name.to_string());
            seen.insert(name.to_string(), id);
            id
        };

        let root = assign(&spec.root, &mut names, &mut seen);
        for link in &spec.links {
            assign(&link.from, &mut names, &mut seen);
            assign(&link.to, &mut names, &mut seen);
        }

        let n = names.len();
        let mut parent: Vec<Option<NodeId>> = vec![None; n];
        let mut links: BTreeMap<(NodeId, NodeId), LinkSpec> = BTreeMap::new();
        for link in &spec.links {
            if link.bandwidth_bps == 0 {
                return Err(TopologyError::BadLink {
                    from: link.from.clone(),
                    to: link.to.clone(),
                    reason: "bandwidth must be positive".into(),
                });
            }
            if link.propagation_ns < 0 {
                return Err(TopologyError::BadLink {
                    from: link.from.clone(),
                    to: link.to.clone(),
                    reason: "propagation must be non-negative".into(),
                });
            }
            let from = seen[&link.from];
            let to = seen[&link.to];
            if to == root {
                return Err(TopologyError::RoutingLoop(link.to.clone()));
            }
            if parent[to.0 as usize].is_some() {
                return Err(TopologyError::MultipleParents(link.to.clone()));
            }
            parent[to.0 as usize] = Some(from);
            links.insert(
                (from, to),
                LinkSpec {
                    bandwidth_bps: link.bandwidth_bps,
                    propagation_ns: link.propagation_ns,
                    byte_cap: link.byte_cap,
                },
            );
        }

        // Walk each node up to the root; a walk longer than the node count
        // means the parent chain loops instead of terminating.
        let mut depth = vec![0u32; n];
        for id in 0..n {
            let mut cur = NodeId(id as u32);
            let mut steps = 0u32;
            while let Some(p) = parent[cur.0 as usize] {
                cur = p;
                steps += 1;
                if steps as usize > n {
                    return Err(TopologyError::RoutingLoop(names[id].clone()));
                }
            }
            if cur != root {
                return Err(TopologyError::Disconnected(names[id].clone()));
            }
            depth[id] = steps;
        }

        let resolve = |list: &[String]| -> Result<Vec<NodeId>, TopologyError> {
            list.iter()
                .map(|name| {
                    seen.get(name)
                        .copied()
                        .ok_or_else(|| TopologyError::UnknownNode(name.clone()))
                })
                .collect()
        };
        let receivers = resolve(&spec.receivers)?;
        if receivers.len() < 2 {
            return Err(TopologyError::TooFewReceivers(receivers.len()));
        }
        let background_hosts = resolve(&spec.background_hosts)?;

        let mut topo = Self {
            names,
            root,
            parent,
            depth,
            links,
            receivers,
            background_hosts,
            branch_points: BTreeMap::new(),
        };
        for i in 0..topo.receivers.len() {
            for j in (i + 1)..topo.receivers.len() {
                let pair = PairId::new(topo.receivers[i], topo.receivers[j])
                    .expect("receivers are distinct nodes");
                let lca = topo.lowest_common_ancestor(pair.lo(), pair.hi());
                topo.branch_points.insert(pair, lca);
            }
        }
        Ok(topo)
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, node: NodeId) -> &str {
        &self.names[node.0 as usize]
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| NodeId(i as u32))
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        self.parent[node.0 as usize]
    }

    pub fn receivers(&self) -> &[NodeId] {
        &self.receivers
    }

    pub fn background_hosts(&self) -> &[NodeId] {
        &self.background_hosts
    }

    pub fn is_receiver(&self, node: NodeId) -> bool {
        self.receivers.contains(&node)
    }

    pub fn link(&self, from: NodeId, to: NodeId) -> Option<&LinkSpec> {
        self.links
            .get(&(from, to))
            .or_else(|| self.links.get(&(to, from)))
    }

    pub fn links(&self) -> impl Iterator<Item = (&(NodeId, NodeId), &LinkSpec)> {
        self.links.iter()
    }

    /// Branching router of a receiver pair (precomputed at build time).
    pub fn branch_point(&self, pair: PairId) -> Option<NodeId> {
        self.branch_points.get(&pair).copied()
    }

    pub fn lowest_common_ancestor(&self, a: NodeId, b: NodeId) -> NodeId {
        let mut x = a;
        let mut y = b;
        while self.depth[x.0 as usize] > self.depth[y.0 as usize] {
            x = self.parent[x.0 as usize].expect("non-root node has a parent");
        }
        while self.depth[y.0 as usize] > self.depth[x.0 as usize] {
            y = self.parent[y.0 as usize].expect("non-root node has a parent");
        }
        while x != y {
            x = self.parent[x.0 as usize].expect("non-root node has a parent");
            y = self.parent[y.0 as usize].expect("non-root node has a parent");
        }
        x
    }

    /// Node sequence from `src` to `dst`: up to the common ancestor, then down.
    pub fn route(&self, src: NodeId, dst: NodeId) -> Vec<NodeId> {
        let meet = self.lowest_common_ancestor(src, dst);
        let mut up = Vec::new();
        let mut cur = src;
        while cur != meet {
            up.push(cur);
            cur = self.parent[cur.0 as usize].expect("walk terminates at ancestor");
        }
        up.push(meet);
        let mut down = Vec::new();
        let mut cur = dst;
        while cur != meet {
            down.push(cur);
            cur = self.parent[cur.0 as usize].expect("walk terminates at ancestor");
        }
        down.reverse();
        up.extend(down);
        up
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(from: &str, to: &str) -> LinkEntry {
        LinkEntry {
            from: from.into(),
            to: to.into(),
            bandwidth_bps: DEFAULT_BANDWIDTH_BPS,
            propagation_ns: 10_000,
            byte_cap: None,
        }
    }

    fn chain_spec() -> TopologySpec {
        TopologySpec {
            root: "f".into(),
            links: vec![link("f", "s"), link("s", "a"), link("s", "b")],
            receivers: vec!["a".into(), "b".into()],
            background_hosts: vec![],
        }
    }

    #[test]
    fn three_node_chain_is_valid() {
        let topo = TreeTopology::build(&chain_spec()).unwrap();
        let a = topo.node_by_name("a").unwrap();
        let b = topo.node_by_name("b").unwrap();
        let s = topo.node_by_name("s").unwrap();
        let pair = PairId::new(a, b).unwrap();
        assert_eq!(topo.branch_point(pair), Some(s));
        assert_eq!(topo.lowest_common_ancestor(a, b), s);
    }

    #[test]
    fn reciprocal_edges_are_a_routing_loop() {
        let mut spec = chain_spec();
        spec.links.push(link("a", "s"));
        let err = TreeTopology::build(&spec).unwrap_err();
        assert!(matches!(
            err,
            TopologyError::MultipleParents(_) | TopologyError::RoutingLoop(_)
        ));
    }

    #[test]
    fn cycle_without_double_parent_is_detected() {
        // x -> y -> x with the root elsewhere: y's parent chain never
        // reaches the root.
        let spec = TopologySpec {
            root: "f".into(),
            links: vec![
                link("f", "a"),
                link("f", "b"),
                link("x", "y"),
                link("y", "x"),
            ],
            receivers: vec!["a".into(), "b".into()],
            background_hosts: vec![],
        };
        let err = TreeTopology::build(&spec).unwrap_err();
        assert!(matches!(err, TopologyError::RoutingLoop(_)));
    }

    #[test]
    fn multiple_parents_rejected() {
        let mut spec = chain_spec();
        spec.links.push(LinkEntry {
            from: "f".into(),
            to: "a".into(),
            bandwidth_bps: DEFAULT_BANDWIDTH_BPS,
            propagation_ns: 0,
            byte_cap: None,
        });
        assert_eq!(
            TreeTopology::build(&spec).unwrap_err(),
            TopologyError::MultipleParents("a".into())
        );
    }

    #[test]
    fn disconnected_receiver_rejected() {
        let spec = TopologySpec {
            root: "f".into(),
            links: vec![link("f", "s"), link("s", "a"), link("s", "b"), link("x", "y")],
            receivers: vec!["a".into(), "b".into()],
            background_hosts: vec![],
        };
        assert!(matches!(
            TreeTopology::build(&spec).unwrap_err(),
            TopologyError::Disconnected(_)
        ));
    }

    #[test]
    fn unknown_receiver_rejected() {
        let mut spec = chain_spec();
        spec.receivers.push("ghost".into());
        assert_eq!(
            TreeTopology::build(&spec).unwrap_err(),
            TopologyError::UnknownNode("ghost".into())
        );
    }

    #[test]
    fn two_level_structure_with_background_hosts() {
        let spec = TopologySpec {
            root: "f".into(),
            links: vec![
                link("f", "r1"),
                link("r1", "r2"),
                link("r2", "a"),
                link("r2", "b"),
                link("f", "bg1"),
                link("r1", "bg2"),
            ],
            receivers: vec!["a".into(), "b".into()],
            background_hosts: vec!["bg1".into(), "bg2".into()],
        };
        let topo = TreeTopology::build(&spec).unwrap();
        assert_eq!(topo.background_hosts().len(), 2);
        let a = topo.node_by_name("a").unwrap();
        let b = topo.node_by_name("b").unwrap();
        let r2 = topo.node_by_name("r2").unwrap();
        assert_eq!(topo.branch_point(PairId::new(a, b).unwrap()), Some(r2));
    }

    #[test]
    fn route_goes_up_then_down() {
        let spec = TopologySpec {
            root: "f".into(),
            links: vec![
                link("f", "r1"),
                link("r1", "r2"),
                link("r2", "a"),
                link("r2", "b"),
                link("f", "bg1"),
            ],
            receivers: vec!["a".into(), "b".into()],
            background_hosts: vec!["bg1".into()],
        };
        let topo = TreeTopology::build(&spec).unwrap();
        let by = |n: &str| topo.node_by_name(n).unwrap();
        assert_eq!(
            topo.route(by("bg1"), by("a")),
            vec![by("bg1"), by("f"), by("r1"), by("r2"), by("a")]
        );
        assert_eq!(topo.route(by("f"), by("b")), vec![by("f"), by("r1"), by("r2"), by("b")]);
    }

    #[test]
    fn serialization_time_closed_form() {
        let spec = LinkSpec {
            bandwidth_bps: DEFAULT_BANDWIDTH_BPS,
            propagation_ns: 0,
            byte_cap: None,
        };
        // 800 bytes at 100 Mbit/s: 6400 bits / 1e8 bps = 64 us.
        assert_eq!(spec.serialization_ns(800), 64_000);
        assert_eq!(spec.serialization_ns(1500), 120_000);
    }
}
