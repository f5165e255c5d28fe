//! The dataflow graph, its locations, and path summaries between them.

use std::collections::VecDeque;
use std::fmt;

use super::antichain::Antichain;
use super::timestamp::{PathSummary, Timestamp};
use super::TopologyError;

/// A place in the dataflow graph where outstanding work can be counted.
///
/// Edge locations hold the pointstamps of in-flight messages and of the
/// tokens that may produce them; times on an edge are in the sender's
/// domain. Node locations name one input port of an operator, in the
/// receiver's domain (after the edge summary has been applied), and carry the
/// frontiers that operators observe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Location {
    Node { node: usize, port: usize },
    Edge(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Node { node, port } => write!(f, "node {node} input {port}"),
            Location::Edge(id) => write!(f, "edge {id}"),
        }
    }
}

/// A (time, location) pair.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pointstamp<T> {
    pub time: T,
    pub location: Location,
}

impl<T> Pointstamp<T> {
    pub fn new(time: T, location: Location) -> Self {
        Pointstamp { time, location }
    }
}

/// An operator port: output ports for edge sources, input ports for targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortRef {
    pub node: usize,
    pub port: usize,
}

impl PortRef {
    pub fn new(node: usize, port: usize) -> Self {
        PortRef { node, port }
    }
}

#[derive(Clone, Debug)]
pub struct NodeShape<S> {
    pub name: String,
    pub inputs: usize,
    pub outputs: usize,
    /// `internal[input][output]`: how times advance from an input to an
    /// output, or `None` if the input cannot cause output on that port.
    pub internal: Vec<Vec<Option<S>>>,
}

#[derive(Clone, Debug)]
pub struct EdgeShape<S> {
    pub source: PortRef,
    pub target: PortRef,
    /// Applied to message times on delivery.
    pub summary: S,
}

/// Nodes and edges of a dataflow, validated so that every cycle strictly
/// advances timestamps.
#[derive(Clone, Debug)]
pub struct DataflowTopology<T: Timestamp> {
    nodes: Vec<NodeShape<T::Summary>>,
    edges: Vec<EdgeShape<T::Summary>>,
    // Dense index of `Location::Node { node, port: 0 }`.
    input_offsets: Vec<usize>,
    input_count: usize,
    // Edge ids leaving each (node, output port).
    outgoing: Vec<Vec<Vec<usize>>>,
}

impl<T: Timestamp> DataflowTopology<T> {
    pub fn new(
        nodes: Vec<NodeShape<T::Summary>>,
        edges: Vec<EdgeShape<T::Summary>>,
    ) -> Result<Self, TopologyError> {
        for (index, node) in nodes.iter().enumerate() {
            if node.internal.len() != node.inputs
                || node.internal.iter().any(|row| row.len() != node.outputs)
            {
                return Err(TopologyError::SummaryShape { node: index });
            }
        }
        let mut outgoing: Vec<Vec<Vec<usize>>> =
            nodes.iter().map(|n| vec![Vec::new(); n.outputs]).collect();
        for (id, edge) in edges.iter().enumerate() {
            let source_ok = nodes.get(edge.source.node).is_some_and(|n| edge.source.port < n.outputs);
            let target_ok = nodes.get(edge.target.node).is_some_and(|n| edge.target.port < n.inputs);
            if !source_ok || !target_ok {
                return Err(TopologyError::PortOutOfRange { edge: id });
            }
            outgoing[edge.source.node][edge.source.port].push(id);
        }
        let mut input_offsets = Vec::with_capacity(nodes.len());
        let mut input_count = 0;
        for node in nodes.iter() {
            input_offsets.push(input_count);
            input_count += node.inputs;
        }
        let topology = DataflowTopology { nodes, edges, input_offsets, input_count, outgoing };
        if let Some(cycle) = topology.find_identity_cycle() {
            return Err(TopologyError::IdentityCycle {
                cycle: cycle.iter().map(|l| topology.describe(*l)).collect(),
            });
        }
        Ok(topology)
    }

    pub fn nodes(&self) -> &[NodeShape<T::Summary>] {
        &self.nodes
    }

    pub fn edges(&self) -> &[EdgeShape<T::Summary>] {
        &self.edges
    }

    /// Edges leaving output `port` of `node`.
    pub fn edges_from(&self, node: usize, port: usize) -> &[usize] {
        &self.outgoing[node][port]
    }

    pub fn location_count(&self) -> usize {
        self.input_count + self.edges.len()
    }

    /// Dense index for `location`, in `0..location_count()`.
    pub fn index_of(&self, location: Location) -> usize {
        match location {
            Location::Node { node, port } => self.input_offsets[node] + port,
            Location::Edge(id) => self.input_count + id,
        }
    }

    pub fn location_at(&self, index: usize) -> Location {
        if index >= self.input_count {
            return Location::Edge(index - self.input_count);
        }
        let node = self.input_offsets.partition_point(|offset| *offset <= index) - 1;
        // Nodes without inputs share an offset with their successor.
        let node = (node..self.nodes.len())
            .find(|n| index < self.input_offsets[*n] + self.nodes[*n].inputs)
            .unwrap_or(node);
        Location::Node { node, port: index - self.input_offsets[node] }
    }

    pub fn locations(&self) -> impl Iterator<Item = Location> + '_ {
        let inputs = self.nodes.iter().enumerate().flat_map(|(node, shape)| {
            (0..shape.inputs).map(move |port| Location::Node { node, port })
        });
        inputs.chain((0..self.edges.len()).map(Location::Edge))
    }

    pub fn is_valid(&self, location: Location) -> bool {
        match location {
            Location::Node { node, port } => self.nodes.get(node).is_some_and(|n| port < n.inputs),
            Location::Edge(id) => id < self.edges.len(),
        }
    }

    /// One-step moves out of `location` and the summary each applies.
    pub fn steps(&self, location: Location) -> Vec<(Location, T::Summary)> {
        match location {
            Location::Edge(id) => {
                let edge = &self.edges[id];
                vec![(
                    Location::Node { node: edge.target.node, port: edge.target.port },
                    edge.summary.clone(),
                )]
            }
            Location::Node { node, port } => {
                let mut result = Vec::new();
                for (output, summary) in self.nodes[node].internal[port].iter().enumerate() {
                    if let Some(summary) = summary {
                        for &edge in self.outgoing[node][output].iter() {
                            result.push((Location::Edge(edge), summary.clone()));
                        }
                    }
                }
                result
            }
        }
    }

    /// Human-readable name for diagnostics.
    pub fn describe(&self, location: Location) -> String {
        match location {
            Location::Node { node, port } => {
                format!("{} (node {node}) input {port}", self.nodes[node].name)
            }
            Location::Edge(id) => {
                let edge = &self.edges[id];
                format!(
                    "edge {id} [{}:{} -> {}:{}]",
                    self.nodes[edge.source.node].name,
                    edge.source.port,
                    self.nodes[edge.target.node].name,
                    edge.target.port
                )
            }
        }
    }

    // Depth-first search restricted to identity steps.
    fn find_identity_cycle(&self) -> Option<Vec<Location>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Unseen,
            Active,
            Done,
        }
        let count = self.location_count();
        let mut marks = vec![Mark::Unseen; count];
        let identity_steps = |index: usize| -> Vec<usize> {
            self.steps(self.location_at(index))
                .into_iter()
                .filter(|(_, s)| s.is_identity())
                .map(|(l, _)| self.index_of(l))
                .collect()
        };
        for root in 0..count {
            if marks[root] != Mark::Unseen {
                continue;
            }
            let mut stack: Vec<(usize, Vec<usize>)> = vec![(root, identity_steps(root))];
            marks[root] = Mark::Active;
            while let Some((current, pending)) = stack.last_mut() {
                let current = *current;
                match pending.pop() {
                    Some(next) => match marks[next] {
                        Mark::Unseen => {
                            marks[next] = Mark::Active;
                            let steps = identity_steps(next);
                            stack.push((next, steps));
                        }
                        Mark::Active => {
                            let start = stack.iter().position(|(l, _)| *l == next).unwrap();
                            return Some(
                                stack[start..].iter().map(|(l, _)| self.location_at(*l)).collect(),
                            );
                        }
                        Mark::Done => {}
                    },
                    None => {
                        marks[current] = Mark::Done;
                        stack.pop();
                    }
                }
            }
        }
        None
    }
}

/// Incremental construction of a [`DataflowTopology`].
pub struct TopologyBuilder<T: Timestamp> {
    nodes: Vec<NodeShape<T::Summary>>,
    edges: Vec<EdgeShape<T::Summary>>,
}

impl<T: Timestamp> TopologyBuilder<T> {
    pub fn new() -> Self {
        TopologyBuilder { nodes: Vec::new(), edges: Vec::new() }
    }

    /// Adds a node whose inputs connect to every output with the identity.
    pub fn add_node(&mut self, name: &str, inputs: usize, outputs: usize) -> usize {
        let internal = vec![vec![Some(T::Summary::default()); outputs]; inputs];
        self.add_node_with(name, inputs, outputs, internal)
    }

    pub fn add_node_with(
        &mut self,
        name: &str,
        inputs: usize,
        outputs: usize,
        internal: Vec<Vec<Option<T::Summary>>>,
    ) -> usize {
        self.nodes.push(NodeShape { name: name.to_string(), inputs, outputs, internal });
        self.nodes.len() - 1
    }

    pub fn add_edge(&mut self, source: PortRef, target: PortRef) -> usize {
        self.add_edge_with(source, target, T::Summary::default())
    }

    pub fn add_edge_with(&mut self, source: PortRef, target: PortRef, summary: T::Summary) -> usize {
        self.edges.push(EdgeShape { source, target, summary });
        self.edges.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn build(self) -> Result<DataflowTopology<T>, TopologyError> {
        DataflowTopology::new(self.nodes, self.edges)
    }
}

impl<T: Timestamp> Default for TopologyBuilder<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Minimal path summaries between every ordered pair of locations.
///
/// The trivial path is included, so every location reaches itself with the
/// identity.
#[derive(Clone, Debug)]
pub struct LocationSummaries<S> {
    // per source index: (target index, minimal summaries), sorted by target
    reach: Vec<Vec<(usize, Antichain<S>)>>,
}

impl<S> LocationSummaries<S> {
    /// Reachable targets of the location with dense index `source`.
    pub fn from_index(&self, source: usize) -> &[(usize, Antichain<S>)] {
        &self.reach[source]
    }

    pub fn between(&self, source: usize, target: usize) -> Option<&Antichain<S>> {
        let row = &self.reach[source];
        row.binary_search_by_key(&target, |(t, _)| *t).ok().map(|i| &row[i].1)
    }
}

/// Computes, for each ordered pair of locations, the antichain of minimal
/// summaries over all directed paths between them (empty when unreachable).
///
/// Iterates to a fixpoint per source, discarding dominated summaries. Cycles
/// strictly advance times, so anything that returns to an already-visited
/// location is dominated and the iteration stops.
pub fn compute_location_summaries<T: Timestamp>(
    topology: &DataflowTopology<T>,
) -> LocationSummaries<T::Summary> {
    let count = topology.location_count();
    let steps: Vec<Vec<(usize, T::Summary)>> = (0..count)
        .map(|i| {
            topology
                .steps(topology.location_at(i))
                .into_iter()
                .map(|(l, s)| (topology.index_of(l), s))
                .collect()
        })
        .collect();

    let mut reach = Vec::with_capacity(count);
    let mut found: Vec<Option<Antichain<T::Summary>>> = vec![None; count];
    for source in 0..count {
        let mut touched = Vec::new();
        let mut worklist = VecDeque::new();
        found[source] = Some(Antichain::from_elem(T::Summary::default()));
        touched.push(source);
        worklist.push_back((source, T::Summary::default()));
        while let Some((at, summary)) = worklist.pop_front() {
            // Skip summaries evicted since they were queued.
            if !found[at].as_ref().is_some_and(|a| a.elements().contains(&summary)) {
                continue;
            }
            for (next, step) in steps[at].iter() {
                let candidate = summary.followed_by(step);
                let entry = &mut found[*next];
                if entry.is_none() {
                    touched.push(*next);
                    *entry = Some(Antichain::new());
                }
                if entry.as_mut().unwrap().insert(candidate.clone()) {
                    worklist.push_back((*next, candidate));
                }
            }
        }
        touched.sort_unstable();
        reach.push(touched.into_iter().map(|t| (t, found[t].take().unwrap())).collect());
    }
    LocationSummaries { reach }
}
