//! Per-user provenance graph over down-sampled log records.
//!
//! Four construction rules, applied as each record arrives:
//!
//! 1. A record whose timestamp differs from the previous one of its user
//!    extends that user's main chain with a Sequential edge. The chain is
//!    built from one representative per timestamp run (the run's first
//!    bearer, called the anchor below), so the Sequential subgraph per user
//!    is a simple timestamp-ordered path.
//! 2. A record whose parent process matches the most recent process-creation
//!    or process-exit node of the same user gets a directed Causal edge from
//!    that node (match on process name first, base file name second).
//! 3. A record whose timestamp equals the current run's gets a
//!    ConcurrentAttach edge to the run's anchor.
//! 4. Same-timestamp joiners after the anchor are pairwise linked with
//!    ConcurrentInternal edges.
//!
//! Users never share edges. Node ids are dense and assigned in insertion
//! order, so every edge points from a lower id to a higher one.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::ingest::LogRecord;

/// Event ids that open and close a process lifetime; only these anchor
/// Causal edges.
pub const PROCESS_LIFECYCLE_EVENTS: [u32; 2] = [4688, 4689];

/// Dense node handle into one [`ProvGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Sequential,
    Causal,
    ConcurrentAttach,
    ConcurrentInternal,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Sequential => "sequential",
            EdgeKind::Causal => "causal",
            EdgeKind::ConcurrentAttach => "concurrent_attach",
            EdgeKind::ConcurrentInternal => "concurrent_internal",
        }
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One adjacency entry. `reversed` is true only on the child's view of a
/// Causal edge; every other kind is undirected and appears unreversed on
/// both endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub node: NodeId,
    pub kind: EdgeKind,
    pub reversed: bool,
}

#[derive(Debug, Clone)]
struct UserState {
    /// First bearer of the current timestamp run; chain tail for Rule 1/3.
    anchor: NodeId,
    /// Timestamp of the current run.
    run_ts: i64,
    /// Same-timestamp joiners after the anchor.
    joiners: Vec<NodeId>,
    /// Most recent lifecycle node by process name.
    by_process: HashMap<String, NodeId>,
    /// Most recent lifecycle node by base file name.
    by_base_file: HashMap<String, NodeId>,
}

/// Append-only provenance graph.
#[derive(Debug, Clone, Default)]
pub struct ProvGraph {
    records: Vec<LogRecord>,
    adjacency: Vec<Vec<Neighbor>>,
    users: HashMap<String, UserState>,
    user_order: Vec<String>,
    edge_counts: [u64; 4],
}

impl ProvGraph {
    pub fn new() -> Self {
        ProvGraph::default()
    }

    pub fn node_count(&self) -> usize {
        self.records.len()
    }

    /// Total edges by kind: sequential, causal, attach, internal.
    pub fn edge_counts(&self) -> [u64; 4] {
        self.edge_counts
    }

    pub fn record(&self, v: NodeId) -> Result<&LogRecord> {
        self.records.get(v.index()).ok_or(Error::UnknownNode(v))
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    /// Adjacency in deterministic insertion order.
    pub fn neighbors(&self, v: NodeId) -> Result<&[Neighbor]> {
        self.adjacency.get(v.index()).map(Vec::as_slice).ok_or(Error::UnknownNode(v))
    }

    /// Users in first-appearance order.
    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.user_order.iter().map(String::as_str)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.records.len() as u32).map(NodeId)
    }

    fn push_undirected(&mut self, a: NodeId, b: NodeId, kind: EdgeKind) {
        debug_assert!(a < b, "edges always attach an earlier node to a newer one");
        self.adjacency[a.index()].push(Neighbor { node: b, kind, reversed: false });
        self.adjacency[b.index()].push(Neighbor { node: a, kind, reversed: false });
        self.edge_counts[edge_slot(kind)] += 1;
    }

    fn push_causal(&mut self, parent: NodeId, child: NodeId) {
        debug_assert!(parent < child);
        self.adjacency[parent.index()].push(Neighbor {
            node: child,
            kind: EdgeKind::Causal,
            reversed: false,
        });
        self.adjacency[child.index()].push(Neighbor {
            node: parent,
            kind: EdgeKind::Causal,
            reversed: true,
        });
        self.edge_counts[edge_slot(EdgeKind::Causal)] += 1;
    }

    /// Appends one record, wiring all four rules. Returns the new node id.
    pub fn add_log(&mut self, rec: LogRecord) -> NodeId {
        let v = NodeId(self.records.len() as u32);
        let timestamp = rec.timestamp;
        let is_lifecycle = PROCESS_LIFECYCLE_EVENTS.contains(&rec.event_id);
        let process_name = rec.process_name.clone();
        let base_file_name = rec.base_file_name.clone();
        let parent_name = rec.parent_process_name.clone();
        let user = rec.user_id.clone();

        self.records.push(rec);
        self.adjacency.push(Vec::new());

        // Rule 2 lookup happens against state prior to this record, so a
        // lifecycle node can never parent itself.
        let causal_parent = if parent_name.is_empty() {
            None
        } else {
            self.users.get(&user).and_then(|st| {
                st.by_process
                    .get(&parent_name)
                    .or_else(|| st.by_base_file.get(&parent_name))
                    .copied()
            })
        };

        match self.users.get_mut(&user) {
            None => {
                self.user_order.push(user.clone());
                self.users.insert(
                    user.clone(),
                    UserState {
                        anchor: v,
                        run_ts: timestamp,
                        joiners: Vec::new(),
                        by_process: HashMap::new(),
                        by_base_file: HashMap::new(),
                    },
                );
            }
            Some(st) => {
                if timestamp != st.run_ts {
                    let prev_anchor = st.anchor;
                    st.anchor = v;
                    st.run_ts = timestamp;
                    st.joiners.clear();
                    self.push_undirected(prev_anchor, v, EdgeKind::Sequential);
                } else {
                    let anchor = st.anchor;
                    let joiners = st.joiners.clone();
                    st.joiners.push(v);
                    self.push_undirected(anchor, v, EdgeKind::ConcurrentAttach);
                    for j in joiners {
                        self.push_undirected(j, v, EdgeKind::ConcurrentInternal);
                    }
                }
            }
        }

        if let Some(parent) = causal_parent {
            self.push_causal(parent, v);
        }

        if is_lifecycle {
            let st = self.users.get_mut(&user).expect("state exists after insert");
            st.by_process.insert(process_name, v);
            if !base_file_name.is_empty() {
                st.by_base_file.insert(base_file_name, v);
            }
        }

        v
    }

    /// Every undirected edge once, plus each Causal edge in parent-to-child
    /// direction. Sorted by construction: src < dst always holds.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, EdgeKind)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(i, nbrs)| {
            let a = NodeId(i as u32);
            nbrs.iter()
                .filter(move |n| a < n.node && !n.reversed)
                .map(move |n| (a, n.node, n.kind))
        })
    }

    /// Edge list dump, one `src dst kind` row per edge.
    pub fn dump_edges<W: Write>(&self, mut w: W) -> Result<()> {
        for (a, b, kind) in self.edges() {
            writeln!(w, "{a} {b} {kind}")?;
        }
        Ok(())
    }

    /// Node table dump as CSV.
    pub fn dump_nodes<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "node_id,user,timestamp,event_id,process_name,base_file_name,logon_type,parent_process_name,record_index"
        )?;
        for (i, r) in self.records.iter().enumerate() {
            writeln!(
                w,
                "{i},{},{},{},{},{},{},{},{}",
                csv_field(&r.user_id),
                r.timestamp,
                r.event_id,
                csv_field(&r.process_name),
                csv_field(&r.base_file_name),
                csv_field(&r.logon_type),
                csv_field(&r.parent_process_name),
                r.source_line.saturating_sub(1),
            )?;
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn edge_slot(kind: EdgeKind) -> usize {
    match kind {
        EdgeKind::Sequential => 0,
        EdgeKind::Causal => 1,
        EdgeKind::ConcurrentAttach => 2,
        EdgeKind::ConcurrentInternal => 3,
    }
}

/// Builds a graph from a batch of records: per-user stable timestamp sort,
/// then fold through [`ProvGraph::add_log`], user by user in first-seen
/// order. Equals streaming insertion of per-user sorted input.
pub fn build_graph(records: Vec<LogRecord>) -> ProvGraph {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<LogRecord>> = HashMap::new();
    for rec in records {
        if !groups.contains_key(&rec.user_id) {
            order.push(rec.user_id.clone());
        }
        groups.entry(rec.user_id.clone()).or_default().push(rec);
    }
    let mut graph = ProvGraph::new();
    for user in order {
        let mut recs = groups.remove(&user).expect("group exists");
        recs.sort_by_key(|r| r.timestamp);
        for rec in recs {
            graph.add_log(rec);
        }
    }
    graph
}
