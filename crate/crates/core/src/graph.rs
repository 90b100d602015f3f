//! The FDF graph over ports, acyclicity checking and topological numbering.

use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

use crate::ir::{BoxIndex, Direction, Pipeline, PortId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FdfGraph {
    edges: BTreeSet<(PortId, PortId)>,
    succ: Vec<Vec<PortId>>,
    /// Tie-break key per port: (owning box index, declaration slot).
    keys: Vec<(BoxIndex, u32)>,
    topo: Option<Vec<PortId>>,
}

/// A directed cycle, listed from its smallest port.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleWitness(pub Vec<PortId>);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("the FDF graph has a cycle through ports {0:?}")]
    NotADag(Vec<PortId>),
}

impl FdfGraph {
    pub fn port_count(&self) -> usize {
        self.succ.len()
    }

    pub fn edges(&self) -> &BTreeSet<(PortId, PortId)> {
        &self.edges
    }

    pub fn successors(&self, p: PortId) -> &[PortId] {
        &self.succ[p.index()]
    }

    pub fn in_degree(&self, p: PortId) -> usize {
        self.edges.iter().filter(|(_, q)| *q == p).count()
    }

    pub fn out_degree(&self, p: PortId) -> usize {
        self.succ[p.index()].len()
    }

    /// Topological order, present once [`check_well_formed`] succeeded.
    pub fn topo(&self) -> Option<&[PortId]> {
        self.topo.as_deref()
    }

    /// Build a bare graph from an edge list, with tie-break keys equal to port ids.
    pub fn from_edges(port_count: usize, edges: impl IntoIterator<Item = (PortId, PortId)>) -> Self {
        let mut g = FdfGraph {
            edges: BTreeSet::new(),
            succ: vec![Vec::new(); port_count],
            keys: (0..port_count).map(|i| (0, i as u32)).collect(),
            topo: None,
        };
        for e in edges {
            g.insert(e);
        }
        g
    }

    fn insert(&mut self, (p, q): (PortId, PortId)) {
        if self.edges.insert((p, q)) {
            let list = &mut self.succ[p.index()];
            let at = list.partition_point(|x| *x < q);
            list.insert(at, q);
        }
    }
}

/// Inter-box edges `(σ(q), q)` plus complete input→output edges inside every
/// explicit box. Dangling inputs contribute no inter-box edge.
pub fn build_graph(pipeline: &Pipeline) -> FdfGraph {
    let m = pipeline.port_count();
    let mut g = FdfGraph {
        edges: BTreeSet::new(),
        succ: vec![Vec::new(); m],
        keys: pipeline.ports().iter().map(|p| (p.owner, p.slot)).collect(),
        topo: None,
    };
    for (q, p) in pipeline.wiring() {
        let ok = |x: &PortId| x.0 >= 1 && x.index() < m;
        if ok(p) && ok(q) && pipeline.ports()[p.index()].direction == Direction::Output {
            g.insert((*p, *q));
        }
    }
    for (_, b) in pipeline.explicit_boxes() {
        for i in b.inputs() {
            for o in b.outputs() {
                g.insert((i, o));
            }
        }
    }
    g
}

/// Kahn's algorithm with a FIFO frontier; ports released by the same pop are
/// enqueued in (box declaration, port declaration) order. On success the
/// order is stored in `g`; otherwise a cycle among the unordered ports is returned.
pub fn check_well_formed(g: &mut FdfGraph) -> Result<(), CycleWitness> {
    let n = g.port_count();
    let mut indeg = vec![0usize; n];
    for (_, q) in &g.edges {
        indeg[q.index()] += 1;
    }
    let mut initial: Vec<PortId> = (1..=n as u32).map(PortId).filter(|p| indeg[p.index()] == 0).collect();
    initial.sort_by_key(|p| g.keys[p.index()]);
    let mut queue: VecDeque<PortId> = initial.into();
    let mut order = Vec::with_capacity(n);
    let mut released = Vec::new();
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &v in &g.succ[u.index()] {
            indeg[v.index()] -= 1;
            if indeg[v.index()] == 0 {
                released.push(v);
            }
        }
        released.sort_by_key(|p| g.keys[p.index()]);
        queue.extend(released.drain(..));
    }
    if order.len() == n {
        g.topo = Some(order);
        return Ok(());
    }
    g.topo = None;
    let mut remaining = vec![false; n];
    for (i, d) in indeg.iter().enumerate() {
        remaining[i] = *d > 0;
    }
    Err(smallest_cycle(g, &remaining))
}

/// DFS over the ports left behind by Kahn; every back edge closes a cycle.
/// Returns the lexicographically smallest of the cycles found.
fn smallest_cycle(g: &FdfGraph, remaining: &[bool]) -> CycleWitness {
    const WHITE: u8 = 0;
    const GREY: u8 = 1;
    const BLACK: u8 = 2;
    let n = g.port_count();
    let mut color = vec![WHITE; n];
    let mut best: Option<Vec<PortId>> = None;
    for start in 0..n {
        if !remaining[start] || color[start] != WHITE {
            continue;
        }
        // (node, next successor index)
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        color[start] = GREY;
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            let succ = &g.succ[u];
            if *next < succ.len() {
                let v = succ[*next].index();
                *next += 1;
                if !remaining[v] {
                    continue;
                }
                match color[v] {
                    WHITE => {
                        color[v] = GREY;
                        stack.push((v, 0));
                    }
                    GREY => {
                        let from = stack.iter().position(|(x, _)| *x == v).expect("grey node is on the stack");
                        let mut cycle: Vec<PortId> = stack[from..].iter().map(|(x, _)| PortId(*x as u32 + 1)).collect();
                        let min_at = cycle.iter().enumerate().min_by_key(|(_, p)| **p).map(|(i, _)| i).unwrap_or(0);
                        cycle.rotate_left(min_at);
                        if best.as_ref().is_none_or(|b| cycle < *b) {
                            best = Some(cycle);
                        }
                    }
                    _ => {}
                }
            } else {
                color[u] = BLACK;
                stack.pop();
            }
        }
    }
    CycleWitness(best.expect("ports left over by Kahn's algorithm always contain a cycle"))
}

/// Renumber ports along the stored topological order.
pub fn renumber(pipeline: &Pipeline, g: &FdfGraph) -> Result<Pipeline, GraphError> {
    let mut g = g.clone();
    if g.topo.is_none() {
        if let Err(CycleWitness(c)) = check_well_formed(&mut g) {
            return Err(GraphError::NotADag(c));
        }
    }
    let order = g.topo.as_ref().expect("checked above");
    Ok(pipeline.renumbered(order))
}

/// Explicit boxes wired directly into `b`.
pub fn direct_predecessors(pipeline: &Pipeline, b: BoxIndex) -> BTreeSet<BoxIndex> {
    let decl = pipeline.box_decl(b);
    decl.inputs()
        .filter_map(|q| pipeline.wiring().get(&q))
        .filter_map(|p| pipeline.port(*p).ok())
        .map(|p| p.owner)
        .filter(|owner| !pipeline.box_decl(*owner).kind.is_implicit())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::tests::minimal_by_hand;

    fn ids(pairs: &[(u32, u32)]) -> BTreeSet<(PortId, PortId)> {
        pairs.iter().map(|(a, b)| (PortId(*a), PortId(*b))).collect()
    }

    #[test]
    fn minimal_edges_match() {
        let g = build_graph(&minimal_by_hand());
        let expected = ids(&[
            (1, 3),
            (1, 4),
            (2, 5),
            (6, 8),
            (6, 9),
            (7, 10),
            (11, 12),
            (13, 14),
            (3, 6),
            (3, 7),
            (4, 11),
            (9, 11),
            (5, 13),
            (12, 13),
            (13, 14),
        ]);
        assert_eq!(g.edges(), &expected);
        assert_eq!(g.edges().len(), 14);
    }

    #[test]
    fn implicit_boundaries_have_no_outside_neighbours() {
        let p = minimal_by_hand();
        let g = build_graph(&p);
        for s in p.sources() {
            assert_eq!(g.in_degree(*s), 0);
        }
        for e in p.exports() {
            assert_eq!(g.out_degree(*e), 0);
        }
    }

    #[test]
    fn minimal_topological_order_is_identity() {
        let p = minimal_by_hand();
        let mut g = build_graph(&p);
        check_well_formed(&mut g).unwrap();
        let topo: Vec<u32> = g.topo().unwrap().iter().map(|p| p.0).collect();
        assert_eq!(topo, (1..=14).collect::<Vec<_>>());
        assert_eq!(renumber(&p, &g).unwrap(), p);
    }

    #[test]
    fn empty_graph_is_well_formed() {
        let mut g = FdfGraph::from_edges(0, []);
        assert!(check_well_formed(&mut g).is_ok());
        assert_eq!(g.topo(), Some(&[][..]));
    }

    #[test]
    fn cycle_witness_is_smallest_rotation() {
        // 1 -> 2 -> 3 -> 1 and 4 -> 5 -> 4
        let mut g =
            FdfGraph::from_edges(5, [(1, 2), (2, 3), (3, 1), (4, 5), (5, 4)].map(|(a, b)| (PortId(a), PortId(b))));
        let w = check_well_formed(&mut g).unwrap_err();
        assert_eq!(w.0, vec![PortId(1), PortId(2), PortId(3)]);
        assert!(g.topo().is_none());
    }

    #[test]
    fn predecessors_follow_wiring() {
        let p = minimal_by_hand();
        let idx = |id| p.box_index(id).unwrap();
        assert_eq!(direct_predecessors(&p, idx("b2")), BTreeSet::from([idx("b1")]));
        assert!(direct_predecessors(&p, idx("b1")).is_empty());
        assert_eq!(direct_predecessors(&p, idx("b3")), BTreeSet::from([idx("b2")]));
    }
}
