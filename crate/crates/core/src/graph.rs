//! Structural graph primitives: relatives, moralization, d-separation and
//! minimum vertex separators via max-flow.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};

pub type Node = usize;
pub type NodeSet = BTreeSet<Node>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Digraph {
    parents: Vec<Vec<Node>>,
    children: Vec<Vec<Node>>,
}

impl Digraph {
    pub fn new(n: usize) -> Self {
        Digraph {
            parents: vec![Vec::new(); n],
            children: vec![Vec::new(); n],
        }
    }

    pub fn from_arcs(n: usize, arcs: &[(Node, Node)]) -> Self {
        let mut g = Digraph::new(n);
        for &(a, b) in arcs {
            g.add_arc(a, b);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    /// Self-loops and duplicate arcs are ignored.
    pub fn add_arc(&mut self, from: Node, to: Node) {
        if from == to || self.children[from].contains(&to) {
            return;
        }
        self.children[from].push(to);
        self.parents[to].push(from);
    }

    pub fn parents(&self, v: Node) -> &[Node] {
        &self.parents[v]
    }

    pub fn children(&self, v: Node) -> &[Node] {
        &self.children[v]
    }

    pub fn arcs(&self) -> Vec<(Node, Node)> {
        let mut out = Vec::new();
        for (a, cs) in self.children.iter().enumerate() {
            for &b in cs {
                out.push((a, b));
            }
        }
        out.sort_unstable();
        out
    }

    fn reach(&self, starts: impl IntoIterator<Item = Node>, forward: bool) -> NodeSet {
        let mut seen = NodeSet::new();
        let mut stack: Vec<Node> = starts.into_iter().collect();
        while let Some(v) = stack.pop() {
            let next = if forward {
                &self.children[v]
            } else {
                &self.parents[v]
            };
            for &w in next {
                if seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen
    }

    /// Strict descendants of `v`.
    pub fn descendants(&self, v: Node) -> NodeSet {
        self.reach([v], true)
    }

    /// Strict ancestors of `v`.
    pub fn ancestors(&self, v: Node) -> NodeSet {
        self.reach([v], false)
    }

    /// The set together with all of its ancestors.
    pub fn ancestral_closure(&self, set: &NodeSet) -> NodeSet {
        let mut out = self.reach(set.iter().copied(), false);
        out.extend(set.iter().copied());
        out
    }

    pub fn family(&self, set: &NodeSet) -> NodeSet {
        let mut out = set.clone();
        for &v in set {
            out.extend(self.parents[v].iter().copied());
        }
        out
    }

    pub fn topological_order(&self) -> Option<Vec<Node>> {
        let n = self.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(|p| p.len()).collect();
        let mut ready: BTreeSet<Node> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut out = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            out.push(v);
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        (out.len() == n).then_some(out)
    }

    /// Some directed cycle, if the graph has one.
    pub fn find_cycle(&self) -> Option<Vec<Node>> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let n = self.len();
        let mut state = vec![0u8; n];
        let mut stack: Vec<(Node, usize)> = Vec::new();
        for start in 0..n {
            if state[start] != 0 {
                continue;
            }
            stack.push((start, 0));
            state[start] = 1;
            while let Some(&mut (v, ref mut i)) = stack.last_mut() {
                if *i < self.children[v].len() {
                    let w = self.children[v][*i];
                    *i += 1;
                    match state[w] {
                        0 => {
                            state[w] = 1;
                            stack.push((w, 0));
                        }
                        1 => {
                            let pos = stack.iter().position(|(u, _)| *u == w).unwrap();
                            return Some(stack[pos..].iter().map(|(u, _)| *u).collect());
                        }
                        _ => {}
                    }
                } else {
                    state[v] = 2;
                    stack.pop();
                }
            }
        }
        None
    }

    pub fn induced(&self, keep: &NodeSet) -> Digraph {
        let mut g = Digraph::new(self.len());
        for (a, b) in self.arcs() {
            if keep.contains(&a) && keep.contains(&b) {
                g.add_arc(a, b);
            }
        }
        g
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UGraph {
    adj: Vec<NodeSet>,
}

impl UGraph {
    pub fn new(n: usize) -> Self {
        UGraph {
            adj: vec![NodeSet::new(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn add_edge(&mut self, a: Node, b: Node) {
        if a != b {
            self.adj[a].insert(b);
            self.adj[b].insert(a);
        }
    }

    pub fn has_edge(&self, a: Node, b: Node) -> bool {
        self.adj[a].contains(&b)
    }

    pub fn neighbors(&self, v: Node) -> &NodeSet {
        &self.adj[v]
    }

    pub fn edges(&self) -> Vec<(Node, Node)> {
        let mut out = Vec::new();
        for (a, ns) in self.adj.iter().enumerate() {
            for &b in ns {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Whether some path joins `a` and `b` avoiding `removed`.
    pub fn connected_avoiding(&self, a: &NodeSet, b: &NodeSet, removed: &NodeSet) -> bool {
        let mut seen: NodeSet = a.iter().copied().filter(|v| !removed.contains(v)).collect();
        let mut queue: VecDeque<Node> = seen.iter().copied().collect();
        while let Some(v) = queue.pop_front() {
            if b.contains(&v) {
                return true;
            }
            for &w in &self.adj[v] {
                if !removed.contains(&w) && seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        false
    }
}

/// Undirected graph with every arc as an edge plus edges between co-parents.
pub fn moralize(g: &Digraph) -> UGraph {
    let mut u = UGraph::new(g.len());
    for v in 0..g.len() {
        let ps = g.parents(v);
        for (i, &p) in ps.iter().enumerate() {
            u.add_edge(p, v);
            for &q in &ps[i + 1..] {
                u.add_edge(p, q);
            }
        }
    }
    u
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relatives {
    pub descendants: NodeSet,
    pub non_descendants: NodeSet,
    pub ancestors: NodeSet,
    pub family: NodeSet,
}

pub fn relatives(g: &Digraph, x: Node) -> Result<Relatives> {
    if x >= g.len() {
        return Err(Error::UnknownVariable(format!("node {x}")));
    }
    let descendants = g.descendants(x);
    let non_descendants = (0..g.len())
        .filter(|v| *v != x && !descendants.contains(v))
        .collect();
    let mut family: NodeSet = g.parents(x).iter().copied().collect();
    family.insert(x);
    Ok(Relatives {
        descendants,
        non_descendants,
        ancestors: g.ancestors(x),
        family,
    })
}

/// True iff every trail between `a` and `b` is blocked given `z`.
pub fn d_separated(g: &Digraph, a: &NodeSet, b: &NodeSet, z: &NodeSet) -> Result<bool> {
    if !a.is_disjoint(b) || !a.is_disjoint(z) || !b.is_disjoint(z) {
        return Err(Error::OverlappingSets);
    }
    Ok(d_reachable(g, a, z).is_disjoint(b))
}

/// Nodes reachable from `sources` along active trails given `z`
/// (reachability over (node, direction) pairs).
pub fn d_reachable(g: &Digraph, sources: &NodeSet, z: &NodeSet) -> NodeSet {
    let z_anc = g.ancestral_closure(z);
    // true = arrived from a child (travelling up), false = from a parent
    let mut visited = BTreeSet::new();
    let mut reachable = NodeSet::new();
    let mut queue: VecDeque<(Node, bool)> = sources.iter().map(|&s| (s, true)).collect();
    while let Some((v, up)) = queue.pop_front() {
        if !visited.insert((v, up)) {
            continue;
        }
        if !z.contains(&v) {
            reachable.insert(v);
        }
        if up {
            if !z.contains(&v) {
                for &p in g.parents(v) {
                    queue.push_back((p, true));
                }
                for &c in g.children(v) {
                    queue.push_back((c, false));
                }
            }
        } else {
            if !z.contains(&v) {
                for &c in g.children(v) {
                    queue.push_back((c, false));
                }
            }
            if z_anc.contains(&v) {
                for &p in g.parents(v) {
                    queue.push_back((p, true));
                }
            }
        }
    }
    reachable
}

#[derive(Clone, Debug)]
struct Arc {
    to: Node,
    cap: f64,
    rev: usize,
}

/// Capacitated directed network with designated source and sink.
#[derive(Clone, Debug)]
pub struct FlowNetwork {
    adj: Vec<Vec<Arc>>,
    source: Node,
    sink: Node,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxFlow {
    pub value: f64,
    /// Nodes reachable from the source in the residual network.
    pub source_side: NodeSet,
    /// Nodes that reach the sink in the residual network.
    pub sink_side: NodeSet,
}

impl FlowNetwork {
    pub fn new(n: usize, source: Node, sink: Node) -> Self {
        FlowNetwork {
            adj: vec![Vec::new(); n],
            source,
            sink,
        }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn source(&self) -> Node {
        self.source
    }

    pub fn sink(&self) -> Node {
        self.sink
    }

    /// `cap` may be `f64::INFINITY`.
    pub fn add_arc(&mut self, from: Node, to: Node, cap: f64) {
        assert!(cap >= 0.0, "negative capacity");
        if from == to {
            return;
        }
        let rf = self.adj[to].len();
        let rt = self.adj[from].len();
        self.adj[from].push(Arc { to, cap, rev: rf });
        self.adj[to].push(Arc {
            to: from,
            cap: 0.0,
            rev: rt,
        });
    }

    /// Capacity of arcs (from the original network) leaving `side`.
    pub fn cut_capacity(&self, side: &NodeSet) -> f64 {
        let mut total = 0.0;
        for &u in side {
            for a in &self.adj[u] {
                if !side.contains(&a.to) {
                    total += a.cap;
                }
            }
        }
        total
    }
}

/// Edmonds-Karp; BFS scans arcs in ascending target order, so the result is deterministic.
pub fn max_flow(net: &FlowNetwork) -> MaxFlow {
    let mut res = net.clone();
    let n = res.adj.len();
    let order: Vec<Vec<usize>> = res
        .adj
        .iter()
        .map(|arcs| {
            let mut idx: Vec<usize> = (0..arcs.len()).collect();
            idx.sort_by_key(|&i| arcs[i].to);
            idx
        })
        .collect();

    let (s, t) = (res.source, res.sink);
    let mut value = 0.0;
    loop {
        let mut prev: Vec<Option<(Node, usize)>> = vec![None; n];
        let mut queue = VecDeque::from([s]);
        let mut seen = vec![false; n];
        seen[s] = true;
        while let Some(u) = queue.pop_front() {
            if u == t {
                break;
            }
            for &i in &order[u] {
                let a = &res.adj[u][i];
                if a.cap > 0.0 && !seen[a.to] {
                    seen[a.to] = true;
                    prev[a.to] = Some((u, i));
                    queue.push_back(a.to);
                }
            }
        }
        if !seen[t] || s == t {
            break;
        }
        let mut bottleneck = f64::INFINITY;
        let mut v = t;
        while let Some((u, i)) = prev[v] {
            bottleneck = bottleneck.min(res.adj[u][i].cap);
            v = u;
        }
        if bottleneck.is_infinite() {
            value = f64::INFINITY;
            break;
        }
        let mut v = t;
        while let Some((u, i)) = prev[v] {
            res.adj[u][i].cap -= bottleneck;
            let r = res.adj[u][i].rev;
            res.adj[v][r].cap += bottleneck;
            v = u;
        }
        value += bottleneck;
    }

    let mut source_side = NodeSet::from([s]);
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        for a in &res.adj[u] {
            if a.cap > 0.0 && source_side.insert(a.to) {
                queue.push_back(a.to);
            }
        }
    }
    // u reaches t iff some residual arc u->w has w reaching t
    let mut sink_side = NodeSet::from([t]);
    let mut queue = VecDeque::from([t]);
    while let Some(w) = queue.pop_front() {
        for a in &res.adj[w] {
            // a: w -> a.to; its twin a.to -> w has residual res.adj[a.to][a.rev].cap
            let u = a.to;
            if res.adj[u][a.rev].cap > 0.0 && sink_side.insert(u) {
                queue.push_back(u);
            }
        }
    }
    MaxFlow {
        value,
        source_side,
        sink_side,
    }
}

/// Minimum vertex separator of `a` and `b` that contains `fixed`, using only
/// `candidates` (plus `fixed`) as removable nodes. Among minimum separators the
/// one closest to `b` is returned.
pub fn min_separating_set_within(
    g: &UGraph,
    a: &NodeSet,
    b: &NodeSet,
    fixed: &NodeSet,
    candidates: &NodeSet,
) -> Result<NodeSet> {
    let n = g.len();
    // v_in = 2v, v_out = 2v + 1
    let (source, sink) = (2 * n, 2 * n + 1);
    let mut net = FlowNetwork::new(2 * n + 2, source, sink);
    for v in 0..n {
        let cap = if fixed.contains(&v) {
            0.0
        } else if candidates.contains(&v) {
            1.0
        } else {
            f64::INFINITY
        };
        net.add_arc(2 * v, 2 * v + 1, cap);
    }
    for (u, v) in g.edges() {
        net.add_arc(2 * u + 1, 2 * v, f64::INFINITY);
        net.add_arc(2 * v + 1, 2 * u, f64::INFINITY);
    }
    for &v in a {
        net.add_arc(source, 2 * v, f64::INFINITY);
    }
    for &v in b {
        net.add_arc(2 * v + 1, sink, f64::INFINITY);
    }
    let flow = max_flow(&net);
    if flow.value.is_infinite() {
        return Err(Error::Infeasible);
    }
    let mut sep = fixed.clone();
    for v in 0..n {
        if !fixed.contains(&v)
            && !flow.sink_side.contains(&(2 * v))
            && flow.sink_side.contains(&(2 * v + 1))
        {
            sep.insert(v);
        }
    }
    Ok(sep)
}

/// Minimum-cardinality node set `S ⊇ fixed`, disjoint from `a ∪ b`, whose
/// removal disconnects `a` from `b`.
pub fn min_separating_set(
    g: &UGraph,
    a: &NodeSet,
    b: &NodeSet,
    fixed: &NodeSet,
) -> Result<NodeSet> {
    if !a.is_disjoint(b) || !fixed.is_disjoint(a) || !fixed.is_disjoint(b) {
        return Err(Error::OverlappingSets);
    }
    let candidates: NodeSet = (0..g.len())
        .filter(|v| !a.contains(v) && !b.contains(v))
        .collect();
    min_separating_set_within(g, a, b, fixed, &candidates)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[Node]) -> NodeSet {
        v.iter().copied().collect()
    }

    #[test]
    fn moralize_chain_and_collider() {
        let chain = Digraph::from_arcs(3, &[(0, 1), (1, 2)]);
        assert_eq!(moralize(&chain).edges(), vec![(0, 1), (1, 2)]);
        let collider = Digraph::from_arcs(3, &[(0, 1), (2, 1)]);
        assert_eq!(moralize(&collider).edges(), vec![(0, 1), (0, 2), (1, 2)]);
        assert!(moralize(&Digraph::new(0)).edges().is_empty());
    }

    #[test]
    fn relatives_of_chain_and_isolated() {
        let chain = Digraph::from_arcs(3, &[(0, 1), (1, 2)]);
        let r = relatives(&chain, 0).unwrap();
        assert_eq!(r.descendants, set(&[1, 2]));
        assert_eq!(relatives(&chain, 2).unwrap().family, set(&[1, 2]));
        let g = Digraph::from_arcs(3, &[(0, 1)]);
        let r = relatives(&g, 2).unwrap();
        assert!(r.descendants.is_empty());
        assert_eq!(r.non_descendants, set(&[0, 1]));
        assert!(relatives(&g, 7).is_err());
    }

    #[test]
    fn d_separation_basics() {
        let chain = Digraph::from_arcs(3, &[(0, 1), (1, 2)]);
        assert!(d_separated(&chain, &set(&[0]), &set(&[2]), &set(&[1])).unwrap());
        assert!(!d_separated(&chain, &set(&[0]), &set(&[2]), &set(&[])).unwrap());
        let collider = Digraph::from_arcs(3, &[(0, 1), (2, 1)]);
        assert!(d_separated(&collider, &set(&[0]), &set(&[2]), &set(&[])).unwrap());
        assert!(!d_separated(&collider, &set(&[0]), &set(&[2]), &set(&[1])).unwrap());
        // descendant of the collider opens it too
        let g = Digraph::from_arcs(4, &[(0, 1), (2, 1), (1, 3)]);
        assert!(!d_separated(&g, &set(&[0]), &set(&[2]), &set(&[3])).unwrap());
        assert!(matches!(
            d_separated(&chain, &set(&[0]), &set(&[0]), &set(&[])),
            Err(Error::OverlappingSets)
        ));
    }

    #[test]
    fn max_flow_small_networks() {
        let mut net = FlowNetwork::new(2, 0, 1);
        net.add_arc(0, 1, 3.0);
        assert_eq!(max_flow(&net).value, 3.0);
        let mut net = FlowNetwork::new(4, 0, 3);
        for (a, b) in [(0, 1), (1, 3), (0, 2), (2, 3)] {
            net.add_arc(a, b, 1.0);
        }
        let f = max_flow(&net);
        assert_eq!(f.value, 2.0);
        assert_eq!(net.cut_capacity(&f.source_side), 2.0);
    }

    #[test]
    fn separators_path_and_diamond() {
        let mut path = UGraph::new(3);
        path.add_edge(0, 1);
        path.add_edge(1, 2);
        assert_eq!(
            min_separating_set(&path, &set(&[0]), &set(&[2]), &set(&[])).unwrap(),
            set(&[1])
        );
        let mut diamond = UGraph::new(4);
        for (a, b) in [(0, 1), (1, 3), (0, 2), (2, 3)] {
            diamond.add_edge(a, b);
        }
        assert_eq!(
            min_separating_set(&diamond, &set(&[0]), &set(&[3]), &set(&[])).unwrap(),
            set(&[1, 2])
        );
        let mut adjacent = UGraph::new(2);
        adjacent.add_edge(0, 1);
        assert!(matches!(
            min_separating_set(&adjacent, &set(&[0]), &set(&[1]), &set(&[])),
            Err(Error::Infeasible)
        ));
    }

    #[test]
    fn separator_prefers_sink_side() {
        // a - m1 - m2 - b : both {m1} and {m2} are minimum; m2 is closer to b
        let mut g = UGraph::new(4);
        g.add_edge(0, 1);
        g.add_edge(1, 2);
        g.add_edge(2, 3);
        assert_eq!(
            min_separating_set(&g, &set(&[0]), &set(&[3]), &set(&[])).unwrap(),
            set(&[2])
        );
    }

    #[test]
    fn fixed_nodes_are_always_included() {
        let mut g = UGraph::new(4);
        g.add_edge(0, 1);
        g.add_edge(1, 3);
        g.add_edge(0, 2);
        assert_eq!(
            min_separating_set(&g, &set(&[0]), &set(&[3]), &set(&[2])).unwrap(),
            set(&[1, 2])
        );
    }
}
