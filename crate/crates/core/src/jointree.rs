//! Strong join trees built by constrained elimination.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::UGraph;
use crate::model::{InfluenceDiagram, PartialOrder, VarId, VarKind};
use crate::potential::{for_each_projected, strides_within, Potential};

/// Default cap on the total number of clique and separator entries.
pub const DEFAULT_MEMORY_BUDGET: usize = 64_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Clique {
    pub id: usize,
    /// Ascending by id.
    pub vars: Vec<VarId>,
    pub phi: Potential,
    pub psi: Potential,
}

impl Clique {
    pub fn contains(&self, v: VarId) -> bool {
        self.vars.binary_search(&v).is_ok()
    }

    pub fn size(&self) -> usize {
        self.phi.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    /// The endpoint farther from the root.
    pub child: usize,
    pub parent: usize,
    /// `child ∩ parent`, ascending.
    pub vars: Vec<VarId>,
}

#[derive(Clone, Debug)]
pub struct StrongJoinTree {
    pub cliques: Vec<Clique>,
    pub edges: Vec<Edge>,
    pub root: usize,
    /// Edge index toward the root, `None` for the root.
    pub up_edge: Vec<Option<usize>>,
    /// `(neighbor, edge index)` per clique, ascending by neighbor.
    pub adjacency: Vec<Vec<(usize, usize)>>,
    pub order: PartialOrder,
    /// Per variable of the diagram.
    pub kinds: Vec<VarKind>,
    pub cards: Vec<usize>,
    pub names: Vec<String>,
    /// Host clique of every CPT and utility table.
    pub hosts: Vec<(VarId, usize)>,
}

/// Groups in reverse `≺`, min-fill inside a group, ties by ascending id.
pub fn strong_elimination_order(id: &InfluenceDiagram, po: &PartialOrder) -> Vec<VarId> {
    eliminate(id, po).0
}

fn moral_graph(id: &InfluenceDiagram) -> UGraph {
    let mut g = UGraph::new(id.len());
    let mut family = |members: Vec<VarId>| {
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                g.add_edge(a.0, b.0);
            }
        }
    };
    for v in id.variables() {
        match v.kind {
            VarKind::Chance => {
                let mut f = v.parents.clone();
                f.push(v.id);
                family(f);
            }
            VarKind::Utility => family(v.parents.clone()),
            VarKind::Decision => {}
        }
    }
    g
}

/// Elimination order and the elimination clique of each step.
fn eliminate(id: &InfluenceDiagram, po: &PartialOrder) -> (Vec<VarId>, Vec<BTreeSet<usize>>) {
    let mut g = moral_graph(id);
    let mut alive = vec![false; id.len()];
    for v in id.variables() {
        alive[v.id.0] = v.kind != VarKind::Utility;
    }
    let mut order = Vec::new();
    let mut cliques = Vec::new();
    for group in po.groups().iter().rev() {
        let mut remaining: BTreeSet<usize> = group.iter().map(|v| v.0).collect();
        while !remaining.is_empty() {
            let pick = *remaining
                .iter()
                .min_by_key(|&&v| (fill_in(&g, &alive, v), v))
                .unwrap();
            remaining.remove(&pick);
            let nbrs: Vec<usize> = g
                .neighbors(pick)
                .iter()
                .copied()
                .filter(|n| alive[*n])
                .collect();
            for (i, a) in nbrs.iter().enumerate() {
                for b in &nbrs[i + 1..] {
                    g.add_edge(*a, *b);
                }
            }
            let mut c: BTreeSet<usize> = nbrs.into_iter().collect();
            c.insert(pick);
            alive[pick] = false;
            order.push(VarId(pick));
            cliques.push(c);
        }
    }
    (order, cliques)
}

fn fill_in(g: &UGraph, alive: &[bool], v: usize) -> usize {
    let nbrs: Vec<usize> = g
        .neighbors(v)
        .iter()
        .copied()
        .filter(|n| alive[*n])
        .collect();
    let mut fill = 0;
    for (i, a) in nbrs.iter().enumerate() {
        for b in &nbrs[i + 1..] {
            if !g.has_edge(*a, *b) {
                fill += 1;
            }
        }
    }
    fill
}

pub fn build_strong_join_tree(id: &InfluenceDiagram, po: &PartialOrder) -> Result<StrongJoinTree> {
    build_strong_join_tree_with_budget(id, po, DEFAULT_MEMORY_BUDGET)
}

/// As [`build_strong_join_tree`], refusing trees whose tables would hold
/// more than `budget` entries in total.
pub fn build_strong_join_tree_with_budget(
    id: &InfluenceDiagram,
    po: &PartialOrder,
    budget: usize,
) -> Result<StrongJoinTree> {
    let (order, elim) = eliminate(id, po);
    let n = elim.len();
    if n == 0 {
        return Err(Error::Assignment(Vec::new()));
    }
    let mut step = vec![usize::MAX; id.len()];
    for (i, v) in order.iter().enumerate() {
        step[v.0] = i;
    }
    // Elimination tree: parent of step i is the step of the earliest
    // eliminated variable in C_i \ {v_i}.
    let mut parent: Vec<Option<usize>> = (0..n)
        .map(|i| {
            elim[i]
                .iter()
                .filter(|v| **v != order[i].0)
                .map(|v| step[*v])
                .min()
        })
        .collect();
    let mut live = vec![true; n];
    let mut root = n.saturating_sub(1);
    let mut changed = true;
    while changed {
        changed = false;
        for c in 0..n {
            if !live[c] {
                continue;
            }
            let Some(p) = parent[c] else { continue };
            if elim[c].is_subset(&elim[p]) {
                for k in 0..n {
                    if live[k] && parent[k] == Some(c) {
                        parent[k] = Some(p);
                    }
                }
                live[c] = false;
                changed = true;
            } else if elim[p].is_subset(&elim[c]) {
                parent[c] = parent[p];
                for k in 0..n {
                    if live[k] && k != c && parent[k] == Some(p) {
                        parent[k] = Some(c);
                    }
                }
                live[p] = false;
                if root == p {
                    root = c;
                }
                changed = true;
            }
        }
    }
    let kept: Vec<usize> = (0..n).filter(|c| live[*c]).collect();
    let mut dense = vec![usize::MAX; n];
    for (i, c) in kept.iter().enumerate() {
        dense[*c] = i;
    }

    let cards: Vec<usize> = id.variables().iter().map(|v| v.card()).collect();
    let scopes: Vec<Vec<VarId>> = kept
        .iter()
        .map(|c| elim[*c].iter().map(|v| VarId(*v)).collect())
        .collect();
    let mut edges = Vec::new();
    for &c in &kept {
        let p = match parent[c] {
            Some(p) => dense[p],
            None if c == root => continue,
            None => dense[root],
        };
        let child = dense[c];
        let vars = scopes[child]
            .iter()
            .copied()
            .filter(|v| scopes[p].contains(v))
            .collect();
        edges.push(Edge {
            child,
            parent: p,
            vars,
        });
    }

    let table_size = |vars: &[VarId]| {
        vars.iter()
            .fold(1usize, |acc, v| acc.saturating_mul(cards[v.0]))
    };
    let needed = scopes
        .iter()
        .map(|s| table_size(s).saturating_mul(2))
        .chain(edges.iter().map(|e| table_size(&e.vars).saturating_mul(2)))
        .fold(0usize, |a, b| a.saturating_add(b));
    if needed > budget {
        return Err(Error::MemoryBudget { needed, budget });
    }

    let m = kept.len();
    let mut up_edge = vec![None; m];
    let mut adjacency = vec![Vec::new(); m];
    for (k, e) in edges.iter().enumerate() {
        up_edge[e.child] = Some(k);
        adjacency[e.child].push((e.parent, k));
        adjacency[e.parent].push((e.child, k));
    }
    for a in &mut adjacency {
        a.sort_unstable();
    }
    let mut cliques: Vec<Clique> = scopes
        .into_iter()
        .enumerate()
        .map(|(i, vars)| {
            let cs: Vec<usize> = vars.iter().map(|v| cards[v.0]).collect();
            Clique {
                id: i,
                phi: Potential::filled(vars.clone(), cs.clone(), 1.0),
                psi: Potential::filled(vars.clone(), cs, 0.0),
                vars,
            }
        })
        .collect();

    let mut hosts = Vec::new();
    for (v, table) in id.cpts().chain(id.utilities()) {
        let host = smallest_host(&cliques, table.vars())
            .ok_or_else(|| Error::Assignment(table.vars().to_vec()))?;
        let c = &mut cliques[host];
        let target = strides_within(table.vars(), table.cards(), &c.vars);
        let src = table.values();
        if id.kind(v) == VarKind::Utility {
            let psi = c.psi.values_mut();
            for_each_projected(&cards_of(&c.vars, &cards), &target, |i, o| psi[i] += src[o]);
        } else {
            let phi = c.phi.values_mut();
            for_each_projected(&cards_of(&c.vars, &cards), &target, |i, o| phi[i] *= src[o]);
        }
        hosts.push((v, host));
    }

    Ok(StrongJoinTree {
        cliques,
        edges,
        root: dense[root],
        up_edge,
        adjacency,
        order: po.clone(),
        kinds: id.variables().iter().map(|v| v.kind).collect(),
        cards,
        names: id.variables().iter().map(|v| v.name.clone()).collect(),
        hosts,
    })
}

fn cards_of(vars: &[VarId], cards: &[usize]) -> Vec<usize> {
    vars.iter().map(|v| cards[v.0]).collect()
}

fn smallest_host(cliques: &[Clique], scope: &[VarId]) -> Option<usize> {
    cliques
        .iter()
        .filter(|c| scope.iter().all(|v| c.contains(*v)))
        .min_by_key(|c| (c.size(), c.id))
        .map(|c| c.id)
}

impl StrongJoinTree {
    pub fn len(&self) -> usize {
        self.cliques.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cliques.is_empty()
    }

    pub fn max_clique_size(&self) -> usize {
        self.cliques.iter().map(|c| c.vars.len()).max().unwrap_or(0)
    }

    pub fn total_entries(&self) -> usize {
        self.cliques.iter().map(Clique::size).sum()
    }

    pub fn parent(&self, c: usize) -> Option<usize> {
        self.up_edge[c].map(|e| self.edges[e].parent)
    }

    pub fn depth(&self, mut c: usize) -> usize {
        let mut d = 0;
        while let Some(p) = self.parent(c) {
            c = p;
            d += 1;
        }
        d
    }

    /// Cliques on the tree path from `a` to `b`, both included.
    pub fn path(&self, a: usize, b: usize) -> Vec<usize> {
        let (mut x, mut y) = (a, b);
        let (mut left, mut right) = (vec![x], vec![y]);
        let (mut dx, mut dy) = (self.depth(x), self.depth(y));
        while dx > dy {
            x = self.parent(x).unwrap();
            left.push(x);
            dx -= 1;
        }
        while dy > dx {
            y = self.parent(y).unwrap();
            right.push(y);
            dy -= 1;
        }
        while x != y {
            x = self.parent(x).unwrap();
            y = self.parent(y).unwrap();
            left.push(x);
            right.push(y);
        }
        right.pop();
        left.extend(right.into_iter().rev());
        left
    }

    /// Tree distance from `from` to every clique.
    pub fn distances(&self, from: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.len()];
        dist[from] = 0;
        let mut queue = VecDeque::from([from]);
        while let Some(c) = queue.pop_front() {
            for &(n, _) in &self.adjacency[c] {
                if dist[n] == usize::MAX {
                    dist[n] = dist[c] + 1;
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// The clique containing `var` closest to `from`, ties by lowest id.
    pub fn nearest_containing(&self, from: usize, var: VarId) -> Option<usize> {
        let dist = self.distances(from);
        self.cliques
            .iter()
            .filter(|c| c.contains(var))
            .min_by_key(|c| (dist[c.id], c.id))
            .map(|c| c.id)
    }

    pub fn host_of(&self, table: VarId) -> Option<usize> {
        self.hosts
            .iter()
            .find(|(v, _)| *v == table)
            .map(|(_, c)| *c)
    }

    /// For every pair of cliques, their intersection lies in every clique
    /// on the path between them.
    pub fn has_running_intersection(&self) -> bool {
        for a in 0..self.len() {
            for b in a + 1..self.len() {
                let common: Vec<VarId> = self.cliques[a]
                    .vars
                    .iter()
                    .copied()
                    .filter(|v| self.cliques[b].contains(*v))
                    .collect();
                if common.is_empty() {
                    continue;
                }
                for c in self.path(a, b) {
                    if !common.iter().all(|v| self.cliques[c].contains(*v)) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// No separator variable comes after a variable of `child \ parent`.
    pub fn has_strong_root(&self) -> bool {
        self.edges.iter().all(|e| {
            let child = &self.cliques[e.child];
            let parent = &self.cliques[e.parent];
            e.vars.iter().all(|s| {
                child
                    .vars
                    .iter()
                    .filter(|v| !parent.contains(**v))
                    .all(|v| self.order.rank(*s) <= self.order.rank(*v))
            })
        })
    }

    /// One clique per line: id, variables, the edge toward the root.
    pub fn dump(&self) -> String {
        let names = |vs: &[VarId]| {
            vs.iter()
                .map(|v| self.names[v.0].as_str())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let mut out = String::new();
        for c in &self.cliques {
            let _ = write!(out, "C{} {{{}}}", c.id, names(&c.vars));
            match self.up_edge[c.id] {
                Some(e) => {
                    let _ = write!(
                        out,
                        " -> C{} sep {{{}}}",
                        self.edges[e].parent,
                        names(&self.edges[e].vars)
                    );
                }
                None => out.push_str(" root"),
            }
            out.push('\n');
        }
        out
    }
}
