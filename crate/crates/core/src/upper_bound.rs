//! Upper-bound influence diagrams: each decision gets a minimum sufficient
//! information set as extra parents, then non-requisite information arcs
//! are deleted.
//!
//! Decisions are indexed from 0 in `decision_order`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::graph::{d_reachable, d_separated, min_separating_set_within, moralize, NodeSet};
use crate::model::{InfluenceDiagram, VarId, VarKind};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SisResult {
    pub decision: VarId,
    pub sis: BTreeSet<VarId>,
    pub candidate_pool: BTreeSet<VarId>,
    /// `(from, decision)` arcs added for the SIS.
    pub added_arcs: Vec<(VarId, VarId)>,
    /// `(from, decision)` arcs deleted as non-requisite.
    pub removed_arcs: Vec<(VarId, VarId)>,
}

fn nodes(vs: impl IntoIterator<Item = VarId>) -> NodeSet {
    vs.into_iter().map(|v| v.0).collect()
}

fn vars(ns: &NodeSet) -> BTreeSet<VarId> {
    ns.iter().map(|n| VarId(*n)).collect()
}

/// Utility nodes among the descendants of `d`.
fn utility_descendants(id: &InfluenceDiagram, d: VarId) -> NodeSet {
    id.digraph()
        .descendants(d.0)
        .into_iter()
        .filter(|v| id.kind(VarId(*v)) == VarKind::Utility)
        .collect()
}

fn family(id: &InfluenceDiagram, d: VarId) -> NodeSet {
    let mut f = nodes(id.parents(d).iter().copied());
    f.insert(d.0);
    f
}

/// Whether the information arc `info -> decision` can influence the
/// decision's utility descendants given the decision's other parents.
pub fn is_requisite(id: &InfluenceDiagram, decision: VarId, info: VarId) -> Result<bool> {
    if !id.parents(decision).contains(&info) {
        return Err(Error::NotAParent { info, decision });
    }
    let targets = utility_descendants(id, decision);
    if targets.is_empty() {
        return Ok(false);
    }
    let mut z = family(id, decision);
    z.remove(&info.0);
    Ok(!d_separated(&id.digraph(), &nodes([info]), &targets, &z)?)
}

/// Deletes non-requisite information arcs, last decision first and parents
/// by ascending id, until none is left.
pub fn reduce(id: &InfluenceDiagram) -> InfluenceDiagram {
    reduce_logged(id).0
}

fn reduce_logged(id: &InfluenceDiagram) -> (InfluenceDiagram, Vec<(VarId, VarId)>) {
    let mut cur = id.clone();
    let mut removed = Vec::new();
    loop {
        let mut changed = false;
        for &d in id.decision_order().iter().rev() {
            let mut parents: Vec<VarId> = cur.parents(d).to_vec();
            parents.sort();
            for p in parents {
                if !is_requisite(&cur, d, p).expect("p is a parent of d") {
                    cur = cur.without_information_arc(d, p);
                    removed.push((p, d));
                    changed = true;
                }
            }
        }
        if !changed {
            return (cur, removed);
        }
    }
}

/// Search domain `B_j`: for the last decision every non-utility variable;
/// otherwise the variables d-separated from `U ∩ de(D_j)` by `fa(D_i)` for
/// every later decision `D_i` (members of `fa(D_i)` count as separated).
pub fn candidate_pool(id: &InfluenceDiagram, j: usize) -> BTreeSet<VarId> {
    let order = id.decision_order();
    let non_utility = || {
        id.variables()
            .iter()
            .filter(|v| v.kind != VarKind::Utility)
            .map(|v| v.id)
    };
    let mut pool: BTreeSet<VarId> = non_utility().collect();
    if j + 1 == order.len() {
        return pool;
    }
    let g = id.digraph();
    let targets = utility_descendants(id, order[j]);
    for &di in &order[j + 1..] {
        let z = family(id, di);
        let reach = d_reachable(&g, &targets, &z);
        pool.retain(|v| z.contains(&v.0) || !reach.contains(&v.0));
    }
    pool
}

/// Minimum sufficient information set of the `j`-th decision in `id`,
/// which should already carry the SIS arcs of every later decision.
///
/// When no separator exists inside `B_j` (a later decision whose family
/// was reduced to itself screens almost nothing), the search domain widens
/// to every non-utility variable; `candidate_pool` reports the domain used.
pub fn compute_sis(id: &InfluenceDiagram, j: usize) -> Result<SisResult> {
    match sis_within(id, j, candidate_pool(id, j)) {
        Err(Error::Infeasible) => {
            let all = id
                .variables()
                .iter()
                .filter(|v| v.kind != VarKind::Utility)
                .map(|v| v.id)
                .collect();
            sis_within(id, j, all)
        }
        other => other,
    }
}

fn sis_within(id: &InfluenceDiagram, j: usize, pool: BTreeSet<VarId>) -> Result<SisResult> {
    let order = id.decision_order();
    let d = order[j];
    let g = id.digraph();
    let targets = utility_descendants(id, d);
    let finish = |sis: BTreeSet<VarId>| {
        let existing: BTreeSet<VarId> = id.parents(d).iter().copied().collect();
        let added_arcs = sis
            .iter()
            .filter(|v| !existing.contains(v))
            .map(|v| (*v, d))
            .collect();
        SisResult {
            decision: d,
            sis,
            candidate_pool: pool.clone(),
            added_arcs,
            removed_arcs: Vec::new(),
        }
    };
    if targets.is_empty() {
        return Ok(finish(BTreeSet::new()));
    }
    let descendants = g.descendants(d.0);
    let mut sources = NodeSet::new();
    for &dk in &order[..=j] {
        sources.extend(family(id, dk));
    }
    sources.remove(&d.0);
    let candidates: NodeSet = pool
        .iter()
        .map(|v| v.0)
        .filter(|v| *v != d.0 && !descendants.contains(v))
        .collect();

    let mut scope = sources.clone();
    scope.extend(targets.iter().copied());
    scope.insert(d.0);
    let keep = g.ancestral_closure(&scope);
    let moral = moralize(&g.induced(&keep));
    let mut sinks = targets.clone();
    for v in &descendants {
        if keep.contains(v) && (targets.contains(v) || !g.descendants(*v).is_disjoint(&targets)) {
            sinks.insert(*v);
        }
    }
    let sources: NodeSet = sources.into_iter().filter(|v| !sinks.contains(v)).collect();
    let cut = min_separating_set_within(&moral, &sources, &sinks, &nodes([d]), &candidates)?;
    let mut sis = vars(&cut);
    sis.remove(&d);
    Ok(finish(sis))
}

/// For the decisions from last to first: adds the SIS arcs, then deletes
/// non-requisite arcs before moving to the previous decision. Returns the
/// upper-bound diagram and one result per decision in `decision_order`
/// order.
pub fn build_upper_bound_id(id: &InfluenceDiagram) -> Result<(InfluenceDiagram, Vec<SisResult>)> {
    let mut cur = id.clone();
    let mut results = Vec::new();
    let mut removed = Vec::new();
    for j in (0..id.decision_order().len()).rev() {
        let r = compute_sis(&cur, j)?;
        let extra: Vec<VarId> = r.added_arcs.iter().map(|(v, _)| *v).collect();
        let (next, gone) = reduce_logged(&cur.with_information_arcs(r.decision, &extra));
        cur = next;
        removed.extend(gone);
        results.push(r);
    }
    results.reverse();
    for r in &mut results {
        r.removed_arcs = removed
            .iter()
            .filter(|(_, d)| *d == r.decision)
            .copied()
            .collect();
    }
    Ok((cur, results))
}
