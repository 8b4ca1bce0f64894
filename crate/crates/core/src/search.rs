//! Depth-first AND/OR search over a strong join tree of the upper-bound
//! diagram, with incremental evaluation and checkpointed backtracking.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::jointree::StrongJoinTree;
use crate::model::{PartialOrder, VarId};
use crate::policy::{AndBranch, PolicyNode, PolicyTree};
use crate::potential::decode_index;
use crate::propagation::{Bounds, Marginal, Propagator};

const BOUND_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Layer {
    And { group: Vec<VarId>, host: usize },
    Or { decision: VarId, host: usize },
}

impl Layer {
    pub fn host(&self) -> usize {
        match self {
            Layer::And { host, .. } | Layer::Or { host, .. } => *host,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchPlan {
    pub layers: Vec<Layer>,
    /// Clique path from the previous layer's host (the root for the first
    /// layer) to this layer's host.
    pub paths: Vec<Vec<usize>>,
}

/// Layers for the observed information sets and the decisions, in `≺`.
/// Within an information set each AND group is the set of remaining
/// variables in the clique nearest the previous host that holds any of
/// them (ties: more of them, then lower clique id).
pub fn plan_search_order(tree: &StrongJoinTree, po: &PartialOrder) -> Result<SearchPlan> {
    let mut layers = Vec::new();
    let mut paths = Vec::new();
    let mut prev = tree.root;
    for (k, &d) in po.decisions().iter().enumerate() {
        let mut remaining: Vec<VarId> = po.info_set(k).to_vec();
        while !remaining.is_empty() {
            let dist = tree.distances(prev);
            let host = tree
                .cliques
                .iter()
                .map(|c| (c.id, remaining.iter().filter(|v| c.contains(**v)).count()))
                .filter(|(_, n)| *n > 0)
                .min_by_key(|(c, n)| (dist[*c], std::cmp::Reverse(*n), *c))
                .map(|(c, _)| c)
                .ok_or_else(|| Error::PlanMismatch(format!("{} is in no clique", remaining[0])))?;
            let group: Vec<VarId> = remaining
                .iter()
                .copied()
                .filter(|v| tree.cliques[host].contains(*v))
                .collect();
            remaining.retain(|v| !group.contains(v));
            paths.push(tree.path(prev, host));
            layers.push(Layer::And { group, host });
            prev = host;
        }
        let host = tree
            .nearest_containing(prev, d)
            .ok_or_else(|| Error::PlanMismatch(format!("decision {d} is in no clique")))?;
        paths.push(tree.path(prev, host));
        layers.push(Layer::Or { decision: d, host });
        prev = host;
    }
    Ok(SearchPlan { layers, paths })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    Exhaustive,
    #[default]
    DepthFirstBranchAndBound,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveStats {
    /// AND, OR and terminal nodes expanded.
    pub expanded: usize,
    /// Nodes of the returned policy tree.
    pub policy: usize,
    /// OR branches pruned by bounds.
    pub bounds: usize,
    /// AND branches skipped for probability zero.
    pub zeros: usize,
    pub elapsed: Duration,
    /// Bound checks that failed (verification mode only).
    pub bound_violations: usize,
}

/// Receives every marginal and bound computed during a search together with
/// the evidence in force at that point.
pub trait SearchObserver {
    fn marginal(&mut self, _evidence: &[(VarId, usize)], _group: &[VarId], _marginal: &Marginal) {}
    fn bounds(&mut self, _evidence: &[(VarId, usize)], _decision: VarId, _bounds: &Bounds) {}
}

#[derive(Default)]
pub struct SearchOptions<'a> {
    pub mode: Mode,
    /// Also explores pruned actions to check their bounds (results and
    /// statistics are unaffected apart from `bound_violations`).
    pub verify_bounds: bool,
    pub observer: Option<&'a mut dyn SearchObserver>,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub meu: f64,
    pub policy: PolicyTree,
    pub stats: SolveStats,
}

struct Searcher<'p, 'o> {
    prop: &'p mut Propagator,
    plan: &'p SearchPlan,
    mode: Mode,
    verify: bool,
    observer: Option<&'o mut dyn SearchObserver>,
    evidence: Vec<(VarId, usize)>,
    stats: SolveStats,
    counting: bool,
}

/// Runs the search on `prop`, whose tree must have been fully collected.
/// The tree is returned to its initial state bit for bit.
pub fn search(
    prop: &mut Propagator,
    plan: &SearchPlan,
    options: SearchOptions,
) -> Result<SearchOutcome> {
    let start = Instant::now();
    let depth = prop.open_checkpoints();
    let token = prop.checkpoint();
    let mut s = Searcher {
        prop,
        plan,
        mode: options.mode,
        verify: options.verify_bounds,
        observer: options.observer,
        evidence: Vec::new(),
        stats: SolveStats::default(),
        counting: true,
    };
    let result = s.expand(0);
    let mut stats = std::mem::take(&mut s.stats);
    s.prop.restore(token)?;
    if s.prop.open_checkpoints() != depth {
        return Err(Error::CheckpointMisuse);
    }
    let (meu, root) = result?;
    let policy = PolicyTree { root };
    stats.policy = policy.node_count();
    stats.elapsed = start.elapsed();
    Ok(SearchOutcome { meu, policy, stats })
}

impl Searcher<'_, '_> {
    fn count(&mut self, f: impl FnOnce(&mut SolveStats)) {
        if self.counting {
            f(&mut self.stats);
        }
    }

    fn expand(&mut self, l: usize) -> Result<(f64, PolicyNode)> {
        self.count(|s| s.expanded += 1);
        if l == self.plan.layers.len() {
            let (mass, value) = self.prop.evaluate_root()?;
            if mass == 0.0 {
                return Err(Error::ZeroProbability);
            }
            return Ok((value, PolicyNode::Leaf { utility: value }));
        }
        match &self.plan.layers[l] {
            Layer::And { group, host } => self.expand_and(l, group, *host),
            Layer::Or { decision, host } => self.expand_or(l, *decision, *host),
        }
    }

    /// Enters `assignment` at `host` and brings the root up to date, runs
    /// `f`, then restores.
    fn with_evidence<T>(
        &mut self,
        host: usize,
        assignment: &[(VarId, usize)],
        f: impl FnOnce(&mut Self) -> Result<T>,
    ) -> Result<T> {
        let token = self.prop.checkpoint();
        let root = self.prop.tree().root;
        let mut entered = || -> Result<()> {
            for &(v, s) in assignment {
                self.prop.set_evidence(host, v, s)?;
            }
            self.prop.incremental_propagate(host, root)
        };
        let result = entered().and_then(|_| {
            self.evidence.extend_from_slice(assignment);
            let r = f(self);
            self.evidence
                .truncate(self.evidence.len() - assignment.len());
            r
        });
        self.prop.restore(token)?;
        result
    }

    fn expand_and(&mut self, l: usize, group: &[VarId], host: usize) -> Result<(f64, PolicyNode)> {
        let marginal = self.prop.query_marginal(host, group)?;
        if let Some(o) = self.observer.as_deref_mut() {
            o.marginal(&self.evidence, group, &marginal);
        }
        if marginal.zero_mass {
            return Err(Error::ZeroProbability);
        }
        let mut value = 0.0;
        let mut children = Vec::new();
        for (idx, &p) in marginal.probs.iter().enumerate() {
            if p == 0.0 {
                self.count(|s| s.zeros += 1);
                continue;
            }
            let states = decode_index(&marginal.cards, idx);
            let assignment: Vec<(VarId, usize)> =
                group.iter().copied().zip(states.iter().copied()).collect();
            let (v, child) = self.with_evidence(host, &assignment, |s| s.expand(l + 1))?;
            value += p * v;
            children.push(AndBranch {
                states,
                prob: p,
                child,
            });
        }
        Ok((
            value,
            PolicyNode::And {
                group: group.to_vec(),
                value,
                children,
            },
        ))
    }

    fn expand_or(&mut self, l: usize, decision: VarId, host: usize) -> Result<(f64, PolicyNode)> {
        let card = self.prop.tree().cards[decision.0];
        let bounds = match self.mode {
            Mode::Exhaustive => vec![f64::INFINITY; card],
            Mode::DepthFirstBranchAndBound => {
                let b = self.prop.query_decision_bounds(host, decision)?;
                if let Some(o) = self.observer.as_deref_mut() {
                    o.bounds(&self.evidence, decision, &b);
                }
                b.values
            }
        };
        let mut order: Vec<usize> = (0..card).collect();
        order.sort_by(|a, b| bounds[*b].total_cmp(&bounds[*a]).then(a.cmp(b)));
        let mut best: Option<(f64, usize, PolicyNode)> = None;
        for a in order {
            if let Some((incumbent, _, _)) = &best {
                if bounds[a] <= *incumbent {
                    self.count(|s| s.bounds += 1);
                    if self.verify {
                        let was = std::mem::replace(&mut self.counting, false);
                        let exact = self.with_evidence(host, &[(decision, a)], |s| s.expand(l + 1));
                        self.counting = was;
                        let (v, _) = exact?;
                        if bounds[a] < v - BOUND_TOL * v.abs().max(1.0) {
                            self.stats.bound_violations += 1;
                        }
                    }
                    continue;
                }
            }
            let (v, child) = self.with_evidence(host, &[(decision, a)], |s| s.expand(l + 1))?;
            if self.verify && bounds[a] < v - BOUND_TOL * v.abs().max(1.0) {
                self.stats.bound_violations += 1;
            }
            if best.as_ref().is_none_or(|(b, _, _)| v > *b) {
                best = Some((v, a, child));
            }
        }
        let (value, action, child) = best.expect("a decision has at least one action");
        Ok((
            value,
            PolicyNode::Or {
                decision,
                action,
                value,
                child: Box::new(child),
            },
        ))
    }
}
