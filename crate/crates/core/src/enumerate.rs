//! Brute-force maximum expected utility by direct recursion over the
//! partial order. Slow, independent of every join-tree code path, and used
//! as the reference the other solvers are checked against.

use crate::error::{Error, Result};
use crate::model::{InfluenceDiagram, VarId, VarKind};
use crate::policy::{AndBranch, PolicyNode, PolicyTree};

pub const LEAF_LIMIT: usize = 10_000_000;

struct Enumerator<'a> {
    id: &'a InfluenceDiagram,
    order: Vec<VarId>,
    /// Positions `< observed_end` are observed variables or decisions.
    observed_end: usize,
    /// CPTs whose scope becomes fully assigned at each position.
    ready: Vec<Vec<VarId>>,
    utilities: Vec<VarId>,
    state: Vec<usize>,
    leaves: usize,
    limit: usize,
}

/// Exact MEU and one optimal policy tree (one AND layer per observed chance
/// variable). Zero-probability prefixes are skipped; the size guard counts
/// the remaining leaf scenarios.
pub fn enumerate_meu(id: &InfluenceDiagram) -> Result<(f64, PolicyTree)> {
    enumerate_meu_with_limit(id, LEAF_LIMIT)
}

pub fn enumerate_meu_with_limit(id: &InfluenceDiagram, limit: usize) -> Result<(f64, PolicyTree)> {
    id.ensure_valid()?;
    let po = id.partial_order();
    let mut order = Vec::new();
    for k in 0..po.stages() {
        order.extend_from_slice(po.info_set(k));
        order.push(po.decisions()[k]);
    }
    let observed_end = order.len();
    order.extend_from_slice(po.info_set(po.stages()));

    let mut position = vec![usize::MAX; id.len()];
    for (p, v) in order.iter().enumerate() {
        position[v.0] = p;
    }
    let mut ready = vec![Vec::new(); order.len()];
    for (x, t) in id.cpts() {
        let last = t.vars().iter().map(|v| position[v.0]).max().unwrap();
        ready[last].push(x);
    }
    let mut e = Enumerator {
        id,
        order,
        observed_end,
        ready,
        utilities: id.utility_vars(),
        state: vec![0; id.len()],
        leaves: 0,
        limit,
    };
    let (mass, value, node) = e.visit(0, 1.0)?;
    let meu = if mass > 0.0 { value / mass } else { 0.0 };
    Ok((
        meu,
        PolicyTree {
            root: node.unwrap_or(PolicyNode::Leaf { utility: meu }),
        },
    ))
}

impl Enumerator<'_> {
    /// Returns (probability mass, unnormalized Σ/max value, policy node).
    fn visit(&mut self, pos: usize, weight: f64) -> Result<(f64, f64, Option<PolicyNode>)> {
        if pos == self.observed_end {
            let (mass, value, _) = self.visit_rest(pos, weight)?;
            let utility = if mass > 0.0 { value / mass } else { 0.0 };
            return Ok((mass, value, Some(PolicyNode::Leaf { utility })));
        }
        let var = self.order[pos];
        let card = self.id.card(var);
        match self.id.kind(var) {
            VarKind::Decision => {
                let mut best: Option<(f64, f64, usize, Option<PolicyNode>)> = None;
                for a in 0..card {
                    self.state[var.0] = a;
                    let w = weight * self.ready_factor(pos);
                    let (m, v, n) = self.visit(pos + 1, w)?;
                    if best.as_ref().is_none_or(|b| v > b.1) {
                        best = Some((m, v, a, n));
                    }
                }
                let (m, v, a, n) = best.unwrap();
                let child = n.unwrap_or(PolicyNode::Leaf { utility: 0.0 });
                let value = if m > 0.0 { v / m } else { 0.0 };
                Ok((
                    m,
                    v,
                    Some(PolicyNode::Or {
                        decision: var,
                        action: a,
                        value,
                        child: Box::new(child),
                    }),
                ))
            }
            _ => {
                let mut mass = 0.0;
                let mut total = 0.0;
                let mut branches = Vec::new();
                for s in 0..card {
                    self.state[var.0] = s;
                    let w = weight * self.ready_factor(pos);
                    if w == 0.0 {
                        continue;
                    }
                    let (m, v, n) = self.visit(pos + 1, w)?;
                    mass += m;
                    total += v;
                    if m > 0.0 {
                        branches.push((s, m, n.unwrap()));
                    }
                }
                let children = branches
                    .into_iter()
                    .map(|(s, m, child)| AndBranch {
                        states: vec![s],
                        prob: m / mass,
                        child,
                    })
                    .collect();
                let value = if mass > 0.0 { total / mass } else { 0.0 };
                Ok((
                    mass,
                    total,
                    Some(PolicyNode::And {
                        group: vec![var],
                        value,
                        children,
                    }),
                ))
            }
        }
    }

    /// Unobserved tail: plain sums, no policy nodes.
    fn visit_rest(&mut self, pos: usize, weight: f64) -> Result<(f64, f64, Option<PolicyNode>)> {
        if pos == self.order.len() {
            self.leaves += 1;
            if self.leaves > self.limit {
                return Err(Error::TooLarge { limit: self.limit });
            }
            let state = &self.state;
            let u: f64 = self
                .utilities
                .iter()
                .map(|u| self.id.utility(*u).unwrap().lookup(|v| state[v.0]))
                .sum();
            return Ok((weight, weight * u, None));
        }
        let var = self.order[pos];
        let (mut mass, mut total) = (0.0, 0.0);
        for s in 0..self.id.card(var) {
            self.state[var.0] = s;
            let w = weight * self.ready_factor(pos);
            if w == 0.0 {
                continue;
            }
            let (m, v, _) = self.visit_rest(pos + 1, w)?;
            mass += m;
            total += v;
        }
        Ok((mass, total, None))
    }

    fn ready_factor(&self, pos: usize) -> f64 {
        let state = &self.state;
        self.ready[pos]
            .iter()
            .map(|x| self.id.cpt(*x).unwrap().lookup(|v| state[v.0]))
            .product()
    }
}

/// Expected utility of a fixed policy given as one decision rule per
/// decision: `rule(decision, full_state) -> action`. Plain enumeration of
/// the joint; used to check that no policy beats [`enumerate_meu`].
pub fn policy_expected_utility(
    id: &InfluenceDiagram,
    rule: &dyn Fn(VarId, &[usize]) -> usize,
) -> Result<f64> {
    let order = id
        .digraph()
        .topological_order()
        .ok_or_else(|| Error::Invalid(id.validate()))?;
    let mut state = vec![0; id.len()];
    fn go(
        id: &InfluenceDiagram,
        order: &[usize],
        pos: usize,
        state: &mut Vec<usize>,
        weight: f64,
        rule: &dyn Fn(VarId, &[usize]) -> usize,
    ) -> f64 {
        if weight == 0.0 {
            return 0.0;
        }
        if pos == order.len() {
            let u: f64 = id.utilities().map(|(_, t)| t.lookup(|v| state[v.0])).sum();
            return weight * u;
        }
        let v = VarId(order[pos]);
        match id.kind(v) {
            VarKind::Utility => go(id, order, pos + 1, state, weight, rule),
            VarKind::Decision => {
                state[v.0] = rule(v, state);
                go(id, order, pos + 1, state, weight, rule)
            }
            VarKind::Chance => {
                let mut total = 0.0;
                for s in 0..id.card(v) {
                    state[v.0] = s;
                    let p = id.cpt(v).unwrap().lookup(|w| state[w.0]);
                    total += go(id, order, pos + 1, state, weight * p, rule);
                }
                total
            }
        }
    }
    Ok(go(id, &order, 0, &mut state, 1.0, rule))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DiagramBuilder;

    fn weather(observed: bool) -> InfluenceDiagram {
        let mut b = DiagramBuilder::new();
        let x = b.chance("x", &["good", "bad"], &[], vec![0.4, 0.6]);
        let parents: Vec<VarId> = if observed { vec![x] } else { vec![] };
        let d = b.decision("d", &["a1", "a2"], &parents);
        // rows (x, d): good/a1, good/a2, bad/a1, bad/a2
        b.utility("u", &[x, d], vec![10.0, 2.0, 0.0, 2.0]);
        b.build().unwrap()
    }

    #[test]
    fn unobserved_decision() {
        let (meu, policy) = enumerate_meu(&weather(false)).unwrap();
        assert!((meu - 4.0).abs() < 1e-12);
        match policy.root {
            PolicyNode::Or { action, .. } => assert_eq!(action, 0),
            other => panic!("expected OR root, got {other:?}"),
        }
    }

    #[test]
    fn observed_decision() {
        let (meu, policy) = enumerate_meu(&weather(true)).unwrap();
        assert!((meu - 5.2).abs() < 1e-12);
        let v = crate::policy::evaluate_policy(&weather(true), &policy).unwrap();
        assert!((v - 5.2).abs() < 1e-12, "{v} {policy:?}");
        assert_eq!(policy.node_count(), 5);
    }

    #[test]
    fn information_never_hurts() {
        assert!(
            enumerate_meu(&weather(false)).unwrap().0 <= enumerate_meu(&weather(true)).unwrap().0
        );
    }

    #[test]
    fn zero_utility() {
        let mut b = DiagramBuilder::new();
        let x = b.chance("x", &["a", "b"], &[], vec![0.5, 0.5]);
        b.utility("u", &[x], vec![0.0, 0.0]);
        assert_eq!(enumerate_meu(&b.build().unwrap()).unwrap().0, 0.0);
    }

    #[test]
    fn explicit_policies_do_not_beat_meu() {
        let id = weather(true);
        let (meu, _) = enumerate_meu(&id).unwrap();
        for table in 0..4usize {
            let rule = move |_d: VarId, s: &[usize]| (table >> s[0]) & 1;
            assert!(policy_expected_utility(&id, &rule).unwrap() <= meu + 1e-12);
        }
    }

    #[test]
    fn size_guard() {
        let id = weather(true);
        assert!(matches!(
            enumerate_meu_with_limit(&id, 1),
            Err(Error::TooLarge { .. })
        ));
    }
}
