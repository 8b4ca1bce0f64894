//! Policy trees: AND nodes keep every positive-probability child, OR nodes
//! keep exactly one action, leaves carry the expected utility of the
//! remaining unobserved part of the problem.

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::{InfluenceDiagram, VarId, VarKind};

const PROB_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct AndBranch {
    /// One state per variable of the parent's group.
    pub states: Vec<usize>,
    pub prob: f64,
    pub child: PolicyNode,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PolicyNode {
    And {
        group: Vec<VarId>,
        value: f64,
        children: Vec<AndBranch>,
    },
    Or {
        decision: VarId,
        action: usize,
        value: f64,
        child: Box<PolicyNode>,
    },
    Leaf {
        utility: f64,
    },
}

impl PolicyNode {
    pub fn value(&self) -> f64 {
        match self {
            PolicyNode::And { value, .. } | PolicyNode::Or { value, .. } => *value,
            PolicyNode::Leaf { utility } => *utility,
        }
    }

    /// AND, OR and leaf nodes in the subtree.
    pub fn node_count(&self) -> usize {
        match self {
            PolicyNode::And { children, .. } => {
                1 + children.iter().map(|c| c.child.node_count()).sum::<usize>()
            }
            PolicyNode::Or { child, .. } => 1 + child.node_count(),
            PolicyNode::Leaf { .. } => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyTree {
    pub root: PolicyNode,
}

impl PolicyTree {
    pub fn value(&self) -> f64 {
        self.root.value()
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    /// Nested JSON: OR nodes `{decision, action, child}`, AND nodes
    /// `{group, children: [{state, prob, child}]}`, leaves `{utility}`.
    pub fn to_json(&self, id: &InfluenceDiagram) -> Value {
        node_json(&self.root, id)
    }
}

fn node_json(node: &PolicyNode, id: &InfluenceDiagram) -> Value {
    match node {
        PolicyNode::Leaf { utility } => json!({ "utility": utility }),
        PolicyNode::Or {
            decision,
            action,
            child,
            ..
        } => json!({
            "decision": id.name(*decision),
            "action": id.var(*decision).states[*action],
            "child": node_json(child, id),
        }),
        PolicyNode::And {
            group, children, ..
        } => json!({
            "group": group.iter().map(|v| id.name(*v)).collect::<Vec<_>>(),
            "children": children
                .iter()
                .map(|b| json!({
                    "state": b.states.iter().zip(group).map(|(s, v)| id.var(*v).states[*s].clone()).collect::<Vec<_>>(),
                    "prob": b.prob,
                    "child": node_json(&b.child, id),
                }))
                .collect::<Vec<_>>(),
        }),
    }
}

/// Recomputes the root value bottom-up from leaf utilities and arc
/// probabilities, checking the tree's structure against `id` on the way.
pub fn evaluate_policy(id: &InfluenceDiagram, policy: &PolicyTree) -> Result<f64> {
    evaluate_node(id, &policy.root)
}

fn evaluate_node(id: &InfluenceDiagram, node: &PolicyNode) -> Result<f64> {
    match node {
        PolicyNode::Leaf { utility } => Ok(*utility),
        PolicyNode::Or {
            decision,
            action,
            child,
            ..
        } => {
            if decision.0 >= id.len() || id.kind(*decision) != VarKind::Decision {
                return Err(Error::MalformedPolicy(format!(
                    "{decision} is not a decision"
                )));
            }
            if *action >= id.card(*decision) {
                return Err(Error::MalformedPolicy(format!(
                    "action {action} out of range for {decision}"
                )));
            }
            evaluate_node(id, child)
        }
        PolicyNode::And {
            group, children, ..
        } => {
            if children.is_empty() {
                return Err(Error::MalformedPolicy("AND node without children".into()));
            }
            let mut total_prob = 0.0;
            let mut value = 0.0;
            for b in children {
                if b.states.len() != group.len() {
                    return Err(Error::MalformedPolicy(
                        "branch state arity differs from group".into(),
                    ));
                }
                for (s, v) in b.states.iter().zip(group) {
                    if v.0 >= id.len() || *s >= id.card(*v) {
                        return Err(Error::MalformedPolicy(format!(
                            "state {s} out of range for {v}"
                        )));
                    }
                }
                if !(0.0..=1.0 + PROB_TOL).contains(&b.prob) {
                    return Err(Error::MalformedPolicy(format!(
                        "arc probability {}",
                        b.prob
                    )));
                }
                total_prob += b.prob;
                value += b.prob * evaluate_node(id, &b.child)?;
            }
            if (total_prob - 1.0).abs() > PROB_TOL {
                return Err(Error::MalformedPolicy(format!(
                    "AND arcs sum to {total_prob}"
                )));
            }
            Ok(value)
        }
    }
}
