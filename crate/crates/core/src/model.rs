//! Influence diagrams: variables, tables, validation, no-forgetting closure
//! and the temporal partial order over chance and decision variables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Digraph;
use crate::potential::Potential;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Chance,
    Decision,
    Utility,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub id: VarId,
    pub name: String,
    pub kind: VarKind,
    /// Empty for utility variables.
    pub states: Vec<String>,
    pub parents: Vec<VarId>,
}

impl Variable {
    pub fn card(&self) -> usize {
        self.states.len()
    }
}

/// A structural or numerical defect found by [`InfluenceDiagram::validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Cycle(Vec<VarId>),
    Normalization {
        var: VarId,
        row: usize,
        sum: f64,
    },
    NegativeProbability {
        var: VarId,
    },
    EmptyStates(VarId),
    UtilityHasStates(VarId),
    UtilityHasChildren(VarId),
    UnknownParent {
        var: VarId,
        parent: usize,
    },
    SelfParent(VarId),
    MissingTable(VarId),
    TableShape {
        var: VarId,
        expected: usize,
        found: usize,
    },
    DecisionOrder(String),
}

impl Violation {
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::Cycle(_) => "cycle",
            Violation::Normalization { .. } => "normalization",
            Violation::NegativeProbability { .. } => "negative",
            Violation::EmptyStates(_) => "empty-states",
            Violation::UtilityHasStates(_) => "utility-states",
            Violation::UtilityHasChildren(_) => "utility-children",
            Violation::UnknownParent { .. } => "unknown-parent",
            Violation::SelfParent(_) => "self-parent",
            Violation::MissingTable(_) => "missing-table",
            Violation::TableShape { .. } => "table-shape",
            Violation::DecisionOrder(_) => "decision-order",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Cycle(vs) => write!(f, "cycle through {vs:?}"),
            Violation::Normalization { var, row, sum } => {
                write!(f, "normalization: row {row} of {var} sums to {sum}")
            }
            Violation::NegativeProbability { var } => write!(f, "negative probability in {var}"),
            Violation::EmptyStates(v) => write!(f, "{v} has no states"),
            Violation::UtilityHasStates(v) => write!(f, "utility {v} declares states"),
            Violation::UtilityHasChildren(v) => write!(f, "utility {v} has children"),
            Violation::UnknownParent { var, parent } => {
                write!(f, "{var} has unknown parent #{parent}")
            }
            Violation::SelfParent(v) => write!(f, "{v} is its own parent"),
            Violation::MissingTable(v) => write!(f, "{v} has no table"),
            Violation::TableShape {
                var,
                expected,
                found,
            } => {
                write!(f, "table of {var} has {found} entries, expected {expected}")
            }
            Violation::DecisionOrder(msg) => write!(f, "decision order: {msg}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InfluenceDiagram {
    variables: Vec<Variable>,
    /// Chance variable → table over `(parents.., self)`.
    cpts: BTreeMap<VarId, Potential>,
    /// Utility variable → table over `parents`.
    utilities: BTreeMap<VarId, Potential>,
    decision_order: Vec<VarId>,
}

const NORMALIZATION_TOL: f64 = 1e-9;

impl InfluenceDiagram {
    /// Assembles a diagram without checking it; see [`Self::validate`].
    pub fn from_parts(
        variables: Vec<Variable>,
        cpts: BTreeMap<VarId, Potential>,
        utilities: BTreeMap<VarId, Potential>,
        decision_order: Vec<VarId>,
    ) -> Self {
        InfluenceDiagram {
            variables,
            cpts,
            utilities,
            decision_order,
        }
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn card(&self, id: VarId) -> usize {
        self.variables[id.0].states.len()
    }

    pub fn kind(&self, id: VarId) -> VarKind {
        self.variables[id.0].kind
    }

    pub fn parents(&self, id: VarId) -> &[VarId] {
        &self.variables[id.0].parents
    }

    pub fn find(&self, name: &str) -> Option<VarId> {
        self.variables.iter().find(|v| v.name == name).map(|v| v.id)
    }

    pub fn name(&self, id: VarId) -> &str {
        &self.variables[id.0].name
    }

    pub fn cpt(&self, id: VarId) -> Option<&Potential> {
        self.cpts.get(&id)
    }

    pub fn utility(&self, id: VarId) -> Option<&Potential> {
        self.utilities.get(&id)
    }

    pub fn cpts(&self) -> impl Iterator<Item = (VarId, &Potential)> {
        self.cpts.iter().map(|(k, v)| (*k, v))
    }

    pub fn utilities(&self) -> impl Iterator<Item = (VarId, &Potential)> {
        self.utilities.iter().map(|(k, v)| (*k, v))
    }

    pub fn decision_order(&self) -> &[VarId] {
        &self.decision_order
    }

    pub fn ids_of(&self, kind: VarKind) -> Vec<VarId> {
        self.variables
            .iter()
            .filter(|v| v.kind == kind)
            .map(|v| v.id)
            .collect()
    }

    pub fn chance_vars(&self) -> Vec<VarId> {
        self.ids_of(VarKind::Chance)
    }

    pub fn utility_vars(&self) -> Vec<VarId> {
        self.ids_of(VarKind::Utility)
    }

    /// The arc structure as a digraph over variable indices.
    pub fn digraph(&self) -> Digraph {
        let mut g = Digraph::new(self.variables.len());
        for v in &self.variables {
            for p in &v.parents {
                if p.0 < self.variables.len() && *p != v.id {
                    g.add_arc(p.0, v.id.0);
                }
            }
        }
        g
    }

    /// Returns every invariant violation; an empty list means the diagram is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.variables.len();
        let mut structural_ok = true;
        for (i, v) in self.variables.iter().enumerate() {
            debug_assert_eq!(v.id.0, i);
            for p in &v.parents {
                if p.0 >= n {
                    out.push(Violation::UnknownParent {
                        var: v.id,
                        parent: p.0,
                    });
                    structural_ok = false;
                } else if *p == v.id {
                    out.push(Violation::SelfParent(v.id));
                    structural_ok = false;
                }
            }
            match v.kind {
                VarKind::Utility if !v.states.is_empty() => {
                    out.push(Violation::UtilityHasStates(v.id))
                }
                VarKind::Chance | VarKind::Decision if v.states.is_empty() => {
                    out.push(Violation::EmptyStates(v.id));
                    structural_ok = false;
                }
                _ => {}
            }
        }
        if !structural_ok {
            return out;
        }
        let g = self.digraph();
        if let Some(cycle) = g.find_cycle() {
            out.push(Violation::Cycle(cycle.into_iter().map(VarId).collect()));
        }
        for v in &self.variables {
            if v.kind == VarKind::Utility && !g.children(v.id.0).is_empty() {
                out.push(Violation::UtilityHasChildren(v.id));
            }
        }
        for v in &self.variables {
            match v.kind {
                VarKind::Chance => match self.cpts.get(&v.id) {
                    None => out.push(Violation::MissingTable(v.id)),
                    Some(t) => self.check_cpt(v, t, &mut out),
                },
                VarKind::Utility => match self.utilities.get(&v.id) {
                    None => out.push(Violation::MissingTable(v.id)),
                    Some(t) => {
                        let expected: usize = v.parents.iter().map(|p| self.card(*p)).product();
                        if t.len() != expected || t.vars() != v.parents.as_slice() {
                            out.push(Violation::TableShape {
                                var: v.id,
                                expected,
                                found: t.len(),
                            });
                        }
                    }
                },
                VarKind::Decision => {}
            }
        }
        self.check_decision_order(&g, &mut out);
        out
    }

    fn check_cpt(&self, v: &Variable, t: &Potential, out: &mut Vec<Violation>) {
        let card = v.card();
        let rows: usize = v.parents.iter().map(|p| self.card(*p)).product();
        let mut scope = v.parents.clone();
        scope.push(v.id);
        if t.len() != rows * card || t.vars() != scope.as_slice() {
            out.push(Violation::TableShape {
                var: v.id,
                expected: rows * card,
                found: t.len(),
            });
            return;
        }
        if t.values().iter().any(|x| *x < 0.0 || !x.is_finite()) {
            out.push(Violation::NegativeProbability { var: v.id });
        }
        for (row, chunk) in t.values().chunks(card).enumerate() {
            let sum: f64 = chunk.iter().sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                out.push(Violation::Normalization {
                    var: v.id,
                    row,
                    sum,
                });
                break;
            }
        }
    }

    fn check_decision_order(&self, g: &Digraph, out: &mut Vec<Violation>) {
        let decisions = self.ids_of(VarKind::Decision);
        let mut seen = BTreeSet::new();
        for d in &self.decision_order {
            if d.0 >= self.variables.len() || self.kind(*d) != VarKind::Decision {
                out.push(Violation::DecisionOrder(format!("{d} is not a decision")));
            } else if !seen.insert(*d) {
                out.push(Violation::DecisionOrder(format!("{d} listed twice")));
            }
        }
        for d in &decisions {
            if !seen.contains(d) {
                out.push(Violation::DecisionOrder(format!("{d} missing")));
            }
        }
        if out.iter().any(|v| matches!(v, Violation::Cycle(_))) {
            return;
        }
        for (i, earlier) in self.decision_order.iter().enumerate() {
            for later in &self.decision_order[i + 1..] {
                if g.descendants(later.0).contains(&earlier.0) {
                    out.push(Violation::DecisionOrder(format!(
                        "{earlier} precedes {later} but descends from it"
                    )));
                }
            }
        }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }

    /// Adds, for every pair `j < k`, arcs from `D_j` and `Pa(D_j)` into `D_k`.
    pub fn apply_no_forgetting(&self) -> Result<InfluenceDiagram> {
        let mut out = self.clone();
        let g = self.digraph();
        let mut known: BTreeSet<VarId> = BTreeSet::new();
        for &d in &self.decision_order {
            let current: BTreeSet<VarId> = out.parents(d).iter().copied().collect();
            let descendants = g.descendants(d.0);
            let mut added = Vec::new();
            for &k in &known {
                if !current.contains(&k) && k != d {
                    if descendants.contains(&k.0) {
                        return Err(Error::Cycle { from: k, to: d });
                    }
                    added.push(k);
                }
            }
            out.variables[d.0].parents.extend(added);
            known.extend(out.parents(d).iter().copied());
            known.insert(d);
        }
        Ok(out)
    }

    /// Returns a copy with `extra` appended to the parents of decision `d`.
    pub fn with_information_arcs(&self, d: VarId, extra: &[VarId]) -> InfluenceDiagram {
        let mut out = self.clone();
        for v in extra {
            if !out.variables[d.0].parents.contains(v) {
                out.variables[d.0].parents.push(*v);
            }
        }
        out
    }

    /// Returns a copy with the information arc `from -> d` removed.
    pub fn without_information_arc(&self, d: VarId, from: VarId) -> InfluenceDiagram {
        let mut out = self.clone();
        out.variables[d.0].parents.retain(|p| *p != from);
        out
    }

    pub fn partial_order(&self) -> PartialOrder {
        PartialOrder::of(self)
    }
}

/// `I_0 ≺ D_1 ≺ I_1 ≺ … ≺ D_n ≺ I_n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialOrder {
    info_sets: Vec<Vec<VarId>>,
    decisions: Vec<VarId>,
    rank: Vec<Option<usize>>,
}

impl PartialOrder {
    pub fn of(id: &InfluenceDiagram) -> PartialOrder {
        let decisions = id.decision_order().to_vec();
        let mut assigned = BTreeSet::new();
        let mut info_sets = Vec::with_capacity(decisions.len() + 1);
        for &d in &decisions {
            let group: Vec<VarId> = id
                .parents(d)
                .iter()
                .copied()
                .filter(|p| id.kind(*p) == VarKind::Chance && !assigned.contains(p))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            assigned.extend(group.iter().copied());
            info_sets.push(group);
        }
        info_sets.push(
            id.chance_vars()
                .into_iter()
                .filter(|v| !assigned.contains(v))
                .collect(),
        );
        let mut rank = vec![None; id.len()];
        for (k, set) in info_sets.iter().enumerate() {
            for v in set {
                rank[v.0] = Some(2 * k);
            }
        }
        for (k, d) in decisions.iter().enumerate() {
            rank[d.0] = Some(2 * k + 1);
        }
        PartialOrder {
            info_sets,
            decisions,
            rank,
        }
    }

    /// Number of decisions `n`.
    pub fn stages(&self) -> usize {
        self.decisions.len()
    }

    pub fn info_set(&self, k: usize) -> &[VarId] {
        &self.info_sets[k]
    }

    pub fn info_sets(&self) -> &[Vec<VarId>] {
        &self.info_sets
    }

    pub fn decisions(&self) -> &[VarId] {
        &self.decisions
    }

    /// Position in the alternating group list; `None` for utilities.
    pub fn rank(&self, v: VarId) -> Option<usize> {
        self.rank.get(v.0).copied().flatten()
    }

    /// The groups in order: info set, decision, info set, …
    pub fn groups(&self) -> Vec<Vec<VarId>> {
        let mut out = Vec::new();
        for (k, set) in self.info_sets.iter().enumerate() {
            out.push(set.clone());
            if k < self.decisions.len() {
                out.push(vec![self.decisions[k]]);
            }
        }
        out
    }
}

/// A partial instantiation: variable → state index.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assignment {
    bindings: BTreeMap<VarId, usize>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, id: &InfluenceDiagram, var: VarId, state: usize) -> Result<()> {
        if var.0 >= id.len() || state >= id.card(var) {
            return Err(Error::UnknownVariable(format!("{var}={state}")));
        }
        self.bindings.insert(var, state);
        Ok(())
    }

    pub fn get(&self, var: VarId) -> Option<usize> {
        self.bindings.get(&var).copied()
    }

    pub fn unbind(&mut self, var: VarId) {
        self.bindings.remove(&var);
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, usize)> + '_ {
        self.bindings.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }
}

/// Incremental construction of a diagram; variables get ids in declaration order.
#[derive(Debug, Default)]
pub struct DiagramBuilder {
    variables: Vec<Variable>,
    cpts: BTreeMap<VarId, Potential>,
    utilities: BTreeMap<VarId, Potential>,
    decision_order: Option<Vec<VarId>>,
}

impl DiagramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, name: &str, kind: VarKind, states: &[&str], parents: &[VarId]) -> VarId {
        let id = VarId(self.variables.len());
        self.variables.push(Variable {
            id,
            name: name.to_string(),
            kind,
            states: states.iter().map(|s| s.to_string()).collect(),
            parents: parents.to_vec(),
        });
        id
    }

    fn cards(&self, vars: &[VarId]) -> Vec<usize> {
        vars.iter()
            .map(|v| self.variables[v.0].states.len())
            .collect()
    }

    /// `table` is laid out over `(parents.., self)`.
    pub fn chance(
        &mut self,
        name: &str,
        states: &[&str],
        parents: &[VarId],
        table: Vec<f64>,
    ) -> VarId {
        let id = self.push(name, VarKind::Chance, states, parents);
        let mut scope = parents.to_vec();
        scope.push(id);
        let cards = self.cards(&scope);
        let t = Potential::new(scope.clone(), cards.clone(), table)
            .unwrap_or_else(|_| Potential::filled(scope, cards, f64::NAN));
        self.cpts.insert(id, t);
        id
    }

    pub fn decision(&mut self, name: &str, states: &[&str], parents: &[VarId]) -> VarId {
        self.push(name, VarKind::Decision, states, parents)
    }

    pub fn utility(&mut self, name: &str, parents: &[VarId], table: Vec<f64>) -> VarId {
        let id = self.push(name, VarKind::Utility, &[], parents);
        let cards = self.cards(parents);
        let t = Potential::new(parents.to_vec(), cards.clone(), table)
            .unwrap_or_else(|_| Potential::filled(parents.to_vec(), cards, f64::NAN));
        self.utilities.insert(id, t);
        id
    }

    pub fn decision_order(&mut self, order: Vec<VarId>) -> &mut Self {
        self.decision_order = Some(order);
        self
    }

    /// Builds without validation. The decision order defaults to declaration order.
    pub fn build_unchecked(self) -> InfluenceDiagram {
        let order = self.decision_order.unwrap_or_else(|| {
            self.variables
                .iter()
                .filter(|v| v.kind == VarKind::Decision)
                .map(|v| v.id)
                .collect()
        });
        InfluenceDiagram::from_parts(self.variables, self.cpts, self.utilities, order)
    }

    pub fn build(self) -> Result<InfluenceDiagram> {
        let id = self.build_unchecked();
        id.ensure_valid()?;
        Ok(id)
    }
}
