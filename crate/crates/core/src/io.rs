//! Native JSON model format.
//!
//! ```json
//! {"variables": [{"name": "x", "kind": "chance", "states": ["a", "b"],
//!                 "parents": [], "table": [0.4, 0.6]}, ...],
//!  "decision_order": ["d"]}
//! ```
//!
//! Parents are referenced by name and must be declared earlier. Chance tables
//! are laid out over `(parents.., self)`, utility tables over the parents,
//! first variable slowest; decisions have no table.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InfluenceDiagram, VarId, VarKind, Variable};
use crate::potential::Potential;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub variables: Vec<VariableEntry>,
    pub decision_order: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableEntry {
    pub name: String,
    pub kind: VarKind,
    #[serde(default)]
    pub states: Vec<String>,
    #[serde(default)]
    pub parents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<f64>>,
}

fn field_error(i: usize, field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("variables[{i}].{field}: {msg}"))
}

impl ModelFile {
    pub fn from_diagram(id: &InfluenceDiagram) -> Self {
        let variables = id
            .variables()
            .iter()
            .map(|v| VariableEntry {
                name: v.name.clone(),
                kind: v.kind,
                states: v.states.clone(),
                parents: v.parents.iter().map(|p| id.name(*p).to_string()).collect(),
                table: match v.kind {
                    VarKind::Chance => id.cpt(v.id).map(|t| t.values().to_vec()),
                    VarKind::Utility => id.utility(v.id).map(|t| t.values().to_vec()),
                    VarKind::Decision => None,
                },
            })
            .collect();
        let decision_order = id
            .decision_order()
            .iter()
            .map(|d| id.name(*d).to_string())
            .collect();
        ModelFile {
            variables,
            decision_order,
        }
    }

    /// Resolves names and shapes. The result is not validated; see
    /// [`InfluenceDiagram::ensure_valid`].
    pub fn to_diagram(&self) -> Result<InfluenceDiagram> {
        let mut ids: HashMap<&str, VarId> = HashMap::new();
        let mut variables: Vec<Variable> = Vec::with_capacity(self.variables.len());
        let mut cpts = BTreeMap::new();
        let mut utilities = BTreeMap::new();
        for (i, e) in self.variables.iter().enumerate() {
            let id = VarId(i);
            if e.name.is_empty() {
                return Err(field_error(i, "name", "empty name"));
            }
            if ids.insert(e.name.as_str(), id).is_some() {
                return Err(field_error(
                    i,
                    "name",
                    format!("duplicate name {:?}", e.name),
                ));
            }
            let mut parents = Vec::with_capacity(e.parents.len());
            for p in &e.parents {
                match ids.get(p.as_str()) {
                    Some(&pid) if pid != id => parents.push(pid),
                    _ => {
                        return Err(field_error(
                            i,
                            "parents",
                            format!("{p:?} is not declared before {:?}", e.name),
                        ))
                    }
                }
            }
            let card_of = |v: VarId| {
                if v == id {
                    e.states.len()
                } else {
                    variables[v.0].states.len()
                }
            };
            let mut scope = parents.clone();
            if e.kind == VarKind::Chance {
                scope.push(id);
            }
            let cards: Vec<usize> = scope.iter().map(|v| card_of(*v)).collect();
            match (e.kind, &e.table) {
                (VarKind::Decision, Some(_)) => {
                    return Err(field_error(i, "table", "decisions carry no table"))
                }
                (VarKind::Decision, None) => {}
                (_, None) => return Err(field_error(i, "table", "missing")),
                (kind, Some(t)) => {
                    let expected: usize = cards.iter().product();
                    if t.len() != expected {
                        return Err(field_error(
                            i,
                            "table",
                            format!("{} entries, expected {expected}", t.len()),
                        ));
                    }
                    let pot = Potential::new(scope, cards, t.clone())?;
                    if kind == VarKind::Chance {
                        cpts.insert(id, pot);
                    } else {
                        utilities.insert(id, pot);
                    }
                }
            }
            variables.push(Variable {
                id,
                name: e.name.clone(),
                kind: e.kind,
                states: e.states.clone(),
                parents,
            });
        }
        let mut order = Vec::with_capacity(self.decision_order.len());
        for (k, name) in self.decision_order.iter().enumerate() {
            let id = ids.get(name.as_str()).ok_or_else(|| {
                Error::Parse(format!("decision_order[{k}]: unknown variable {name:?}"))
            })?;
            order.push(*id);
        }
        Ok(InfluenceDiagram::from_parts(
            variables, cpts, utilities, order,
        ))
    }
}

pub fn parse_model(text: &str) -> Result<InfluenceDiagram> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ModelFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            Error::Json(e.into_inner())
        } else {
            Error::Parse(format!("{path}: {}", e.into_inner()))
        }
    })?;
    file.to_diagram()
}

pub fn serialize_model(id: &InfluenceDiagram) -> String {
    serde_json::to_string_pretty(&ModelFile::from_diagram(id))
        .expect("model files always serialize")
}

pub fn read_model(path: impl AsRef<Path>) -> Result<InfluenceDiagram> {
    parse_model(&std::fs::read_to_string(path)?)
}

pub fn write_model(path: impl AsRef<Path>, id: &InfluenceDiagram) -> Result<()> {
    std::fs::write(path, serialize_model(id) + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DiagramBuilder;

    fn weather() -> InfluenceDiagram {
        let mut b = DiagramBuilder::new();
        let x = b.chance("x", &["rain", "dry"], &[], vec![0.4, 0.6]);
        let d = b.decision("d", &["a1", "a2"], &[x]);
        b.utility("u", &[x, d], vec![10.0, 2.0, 0.0, 2.0]);
        b.build().unwrap()
    }

    #[test]
    fn round_trip_is_stable() {
        let id = weather();
        let text = serialize_model(&id);
        assert_eq!(parse_model(&text).unwrap(), id);
        assert!(!text.contains("\"table\": null"));
        let file: ModelFile = serde_json::from_str(&text).unwrap();
        assert_eq!(file.variables[1].table, None);
        assert_eq!(file.variables[2].parents, vec!["x", "d"]);
    }

    #[test]
    fn errors_name_the_field() {
        let msg = |t: &str| parse_model(t).unwrap_err().to_string();
        assert!(
            msg(r#"{"variables": [{"name": "x", "states": ["a"]}], "decision_order": []}"#)
                .contains("kind")
        );
        assert!(msg(r#"{"variables": [], "decision_order": [], "extra": 1}"#).contains("extra"));
        assert!(msg(r#"{"variables": []}"#).contains("decision_order"));
        let wrong_type = r#"{"variables": [{"name": "x", "kind": "chance", "states": ["a"], "table": "p"}],
                            "decision_order": []}"#;
        assert!(msg(wrong_type).contains("variables[0].table"));
        let bad_parent = r#"{"variables": [{"name": "u", "kind": "utility", "parents": ["y"], "table": [1]}],
                             "decision_order": []}"#;
        assert!(msg(bad_parent).contains("variables[0].parents"));
        let bad_table = r#"{"variables": [{"name": "x", "kind": "chance", "states": ["a", "b"], "table": [1]}],
                            "decision_order": []}"#;
        assert!(msg(bad_table).contains("variables[0].table"));
        let decision_table = r#"{"variables": [{"name": "d", "kind": "decision", "states": ["a"], "table": [1]}],
                                 "decision_order": ["d"]}"#;
        assert!(msg(decision_table).contains("variables[0].table"));
        let dup = r#"{"variables": [{"name": "d", "kind": "decision", "states": ["a"]},
                                    {"name": "d", "kind": "decision", "states": ["a"]}],
                      "decision_order": ["d"]}"#;
        assert!(msg(dup).contains("variables[1].name"));
        let order = r#"{"variables": [], "decision_order": ["q"]}"#;
        assert!(msg(order).contains("decision_order[0]"));
    }

    #[test]
    fn parsing_does_not_validate() {
        let t = r#"{"variables": [{"name": "x", "kind": "chance", "states": ["a", "b"], "table": [0.5, 0.6]}],
                    "decision_order": []}"#;
        let id = parse_model(t).unwrap();
        assert!(matches!(id.ensure_valid(), Err(Error::Invalid(_))));
    }
}
