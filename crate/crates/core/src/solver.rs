//! One entry point for the three evaluation methods.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::jointree::{build_strong_join_tree_with_budget, DEFAULT_MEMORY_BUDGET};
use crate::model::InfluenceDiagram;
use crate::policy::PolicyTree;
use crate::propagation::Propagator;
use crate::search::{plan_search_order, search, Mode, SearchOptions, SolveStats};
use crate::upper_bound::build_upper_bound_id;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Collect on the strong join tree of the diagram itself.
    JoinTree,
    Exhaustive,
    DepthFirstBranchAndBound,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jointree" => Ok(Method::JoinTree),
            "exhaustive" => Ok(Method::Exhaustive),
            "dfbnb" => Ok(Method::DepthFirstBranchAndBound),
            other => Err(Error::Parse(format!("unknown method {other:?}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::JoinTree => "jointree",
            Method::Exhaustive => "exhaustive",
            Method::DepthFirstBranchAndBound => "dfbnb",
        })
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub meu: f64,
    /// Absent for [`Method::JoinTree`].
    pub policy: Option<PolicyTree>,
    /// Only `elapsed` is meaningful for [`Method::JoinTree`].
    pub stats: SolveStats,
}

pub fn solve(id: &InfluenceDiagram, method: Method) -> Result<Solution> {
    solve_with_budget(id, method, DEFAULT_MEMORY_BUDGET)
}

/// Solves `id` (no-forgetting is applied first). `budget` caps the table
/// entries of the join tree that is built.
pub fn solve_with_budget(id: &InfluenceDiagram, method: Method, budget: usize) -> Result<Solution> {
    let start = Instant::now();
    id.ensure_valid()?;
    let id = id.apply_no_forgetting()?;
    let mode = match method {
        Method::JoinTree => {
            let tree = build_strong_join_tree_with_budget(&id, &id.partial_order(), budget)?;
            let meu = Propagator::new(tree).collect()?;
            let stats = SolveStats {
                elapsed: start.elapsed(),
                ..SolveStats::default()
            };
            return Ok(Solution {
                meu,
                policy: None,
                stats,
            });
        }
        Method::Exhaustive => Mode::Exhaustive,
        Method::DepthFirstBranchAndBound => Mode::DepthFirstBranchAndBound,
    };
    let (ub, _) = build_upper_bound_id(&id)?;
    let tree = build_strong_join_tree_with_budget(&ub, &ub.partial_order(), budget)?;
    let plan = plan_search_order(&tree, &id.partial_order())?;
    let mut prop = Propagator::new(tree);
    prop.collect()?;
    let outcome = search(
        &mut prop,
        &plan,
        SearchOptions {
            mode,
            ..SearchOptions::default()
        },
    )?;
    let mut stats = outcome.stats;
    stats.elapsed = start.elapsed();
    Ok(Solution {
        meu: outcome.meu,
        policy: Some(outcome.policy),
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::read_model;

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::JoinTree,
            Method::Exhaustive,
            Method::DepthFirstBranchAndBound,
        ] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("bnb".parse::<Method>().is_err());
    }

    #[test]
    fn every_method_solves_the_weather_fixture() {
        let id = read_model(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/fixtures/weather.json"
        ))
        .unwrap();
        for m in [
            Method::JoinTree,
            Method::Exhaustive,
            Method::DepthFirstBranchAndBound,
        ] {
            let s = solve(&id, m).unwrap();
            assert!((s.meu - 5.2).abs() < 1e-12, "{m}: {}", s.meu);
            assert_eq!(s.policy.is_some(), m != Method::JoinTree);
        }
    }

    #[test]
    fn tiny_budget_is_reported() {
        let id = read_model(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/fixtures/weather.json"
        ))
        .unwrap();
        assert!(matches!(
            solve_with_budget(&id, Method::JoinTree, 1),
            Err(Error::MemoryBudget { .. })
        ));
    }
}
