mod common;

use std::collections::BTreeSet;

use common::{chance_joint, close, random_diagram};
use infdiag::enumerate::enumerate_meu;
use infdiag::graph::{d_separated, NodeSet};
use infdiag::jointree::build_strong_join_tree;
use infdiag::model::PartialOrder;
use infdiag::solver::{solve, Method};
use infdiag::upper_bound::{build_upper_bound_id, candidate_pool, compute_sis};
use infdiag::{InfluenceDiagram, VarId, VarKind};
use proptest::prelude::*;

fn utility_descendants(id: &InfluenceDiagram, d: VarId) -> NodeSet {
    id.digraph()
        .descendants(d.0)
        .into_iter()
        .filter(|v| id.kind(VarId(*v)) == VarKind::Utility)
        .collect()
}

fn family(id: &InfluenceDiagram, d: VarId) -> NodeSet {
    let mut f: NodeSet = id.parents(d).iter().map(|p| p.0).collect();
    f.insert(d.0);
    f
}

/// Whether `sis ∪ {d}` separates the earlier decision families from the
/// utility descendants of `d`.
fn sufficient(id: &InfluenceDiagram, j: usize, sis: &NodeSet) -> bool {
    let order = id.decision_order();
    let d = order[j];
    let targets = utility_descendants(id, d);
    let mut z = sis.clone();
    z.insert(d.0);
    let mut sources = NodeSet::new();
    for &dk in &order[..=j] {
        sources.extend(family(id, dk));
    }
    let sources: NodeSet = sources
        .difference(&z)
        .copied()
        .filter(|v| !targets.contains(v))
        .collect();
    if targets.is_empty() || sources.is_empty() {
        return true;
    }
    d_separated(&id.digraph(), &sources, &targets, &z).unwrap()
}

fn subsets_below(items: &[usize], size: usize) -> Vec<NodeSet> {
    if size == 0 {
        return Vec::new();
    }
    let mut out = vec![NodeSet::new()];
    for &x in items {
        let more: Vec<NodeSet> = out
            .iter()
            .filter(|s| s.len() + 1 < size)
            .map(|s| {
                let mut t = s.clone();
                t.insert(x);
                t
            })
            .collect();
        out.extend(more);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn solvers_match_the_oracle(seed in any::<u64>()) {
        let id = random_diagram(seed);
        let (expected, _) = enumerate_meu(&id).unwrap();
        for m in [Method::JoinTree, Method::Exhaustive, Method::DepthFirstBranchAndBound] {
            let got = solve(&id, m).unwrap().meu;
            prop_assert!(close(got, expected, 1e-9), "{m}: {got} vs {expected}");
        }
    }

    #[test]
    fn upper_bound_never_lowers_the_meu(seed in any::<u64>()) {
        let id = random_diagram(seed).apply_no_forgetting().unwrap();
        let (ub, _) = build_upper_bound_id(&id).unwrap();
        let (base, _) = enumerate_meu(&id).unwrap();
        let (upper, _) = enumerate_meu(&ub).unwrap();
        prop_assert!(upper >= base - 1e-12, "{upper} < {base}");
    }

    #[test]
    fn clique_potentials_multiply_to_a_joint(seed in any::<u64>(), pick in any::<u64>()) {
        let id = random_diagram(seed).apply_no_forgetting().unwrap();
        let tree = build_strong_join_tree(&id, &id.partial_order()).unwrap();
        prop_assert!(tree.has_running_intersection());
        prop_assert!(tree.has_strong_root());
        let vars: Vec<VarId> = id.variables().iter().filter(|v| v.kind != VarKind::Utility).map(|v| v.id).collect();
        let action = |d: VarId| (pick as usize >> (d.0 % 32)) % id.card(d);
        let chance: Vec<VarId> = vars.iter().copied().filter(|v| id.kind(*v) == VarKind::Chance).collect();
        let mut state = vec![0usize; id.len()];
        let mut total = 0.0;
        for idx in 0..(1usize << chance.len()) {
            for (k, v) in chance.iter().enumerate() {
                state[v.0] = (idx >> k) & 1;
            }
            for v in &vars {
                if id.kind(*v) == VarKind::Decision {
                    state[v.0] = action(*v);
                }
            }
            total += tree.cliques.iter().map(|c| c.phi.lookup(|v| state[v.0])).product::<f64>();
        }
        prop_assert!((total - 1.0).abs() < 1e-9, "{total}");
    }

    #[test]
    fn decision_families_screen_off_the_history(seed in any::<u64>()) {
        let id = random_diagram(seed).apply_no_forgetting().unwrap();
        let (ub, _) = build_upper_bound_id(&id).unwrap();
        let po = PartialOrder::of(&id);
        let g = ub.digraph();
        for (j, &d) in po.decisions().iter().enumerate() {
            let targets = utility_descendants(&ub, d);
            let fa = family(&ub, d);
            let mut history = NodeSet::new();
            for k in 0..=j {
                history.extend(po.info_set(k).iter().map(|v| v.0));
            }
            history.extend(po.decisions()[..j].iter().map(|v| v.0));
            let outside: NodeSet = history.difference(&fa).copied().collect();
            if targets.is_empty() || outside.is_empty() {
                continue;
            }
            prop_assert!(d_separated(&g, &outside, &targets, &fa).unwrap(), "decision {d}");
        }
    }

    #[test]
    fn sis_is_sufficient_and_minimum(seed in any::<u64>()) {
        // Replays the construction step by step to test each SIS in the
        // diagram it was computed on.
        let id = random_diagram(seed).apply_no_forgetting().unwrap();
        let (_, results) = build_upper_bound_id(&id).unwrap();
        let mut cur = id.clone();
        for j in (0..id.decision_order().len()).rev() {
            let r = compute_sis(&cur, j).unwrap();
            prop_assert_eq!(&r.sis, &results[j].sis);
            let sis: NodeSet = r.sis.iter().map(|v| v.0).collect();
            prop_assert!(sufficient(&cur, j, &sis));
            let d = r.decision;
            let nd: BTreeSet<usize> = cur.digraph().descendants(d.0);
            prop_assert!(r.candidate_pool.is_superset(&candidate_pool(&cur, j)));
            let candidates: Vec<usize> = r
                .candidate_pool
                .iter()
                .map(|v| v.0)
                .filter(|v| *v != d.0 && !nd.contains(v))
                .collect();
            if candidates.len() <= 12 {
                for s in subsets_below(&candidates, sis.len()) {
                    prop_assert!(!sufficient(&cur, j, &s), "smaller set {s:?} than {sis:?} suffices");
                }
            }
            let extra: Vec<VarId> = r.added_arcs.iter().map(|(v, _)| *v).collect();
            cur = infdiag::upper_bound::reduce(&cur.with_information_arcs(d, &extra));
        }
    }

    #[test]
    fn upper_bound_keeps_the_chance_joint(seed in any::<u64>(), pick in any::<u64>()) {
        let id = random_diagram(seed).apply_no_forgetting().unwrap();
        let (ub, _) = build_upper_bound_id(&id).unwrap();
        let action = |d: VarId| (pick as usize >> (d.0 % 32)) % id.card(d);
        prop_assert_eq!(chance_joint(&id, &action), chance_joint(&ub, &action));
    }
}
