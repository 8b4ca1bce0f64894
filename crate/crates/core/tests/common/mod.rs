//! Shared helpers for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use infdiag::maze::{build_maze_id, MazeSpec, Variant};
use infdiag::{DiagramBuilder, InfluenceDiagram, VarId, VarKind};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn maze(name: &str, stages: usize, variant: Variant) -> InfluenceDiagram {
    let text = std::fs::read_to_string(fixture(&format!("maze_{name}.txt"))).unwrap();
    build_maze_id(&MazeSpec::parse(&text, stages, variant).unwrap()).unwrap()
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn random_row(rng: &mut StdRng) -> [f64; 2] {
    if rng.gen_bool(0.15) {
        // Deterministic rows exercise zero-probability branches.
        if rng.gen_bool(0.5) {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        }
    } else {
        let p = rng.gen_range(1..20) as f64 / 20.0;
        [p, 1.0 - p]
    }
}

fn pick_parents(rng: &mut StdRng, pool: &[VarId], p: f64, cap: usize) -> Vec<VarId> {
    let mut out: Vec<VarId> = pool.iter().copied().filter(|_| rng.gen_bool(p)).collect();
    while out.len() > cap {
        out.remove(rng.gen_range(0..out.len()));
    }
    out
}

/// A valid diagram with 1 to 8 binary chance variables, up to 2 decisions
/// with 2 or 3 actions, and one utility node; decisions are interleaved with
/// the chance variables in declaration order, which is the decision order.
pub fn random_diagram(seed: u64) -> InfluenceDiagram {
    let mut rng = StdRng::seed_from_u64(seed);
    let n_chance = rng.gen_range(1..=8);
    let n_dec = rng.gen_range(0..=2);
    let mut kinds = vec![VarKind::Chance; n_chance];
    for _ in 0..n_dec {
        let at = rng.gen_range(0..=kinds.len());
        kinds.insert(at, VarKind::Decision);
    }
    let mut b = DiagramBuilder::new();
    let mut declared: Vec<VarId> = Vec::new();
    let mut cards: Vec<usize> = Vec::new();
    let mut decisions = Vec::new();
    let mut chance = Vec::new();
    for (k, kind) in kinds.iter().enumerate() {
        let id = if *kind == VarKind::Chance {
            let parents = pick_parents(&mut rng, &declared, 0.35, 3);
            let rows: usize = parents.iter().map(|p| cards[p.0]).product();
            let table = (0..rows).flat_map(|_| random_row(&mut rng)).collect();
            let id = b.chance(&format!("c{k}"), &["f", "t"], &parents, table);
            cards.push(2);
            chance.push(id);
            id
        } else {
            let parents = pick_parents(&mut rng, &declared, 0.5, 3);
            let card = rng.gen_range(2..=3);
            let id = b.decision(&format!("d{k}"), &["a0", "a1", "a2"][..card], &parents);
            cards.push(card);
            decisions.push(id);
            id
        };
        declared.push(id);
    }
    let mut parents: Vec<VarId> = decisions
        .iter()
        .copied()
        .filter(|_| rng.gen_bool(0.8))
        .collect();
    let extra = rng.gen_range(1..=2.min(chance.len()));
    for _ in 0..extra {
        let c = chance[rng.gen_range(0..chance.len())];
        if !parents.contains(&c) {
            parents.push(c);
        }
    }
    parents.sort();
    let size: usize = parents.iter().map(|p| cards[p.0]).product();
    let table = (0..size).map(|_| rng.gen_range(-10..=10) as f64).collect();
    b.utility("u", &parents, table);
    b.build().expect("generated diagrams are valid")
}

/// Joint distribution over all chance variables (ascending id, row-major)
/// with every decision fixed by `action`.
pub fn chance_joint(id: &InfluenceDiagram, action: &dyn Fn(VarId) -> usize) -> Vec<f64> {
    let chance = id.chance_vars();
    let cards: Vec<usize> = chance.iter().map(|v| id.card(*v)).collect();
    let total: usize = cards.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut state = vec![0usize; id.len()];
    for idx in 0..total {
        let mut r = idx;
        for (k, v) in chance.iter().enumerate().rev() {
            state[v.0] = r % cards[k];
            r /= cards[k];
        }
        for v in id.ids_of(VarKind::Decision) {
            state[v.0] = action(v);
        }
        out.push(id.cpts().map(|(_, t)| t.lookup(|v| state[v.0])).product());
    }
    out
}
