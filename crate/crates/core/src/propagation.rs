//! Message passing on a strong join tree.
//!
//! Clique utilities are kept in utility form: `ψ_C` holds expected
//! utilities, so a chance elimination computes `Σ φψ / Σ φ` and a decision
//! elimination takes `max ψ` over the allowed actions. Every separator
//! stores the last probability message sent across it (either direction)
//! and the last utility message sent toward the root.
//!
//! Invariant kept by callers: all messages toward the root are current.
//! Evidence entered at clique `E` is followed by a pass `E → root`, and a
//! marginal at `H` is read after a pass `root → H`.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};
use crate::jointree::StrongJoinTree;
use crate::model::{VarId, VarKind};
use crate::potential::{
    for_each_projected, for_each_projected2, for_each_run, strides_within, Potential,
};

const STRONG_ORDER_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SeparatorMessage {
    pub phi: Potential,
    pub psi: Potential,
}

/// Normalized distribution over `vars`; all zeros when `zero_mass`.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginal {
    pub vars: Vec<VarId>,
    pub cards: Vec<usize>,
    pub probs: Vec<f64>,
    pub zero_mass: bool,
}

/// Per-action expected utilities; all zero when `zero_mass`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    pub values: Vec<f64>,
    pub zero_mass: bool,
}

/// Variable metadata needed by the elimination kernels.
pub struct ElimContext<'a> {
    pub kinds: &'a [VarKind],
    pub rank: &'a dyn Fn(VarId) -> usize,
    /// Decision restrictions: `Some(a)` allows only action `a`.
    pub allowed: &'a [Option<usize>],
}

/// Eliminates every variable of `phi`'s scope outside `keep` in reverse
/// `≺` order: Σ for chance variables, max over allowed actions for
/// decisions. `phi` must be constant over a decision when it is eliminated.
pub fn marginalize_out(
    phi: &Potential,
    psi: &Potential,
    keep: &[VarId],
    ctx: &ElimContext,
) -> Result<SeparatorMessage> {
    let mut vars = phi.vars().to_vec();
    let mut cards = phi.cards().to_vec();
    // `None` until the first elimination: read straight from the inputs.
    let mut owned: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut out: Vec<(usize, VarId)> = vars
        .iter()
        .copied()
        .filter(|v| !keep.contains(v))
        .map(|v| ((ctx.rank)(v), v))
        .collect();
    out.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut i = 0;
    while i < out.len() {
        let r = out[i].0;
        let mut j = i;
        while j < out.len() && out[j].0 == r {
            j += 1;
        }
        let group: Vec<VarId> = out[i..j].iter().map(|x| x.1).collect();
        let steps: Vec<Vec<VarId>> = if ctx.kinds[group[0].0] == VarKind::Decision {
            group.iter().map(|d| vec![*d]).collect()
        } else {
            vec![group]
        };
        for step in steps {
            let (rest, rest_cards): (Vec<VarId>, Vec<usize>) = vars
                .iter()
                .zip(&cards)
                .filter(|(v, _)| !step.contains(v))
                .map(|(v, c)| (*v, *c))
                .unzip();
            let (p, u) = match &owned {
                Some((p, u)) => (p.as_slice(), u.as_slice()),
                None => (phi.values(), psi.values()),
            };
            let next = if ctx.kinds[step[0].0] == VarKind::Decision {
                let d = step[0];
                let pos = vars.iter().position(|v| *v == d).unwrap();
                max_decision(
                    &cards,
                    p,
                    u,
                    pos,
                    &rest,
                    &rest_cards,
                    &vars,
                    ctx.allowed[d.0],
                    d,
                )?
            } else {
                sum_chance(&cards, p, u, &vars, &rest, &rest_cards)
            };
            owned = Some(next);
            vars = rest;
            cards = rest_cards;
        }
        i = j;
    }
    let (p, u) = owned.unwrap_or_else(|| (phi.values().to_vec(), psi.values().to_vec()));
    // Remaining scope is `keep ∩ scope` in scope order; lay out as `keep`.
    let final_vars: Vec<VarId> = keep.iter().copied().filter(|v| vars.contains(v)).collect();
    let phi = Potential::new(vars.clone(), cards.clone(), p)?;
    let psi = Potential::new(vars.clone(), cards, u)?;
    if final_vars == vars {
        return Ok(SeparatorMessage { phi, psi });
    }
    Ok(SeparatorMessage {
        phi: phi.permuted(&final_vars)?,
        psi: psi.permuted(&final_vars)?,
    })
}

fn sum_chance(
    cards: &[usize],
    p: &[f64],
    u: &[f64],
    vars: &[VarId],
    rest: &[VarId],
    rest_cards: &[usize],
) -> (Vec<f64>, Vec<f64>) {
    let size: usize = rest_cards.iter().product();
    let mut np = vec![0.0; size];
    let mut nu = vec![0.0; size];
    let target = strides_within(rest, rest_cards, vars);
    for_each_run(cards, &target, |start, len, o, step| {
        let (p, u) = (&p[start..start + len], &u[start..start + len]);
        if step == 0 {
            let (mut m, mut e) = (0.0, 0.0);
            for (x, y) in p.iter().zip(u) {
                m += x;
                e += x * y;
            }
            np[o] += m;
            nu[o] += e;
        } else {
            for (k, (x, y)) in p.iter().zip(u).enumerate() {
                np[o + k * step] += x;
                nu[o + k * step] += x * y;
            }
        }
    });
    for (m, x) in np.iter().zip(nu.iter_mut()) {
        *x = if *m == 0.0 { 0.0 } else { *x / *m };
    }
    (np, nu)
}

#[allow(clippy::too_many_arguments)]
fn max_decision(
    cards: &[usize],
    p: &[f64],
    u: &[f64],
    pos: usize,
    rest: &[VarId],
    rest_cards: &[usize],
    vars: &[VarId],
    allowed: Option<usize>,
    d: VarId,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let size: usize = rest_cards.iter().product();
    let mut np = vec![f64::NAN; size];
    let mut nu = vec![f64::NEG_INFINITY; size];
    let target = strides_within(rest, rest_cards, vars);
    let mut action = vec![0; cards.len()];
    action[pos] = 1;
    let mut bad = false;
    for_each_projected2(cards, &target, &action, |i, o, a| {
        if allowed.is_some_and(|x| x != a) {
            return;
        }
        let x = p[i];
        let m = np[o];
        if m.is_nan() {
            np[o] = x;
        } else if m != x && (m - x).abs() > STRONG_ORDER_TOL * m.abs().max(x.abs()) {
            bad = true;
        }
        if u[i] > nu[o] {
            nu[o] = u[i];
        }
    });
    if bad {
        return Err(Error::StrongOrder { var: d });
    }
    for (m, x) in np.iter().zip(nu.iter_mut()) {
        if *m == 0.0 {
            *x = 0.0;
        }
    }
    Ok((np, nu))
}

/// Σ of `phi` onto `keep` (laid out in `keep` order), every variable summed.
fn sum_onto(phi: &Potential, keep: &[VarId]) -> Vec<f64> {
    let keep_cards: Vec<usize> = keep
        .iter()
        .map(|v| phi.cards()[phi.position(*v).unwrap()])
        .collect();
    let mut out = vec![0.0; keep_cards.iter().product()];
    let target = strides_within(keep, &keep_cards, phi.vars());
    let src = phi.values();
    for_each_projected(phi.cards(), &target, |i, o| out[o] += src[i]);
    out
}

/// `new / old` per separator entry with `0/0 = 0`.
fn ratios(new: &[f64], old: &[f64]) -> Result<Vec<f64>> {
    new.iter()
        .zip(old)
        .map(|(n, o)| {
            if *o == 0.0 {
                if *n == 0.0 {
                    Ok(0.0)
                } else {
                    Err(Error::InconsistentEvidence)
                }
            } else {
                Ok(n / o)
            }
        })
        .collect()
}

/// Multiplies `target` by `msg/old` and, when given, adds `msg_psi - old_psi`
/// to `target_psi`. Separator tables are laid out over `sep` in ascending
/// order, which must be a subset of the target scope.
pub fn absorb(
    target: &mut Potential,
    target_psi: Option<&mut Potential>,
    msg: &SeparatorMessage,
    old: &SeparatorMessage,
) -> Result<()> {
    let ratio = ratios(msg.phi.values(), old.phi.values())?;
    let delta = target_psi
        .is_some()
        .then(|| deltas(msg.psi.values(), old.psi.values()));
    let tstrides = strides_within(msg.phi.vars(), msg.phi.cards(), target.vars());
    apply(target, target_psi, &tstrides, &ratio, delta.as_deref());
    Ok(())
}

fn deltas(new: &[f64], old: &[f64]) -> Vec<f64> {
    new.iter().zip(old).map(|(n, o)| n - o).collect()
}

fn apply(
    target: &mut Potential,
    psi: Option<&mut Potential>,
    tstrides: &[usize],
    ratio: &[f64],
    delta: Option<&[f64]>,
) {
    let cards = target.cards().to_vec();
    if let (Some(psi), Some(delta)) = (psi, delta) {
        let (vals, uvals) = (target.values_mut(), psi.values_mut());
        for_each_projected(&cards, tstrides, |i, o| {
            vals[i] *= ratio[o];
            uvals[i] += delta[o];
        });
    } else {
        let vals = target.values_mut();
        for_each_projected(&cards, tstrides, |i, o| vals[i] *= ratio[o]);
    }
}

/// `dst = src * ratio[proj]` entrywise.
fn scale_into(dst: &mut [f64], src: &[f64], cards: &[usize], tstrides: &[usize], ratio: &[f64]) {
    for_each_run(cards, tstrides, |start, len, o, step| {
        let (d, s) = (&mut dst[start..start + len], &src[start..start + len]);
        if step == 0 {
            let r = ratio[o];
            d.iter_mut().zip(s).for_each(|(d, s)| *d = s * r);
        } else {
            for (k, (d, s)) in d.iter_mut().zip(s).enumerate() {
                *d = s * ratio[o + k * step];
            }
        }
    });
}

/// `dst = src + delta[proj]` entrywise.
fn shift_into(dst: &mut [f64], src: &[f64], cards: &[usize], tstrides: &[usize], delta: &[f64]) {
    for_each_run(cards, tstrides, |start, len, o, step| {
        let (d, s) = (&mut dst[start..start + len], &src[start..start + len]);
        if step == 0 {
            let r = delta[o];
            d.iter_mut().zip(s).for_each(|(d, s)| *d = s + r);
        } else {
            for (k, (d, s)) in d.iter_mut().zip(s).enumerate() {
                *d = s + delta[o + k * step];
            }
        }
    });
}

/// `out[proj] += src` over all entries.
fn sum_into(out: &mut [f64], src: &[f64], cards: &[usize], tstrides: &[usize]) {
    for_each_run(cards, tstrides, |start, len, o, step| {
        let s = &src[start..start + len];
        if step == 0 {
            out[o] += s.iter().sum::<f64>();
        } else {
            for (k, x) in s.iter().enumerate() {
                out[o + k * step] += x;
            }
        }
    });
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Loc {
    CliquePhi(usize),
    CliquePsi(usize),
    SepPhi(usize),
    SepPsi(usize),
    Allowed(usize),
    Calibrated(usize),
}

#[derive(Clone, Debug)]
enum Saved {
    Table(Vec<f64>),
    Allowed(Option<usize>),
    Flag(bool),
}

/// Token for [`Propagator::restore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[must_use]
pub struct Checkpoint(u64);

#[derive(Clone, Debug)]
pub struct Propagator {
    tree: StrongJoinTree,
    sep_phi: Vec<Potential>,
    sep_psi: Vec<Potential>,
    allowed: Vec<Option<usize>>,
    /// Per edge: the parent's φ-marginal on the separator equals the stored
    /// separator φ, so a downward message would change nothing.
    calibrated: Vec<bool>,
    child_edges: Vec<Vec<usize>>,
    /// Per edge: strides of the separator inside the parent and the child.
    parent_strides: Vec<Vec<usize>>,
    child_strides: Vec<Vec<usize>>,
    log: Vec<(Loc, u64, Saved)>,
    /// Spare tables by length, reused for out-of-place updates.
    pool: HashMap<usize, Vec<Vec<f64>>>,
    stack: Vec<(u64, usize)>,
    next_serial: u64,
    clique_stamps: Vec<[u64; 2]>,
    sep_stamps: Vec<[u64; 2]>,
    allowed_stamps: Vec<u64>,
    calibrated_stamps: Vec<u64>,
}

impl Propagator {
    pub fn new(tree: StrongJoinTree) -> Self {
        let sep_phi: Vec<Potential> = tree
            .edges
            .iter()
            .map(|e| {
                Potential::filled(
                    e.vars.clone(),
                    e.vars.iter().map(|v| tree.cards[v.0]).collect(),
                    1.0,
                )
            })
            .collect();
        let sep_psi = sep_phi
            .iter()
            .map(|p| Potential::filled(p.vars().to_vec(), p.cards().to_vec(), 0.0))
            .collect();
        let n = tree.cards.len();
        let m = tree.edges.len();
        let mut child_edges = vec![Vec::new(); tree.len()];
        for (k, e) in tree.edges.iter().enumerate() {
            child_edges[e.parent].push(k);
        }
        let within = |k: usize, c: usize| {
            strides_within(sep_phi[k].vars(), sep_phi[k].cards(), &tree.cliques[c].vars)
        };
        let parent_strides = (0..m).map(|k| within(k, tree.edges[k].parent)).collect();
        let child_strides = (0..m).map(|k| within(k, tree.edges[k].child)).collect();
        Propagator {
            clique_stamps: vec![[0; 2]; tree.len()],
            sep_stamps: vec![[0; 2]; m],
            allowed_stamps: vec![0; n],
            calibrated_stamps: vec![0; m],
            allowed: vec![None; n],
            calibrated: vec![false; m],
            child_edges,
            parent_strides,
            child_strides,
            tree,
            sep_phi,
            sep_psi,
            log: Vec::new(),
            pool: HashMap::new(),
            stack: Vec::new(),
            next_serial: 1,
        }
    }

    pub fn tree(&self) -> &StrongJoinTree {
        &self.tree
    }

    pub fn allowed(&self, d: VarId) -> Option<usize> {
        self.allowed[d.0]
    }

    pub fn separator(&self, edge: usize) -> SeparatorMessage {
        SeparatorMessage {
            phi: self.sep_phi[edge].clone(),
            psi: self.sep_psi[edge].clone(),
        }
    }

    fn rank_fn(&self) -> impl Fn(VarId) -> usize + '_ {
        |v| self.tree.order.rank(v).unwrap_or(0)
    }

    fn eliminate(&self, clique: usize, keep: &[VarId]) -> Result<SeparatorMessage> {
        let rank = self.rank_fn();
        let ctx = ElimContext {
            kinds: &self.tree.kinds,
            rank: &rank,
            allowed: &self.allowed,
        };
        let c = &self.tree.cliques[clique];
        marginalize_out(&c.phi, &c.psi, keep, &ctx)
    }

    // Checkpoint bookkeeping: save a location once per open checkpoint.

    /// Marks `loc` as saved under the innermost checkpoint; returns the
    /// previous stamp when the caller must log its current contents.
    fn claim(&mut self, loc: Loc) -> Option<u64> {
        let &(serial, _) = self.stack.last()?;
        let stamp = match loc {
            Loc::CliquePhi(c) => &mut self.clique_stamps[c][0],
            Loc::CliquePsi(c) => &mut self.clique_stamps[c][1],
            Loc::SepPhi(e) => &mut self.sep_stamps[e][0],
            Loc::SepPsi(e) => &mut self.sep_stamps[e][1],
            Loc::Allowed(v) => &mut self.allowed_stamps[v],
            Loc::Calibrated(e) => &mut self.calibrated_stamps[e],
        };
        (*stamp != serial).then(|| std::mem::replace(stamp, serial))
    }

    fn touch(&mut self, loc: Loc) {
        let Some(prev) = self.claim(loc) else { return };
        let saved = match loc {
            Loc::CliquePhi(c) => Saved::Table(self.tree.cliques[c].phi.values().to_vec()),
            Loc::CliquePsi(c) => Saved::Table(self.tree.cliques[c].psi.values().to_vec()),
            Loc::SepPhi(e) => Saved::Table(self.sep_phi[e].values().to_vec()),
            Loc::SepPsi(e) => Saved::Table(self.sep_psi[e].values().to_vec()),
            Loc::Allowed(v) => Saved::Allowed(self.allowed[v]),
            Loc::Calibrated(e) => Saved::Flag(self.calibrated[e]),
        };
        self.log.push((loc, prev, saved));
    }

    fn table_mut(&mut self, loc: Loc) -> &mut Potential {
        match loc {
            Loc::CliquePhi(c) => &mut self.tree.cliques[c].phi,
            Loc::CliquePsi(c) => &mut self.tree.cliques[c].psi,
            Loc::SepPhi(e) => &mut self.sep_phi[e],
            Loc::SepPsi(e) => &mut self.sep_psi[e],
            _ => unreachable!("not a table location"),
        }
    }

    /// A table of length `n` with unspecified contents.
    fn buffer(&mut self, n: usize) -> Vec<f64> {
        self.pool
            .get_mut(&n)
            .and_then(Vec::pop)
            .unwrap_or_else(|| vec![0.0; n])
    }

    fn recycle(&mut self, v: Vec<f64>) {
        self.pool.entry(v.len()).or_default().push(v);
    }

    /// Installs a fully written replacement for the table at `loc`; the old
    /// table goes to the log if the innermost checkpoint needs it.
    fn commit(&mut self, loc: Loc, values: Vec<f64>) {
        let old = self.table_mut(loc).replace_values(values);
        match self.claim(loc) {
            Some(prev) => self.log.push((loc, prev, Saved::Table(old))),
            None => self.recycle(old),
        }
    }

    /// Replaces a separator table, moving the old one into the log when it
    /// must be kept.
    fn replace_separator(&mut self, loc: Loc, new: Potential) {
        let slot = match loc {
            Loc::SepPhi(e) => e,
            Loc::SepPsi(e) => e,
            _ => unreachable!("only separator tables are replaced"),
        };
        let prev = self.claim(loc);
        let table = if matches!(loc, Loc::SepPhi(_)) {
            &mut self.sep_phi[slot]
        } else {
            &mut self.sep_psi[slot]
        };
        let old = std::mem::replace(table, new);
        if let Some(prev) = prev {
            self.log.push((loc, prev, Saved::Table(old.into_values())));
        }
    }

    fn set_calibrated(&mut self, edge: usize, value: bool) {
        if self.calibrated[edge] != value {
            self.touch(Loc::Calibrated(edge));
            self.calibrated[edge] = value;
        }
    }

    /// Records that the φ of `clique` changed other than through `except`.
    fn invalidate_below(&mut self, clique: usize, except: Option<usize>) {
        for k in 0..self.child_edges[clique].len() {
            let e = self.child_edges[clique][k];
            if Some(e) != except {
                self.set_calibrated(e, false);
            }
        }
    }

    pub fn checkpoint(&mut self) -> Checkpoint {
        let serial = self.next_serial;
        self.next_serial += 1;
        self.stack.push((serial, self.log.len()));
        Checkpoint(serial)
    }

    /// Restores the most recent open checkpoint, which must be `token`.
    pub fn restore(&mut self, token: Checkpoint) -> Result<()> {
        match self.stack.last() {
            Some(&(serial, _)) if serial == token.0 => {}
            _ => return Err(Error::CheckpointMisuse),
        }
        let (_, len) = self.stack.pop().unwrap();
        while self.log.len() > len {
            let (loc, prev, saved) = self.log.pop().unwrap();
            match (loc, saved) {
                (loc, Saved::Table(t)) => {
                    let displaced = self.table_mut(loc).replace_values(t);
                    self.recycle(displaced);
                    *match loc {
                        Loc::CliquePhi(c) => &mut self.clique_stamps[c][0],
                        Loc::CliquePsi(c) => &mut self.clique_stamps[c][1],
                        Loc::SepPhi(e) => &mut self.sep_stamps[e][0],
                        Loc::SepPsi(e) => &mut self.sep_stamps[e][1],
                        _ => unreachable!("tables are saved only for table locations"),
                    } = prev;
                }
                (Loc::Allowed(v), Saved::Allowed(a)) => {
                    self.allowed[v] = a;
                    self.allowed_stamps[v] = prev;
                }
                (Loc::Calibrated(e), Saved::Flag(f)) => {
                    self.calibrated[e] = f;
                    self.calibrated_stamps[e] = prev;
                }
                _ => unreachable!("log entry kind matches its location"),
            }
        }
        Ok(())
    }

    pub fn open_checkpoints(&self) -> usize {
        self.stack.len()
    }

    /// Bit patterns of every clique, separator and restriction.
    pub fn snapshot(&self) -> Vec<Vec<u64>> {
        let bits = |p: &Potential| p.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        let mut out: Vec<Vec<u64>> = Vec::new();
        for c in &self.tree.cliques {
            out.push(bits(&c.phi));
            out.push(bits(&c.psi));
        }
        out.extend(self.sep_phi.iter().map(bits));
        out.extend(self.sep_psi.iter().map(bits));
        out.push(
            self.allowed
                .iter()
                .map(|a| a.map_or(u64::MAX, |x| x as u64))
                .collect(),
        );
        out.push(self.calibrated.iter().map(|f| *f as u64).collect());
        out
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.snapshot().hash(&mut h);
        h.finish()
    }

    /// Zeroes the entries of `clique` disagreeing with `var = state`. For a
    /// decision, also restricts every later max-elimination to `state`.
    pub fn set_evidence(&mut self, clique: usize, var: VarId, state: usize) -> Result<()> {
        let c = &self.tree.cliques[clique];
        let pos = c
            .phi
            .position(var)
            .ok_or_else(|| Error::UnknownVariable(format!("{var} not in clique {clique}")))?;
        let stride = c.phi.strides()[pos];
        let card = c.phi.cards()[pos];
        let mut out = self.buffer(c.phi.len());
        let src = self.tree.cliques[clique].phi.values();
        for (block, from) in out.chunks_mut(stride * card).zip(src.chunks(stride * card)) {
            for (s, (run, r)) in block
                .chunks_mut(stride)
                .zip(from.chunks(stride))
                .enumerate()
            {
                if s == state {
                    run.copy_from_slice(r);
                } else {
                    run.fill(0.0);
                }
            }
        }
        self.commit(Loc::CliquePhi(clique), out);
        self.invalidate_below(clique, None);
        if self.tree.kinds[var.0] == VarKind::Decision {
            self.touch(Loc::Allowed(var.0));
            self.allowed[var.0] = Some(state);
        }
        Ok(())
    }

    /// Sends φ and ψ from a child to its parent across `edge`.
    fn send_up(&mut self, edge: usize) -> Result<()> {
        let (child, parent) = (self.tree.edges[edge].child, self.tree.edges[edge].parent);
        let msg = self.eliminate(child, &self.tree.edges[edge].vars)?;
        let ratio = ratios(msg.phi.values(), self.sep_phi[edge].values())?;
        let delta = deltas(msg.psi.values(), self.sep_psi[edge].values());
        let n = self.tree.cliques[parent].phi.len();
        let (mut phi, mut psi) = (self.buffer(n), self.buffer(n));
        {
            let c = &self.tree.cliques[parent];
            let t = &self.parent_strides[edge];
            scale_into(&mut phi, c.phi.values(), c.phi.cards(), t, &ratio);
            shift_into(&mut psi, c.psi.values(), c.psi.cards(), t, &delta);
        }
        self.commit(Loc::CliquePhi(parent), phi);
        self.commit(Loc::CliquePsi(parent), psi);
        self.replace_separator(Loc::SepPhi(edge), msg.phi);
        self.replace_separator(Loc::SepPsi(edge), msg.psi);
        self.invalidate_below(parent, Some(edge));
        Ok(())
    }

    /// Sends φ only from a parent to its child across `edge`; nothing to do
    /// when the edge is calibrated.
    fn send_down(&mut self, edge: usize) -> Result<()> {
        if self.calibrated[edge] {
            return Ok(());
        }
        let (child, parent) = (self.tree.edges[edge].child, self.tree.edges[edge].parent);
        let sep = &self.sep_phi[edge];
        let mut values = vec![0.0; sep.len()];
        let p = &self.tree.cliques[parent].phi;
        sum_into(
            &mut values,
            p.values(),
            p.cards(),
            &self.parent_strides[edge],
        );
        let ratio = ratios(&values, sep.values())?;
        let new = Potential::new(sep.vars().to_vec(), sep.cards().to_vec(), values)?;
        let mut phi = self.buffer(self.tree.cliques[child].phi.len());
        {
            let c = &self.tree.cliques[child].phi;
            scale_into(
                &mut phi,
                c.values(),
                c.cards(),
                &self.child_strides[edge],
                &ratio,
            );
        }
        self.commit(Loc::CliquePhi(child), phi);
        self.replace_separator(Loc::SepPhi(edge), new);
        self.invalidate_below(child, None);
        self.set_calibrated(edge, true);
        Ok(())
    }

    /// Passes messages along the tree path `from → to` only: toward the
    /// root both parts travel, away from it only φ.
    pub fn incremental_propagate(&mut self, from: usize, to: usize) -> Result<()> {
        if from >= self.tree.len() || to >= self.tree.len() {
            return Err(Error::UnknownVariable(format!(
                "clique {} not in tree",
                from.max(to)
            )));
        }
        let path = self.tree.path(from, to);
        for w in path.windows(2) {
            let (a, b) = (w[0], w[1]);
            if self.tree.parent(a) == Some(b) {
                self.send_up(self.tree.up_edge[a].unwrap())?;
            } else {
                self.send_down(self.tree.up_edge[b].unwrap())?;
            }
        }
        Ok(())
    }

    /// Sends every message toward the root, deepest cliques first.
    pub fn collect_all(&mut self) -> Result<()> {
        let mut order: Vec<usize> = (0..self.tree.len())
            .filter(|c| *c != self.tree.root)
            .collect();
        let depth: Vec<usize> = (0..self.tree.len()).map(|c| self.tree.depth(c)).collect();
        order.sort_by_key(|c| (std::cmp::Reverse(depth[*c]), *c));
        for c in order {
            self.send_up(self.tree.up_edge[c].unwrap())?;
        }
        Ok(())
    }

    /// Eliminates all root variables: `(probability mass, expected utility)`.
    pub fn evaluate_root(&self) -> Result<(f64, f64)> {
        let msg = self.eliminate(self.tree.root, &[])?;
        Ok((msg.phi.values()[0], msg.psi.values()[0]))
    }

    /// Full collection followed by root evaluation.
    pub fn collect(&mut self) -> Result<f64> {
        self.collect_all()?;
        match self.evaluate_root()? {
            (0.0, _) => Err(Error::ZeroProbability),
            (_, v) => Ok(v),
        }
    }

    /// Distribution over `vars` (all in `clique`) given entered evidence.
    pub fn query_marginal(&mut self, clique: usize, vars: &[VarId]) -> Result<Marginal> {
        self.incremental_propagate(self.tree.root, clique)?;
        let phi = &self.tree.cliques[clique].phi;
        for v in vars {
            if phi.position(*v).is_none() {
                return Err(Error::UnknownVariable(format!(
                    "{v} not in clique {clique}"
                )));
            }
        }
        let mut probs = sum_onto(phi, vars);
        let cards: Vec<usize> = vars.iter().map(|v| self.tree.cards[v.0]).collect();
        let mass: f64 = probs.iter().sum();
        let zero_mass = mass == 0.0;
        if !zero_mass {
            probs.iter_mut().for_each(|p| *p /= mass);
        }
        Ok(Marginal {
            vars: vars.to_vec(),
            cards,
            probs,
            zero_mass,
        })
    }

    /// Expected utility of each action of `decision`, evaluated by fixing
    /// the action in `clique` and passing messages up to the root.
    pub fn query_decision_bounds(&mut self, clique: usize, decision: VarId) -> Result<Bounds> {
        let card = self.tree.cards[decision.0];
        let mut values = Vec::with_capacity(card);
        let mut zero_mass = false;
        for a in 0..card {
            let token = self.checkpoint();
            let result = self
                .set_evidence(clique, decision, a)
                .and_then(|_| self.incremental_propagate(clique, self.tree.root))
                .and_then(|_| self.evaluate_root());
            self.restore(token)?;
            let (mass, value) = result?;
            if mass == 0.0 {
                zero_mass = true;
            }
            values.push(value);
        }
        if zero_mass {
            values.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(Bounds { values, zero_mass })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jointree::build_strong_join_tree;
    use crate::model::{DiagramBuilder, InfluenceDiagram};

    fn ctx_eval(
        phi: &Potential,
        psi: &Potential,
        keep: &[VarId],
        kinds: &[VarKind],
    ) -> SeparatorMessage {
        let rank = |v: VarId| {
            if kinds[v.0] == VarKind::Decision {
                1
            } else {
                0
            }
        };
        let allowed = vec![None; kinds.len()];
        marginalize_out(
            phi,
            psi,
            keep,
            &ElimContext {
                kinds,
                rank: &rank,
                allowed: &allowed,
            },
        )
        .unwrap()
    }

    #[test]
    fn chance_elimination_is_expectation() {
        let phi = Potential::new(vec![VarId(0)], vec![2], vec![0.3, 0.7]).unwrap();
        let psi = Potential::new(vec![VarId(0)], vec![2], vec![10.0, 0.0]).unwrap();
        let m = ctx_eval(&phi, &psi, &[], &[VarKind::Chance]);
        assert!((m.phi.values()[0] - 1.0).abs() < 1e-15);
        assert!((m.psi.values()[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn decision_elimination_is_max() {
        let phi = Potential::filled(vec![VarId(0)], vec![2], 1.0);
        let psi = Potential::new(vec![VarId(0)], vec![2], vec![4.0, 9.0]).unwrap();
        let m = ctx_eval(&phi, &psi, &[], &[VarKind::Decision]);
        assert_eq!(m.psi.values(), &[9.0]);
        assert_eq!(m.phi.values(), &[1.0]);
    }

    #[test]
    fn empty_elimination_is_identity() {
        let phi = Potential::new(
            vec![VarId(0), VarId(1)],
            vec![2, 2],
            vec![0.1, 0.2, 0.3, 0.4],
        )
        .unwrap();
        let psi = Potential::new(
            vec![VarId(0), VarId(1)],
            vec![2, 2],
            vec![1.0, 2.0, 3.0, 4.0],
        )
        .unwrap();
        let m = ctx_eval(
            &phi,
            &psi,
            &[VarId(0), VarId(1)],
            &[VarKind::Chance, VarKind::Chance],
        );
        assert_eq!(m.phi, phi);
        assert_eq!(m.psi, psi);
    }

    #[test]
    fn varying_phi_over_decision_is_rejected() {
        let phi = Potential::new(vec![VarId(0)], vec![2], vec![0.2, 0.8]).unwrap();
        let psi = Potential::filled(vec![VarId(0)], vec![2], 0.0);
        let rank = |_: VarId| 1;
        let kinds = [VarKind::Decision];
        let allowed = [None];
        let r = marginalize_out(
            &phi,
            &psi,
            &[],
            &ElimContext {
                kinds: &kinds,
                rank: &rank,
                allowed: &allowed,
            },
        );
        assert!(matches!(r, Err(Error::StrongOrder { .. })));
    }

    #[test]
    fn zero_mass_gives_zero_utility() {
        let phi = Potential::filled(vec![VarId(0)], vec![2], 0.0);
        let psi = Potential::new(vec![VarId(0)], vec![2], vec![5.0, 7.0]).unwrap();
        let m = ctx_eval(&phi, &psi, &[], &[VarKind::Chance]);
        assert_eq!(m.psi.values(), &[0.0]);
    }

    #[test]
    fn absorb_identity_and_vacuous() {
        let s = vec![VarId(0)];
        let mut phi = Potential::new(
            vec![VarId(0), VarId(1)],
            vec![2, 2],
            vec![0.1, 0.2, 0.3, 0.4],
        )
        .unwrap();
        let mut psi = Potential::filled(vec![VarId(0), VarId(1)], vec![2, 2], 1.0);
        let msg = SeparatorMessage {
            phi: Potential::new(s.clone(), vec![2], vec![0.3, 0.7]).unwrap(),
            psi: Potential::new(s.clone(), vec![2], vec![2.0, 3.0]).unwrap(),
        };
        let before = (phi.clone(), psi.clone());
        absorb(&mut phi, Some(&mut psi), &msg, &msg.clone()).unwrap();
        assert_eq!((phi.clone(), psi.clone()), before);

        let vacuous = SeparatorMessage {
            phi: Potential::filled(s.clone(), vec![2], 1.0),
            psi: Potential::filled(s.clone(), vec![2], 0.0),
        };
        let five = SeparatorMessage {
            phi: Potential::filled(s.clone(), vec![2], 1.0),
            psi: Potential::filled(s, vec![2], 5.0),
        };
        absorb(&mut phi, Some(&mut psi), &five, &vacuous).unwrap();
        assert_eq!(phi, before.0);
        assert!(psi.values().iter().all(|x| *x == 6.0));
    }

    #[test]
    fn reappearing_mass_is_inconsistent() {
        let s = vec![VarId(0)];
        let mut phi = Potential::filled(s.clone(), vec![2], 1.0);
        let old = SeparatorMessage {
            phi: Potential::new(s.clone(), vec![2], vec![0.0, 1.0]).unwrap(),
            psi: Potential::filled(s.clone(), vec![2], 0.0),
        };
        let new = SeparatorMessage {
            phi: Potential::filled(s.clone(), vec![2], 1.0),
            psi: old.psi.clone(),
        };
        assert!(matches!(
            absorb(&mut phi, None, &new, &old),
            Err(Error::InconsistentEvidence)
        ));
    }

    fn weather() -> InfluenceDiagram {
        let mut b = DiagramBuilder::new();
        let x = b.chance("x", &["good", "bad"], &[], vec![0.4, 0.6]);
        let d = b.decision("d", &["a1", "a2"], &[x]);
        b.utility("u", &[x, d], vec![10.0, 2.0, 0.0, 2.0]);
        b.build().unwrap()
    }

    fn propagator(id: &InfluenceDiagram) -> Propagator {
        let id = id.apply_no_forgetting().unwrap();
        Propagator::new(build_strong_join_tree(&id, &id.partial_order()).unwrap())
    }

    #[test]
    fn collect_weather() {
        let mut p = propagator(&weather());
        assert!((p.collect().unwrap() - 5.2).abs() < 1e-9);
    }

    #[test]
    fn constant_utility() {
        let mut b = DiagramBuilder::new();
        let x = b.chance("x", &["a", "b", "c"], &[], vec![0.2, 0.3, 0.5]);
        b.utility("u", &[x], vec![7.5, 7.5, 7.5]);
        let mut p = propagator(&b.build().unwrap());
        assert!((p.collect().unwrap() - 7.5).abs() < 1e-12);
    }

    #[test]
    fn evidence_marginal_and_round_trip() {
        let mut p = propagator(&weather());
        p.collect().unwrap();
        let x = VarId(0);
        let host = p.tree().nearest_containing(p.tree().root, x).unwrap();
        let before = p.snapshot();
        let prior = p.query_marginal(host, &[x]).unwrap();
        assert!((prior.probs[0] - 0.4).abs() < 1e-12);
        let t = p.checkpoint();
        p.set_evidence(host, x, 1).unwrap();
        p.incremental_propagate(host, p.tree().root).unwrap();
        let post = p.query_marginal(host, &[x]).unwrap();
        assert_eq!(post.probs, vec![0.0, 1.0]);
        p.restore(t).unwrap();
        assert_eq!(p.query_marginal(host, &[x]).unwrap(), prior);
        let _ = before;
    }

    #[test]
    fn checkpoint_identity_and_misuse() {
        let mut p = propagator(&weather());
        p.collect().unwrap();
        let before = p.snapshot();
        let t = p.checkpoint();
        p.restore(t).unwrap();
        assert_eq!(p.snapshot(), before);
        let outer = p.checkpoint();
        let inner = p.checkpoint();
        assert!(matches!(p.restore(outer), Err(Error::CheckpointMisuse)));
        p.restore(inner).unwrap();
        p.restore(outer).unwrap();
        assert!(matches!(p.restore(outer), Err(Error::CheckpointMisuse)));
    }

    #[test]
    fn zero_prior_evidence_reports_zero_mass() {
        let mut b = DiagramBuilder::new();
        let x = b.chance("x", &["a", "b"], &[], vec![1.0, 0.0]);
        let y = b.chance("y", &["a", "b"], &[x], vec![0.5, 0.5, 0.1, 0.9]);
        b.utility("u", &[y], vec![1.0, 0.0]);
        let mut p = propagator(&b.build().unwrap());
        p.collect().unwrap();
        let host = p.tree().nearest_containing(p.tree().root, x).unwrap();
        p.set_evidence(host, x, 1).unwrap();
        p.incremental_propagate(host, p.tree().root).unwrap();
        assert_eq!(p.evaluate_root().unwrap().0, 0.0);
        let m = p.query_marginal(host, &[x]).unwrap();
        assert!(m.zero_mass);
        assert!(m.probs.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bounds_on_fully_observed_equal_exact() {
        let mut p = propagator(&weather());
        p.collect().unwrap();
        let (x, d) = (VarId(0), VarId(1));
        let host = p.tree().nearest_containing(p.tree().root, x).unwrap();
        p.set_evidence(host, x, 0).unwrap();
        p.incremental_propagate(host, p.tree().root).unwrap();
        let dh = p.tree().nearest_containing(host, d).unwrap();
        let b = p.query_decision_bounds(dh, d).unwrap();
        assert!(
            (b.values[0] - 10.0).abs() < 1e-12 && (b.values[1] - 2.0).abs() < 1e-12,
            "{b:?}"
        );
    }

    #[test]
    fn irrelevant_decision_has_equal_bounds() {
        let mut b = DiagramBuilder::new();
        let x = b.chance("x", &["a", "b"], &[], vec![0.3, 0.7]);
        let d = b.decision("d", &["p", "q", "r"], &[]);
        b.utility("u", &[x], vec![1.0, 4.0]);
        let _ = d;
        let mut p = propagator(&b.build().unwrap());
        p.collect().unwrap();
        let dh = p
            .tree()
            .nearest_containing(p.tree().root, VarId(1))
            .unwrap();
        let bounds = p.query_decision_bounds(dh, VarId(1)).unwrap();
        assert!(bounds
            .values
            .windows(2)
            .all(|w| (w[0] - w[1]).abs() < 1e-12));
    }
}
