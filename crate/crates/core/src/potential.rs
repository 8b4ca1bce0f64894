//! Dense real-valued tables over an ordered variable scope.
//!
//! Layout: for scope `(V_1, .., V_m)` the flat index is
//! `((c_1 * |V_2| + c_2) * |V_3| + ...) + c_m`, first variable slowest.

use crate::error::{Error, Result};
use crate::model::VarId;

#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    vars: Vec<VarId>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Potential {
    pub fn new(vars: Vec<VarId>, cards: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if vars.len() != cards.len() {
            return Err(Error::Shape(format!(
                "{} variables but {} cardinalities",
                vars.len(),
                cards.len()
            )));
        }
        let size: usize = cards.iter().product();
        if size != values.len() {
            return Err(Error::Shape(format!(
                "scope {:?} needs {} entries, got {}",
                vars,
                size,
                values.len()
            )));
        }
        Ok(Potential {
            vars,
            cards,
            values,
        })
    }

    pub fn filled(vars: Vec<VarId>, cards: Vec<usize>, value: f64) -> Self {
        let size = cards.iter().product();
        Potential {
            vars,
            cards,
            values: vec![value; size],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Potential {
            vars: Vec::new(),
            cards: Vec::new(),
            values: vec![value],
        }
    }

    pub fn vars(&self) -> &[VarId] {
        &self.vars
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Swaps in a table of the same length, returning the old one.
    pub fn replace_values(&mut self, values: Vec<f64>) -> Vec<f64> {
        assert_eq!(
            values.len(),
            self.values.len(),
            "replacement table has the wrong length"
        );
        std::mem::replace(&mut self.values, values)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn position(&self, var: VarId) -> Option<usize> {
        self.vars.iter().position(|&v| v == var)
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.cards)
    }

    pub fn index_of(&self, states: &[usize]) -> usize {
        flat_index(&self.cards, states)
    }

    /// Value at the configuration picked out of a full assignment.
    pub fn lookup(&self, state_of: impl Fn(VarId) -> usize) -> f64 {
        let mut idx = 0;
        for (v, c) in self.vars.iter().zip(&self.cards) {
            idx = idx * c + state_of(*v);
        }
        self.values[idx]
    }

    /// Re-lays the table out over `order`, a permutation of the scope.
    pub fn permuted(&self, order: &[VarId]) -> Result<Potential> {
        if order.len() != self.vars.len() {
            return Err(Error::Shape(format!(
                "{:?} is not a permutation of {:?}",
                order, self.vars
            )));
        }
        let mut cards = Vec::with_capacity(order.len());
        for v in order {
            let p = self
                .position(*v)
                .ok_or_else(|| Error::Shape(format!("{v} not in scope {:?}", self.vars)))?;
            cards.push(self.cards[p]);
        }
        let target_strides = strides_within(order, &cards, &self.vars);
        let mut values = vec![0.0; self.values.len()];
        for_each_projected(&self.cards, &target_strides, |i, o| {
            values[o] = self.values[i]
        });
        Ok(Potential {
            vars: order.to_vec(),
            cards,
            values,
        })
    }
}

pub fn strides(cards: &[usize]) -> Vec<usize> {
    let mut s = vec![1; cards.len()];
    for k in (0..cards.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * cards[k + 1];
    }
    s
}

pub fn flat_index(cards: &[usize], states: &[usize]) -> usize {
    states.iter().zip(cards).fold(0, |acc, (s, c)| acc * c + s)
}

/// Decodes a flat index into per-variable states.
pub fn decode_index(cards: &[usize], mut idx: usize) -> Vec<usize> {
    let mut out = vec![0; cards.len()];
    for k in (0..cards.len()).rev() {
        out[k] = idx % cards[k];
        idx /= cards[k];
    }
    out
}

/// Strides of the sub-scope `sub` (laid out over `sub_cards`) expressed per
/// position of `scope`; variables of `scope` absent from `sub` get stride 0.
pub fn strides_within(sub: &[VarId], sub_cards: &[usize], scope: &[VarId]) -> Vec<usize> {
    let sub_strides = strides(sub_cards);
    scope
        .iter()
        .map(|v| {
            sub.iter()
                .position(|s| s == v)
                .map_or(0, |p| sub_strides[p])
        })
        .collect()
}

/// Walks every flat index of a table with cardinalities `cards`, calling
/// `f(index, projected)` where `projected` is the dot product of the
/// configuration with `target_strides`.
pub fn for_each_projected(
    cards: &[usize],
    target_strides: &[usize],
    mut f: impl FnMut(usize, usize),
) {
    let n = cards.len();
    if n == 0 {
        f(0, 0);
        return;
    }
    let total: usize = cards.iter().product();
    if total == 0 {
        return;
    }
    let last = n - 1;
    let (cl, sl) = (cards[last], target_strides[last]);
    let mut counter = vec![0usize; n];
    let mut base = 0usize;
    let mut i = 0usize;
    loop {
        let mut o = base;
        for k in 0..cl {
            f(i + k, o);
            o += sl;
        }
        i += cl;
        if i >= total {
            return;
        }
        let mut d = last;
        loop {
            d -= 1;
            counter[d] += 1;
            base += target_strides[d];
            if counter[d] < cards[d] {
                break;
            }
            base -= target_strides[d] * cards[d];
            counter[d] = 0;
        }
    }
}

/// Run-wise form of [`for_each_projected`]: calls `f(start, len, o, step)`
/// for consecutive source entries `start..start + len` whose projected
/// indices are `o, o + step, ..`. Runs are as long as the trailing
/// dimensions allow, so kernels can work on contiguous slices.
pub fn for_each_run(
    cards: &[usize],
    target_strides: &[usize],
    mut f: impl FnMut(usize, usize, usize, usize),
) {
    let n = cards.len();
    if n == 0 {
        f(0, 1, 0, 0);
        return;
    }
    let total: usize = cards.iter().product();
    if total == 0 {
        return;
    }
    let mut k = n;
    while k > 0 && target_strides[k - 1] == 0 {
        k -= 1;
    }
    let (outer, len, step) = if k < n {
        (k, cards[k..].iter().product(), 0)
    } else {
        // Merge trailing dimensions that project contiguously.
        let mut k = n - 1;
        while k > 0 && target_strides[k - 1] == target_strides[k] * cards[k] {
            k -= 1;
        }
        (k, cards[k..].iter().product(), target_strides[n - 1])
    };
    for_each_projected(&cards[..outer], &target_strides[..outer], |i, o| {
        f(i * len, len, o, step)
    });
}

/// As [`for_each_projected`] with a second projection `o2` over `strides2`.
pub fn for_each_projected2(
    cards: &[usize],
    strides1: &[usize],
    strides2: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let n = cards.len();
    if n == 0 {
        f(0, 0, 0);
        return;
    }
    let total: usize = cards.iter().product();
    if total == 0 {
        return;
    }
    let last = n - 1;
    let (cl, s1, s2) = (cards[last], strides1[last], strides2[last]);
    let mut counter = vec![0usize; n];
    let (mut b1, mut b2) = (0usize, 0usize);
    let mut i = 0usize;
    loop {
        let (mut o1, mut o2) = (b1, b2);
        for k in 0..cl {
            f(i + k, o1, o2);
            o1 += s1;
            o2 += s2;
        }
        i += cl;
        if i >= total {
            return;
        }
        let mut d = last;
        loop {
            d -= 1;
            counter[d] += 1;
            b1 += strides1[d];
            b2 += strides2[d];
            if counter[d] < cards[d] {
                break;
            }
            b1 -= strides1[d] * cards[d];
            b2 -= strides2[d] * cards[d];
            counter[d] = 0;
        }
    }
}
