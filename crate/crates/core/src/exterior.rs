//! Coordinate basis of the exterior algebra: `dx_J` for sorted axis subsets `J`.

use std::fmt;

/// Sorted subset of coordinate axes, stored as a bitmask (axis `i` is bit `i`).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AxisSet(u8);

impl AxisSet {
    pub const EMPTY: AxisSet = AxisSet(0);

    pub fn from_axes(axes: &[usize]) -> Self {
        AxisSet(axes.iter().fold(0u8, |m, &a| m | (1 << a)))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, axis: usize) -> bool {
        self.0 & (1 << axis) != 0
    }

    pub fn insert(self, axis: usize) -> Self {
        AxisSet(self.0 | (1 << axis))
    }

    pub fn remove(self, axis: usize) -> Self {
        AxisSet(self.0 & !(1 << axis))
    }

    pub fn axes(self) -> impl Iterator<Item = usize> {
        (0..8).filter(move |&a| self.contains(a))
    }

    /// Number of members strictly below `axis`.
    pub fn rank_of(self, axis: usize) -> usize {
        (self.0 & ((1u8 << axis) - 1)).count_ones() as usize
    }

    /// `dx_l ∧ dx_J = sign · dx_{J ∪ {l}}`.
    pub fn wedge(self, l: usize) -> Option<(i32, AxisSet)> {
        if self.contains(l) {
            None
        } else {
            Some((parity(self.rank_of(l)), self.insert(l)))
        }
    }

    /// `ι_k dx_J = sign · dx_{J ∖ {k}}` (interior product with `∂/∂x_k`).
    pub fn contract(self, k: usize) -> Option<(i32, AxisSet)> {
        if self.contains(k) {
            Some((parity(self.rank_of(k)), self.remove(k)))
        } else {
            None
        }
    }
}

impl fmt::Debug for AxisSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.axes()).finish()
    }
}

fn parity(k: usize) -> i32 {
    if k.is_multiple_of(2) {
        1
    } else {
        -1
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// All `q`-subsets of `{0..n}` in lexicographic order of their sorted members.
pub fn subsets(n: usize, q: usize) -> Vec<AxisSet> {
    fn rec(start: usize, n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<AxisSet>) {
        if left == 0 {
            out.push(AxisSet::from_axes(cur));
            return;
        }
        for a in start..n {
            if n - a < left {
                break;
            }
            cur.push(a);
            rec(a + 1, n, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if q <= n {
        rec(0, n, q, &mut Vec::new(), &mut out);
    }
    out
}

/// Coefficient of `dx_{J'}` in `[dx_l∧, ι_k] dx_J = dx_l∧ι_k dx_J − ι_k(dx_l∧dx_J)`.
///
/// Diagonal (`l = k`): `+1` if `k ∈ J`, `−1` otherwise. Off-diagonal: the two
/// terms of the commutator coincide, giving `±2` when `k ∈ J`, `l ∉ J` and
/// `J' = (J ∖ {k}) ∪ {l}`.
pub fn commutator_coefficient(j: AxisSet, j_out: AxisSet, l: usize, k: usize) -> i32 {
    let mut coef = 0;
    if let Some((s1, a)) = j.contract(k) {
        if let Some((s2, b)) = a.wedge(l) {
            if b == j_out {
                coef += s1 * s2;
            }
        }
    }
    if let Some((s1, a)) = j.wedge(l) {
        if let Some((s2, b)) = a.contract(k) {
            if b == j_out {
                coef -= s1 * s2;
            }
        }
    }
    coef
}
