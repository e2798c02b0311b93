//! Irreducible permutations, the two Rauzy operations, their unimodular
//! matrices, and Rauzy classes (closure under both operations).
//!
//! Permutations are 1-indexed throughout the public API; `image[j-1] = pi(j)`.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// A permutation of `{1..m}`, the combinatorial datum of an interval exchange.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    image: Vec<usize>,
}

impl Permutation {
    /// Builds a permutation from its image sequence `(pi(1), ..., pi(m))`.
    pub fn new(image: Vec<usize>) -> Result<Self> {
        let m = image.len();
        if m == 0 {
            return Err(Error::validation("empty permutation"));
        }
        let mut seen = vec![false; m + 1];
        for &v in &image {
            if v < 1 || v > m {
                return Err(Error::validation(format!(
                    "permutation value {v} out of range 1..={m}"
                )));
            }
            if seen[v] {
                return Err(Error::validation(format!(
                    "permutation value {v} repeated; image is not a bijection"
                )));
            }
            seen[v] = true;
        }
        Ok(Permutation { image })
    }

    /// Number of symbols `m`.
    pub fn size(&self) -> usize {
        self.image.len()
    }

    /// `pi(j)` for `1 <= j <= m`.
    pub fn apply(&self, j: usize) -> usize {
        self.image[j - 1]
    }

    /// `pi^{-1}(v)` for `1 <= v <= m`.
    pub fn invert(&self, v: usize) -> usize {
        // m is small everywhere this is used; a linear scan keeps the type thin.
        self.image.iter().position(|&x| x == v).unwrap() + 1
    }

    pub fn image(&self) -> &[usize] {
        &self.image
    }

    /// No proper prefix `{1..k}`, `k < m`, is invariant.
    pub fn is_irreducible(&self) -> bool {
        let m = self.size();
        let mut max_seen = 0usize;
        for k in 1..m {
            max_seen = max_seen.max(self.apply(k));
            if max_seen == k {
                return false;
            }
        }
        true
    }

    fn require_operand(&self) -> Result<()> {
        if self.size() < 2 {
            return Err(Error::validation(
                "Rauzy operations need at least two symbols",
            ));
        }
        if !self.is_irreducible() {
            return Err(Error::validation(format!(
                "permutation {self} is reducible"
            )));
        }
        Ok(())
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation{self}")
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.image.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// `is_irreducible` as a free function, mirroring the operation vocabulary.
pub fn is_irreducible(pi: &Permutation) -> bool {
    pi.is_irreducible()
}

/// The `a` operation.
pub fn rauzy_a(pi: &Permutation) -> Result<Permutation> {
    pi.require_operand()?;
    let m = pi.size();
    let k = pi.invert(m);
    let mut image = Vec::with_capacity(m);
    for j in 1..=m {
        let v = if j <= k {
            pi.apply(j)
        } else if j == k + 1 {
            pi.apply(m)
        } else {
            pi.apply(j - 1)
        };
        image.push(v);
    }
    let out = Permutation { image };
    debug_assert!(out.is_irreducible());
    Ok(out)
}

/// The `b` operation.
pub fn rauzy_b(pi: &Permutation) -> Result<Permutation> {
    pi.require_operand()?;
    let m = pi.size();
    let pm = pi.apply(m);
    let mut image = Vec::with_capacity(m);
    for j in 1..=m {
        let pj = pi.apply(j);
        let v = if pj <= pm {
            pj
        } else if pj < m {
            pj + 1
        } else {
            pm + 1
        };
        image.push(v);
    }
    let out = Permutation { image };
    debug_assert!(out.is_irreducible());
    Ok(out)
}

/// Dense integer matrix with exact arithmetic, sized for small `m`.
#[derive(Clone, PartialEq, Eq)]
pub struct IntMatrix {
    n: usize,
    data: Vec<i64>,
}

impl IntMatrix {
    pub fn zero(n: usize) -> Self {
        IntMatrix {
            n,
            data: vec![0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zero(n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: i64) {
        self.data[i * self.n + j] = v;
    }

    pub fn add_at(&mut self, i: usize, j: usize, v: i64) {
        self.data[i * self.n + j] += v;
    }

    pub fn row(&self, i: usize) -> &[i64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Exact determinant by fraction-free (Bareiss) elimination in i128.
    pub fn det(&self) -> i128 {
        let n = self.n;
        let mut a: Vec<i128> = self.data.iter().map(|&x| x as i128).collect();
        let mut sign = 1i128;
        let mut prev = 1i128;
        for k in 0..n {
            if a[k * n + k] == 0 {
                let pivot = (k + 1..n).find(|&r| a[r * n + k] != 0);
                match pivot {
                    Some(r) => {
                        for c in 0..n {
                            a.swap(k * n + c, r * n + c);
                        }
                        sign = -sign;
                    }
                    None => return 0,
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    a[i * n + j] =
                        (a[i * n + j] * a[k * n + k] - a[i * n + k] * a[k * n + j]) / prev;
                }
                a[i * n + k] = 0;
            }
            prev = a[k * n + k];
        }
        sign * a[(n - 1) * n + (n - 1)]
    }
}

impl fmt::Debug for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "IntMatrix {}x{} [", self.n, self.n)?;
        for i in 0..self.n {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// The matrix attached to the `a` operation:
/// `sum_{i<=k} E_ii + E_{m,k+1} + sum_{i=k}^{m-1} E_{i,i+1}` with `k = pi^{-1}(m)`.
pub fn matrix_a(pi: &Permutation) -> Result<IntMatrix> {
    pi.require_operand()?;
    let m = pi.size();
    let k = pi.invert(m); // k < m for irreducible pi with m >= 2
    let mut a = IntMatrix::zero(m);
    for i in 1..=k {
        a.add_at(i - 1, i - 1, 1);
    }
    a.add_at(m - 1, k, 1); // E_{m, k+1}
    for i in k..=m - 1 {
        a.add_at(i - 1, i, 1); // E_{i, i+1}
    }
    Ok(a)
}

/// The matrix attached to the `b` operation: `E + E_{m, pi^{-1}(m)}`.
pub fn matrix_b(pi: &Permutation) -> Result<IntMatrix> {
    pi.require_operand()?;
    let m = pi.size();
    let k = pi.invert(m);
    let mut b = IntMatrix::identity(m);
    b.add_at(m - 1, k - 1, 1);
    Ok(b)
}

/// Edge label of the Rauzy diagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RauzyOp {
    A,
    B,
}

impl fmt::Display for RauzyOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RauzyOp::A => write!(f, "a"),
            RauzyOp::B => write!(f, "b"),
        }
    }
}

/// A labeled edge of the Rauzy diagram; indices refer to `RauzyClass::members`.
#[derive(Debug, Clone)]
pub struct ClassEdge {
    pub from: usize,
    pub label: RauzyOp,
    pub to: usize,
    pub matrix: IntMatrix,
}

/// A Rauzy class: the orbit of a permutation under both operations, with
/// labeled edges and their matrices.
#[derive(Debug, Clone)]
pub struct RauzyClass {
    pub members: Vec<Permutation>,
    pub edges: Vec<ClassEdge>,
    index: HashMap<Permutation, usize>,
}

pub const DEFAULT_CLASS_CAP: usize = 1_000_000;

impl RauzyClass {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, pi: &Permutation) -> bool {
        self.index.contains_key(pi)
    }

    pub fn index_of(&self, pi: &Permutation) -> Option<usize> {
        self.index.get(pi).copied()
    }

    /// The `(a, b)` successor indices of member `i`.
    pub fn successors(&self, i: usize) -> (usize, usize) {
        let mut a = usize::MAX;
        let mut b = usize::MAX;
        for e in &self.edges {
            if e.from == i {
                match e.label {
                    RauzyOp::A => a = e.to,
                    RauzyOp::B => b = e.to,
                }
            }
        }
        (a, b)
    }
}

/// Breadth-first closure of `pi` under both Rauzy operations.
pub fn rauzy_class(pi: &Permutation) -> Result<RauzyClass> {
    rauzy_class_capped(pi, DEFAULT_CLASS_CAP)
}

pub fn rauzy_class_capped(pi: &Permutation, cap: usize) -> Result<RauzyClass> {
    pi.require_operand()?;
    let mut members = vec![pi.clone()];
    let mut index = HashMap::new();
    index.insert(pi.clone(), 0usize);
    let mut edges = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(0usize);

    while let Some(cur) = queue.pop_front() {
        let src = members[cur].clone();
        for label in [RauzyOp::A, RauzyOp::B] {
            let (next, matrix) = match label {
                RauzyOp::A => (rauzy_a(&src)?, matrix_a(&src)?),
                RauzyOp::B => (rauzy_b(&src)?, matrix_b(&src)?),
            };
            let to = match index.get(&next) {
                Some(&i) => i,
                None => {
                    if members.len() >= cap {
                        return Err(Error::budget(format!(
                            "Rauzy class exceeds the cap of {cap} members"
                        )));
                    }
                    let i = members.len();
                    members.push(next.clone());
                    index.insert(next, i);
                    queue.push_back(i);
                    i
                }
            };
            edges.push(ClassEdge {
                from: cur,
                label,
                to,
                matrix,
            });
        }
    }

    Ok(RauzyClass {
        members,
        edges,
        index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perm(v: &[usize]) -> Permutation {
        Permutation::new(v.to_vec()).unwrap()
    }

    #[test]
    fn irreducibility_examples() {
        assert!(perm(&[2, 1]).is_irreducible());
        assert!(!perm(&[1, 2]).is_irreducible());
        assert!(perm(&[2, 3, 1]).is_irreducible());
        assert!(Permutation::new(vec![1, 1]).is_err());
        assert!(Permutation::new(vec![0, 1]).is_err());
    }

    #[test]
    fn rauzy_a_examples() {
        assert_eq!(rauzy_a(&perm(&[2, 1])).unwrap(), perm(&[2, 1]));
        assert_eq!(rauzy_a(&perm(&[3, 2, 1])).unwrap(), perm(&[3, 1, 2]));
        assert_eq!(rauzy_a(&perm(&[2, 3, 1])).unwrap(), perm(&[2, 3, 1]));
    }

    #[test]
    fn rauzy_b_examples() {
        assert_eq!(rauzy_b(&perm(&[2, 1])).unwrap(), perm(&[2, 1]));
        assert_eq!(rauzy_b(&perm(&[3, 2, 1])).unwrap(), perm(&[2, 3, 1]));
        assert_eq!(rauzy_b(&perm(&[3, 1, 2])).unwrap(), perm(&[3, 1, 2]));
    }

    #[test]
    fn matrix_examples() {
        let b21 = matrix_b(&perm(&[2, 1])).unwrap();
        assert_eq!(b21.row(0), &[1, 0]);
        assert_eq!(b21.row(1), &[1, 1]);

        let a321 = matrix_a(&perm(&[3, 2, 1])).unwrap();
        assert_eq!(a321.row(0), &[1, 1, 0]);
        assert_eq!(a321.row(1), &[0, 0, 1]);
        assert_eq!(a321.row(2), &[0, 1, 0]);
        assert_eq!(a321.det(), -1);

        let b321 = matrix_b(&perm(&[3, 2, 1])).unwrap();
        let mut expect = IntMatrix::identity(3);
        expect.add_at(2, 0, 1);
        assert_eq!(b321, expect);
        assert_eq!(b321.det(), 1);
    }

    #[test]
    fn class_of_m2_is_a_single_loop() {
        let class = rauzy_class(&perm(&[2, 1])).unwrap();
        assert_eq!(class.len(), 1);
        assert_eq!(class.edges.len(), 2);
        assert!(class.edges.iter().all(|e| e.from == 0 && e.to == 0));
    }

    #[test]
    fn class_of_321_has_the_three_expected_members() {
        let class = rauzy_class(&perm(&[3, 2, 1])).unwrap();
        assert_eq!(class.len(), 3);
        for v in [[3, 2, 1], [3, 1, 2], [2, 3, 1]] {
            assert!(class.contains(&perm(&v)));
        }
        // The six edges, as derived by direct application of the operations.
        let i321 = class.index_of(&perm(&[3, 2, 1])).unwrap();
        let i312 = class.index_of(&perm(&[3, 1, 2])).unwrap();
        let i231 = class.index_of(&perm(&[2, 3, 1])).unwrap();
        assert_eq!(class.successors(i321), (i312, i231));
        assert_eq!(class.successors(i312), (i321, i312));
        assert_eq!(class.successors(i231), (i231, i321));
        for e in &class.edges {
            assert_eq!(e.matrix.det().abs(), 1);
        }
    }

    #[test]
    fn reducible_input_is_rejected() {
        assert!(matches!(
            rauzy_class(&perm(&[1, 2])),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn class_members_stay_irreducible_and_closed() {
        for start in [vec![4, 3, 2, 1], vec![3, 2, 4, 1]] {
            let class = rauzy_class(&perm(&start)).unwrap();
            for (i, member) in class.members.iter().enumerate() {
                assert!(member.is_irreducible());
                let (a, b) = class.successors(i);
                assert_eq!(class.members[a], rauzy_a(member).unwrap());
                assert_eq!(class.members[b], rauzy_b(member).unwrap());
            }
            for e in &class.edges {
                assert_eq!(e.matrix.det().abs(), 1);
            }
        }
    }

    #[test]
    fn class_is_independent_of_the_starting_member() {
        let class = rauzy_class(&perm(&[4, 3, 2, 1])).unwrap();
        let reference: std::collections::HashSet<_> = class.members.iter().cloned().collect();
        for member in &class.members {
            let again = rauzy_class(member).unwrap();
            let set: std::collections::HashSet<_> = again.members.iter().cloned().collect();
            assert_eq!(set, reference);
        }
    }

    #[test]
    fn symmetric_classes_have_size_two_pow_m_minus_one_minus_one() {
        // Known closed form for the class of (m, m-1, ..., 1): 2^(m-1) - 1.
        for m in 2..=6usize {
            let start: Vec<usize> = (1..=m).rev().collect();
            let class = rauzy_class(&perm(&start)).unwrap();
            assert_eq!(class.len(), (1 << (m - 1)) - 1, "m = {m}");
        }
    }

    #[test]
    fn class_cap_is_enforced() {
        let start: Vec<usize> = (1..=6).rev().collect();
        assert!(matches!(
            rauzy_class_capped(&perm(&start), 4),
            Err(Error::Budget(_))
        ));
    }
}
