//! Finite abelian groups in invariant-factor form, quotients, and the
//! canonical form of symbol pairs `(A, S)`.
//!
//! A pair `(A, S)` with `|S| = n` and `eA = 0` is the same thing, up to
//! isomorphism of `A`, as the kernel `L` of the surjection `(Z/e)^n -> A`
//! sending the i-th basis vector to `S[i]`. Reordering `S` permutes the
//! coordinates of `(Z/e)^n`, so a canonical symbol is the Howell form of `L`,
//! minimized lexicographically over all coordinate permutations.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::ToPrimitive;
use thiserror::Error;

use crate::linalg::{add_mod, howell_rows, mul_mod, sub_mod, Cokernel, IntMatrix};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FinabelError {
    #[error("invariant factors must form a divisibility chain of integers >= 2, got {0:?}")]
    InvalidFactors(Vec<u64>),
    #[error("element {element:?} does not belong to the group with factors {factors:?}")]
    ShapeMismatch { element: Vec<u64>, factors: Vec<u64> },
    #[error("sequence does not generate the group")]
    NotGenerating,
    #[error("torsion bound {bound} is not a multiple of the group exponent {exponent}")]
    TorsionBound { bound: u64, exponent: u64 },
    #[error("cannot parse symbol {input:?}: {reason}")]
    Parse { input: String, reason: String },
}

/// Finite abelian group `Z/d1 ⊕ ... ⊕ Z/dr` with `d1 | d2 | ... | dr`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FinAbGroup {
    factors: Vec<u64>,
}

/// Residue tuple `(x1, ..., xr)` with `xi` in `[0, di)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement(pub Vec<u64>);

impl GroupElement {
    pub fn coords(&self) -> &[u64] {
        &self.0
    }
}

impl FinAbGroup {
    pub fn new(factors: Vec<u64>) -> Result<Self, FinabelError> {
        let chain_ok = factors.iter().all(|&d| d >= 2)
            && factors.windows(2).all(|w| w[1] % w[0] == 0);
        if !chain_ok {
            return Err(FinabelError::InvalidFactors(factors));
        }
        Ok(FinAbGroup { factors })
    }

    pub fn trivial() -> Self {
        FinAbGroup { factors: Vec::new() }
    }

    pub fn cyclic(d: u64) -> Self {
        if d <= 1 {
            Self::trivial()
        } else {
            FinAbGroup { factors: vec![d] }
        }
    }

    /// `(Z/e)^n`.
    pub fn free_module(e: u64, n: usize) -> Self {
        if e <= 1 {
            Self::trivial()
        } else {
            FinAbGroup { factors: vec![e; n] }
        }
    }

    pub fn factors(&self) -> &[u64] {
        &self.factors
    }

    pub fn rank(&self) -> usize {
        self.factors.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn order(&self) -> u128 {
        self.factors.iter().map(|&d| d as u128).product()
    }

    /// Smallest `e >= 1` with `eA = 0`.
    pub fn exponent(&self) -> u64 {
        self.factors.last().copied().unwrap_or(1)
    }

    pub fn is_cyclic(&self) -> bool {
        self.factors.len() <= 1
    }

    pub fn zero(&self) -> GroupElement {
        GroupElement(vec![0; self.rank()])
    }

    /// Builds an element, reducing each coordinate into range.
    pub fn element(&self, coords: &[i64]) -> Result<GroupElement, FinabelError> {
        if coords.len() != self.rank() {
            return Err(FinabelError::ShapeMismatch {
                element: coords.iter().map(|&x| x as u64).collect(),
                factors: self.factors.clone(),
            });
        }
        Ok(GroupElement(
            coords.iter().zip(&self.factors).map(|(&x, &d)| x.rem_euclid(d as i64) as u64).collect(),
        ))
    }

    pub fn check(&self, x: &GroupElement) -> Result<(), FinabelError> {
        if x.0.len() == self.rank() && x.0.iter().zip(&self.factors).all(|(&v, &d)| v < d) {
            Ok(())
        } else {
            Err(FinabelError::ShapeMismatch { element: x.0.clone(), factors: self.factors.clone() })
        }
    }

    pub fn add(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        GroupElement(
            a.0.iter().zip(&b.0).zip(&self.factors).map(|((&x, &y), &d)| add_mod(x, y, d)).collect(),
        )
    }

    pub fn sub(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        GroupElement(
            a.0.iter().zip(&b.0).zip(&self.factors).map(|((&x, &y), &d)| sub_mod(x, y, d)).collect(),
        )
    }

    pub fn neg(&self, a: &GroupElement) -> GroupElement {
        self.sub(&self.zero(), a)
    }

    pub fn scale(&self, k: i64, a: &GroupElement) -> GroupElement {
        GroupElement(
            a.0.iter()
                .zip(&self.factors)
                .map(|(&x, &d)| mul_mod(x, k.rem_euclid(d as i64) as u64, d))
                .collect(),
        )
    }

    /// Order of an element.
    pub fn element_order(&self, a: &GroupElement) -> u64 {
        a.0.iter().zip(&self.factors).fold(1, |acc, (&x, &d)| acc.lcm(&(d / x.gcd(&d))))
    }

    pub fn elements(&self) -> impl Iterator<Item = GroupElement> + '_ {
        let total = self.order() as u64;
        (0..total).map(move |mut idx| {
            let mut coords = vec![0; self.rank()];
            for (c, &d) in coords.iter_mut().zip(&self.factors).rev() {
                *c = idx % d;
                idx /= d;
            }
            GroupElement(coords)
        })
    }

    /// Standard generators: the unit vector of each cyclic factor.
    pub fn standard_generators(&self) -> Vec<GroupElement> {
        (0..self.rank())
            .map(|i| GroupElement((0..self.rank()).map(|k| u64::from(k == i)).collect()))
            .collect()
    }

    pub fn generated_by(&self, seq: &[GroupElement]) -> bool {
        quotient_by_elements(self, seq).map(|q| q.group().is_trivial()).unwrap_or(false)
    }

    /// A uniformly random automorphism, given by the images of the standard
    /// generators.
    pub fn random_automorphism<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<GroupElement> {
        use rand::seq::SliceRandom;
        let elems: Vec<_> = self.elements().collect();
        loop {
            let imgs: Vec<GroupElement> = self
                .factors
                .iter()
                .map(|&d| loop {
                    let x = elems.choose(rng).expect("groups are nonempty");
                    if d % self.element_order(x) == 0 {
                        break x.clone();
                    }
                })
                .collect();
            if self.generated_by(&imgs) {
                return imgs;
            }
        }
    }

    /// Applies the endomorphism sending the i-th standard generator to `imgs[i]`.
    pub fn apply_hom(&self, imgs: &[GroupElement], x: &GroupElement) -> GroupElement {
        let mut out = self.zero();
        for (&c, img) in x.0.iter().zip(imgs) {
            out = self.add(&out, &self.scale(c as i64, img));
        }
        out
    }
}

/// Every finite abelian group of order at most `order` with at most
/// `max_rank` invariant factors.
pub fn groups_of_order_at_most(order: u128, max_rank: usize) -> Vec<FinAbGroup> {
    fn rec(prefix: Vec<u64>, order: u128, max_rank: usize, out: &mut Vec<FinAbGroup>) {
        out.push(FinAbGroup { factors: prefix.clone() });
        if prefix.len() == max_rank {
            return;
        }
        let cur: u128 = prefix.iter().map(|&d| d as u128).product();
        // chains are built from the largest factor down
        let next_bound = prefix.first().copied();
        for d in 2..=order as u64 {
            if cur * d as u128 > order {
                break;
            }
            if let Some(b) = next_bound {
                if b % d != 0 {
                    continue;
                }
            }
            let mut f = vec![d];
            f.extend(&prefix);
            rec(f, order, max_rank, out);
        }
    }
    let mut out = Vec::new();
    rec(Vec::new(), order, max_rank, &mut out);
    out
}

impl fmt::Display for FinAbGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_trivial() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self.factors.iter().map(|d| format!("C{d}")).collect();
        write!(f, "{}", parts.join("⊕"))
    }
}

/// The quotient map `A -> A/<gens>` with the target in invariant-factor form.
#[derive(Clone, Debug)]
pub struct Quotient {
    source: FinAbGroup,
    group: FinAbGroup,
    // Image of each standard generator of the source.
    images: Vec<GroupElement>,
}

impl Quotient {
    pub fn group(&self) -> &FinAbGroup {
        &self.group
    }

    pub fn source(&self) -> &FinAbGroup {
        &self.source
    }

    pub fn project(&self, x: &GroupElement) -> GroupElement {
        let mut out = self.group.zero();
        for (&c, img) in x.0.iter().zip(&self.images) {
            if c != 0 {
                out = self.group.add(&out, &self.group.scale(c as i64, img));
            }
        }
        out
    }
}

pub fn quotient_by_elements(a: &FinAbGroup, gens: &[GroupElement]) -> Result<Quotient, FinabelError> {
    for g in gens {
        a.check(g)?;
    }
    let r = a.rank();
    if gens.iter().all(|g| g.0.iter().all(|&x| x == 0)) {
        return Ok(Quotient { source: a.clone(), group: a.clone(), images: a.standard_generators() });
    }
    let mut rows: Vec<Vec<BigInt>> = Vec::with_capacity(r + gens.len());
    for (i, &d) in a.factors.iter().enumerate() {
        let mut row = vec![BigInt::from(0); r];
        row[i] = BigInt::from(d);
        rows.push(row);
    }
    for g in gens {
        rows.push(g.0.iter().map(|&x| BigInt::from(x)).collect());
    }
    let m = IntMatrix::from_big_rows(r, rows).expect("rows have group rank");
    let coker = Cokernel::of(&m);
    let factors: Vec<u64> = coker
        .torsion_moduli()
        .iter()
        .map(|d| d.to_u64().expect("factor divides a u64 group order"))
        .collect();
    let group = FinAbGroup { factors };
    let images = (0..r)
        .map(|i| {
            let mut unit = vec![BigInt::from(0); r];
            unit[i] = BigInt::from(1);
            let c = coker.coordinates(&unit).expect("dimension matches");
            debug_assert!(c.free.is_empty());
            GroupElement(c.torsion.iter().map(|x| x.to_u64().expect("reduced residue")).collect())
        })
        .collect();
    Ok(Quotient { source: a.clone(), group, images })
}

/// A finite abelian group with an ordered sequence of elements that
/// generates it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SymbolPair {
    pub group: FinAbGroup,
    pub seq: Vec<GroupElement>,
}

impl SymbolPair {
    pub fn new(group: FinAbGroup, seq: Vec<GroupElement>) -> Result<Self, FinabelError> {
        for x in &seq {
            group.check(x)?;
        }
        if !group.generated_by(&seq) {
            return Err(FinabelError::NotGenerating);
        }
        Ok(SymbolPair { group, seq })
    }

    pub fn degree(&self) -> usize {
        self.seq.len()
    }

    /// Convenience for cyclic groups: `(C_d, (a1, ..., an))`.
    pub fn cyclic(d: u64, weights: &[i64]) -> Result<Self, FinabelError> {
        let g = FinAbGroup::cyclic(d);
        let seq = weights
            .iter()
            .map(|&w| if g.is_trivial() { Ok(g.zero()) } else { g.element(&[w]) })
            .collect::<Result<Vec<_>, _>>()?;
        SymbolPair::new(g, seq)
    }

    /// `(⊕ C_di, standard generators)` padded by `pad` zero entries.
    pub fn split(factors: Vec<u64>, pad: usize) -> Result<Self, FinabelError> {
        let g = FinAbGroup::new(factors)?;
        let mut seq = g.standard_generators();
        seq.extend(std::iter::repeat_n(g.zero(), pad));
        SymbolPair::new(g, seq)
    }

    pub fn canonicalize(&self, torsion: u64) -> Result<CanonicalSymbol, FinabelError> {
        canonicalize(self, torsion)
    }
}

fn write_element(f: &mut fmt::Formatter<'_>, x: &GroupElement) -> fmt::Result {
    if x.0.is_empty() {
        return write!(f, "(0)");
    }
    let parts: Vec<String> = x.0.iter().map(|c| c.to_string()).collect();
    write!(f, "({})", parts.join(","))
}

impl fmt::Display for SymbolPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let factors: Vec<String> = self.group.factors.iter().map(|d| d.to_string()).collect();
        write!(f, "[{};", factors.join(","))?;
        for (i, x) in self.seq.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write_element(f, x)?;
        }
        write!(f, "]")
    }
}

impl FromStr for SymbolPair {
    type Err = FinabelError;

    /// Grammar: `[d1,...,dr;(x1,...,xr),...]`. Zero entries of the trivial
    /// group may be written `()` or `(0)`.
    fn from_str(input: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| FinabelError::Parse { input: input.to_string(), reason: reason.to_string() };
        let s: String = input.chars().filter(|c| !c.is_whitespace()).collect();
        let body = s
            .strip_prefix('[')
            .and_then(|x| x.strip_suffix(']'))
            .ok_or_else(|| err("expected [factors;elements]"))?;
        let (factors, elements) = body.split_once(';').ok_or_else(|| err("missing ';'"))?;
        let factors: Vec<u64> = if factors.is_empty() {
            Vec::new()
        } else {
            factors
                .split(',')
                .map(|t| t.parse::<u64>().map_err(|_| err("bad invariant factor")))
                .collect::<Result<_, _>>()?
        };
        let group = FinAbGroup::new(factors)?;
        let mut seq = Vec::new();
        let mut rest = elements;
        while !rest.is_empty() {
            let inner = rest.strip_prefix('(').ok_or_else(|| err("expected '('"))?;
            let close = inner.find(')').ok_or_else(|| err("unclosed '('"))?;
            let coords: Vec<i64> = if inner[..close].is_empty() {
                Vec::new()
            } else {
                inner[..close]
                    .split(',')
                    .map(|t| t.parse::<i64>().map_err(|_| err("bad coordinate")))
                    .collect::<Result<_, _>>()?
            };
            let coords = if group.is_trivial() && coords.iter().all(|&c| c == 0) { Vec::new() } else { coords };
            seq.push(group.element(&coords)?);
            rest = &inner[close + 1..];
            if let Some(r) = rest.strip_prefix(',') {
                if r.is_empty() {
                    return Err(err("trailing ','"));
                }
                rest = r;
            } else if !rest.is_empty() {
                return Err(err("expected ','"));
            }
        }
        SymbolPair::new(group, seq)
    }
}

/// Canonical representative of the class of `(A, S)` under permutations of
/// `S` and isomorphisms of `A`, as a kernel lattice in `(Z/e)^n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalSymbol {
    degree: usize,
    torsion: u64,
    kernel: Vec<Vec<u64>>,
}

/// All permutations of `0..n` in lexicographic order.
pub(crate) fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else { break };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).expect("exists");
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
    out
}

thread_local! {
    static PERMS: std::cell::RefCell<Vec<Vec<Vec<usize>>>> = const { std::cell::RefCell::new(Vec::new()) };
}

fn with_permutations<R>(n: usize, f: impl FnOnce(&[Vec<usize>]) -> R) -> R {
    PERMS.with(|cache| {
        let mut cache = cache.borrow_mut();
        while cache.len() <= n {
            let k = cache.len();
            cache.push(permutations(k));
        }
        f(&cache[n])
    })
}

impl CanonicalSymbol {
    /// Canonical symbol of the submodule spanned by `rows` in `(Z/e)^n`.
    pub fn from_lattice(degree: usize, torsion: u64, rows: &[Vec<u64>]) -> Self {
        assert!(torsion >= 1, "torsion bound must be positive");
        let base = howell_rows(rows, degree, torsion);
        let kernel = with_permutations(degree, |perms| {
            let mut best: Option<Vec<Vec<u64>>> = None;
            let mut permuted: Vec<Vec<u64>> = base.clone();
            for p in perms {
                for (dst, src) in permuted.iter_mut().zip(&base) {
                    for (k, &pk) in p.iter().enumerate() {
                        dst[k] = src[pk];
                    }
                }
                let h = howell_rows(&permuted, degree, torsion);
                if best.as_ref().is_none_or(|b| h < *b) {
                    best = Some(h);
                }
            }
            best.expect("at least one permutation")
        });
        CanonicalSymbol { degree, torsion, kernel }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn torsion(&self) -> u64 {
        self.torsion
    }

    /// Howell-form rows of the kernel lattice.
    pub fn kernel(&self) -> &[Vec<u64>] {
        &self.kernel
    }

    /// Representative pair in the canonical coordinate order.
    pub fn pair(&self) -> SymbolPair {
        let ambient = FinAbGroup::free_module(self.torsion, self.degree);
        let gens: Vec<GroupElement> = if ambient.is_trivial() {
            Vec::new()
        } else {
            self.kernel.iter().map(|r| GroupElement(r.clone())).collect()
        };
        let q = quotient_by_elements(&ambient, &gens).expect("kernel rows live in the ambient module");
        let seq = if ambient.is_trivial() {
            vec![GroupElement(Vec::new()); self.degree]
        } else {
            ambient.standard_generators().iter().map(|b| q.project(b)).collect()
        };
        SymbolPair { group: q.group().clone(), seq }
    }

    pub fn group(&self) -> FinAbGroup {
        self.pair().group
    }

    /// Appends a zero entry to the sequence.
    pub fn t_shift(&self) -> CanonicalSymbol {
        let n = self.degree + 1;
        let mut rows: Vec<Vec<u64>> = self
            .kernel
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.push(0);
                r
            })
            .collect();
        let mut last = vec![0; n];
        last[n - 1] = 1 % self.torsion;
        rows.push(last);
        CanonicalSymbol::from_lattice(n, self.torsion, &rows)
    }

    pub fn t_power(&self, k: usize) -> CanonicalSymbol {
        (0..k).fold(self.clone(), |s, _| s.t_shift())
    }

    /// Same class, expressed with a different torsion bound.
    pub fn with_torsion(&self, torsion: u64) -> Result<CanonicalSymbol, FinabelError> {
        canonicalize(&self.pair(), torsion)
    }

    /// Nice representative for printing: for cyclic groups the sequence is
    /// minimized over units and reorderings.
    pub fn display_pair(&self) -> SymbolPair {
        let pair = self.pair();
        if pair.group.rank() != 1 {
            return pair;
        }
        let d = pair.group.factors[0];
        let values: Vec<u64> = pair.seq.iter().map(|x| x.0[0]).collect();
        let mut best: Option<Vec<u64>> = None;
        for u in (1..d).filter(|u| u.gcd(&d) == 1) {
            let mut scaled: Vec<u64> = values.iter().map(|&x| mul_mod(x, u, d)).collect();
            // nonzero entries first in increasing order, zeros last
            scaled.sort_by_key(|&x| (x == 0, x));
            if best.as_ref().is_none_or(|b| scaled < *b) {
                best = Some(scaled);
            }
        }
        let seq = best.expect("d >= 2").into_iter().map(|x| GroupElement(vec![x])).collect();
        SymbolPair { group: pair.group, seq }
    }
}

impl fmt::Display for CanonicalSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display_pair())
    }
}

/// Canonical symbol of `(A, S)` with kernel lattice in `(Z/e)^n`.
pub fn canonicalize(pair: &SymbolPair, torsion: u64) -> Result<CanonicalSymbol, FinabelError> {
    let exponent = pair.group.exponent();
    if torsion == 0 || !torsion.is_multiple_of(exponent) {
        return Err(FinabelError::TorsionBound { bound: torsion, exponent });
    }
    for x in &pair.seq {
        pair.group.check(x)?;
    }
    if !pair.group.generated_by(&pair.seq) {
        return Err(FinabelError::NotGenerating);
    }
    Ok(canonicalize_unchecked(pair, torsion))
}

/// Same as [`canonicalize`] without re-validating the pair.
pub(crate) fn canonicalize_unchecked(pair: &SymbolPair, torsion: u64) -> CanonicalSymbol {
    let n = pair.degree();
    let r = pair.group.rank();
    let e = torsion;
    // x -> sum x_i a_i, with Z/d_k embedded in Z/e as multiples of e/d_k,
    // stacked with the identity so that kernel vectors can be read off.
    let rows: Vec<Vec<u64>> = pair
        .seq
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut row = Vec::with_capacity(r + n);
            for (&x, &d) in a.0.iter().zip(&pair.group.factors) {
                row.push(mul_mod(x, e / d, e));
            }
            row.extend((0..n).map(|k| u64::from(k == i) % e));
            row
        })
        .collect();
    let h = howell_rows(&rows, r + n, e);
    let kernel: Vec<Vec<u64>> = h
        .into_iter()
        .filter(|row| row[..r].iter().all(|&x| x == 0))
        .map(|row| row[r..].to_vec())
        .collect();
    CanonicalSymbol::from_lattice(n, e, &kernel)
}

/// `t * s`: append a zero to the sequence.
pub fn t_shift(s: &CanonicalSymbol) -> CanonicalSymbol {
    s.t_shift()
}

/// Class of a diagonal representation: the dual group with its weights.
/// The weights must generate the dual group (faithfulness).
pub fn weights_to_symbol(dual: &FinAbGroup, weights: &[GroupElement]) -> Result<CanonicalSymbol, FinabelError> {
    let pair = SymbolPair::new(dual.clone(), weights.to_vec())?;
    canonicalize(&pair, dual.exponent())
}

/// `[A, S] -> [A/e'A, S]`, with the result over torsion bound `e'`.
pub fn torsion_retraction(s: &CanonicalSymbol, retract_to: u64) -> Result<CanonicalSymbol, FinabelError> {
    if retract_to == 0 {
        return Err(FinabelError::TorsionBound { bound: 0, exponent: s.torsion });
    }
    let pair = s.pair();
    let g = &pair.group;
    let gens: Vec<GroupElement> =
        g.standard_generators().iter().map(|b| g.scale(retract_to as i64, b)).collect();
    let q = quotient_by_elements(g, &gens)?;
    let seq = pair.seq.iter().map(|x| q.project(x)).collect();
    Ok(canonicalize_unchecked(&SymbolPair { group: q.group().clone(), seq }, retract_to))
}

/// `[A, S] -> [A(p), S]`, projecting to the p-primary part.
pub fn primary_projection(s: &CanonicalSymbol, p: u64) -> Result<CanonicalSymbol, FinabelError> {
    let mut pk = 1;
    let mut e = s.torsion;
    while p > 1 && e.is_multiple_of(p) {
        e /= p;
        pk *= p;
    }
    torsion_retraction(s, pk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::collections::{BTreeSet, HashMap};

    fn cyc(d: u64, w: &[i64]) -> SymbolPair {
        SymbolPair::cyclic(d, w).unwrap()
    }

    #[test]
    fn quotient_examples() {
        let c5 = FinAbGroup::cyclic(5);
        let q = quotient_by_elements(&c5, &[GroupElement(vec![1])]).unwrap();
        assert!(q.group().is_trivial());
        let q = quotient_by_elements(&c5, &[]).unwrap();
        assert_eq!(q.group(), &c5);
        assert_eq!(q.project(&GroupElement(vec![3])), GroupElement(vec![3]));
        let c55 = FinAbGroup::new(vec![5, 5]).unwrap();
        let q = quotient_by_elements(&c55, &[GroupElement(vec![4, 1])]).unwrap();
        assert_eq!(q.group(), &c5);
        let img = q.project(&GroupElement(vec![1, 0]));
        assert_eq!(c5.element_order(&img), 5);
        assert_eq!(q.project(&GroupElement(vec![4, 1])), c5.zero());
    }

    #[test]
    fn quotient_rejects_foreign_elements() {
        let c5 = FinAbGroup::cyclic(5);
        assert!(matches!(
            quotient_by_elements(&c5, &[GroupElement(vec![1, 0])]),
            Err(FinabelError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            quotient_by_elements(&c5, &[GroupElement(vec![7])]),
            Err(FinabelError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn quotient_map_is_additive_and_kills_generators() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for factors in [vec![2, 4], vec![3, 9], vec![2, 6, 12], vec![5, 25]] {
            let a = FinAbGroup::new(factors).unwrap();
            let elems: Vec<_> = a.elements().collect();
            for _ in 0..20 {
                let gens: Vec<_> = (0..rng.gen_range(0..3)).map(|_| elems.choose(&mut rng).unwrap().clone()).collect();
                let q = quotient_by_elements(&a, &gens).unwrap();
                for g in &gens {
                    assert_eq!(q.project(g), q.group().zero());
                }
                let x = elems.choose(&mut rng).unwrap();
                let y = elems.choose(&mut rng).unwrap();
                assert_eq!(q.project(&a.add(x, y)), q.group().add(&q.project(x), &q.project(y)));
                // order of the quotient: |A| / |<gens>|
                let mut sub = BTreeSet::new();
                sub.insert(a.zero());
                for g in &gens {
                    let cur: Vec<_> = sub.iter().cloned().collect();
                    for s in cur {
                        let mut v = s.clone();
                        for _ in 0..a.exponent() {
                            v = a.add(&v, g);
                            sub.insert(v.clone());
                        }
                    }
                }
                assert_eq!(q.group().order() * sub.len() as u128, a.order());
            }
        }
    }

    #[test]
    fn canonicalize_examples() {
        let a = cyc(5, &[2, 3]).canonicalize(5).unwrap();
        let b = cyc(5, &[1, 4]).canonicalize(5).unwrap();
        assert_eq!(a, b);
        for p in [5u64, 7, 11, 13, 29] {
            for x in 2..=p - 2 {
                let inv = (1..p).find(|y| x * y % p == 1).unwrap();
                assert_eq!(
                    cyc(p, &[1, x as i64]).canonicalize(p).unwrap(),
                    cyc(p, &[1, inv as i64]).canonicalize(p).unwrap()
                );
            }
        }
        let empty = SymbolPair::new(FinAbGroup::trivial(), vec![]).unwrap();
        let s = empty.canonicalize(1).unwrap();
        assert_eq!(s.degree(), 0);
        assert_eq!(s, empty.canonicalize(1).unwrap());
        assert_eq!(s.to_string(), "[;]");
    }

    #[test]
    fn canonicalize_rejects_bad_pairs() {
        let c25 = FinAbGroup::cyclic(25);
        let pair = SymbolPair { group: c25.clone(), seq: vec![GroupElement(vec![5]), GroupElement(vec![10])] };
        assert_eq!(canonicalize(&pair, 25), Err(FinabelError::NotGenerating));
        let pair = cyc(25, &[1, 5]);
        assert!(matches!(canonicalize(&pair, 5), Err(FinabelError::TorsionBound { .. })));
        assert!(SymbolPair::new(c25, vec![GroupElement(vec![5])]).is_err());
    }

    #[test]
    fn distinct_classes_stay_distinct() {
        let s11 = cyc(5, &[1, 1]).canonicalize(5).unwrap();
        let s12 = cyc(5, &[1, 2]).canonicalize(5).unwrap();
        let s14 = cyc(5, &[1, 4]).canonicalize(5).unwrap();
        let s10 = cyc(5, &[1, 0]).canonicalize(5).unwrap();
        let set: BTreeSet<_> = [&s11, &s12, &s14, &s10].into_iter().collect();
        assert_eq!(set.len(), 4);
        assert_eq!(cyc(5, &[1, 3]).canonicalize(5).unwrap(), s12);
    }

    #[test]
    fn t_shift_examples() {
        let zero = SymbolPair::new(FinAbGroup::trivial(), vec![]).unwrap().canonicalize(1).unwrap();
        let t1 = zero.t_shift();
        assert_eq!(t1.degree(), 1);
        assert_eq!(t1.pair().group, FinAbGroup::trivial());
        let c5 = cyc(5, &[1]).canonicalize(5).unwrap();
        assert_eq!(c5.t_shift(), cyc(5, &[1, 0]).canonicalize(5).unwrap());
        assert_eq!(
            zero.with_torsion(5).unwrap().t_power(2),
            SymbolPair::split(vec![], 2).unwrap().canonicalize(5).unwrap()
        );
        assert_eq!(t1.to_string(), "[;(0)]");
    }

    #[test]
    fn weights_to_symbol_examples() {
        let c5 = FinAbGroup::cyclic(5);
        let w = vec![GroupElement(vec![1]), GroupElement(vec![2])];
        assert_eq!(weights_to_symbol(&c5, &w).unwrap(), cyc(5, &[1, 2]).canonicalize(5).unwrap());
        let triv = FinAbGroup::trivial();
        let s = weights_to_symbol(&triv, &[triv.zero(), triv.zero()]).unwrap();
        assert_eq!(s, SymbolPair::split(vec![], 2).unwrap().canonicalize(1).unwrap());
        let c55 = FinAbGroup::new(vec![5, 5]).unwrap();
        let s = weights_to_symbol(&c55, &c55.standard_generators()).unwrap();
        assert_eq!(s.to_string(), "[5,5;(1,0),(0,1)]");
        assert_eq!(
            weights_to_symbol(&c55, &[GroupElement(vec![1, 0])]),
            Err(FinabelError::NotGenerating)
        );
    }

    #[test]
    fn retraction_examples() {
        let s = cyc(15, &[1, 2]).canonicalize(15).unwrap();
        assert_eq!(primary_projection(&s, 5).unwrap(), cyc(5, &[1, 2]).canonicalize(5).unwrap());
        assert_eq!(primary_projection(&s, 3).unwrap(), cyc(3, &[1, 2]).canonicalize(3).unwrap());
        let c = cyc(5, &[1, 2]).canonicalize(5).unwrap();
        assert_eq!(torsion_retraction(&c, 5).unwrap(), c);
        let s = cyc(25, &[1, 5]).canonicalize(25).unwrap();
        assert_eq!(torsion_retraction(&s, 5).unwrap(), cyc(5, &[1, 0]).canonicalize(5).unwrap());
        let s = cyc(25, &[5, 1]).canonicalize(25).unwrap();
        assert_eq!(torsion_retraction(&s, 1).unwrap(), SymbolPair::split(vec![], 2).unwrap().canonicalize(1).unwrap());
    }

    #[test]
    fn notation_round_trip() {
        let p: SymbolPair = "[5;(1),(2)]".parse().unwrap();
        assert_eq!(p, cyc(5, &[1, 2]));
        let p: SymbolPair = "[;(0),(0)]".parse().unwrap();
        assert_eq!(p.degree(), 2);
        let p: SymbolPair = "[;(),()]".parse().unwrap();
        assert_eq!(p.to_string(), "[;(0),(0)]");
        let p: SymbolPair = "[ 5 , 5 ; (1,0) , (0,1) ]".parse().unwrap();
        assert_eq!(p.group.factors(), &[5, 5]);
        for bad in ["5;(1)", "[5;(1),]", "[5;(1)(2)]", "[6,4;(1,1),(0,1)]", "[5;(1,2)]", "[5;(0)]", "[x;]"] {
            assert!(bad.parse::<SymbolPair>().is_err(), "{bad} should be rejected");
        }
    }

    #[test]
    fn display_parses_back_to_same_symbol() {
        for e in [4u64, 5, 6, 9] {
            let a = FinAbGroup::cyclic(e);
            for x in 0..e {
                for y in 0..e {
                    let pair = SymbolPair { group: a.clone(), seq: vec![GroupElement(vec![x]), GroupElement(vec![y])] };
                    let Ok(s) = canonicalize(&pair, e) else { continue };
                    let back: SymbolPair = s.to_string().parse().unwrap();
                    assert_eq!(canonicalize(&back, e).unwrap(), s);
                }
            }
        }
        assert_eq!(cyc(5, &[3, 4]).canonicalize(5).unwrap().to_string(), "[5;(1),(2)]");
    }

    // -- orbit checks ------------------------------------------------------

    #[test]
    fn canonical_form_is_orbit_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for g in groups_of_order_at_most(81, 3) {
            let elems: Vec<_> = g.elements().collect();
            let e = g.exponent();
            for n in g.rank().max(1)..=3 {
                for _ in 0..6 {
                    let seq = loop {
                        let s: Vec<_> = (0..n).map(|_| elems.choose(&mut rng).unwrap().clone()).collect();
                        if g.generated_by(&s) {
                            break s;
                        }
                    };
                    let base = canonicalize(&SymbolPair { group: g.clone(), seq: seq.clone() }, e).unwrap();
                    for _ in 0..4 {
                        let aut = g.random_automorphism(&mut rng);
                        let mut twisted: Vec<_> = seq.iter().map(|x| g.apply_hom(&aut, x)).collect();
                        twisted.shuffle(&mut rng);
                        let other = canonicalize(&SymbolPair { group: g.clone(), seq: twisted }, e).unwrap();
                        assert_eq!(base, other, "group {g}, seq {seq:?}");
                    }
                    // idempotent through the representative
                    assert_eq!(canonicalize(&base.pair(), e).unwrap(), base);
                    assert_eq!(base.pair().group, g);
                }
            }
        }
    }

    #[test]
    fn canonical_classes_match_brute_force_orbits() {
        // exhaustive over Aut(A) x S_2 for small groups
        for factors in [vec![5], vec![6], vec![4], vec![2, 2], vec![8], vec![2, 4], vec![3, 3]] {
            let g = FinAbGroup::new(factors).unwrap();
            let elems: Vec<_> = g.elements().collect();
            let auts: Vec<Vec<GroupElement>> = {
                let mut out = Vec::new();
                let mut stack = vec![Vec::new()];
                while let Some(partial) = stack.pop() {
                    if partial.len() == g.rank() {
                        if g.generated_by(&partial) {
                            out.push(partial);
                        }
                        continue;
                    }
                    let d = g.factors()[partial.len()];
                    for x in &elems {
                        if d.is_multiple_of(g.element_order(x)) {
                            let mut p: Vec<GroupElement> = partial.clone();
                            p.push(x.clone());
                            stack.push(p);
                        }
                    }
                }
                out
            };
            let seqs: Vec<Vec<GroupElement>> = elems
                .iter()
                .flat_map(|x| elems.iter().map(move |y| vec![x.clone(), y.clone()]))
                .filter(|s| g.generated_by(s))
                .collect();
            let mut orbit_id: HashMap<Vec<GroupElement>, usize> = HashMap::new();
            let mut next = 0;
            for s in &seqs {
                if orbit_id.contains_key(s) {
                    continue;
                }
                for aut in &auts {
                    let img: Vec<_> = s.iter().map(|x| g.apply_hom(aut, x)).collect();
                    let swapped = vec![img[1].clone(), img[0].clone()];
                    orbit_id.insert(img, next);
                    orbit_id.insert(swapped, next);
                }
                next += 1;
            }
            let e = g.exponent();
            let mut by_canon: HashMap<CanonicalSymbol, usize> = HashMap::new();
            for s in &seqs {
                let c = canonicalize(&SymbolPair { group: g.clone(), seq: s.clone() }, e).unwrap();
                let id = orbit_id[s];
                assert_eq!(*by_canon.entry(c).or_insert(id), id, "group {g}");
            }
            assert_eq!(by_canon.len(), next, "group {g}");
        }
    }

    #[test]
    fn permutations_are_complete() {
        assert_eq!(permutations(0).len(), 1);
        assert_eq!(permutations(4).len(), 24);
        let set: BTreeSet<_> = permutations(4).into_iter().collect();
        assert_eq!(set.len(), 24);
    }
}
