//! The graded pieces of the symbol module: enumeration of symbols, the
//! blow-up relations, the split-symbol submodule, and class reduction.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use num_bigint::BigInt;
use rayon::prelude::*;
use thiserror::Error;

use crate::finabel::{
    canonicalize_unchecked, quotient_by_elements, torsion_retraction, CanonicalSymbol, FinAbGroup,
    FinabelError, GroupElement, SymbolPair,
};
use crate::linalg::{howell_rows, in_howell_span, AbGroupInvariants, ClassCoordinates, Cokernel, ElementOrder, IntMatrix};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ObarError {
    #[error("degree {degree} exceeds the configured cap {cap}")]
    DegreeCap { degree: usize, cap: usize },
    #[error("more than {cap} submodules of (Z/{torsion})^{degree}")]
    SymbolCap { degree: usize, torsion: u64, cap: usize },
    #[error("torsion bound must be positive")]
    ZeroTorsion,
    #[error("index j = {j} out of range 2..={degree}")]
    IndexOutOfRange { j: usize, degree: usize },
    #[error("expected degree {expected} and torsion {expected_torsion}, got degree {degree} and torsion {torsion}")]
    Inhomogeneous { expected: usize, expected_torsion: u64, degree: usize, torsion: u64 },
    #[error(transparent)]
    Group(#[from] FinabelError),
}

/// Integer combination of canonical symbols sharing one degree and torsion
/// bound. Zero coefficients are never stored.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FormalSum {
    degree: usize,
    torsion: u64,
    terms: BTreeMap<CanonicalSymbol, i64>,
}

impl FormalSum {
    pub fn zero(degree: usize, torsion: u64) -> Self {
        FormalSum { degree, torsion, terms: BTreeMap::new() }
    }

    pub fn from_symbol(s: &CanonicalSymbol) -> Self {
        let mut f = FormalSum::zero(s.degree(), s.torsion());
        f.terms.insert(s.clone(), 1);
        f
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn torsion(&self) -> u64 {
        self.torsion
    }

    pub fn terms(&self) -> &BTreeMap<CanonicalSymbol, i64> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, s: &CanonicalSymbol) -> i64 {
        self.terms.get(s).copied().unwrap_or(0)
    }

    fn check(&self, degree: usize, torsion: u64) -> Result<(), ObarError> {
        if degree != self.degree || torsion != self.torsion {
            return Err(ObarError::Inhomogeneous {
                expected: self.degree,
                expected_torsion: self.torsion,
                degree,
                torsion,
            });
        }
        Ok(())
    }

    pub fn add_term(&mut self, s: &CanonicalSymbol, coeff: i64) -> Result<(), ObarError> {
        self.check(s.degree(), s.torsion())?;
        if coeff == 0 {
            return Ok(());
        }
        let entry = self.terms.entry(s.clone()).or_insert(0);
        *entry += coeff;
        if *entry == 0 {
            self.terms.remove(s);
        }
        Ok(())
    }

    pub fn add_scaled(&mut self, other: &FormalSum, coeff: i64) -> Result<(), ObarError> {
        self.check(other.degree, other.torsion)?;
        for (s, &c) in &other.terms {
            self.add_term(s, c * coeff)?;
        }
        Ok(())
    }

    pub fn plus(&self, other: &FormalSum) -> Result<FormalSum, ObarError> {
        let mut out = self.clone();
        out.add_scaled(other, 1)?;
        Ok(out)
    }

    pub fn minus(&self, other: &FormalSum) -> Result<FormalSum, ObarError> {
        let mut out = self.clone();
        out.add_scaled(other, -1)?;
        Ok(out)
    }

    /// Multiplies every term by `t`.
    pub fn t_shift(&self) -> FormalSum {
        let mut out = FormalSum::zero(self.degree + 1, self.torsion);
        for (s, &c) in &self.terms {
            out.add_term(&s.t_shift(), c).expect("shift keeps homogeneity");
        }
        out
    }
}

impl fmt::Display for FormalSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (s, &c)) in self.terms.iter().enumerate() {
            match (i, c < 0) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            if c.unsigned_abs() != 1 {
                write!(f, "{}", c.unsigned_abs())?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Enumeration

/// All submodules of `(Z/e)^n` in Howell form, by closing the zero module
/// under adding one cyclic submodule at a time.
pub fn submodules(degree: usize, torsion: u64, cap: usize) -> Result<Vec<Vec<Vec<u64>>>, ObarError> {
    if torsion == 0 {
        return Err(ObarError::ZeroTorsion);
    }
    let cap_err = ObarError::SymbolCap { degree, torsion, cap };
    let vectors = (torsion as u128).checked_pow(degree as u32).ok_or(cap_err.clone())?;
    if vectors > 64 * cap as u128 {
        return Err(cap_err);
    }
    let mut cyclic: BTreeSet<Vec<Vec<u64>>> = BTreeSet::new();
    let mut v = vec![0u64; degree];
    for _ in 0..vectors {
        let h = howell_rows(std::slice::from_ref(&v), degree, torsion);
        if !h.is_empty() {
            cyclic.insert(h);
        }
        for x in v.iter_mut().rev() {
            *x += 1;
            if *x < torsion {
                break;
            }
            *x = 0;
        }
    }
    let cyclic: Vec<Vec<Vec<u64>>> = cyclic.into_iter().collect();
    let mut seen: HashSet<Vec<Vec<u64>>> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(Vec::new());
    queue.push_back(Vec::new());
    while let Some(module) = queue.pop_front() {
        for gen in &cyclic {
            if gen.iter().all(|row| in_howell_span(&module, row, torsion)) {
                continue;
            }
            let mut rows: Vec<Vec<u64>> = module.clone();
            rows.extend(gen.iter().cloned());
            let bigger = howell_rows(&rows, degree, torsion);
            if seen.insert(bigger.clone()) {
                if seen.len() > cap {
                    return Err(cap_err);
                }
                queue.push_back(bigger);
            }
        }
    }
    let mut out: Vec<_> = seen.into_iter().collect();
    out.sort();
    Ok(out)
}

/// One canonical symbol per class of degree `n` over `e`-torsion groups, in
/// lexicographic order of the canonical kernel matrices.
pub fn enumerate_symbols(degree: usize, torsion: u64, cap: usize) -> Result<Vec<CanonicalSymbol>, ObarError> {
    let modules = submodules(degree, torsion, cap)?;
    let set: BTreeSet<CanonicalSymbol> =
        modules.par_iter().map(|m| CanonicalSymbol::from_lattice(degree, torsion, m)).collect::<Vec<_>>().into_iter().collect();
    Ok(set.into_iter().collect())
}

// ---------------------------------------------------------------------------
// Relations

/// One summand of a blow-up relation: `sign * t^t_power * [quotient, seq]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationTerm {
    /// The index set `I` as positions in the reordered sequence.
    pub subset: Vec<usize>,
    pub quotient: FinAbGroup,
    pub seq: Vec<GroupElement>,
    pub t_power: usize,
    pub sign: i64,
}

impl RelationTerm {
    pub fn symbol(&self, torsion: u64) -> CanonicalSymbol {
        let mut seq = self.seq.clone();
        seq.extend(std::iter::repeat_n(self.quotient.zero(), self.t_power));
        canonicalize_unchecked(&SymbolPair { group: self.quotient.clone(), seq }, torsion)
    }
}

/// Quotient `A / <a_i - a_base>_{i in subset}` and the sequence
/// `(a_base, a_i - a_base for i < j not in subset, a_{j+1}, ...)`.
pub fn relation_term_with_base(
    pair: &SymbolPair,
    j: usize,
    subset: &[usize],
    base: usize,
) -> Result<(FinAbGroup, Vec<GroupElement>), ObarError> {
    let m = pair.degree();
    if j < 2 || j > m {
        return Err(ObarError::IndexOutOfRange { j, degree: m });
    }
    debug_assert!(subset.contains(&base) && subset.iter().all(|&i| i < j));
    let a = &pair.group;
    let s = &pair.seq;
    let gens: Vec<GroupElement> = subset.iter().map(|&i| a.sub(&s[i], &s[base])).collect();
    let q = quotient_by_elements(a, &gens)?;
    let mut seq = Vec::with_capacity(m - subset.len() + 1);
    seq.push(q.project(&s[base]));
    for i in (0..j).filter(|i| !subset.contains(i)) {
        seq.push(q.project(&a.sub(&s[i], &s[base])));
    }
    for x in &s[j..] {
        seq.push(q.project(x));
    }
    Ok((q.group().clone(), seq))
}

/// Nonempty subsets of `0..j` as sorted index lists, ordered by bitmask.
pub fn nonempty_subsets(j: usize) -> impl Iterator<Item = Vec<usize>> {
    (1u32..(1u32 << j)).map(move |mask| (0..j).filter(|&i| mask & (1 << i) != 0).collect())
}

/// The terms `(-t)^{|I|-1} [A/A_I, ...]` of the relation for the first `j`
/// entries of `pair`, using the smallest element of `I` as base.
pub fn relation_terms(pair: &SymbolPair, j: usize) -> Result<Vec<RelationTerm>, ObarError> {
    let m = pair.degree();
    if j < 2 || j > m {
        return Err(ObarError::IndexOutOfRange { j, degree: m });
    }
    nonempty_subsets(j)
        .map(|subset| {
            let (quotient, seq) = relation_term_with_base(pair, j, &subset, subset[0])?;
            let k = subset.len() - 1;
            Ok(RelationTerm { subset, quotient, seq, t_power: k, sign: if k % 2 == 0 { 1 } else { -1 } })
        })
        .collect()
}

/// Relator `[A,S] - sum_I (-t)^{|I|-1} [...]` for a concrete representative.
pub fn blowup_relation_for(pair: &SymbolPair, torsion: u64, j: usize) -> Result<FormalSum, ObarError> {
    let whole = canonicalize_unchecked(pair, torsion);
    let mut rel = FormalSum::from_symbol(&whole);
    for term in relation_terms(pair, j)? {
        rel.add_term(&term.symbol(torsion), -term.sign)?;
    }
    Ok(rel)
}

/// Relator for the canonical representative of `s`, blowing up along its
/// first `j` entries.
pub fn blowup_relation(s: &CanonicalSymbol, j: usize) -> Result<FormalSum, ObarError> {
    blowup_relation_for(&s.pair(), s.torsion(), j)
}

/// Relator with the entries at `positions` moved to the front (the others
/// keep their order).
pub fn blowup_relation_at(pair: &SymbolPair, torsion: u64, positions: &[usize]) -> Result<FormalSum, ObarError> {
    let m = pair.degree();
    let mut order: Vec<usize> = positions.to_vec();
    order.extend((0..m).filter(|i| !positions.contains(i)));
    let seq = order.iter().map(|&i| pair.seq[i].clone()).collect();
    blowup_relation_for(&SymbolPair { group: pair.group.clone(), seq }, torsion, positions.len())
}

/// Which blow-up relations are stacked into a graded piece.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RelationScope {
    /// Every `j` in `2..=n` and every choice of `j` entries to blow up.
    #[default]
    AllPositions,
    /// Only `j = 2`, still for every pair of entries.
    PairsOnly,
    /// Every `j`, but only the leading entries of the canonical representative.
    CanonicalPrefix,
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] != i + n - k) else { break };
        cur[i] += 1;
        for l in i + 1..k {
            cur[l] = cur[l - 1] + 1;
        }
    }
    out
}

/// All relators imposed on a symbol under the given scope, in a fixed order.
pub fn relators(s: &CanonicalSymbol, scope: RelationScope) -> Result<Vec<FormalSum>, ObarError> {
    let n = s.degree();
    let pair = s.pair();
    let mut out = Vec::new();
    for j in 2..=n {
        match scope {
            RelationScope::CanonicalPrefix => out.push(blowup_relation_for(&pair, s.torsion(), j)?),
            RelationScope::PairsOnly if j > 2 => {}
            _ => {
                for positions in combinations(n, j) {
                    out.push(blowup_relation_at(&pair, s.torsion(), &positions)?);
                }
            }
        }
    }
    Ok(out)
}

/// Generators of the split-symbol submodule in degree `n`: for each multiset
/// of divisors `d >= 2` of `e` of size at most `n`, the symbol
/// `t^{n-r} (C_d1 ⊕ ... ⊕ C_dr, standard generators)`.
pub fn c_generators(degree: usize, torsion: u64) -> Vec<CanonicalSymbol> {
    let divisors: Vec<u64> = (2..=torsion).filter(|d| torsion.is_multiple_of(*d)).collect();
    let mut out = BTreeSet::new();
    let mut stack: Vec<Vec<u64>> = vec![Vec::new()];
    while let Some(ms) = stack.pop() {
        let mut rows: Vec<Vec<u64>> = Vec::with_capacity(degree);
        for i in 0..degree {
            let mut row = vec![0; degree];
            row[i] = ms.get(i).copied().unwrap_or(1) % torsion;
            rows.push(row);
        }
        out.insert(CanonicalSymbol::from_lattice(degree, torsion, &rows));
        if ms.len() < degree {
            let start = ms.last().copied().unwrap_or(0);
            for &d in divisors.iter().filter(|&&d| d >= start) {
                let mut next = ms.clone();
                next.push(d);
                stack.push(next);
            }
        }
    }
    out.into_iter().collect()
}

// ---------------------------------------------------------------------------
// Graded pieces

#[derive(Clone, Copy, Debug)]
pub struct PieceConfig {
    pub degree_cap: usize,
    pub symbol_cap: usize,
    pub scope: RelationScope,
}

impl Default for PieceConfig {
    fn default() -> Self {
        PieceConfig { degree_cap: 4, symbol_cap: 100_000, scope: RelationScope::AllPositions }
    }
}

/// A computed graded piece `B_n^[e]` (or its quotient by the split
/// submodule), with enough data to reduce arbitrary classes.
#[derive(Clone, Debug)]
pub struct GradedPieceResult {
    pub torsion: u64,
    pub degree: usize,
    pub mod_c: bool,
    pub basis: Vec<CanonicalSymbol>,
    pub relations: IntMatrix,
    pub invariants: AbGroupInvariants,
    index: HashMap<CanonicalSymbol, usize>,
    cokernel: Cokernel,
}

impl GradedPieceResult {
    pub fn index_of(&self, s: &CanonicalSymbol) -> Option<usize> {
        self.index.get(s).copied()
    }

    fn vector(&self, x: &FormalSum) -> Result<Vec<BigInt>, ObarError> {
        if x.degree() != self.degree || x.torsion() != self.torsion {
            return Err(ObarError::Inhomogeneous {
                expected: self.degree,
                expected_torsion: self.torsion,
                degree: x.degree(),
                torsion: x.torsion(),
            });
        }
        let mut v = vec![BigInt::from(0); self.basis.len()];
        for (s, &c) in x.terms() {
            let i = self.index.get(s).expect("every symbol of this degree and torsion is enumerated");
            v[*i] += c;
        }
        Ok(v)
    }

    /// Coordinates of the class of `x` in the invariant-factor decomposition.
    pub fn reduce_class(&self, x: &FormalSum) -> Result<ClassCoordinates, ObarError> {
        Ok(self.cokernel.coordinates(&self.vector(x)?).expect("dimension checked"))
    }

    pub fn class_order(&self, x: &FormalSum) -> Result<ElementOrder, ObarError> {
        Ok(self.cokernel.order(&self.vector(x)?).expect("dimension checked"))
    }

    pub fn same_class(&self, x: &FormalSum, y: &FormalSum) -> Result<bool, ObarError> {
        Ok(self.class_order(&x.minus(y)?)? == ElementOrder::Finite(BigInt::from(1)))
    }

    pub fn cokernel(&self) -> &Cokernel {
        &self.cokernel
    }
}

/// Builds `B_n^[e]` (or `B_n^[e] / (C ∩ B_n^[e])` when `mod_c`) from the
/// enumerated symbols and the stacked blow-up relations.
pub fn compute_graded_piece(
    degree: usize,
    torsion: u64,
    mod_c: bool,
    config: &PieceConfig,
) -> Result<GradedPieceResult, ObarError> {
    if degree > config.degree_cap {
        return Err(ObarError::DegreeCap { degree, cap: config.degree_cap });
    }
    let basis = enumerate_symbols(degree, torsion, config.symbol_cap)?;
    let index: HashMap<CanonicalSymbol, usize> =
        basis.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    let per_symbol: Vec<Vec<FormalSum>> = basis
        .par_iter()
        .map(|s| relators(s, config.scope))
        .collect::<Result<_, _>>()?;
    let cols = basis.len();
    let to_row = |f: &FormalSum| {
        let mut row = vec![BigInt::from(0); cols];
        for (s, &c) in f.terms() {
            row[index[s]] += c;
        }
        row
    };
    let mut rows: Vec<Vec<BigInt>> = per_symbol.iter().flatten().map(to_row).collect();
    if mod_c {
        for g in c_generators(degree, torsion) {
            rows.push(to_row(&FormalSum::from_symbol(&g)));
        }
    }
    let relations = IntMatrix::from_big_rows(cols, rows).expect("rows built with basis width");
    let cokernel = Cokernel::of(&relations);
    let invariants = cokernel.invariants();
    Ok(GradedPieceResult { torsion, degree, mod_c, basis, relations, invariants, index, cokernel })
}

/// Applies `[A,S] -> [A/e'A, S]` termwise.
pub fn retract_sum(x: &FormalSum, retract_to: u64) -> Result<FormalSum, ObarError> {
    let mut out = FormalSum::zero(x.degree(), retract_to);
    for (s, &c) in x.terms() {
        out.add_term(&torsion_retraction(s, retract_to)?, c)?;
    }
    Ok(out)
}

/// Invariants of the same piece under each relation scope, for comparing
/// the `j = 2` relations with the full set.
pub fn relation_scope_diagnostic(
    degree: usize,
    torsion: u64,
    mod_c: bool,
    config: &PieceConfig,
) -> Result<Vec<(RelationScope, AbGroupInvariants)>, ObarError> {
    [RelationScope::AllPositions, RelationScope::PairsOnly, RelationScope::CanonicalPrefix]
        .into_iter()
        .map(|scope| {
            let cfg = PieceConfig { scope, ..*config };
            Ok((scope, compute_graded_piece(degree, torsion, mod_c, &cfg)?.invariants))
        })
        .collect()
}
