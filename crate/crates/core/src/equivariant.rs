//! The identification rule for equivariant symbols with trivial Galois
//! data: saturated index sets, their cosets, and the resulting terms.

use serde::Serialize;
use thiserror::Error;

use crate::finabel::{canonicalize_unchecked, CanonicalSymbol, FinAbGroup, FinabelError, GroupElement, SymbolPair};
use crate::obar::{blowup_relation_for, nonempty_subsets, relation_term_with_base, FormalSum, ObarError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EquivariantError {
    #[error("sequence entry {0} is zero")]
    ZeroWeight(usize),
    #[error("the sequence does not generate the group")]
    NotGenerating,
    #[error("index j = {j} out of range 2..={degree}")]
    IndexOutOfRange { j: usize, degree: usize },
    #[error(transparent)]
    Group(#[from] FinabelError),
    #[error(transparent)]
    Obar(#[from] ObarError),
}

/// A character group with a faithful sequence of nonzero weights.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedGroupSymbol {
    group: FinAbGroup,
    seq: Vec<GroupElement>,
}

impl FixedGroupSymbol {
    pub fn new(group: FinAbGroup, seq: Vec<GroupElement>) -> Result<Self, EquivariantError> {
        for (i, x) in seq.iter().enumerate() {
            group.check(x)?;
            if x.0.iter().all(|&c| c == 0) {
                return Err(EquivariantError::ZeroWeight(i));
            }
        }
        if !group.generated_by(&seq) {
            return Err(EquivariantError::NotGenerating);
        }
        Ok(FixedGroupSymbol { group, seq })
    }

    pub fn cyclic(d: u64, weights: &[i64]) -> Result<Self, EquivariantError> {
        let g = FinAbGroup::cyclic(d);
        let seq = weights.iter().map(|&w| g.element(&[w])).collect::<Result<_, _>>()?;
        Self::new(g, seq)
    }

    pub fn group(&self) -> &FinAbGroup {
        &self.group
    }

    pub fn seq(&self) -> &[GroupElement] {
        &self.seq
    }

    pub fn degree(&self) -> usize {
        self.seq.len()
    }

    fn pair(&self) -> SymbolPair {
        SymbolPair { group: self.group.clone(), seq: self.seq.clone() }
    }

    fn check_j(&self, j: usize) -> Result<(), EquivariantError> {
        if j < 2 || j > self.degree() {
            return Err(EquivariantError::IndexOutOfRange { j, degree: self.degree() });
        }
        Ok(())
    }
}

/// A nonempty `I ⊆ {0..j-1}` with its coset `C_I = a_{i0} + A_I`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SaturatedSet {
    pub subset: Vec<usize>,
    pub coset_rep: GroupElement,
    /// Generators `a_i - a_{i0}` of `A_I`.
    pub coset_span: Vec<GroupElement>,
}

fn in_span(g: &FinAbGroup, span: &[GroupElement], x: &GroupElement) -> Result<bool, FinabelError> {
    let q = crate::finabel::quotient_by_elements(g, span)?;
    Ok(q.project(x).0.iter().all(|&c| c == 0))
}

/// Every `I` with `I = {i < j : a_i ∈ C_I}`.
pub fn saturated_subsets(s: &FixedGroupSymbol, j: usize) -> Result<Vec<SaturatedSet>, EquivariantError> {
    s.check_j(j)?;
    let g = &s.group;
    let mut out = Vec::new();
    for subset in nonempty_subsets(j) {
        let base = &s.seq[subset[0]];
        let span: Vec<GroupElement> = subset.iter().map(|&i| g.sub(&s.seq[i], base)).collect();
        let mut members = Vec::new();
        for i in 0..j {
            if in_span(g, &span, &g.sub(&s.seq[i], base))? {
                members.push(i);
            }
        }
        if members == subset {
            out.push(SaturatedSet { subset, coset_rep: base.clone(), coset_span: span });
        }
    }
    Ok(out)
}

/// One term `t^bump [A/A_I, seq]` of the expansion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpansionTerm {
    pub set: SaturatedSet,
    pub quotient: FinAbGroup,
    pub seq: Vec<GroupElement>,
    pub bump: usize,
    /// Set when a zero appears in `seq`; such terms do not contribute.
    pub omitted: bool,
}

impl ExpansionTerm {
    pub fn symbol(&self, torsion: u64) -> CanonicalSymbol {
        let mut seq = self.seq.clone();
        seq.extend(std::iter::repeat_n(self.quotient.zero(), self.bump));
        canonicalize_unchecked(&SymbolPair { group: self.quotient.clone(), seq }, torsion)
    }
}

/// All terms indexed by saturated sets, including the omitted ones.
pub fn expansion_records(s: &FixedGroupSymbol, j: usize) -> Result<Vec<ExpansionTerm>, EquivariantError> {
    let pair = s.pair();
    saturated_subsets(s, j)?
        .into_iter()
        .map(|set| {
            let (quotient, seq) = relation_term_with_base(&pair, j, &set.subset, set.subset[0])?;
            let omitted = seq.iter().any(|x| x.0.iter().all(|&c| c == 0));
            let bump = set.subset.len() - 1;
            Ok(ExpansionTerm { set, quotient, seq, bump, omitted })
        })
        .collect()
}

/// The retained terms.
pub fn appendix_expansion(s: &FixedGroupSymbol, j: usize) -> Result<Vec<ExpansionTerm>, EquivariantError> {
    Ok(expansion_records(s, j)?.into_iter().filter(|t| !t.omitted).collect())
}

/// Sum of the retained terms, each `t^bump [A/A_I, seq]`, over the exponent
/// of `A`.
pub fn expansion_total(s: &FixedGroupSymbol, j: usize) -> Result<FormalSum, EquivariantError> {
    let e = s.group.exponent();
    let mut out = FormalSum::zero(s.degree(), e);
    for t in appendix_expansion(s, j)? {
        out.add_term(&t.symbol(e), 1)?;
    }
    Ok(out)
}

/// The expansion total minus the right-hand side of the blow-up relation.
pub fn expansion_diff(s: &FixedGroupSymbol, j: usize) -> Result<FormalSum, EquivariantError> {
    s.check_j(j)?;
    let e = s.group.exponent();
    let pair = s.pair();
    let relator = blowup_relation_for(&pair, e, j)?;
    // relator = [A,S] - rhs
    let mut rhs = FormalSum::from_symbol(&canonicalize_unchecked(&pair, e));
    rhs.add_scaled(&relator, -1)?;
    Ok(expansion_total(s, j)?.minus(&rhs)?)
}

/// Dump record, with indices reported from 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExpansionRecord {
    pub subset: Vec<usize>,
    pub coset_rep: Vec<u64>,
    pub coset_group: Vec<u64>,
    pub quotient: Vec<u64>,
    pub seq: Vec<Vec<u64>>,
    pub bump: usize,
    pub omitted: bool,
}

pub fn expansion_dump(s: &FixedGroupSymbol, j: usize) -> Result<Vec<ExpansionRecord>, EquivariantError> {
    let g = &s.group;
    expansion_records(s, j)?
        .into_iter()
        .map(|t| {
            let sub = subgroup_factors(g, &t.set.coset_span)?;
            Ok(ExpansionRecord {
                subset: t.set.subset.iter().map(|i| i + 1).collect(),
                coset_rep: t.set.coset_rep.0.clone(),
                coset_group: sub,
                quotient: t.quotient.factors().to_vec(),
                seq: t.seq.iter().map(|x| x.0.clone()).collect(),
                bump: t.bump,
                omitted: t.omitted,
            })
        })
        .collect()
}

/// Invariant factors of the subgroup generated by `gens`: `Z^k` modulo the
/// integer relations among them. The relation lattice contains `eZ^k`, so
/// enumerating coefficient vectors in `[0, e)^k` finds all of it.
fn subgroup_factors(g: &FinAbGroup, gens: &[GroupElement]) -> Result<Vec<u64>, EquivariantError> {
    use crate::linalg::{cokernel_invariants, IntMatrix};
    let k = gens.len();
    let e = g.exponent();
    let mut rows: Vec<Vec<i64>> =
        (0..k).map(|i| (0..k).map(|l| if l == i { e as i64 } else { 0 }).collect()).collect();
    for mut idx in 1..e.pow(k as u32) {
        let mut coeffs = vec![0i64; k];
        for c in coeffs.iter_mut() {
            *c = (idx % e) as i64;
            idx /= e;
        }
        let x = coeffs.iter().zip(gens).fold(g.zero(), |acc, (&c, x)| g.add(&acc, &g.scale(c, x)));
        if x == g.zero() {
            rows.push(coeffs);
        }
    }
    let m = IntMatrix::from_rows(k, &rows).expect("rows have k entries");
    Ok(cokernel_invariants(&m).torsion_u64())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(w: &[i64]) -> FixedGroupSymbol {
        FixedGroupSymbol::cyclic(5, w).unwrap()
    }

    fn cyc(d: u64, w: &[i64], e: u64) -> CanonicalSymbol {
        SymbolPair::cyclic(d, w).unwrap().canonicalize(e).unwrap()
    }

    fn subsets(s: &FixedGroupSymbol) -> Vec<Vec<usize>> {
        saturated_subsets(s, 2).unwrap().into_iter().map(|x| x.subset).collect()
    }

    #[test]
    fn validation() {
        assert_eq!(FixedGroupSymbol::cyclic(5, &[1, 0]), Err(EquivariantError::ZeroWeight(1)));
        assert_eq!(FixedGroupSymbol::cyclic(6, &[2, 4]), Err(EquivariantError::NotGenerating));
        assert!(matches!(saturated_subsets(&sym(&[1, 2]), 3), Err(EquivariantError::IndexOutOfRange { .. })));
    }

    #[test]
    fn saturation_examples() {
        assert_eq!(subsets(&sym(&[1, 1])), vec![vec![0, 1]]);
        assert_eq!(subsets(&sym(&[1, 2])), vec![vec![0], vec![1], vec![0, 1]]);
        let s = FixedGroupSymbol::cyclic(7, &[1, 2, 3]).unwrap();
        let singles: Vec<_> =
            saturated_subsets(&s, 3).unwrap().into_iter().filter(|x| x.subset.len() == 1).map(|x| x.subset).collect();
        assert_eq!(singles, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn expansion_examples() {
        let terms = |w: &[i64]| -> Vec<(Vec<u64>, usize)> {
            appendix_expansion(&sym(w), 2)
                .unwrap()
                .into_iter()
                .map(|t| (t.seq.iter().map(|x| x.0[0]).collect(), t.bump))
                .collect()
        };
        assert_eq!(terms(&[1, 2]), vec![(vec![1, 1], 0), (vec![2, 4], 0)]);
        assert_eq!(terms(&[1, 1]), vec![(vec![1], 1)]);
        assert_eq!(terms(&[1, 4]), vec![(vec![1, 3], 0), (vec![4, 2], 0)]);
        let recs = expansion_records(&sym(&[1, 2]), 2).unwrap();
        assert_eq!(recs.len(), 3);
        assert!(recs[2].omitted && recs[2].quotient.is_trivial());
    }

    #[test]
    fn diff_examples() {
        let t2 = SymbolPair::split(vec![], 2).unwrap().canonicalize(5).unwrap();
        assert!(expansion_diff(&sym(&[1, 1]), 2).unwrap().is_zero());
        assert_eq!(expansion_diff(&sym(&[1, 2]), 2).unwrap(), FormalSum::from_symbol(&t2));
        assert_eq!(expansion_diff(&sym(&[1, 4]), 2).unwrap(), FormalSum::from_symbol(&t2));
        assert_eq!(expansion_total(&sym(&[1, 1]), 2).unwrap(), FormalSum::from_symbol(&cyc(5, &[1], 5).t_shift()));
    }

    #[test]
    fn dump_records() {
        let d = expansion_dump(&sym(&[1, 1]), 2).unwrap();
        assert_eq!(
            d,
            vec![ExpansionRecord {
                subset: vec![1, 2],
                coset_rep: vec![1],
                coset_group: vec![],
                quotient: vec![5],
                seq: vec![vec![1]],
                bump: 1,
                omitted: false,
            }]
        );
        let d = expansion_dump(&sym(&[1, 2]), 2).unwrap();
        assert_eq!(d[2].coset_group, vec![5]);
        let g = FinAbGroup::new(vec![2, 4]).unwrap();
        let s = FixedGroupSymbol::new(g.clone(), vec![g.element(&[1, 0]).unwrap(), g.element(&[0, 1]).unwrap(), g.element(&[1, 1]).unwrap()]).unwrap();
        for r in expansion_dump(&s, 3).unwrap() {
            let sub: u64 = r.coset_group.iter().product();
            let quo: u64 = r.quotient.iter().product();
            assert_eq!(sub * quo, 8, "{r:?}");
        }
    }

    #[test]
    fn retained_terms_generate_and_have_expected_length() {
        for d in [4u64, 5, 6, 8] {
            let g = FinAbGroup::cyclic(d);
            for a in 1..d {
                for b in 1..d {
                    for c in 1..d {
                        let seq = vec![g.element(&[a as i64]).unwrap(), g.element(&[b as i64]).unwrap(), g.element(&[c as i64]).unwrap()];
                        let Ok(s) = FixedGroupSymbol::new(g.clone(), seq) else { continue };
                        for j in 2..=3 {
                            let sat = saturated_subsets(&s, j).unwrap();
                            let cosets: std::collections::BTreeSet<_> = sat
                                .iter()
                                .map(|x| {
                                    let q = crate::finabel::quotient_by_elements(&g, &x.coset_span).unwrap();
                                    (q.group().clone(), g.elements().filter(|y| q.project(&g.sub(y, &x.coset_rep)).0.iter().all(|&v| v == 0)).collect::<Vec<_>>())
                                })
                                .collect();
                            assert_eq!(cosets.len(), sat.len());
                            for t in appendix_expansion(&s, j).unwrap() {
                                assert!(t.quotient.generated_by(&t.seq));
                                assert_eq!(t.seq.len(), 1 + (j - t.set.subset.len()) + (3 - j));
                            }
                        }
                    }
                }
            }
        }
    }
}
