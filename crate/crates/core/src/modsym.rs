//! Manin symbols for `Gamma_0(p)`: the orbifold homology of `X_0(p)`, its
//! quotient by conjugation, and the presentation by cyclic symbols
//! `[C_p,(1,a)]`.

use std::fmt;

use thiserror::Error;

use crate::linalg::{cokernel_invariants, AbGroupInvariants, IntMatrix};
use crate::obar::{compute_graded_piece, ObarError, PieceConfig};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModsymError {
    #[error("{0} is not a prime at least 5")]
    BadPrime(u64),
    #[error("index {a} outside 2..={max}")]
    IndexOutOfRange { a: u64, max: u64 },
    #[error("a' and a'' are undefined for a = {a} when p = {p}")]
    Excluded { p: u64, a: u64 },
    #[error(transparent)]
    Obar(#[from] ObarError),
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

fn check_prime(p: u64) -> Result<(), ModsymError> {
    if p < 5 || !is_prime(p) {
        return Err(ModsymError::BadPrime(p));
    }
    Ok(())
}

/// Primes `p` with `lo <= p < hi` and `p >= 5`.
pub fn primes_in(lo: u64, hi: u64) -> Vec<u64> {
    (lo.max(5)..hi).filter(|&p| is_prime(p)).collect()
}

/// Genus of `X_0(p)`.
pub fn genus_x0(p: u64) -> Result<u64, ModsymError> {
    check_prime(p)?;
    let base = p / 12;
    Ok(match p % 12 {
        1 => base - 1,
        11 => base + 1,
        _ => base,
    })
}

fn inverse_mod(a: u64, p: u64) -> u64 {
    let (mut r0, mut r1) = (p as i64, a as i64);
    let (mut s0, mut s1) = (0i64, 1i64);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
    }
    debug_assert_eq!(r0, 1);
    s0.rem_euclid(p as i64) as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModularIndices {
    pub inv: u64,
    /// `-a^{-1} - 1`, absent for `a` in `{(p-1)/2, p-2}`.
    pub prime: Option<u64>,
    /// `-(a+1)^{-1}`, absent for `a` in `{(p-1)/2, p-2}`.
    pub double_prime: Option<u64>,
}

/// `a^{-1}`, `a'` and `a''` reduced to `1..p-1`.
pub fn modular_arithmetic(p: u64, a: u64) -> Result<ModularIndices, ModsymError> {
    check_prime(p)?;
    if a < 2 || a > p - 2 {
        return Err(ModsymError::IndexOutOfRange { a, max: p - 2 });
    }
    let inv = inverse_mod(a, p);
    if a == p - 2 || a == (p - 1) / 2 {
        return Ok(ModularIndices { inv, prime: None, double_prime: None });
    }
    let prime = (2 * p - inv - 1) % p;
    let double_prime = p - inverse_mod(a + 1, p);
    Ok(ModularIndices { inv, prime: Some(prime), double_prime: Some(double_prime) })
}

/// `a'` and `a''`, failing on the excluded indices.
pub fn primes_of(p: u64, a: u64) -> Result<(u64, u64), ModsymError> {
    let m = modular_arithmetic(p, a)?;
    match (m.prime, m.double_prime) {
        (Some(x), Some(y)) => Ok((x, y)),
        _ => Err(ModsymError::Excluded { p, a }),
    }
}

/// Labelled generators and integer relation rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Presentation {
    pub generators: Vec<String>,
    pub relations: Vec<Vec<i64>>,
}

impl Presentation {
    fn indexed(p: u64, label: impl Fn(u64) -> String) -> Self {
        Presentation { generators: (2..=p - 2).map(label).collect(), relations: Vec::new() }
    }

    /// Adds a row with `+coeff` at each listed index `a` (generator `a - 2`).
    fn push(&mut self, terms: &[(u64, i64)]) {
        let mut row = vec![0; self.generators.len()];
        for &(a, c) in terms {
            assert!(a >= 2 && (a as usize) < self.generators.len() + 2, "index {a} outside the generator range");
            row[a as usize - 2] += c;
        }
        self.relations.push(row);
    }

    pub fn invariants(&self) -> AbGroupInvariants {
        let m = IntMatrix::from_rows(self.generators.len(), &self.relations).expect("rows match generators");
        cokernel_invariants(&m)
    }
}

fn manin_label(a: u64) -> String {
    format!("{{0,1/{a}}}")
}

fn manin_relations(p: u64) -> Presentation {
    let mut pres = Presentation::indexed(p, manin_label);
    for a in 2..=p - 2 {
        let inv = inverse_mod(a, p);
        pres.push(&[(a, 1), (p - inv, 1)]);
    }
    for a in 2..=p - 2 {
        if let Ok((x, y)) = primes_of(p, a) {
            pres.push(&[(a, 1), (x, 1), (y, 1)]);
        }
    }
    pres.push(&[((p - 1) / 2, 1), (p - 2, 1)]);
    pres
}

/// Presentation of `H_1(X_0(p)_orb, Z)` by Manin symbols `{0,1/a}`.
pub fn h1_orb_presentation(p: u64) -> Result<(Presentation, AbGroupInvariants), ModsymError> {
    check_prime(p)?;
    let pres = manin_relations(p);
    let inv = pres.invariants();
    Ok((pres, inv))
}

/// Torsion and rank of `H_1(X_0(p)_orb, Z)` by the residue of `p` mod 12.
pub fn h1_orb_expected(p: u64) -> Result<AbGroupInvariants, ModsymError> {
    let g = genus_x0(p)? as usize;
    let torsion: &[u64] = match p % 12 {
        1 => &[6],
        5 => &[2],
        7 => &[3],
        _ => &[],
    };
    Ok(AbGroupInvariants::from_cyclic_orders(2 * g, torsion))
}

/// The Manin presentation plus `{0,1/a} + {0,1/(p-a)}` for every `a`.
pub fn conjugation_presentation(p: u64) -> Result<Presentation, ModsymError> {
    check_prime(p)?;
    let mut pres = manin_relations(p);
    for a in 2..=p - 2 {
        pres.push(&[(a, 1), (p - a, 1)]);
    }
    Ok(pres)
}

pub fn conjugation_quotient(p: u64) -> Result<AbGroupInvariants, ModsymError> {
    Ok(conjugation_presentation(p)?.invariants())
}

/// Generators `[C_p,(1,a)]` with the four relation families.
pub fn rel14_presentation(p: u64) -> Result<Presentation, ModsymError> {
    check_prime(p)?;
    let mut pres = Presentation::indexed(p, |a| format!("[C{p},(1,{a})]"));
    for a in 2..=p - 2 {
        let inv = inverse_mod(a, p);
        if inv != a {
            pres.push(&[(a, 1), (inv, -1)]);
        }
    }
    pres.push(&[(2, 2)]);
    pres.push(&[(2, 1), (p - 2, 1)]);
    let half = (p - 1) / 2;
    for a in (3..=half).chain(half + 2..=p - 2) {
        let inv = inverse_mod(a, p);
        pres.push(&[(a, 1), (a - 1, -1), (inv - 1, -1)]);
    }
    Ok(pres)
}

pub fn rel14_invariants(p: u64) -> Result<AbGroupInvariants, ModsymError> {
    Ok(rel14_presentation(p)?.invariants())
}

/// `Z/2 ⊕ Z^g` when `p ≡ 1 mod 4`, else `Z^g`.
pub fn closed_form(p: u64) -> Result<AbGroupInvariants, ModsymError> {
    let g = genus_x0(p)? as usize;
    let torsion: &[u64] = if p % 4 == 1 { &[2] } else { &[] };
    Ok(AbGroupInvariants::from_cyclic_orders(g, torsion))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrossCheckReport {
    pub p: u64,
    pub genus: u64,
    pub h1_orb: AbGroupInvariants,
    /// Absent above the symbol-module limit.
    pub obar: Option<AbGroupInvariants>,
    pub rel14: AbGroupInvariants,
    pub conjugation: AbGroupInvariants,
    pub closed_form: AbGroupInvariants,
    pub h1_orb_matches: bool,
    pub agree: bool,
}

/// Compares the symbol-module quotient (when `p <= obar_limit`), the four
/// relation families, the conjugation quotient, and the closed form.
pub fn cross_check(p: u64, obar_limit: u64) -> Result<CrossCheckReport, ModsymError> {
    let genus = genus_x0(p)?;
    let (_, h1_orb) = h1_orb_presentation(p)?;
    let obar = if p <= obar_limit {
        Some(compute_graded_piece(2, p, true, &PieceConfig::default())?.invariants)
    } else {
        None
    };
    let rel14 = rel14_invariants(p)?;
    let conjugation = conjugation_quotient(p)?;
    let closed = closed_form(p)?;
    let agree = rel14 == closed && conjugation == closed && obar.as_ref().is_none_or(|o| *o == closed);
    Ok(CrossCheckReport {
        p,
        genus,
        h1_orb_matches: h1_orb == h1_orb_expected(p)?,
        h1_orb,
        obar,
        rel14,
        conjugation,
        closed_form: closed,
        agree,
    })
}

impl CrossCheckReport {
    pub const CSV_HEADER: &'static str = "p,genus,h1_orb,conjugation,rel14,obar,closed_form,match";

    pub fn csv_row(&self) -> String {
        let obar = self.obar.as_ref().map_or("-".to_string(), |o| o.to_string());
        format!(
            "{},{},{},{},{},{},{},{}",
            self.p, self.genus, self.h1_orb, self.conjugation, self.rel14, obar, self.closed_form, self.agree
        )
    }
}

impl fmt::Display for CrossCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.csv_row())
    }
}

pub fn cross_check_csv(reports: &[CrossCheckReport]) -> String {
    let mut out = String::from(CrossCheckReport::CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}
