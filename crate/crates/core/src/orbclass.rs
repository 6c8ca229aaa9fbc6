//! Symbolic rational orbifold surfaces: their classes in degree two, point
//! blow-ups, and randomized invariance checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::finabel::{
    canonicalize_unchecked, groups_of_order_at_most, quotient_by_elements, CanonicalSymbol, FinAbGroup,
    FinabelError, GroupElement, SymbolPair,
};
use crate::linalg::ElementOrder;
use crate::obar::{compute_graded_piece, FormalSum, GradedPieceResult, ObarError, PieceConfig};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OrbclassError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("{kind} index {index} out of range (have {len})")]
    IndexOutOfRange { kind: &'static str, index: usize, len: usize },
    #[error("unsupported blow-up: {0}")]
    Unsupported(String),
    #[error("operation needs torsion bound {expected}, model has {actual}")]
    WrongTorsion { expected: u64, actual: u64 },
    #[error("malformed intersection data: {0}")]
    Poset(String),
    #[error("cannot parse blow-up step {0:?}")]
    Parse(String),
    #[error(transparent)]
    Group(#[from] FinabelError),
    #[error(transparent)]
    Obar(#[from] ObarError),
}

/// A stacky point: stabilizer characters `A` and the two tangent weights.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StackyPoint {
    pub group: FinAbGroup,
    pub weights: [GroupElement; 2],
}

/// A point on a stacky curve. `weights[0]` is the weight along the curve,
/// `weights[1]` the normal one.
pub type SpecialPoint = StackyPoint;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StackyCurve {
    pub group: FinAbGroup,
    pub weight: GroupElement,
    pub special_points: Vec<SpecialPoint>,
}

/// One stratum of a model, as reported to users.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stratum {
    pub label: String,
    pub dimension: usize,
    pub rational: bool,
    pub group: FinAbGroup,
    pub weights: Vec<GroupElement>,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pair = SymbolPair { group: self.group.clone(), seq: self.weights.clone() };
        write!(f, "{} (dim {}): {}", self.label, self.dimension, pair)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SurfaceModel {
    pub torsion: u64,
    pub points: Vec<StackyPoint>,
    pub curves: Vec<StackyCurve>,
}

fn symbol(group: &FinAbGroup, seq: &[GroupElement], torsion: u64) -> CanonicalSymbol {
    canonicalize_unchecked(&SymbolPair { group: group.clone(), seq: seq.to_vec() }, torsion)
}

impl StackyPoint {
    pub fn symbol(&self, torsion: u64) -> CanonicalSymbol {
        symbol(&self.group, &self.weights, torsion)
    }

    fn validate(&self, torsion: u64, what: &str) -> Result<(), OrbclassError> {
        let bad = |msg: &str| Err(OrbclassError::InvalidModel(format!("{what}: {msg}")));
        for w in &self.weights {
            self.group.check(w)?;
        }
        if self.group.is_trivial() {
            return bad("trivial stabilizer");
        }
        if !torsion.is_multiple_of(self.group.exponent()) {
            return bad("stabilizer is not killed by the torsion bound");
        }
        if self.weights.iter().any(|w| w.0.iter().all(|&x| x == 0)) {
            return bad("zero weight");
        }
        if !self.group.generated_by(&self.weights) {
            return bad("weights do not generate the stabilizer");
        }
        Ok(())
    }
}

impl StackyCurve {
    pub fn symbol(&self, torsion: u64) -> CanonicalSymbol {
        symbol(&self.group, std::slice::from_ref(&self.weight), torsion)
    }

    /// The curve seen from a special point: the stabilizer modulo the
    /// along-curve weight, with the normal weight.
    fn symbol_at(point: &SpecialPoint, torsion: u64) -> Result<CanonicalSymbol, OrbclassError> {
        let q = quotient_by_elements(&point.group, std::slice::from_ref(&point.weights[0]))?;
        Ok(symbol(q.group(), &[q.project(&point.weights[1])], torsion))
    }
}

impl SurfaceModel {
    pub fn new(torsion: u64, points: Vec<StackyPoint>, curves: Vec<StackyCurve>) -> Result<Self, OrbclassError> {
        let m = SurfaceModel { torsion, points, curves };
        m.validate()?;
        Ok(m)
    }

    /// A rational surface with trivial stabilizers everywhere.
    pub fn free(torsion: u64) -> Self {
        SurfaceModel { torsion, points: Vec::new(), curves: Vec::new() }
    }

    pub fn validate(&self) -> Result<(), OrbclassError> {
        if self.torsion == 0 {
            return Err(OrbclassError::InvalidModel("torsion bound must be positive".into()));
        }
        for (i, p) in self.points.iter().enumerate() {
            p.validate(self.torsion, &format!("point {i}"))?;
        }
        for (i, c) in self.curves.iter().enumerate() {
            let bad = |msg: &str| Err(OrbclassError::InvalidModel(format!("curve {i}: {msg}")));
            c.group.check(&c.weight)?;
            if !c.group.is_cyclic() || c.group.is_trivial() {
                return bad("stabilizer must be a nontrivial cyclic group");
            }
            if !self.torsion.is_multiple_of(c.group.exponent()) {
                return bad("stabilizer is not killed by the torsion bound");
            }
            if !c.group.generated_by(std::slice::from_ref(&c.weight)) {
                return bad("weight does not generate the stabilizer");
            }
            let own = c.symbol(self.torsion);
            for (k, s) in c.special_points.iter().enumerate() {
                s.validate(self.torsion, &format!("curve {i}, special point {k}"))?;
                if StackyCurve::symbol_at(s, self.torsion)? != own {
                    return bad(&format!("special point {k} does not restrict to the curve"));
                }
            }
        }
        Ok(())
    }

    pub fn strata(&self) -> Vec<Stratum> {
        let mut out = vec![Stratum {
            label: "free".into(),
            dimension: 2,
            rational: true,
            group: FinAbGroup::trivial(),
            weights: Vec::new(),
        }];
        for (i, c) in self.curves.iter().enumerate() {
            out.push(Stratum {
                label: format!("curve {i}"),
                dimension: 1,
                rational: true,
                group: c.group.clone(),
                weights: vec![c.weight.clone()],
            });
            for (k, s) in c.special_points.iter().enumerate() {
                out.push(Stratum {
                    label: format!("curve {i} point {k}"),
                    dimension: 0,
                    rational: true,
                    group: s.group.clone(),
                    weights: s.weights.to_vec(),
                });
            }
        }
        for (i, p) in self.points.iter().enumerate() {
            out.push(Stratum {
                label: format!("point {i}"),
                dimension: 0,
                rational: true,
                group: p.group.clone(),
                weights: p.weights.to_vec(),
            });
        }
        out
    }
}

/// `(1 - m - c) t^2[0] + sum_i (1 - n_i) t[A_i,(w_i)] + sum_v [A_v, weights_v]`
/// over isolated points `m`, curves `c` with `n_i` special points each, and
/// all stacky points `v`.
pub fn class_of(m: &SurfaceModel) -> Result<FormalSum, OrbclassError> {
    m.validate()?;
    let e = m.torsion;
    let mut x = FormalSum::zero(2, e);
    let base = CanonicalSymbol::from_lattice(0, e, &[]).t_power(2);
    x.add_term(&base, 1 - m.points.len() as i64 - m.curves.len() as i64)?;
    for c in &m.curves {
        x.add_term(&c.symbol(e).t_shift(), 1 - c.special_points.len() as i64)?;
        for s in &c.special_points {
            x.add_term(&s.symbol(e), 1)?;
        }
    }
    for p in &m.points {
        x.add_term(&p.symbol(e), 1)?;
    }
    Ok(x)
}

fn check_index(kind: &'static str, index: usize, len: usize) -> Result<(), OrbclassError> {
    if index >= len {
        return Err(OrbclassError::IndexOutOfRange { kind, index, len });
    }
    Ok(())
}

/// Blows up an isolated stacky point with weights `(a1, a2)`.
pub fn blowup_isolated_point(m: &SurfaceModel, index: usize) -> Result<SurfaceModel, OrbclassError> {
    check_index("point", index, m.points.len())?;
    let mut out = m.clone();
    let StackyPoint { group: a, weights: [a1, a2] } = out.points.remove(index);
    if a1 == a2 {
        out.curves.push(StackyCurve { group: a, weight: a1, special_points: Vec::new() });
        return Ok(out);
    }
    let diff = a.sub(&a2, &a1);
    let q = quotient_by_elements(&a, std::slice::from_ref(&diff))?;
    let first = StackyPoint { group: a.clone(), weights: [a1.clone(), diff.clone()] };
    let second = StackyPoint { group: a.clone(), weights: [a.neg(&diff), a2] };
    if q.group().is_trivial() {
        out.points.push(first);
        out.points.push(second);
    } else {
        // on the exceptional curve the along-curve weights are a2-a1 and a1-a2
        let [f0, f1] = first.weights;
        let [s0, s1] = second.weights;
        out.curves.push(StackyCurve {
            group: q.group().clone(),
            weight: q.project(&a1),
            special_points: vec![
                StackyPoint { group: a.clone(), weights: [f1, f0] },
                StackyPoint { group: a, weights: [s0, s1] },
            ],
        });
    }
    Ok(out)
}

/// Blows up a point of a stacky curve that is not one of its special points.
pub fn blowup_curve_point(m: &SurfaceModel, index: usize) -> Result<SurfaceModel, OrbclassError> {
    check_index("curve", index, m.curves.len())?;
    let c = &m.curves[index];
    let minus = c.group.neg(&c.weight);
    if minus == c.weight {
        return Err(OrbclassError::Unsupported(format!(
            "curve {index} has a weight of order 2; the new point would have equal weights"
        )));
    }
    let mut out = m.clone();
    out.points.push(StackyPoint { group: c.group.clone(), weights: [c.weight.clone(), minus] });
    Ok(out)
}

/// Blowing up a point with trivial stabilizer leaves the stacky data alone.
pub fn blowup_free_point(m: &SurfaceModel) -> SurfaceModel {
    m.clone()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlowupStep {
    Point(usize),
    Curve(usize),
    Free,
    /// A special point on a curve; always rejected.
    Special { curve: usize, point: usize },
}

impl fmt::Display for BlowupStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlowupStep::Point(i) => write!(f, "point {i}"),
            BlowupStep::Curve(i) => write!(f, "curve {i}"),
            BlowupStep::Free => write!(f, "free"),
            BlowupStep::Special { curve, point } => write!(f, "special {curve} {point}"),
        }
    }
}

impl FromStr for BlowupStep {
    type Err = OrbclassError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let words: Vec<&str> = s.split_whitespace().collect();
        let num = |w: &str| w.parse::<usize>().map_err(|_| OrbclassError::Parse(s.to_string()));
        match words.as_slice() {
            ["point", i] => Ok(BlowupStep::Point(num(i)?)),
            ["curve", i] => Ok(BlowupStep::Curve(num(i)?)),
            ["free"] => Ok(BlowupStep::Free),
            ["special", c, p] => Ok(BlowupStep::Special { curve: num(c)?, point: num(p)? }),
            _ => Err(OrbclassError::Parse(s.to_string())),
        }
    }
}

/// Parses a script: one step per line, `#` starts a comment.
pub fn parse_script(text: &str) -> Result<Vec<BlowupStep>, OrbclassError> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::parse)
        .collect()
}

pub fn apply_step(m: &SurfaceModel, step: &BlowupStep) -> Result<SurfaceModel, OrbclassError> {
    match *step {
        BlowupStep::Point(i) => blowup_isolated_point(m, i),
        BlowupStep::Curve(i) => blowup_curve_point(m, i),
        BlowupStep::Free => Ok(blowup_free_point(m)),
        BlowupStep::Special { curve, point } => {
            check_index("curve", curve, m.curves.len())?;
            check_index("special point", point, m.curves[curve].special_points.len())?;
            Err(OrbclassError::Unsupported(format!(
                "point {point} of curve {curve} is a special point; blowing it up is not supported"
            )))
        }
    }
}

/// Parity of the isolated points whose symbol is that of `[C5,(1,2)]`.
pub fn parity_invariant(m: &SurfaceModel) -> Result<bool, OrbclassError> {
    if m.torsion != 5 {
        return Err(OrbclassError::WrongTorsion { expected: 5, actual: m.torsion });
    }
    let target = SymbolPair::cyclic(5, &[1, 2])?.canonicalize(5)?;
    let count = m.points.iter().filter(|p| p.symbol(5) == target).count();
    Ok(count % 2 == 1)
}

/// The `Z/2` coordinate of `x` in a piece isomorphic to `Z ⊕ Z/2` whose free
/// part is spanned by `t^2[0]`: whether `x - k t^2[0]` is nonzero, where `k`
/// is the free coordinate of `x`.
pub fn z2_coordinate(piece: &GradedPieceResult, x: &FormalSum) -> Result<bool, OrbclassError> {
    let inv = &piece.invariants;
    if inv.free_rank != 1 || inv.torsion_u64() != [2] || piece.degree != 2 {
        return Err(OrbclassError::InvalidModel(format!("piece {inv} is not Z ⊕ Z/2 in degree 2")));
    }
    let base = FormalSum::from_symbol(&CanonicalSymbol::from_lattice(0, piece.torsion, &[]).t_power(2));
    let unit = piece.reduce_class(&base)?.free[0].clone();
    let k = piece.reduce_class(x)?.free[0].clone();
    if !unit.abs().is_one() && !k.is_multiple_of(&unit) {
        return Err(OrbclassError::InvalidModel("t^2[0] does not span the free part".into()));
    }
    let k: i64 = (k / unit).try_into().map_err(|_| OrbclassError::InvalidModel("coefficient overflow".into()))?;
    let mut z = x.clone();
    z.add_scaled(&base, -k)?;
    Ok(piece.class_order(&z)? != ElementOrder::Finite(BigInt::one()))
}

// ---------------------------------------------------------------------------
// Open complements

/// Divisors on an ambient variety and their nonempty intersections.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntersectionPoset {
    pub ambient: String,
    pub ambient_dim: usize,
    pub divisors: Vec<String>,
    /// Every nonempty intersection `D_I`, `|I| >= 2`, keyed by sorted index
    /// list, with its label and dimension.
    pub meets: BTreeMap<Vec<usize>, (String, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComplementTerm {
    pub sign: i64,
    pub label: String,
    pub projective_power: usize,
}

impl fmt::Display for ComplementTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.sign < 0 { "-" } else { "+" };
        match self.projective_power {
            0 => write!(f, "{sign}[{}]", self.label),
            1 => write!(f, "{sign}[{}×P¹]", self.label),
            k => write!(f, "{sign}[{}×P^{k}]", self.label),
        }
    }
}

/// `[X] - sum [D_i × P^1] + sum [D_ij × P^2] - ...` over the nonempty
/// intersections.
pub fn open_complement_class(poset: &IntersectionPoset) -> Result<Vec<ComplementTerm>, OrbclassError> {
    let n = poset.divisors.len();
    let mut dims: BTreeMap<Vec<usize>, (String, usize)> = BTreeMap::new();
    dims.insert(Vec::new(), (poset.ambient.clone(), poset.ambient_dim));
    for (i, d) in poset.divisors.iter().enumerate() {
        if poset.ambient_dim == 0 {
            return Err(OrbclassError::Poset("a point has no divisors".into()));
        }
        dims.insert(vec![i], (d.clone(), poset.ambient_dim - 1));
    }
    for (key, v) in &poset.meets {
        if key.len() < 2 || key.windows(2).any(|w| w[0] >= w[1]) || key.iter().any(|&i| i >= n) {
            return Err(OrbclassError::Poset(format!("bad index set {key:?}")));
        }
        dims.insert(key.clone(), v.clone());
    }
    for (key, (label, dim)) in &dims {
        for drop in 0..key.len() {
            let mut sub = key.clone();
            sub.remove(drop);
            match dims.get(&sub) {
                None => return Err(OrbclassError::Poset(format!("{label} is listed but {sub:?} is empty"))),
                Some((_, d)) if d <= dim => {
                    return Err(OrbclassError::Poset(format!("dimension of {label} does not drop")))
                }
                _ => {}
            }
        }
    }
    let mut keys: Vec<&Vec<usize>> = dims.keys().collect();
    keys.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    Ok(keys
        .into_iter()
        .map(|k| ComplementTerm {
            sign: if k.len() % 2 == 0 { 1 } else { -1 },
            label: dims[k].0.clone(),
            projective_power: k.len(),
        })
        .collect())
}

// ---------------------------------------------------------------------------
// File format

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointFile {
    pub factors: Vec<u64>,
    pub weights: [Vec<i64>; 2],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurveFile {
    pub factors: Vec<u64>,
    pub weight: Vec<i64>,
    #[serde(default)]
    pub special_points: Vec<PointFile>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFile {
    pub torsion: u64,
    #[serde(default)]
    pub points: Vec<PointFile>,
    #[serde(default)]
    pub curves: Vec<CurveFile>,
}

fn point_from_file(p: &PointFile) -> Result<StackyPoint, OrbclassError> {
    let group = FinAbGroup::new(p.factors.clone())?;
    let weights = [group.element(&p.weights[0])?, group.element(&p.weights[1])?];
    Ok(StackyPoint { group, weights })
}

fn point_to_file(p: &StackyPoint) -> PointFile {
    let w = |x: &GroupElement| x.0.iter().map(|&c| c as i64).collect();
    PointFile { factors: p.group.factors().to_vec(), weights: [w(&p.weights[0]), w(&p.weights[1])] }
}

impl TryFrom<&ModelFile> for SurfaceModel {
    type Error = OrbclassError;

    fn try_from(f: &ModelFile) -> Result<Self, Self::Error> {
        let points = f.points.iter().map(point_from_file).collect::<Result<_, _>>()?;
        let curves = f
            .curves
            .iter()
            .map(|c| {
                let group = FinAbGroup::new(c.factors.clone())?;
                let weight = group.element(&c.weight)?;
                let special_points = c.special_points.iter().map(point_from_file).collect::<Result<_, _>>()?;
                Ok(StackyCurve { group, weight, special_points })
            })
            .collect::<Result<_, OrbclassError>>()?;
        SurfaceModel::new(f.torsion, points, curves)
    }
}

impl From<&SurfaceModel> for ModelFile {
    fn from(m: &SurfaceModel) -> Self {
        ModelFile {
            torsion: m.torsion,
            points: m.points.iter().map(point_to_file).collect(),
            curves: m
                .curves
                .iter()
                .map(|c| CurveFile {
                    factors: c.group.factors().to_vec(),
                    weight: c.weight.0.iter().map(|&x| x as i64).collect(),
                    special_points: c.special_points.iter().map(point_to_file).collect(),
                })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Randomized campaigns

fn stabilizer_groups(torsion: u64) -> Vec<FinAbGroup> {
    groups_of_order_at_most((torsion as u128).pow(2), 2)
        .into_iter()
        .filter(|g| !g.is_trivial() && torsion.is_multiple_of(g.exponent()))
        .collect()
}

fn random_nonzero(g: &FinAbGroup, rng: &mut impl Rng) -> GroupElement {
    loop {
        let x = GroupElement(g.factors().iter().map(|&d| rng.gen_range(0..d)).collect());
        if x.0.iter().any(|&c| c != 0) {
            return x;
        }
    }
}

fn random_point(groups: &[FinAbGroup], rng: &mut impl Rng) -> StackyPoint {
    let group = groups.choose(rng).expect("some stabilizer group").clone();
    loop {
        let weights = [random_nonzero(&group, rng), random_nonzero(&group, rng)];
        if group.generated_by(&weights) {
            return StackyPoint { group, weights };
        }
    }
}

/// A random valid model: up to three isolated points and up to two curves
/// with up to two special points each.
pub fn random_model(torsion: u64, rng: &mut impl Rng) -> SurfaceModel {
    let groups = stabilizer_groups(torsion);
    let points = (0..rng.gen_range(0..=3)).map(|_| random_point(&groups, rng)).collect();
    let cyclic: Vec<FinAbGroup> = groups.iter().filter(|g| g.is_cyclic()).cloned().collect();
    let mut curves = Vec::new();
    for _ in 0..rng.gen_range(0..=2) {
        let group = cyclic.choose(rng).expect("some cyclic group").clone();
        let weight = loop {
            let w = random_nonzero(&group, rng);
            if group.generated_by(std::slice::from_ref(&w)) {
                break w;
            }
        };
        let target = symbol(&group, std::slice::from_ref(&weight), torsion);
        let mut special_points = Vec::new();
        let wanted = rng.gen_range(0..=2);
        for _ in 0..200 {
            if special_points.len() == wanted {
                break;
            }
            let p = random_point(&groups, rng);
            if StackyCurve::symbol_at(&p, torsion).map(|s| s == target).unwrap_or(false) {
                special_points.push(p);
            }
        }
        curves.push(StackyCurve { group, weight, special_points });
    }
    let m = SurfaceModel { torsion, points, curves };
    debug_assert!(m.validate().is_ok());
    m
}

/// Supported steps on a model.
pub fn supported_steps(m: &SurfaceModel) -> Vec<BlowupStep> {
    let mut steps: Vec<BlowupStep> = (0..m.points.len()).map(BlowupStep::Point).collect();
    for (i, c) in m.curves.iter().enumerate() {
        if c.group.neg(&c.weight) != c.weight {
            steps.push(BlowupStep::Curve(i));
        }
    }
    steps.push(BlowupStep::Free);
    steps
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CampaignReport {
    pub torsion: u64,
    pub models: usize,
    pub steps: usize,
    pub class_failures: usize,
    pub parity_failures: usize,
    /// Distinct symbols seen on isolated points, a coverage measure.
    pub point_symbols: usize,
    pub first_failure: Option<String>,
}

impl CampaignReport {
    pub fn passed(&self) -> bool {
        self.class_failures == 0 && self.parity_failures == 0
    }
}

impl fmt::Display for CampaignReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "e={}: {} models, {} steps, {} class failures, {} parity failures, {} point symbols",
            self.torsion, self.models, self.steps, self.class_failures, self.parity_failures, self.point_symbols
        )
    }
}

/// Random models with random supported blow-up sequences of length at most
/// `max_steps`, checking that the class never changes. For `e = 5` the
/// parity invariant is also checked against the `Z/2` coordinate.
pub fn invariance_campaign(
    torsion: u64,
    models: usize,
    max_steps: usize,
    seed: u64,
) -> Result<CampaignReport, OrbclassError> {
    let piece = compute_graded_piece(2, torsion, false, &PieceConfig::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ torsion.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut report = CampaignReport { torsion, models, ..Default::default() };
    let mut seen = BTreeSet::new();
    let check_parity = torsion == 5;
    for _ in 0..models {
        let mut m = random_model(torsion, &mut rng);
        let start = class_of(&m)?;
        let start_parity = if check_parity { Some(parity_invariant(&m)?) } else { None };
        for _ in 0..rng.gen_range(1..=max_steps) {
            for p in &m.points {
                seen.insert(p.symbol(torsion));
            }
            let steps = supported_steps(&m);
            let step = steps.choose(&mut rng).expect("free blow-up is always available");
            m = apply_step(&m, step)?;
            report.steps += 1;
            let now = class_of(&m)?;
            if !piece.same_class(&start, &now)? {
                report.class_failures += 1;
                report.first_failure.get_or_insert_with(|| format!("class changed after {step}: {start} vs {now}"));
            }
            if let Some(p0) = start_parity {
                let p = parity_invariant(&m)?;
                if p != p0 || z2_coordinate(&piece, &now)? != p {
                    report.parity_failures += 1;
                    report.first_failure.get_or_insert_with(|| format!("parity mismatch after {step}"));
                }
            }
        }
    }
    report.point_symbols = seen.len();
    Ok(report)
}

/// Number of isolated points, curves and special points, for summaries.
pub fn model_counts(m: &SurfaceModel) -> (usize, usize, usize) {
    (m.points.len(), m.curves.len(), m.curves.iter().map(|c| c.special_points.len()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn el(g: &FinAbGroup, c: &[i64]) -> GroupElement {
        g.element(c).unwrap()
    }

    fn point(factors: &[u64], a: &[i64], b: &[i64]) -> StackyPoint {
        let g = FinAbGroup::new(factors.to_vec()).unwrap();
        StackyPoint { weights: [el(&g, a), el(&g, b)], group: g }
    }

    fn curve(d: u64, w: i64) -> StackyCurve {
        let g = FinAbGroup::cyclic(d);
        StackyCurve { weight: el(&g, &[w]), group: g, special_points: Vec::new() }
    }

    fn cyc(d: u64, w: &[i64], e: u64) -> CanonicalSymbol {
        SymbolPair::cyclic(d, w).unwrap().canonicalize(e).unwrap()
    }

    fn base(e: u64) -> CanonicalSymbol {
        SymbolPair::split(vec![], 2).unwrap().canonicalize(e).unwrap()
    }

    fn piece(e: u64) -> GradedPieceResult {
        compute_graded_piece(2, e, false, &PieceConfig::default()).unwrap()
    }

    #[test]
    fn class_examples() {
        assert_eq!(class_of(&SurfaceModel::free(5)).unwrap(), FormalSum::from_symbol(&base(5)));
        let m = SurfaceModel::new(5, vec![point(&[5], &[1], &[2])], vec![]).unwrap();
        assert_eq!(class_of(&m).unwrap(), FormalSum::from_symbol(&cyc(5, &[1, 2], 5)));
        let m = SurfaceModel::new(5, vec![], vec![curve(5, 1)]).unwrap();
        assert_eq!(class_of(&m).unwrap(), FormalSum::from_symbol(&cyc(5, &[1], 5).t_shift()));
    }

    #[test]
    fn validation_rejects_bad_models() {
        assert!(SurfaceModel::new(5, vec![point(&[5], &[0], &[2])], vec![]).is_err());
        assert!(SurfaceModel::new(4, vec![point(&[4], &[2], &[2])], vec![]).is_err());
        assert!(SurfaceModel::new(5, vec![point(&[7], &[1], &[2])], vec![]).is_err());
        assert!(SurfaceModel::new(4, vec![], vec![curve(4, 2)]).is_err());
        let mut c = curve(5, 1);
        c.special_points.push(point(&[5], &[1], &[1]));
        assert!(SurfaceModel::new(5, vec![], vec![c]).is_err());
        let mut c = curve(5, 1);
        c.special_points.push(point(&[5, 5], &[1, 0], &[0, 1]));
        assert!(SurfaceModel::new(5, vec![], vec![c]).is_ok());
    }

    #[test]
    fn isolated_point_blowups() {
        let m = SurfaceModel::new(5, vec![point(&[5], &[1], &[2])], vec![]).unwrap();
        let b = blowup_isolated_point(&m, 0).unwrap();
        assert!(b.curves.is_empty());
        let syms: Vec<_> = b.points.iter().map(|p| p.symbol(5)).collect();
        assert_eq!(syms, vec![cyc(5, &[1, 1], 5), cyc(5, &[1, 2], 5)]);
        assert!(piece(5).same_class(&class_of(&m).unwrap(), &class_of(&b).unwrap()).unwrap());

        let m = SurfaceModel::new(5, vec![point(&[5], &[1], &[1])], vec![]).unwrap();
        let b = blowup_isolated_point(&m, 0).unwrap();
        assert!(b.points.is_empty());
        assert_eq!(b.curves, vec![curve(5, 1)]);
        let diff = class_of(&b).unwrap().minus(&class_of(&m).unwrap()).unwrap();
        let rel = crate::obar::blowup_relation(&cyc(5, &[1, 1], 5), 2).unwrap();
        assert!(diff == rel || diff.plus(&rel).unwrap().is_zero());

        let m = SurfaceModel::new(4, vec![point(&[4], &[1], &[3])], vec![]).unwrap();
        let b = blowup_isolated_point(&m, 0).unwrap();
        assert!(b.points.is_empty());
        assert_eq!(b.curves.len(), 1);
        let c = &b.curves[0];
        assert_eq!(c.group, FinAbGroup::cyclic(2));
        let normals: BTreeSet<_> = c.special_points.iter().map(|p| p.symbol(4)).collect();
        let expected: BTreeSet<_> = [cyc(4, &[1, 2], 4), cyc(4, &[2, 3], 4)].into_iter().collect();
        assert_eq!(normals, expected);
        assert!(piece(4).same_class(&class_of(&m).unwrap(), &class_of(&b).unwrap()).unwrap());
        assert!(matches!(blowup_isolated_point(&b, 0), Err(OrbclassError::IndexOutOfRange { .. })));
    }

    #[test]
    fn curve_point_blowups() {
        let m = SurfaceModel::new(5, vec![], vec![curve(5, 1)]).unwrap();
        let b = blowup_curve_point(&m, 0).unwrap();
        assert_eq!(b.points[0].symbol(5), cyc(5, &[1, 4], 5));
        assert!(piece(5).same_class(&class_of(&m).unwrap(), &class_of(&b).unwrap()).unwrap());
        let m = SurfaceModel::new(2, vec![], vec![curve(2, 1)]).unwrap();
        assert!(matches!(blowup_curve_point(&m, 0), Err(OrbclassError::Unsupported(_))));
        let m = SurfaceModel::new(3, vec![], vec![curve(3, 1)]).unwrap();
        assert_eq!(blowup_curve_point(&m, 0).unwrap().points[0].symbol(3), cyc(3, &[1, 2], 3));
        assert_eq!(blowup_free_point(&m), m);
    }

    #[test]
    fn special_points_are_rejected() {
        let m = blowup_isolated_point(&SurfaceModel::new(4, vec![point(&[4], &[1], &[3])], vec![]).unwrap(), 0).unwrap();
        assert!(matches!(
            apply_step(&m, &BlowupStep::Special { curve: 0, point: 1 }),
            Err(OrbclassError::Unsupported(_))
        ));
    }

    #[test]
    fn parity_examples() {
        let p12 = point(&[5], &[1], &[2]);
        let p11 = point(&[5], &[1], &[1]);
        let p = piece(5);
        for (points, expected) in [(vec![p12.clone()], true), (vec![p11], false), (vec![p12.clone(), p12], false)] {
            let m = SurfaceModel::new(5, points, vec![]).unwrap();
            assert_eq!(parity_invariant(&m).unwrap(), expected);
            assert_eq!(z2_coordinate(&p, &class_of(&m).unwrap()).unwrap(), expected);
        }
        assert!(matches!(parity_invariant(&SurfaceModel::free(7)), Err(OrbclassError::WrongTorsion { .. })));
    }

    #[test]
    fn open_complement_examples() {
        let poset = |divs: &[&str], meets: Vec<(Vec<usize>, &str, usize)>| IntersectionPoset {
            ambient: "X".into(),
            ambient_dim: 2,
            divisors: divs.iter().map(|s| s.to_string()).collect(),
            meets: meets.into_iter().map(|(k, l, d)| (k, (l.to_string(), d))).collect(),
        };
        let render = |t: Vec<ComplementTerm>| t.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        assert_eq!(render(open_complement_class(&poset(&[], vec![])).unwrap()), "+[X]");
        assert_eq!(render(open_complement_class(&poset(&["D1"], vec![])).unwrap()), "+[X] -[D1×P¹]");
        let two = poset(&["D1", "D2"], vec![(vec![0, 1], "D1∩D2", 0)]);
        assert_eq!(render(open_complement_class(&two).unwrap()), "+[X] -[D1×P¹] -[D2×P¹] +[D1∩D2×P^2]");
        let bad = poset(&["D1", "D2"], vec![(vec![0, 1], "D1∩D2", 1)]);
        assert!(matches!(open_complement_class(&bad), Err(OrbclassError::Poset(_))));
        let bad = poset(&["D1"], vec![(vec![0, 1], "D1∩D2", 0)]);
        assert!(open_complement_class(&bad).is_err());
    }

    #[test]
    fn script_and_file_round_trip() {
        let steps = parse_script("point 0\n# comment\ncurve 1 # trailing\nfree\nspecial 0 1\n").unwrap();
        assert_eq!(
            steps,
            vec![BlowupStep::Point(0), BlowupStep::Curve(1), BlowupStep::Free, BlowupStep::Special { curve: 0, point: 1 }]
        );
        assert!(parse_script("explode 3").is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for e in [4, 5, 12] {
            for _ in 0..20 {
                let m = random_model(e, &mut rng);
                let file = ModelFile::from(&m);
                let json = serde_json::to_string(&file).unwrap();
                let back: ModelFile = serde_json::from_str(&json).unwrap();
                assert_eq!(SurfaceModel::try_from(&back).unwrap(), m);
            }
        }
    }

    #[test]
    fn class_is_additive_over_disjoint_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let a = random_model(6, &mut rng);
            let b = random_model(6, &mut rng);
            let joined = SurfaceModel {
                torsion: 6,
                points: a.points.iter().chain(&b.points).cloned().collect(),
                curves: a.curves.iter().chain(&b.curves).cloned().collect(),
            };
            let free = class_of(&SurfaceModel::free(6)).unwrap();
            let lhs = class_of(&joined).unwrap();
            let rhs = class_of(&a).unwrap().plus(&class_of(&b).unwrap()).unwrap().minus(&free).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn small_campaign() {
        for e in [4, 5, 6] {
            let r = invariance_campaign(e, 20, 5, 1).unwrap();
            assert!(r.passed(), "{r} {:?}", r.first_failure);
            assert!(r.steps >= 20);
        }
    }
}
