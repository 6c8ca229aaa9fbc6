use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use birsym::equivariant::{expansion_diff, expansion_dump, FixedGroupSymbol};
use birsym::finabel::SymbolPair;
use birsym::linalg::AbGroupInvariants;
use birsym::modsym::{cross_check_csv, primes_in, CrossCheckReport, ModsymError};
use birsym::obar::{compute_graded_piece, ObarError, PieceConfig};
use birsym::orbclass::{
    apply_step, class_of, invariance_campaign, parity_invariant, parse_script, z2_coordinate, ModelFile, OrbclassError,
    SurfaceModel,
};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::report::{InvariantsDoc, RunReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("resource limit: {0}")]
    Resource(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Resource(_) => 3,
        }
    }
}

impl From<ObarError> for CliError {
    fn from(e: ObarError) -> Self {
        match e {
            ObarError::DegreeCap { .. } | ObarError::SymbolCap { .. } => CliError::Resource(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<ModsymError> for CliError {
    fn from(e: ModsymError) -> Self {
        match e {
            ModsymError::Obar(o) => o.into(),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<OrbclassError> for CliError {
    fn from(e: OrbclassError) -> Self {
        match e {
            OrbclassError::Obar(o) => o.into(),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

/// A finished command: the report, its text and CSV renderings, and an
/// error raised after partial output.
pub struct Output {
    pub report: RunReport,
    pub lines: Vec<String>,
    pub csv: String,
    pub failure: Option<CliError>,
}

impl Output {
    pub fn exit_code(&self) -> u8 {
        match (&self.failure, self.report.matches) {
            (Some(e), _) => e.exit_code(),
            (None, Some(false)) => 1,
            _ => 0,
        }
    }
}

pub fn emit(body: &str, path: Option<&Path>) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, body),
        None => std::io::stdout().write_all(body.as_bytes()),
    }
}

/// Degree-two quotients modulo split symbols for the primes 5..43.
pub const TABLE1: [(u64, &str); 12] = [
    (5, "Z/2"),
    (7, "0"),
    (11, "Z"),
    (13, "Z/2"),
    (17, "Z/2 ⊕ Z"),
    (19, "Z"),
    (23, "Z^2"),
    (29, "Z/2 ⊕ Z^2"),
    (31, "Z^2"),
    (37, "Z/2 ⊕ Z^2"),
    (41, "Z/2 ⊕ Z^3"),
    (43, "Z^3"),
];

/// Known quotients modulo split symbols beyond the table: `(n, e, group)`.
pub const KNOWN_MOD_C: [(usize, u64, &str); 9] = [
    (1, 2, "0"),
    (2, 2, "0"),
    (3, 2, "0"),
    (1, 3, "0"),
    (2, 3, "0"),
    (3, 3, "0"),
    (2, 7, "0"),
    (3, 7, "0"),
    (4, 7, "Z/2"),
];

pub fn known_expectation(degree: usize, torsion: u64, mod_c: bool) -> Option<AbGroupInvariants> {
    if !mod_c {
        return None;
    }
    let text = KNOWN_MOD_C.iter().find(|(n, e, _)| *n == degree && *e == torsion).map(|t| t.2).or_else(|| {
        (degree == 2).then(|| TABLE1.iter().find(|(p, _)| *p == torsion).map(|t| t.1)).flatten()
    })?;
    Some(text.parse().expect("built-in table parses"))
}

fn params(pairs: &[(&str, Value)]) -> Map<String, Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

pub fn compute(
    degree: usize,
    torsion: u64,
    mod_c: bool,
    expect: Option<&str>,
    check: bool,
    cfg: &PieceConfig,
) -> Result<Output, CliError> {
    let expected = match expect {
        Some(text) => Some(text.parse::<AbGroupInvariants>().map_err(|e| CliError::Invalid(e.to_string()))?),
        None if check => known_expectation(degree, torsion, mod_c),
        None => None,
    };
    let piece = compute_graded_piece(degree, torsion, mod_c, cfg)?;
    let mut report = RunReport::new(
        "compute",
        params(&[("degree", json!(degree)), ("torsion", json!(torsion)), ("mod_c", json!(mod_c))]),
    );
    let basis: Vec<String> = piece.basis.iter().map(|s| s.to_string()).collect();
    report.invariants = Some(InvariantsDoc::from(&piece.invariants));
    if let Some(exp) = &expected {
        report.expected = Some(json!(InvariantsDoc::from(exp)));
        report.matches = Some(*exp == piece.invariants);
    }
    let mut lines = vec![format!("group: {}", piece.invariants), format!("basis ({}):", basis.len())];
    lines.extend(basis.iter().enumerate().map(|(i, s)| format!("  {i}: {s}")));
    lines.push(format!("relations: {}", piece.relations.rows()));
    if let Some(exp) = &expected {
        lines.push(format!("expected: {exp}"));
    }
    let mut csv = String::from("index,symbol\n");
    for (i, s) in basis.iter().enumerate() {
        let _ = writeln!(csv, "{i},\"{s}\"");
    }
    report.basis = Some(basis);
    Ok(Output { report, lines, csv, failure: None })
}

pub fn table1() -> Result<Output, CliError> {
    let mut report = RunReport::new("table1", Map::new());
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    let mut csv = String::from("p,computed,expected,match\n");
    let mut all = true;
    for (p, text) in TABLE1 {
        let expected: AbGroupInvariants = text.parse().expect("built-in table parses");
        let got = compute_graded_piece(2, p, true, &PieceConfig::default())?.invariants;
        let ok = got == expected;
        all &= ok;
        lines.push(format!("p={p:<3} computed {got:<12} expected {expected:<12} {}", if ok { "ok" } else { "MISMATCH" }));
        let _ = writeln!(csv, "{p},{got},{expected},{ok}");
        rows.push(json!({
            "p": p,
            "computed": InvariantsDoc::from(&got),
            "expected": InvariantsDoc::from(&expected),
            "match": ok,
        }));
    }
    let matched = rows.iter().filter(|r| r["match"] == json!(true)).count();
    lines.push(format!("{matched}/{} rows match", TABLE1.len()));
    report.expected = Some(json!(TABLE1.iter().map(|(p, t)| json!({"p": p, "group": t})).collect::<Vec<_>>()));
    report.matches = Some(all);
    report.results = Some(Value::Array(rows));
    Ok(Output { report, lines, csv, failure: None })
}

fn parse_range(text: &str) -> Result<(u64, u64), CliError> {
    let bad = || CliError::Invalid(format!("expected a range A..B, got {text:?}"));
    let (a, b) = text.split_once("..").ok_or_else(bad)?;
    let a = a.trim().parse().map_err(|_| bad())?;
    let b = b.trim().parse().map_err(|_| bad())?;
    Ok((a, b))
}

fn report_row(r: &CrossCheckReport) -> Value {
    json!({
        "p": r.p,
        "genus": r.genus,
        "h1_orb": InvariantsDoc::from(&r.h1_orb),
        "h1_orb_matches": r.h1_orb_matches,
        "conjugation": InvariantsDoc::from(&r.conjugation),
        "rel14": InvariantsDoc::from(&r.rel14),
        "obar": r.obar.as_ref().map(InvariantsDoc::from),
        "closed_form": InvariantsDoc::from(&r.closed_form),
        "match": r.agree,
    })
}

pub fn cross_check(range: &str, obar_limit: u64) -> Result<Output, CliError> {
    let (lo, hi) = parse_range(range)?;
    let mut report = RunReport::new(
        "cross-check",
        params(&[("primes", json!(format!("{lo}..{hi}"))), ("obar_limit", json!(obar_limit))]),
    );
    let reports: Vec<CrossCheckReport> = primes_in(lo, hi.saturating_add(1))
        .into_iter()
        .map(|p| birsym::modsym::cross_check(p, obar_limit))
        .collect::<Result<_, _>>()?;
    let all = reports.iter().all(|r| r.agree && r.h1_orb_matches);
    let mut lines: Vec<String> = vec![CrossCheckReport::CSV_HEADER.to_string()];
    lines.extend(reports.iter().map(CrossCheckReport::csv_row));
    lines.push(format!("{} primes checked", reports.len()));
    report.matches = Some(all);
    report.results = Some(Value::Array(reports.iter().map(report_row).collect()));
    Ok(Output { report, lines, csv: cross_check_csv(&reports), failure: None })
}

pub fn blowup(model_path: &Path, script_path: Option<&Path>) -> Result<Output, CliError> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())));
    let file: ModelFile = serde_json::from_str(&read(model_path)?)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", model_path.display())))?;
    let mut model = SurfaceModel::try_from(&file)?;
    let steps = match script_path {
        Some(p) => parse_script(&read(p)?)?,
        None => Vec::new(),
    };
    let e = model.torsion;
    let piece = compute_graded_piece(2, e, false, &PieceConfig::default())?;
    let mut report = RunReport::new(
        "blowup",
        params(&[
            ("model", json!(model_path.display().to_string())),
            ("script", json!(script_path.map(|p| p.display().to_string()))),
            ("torsion", json!(e)),
        ]),
    );
    let strata: Vec<String> = model.strata().iter().map(|s| s.to_string()).collect();
    let start = class_of(&model)?;
    let mut lines = vec![format!("ambient group: {}", piece.invariants), "strata:".to_string()];
    lines.extend(strata.iter().map(|s| format!("  {s}")));
    let mut csv = String::from("step,class,torsion,free,invariant,parity\n");
    let mut rows = Vec::new();
    let mut failure = None;
    let mut all_same = true;
    let mut record = |label: &str, m: &SurfaceModel, lines: &mut Vec<String>| -> Result<(), CliError> {
        let class = class_of(m)?;
        let coords = piece.reduce_class(&class)?;
        let same = piece.same_class(&start, &class)?;
        all_same &= same;
        let parity = if e == 5 { Some(parity_invariant(m)?) } else { None };
        let z2 = if e == 5 { Some(z2_coordinate(&piece, &class)?) } else { None };
        let tors: Vec<String> = coords.torsion.iter().map(|x| x.to_string()).collect();
        let free: Vec<String> = coords.free.iter().map(|x| x.to_string()).collect();
        lines.push(format!(
            "{label}: {class}  coords ({}; {}){}{}",
            tors.join(","),
            free.join(","),
            if same { "" } else { "  CHANGED" },
            parity.map_or(String::new(), |p| format!("  parity {}", u8::from(p))),
        ));
        let _ = writeln!(
            csv,
            "{label},\"{class}\",{},{},{same},{}",
            tors.join(";"),
            free.join(";"),
            parity.map_or(String::new(), |p| u8::from(p).to_string())
        );
        rows.push(json!({
            "step": label,
            "class": class.to_string(),
            "torsion": tors,
            "free": free,
            "invariant": same,
            "parity": parity.map(u8::from),
            "z2_coordinate": z2,
            "points": m.points.len(),
            "curves": m.curves.len(),
        }));
        Ok(())
    };
    record("start", &model, &mut lines)?;
    for step in &steps {
        match apply_step(&model, step) {
            Ok(next) => {
                model = next;
                record(&step.to_string(), &model, &mut lines)?;
            }
            Err(err) => {
                lines.push(format!("{step}: rejected ({err})"));
                failure = Some(CliError::from(err));
                break;
            }
        }
    }
    report.matches = Some(all_same);
    report.results = Some(json!({ "strata": strata, "steps": rows }));
    Ok(Output { report, lines, csv, failure })
}

pub fn campaign(seed: u64, torsions: &[u64], models: usize, steps: usize) -> Result<Output, CliError> {
    let mut report = RunReport::new(
        "campaign",
        params(&[("seed", json!(seed)), ("torsion", json!(torsions)), ("models", json!(models)), ("steps", json!(steps))]),
    );
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    let mut csv = String::from("torsion,models,steps,class_failures,parity_failures,passed\n");
    let mut all = true;
    for &e in torsions {
        let r = invariance_campaign(e, models, steps, seed)?;
        all &= r.passed();
        lines.push(r.to_string());
        if let Some(f) = &r.first_failure {
            lines.push(format!("  first failure: {f}"));
        }
        let _ = writeln!(csv, "{e},{},{},{},{},{}", r.models, r.steps, r.class_failures, r.parity_failures, r.passed());
        rows.push(json!({
            "torsion": e,
            "models": r.models,
            "steps": r.steps,
            "class_failures": r.class_failures,
            "parity_failures": r.parity_failures,
            "first_failure": r.first_failure,
        }));
    }
    report.matches = Some(all);
    report.results = Some(Value::Array(rows));
    Ok(Output { report, lines, csv, failure: None })
}

pub fn expand(symbol: &str, j: Option<usize>) -> Result<Output, CliError> {
    let pair: SymbolPair = symbol.parse().map_err(|e: birsym::finabel::FinabelError| CliError::Invalid(e.to_string()))?;
    let j = j.unwrap_or(pair.degree());
    let s = FixedGroupSymbol::new(pair.group.clone(), pair.seq.clone()).map_err(|e| CliError::Invalid(e.to_string()))?;
    let records = expansion_dump(&s, j).map_err(|e| CliError::Invalid(e.to_string()))?;
    let diff = expansion_diff(&s, j).map_err(|e| CliError::Invalid(e.to_string()))?;
    let mut report = RunReport::new("expand", params(&[("symbol", json!(pair.to_string())), ("j", json!(j))]));
    let mut lines = Vec::new();
    let mut csv = String::from("subset,coset_rep,coset_group,quotient,seq,bump,omitted\n");
    let join = |v: &[u64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    for r in &records {
        let seq: Vec<String> = r.seq.iter().map(|x| format!("({})", join(x))).collect();
        let subset: Vec<u64> = r.subset.iter().map(|&i| i as u64).collect();
        lines.push(format!(
            "I={{{}}} coset {} + <{}> quotient [{}] seq {} bump {}{}",
            join(&subset),
            join(&r.coset_rep),
            join(&r.coset_group),
            join(&r.quotient),
            seq.join(""),
            r.bump,
            if r.omitted { " (omitted)" } else { "" }
        ));
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            join(&subset),
            join(&r.coset_rep),
            join(&r.coset_group),
            join(&r.quotient),
            seq.join(""),
            r.bump,
            r.omitted
        );
    }
    lines.push(format!("difference from the blow-up relation: {diff}"));
    report.results = Some(json!({ "terms": records, "difference": diff.to_string() }));
    Ok(Output { report, lines, csv, failure: None })
}
