//! Structure balance, efficiency matrices and chained decompositions.
//!
//! Efficiency factors are first computed from traces, `λ = tr(PQ)/tr(Q)`, and
//! then confirmed exactly. Because every matrix involved is a symmetric
//! idempotent, `tr(PQ) = ‖PQ‖²`, so `λ = 0` already proves `PQ = 0` and
//! `λ = 1` proves `PQ = Q`. Only the fractional pairs need matrix products.
//!
//! For a fixed `P`, the two conditions of balance for all `Q` together are
//! equivalent to `I_𝒬·P·Q = λ_PQ·Q` for each `Q`, where `I_𝒬` is the sum of
//! the `Q`s. That is what [`check_balance`] tests; the individual conditions
//! are only evaluated to classify a failure.

use std::collections::HashMap;
use std::fmt;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::algebra::{format_rational, integer, AlgebraError, LabeledMatrix, Labels, Rational};
use crate::model::VDASH;
use crate::structure::{embed, DesignFunction, Structure, StructureError};

pub const TRIANGLE: &str = " ▷ ";
pub const RESIDUAL: &str = "Residual";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BalanceError {
    #[error("{structure} is not structure balanced in relation to {decomposition}: {}", .report.summary())]
    Unbalanced {
        step: usize,
        decomposition: String,
        structure: String,
        report: Box<BalanceReport>,
        /// Every step attempted, the failing one last.
        steps: Vec<ChainStep>,
    },
    #[error("refinement refused: verdict is {0}")]
    Refused(Verdict),
    #[error("efficiency requested against the zero projector `{0}`")]
    ZeroProjector(String),
    #[error("row `{0}` carries no projector")]
    MissingProjector(String),
    #[error("efficiency matrices are not conformable: {0}")]
    KeyMismatch(String),
    #[error("a chain needs at least one tier")]
    EmptyChain,
    #[error("tier `{0}` after the first needs a design function")]
    MissingLink(String),
    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Orthogonal,
    StructureBalanced,
    FirstOrderOnly,
    Unbalanced,
}

impl Verdict {
    pub fn is_balanced(self) -> bool {
        matches!(self, Verdict::Orthogonal | Verdict::StructureBalanced)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Orthogonal => "orthogonal",
            Verdict::StructureBalanced => "structure_balanced",
            Verdict::FirstOrderOnly => "first_order_only",
            Verdict::Unbalanced => "unbalanced",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    FirstOrder,
    AdjustedOrthogonality,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::FirstOrder => "first_order",
            ViolationKind::AdjustedOrthogonality => "adjusted_orthogonality",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub p: String,
    pub q: Vec<String>,
    /// Largest absolute entry of `QPQ − λQ` or `Q₁PQ₂`.
    pub max_abs: Rational,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} against {} (max |entry| {})",
            self.kind.as_str(),
            self.p,
            self.q.join(" & "),
            format_rational(&self.max_abs)
        )
    }
}

/// Efficiency factors between the rows of a decomposition and the sources of
/// a structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EfficiencyMatrix {
    pub row_keys: Vec<String>,
    pub col_keys: Vec<String>,
    entries: Vec<Rational>,
}

impl EfficiencyMatrix {
    pub fn new(
        row_keys: Vec<String>,
        col_keys: Vec<String>,
        entries: Vec<Rational>,
    ) -> Result<Self, BalanceError> {
        if entries.len() != row_keys.len() * col_keys.len() {
            return Err(BalanceError::KeyMismatch(format!(
                "{} entries for {}x{}",
                entries.len(),
                row_keys.len(),
                col_keys.len()
            )));
        }
        Ok(EfficiencyMatrix {
            row_keys,
            col_keys,
            entries,
        })
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.entries[i * self.col_keys.len() + j]
    }

    pub fn lookup(&self, row: &str, col: &str) -> Option<&Rational> {
        let i = self.row_keys.iter().position(|k| k == row)?;
        let j = self.col_keys.iter().position(|k| k == col)?;
        Some(self.get(i, j))
    }

    pub fn column_sum(&self, j: usize) -> Rational {
        (0..self.row_keys.len()).map(|i| self.get(i, j).clone()).sum()
    }

    /// Exact matrix product `self · other`.
    pub fn product(&self, other: &EfficiencyMatrix) -> Result<EfficiencyMatrix, BalanceError> {
        if self.col_keys != other.row_keys {
            return Err(BalanceError::KeyMismatch(format!(
                "columns {:?} vs rows {:?}",
                self.col_keys, other.row_keys
            )));
        }
        let (n, k, m) = (self.row_keys.len(), self.col_keys.len(), other.col_keys.len());
        let mut entries = vec![Rational::zero(); n * m];
        for i in 0..n {
            for kk in 0..k {
                let a = self.get(i, kk);
                if a.is_zero() {
                    continue;
                }
                for j in 0..m {
                    entries[i * m + j] += a * other.get(kk, j);
                }
            }
        }
        EfficiencyMatrix::new(self.row_keys.clone(), other.col_keys.clone(), entries)
    }

    /// Nonzero entries as `(row, column, λ)`, row-major.
    pub fn nonzero(&self) -> Vec<(&str, &str, &Rational)> {
        let m = self.col_keys.len();
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(x, v)| (self.row_keys[x / m].as_str(), self.col_keys[x % m].as_str(), v))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalanceReport {
    pub verdict: Verdict,
    pub efficiency: Option<EfficiencyMatrix>,
    pub violations: Vec<Violation>,
}

impl BalanceReport {
    pub fn summary(&self) -> String {
        let mut s = self.verdict.to_string();
        for v in &self.violations {
            s.push_str("; ");
            s.push_str(&v.to_string());
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Pertain,
    Residual,
    Untouched,
}

impl CellKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Pertain => "pertain",
            CellKind::Residual => "residual",
            CellKind::Untouched => "untouched",
        }
    }
}

/// One tier's entry in a decomposition row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub tier: String,
    /// Source name; `Residual` for residual cells, empty for untouched ones.
    pub source: String,
    pub df: u64,
    /// Efficiency accumulated along the row, absent on the first tier and on
    /// residual or untouched cells.
    pub eff: Option<Rational>,
    pub kind: CellKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecompRow {
    pub cells: Vec<Cell>,
    /// Absent only for decompositions computed from traces alone.
    pub projector: Option<LabeledMatrix>,
}

impl DecompRow {
    pub fn df(&self) -> u64 {
        self.cells.last().map_or(0, |c| c.df)
    }

    /// A row ending in a residual or untouched cell is not refined further.
    pub fn is_closed(&self) -> bool {
        self.cells.last().is_some_and(|c| c.kind != CellKind::Pertain)
    }

    /// Name of the subspace, e.g. `Plots[Blocks] ▷ Lines_R`.
    pub fn key(&self) -> String {
        let mut s = String::new();
        for (i, c) in self.cells.iter().enumerate() {
            match c.kind {
                CellKind::Pertain if i == 0 => s.push_str(&c.source),
                CellKind::Pertain => {
                    s.push_str(TRIANGLE);
                    s.push_str(&c.source);
                }
                _ => {
                    s.push_str(VDASH);
                    s.push_str(&c.tier);
                }
            }
        }
        s
    }

    fn projector(&self) -> Result<&LabeledMatrix, BalanceError> {
        self.projector
            .as_ref()
            .ok_or_else(|| BalanceError::MissingProjector(self.key()))
    }
}

/// Ordered orthogonal decomposition of the space of `objects`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub objects: Labels,
    /// Tier names, outermost first.
    pub tiers: Vec<String>,
    pub rows: Vec<DecompRow>,
    /// Residual rows of rank zero, kept for auditing.
    pub dropped: Vec<Vec<Cell>>,
}

impl Decomposition {
    /// One row per source of an unrandomized structure.
    pub fn from_structure(s: &Structure) -> Self {
        Decomposition {
            objects: s.objects().clone(),
            tiers: vec![s.tier.clone()],
            rows: s
                .sources
                .iter()
                .map(|src| DecompRow {
                    cells: vec![Cell {
                        tier: s.tier.clone(),
                        source: src.name.clone(),
                        df: src.df,
                        eff: None,
                        kind: CellKind::Pertain,
                    }],
                    projector: Some(src.projector.clone()),
                })
                .collect(),
            dropped: Vec::new(),
        }
    }

    pub fn total_df(&self) -> u64 {
        self.rows.iter().map(DecompRow::df).sum()
    }

    pub fn projectors(&self) -> Vec<&LabeledMatrix> {
        self.rows.iter().filter_map(|r| r.projector.as_ref()).collect()
    }

    /// Checks the decomposition axioms exactly: every row a symmetric
    /// idempotent of rank equal to its d.f., pairwise orthogonal, summing to
    /// the identity.
    pub fn verify(&self) -> Result<(), BalanceError> {
        if self.total_df() != self.objects.len() as u64 {
            return Err(BalanceError::Inconsistent(format!(
                "d.f. sum to {} over {} objects",
                self.total_df(),
                self.objects.len()
            )));
        }
        let mut ps = Vec::new();
        for r in &self.rows {
            let p = r.projector()?;
            crate::algebra::projector_diagnostic(p)
                .map_err(|e| BalanceError::Inconsistent(format!("{}: {e}", r.key())))?;
            if p.trace()? != integer(r.df() as i64) {
                return Err(BalanceError::Inconsistent(format!("{}: rank", r.key())));
            }
            ps.push(p);
        }
        for i in 0..ps.len() {
            for j in i + 1..ps.len() {
                if !ps[i].trace_of_product(ps[j])?.is_zero() {
                    return Err(BalanceError::Inconsistent(format!(
                        "{} and {} overlap",
                        self.rows[i].key(),
                        self.rows[j].key()
                    )));
                }
            }
        }
        let sum = LabeledMatrix::sum(&self.objects, ps)?;
        if !sum.is_identity() {
            return Err(BalanceError::Inconsistent("rows do not sum to I".into()));
        }
        Ok(())
    }

    /// Carries the decomposition through `f` into the space of its domain.
    fn embed(&self, f: &DesignFunction) -> Result<Decomposition, BalanceError> {
        let pos = f.codomain.labels.positions_in(&self.objects)?;
        let index: Vec<usize> = f.map().iter().map(|&m| pos[m]).collect();
        let labels = f.domain.labels.clone();
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let p = r.projector()?.align_to(&self.objects, &self.objects)?;
                Ok(DecompRow {
                    cells: r.cells.clone(),
                    projector: Some(p.pull_back(labels.clone(), &index, f.replication())?),
                })
            })
            .collect::<Result<_, BalanceError>>()?;
        Ok(Decomposition {
            objects: labels,
            tiers: self.tiers.clone(),
            rows,
            dropped: self.dropped.clone(),
        })
    }
}

/// `tr(PQ)/tr(Q)`; only meaningful once balance has been confirmed.
pub fn efficiency_factor(p: &LabeledMatrix, q: &LabeledMatrix) -> Result<Rational, BalanceError> {
    let tq = q.trace()?;
    if tq.is_zero() {
        return Err(BalanceError::ZeroProjector(String::new()));
    }
    Ok(p.trace_of_product(q)? / tq)
}

/// `λ⁻¹·P·Q·P`.
pub fn pertain(
    p: &LabeledMatrix,
    q: &LabeledMatrix,
    lambda: &Rational,
) -> Result<LabeledMatrix, BalanceError> {
    if lambda.is_zero() {
        return Err(BalanceError::ZeroProjector("λ = 0".into()));
    }
    if lambda.is_one() {
        return Ok(q.align_to(p.row_labels(), p.col_labels())?);
    }
    Ok(p.mul(q)?.gram().scale(&lambda.recip()))
}

/// `P` minus the sum of its pertained parts.
pub fn residual(p: &LabeledMatrix, pertained: &[LabeledMatrix]) -> Result<LabeledMatrix, BalanceError> {
    let mut r = p.clone();
    for x in pertained {
        r = r.sub(x)?;
    }
    Ok(r)
}

struct QRef<'a> {
    name: String,
    projector: &'a LabeledMatrix,
    df: u64,
}

struct Analysis {
    report: BalanceReport,
    /// `P·Q` for fractional pairs, keyed by (row, column).
    products: HashMap<(usize, usize), LabeledMatrix>,
}

fn structure_columns(q: &Structure) -> Vec<QRef<'_>> {
    q.sources
        .iter()
        .map(|s| QRef {
            name: s.name.clone(),
            projector: &s.projector,
            df: s.df,
        })
        .collect()
}

fn decomposition_columns(d: &Decomposition) -> Result<Vec<QRef<'_>>, BalanceError> {
    d.rows
        .iter()
        .map(|r| {
            Ok(QRef {
                name: r.key(),
                projector: r.projector()?,
                df: r.df(),
            })
        })
        .collect()
}

fn analyze(d: &Decomposition, cols: &[QRef], support: &LabeledMatrix) -> Result<Analysis, BalanceError> {
    let support_is_identity = support.is_identity();
    let (n, m) = (d.rows.len(), cols.len());
    let mut lambda = vec![Rational::zero(); n * m];
    let mut violations = Vec::new();
    let mut products = HashMap::new();
    for (i, row) in d.rows.iter().enumerate() {
        let p = row.projector()?;
        for (j, q) in cols.iter().enumerate() {
            if q.df == 0 {
                return Err(BalanceError::ZeroProjector(q.name.clone()));
            }
            lambda[i * m + j] = p.trace_of_product(q.projector)? / integer(q.df as i64);
        }
        let fractional: Vec<usize> = (0..m)
            .filter(|&j| {
                let l = &lambda[i * m + j];
                !l.is_zero() && !l.is_one()
            })
            .collect();
        for &j in &fractional {
            let q = cols[j].projector;
            let k = p.mul(q)?;
            let lhs = if support_is_identity {
                k.clone()
            } else {
                support.mul(&k)?
            };
            let want = q.scale(&lambda[i * m + j]);
            if lhs != want {
                classify(row, i, j, m, &k, cols, &fractional, &lambda, &mut violations)?;
            }
            products.insert((i, j), k);
        }
    }
    let verdict = if violations.iter().any(|v| v.kind == ViolationKind::FirstOrder) {
        Verdict::Unbalanced
    } else if !violations.is_empty() {
        Verdict::FirstOrderOnly
    } else if lambda.iter().all(|l| l.is_zero() || l.is_one()) {
        Verdict::Orthogonal
    } else {
        Verdict::StructureBalanced
    };
    let efficiency = (verdict != Verdict::Unbalanced).then(|| EfficiencyMatrix {
        row_keys: d.rows.iter().map(DecompRow::key).collect(),
        col_keys: cols.iter().map(|q| q.name.clone()).collect(),
        entries: lambda,
    });
    Ok(Analysis {
        report: BalanceReport {
            verdict,
            efficiency,
            violations,
        },
        products,
    })
}

#[allow(clippy::too_many_arguments)]
fn classify(
    row: &DecompRow,
    i: usize,
    j: usize,
    m: usize,
    k: &LabeledMatrix,
    cols: &[QRef],
    fractional: &[usize],
    lambda: &[Rational],
    out: &mut Vec<Violation>,
) -> Result<(), BalanceError> {
    // Only fractional columns can fail: λ = 0 or 1 settles both conditions.
    for &jj in fractional {
        let qk = cols[jj].projector.mul(k)?;
        if jj == j {
            let diff = qk.sub(&cols[j].projector.scale(&lambda[i * m + j]))?;
            if !diff.is_zero() {
                out.push(Violation {
                    kind: ViolationKind::FirstOrder,
                    p: row.key(),
                    q: vec![cols[j].name.clone()],
                    max_abs: diff.max_abs(),
                });
            }
        } else if !qk.is_zero() {
            out.push(Violation {
                kind: ViolationKind::AdjustedOrthogonality,
                p: row.key(),
                q: vec![cols[jj].name.clone(), cols[j].name.clone()],
                max_abs: qk.max_abs(),
            });
        }
    }
    Ok(())
}

/// Tests Definition-1 balance of `q_struct` against the rows of `d`.
pub fn check_balance(d: &Decomposition, q_struct: &Structure) -> Result<BalanceReport, BalanceError> {
    Ok(analyze(d, &structure_columns(q_struct), &q_struct.support)?.report)
}

/// Trace-only efficiency matrix between two structures over the same objects.
pub fn efficiency_matrix(p: &Structure, q: &Structure) -> Result<EfficiencyMatrix, BalanceError> {
    let mut entries = Vec::with_capacity(p.sources.len() * q.sources.len());
    for a in &p.sources {
        for b in &q.sources {
            entries.push(efficiency_factor(&a.projector, &b.projector)?);
        }
    }
    EfficiencyMatrix::new(
        p.sources.iter().map(|s| s.name.clone()).collect(),
        q.sources.iter().map(|s| s.name.clone()).collect(),
        entries,
    )
}

/// Splits each open row of `d` into its parts pertaining to `q_struct` and
/// its residual. The efficiency recorded on a new cell is taken against the
/// row's own projector, so it is already cumulative along the row.
pub fn refine(
    d: &Decomposition,
    q_struct: &Structure,
    report: &BalanceReport,
) -> Result<Decomposition, BalanceError> {
    let cols = structure_columns(q_struct);
    refine_with(d, &cols, &q_struct.tier, report, HashMap::new(), |row, col, lam| {
        let mut cells = row.cells.clone();
        cells.push(Cell {
            tier: q_struct.tier.clone(),
            source: col.name.clone(),
            df: col.df,
            eff: Some(lam.clone()),
            kind: CellKind::Pertain,
        });
        cells
    })
}

fn refine_with(
    d: &Decomposition,
    cols: &[QRef],
    tier: &str,
    report: &BalanceReport,
    mut products: HashMap<(usize, usize), LabeledMatrix>,
    cells_for: impl Fn(&DecompRow, &QRef, &Rational) -> Vec<Cell>,
) -> Result<Decomposition, BalanceError> {
    if !report.verdict.is_balanced() {
        return Err(BalanceError::Refused(report.verdict));
    }
    let eff = report
        .efficiency
        .as_ref()
        .ok_or(BalanceError::Refused(report.verdict))?;
    let mut rows = Vec::new();
    let mut dropped = d.dropped.clone();
    for (i, row) in d.rows.iter().enumerate() {
        if row.is_closed() {
            rows.push(row.clone());
            continue;
        }
        let p = row.projector.as_ref();
        let mut parts = Vec::new();
        let mut used = 0u64;
        for (j, col) in cols.iter().enumerate() {
            let lam = eff.get(i, j);
            if lam.is_zero() {
                continue;
            }
            let projector = match p {
                None => None,
                Some(p) if lam.is_one() => Some(col.projector.align_to(p.row_labels(), p.col_labels())?),
                Some(p) => {
                    let k = match products.remove(&(i, j)) {
                        Some(k) => k,
                        None => p.mul(col.projector)?,
                    };
                    Some(k.gram().scale(&lam.recip()))
                }
            };
            if let Some(x) = &projector {
                if x.trace()? != integer(col.df as i64) {
                    return Err(BalanceError::Inconsistent(format!(
                        "{} ▷ {} has the wrong rank",
                        row.key(),
                        col.name
                    )));
                }
            }
            used += col.df;
            parts.push(DecompRow {
                cells: cells_for(row, col, lam),
                projector,
            });
        }
        let df = row.df().checked_sub(used).ok_or_else(|| {
            BalanceError::Inconsistent(format!("{} is smaller than its parts", row.key()))
        })?;
        if parts.is_empty() {
            let mut cells = row.cells.clone();
            cells.push(Cell {
                tier: tier.to_string(),
                source: String::new(),
                df,
                eff: None,
                kind: CellKind::Untouched,
            });
            rows.push(DecompRow {
                cells,
                projector: row.projector.clone(),
            });
            continue;
        }
        let rest = match p {
            Some(p) => {
                let owned: Vec<LabeledMatrix> = parts.iter().filter_map(|r| r.projector.clone()).collect();
                Some(residual(p, &owned)?)
            }
            None => None,
        };
        let mut cells = row.cells.clone();
        cells.push(Cell {
            tier: tier.to_string(),
            source: RESIDUAL.to_string(),
            df,
            eff: None,
            kind: CellKind::Residual,
        });
        rows.extend(parts);
        if df == 0 {
            if rest.as_ref().is_some_and(|r| !r.is_zero()) {
                return Err(BalanceError::Inconsistent(format!(
                    "residual of {} has zero d.f. but is nonzero",
                    row.key()
                )));
            }
            dropped.push(cells);
        } else {
            rows.push(DecompRow {
                cells,
                projector: rest,
            });
        }
    }
    let mut tiers = d.tiers.clone();
    tiers.push(tier.to_string());
    Ok(Decomposition {
        objects: d.objects.clone(),
        tiers,
        rows,
        dropped,
    })
}

/// One tier of a chain: its structure on its own objects and the design
/// function from the previous tier's objects onto them.
#[derive(Debug, Clone)]
pub struct Tier {
    pub structure: Structure,
    pub link: Option<DesignFunction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// `((𝒫₁ ▷ 𝒫₂) ▷ ⋯) ▷ 𝒫ₚ`
    Left,
    /// `𝒫₁ ▷ (𝒫₂ ▷ (⋯ ▷ 𝒫ₚ))`
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainStep {
    pub decomposition: String,
    pub structure: String,
    pub report: BalanceReport,
    /// False when balance was assumed rather than tested.
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainOutcome {
    pub decomposition: Decomposition,
    pub steps: Vec<ChainStep>,
}

fn links_to_first(tiers: &[Tier]) -> Result<Vec<DesignFunction>, BalanceError> {
    let first = &tiers[0].structure;
    let objects = crate::structure::ObjectSet {
        id: first.tier.clone(),
        labels: first.objects().clone(),
    };
    let mut maps = vec![DesignFunction::identity(objects)];
    for t in &tiers[1..] {
        let link = t
            .link
            .as_ref()
            .ok_or_else(|| BalanceError::MissingLink(t.structure.tier.clone()))?;
        let prev = maps.last().expect("nonempty");
        maps.push(prev.compose(link)?);
    }
    Ok(maps)
}

fn tier_names(tiers: &[Tier]) -> Vec<&str> {
    tiers.iter().map(|t| t.structure.tier.as_str()).collect()
}

/// Folds `refine` over the chain in the given order. Every step must be
/// structure balanced.
pub fn chain(tiers: &[Tier], mode: Mode) -> Result<ChainOutcome, BalanceError> {
    if tiers.is_empty() {
        return Err(BalanceError::EmptyChain);
    }
    match mode {
        Mode::Left => chain_left(tiers),
        Mode::Right => chain_right(tiers),
    }
}

fn chain_left(tiers: &[Tier]) -> Result<ChainOutcome, BalanceError> {
    let maps = links_to_first(tiers)?;
    let names = tier_names(tiers);
    let mut d = Decomposition::from_structure(&tiers[0].structure);
    let mut steps = Vec::new();
    for (k, t) in tiers.iter().enumerate().skip(1) {
        let q = embed(&t.structure, &maps[k])?;
        let cols = structure_columns(&q);
        let a = analyze(&d, &cols, &q.support)?;
        let label = names[..k].join(TRIANGLE);
        steps.push(ChainStep {
            decomposition: label.clone(),
            structure: t.structure.tier.clone(),
            report: a.report.clone(),
            verified: true,
        });
        if !a.report.verdict.is_balanced() {
            return Err(BalanceError::Unbalanced {
                step: k,
                decomposition: label,
                structure: t.structure.tier.clone(),
                report: Box::new(a.report),
                steps,
            });
        }
        d = refine_with(&d, &cols, &q.tier, &a.report, a.products, |row, col, lam| {
            let mut cells = row.cells.clone();
                cells.push(Cell {
                tier: q.tier.clone(),
                source: col.name.clone(),
                df: col.df,
                eff: Some(lam.clone()),
                kind: CellKind::Pertain,
            });
            cells
        })?;
    }
    Ok(ChainOutcome {
        decomposition: d,
        steps,
    })
}

/// Cells of `P ▷ row`: `P`'s cell followed by the row's cells with their
/// efficiencies multiplied by `λ`.
fn prepend(p_cell: &Cell, row: &DecompRow, lam: &Rational) -> Vec<Cell> {
    let mut cells = vec![p_cell.clone()];
    for c in &row.cells {
        let mut c = c.clone();
        if c.kind == CellKind::Pertain {
            c.eff = Some(c.eff.take().unwrap_or_else(Rational::one) * lam);
        }
        cells.push(c);
    }
    cells
}

fn chain_right(tiers: &[Tier]) -> Result<ChainOutcome, BalanceError> {
    let names = tier_names(tiers);
    let p = tiers.len();
    let mut d = Decomposition::from_structure(&tiers[p - 1].structure);
    let mut steps = Vec::new();
    for k in (0..p - 1).rev() {
        let link = tiers[k + 1]
            .link
            .as_ref()
            .ok_or_else(|| BalanceError::MissingLink(tiers[k + 1].structure.tier.clone()))?;
        let inner = d.embed(link)?;
        let support = {
            let s = &tiers[k + 1].structure;
            let pos = link.codomain.labels.positions_in(s.objects())?;
            let index: Vec<usize> = link.map().iter().map(|&m| pos[m]).collect();
            s.support
                .align_to(s.objects(), s.objects())?
                .pull_back(link.domain.labels.clone(), &index, link.replication())?
        };
        let outer = Decomposition::from_structure(&tiers[k].structure);
        let cols = decomposition_columns(&inner)?;
        let a = analyze(&outer, &cols, &support)?;
        let label = names[k + 1..].join(TRIANGLE);
        steps.push(ChainStep {
            decomposition: tiers[k].structure.tier.clone(),
            structure: label.clone(),
            report: a.report.clone(),
            verified: true,
        });
        if !a.report.verdict.is_balanced() {
            return Err(BalanceError::Unbalanced {
                step: k + 1,
                decomposition: tiers[k].structure.tier.clone(),
                structure: label,
                report: Box::new(a.report),
                steps,
            });
        }
        let next_tier = tiers[k + 1].structure.tier.clone();
        let mut next = refine_with(&outer, &cols, &next_tier, &a.report, a.products, |row, col, lam| {
            let inner_row = inner
                .rows
                .iter()
                .find(|r| r.key() == col.name)
                .expect("column comes from a row");
            prepend(&row.cells[0], inner_row, lam)
        })?;
        next.tiers = std::iter::once(tiers[k].structure.tier.clone())
            .chain(d.tiers.iter().cloned())
            .collect();
        next.dropped.extend(d.dropped.iter().cloned());
        d = next;
    }
    Ok(ChainOutcome {
        decomposition: d,
        steps,
    })
}

/// Efficiencies and d.f. from traces alone, assembling rows by the product
/// rule for chained efficiencies. Balance is assumed, not tested, and rows
/// carry no projectors.
pub fn chain_fast(tiers: &[Tier]) -> Result<ChainOutcome, BalanceError> {
    if tiers.is_empty() {
        return Err(BalanceError::EmptyChain);
    }
    let p = tiers.len();
    let mut lambdas = Vec::new();
    let mut steps = Vec::new();
    for k in 0..p - 1 {
        let link = tiers[k + 1]
            .link
            .as_ref()
            .ok_or_else(|| BalanceError::MissingLink(tiers[k + 1].structure.tier.clone()))?;
        let q = embed(&tiers[k + 1].structure, link)?;
        let m = efficiency_matrix(&tiers[k].structure, &q)?;
        let verdict = if m.entries.iter().all(|l| l.is_zero() || l.is_one()) {
            Verdict::Orthogonal
        } else {
            Verdict::StructureBalanced
        };
        steps.push(ChainStep {
            decomposition: tiers[k].structure.tier.clone(),
            structure: tiers[k + 1].structure.tier.clone(),
            report: BalanceReport {
                verdict,
                efficiency: Some(m.clone()),
                violations: Vec::new(),
            },
            verified: false,
        });
        lambdas.push(m);
    }
    let last = &tiers[p - 1].structure;
    let mut rows: Vec<Vec<Cell>> = last
        .sources
        .iter()
        .map(|s| {
            vec![Cell {
                tier: last.tier.clone(),
                source: s.name.clone(),
                df: s.df,
                eff: None,
                kind: CellKind::Pertain,
            }]
        })
        .collect();
    let mut dropped = Vec::new();
    for k in (0..p - 1).rev() {
        let s = &tiers[k].structure;
        let next_tier = &tiers[k + 1].structure.tier;
        let lam = &lambdas[k];
        let mut out = Vec::new();
        for (i, src) in s.sources.iter().enumerate() {
            let head = Cell {
                tier: s.tier.clone(),
                source: src.name.clone(),
                df: src.df,
                eff: None,
                kind: CellKind::Pertain,
            };
            let mut used = 0u64;
            let mut any = false;
            for (j, q) in tiers[k + 1].structure.sources.iter().enumerate() {
                let l = lam.get(i, j);
                if l.is_zero() {
                    continue;
                }
                any = true;
                used += q.df;
                for r in rows.iter().filter(|r| r[0].source == q.name) {
                    let row = DecompRow {
                        cells: r.clone(),
                        projector: None,
                    };
                    out.push(prepend(&head, &row, l));
                }
            }
            // Parts that overflow their source can only come from an unbalanced pair.
            let df = src
                .df
                .checked_sub(used)
                .ok_or(BalanceError::Refused(Verdict::Unbalanced))?;
            let (kind, source) = if any {
                (CellKind::Residual, RESIDUAL.to_string())
            } else {
                (CellKind::Untouched, String::new())
            };
            let cells = vec![
                head,
                Cell {
                    tier: next_tier.clone(),
                    source,
                    df,
                    eff: None,
                    kind,
                },
            ];
            if df == 0 && any {
                dropped.push(cells);
            } else {
                out.push(cells);
            }
        }
        rows = out;
    }
    Ok(ChainOutcome {
        decomposition: Decomposition {
            objects: tiers[0].structure.objects().clone(),
            tiers: tiers.iter().map(|t| t.structure.tier.clone()).collect(),
            rows: rows
                .into_iter()
                .map(|cells| DecompRow {
                    cells,
                    projector: None,
                })
                .collect(),
            dropped,
        },
        steps,
    })
}

/// Exact check of `Λ_𝒫ℛ = Λ_𝒫𝒬 · Λ_𝒬ℛ`.
pub fn efficiency_product_check(
    pq: &EfficiencyMatrix,
    qr: &EfficiencyMatrix,
    pr: &EfficiencyMatrix,
) -> Result<bool, BalanceError> {
    let prod = pq.product(qr)?;
    if prod.row_keys != pr.row_keys || prod.col_keys != pr.col_keys {
        return Err(BalanceError::KeyMismatch(format!(
            "product is {:?} x {:?}, expected {:?} x {:?}",
            prod.row_keys, prod.col_keys, pr.row_keys, pr.col_keys
        )));
    }
    Ok(prod.entries == pr.entries)
}

/// True iff both fold orders yield the same set of projectors.
pub fn associativity_check(
    p: &Structure,
    q: &Structure,
    r: &Structure,
    f: &DesignFunction,
    g: &DesignFunction,
) -> Result<bool, BalanceError> {
    let tiers = vec![
        Tier {
            structure: p.clone(),
            link: None,
        },
        Tier {
            structure: q.clone(),
            link: Some(f.clone()),
        },
        Tier {
            structure: r.clone(),
            link: Some(g.clone()),
        },
    ];
    let left = chain(&tiers, Mode::Left)?;
    let right = chain(&tiers, Mode::Right)?;
    same_projector_sets(&left.decomposition, &right.decomposition)
}

/// Compares two decompositions as sets of exact projectors.
pub fn same_projector_sets(a: &Decomposition, b: &Decomposition) -> Result<bool, BalanceError> {
    let pa = a.projectors();
    let pb = b.projectors();
    if pa.len() != a.rows.len() || pb.len() != b.rows.len() || pa.len() != pb.len() {
        return Ok(false);
    }
    let mut used = vec![false; pb.len()];
    'outer: for x in &pa {
        for (j, y) in pb.iter().enumerate() {
            if !used[j] && x == y {
                used[j] = true;
                continue 'outer;
            }
        }
        return Ok(false);
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{ratio, LabelSet};
    use crate::model::{build_hasse, parse_formula, Factor};
    use crate::structure::{build_structure, derive_design_function, AllocationTable, ObjectSet};

    fn table(tier: &str, labels: &Labels, cols: Vec<(&str, Vec<u64>)>) -> AllocationTable {
        AllocationTable::new(
            ObjectSet {
                id: tier.into(),
                labels: labels.clone(),
            },
            cols.into_iter().map(|(n, v)| (n.to_string(), v)).collect(),
        )
        .unwrap()
    }

    fn structure(tier: &str, formula: &str, decls: &[(&str, u64)], alloc: &AllocationTable) -> Structure {
        let f: Vec<Factor> = decls.iter().map(|&(n, l)| Factor::new(n, l)).collect();
        let d = build_hasse(&parse_formula(formula, &f).unwrap()).unwrap();
        build_structure(tier, &d, alloc).unwrap()
    }

    /// Blocks/Plots on the units, with a treatment structure carried onto
    /// them through the allocation in `cols`.
    fn randomized(
        blocks: u64,
        size: u64,
        cols: Vec<(&str, Vec<u64>)>,
        formula: &str,
        decls: &[(&str, u64)],
    ) -> (Decomposition, Structure) {
        let n = (blocks * size) as usize;
        let labels = LabelSet::numbered("w", n);
        let keys: Vec<(&str, &str)> = cols.iter().map(|(c, _)| (*c, *c)).collect();
        let mut all = vec![
            ("Blocks", (0..blocks * size).map(|i| i / size + 1).collect()),
            ("Plots", (0..blocks * size).map(|i| i % size + 1).collect()),
        ];
        all.extend(cols.clone());
        let alloc = table("plots", &labels, all);
        let p = structure("plots", "Blocks/Plots", &[("Blocks", blocks), ("Plots", size)], &alloc);
        let (_, t_alloc, f) = derive_design_function(&alloc, "treatments", &keys, &[]).unwrap();
        let q = structure("treatments", formula, decls, &t_alloc);
        (Decomposition::from_structure(&p), embed(&q, &f).unwrap())
    }

    /// Blocks of size 2 for 4 treatments in a given layout.
    fn blocks_vs_treatments(layout: &[[u64; 2]]) -> (Decomposition, Structure) {
        let t: Vec<u64> = layout.iter().flatten().copied().collect();
        randomized(layout.len() as u64, 2, vec![("T", t)], "T", &[("T", 4)])
    }

    #[test]
    fn bibd_is_structure_balanced() {
        // All 6 pairs of 4 treatments: λ = 1/3 in Blocks, 2/3 within.
        let (d, q) = blocks_vs_treatments(&[[1, 2], [3, 4], [1, 3], [2, 4], [1, 4], [2, 3]]);
        let r = check_balance(&d, &q).unwrap();
        assert_eq!(r.verdict, Verdict::StructureBalanced);
        let e = r.efficiency.as_ref().unwrap();
        assert_eq!(e.lookup("Blocks", "T"), Some(&ratio(1, 3)));
        assert_eq!(e.lookup("Plots[Blocks]", "T"), Some(&ratio(2, 3)));
        for j in 0..e.col_keys.len() {
            assert_eq!(e.column_sum(j), integer(1));
        }
        let refined = refine(&d, &q, &r).unwrap();
        refined.verify().unwrap();
        let keys: Vec<String> = refined.rows.iter().map(DecompRow::key).collect();
        assert_eq!(
            keys,
            [
                "Mean ▷ Mean",
                "Blocks ▷ T",
                "Blocks ⊢ treatments",
                "Plots[Blocks] ▷ T",
                "Plots[Blocks] ⊢ treatments"
            ]
        );
        let dfs: Vec<u64> = refined.rows.iter().map(DecompRow::df).collect();
        assert_eq!(dfs, [1, 3, 2, 3, 3]);
    }

    #[test]
    fn group_divisible_design_is_unbalanced() {
        let (d, q) = blocks_vs_treatments(&[[1, 2], [1, 2], [3, 4], [3, 4]]);
        let r = check_balance(&d, &q).unwrap();
        assert_eq!(r.verdict, Verdict::Unbalanced);
        assert!(r.efficiency.is_none());
        assert!(r
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::FirstOrder && v.q == ["T"]));
        assert!(matches!(refine(&d, &q, &r), Err(BalanceError::Refused(Verdict::Unbalanced))));
    }

    #[test]
    fn confounded_factorial_is_first_order_only() {
        // Blocks {00,00}, {11,11}, {01,10}, {10,01}.
        let a = vec![1, 1, 2, 2, 1, 2, 2, 1];
        let b = vec![1, 1, 2, 2, 2, 1, 1, 2];
        let (d, q) = randomized(4, 2, vec![("A", a), ("B", b)], "A*B", &[("A", 2), ("B", 2)]);
        let r = check_balance(&d, &q).unwrap();
        assert_eq!(r.verdict, Verdict::FirstOrderOnly);
        assert!(r.violations.iter().all(|v| v.kind == ViolationKind::AdjustedOrthogonality));
        assert!(r.violations.iter().any(|v| v.p == "Blocks" && v.q == ["A", "B"]));
        assert!(matches!(refine(&d, &q, &r), Err(BalanceError::Refused(_))));
    }

    #[test]
    fn pertain_and_residual_basics() {
        let (d, q) = blocks_vs_treatments(&[[1, 2], [3, 4], [1, 3], [2, 4], [1, 4], [2, 3]]);
        let mean_p = d.rows[0].projector.as_ref().unwrap();
        let mean_q = &q.sources[0].projector;
        assert_eq!(efficiency_factor(mean_p, mean_q).unwrap(), integer(1));
        assert_eq!(&pertain(mean_p, mean_q, &integer(1)).unwrap(), mean_q);
        let blocks = d.rows[1].projector.as_ref().unwrap();
        let t = &q.sources[1].projector;
        let lam = efficiency_factor(blocks, t).unwrap();
        let bt = pertain(blocks, t, &lam).unwrap();
        assert!(crate::algebra::is_symmetric_idempotent(&bt));
        assert_eq!(bt.trace().unwrap(), integer(3));
        let res = residual(blocks, &[bt]).unwrap();
        assert_eq!(res.trace().unwrap(), integer(2));
        assert!(matches!(
            pertain(blocks, t, &integer(0)),
            Err(BalanceError::ZeroProjector(_))
        ));
    }

    #[test]
    fn efficiency_matrix_product() {
        let keys = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let a = EfficiencyMatrix::new(keys(&["p1", "p2"]), keys(&["q"]), vec![ratio(1, 3), ratio(2, 3)]).unwrap();
        let b = EfficiencyMatrix::new(keys(&["q"]), keys(&["r"]), vec![ratio(1, 9)]).unwrap();
        let c = EfficiencyMatrix::new(keys(&["p1", "p2"]), keys(&["r"]), vec![ratio(1, 27), ratio(2, 27)]).unwrap();
        assert!(efficiency_product_check(&a, &b, &c).unwrap());
        let id = EfficiencyMatrix::new(keys(&["q"]), keys(&["q"]), vec![integer(1)]).unwrap();
        assert_eq!(a.product(&id).unwrap(), a);
        assert!(matches!(a.product(&a), Err(BalanceError::KeyMismatch(_))));
    }
}
