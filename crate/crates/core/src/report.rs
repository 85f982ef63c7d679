//! Decomposition tables as text and as a line-oriented machine format.

use std::fmt::Write as _;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::algebra::{format_rational, parse_rational, Rational};
use crate::balance::{Cell, CellKind, ChainStep, Decomposition};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TextOptions {
    pub ascii: bool,
}

/// Replaces the non-ASCII operators in names.
pub fn to_ascii(s: &str) -> String {
    s.replace("_⊥", "._perp")
        .replace('∧', "^")
        .replace('⊢', "|-")
        .replace('▷', "|>")
        .replace('λ', "lambda")
        .replace('Λ', "Lambda")
}

/// Whether the step into tier `k` (k ≥ 1) has an efficiency other than 0 or 1.
fn step_is_orthogonal(d: &Decomposition, k: usize) -> bool {
    d.rows.iter().all(|r| match (r.cells.get(k), k.checked_sub(1).and_then(|p| r.cells.get(p))) {
        (Some(c), Some(prev)) if c.kind == CellKind::Pertain => {
            let before = prev.eff.clone().unwrap_or_else(Rational::one);
            match &c.eff {
                Some(e) if !before.is_zero() => {
                    let step = e / before;
                    step.is_zero() || step.is_one()
                }
                _ => true,
            }
        }
        _ => true,
    })
}

fn same_cell(a: &Cell, b: &Cell) -> bool {
    a.kind == b.kind && a.source == b.source && a.df == b.df && a.eff == b.eff
}

/// Fixed-column table, one `source  d.f.` pair per tier and an `eff.` column
/// before each non-orthogonal step. Cells shared with the previous row are
/// left blank.
pub fn render_text(d: &Decomposition, opts: TextOptions) -> String {
    let t = d.tiers.len();
    let show_eff: Vec<bool> = (0..t).map(|k| k > 0 && !step_is_orthogonal(d, k)).collect();
    // Column layout: per tier, optional eff, source, df.
    let mut header_cols: Vec<String> = Vec::new();
    let mut tier_of_col: Vec<usize> = Vec::new();
    for k in 0..t {
        if show_eff[k] {
            header_cols.push("eff.".into());
            tier_of_col.push(k);
        }
        header_cols.push("source".into());
        tier_of_col.push(k);
        header_cols.push("d.f.".into());
        tier_of_col.push(k);
    }
    let mut lines: Vec<Vec<String>> = Vec::new();
    let mut prev: Option<&[Cell]> = None;
    for row in &d.rows {
        let mut line = Vec::with_capacity(header_cols.len());
        for k in 0..t {
            let shared = prev.is_some_and(|p| {
                (0..=k).all(|x| match (p.get(x), row.cells.get(x)) {
                    (Some(a), Some(b)) => same_cell(a, b),
                    _ => false,
                })
            });
            let cell = row.cells.get(k).filter(|c| c.kind != CellKind::Untouched && !shared);
            if show_eff[k] {
                line.push(match cell {
                    Some(Cell {
                        kind: CellKind::Pertain,
                        eff: Some(e),
                        ..
                    }) => format_rational(e),
                    _ => String::new(),
                });
            }
            match cell {
                Some(c) => {
                    line.push(c.source.clone());
                    line.push(c.df.to_string());
                }
                None => {
                    line.push(String::new());
                    line.push(String::new());
                }
            }
        }
        lines.push(line);
        prev = Some(&row.cells);
    }
    let mut widths: Vec<usize> = header_cols.iter().map(|h| h.chars().count()).collect();
    for line in &lines {
        for (w, c) in widths.iter_mut().zip(line) {
            *w = (*w).max(c.chars().count());
        }
    }
    // Tier titles span their columns.
    let mut out = String::new();
    let mut title = String::new();
    for k in 0..t {
        let span: usize = tier_of_col
            .iter()
            .zip(&widths)
            .filter(|(&tk, _)| tk == k)
            .map(|(_, w)| w + 2)
            .sum();
        let name = format!("{} tier", d.tiers[k]);
        let _ = write!(title, "{:<span$}", name, span = span.max(name.chars().count() + 2));
    }
    out.push_str(title.trim_end());
    out.push('\n');
    push_line(&mut out, &header_cols, &widths);
    for line in &lines {
        push_line(&mut out, line, &widths);
    }
    if opts.ascii {
        to_ascii(&out)
    } else {
        out
    }
}

fn push_line(out: &mut String, cells: &[String], widths: &[usize]) {
    let mut s = String::new();
    for (c, w) in cells.iter().zip(widths) {
        let pad = w - c.chars().count();
        s.push_str(c);
        s.push_str(&" ".repeat(pad + 2));
    }
    out.push_str(s.trim_end());
    out.push('\n');
}

fn render_cell(c: &Cell) -> String {
    format!(
        "tier={};source={};df={};eff={};kind={}",
        c.tier,
        c.source,
        c.df,
        c.eff.as_ref().map_or_else(|| "-".to_string(), format_rational),
        c.kind.as_str()
    )
}

/// One line per row, cells separated by tabs.
pub fn render_machine(d: &Decomposition) -> String {
    let mut out = String::new();
    for row in &d.rows {
        let cells: Vec<String> = row.cells.iter().map(render_cell).collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    out
}

/// Inverse of [`render_machine`].
pub fn parse_machine(text: &str) -> Result<Vec<Vec<Cell>>, ReportError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let bad = |msg: String| ReportError::Malformed { line: line_no, msg };
        if line.is_empty() {
            continue;
        }
        let mut cells = Vec::new();
        for field in line.split('\t') {
            let mut tier = None;
            let mut source = None;
            let mut df = None;
            let mut eff = None;
            let mut kind = None;
            for part in field.split(';') {
                let (k, v) = part
                    .split_once('=')
                    .ok_or_else(|| bad(format!("`{part}` is not key=value")))?;
                match k {
                    "tier" => tier = Some(v.to_string()),
                    "source" => source = Some(v.to_string()),
                    "df" => df = Some(v.parse::<u64>().map_err(|e| bad(format!("df: {e}")))?),
                    "eff" if v == "-" => eff = Some(None),
                    "eff" => {
                        eff = Some(Some(
                            parse_rational(v).ok_or_else(|| bad(format!("bad fraction `{v}`")))?,
                        ))
                    }
                    "kind" => {
                        kind = Some(match v {
                            "pertain" => CellKind::Pertain,
                            "residual" => CellKind::Residual,
                            "untouched" => CellKind::Untouched,
                            _ => return Err(bad(format!("unknown kind `{v}`"))),
                        })
                    }
                    _ => return Err(bad(format!("unknown key `{k}`"))),
                }
            }
            let missing = |k: &str| bad(format!("missing `{k}`"));
            cells.push(Cell {
                tier: tier.ok_or_else(|| missing("tier"))?,
                source: source.ok_or_else(|| missing("source"))?,
                df: df.ok_or_else(|| missing("df"))?,
                eff: eff.ok_or_else(|| missing("eff"))?,
                kind: kind.ok_or_else(|| missing("kind"))?,
            });
        }
        rows.push(cells);
    }
    Ok(rows)
}

/// Verdict, nonzero efficiencies and violations of one chain step.
pub fn render_step(index: usize, step: &ChainStep, opts: TextOptions) -> String {
    let r = &step.report;
    let mut out = format!(
        "step {index}: {} against {}: {}{}\n",
        step.structure,
        step.decomposition,
        r.verdict,
        if step.verified { "" } else { " (assumed)" }
    );
    if let Some(e) = &r.efficiency {
        for (p, q, l) in e.nonzero() {
            let _ = writeln!(out, "  λ({p}, {q}) = {}", format_rational(l));
        }
    }
    for v in &r.violations {
        let _ = writeln!(out, "  violation {v}");
    }
    if opts.ascii {
        to_ascii(&out)
    } else {
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{ratio, LabelSet};
    use crate::balance::DecompRow;

    fn cell(tier: &str, source: &str, df: u64, eff: Option<Rational>, kind: CellKind) -> Cell {
        Cell {
            tier: tier.into(),
            source: source.into(),
            df,
            eff,
            kind,
        }
    }

    /// The first three blocks of the half-plots table.
    fn sample() -> Decomposition {
        let p = |s: &str, df| cell("half-plots", s, df, None, CellKind::Pertain);
        let t = |s: &str, df, e: Rational| cell("treatments", s, df, Some(e), CellKind::Pertain);
        let res = |df| cell("treatments", "Residual", df, None, CellKind::Residual);
        let un = |df| cell("treatments", "", df, None, CellKind::Untouched);
        let rows = vec![
            vec![p("Mean", 1), t("Mean", 1, ratio(1, 1))],
            vec![p("Rows", 2), un(2)],
            vec![p("Columns[Squares]", 6), t("Trellis", 3, ratio(1, 9))],
            vec![p("Columns[Squares]", 6), res(3)],
            vec![p("Halfplots[Squares ∧ Rows ∧ Columns]", 24), t("Method", 1, ratio(1, 1))],
        ];
        Decomposition {
            objects: LabelSet::numbered("h", 48),
            tiers: vec!["half-plots".into(), "treatments".into()],
            rows: rows
                .into_iter()
                .map(|cells| DecompRow {
                    cells,
                    projector: None,
                })
                .collect(),
            dropped: vec![],
        }
    }

    #[test]
    fn text_layout() {
        let text = render_text(&sample(), TextOptions::default());
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("half-plots tier"));
        assert!(lines[0].contains("treatments tier"));
        assert_eq!(
            lines[1].split_whitespace().collect::<Vec<_>>(),
            ["source", "d.f.", "eff.", "source", "d.f."]
        );
        assert_eq!(lines[3].split_whitespace().collect::<Vec<_>>(), ["Rows", "2"]);
        assert_eq!(
            lines[4].split_whitespace().collect::<Vec<_>>(),
            ["Columns[Squares]", "6", "1/9", "Trellis", "3"]
        );
        // Continuation row leaves the outer cells blank.
        assert!(lines[5].trim_start().starts_with("Residual"));
        assert!(lines[5].starts_with(' '));
        let ascii = render_text(&sample(), TextOptions { ascii: true });
        assert!(ascii.contains("Halfplots[Squares ^ Rows ^ Columns]"));
        assert!(ascii.is_ascii());
    }

    #[test]
    fn eff_column_hidden_when_orthogonal() {
        let mut d = sample();
        d.rows.truncate(2);
        let text = render_text(&d, TextOptions::default());
        assert!(!text.contains("eff."));
    }

    #[test]
    fn single_tier() {
        let mut d = sample();
        d.tiers.truncate(1);
        for r in &mut d.rows {
            r.cells.truncate(1);
        }
        d.rows.dedup_by(|a, b| a.cells == b.cells);
        let text = render_text(&d, TextOptions::default());
        assert_eq!(text.lines().count(), 2 + 4);
        assert_eq!(render_machine(&d).lines().count(), 4);
    }

    #[test]
    fn machine_round_trip() {
        let d = sample();
        let text = render_machine(&d);
        assert!(text.starts_with(
            "tier=half-plots;source=Mean;df=1;eff=-;kind=pertain\ttier=treatments;source=Mean;df=1;eff=1;kind=pertain\n"
        ));
        let back = parse_machine(&text).unwrap();
        let cells: Vec<Vec<Cell>> = d.rows.iter().map(|r| r.cells.clone()).collect();
        assert_eq!(back, cells);
        assert!(parse_machine("tier=x;source=y").is_err());
        assert!(parse_machine("tier=x;source=y;df=1;eff=1/0;kind=pertain").is_err());
    }
}
