//! The line-oriented experiment description.
//!
//! ```text
//! tier plots
//!   factor Blocks 4
//!   factor Plots 49
//!   formula Blocks/Plots
//!   pseudo P1 7 refines Plots[Blocks] under Blocks column plots.P1
//! tier lines
//!   factor Lines 49
//!   formula Lines
//!   merge Lines_R = L1, L3
//! allocation wheat.csv
//! chain lines -> plots
//! ```
//!
//! A `#` at the start of a line or after whitespace starts a comment, so
//! source names such as `Rows#Columns[Squares]` are unaffected.

use std::path::{Path, PathBuf};

use decomptab_core::model::MEAN;
use decomptab_core::{build_hasse, parse_formula, Factor, HasseDiagram};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoSpec {
    pub name: String,
    pub levels: u64,
    pub refines: String,
    pub under: Vec<String>,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeSpec {
    pub name: String,
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TierSpec {
    pub name: String,
    pub factors: Vec<Factor>,
    pub formula: String,
    pub pseudos: Vec<PseudoSpec>,
    pub merges: Vec<MergeSpec>,
}

impl TierSpec {
    /// Hasse diagram of the formula alone.
    pub fn base_diagram(&self) -> Result<HasseDiagram, CliError> {
        let err = |e: decomptab_core::ModelError| CliError::Parse(format!("tier `{}`: {e}", self.name));
        build_hasse(&parse_formula(&self.formula, &self.factors).map_err(err)?).map_err(err)
    }

    /// Hasse diagram with the declared pseudofactors inserted.
    pub fn diagram(&self) -> Result<HasseDiagram, CliError> {
        let mut d = self.base_diagram()?;
        for p in &self.pseudos {
            let under: Vec<&str> = p.under.iter().map(String::as_str).collect();
            d = d
                .with_pseudofactor(&p.name, p.levels, &p.refines, &under)
                .map_err(|e| CliError::Parse(format!("tier `{}`: {e}", self.name)))?;
        }
        Ok(d)
    }

    /// CSV header of a factor of this tier.
    pub fn column(&self, factor: &str) -> String {
        format!("{}.{}", self.name, factor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentSpec {
    /// Observational units first, then each randomized tier in chain order.
    pub tiers: Vec<TierSpec>,
    /// Resolved against the spec file's directory.
    pub allocation: Option<PathBuf>,
}

fn strip_comment(line: &str) -> &str {
    let mut prev_ws = true;
    for (i, c) in line.char_indices() {
        if c == '#' && prev_ws {
            return &line[..i];
        }
        prev_ws = c.is_whitespace();
    }
    line
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_')
}

fn is_tier_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-')
}

pub fn parse_spec(path: &Path) -> Result<ExperimentSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let spec = parse_spec_str(&text, base)?;
    if let Some(a) = &spec.allocation {
        if !a.is_file() {
            return Err(CliError::Parse(format!("allocation file {} not found", a.display())));
        }
    }
    Ok(spec)
}

/// Parses and cross-checks a spec; the allocation path is not opened.
pub fn parse_spec_str(text: &str, base: &Path) -> Result<ExperimentSpec, CliError> {
    let mut tiers: Vec<TierSpec> = Vec::new();
    let mut formula_line: Vec<usize> = Vec::new();
    let mut allocation = None;
    let mut chain: Option<(usize, Vec<String>)> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |msg: String| CliError::Parse(format!("line {line_no}: {msg}"));
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let (kw, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        let current = |tiers: &mut Vec<TierSpec>| -> Result<usize, CliError> {
            if tiers.is_empty() {
                Err(CliError::Parse(format!("line {line_no}: `{kw}` outside a tier")))
            } else {
                Ok(tiers.len() - 1)
            }
        };
        match kw {
            "tier" => {
                if !is_tier_name(rest) {
                    return Err(err(format!("bad tier name `{rest}`")));
                }
                if tiers.iter().any(|t| t.name == rest) {
                    return Err(err(format!("tier `{rest}` declared twice")));
                }
                tiers.push(TierSpec {
                    name: rest.to_string(),
                    factors: Vec::new(),
                    formula: String::new(),
                    pseudos: Vec::new(),
                    merges: Vec::new(),
                });
                formula_line.push(0);
            }
            "factor" => {
                let t = current(&mut tiers)?;
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let [name, levels] = parts[..] else {
                    return Err(err("expected `factor <name> <levels>`".into()));
                };
                if !is_ident(name) {
                    return Err(err(format!("bad factor name `{name}`")));
                }
                let levels: u64 = levels
                    .parse()
                    .ok()
                    .filter(|&l| l > 0)
                    .ok_or_else(|| err(format!("bad level count `{levels}`")))?;
                tiers[t].factors.push(Factor::new(name, levels));
            }
            "formula" => {
                let t = current(&mut tiers)?;
                if !tiers[t].formula.is_empty() {
                    return Err(err("second formula for the tier".into()));
                }
                if rest.is_empty() {
                    return Err(err("empty formula".into()));
                }
                tiers[t].formula = rest.to_string();
                formula_line[t] = line_no;
            }
            "pseudo" => {
                let t = current(&mut tiers)?;
                tiers[t].pseudos.push(parse_pseudo(rest).map_err(err)?);
            }
            "merge" => {
                let t = current(&mut tiers)?;
                let (name, sources) = rest
                    .split_once(" = ")
                    .ok_or_else(|| err("expected `merge <name> = <source>, <source>…`".into()))?;
                let sources: Vec<String> = sources.split(',').map(|s| s.trim().to_string()).collect();
                if name.trim().is_empty() || sources.iter().any(String::is_empty) {
                    return Err(err("empty name in merge".into()));
                }
                tiers[t].merges.push(MergeSpec {
                    name: name.trim().to_string(),
                    sources,
                });
            }
            "allocation" => {
                if allocation.is_some() {
                    return Err(err("second allocation".into()));
                }
                if rest.is_empty() {
                    return Err(err("missing allocation path".into()));
                }
                allocation = Some(base.join(rest));
            }
            "chain" => {
                if chain.is_some() {
                    return Err(err("second chain".into()));
                }
                let names: Vec<String> = rest.split("->").map(|s| s.trim().to_string()).collect();
                chain = Some((line_no, names));
            }
            _ => return Err(err(format!("unknown keyword `{kw}`"))),
        }
    }
    if tiers.is_empty() {
        return Err(CliError::Usage("spec declares no tiers".into()));
    }
    for (t, tier) in tiers.iter().enumerate() {
        if tier.formula.is_empty() {
            return Err(CliError::Parse(format!("tier `{}` has no formula", tier.name)));
        }
        let d = tier.diagram().map_err(|e| match e {
            CliError::Parse(m) => CliError::Parse(format!("line {}: {m}", formula_line[t])),
            other => other,
        })?;
        for m in &tier.merges {
            for s in &m.sources {
                if d.position(s).is_none() || s == MEAN {
                    return Err(CliError::Parse(format!(
                        "tier `{}`: merge refers to unknown source `{s}`",
                        tier.name
                    )));
                }
            }
        }
    }
    let order = match chain {
        Some((line_no, names)) => {
            let mut order = Vec::new();
            for n in names.iter().rev() {
                let t = tiers
                    .iter()
                    .position(|t| &t.name == n)
                    .ok_or_else(|| CliError::Parse(format!("line {line_no}: unknown tier `{n}` in chain")))?;
                if order.contains(&t) {
                    return Err(CliError::Parse(format!("line {line_no}: tier `{n}` repeated in chain")));
                }
                order.push(t);
            }
            if order.len() != tiers.len() {
                return Err(CliError::Parse(format!("line {line_no}: chain must list every tier")));
            }
            order
        }
        None if tiers.len() == 1 => vec![0],
        None => return Err(CliError::Parse("several tiers but no chain".into())),
    };
    let tiers = order.into_iter().map(|t| tiers[t].clone()).collect();
    Ok(ExperimentSpec { tiers, allocation })
}

fn parse_pseudo(rest: &str) -> Result<PseudoSpec, String> {
    let usage = || "expected `pseudo <name> <levels> refines <source> under <node>[,<node>…] column <header>`".to_string();
    let (head, tail) = rest.split_once(" refines ").ok_or_else(usage)?;
    let (refines, tail) = tail.split_once(" under ").ok_or_else(usage)?;
    let (under, column) = tail.split_once(" column ").ok_or_else(usage)?;
    let parts: Vec<&str> = head.split_whitespace().collect();
    let [name, levels] = parts[..] else {
        return Err(usage());
    };
    if !is_ident(name) {
        return Err(format!("bad pseudofactor name `{name}`"));
    }
    let levels: u64 = levels
        .parse()
        .ok()
        .filter(|&l| l > 0)
        .ok_or_else(|| format!("bad level count `{levels}`"))?;
    let column = column.trim();
    if column.is_empty() || column.contains(char::is_whitespace) {
        return Err(format!("bad column `{column}`"));
    }
    Ok(PseudoSpec {
        name: name.to_string(),
        levels,
        refines: refines.trim().to_string(),
        under: under.split(',').map(|s| s.trim().to_string()).collect(),
        column: column.to_string(),
    })
}
