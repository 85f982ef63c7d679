use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use decomptab_core::algebra::{LabelSet, Labels};
use decomptab_core::{
    chain, chain_fast, render_machine, render_step, render_text, same_projector_sets,
    AllocationTable, BalanceError, ChainOutcome, ChainStep, Mode, ObjectSet, TextOptions, Tier,
};

use crate::load::{build_tiers, load_allocation, read_csv};
use crate::oracle::check_chain;
use crate::spec::{parse_spec, ExperimentSpec};
use crate::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum RunMode {
    #[default]
    Left,
    Right,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Check,
    Decompose,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    pub machine: bool,
    pub ascii: bool,
    pub mode: RunMode,
    /// Efficiencies from traces only; balance is assumed.
    pub fast: bool,
    pub tol: f64,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            machine: false,
            ascii: false,
            mode: RunMode::Left,
            fast: false,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Outcome {
            code: 0,
            stdout,
            stderr: String::new(),
        }
    }

    fn failed(stdout: String, e: &CliError) -> Self {
        Outcome {
            code: e.exit_code(),
            stdout,
            stderr: format!("error: {e}\n"),
        }
    }
}

/// Every level combination of the tier's factors, for a single-tier spec
/// given without an allocation.
fn complete_table(spec: &ExperimentSpec) -> Result<AllocationTable, CliError> {
    let tier = &spec.tiers[0];
    let mut rows: Vec<Vec<u64>> = vec![Vec::new()];
    for f in &tier.factors {
        rows = rows
            .into_iter()
            .flat_map(|r| {
                (1..=f.levels).map(move |v| {
                    let mut r = r.clone();
                    r.push(v);
                    r
                })
            })
            .collect();
    }
    let labels: Labels = LabelSet::numbered("r", rows.len());
    let columns = tier
        .factors
        .iter()
        .enumerate()
        .map(|(k, f)| (tier.column(&f.name), rows.iter().map(|r| r[k]).collect()))
        .collect();
    Ok(AllocationTable::new(
        ObjectSet {
            id: "rows".into(),
            labels,
        },
        columns,
    )?)
}

/// Parses a spec and its allocation into linked tiers.
pub fn load(path: &Path) -> Result<Vec<Tier>, CliError> {
    let spec = parse_spec(path)?;
    let rows = match &spec.allocation {
        Some(a) => {
            let f = File::open(a).map_err(|e| CliError::Parse(format!("{}: {e}", a.display())))?;
            read_csv(f)?
        }
        None if spec.tiers.len() == 1 => complete_table(&spec)?,
        None => return Err(CliError::Parse("several tiers but no allocation".into())),
    };
    let loaded = load_allocation(&spec, rows)?;
    build_tiers(&spec, &loaded)
}

fn modes(m: RunMode) -> Vec<Mode> {
    match m {
        RunMode::Left => vec![Mode::Left],
        RunMode::Right => vec![Mode::Right],
        RunMode::Both => vec![Mode::Left, Mode::Right],
    }
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Left => "left",
        Mode::Right => "right",
    }
}

fn text_opts(opts: &Options) -> TextOptions {
    TextOptions { ascii: opts.ascii }
}

fn render_steps(out: &mut String, steps: &[ChainStep], opts: &Options) {
    for (i, s) in steps.iter().enumerate() {
        out.push_str(&render_step(i + 1, s, text_opts(opts)));
    }
}

fn header(tiers: &[Tier]) -> String {
    let names: Vec<&str> = tiers.iter().map(|t| t.structure.tier.as_str()).collect();
    format!("tiers: {}\n", names.join(" <- "))
}

/// Balance report for every step of the chain.
pub fn check(tiers: &[Tier], opts: &Options) -> Outcome {
    let mut out = header(tiers);
    if tiers.len() == 1 {
        out.push_str("single tier: nothing to check\n");
        return Outcome::ok(out);
    }
    let mut failure = None;
    for m in modes(opts.mode) {
        if opts.mode == RunMode::Both {
            let _ = writeln!(out, "{} fold:", mode_name(m));
        }
        match chain(tiers, m) {
            Ok(c) => render_steps(&mut out, &c.steps, opts),
            Err(BalanceError::Unbalanced { steps, .. }) => {
                render_steps(&mut out, &steps, opts);
                let last = steps.last().expect("failing step is recorded");
                failure.get_or_insert(CliError::Unbalanced(format!(
                    "{} is not structure balanced in relation to {}",
                    last.structure, last.decomposition
                )));
            }
            Err(e) => return Outcome::failed(out, &e.into()),
        }
    }
    match failure {
        Some(e) => Outcome::failed(out, &e),
        None => Outcome::ok(out),
    }
}

fn run_chain(tiers: &[Tier], mode: Mode, fast: bool) -> Result<ChainOutcome, CliError> {
    Ok(if fast { chain_fast(tiers)? } else { chain(tiers, mode)? })
}

/// The decomposition table, and with both modes the associativity check.
pub fn decompose(tiers: &[Tier], opts: &Options) -> Outcome {
    if opts.fast && opts.mode == RunMode::Both {
        return Outcome::failed(
            String::new(),
            &CliError::Usage("--fast computes no projectors to compare; use one mode".into()),
        );
    }
    let first = match run_chain(tiers, modes(opts.mode)[0], opts.fast) {
        Ok(c) => c,
        Err(e) => return Outcome::failed(String::new(), &e),
    };
    let mut out = if opts.machine {
        render_machine(&first.decomposition)
    } else {
        render_text(&first.decomposition, text_opts(opts))
    };
    let mut stderr = String::new();
    if opts.mode == RunMode::Both {
        let second = match run_chain(tiers, Mode::Right, false) {
            Ok(c) => c,
            Err(e) => return Outcome::failed(out, &e),
        };
        let same = same_projector_sets(&first.decomposition, &second.decomposition)
            .map_err(CliError::from).map(|same| same && render_machine(&first.decomposition) == render_machine(&second.decomposition));
        let line = match same {
            Ok(true) => "associativity: left and right folds agree\n".to_string(),
            Ok(false) => {
                let e = CliError::Oracle("left and right folds differ".into());
                return Outcome::failed(out, &e);
            }
            Err(e) => return Outcome::failed(out, &e),
        };
        if opts.machine {
            stderr.push_str(&line);
        } else {
            out.push('\n');
            out.push_str(&line);
        }
    }
    Outcome {
        code: 0,
        stdout: out,
        stderr,
    }
}

/// Floating-point spectra of every balanced pair and final projector.
pub fn oracle(tiers: &[Tier], opts: &Options) -> Outcome {
    let report = match check_chain(tiers, opts.tol) {
        Ok(r) => r,
        Err(e) => return Outcome::failed(String::new(), &e),
    };
    let mut out = header(tiers);
    let _ = writeln!(out, "checks: {}", report.checks.len());
    let max = report.max_deviation();
    let _ = writeln!(out, "max deviation: {max:.3e}");
    if let Some(w) = report.worst() {
        let _ = writeln!(out, "worst: {}", w.label);
    }
    for c in report.checks.iter().filter(|c| !(c.deviation <= opts.tol)) {
        let _ = writeln!(out, "  exceeds tolerance: {} ({:.3e})", c.label, c.deviation);
    }
    let out = if opts.ascii { decomptab_core::report::to_ascii(&out) } else { out };
    verdict(out, max, opts.tol)
}

/// Exit 5 when the deviation exceeds the tolerance (or is not a number).
pub fn verdict(stdout: String, max_deviation: f64, tol: f64) -> Outcome {
    if max_deviation <= tol {
        Outcome::ok(stdout)
    } else {
        let e = CliError::Oracle(format!("{max_deviation:.3e} exceeds {tol:e}"));
        Outcome::failed(stdout, &e)
    }
}

pub fn run(cmd: Command, path: &Path, opts: &Options) -> Outcome {
    if !(opts.tol > 0.0) {
        return Outcome::failed(String::new(), &CliError::Usage("--tol must be positive".into()));
    }
    let tiers = match load(path) {
        Ok(t) => t,
        Err(e) => return Outcome::failed(String::new(), &e),
    };
    match cmd {
        Command::Check => check(&tiers, opts),
        Command::Decompose => decompose(&tiers, opts),
        Command::Oracle => oracle(&tiers, opts),
    }
}
