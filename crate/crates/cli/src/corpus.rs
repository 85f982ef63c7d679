//! Deterministic constructors for the bundled example corpus.
//!
//! Each allocation is built from a systematic plan and then randomized by
//! relabelling levels with a seeded generator, which leaves every structure
//! and efficiency unchanged. The checked-in files under `corpus/` must equal
//! what these functions produce.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusFile {
    pub name: String,
    pub contents: String,
}

/// Spec files whose decomposition is pinned by a golden machine file.
pub const BALANCED: &[&str] = &[
    "meatloaves",
    "viticulture_phase1",
    "viticulture",
    "wheat",
    "wheat_plots",
    "socks_method1",
    "socks_method2",
];

/// Spec files that must be refused with exit code 4.
pub const REFUSED: &[&str] = &["wheat_q1", "gdd", "factorial"];

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn perm(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

fn csv(header: &[String], rows: &[Vec<usize>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

fn file(name: &str, contents: String) -> CorpusFile {
    CorpusFile {
        name: name.to_string(),
        contents,
    }
}

/// Meatloaves in blocks of six tasted in sessions; two 6×6 Latin squares
/// per session give each panellist every meatloaf of the session once.
pub fn meatloaves() -> Vec<CorpusFile> {
    let mut r = rng(1);
    let loaf: Vec<Vec<usize>> = (0..3).map(|_| perm(&mut r, 6)).collect();
    let trt: Vec<Vec<usize>> = (0..3).map(|_| perm(&mut r, 6)).collect();
    let mut rows = Vec::new();
    for s in 0..3 {
        for p in 0..12 {
            for t in 0..6 {
                let (sq, pp) = (p / 6, p % 6);
                let m = if sq == 0 { (pp + t) % 6 } else { (pp + 5 * t) % 6 };
                let ml = loaf[s][m];
                let k = trt[s][ml];
                rows.push(vec![s + 1, p + 1, t + 1, s + 1, ml + 1, k / 3 + 1, k % 3 + 1]);
            }
        }
    }
    let spec = "\
# Sensory evaluation of meatloaves: 18 meatloaves in 3 blocks, tasted by
# 12 panellists at 6 time orders in 3 sessions (one block per session).
tier tastings
  factor Sessions 3
  factor Panellists 12
  factor Timeorders 6
  formula Sessions/(Panellists*Timeorders)
tier meatloaves
  factor Blocks 3
  factor Meatloaves 6
  formula Blocks/Meatloaves
tier treatments
  factor Rosemary 2
  factor Irradiation 3
  formula Rosemary*Irradiation
allocation meatloaves.csv
chain treatments -> meatloaves -> tastings
";
    let h = header(&[
        "tastings.Sessions",
        "tastings.Panellists",
        "tastings.Timeorders",
        "meatloaves.Blocks",
        "meatloaves.Meatloaves",
        "treatments.Rosemary",
        "treatments.Irradiation",
    ]);
    vec![file("meatloaves.spec", spec.into()), file("meatloaves.csv", csv(&h, &rows))]
}

/// Field phase: two 3×4 Youden squares of trellis types, with methods on
/// the half-plots. Returns `(rows, columns, squares, halfplots) -> (trellis, method)`.
fn vineyard() -> impl Fn(usize, usize, usize, usize) -> (usize, usize) {
    let mut r = rng(2);
    let trellis = perm(&mut r, 4);
    let flip: Vec<bool> = (0..24).map(|_| rand::Rng::gen_bool(&mut r, 0.5)).collect();
    move |row, col, sq, h| {
        let shift = [0, 2][sq];
        let t = trellis[(row + col + shift) % 4];
        let plot = (sq * 3 + row) * 4 + col;
        let m = if flip[plot] { 1 - h } else { h };
        (t, m)
    }
}

const PHASE1_TIERS: &str = "\
tier halfplots
  factor Rows 3
  factor Squares 2
  factor Columns 4
  factor Halfplots 2
  formula (Rows*(Squares/Columns))/Halfplots
tier treatments
  factor Trellis 4
  factor Method 2
  formula Trellis*Method
";

pub fn viticulture_phase1() -> Vec<CorpusFile> {
    let plan = vineyard();
    let mut rows = Vec::new();
    for row in 0..3 {
        for sq in 0..2 {
            for col in 0..4 {
                for h in 0..2 {
                    let (t, m) = plan(row, col, sq, h);
                    rows.push(vec![row + 1, sq + 1, col + 1, h + 1, t + 1, m + 1]);
                }
            }
        }
    }
    let spec = format!(
        "# Field phase of a two-phase viticulture experiment: trellis types in two\n\
         # 3x4 Youden squares, pruning methods on half-plots.\n\
         {PHASE1_TIERS}allocation viticulture_phase1.csv\nchain treatments -> halfplots\n"
    );
    let h = header(&[
        "halfplots.Rows",
        "halfplots.Squares",
        "halfplots.Columns",
        "halfplots.Halfplots",
        "treatments.Trellis",
        "treatments.Method",
    ]);
    vec![
        file("viticulture_phase1.spec", spec),
        file("viticulture_phase1.csv", csv(&h, &rows)),
    ]
}

/// Column pairs tasted at the four sittings of each interval. Within an
/// interval every column occurs once in each position of a pair.
const SITTING_PAIRS: [[(usize, usize); 4]; 3] = [
    [(0, 1), (1, 3), (3, 2), (2, 0)],
    [(0, 2), (2, 1), (1, 3), (3, 0)],
    [(0, 1), (1, 2), (2, 3), (3, 0)],
];

/// Sensory phase: occasion `o` tastes square `o`; in interval `i` judge `j`
/// tastes row `(i + j) mod 3`, judges 1–3 the first column of the sitting's
/// pair and judges 4–6 the second; positions alternate the two half-plots.
pub fn viticulture() -> Vec<CorpusFile> {
    let plan = vineyard();
    let mut r = rng(3);
    let judges = perm(&mut r, 6);
    let mut rows = Vec::new();
    for o in 0..2 {
        for i in 0..3 {
            for s in 0..4 {
                for j in 0..6 {
                    for p in 0..4 {
                        let jj = judges[j];
                        let row = (i + jj) % 3;
                        let (a, b) = SITTING_PAIRS[i][s];
                        let col = if jj < 3 { a } else { b };
                        let h = p % 2;
                        let (t, m) = plan(row, col, o, h);
                        rows.push(vec![
                            o + 1,
                            i + 1,
                            s + 1,
                            j + 1,
                            p + 1,
                            row + 1,
                            o + 1,
                            col + 1,
                            h + 1,
                            t + 1,
                            m + 1,
                        ]);
                    }
                }
            }
        }
    }
    let spec = format!(
        "# Two-phase viticulture experiment: the half-plots of the field phase are\n\
         # presented to six judges in glasses at four positions.\n\
         tier evaluations\n  factor Occasions 2\n  factor Intervals 3\n  factor Sittings 4\n  \
         factor Judges 6\n  factor Positions 4\n  \
         formula ((Occasions/Intervals/Sittings)*Judges)/Positions\n\
         {PHASE1_TIERS}allocation viticulture.csv\nchain treatments -> halfplots -> evaluations\n"
    );
    let h = header(&[
        "evaluations.Occasions",
        "evaluations.Intervals",
        "evaluations.Sittings",
        "evaluations.Judges",
        "evaluations.Positions",
        "halfplots.Rows",
        "halfplots.Squares",
        "halfplots.Columns",
        "halfplots.Halfplots",
        "treatments.Trellis",
        "treatments.Method",
    ]);
    vec![file("viticulture.spec", spec), file("viticulture.csv", csv(&h, &rows))]
}

/// `L_k(a, c)` for the eight parallel classes of the affine plane of order 7.
fn parallel_class(k: usize, a: usize, c: usize) -> usize {
    if k == 8 {
        c
    } else {
        (a + (k - 1) * c) % 7
    }
}

const WHEAT_LINES: &str = "\
tier lines
  factor Lines 49
  formula Lines
  pseudo L1 7 refines Lines under Mean column lines.L1
  pseudo L2 7 refines Lines under Mean column lines.L2
  pseudo L3 7 refines Lines under Mean column lines.L3
  pseudo L4 7 refines Lines under Mean column lines.L4
  pseudo L5 7 refines Lines under Mean column lines.L5
  pseudo L6 7 refines Lines under Mean column lines.L6
  pseudo L7 7 refines Lines under Mean column lines.L7
  pseudo L8 7 refines Lines under Mean column lines.L8
  merge Lines_R = L1, L3, L5, L7
  merge Lines_T = L2, L4, L6, L8
";

const WHEAT_PLOTS: &str = "\
tier plots
  factor Blocks 4
  factor Plots 49
  formula Blocks/Plots
";

const WHEAT_PLOT_PSEUDO: &str = "\
  pseudo P1 7 refines Plots[Blocks] under Blocks column plots.P1
  pseudo P2 7 refines Plots[Blocks] under Blocks column plots.P2
";

const WHEAT_ANALYSES: &str = "\
tier analyses
  factor Intervals 4
  factor Runs 7
  factor Times 7
  formula Intervals/(Runs*Times)
";

/// 49 lines in four complete blocks, analysed seven per run at seven times.
/// Block `b` uses classes `L_{2b-1}` and `L_{2b}` as its runs and times, so
/// the four intervals form a balanced lattice square.
pub fn wheat() -> Vec<CorpusFile> {
    let mut r = rng(5);
    let interval_of_block = perm(&mut r, 4);
    let plot_of_line: Vec<Vec<usize>> = (0..4).map(|_| perm(&mut r, 49)).collect();
    let line_label = perm(&mut r, 49);
    let mut by_analysis = Vec::new();
    for b in 0..4 {
        for a in 0..7 {
            for c in 0..7 {
                let line = 7 * a + c;
                let run = parallel_class(2 * b + 1, a, c);
                let time = parallel_class(2 * b + 2, a, c);
                let mut row = vec![
                    interval_of_block[b] + 1,
                    run + 1,
                    time + 1,
                    b + 1,
                    plot_of_line[b][line] + 1,
                    run + 1,
                    time + 1,
                    line_label[line] + 1,
                ];
                row.extend((1..=8).map(|k| parallel_class(k, a, c) + 1));
                by_analysis.push(row);
            }
        }
    }
    by_analysis.sort();
    let mut cols = vec![
        "analyses.Intervals",
        "analyses.Runs",
        "analyses.Times",
        "plots.Blocks",
        "plots.Plots",
        "plots.P1",
        "plots.P2",
        "lines.Lines",
    ];
    let ls: Vec<String> = (1..=8).map(|k| format!("lines.L{k}")).collect();
    cols.extend(ls.iter().map(String::as_str));
    let h = header(&cols);
    let intro = "# Two-phase wheat trial: 49 lines in 4 blocks; the produce of each block is\n\
                 # analysed in one interval of 7 runs at 7 times.\n";
    let full = format!(
        "{intro}{WHEAT_ANALYSES}{WHEAT_PLOTS}{WHEAT_PLOT_PSEUDO}{WHEAT_LINES}\
         allocation wheat.csv\nchain lines -> plots -> analyses\n"
    );
    let q1 = format!(
        "# The wheat trial without the plot pseudofactors: not balanced.\n\
         {WHEAT_ANALYSES}{WHEAT_PLOTS}{WHEAT_LINES}allocation wheat.csv\nchain lines -> plots -> analyses\n"
    );
    let plots = format!(
        "# The field phase of the wheat trial alone, with both sets of pseudofactors.\n\
         {WHEAT_PLOTS}{WHEAT_PLOT_PSEUDO}{WHEAT_LINES}allocation wheat.csv\nchain lines -> plots\n"
    );
    vec![
        file("wheat.spec", full),
        file("wheat_q1.spec", q1),
        file("wheat_plots.spec", plots),
        file("wheat.csv", csv(&h, &by_analysis)),
    ]
}

const SOCK_TAIL: &str = "\
tier treatments
  factor Treatments 4
  formula Treatments
";

/// Socks split into twelve batches of four, three batches per treatment.
/// Each wash holds the four socks of one batch.
pub fn socks_method1() -> Vec<CorpusFile> {
    let mut r = rng(61);
    let sock_order = perm(&mut r, 48);
    let mut trt: Vec<usize> = (0..12).map(|k| k % 4).collect();
    trt.shuffle(&mut r);
    let wash_of_batch = perm(&mut r, 12);
    let mut rows = Vec::new();
    for (pos, &sock) in sock_order.iter().enumerate() {
        let (batch, k) = (pos / 4, pos % 4);
        rows.push(vec![wash_of_batch[batch] + 1, k + 1, sock + 1, batch + 1, batch + 1, trt[batch] + 1]);
    }
    rows.sort();
    let spec = format!(
        "# Knitted socks, first method: the socks of a batch are washed together.\n\
         tier rides\n  factor Washes 12\n  factor Rides 4\n  formula Washes/Rides\n\
         tier socks\n  factor Socks 48\n  formula Socks\n  \
         pseudo S1 12 refines Socks under Mean column socks.S1\n\
         tier batches\n  factor Batches 12\n  formula Batches\n\
         {SOCK_TAIL}allocation socks_method1.csv\nchain treatments -> batches -> socks -> rides\n"
    );
    let h = header(&[
        "rides.Washes",
        "rides.Rides",
        "socks.Socks",
        "socks.S1",
        "batches.Batches",
        "treatments.Treatments",
    ]);
    vec![file("socks_method1.spec", spec), file("socks_method1.csv", csv(&h, &rows))]
}

/// Batches in three groups of four, each group holding every treatment once.
/// A wash takes one sock from each batch of a group.
pub fn socks_method2() -> Vec<CorpusFile> {
    let mut r = rng(62);
    let sock_order = perm(&mut r, 48);
    let trt: Vec<Vec<usize>> = (0..3).map(|_| perm(&mut r, 4)).collect();
    let batch_label = perm(&mut r, 12);
    let wash_label = perm(&mut r, 12);
    let mut rows = Vec::new();
    for (pos, &sock) in sock_order.iter().enumerate() {
        // Group g, batch k within the group, sock s within the batch.
        let (g, k, s) = (pos / 16, (pos / 4) % 4, pos % 4);
        let batch = batch_label[4 * g + k];
        let wash = wash_label[4 * g + s];
        rows.push(vec![wash + 1, k + 1, sock + 1, g + 1, s + 1, batch + 1, g + 1, trt[g][k] + 1]);
    }
    rows.sort();
    let spec = format!(
        "# Knitted socks, second method: batches form three groups, each with all four\n\
         # treatments; a wash holds one sock from each batch of a group.\n\
         tier rides\n  factor Washes 12\n  factor Rides 4\n  formula Washes/Rides\n\
         tier socks\n  factor Socks 48\n  formula Socks\n  \
         pseudo S2 3 refines Socks under Mean column socks.S2\n  \
         pseudo S3 4 refines Socks under S2 column socks.S3\n  \
         merge S2 ∧ S3 = S2, S3[S2]\n\
         tier batches\n  factor Batches 12\n  formula Batches\n  \
         pseudo B2 3 refines Batches under Mean column batches.B2\n\
         {SOCK_TAIL}allocation socks_method2.csv\nchain treatments -> batches -> socks -> rides\n"
    );
    let h = header(&[
        "rides.Washes",
        "rides.Rides",
        "socks.Socks",
        "socks.S2",
        "socks.S3",
        "batches.Batches",
        "batches.B2",
        "treatments.Treatments",
    ]);
    vec![file("socks_method2.spec", spec), file("socks_method2.csv", csv(&h, &rows))]
}

const BLOCKS_SPEC: &str = "\
tier plots
  factor Blocks 4
  factor Plots 2
  formula Blocks/Plots
";

/// Negative controls: a group-divisible layout (unbalanced) and a 2×2
/// factorial in blocks of two whose main effects share a block contrast
/// (first-order balance only).
pub fn controls() -> Vec<CorpusFile> {
    let gdd = [[1, 2], [1, 2], [3, 4], [3, 4]];
    let mut rows = Vec::new();
    for (b, pair) in gdd.iter().enumerate() {
        for (p, &t) in pair.iter().enumerate() {
            rows.push(vec![b + 1, p + 1, t]);
        }
    }
    let gdd_spec = format!(
        "# Four treatments in blocks of two, pairs repeated: not balanced.\n{BLOCKS_SPEC}\
         tier treatments\n  factor T 4\n  formula T\nallocation gdd.csv\nchain treatments -> plots\n"
    );
    let ab = [[(1, 1), (1, 1)], [(2, 2), (2, 2)], [(1, 2), (2, 1)], [(2, 1), (1, 2)]];
    let mut fac = Vec::new();
    for (b, pair) in ab.iter().enumerate() {
        for (p, &(a, bb)) in pair.iter().enumerate() {
            fac.push(vec![b + 1, p + 1, a, bb]);
        }
    }
    let fac_spec = format!(
        "# A 2x2 factorial in blocks of two; A and B are confounded with the same\n\
         # block contrast.\n{BLOCKS_SPEC}\
         tier treatments\n  factor A 2\n  factor B 2\n  formula A*B\nallocation factorial.csv\n\
         chain treatments -> plots\n"
    );
    vec![
        file("gdd.spec", gdd_spec),
        file("gdd.csv", csv(&header(&["plots.Blocks", "plots.Plots", "treatments.T"]), &rows)),
        file("factorial.spec", fac_spec),
        file(
            "factorial.csv",
            csv(
                &header(&["plots.Blocks", "plots.Plots", "treatments.A", "treatments.B"]),
                &fac,
            ),
        ),
    ]
}

/// Every spec and allocation of the corpus.
pub fn files() -> Vec<CorpusFile> {
    let mut v = Vec::new();
    v.extend(meatloaves());
    v.extend(viticulture_phase1());
    v.extend(viticulture());
    v.extend(wheat());
    v.extend(socks_method1());
    v.extend(socks_method2());
    v.extend(controls());
    v
}

pub fn write_corpus(dir: &Path) -> io::Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for f in files() {
        std::fs::write(dir.join(&f.name), &f.contents)?;
        written.push(f.name);
    }
    Ok(written)
}

/// Human-readable list of what [`write_corpus`] produces.
pub fn manifest() -> String {
    let mut s = String::new();
    for f in files() {
        let _ = writeln!(s, "{} ({} lines)", f.name, f.contents.lines().count());
    }
    s
}
