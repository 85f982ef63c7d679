#![allow(dead_code)]

use std::path::PathBuf;

use decomptab_cli::commands::load;
use decomptab_core::algebra::LabelSet;
use decomptab_core::{
    build_hasse, build_structure, parse_formula, AllocationTable, DesignFunction, Factor, ObjectSet,
    Structure, Tier,
};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn spec_path(name: &str) -> PathBuf {
    corpus_dir().join(format!("{name}.spec"))
}

pub fn tiers(name: &str) -> Vec<Tier> {
    load(&spec_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn golden(name: &str) -> String {
    std::fs::read_to_string(corpus_dir().join("golden").join(format!("{name}.machine"))).unwrap()
}

/// A random formula over `names`: a binary tree of `*` and `/`.
pub fn random_formula(rng: &mut impl Rng, names: &[String]) -> String {
    if names.len() == 1 {
        return names[0].clone();
    }
    let cut = rng.gen_range(1..names.len());
    let op = if rng.gen_bool(0.5) { "*" } else { "/" };
    let l = random_formula(rng, &names[..cut]);
    let r = random_formula(rng, &names[cut..]);
    format!("({l}){op}({r})")
}

/// Full factorial table over `factors`, objects labelled `prefix1…`.
pub fn factorial_table(id: &str, prefix: &str, factors: &[Factor]) -> AllocationTable {
    let mut rows: Vec<Vec<u64>> = vec![Vec::new()];
    for f in factors {
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
    let objects = ObjectSet {
        id: id.into(),
        labels: LabelSet::numbered(prefix, rows.len()),
    };
    let columns = factors
        .iter()
        .enumerate()
        .map(|(k, f)| (f.name.clone(), rows.iter().map(|r| r[k]).collect()))
        .collect();
    AllocationTable::new(objects, columns).unwrap()
}

/// A random poset structure with up to `max_factors` factors of 2 to
/// `max_levels` levels, over the full factorial of its factors.
pub fn random_structure(
    rng: &mut impl Rng,
    tier: &str,
    prefix: &str,
    max_factors: usize,
    max_levels: u64,
) -> (Structure, AllocationTable, String) {
    let k = rng.gen_range(1..=max_factors);
    let factors: Vec<Factor> = (0..k)
        .map(|i| Factor::new(format!("{prefix}F{i}"), rng.gen_range(2..=max_levels)))
        .collect();
    let names: Vec<String> = factors.iter().map(|f| f.name.clone()).collect();
    let formula = random_formula(rng, &names);
    let d = build_hasse(&parse_formula(&formula, &factors).unwrap()).unwrap();
    let table = factorial_table(tier, prefix, &factors);
    let s = build_structure(tier, &d, &table).unwrap();
    (s, table, formula)
}

/// A structure on `n / r` objects from one or two factors, for some `r`
/// dividing `n` (with `r = 1` when `bijective`).
pub fn random_coarse_structure(rng: &mut impl Rng, n: usize, bijective: bool) -> Structure {
    let divisors: Vec<usize> = (1..=n).filter(|d| n.is_multiple_of(*d) && n / d <= 48).collect();
    let u = if bijective { n } else { n / divisors[rng.gen_range(0..divisors.len())] };
    let splits: Vec<usize> = (2..u).filter(|d| u % d == 0).collect();
    let (factors, formula) = match splits.choose(rng) {
        Some(&d) if rng.gen_bool(0.7) => {
            let op = if rng.gen_bool(0.5) { "*" } else { "/" };
            (
                vec![Factor::new("T1", d as u64), Factor::new("T2", (u / d) as u64)],
                format!("T1{op}T2"),
            )
        }
        _ => (vec![Factor::new("T", u as u64)], "T".to_string()),
    };
    let d = build_hasse(&parse_formula(&formula, &factors).unwrap()).unwrap();
    build_structure("treatments", &d, &factorial_table("treatments", "t", &factors)).unwrap()
}

/// A random equireplicate map from `domain` onto `codomain`.
pub fn random_map(rng: &mut impl Rng, domain: &ObjectSet, codomain: &ObjectSet) -> DesignFunction {
    let mut order: Vec<usize> = (0..domain.len()).collect();
    order.shuffle(rng);
    let mut map = vec![0; domain.len()];
    for (k, &i) in order.iter().enumerate() {
        map[i] = k % codomain.len();
    }
    DesignFunction::new(domain.clone(), codomain.clone(), map).unwrap()
}

pub fn object_set(s: &Structure) -> ObjectSet {
    ObjectSet {
        id: s.tier.clone(),
        labels: s.objects().clone(),
    }
}

/// The CSV with its data rows shuffled.
pub fn shuffle_csv(rng: &mut impl Rng, text: &str) -> String {
    let mut lines: Vec<&str> = text.lines().collect();
    let header = lines.remove(0);
    lines.shuffle(rng);
    let mut out = String::from(header);
    out.push('\n');
    for l in lines {
        out.push_str(l);
        out.push('\n');
    }
    out
}
