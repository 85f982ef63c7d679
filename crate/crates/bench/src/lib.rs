//! Fixtures shared by the benchmarks under `benches/`.

use std::path::PathBuf;

use decomptab_core::algebra::LabelSet;
use decomptab_core::{
    build_hasse, build_structure, parse_formula, AllocationTable, Factor, ObjectSet, Structure, Tier,
};

/// Path of a bundled example spec.
pub fn corpus_spec(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(format!("{name}.spec"))
}

/// Linked tiers of a bundled example.
pub fn tiers(name: &str) -> Vec<Tier> {
    decomptab_cli::commands::load(&corpus_spec(name)).expect("bundled example loads")
}

/// `Blocks/Plots` on `blocks × size` units.
pub fn blocks_structure(blocks: u64, size: u64) -> Structure {
    let n = (blocks * size) as usize;
    let objects = ObjectSet {
        id: "plots".into(),
        labels: LabelSet::numbered("w", n),
    };
    let table = AllocationTable::new(
        objects,
        vec![
            ("Blocks".into(), (0..n as u64).map(|i| i / size + 1).collect()),
            ("Plots".into(), (0..n as u64).map(|i| i % size + 1).collect()),
        ],
    )
    .expect("columns match the objects");
    let factors = [Factor::new("Blocks", blocks), Factor::new("Plots", size)];
    let d = build_hasse(&parse_formula("Blocks/Plots", &factors).expect("valid formula"))
        .expect("valid diagram");
    build_structure("plots", &d, &table).expect("complete table")
}
