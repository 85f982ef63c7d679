mod common;

use common::{object_set, random_coarse_structure, random_map, random_structure};
use decomptab_core::algebra::{integer, LabelSet};
use decomptab_core::{
    check_balance, efficiency_matrix, embed, parse_machine, pertain, refine, render_machine,
    CellKind, Decomposition, ObjectSet, Structure, Verdict,
};
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A random structure on at most 144 objects.
fn small_structure(rng: &mut ChaCha8Rng) -> Structure {
    loop {
        let (s, _, _) = random_structure(rng, "units", "w", 4, 4);
        if s.objects().len() <= 144 {
            return s;
        }
    }
}

/// `P` on the units and a random coarser structure carried onto them.
fn random_pair(seed: u64, bijective: bool) -> (Structure, Structure) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = small_structure(&mut rng);
    let q = random_coarse_structure(&mut rng, p.objects().len(), bijective);
    let f = random_map(&mut rng, &object_set(&p), &object_set(&q));
    let qe = embed(&q, &f).unwrap();
    (p, qe)
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 24,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn random_structures_satisfy_the_axioms(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = small_structure(&mut rng);
        s.verify().unwrap();
        prop_assert_eq!(s.total_df(), s.objects().len() as u64);
        let d = Decomposition::from_structure(&s);
        d.verify().unwrap();
    }

    #[test]
    fn efficiency_columns_sum_to_one(seed in any::<u64>()) {
        let (p, q) = random_pair(seed, false);
        let m = efficiency_matrix(&p, &q).unwrap();
        for j in 0..m.col_keys.len() {
            prop_assert_eq!(m.column_sum(j), integer(1));
        }
        let d = Decomposition::from_structure(&p);
        let r = check_balance(&d, &q).unwrap();
        if let Some(e) = &r.efficiency {
            prop_assert_eq!(e, &m);
        }
    }

    #[test]
    fn unit_efficiency_means_containment(seed in any::<u64>()) {
        let (p, q) = random_pair(seed, false);
        let m = efficiency_matrix(&p, &q).unwrap();
        for (i, ps) in p.sources.iter().enumerate() {
            for (j, qs) in q.sources.iter().enumerate() {
                if !m.get(i, j).is_one() {
                    continue;
                }
                let qa = qs.projector.align_to(ps.projector.row_labels(), ps.projector.col_labels()).unwrap();
                prop_assert_eq!(ps.projector.mul(&qa).unwrap(), qa.clone());
                prop_assert_eq!(qa.mul(&ps.projector).unwrap(), qa.clone());
                prop_assert_eq!(pertain(&ps.projector, &qs.projector, &integer(1)).unwrap(), qa);
            }
        }
    }

    #[test]
    fn balanced_refinement_is_a_decomposition(seed in any::<u64>()) {
        let (p, q) = random_pair(seed, false);
        let d = Decomposition::from_structure(&p);
        let r = check_balance(&d, &q).unwrap();
        prop_assert_eq!(r.verdict == Verdict::Unbalanced, r.efficiency.is_none());
        if r.verdict.is_balanced() {
            let refined = refine(&d, &q, &r).unwrap();
            refined.verify().unwrap();
            let e = r.efficiency.as_ref().unwrap();
            for row in &refined.rows {
                let last = row.cells.last().unwrap();
                if last.kind == CellKind::Pertain {
                    let first = &row.cells[0].source;
                    prop_assert_eq!(last.eff.as_ref(), e.lookup(first, &last.source));
                }
            }
        }
    }

    #[test]
    fn bijective_balance_is_orthogonal_and_reproduces_q(seed in any::<u64>()) {
        let (p, q) = random_pair(seed, true);
        let d = Decomposition::from_structure(&p);
        let r = check_balance(&d, &q).unwrap();
        if r.verdict.is_balanced() {
            let e = r.efficiency.as_ref().unwrap();
            for i in 0..e.row_keys.len() {
                for j in 0..e.col_keys.len() {
                    prop_assert!(e.get(i, j).is_zero() || e.get(i, j).is_one());
                }
            }
            let refined = refine(&d, &q, &r).unwrap();
            prop_assert!(refined.rows.iter().all(|row| row.cells.last().unwrap().kind == CellKind::Pertain));
            let mut got: Vec<_> = refined.projectors().into_iter().cloned().collect();
            let mut want: Vec<_> = q.sources.iter().map(|s| s.projector.clone()).collect();
            prop_assert_eq!(got.len(), want.len());
            got.sort_by_key(|m| format!("{m:?}"));
            want.sort_by_key(|m| format!("{m:?}"));
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn embedding_composes(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = [12usize, 24, 36, 48][(seed % 4) as usize];
        let omega = ObjectSet { id: "units".into(), labels: LabelSet::numbered("w", n) };
        let u = [n / 2, n / 3, n][(seed / 4 % 3) as usize];
        let upsilon = ObjectSet { id: "middle".into(), labels: LabelSet::numbered("m", u) };
        let gamma = random_coarse_structure(&mut rng, u, false);
        let f = random_map(&mut rng, &omega, &upsilon);
        let g = random_map(&mut rng, &upsilon, &object_set(&gamma));
        let two_step = embed(&embed(&gamma, &g).unwrap(), &f).unwrap();
        let direct = embed(&gamma, &f.compose(&g).unwrap()).unwrap();
        prop_assert_eq!(&two_step.sources, &direct.sources);
        prop_assert_eq!(&two_step.support, &direct.support);
        for s in &gamma.sources {
            let e = &direct.source(&s.name).unwrap().projector;
            prop_assert_eq!(e.trace().unwrap(), s.projector.trace().unwrap());
        }
    }

    #[test]
    fn machine_format_round_trips(seed in any::<u64>()) {
        let (p, q) = random_pair(seed, false);
        let d = Decomposition::from_structure(&p);
        let r = check_balance(&d, &q).unwrap();
        let d = if r.verdict.is_balanced() { refine(&d, &q, &r).unwrap() } else { d };
        let text = render_machine(&d);
        let cells: Vec<_> = d.rows.iter().map(|r| r.cells.clone()).collect();
        prop_assert_eq!(parse_machine(&text).unwrap(), cells);
    }
}

#[test]
fn random_pairs_cover_every_verdict() {
    let mut seen = std::collections::BTreeMap::new();
    for seed in 0..150 {
        for bijective in [false, true] {
            let (p, q) = random_pair(seed, bijective);
            let r = check_balance(&Decomposition::from_structure(&p), &q).unwrap();
            *seen.entry((r.verdict.as_str(), bijective)).or_insert(0) += 1;
        }
    }
    for v in [Verdict::Orthogonal, Verdict::StructureBalanced, Verdict::Unbalanced] {
        assert!(seen.contains_key(&(v.as_str(), false)), "{v} never generated: {seen:?}");
    }
    assert!(seen.contains_key(&(Verdict::Orthogonal.as_str(), true)), "{seen:?}");
}
