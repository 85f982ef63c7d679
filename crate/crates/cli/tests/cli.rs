mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{spec_path, tiers};
use decomptab_cli::commands::verdict;
use decomptab_cli::oracle::{check_decomposition, OracleReport};
use decomptab_core::algebra::ratio;
use decomptab_core::{chain, Mode};

fn decomptab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decomptab"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, contents).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn generate_writes_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("c");
    let o = decomptab(&["generate", target.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let spec = target.join("socks_method1.spec");
    let o = decomptab(&["decompose", spec.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("Socks ⊢ S1"));
}

#[test]
fn ascii_output_has_no_unicode_symbols() {
    let o = decomptab(&["decompose", "--ascii", spec_path("socks_method2").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let out = text(&o.stdout);
    assert!(out.is_ascii(), "{out}");
    assert!(out.contains("Socks |- (S2 ^ S3)"));
}

#[test]
fn mode_both_reports_associativity() {
    let o = decomptab(&["decompose", "--mode", "both", spec_path("meatloaves").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(text(&o.stdout).contains("associativity: left and right folds agree"));
    let o = decomptab(&[
        "decompose",
        "--mode",
        "both",
        "--machine",
        spec_path("meatloaves").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert!(!text(&o.stdout).contains("associativity"));
    assert!(text(&o.stderr).contains("associativity"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&decomptab(&[])), 1);
    assert_eq!(code(&decomptab(&["decompose"])), 1);
    assert_eq!(code(&decomptab(&["check", "--mode", "sideways", "x.spec"])), 1);
    let s = spec_path("socks_method1");
    assert_eq!(code(&decomptab(&["oracle", "--tol", "0", s.to_str().unwrap()])), 1);
    assert_eq!(
        code(&decomptab(&["decompose", "--fast", "--mode", "both", s.to_str().unwrap()])),
        1
    );
    assert_eq!(code(&decomptab(&["check", "/nonexistent/x.spec"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.spec", "# nothing here\n");
    assert_eq!(code(&decomptab(&["oracle", &empty])), 1);
}

#[test]
fn parse_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bad_formula = write(d, "a.spec", "tier t\n  factor A 3\n  formula A/\n");
    assert_eq!(code(&decomptab(&["check", &bad_formula])), 2);
    let bad_keyword = write(d, "b.spec", "tier t\n  factr A 3\n");
    let o = decomptab(&["check", &bad_keyword]);
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).contains("line 2"));
    let no_csv = write(
        d,
        "c.spec",
        "tier u\n factor A 2\n formula A\ntier t\n factor T 2\n formula T\nallocation missing.csv\nchain t -> u\n",
    );
    assert_eq!(code(&decomptab(&["check", &no_csv])), 2);
    write(d, "bad.csv", "u.A,t.T\n1,x\n");
    let bad_level = write(
        d,
        "e.spec",
        "tier u\n factor A 2\n formula A\ntier t\n factor T 2\n formula T\nallocation bad.csv\nchain t -> u\n",
    );
    assert_eq!(code(&decomptab(&["check", &bad_level])), 2);
}

#[test]
fn structural_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = "tier u\n factor A 2\n formula A\ntier t\n factor T 2\n formula T\nallocation a.csv\nchain t -> u\n";
    // Level out of range.
    write(d, "a.csv", "u.A,t.T\n1,1\n2,3\n");
    let s = write(d, "a.spec", spec);
    assert_eq!(code(&decomptab(&["check", &s])), 3);
    // Duplicate unit.
    write(d, "a.csv", "u.A,t.T\n1,1\n1,2\n");
    assert_eq!(code(&decomptab(&["check", &s])), 3);
    // Not equireplicate.
    let spec3 = "tier u\n factor A 3\n formula A\ntier t\n factor T 2\n formula T\nallocation a.csv\nchain t -> u\n";
    write(d, "a.csv", "u.A,t.T\n1,1\n2,1\n3,2\n");
    let s3 = write(d, "b.spec", spec3);
    assert_eq!(code(&decomptab(&["check", &s3])), 3);
}

#[test]
fn refused_designs_exit_4() {
    for name in ["gdd", "factorial", "wheat_q1"] {
        let o = decomptab(&["decompose", spec_path(name).to_str().unwrap()]);
        assert_eq!(code(&o), 4, "{name}");
        assert!(text(&o.stderr).contains("not structure balanced"), "{name}");
    }
}

#[test]
fn single_tier_check_is_trivial() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "s.spec", "tier t\n  factor A 2\n  factor B 3\n  formula A*B\n");
    let o = decomptab(&["check", &s]);
    assert_eq!(code(&o), 0);
    assert!(text(&o.stdout).contains("nothing to check"));
    let o = decomptab(&["decompose", "--machine", &s]);
    assert_eq!(code(&o), 0);
    assert_eq!(text(&o.stdout).lines().count(), 4);
}

#[test]
fn oracle_passes_on_the_corpus() {
    for name in ["viticulture_phase1", "socks_method2", "wheat_plots"] {
        let o = decomptab(&["oracle", spec_path(name).to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{name}: {}", text(&o.stdout));
        assert!(text(&o.stdout).contains("max deviation"));
    }
}

#[test]
fn corrupted_projector_exits_5() {
    let t = tiers("viticulture_phase1");
    let mut d = chain(&t, Mode::Left).unwrap().decomposition;
    let mut report = OracleReport::default();
    check_decomposition(&d, 1e-9, &mut report).unwrap();
    assert_eq!(verdict(String::new(), report.max_deviation(), 1e-9).code, 0);
    let p = d.rows[3].projector.take().unwrap();
    d.rows[3].projector = Some(p.scale(&ratio(101, 100)));
    let mut report = OracleReport::default();
    check_decomposition(&d, 1e-9, &mut report).unwrap();
    let out = verdict(String::new(), report.max_deviation(), 1e-9);
    assert_eq!(out.code, 5);
    assert!((report.max_deviation() - 0.01).abs() < 1e-9);
}
