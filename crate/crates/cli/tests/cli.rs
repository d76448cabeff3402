use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn feinsum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feinsum"))
        .args(args)
        .output()
        .unwrap()
}

fn fx(name: &str) -> String {
    fixture(name).to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn canonicalize_prints_document_key_and_maps() {
    let o = feinsum(&["canonicalize", &fx("reduction_e1.spec")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let golden_key = std::fs::read_to_string(fixture("reduction_e1.key")).unwrap();
    let expected = format!(
        "einsum: ab,ac->a\nrow: A0,A1\narray: A0 float64 72x18\narray: A1 float64 72x18\nkey: {golden_key}"
    );
    let out = stdout(&o);
    assert!(out.starts_with(&expected), "{out}");
    let maps: Vec<&str> = out.lines().skip(5).collect();
    assert!(maps.contains(&"sigma_idx: a -> i"));
    assert!(maps.contains(&"sigma_row: 1 -> 1"));
    assert!(maps.iter().all(|l| l.starts_with("sigma_")));
}

#[test]
fn canonicalize_is_deterministic() {
    let a = feinsum(&["canonicalize", &fx("three_row_e1.spec")]);
    let b = feinsum(&["canonicalize", &fx("three_row_e1.spec")]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn canonical_input_gets_identity_maps() {
    let dir = tempfile::tempdir().unwrap();
    let o = feinsum(&["canonicalize", &fx("three_row_e2.spec")]);
    let doc: String = stdout(&o)
        .lines()
        .take_while(|l| !l.starts_with("key:"))
        .map(|l| format!("{l}\n"))
        .collect();
    let path = dir.path().join("canonical.spec");
    std::fs::write(&path, &doc).unwrap();
    let again = stdout(&feinsum(&["canonicalize", path.to_str().unwrap()]));
    assert!(again.starts_with(&doc));
    for line in again.lines().filter(|l| l.starts_with("sigma_")) {
        let (_, pair) = line.split_once(": ").unwrap();
        let (from, to) = pair.split_once(" -> ").unwrap();
        assert_eq!(from, to, "{line}");
    }
}

#[test]
fn key_only_format() {
    let o = feinsum(&[
        "--format",
        "key-only",
        "canonicalize",
        &fx("reduction_e2.spec"),
    ]);
    assert_eq!(
        stdout(&o),
        std::fs::read_to_string(fixture("reduction_e1.key")).unwrap()
    );
}

#[test]
fn isomorphic_pairs_and_non_pairs() {
    let o = feinsum(&[
        "isomorphic",
        &fx("three_row_e1.spec"),
        &fx("three_row_e2.spec"),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("isomorphic\n"));
    assert_eq!(
        stdout(&o)
            .lines()
            .filter(|l| l.starts_with("sigma_arg:"))
            .count(),
        6
    );

    let o = feinsum(&[
        "isomorphic",
        &fx("matmul.spec"),
        &fx("matmul_transposed.spec"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not isomorphic"));

    let o = feinsum(&["isomorphic", &fx("matmul.spec"), &fx("matmul.spec")]);
    assert_eq!(o.status.code(), Some(0));
    for line in stdout(&o).lines().skip(1) {
        let (_, pair) = line.split_once(": ").unwrap();
        let (from, to) = pair.split_once(" -> ").unwrap();
        assert_eq!(from, to, "{line}");
    }
}

#[test]
fn match_kernel_against_reference() {
    let o = feinsum(&["match", &fx("fused.kernel"), &fx("matvec_batch.spec")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("sigma_idx: i -> i0\n"), "{out}");
    assert!(out.contains("sigma_idx: j -> i1\n"));
    assert!(out.contains("sigma_arg: A -> u\n"));

    let o = feinsum(&["match", &fx("fused.kernel"), &fx("matmul.spec")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn record_then_retrieve_through_an_isomorphic_spec() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("facts.db");
    let db = db.to_str().unwrap();
    let o = feinsum(&[
        "retrieve",
        "--db",
        db,
        "--device",
        "h100",
        &fx("reduction_e2.spec"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not found"));

    for (t, time) in [("slow", "2.0"), ("fast", "0.5")] {
        let o = feinsum(&[
            "record",
            "--db",
            db,
            "--device",
            "h100",
            "--transform",
            t,
            "--time",
            time,
            &fx("reduction_e1.spec"),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(stdout(&o), "recorded: 1\n");
    }
    let o = feinsum(&[
        "retrieve",
        "--db",
        db,
        "--device",
        "h100",
        &fx("reduction_e2.spec"),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("transform: fast\n"), "{out}");
    assert!(out.contains("sigma_arg: A0 -> "));
    let o = feinsum(&[
        "retrieve",
        "--db",
        db,
        "--device",
        "p100",
        &fx("reduction_e2.spec"),
    ]);
    assert_eq!(o.status.code(), Some(1));

    let o = feinsum(&[
        "--format",
        "key-only",
        "retrieve",
        "--db",
        db,
        "--device",
        "h100",
        &fx("reduction_e2.spec"),
    ]);
    assert_eq!(
        stdout(&o),
        std::fs::read_to_string(fixture("reduction_e1.key")).unwrap()
    );
}

#[test]
fn stats_for_a_large_matrix_product() {
    let o = feinsum(&["stats", "--device", "h100", &fx("gemm1024.spec")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("flops: 2147483648\n"), "{out}");
    assert!(out.contains("bytes: 25165824\n"));
    assert!(out.contains("arithmetic_intensity: 85.33"));
    assert!(out.contains("memory_bound: false\n"));

    let o = feinsum(&["stats", &fx("gemm1024.spec")]);
    assert!(!stdout(&o).contains("memory_bound"));
    let o = feinsum(&["stats", "--device", "nonesuch", &fx("gemm1024.spec")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exit_codes_by_outcome_class() {
    assert_eq!(
        feinsum(&["canonicalize", &fx("invalid.spec")])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        feinsum(&["canonicalize", &fx("bad_syntax.spec")])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        feinsum(&["canonicalize", &fx("no_such_file.spec")])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(feinsum(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        feinsum(&["--format", "xml", "canonicalize", &fx("matmul.spec")])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        feinsum(&["retrieve", &fx("matmul.spec")]).status.code(),
        Some(2)
    );

    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("facts.db");
    std::fs::write(&db, "not a facts file\n").unwrap();
    let o = feinsum(&[
        "retrieve",
        "--db",
        db.to_str().unwrap(),
        "--device",
        "h100",
        &fx("matmul.spec"),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let o = feinsum(&[
        "record",
        "--db",
        db.to_str().unwrap(),
        "--device",
        "h100",
        "--transform",
        "t",
        "--time",
        "0",
        &fx("matmul.spec"),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fuzz_smoke_test() {
    let o = feinsum(&["fuzz", "--seed", "7", "--iterations", "100"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("fuzz: 100 iterations passed"));
    let again = feinsum(&["fuzz", "--seed", "7", "--iterations", "100"]);
    assert_eq!(o.stdout, again.stdout);
}
