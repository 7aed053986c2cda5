use std::path::Path;
use std::process::Command;

use serde_json::Value;

use npt_cli::commands::{cmd_synthesize, cmd_verify, load_config, Overrides};
use npt_cli::{parse_config, CliError};
use npt_core::emergence::Strategy;
use npt_core::ScalarKind;

const MINIMAL: &str = r#"
[grid]
n = [16]
h = [1.0]

[operator.A]
stencil = "shifted-laplacian"

[theory.S1]
kind = "scaling"
operator = "A"

[theory.S2]
kind = "monomial"
operator = "A"
coeff = 2.0

[emergence]
target = "S1"
ambient = "S2"
"#;

fn config(name: &str) -> String {
    format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn npt(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_npt")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn body(path: &Path) -> Value {
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    doc["body"].clone()
}

#[test]
fn minimal_file_gets_defaults() {
    let cfg = parse_config(MINIMAL).unwrap();
    assert_eq!(cfg.run.samples, 100);
    assert_eq!(cfg.run.seed, 0);
    assert_eq!(cfg.run.tol, None);
    assert_eq!(cfg.tolerance(), 1e-9);
    assert_eq!(cfg.run.field, ScalarKind::Complex);
    assert_eq!(cfg.strategy, Strategy::Combinator);
    assert_eq!(cfg.target.id(), "S1");
    assert_eq!(cfg.ambient.id(), "S2");
}

#[test]
fn dense_operators_default_to_the_looser_tolerance() {
    let text = MINIMAL.replace("stencil = \"shifted-laplacian\"", "stencil = \"shifted-laplacian\"\ndense = true");
    assert_eq!(parse_config(&text).unwrap().tolerance(), 1e-7);
}

#[test]
fn dangling_operator_is_named() {
    let text = MINIMAL.replace("kind = \"monomial\"\noperator = \"A\"", "kind = \"monomial\"\noperator = \"B\"");
    match parse_config(&text) {
        Err(CliError::DanglingReference { name, section, .. }) => {
            assert_eq!(name, "B");
            assert_eq!(section, "theory.S2");
        }
        other => panic!("expected a dangling reference, got {other:?}"),
    }
}

#[test]
fn duplicate_section_reports_both_lines() {
    let text = format!("{MINIMAL}\n[theory.S1]\nkind = \"scaling\"\noperator = \"A\"\n");
    match parse_config(&text) {
        Err(CliError::DuplicateSection { name, first, second }) => {
            assert_eq!(name, "theory.S1");
            assert_eq!(first, 9);
            assert_eq!(second, 22);
        }
        other => panic!("expected a duplicate section, got {other:?}"),
    }
}

#[test]
fn syntax_errors_carry_line_numbers() {
    let text = MINIMAL.replace("h = [1.0]", "h = = [1.0]");
    match parse_config(&text) {
        Err(CliError::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let text = MINIMAL.replace("coeff = 2.0", "coef = 2.0");
    assert!(matches!(parse_config(&text), Err(CliError::Parse { line: 16, .. })));
}

#[test]
fn symbol_length_must_match_the_grid() {
    let text = MINIMAL.replace("stencil = \"shifted-laplacian\"", "symbol = [1.0, 2.0, [0.0, 1.0]]");
    assert!(matches!(parse_config(&text), Err(CliError::GridMismatch { .. })));
}

#[test]
fn cycles_are_rejected() {
    let text = MINIMAL.replace(
        "[operator.A]\nstencil = \"shifted-laplacian\"",
        "[operator.A]\nproduct = [\"B\"]\n\n[operator.B]\nsum = [{ op = \"A\" }]",
    );
    assert!(matches!(parse_config(&text), Err(CliError::Cycle(_))));
}

#[test]
fn flags_override_the_file() {
    let overrides = Overrides {
        seed: Some(42),
        samples: Some(12),
        tol: Some(1e-6),
        strategy: Some(Strategy::Oracle),
    };
    let cfg = load_config(&config("c01_monomial.toml"), &overrides).unwrap();
    assert_eq!((cfg.run.seed, cfg.run.samples, cfg.tolerance()), (42, 12, 1e-6));
    assert_eq!(cfg.strategy, Strategy::Oracle);
    let outcome = cmd_synthesize(&cfg);
    assert_eq!(outcome.exit_code, 0);
    assert!(outcome.report.body.combinator.is_none());
}

#[test]
fn exit_codes_cover_all_three_classes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let out = out.to_str().unwrap();

    let (code, _, stderr) = npt(&["synthesize", "--config", &config("c01_monomial.toml"), "--out", out]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stderr.starts_with("verified:"));
    let table = body(Path::new(out))["map_table"].clone();
    let row = &table[0];
    let eps = row["eps"][0][0].as_f64().unwrap();
    assert!((row["value"][0][0].as_f64().unwrap() - eps / 2.0).abs() <= 1e-13 * eps);

    let (code, _, _) = npt(&["synthesize", "--config", &config("c06_non_emergence.toml"), "--out", out]);
    assert_eq!(code, 2);
    let b = body(Path::new(out));
    assert!(b["oracle"]["oracle_report"]["max_residual"].as_f64().unwrap() >= 0.1);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[grid\nn = 3").unwrap();
    let (code, _, stderr) = npt(&["synthesize", "--config", bad.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stderr.contains("line 1"), "{stderr}");

    let (code, _, _) = npt(&["synthesize", "--config", &config("c01_monomial.toml"), "--strategy", "nope"]);
    assert_eq!(code, 1);
    let (code, _, _) = npt(&["synthesize", "--config", "/does/not/exist.toml"]);
    assert_eq!(code, 1);
}

#[test]
fn uncertified_hypotheses_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("odd.toml");
    let text = MINIMAL.replace(
        "kind = \"monomial\"\noperator = \"A\"\ncoeff = 2.0",
        "kind = \"polynomial\"\nvariables = [\"A\"]\nterms = [{ exponents = [1], function = \"power\", p = 2 }, { exponents = [2], function = \"power\", p = 2 }]",
    );
    std::fs::write(&path, text).unwrap();
    let (code, stdout, stderr) = npt(&["synthesize", "--config", path.to_str().unwrap()]);
    assert_eq!(code, 2, "{stderr}");
    assert!(stderr.contains("functional calculus"), "{stderr}");
    let doc: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(doc["body"]["verdict"], "infeasible");
}

#[test]
fn report_bodies_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let (code, _, _) = npt(&[
            "synthesize",
            "--config",
            &config("c10_multivariate.toml"),
            "--seed",
            "3",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        serde_json::to_string(&body(&path)).unwrap()
    };
    assert_eq!(run("a.json"), run("b.json"));
}

#[test]
fn digest_tracks_effective_parameters() {
    let a = cmd_synthesize(&load_config(&config("c01_monomial.toml"), &Overrides::default()).unwrap());
    let seeded = Overrides {
        seed: Some(1),
        ..Overrides::default()
    };
    let b = cmd_synthesize(&load_config(&config("c01_monomial.toml"), &seeded).unwrap());
    assert_eq!(a.report.body.config_digest.len(), 64);
    assert_ne!(a.report.body.config_digest, b.report.body.config_digest);
}

#[test]
fn verify_round_trip_and_perturbation() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let c = config("c01_monomial.toml");
    let (code, _, _) = npt(&["synthesize", "--config", &c, "--out", report.to_str().unwrap()]);
    assert_eq!(code, 0);

    let (code, stdout, stderr) = npt(&["verify", "--config", &c, "--map", report.to_str().unwrap(), "--seed", "99"]);
    assert_eq!(code, 0, "{stderr}");
    let doc: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(doc["body"]["command"], "verify");
    assert_eq!(doc["body"]["task"]["seed"], 99);

    let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    for row in doc["body"]["map_table"].as_array_mut().unwrap() {
        let v = row["value"][0][0].as_f64().unwrap();
        row["value"][0][0] = Value::from(v * 1.01);
    }
    let perturbed = dir.path().join("p.json");
    std::fs::write(&perturbed, doc.to_string()).unwrap();
    let (code, stdout, _) = npt(&["verify", "--config", &c, "--map", perturbed.to_str().unwrap(), "--seed", "99"]);
    assert_eq!(code, 2);
    let doc: Value = serde_json::from_str(&stdout).unwrap();
    let verdict = &doc["body"]["combinator"]["verdict"];
    assert_eq!(verdict["name"], "refuted");
    // S₂[F'(ε)] = 1.01·S₁[ε], so the relative gap is 0.01/1.01
    let r = verdict["residual"].as_f64().unwrap();
    assert!((r - 0.01 / 1.01).abs() < 1e-6, "{r}");
}

#[test]
fn empty_map_table_is_an_error() {
    let cfg = load_config(&config("c01_monomial.toml"), &Overrides::default()).unwrap();
    assert!(matches!(cmd_verify(&cfg, &[]), Err(CliError::MapTable(_))));

    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, r#"{"body": {"map_table": []}}"#).unwrap();
    let (code, _, stderr) = npt(&["verify", "--config", &config("c01_monomial.toml"), "--map", empty.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stderr.contains("map table"), "{stderr}");
}

#[test]
fn every_bundled_config_parses() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        load_config(path.to_str().unwrap(), &Overrides::default()).unwrap();
        count += 1;
    }
    assert_eq!(count, 10);
}
