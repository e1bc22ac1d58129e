use std::path::Path;

use semodel::cli::execute;
use semodel::datasets;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut argv = vec!["semodel"];
    argv.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = execute(&argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn hair_files(dir: &Path) -> (String, String) {
    let kb = dir.join("hair100.jsonl");
    let cdl = dir.join("hair.cdl");
    std::fs::write(&kb, datasets::hair100().to_jsonl()).unwrap();
    std::fs::write(&cdl, datasets::HAIR_CONCEPTS).unwrap();
    (
        kb.to_string_lossy().into_owned(),
        cdl.to_string_lossy().into_owned(),
    )
}

#[test]
fn no_arguments_is_a_usage_error() {
    let (code, out, err) = run(&[]);
    assert_eq!(code, 2);
    assert!(out.is_empty());
    assert!(err.contains("Usage"));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(run(&["mine", "--kb", "x"]).0, 2);
    assert_eq!(
        run(&["lunch", "train", "--grid", "five", "--out", "x"]).0,
        2
    );
    assert_eq!(
        run(&[
            "mine",
            "--kb",
            "a",
            "--concepts",
            "b",
            "--target",
            "T",
            "--min-p",
            "2"
        ])
        .0,
        2
    );
}

#[test]
fn missing_files_are_domain_errors() {
    let (code, _, err) = run(&["kb-load", "/nonexistent/kb.jsonl"]);
    assert_eq!(code, 1);
    let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["error"]["kind"], "Io");
}

#[test]
fn malformed_inputs_never_crash() {
    let dir = tempfile::tempdir().unwrap();
    let bad_kb = dir.path().join("bad.jsonl");
    std::fs::write(&bad_kb, "{\"cat\":\"Person\"}\nnot json\n").unwrap();
    let (code, _, err) = run(&["kb-load", bad_kb.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("\"kind\""));

    let bad_cdl = dir.path().join("bad.cdl");
    std::fs::write(&bad_cdl, "T4 := Age <\n").unwrap();
    let (code, _, err) = run(&["concepts-load", bad_cdl.to_str().unwrap()]);
    assert_eq!(code, 1);
    let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["error"]["kind"], "Syntax");
}

#[test]
fn mine_predict_explain() {
    let dir = tempfile::tempdir().unwrap();
    let (kb, cdl) = hair_files(dir.path());
    let laws = dir.path().join("laws.jsonl");
    let laws = laws.to_str().unwrap();
    let (code, out, err) = run(&[
        "mine",
        "--kb",
        &kb,
        "--concepts",
        &cdl,
        "--target",
        "T10",
        "--min-support",
        "3",
        "--out",
        laws,
    ]);
    assert_eq!(code, 0, "{err}");
    let t4 = out
        .lines()
        .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .find(|v| {
            v["premises"] == serde_json::json!([{"concept": "T4", "sign": true}])
                && v["conclusion"]["concept"] == "T10"
        })
        .expect("T4 → T10 mined");
    assert_eq!(t4["p"], "49/50");
    assert_eq!(std::fs::read_to_string(laws).unwrap(), out);

    let (code, out, _) = run(&[
        "predict",
        "--kb",
        &kb,
        "--concepts",
        &cdl,
        "--laws",
        laws,
        "--object",
        r#"{"Age":15}"#,
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let t10 = v["predicted"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["concept"] == "T10")
        .expect("T10 predicted");
    assert_eq!(t10["sign"], true);
    assert_eq!(t10["p"], "49/50");

    let (code, out, _) = run(&[
        "--format",
        "text",
        "explain",
        "--laws",
        laws,
        "--concepts",
        &cdl,
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("If Age < 16 then Occupation = Student (probability 0.98, support 50)."));

    let (code, _, err) = run(&[
        "predict",
        "--kb",
        &kb,
        "--concepts",
        &cdl,
        "--laws",
        laws,
        "--object",
        r#"{"Age":"old"}"#,
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("KindMismatch"));
}

#[test]
fn kb_and_concepts_load() {
    let dir = tempfile::tempdir().unwrap();
    let (kb, cdl) = hair_files(dir.path());
    let (code, out, _) = run(&["kb-load", &kb]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["objects"], 1126);
    let (code, out, _) = run(&["--format", "text", "concepts-load", &cdl, "--kb", &kb]);
    assert_eq!(code, 0);
    assert!(out.contains("T4: Age < 16"));
}

#[test]
fn lunch_train_eval_show_chain() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model");
    let model = model.to_str().unwrap();
    let (code, out, err) = run(&[
        "lunch",
        "train",
        "--grid",
        "3x3",
        "--episodes",
        "200",
        "--seed",
        "4",
        "--order",
        "soup,dessert",
        "--out",
        model,
    ]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["chain"]["nodes"].as_array().unwrap().len(), 2);
    for f in semodel::cli::MODEL_FILES {
        assert!(Path::new(model).join(f).exists(), "{f}");
    }

    let (code, out, _) = run(&["lunch", "show-chain", "--model", model]);
    assert_eq!(code, 0);
    assert!(out.starts_with("G_dessert <= "));
    assert!(out.contains("\n  G_soup <= "));

    let (code, out, _) = run(&[
        "lunch",
        "eval",
        "--episodes",
        "20",
        "--seed",
        "1",
        "--model",
        model,
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["success_rate"], "1/1");
}

#[test]
fn selfcheck_reports_pass() {
    let (code, out, _) = run(&["--format", "text", "selfcheck", "--cases", "30"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 3);
}
