//! End-to-end tests of the `pss` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn write_inputs(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let data = dir.join("data.csv");
    let mut csv = String::from("id,text\n");
    for i in 0..40 {
        csv.push_str(&format!("row-{i},document number {i}\n"));
    }
    std::fs::write(&data, csv).unwrap();
    let prompt = dir.join("prompt.txt");
    std::fs::write(&prompt, "Classify the text as 0 or 1.\n").unwrap();
    let postfix = dir.join("postfix.txt");
    std::fs::write(&postfix, "[Respond 0 or 1. Respond nothing else.]\n").unwrap();
    (data, prompt, postfix)
}

fn pss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pss"))
        .args(args)
        .output()
        .unwrap()
}

fn intra_args<'a>(
    data: &'a str,
    prompt: &'a str,
    postfix: &'a str,
    out: &'a str,
    extra: &[&'a str],
) -> Vec<&'a str> {
    let mut args = vec![
        "intra",
        "--data", data,
        "--id-column", "id",
        "--prompt", prompt,
        "--postfix", postfix,
        "--annotator", "sim",
        "--iterations", "5",
        "--sample", "15",
        "--bootstrap", "100",
        "--seed", "11",
        "--out", out,
    ];
    args.extend_from_slice(extra);
    args
}

#[test]
fn intra_run_is_reproducible_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let (data, prompt, postfix) = write_inputs(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");

    for out in [&out_a, &out_b] {
        let output = pss(&intra_args(
            data.to_str().unwrap(),
            prompt.to_str().unwrap(),
            postfix.to_str().unwrap(),
            out.to_str().unwrap(),
            &[],
        ));
        assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
        let stdout = String::from_utf8_lossy(&output.stdout);
        assert!(
            stdout.contains("planned annotation calls: 75"),
            "stdout: {stdout}"
        );
    }
    let series_a = std::fs::read(out_a.join("series.json")).unwrap();
    let series_b = std::fs::read(out_b.join("series.json")).unwrap();
    assert!(!series_a.is_empty());
    assert_eq!(series_a, series_b, "seeded reruns must produce identical series.json");

    let annotations_a = std::fs::read(out_a.join("annotations.csv")).unwrap();
    let annotations_b = std::fs::read(out_b.join("annotations.csv")).unwrap();
    assert_eq!(annotations_a, annotations_b);
}

#[test]
fn intra_rejects_single_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let (data, prompt, postfix) = write_inputs(dir.path());
    let out = dir.path().join("out");
    let mut args = intra_args(
        data.to_str().unwrap(),
        prompt.to_str().unwrap(),
        postfix.to_str().unwrap(),
        out.to_str().unwrap(),
        &[],
    );
    let pos = args.iter().position(|a| *a == "--iterations").unwrap();
    args[pos + 1] = "1";
    let output = pss(&args);
    assert_eq!(output.status.code(), Some(1));
    assert!(
        String::from_utf8_lossy(&output.stderr).contains("at least 2"),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn metrics_subcommand_reads_series() {
    let dir = tempfile::tempdir().unwrap();
    let (data, prompt, postfix) = write_inputs(dir.path());
    let out = dir.path().join("out");
    let output = pss(&intra_args(
        data.to_str().unwrap(),
        prompt.to_str().unwrap(),
        postfix.to_str().unwrap(),
        out.to_str().unwrap(),
        &[],
    ));
    assert!(output.status.success());

    let series = out.join("series.json");
    let output = pss(&["metrics", "--series", series.to_str().unwrap()]);
    assert!(output.status.success());
    let report: serde_json::Value =
        serde_json::from_slice(&output.stdout).expect("metrics output is JSON");
    assert!(report["weighted_mean"].is_number());
    assert_eq!(report["threshold_value"].as_f64(), Some(0.8));

    // The run directory's metrics.json matches the recomputation.
    let stored: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(stored, report);
}

#[test]
fn cache_resume_via_cli() {
    let dir = tempfile::tempdir().unwrap();
    let (data, prompt, postfix) = write_inputs(dir.path());
    let cache = dir.path().join("cache.jsonl");
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");

    for out in [&out_a, &out_b] {
        let output = pss(&intra_args(
            data.to_str().unwrap(),
            prompt.to_str().unwrap(),
            postfix.to_str().unwrap(),
            out.to_str().unwrap(),
            &["--cache", cache.to_str().unwrap()],
        ));
        assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    }
    assert_eq!(
        std::fs::read(out_a.join("series.json")).unwrap(),
        std::fs::read(out_b.join("series.json")).unwrap()
    );
    // The cache holds exactly the cold run's cells; the resumed run added none.
    let lines = std::fs::read_to_string(&cache).unwrap();
    assert_eq!(lines.lines().count(), 75);
}

#[test]
fn manifest_names_key_variable_but_never_a_key() {
    let dir = tempfile::tempdir().unwrap();
    let (data, prompt, postfix) = write_inputs(dir.path());
    let out = dir.path().join("out");
    // A sim run still records the full config; check no env values leak
    // anywhere in the artifacts even with a key-shaped variable set.
    let output = Command::new(env!("CARGO_BIN_EXE_pss"))
        .env("OPENAI_API_KEY", "sk-supersecret-value")
        .args(intra_args(
            data.to_str().unwrap(),
            prompt.to_str().unwrap(),
            postfix.to_str().unwrap(),
            out.to_str().unwrap(),
            &[],
        ))
        .output()
        .unwrap();
    assert!(output.status.success());
    for artifact in ["manifest.json", "series.json", "metrics.json", "annotations.csv"] {
        let content = std::fs::read_to_string(out.join(artifact)).unwrap();
        assert!(
            !content.contains("sk-supersecret-value"),
            "{artifact} leaked the API key"
        );
    }
    assert!(!String::from_utf8_lossy(&output.stdout).contains("sk-supersecret-value"));
    assert!(!String::from_utf8_lossy(&output.stderr).contains("sk-supersecret-value"));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["kind"], "intra");
    assert_eq!(manifest["rng_algorithm"], "ChaCha8");
    assert_eq!(manifest["intra"]["sample_seed"].as_u64(), Some(11));
}

#[test]
fn missing_data_file_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let (_, prompt, postfix) = write_inputs(dir.path());
    let out = dir.path().join("out");
    let missing = dir.path().join("nope.csv");
    let output = pss(&intra_args(
        missing.to_str().unwrap(),
        prompt.to_str().unwrap(),
        postfix.to_str().unwrap(),
        out.to_str().unwrap(),
        &[],
    ));
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("error"));
}
