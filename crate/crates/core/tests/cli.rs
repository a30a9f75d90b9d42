//! End-to-end checks of the command-line binary: exit codes, the
//! machine-parsable error line, and the artifacts each subcommand writes.

use std::path::Path;
use std::process::{Command, Output};

use phenoclust::synth::{generate_planted, PlantSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phenoclust"))
}

fn write_planted(dir: &Path, seed: u64) -> (std::path::PathBuf, std::path::PathBuf) {
    let planted = generate_planted(&PlantSpec {
        m: 90,
        n_informative: 3,
        n_noise: 3,
        n_clusters: 3,
        separation: 8.0,
        binary_fraction: 0.3,
        seed,
    })
    .unwrap();
    let input = dir.join("data.csv");
    let schema = dir.join("schema.toml");
    planted.dataset.write_csv(&input).unwrap();
    std::fs::write(&schema, planted.dataset.schema_toml()).unwrap();
    (input, schema)
}

fn stderr_line(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr)
        .lines()
        .last()
        .unwrap_or_default()
        .to_string()
}

#[test]
fn preprocess_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("raw.csv");
    let schema = dir.path().join("schema.toml");
    std::fs::write(
        &csv,
        "id,hr,mech,flag\np1,80,fall,1\np2,90,assault,0\np3,,fall,1\np4,100,other,0\np5,95,fall,1\n",
    )
    .unwrap();
    std::fs::write(
        &schema,
        "id = \"id\"\n[columns]\nhr = \"numeric\"\nmech = \"categorical\"\nflag = \"binary\"\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let output = bin()
        .args([
            "preprocess",
            "--input",
            csv.to_str().unwrap(),
            "--schema",
            schema.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr_line(&output));
    assert!(out.join("finalized.csv").exists());
    assert!(out.join("finalized.schema.toml").exists());
    assert!(out.join("columns.csv").exists());
    // p3 had a missing heart rate and must be gone
    let finalized = std::fs::read_to_string(out.join("finalized.csv")).unwrap();
    assert!(!finalized.contains("p3"));
    assert!(finalized.contains("p1"));
}

#[test]
fn preprocess_empty_result_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("raw.csv");
    let schema = dir.path().join("schema.toml");
    std::fs::write(&csv, "a,b\n1,\n,2\n").unwrap();
    std::fs::write(&schema, "[columns]\na = \"numeric\"\nb = \"numeric\"\n").unwrap();
    let output = bin()
        .args([
            "preprocess",
            "--input",
            csv.to_str().unwrap(),
            "--schema",
            schema.to_str().unwrap(),
            "--output",
            dir.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    let line = stderr_line(&output);
    let parsed: serde_json::Value =
        serde_json::from_str(line.trim_start_matches("error: ")).expect("machine-parsable error");
    assert_eq!(parsed["kind"], "empty_dataset");
}

#[test]
fn select_writes_selection_json() {
    let dir = tempfile::tempdir().unwrap();
    let (input, schema) = write_planted(dir.path(), 2);
    let out = dir.path().join("out");
    let output = bin()
        .args([
            "select",
            "--input",
            input.to_str().unwrap(),
            "--schema",
            schema.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
            "--n-folds",
            "2",
            "--gamma0",
            "5",
            "--gamma-step",
            "10",
            "--n-max",
            "4",
            "--max-iters",
            "150",
            "--seed",
            "1",
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr_line(&output));
    let text = std::fs::read_to_string(out.join("selection.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(parsed["final_features"].as_array().is_some());
    assert_eq!(parsed["per_fold"].as_array().unwrap().len(), 2);
    assert!(out.join("config.toml").exists());
}

#[test]
fn cluster_with_pinned_count() {
    let dir = tempfile::tempdir().unwrap();
    let (input, schema) = write_planted(dir.path(), 3);
    let out = dir.path().join("out");
    let output = bin()
        .args([
            "cluster",
            "--input",
            input.to_str().unwrap(),
            "--schema",
            schema.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
            "--features",
            "inf_num_0,inf_num_1,inf_bin_0",
            "--n-min",
            "3",
            "--n-max",
            "3",
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr_line(&output));
    let labels = std::fs::read_to_string(out.join("labels.csv")).unwrap();
    let distinct: std::collections::BTreeSet<&str> = labels
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(distinct.len(), 3);
    assert!(out.join("profiles.csv").exists());
    assert!(out.join("posthoc.csv").exists());
    assert!(out.join("dissimilarity.txt").exists());
}

#[test]
fn cluster_profiles_external_grouping() {
    let dir = tempfile::tempdir().unwrap();
    let (input, schema) = write_planted(dir.path(), 5);
    let out = dir.path().join("out");
    // external grouping by row parity, mimicking a severity-score column
    let planted = generate_planted(&PlantSpec {
        m: 90,
        n_informative: 3,
        n_noise: 3,
        n_clusters: 3,
        separation: 8.0,
        binary_fraction: 0.3,
        seed: 5,
    })
    .unwrap();
    let groups = dir.path().join("groups.csv");
    let mut doc = String::from("row_id,cluster_label,is_medoid\n");
    for (i, id) in planted.dataset.row_ids().iter().enumerate() {
        doc.push_str(&format!("{id},{},0\n", i % 2));
    }
    std::fs::write(&groups, doc).unwrap();

    let output = bin()
        .args([
            "cluster",
            "--input",
            input.to_str().unwrap(),
            "--schema",
            schema.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
            "--features",
            "0,1,2",
            "--group-labels",
            groups.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr_line(&output));
    assert!(out.join("profiles_external.csv").exists());
}

#[test]
fn necessity_single_repeat_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let (input, schema) = write_planted(dir.path(), 7);
    let out = dir.path().join("out");
    // cluster first to produce a labels file
    let status = bin()
        .args([
            "cluster",
            "--input",
            input.to_str().unwrap(),
            "--schema",
            schema.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
            "--features",
            "0,1,2,3",
            "--n-max",
            "4",
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let output = bin()
        .args([
            "necessity",
            "--input",
            input.to_str().unwrap(),
            "--schema",
            schema.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
            "--features",
            "0,1,2,3",
            "--labels",
            out.join("labels.csv").to_str().unwrap(),
            "--repeats",
            "1",
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr_line(&output));
    let flags = std::fs::read_to_string(out.join("necessity_flags.csv")).unwrap();
    assert_eq!(flags.lines().count(), 5); // header + 4 features
    let rows = std::fs::read_to_string(out.join("necessity.csv")).unwrap();
    assert_eq!(rows.lines().count(), 5); // one repeat per feature
}

#[test]
fn missing_config_is_config_error() {
    let output = bin().args(["select", "--output", "/tmp/x"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let line = stderr_line(&output);
    assert!(line.contains("config"), "unexpected error line: {line}");
}

#[test]
fn run_all_requires_explicit_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (input, schema) = write_planted(dir.path(), 9);
    let output = bin()
        .args([
            "run-all",
            "--input",
            input.to_str().unwrap(),
            "--schema",
            schema.to_str().unwrap(),
            "--output",
            dir.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_line(&output).contains("seed"));
}

#[test]
fn config_file_drives_run() {
    let dir = tempfile::tempdir().unwrap();
    let (input, schema) = write_planted(dir.path(), 8);
    let out = dir.path().join("out");
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "input = {:?}\nschema = {:?}\noutput = {:?}\nn_folds = 2\ngamma0 = 5.0\n\
             gamma_step = 10.0\nn_max = 4\nmax_iters = 150\nseed = 3\n",
            input, schema, out
        ),
    )
    .unwrap();
    let output = bin()
        .args(["select", "--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr_line(&output));
    assert!(out.join("selection.json").exists());
}
