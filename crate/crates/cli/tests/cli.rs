use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use ckt_cli::{parse_record, Record};
use proptest::prelude::*;
use tempfile::TempDir;

fn ckt() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ckt"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn copy_tree(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let dest = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_tree(&entry.path(), &dest);
        } else {
            fs::copy(entry.path(), dest).unwrap();
        }
    }
}

/// A scratch copy of the scenario fixture, built once per test.
fn built_scenario() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("scenario");
    copy_tree(&fixture("scenario"), &root);
    let out = ckt()
        .args(["build", "--manifest"])
        .arg(root.join("ckt.toml"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    (dir, root.join("build"))
}

fn query(graph: &Path, args: &[&str]) -> Output {
    ckt()
        .arg("query")
        .arg("--graph")
        .arg(graph)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn build_reports_per_source_counts() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("s");
    copy_tree(&fixture("scenario"), &root);
    let out = ckt()
        .args(["build", "--manifest"])
        .arg(root.join("ckt.toml"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    for source in [
        "source-code",
        "comment",
        "version-tracker",
        "bug-tracker",
        "trace",
    ] {
        assert!(text.contains(source), "{text}");
    }
}

#[test]
fn build_with_missing_input_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("s");
    copy_tree(&fixture("scenario"), &root);
    fs::remove_file(root.join("bugs.jsonl")).unwrap();
    let out = ckt()
        .args(["build", "--manifest"])
        .arg(root.join("ckt.toml"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bugs.jsonl"), "{}", stderr(&out));
    assert!(!root.join("build").exists());
}

#[test]
fn build_with_missing_manifest_or_bad_usage_exits_2() {
    let out = ckt()
        .args(["build", "--manifest", "/nonexistent/ckt.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = ckt().args(["build"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = ckt().args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn records_output_parses_line_by_line() {
    let (_dir, graph) = built_scenario();
    let out = query(
        &graph,
        &[
            "--format",
            "records",
            "@bugs-affecting-function(func:src/VHDLPosedge.cc#VHDLPosedge_S2)",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let records: Vec<Record> = stdout(&out)
        .lines()
        .map(|l| parse_record(l).unwrap())
        .collect();
    assert!(
        matches!(&records[0], Record::Query { mode, template: Some(t), .. } if mode == "template" && t == "bugs-affecting-function")
    );
    let rows: Vec<&Record> = records
        .iter()
        .filter(|r| matches!(r, Record::Row { .. }))
        .collect();
    let alerts = records
        .iter()
        .filter(|r| matches!(r, Record::Alert(_)))
        .count();
    assert_eq!(rows.len(), 2);
    assert_eq!(records.last(), Some(&Record::Summary { rows: 2, alerts }));
}

#[test]
fn count_prints_only_the_row_count() {
    let (_dir, graph) = built_scenario();
    let out = query(&graph, &["--count", "SELECT ?f WHERE { ?f calls ?g }"]);
    assert_eq!(out.status.code(), Some(0));
    let n: usize = stdout(&out).trim().parse().unwrap();
    let triples = fs::read_to_string(graph.join("triples.tsv")).unwrap();
    let callers: std::collections::BTreeSet<&str> = triples
        .lines()
        .filter(|l| l.split('\t').nth(1) == Some("calls"))
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    assert_eq!(n, callers.len());
}

#[test]
fn dates_in_day_month_year_order_are_accepted() {
    let (_dir, graph) = built_scenario();
    let out = query(&graph, &["all bugs fixed on 20-11-2012"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("bug:CQ/22"));
}

#[test]
fn syntax_error_exits_1_with_offset() {
    let (_dir, graph) = built_scenario();
    let text = "SELECT ?x WHERE { ?x calls }";
    let out = query(&graph, &[text]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    let brace = text.find('}').unwrap();
    assert!(err.contains(&format!("offset {brace}")), "{err}");

    let out = query(
        &graph,
        &["--format", "records", "SELECT ?x WHERE { ?x frobs ?y }"],
    );
    assert_eq!(out.status.code(), Some(1));
    match parse_record(stdout(&out).trim()).unwrap() {
        Record::Error { message, .. } => assert!(message.contains("frobs"), "{message}"),
        other => panic!("expected an error record, got {other:?}"),
    }
}

#[test]
fn missing_graph_directory_exits_2() {
    let out = query(
        Path::new("/nonexistent/graph"),
        &["SELECT ?x WHERE { ?x calls ?y }"],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = ckt()
        .args([
            "export",
            "--graph",
            "/nonexistent/graph",
            "--what",
            "triples",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/nonexistent/graph"));
}

#[test]
fn export_triples_is_the_stored_file() {
    let (dir, graph) = built_scenario();
    let out = ckt()
        .args(["export", "--what", "triples", "--graph"])
        .arg(&graph)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(out.stdout, fs::read(graph.join("triples.tsv")).unwrap());

    let file = dir.path().join("t.tsv");
    let out = ckt()
        .args(["export", "--what", "triples", "--graph"])
        .arg(&graph)
        .arg("--out")
        .arg(&file)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        fs::read(&file).unwrap(),
        fs::read(graph.join("triples.tsv")).unwrap()
    );
}

#[test]
fn top_ranked_node_is_the_most_referenced_function() {
    let (_dir, graph) = built_scenario();
    let out = ckt()
        .args(["export", "--what", "stats", "--graph"])
        .arg(&graph)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let top = stats["top_pagerank"][0]["id"].as_str().unwrap().to_string();

    // Oracle: the function with the most incoming entity triples.
    let triples = fs::read_to_string(graph.join("triples.tsv")).unwrap();
    let mut incoming: BTreeMap<&str, usize> = BTreeMap::new();
    for line in triples.lines() {
        let obj = line.split('\t').nth(2).unwrap();
        if obj.starts_with("func:") {
            *incoming.entry(obj).or_default() += 1;
        }
    }
    let most = incoming
        .iter()
        .max_by_key(|(id, n)| (**n, std::cmp::Reverse(**id)))
        .map(|(id, _)| *id)
        .unwrap();
    assert_eq!(top, most, "incoming counts: {incoming:?}");
}

fn repl(graph: &Path, input: &[u8], verbose: bool) -> Output {
    let mut cmd = ckt();
    cmd.arg("repl").arg("--graph").arg(graph);
    if verbose {
        cmd.arg("--verbose");
    }
    let mut child = cmd
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

#[test]
fn repl_answers_then_quits() {
    let (_dir, graph) = built_scenario();
    let input = b":help\n:templates\nSELECT ?f WHERE { ?f calls ?g }\n:related var:src/VHDLPosedge.cc#var1 1\nSELECT nonsense\n:quit\nSELECT ?x WHERE { ?x calls ?y }\n";
    let out = repl(&graph, input, true);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("bugs-affecting-function"));
    assert!(text.contains("func:src/main.cc#main"));
    assert!(text.contains("entities,"));
    assert!(text.contains("error:"));
    assert_eq!(
        text.matches("rows)").count() + text.matches("row)").count(),
        1,
        "nothing runs after :quit\n{text}"
    );
    assert_eq!(stderr(&out).matches("loaded graph").count(), 1);

    let quiet = repl(&graph, b":quit\n", false);
    assert!(stderr(&quiet).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]
    #[test]
    fn repl_survives_arbitrary_bytes(lines in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..40), 1..12)) {
        let (_dir, graph) = built_scenario();
        let mut input: Vec<u8> = Vec::new();
        for l in &lines {
            input.extend(l.iter().filter(|b| **b != b'\n'));
            input.push(b'\n');
        }
        let out = repl(&graph, &input, false);
        prop_assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    }
}
