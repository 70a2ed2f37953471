use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn untangle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_untangle"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = untangle(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn toy(dir: &Path) {
    ok(&["synth", "--preset", "toy", "--seed", "2", "--out-dir", p(dir)]);
}

#[test]
fn stats_reports_bad_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.jsonl");
    std::fs::write(
        &file,
        "{\"id\":\"a\",\"ts\":1,\"text\":\"x\"}\n{\"id\":\"b\",\"ts\":2,\"text\":\"y\"}\nnot json\n",
    )
    .unwrap();
    let out = untangle(&["stats", p(&file)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn stats_summary_fields() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    let stats: Value = serde_json::from_str(&ok(&["stats", p(&dir.path().join("thread.jsonl"))])).unwrap();
    assert_eq!(stats["message_count"], 20);
    assert!(stats["span_minutes"].as_f64().unwrap() > 0.0);
    assert!(stats["length_histogram"].is_object());
}

#[test]
fn missing_input_and_unknown_command_are_user_errors() {
    assert_eq!(untangle(&["stats", "/nonexistent/thread.jsonl"]).status.code(), Some(2));
    assert_eq!(untangle(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(untangle(&["train"]).status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# comment\nwidth = 3\n").unwrap();
    let out = untangle(&[
        "--config",
        p(&cfg),
        "train",
        "--input",
        p(&dir.path().join("thread.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("width"));
}

#[test]
fn synth_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    toy(a.path());
    toy(b.path());
    for f in ["thread.jsonl", "gold.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
}

#[test]
fn zero_learning_rate_gives_flat_loss() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    ok(&[
        "train",
        "--input",
        p(&dir.path().join("thread.jsonl")),
        "--learning-rate",
        "0",
        "--epochs",
        "3",
        "--out-dir",
        p(dir.path()),
    ]);
    let csv = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("epoch,mean_loss"));
    let losses: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(losses.len(), 3);
    assert!(losses.windows(2).all(|w| w[0] == w[1]), "{losses:?}");
}

#[test]
fn disentangle_without_checkpoint_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    let out = untangle(&[
        "disentangle",
        "--input",
        p(&dir.path().join("thread.jsonl")),
        "--out-dir",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.untg"));
}

#[test]
fn pipeline_outputs_follow_schema() {
    let dir = tempfile::tempdir().unwrap();
    let d = p(dir.path());
    toy(dir.path());
    let thread = dir.path().join("thread.jsonl");
    ok(&["train", "--input", p(&thread), "--epochs", "4", "--out-dir", d]);
    ok(&["disentangle", "--input", p(&thread), "--out-dir", d]);

    let graph: Value = serde_json::from_slice(&std::fs::read(dir.path().join("graph.json")).unwrap()).unwrap();
    let edges = graph["edges"].as_array().unwrap();
    let roots = graph["roots"].as_array().unwrap();
    assert_eq!(edges.len() + roots.len(), 20);
    for e in edges {
        assert!(e["parent"].as_u64().unwrap() < e["child"].as_u64().unwrap());
        assert!(e["w"].is_number());
    }

    let convs: Value = serde_json::from_slice(&std::fs::read(dir.path().join("conversations.json")).unwrap()).unwrap();
    let convs = convs["conversations"].as_array().unwrap();
    assert_eq!(convs.len(), roots.len());
    let total: u64 = convs.iter().map(|c| c["size"].as_u64().unwrap()).sum();
    assert_eq!(total, 20);
    for c in convs {
        assert_eq!(c["posts"].as_array().unwrap().len() as u64, c["size"].as_u64().unwrap());
        assert_eq!(c["posts"][0], c["root"]);
    }

    let dot = std::fs::read_to_string(dir.path().join("graph.dot")).unwrap();
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches(" -> ").count(), edges.len());

    let emb = std::fs::read_to_string(dir.path().join("embeddings.csv")).unwrap();
    assert!(emb.starts_with("id,e0,"));
    assert_eq!(emb.lines().count(), 21);
}

#[test]
fn eval_of_gold_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    let thread = dir.path().join("thread.jsonl");
    let gold_json: Value = serde_json::from_slice(&std::fs::read(dir.path().join("gold.json")).unwrap()).unwrap();
    let ids: Vec<String> = std::fs::read_to_string(&thread)
        .unwrap()
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l).unwrap()["id"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    let index = |id: &str| ids.iter().position(|x| x == id).unwrap();
    let mut edges = Vec::new();
    let mut has_parent = vec![false; ids.len()];
    for (child, parent) in gold_json["parents"].as_object().unwrap() {
        let c = index(child);
        has_parent[c] = true;
        edges.push(serde_json::json!({"parent": index(parent.as_str().unwrap()), "child": c, "w": 1.0}));
    }
    let roots: Vec<usize> = (0..ids.len()).filter(|&i| !has_parent[i]).collect();
    let pred = dir.path().join("pred.json");
    std::fs::write(
        &pred,
        serde_json::json!({"n": ids.len(), "edges": edges, "roots": roots}).to_string(),
    )
    .unwrap();
    let report: Value = serde_json::from_str(&ok(&[
        "eval",
        "--thread",
        p(&thread),
        "--gold",
        p(&dir.path().join("gold.json")),
        "--pred",
        p(&pred),
    ]))
    .unwrap();
    assert_eq!(report["f1"], 1.0);
    assert_eq!(report["ari"], 1.0);
    assert_eq!(report["conversation_count_delta"], 0);
}

#[test]
fn eval_rejects_graph_of_wrong_size() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    let pred = dir.path().join("pred.json");
    std::fs::write(&pred, r#"{"n": 3, "edges": [], "roots": [0, 1, 2]}"#).unwrap();
    let out = untangle(&[
        "eval",
        "--thread",
        p(&dir.path().join("thread.jsonl")),
        "--gold",
        p(&dir.path().join("gold.json")),
        "--pred",
        p(&pred),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_post_thread() {
    let dir = tempfile::tempdir().unwrap();
    let d = p(dir.path());
    let thread = dir.path().join("one.jsonl");
    std::fs::write(&thread, "{\"id\":\"solo\",\"ts\":5,\"text\":\"hello there\"}\n").unwrap();
    // One post yields no training windows.
    assert_eq!(
        untangle(&["train", "--input", p(&thread), "--out-dir", d])
            .status
            .code(),
        Some(2)
    );
    toy(dir.path());
    ok(&[
        "train",
        "--input",
        p(&dir.path().join("thread.jsonl")),
        "--epochs",
        "2",
        "--out-dir",
        d,
    ]);
    ok(&["disentangle", "--input", p(&thread), "--out-dir", d]);
    let graph: Value = serde_json::from_slice(&std::fs::read(dir.path().join("graph.json")).unwrap()).unwrap();
    assert_eq!(graph["edges"].as_array().unwrap().len(), 0);
    assert_eq!(graph["roots"], serde_json::json!([0]));
}

#[test]
fn export_intensity_columns() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    ok(&[
        "export-intensity",
        "--input",
        p(&dir.path().join("thread.jsonl")),
        "--hawkes",
        "0.2,0.2,1.0",
        "--out-dir",
        p(dir.path()),
    ]);
    let csv = std::fs::read_to_string(dir.path().join("intensity.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,raw,smoothed"));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    // Nothing precedes the first post, so the raw value is the base rate.
    assert_eq!(first[1], 0.2);
}

#[test]
fn project_degenerate_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let emb = dir.path().join("emb.csv");
    std::fs::write(&emb, "id,e0,e1\na,1,2\nb,1,2\nc,1,2\n").unwrap();
    ok(&["project", "--embeddings", p(&emb), "--out-dir", p(dir.path())]);
    let csv = std::fs::read_to_string(dir.path().join("projection.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("id,x,y,z"));
    for line in lines {
        let coords: Vec<f64> = line.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert_eq!(coords, [0.0, 0.0, 0.0]);
    }

    std::fs::write(&emb, "id,e0\na,1\nb,2\n").unwrap();
    assert_eq!(
        untangle(&["project", "--embeddings", p(&emb), "--out-dir", p(dir.path())])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    let thread = dir.path().join("thread.jsonl");
    let run = |threads: &str| {
        let out = dir.path().join(format!("t{threads}"));
        let o = p(&out);
        ok(&["train", "--input", p(&thread), "--epochs", "3", "--threads", threads, "--out-dir", o]);
        ok(&["disentangle", "--input", p(&thread), "--threads", threads, "--out-dir", o]);
        ["model.untg", "graph.json", "embeddings.csv"].map(|f| std::fs::read(out.join(f)).unwrap())
    };
    assert_eq!(run("1"), run("3"));
}
