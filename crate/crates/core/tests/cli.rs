use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_layoutrank"))
        .args(args)
        .args(["--log", "warn"])
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().unwrap()
}

fn prepare(dir: &Path) {
    ok(
        dir,
        &[
            "synth",
            "--n",
            "120",
            "--categories",
            "2",
            "--seed",
            "3",
            "--out",
            "corpus",
            "--emit-prerendered",
        ],
    );
    ok(
        dir,
        &[
            "ingest",
            "--manifest",
            "corpus/manifest.jsonl",
            "--graphs",
            "graphs.jsonl",
        ],
    );
    ok(
        dir,
        &[
            "fit-buckets",
            "--graphs",
            "graphs.jsonl",
            "--min-count",
            "5",
            "--embedding-dim",
            "8",
            "--out",
            "schema.json",
        ],
    );
}

const DATA: [&str; 8] = [
    "--graphs",
    "graphs.jsonl",
    "--labels",
    "corpus/labels.tsv",
    "--schema",
    "schema.json",
    "--splits",
    "corpus/splits.json",
];

#[test]
fn train_score_evaluate_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    let mut train = vec!["train"];
    train.extend(DATA);
    train.extend(["--d", "8", "--layers", "2", "--epochs", "2", "--out", "run"]);
    ok(dir, &train);
    let log = std::fs::read_to_string(dir.join("run/training_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(dir.join("run/config.toml").exists());

    ok(
        dir,
        &[
            "score",
            "--graphs",
            "graphs.jsonl",
            "--checkpoint",
            "run/checkpoint.json",
            "--schema",
            "schema.json",
            "--out",
            "scores.tsv",
        ],
    );
    std::fs::write(
        dir.join("judgments.jsonl"),
        "{\"query\":\"a\",\"grades\":[3,2,0,1]}\n",
    )
    .unwrap();
    ok(
        dir,
        &[
            "evaluate",
            "--scores",
            "scores.tsv",
            "--labels",
            "corpus/labels.tsv",
            "--splits",
            "corpus/splits.json",
            "--split",
            "test",
            "--judgments",
            "judgments.jsonl",
            "--gsb",
            "5,3,2",
            "--out",
            "eval.json",
        ],
    );
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("eval.json")).unwrap()).unwrap();
    assert_eq!(report["num_items"], 12);
    assert!((report["dcg"]["mean"].as_f64().unwrap() - 9.323_465_818_787_038).abs() < 1e-9);
    assert!((report["gsb"].as_f64().unwrap() - 0.3).abs() < 1e-12);

    let rendered = ok(
        dir,
        &[
            "report",
            "--eval",
            "eval.json",
            "--baseline",
            "eval.json",
            "--json",
            "delta.json",
        ],
    );
    assert!(rendered.contains("AUC"), "{rendered}");
    let delta: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("delta.json")).unwrap()).unwrap();
    for (_, v) in delta["delta"].as_object().unwrap() {
        assert!(v.as_f64().is_none_or(|x| x == 0.0 || x.is_nan()), "{delta}");
    }

    // a schema fitted differently is refused with exit code 4
    ok(
        dir,
        &[
            "fit-buckets",
            "--graphs",
            "graphs.jsonl",
            "--min-count",
            "2",
            "--out",
            "other.json",
        ],
    );
    let mismatch = [
        "score",
        "--graphs",
        "graphs.jsonl",
        "--checkpoint",
        "run/checkpoint.json",
        "--schema",
        "other.json",
        "--out",
        "x.tsv",
    ];
    assert_eq!(code(dir, &mismatch), 4);
    assert!(!dir.join("x.tsv").exists());
}

#[test]
fn ablate_and_render() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    let mut args = vec!["ablate"];
    args.extend(DATA);
    args.extend([
        "--d",
        "8",
        "--epochs",
        "1",
        "--seeds",
        "0,1",
        "--families",
        "GAT,Virt-GIN-NC",
        "--depths",
        "1,2",
        "--sweep-family",
        "GIN",
        "--out",
        "abl",
    ]);
    ok(dir, &args);
    let text = std::fs::read_to_string(dir.join("abl/ablation.txt")).unwrap();
    assert_eq!(
        ok(dir, &["report", "--ablation", "abl/ablation.json"]),
        text
    );
    for name in ["GAT", "Virt-GIN-NC", "GIN"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn ingest_single_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("page.html"),
        "<html><body><div style=\"width:300px\"><h1>Title</h1><p>some words here</p></div></body></html>",
    )
    .unwrap();
    ok(
        dir,
        &[
            "ingest",
            "--input",
            "page.html",
            "--url",
            "https://p.example/",
            "--category",
            "news",
            "--out",
            "tree.jsonl",
            "--graphs",
            "g.jsonl",
        ],
    );
    let tree: Value = serde_json::from_str(
        std::fs::read_to_string(dir.join("tree.jsonl"))
            .unwrap()
            .lines()
            .next()
            .unwrap(),
    )
    .unwrap();
    assert_eq!(tree["url"], "https://p.example/");
    let graph: Value = serde_json::from_str(
        std::fs::read_to_string(dir.join("g.jsonl"))
            .unwrap()
            .lines()
            .next()
            .unwrap(),
    )
    .unwrap();
    assert_eq!(graph["url"], "https://p.example/");
    assert!(graph["num_nodes"].as_u64().unwrap() >= 5);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(dir, &["no-such-command"]), 2);
    assert_eq!(
        code(
            dir,
            &[
                "score",
                "--graphs",
                "missing.jsonl",
                "--checkpoint",
                "c",
                "--schema",
                "s",
                "--out",
                "o"
            ]
        ),
        3
    );
    assert_eq!(code(dir, &["synth", "--n", "0", "--out", "c"]), 2);
    assert_eq!(
        code(
            dir,
            &["synth", "--split", "0.5,0.1,0.1", "--n", "10", "--out", "c"]
        ),
        2
    );
    std::fs::write(dir.join("s.tsv"), "# layoutrank score store v1\n# schema_hash a\n# checkpoint_hash b\nurl\tscore\tmodel_version\n").unwrap();
    std::fs::write(dir.join("l.jsonl"), "").unwrap();
    assert_eq!(
        code(
            dir,
            &[
                "rerank-sim",
                "--lists",
                "l.jsonl",
                "--store",
                "s.tsv",
                "--weight",
                "1.5"
            ]
        ),
        2
    );
    assert_eq!(
        code(
            dir,
            &[
                "rerank-sim",
                "--lists",
                "l.jsonl",
                "--store",
                "s.tsv",
                "--weight",
                "0.5"
            ]
        ),
        0
    );
    std::fs::write(dir.join("v2.tsv"), "# layoutrank score store v2\n").unwrap();
    assert_eq!(
        code(
            dir,
            &[
                "rerank-sim",
                "--lists",
                "l.jsonl",
                "--store",
                "v2.tsv",
                "--weight",
                "0.5"
            ]
        ),
        4
    );
}
