use std::path::Path;
use std::process::{Command, Output};

fn fann(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fann"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn fann")
}

fn ok(args: &[&str], cwd: &Path) {
    let out = fann(args, cwd);
    assert!(
        out.status.success(),
        "fann {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

const SPEC: &str = r#"{
  "n": 600, "d": 8, "m": 8, "label_skew": 1.0,
  "labels_per_point": {"min": 1, "max": 3}, "cluster_count": 4,
  "label_cluster_correlation": 0.6, "seed": 3, "num_queries": 60,
  "query_labels": {"min": 1, "max": 2}, "query_label_pool": 6
}"#;

#[test]
fn full_pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("spec.json"), SPEC).unwrap();
    ok(
        &["gen-synthetic", "--spec", "spec.json", "--out", "data"],
        d,
    );
    ok(
        &[
            "ground-truth",
            "--data",
            "data",
            "--mode",
            "unfiltered",
            "--k",
            "50",
            "--out",
            "u.gt",
        ],
        d,
    );
    ok(
        &[
            "ground-truth",
            "--data",
            "data",
            "--mode",
            "filtered",
            "--k",
            "10",
            "--out",
            "f.gt",
        ],
        d,
    );
    ok(
        &[
            "learn-weights",
            "--data",
            "data",
            "--gt",
            "u.gt",
            "--epsilon",
            "0.01",
            "--alpha-grid",
            "0.1,1,10",
            "--out",
            "w.json",
        ],
        d,
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("w.json")).unwrap()).unwrap();
    assert!(report["w_m"].as_f64().unwrap() >= 0.0);
    assert_eq!(report["epsilon"].as_f64().unwrap(), 0.01);
    ok(
        &[
            "build",
            "--data",
            "data",
            "--R",
            "16",
            "--L",
            "32",
            "--alpha-prune",
            "1.2",
            "--weights",
            "w.json",
            "--out",
            "w.idx",
        ],
        d,
    );
    ok(
        &[
            "build",
            "--data",
            "data",
            "--R",
            "16",
            "--L",
            "32",
            "--alpha-prune",
            "1.2",
            "--weights",
            "zero",
            "--out",
            "z.idx",
        ],
        d,
    );
    let eval = |out: &str| {
        ok(
            &[
                "eval",
                "--data",
                "data",
                "--methods",
                "integrated,fixed,post",
                "--L-sweep",
                "10,20,50",
                "--threshold",
                "60",
                "--integrated",
                "w.idx",
                "--zero",
                "z.idx",
                "--weights",
                "w.json",
                "--gt",
                "f.gt",
                "--unfiltered-gt",
                "u.gt",
                "--deterministic",
                "--out",
                out,
            ],
            d,
        )
    };
    eval("a.csv");
    eval("b.csv");
    let a = std::fs::read_to_string(d.join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read_to_string(d.join("b.csv")).unwrap());
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(
        lines[0],
        "method,L_search,k,recall_at_k,mean_comparisons,graph_routed,brute_routed,excluded_queries,w_m,wall_ms"
    );
    // 3 methods x 3 sizes, plus 2 unfiltered series x 3 sizes
    assert_eq!(lines.len(), 1 + 9 + 6);
    for line in &lines[1..] {
        let cols: Vec<&str> = line.split(',').collect();
        let recall: f64 = cols[3].parse().unwrap();
        assert!((0.0..=1.0).contains(&recall));
        let graph: usize = cols[5].parse().unwrap();
        let brute: usize = cols[6].parse().unwrap();
        assert_eq!(graph + brute, 30, "{line}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = fann(&["gen-synthetic", "--spec", "nope.json", "--out", "x"], d);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.json"));

    std::fs::write(d.join("bad.json"), SPEC.replace("\"m\": 8", "\"m\": 0")).unwrap();
    assert_eq!(
        fann(&["gen-synthetic", "--spec", "bad.json", "--out", "x"], d)
            .status
            .code(),
        Some(2)
    );

    std::fs::write(d.join("spec.json"), SPEC).unwrap();
    ok(
        &["gen-synthetic", "--spec", "spec.json", "--out", "data"],
        d,
    );
    let bad_build = fann(
        &[
            "build",
            "--data",
            "data",
            "--R",
            "16",
            "--L",
            "8",
            "--weights",
            "zero",
            "--out",
            "g.idx",
        ],
        d,
    );
    assert_eq!(bad_build.status.code(), Some(2));
    let no_weights = fann(
        &[
            "build",
            "--data",
            "data",
            "--weights",
            "absent.json",
            "--out",
            "g.idx",
        ],
        d,
    );
    assert_eq!(no_weights.status.code(), Some(3));

    ok(
        &[
            "build",
            "--data",
            "data",
            "--weights",
            "zero",
            "--out",
            "g.idx",
        ],
        d,
    );
    let bytes = std::fs::read(d.join("g.idx")).unwrap();
    std::fs::write(d.join("cut.idx"), &bytes[..bytes.len() / 2]).unwrap();
    ok(
        &[
            "ground-truth",
            "--data",
            "data",
            "--mode",
            "filtered",
            "--k",
            "10",
            "--out",
            "f.gt",
        ],
        d,
    );
    std::fs::write(d.join("w.json"), r#"{"w_m":0.5,"alpha":1,"epsilon":0.01,"metric_kind":"euclidean","triplet_count":1,"objective":0.5,"mean_slack":0,"violation_rate":0,"validation_triplet_count":0,"learner_gt_k":100,"per_alpha":[]}"#).unwrap();
    let corrupt = fann(
        &[
            "eval",
            "--data",
            "data",
            "--integrated",
            "cut.idx",
            "--zero",
            "g.idx",
            "--weights",
            "w.json",
            "--gt",
            "f.gt",
            "--out",
            "r.csv",
        ],
        d,
    );
    assert_eq!(corrupt.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&corrupt.stderr).contains("adjacency"));
}
