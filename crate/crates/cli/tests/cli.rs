use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gespi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gespi"))
        .args(args)
        .env_remove("GESPI_WORKERS")
        .output()
        .expect("spawn gespi")
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn epsilon_from_delta_prints_zero() {
    let o = gespi(&[
        "oracle",
        "epsilon-from-delta",
        "--n",
        "1",
        "--N",
        "1",
        "--alpha",
        "0.5",
        "--delta",
        "0",
    ]);
    assert_eq!(stdout(&o), "0\n");
}

#[test]
fn unknown_subcommand_prints_usage() {
    let o = gespi(&["frobnicate"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage:"));
}

#[test]
fn zero_workers_rejected() {
    let o = gespi(&[
        "--workers",
        "0",
        "oracle",
        "pinsker",
        "--n",
        "3",
        "--p",
        "0.5",
        "--q",
        "0.6",
    ]);
    assert!(!o.status.success());
}

#[test]
fn bad_configs_fail_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    for (body, needle) in [
        (r#"{"alpha": 1.5}"#, "alpha"),
        (r#"{"alhpa": 0.1}"#, "alhpa"),
        ("{not json", "config"),
    ] {
        let cfg = write(dir.path(), "c.json", body);
        let o = gespi(&["simulate", "binomial", "--config", &cfg]);
        assert!(!o.status.success(), "{body}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(
            err.starts_with("error: ") && err.contains(needle),
            "{body}: {err}"
        );
    }
    let o = gespi(&["simulate", "binomial", "--config", "/nonexistent/c.json"]);
    assert!(!o.status.success());
}

#[test]
fn malformed_inputs_never_panic() {
    let dir = tempfile::tempdir().unwrap();
    let scores = write(dir.path(), "s.csv", "value\n1.0\nNaN\n");
    let pv = write(dir.path(), "p.csv", "hypothesis_id,pvalue\nh1,1.5\n");
    for args in [
        vec!["conformal", "--real", scores.as_str()],
        vec!["mt", "--real", pv.as_str()],
        vec!["test", "binomial", "--successes", "5", "--trials", "3"],
        vec![
            "oracle",
            "rank-distribution",
            "--n",
            "3",
            "--N",
            "2",
            "--r",
            "7",
        ],
        vec![
            "oracle",
            "tv-binomial",
            "--n",
            "3",
            "--p",
            "2",
            "--q",
            "0.5",
        ],
    ] {
        let o = gespi(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!String::from_utf8_lossy(&o.stderr).contains("panicked"));
    }
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"inner_trials": 20, "outer_reps": 8, "sweep": {"param": "rho_synt", "start": 0.45, "stop": 0.65, "step": 0.05}}"#,
    );
    let mut outputs = Vec::new();
    for w in ["1", "8"] {
        for fmt in ["csv", "json"] {
            let out = dir.path().join(format!("r{w}.{fmt}"));
            let o = gespi(&[
                "simulate",
                "binomial",
                "--config",
                &cfg,
                "--workers",
                w,
                "--seed",
                "11",
                "--format",
                fmt,
                "--output",
                out.to_str().unwrap(),
            ]);
            stdout(&o);
            outputs.push(fs::read(out).unwrap());
        }
    }
    assert_eq!(outputs[0], outputs[2]);
    assert_eq!(outputs[1], outputs[3]);
    // 5 sweep values x 3 methods x 1 metric
    assert_eq!(String::from_utf8_lossy(&outputs[0]).lines().count(), 16);
}

#[test]
fn env_sets_default_workers() {
    let o = Command::new(env!("CARGO_BIN_EXE_gespi"))
        .args(["oracle", "pinsker", "--n", "1", "--p", "0.5", "--q", "0.5"])
        .env("GESPI_WORKERS", "0")
        .output()
        .unwrap();
    assert!(!o.status.success());
}

#[test]
fn conformal_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let real = write(dir.path(), "r.csv", "value\n0.1\n0.5\n0.3\n0.9\n0.2\n");
    let o = gespi(&[
        "conformal",
        "--real",
        &real,
        "--synth",
        &real,
        "--alpha",
        "0.3",
        "--epsilon",
        "0.1",
    ]);
    // ceil(0.7 * 6) = 5 -> 0.9; ceil(0.6 * 6) = 4 -> 0.5; pooled ceil(0.7 * 11) = 8 -> 0.5
    assert_eq!(
        stdout(&o),
        "method,threshold\nonly_real,0.9\nguardrail,0.5\npooled,0.5\ngespi,0.5\n"
    );
}

#[test]
fn multiple_testing_table() {
    let dir = tempfile::tempdir().unwrap();
    let real = write(
        dir.path(),
        "r.csv",
        "hypothesis_id,pvalue\nh1,0.001\nh2,0.04\nh3,0.5\n",
    );
    let pooled = write(
        dir.path(),
        "p.csv",
        "hypothesis_id,pvalue\nh1,0.001\nh2,0.01\nh3,0.5\n",
    );
    let o = gespi(&[
        "mt",
        "--real",
        &real,
        "--pooled",
        &pooled,
        "--alpha",
        "0.05",
        "--epsilon",
        "0.05",
    ]);
    let text = stdout(&o);
    // guardrail at 0.1 rejects h1 and h2 (0.04 <= 0.1 / 2); pooled rejects both
    assert!(text.contains("h2,0.04,0.01,false,true"), "{text}");
    assert!(text.contains("h3,0.5,0.5,false,false"));
    let swapped = write(
        dir.path(),
        "q.csv",
        "hypothesis_id,pvalue\nh2,0.001\nh1,0.01\nh3,0.5\n",
    );
    assert!(!gespi(&["mt", "--real", &real, "--pooled", &swapped])
        .status
        .success());
}

#[test]
fn crc_and_tests_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut grid = String::from("point_id,lambda,loss\n");
    for i in 0..20 {
        for (j, l) in [0.0, 0.5, 1.0].iter().enumerate() {
            let loss = if j >= i % 3 { 0.0 } else { 1.0 };
            grid.push_str(&format!("p{i},{l},{loss}\n"));
        }
    }
    let g = write(dir.path(), "g.csv", &grid);
    let text = stdout(&gespi(&[
        "crc", "--real", &g, "--synth", &g, "--alpha", "0.4",
    ]));
    assert!(
        text.starts_with("method,lambda\n") && text.lines().count() == 5,
        "{text}"
    );

    let rec = write(
        dir.path(),
        "w.csv",
        "item_id,model_a_correct,model_b_correct,source\n1,1,0,real\n2,1,0,real\n3,0,0,real\n4,1,0,synthetic\n",
    );
    let text = stdout(&gespi(&[
        "test",
        "winrate",
        "--records",
        &rec,
        "--format",
        "json",
    ]));
    assert!(text.contains("\"method\": \"gespi\""), "{text}");

    let two = write(
        dir.path(),
        "t.csv",
        "value,group\n3,A\n4,A\n5,A\n0,B\n1,B\n2,B\n",
    );
    let text = stdout(&gespi(&[
        "test",
        "permutation",
        "--real",
        &two,
        "--n-perms",
        "200",
        "--seed",
        "1",
    ]));
    assert_eq!(text.lines().count(), 5);
    let text = stdout(&gespi(&["test", "sign", "--real", &two]));
    assert!(text.contains("only_real,"));
}
