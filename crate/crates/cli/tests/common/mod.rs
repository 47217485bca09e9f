#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_boxloss")
}

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env("BOXLOSS_THREADS", "1")
        .output()
        .expect("spawn boxloss")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 stdout")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).expect("utf-8 stderr")
}

/// A command whose output is pinned by a golden file.
pub struct GoldenCase {
    pub name: &'static str,
    pub args: &'static [&'static str],
    /// Scenario path relative to the workspace root, for `simulate`.
    pub scenario: Option<&'static str>,
}

pub const GOLDEN_CASES: &[GoldenCase] = &[
    GoldenCase {
        name: "loss_deciou",
        args: &[
            "loss", "--kind", "deciou", "--pred", "0,0,2,2", "--gt", "1,1,3,3",
        ],
        scenario: None,
    },
    GoldenCase {
        name: "loss_giou",
        args: &[
            "loss", "--kind", "giou", "--pred", "0,0,1,1", "--gt", "2,0,3,1",
        ],
        scenario: None,
    },
    GoldenCase {
        name: "loss_diou",
        args: &[
            "loss", "--kind", "diou", "--pred", "0,0,2,2", "--gt", "2,0,4,2",
        ],
        scenario: None,
    },
    GoldenCase {
        name: "loss_pushiou",
        args: &[
            "loss",
            "--kind",
            "pushiou",
            "--pred",
            "0,0,2,2",
            "--gt",
            "0,0,2,2",
            "--second-gt",
            "1,0,3,2",
            "--alpha",
            "0.5",
        ],
        scenario: None,
    },
    GoldenCase {
        name: "loss_pushdeciou",
        args: &[
            "loss",
            "--kind",
            "pushdeciou",
            "--pred",
            "0.5,0.25,3,2.5",
            "--gt",
            "0,0,2,2",
            "--second-gt",
            "1.5,0,4,2.5",
        ],
        scenario: None,
    },
    GoldenCase {
        name: "gradcheck_all",
        args: &[
            "gradcheck",
            "--kind",
            "all",
            "--samples",
            "300",
            "--seed",
            "2",
        ],
        scenario: None,
    },
    GoldenCase {
        name: "nms_demo",
        args: &[
            "nms-demo",
            "--overlap",
            "0.55",
            "--trials",
            "30",
            "--alpha",
            "0.1",
            "--seed",
            "5",
        ],
        scenario: None,
    },
    GoldenCase {
        name: "nms_demo_pair",
        args: &[
            "nms-demo",
            "--losses",
            "giou,pushdeciou",
            "--trials",
            "12",
            "--alpha",
            "0.3",
        ],
        scenario: None,
    },
    GoldenCase {
        name: "labels",
        args: &["labels", "--trials", "60", "--seed", "9"],
        scenario: None,
    },
    GoldenCase {
        name: "simulate_identity",
        args: &["simulate"],
        scenario: Some("scenarios/identity.json"),
    },
    GoldenCase {
        name: "simulate_occluded_pair",
        args: &["simulate"],
        scenario: Some("scenarios/occluded_pair.json"),
    },
    GoldenCase {
        name: "simulate_shape_mismatch_deciou",
        args: &["simulate", "--loss", "deciou"],
        scenario: Some("scenarios/shape_mismatch.json"),
    },
];

/// Runs a case and returns stdout followed by the trace file, if any.
pub fn render_case(case: &GoldenCase) -> (i32, String) {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut args: Vec<String> = case.args.iter().map(|s| s.to_string()).collect();
    let trace = dir.path().join("trace.csv");
    if let Some(s) = case.scenario {
        args.push("--scenario".into());
        args.push(workspace_root().join(s).display().to_string());
        args.push("--out".into());
        args.push(trace.display().to_string());
    }
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = run(&refs);
    let mut text = stdout(&out);
    if case.scenario.is_some() && trace.exists() {
        text.push_str("--- trace.csv\n");
        text.push_str(&std::fs::read_to_string(&trace).expect("read trace"));
    }
    (out.status.code().unwrap_or(-1), text)
}

/// Compares a case against its golden file. With `BOXLOSS_BLESS=1` the
/// golden file is rewritten instead.
pub fn check_golden(case: &GoldenCase) -> Result<(), String> {
    let (code, text) = render_case(case);
    if code != 0 {
        return Err(format!("{}: exit code {code}", case.name));
    }
    let path = golden_dir().join(format!("{}.txt", case.name));
    if std::env::var("BOXLOSS_BLESS").as_deref() == Ok("1") {
        std::fs::write(&path, &text).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected =
        std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected != text {
        let line = expected
            .lines()
            .zip(text.lines())
            .position(|(a, b)| a != b)
            .map_or_else(|| "length".to_string(), |i| format!("line {}", i + 1));
        return Err(format!(
            "{}: output differs from golden file at {line}",
            case.name
        ));
    }
    Ok(())
}
