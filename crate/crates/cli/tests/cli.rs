use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const QUICK: &[&str] = &[
    "--synth",
    "nodes=20",
    "--train-per-class",
    "5",
    "--val-size",
    "15",
    "--runs",
    "1",
    "--max-epochs",
    "20",
];

fn robustgcn(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robustgcn"))
        .args(args)
        .env("ROBUSTGCN_OUT", out)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn run(extra: &[&str], out: &Path) -> Output {
    let mut args = vec!["run"];
    args.extend_from_slice(QUICK);
    args.extend_from_slice(extra);
    robustgcn(&args, out)
}

/// The single subdirectory a run wrote.
fn only_dir(out: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

#[test]
fn run_writes_results_under_the_output_variable() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["--model", "gcn,gden-nlap"], out.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("# robustgcn results"));
    let dir = only_dir(out.path());
    assert_eq!(dir.file_name().unwrap().len(), 12);
    for name in [
        "results.txt",
        "results.json",
        "curves/run0_gcn.jsonl",
        "curves/run0_gden-nlap.jsonl",
    ] {
        assert!(dir.join(name).is_file(), "{name}");
    }
}

#[test]
fn configuration_errors_exit_with_one() {
    let out = tempfile::tempdir().unwrap();
    for extra in [
        &["--model", "m1"][..],
        &["--model", "m2a", "--missing", "elements", "--level", "0.2"],
        &["--model", "nonsense"],
        &["--level", "0.3"],
        &["--noise", "value", "--level", "1.5"],
        &["--noise", "value", "--missing", "nodes"],
    ] {
        let o = run(extra, out.path());
        assert_eq!(
            o.status.code(),
            Some(1),
            "{extra:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    assert_eq!(
        robustgcn(&["run", "--runs", "1"], out.path()).status.code(),
        Some(1)
    );
    assert_eq!(fs::read_dir(out.path()).unwrap().count(), 0);
}

#[test]
fn failed_runs_exit_with_two() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["--missing", "nodes", "--level", "1"], out.path());
    assert_eq!(o.status.code(), Some(2));
    // the results are still written, with the errors recorded
    let json = fs::read_to_string(only_dir(out.path()).join("results.json")).unwrap();
    assert!(json.contains("\"error\": \""));
}

#[test]
fn report_re_emits_identical_files() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(
        run(
            &[
                "--model",
                "robustgcn-n",
                "--noise",
                "value",
                "--level",
                "0.2"
            ],
            out.path()
        )
        .status
        .code(),
        Some(0)
    );
    let dir = only_dir(out.path());
    let copy = tempfile::tempdir().unwrap();
    let o = robustgcn(
        &[
            "report",
            dir.to_str().unwrap(),
            "--out",
            copy.path().to_str().unwrap(),
        ],
        out.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    for name in [
        "results.txt",
        "results.json",
        "curves/run0_robustgcn-n.jsonl",
    ] {
        assert_eq!(
            fs::read(dir.join(name)).unwrap(),
            fs::read(copy.path().join(name)).unwrap(),
            "{name}"
        );
    }
    assert_eq!(o.stdout, fs::read(dir.join("results.txt")).unwrap());
}

#[test]
fn sweep_writes_a_curve() {
    let out = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep"];
    args.extend_from_slice(QUICK);
    args.extend_from_slice(&[
        "--noise",
        "value",
        "--axis",
        "noise-level",
        "--values",
        "0,0.2",
    ]);
    let o = robustgcn(&args, out.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let dir = only_dir(out.path());
    assert!(dir
        .file_name()
        .unwrap()
        .to_str()
        .unwrap()
        .starts_with("sweep-noise_level-"));
    let csv = fs::read_to_string(dir.join("curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("value,model,mean,std\n0,gcn,"));

    let report = robustgcn(&["report", dir.to_str().unwrap()], out.path());
    assert_eq!(String::from_utf8(report.stdout).unwrap(), csv);
}
