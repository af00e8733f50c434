use std::path::Path;
use std::process::{Command, Output};

fn gatecast(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gatecast"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn gatecast")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = gatecast(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

const CONFIG: &str = "\
# small planted run
target = data/target.csv
candidates = data/candidates.csv
labels = data/labels.csv
seed = 7
n_decoy = 4
n_noise = 30
svg = true
";

#[test]
fn synth_then_pipeline_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("run.cfg"), CONFIG).unwrap();
    ok(dir, &["synth", "--config", "run.cfg", "--output-dir", "data"]);
    let first = ok(dir, &["pipeline", "--config", "run.cfg", "--output-dir", "a", "--threads", "1"]);
    let second = ok(dir, &["pipeline", "--config", "run.cfg", "--output-dir", "b", "--threads", "4"]);
    assert_eq!(first, second);
    assert!(first.starts_with("pearson="));
    for name in [
        "ranked.csv",
        "trace_trend.csv",
        "trace_irregular.csv",
        "model.bin",
        "predictions.csv",
        "report.csv",
        "summary.csv",
        "chart.svg",
    ] {
        assert_eq!(read(&dir.join("a"), name), read(&dir.join("b"), name), "{name}");
    }
}

#[test]
fn staged_commands_agree_with_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("run.cfg"), CONFIG).unwrap();
    ok(dir, &["synth", "--config", "run.cfg", "--output-dir", "data"]);
    ok(dir, &["pipeline", "--config", "run.cfg", "--output-dir", "all"]);
    for step in ["rank", "select", "fit", "predict"] {
        ok(dir, &[step, "--config", "run.cfg", "--output-dir", "staged"]);
    }
    let all = dir.join("all");
    let staged = dir.join("staged");
    for name in ["ranked.csv", "trace_trend.csv", "trace_irregular.csv", "model.bin", "predictions.csv"] {
        assert_eq!(read(&all, name), read(&staged, name), "{name}");
    }
    let eval = ok(
        dir,
        &["evaluate", "--config", "run.cfg", "--output-dir", "staged", "--model", "staged/model.bin"],
    );
    assert!(eval.starts_with("pearson="));
    assert_eq!(read(&all, "summary.csv"), read(&staged, "summary.csv"));

    ok(dir, &["decompose", "--config", "run.cfg", "--output-dir", "dec"]);
    let json: serde_json::Value = serde_json::from_slice(&read(&dir.join("dec"), "decomposition.json")).unwrap();
    assert_eq!(json["cycle"], 52);
}

#[test]
fn exit_codes_distinguish_usage_from_domain_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(gatecast(dir, &["pipeline", "--bogus"]).status.code(), Some(2));
    assert_eq!(gatecast(dir, &["nonsense"]).status.code(), Some(2));

    let missing = gatecast(dir, &["pipeline", "--target", "nope.csv", "--candidates", "nope.csv"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error: "));

    std::fs::write(dir.join("bad.cfg"), "colour = red\n").unwrap();
    assert_eq!(gatecast(dir, &["rank", "--config", "bad.cfg"]).status.code(), Some(1));

    std::fs::write(dir.join("t.csv"), "week,rate\n0,0.1\n1,1.5\n").unwrap();
    let bad_rate = gatecast(dir, &["decompose", "--target", "t.csv"]);
    assert_eq!(bad_rate.status.code(), Some(1));
}
