use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const X0: &str = "0.3,-0.2,0.1,0.2,-0.1,0.1";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chainmpc"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn chainmpc")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Plant, design and sets for a seeded three-subsystem chain.
fn pipeline(dir: &Path) -> [PathBuf; 3] {
    ok(dir, &["generate", "--seed", "1", "--subsystems", "3", "--states", "2", "--inputs", "1", "--out", "plant.json"]);
    ok(dir, &["synth", "--plant", "plant.json", "--out", "design.json"]);
    ok(dir, &["sets", "--plant", "plant.json", "--design", "design.json", "--out", "sets.json"]);
    ["plant.json", "design.json", "sets.json"].map(|f| dir.join(f))
}

fn problem<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["--plant", "plant.json", "--design", "design.json", "--sets", "sets.json"];
    v.extend_from_slice(extra);
    v
}

#[test]
fn solve_with_oracle_reports_small_deviation() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let mut args = vec!["solve"];
    args.extend(problem(&["--x0", X0, "-N", "8", "--tol", "1e-12", "--oracle", "--out", "sol.json"]));
    let stdout = ok(dir.path(), &args);
    let line = stdout.lines().find(|l| l.starts_with("oracle max deviation:")).unwrap();
    let dev: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(dev <= 1e-6, "{line}");

    let sol: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("sol.json")).unwrap()).unwrap();
    assert_eq!(sol["status"], "converged");
    assert_eq!(sol["subsystems"].as_array().unwrap().len(), 3);
    assert_eq!(sol["subsystems"][0]["u"].as_array().unwrap().len(), 8);
    assert_eq!(sol["subsystems"][0]["x"].as_array().unwrap().len(), 8);
    assert!(sol["oracle_max_deviation"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn distributed_solve_writes_identical_solution() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let mut a = vec!["solve"];
    a.extend(problem(&["--x0", X0, "-N", "6", "--out", "central.json"]));
    ok(dir.path(), &a);
    let mut b = vec!["solve"];
    b.extend(problem(&["--x0", X0, "-N", "6", "--distributed", "--out", "dist.json"]));
    ok(dir.path(), &b);
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("central.json"), read("dist.json"));
}

#[test]
fn simulate_from_origin_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let mut args = vec!["simulate"];
    args.extend(problem(&["--x0", "0,0,0,0,0,0", "-N", "5", "-T", "10", "--out", "trace.csv"]));
    ok(dir.path(), &args);
    let mut rdr = csv::Reader::from_path(dir.path().join("trace.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["t", "x", "u", "V_N", "iters", "max_violation", "in_terminal_set"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 11);
    for r in &rows {
        for field in [&r[1], &r[2], &r[3]] {
            assert!(field.split(' ').all(|v| v.parse::<f64>().unwrap() == 0.0), "{r:?}");
        }
        assert_eq!(&r[6], "true");
    }
}

#[test]
fn simulate_from_nonzero_state_decreases_cost() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let mut args = vec!["simulate"];
    args.extend(problem(&["--x0", X0, "-N", "8", "-T", "20", "--out", "trace.csv"]));
    ok(dir.path(), &args);
    let mut rdr = csv::Reader::from_path(dir.path().join("trace.csv")).unwrap();
    let costs: Vec<f64> = rdr.records().map(|r| r.unwrap()[3].parse().unwrap()).collect();
    assert_eq!(costs.len(), 21);
    assert!(costs.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn bench_rows_have_monotone_flops_and_neighbor_logs() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["bench", "--seed", "3", "--subsystems", "2,4,8", "--log-dir", "logs", "--out", "bench.csv"]);
    let mut rdr = csv::Reader::from_path(dir.path().join("bench.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    let flops: Vec<u64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(flops.windows(2).all(|w| w[1] > w[0]), "{flops:?}");
    for (r, m) in rows.iter().zip([2usize, 4, 8]) {
        assert_eq!(r[3].parse::<usize>().unwrap(), 3 * (m - 1));
        assert_eq!(r[4].parse::<usize>().unwrap(), 3 * (m - 1));
        assert_eq!(&r[5], "0");
    }
    let mut log = csv::Reader::from_path(dir.path().join("logs/messages_M8.csv")).unwrap();
    for rec in log.records() {
        let rec = rec.unwrap();
        let (s, r): (i64, i64) = (rec[1].parse().unwrap(), rec[2].parse().unwrap());
        assert_eq!((s - r).abs(), 1);
    }
    let flops = std::fs::read_to_string(dir.path().join("logs/flops_M8.csv")).unwrap();
    assert!(flops.starts_with("row_name,predicted,measured"));
    assert_eq!(flops.lines().count(), 11);
}

#[test]
fn commands_are_deterministic_and_round_trip() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = pipeline(a.path());
    let pb = pipeline(b.path());
    for (x, y) in pa.iter().zip(&pb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    // Re-running sets on the written design reproduces the written sets.
    ok(a.path(), &["sets", "--plant", "plant.json", "--design", "design.json", "--out", "again.json"]);
    assert_eq!(
        std::fs::read(a.path().join("sets.json")).unwrap(),
        std::fs::read(a.path().join("again.json")).unwrap()
    );
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());

    assert_eq!(code(&run(dir.path(), &["solve"])), 1);
    assert_eq!(code(&run(dir.path(), &["frobnicate"])), 1);

    std::fs::write(dir.path().join("ragged.json"), r#"{"subsystems":[{"A":[[1,2],[3]],"B":[[1],[1]],"Gx":[[1,0]],"Gu":[[0]],"b":[1],"Q":[[1,0],[0,1]],"R":[[1]]}]}"#).unwrap();
    assert_eq!(code(&run(dir.path(), &["synth", "--plant", "ragged.json", "--out", "d.json"])), 2);
    let mut wrong_len = vec!["solve"];
    wrong_len.extend(problem(&["--x0", "1,2", "-N", "4", "--out", "s.json"]));
    assert_eq!(code(&run(dir.path(), &wrong_len)), 2);

    let mut far = vec!["solve"];
    far.extend(problem(&["--x0", "30,-20,10,20,-10,10", "-N", "4", "--out", "far.json"]));
    assert_eq!(code(&run(dir.path(), &far)), 3);

    assert_eq!(code(&run(dir.path(), &["synth", "--plant", "missing.json", "--out", "d.json"])), 4);
    assert_eq!(
        code(&run(dir.path(), &["synth", "--plant", "plant.json", "--out", "no/such/dir/d.json"])),
        4
    );
}
