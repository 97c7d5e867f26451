use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use transrepair_core::analytics::{EmptyListPolicy, PASS_AT_K_CSV, PATHS_CSV, TRANSITIONS_CSV};
use transrepair_core::config::EngineConfig;
use transrepair_core::rundir::{execute_run, load_run, LEDGER_FILE};

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn check_golden(name: &str, actual: &str) {
    let path = manifest("tests/golden/demo").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from golden");
}

#[test]
fn demo_run_matches_goldens() {
    let start = Instant::now();
    let cfg = EngineConfig::load(&manifest("fixtures/demo/demo.toml")).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    let summary = execute_run(&cfg, &run_dir).unwrap();
    assert_eq!(summary.message, "6/6 bugs evaluated");

    let run = load_run(&run_dir).unwrap();
    let report = run.metrics(Some(10), &[1, 2], EmptyListPolicy::Exclude).unwrap();
    let out = tmp.path().join("metrics");
    report.write_bundle(&out).unwrap();

    check_golden(LEDGER_FILE, &fs::read_to_string(run_dir.join(LEDGER_FILE)).unwrap());
    for f in [PASS_AT_K_CSV, TRANSITIONS_CSV, PATHS_CSV] {
        check_golden(f, &fs::read_to_string(out.join(f)).unwrap());
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn demo_run_is_deterministic_across_parallelism() {
    let mut cfg = EngineConfig::load(&manifest("fixtures/demo/demo.toml")).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let mut ledgers = Vec::new();
    for (i, p) in [1usize, 8].into_iter().enumerate() {
        cfg.run.parallelism = p;
        let dir = tmp.path().join(format!("r{i}"));
        execute_run(&cfg, &dir).unwrap();
        ledgers.push(fs::read(dir.join(LEDGER_FILE)).unwrap());
    }
    assert_eq!(ledgers[0], ledgers[1]);
}
