use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ptraj_cli::Summary;

fn ptraj(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptraj"))
        .current_dir(cwd)
        .env_remove("PTRAJ_OUTPUT_ROOT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_required_key_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("a.cfg"), "kind = rough-run\nN = 16\n").unwrap();
    let o = ptraj(tmp.path(), &["run", "a.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`nu`"), "{}", stderr(&o));
}

#[test]
fn unknown_key_and_bad_value_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("a.cfg"), "kind = counterexamples\nbogus = 1\n").unwrap();
    let o = ptraj(tmp.path(), &["run", "a.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"));

    fs::write(tmp.path().join("b.cfg"), "kind = rough-run\nnu = 0.01\nN = sixteen\n").unwrap();
    let o = ptraj(tmp.path(), &["run", "b.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`N`"));
}

#[test]
fn counterexamples_pass_and_verify() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.cfg"), "kind = counterexamples\noutput = ce\n").unwrap();
    let o = ptraj(tmp.path(), &["run", "c.cfg"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dir = tmp.path().join("runs/ce");
    let s = Summary::read(&dir.join("summary.json")).unwrap();
    assert!(s.all_pass());
    assert!(dir.join("counterexamples.csv").is_file());

    let v = ptraj(tmp.path(), &["verify", "runs/ce"]);
    assert_eq!(v.status.code(), Some(0), "{}", String::from_utf8_lossy(&v.stdout));
    let p = ptraj(tmp.path(), &["plot", "runs/ce"]);
    assert_eq!(p.status.code(), Some(0), "{}", stderr(&p));
    assert!(dir.join("counterexamples.svg").is_file());
}

#[test]
fn plot_on_empty_dir_lists_expected_files() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ptraj(tmp.path(), &["plot", "."]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("norms.csv"), "{}", stderr(&o));
}

#[test]
fn output_root_from_environment_and_threads_flag() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.cfg"), "kind = counterexamples\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ptraj"))
        .current_dir(tmp.path())
        .env("PTRAJ_OUTPUT_ROOT", "elsewhere")
        .args(["--threads", "1", "run", "c.cfg"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = Summary::read(&tmp.path().join("elsewhere/counterexamples/summary.json")).unwrap();
    assert_eq!(s.config.get("threads").map(String::as_str), Some("1"));
    if cfg!(feature = "parallel") {
        assert_eq!(s.threads, 1);
    }
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn taylor_green_small_grid_passes() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("tg.cfg"),
        "kind = taylor-green-oracle\nnu = 0.1\nN = 16\nT = 0.1\ndt = 0.001\n",
    )
    .unwrap();
    let o = ptraj(tmp.path(), &["run", "tg.cfg"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = ptraj(tmp.path(), &["verify", "runs/taylor-green-oracle"]);
    assert_eq!(v.status.code(), Some(0));
}

#[test]
fn blow_up_exits_3_with_partial_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("b.cfg"),
        "kind = rough-run\nnu = 0.01\nN = 16\nT = 0.1\nforcing = oscillating\nforcing_amplitude = 1e307\noutput = blow\n",
    )
    .unwrap();
    let o = ptraj(tmp.path(), &["run", "b.cfg"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let dir = tmp.path().join("runs/blow");
    let s = Summary::read(&dir.join("summary.json")).unwrap();
    assert_eq!(s.status, ptraj_cli::summary::Status::BlowUp);
    assert!(s.error.unwrap().contains("blow-up"));
    assert!(dir.join("run/steps.csv").is_file());
    assert!(dir.join("experiment.cfg").is_file());
}

#[test]
fn echoed_config_reproduces_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.cfg"), "kind = counterexamples\noutput = first\n").unwrap();
    assert_eq!(ptraj(tmp.path(), &["run", "c.cfg"]).status.code(), Some(0));
    let echo = fs::read_to_string(tmp.path().join("runs/first/experiment.cfg")).unwrap();
    fs::write(tmp.path().join("echo.cfg"), echo.replace("output = first", "output = second")).unwrap();
    assert_eq!(ptraj(tmp.path(), &["run", "echo.cfg"]).status.code(), Some(0));
    let read = |d: &str| Summary::read(&tmp.path().join(format!("runs/{d}/summary.json"))).unwrap();
    let (a, b) = (read("first"), read("second"));
    assert_eq!(a.assertions, b.assertions);
    assert_eq!(
        fs::read(tmp.path().join("runs/first/counterexamples.csv")).unwrap(),
        fs::read(tmp.path().join("runs/second/counterexamples.csv")).unwrap()
    );
}
