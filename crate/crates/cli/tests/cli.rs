use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wassrobust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wassrobust"))
        .args(args)
        .env("WASSROBUST_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = "\
run.id = cli
run.seed = 3
output.metrics = out/metrics.csv
output.params_dir = params
data.n = 60
robust.rho = 0.5
robust.gamma0 = 2
robust.oracle_step = 0.05
trainer.algorithms = erm, spgda
trainer.iters = 20
trainer.stride = 10
trainer.batch = 16
attack.kinds = fgsm, pgd
attack.eps = 0.1
";

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn run_is_byte_reproducible_and_has_both_algorithms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "exp.cfg", SMALL);
    let metrics = dir.path().join("out/metrics.csv");

    let first = wassrobust(&["run", &cfg]);
    assert!(first.status.success(), "{}", stderr(&first));
    let a = fs::read(&metrics).unwrap();
    let second = wassrobust(&["run", &cfg]);
    assert!(second.status.success(), "{}", stderr(&second));
    assert_eq!(a, fs::read(&metrics).unwrap());

    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("run,algo,iter,objective,stationarity,clean_err,attack,eps,adv_err,ms\n"));
    // trace at 0, 10, 20, a clean row and two attack rows per algorithm
    for algo in ["erm", "spgda"] {
        let n = text.lines().filter(|l| l.split(',').nth(1) == Some(algo)).count();
        assert_eq!(n, 6, "{algo}:\n{text}");
    }

    let params = dir.path().join("params/cli-spgda.wrb");
    let eval = wassrobust(&["attack-eval", params.to_str().unwrap(), &cfg]);
    assert!(eval.status.success(), "{}", stderr(&eval));
    let out = String::from_utf8(eval.stdout).unwrap();
    assert_eq!(out.lines().count(), 1 + 3);
    assert!(out.lines().nth(1).unwrap().starts_with("cli,loaded,0,"));
}

#[test]
fn missing_dataset_fails_without_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "exp.cfg",
        "output.metrics = m.csv\ndata.source = idx\ndata.images = nope-images\ndata.labels = nope-labels\n",
    );
    let o = wassrobust(&["run", &cfg]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("does not exist"), "{}", stderr(&o));
    assert!(!dir.path().join("m.csv").exists());
}

#[test]
fn every_config_error_is_listed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "exp.cfg",
        "output.metrics = m.csv\ntrainer.alpha = 0\ntrainer.batch = 0\nattack.kinds = laser\n",
    );
    let o = wassrobust(&["run", &cfg]);
    assert!(!o.status.success());
    let e = stderr(&o);
    for needle in ["trainer.alpha", "trainer.batch", "laser"] {
        assert!(e.contains(needle), "{needle} missing from {e}");
    }
}

#[test]
fn self_checks_pass() {
    let d = wassrobust(&["verify-duality", "--instances", "10", "--seed", "4"]);
    assert!(d.status.success(), "{}", stderr(&d));
    let g = wassrobust(&["grad-check", "--trials", "3"]);
    assert!(g.status.success(), "{}", stderr(&g));
    assert!(String::from_utf8_lossy(&g.stdout).contains("failures 0"));
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_wassrobust"))
        .args(["grad-check", "--trials", "1"])
        .env("WASSROBUST_THREADS", "many")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("WASSROBUST_THREADS"));
}

#[test]
fn gen_data_then_csv_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let g = wassrobust(&["gen-data", "--n", "40", "--d", "3", "--seed", "1", "--out", data.to_str().unwrap()]);
    assert!(g.status.success(), "{}", stderr(&g));
    let cfg = write(
        dir.path(),
        "exp.cfg",
        "output.metrics = m.csv\ndata.source = csv\ndata.path = d.csv\nrobust.gamma0 = 2\nrobust.rho = 0.5\n\
         trainer.algorithms = erm\ntrainer.iters = 5\ntrainer.batch = 8\nattack.kinds = fgsm\n",
    );
    let o = wassrobust(&["run", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("m.csv").is_file());
}

#[test]
fn shipped_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/two-gaussians.conf");
    let cfg = wassrobust::experiment::ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.algorithms.len(), 6);
}
