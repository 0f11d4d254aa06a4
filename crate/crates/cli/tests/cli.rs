use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use msfl_cli::sweep::{replay, Summary, SUMMARY_FILE};

const SMALL: &str = r#"
clients = 4
rounds = 2
local_epochs = 2
batches_per_epoch = 2
batch_size = 8

[synthetic]
dim = 6
classes = 4
per_class = 12
eval_per_class = 4
hidden = [8]
"#;

fn msfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msfl"))
        .args(args)
        .env_remove("MSFL_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("exp.toml");
    std::fs::write(&p, format!("{extra}\n{SMALL}")).unwrap();
    p
}

fn run(cfg: &Path, out: &Path, sets: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ];
    for s in sets {
        args.extend(["--set", s]);
    }
    msfl(&args)
}

fn csvs(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

fn same_files(a: &Path, b: &Path) {
    let names = csvs(a);
    assert_eq!(names, csvs(b));
    for n in names.iter().map(String::as_str).chain([SUMMARY_FILE]) {
        assert_eq!(
            std::fs::read(a.join(n)).unwrap(),
            std::fs::read(b.join(n)).unwrap(),
            "{n} differs"
        );
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn single_cell_writes_one_log_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let out = dir.path().join("out");
    let o = run(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csvs(&out), ["minibatch_sfl_r0_lc1_s0.csv"]);

    let text = std::fs::read_to_string(out.join("minibatch_sfl_r0_lc1_s0.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# msfl-runlog v1"));
    assert!(lines.next().unwrap().starts_with("# config_hash: "));
    assert!(lines.next().unwrap().starts_with("# config: {"));
    assert!(lines.next().unwrap().starts_with("i,t,e,m,loss,accuracy,"));
    assert!(text.contains("# final_loss: "));
    assert!(!text.contains("# wall_time_s"));

    let summary = Summary::read(&out.join(SUMMARY_FILE)).unwrap();
    assert_eq!(summary.cells.len(), 1);
    assert_eq!(summary.failures(), 0);
    assert!(summary.cells[0].final_accuracy.is_some());

    let again = dir.path().join("again");
    assert!(run(&cfg, &again, &[]).status.success());
    same_files(&out, &again);
}

#[test]
fn grid_sweep_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "r_values = [0.0, 0.95]\ncuts = [1, 2]\nseeds = [0, 1, 2]",
    );
    let one = dir.path().join("one");
    let three = dir.path().join("three");
    assert!(run(&cfg, &one, &["workers=1"]).status.success());
    assert!(run(&cfg, &three, &["workers=3"]).status.success());
    let names = csvs(&one);
    assert_eq!(names.len(), 12);
    assert!(names.contains(&"minibatch_sfl_r0p95_lc2_s1.csv".to_string()));
    same_files(&one, &three);

    let summary = Summary::read(&one.join(SUMMARY_FILE)).unwrap();
    let grid = &summary.grids[0];
    assert_eq!(grid.mean_final_loss.len(), 2);
    assert!(grid.mean_final_loss.iter().flatten().all(Option::is_some));
}

#[test]
fn replay_reproduces_a_run_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "algorithms = [\"sfl_v2\", \"fedavg\"]\nr_values = [0.5]",
    );
    let out = dir.path().join("out");
    assert!(run(&cfg, &out, &[]).status.success());
    for name in csvs(&out) {
        assert!(replay(&out.join(&name)).unwrap(), "{name}");
    }

    let log = out.join("fedavg_r0p5_s0.csv");
    let tampered =
        std::fs::read_to_string(&log)
            .unwrap()
            .replacen("\"rounds\":2", "\"rounds\":3", 1);
    std::fs::write(&log, tampered).unwrap();
    assert!(replay(&log).is_err());
}

#[test]
fn wall_time_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "record_wall_time = true");
    let out = dir.path().join("out");
    assert!(run(&cfg, &out, &[]).status.success());
    let text = std::fs::read_to_string(out.join(&csvs(&out)[0])).unwrap();
    assert!(text.lines().last().unwrap().starts_with("# wall_time_s: "));
}

#[test]
fn compare_reports_zero_deltas_for_identical_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "seeds = [0, 1]");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&cfg, &a, &[]).status.success());
    assert!(run(&cfg, &b, &[]).status.success());
    let json = dir.path().join("cmp.json");
    let o = msfl(&[
        "compare",
        a.to_str().unwrap(),
        b.join(SUMMARY_FILE).to_str().unwrap(),
        "--json",
        json.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let text = report.to_string();
    assert!(text.contains("delta"), "{text}");
    for v in find_numbers_under(&report, "delta") {
        assert_eq!(v, 0.0);
    }

    let c = dir.path().join("c");
    assert!(run(&cfg, &c, &["seeds=[5]"]).status.success());
    let o = msfl(&["compare", a.to_str().unwrap(), c.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

fn find_numbers_under(v: &serde_json::Value, key_part: &str) -> Vec<f64> {
    let mut out = Vec::new();
    match v {
        serde_json::Value::Object(m) => {
            for (k, x) in m {
                if k.contains(key_part) {
                    if let Some(f) = x.as_f64() {
                        out.push(f);
                    }
                }
                out.extend(find_numbers_under(x, key_part));
            }
        }
        serde_json::Value::Array(a) => a
            .iter()
            .for_each(|x| out.extend(find_numbers_under(x, key_part))),
        _ => {}
    }
    out
}

#[test]
fn injected_faults_are_caught_by_name() {
    for (fault, check) in [
        ("fedavg-lr", "fedavg-equivalence"),
        ("halve-r", "prop1-trajectory"),
    ] {
        let o = msfl(&["check", "--only", check, "--inject", fault]);
        assert_eq!(o.status.code(), Some(1), "{fault}");
        let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(report["passed"], false);
        assert!(
            stderr(&o).contains(&format!("FAIL {check}")),
            "{}",
            stderr(&o)
        );
    }
    let o = msfl(&["check", "--only", "fedavg-equivalence"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn unknown_keys_and_bad_values_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "learning_rate = 0.1");
    let o = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));

    let cfg = config(dir.path(), "cuts = [1, 9]");
    let o = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cuts[1]"), "{}", stderr(&o));

    let cfg = config(dir.path(), "");
    let o = run(
        &cfg,
        &dir.path().join("out"),
        &["synthetic.spread=\"wide\""],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("synthetic.spread"), "{}", stderr(&o));
}

#[test]
fn output_directory_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let target = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_msfl"))
        .args(["run", "-c", cfg.to_str().unwrap()])
        .env("MSFL_OUT_DIR", &target)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(target.join(SUMMARY_FILE).exists());

    let flag = dir.path().join("from-flag");
    let o = Command::new(env!("CARGO_BIN_EXE_msfl"))
        .args([
            "run",
            "-c",
            cfg.to_str().unwrap(),
            "-o",
            flag.to_str().unwrap(),
        ])
        .env("MSFL_OUT_DIR", &target)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(flag.join(SUMMARY_FILE).exists());
}

#[test]
fn dry_run_lists_cells_without_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "seeds = [3, 3, 4]");
    let out = dir.path().join("out");
    let o = msfl(&[
        "run",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
        "--dry-run",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("# ")).count(), 2);
    assert!(
        stderr(&o).contains("seed"),
        "duplicate seeds warn: {}",
        stderr(&o)
    );
    assert!(!out.exists());
}

#[test]
fn estimate_constants_prints_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "r_values = [0.0, 1.0]");
    let o = msfl(&[
        "estimate-constants",
        "-c",
        cfg.to_str().unwrap(),
        "--probes",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r["r"].is_number() && r["seed"] == 0));
}

#[test]
fn idx_task_trains_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let n = 40u32;
    let mut images = Vec::new();
    for v in [0x0803u32, n, 2, 3] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    let mut labels = Vec::new();
    for v in [0x0801u32, n] {
        labels.extend_from_slice(&v.to_be_bytes());
    }
    for k in 0..n {
        let class = (k % 3) as u8;
        images.extend((0..6u8).map(|p| if p % 3 == class { 200 } else { 10 + p }));
        labels.push(class);
    }
    let img = dir.path().join("images.idx");
    let lab = dir.path().join("labels.idx");
    std::fs::write(&img, images).unwrap();
    std::fs::write(&lab, labels).unwrap();
    let cfg = dir.path().join("idx.toml");
    std::fs::write(
        &cfg,
        format!(
            "task = \"idx_files\"\nclients = 4\nbatch_size = 4\ncuts = [1]\n\n[idx]\nimages = {:?}\nlabels = {:?}\nhidden = [4]\n",
            img, lab
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = msfl(&[
        "run",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = Summary::read(&out.join(SUMMARY_FILE)).unwrap();
    assert_eq!(summary.failures(), 0);

    std::fs::write(&lab, [0u8, 0, 8, 1, 0, 0, 0, 1, 0]).unwrap();
    let o = msfl(&[
        "run",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("labels for"), "{}", stderr(&o));
}
