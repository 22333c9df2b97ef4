use std::path::Path;
use std::process::{Command, Output};

use aoi_cli::{exit_status, run_experiment, Experiment, ExperimentConfig, Report};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aoi-gateway"))
}

fn run_cli(args: &[&str], config: Option<&Path>) -> Output {
    let mut cmd = bin();
    cmd.args(args);
    if let Some(p) = config {
        cmd.arg("--config").arg(p);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Header and rows of a CSV body, skipping `#` lines.
fn table(csv: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

const SMALL: &str = "[model]\nn = 4\nsensor = exp(1)\n[policy]\nrules = maf, rr\ns = 1, 4\n[run]\nhorizon_polls = 3000\nreplicates = 4\nseed = 17\n";

#[test]
fn same_seed_gives_byte_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.cfg", SMALL);
    let a = run_cli(&["compare-policies", "--no-timestamp"], Some(&cfg));
    let b = run_cli(&["compare-policies", "--no-timestamp"], Some(&cfg));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);

    let stamped = stdout(&run_cli(&["compare-policies"], Some(&cfg)));
    assert!(stamped.lines().any(|l| l.starts_with("# timestamp = ")));
    assert_eq!(table(&stamped), table(&stdout(&a)));
}

#[test]
fn out_flag_writes_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.cfg", SMALL);
    let out = dir.path().join("result.csv");
    let o = run_cli(
        &["simulate", "--no-timestamp", "--out", out.to_str().unwrap()],
        Some(&cfg),
    );
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# tool = aoi-gateway"));
    assert!(text.contains("# base_seed = 17"));
}

#[test]
fn seed_and_replicate_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.cfg", SMALL);
    let o = run_cli(
        &[
            "compare-policies",
            "--no-timestamp",
            "--seed",
            "99",
            "--replicates",
            "2",
        ],
        Some(&cfg),
    );
    let (h, rows) = table(&stdout(&o));
    for r in &rows {
        assert_eq!(r[col(&h, "seed")], "99");
        assert_eq!(r[col(&h, "replicates")], "2");
    }
}

#[test]
fn sweep_s_row_three_matches_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.cfg",
        "[model]\nn = 10\nsensor = exp(1)\nmonitor = exp(1)\n[run]\nhorizon_polls = 100000\nreplicates = 30\nseed = 5\n",
    );
    let o = run_cli(&["sweep-s", "--no-timestamp"], Some(&cfg));
    assert!(o.status.success());
    let (h, rows) = table(&stdout(&o));
    assert_eq!(
        h.join(","),
        "n,s,rule,eta1,eta2,analytic_aoi,sim_aoi,ci_lo,ci_hi,replicates,seed"
    );
    assert_eq!(rows.len(), 10);
    let row = rows.iter().find(|r| r[col(&h, "s")] == "3").unwrap();
    let analytic: f64 = row[col(&h, "analytic_aoi")].parse().unwrap();
    let sim: f64 = row[col(&h, "sim_aoi")].parse().unwrap();
    assert!((analytic - 10.2).abs() < 1e-12);
    assert!((sim - analytic).abs() / analytic <= 0.02);
}

#[test]
fn sweep_n_finds_the_square_root_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "n.cfg",
        "[model]\nsensor = det(1)\n[sweep]\nn = 16\neta1 = 1\n",
    );
    let o = run_cli(&["sweep-n", "--no-timestamp"], Some(&cfg));
    let (h, rows) = table(&stdout(&o));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][col(&h, "s_star")], "4");
    assert_eq!(rows[0][col(&h, "s_hat")], "4");
}

#[test]
fn duplicated_rule_gives_duplicate_rows() {
    let mut cfg = ExperimentConfig::parse(
        "[model]\nn = 5\nsensor = unif(0, 10)\n[policy]\nrules = maf, maf\ns = 2\n[run]\nhorizon_polls = 5000\nreplicates = 5\n",
    )
    .unwrap();
    cfg.run.seed = 3;
    let rep = run_experiment(Experiment::ComparePolicies, &cfg).unwrap();
    assert_eq!(rep.rows.len(), 2);
    assert_eq!(rep.rows[0], rep.rows[1]);
}

#[test]
fn rows_rerun_from_their_parameter_columns() {
    let base = ExperimentConfig::parse(SMALL).unwrap();
    let rep = run_experiment(Experiment::ComparePolicies, &base).unwrap();
    for i in 0..rep.rows.len() {
        let text = format!(
            "[model]\nn = {}\nsensor = exp(1)\neta1 = {}\neta2 = {}\n[policy]\nrules = {}\ns = {}\n[run]\nhorizon_polls = 3000\nreplicates = {}\nseed = {}\n",
            rep.get(i, "n").unwrap(),
            rep.get(i, "eta1").unwrap(),
            rep.get(i, "eta2").unwrap(),
            rep.get(i, "rule").unwrap(),
            rep.get(i, "s").unwrap(),
            rep.get(i, "replicates").unwrap(),
            rep.get(i, "seed").unwrap(),
        );
        let again = run_experiment(Experiment::ComparePolicies, &ExperimentConfig::parse(&text).unwrap()).unwrap();
        assert_eq!(again.rows, vec![rep.rows[i].clone()]);
    }
}

#[test]
fn analyze_reports_closed_form_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "a.cfg",
        "[model]\nn = 4\nsensor = det(1)\nmonitor = det(1)\n[policy]\ns = 2\n",
    );
    let (h, rows) = table(&stdout(&run_cli(&["analyze", "--no-timestamp"], Some(&cfg))));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][col(&h, "analytic_aoi")], "5.5");
    assert_eq!(rows[0][col(&h, "approx_aoi")], "5.5");
}

#[test]
fn verify_coupling_succeeds_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.cfg",
        "[model]\nn = 5\nsensor = exp(1)\n[policy]\nrules = minage, random\ns = 2\n[run]\ndecisions = 20000\nseeds = 3\n",
    );
    let o = run_cli(&["verify-coupling", "--no-timestamp"], Some(&cfg));
    assert_eq!(o.status.code(), Some(0));
    let (h, rows) = table(&stdout(&o));
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r[col(&h, "holds")] == "true"));
}

#[test]
fn violations_map_to_exit_three() {
    let mut rep = Report {
        experiment: Experiment::VerifyCoupling,
        metadata: vec![],
        columns: vec!["holds"],
        rows: vec![vec!["true".into()]],
        violations: vec![],
    };
    assert_eq!(exit_status(&rep), 0);
    rep.violations.push("[model]\nn = 3\n".into());
    assert_eq!(exit_status(&rep), 3);
}

#[test]
fn config_errors_exit_one_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "[model]\nn = 4\nsensor = exp(-1)\n");
    let o = run_cli(&["simulate"], Some(&cfg));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let missing = run_cli(&["simulate"], Some(&dir.path().join("nope.cfg")));
    assert_eq!(missing.status.code(), Some(1));

    let infeasible = write_config(dir.path(), "fit.cfg", "[model]\nsensor = hyperexp(mean=1, var=0.5)\n");
    let o = run_cli(&["simulate"], Some(&infeasible));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(bin().arg("bogus").output().unwrap().status.code(), Some(1));
    assert_eq!(
        bin().args(["simulate", "--seed", "x"]).output().unwrap().status.code(),
        Some(1)
    );
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "short.cfg",
        "[model]\nn = 2\nsensor = det(10)\nmonitor = det(10)\n[run]\nhorizon_time = 110\nwarmup = 100\n",
    );
    let o = run_cli(&["simulate"], Some(&cfg));
    assert_eq!(o.status.code(), Some(2));
}
