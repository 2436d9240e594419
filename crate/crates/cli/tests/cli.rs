use std::process::{Command, Output};

fn deposition(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deposition"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn validate_accepts_builtins() {
    for model in ["asep", "zrp", "zrp-const", "bricklayers", "pap-exclusion"] {
        let o = deposition(&["validate", "--model", model]);
        assert_eq!(o.status.code(), Some(0), "{model}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn unknown_model_is_an_error() {
    let o = deposition(&["validate", "--model", "nope"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn flux_table_for_constant_rate_zero_range() {
    let o = deposition(&["flux", "--model", "zrp-const", "--rho-grid", "0.5:2:0.5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("rho,H,V"));
    let mut n = 0;
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let rho = cols[0];
        assert!((cols[1] - rho / (1.0 + rho)).abs() < 1e-8, "{line}");
        assert!((cols[2] - 1.0 / (1.0 + rho).powi(2)).abs() < 1e-6, "{line}");
        n += 1;
    }
    assert_eq!(n, 4);
}

#[test]
fn stationarity_residual_is_exactly_zero_for_asep() {
    let o = deposition(&["stationarity", "--model", "asep", "--p", "0.7", "--rho", "0.3", "--rational"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = deposition(&["stationarity", "--model", "zrp", "--rho", "1.0"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn clt_refuses_the_characteristic_direction() {
    let o = deposition(&["clt", "--model", "zrp-const", "--rho", "0", "--v", "1", "--t", "2", "--replicates", "10"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn same_seed_gives_identical_output() {
    let args = ["scaling", "--model", "asep", "--rho", "0.5", "--t", "2,4,8,16,32", "--replicates", "100", "--seed", "9"];
    let a = deposition(&args);
    let b = deposition(&args);
    assert_eq!(a.stdout, b.stdout);
    assert!(!a.stdout.is_empty());
}

#[test]
fn config_file_and_output_paths() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("lln.csv");
    let summary = dir.path().join("lln.json");
    let config = dir.path().join("lln_config.json");
    std::fs::write(
        &config,
        r#"{"id":"lln-test","model":"zrp","rho":1.0,"t_list":[2,4,8],"replicates":400,"master_seed":3}"#,
    )
    .unwrap();
    let o = deposition(&[
        "lln",
        "--config",
        config.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
        "--summary",
        summary.to_str().unwrap(),
    ]);
    assert!(o.status.code() == Some(0) || o.status.code() == Some(2));
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("experiment_id,model,rho,t,observable,value,std_error,n"));
    assert!(table.lines().skip(1).all(|l| l.starts_with("lln-test,zrp,")));
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(s["experiment_id"], "lln-test");
    assert_eq!(s["master_seed"], 3);
    assert_eq!(s["pass"].as_bool().unwrap(), o.status.code() == Some(0));
}

#[test]
fn trajectory_dumps() {
    for kind in ["ring", "pair", "walkers"] {
        let o = deposition(&[
            "dump-trajectory",
            "--model",
            "zrp",
            "--rho",
            "1.0",
            "--lambda",
            "0.75",
            "--t",
            "3",
            "--kind",
            kind,
        ]);
        assert_eq!(o.status.code(), Some(0), "{kind}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).lines().count() > 1);
    }
}
