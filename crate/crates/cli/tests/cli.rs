use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hlctdp::formulations::{self, BuildOptions, Formulation};
use hlctdp::instance::example_one;
use hlctdp::oracle::{brute_force, OracleLimits};
use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hlctdp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn example_file(dir: &Path) -> PathBuf {
    let path = dir.join("example1.json");
    fs::write(&path, example_one().to_json()).unwrap();
    path
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synthetic_sweep(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "generate",
        "--synthetic",
        "25",
        "--sweep",
        "--seed",
        "3",
        "--out",
        s(out),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn example_solves_to_known_optimum() {
    let dir = TempDir::new().unwrap();
    let inst = example_file(dir.path());
    let out = dir.path().join("res");
    let o = run(&["solve", "-i", s(&inst), "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sol = json(&out.join("example1.solution.json"));
    assert_eq!(sol["status"], "optimal");
    assert!((sol["objective"].as_f64().unwrap() - 550.0).abs() < 1e-6);
    assert_eq!(json(&out.join("example1.validation.json"))["ok"], true);
    for name in ["run.csv", "log.csv", "preprocess.csv", "solve.manifest.json"] {
        assert!(out.join(format!("example1.{name}")).exists(), "{name}");
    }

    let v = run(&["validate", "-i", s(&inst), "-s", s(&out.join("example1.solution.json"))]);
    assert_eq!(code(&v), 0);

    let orc = dir.path().join("orc");
    assert_eq!(code(&run(&["oracle", "-i", s(&inst), "-o", s(&orc)])), 0);
    assert!((json(&orc.join("example1.oracle.json"))["objective"].as_f64().unwrap() - 550.0).abs() < 1e-6);
}

#[test]
fn oracle_without_consistency_reaches_relaxed_value() {
    let dir = TempDir::new().unwrap();
    let inst = example_file(dir.path());
    let orc = dir.path().join("orc");
    assert_eq!(
        code(&run(&["oracle", "-i", s(&inst), "--no-consistency", "-o", s(&orc)])),
        0
    );
    assert!((json(&orc.join("example1.oracle.json"))["objective"].as_f64().unwrap() - 600.0).abs() < 1e-6);
}

#[test]
fn imported_external_solution_is_checked() {
    let dir = TempDir::new().unwrap();
    let inst_path = example_file(dir.path());
    let inst = example_one();
    let best = brute_force(&inst, &OracleLimits::default()).unwrap();
    let opts = BuildOptions::default();
    let (model, index) = formulations::build(&inst, Formulation::F2, &opts).unwrap();
    let values = formulations::encode_solution(&inst, &best, &index, model.variables().len()).unwrap();
    let text: String = model
        .variables()
        .iter()
        .zip(&values)
        .map(|(v, x)| format!("{} {}\n", v.name, x))
        .collect();
    let file = dir.path().join("ext.sol");
    fs::write(&file, &text).unwrap();
    let out = dir.path().join("res");
    let o = run(&[
        "solve",
        "-i",
        s(&inst_path),
        "--import",
        s(&file),
        "--formulation",
        "f2",
        "-o",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!((json(&out.join("example1.solution.json"))["objective"].as_f64().unwrap() - 550.0).abs() < 1e-6);

    // Opening no hubs while serving commodities is infeasible.
    let broken: String = text
        .lines()
        .filter(|l| !l.starts_with("Y_"))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(&file, broken).unwrap();
    let o = run(&["solve", "-i", s(&inst_path), "--import", s(&file), "-o", s(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_is_complete_and_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&synthetic_sweep(&a, &[])), 0);
    fs::rename(&a, &b).unwrap();
    assert_eq!(code(&synthetic_sweep(&a, &[])), 0);
    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("hlctdp_"))
        .collect();
    names.sort();
    assert_eq!(names.len(), 54);
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n}");
    }
    let ma = json(&a.join("generate.manifest.json"));
    let mb = json(&b.join("generate.manifest.json"));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    let hashes = |m: &Value| -> Vec<Value> {
        m["outputs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|o| o["sha256"].clone())
            .collect()
    };
    assert_eq!(hashes(&ma), hashes(&mb));
    assert_eq!(ma["outputs"].as_array().unwrap().len(), 54);
}

#[test]
fn too_many_nodes_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x");
    let o = run(&[
        "generate",
        "--synthetic",
        "10",
        "--n",
        "12",
        "--alpha",
        "0.2",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 4);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("12") && err.contains("10"), "{err}");
}

#[test]
fn built_model_sizes_match_closed_form() {
    let dir = TempDir::new().unwrap();
    let inst = example_file(dir.path());
    let out = dir.path().join("m");
    for f in ["f1", "f2"] {
        assert_eq!(
            code(&run(&["build", "-i", s(&inst), "--formulation", f, "-o", s(&out)])),
            0
        );
        let size = json(&out.join(format!("example1.{f}.size.json")));
        for k in ["binaries", "continuous", "constraints"] {
            assert_eq!(size[k], size["closed_form"][k], "{f} {k}");
        }
        let mps = fs::read_to_string(out.join(format!("example1.{f}.mps"))).unwrap();
        assert!(mps.contains("OBJSENSE"));
        assert!(out.join(format!("example1.{f}.names.json")).exists());
    }
}

#[test]
fn tiny_time_limit_reports_feasible_with_gap() {
    let dir = TempDir::new().unwrap();
    let gen = dir.path().join("g");
    let o = run(&[
        "generate",
        "--synthetic",
        "25",
        "--n",
        "12",
        "--alpha",
        "0.2",
        "--levels",
        "2",
        "--demand-levels",
        "3",
        "--out",
        s(&gen),
    ]);
    assert_eq!(code(&o), 0);
    let inst = gen.join("hlctdp_a0.2_n12_L2_R3.json");
    let out = dir.path().join("res");
    let o = run(&["solve", "-i", s(&inst), "--time-limit", "0.001", "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sol = json(&out.join("hlctdp_a0.2_n12_L2_R3.solution.json"));
    assert_eq!(sol["status"], "feasible");
    assert!(sol["gap"].as_f64().unwrap() > 0.0);
    assert_eq!(json(&out.join("hlctdp_a0.2_n12_L2_R3.validation.json"))["ok"], true);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let inst = example_file(dir.path());
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&run(&["solve", "-i", s(&missing), "-o", s(dir.path())])), 4);
    assert_eq!(
        code(&run(&[
            "solve",
            "-i",
            s(&inst),
            "--no-consistency",
            "-o",
            s(dir.path())
        ])),
        4
    );
    assert_eq!(
        code(&run(&[
            "solve",
            "-i",
            s(&inst),
            "--time-limit",
            "0",
            "-o",
            s(dir.path())
        ])),
        4
    );

    let o = run(&["oracle", "-i", s(&inst), "--max-configs", "2", "-o", s(dir.path())]);
    assert_eq!(code(&o), 3);

    // A served commodity routed through a closed hub.
    let mut sol = json(&{
        let res = dir.path().join("res");
        assert_eq!(code(&run(&["solve", "-i", s(&inst), "-o", s(&res)])), 0);
        res.join("example1.solution.json")
    });
    sol["hubs"] = Value::Array(Vec::new());
    let bad = dir.path().join("bad.json");
    fs::write(&bad, sol.to_string()).unwrap();
    assert_eq!(code(&run(&["validate", "-i", s(&inst), "-s", s(&bad)])), 2);
}

#[test]
fn report_collects_rows_in_cell_order() {
    let dir = TempDir::new().unwrap();
    let gen = dir.path().join("g");
    assert_eq!(
        code(&synthetic_sweep(&gen, &["--sizes", "8", "--alphas", "0.5,0.2"])),
        0
    );
    let res = dir.path().join("res");
    for name in ["hlctdp_a0.5_n8_L1_R1.json", "hlctdp_a0.2_n8_L2_R1.json"] {
        let o = run(&["solve", "-i", s(&gen.join(name)), "--time-limit", "2", "-o", s(&res)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let rep = dir.path().join("rep");
    assert_eq!(
        code(&run(&["report", "-d", s(&gen), "--results", s(&res), "-o", s(&rep)])),
        0
    );
    let pre = fs::read_to_string(rep.join("preprocessing.csv")).unwrap();
    let pre: Vec<&str> = pre.lines().collect();
    assert_eq!(pre.len(), 13);
    assert!(pre[1].starts_with("0.2,8,1,1,"));
    assert!(pre[12].starts_with("0.5,8,2,3,"));
    let results = fs::read_to_string(rep.join("results.csv")).unwrap();
    let rows: Vec<&str> = results.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0.2,8,2,1,"));
    assert!(rows[2].starts_with("0.5,8,1,1,"));
    assert!(rep.join("report.manifest.json").exists());
}

#[test]
fn manifest_hashes_match_outputs() {
    let dir = TempDir::new().unwrap();
    let inst = example_file(dir.path());
    let out = dir.path().join("res");
    assert_eq!(code(&run(&["solve", "-i", s(&inst), "--seed", "7", "-o", s(&out)])), 0);
    let m = json(&out.join("example1.solve.manifest.json"));
    assert_eq!(m["seed"], 7);
    assert_eq!(m["command"], "solve");
    let outputs = m["outputs"].as_array().unwrap();
    assert!(!outputs.is_empty());
    let sol = outputs
        .iter()
        .find(|o| o["path"].as_str().unwrap().ends_with("solution.json"))
        .unwrap();
    let bytes = fs::read(sol["path"].as_str().unwrap()).unwrap();
    use sha2::Digest;
    assert_eq!(
        sol["sha256"].as_str().unwrap(),
        hex::encode(sha2::Sha256::digest(&bytes))
    );
}
