use std::fs;
use std::path::{Path, PathBuf};

use fdrcurve::cli::run_from;

fn tmp(name: &str) -> PathBuf {
    let p = std::env::temp_dir().join(format!("fdrcurve-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&p);
    p
}

fn run(dir: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["fdrcurve".to_string(), "--run-dir".into(), dir.display().to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    run_from(argv)
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    let mut out = vec![("manifest.json".to_string(), fs::read(dir.join("manifest.json")).unwrap())];
    for f in manifest["files"].as_array().unwrap() {
        let name = f.as_str().unwrap().to_string();
        out.push((name.clone(), fs::read(dir.join(&name)).unwrap()));
    }
    out
}

#[test]
fn validate_fixtures() {
    for fx in ["gs_two_factor", "bjork_gombani"] {
        let d = tmp(&format!("validate-{fx}"));
        assert_eq!(run(&d, &["validate", fx]), 0);
        let v: serde_json::Value = serde_json::from_slice(&fs::read(d.join("validate.json")).unwrap()).unwrap();
        assert_eq!(v["passed"], true);
        assert!(v["invariance"]["max"].as_f64().unwrap() <= 1e-8);
    }
}

#[test]
fn exit_codes() {
    let d = tmp("codes");
    assert_eq!(run(&d, &["frobnicate"]), 2);
    assert_eq!(run(&d, &["simulate", "--paths", "x"]), 2);
    assert_eq!(run(&d, &["simulate", "--z0", "1,2,3"]), 2);
    assert_eq!(run(&d, &["wealth", "--strategy", "sideways"]), 2);
    assert_eq!(run(&d, &["solve", "--utility", "power:3"]), 2);
    assert_eq!(run(&d, &["simulate", "/no/such/model.json"]), 1);

    let bad = d.join("bad.json");
    let text = fdrcurve::model::GS_TWO_FACTOR.replace("\"rate\": 1.0", "\"rate\": 0.2");
    assert_ne!(text, fdrcurve::model::GS_TWO_FACTOR);
    fs::create_dir_all(&d).unwrap();
    fs::write(&bad, text).unwrap();
    assert_eq!(run(&tmp("codes-validate"), &["validate", bad.to_str().unwrap()]), 1);

    let q = d.join("dup.csv");
    fs::write(&q, "y,price\n1.0,38\n1.0,39\n").unwrap();
    assert_eq!(run(&tmp("codes-extract"), &["extract", "--quotes", q.to_str().unwrap()]), 1);
}

#[test]
fn simulate_twice_is_identical() {
    let (a, b) = (tmp("sim-a"), tmp("sim-b"));
    let args = ["simulate", "--paths", "1000", "--seed", "7", "--dt", "0.05"];
    assert_eq!(run(&a, &args), 0);
    assert_eq!(run(&b, &args), 0);
    assert_eq!(artifacts(&a), artifacts(&b));
}

#[test]
fn extract_recovers_reconstructed_state() {
    let d = tmp("extract");
    fs::create_dir_all(&d).unwrap();
    let c = d.join("curve");
    assert_eq!(run(&c, &["reconstruct", "--z", "0.25,-0.5", "--t", "0.5", "--y-max", "2", "--dy", "1"]), 0);
    let csv = fs::read_to_string(c.join("curve.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    let q = d.join("q.csv");
    fs::write(&q, format!("y,price\n{},{}\n{},{}\n", rows[0][1], rows[0][2], rows[2][1], rows[2][2])).unwrap();
    let e = d.join("state");
    assert_eq!(run(&e, &["extract", "--quotes", q.to_str().unwrap(), "--t", "0.5"]), 0);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(e.join("state.json")).unwrap()).unwrap();
    let z: Vec<f64> = v["z"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!((z[0] - 0.25).abs() < 1e-10 && (z[1] + 0.5).abs() < 1e-10, "{z:?}");
}

#[test]
fn solve_verify_and_feedback() {
    let s = tmp("solve");
    assert_eq!(run(&s, &["solve", "--nx", "41", "--nz", "11", "--steps", "40", "--stride", "10"]), 0);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(s.join("summary.json")).unwrap()).unwrap();
    assert!(summary["merton"]["value_relative_error"].as_f64().unwrap() < 1e-3);
    assert!(summary["max_residual"].as_f64().unwrap() < 1e-3);

    let (vf, _) = fdrcurve::cli::load_solution(&s).map(|(m, vf)| (vf, m)).unwrap();
    assert_eq!(vf.levels().len(), 5);

    let v = tmp("verify");
    assert_eq!(run(&v, &["verify", "--solution", s.to_str().unwrap(), "--paths", "2000", "--dt", "0.02"]), 0);
    let rep: serde_json::Value = serde_json::from_slice(&fs::read(v.join("verify.json")).unwrap()).unwrap();
    assert_eq!(rep["checks"]["value_consistent"], true);
    assert_eq!(rep["checks"]["candidate_dominates"], true);

    let w = tmp("feedback");
    let strat = format!("feedback:{}", s.display());
    assert_eq!(run(&w, &["wealth", "--strategy", &strat, "--paths", "20"]), 0);
    // A solution for another model is refused.
    assert_eq!(run(&tmp("feedback-bad"), &["wealth", "bjork_gombani", "--strategy", &strat]), 2);
}

#[test]
fn outputs_ignore_thread_count() {
    let cases: [&[&str]; 4] = [
        &["simulate", "bjork_gombani", "--paths", "300", "--seed", "11", "--dt", "0.02"],
        &["wealth", "--strategy", "rollover:0.5", "--paths", "300", "--seed", "3", "--dt", "0.05"],
        &["reconstruct", "--spde", "--dt", "0.005", "--dy", "0.01", "--y-max", "2", "--seed", "5"],
        &["solve", "--nx", "31", "--nz", "9", "--steps", "20", "--stride", "5"],
    ];
    for (k, args) in cases.iter().enumerate() {
        let mut outs = Vec::new();
        for threads in ["1", "4"] {
            let d = tmp(&format!("threads-{k}-{threads}"));
            let mut a = vec!["--threads", threads];
            a.extend_from_slice(args);
            assert_eq!(run(&d, &a), 0, "{args:?}");
            outs.push(artifacts(&d));
        }
        assert_eq!(outs[0], outs[1], "{args:?}");
    }
}
