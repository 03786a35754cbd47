use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

use emitter_coherence::models::SaturationModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

// Runs inside `dir` with relative paths, writing to `dir/out`.
fn emcoh(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emcoh"))
        .args(args)
        .current_dir(dir)
        .env("EMCOH_OUTPUT_DIR", "out")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let o = emcoh(dir, args);
    assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    let command = if args[0] == "--config" { args[2] } else { args[0] };
    let report = dir.join("out").join(format!("{command}.json"));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_schema(&v);
    v
}

fn assert_schema(v: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/report.v1.schema.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("schema compiles");
    let msgs: Vec<String> = match compiled.validate(v) {
        Ok(()) => return,
        Err(errors) => errors.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
    };
    panic!("report violates schema: {msgs:?}");
}

fn write<'a>(dir: &Path, name: &'a str, text: &str) -> &'a str {
    std::fs::write(dir.join(name), text).unwrap();
    name
}

#[test]
fn saturation_fit_recovers_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let truth = SaturationModel { i_inf: 2.4e5, p_sat: 35e-6 };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut csv = String::from("power_w,counts,sigma\n");
    for i in 1..=25 {
        let p = 4e-6 * i as f64;
        let sd = 2e3;
        let y = truth.eval(p).unwrap() + Normal::new(0.0, sd).unwrap().sample(&mut rng);
        writeln!(csv, "{p},{y},{sd}").unwrap();
    }
    let input = write(tmp.path(), "sat.csv", &csv);
    let v = ok(tmp.path(), &["fit-saturation", "--input", input]);
    let r = &v["result"];
    for (key, t) in [("i_inf", truth.i_inf), ("p_sat", truth.p_sat)] {
        let (val, sd) = (r[key]["value"].as_f64().unwrap(), r[key]["sigma"].as_f64().unwrap());
        assert!((val - t).abs() <= 2.0 * sd, "{key}: {val} ± {sd} vs {t}");
    }
    let plot = std::fs::read_to_string(tmp.path().join("out/fit-saturation.csv")).unwrap();
    assert!(plot.starts_with("x,y,band_lo,band_hi\n"));
}

#[test]
fn diffusion_rate_spot_value() {
    let tmp = tempfile::tempdir().unwrap();
    let v = ok(tmp.path(), &["diffusion-rate", "--ul", "890e6", "--ftl", "109e6", "--single", "112e6"]);
    let rate = v["result"]["rate_hz"].as_f64().unwrap();
    assert!((rate - 8.39).abs() < 0.01, "{rate}");
    assert_eq!(v["inputs"]["ul"], 890e6);
}

fn classify_csv() -> String {
    let mut csv = String::from("temperature_k,power_w,omega_hz,omega_sigma_hz,gamma_perp_hz,gamma_perp_sigma_hz\n");
    let pattern = [1.0, -1.0, -1.0, 1.0];
    for (t, m, sm) in [(5.0, 0.0, 0.1), (20.0, 0.55, 0.14), (30.0, 2.3, 0.6)] {
        let d = sm * 100e6 / 0.4f64.sqrt();
        for i in 0..4 {
            let w = 100e6 * (i + 1) as f64;
            let gp = 54.5e6 + m * w + d * pattern[i];
            writeln!(csv, "{t},{},{w},{},{gp},1.0", 1e-6 * ((i + 1) * (i + 1)) as f64, 0.01 * w).unwrap();
        }
    }
    csv
}

#[test]
fn classify_reproduces_three_regimes() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write(tmp.path(), "series.csv", &classify_csv());
    let v = ok(tmp.path(), &["classify", "--input", input]);
    let reports = v["result"]["reports"].as_array().unwrap();
    let regimes: Vec<&str> = reports.iter().map(|r| r["regime"].as_str().unwrap()).collect();
    assert_eq!(regimes, ["fully_coherent_pi_capable", "coherent_pi2_only", "overdamped"]);
    assert!(reports.iter().all(|r| r["offset_consistent_with_gamma_over_2"] == true));
    assert_eq!(v["result"]["coherence_bracket_k"], serde_json::json!([20.0, 30.0]));
}

fn pipeline(dir: &Path) {
    ok(dir, &["simulate-stream", "--omega-hz", "400e6", "--gamma-c-hz", "60e6", "--duration-s", "2e-3", "--seed", "5"]);
    ok(dir, &["correlate", "--input", "out/simulate-stream.bin", "--bin-s", "2e-10", "--max-tau-s", "2e-8"]);
    ok(dir, &["fit-g2", "--input", "out/correlate.histogram.csv"]);
    ok(dir, &["simulate-g2", "--omega-hz", "400e6", "--gamma-c-hz", "60e6", "--sigma-hz", "80e6"]);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    let (a, b) = (a.path().join("out"), b.path().join("out"));
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 9, "{names:?}");
    for n in names {
        let x = std::fs::read(a.join(&n)).unwrap();
        let y = std::fs::read(b.join(&n)).unwrap();
        assert!(x == y, "{n:?} differs");
    }
}

#[test]
fn fit_g2_reports_both_units_and_regime() {
    let tmp = tempfile::tempdir().unwrap();
    pipeline(tmp.path());
    let v: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/fit-g2.json")).unwrap()).unwrap();
    let r = &v["result"];
    let hz = r["omega"]["hz"]["value"].as_f64().unwrap();
    let rad = r["omega"]["rad_per_s"]["value"].as_f64().unwrap();
    assert!((rad / hz - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    assert!((hz / 400e6 - 1.0).abs() < 0.05, "{hz}");
    assert_eq!(r["regime"], "oscillatory");
    assert_eq!(r["model"], "g2_resonant");

    let idx = ok(tmp.path(), &["report"]);
    let commands: Vec<&str> =
        idx["result"]["entries"].as_array().unwrap().iter().map(|e| e["command"].as_str().unwrap()).collect();
    assert_eq!(commands, ["correlate", "fit-g2", "simulate-g2", "simulate-stream"]);
}

#[test]
fn temperature_series_and_gap_closing() {
    let tmp = tempfile::tempdir().unwrap();
    let kb = emitter_coherence::types::PhysicalConstants::K_B;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let series = |a: f64, b: f64, rng: &mut ChaCha8Rng| {
        let mut csv = String::from("temperature_k,value,sigma\n");
        for i in 0..30 {
            let t = 5.0 + 10.0 * i as f64;
            let y = a + b * (-(40.0 * kb) / (kb * t)).exp() + noise.sample(rng);
            writeln!(csv, "{t},{y},0.01").unwrap();
        }
        csv
    };
    let down = write(tmp.path(), "down.csv", &series(3.0, -2.0, &mut rng));
    let up = write(tmp.path(), "up.csv", &series(0.5, 1.5, &mut rng));
    let v = ok(tmp.path(), &["gap-closing", "--down", down, "--up", up]);
    let interval = v["result"]["closing"]["interval"].as_array().unwrap();
    let (lo, hi) = (interval[0].as_f64().unwrap(), interval[1].as_f64().unwrap());
    // The noiseless curves meet at exp(-40 K / T) = 5/7, about 119 K.
    assert!(lo <= 119.0 && hi >= 119.0, "[{lo}, {hi}]");

    let v = ok(tmp.path(), &["fit-linewidth", "--series", down, "--model", "boltzmann"]);
    let c = v["result"]["params"][2]["value"].as_f64().unwrap() / kb;
    assert!((c - 40.0).abs() < 5.0, "{c}");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(emcoh(d, &["--help"]).status.code(), Some(0));
    assert_eq!(emcoh(d, &["--version"]).status.code(), Some(0));
    assert_eq!(emcoh(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(emcoh(d, &["diffusion-rate", "--ul", "1"]).status.code(), Some(1));

    let o = emcoh(d, &["diffusion-rate", "--ul", "890e6", "--ftl", "-1", "--single", "112e6"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FTL"));

    let o = emcoh(d, &["simulate-stream", "--omega-hz", "1e8", "--duration-s", "1e-4"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--seed"));

    let bad = write(d, "bad.csv", "tau_s,counts\n0,1\n1e-9,x\n");
    let o = emcoh(d, &["fit-g2", "--input", bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":3:"), "{}", String::from_utf8_lossy(&o.stderr));

    // Every temperature identical: B and C cannot be told apart.
    let flat = write(d, "flat.csv", "temperature_k,value,sigma\n50,1.0,0.1\n50,1.1,0.1\n50,0.9,0.1\n50,1.0,0.1\n");
    let o = emcoh(d, &["fit-linewidth", "--series", flat, "--model", "boltzmann"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));

    let cfg = write(d, "bad.toml", "no_such_key = 1\n");
    assert_eq!(emcoh(d, &["--config", cfg, "diffusion-rate", "--ul", "1", "--ftl", "1", "--single", "1"]).status.code(), Some(1));
}

#[test]
fn config_enables_svg() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", "svg = true\nftl_linewidth_hz = 100e6\n");
    let v = ok(tmp.path(), &["--config", cfg, "simulate-g2", "--omega-hz", "300e6"]);
    assert!((v["result"]["gamma"]["hz"].as_f64().unwrap() - 100e6).abs() < 1e-3);
    let svg = std::fs::read_to_string(tmp.path().join("out/simulate-g2.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}
