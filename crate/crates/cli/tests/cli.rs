use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .display()
        .to_string()
}

fn popsize(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_popsize"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn json(args: &[&str]) -> Value {
    let mut all = args.to_vec();
    all.extend(["--output", "json"]);
    let out = popsize(&all);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    serde_json::from_str(&stdout(&out)).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn assert_fails(out: &Output, code: i32, prefix: &str) {
    assert_eq!(out.status.code(), Some(code), "stderr: {}", stderr(out));
    let err = stderr(out);
    assert_eq!(err.lines().count(), 1, "one-line reason expected: {err}");
    assert!(err.starts_with(prefix), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn zelterman_on_frequency_table() {
    let table1 = data("table1.csv");
    let args = ["fit", "--method", "zelterman", "--data", &table1, "--format", "frequency"];
    let out = popsize(&args);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("N             33664 (95% CI 28520, 38808)"), "{text}");
    assert!(text.contains("lambda        0.1047 (95% CI 0.0894, 0.1225)"), "{text}");

    let report = json(&args);
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["method"], "zelterman");
    assert_eq!(report["input"]["n_observed"], 3346);
    assert_eq!(report["input"]["frequencies"]["1"], 3114);
    let n_hat = report["estimate"]["n_hat"].as_f64().unwrap();
    assert!((n_hat - 33_664.0).abs() < 5.0);
    assert_eq!(report["estimate"]["rounded"]["n_hat"], "33664");
    assert!(report["model"].is_null());
}

#[test]
fn text_numbers_appear_in_json() {
    let heroin = data("table3.csv");
    let table1 = data("table1.csv");
    let cases: Vec<Vec<&str>> = vec![
        vec!["fit", "--method", "ztpoisson", "--data", &table1, "--format", "frequency"],
        vec!["fit", "--method", "chao", "--data", &table1, "--format", "frequency"],
        vec!["fit", "--method", "zelterman-reg", "--data", &heroin, "--count-col", "contacts", "--covariates", "age"],
        vec!["compare", "--method", "ztpoisson-reg", "--data", &heroin, "--count-col", "contacts", "--models", ";age"],
        vec!["simulate", "--n-pop", "2000", "--lambda", "0.7", "--seeds", "3", "--method", "zelterman,chao"],
    ];
    for args in cases {
        let text = stdout(&popsize(&args));
        let report = json(&args).to_string();
        let text = text.replace("95% CI", "");
        let numbers = text
            .split(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-'))
            .filter(|t| t.chars().any(|c| c.is_ascii_digit()) && t.parse::<f64>().is_ok());
        for token in numbers {
            assert!(report.contains(token), "{args:?}: '{token}' missing from JSON");
        }
    }
}

#[test]
fn json_is_stable_across_runs() {
    let heroin = data("table3.csv");
    let args = ["fit", "--method", "zelterman-reg", "--data", &heroin, "--count-col", "contacts", "--covariates", "age", "--output", "json"];
    assert_eq!(popsize(&args).stdout, popsize(&args).stdout);
}

#[test]
fn covariate_zelterman_on_heroin_units() {
    let heroin = data("table3.csv");
    let report = json(&["fit", "--method", "zelterman-reg", "--data", &heroin, "--count-col", "contacts", "--covariates", "age"]);
    let n_hat = report["estimate"]["n_hat"].as_f64().unwrap();
    let ll = report["model"]["log_lik"].as_f64().unwrap();
    assert!((n_hat - 505.0).abs() < 2.0, "{n_hat}");
    assert!((ll + 93.86).abs() < 0.02, "{ll}");
    assert_eq!(report["model"]["n_fit"], 160);
    let coefs = report["model"]["coefficients"].as_array().unwrap();
    assert_eq!(coefs[0]["name"], "(Intercept)");
    assert_eq!(coefs[1]["name"], "age");
    assert!(coefs[1]["std_error"].as_f64().unwrap() > 0.0);
}

#[test]
fn homogeneous_method_on_individual_file() {
    let heroin = data("table3.csv");
    let report = json(&["fit", "--method", "chao", "--data", &heroin, "--count-col", "contacts"]);
    let n_hat = report["estimate"]["n_hat"].as_f64().unwrap();
    assert!((n_hat - (268.0 + 116.0 * 116.0 / 88.0)).abs() < 1e-9);
}

#[test]
fn compare_heroin_null_then_age() {
    let heroin = data("table3.csv");
    let report = json(&["compare", "--method", "zelterman-reg", "--data", &heroin, "--count-col", "contacts", "--models", ";age"]);
    let models = report["models"].as_array().unwrap();
    assert_eq!(models.len(), 2);
    assert_eq!(models[0]["model"]["label"], "Null");
    assert!(models[0]["lrt"].is_null());
    let lrt = &models[1]["lrt"];
    assert_eq!(lrt["df"], 1);
    assert!((lrt["statistic"].as_f64().unwrap() - 0.50).abs() < 0.01);
    assert!((lrt["p_value"].as_f64().unwrap() - 0.48).abs() < 0.01);

    let single = json(&["compare", "--method", "zelterman-reg", "--data", &heroin, "--count-col", "contacts", "--models", "age"]);
    assert_eq!(single["models"].as_array().unwrap().len(), 1);
    assert!(single["models"][0]["lrt"].is_null());
}

#[test]
fn compare_with_categorical_schema() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("count,gender,nation\n");
    let rows = [
        (1, "male", "Turkey"), (1, "female", "Asia"), (2, "male", "Surinam"), (1, "male", "Asia"),
        (3, "female", "Turkey"), (1, "male", "Surinam"), (2, "female", "Turkey"), (1, "male", "Turkey"),
        (1, "female", "Surinam"), (2, "male", "Asia"), (1, "female", "Asia"), (1, "male", "Turkey"),
        (4, "male", "Surinam"), (1, "female", "Turkey"), (2, "male", "Turkey"), (1, "female", "Surinam"),
        (1, "male", "Asia"), (2, "female", "Asia"), (1, "male", "Surinam"), (1, "female", "Turkey"),
    ];
    for (c, g, n) in rows {
        csv.push_str(&format!("{c},{g},{n}\n"));
    }
    let path = write(dir.path(), "units.csv", &csv);
    let schema = write(
        dir.path(),
        "schema.toml",
        "[[covariate]]\nname = \"gender\"\nkind = \"categorical\"\nlevels = [\"female\", \"male\"]\nreference = \"female\"\n",
    );
    let report = json(&[
        "compare", "--method", "zelterman-reg", "--data", &path, "--schema", &schema,
        "--categorical", "nation=Turkey|Asia|Surinam:Surinam", "--models", "gender;gender,nation",
    ]);
    let models = report["models"].as_array().unwrap();
    let names: Vec<&str> = models[1]["model"]["coefficients"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["(Intercept)", "gender=male", "nation=Turkey", "nation=Asia"]);
    assert_eq!(models[1]["lrt"]["df"], 2);
}

#[test]
fn immigrant_schema_file_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("count,gender,age,nation,reason\n");
    let nations = ["Turkey", "North Africa", "Rest Africa", "Surinam", "Asia", "\"America, Australia\""];
    for i in 0..60usize {
        let count = [1, 1, 2, 1, 3, 1, 2][i % 7];
        let gender = ["female", "male"][i % 2];
        let age = ["<40", ">40"][(i / 2) % 2];
        let reason = ["other", "illegal"][(i / 3) % 2];
        csv.push_str(&format!("{count},{gender},{age},{},{reason}\n", nations[i % 6]));
    }
    let path = write(dir.path(), "immigrants.csv", &csv);
    let schema = data("immigrant_schema.toml");
    let report = json(&["compare", "--method", "ztpoisson-reg", "--data", &path, "--schema", &schema, "--models", "gender;gender,age"]);
    assert_eq!(report["models"].as_array().unwrap().len(), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let f2_zero = write(dir.path(), "f2zero.csv", "count,freq\n1,10\n3,4\n");
    let out = popsize(&["fit", "--method", "chao", "--data", &f2_zero, "--format", "frequency"]);
    assert_fails(&out, 4, "error: degenerate-data: f2=0");

    let zero = write(dir.path(), "zero.csv", "contacts,age\n1,23\n0,25\n");
    let out = popsize(&["fit", "--method", "zelterman", "--data", &zero, "--count-col", "contacts"]);
    assert_fails(&out, 3, "error: validation: line 3");

    let missing = dir.path().join("absent.csv").display().to_string();
    let out = popsize(&["fit", "--method", "zelterman", "--data", &missing]);
    assert_fails(&out, 3, "error: io:");

    let table1 = data("table1.csv");
    let out = popsize(&["fit", "--method", "zelterman-reg", "--data", &table1, "--format", "frequency"]);
    assert_fails(&out, 2, "error: usage:");
    let out = popsize(&["fit", "--method", "poisson", "--data", &table1]);
    assert_fails(&out, 2, "error: usage:");
    let out = popsize(&["fit", "--data", &table1]);
    assert_fails(&out, 2, "error: usage:");
    let out = popsize(&["fit", "--method", "chao", "--data", &table1, "--format", "frequency", "--covariates", "age"]);
    assert_fails(&out, 2, "error: usage:");

    let heroin = data("table3.csv");
    let out = popsize(&["fit", "--method", "zelterman-reg", "--data", &heroin, "--count-col", "contacts", "--covariates", "weight"]);
    assert_fails(&out, 3, "error: schema:");
    let out = popsize(&["compare", "--method", "zelterman-reg", "--data", &heroin, "--count-col", "contacts", "--models", "age;"]);
    assert_fails(&out, 2, "error: usage: models are not nested");
    let out = popsize(&["compare", "--method", "chao", "--data", &heroin, "--count-col", "contacts", "--models", "age"]);
    assert_fails(&out, 2, "error: usage:");

    let ones = write(dir.path(), "ones.csv", "count,x\n1,0\n1,1\n2,0\n1,1\n2,0\n1,1\n");
    let out = popsize(&["fit", "--method", "zelterman-reg", "--data", &ones, "--covariates", "x"]);
    assert_fails(&out, 4, "error: separation:");

    let out = popsize(&["simulate", "--n-pop", "100", "--mixture", "0.9:0.2,0.2:3"]);
    assert_fails(&out, 2, "error: usage:");
    let out = popsize(&["simulate", "--n-pop", "100", "--lambda", "-1"]);
    assert_fails(&out, 4, "error: domain:");
}

#[test]
fn clamping_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    // doubletons thin out as x grows, so the far-out unit gets a vanishing inclusion probability
    let mut csv = String::from("count,x\n");
    for (c, x) in [(2, 0.0), (2, 0.1), (1, 0.2), (2, 0.3), (1, 0.4), (1, 0.5), (2, 0.6), (1, 0.7), (1, 0.8), (1, 0.9), (3, 1000.0)] {
        csv.push_str(&format!("{c},{x}\n"));
    }
    let path = write(dir.path(), "extreme.csv", &csv);
    let args = ["fit", "--method", "zelterman-reg", "--data", &path, "--covariates", "x"];
    let text = stdout(&popsize(&args));
    assert!(text.contains("warning: inclusion probability clamped at 1e-12 for 1 units"), "{text}");
    let report = json(&args);
    assert_eq!(report["warnings"].as_array().unwrap().len(), 2);
}

#[test]
fn simulate_is_reproducible() {
    let args = ["simulate", "--n-pop", "10000", "--lambda", "0.5", "--seeds", "1", "--seed-base", "42"];
    let a = popsize(&args);
    let b = popsize(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("chacha8-stream-per-unit-v1"));
}

#[test]
fn simulate_coverage_and_contamination() {
    let report = json(&["simulate", "--n-pop", "10000", "--lambda", "0.5", "--seeds", "200", "--method", "zelterman"]);
    let coverage = report["summary"][0]["coverage"].as_f64().unwrap();
    assert!((0.93..=0.97).contains(&coverage), "{coverage}");

    let report = json(&["simulate", "--n-pop", "10000", "--mixture", "0.9:0.2,0.1:3.0", "--seeds", "50", "--method", "ztpoisson,zelterman"]);
    let ztp = report["summary"][0]["mean_n_hat"].as_f64().unwrap();
    let zel = report["summary"][1]["mean_n_hat"].as_f64().unwrap();
    assert!(ztp < zel, "{ztp} vs {zel}");
}

#[test]
fn simulate_dumps_observed_units() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("dump");
    let report = json(&[
        "simulate", "--n-pop", "500", "--lambda", "0.8", "--seeds", "2", "--seed-base", "7",
        "--dump-dir", out_dir.to_str().unwrap(),
    ]);
    for (i, seed) in [7, 8].into_iter().enumerate() {
        let file = out_dir.join(format!("seed-{seed}.csv"));
        let text = std::fs::read_to_string(&file).unwrap();
        assert!(text.starts_with("count\n"));
        let units = text.lines().count() as u64 - 1;
        assert_eq!(units, report["replicates"][i]["n_observed"].as_u64().unwrap());
        let refit = json(&["fit", "--method", "zelterman", "--data", file.to_str().unwrap()]);
        assert_eq!(refit["estimate"]["n_hat"], report["replicates"][i]["estimates"][0]["n_hat"]);
    }
}
