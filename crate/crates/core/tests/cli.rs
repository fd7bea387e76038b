use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use funcclust::manifest::sha256_hex;

fn funcclust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_funcclust"))
        .args(args)
        .output()
        .expect("spawn funcclust")
}

fn ok(args: &[&str]) -> String {
    let out = funcclust(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, study: &str, m: &str, n: &str, seed: &str) -> PathBuf {
    let prefix = dir.join(format!("{study}_{seed}"));
    ok(&["simulate", "--study", study, "--m", m, "--n", n, "--seed", seed, "--out", p(&prefix)]);
    prefix
}

fn file(prefix: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}{suffix}", prefix.display()))
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_dataset_truth_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = simulate(dir.path(), "s1", "50", "30", "7");
    let data = fs::read_to_string(file(&prefix, ".csv")).unwrap();
    let lines: Vec<&str> = data.lines().collect();
    assert_eq!(lines.len(), 31);
    assert!(lines.iter().all(|l| l.split(',').count() == 51));
    let truth = fs::read_to_string(file(&prefix, "_truth.csv")).unwrap();
    let labels: Vec<&str> = truth.lines().skip(1).collect();
    assert_eq!(labels.len(), 30);
    assert!(labels.iter().all(|l| ["1", "2", "3"].contains(l)));

    let manifest = read_json(&file(&prefix, "_manifest.json"));
    assert_eq!(manifest["seed"], 7);
    for output in manifest["outputs"].as_array().unwrap() {
        let bytes = fs::read(output["path"].as_str().unwrap()).unwrap();
        assert_eq!(output["sha256"].as_str().unwrap(), sha256_hex(&bytes));
    }
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(&dir.path().join("a"), "s1", "50", "30", "7");
    let b = simulate(&dir.path().join("b"), "s1", "50", "30", "7");
    for suffix in [".csv", "_truth.csv"] {
        assert_eq!(fs::read(file(&a, suffix)).unwrap(), fs::read(file(&b, suffix)).unwrap());
    }
}

#[test]
fn s2_truth_is_balanced() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = simulate(dir.path(), "s2", "50", "250", "1");
    let truth = fs::read_to_string(file(&prefix, "_truth.csv")).unwrap();
    for c in 1..=5 {
        assert_eq!(truth.lines().skip(1).filter(|l| *l == c.to_string()).count(), 50);
    }
}

#[test]
fn simulate_rejects_sizes_outside_the_design() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let bad = funcclust(&["simulate", "--study", "s1", "--m", "13", "--n", "30", "--out", p(&out)]);
    assert_eq!(bad.status.code(), Some(2));
    ok(&["simulate", "--study", "s1", "--m", "13", "--n", "30", "--allow-nonstandard", "--out", p(&out)]);
}

#[test]
fn fit_recovers_s1_clusters_and_echoes_settings() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = simulate(dir.path(), "s1", "50", "150", "3");
    let model = dir.path().join("model.json");
    let labels = dir.path().join("labels.csv");
    ok(&[
        "fit", "--input", p(&file(&prefix, ".csv")), "--basis", "monomial", "--dim", "5",
        "--g", "3", "--tol", "0.01", "--seed", "5", "--out", p(&model), "--labels", p(&labels),
    ]);
    let ari = ok(&["ari", "--pred", p(&labels), "--truth", p(&file(&prefix, "_truth.csv"))]);
    assert!(ari.trim().parse::<f64>().unwrap() >= 0.9, "{ari}");

    let m = read_json(&model);
    assert_eq!(m["g"], 3);
    assert_eq!(m["d"], 5);
    let manifest = read_json(&dir.path().join("model.manifest.json"));
    assert_eq!(manifest["config"]["em"]["tol"], 0.01);
    let timings = manifest["timings"].as_array().unwrap();
    let stages: Vec<&str> = timings.iter().map(|t| t["stage"].as_str().unwrap()).collect();
    assert_eq!(stages, ["read", "project", "fit", "allocate", "write", "total"]);
    let parts: f64 = timings[..5].iter().map(|t| t["seconds"].as_f64().unwrap()).sum();
    assert!(parts <= timings[5]["seconds"].as_f64().unwrap());
}

#[test]
fn single_component_labels_everything_one() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = simulate(dir.path(), "s1", "20", "60", "2");
    let labels = dir.path().join("labels.csv");
    ok(&[
        "fit", "--input", p(&file(&prefix, ".csv")), "--basis", "monomial", "--dim", "5",
        "--g", "1", "--out", p(&dir.path().join("m.json")), "--labels", p(&labels),
    ]);
    let text = fs::read_to_string(labels).unwrap();
    assert_eq!(text.lines().count(), 61);
    assert!(text.lines().skip(1).all(|l| l == "1"));
}

fn select(dir: &Path, data: &Path, extra: &[&str]) -> Vec<Vec<String>> {
    let table = dir.join("table.csv");
    let (model, labels) = (dir.join("chosen.json"), dir.join("chosen.csv"));
    let mut args = vec![
        "select", "--input", p(data), "--basis", "fourier", "--dim", "9", "--table", p(&table),
        "--out", p(&model), "--labels", p(&labels),
    ];
    args.extend_from_slice(extra);
    ok(&args);
    let text = fs::read_to_string(table).unwrap();
    assert_eq!(text.lines().next().unwrap(), "g,loglik,penalty,criterion,chosen");
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn select_on_a_single_order_chooses_it() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = simulate(dir.path(), "s2", "50", "250", "4");
    let rows = select(
        dir.path(),
        &file(&prefix, ".csv"),
        &["--gmin", "3", "--gmax", "3", "--method", "bic"],
    );
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "3");
    assert_eq!(rows[0][4], "1");
    assert_eq!(read_json(&dir.path().join("chosen.json"))["g"], 3);
}

#[test]
fn fixed_kappa_gives_the_exact_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = simulate(dir.path(), "s2", "50", "250", "4");
    let rows = select(
        dir.path(),
        &file(&prefix, ".csv"),
        &["--gmin", "1", "--gmax", "4", "--method", "slope", "--kappa", "3.55e-4"],
    );
    assert_eq!(rows.len(), 4);
    for row in &rows {
        let g: usize = row[0].parse().unwrap();
        let ll: f64 = row[1].parse().unwrap();
        let pen: u64 = row[2].parse().unwrap();
        assert_eq!(pen, (g * 55 - 1) as u64);
        let want = -ll / 250.0 + 3.55e-4 * pen as f64;
        assert_eq!(row[3].parse::<f64>().unwrap().to_bits(), want.to_bits());
    }
    assert_eq!(rows.iter().filter(|r| r[4] == "1").count(), 1);
}

fn labels_file(dir: &Path, name: &str, labels: &[usize]) -> PathBuf {
    let path = dir.join(name);
    let body: String = labels.iter().map(|l| format!("{l}\n")).collect();
    fs::write(&path, format!("label\n{body}")).unwrap();
    path
}

#[test]
fn ari_prints_six_decimals() {
    let dir = tempfile::tempdir().unwrap();
    let a = labels_file(dir.path(), "a.csv", &[1, 1, 2, 2, 3, 3]);
    let b = labels_file(dir.path(), "b.csv", &[1, 1, 2, 3, 3, 3]);
    let ones = labels_file(dir.path(), "ones.csv", &[1, 1, 1, 1]);
    let binary = labels_file(dir.path(), "bin.csv", &[1, 2, 1, 2]);
    assert_eq!(ok(&["ari", "--pred", p(&a), "--truth", p(&a)]), "1.000000\n");
    assert_eq!(ok(&["ari", "--pred", p(&ones), "--truth", p(&binary)]), "0.000000\n");
    assert_eq!(ok(&["ari", "--pred", p(&a), "--truth", p(&b)]), format!("{:.6}\n", 4.0 / 9.0));
}

#[test]
fn ari_length_mismatch_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let a = labels_file(dir.path(), "a.csv", &[1, 2, 1]);
    let b = labels_file(dir.path(), "b.csv", &[1, 2]);
    assert_eq!(funcclust(&["ari", "--pred", p(&a), "--truth", p(&b)]).status.code(), Some(2));
}

#[test]
fn malformed_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        "",
        "t,0,1\na,1\n",
        "t,0,1\na,1,x\n",
        "t,1,0\na,1,2\n",
        "t,0,1\na,1,NaN\n",
        "id,t,z\na,0,1\na,0,2\n",
        "\u{feff}garbage\n\"unterminated",
    ];
    for (k, body) in cases.iter().enumerate() {
        let input = dir.path().join(format!("bad{k}.csv"));
        fs::write(&input, body).unwrap();
        let out = funcclust(&[
            "fit", "--input", p(&input), "--basis", "monomial", "--dim", "2", "--g", "1",
            "--out", p(&dir.path().join("m.json")), "--labels", p(&dir.path().join("l.csv")),
        ]);
        assert_eq!(out.status.code(), Some(2), "case {k}");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.starts_with("error:") && !stderr.contains("panicked"), "case {k}: {stderr}");
    }
}

#[test]
fn parse_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "t,0,1\na,1,2\nb,3,oops\n").unwrap();
    let out = funcclust(&[
        "fit", "--input", p(&input), "--basis", "monomial", "--dim", "2", "--g", "1",
        "--out", p(&dir.path().join("m.json")), "--labels", p(&dir.path().join("l.csv")),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn degenerate_fit_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("flat.csv");
    let rows: String = (0..10).map(|i| format!("f{i},1,1,1\n")).collect();
    fs::write(&input, format!("t,0,1,2\n{rows}")).unwrap();
    let out = funcclust(&[
        "fit", "--input", p(&input), "--basis", "monomial", "--dim", "2", "--g", "2",
        "--out", p(&dir.path().join("m.json")), "--labels", p(&dir.path().join("l.csv")),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = simulate(dir.path(), "s2", "50", "250", "8");
    let run = |threads: &str| {
        let model = dir.path().join(format!("m{threads}.json"));
        let labels = dir.path().join(format!("l{threads}.csv"));
        ok(&[
            "--threads", threads, "fit", "--input", p(&file(&prefix, ".csv")), "--basis", "fourier",
            "--dim", "9", "--g", "5", "--seed", "1", "--out", p(&model), "--labels", p(&labels),
        ]);
        (fs::read(model).unwrap(), fs::read(labels).unwrap())
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn threads_fall_back_to_the_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_funcclust"))
        .env("FUNCCLUST_THREADS", "not-a-number")
        .args(["ari", "--pred", "a", "--truth", "b"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
