use std::path::Path;
use std::process::{Command, Output};

const TINY_CITY: &str = r#"
[synth]
n_districts = 3
customers_per_district = 30
merchants_per_category = { lo = 4, hi = 4 }
visits_per_customer = { lo = 15, hi = 15 }
"#;

fn huffval(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_huffval"))
        .args(["--config", dir.join("run.toml").to_str().unwrap(), "--out", dir.to_str().unwrap()])
        .args(args)
        .output()
        .unwrap()
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_requires_a_seed() {
    let dir = setup(TINY_CITY);
    let out = huffval(dir.path(), &["synth"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("seed"), "{}", stderr(&out));
}

#[test]
fn clean_inputs_ingest_and_fit() {
    let dir = setup(TINY_CITY);
    assert_eq!(huffval(dir.path(), &["synth", "--seed", "3"]).status.code(), Some(0));
    assert_eq!(huffval(dir.path(), &["ingest"]).status.code(), Some(0));
    assert!(dir.path().join("summary.csv").exists());
    let fit = huffval(dir.path(), &["fit", "--seed", "3", "--category", "5411"]);
    assert_eq!(fit.status.code(), Some(0), "{}", stderr(&fit));
    let results = std::fs::read_to_string(dir.path().join("fit_results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 3);
}

#[test]
fn missing_column_is_named() {
    let dir = setup(TINY_CITY);
    assert_eq!(huffval(dir.path(), &["synth", "--seed", "3"]).status.code(), Some(0));
    let path = dir.path().join("transactions.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let (header, body) = text.split_once('\n').unwrap();
    std::fs::write(&path, format!("{}\n{body}", header.replace("amount", "amt"))).unwrap();
    let out = huffval(dir.path(), &["ingest"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("amount"), "{}", stderr(&out));
}

#[test]
fn too_many_rejections_fail_validation() {
    let dir = setup(TINY_CITY);
    assert_eq!(huffval(dir.path(), &["synth", "--seed", "3"]).status.code(), Some(0));
    let path = dir.path().join("transactions.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    let amount = header.iter().position(|h| *h == "amount").unwrap();
    // One row in twenty gets an unparseable amount.
    for line in lines.iter_mut().skip(1).step_by(20) {
        let mut cells: Vec<&str> = line.split(',').collect();
        cells[amount] = "twelve";
        *line = cells.join(",");
    }
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let out = huffval(dir.path(), &["ingest"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    let rejections = std::fs::read_to_string(dir.path().join("rejections.csv")).unwrap();
    assert!(rejections.lines().count() > 1);
}

#[test]
fn degenerate_cells_exit_with_two() {
    let config = TINY_CITY.replace("{ lo = 4, hi = 4 }", "{ lo = 1, hi = 1 }");
    let dir = setup(&config);
    assert_eq!(huffval(dir.path(), &["synth", "--seed", "9"]).status.code(), Some(0));
    let out = huffval(dir.path(), &["fit", "--seed", "9"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}
