use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_limitcycle");

fn run_in(dir: &Path, args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.current_dir(dir)
        .args(args)
        .env_remove("LIMITCYCLE_WORKERS");
    if let Some(w) = workers {
        cmd.env("LIMITCYCLE_WORKERS", w);
    }
    cmd.output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run_in(dir, args, None);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(args: &[&str]) -> i32 {
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), args, None).status.code().unwrap()
}

/// Parsed CSV: header lines, column names and rows keyed by column.
struct Csv {
    meta: Vec<String>,
    columns: Vec<String>,
    rows: Vec<HashMap<String, String>>,
}

impl Csv {
    fn read(path: &Path) -> Self {
        let text = fs::read_to_string(path).unwrap();
        let meta: Vec<String> = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .map(str::to_owned)
            .collect();
        let body: String = text
            .lines()
            .skip(meta.len())
            .map(|l| format!("{l}\n"))
            .collect();
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let columns: Vec<String> = rdr.headers().unwrap().iter().map(str::to_owned).collect();
        let rows = rdr
            .records()
            .map(|r| {
                let r = r.unwrap();
                columns
                    .iter()
                    .cloned()
                    .zip(r.iter().map(str::to_owned))
                    .collect()
            })
            .collect();
        Self {
            meta,
            columns,
            rows,
        }
    }

    fn f(&self, i: usize, col: &str) -> f64 {
        self.rows[i][col].parse().unwrap()
    }

    fn col(&self, col: &str) -> Vec<f64> {
        (0..self.rows.len()).map(|i| self.f(i, col)).collect()
    }

    fn filter(&self, col: &str, value: &str) -> Vec<usize> {
        (0..self.rows.len())
            .filter(|&i| self.rows[i][col] == value)
            .collect()
    }
}

#[test]
fn rgflow_anchor_periodicity_and_row_count() {
    let dir = tempfile::tempdir().unwrap();
    // 2m + 1 log-spaced samples over two periods: sample i and i + m are one period apart.
    let m = 40;
    let range = format!("0.3:{}:{}", 0.3 * (2.0 * PI).exp(), 2 * m + 1);
    ok(
        dir.path(),
        &["rgflow", "--cutoff-range", &range, "--out", "flow.csv"],
    );
    let t = Csv::read(&dir.path().join("flow.csv"));
    assert!(t.rows.len() <= 2 * m + 1);
    let by_cutoff: Vec<(f64, f64)> = t.col("cutoff").into_iter().zip(t.col("h")).collect();
    let mut checked = 0;
    for &(c, h) in &by_cutoff {
        let partner = c * PI.exp();
        if let Some(&(_, h2)) = by_cutoff
            .iter()
            .find(|(c2, _)| (c2 / partner - 1.0).abs() < 1e-12)
        {
            assert!(
                (h - h2).abs() <= 1e-12 * h.abs().max(1.0),
                "{c}: {h} vs {h2}"
            );
            checked += 1;
        }
    }
    assert!(checked >= m - 2, "only {checked} period pairs");

    ok(dir.path(), &["rgflow", "--cutoff", "1", "--out", "one.csv"]);
    let one = Csv::read(&dir.path().join("one.csv"));
    assert_eq!(one.rows.len(), 1);
    assert!((one.f(0, "h") - 1.0).abs() < 1e-15);

    let zeros = Csv::read(&dir.path().join("flow.zeros.csv"));
    for i in 0..zeros.rows.len() {
        let n = zeros.f(i, "period");
        let anchor = (n * PI).exp();
        assert!((zeros.f(i, "period_anchor_cutoff") / anchor - 1.0).abs() < 1e-12);
        let zero = zeros.f(i, "vanishing_cutoff");
        assert!((zero / (anchor * 0.5f64.atan().exp()) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn rgflow_skips_pole_samples() {
    let dir = tempfile::tempdir().unwrap();
    let pole = (PI - 0.5f64.atan()).exp();
    let range = format!("{}:{}:3", pole / 2.0, pole * 2.0);
    ok(
        dir.path(),
        &["rgflow", "--cutoff-range", &range, "--out", "f.csv"],
    );
    let t = Csv::read(&dir.path().join("f.csv"));
    assert_eq!(t.rows.len(), 2);
    assert_eq!(t.rows[1]["is_pole_adjacent"], "true");
}

#[test]
fn beta_rows() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "beta",
            "--nu",
            "1,2",
            "--h-range",
            "-1:1:3",
            "--out",
            "b.csv",
        ],
    );
    let t = Csv::read(&dir.path().join("b.csv"));
    assert!(t.col("beta").iter().all(|&b| b < 0.0));
    let ext = t.filter("is_extremum", "true");
    assert_eq!(ext.len(), 2);
    let i = ext[0];
    assert_eq!(t.f(i, "nu"), 1.0);
    assert!((t.f(i, "h") + 0.6).abs() < 1e-15 && (t.f(i, "beta") + 0.8).abs() < 1e-15);
    for i in t.filter("h", "1e0") {
        let nu = t.f(i, "nu");
        assert!((t.f(i, "beta") + 4.0 * nu * nu).abs() < 1e-12);
    }
}

#[test]
fn spectrum_sweep_shows_both_towers() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "spectrum",
            "--cutoff-range",
            "50:100:3",
            "--compare",
            "--out",
            "s.csv",
        ],
    );
    let t = Csv::read(&dir.path().join("s.csv"));
    let physical = |tower: &str, cutoff: f64| -> Vec<f64> {
        (0..t.rows.len())
            .filter(|&i| {
                t.rows[i]["tower"] == tower
                    && t.rows[i]["regulator_dominated"] == "false"
                    && t.f(i, "cutoff") == cutoff
            })
            .map(|i| t.f(i, "binding"))
            .collect()
    };
    let mut cutoffs = t.col("cutoff");
    cutoffs.dedup();
    assert_eq!(cutoffs.len(), 3);
    let nearest = |xs: &[f64], b: f64| {
        xs.iter()
            .copied()
            .min_by(|x, y| (x / b).ln().abs().total_cmp(&(y / b).ln().abs()))
            .unwrap()
    };
    let reference = physical("schedule", cutoffs[2]);
    assert!(!reference.is_empty());
    for &c in &cutoffs[..2] {
        let here = physical("schedule", c);
        for &b in &reference {
            assert!(
                (nearest(&here, b) / b - 1.0).abs() < 0.01,
                "Λ = {c}, B = {b}"
            );
        }
    }
    // Without the counterterm the problem only knows Λ, so the deepest physical state drifts as Λ².
    let b0: Vec<f64> = cutoffs
        .iter()
        .map(|&c| physical("unrenormalized", c)[0])
        .collect();
    assert!(b0.windows(2).all(|w| w[1] > 1.5 * w[0]), "{b0:?}");

    let fit = Csv::read(&dir.path().join("s.fit.csv"));
    assert_eq!(fit.rows.len(), 6);
    for slope in fit.col("slope") {
        assert!((slope / (-2.0 * PI) - 1.0).abs() < 0.01, "{slope}");
    }
}

#[test]
fn phase_and_xsec_tables() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "phase",
            "--nu",
            "1,2",
            "--k-range",
            "0.002:5:40",
            "--out",
            "p.csv",
        ],
    );
    let fit = Csv::read(&dir.path().join("p.fit.csv"));
    let slopes = fit.col("slope");
    // Period π/ν in ln k: the ν = 2 law runs twice as fast.
    assert!((slopes[1] / slopes[0] - 2.0).abs() < 0.02, "{slopes:?}");

    ok(
        dir.path(),
        &["xsec", "--k-range", "0.002:5:60", "--out", "x.csv"],
    );
    let t = Csv::read(&dir.path().join("x.csv"));
    let ratio = t.col("sigma_over_unitarity");
    assert!(ratio.iter().all(|&r| r <= 1.0 + 1e-3));
    for i in 0..t.rows.len() {
        let (k, s) = (t.f(i, "k"), t.f(i, "sigma_unitarity"));
        assert!((s * k * k / (4.0 * PI) - 1.0).abs() < 1e-12);
    }
    let summary = Csv::read(&dir.path().join("x.summary.csv"));
    let max = summary.f(0, "max_sigma_over_unitarity");
    assert_eq!(max, ratio.iter().copied().fold(0.0, f64::max));
}

#[test]
fn zeroenergy_summary() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "zeroenergy",
            "--nu",
            "1,2",
            "--lambda-star",
            "2",
            "--out",
            "z.csv",
        ],
    );
    let s = Csv::read(&dir.path().join("z.summary.csv"));
    for i in 0..s.rows.len() {
        let nu = s.f(i, "nu");
        let expected = (-nu * 2f64.ln()).rem_euclid(PI);
        let d = (s.f(i, "alpha") - expected).rem_euclid(PI);
        assert!(d.min(PI - d) < 1e-6);
        assert!(s.f(i, "fit_residual") < 1e-2);
        assert!((s.f(i, "mean_crossing_spacing") * nu / PI - 1.0).abs() < 0.01);
    }
    let nodes = Csv::read(&dir.path().join("z.csv"));
    for nu in ["1e0", "2e0"] {
        let rows = nodes.filter("nu", nu);
        assert!(rows.len() >= 256);
        let norm: f64 = rows.iter().map(|&i| nodes.f(i, "phi0").powi(2)).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}

#[test]
fn output_is_byte_identical_across_runs_and_worker_counts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = [
        "xsec",
        "--cutoff-range",
        "50:100:2",
        "--k-range",
        "0.01:2:12",
        "--out",
        "x.csv",
    ];
    assert!(run_in(a.path(), &args, Some("1")).status.success());
    assert!(run_in(b.path(), &args, Some("4")).status.success());
    for name in ["x.csv", "x.summary.csv"] {
        let left = fs::read(a.path().join(name)).unwrap();
        let right = fs::read(b.path().join(name)).unwrap();
        assert_eq!(left, right, "{name}");
    }
}

#[test]
fn metadata_header_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "spectrum",
            "--cutoff",
            "80",
            "--lambda-star",
            "1.3",
            "--out",
            "first.csv",
        ],
    );
    let first = Csv::read(&dir.path().join("first.csv"));
    assert_eq!(
        first.meta[0],
        format!("# limitcycle {}", env!("CARGO_PKG_VERSION"))
    );
    assert_eq!(first.meta[1], "# command: spectrum");
    assert_eq!(first.meta[2], "# table: spectrum");
    let config = first.meta[3].strip_prefix("# config: ").unwrap();
    fs::write(dir.path().join("run.json"), config).unwrap();
    // The saved config names first.csv, so the rerun must overwrite it identically.
    let before = fs::read(dir.path().join("first.csv")).unwrap();
    ok(dir.path(), &["spectrum", "--config", "run.json"]);
    assert_eq!(fs::read(dir.path().join("first.csv")).unwrap(), before);
}

#[test]
fn json_mirror_matches_csv() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["beta", "--h-range", "-2:2:9", "--out", "b.csv"],
    );
    ok(
        dir.path(),
        &[
            "beta",
            "--h-range",
            "-2:2:9",
            "--format",
            "json",
            "--out",
            "b.json",
        ],
    );
    let csv = Csv::read(&dir.path().join("b.csv"));
    let doc: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("b.json")).unwrap()).unwrap();
    assert_eq!(doc["command"], "beta");
    assert_eq!(doc["config"]["h_range"], "-2:2:9");
    let table = &doc["tables"][0];
    assert_eq!(table["name"], "beta");
    let rows = table["rows"].as_array().unwrap();
    assert_eq!(rows.len(), csv.rows.len());
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[2].as_f64().unwrap(), csv.f(i, "beta"));
        assert_eq!(
            row[3].as_bool().unwrap().to_string(),
            csv.rows[i]["is_extremum"]
        );
    }
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.json"),
        r#"{"nu": [1.0, 2.0], "h_range": "-1:1:3", "format": "json"}"#,
    )
    .unwrap();
    ok(
        dir.path(),
        &[
            "beta", "--config", "c.json", "--format", "csv", "--nu", "2", "--out", "b.csv",
        ],
    );
    let t = Csv::read(&dir.path().join("b.csv"));
    assert!(t.col("nu").iter().all(|&nu| nu == 2.0));
    assert_eq!(t.rows.len(), 4);
}

#[test]
fn exit_codes_classify_failures() {
    assert_eq!(code(&["beta", "--nu", "-1"]), 2);
    assert_eq!(code(&["rgflow", "--cutoff-range", "10:5:3"]), 2);
    assert_eq!(code(&["beta", "--not-a-flag"]), 2);
    assert_eq!(code(&["phase", "--k-range", "0.0001:1:3"]), 2);
    assert_eq!(code(&["spectrum", "--energy-window", "1:1e9"]), 2);
    let pole = (5.0 * PI - 0.5f64.atan()).exp().to_string();
    assert_eq!(code(&["zeroenergy", "--cutoff", &pole]), 2);
    assert_eq!(code(&["beta", "--config", "missing.json"]), 4);
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"nu": 1, "colour": 3}"#).unwrap();
    assert_eq!(
        run_in(dir.path(), &["beta", "--config", "bad.json"], None)
            .status
            .code(),
        Some(2)
    );
    // Fit window [10 k_min, Λ/10] is empty: the solver itself reports the failure.
    assert_eq!(
        code(&["zeroenergy", "--k-min", "2", "--mesh-points", "64"]),
        3
    );
    assert_eq!(code(&["beta", "--out", "no/such/dir/b.csv"]), 4);
}

#[test]
fn emitted_columns_follow_the_schema() {
    let schema: Value = serde_json::from_str(
        &fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schema/tables.json"))
            .unwrap(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let runs: [(&str, &[&str]); 6] = [
        ("rgflow", &["--cutoff-range", "1:100:5"]),
        ("beta", &["--h-range", "-1:1:3"]),
        ("spectrum", &["--cutoff", "60"]),
        ("phase", &["--k-range", "0.01:1:4"]),
        ("xsec", &["--k-range", "0.01:1:4"]),
        ("zeroenergy", &[]),
    ];
    for (command, extra) in runs {
        let out = format!("{command}.csv");
        let mut args = vec![command, "--out", out.as_str()];
        args.extend_from_slice(extra);
        ok(dir.path(), &args);
        let tables = schema["commands"][command]["tables"].as_array().unwrap();
        for (i, table) in tables.iter().enumerate() {
            let name = table["name"].as_str().unwrap();
            let file = if i == 0 {
                out.clone()
            } else {
                format!("{command}.{name}.csv")
            };
            let csv = Csv::read(&dir.path().join(&file));
            let expected: Vec<&str> = table["columns"]
                .as_array()
                .unwrap()
                .iter()
                .map(|c| c["name"].as_str().unwrap())
                .collect();
            assert_eq!(csv.columns, expected, "{file}");
            assert_eq!(csv.meta[2], format!("# table: {name}"));
        }
    }
}
