use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gpssm_cli::commands::forecast::{forecast_draws, load_fit, Pooled};
use gpssm_cli::io::{read_series, read_table};
use gpssm_core::inference::{forecast_one_step, KStepOptions};
use gpssm_core::mcmc::Block;
use gpssm_core::model::{LatentState, ObservedSeries};
use gpssm_core::multivariate::MvLatentState;
use gpssm_core::RngStream;
use tempfile::TempDir;

fn gpssm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpssm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = gpssm(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

fn simulate(dir: &Path, model: &str, horizon: usize, seed: u64) -> PathBuf {
    let out = dir.join(format!("sim-{model}-{seed}"));
    ok(&[
        "simulate",
        "--model",
        model,
        "--T",
        &horizon.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        p(&out),
    ]);
    out
}

/// A short fit on a small grid; enough draws for HPD intervals.
fn quick_fit(data: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec![
        "fit",
        "--data",
        p(data),
        "--iters",
        "60",
        "--burnin",
        "20",
        "--chains",
        "2",
        "--out",
        p(out),
    ];
    if !extra.contains(&"--n") {
        args.extend(["--n", "6"]);
    }
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn simulate_linear_row_counts() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), "linear", 100, 7);
    assert_eq!(lines(&sim.join("truth.csv")), 1 + 101);
    assert_eq!(lines(&sim.join("series.csv")), 1 + 100);
    let truth = read_table(&sim.join("truth.csv")).unwrap();
    let held = truth.column("held_out").unwrap();
    let flagged: Vec<f64> = truth.rows.iter().map(|r| r[held]).collect();
    assert_eq!(flagged.iter().filter(|v| **v == 1.0).count(), 1);
    assert_eq!(flagged[100], 1.0);
    let gen = fs::read_to_string(sim.join("generator.txt")).unwrap();
    assert!(gen.contains("model = linear") && gen.contains("x0_1 = 0"));
}

#[test]
fn simulate_cps4_has_four_coordinates() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), "cps4", 50, 1);
    let y = read_series(&sim.join("series.csv")).unwrap();
    assert_eq!((y.nrows(), y.ncols()), (50, 4));
    let truth = read_table(&sim.join("truth.csv")).unwrap();
    for j in 1..=4 {
        assert!(truth.column(&format!("x{j}")).is_some());
    }
    assert_eq!(truth.rows.len(), 51);
}

#[test]
fn simulate_gp_writes_generating_grid() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("gp");
    ok(&["simulate", "--model", "gp", "--T", "10", "--n", "5", "--out", p(&out)]);
    assert_eq!(lines(&out.join("truth_grid.csv")), 1 + 5);
    assert_eq!(lines(&out.join("series.csv")), 1 + 10);
}

#[test]
fn simulate_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    for model in ["gp", "linear", "cps", "cps4"] {
        let a = tmp.path().join(format!("{model}-a"));
        let b = tmp.path().join(format!("{model}-b"));
        for dir in [&a, &b] {
            ok(&[
                "simulate",
                "--model",
                model,
                "--T",
                "20",
                "--seed",
                "3",
                "--out",
                p(dir),
            ]);
        }
        for f in ["series.csv", "truth.csv", "generator.txt"] {
            assert_eq!(
                fs::read(a.join(f)).unwrap(),
                fs::read(b.join(f)).unwrap(),
                "{model}/{f}"
            );
        }
    }
}

#[test]
fn unknown_simulation_model_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("x");
    assert!(!gpssm(&["simulate", "--model", "arma", "--T", "5", "--out", p(&out)])
        .status
        .success());
    assert!(!out.exists());
}

#[test]
fn missing_data_file_leaves_no_outputs() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("fit");
    let res = gpssm(&["fit", "--data", p(&tmp.path().join("absent.csv")), "--out", p(&out)]);
    assert!(!res.status.success());
    assert!(!out.exists());
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn malformed_series_errors_name_the_row() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        (
            "gap.csv",
            "t,y1\n1,0.5\n2,0.1\n3,0.2\n5,0.3\n",
            "row 5",
            "jumps from 3 to 5",
        ),
        ("dup.csv", "t,y1\n1,0.5\n2,0.1\n2,0.2\n", "row 4", "duplicate"),
        ("nan.csv", "t,y1\n1,0.5\n2,abc\n", "row 3", "not a finite number"),
    ];
    for (name, text, row, what) in cases {
        let data = write(tmp.path(), name, text);
        let out = tmp.path().join(format!("out-{name}"));
        let res = gpssm(&["fit", "--data", p(&data), "--out", p(&out)]);
        let err = String::from_utf8_lossy(&res.stderr);
        assert!(!res.status.success());
        assert!(err.contains(row) && err.contains(what), "{name}: {err}");
        assert!(!out.exists());
    }
}

#[test]
fn series_dimension_comes_from_the_header() {
    let tmp = TempDir::new().unwrap();
    let uni: String = std::iter::once("t,y1\n".to_string())
        .chain((1..=25).map(|t| format!("{t},{}\n", 1000.0 + t as f64)))
        .collect();
    let y = read_series(&write(tmp.path(), "uni.csv", &uni)).unwrap();
    assert_eq!((y.nrows(), y.ncols()), (25, 1));
    let multi = "t,y1,y2,y3,y4\n1,1,2,3,4\n2,5,6,7,8\n";
    let y = read_series(&write(tmp.path(), "multi.csv", multi)).unwrap();
    assert_eq!((y.nrows(), y.ncols()), (2, 4));
    assert_eq!(y[(1, 2)], 7.0);
}

#[test]
fn fit_writes_every_state_column() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), "linear", 12, 2);
    let fit = tmp.path().join("fit");
    quick_fit(&sim.join("series.csv"), &fit, &["--thin", "4"]);
    let samples = read_table(&fit.join("samples.csv")).unwrap();
    let mut expected = vec!["chain".to_string(), "draw".to_string()];
    expected.extend(LatentState::column_names(12, 6));
    assert_eq!(samples.header, expected);
    assert_eq!(samples.rows.len(), 2 * (60 - 20) / 4);
    assert_eq!(lines(&fit.join("summary.csv")), 1 + expected.len() - 2);
    assert_eq!(lines(&fit.join("diagnostics.csv")), 1 + 2 * 60);
    assert_eq!(lines(&fit.join("acceptance.csv")), 1 + 2 * Block::ALL.len());
    assert_eq!(lines(&fit.join("grid.csv")), 1 + 6);
}

#[test]
fn multivariate_fit_writes_every_state_column() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), "cps4", 5, 2);
    let fit = tmp.path().join("fit");
    quick_fit(&sim.join("series.csv"), &fit, &["--n", "4"]);
    let samples = read_table(&fit.join("samples.csv")).unwrap();
    assert_eq!(&samples.header[2..], MvLatentState::column_names(5, 4, 4, 4).as_slice());
    assert_eq!(samples.rows.len(), 2 * 40);
    assert_eq!(lines(&fit.join("acceptance.csv")), 1 + 2 * 12);
    let fc = tmp.path().join("fc");
    ok(&[
        "forecast",
        "--fit",
        p(&fit),
        "--k",
        "2",
        "--max-trajectories",
        "5",
        "--out",
        p(&fc),
    ]);
    assert_eq!(lines(&fc.join("forecast_summary.csv")), 1 + 2 * 4);
    assert_eq!(lines(&fc.join("forecast_draws.csv")), 1 + 5 * 2);
    let cov = tmp.path().join("cov");
    ok(&[
        "forecast",
        "--fit",
        p(&fit),
        "--truth",
        p(&sim.join("truth.csv")),
        "--out",
        p(&cov),
    ]);
    assert_eq!(lines(&cov.join("coverage.csv")), 1 + 4);
}

#[test]
fn manifest_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), "linear", 10, 4);
    let a = tmp.path().join("a");
    quick_fit(
        &sim.join("series.csv"),
        &a,
        &["--seed", "9", "--set", "x_proposal=linearized"],
    );
    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(manifest.contains("x_proposal = linearized") && manifest.contains("seed = 9"));
    let b = tmp.path().join("b");
    ok(&[
        "fit",
        "--data",
        p(&sim.join("series.csv")),
        "--config",
        p(&a.join("manifest.txt")),
        "--out",
        p(&b),
    ]);
    for f in [
        "samples.csv",
        "summary.csv",
        "diagnostics.csv",
        "acceptance.csv",
        "grid.csv",
        "data.csv",
    ] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_file_comments_and_overrides() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), "linear", 8, 5);
    let cfg = write(
        tmp.path(),
        "run.cfg",
        "# short run\niters = 50   # sweeps\nburnin = 10\n\nn = 5\nthin = 1\nseed = 3\n",
    );
    let out = tmp.path().join("fit");
    ok(&[
        "fit",
        "--data",
        p(&sim.join("series.csv")),
        "--config",
        p(&cfg),
        "--iters",
        "40",
        "--out",
        p(&out),
    ]);
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("iters = 40") && manifest.contains("n = 5") && manifest.contains("seed = 3"));
    assert_eq!(lines(&out.join("samples.csv")), 1 + 30);

    let bad = write(tmp.path(), "bad.cfg", "iters = 50\nnot_an_option = 1\n");
    let res = gpssm(&[
        "fit",
        "--data",
        p(&sim.join("series.csv")),
        "--config",
        p(&bad),
        "--out",
        p(&tmp.path().join("bad")),
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("not_an_option"));
}

#[test]
fn one_step_forecast_matches_the_library() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), "linear", 10, 6);
    let fit = tmp.path().join("fit");
    quick_fit(&sim.join("series.csv"), &fit, &[]);
    let loaded = load_fit(&fit).unwrap();
    let Pooled::Univariate(chain) = &loaded.draws else {
        panic!("univariate fit")
    };
    let y = ObservedSeries::new(loaded.y.column(0).iter().copied().collect()).unwrap();
    let rng = RngStream::new(0, gpssm_cli::streams::FORECAST);
    let direct = forecast_one_step(chain, &y, &rng).unwrap();
    let via_k = forecast_draws(&loaded, 1, &KStepOptions::default(), &rng).unwrap();
    assert_eq!(via_k.iter().map(|d| d[0][0]).collect::<Vec<_>>(), direct);

    let fc = tmp.path().join("fc");
    ok(&["forecast", "--fit", p(&fit), "--k", "1", "--out", p(&fc)]);
    let table = read_table(&fc.join("forecast_draws.csv")).unwrap();
    assert_eq!(table.rows.iter().map(|r| r[2]).collect::<Vec<_>>(), direct);
    assert!(table.rows.iter().all(|r| r[1] == 11.0));
}

#[test]
fn forecast_rejects_zero_horizon() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), "linear", 6, 6);
    let fit = tmp.path().join("fit");
    quick_fit(&sim.join("series.csv"), &fit, &["--n", "4"]);
    let out = tmp.path().join("fc");
    assert!(!gpssm(&["forecast", "--fit", p(&fit), "--k", "0", "--out", p(&out)])
        .status
        .success());
    assert!(!out.exists());
}

#[test]
fn coverage_and_composite_files() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), "linear", 10, 8);
    let fit = tmp.path().join("fit");
    quick_fit(&sim.join("series.csv"), &fit, &[]);
    let fc = tmp.path().join("fc");
    ok(&[
        "forecast",
        "--fit",
        p(&fit),
        "--k",
        "1",
        "--truth",
        p(&sim.join("truth.csv")),
        "--composite",
        "3",
        "--abscissae",
        "7",
        "--out",
        p(&fc),
    ]);
    let cov = read_table(&fc.join("coverage.csv")).unwrap();
    assert_eq!(cov.header, ["t", "coord", "truth", "hpd_lo", "hpd_hi", "hit"]);
    let truth = read_table(&sim.join("truth.csv")).unwrap();
    let r = &cov.rows[0];
    assert_eq!(r[0], 11.0);
    assert_eq!(r[2], truth.rows[10][truth.column("y1").unwrap()]);
    assert_eq!(r[5], (r[3] <= r[2] && r[2] <= r[4]) as u8 as f64);

    let text = fs::read_to_string(fc.join("composite.csv")).unwrap();
    let mut rows = text.lines();
    assert_eq!(rows.next().unwrap(), "t,kind,x,mean,hpd_lo,hpd_hi,truth,hit");
    let body: Vec<Vec<&str>> = rows.map(|l| l.split(',').collect()).collect();
    assert_eq!(body.len(), 3 * 2 * 7);
    for row in &body {
        let lo: f64 = row[4].parse().unwrap();
        let hi: f64 = row[5].parse().unwrap();
        let v: f64 = row[6].parse().unwrap();
        assert!(lo <= hi);
        assert_eq!(row[7], if lo <= v && v <= hi { "1" } else { "0" });
    }
    // g*_1(x) = 1 + 0.1 x for the default linear generator.
    let x: f64 = body[0][2].parse().unwrap();
    let g: f64 = body[0][6].parse().unwrap();
    assert!((g - (1.0 + 0.1 * x)).abs() < 1e-12);
}

#[test]
fn composite_is_univariate_only() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), "cps4", 4, 1);
    let fit = tmp.path().join("fit");
    quick_fit(&sim.join("series.csv"), &fit, &["--n", "3"]);
    let res = gpssm(&[
        "forecast",
        "--fit",
        p(&fit),
        "--composite",
        "2",
        "--out",
        p(&tmp.path().join("fc")),
    ]);
    assert!(!res.status.success());
}

#[test]
fn summarize_matches_fit_summary() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), "cps", 10, 2);
    let fit = tmp.path().join("fit");
    quick_fit(&sim.join("series.csv"), &fit, &[]);
    let out = tmp.path().join("sum");
    ok(&[
        "summarize",
        "--samples",
        p(&fit.join("samples.csv")),
        "--hpd",
        "0.95",
        "--out",
        p(&out),
    ]);
    assert_eq!(
        fs::read(out.join("summary.csv")).unwrap(),
        fs::read(fit.join("summary.csv")).unwrap()
    );
}

#[test]
fn fit_and_forecast_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), "linear", 10, 3);
    let mut dirs = Vec::new();
    for tag in ["a", "b"] {
        let fit = tmp.path().join(format!("fit-{tag}"));
        quick_fit(&sim.join("series.csv"), &fit, &[]);
        let fc = tmp.path().join(format!("fc-{tag}"));
        ok(&[
            "forecast",
            "--fit",
            p(&fit),
            "--k",
            "2",
            "--composite",
            "2",
            "--max-trajectories",
            "10",
            "--out",
            p(&fc),
        ]);
        dirs.push((fit, fc));
    }
    let (a, b) = (&dirs[0], &dirs[1]);
    for f in ["samples.csv", "summary.csv", "diagnostics.csv", "acceptance.csv"] {
        assert_eq!(fs::read(a.0.join(f)).unwrap(), fs::read(b.0.join(f)).unwrap(), "{f}");
    }
    for f in ["forecast_draws.csv", "forecast_summary.csv", "composite.csv"] {
        assert_eq!(fs::read(a.1.join(f)).unwrap(), fs::read(b.1.join(f)).unwrap(), "{f}");
    }
}
