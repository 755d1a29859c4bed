use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fibercouple"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = run(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

/// The single diagnostic line of a failed run.
fn fails(out: &Path, args: &[&str]) -> String {
    let o = run(out, args);
    assert!(!o.status.success(), "{args:?} should fail");
    let e = stderr(&o);
    assert_eq!(e.lines().count(), 1, "{e}");
    assert!(e.starts_with("error: "), "{e}");
    e
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let k = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

fn fit_row(dir: &Path, kind: &str, name: &str) -> [f64; 4] {
    let csv = std::fs::read_to_string(dir.join(format!("fit_{kind}.csv"))).unwrap();
    let line = csv.lines().find(|l| l.starts_with(&format!("{name},"))).unwrap();
    let v: Vec<f64> = line.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
    [v[0], v[1], v[2], v[3]]
}

#[test]
fn table_one_budget() {
    let d = tempfile::tempdir().unwrap();
    let cfg = fixture("table1.cfg");
    let s = ok(d.path(), &["budget", "--config", cfg.to_str().unwrap()]);
    assert!(s.contains("8.24 MHz"), "{s}");
    assert!(s.contains("10.9 % ± 2.3 %"), "{s}");
    assert!(!s.contains("DEVIATES"), "{s}");
    let first = std::fs::read(d.path().join("budget.csv")).unwrap();

    let s = ok(d.path(), &["budget", "--expected", "--config", cfg.to_str().unwrap()]);
    let line = s.lines().find(|l| l.starts_with("Expected detector rate")).unwrap();
    assert!(line.contains("5.50 MHz"), "{line}");
    assert!(line.ends_with("(ok)"), "{line}");

    ok(d.path(), &["budget", "--config", cfg.to_str().unwrap()]);
    assert_eq!(std::fs::read(d.path().join("budget.csv")).unwrap(), first);
}

#[test]
fn single_stage_product_is_that_stage() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("one.cfg");
    std::fs::write(&cfg, "budget.single_photon_rate_mhz = 2.0 ± 0.1\nstage.lens = 73.0 % ± 2.0 %\n").unwrap();
    let s = ok(d.path(), &["budget", "--config", cfg.to_str().unwrap()]);
    let product = s.lines().find(|l| l.starts_with("Off-chip product")).unwrap();
    assert!(product.contains("73.0 % ± 2.0 %"), "{product}");
    let csv = std::fs::read_to_string(d.path().join("budget.csv")).unwrap();
    let row = |k: &str| csv.lines().find(|l| l.starts_with(&format!("{k},"))).unwrap().split(',').skip(1).take(2).collect::<Vec<_>>().join(",");
    assert_eq!(row("offchip"), row("stage.lens"));
}

#[test]
fn budget_without_stages_is_an_error() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("none.cfg");
    std::fs::write(&cfg, "budget.single_photon_rate_mhz = 2.0\n").unwrap();
    let e = fails(d.path(), &["budget", "--config", cfg.to_str().unwrap()]);
    assert!(e.contains("stage"), "{e}");
    let e = fails(d.path(), &["budget", "--expected", "--config", fixture("table1.cfg").to_str().unwrap(), "--set", "budget.eta_cf=1.5"]);
    assert!(e.contains("eta_cf"), "{e}");
}

#[test]
fn coupled_modes_at_the_design_width() {
    let d = tempfile::tempdir().unwrap();
    let s = ok(d.path(), &["modes", "--width", "300", "--which", "coupled", "--resolution", "20"]);
    let n: Vec<f64> = s.lines().skip(2).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(n.len() >= 2, "{s}");
    assert!(n[0] > 2.0, "{s}");
    let csv = std::fs::read_to_string(d.path().join("modes_coupled.csv")).unwrap();
    assert_eq!(column(&csv, "n_eff").len(), n.len());
}

#[test]
fn fiber_modes_are_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["modes", "--which", "fiber", "--resolution", "20", "--modes", "2", "--fields"];
    let (sa, sb) = (ok(a.path(), &args), ok(b.path(), &args));
    assert_eq!(sa, sb);
    for f in ["modes_fiber.csv", "mode_fiber_0.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn negative_width_names_the_key() {
    let d = tempfile::tempdir().unwrap();
    let e = fails(d.path(), &["modes", "--width", "-5"]);
    assert!(e.contains("geometry.width_nm") && e.contains("--width"), "{e}");
    assert!(std::fs::read_dir(d.path()).unwrap().next().is_none(), "nothing written on failure");
}

#[test]
fn config_errors_carry_line_numbers() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.cfg");
    std::fs::write(&cfg, "# comment\ngeometry.width_nm = 250\nbogus.key = 1\n").unwrap();
    let e = fails(d.path(), &["modes", "--config", cfg.to_str().unwrap()]);
    assert!(e.contains("bad.cfg:3") && e.contains("bogus.key"), "{e}");

    std::fs::write(&cfg, "geometry.gap_nm = minus one\n").unwrap();
    let e = fails(d.path(), &["modes", "--config", cfg.to_str().unwrap()]);
    assert!(e.contains("bad.cfg:1") && e.contains("geometry.gap_nm"), "{e}");

    let e = fails(d.path(), &["modes", "--set", "grid.resolution_nm"]);
    assert!(e.contains("KEY=VALUE"), "{e}");
    let e = fails(d.path(), &["frobnicate"]);
    assert!(e.contains("frobnicate"), "{e}");
}

#[test]
fn flags_override_the_config_file() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("w.cfg");
    std::fs::write(&cfg, "geometry.width_nm = 180\n").unwrap();
    let s = ok(d.path(), &["modes", "--config", cfg.to_str().unwrap(), "--width", "250", "--which", "waveguide", "--resolution", "20", "--modes", "1"]);
    assert!(s.starts_with("# waveguide w = 250 nm"), "{s}");
}

#[test]
fn g2_fixture_recovers_its_g2_zero() {
    let d = tempfile::tempdir().unwrap();
    let s = ok(d.path(), &["fit", "g2", fixture("g2_synthetic.csv").to_str().unwrap()]);
    let [v, _, lo, hi] = fit_row(d.path(), "g2", "g2_zero");
    assert!(lo <= 0.20 && 0.20 <= hi, "{v} [{lo}, {hi}]");
    assert!(s.contains("area method"), "{s}");
    let [_, _, lo, hi] = fit_row(d.path(), "g2", "bunching");
    assert!(lo <= 0.8 && 0.8 <= hi);
}

#[test]
fn saturation_and_decay_fixtures_round_trip() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["fit", "saturation", fixture("saturation.csv").to_str().unwrap()]);
    for (name, truth) in [("i_max", 50000.0), ("p_sat", 2.0)] {
        let [v, _, lo, hi] = fit_row(d.path(), "saturation", name);
        assert!(lo <= truth && truth <= hi, "{name}: {v} [{lo}, {hi}]");
    }
    let s = ok(d.path(), &["fit", "decay", fixture("decay.csv").to_str().unwrap()]);
    let [_, _, lo, hi] = fit_row(d.path(), "decay", "rate_per_ns");
    assert!(lo <= 1.13 && 1.13 <= hi);
    assert!(s.contains("lifetime"));
}

#[test]
fn malformed_csv_names_row_and_column() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("bad.csv");
    std::fs::write(&p, "power,counts\n0.5,100\n1.0,12x\n1.5,300\n").unwrap();
    let e = fails(d.path(), &["fit", "saturation", p.to_str().unwrap()]);
    assert!(e.contains("line 3") && e.contains("column 2") && e.contains("counts"), "{e}");

    std::fs::write(&p, "power,rate\n0.5,100\n").unwrap();
    let e = fails(d.path(), &["fit", "saturation", p.to_str().unwrap()]);
    assert!(e.contains("missing column `counts`"), "{e}");
}

#[test]
fn designed_taper_checks_at_its_alpha_and_transmits() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    let s = ok(dir, &["--resolution", "20", "taper", "design", "--w-start", "300", "--w-tip", "140", "--alpha", "0.1"]);
    assert!(s.starts_with("alpha = 0.1000"), "{s}");
    let profile = dir.join("profile.csv");
    let table = dir.join("dispersion.csv");
    let csv = std::fs::read_to_string(&profile).unwrap();
    let w = column(&csv, "w_nm");
    assert_eq!((w[0], *w.last().unwrap()), (300.0, 140.0));

    let s = ok(dir, &["--resolution", "20", "taper", "check", "--profile", profile.to_str().unwrap(), "--table", table.to_str().unwrap()]);
    let ratio: f64 = s.trim_start_matches("max ratio = ").split_whitespace().next().unwrap().parse().unwrap();
    assert!((ratio - 0.1).abs() <= 0.002, "{s}");

    let s = ok(dir, &["--resolution", "20", "taper", "propagate", "--profile", profile.to_str().unwrap(), "--wavelength", "940", "--sections", "30"]);
    let t: f64 = s.split("T_fiber = ").nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!(t >= 0.8, "{s}");
    let transfer = std::fs::read_to_string(dir.join("transfer.csv")).unwrap();
    let y = column(&transfer, "y_um");
    let ys = column(&csv, "y_um");
    assert_eq!((y[0], *y.last().unwrap()), (0.0, *ys.last().unwrap()));

    ok(dir, &["--resolution", "20", "taper", "sweep-lambda", "900:960:5", "--profile", profile.to_str().unwrap(), "--sections", "4", "--modes", "2"]);
    let csv = std::fs::read_to_string(dir.join("t_lambda.csv")).unwrap();
    assert!(csv.starts_with("lambda_nm,T_fiber,"), "{csv}");
    let l = column(&csv, "lambda_nm");
    assert_eq!(l.len(), 13);
    assert_eq!((l[0], l[12]), (900.0, 960.0));
}

#[test]
fn sweep_writes_branches_in_width_order() {
    let d = tempfile::tempdir().unwrap();
    let s = ok(d.path(), &["--resolution", "20", "--threads", "2", "sweep", "--w-min", "200", "--w-max", "300", "--points", "3", "--which", "waveguide", "--svg"]);
    assert!(s.starts_with("waveguide: 3 of 3 widths"), "{s}");
    let csv = std::fs::read_to_string(d.path().join("sweep_waveguide.csv")).unwrap();
    assert!(csv.starts_with("width_nm,branch_id,n_eff,te_fraction\n"));
    let w = column(&csv, "width_nm");
    assert!(w.windows(2).all(|p| p[0] <= p[1]));
    assert!(std::fs::read_to_string(d.path().join("sweep_waveguide.svg")).unwrap().starts_with("<svg"));

    let e = fails(d.path(), &["sweep", "--points", "1"]);
    assert!(e.contains("--points"), "{e}");
}

#[test]
fn help_goes_to_stdout_and_succeeds() {
    let d = tempfile::tempdir().unwrap();
    let s = ok(d.path(), &["--help"]);
    for cmd in ["modes", "sweep", "taper", "fit", "budget"] {
        assert!(s.contains(cmd), "{s}");
    }
}
