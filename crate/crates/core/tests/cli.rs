use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cavity-spinwave"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn exit_codes_distinguish_failure_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(cli(d, &["frobnicate"]).status.code(), Some(2));

    fs::write(d.join("bad.toml"), "[system]\ng_MHz = 15.8\nfoo_MHz = 1\n").unwrap();
    let o = cli(d, &["--config", "bad.toml", "derive"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(
        stderr(&o).contains("bad.toml:3") && stderr(&o).contains("system.foo_MHz"),
        "{}",
        stderr(&o)
    );

    let o = cli(d, &["--config", "missing.toml", "derive"]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));

    let o = cli(d, &["--set", "pulse.fwhm_ns=-5", "retrieve"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));

    fs::write(d.join("events.txt"), "write_clicks read_clicks\n0 0\n0 7\n").unwrap();
    let o = cli(d, &["stats", "--events", "events.txt"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("events.txt:3"), "{}", stderr(&o));
}

#[test]
fn print_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let o = cli(d, &["--set", "system.g_MHz=12.5", "--print-config", "derive"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("g_MHz = 12.5"));
    fs::write(d.join("echo.toml"), &text).unwrap();
    let again = cli(d, &["--config", "echo.toml", "--print-config", "derive"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn retrieve_flags_override_config_and_are_echoed() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("run.toml"),
        "[system]\ng_MHz = 10.0\n[integrator]\nsamples = 11\n",
    )
    .unwrap();
    let o = cli(
        d,
        &[
            "--config",
            "run.toml",
            "retrieve",
            "--g-mhz",
            "15.8",
            "--delta-r-mhz",
            "-2.5",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(d.join("out/retrieve.csv")).unwrap();
    assert!(csv.contains("# g_MHz = 15.8"));
    assert!(csv.contains("# delta_r_MHz = -2.5"));
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "t_us,intensity");
    assert_eq!(rows.len(), 12);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("out/retrieve.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["config"]["system"]["g_MHz"], 15.8);
    let total = json["budget_total"].as_f64().unwrap();
    assert!((total - 1.0).abs() < 1e-8);
}

#[test]
fn scan_cache_reuses_points_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("scan.toml"),
        "[sweep]\ncache = true\ndr_min_MHz = -20.0\ndr_max_MHz = 20.0\ndr_points = 9\n\
         dc_min_MHz = -4.0\ndc_max_MHz = 4.0\ndc_points = 3\n",
    )
    .unwrap();
    let first = cli(d, &["--config", "scan.toml", "scan"]);
    assert!(first.status.success(), "{}", stderr(&first));
    let csv1 = fs::read(d.join("out/scan.csv")).unwrap();
    let cached: Vec<_> = fs::read_dir(d.join("out/cache")).unwrap().collect();
    assert_eq!(cached.len(), 1);

    let second = cli(d, &["--config", "scan.toml", "--workers", "2", "scan"]);
    assert!(second.status.success());
    assert_eq!(fs::read(d.join("out/scan.csv")).unwrap(), csv1);

    let text = String::from_utf8(csv1).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "dc_MHz,dr_MHz,chi");
    assert_eq!(rows.len(), 1 + 27);
}

#[test]
fn simulate_then_stats_echoes_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let o = cli(d, &["--set", "stats.trials=20000", "simulate-events", "--seed", "17"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let events = fs::read_to_string(d.join("out/events.txt")).unwrap();
    assert!(events.starts_with("#@ seed = 17\n"));
    assert_eq!(events.lines().filter(|l| !l.starts_with('#')).count(), 1 + 20000);

    let o = cli(d, &["stats", "--events", "out/events.txt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("out/stats.json")).unwrap()).unwrap();
    assert_eq!(json["summary"]["trials"], 20000);
}
