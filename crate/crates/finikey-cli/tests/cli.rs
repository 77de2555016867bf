//! Black-box checks of the command-line contract: exit codes, output
//! formats, and a few numerical spot values read back through stdout.

use std::process::{Command, Output};

fn finikey(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finikey"))
        .args(args)
        .env_remove("FINIKEY_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| {
            let (k, v) = l.split_once(':')?;
            (k == key).then_some(v)
        })
        .unwrap_or_else(|| panic!("missing field {key} in:\n{text}"))
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap_or_else(|e| panic!("unparsable field {key}: {e}"))
}

#[test]
fn usage_errors_exit_64() {
    // missing required option
    let out = finikey(&["rate", "--protocol", "bb84", "--attack", "collective", "--N", "1e8"]);
    assert_eq!(out.status.code(), Some(64));
    // unknown subcommand
    let out = finikey(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(64));
    // partial security-budget group
    let out = finikey(&[
        "rate", "--protocol", "bb84", "--attack", "collective", "--N", "1e8", "--qber", "0.05",
        "--eps-pe", "1e-10",
    ]);
    assert_eq!(out.status.code(), Some(64));
    // empty qber list
    let out = finikey(&["sweep", "--protocol", "bb84", "--qbers", ""]);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn domain_errors_exit_2() {
    // qber outside [0, 1/2]
    let out = finikey(&[
        "rate", "--protocol", "bb84", "--attack", "collective", "--N", "1e8", "--qber", "0.7",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // sweep range outside [1e2, 1e16]
    let out = finikey(&[
        "sweep", "--protocol", "bb84", "--qbers", "0.05", "--n-min", "10", "--n-max", "1e8",
        "--n-count", "3",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // too many sweep points
    let out = finikey(&[
        "sweep", "--protocol", "bb84", "--qbers", "0.05", "--n-min", "1e4", "--n-max", "1e8",
        "--n-count", "20000",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_73() {
    let out = finikey(&[
        "sweep", "--protocol", "bb84", "--qbers", "0.05", "--n-min", "1e4", "--n-max", "1e6",
        "--n-count", "3", "--output", "/nonexistent-dir/out.csv",
    ]);
    assert_eq!(out.status.code(), Some(73));
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(finikey(&["--help"]).status.code(), Some(0));
    assert_eq!(finikey(&["--version"]).status.code(), Some(0));
    assert_eq!(finikey(&["rate", "--help"]).status.code(), Some(0));
}

#[test]
fn rate_reports_near_asymptote_at_huge_n() {
    let out = finikey(&[
        "rate", "--protocol", "bb84", "--attack", "collective", "--N", "1e14", "--qber", "0.01",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let rate = field(&text, "rate");
    // default conventions sift asymptotically (ratio -> 1), so the rate
    // approaches 1 - 2.1 h(0.01) = 0.830334...
    assert!(
        (rate - 0.830_334_414_618_586_5).abs() < 2e-3,
        "rate {rate} too far from asymptote"
    );
    assert!(field(&text, "m") > 0.0);
}

#[test]
fn zero_rate_still_exits_0() {
    let out = finikey(&[
        "rate", "--protocol", "bb84", "--attack", "postselection", "--N", "1e3", "--qber", "0.1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(field(&stdout(&out), "rate"), 0.0);
}

#[test]
fn compare_reports_three_models_and_gap() {
    let out = finikey(&["compare", "--protocol", "bb84", "--N", "1e6", "--qber", "0.01"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let coll = field(&text, "r_coll");
    let coh = field(&text, "r_coh");
    let post = field(&text, "r_post");
    assert!(coll >= coh && coll >= post);
    assert!(text.contains("coh_vs_post: +"), "gap line missing:\n{text}");
}

#[test]
fn compare_marks_gap_undefined_when_postselection_dies() {
    let out = finikey(&["compare", "--protocol", "bb84", "--N", "1e4", "--qber", "0.1"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("coh_vs_post: undefined (r_post = 0)"));
}

#[test]
fn sweep_csv_has_expected_shape() {
    let out = finikey(&[
        "sweep", "--protocol", "six-state", "--models", "collective,coherent", "--qbers",
        "0.01,0.05", "--n-min", "1e4", "--n-max", "1e8", "--n-count", "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "protocol,attack,N,qber,m_opt,eps_pe,eps_ec,eps_pa,eps_bar,rate"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2 * 2 * 3, "2 models x 2 qbers x 3 Ns");
    for row in rows {
        assert_eq!(row.split(',').count(), 10, "bad row: {row}");
        assert!(row.starts_with("six-state,"));
    }
}

#[test]
fn sweep_json_parses_and_matches_csv_cardinality() {
    let out = finikey(&[
        "sweep", "--protocol", "bb84", "--qbers", "0.05", "--n-min", "1e4", "--n-max", "1e6",
        "--n-count", "2", "--format", "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("valid json");
    let rows = rows.as_array().expect("top-level array");
    assert_eq!(rows.len(), 3 * 2, "3 default models x 2 Ns");
    for row in rows {
        assert!(row["rate"].as_f64().unwrap() >= 0.0);
        assert!(row["N"].as_f64().unwrap() >= 1e4);
    }
}

#[test]
fn sweep_gnuplot_blocks_are_double_blank_separated() {
    let out = finikey(&[
        "sweep", "--protocol", "bb84", "--models", "collective", "--qbers", "0.01,0.1",
        "--n-min", "1e4", "--n-max", "1e8", "--n-count", "3", "--format", "gnuplot",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let blocks: Vec<&str> = text.split("\n\n\n").collect();
    assert_eq!(blocks.len(), 2, "one block per (attack, qber):\n{text}");
    for block in blocks {
        let mut lines = block.lines();
        assert!(lines.next().unwrap().starts_with("# protocol=bb84 attack=collective qber="));
        assert_eq!(lines.next().unwrap(), "# N rate");
        assert_eq!(lines.clone().count(), 3, "3 N points per block");
        for data in lines {
            assert_eq!(data.split_whitespace().count(), 2);
        }
    }
}

#[test]
fn fixed_budget_rate_accepts_full_group() {
    let out = finikey(&[
        "rate", "--protocol", "bb84", "--attack", "coherent", "--N", "1e8", "--qber", "0.02",
        "--eps-pe", "2e-10", "--eps-ec", "2e-10", "--eps-pa", "2e-10", "--eps-bar", "2e-10",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(field(&text, "eps_pe"), 2e-10);
    // coherent budgets count the smoothing term twice
    assert_eq!(field(&text, "eps_total"), 1e-9);
    assert!(field(&text, "rate") > 0.0);
}

#[test]
fn bad_thread_env_exits_64() {
    let out = Command::new(env!("CARGO_BIN_EXE_finikey"))
        .args(["rate", "--protocol", "bb84", "--attack", "collective", "--N", "1e6", "--qber",
            "0.01"])
        .env("FINIKEY_THREADS", "zero")
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn selftest_passes() {
    let out = finikey(&["selftest", "--samples", "2000"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text.matches(": ok").count(), 6, "six checks:\n{text}");
    assert!(!text.contains("FAIL"));
}
