//! End-to-end tests of the `folio` binary: every subcommand, the exit-code
//! contract, and byte-level reproducibility of the primary outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use folio_core::market::{generate_synthetic, SyntheticConfig};

fn folio() -> Command {
    Command::new(env!("CARGO_BIN_EXE_folio"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output().expect("binary runs").status.code().expect("exit code")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(&path, body).unwrap();
    path
}

/// CSV fixture with two assets over three half-hour periods.
fn small_csv(dir: &Path) -> PathBuf {
    let path = dir.join("prices.csv");
    let mut text =
        String::from("timestamp_unix_seconds,asset_symbol,price_in_quote,volume_in_quote\n");
    for (t, price, volume) in [(0, 0.5, 10.0), (1800, 0.6, 11.0), (3600, 0.7, 12.0)] {
        let _ = writeln!(text, "{t},BTC,1.0,0.0");
        let _ = writeln!(text, "{t},ETH,{price},{volume}");
    }
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn ingest_is_deterministic_and_fills_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let csv = small_csv(dir.path());
    let a = dir.path().join("a.fds");
    let b = dir.path().join("b.fds");
    run_ok(folio().args(["ingest", "--input"]).arg(&csv).arg("--dataset").arg(&a));
    run_ok(folio().args(["ingest", "--input"]).arg(&csv).arg("--dataset").arg(&b));
    let bytes_a = std::fs::read(&a).unwrap();
    assert_eq!(bytes_a, std::fs::read(&b).unwrap(), "re-ingest must be byte-identical");
    assert!(!bytes_a.is_empty());
}

#[test]
fn ingest_rejects_missing_quote_asset_with_config_exit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("no_quote.csv");
    std::fs::write(
        &path,
        "timestamp_unix_seconds,asset_symbol,price_in_quote,volume_in_quote\n0,ETH,0.5,1.0\n",
    )
    .unwrap();
    let out = dir.path().join("out.fds");
    let code = exit_code(folio().args(["ingest", "--input"]).arg(&path).arg("--dataset").arg(&out));
    assert_eq!(code, 2, "missing quote asset is a configuration error");
}

#[test]
fn ingest_rejects_malformed_rows_with_data_exit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(
        &path,
        "timestamp_unix_seconds,asset_symbol,price_in_quote,volume_in_quote\n0,BTC,1.0,0.0\noops,BTC,1.0\n",
    )
    .unwrap();
    let out = dir.path().join("out.fds");
    let code = exit_code(folio().args(["ingest", "--input"]).arg(&path).arg("--dataset").arg(&out));
    assert_eq!(code, 3);
}

#[test]
fn one_year_fixture_has_the_expected_shape() {
    // 12 assets at 1800-second periods over one year: 365 * 48 = 17520 columns
    let dir = tempfile::tempdir().unwrap();
    let data = generate_synthetic(
        &SyntheticConfig::new(1, 12, 17_520).with_volatility(vec![0.005]),
    )
    .unwrap();
    let csv_path = dir.path().join("year.csv");
    let mut text =
        String::from("timestamp_unix_seconds,asset_symbol,price_in_quote,volume_in_quote\n");
    for (i, asset) in data.assets().iter().enumerate() {
        for (t, ts) in data.timestamps().iter().enumerate() {
            let _ = writeln!(text, "{ts},{asset},{},{}", data.price(i, t), data.volume(i, t));
        }
    }
    std::fs::write(&csv_path, text).unwrap();
    let out = dir.path().join("year.fds");
    let output = run_ok(folio().args(["ingest", "--input"]).arg(&csv_path).arg("--dataset").arg(&out));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("12 assets x 17520 periods"), "got: {stdout}");
}

#[test]
fn synth_is_reproducible_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "synth_seed = 7\nsynth_assets = 4\nsynth_periods = 300\n",
    );
    let a = dir.path().join("a.fds");
    let b = dir.path().join("b.fds");
    run_ok(folio().args(["synth", "--dataset"]).arg(&a).arg("--config").arg(&cfg));
    run_ok(folio().args(["synth", "--dataset"]).arg(&b).arg("--config").arg(&cfg));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

fn train_fixture(dir: &Path, steps: usize) -> (PathBuf, PathBuf) {
    // three assets, one deterministically gaining 1% per period
    let cfg = write_config(
        dir,
        &format!(
            "desk_scale = true\nnumber_of_coins = 3\nsynth_assets = 3\nsynth_periods = 400\n\
             synth_drift = 0,0,0.01\nsynth_volatility = 0\ntotal_steps = {steps}\nseeds = 0,1\n"
        ),
    );
    let dataset = dir.join("train.fds");
    run_ok(folio().args(["synth", "--dataset"]).arg(&dataset).arg("--config").arg(&cfg));
    (cfg, dataset)
}

#[test]
fn train_writes_checkpoint_tables_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, dataset) = train_fixture(dir.path(), 300);
    let out = dir.path().join("run1");
    run_ok(
        folio()
            .args(["train", "--dataset"])
            .arg(&dataset)
            .arg("--out")
            .arg(&out)
            .arg("--config")
            .arg(&cfg),
    );
    for file in ["checkpoint.json", "per_seed.csv", "seed_summary.csv", "training_log.csv", "run_config.txt"] {
        assert!(out.join(file).exists(), "{file} missing");
    }
    let per_seed = std::fs::read_to_string(out.join("per_seed.csv")).unwrap();
    assert_eq!(per_seed.lines().count(), 3, "header plus one row per seed");
    let summary = std::fs::read_to_string(out.join("seed_summary.csv")).unwrap();
    assert!(summary.starts_with("metric,maximum,minimum,mean,standard_deviation\n"));
    assert!(summary.contains("test_final_value,"));
    assert!(summary.contains("cv_reward,"));

    // identical rerun produces identical primary outputs
    let out2 = dir.path().join("run2");
    run_ok(
        folio()
            .args(["train", "--dataset"])
            .arg(&dataset)
            .arg("--out")
            .arg(&out2)
            .arg("--config")
            .arg(&cfg),
    );
    for file in ["checkpoint.json", "per_seed.csv", "seed_summary.csv", "training_log.csv"] {
        assert_eq!(
            std::fs::read(out.join(file)).unwrap(),
            std::fs::read(out2.join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }
}

#[test]
fn backtest_of_ucrp_on_constant_prices_is_flat_with_undefined_sharpe() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "desk_scale = true\nnumber_of_coins = 3\nsynth_assets = 3\nsynth_periods = 300\n\
         synth_volatility = 0\ncommission_fee = 0\n",
    );
    let dataset = dir.path().join("flat.fds");
    run_ok(folio().args(["synth", "--dataset"]).arg(&dataset).arg("--config").arg(&cfg));
    let out = dir.path().join("bt");
    run_ok(
        folio()
            .args(["backtest", "--dataset"])
            .arg(&dataset)
            .arg("--out")
            .arg(&out)
            .arg("--config")
            .arg(&cfg)
            .args(["--strategies", "ucrp"]),
    );
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let row = summary.lines().nth(1).unwrap();
    assert!(row.starts_with("ucrp,1,undefined,0,0"), "got: {row}");
}

#[test]
fn backtest_with_agent_emits_seven_rows_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, dataset) = train_fixture(dir.path(), 300);
    let train_out = dir.path().join("train");
    run_ok(
        folio()
            .args(["train", "--dataset"])
            .arg(&dataset)
            .arg("--out")
            .arg(&train_out)
            .arg("--config")
            .arg(&cfg),
    );
    let checkpoint = train_out.join("checkpoint.json");
    let bt1 = dir.path().join("bt1");
    let bt2 = dir.path().join("bt2");
    for out in [&bt1, &bt2] {
        run_ok(
            folio()
                .args(["backtest", "--dataset"])
                .arg(&dataset)
                .arg("--out")
                .arg(out)
                .arg("--config")
                .arg(&cfg)
                .arg("--checkpoint")
                .arg(&checkpoint)
                .arg("--emit-curves"),
        );
    }
    let summary = std::fs::read_to_string(bt1.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 8, "header plus six strategies plus agent");
    for name in ["ubah", "beststock", "ucrp", "up", "ons", "pamr", "agent"] {
        assert!(summary.contains(&format!("\n{name},")) , "{name} missing from summary");
    }
    for file in ["report.json", "summary.csv", "curves.csv"] {
        assert_eq!(
            std::fs::read(bt1.join(file)).unwrap(),
            std::fs::read(bt2.join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }
}

#[test]
fn backtest_rejects_incompatible_checkpoints_before_simulating() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, dataset) = train_fixture(dir.path(), 50);
    let train_out = dir.path().join("train");
    run_ok(
        folio()
            .args(["train", "--dataset"])
            .arg(&dataset)
            .arg("--out")
            .arg(&train_out)
            .arg("--config")
            .arg(&cfg),
    );
    // same dataset but a different window size in the run config
    let clashing = write_config(
        &dir.path().join("."),
        "desk_scale = true\nnumber_of_coins = 3\nwindow_size = 12\n",
    );
    let code = exit_code(
        folio()
            .args(["backtest", "--dataset"])
            .arg(&dataset)
            .arg("--out")
            .arg(dir.path().join("bt"))
            .arg("--config")
            .arg(&clashing)
            .arg("--checkpoint")
            .arg(train_out.join("checkpoint.json")),
    );
    assert_eq!(code, 2, "incompatible checkpoint is a configuration error");
}

#[test]
fn compare_merges_and_sorts_reports() {
    let dir = tempfile::tempdir().unwrap();
    // synthesize three single-policy reports with known final values
    let template = |name: &str, value: f64| -> String {
        format!(
            r#"{{"version":1,"assets":["BTC","ETH"],"window_size":10,"commission_rate":0.0025,
               "test_range":{{"start":80,"end":100}},"policies":[{{"policy":"{name}",
               "capital_curve":[1.0,{value}],"weights_log":[],"period_returns":[0.0],
               "final_value":{value},"sharpe":null,"max_drawdown":0.0,"return_std":0.0,
               "geometric_mean_return":1.0}}]}}"#
        )
    };
    let pamr = dir.path().join("pamr.json");
    let agent = dir.path().join("agent.json");
    let ons = dir.path().join("ons.json");
    std::fs::write(&pamr, template("pamr", 21.872857)).unwrap();
    std::fs::write(&agent, template("agent", 16.305332)).unwrap();
    std::fs::write(&ons, template("ons", 2.648263)).unwrap();
    let out = dir.path().join("cmp");
    run_ok(
        folio()
            .arg("compare")
            .arg(&ons)
            .arg(&pamr)
            .arg(&agent)
            .arg("--out")
            .arg(&out),
    );
    let csv = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    let names: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(names, vec!["pamr", "agent", "ons"], "sorted by final value descending");

    // a single report merges to itself
    let solo = dir.path().join("solo");
    run_ok(folio().arg("compare").arg(&pamr).arg("--out").arg(&solo));
    let solo_csv = std::fs::read_to_string(solo.join("comparison.csv")).unwrap();
    assert_eq!(solo_csv.lines().count(), 2);
    assert!(solo_csv.contains("pamr,21.872857"));

    // mismatched test ranges cannot be compared
    let clash = dir.path().join("clash.json");
    std::fs::write(
        &clash,
        template("ubah", 1.0).replace("\"start\":80", "\"start\":70"),
    )
    .unwrap();
    let code = exit_code(
        folio()
            .arg("compare")
            .arg(&pamr)
            .arg(&clash)
            .arg("--out")
            .arg(dir.path().join("cmp2")),
    );
    assert_eq!(code, 3);
}

#[test]
fn seeds_flag_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, dataset) = train_fixture(dir.path(), 50);
    let out = dir.path().join("flagged");
    run_ok(
        folio()
            .args(["train", "--dataset"])
            .arg(&dataset)
            .arg("--out")
            .arg(&out)
            .arg("--config")
            .arg(&cfg)
            .args(["--seeds", "3"]),
    );
    let per_seed = std::fs::read_to_string(out.join("per_seed.csv")).unwrap();
    assert_eq!(per_seed.lines().count(), 2, "config had two seeds, flag forces one");
    assert!(per_seed.lines().nth(1).unwrap().starts_with("3,"));
}
