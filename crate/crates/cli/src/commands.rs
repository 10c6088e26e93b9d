//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::Path;

use folio_core::agent::{self, AgentCheckpoint, TrainOptions, TrainedAgent};
use folio_core::backtest::{self, BacktestConfig, BacktestReport};
use folio_core::market::{self, GlobalPriceMatrix, PeriodRange, PriceChangeVector, SyntheticConfig};
use folio_core::strategies::{build_strategy, StrategyKind};
use folio_core::DatasetSplit;

use crate::config::RunConfig;
use crate::dataset;
use crate::error::CliError;
use crate::report::{curves_csv, merge, RunReport, REPORT_VERSION};

/// Ingest a CSV history, repair missing cells and persist the dataset.
pub fn cmd_ingest(input: &Path, output: &Path, config: &RunConfig) -> Result<(), CliError> {
    let raw = market::ingest_csv(input, config.trading_period, &config.quote_asset)?;
    let filled = raw.fill_missing_history(config.fake_decay_rate)?;
    dataset::save(&filled, output)?;
    println!(
        "ingested {} assets x {} periods -> {}",
        filled.asset_count(),
        filled.period_count(),
        output.display()
    );
    Ok(())
}

/// Generate a synthetic dataset from the configured process.
pub fn cmd_synth(output: &Path, config: &RunConfig) -> Result<(), CliError> {
    let synth = SyntheticConfig {
        seed: config.synth_seed,
        assets: config.synth_assets,
        periods: config.synth_periods,
        period_seconds: config.trading_period,
        start_timestamp: 0,
        growth: config.synth_drift.clone(),
        volatility: config.synth_volatility.clone(),
        mean_reversion: config.synth_mean_reversion,
        base_volume: 1000.0,
    };
    let data = market::generate_synthetic(&synth)?;
    dataset::save(&data, output)?;
    println!(
        "generated {} assets x {} periods -> {}",
        data.asset_count(),
        data.period_count(),
        output.display()
    );
    Ok(())
}

/// Trim the dataset to the configured global time span (most recent part).
fn apply_time_span(data: GlobalPriceMatrix, config: &RunConfig) -> Result<GlobalPriceMatrix, CliError> {
    match config.span_periods() {
        Some(span) if data.period_count() > span => {
            let n = data.period_count();
            Ok(data.slice_periods(PeriodRange::new(n - span, n))?)
        }
        _ => Ok(data),
    }
}

/// Split, then (optionally) restrict to the top-volume assets ranked just
/// before the evaluation span begins.
fn split_and_select(
    data: GlobalPriceMatrix,
    config: &RunConfig,
) -> Result<(GlobalPriceMatrix, DatasetSplit), CliError> {
    let split = data.split(config.portions(), config.window_size)?;
    if config.number_of_coins < data.asset_count() {
        let chosen = data.select_assets(
            config.number_of_coins,
            split.test.start,
            config.volume_average_days,
        )?;
        let restricted = data.restrict(&chosen)?;
        return Ok((restricted, split));
    }
    Ok((data, split))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

/// Train with model selection; write the best checkpoint, the per-seed
/// table, the seed-summary statistics and the training-log stream.
pub fn cmd_train(dataset_path: &Path, out_dir: &Path, config: &RunConfig) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    let data = apply_time_span(dataset::load(dataset_path)?, config)?;
    let (data, split) = split_and_select(data, config)?;
    let agent_config = config.agent_config(data.asset_count());
    let options = TrainOptions {
        log_every: (agent_config.total_steps / 200).max(1),
        cv_every: (agent_config.total_steps / 10).max(1),
    };
    let (selection, logs) = agent::model_select_logged(&data, &split, &agent_config, options)?;

    // per-seed cross-validation reward and test-range final value
    let backtest_config = BacktestConfig::new(split.test, config.window_size, data.asset_count())
        .with_commission(config.commission_fee);
    let mut per_seed = String::from("seed,cv_reward,test_final_value,status\n");
    let mut cv_values = Vec::new();
    let mut test_values = Vec::new();
    for run in &selection.runs {
        match &run.outcome {
            Ok(trained) => {
                let mut policy = trained.clone();
                let report = backtest::run(&mut policy, &data, &backtest_config)?;
                let _ = writeln!(
                    per_seed,
                    "{},{},{},ok",
                    run.seed, trained.cv_reward, report.final_value
                );
                cv_values.push(trained.cv_reward);
                test_values.push(report.final_value);
            }
            Err(e) => {
                let _ = writeln!(per_seed, "{},,,{}", run.seed, e);
            }
        }
    }
    write(&out_dir.join("per_seed.csv"), &per_seed)?;

    let mut summary = String::from("metric,maximum,minimum,mean,standard_deviation\n");
    for (metric, values) in [("test_final_value", &test_values), ("cv_reward", &cv_values)] {
        let (max, min, mean, std) = table_stats(values);
        let _ = writeln!(summary, "{metric},{max},{min},{mean},{std}");
    }
    write(&out_dir.join("seed_summary.csv"), &summary)?;

    let mut log_csv = String::from("seed,step,batch_reward,l2_penalty,cv_reward\n");
    for (seed, records) in &logs {
        for record in records {
            let cv = record
                .cv_reward
                .map(|c| c.to_string())
                .unwrap_or_default();
            let _ = writeln!(
                log_csv,
                "{seed},{},{},{},{cv}",
                record.step, record.batch_reward, record.l2_penalty
            );
        }
    }
    write(&out_dir.join("training_log.csv"), &log_csv)?;

    let assets: Vec<String> = data.assets().iter().map(|a| a.as_str().to_string()).collect();
    let checkpoint = AgentCheckpoint::from_agent(selection.best(), assets);
    write(&out_dir.join("checkpoint.json"), &checkpoint.to_json())?;
    write(&out_dir.join("run_config.txt"), &config.render())?;
    println!(
        "trained {} seeds, best seed {} (cv reward {}), checkpoint -> {}",
        selection.runs.len(),
        selection.best_seed(),
        selection.best().cv_reward,
        out_dir.join("checkpoint.json").display()
    );
    Ok(())
}

fn table_stats(values: &[f64]) -> (f64, f64, f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (values.len() - 1) as f64)
            .sqrt()
    };
    (max, min, mean, std)
}

/// Simulate the requested policies over the test range and write the JSON
/// report plus the CSV summary (and optionally the capital curves).
pub fn cmd_backtest(
    dataset_path: &Path,
    out_dir: &Path,
    checkpoint_path: Option<&Path>,
    emit_curves: bool,
    config: &RunConfig,
) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    let data = apply_time_span(dataset::load(dataset_path)?, config)?;

    let checkpoint = checkpoint_path
        .map(|p| -> Result<AgentCheckpoint, CliError> {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", p.display())))?;
            AgentCheckpoint::from_json(&text).map_err(CliError::from)
        })
        .transpose()?;

    // reproduce the training-time asset view: the checkpoint pins the asset
    // list it was trained on, otherwise the volume-ranking rule applies
    let (data, split) = match &checkpoint {
        Some(ckpt) => {
            let assets = ckpt
                .assets
                .iter()
                .map(|s| market::AssetId::new(s.clone()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(CliError::from)?;
            let restricted = data.restrict(&assets)?;
            let split = restricted.split(config.portions(), config.window_size)?;
            (restricted, split)
        }
        None => split_and_select(data, config)?,
    };
    if let Some(ckpt) = &checkpoint {
        if ckpt.config.window_size != config.window_size {
            return Err(CliError::Config(format!(
                "checkpoint window size {} does not match the run's window size {}",
                ckpt.config.window_size, config.window_size
            )));
        }
        if ckpt.config.assets != data.asset_count() {
            return Err(CliError::Config(format!(
                "checkpoint expects {} assets, dataset provides {}",
                ckpt.config.assets,
                data.asset_count()
            )));
        }
    }

    let tokens: Vec<String> = match &config.strategies {
        Some(list) => list.clone(),
        None => {
            let mut all: Vec<String> =
                StrategyKind::ALL.iter().map(|k| k.name().to_string()).collect();
            if checkpoint.is_some() {
                all.push("agent".to_string());
            }
            all
        }
    };

    let assets = data.asset_count();
    let hindsight: Vec<PriceChangeVector> = (split.test.start..split.test.end - 1)
        .map(|t| data.price_change_vector(t))
        .collect::<Result<_, _>>()
        .map_err(CliError::from)?;
    let strategy_params = config.strategy_params();

    let backtest_config = BacktestConfig::new(split.test, config.window_size, assets)
        .with_commission(config.commission_fee);
    let mut reports: Vec<BacktestReport> = Vec::new();
    for token in &tokens {
        let report = if token == "agent" {
            let ckpt = checkpoint.clone().ok_or_else(|| {
                CliError::Config("strategy \"agent\" requires --checkpoint".into())
            })?;
            let mut policy: TrainedAgent = ckpt.into_agent();
            backtest::run(&mut policy, &data, &backtest_config)?
        } else {
            let kind: StrategyKind = token.parse().map_err(CliError::from)?;
            let mut policy = build_strategy(kind, assets, &strategy_params, &hindsight)?;
            backtest::run(policy.as_mut(), &data, &backtest_config)?
        };
        reports.push(report);
    }

    let run_report = RunReport {
        version: REPORT_VERSION,
        assets: data.assets().iter().map(|a| a.as_str().to_string()).collect(),
        window_size: config.window_size,
        commission_rate: config.commission_fee,
        test_range: split.test,
        policies: reports,
    };
    write(&out_dir.join("report.json"), &run_report.to_json())?;
    write(
        &out_dir.join("summary.csv"),
        &backtest::summary_csv(&run_report.summary_rows()),
    )?;
    if emit_curves {
        write(&out_dir.join("curves.csv"), &curves_csv(&run_report.policies))?;
    }
    write(&out_dir.join("run_config.txt"), &config.render())?;
    println!(
        "backtested {} policies over periods {}..{} -> {}",
        run_report.policies.len(),
        split.test.start,
        split.test.end,
        out_dir.join("report.json").display()
    );
    Ok(())
}

/// Merge report files into a single comparison sorted by final value.
pub fn cmd_compare(report_paths: &[std::path::PathBuf], out_dir: &Path) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    let reports: Vec<RunReport> = report_paths
        .iter()
        .map(|p| RunReport::load(p))
        .collect::<Result<_, _>>()?;
    let rows = merge(&reports)?;
    write(&out_dir.join("comparison.csv"), &backtest::summary_csv(&rows))?;
    let json = serde_json::to_string_pretty(&rows)
        .map_err(|e| CliError::Data(format!("serialization: {e}")))?;
    write(&out_dir.join("comparison.json"), &json)?;
    println!(
        "merged {} reports, {} policies -> {}",
        reports.len(),
        rows.len(),
        out_dir.join("comparison.csv").display()
    );
    Ok(())
}
