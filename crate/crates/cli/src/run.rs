//! `run`: extract, split, train and evaluate one pipeline into a run directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use csi_sensing::charting::{chart_samples, eval_chart, train_chart, ChartSample};
use csi_sensing::classify::{evaluate_classifier, split_dev_class, train_classifier, ConfusionMatrix};
use csi_sensing::features::{extract_rffi_feature, RffiFeature};
use csi_sensing::ingest;
use csi_sensing::model::{split_random, CsiSample};
use csi_sensing::nn::{self, write_checkpoint, History, Network};
use csi_sensing::positioning::{eval_positioning, position_samples, train_positioner, GridSpec, PositionSample};
use csi_sensing::{rng, Result as CoreResult};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Pipeline};
use crate::data::{check_source, next_day_scenarios, Source};
use crate::error::CliError;

pub const METRICS_FILE: &str = "metrics.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let p = dir.join(name);
    File::create(&p)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(format!("creating {}", p.display()), e))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(format!("writing {name}"), e))
}

fn write_json(dir: &Path, name: &str, v: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(v).expect("json values serialize");
    text.push('\n');
    write_text(dir, name, &text)
}

fn write_with<F>(dir: &Path, name: &str, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> CoreResult<()>,
{
    let mut w = create(dir, name)?;
    f(&mut w)?;
    w.flush().map_err(|e| CliError::io(format!("writing {name}"), e))
}

fn save_model(dir: &Path, net: &Network<f64>, history: &History) -> Result<(), CliError> {
    write_with(dir, "model.ckpt", |w| write_checkpoint(w, net, history.epochs.len() as u64))?;
    write_with(dir, "history.csv", |w| history.write_csv(w))
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("metrics serialize")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs `cfg` into `out` and returns the metrics that were written.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Value, CliError> {
    let source = Source::for_config(cfg)?;
    let info = source.info()?;
    check_source(cfg.pipeline, &info, matches!(source, Source::Files(_)))?;
    if !cfg.pipeline.is_classification() && cfg.datasets.len() > 1 {
        return Err(CliError::Config(format!("pipeline {} takes a single dataset", cfg.pipeline.name())));
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::io(format!("creating {}", out.display()), e))?;
    let config_text = cfg.to_toml();
    write_text(out, CONFIG_FILE, &config_text)?;
    write_json(out, MANIFEST_FILE, &manifest(cfg, &config_text))?;

    let mut metrics = Map::new();
    metrics.insert("pipeline".into(), json!(cfg.pipeline.name()));
    metrics.insert("preset".into(), json!(cfg.preset.name()));
    metrics.insert("seed".into(), json!(cfg.seed));
    metrics.insert("samples".into(), json!(info.count));
    match cfg.pipeline {
        Pipeline::Positioning => positioning(cfg, &source, &info.meta, out, &mut metrics)?,
        Pipeline::ChartTriplet | Pipeline::ChartRealWorld => chart(cfg, &source, &info.meta, out, &mut metrics)?,
        Pipeline::Classify | Pipeline::TwinClassify => classify(cfg, &source, out, &mut metrics)?,
    }
    let metrics = Value::Object(metrics);
    write_json(out, METRICS_FILE, &metrics)?;
    Ok(metrics)
}

fn manifest(cfg: &ExperimentConfig, config_text: &str) -> Value {
    json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "pipeline": cfg.pipeline.name(),
        "config_file": CONFIG_FILE,
        "config_sha256": sha256_hex(config_text.as_bytes()),
        "seeds": {
            "master": cfg.seed,
            "data": cfg.data_seed(),
            "split": cfg.split_seed(),
            "network": cfg.net_seed(),
            "shuffle": cfg.shuffle_seed(),
            "mining": cfg.mining_seed(),
            "next_day": cfg.next_day_seed(),
        },
        "formats": {
            "dataset": ingest::VERSION,
            "checkpoint": nn::CHECKPOINT_VERSION,
        },
        "datasets": cfg.datasets.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "rerun": format!("csi-sense run --config {CONFIG_FILE}"),
    })
}

fn positioning(
    cfg: &ExperimentConfig,
    source: &Source,
    meta: &csi_sensing::ScenarioMeta,
    out: &Path,
    metrics: &mut Map<String, Value>,
) -> Result<(), CliError> {
    let samples = position_samples(source.samples()?)?;
    let split = split_random(samples.len(), cfg.train_frac, cfg.holdout_tail, cfg.split_seed())?;
    let pick = |idx: &[usize]| -> Vec<&PositionSample> { idx.iter().map(|&i| &samples[i]).collect() };
    let grid = GridSpec::for_meta(meta, cfg.pitch)?;
    let (model, history) = train_positioner(&pick(&split.train), &grid, &cfg.positioner())?;
    let test = eval_positioning(&model, &pick(&split.test))?;
    write_with(out, "positions.csv", |w| test.write_csv(w))?;
    metrics.insert("train_samples".into(), json!(split.train.len()));
    metrics.insert("test".into(), to_value(&test.stats));
    if !split.tail.is_empty() {
        let tail = eval_positioning(&model, &pick(&split.tail))?;
        write_with(out, "positions_tail.csv", |w| tail.write_csv(w))?;
        metrics.insert("tail".into(), to_value(&tail.stats));
    }
    metrics.insert("final_train_loss".into(), json!(history.final_train_loss()));
    save_model(out, &model.net, &history)?;
    write_json(out, "scaler.json", &to_value(&model.scaler))
}

fn chart(
    cfg: &ExperimentConfig,
    source: &Source,
    meta: &csi_sensing::ScenarioMeta,
    out: &Path,
    metrics: &mut Map<String, Value>,
) -> Result<(), CliError> {
    let samples = chart_samples(source.samples()?, cfg.taps)?;
    let split = split_random(samples.len(), cfg.train_frac, cfg.holdout_tail, cfg.split_seed())?;
    let pick = |idx: &[usize]| -> Vec<&ChartSample> { idx.iter().map(|&i| &samples[i]).collect() };
    let (model, mined, history) = train_chart(&pick(&split.train), meta, &cfg.chart())?;
    let mut test_idx = split.test.clone();
    test_idx.extend(&split.tail);
    let with_error = cfg.pipeline == Pipeline::ChartRealWorld;
    let k = (cfg.k > 0).then_some(cfg.k);
    let report = eval_chart(&model, &pick(&test_idx), meta, k, with_error)?;
    write_with(out, "chart.csv", |w| report.write_csv(w))?;
    metrics.insert("train_samples".into(), json!(split.train.len()));
    metrics.insert("test_samples".into(), json!(test_idx.len()));
    metrics.insert("triplets".into(), json!(mined.triplets.len()));
    metrics.insert("skipped_anchors".into(), json!(mined.skipped_anchors));
    metrics.insert("k".into(), json!(report.k));
    metrics.insert("continuity".into(), json!(report.continuity));
    metrics.insert("trustworthiness".into(), json!(report.trustworthiness));
    metrics.insert("outside_box".into(), json!(report.outside_box));
    if let Some(e) = report.error {
        metrics.insert("test".into(), to_value(&e));
        metrics.insert("area_diagonal".into(), json!(meta.area_diagonal()));
    }
    metrics.insert("final_train_loss".into(), json!(history.final_train_loss()));
    save_model(out, &model.net, &history)?;
    write_json(out, "scaler.json", &to_value(&model.scaler))
}

struct Rffi {
    feature: RffiFeature,
    device: u16,
    timestamp: f64,
}

fn rffi_features<I: Iterator<Item = CoreResult<CsiSample>>>(samples: I) -> Result<Vec<Rffi>, CliError> {
    samples
        .enumerate()
        .map(|(i, s)| {
            let s = s?;
            let device = s
                .device_id
                .ok_or_else(|| CliError::Data(format!("sample {i} has no device id")))?;
            Ok(Rffi {
                feature: extract_rffi_feature(&s)?,
                device,
                timestamp: s.timestamp,
            })
        })
        .collect()
}

fn pairs<'a>(items: &'a [Rffi], idx: &[usize]) -> Vec<(&'a RffiFeature, u16)> {
    idx.iter().map(|&i| (&items[i].feature, items[i].device)).collect()
}

fn all_pairs(items: &[Rffi]) -> Vec<(&RffiFeature, u16)> {
    items.iter().map(|r| (&r.feature, r.device)).collect()
}

fn save_confusion(out: &Path, stem: &str, m: &ConfusionMatrix) -> Result<(), CliError> {
    write_with(out, &format!("{stem}.csv"), |w| m.write_csv(w))?;
    write_with(out, &format!("{stem}_percent.csv"), |w| m.write_percent_csv(w))
}

fn classify(cfg: &ExperimentConfig, source: &Source, out: &Path, metrics: &mut Map<String, Value>) -> Result<(), CliError> {
    let items = rffi_features(source.samples()?)?;
    let ids: Vec<u16> = items.iter().map(|r| r.device).collect();
    let ts: Vec<f64> = items.iter().map(|r| r.timestamp).collect();
    let split = split_dev_class(&ids, &ts)?;
    let mut classes: Vec<u16> = ids.clone();
    classes.sort_unstable();
    classes.dedup();
    let same_day = pairs(&items, &split.same_day_test);
    let (model, history) = train_classifier(&pairs(&items, &split.train), &same_day, &classes, &cfg.classifier())?;
    let cm = evaluate_classifier(&model, &same_day)?;
    save_confusion(out, "confusion_same_day", &cm)?;
    metrics.insert("classes".into(), json!(classes));
    metrics.insert("train_samples".into(), json!(split.train.len()));
    metrics.insert("same_day_test_samples".into(), json!(split.same_day_test.len()));
    metrics.insert("same_day_accuracy".into(), json!(cm.accuracy()));
    metrics.insert("epochs_run".into(), json!(history.epochs.len()));
    metrics.insert("best_epoch".into(), json!(history.best_epoch));

    let next_day = match source {
        Source::Synthetic(base) if cfg.next_day => Some(Source::Synthetic(next_day_scenarios(cfg, base)?)),
        Source::Files(_) if !cfg.next_day_datasets.is_empty() => Some(Source::Files(cfg.next_day_datasets.clone())),
        _ => None,
    };
    if let Some(nd) = next_day {
        let nd_items = rffi_features(nd.samples()?)?;
        let cm = evaluate_classifier(&model, &all_pairs(&nd_items))?;
        save_confusion(out, "confusion_next_day", &cm)?;
        metrics.insert("next_day_test_samples".into(), json!(nd_items.len()));
        metrics.insert("next_day_accuracy".into(), json!(cm.accuracy()));
    }

    if cfg.pipeline == Pipeline::TwinClassify {
        let Source::Synthetic(base) = source else {
            return Err(CliError::Config("twin_classify needs synthetic data".into()));
        };
        let sibling = &base[cfg.twin_of as usize];
        let sibling_id = sibling.fingerprints[0].device_id;
        let twin_id = classes.iter().max().map_or(0, |m| m + 1);
        let mut twin = sibling.clone();
        twin.fingerprints = vec![sibling.fingerprints[0].twin(
            twin_id,
            cfg.twin_strength,
            rng::derive(cfg.data_seed(), 0x7717),
        )];
        twin.motion.seed = rng::derive(cfg.data_seed(), 0x7718);
        twin.seed = rng::derive(cfg.data_seed(), 0x7719);
        twin.rnti += 0x100;
        let twin_items = rffi_features(Source::Synthetic(vec![twin.clone()]).samples()?)?;
        let mut test = same_day.clone();
        test.extend(all_pairs(&twin_items));
        let cm = evaluate_classifier(&model, &test)?;
        save_confusion(out, "confusion_twin", &cm)?;
        metrics.insert("twin_device".into(), json!(twin_id));
        metrics.insert("twin_sibling".into(), json!(sibling_id));
        metrics.insert(
            "twin_correlation".into(),
            json!(twin.fingerprints[0].correlation(&sibling.fingerprints[0])),
        );
        metrics.insert("twin_to_sibling".into(), json!(cm.fraction(twin_id, sibling_id)));
        metrics.insert("twin_row".into(), json!(cm.row(twin_id)));
    }
    save_model(out, &model.net, &history)
}
