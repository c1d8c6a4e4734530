//! Experiment configuration: a flat TOML document, optionally pulling in
//! other documents through `include`, laid over pipeline and preset defaults.

use std::path::{Path, PathBuf};

use csi_sensing::charting::ChartConfig;
use csi_sensing::classify::ClassifierConfig;
use csi_sensing::nn::{OptimizerConfig, OptimizerKind, SchedulerConfig};
use csi_sensing::positioning::{PositionerConfig, INDOOR_PITCH, OUTDOOR_PITCH};
use csi_sensing::synthgen::{MotionKind, Preset, DEFAULT_SCATTERERS, DEFAULT_SNR_DB};
use csi_sensing::{model::DEFAULT_NUM_SUBCARRIERS, model::DEFAULT_SUBCARRIER_SPACING, rng};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Includes nested deeper than this are taken to be a cycle.
const MAX_INCLUDE_DEPTH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Pipeline {
    Positioning,
    ChartTriplet,
    ChartRealWorld,
    Classify,
    TwinClassify,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Positioning => "positioning",
            Pipeline::ChartTriplet => "chart_triplet",
            Pipeline::ChartRealWorld => "chart_real_world",
            Pipeline::Classify => "classify",
            Pipeline::TwinClassify => "twin_classify",
        }
    }

    pub fn default_preset(self) -> Preset {
        match self {
            Pipeline::Positioning => Preset::Indoor,
            Pipeline::ChartTriplet | Pipeline::ChartRealWorld => Preset::Outdoor,
            Pipeline::Classify | Pipeline::TwinClassify => Preset::DevClass,
        }
    }

    pub fn is_classification(self) -> bool {
        matches!(self, Pipeline::Classify | Pipeline::TwinClassify)
    }
}

/// Every knob of an experiment. Parsed from TOML with unknown keys rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pipeline: Pipeline,
    pub preset: Preset,
    /// Master seed; data, split, network and shuffling seeds derive from it.
    pub seed: u64,
    /// CAEZ-lite files to use instead of synthetic data.
    pub datasets: Vec<PathBuf>,
    pub next_day_datasets: Vec<PathBuf>,

    /// Seconds (per device for classification).
    pub duration: f64,
    pub subcarriers: usize,
    /// Hz.
    pub subcarrier_spacing: f64,
    pub snr_db: f64,
    pub scatterers: usize,
    pub motion: MotionKind,
    /// m/s.
    pub speed: f64,
    /// Seconds spent still (or rotating) at each waypoint.
    pub dwell: f64,
    pub devices: usize,

    pub train_frac: f64,
    pub holdout_tail: usize,

    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub step_period: usize,
    pub step_factor: f64,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    /// Epochs without improvement before stopping; 0 disables.
    pub early_stop: usize,

    pub pitch: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,

    pub taps: usize,
    pub t_close: f64,
    pub t_far: f64,
    pub per_anchor: usize,
    pub margin: f64,
    pub weight_triplet: f64,
    pub weight_bilateration: f64,
    pub weight_bbox: f64,
    pub power_margin_db: f64,
    /// Neighbourhood size for continuity/trustworthiness; 0 picks 5% of the test set.
    pub k: usize,

    pub channels: usize,
    pub blocks: usize,
    pub kernel: usize,
    pub next_day: bool,
    pub next_day_oru: usize,
    pub twin_of: u16,
    pub twin_strength: f64,
}

impl ExperimentConfig {
    pub fn defaults(pipeline: Pipeline, preset: Preset) -> Self {
        let motion = preset.motion(0);
        let pos = PositionerConfig::with_pitch(if preset == Preset::Indoor { INDOOR_PITCH } else { OUTDOOR_PITCH });
        let chart = match pipeline {
            Pipeline::ChartRealWorld => ChartConfig::real_world(),
            _ => ChartConfig::triplet_only(),
        };
        let class = ClassifierConfig::default();
        let mut c = ExperimentConfig {
            pipeline,
            preset,
            seed: 0,
            datasets: Vec::new(),
            next_day_datasets: Vec::new(),
            duration: preset.duration(),
            subcarriers: DEFAULT_NUM_SUBCARRIERS,
            subcarrier_spacing: DEFAULT_SUBCARRIER_SPACING,
            snr_db: DEFAULT_SNR_DB,
            scatterers: DEFAULT_SCATTERERS,
            motion: motion.kind,
            speed: motion.speed,
            dwell: motion.dwell,
            devices: preset.num_devices(),
            train_frac: 0.8,
            holdout_tail: 0,
            hidden: pos.hidden.clone(),
            learning_rate: pos.optimizer.learning_rate,
            epochs: pos.optimizer.max_epochs,
            batch_size: pos.optimizer.batch_size,
            step_period: 20,
            step_factor: 0.1,
            plateau_patience: 10,
            plateau_factor: 0.2,
            early_stop: 0,
            pitch: pos.pitch,
            sigma: None,
            taps: csi_sensing::features::DEFAULT_CHART_TAPS,
            t_close: chart.t_close,
            t_far: chart.t_far,
            per_anchor: chart.per_anchor,
            margin: chart.margin,
            weight_triplet: chart.weights.triplet,
            weight_bilateration: chart.weights.bilateration,
            weight_bbox: chart.weights.bbox,
            power_margin_db: chart.power_margin_db,
            k: 0,
            channels: class.channels,
            blocks: class.blocks,
            kernel: class.kernel,
            next_day: false,
            next_day_oru: 1,
            twin_of: 0,
            twin_strength: 0.02,
        };
        match pipeline {
            Pipeline::Positioning => c.holdout_tail = 500,
            Pipeline::ChartTriplet | Pipeline::ChartRealWorld => {
                c.hidden = chart.hidden.clone();
                c.learning_rate = chart.optimizer.learning_rate;
                c.epochs = chart.optimizer.max_epochs;
                c.batch_size = chart.optimizer.batch_size;
                if let SchedulerConfig::Step { period, factor } = chart.optimizer.scheduler {
                    c.step_period = period;
                    c.step_factor = factor;
                }
            }
            Pipeline::Classify | Pipeline::TwinClassify => {
                // 96 subcarriers spread over the full band keep training tractable
                c.subcarriers = 96;
                c.subcarrier_spacing = DEFAULT_SUBCARRIER_SPACING * DEFAULT_NUM_SUBCARRIERS as f64 / 96.0;
                c.duration = 20.0;
                c.motion = MotionKind::RandomWaypoint;
                c.speed = 1.0;
                c.dwell = 0.0;
                c.hidden = Vec::new();
                c.learning_rate = class.optimizer.learning_rate;
                c.epochs = class.optimizer.max_epochs;
                c.batch_size = class.optimizer.batch_size;
                c.early_stop = class.optimizer.early_stop_patience.unwrap_or(0);
                c.next_day = pipeline == Pipeline::Classify;
            }
        }
        c
    }

    pub fn data_seed(&self) -> u64 {
        self.seed
    }

    pub fn split_seed(&self) -> u64 {
        rng::derive(self.seed, 0x5011)
    }

    pub fn net_seed(&self) -> u64 {
        rng::derive(self.seed, 0x5012)
    }

    pub fn shuffle_seed(&self) -> u64 {
        rng::derive(self.seed, 0x5013)
    }

    pub fn mining_seed(&self) -> u64 {
        rng::derive(self.seed, 0x5014)
    }

    pub fn next_day_seed(&self) -> u64 {
        rng::derive(self.seed, 0x5015)
    }

    fn optimizer(&self) -> OptimizerConfig {
        let classify = self.pipeline.is_classification();
        OptimizerConfig {
            optimizer: if classify { OptimizerKind::rmsprop() } else { OptimizerKind::adam() },
            learning_rate: self.learning_rate,
            scheduler: if classify {
                SchedulerConfig::Plateau {
                    patience: self.plateau_patience,
                    factor: self.plateau_factor,
                }
            } else {
                SchedulerConfig::Step {
                    period: self.step_period,
                    factor: self.step_factor,
                }
            },
            early_stop_patience: (self.early_stop > 0).then_some(self.early_stop),
            batch_size: self.batch_size,
            max_epochs: self.epochs,
            seed: self.shuffle_seed(),
        }
    }

    pub fn positioner(&self) -> PositionerConfig {
        PositionerConfig {
            pitch: self.pitch,
            sigma: self.sigma,
            hidden: self.hidden.clone(),
            optimizer: self.optimizer(),
            net_seed: self.net_seed(),
        }
    }

    pub fn chart(&self) -> ChartConfig {
        let mut c = if self.pipeline == Pipeline::ChartRealWorld {
            ChartConfig::real_world()
        } else {
            ChartConfig::triplet_only()
        };
        c.hidden = self.hidden.clone();
        c.t_close = self.t_close;
        c.t_far = self.t_far;
        c.per_anchor = self.per_anchor;
        c.margin = self.margin;
        c.weights.triplet = self.weight_triplet;
        c.weights.bilateration = self.weight_bilateration;
        c.weights.bbox = self.weight_bbox;
        c.power_margin_db = self.power_margin_db;
        c.optimizer = self.optimizer();
        c.net_seed = self.net_seed();
        c.mining_seed = self.mining_seed();
        c
    }

    pub fn classifier(&self) -> ClassifierConfig {
        ClassifierConfig {
            channels: self.channels,
            blocks: self.blocks,
            kernel: self.kernel,
            optimizer: self.optimizer(),
            net_seed: self.net_seed(),
            ..ClassifierConfig::default()
        }
    }

    /// Value checks that need no data.
    pub fn check(&self) -> Result<(), CliError> {
        let mut bad = Vec::new();
        if !(self.duration > 0.0) {
            bad.push(format!("duration = {} must be positive", self.duration));
        }
        if self.subcarriers == 0 || self.subcarriers % 12 != 0 {
            bad.push(format!("subcarriers = {} must be a positive multiple of 12", self.subcarriers));
        }
        if !(self.subcarrier_spacing > 0.0) {
            bad.push("subcarrier_spacing must be positive".into());
        }
        if self.snr_db.is_nan() {
            bad.push("snr_db is NaN".into());
        }
        if !(self.speed > 0.0) {
            bad.push("speed must be positive".into());
        }
        if !(self.dwell >= 0.0) {
            bad.push("dwell must be non-negative".into());
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            bad.push(format!("train_frac = {} must lie in (0, 1)", self.train_frac));
        }
        if let Err(e) = self.optimizer().check() {
            bad.push(e.to_string());
        }
        if !(self.pitch > 0.0) {
            bad.push("pitch must be positive".into());
        }
        if self.pipeline.is_classification() {
            if self.devices < 2 {
                bad.push(format!("devices = {} must be at least 2", self.devices));
            }
            if self.pipeline == Pipeline::TwinClassify && self.twin_of as usize >= self.devices {
                bad.push(format!("twin_of = {} is not one of the {} devices", self.twin_of, self.devices));
            }
        }
        if !(self.t_close < self.t_far) {
            bad.push("t_close must be below t_far".into());
        }
        for p in self.datasets.iter().chain(&self.next_day_datasets) {
            if !p.is_file() {
                bad.push(format!("dataset {} does not exist", p.display()));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(bad.join("; ")))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }
}

/// Reads `path` and everything it includes. Keys of the including document
/// win; relative include paths resolve against the including file.
pub fn load_table(path: &Path) -> Result<toml::Table, CliError> {
    load_nested(path, 0)
}

fn load_nested(path: &Path, depth: usize) -> Result<toml::Table, CliError> {
    if depth > MAX_INCLUDE_DEPTH {
        return Err(CliError::Config(format!("include depth exceeded at {}", path.display())));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let includes = match table.remove("include") {
        None => Vec::new(),
        Some(toml::Value::String(s)) => vec![s],
        Some(toml::Value::Array(a)) => a
            .into_iter()
            .map(|v| match v {
                toml::Value::String(s) => Ok(s),
                other => Err(CliError::Config(format!("include entries must be strings, got {other}"))),
            })
            .collect::<Result<_, _>>()?,
        Some(other) => return Err(CliError::Config(format!("include must be a string or list, got {other}"))),
    };
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut merged = toml::Table::new();
    for inc in includes {
        merged.extend(load_nested(&dir.join(inc), depth + 1)?);
    }
    // relative dataset paths in a file are relative to that file
    for key in ["datasets", "next_day_datasets"] {
        if let Some(toml::Value::Array(items)) = table.get_mut(key) {
            for v in items.iter_mut() {
                if let toml::Value::String(s) = v {
                    if Path::new(s.as_str()).is_relative() {
                        *s = dir.join(s.as_str()).to_string_lossy().into_owned();
                    }
                }
            }
        }
    }
    merged.extend(table);
    Ok(merged)
}

/// Command-line overrides, applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub pipeline: Option<Pipeline>,
}

pub fn resolve(file: Option<&Path>, over: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut user = match file {
        Some(p) => load_table(p)?,
        None => toml::Table::new(),
    };
    if let Some(s) = over.seed {
        let s = i64::try_from(s).map_err(|_| CliError::Config(format!("seed {s} exceeds the TOML integer range")))?;
        user.insert("seed".into(), toml::Value::Integer(s));
    }
    if let Some(p) = over.preset {
        user.insert("preset".into(), toml::Value::String(p.name().into()));
    }
    if let Some(p) = over.pipeline {
        user.insert("pipeline".into(), toml::Value::String(p.name().into()));
    }
    let pipeline: Option<Pipeline> = user
        .get("pipeline")
        .map(|v| v.clone().try_into().map_err(|e| CliError::Config(format!("pipeline: {e}"))))
        .transpose()?;
    let preset: Option<Preset> = user
        .get("preset")
        .map(|v| v.clone().try_into().map_err(|e| CliError::Config(format!("preset: {e}"))))
        .transpose()?;
    // a preset alone picks the pipeline it was recorded for
    let pipeline = pipeline.unwrap_or(match preset {
        Some(Preset::DevClass) => Pipeline::Classify,
        _ => Pipeline::Positioning,
    });
    let preset = preset.unwrap_or(pipeline.default_preset());
    let mut table = toml::Table::try_from(ExperimentConfig::defaults(pipeline, preset))
        .map_err(|e| CliError::Config(e.to_string()))?;
    table.extend(user);
    let cfg: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| CliError::Config(e.to_string()))?;
    cfg.check()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        for p in [
            Pipeline::Positioning,
            Pipeline::ChartTriplet,
            Pipeline::ChartRealWorld,
            Pipeline::Classify,
            Pipeline::TwinClassify,
        ] {
            let c = ExperimentConfig::defaults(p, p.default_preset());
            let back: ExperimentConfig = toml::from_str(&c.to_toml()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn include_and_override_order() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("base.toml"), "pipeline = \"chart_triplet\"\nepochs = 7\nseed = 3\n").unwrap();
        std::fs::write(dir.path().join("run.toml"), "include = \"base.toml\"\nepochs = 9\n").unwrap();
        let c = resolve(Some(&dir.path().join("run.toml")), &Overrides::default()).unwrap();
        assert_eq!((c.pipeline, c.preset, c.epochs, c.seed), (Pipeline::ChartTriplet, Preset::Outdoor, 9, 3));
        let over = Overrides {
            seed: Some(11),
            ..Default::default()
        };
        assert_eq!(resolve(Some(&dir.path().join("run.toml")), &over).unwrap().seed, 11);
    }

    #[test]
    fn config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let bad = |text: &str| {
            let p = dir.path().join("c.toml");
            std::fs::write(&p, text).unwrap();
            matches!(resolve(Some(&p), &Overrides::default()), Err(CliError::Config(_)))
        };
        assert!(bad("no_such_key = 1\n"));
        assert!(bad("pipeline = \"nope\"\n"));
        assert!(bad("train_frac = 1.5\n"));
        assert!(bad("datasets = [\"missing.caez\"]\n"));
        assert!(bad("include = \"c.toml\"\n"));
        assert!(!bad("duration = 5\n"));
    }
}
