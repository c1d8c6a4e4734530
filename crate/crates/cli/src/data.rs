//! Sample sources: synthetic scenarios or CAEZ-lite files, both streamed.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use csi_sensing::classify::next_day_scenario;
use csi_sensing::ingest::{DatasetReader, Flags};
use csi_sensing::model::{CsiSample, ScenarioMeta};
use csi_sensing::synthgen::{preset_scenarios, random_scatterers, Preset, SynthScenario};
use csi_sensing::{rng, Result as CoreResult};

use crate::config::{ExperimentConfig, Pipeline};
use crate::error::CliError;

pub fn scenario_meta(cfg: &ExperimentConfig) -> ScenarioMeta {
    let mut meta = cfg.preset.meta().with_subcarriers(cfg.subcarriers);
    meta.subcarrier_spacing = cfg.subcarrier_spacing;
    meta
}

/// Synthetic scenarios for `cfg`: one per device for the device preset.
pub fn scenarios(cfg: &ExperimentConfig) -> Result<Vec<SynthScenario>, CliError> {
    let meta = scenario_meta(cfg);
    let mut out = preset_scenarios(cfg.preset, meta.clone(), cfg.duration, cfg.data_seed());
    let want = if cfg.pipeline.is_classification() { cfg.devices } else { out.len() };
    if want > out.len() {
        return Err(CliError::Config(format!(
            "preset {} provides {} devices, {want} requested",
            cfg.preset.name(),
            out.len()
        )));
    }
    out.truncate(want);
    let scatterers = random_scatterers(&meta, cfg.scatterers, rng::derive(cfg.data_seed(), 1));
    for s in &mut out {
        s.scatterers = scatterers.clone();
        s.snr_db = cfg.snr_db;
        s.motion.kind = cfg.motion;
        s.motion.speed = cfg.speed;
        s.motion.dwell = cfg.dwell;
        if cfg.pipeline.is_classification() {
            s.label_devices = true;
        }
    }
    Ok(out)
}

pub fn next_day_scenarios(cfg: &ExperimentConfig, base: &[SynthScenario]) -> Result<Vec<SynthScenario>, CliError> {
    base.iter()
        .enumerate()
        .map(|(k, s)| Ok(next_day_scenario(s, cfg.next_day_oru, rng::derive(cfg.next_day_seed(), k as u64))?))
        .collect()
}

/// Where the samples of one run come from.
pub enum Source {
    Synthetic(Vec<SynthScenario>),
    Files(Vec<PathBuf>),
}

/// Header information available before any sample is read.
#[derive(Debug, Clone)]
pub struct SourceInfo {
    pub meta: ScenarioMeta,
    pub flags: Flags,
    pub count: u64,
}

fn open(path: &Path) -> Result<DatasetReader<BufReader<File>>, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(format!("opening {}", path.display()), e))?;
    Ok(DatasetReader::open(BufReader::new(f))?)
}

impl Source {
    pub fn for_config(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        if cfg.datasets.is_empty() {
            Ok(Source::Synthetic(scenarios(cfg)?))
        } else {
            Ok(Source::Files(cfg.datasets.clone()))
        }
    }

    pub fn info(&self) -> Result<SourceInfo, CliError> {
        match self {
            Source::Synthetic(s) => {
                let first = s.first().ok_or_else(|| CliError::Config("no scenarios".into()))?;
                Ok(SourceInfo {
                    meta: first.meta.clone(),
                    flags: Flags {
                        positions: first.label_positions,
                        device_ids: first.label_devices,
                        orientation: false,
                    },
                    count: s.iter().map(|s| s.num_samples() as u64).sum(),
                })
            }
            Source::Files(paths) => {
                let mut info: Option<SourceInfo> = None;
                for p in paths {
                    let r = open(p)?;
                    match info.as_mut() {
                        None => {
                            info = Some(SourceInfo {
                                meta: r.meta().clone(),
                                flags: r.flags(),
                                count: r.len(),
                            })
                        }
                        Some(i) => {
                            if r.meta() != &i.meta {
                                return Err(CliError::Config(format!(
                                    "{} has a different scenario than the first dataset",
                                    p.display()
                                )));
                            }
                            i.flags.positions &= r.flags().positions;
                            i.flags.device_ids &= r.flags().device_ids;
                            i.count += r.len();
                        }
                    }
                }
                info.ok_or_else(|| CliError::Config("no datasets".into()))
            }
        }
    }

    /// Every sample, dataset after dataset.
    pub fn samples(&self) -> Result<Box<dyn Iterator<Item = CoreResult<CsiSample>> + '_>, CliError> {
        match self {
            Source::Synthetic(s) => {
                let streams = s.iter().map(|sc| sc.stream()).collect::<CoreResult<Vec<_>>>()?;
                Ok(Box::new(streams.into_iter().flatten()))
            }
            Source::Files(paths) => {
                let readers = paths.iter().map(|p| open(p)).collect::<Result<Vec<_>, _>>()?;
                Ok(Box::new(readers.into_iter().flatten()))
            }
        }
    }
}

/// Rejects pipeline/dataset combinations that cannot work, before any
/// expensive step.
pub fn check_source(pipeline: Pipeline, info: &SourceInfo, files: bool) -> Result<(), CliError> {
    let needs_positions = matches!(
        pipeline,
        Pipeline::Positioning | Pipeline::ChartTriplet | Pipeline::ChartRealWorld
    );
    if needs_positions && !info.flags.positions {
        return Err(CliError::Config(format!(
            "pipeline {} needs position labels, the dataset has none",
            pipeline.name()
        )));
    }
    if pipeline.is_classification() && !info.flags.device_ids {
        return Err(CliError::Config(format!(
            "pipeline {} needs device ids, the dataset has none",
            pipeline.name()
        )));
    }
    if pipeline == Pipeline::TwinClassify && files {
        return Err(CliError::Config("twin_classify builds its twin device synthetically".into()));
    }
    Ok(())
}

pub fn preset_file_names(preset: Preset, count: usize) -> Vec<String> {
    if count == 1 {
        vec![format!("{}.caez", preset.name())]
    } else {
        (0..count).map(|k| format!("{}_device{k}.caez", preset.name())).collect()
    }
}
