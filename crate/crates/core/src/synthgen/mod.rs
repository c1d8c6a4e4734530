//! Synthetic multi-ORU uplink CSI: geometric multipath, per-device RF
//! fingerprints, AWGN at a target SNR and protocol-like motion.

mod channel;
mod fingerprint;
mod motion;

pub use channel::{
    antenna_position, gen_channel, random_scatterers, subcarrier_frequency, ChannelResponse,
    Scatterer, MIN_SEGMENT, SPEED_OF_LIGHT,
};
pub use fingerprint::{gen_fingerprints, DeviceFingerprint, MAX_CORRELATION};
pub use motion::{gen_trajectory, yaw_quaternion, MotionConfig, MotionKind, TrajectoryPoint};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CsiSample, CsiTensor, Dataset, Point, ScenarioMeta};
use crate::rng;

pub const DEFAULT_SNR_DB: f64 = 28.0;
pub const DEFAULT_SCATTERERS: usize = 15;
pub const DEFAULT_RNTI: u32 = 0x4601;

/// Extra receive-side response applied to one ORU (e.g. a rewired radio).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverPerturbation {
    pub oru: usize,
    /// One complex gain per subcarrier.
    pub response: Vec<Complex64>,
}

/// Noise-free tensor `H[o][b][s]·g[s]·exp(j·d·drift)` (times any receiver
/// perturbation), before AWGN.
fn clean_csi(
    channel: &ChannelResponse,
    meta: &ScenarioMeta,
    fingerprint: &DeviceFingerprint,
    receiver: Option<&ReceiverPerturbation>,
) -> Result<CsiTensor> {
    let s_len = meta.num_subcarriers;
    if fingerprint.freq_response.len() != s_len {
        return Err(Error::invalid(format!(
            "fingerprint has {} subcarriers, scenario has {s_len}",
            fingerprint.freq_response.len()
        )));
    }
    if let Some(p) = receiver {
        if p.oru >= meta.num_orus || p.response.len() != s_len {
            return Err(Error::invalid("receiver perturbation does not match the scenario"));
        }
    }
    let mut csi = CsiTensor::for_meta(meta);
    for o in 0..meta.num_orus {
        let rx = receiver.filter(|p| p.oru == o).map(|p| p.response.as_slice());
        for b in 0..meta.antennas_per_oru {
            let h = channel.row(o, b);
            for d in 0..meta.num_dmrs {
                let rot = Complex64::from_polar(1.0, d as f64 * fingerprint.dmrs_phase_drift);
                let row = csi.row_mut(o, b, d);
                for s in 0..s_len {
                    let mut v = h[s] * fingerprint.freq_response[s] * rot;
                    if let Some(rx) = rx {
                        v *= rx[s];
                    }
                    row[s] = v;
                }
            }
        }
    }
    Ok(csi)
}

/// Adds circularly-symmetric Gaussian noise so every ORU sees the target
/// slot-aggregate SNR; returns the per-ORU noise variances. An infinite SNR
/// leaves the tensor untouched.
fn add_noise(csi: &mut CsiTensor, num_orus: usize, snr_db: f64, r: &mut impl Rng) -> Vec<f64> {
    if snr_db == f64::INFINITY {
        return vec![0.0; num_orus];
    }
    let snr = 10f64.powf(snr_db / 10.0);
    (0..num_orus)
        .map(|o| {
            let block = csi.oru_block_mut(o);
            let power = block.iter().map(|v| v.norm_sqr()).sum::<f64>() / block.len() as f64;
            let var = power / snr;
            let sd = (0.5 * var).sqrt();
            for v in block.iter_mut() {
                let re: f64 = r.sample(StandardNormal);
                let im: f64 = r.sample(StandardNormal);
                *v += Complex64::new(sd * re, sd * im);
            }
            var
        })
        .collect()
}

/// One CSI sample of `fingerprint` transmitting from `position`.
///
/// `target_snr_db = f64::INFINITY` disables noise.
pub fn synthesize_sample(
    position: &Point,
    meta: &ScenarioMeta,
    scatterers: &[Scatterer],
    fingerprint: &DeviceFingerprint,
    target_snr_db: f64,
    seed: u64,
) -> Result<CsiSample> {
    if target_snr_db.is_nan() || target_snr_db == f64::NEG_INFINITY {
        return Err(Error::invalid(format!("target SNR {target_snr_db} dB")));
    }
    let channel = gen_channel(position, meta, scatterers)?;
    let mut csi = clean_csi(&channel, meta, fingerprint, None)?;
    let noise_var = add_noise(&mut csi, meta.num_orus, target_snr_db, &mut rng::seeded(seed));
    Ok(CsiSample {
        timestamp: 0.0,
        rnti: DEFAULT_RNTI,
        device_id: Some(fingerprint.device_id),
        csi,
        noise_var,
        position: Some(*position),
        orientation: None,
    })
}

/// Everything needed to generate a dataset reproducibly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthScenario {
    pub meta: ScenarioMeta,
    pub motion: MotionConfig,
    /// Seconds.
    pub duration: f64,
    pub scatterers: Vec<Scatterer>,
    /// Sample `k` is transmitted by `fingerprints[k % len]`.
    pub fingerprints: Vec<DeviceFingerprint>,
    /// dB; `f64::INFINITY` for noiseless data.
    pub snr_db: f64,
    pub label_positions: bool,
    pub label_devices: bool,
    pub rnti: u32,
    pub receiver: Option<ReceiverPerturbation>,
    /// Noise seed; sample `k` draws from stream `k` of this seed.
    pub seed: u64,
}

impl SynthScenario {
    pub fn trajectory(&self) -> Result<Vec<TrajectoryPoint>> {
        gen_trajectory(&self.meta, &self.motion, self.duration)
    }

    /// Sample `index` at trajectory point `point`.
    pub fn sample(&self, index: usize, point: &TrajectoryPoint) -> Result<CsiSample> {
        if self.fingerprints.is_empty() {
            return Err(Error::invalid("at least one fingerprint is required"));
        }
        let fp = &self.fingerprints[index % self.fingerprints.len()];
        let channel = gen_channel(&point.position, &self.meta, &self.scatterers)?;
        let mut csi = clean_csi(&channel, &self.meta, fp, self.receiver.as_ref())?;
        let noise_var = add_noise(
            &mut csi,
            self.meta.num_orus,
            self.snr_db,
            &mut rng::stream(self.seed, index as u64),
        );
        let mut sample = CsiSample {
            timestamp: point.timestamp,
            rnti: self.rnti,
            device_id: self.label_devices.then_some(fp.device_id),
            csi,
            noise_var,
            position: self.label_positions.then_some(point.position),
            orientation: point.orientation,
        };
        sample.round_to_storage();
        Ok(sample)
    }

    /// Lazily generated samples, for datasets too large to hold in memory.
    pub fn stream(&self) -> Result<SampleStream<'_>> {
        if self.fingerprints.is_empty() {
            return Err(Error::invalid("at least one fingerprint is required"));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::invalid(format!("target SNR {} dB", self.snr_db)));
        }
        Ok(SampleStream {
            scenario: self,
            trajectory: self.trajectory()?,
            next: 0,
        })
    }

    pub fn num_samples(&self) -> usize {
        (self.duration / self.meta.sample_period).round() as usize
    }
}

pub struct SampleStream<'a> {
    scenario: &'a SynthScenario,
    trajectory: Vec<TrajectoryPoint>,
    next: usize,
}

impl SampleStream<'_> {
    pub fn trajectory(&self) -> &[TrajectoryPoint] {
        &self.trajectory
    }
}

impl Iterator for SampleStream<'_> {
    type Item = Result<CsiSample>;

    fn next(&mut self) -> Option<Self::Item> {
        let point = self.trajectory.get(self.next)?;
        let out = self.scenario.sample(self.next, point);
        self.next += 1;
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.trajectory.len() - self.next;
        (n, Some(n))
    }
}

/// Materializes a scenario into an in-memory dataset.
pub fn gen_dataset(scenario: &SynthScenario) -> Result<Dataset> {
    let samples = scenario.stream()?.collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        meta: scenario.meta.clone(),
        samples,
    })
}

/// Scenario presets modelled on the three measurement campaigns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 3.5 m × 3.5 m lab, robot on random waypoints, 20 ms cadence.
    Indoor,
    /// 10 m × 10 m courtyard, manually driven robot, 20 ms cadence.
    Outdoor,
    /// 4 m × 4 m lab, turntable + hand-carried walk per device, 10 ms cadence.
    #[serde(rename = "devclass")]
    DevClass,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Indoor, Preset::Outdoor, Preset::DevClass];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Indoor => "indoor",
            Preset::Outdoor => "outdoor",
            Preset::DevClass => "devclass",
        }
    }

    pub fn from_name(name: &str) -> Option<Preset> {
        Preset::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn meta(self) -> ScenarioMeta {
        match self {
            Preset::Indoor => ScenarioMeta::square(3.5, 0.020),
            Preset::Outdoor => ScenarioMeta::square(10.0, 0.020),
            Preset::DevClass => ScenarioMeta::square(4.0, 0.010),
        }
    }

    pub fn motion(self, seed: u64) -> MotionConfig {
        match self {
            Preset::Indoor => MotionConfig { kind: MotionKind::RandomWaypoint, speed: 2.5, dwell: 0.0, seed },
            Preset::Outdoor => MotionConfig { kind: MotionKind::ManualPath, speed: 2.0, dwell: 0.0, seed },
            Preset::DevClass => MotionConfig { kind: MotionKind::RotationThenWalk, speed: 1.0, dwell: 30.0, seed },
        }
    }

    /// Default recording length, seconds (per device for `DevClass`).
    pub fn duration(self) -> f64 {
        match self {
            Preset::Indoor => 60.0,
            Preset::Outdoor => 100.0,
            Preset::DevClass => 120.0,
        }
    }

    /// Devices recorded (one dataset each for `DevClass`).
    pub fn num_devices(self) -> usize {
        match self {
            Preset::DevClass => 6,
            _ => 1,
        }
    }

    pub fn position_tagged(self) -> bool {
        !matches!(self, Preset::DevClass)
    }
}

/// The datasets of one preset: a single scenario for positioning presets,
/// one scenario per device for `DevClass` (shared scatterers, separate walks).
pub fn preset_scenarios(preset: Preset, meta: ScenarioMeta, duration: f64, seed: u64) -> Vec<SynthScenario> {
    let scatterers = random_scatterers(&meta, DEFAULT_SCATTERERS, rng::derive(seed, 1));
    let fingerprints = gen_fingerprints(preset.num_devices(), meta.num_subcarriers, rng::derive(seed, 2));
    fingerprints
        .into_iter()
        .enumerate()
        .map(|(k, fp)| SynthScenario {
            meta: meta.clone(),
            motion: preset.motion(rng::derive(seed, 100 + k as u64)),
            duration,
            scatterers: scatterers.clone(),
            fingerprints: vec![fp],
            snr_db: DEFAULT_SNR_DB,
            label_positions: preset.position_tagged(),
            label_devices: !preset.position_tagged(),
            rnti: DEFAULT_RNTI + k as u32,
            receiver: None,
            seed: rng::derive(seed, 200 + k as u64),
        })
        .collect()
}
