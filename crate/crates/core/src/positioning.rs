//! Supervised positioning with a probability-map output: every grid point gets
//! a sigmoid score, and the normalized scores are decoded by posterior mean.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::extract_pos_feature;
use crate::model::{dist, CsiSample, Point, ScenarioMeta};
use crate::nn::{
    self, loss, Activation, GradSeed, Network, NetworkSpec, Objective, OptimizerConfig, Standardizer, Tensor,
};

/// Mean / median / 95th percentile on the real indoor and outdoor
/// recordings, centimeters. Kept for report tables only.
pub const REFERENCE_INDOOR_CM: [f64; 3] = [0.6, 0.5, 1.3];
pub const REFERENCE_OUTDOOR_CM: [f64; 3] = [5.7, 4.6, 13.2];

pub const INDOOR_PITCH: f64 = 0.10;
pub const OUTDOOR_PITCH: f64 = 0.25;

/// Regular lattice of candidate positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub pitch: f64,
    pub points: Vec<Point>,
}

impl GridSpec {
    /// Lattice over `[min, max]` on every axis with nonzero extent.
    pub fn lattice(min: Point, max: Point, pitch: f64) -> Result<Self> {
        if !(pitch > 0.0) || !pitch.is_finite() {
            return Err(Error::invalid(format!("grid pitch {pitch} must be positive")));
        }
        let axis = |i: usize| -> Vec<f64> {
            let extent = max[i] - min[i];
            if extent <= 0.0 {
                return vec![min[i]];
            }
            let n = (extent / pitch + 1e-9).floor() as usize + 1;
            (0..n).map(|k| min[i] + k as f64 * pitch).collect()
        };
        let (xs, ys, zs) = (axis(0), axis(1), axis(2));
        let mut points = Vec::with_capacity(xs.len() * ys.len() * zs.len());
        for &z in &zs {
            for &y in &ys {
                for &x in &xs {
                    points.push([x, y, z]);
                }
            }
        }
        if points.len() < 4 {
            return Err(Error::invalid(format!(
                "grid has {} points, at least 4 needed",
                points.len()
            )));
        }
        Ok(GridSpec { pitch, points })
    }

    pub fn for_meta(meta: &ScenarioMeta, pitch: f64) -> Result<Self> {
        Self::lattice(meta.area_min, meta.area_max, pitch)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Non-negative weights over the grid points, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap(pub Vec<f64>);

impl ProbabilityMap {
    /// Normalizes arbitrary non-negative scores; an all-zero or non-finite
    /// input decodes as uniform.
    pub fn from_scores(scores: &[f64]) -> Self {
        let clean: Vec<f64> = scores
            .iter()
            .map(|&v| if v.is_finite() && v > 0.0 { v } else { 0.0 })
            .collect();
        let sum: f64 = clean.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            ProbabilityMap(clean.iter().map(|v| v / sum).collect())
        } else {
            ProbabilityMap(vec![1.0 / scores.len() as f64; scores.len()])
        }
    }
}

/// Gaussian ground-truth map centred on `position`.
pub fn make_gt_map(position: &Point, grid: &GridSpec, sigma: f64) -> Result<ProbabilityMap> {
    let mut out = vec![0.0; grid.len()];
    gt_map_into(position, grid, sigma, &mut out)?;
    Ok(ProbabilityMap(out))
}

fn gt_map_into(position: &Point, grid: &GridSpec, sigma: f64, out: &mut [f64]) -> Result<()> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("kernel width {sigma} must be positive")));
    }
    let d2: Vec<f64> = grid
        .points
        .iter()
        .map(|g| {
            let d = dist(g, position);
            d * d
        })
        .collect();
    // shift by the nearest point so the kernel never underflows entirely
    let min = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut sum = 0.0;
    for (o, d) in out.iter_mut().zip(&d2) {
        *o = (-(d - min) * inv).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
    Ok(())
}

pub fn posterior_mean(map: &ProbabilityMap, grid: &GridSpec) -> Point {
    let mut p = [0.0; 3];
    for (w, g) in map.0.iter().zip(&grid.points) {
        for i in 0..3 {
            p[i] += w * g[i];
        }
    }
    p
}

pub fn posterior_variance(map: &ProbabilityMap, grid: &GridSpec) -> f64 {
    let m = posterior_mean(map, grid);
    map.0
        .iter()
        .zip(&grid.points)
        .map(|(w, g)| {
            let d = dist(g, &m);
            w * d * d
        })
        .sum()
}

/// One feature vector with its optional label.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionSample {
    pub timestamp: f64,
    pub feature: Vec<f64>,
    pub position: Option<Point>,
}

pub fn position_sample(sample: &CsiSample) -> Result<PositionSample> {
    Ok(PositionSample {
        timestamp: sample.timestamp,
        feature: extract_pos_feature(sample)?.0,
        position: sample.position,
    })
}

/// Extracts features from a sample stream without keeping the CSI around.
pub fn position_samples<I>(samples: I) -> Result<Vec<PositionSample>>
where
    I: IntoIterator<Item = Result<CsiSample>>,
{
    samples.into_iter().map(|s| position_sample(&s?)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionerConfig {
    pub pitch: f64,
    /// Ground-truth kernel width; the grid pitch when absent.
    pub sigma: Option<f64>,
    pub hidden: Vec<usize>,
    pub optimizer: OptimizerConfig,
    pub net_seed: u64,
}

impl PositionerConfig {
    /// 50 epochs of Adam at 1e-4, batch 10, decayed ×0.1 every 20 epochs;
    /// three hidden relu layers of 512.
    pub fn with_pitch(pitch: f64) -> Self {
        PositionerConfig {
            pitch,
            sigma: None,
            hidden: vec![512, 512, 512],
            optimizer: OptimizerConfig {
                optimizer: nn::OptimizerKind::adam(),
                learning_rate: 1e-4,
                scheduler: nn::SchedulerConfig::Step { period: 20, factor: 0.1 },
                early_stop_patience: None,
                batch_size: 10,
                max_epochs: 50,
                seed: 0,
            },
            net_seed: 0,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma.unwrap_or(self.pitch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionerModel {
    pub net: Network<f64>,
    pub scaler: Standardizer,
    pub grid: GridSpec,
}

/// Decoded position with its spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionEstimate {
    pub position: Point,
    pub variance: f64,
}

impl PositionerModel {
    pub fn predict(&self, features: &[&[f64]]) -> Result<Vec<PositionEstimate>> {
        let mut out = Vec::with_capacity(features.len());
        for chunk in features.chunks(256) {
            let rows: Vec<Vec<f64>> = chunk.iter().map(|f| self.scaler.apply(f)).collect();
            let y = self.net.forward(&Tensor::from_rows(&rows)?)?;
            for i in 0..chunk.len() {
                let map = ProbabilityMap::from_scores(y.item(i));
                out.push(PositionEstimate {
                    position: posterior_mean(&map, &self.grid),
                    variance: posterior_variance(&map, &self.grid),
                });
            }
        }
        Ok(out)
    }
}

struct MapObjective<'a> {
    samples: Vec<(Vec<f64>, Point)>,
    grid: &'a GridSpec,
    sigma: f64,
}

impl Objective<f64> for MapObjective<'_> {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn batch_loss(&self, net: &Network<f64>, items: &[usize], grads: &mut [f64]) -> Result<f64> {
        let rows: Vec<&[f64]> = items.iter().map(|&i| self.samples[i].0.as_slice()).collect();
        let tape = net.forward_tape(&Tensor::from_rows(&rows)?)?;
        let g = self.grid.len();
        let mut target = vec![0.0; items.len() * g];
        for (k, &i) in items.iter().enumerate() {
            gt_map_into(&self.samples[i].1, self.grid, self.sigma, &mut target[k * g..(k + 1) * g])?;
        }
        let out = tape.output().data();
        let value = loss::bce_mean(out, &target);
        let dz = loss::bce_sigmoid_grad(out, &target);
        net.backward(&tape, GradSeed::PreActivation(&dz), grads)?;
        Ok(value)
    }
}

/// Trains the probability-map network on labeled samples.
pub fn train_positioner(
    samples: &[&PositionSample],
    grid: &GridSpec,
    config: &PositionerConfig,
) -> Result<(PositionerModel, nn::History)> {
    let labeled = samples
        .iter()
        .map(|s| {
            s.position
                .map(|p| (s.feature.as_slice(), p))
                .ok_or_else(|| Error::Data(format!("training sample at t={} has no position label", s.timestamp)))
        })
        .collect::<Result<Vec<_>>>()?;
    let inputs = labeled
        .first()
        .map(|s| s.0.len())
        .ok_or_else(|| Error::invalid("no training samples"))?;
    let scaler = Standardizer::fit(&labeled.iter().map(|s| s.0).collect::<Vec<_>>())?;
    let labeled = labeled.into_iter().map(|(f, p)| (scaler.apply(f), p)).collect();
    let spec = NetworkSpec::mlp(
        inputs,
        &config.hidden,
        grid.len(),
        Activation::Relu,
        Activation::Sigmoid,
        config.net_seed,
    );
    let mut net = Network::new(spec)?;
    let objective = MapObjective {
        samples: labeled,
        grid,
        sigma: config.sigma(),
    };
    let history = nn::train(&mut net, &objective, &config.optimizer, None)?;
    Ok((
        PositionerModel {
            net,
            scaler,
            grid: grid.clone(),
        },
        history,
    ))
}

/// Percentile with linear interpolation between order statistics
/// (rank `p/100 · (n-1)`).
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl ErrorStats {
    pub fn from_errors(errors: &[f64]) -> Self {
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = if sorted.is_empty() {
            f64::NAN
        } else {
            sorted.iter().sum::<f64>() / sorted.len() as f64
        };
        ErrorStats {
            count: sorted.len(),
            mean,
            median: percentile(&sorted, 50.0),
            p95: percentile(&sorted, 95.0),
        }
    }
}

/// Per-sample evaluation row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionRecord {
    pub timestamp: f64,
    pub truth: Point,
    pub estimate: Point,
    pub error: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositioningReport {
    pub stats: ErrorStats,
    pub records: Vec<PositionRecord>,
}

impl PositioningReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("writing positioning csv", e);
        writeln!(w, "timestamp,true_x,true_y,est_x,est_y,error,variance").map_err(io)?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.timestamp, r.truth[0], r.truth[1], r.estimate[0], r.estimate[1], r.error, r.variance
            )
            .map_err(io)?;
        }
        Ok(())
    }
}

/// Error statistics of `model` on labeled test samples.
pub fn eval_positioning(model: &PositionerModel, samples: &[&PositionSample]) -> Result<PositioningReport> {
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.feature.as_slice()).collect();
    let estimates = model.predict(&rows)?;
    let records = samples
        .iter()
        .zip(estimates)
        .map(|(s, e)| {
            let truth = s
                .position
                .ok_or_else(|| Error::Data(format!("test sample at t={} has no position label", s.timestamp)))?;
            Ok(PositionRecord {
                timestamp: s.timestamp,
                truth,
                estimate: e.position,
                error: dist(&truth, &e.position),
                variance: e.variance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = records.iter().map(|r| r.error).collect();
    Ok(PositioningReport {
        stats: ErrorStats::from_errors(&errors),
        records,
    })
}
