//! Channel charting: a 2-D embedding of CSI learned from time adjacency
//! (triplet loss), optionally anchored to the map by receive-power
//! bilateration and a bounding-box penalty.

use std::io::Write;

use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{receive_powers_db, ChartExtractor};
use crate::model::{CsiSample, Point, ScenarioMeta};
use crate::nn::{
    self, loss, Activation, GradSeed, Network, NetworkSpec, Objective, OptimizerConfig, Standardizer, Tensor,
};
use crate::positioning::ErrorStats;
use crate::rng;

/// Mean / median / 95th percentile of the real-world chart on the outdoor
/// recording, centimeters. Report tables only.
pub const REFERENCE_REAL_WORLD_CM: [f64; 3] = [73.0, 64.0, 158.0];
/// Continuity and trustworthiness measured on the outdoor recording.
pub const REFERENCE_CONTINUITY: f64 = 0.982;
pub const REFERENCE_TRUSTWORTHINESS: f64 = 0.974;

pub const DEFAULT_T_CLOSE: f64 = 1.0;
pub const DEFAULT_T_FAR: f64 = 30.0;
pub const DEFAULT_POWER_MARGIN_DB: f64 = 13.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: usize,
    pub close: usize,
    pub far: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripletSet {
    pub triplets: Vec<Triplet>,
    /// Anchors without a close or a far candidate.
    pub skipped_anchors: usize,
}

/// Draws up to `per_anchor` distinct triplets for every anchor: the close
/// sample within `t_close` seconds, the far one more than `t_close` and at
/// most `t_far` seconds away. Timestamps must be non-decreasing.
pub fn mine_triplets(timestamps: &[f64], t_close: f64, t_far: f64, per_anchor: usize, seed: u64) -> Result<TripletSet> {
    if !(t_close >= 0.0 && t_close < t_far) {
        return Err(Error::invalid(format!(
            "close window {t_close} s must be below far window {t_far} s"
        )));
    }
    if per_anchor == 0 {
        return Err(Error::invalid("per_anchor must be at least 1"));
    }
    if timestamps.iter().any(|t| !t.is_finite()) || timestamps.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("timestamps must be finite and non-decreasing"));
    }
    let lower = |t: f64| timestamps.partition_point(|&s| s < t);
    let upper = |t: f64| timestamps.partition_point(|&s| s <= t);
    let mut out = TripletSet::default();
    for (i, &t) in timestamps.iter().enumerate() {
        // [c0, c1) close window, [f0, c0) and [c1, f1) far windows
        let (c0, c1) = (lower(t - t_close), upper(t + t_close));
        let (f0, f1) = (lower(t - t_far), upper(t + t_far));
        let n_close = c1 - c0 - 1;
        let n_far = (c0 - f0) + (f1 - c1);
        if n_close == 0 || n_far == 0 {
            out.skipped_anchors += 1;
            continue;
        }
        let pairs = n_close * n_far;
        let mut r = rng::stream(seed, i as u64);
        for p in sample_indices(&mut r, pairs, per_anchor.min(pairs)) {
            let (ci, fi) = (p / n_far, p % n_far);
            let close = if c0 + ci >= i { c0 + ci + 1 } else { c0 + ci };
            let far = if fi < c0 - f0 { f0 + fi } else { c1 + fi - (c0 - f0) };
            out.triplets.push(Triplet { anchor: i, close, far });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartVariant {
    /// Self-supervised; the chart has arbitrary orientation and scale.
    TripletOnly,
    /// Anchored in the map frame through ORU receive powers and the area box.
    RealWorld,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub triplet: f64,
    pub bilateration: f64,
    pub bbox: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartConfig {
    pub variant: ChartVariant,
    pub hidden: Vec<usize>,
    /// Seconds.
    pub t_close: f64,
    /// Seconds.
    pub t_far: f64,
    pub per_anchor: usize,
    /// Triplet margin in chart units (meters for the real-world variant).
    pub margin: f64,
    pub weights: LossWeights,
    pub power_margin_db: f64,
    pub optimizer: OptimizerConfig,
    pub net_seed: u64,
    pub mining_seed: u64,
}

impl ChartConfig {
    pub fn new(variant: ChartVariant) -> Self {
        match variant {
            ChartVariant::TripletOnly => Self::triplet_only(),
            ChartVariant::RealWorld => Self::real_world(),
        }
    }

    /// 300 epochs of Adam at 1e-3, batch 100, ×0.1 every 200 epochs,
    /// one triplet per anchor.
    pub fn triplet_only() -> Self {
        ChartConfig {
            variant: ChartVariant::TripletOnly,
            hidden: vec![256, 128, 64],
            t_close: DEFAULT_T_CLOSE,
            t_far: DEFAULT_T_FAR,
            per_anchor: 1,
            margin: 1.0,
            weights: LossWeights {
                triplet: 1.0,
                bilateration: 0.0,
                bbox: 0.0,
            },
            power_margin_db: DEFAULT_POWER_MARGIN_DB,
            optimizer: OptimizerConfig {
                optimizer: nn::OptimizerKind::adam(),
                learning_rate: 1e-3,
                scheduler: nn::SchedulerConfig::Step { period: 200, factor: 0.1 },
                early_stop_patience: None,
                batch_size: 100,
                max_epochs: 300,
                seed: 0,
            },
            net_seed: 0,
            mining_seed: 0,
        }
    }

    /// 200 epochs, batch 256, ×0.1 every 50 epochs, two triplets per anchor,
    /// weights 1 / 1 / 10.
    pub fn real_world() -> Self {
        let mut c = Self::triplet_only();
        c.variant = ChartVariant::RealWorld;
        c.per_anchor = 2;
        // a heavy bilateration term and a soft margin let the power ordering
        // unfold the chart; at weight 1 the triplet geometry dominates
        c.margin = 0.3;
        c.weights = LossWeights {
            triplet: 1.0,
            bilateration: 20.0,
            bbox: 10.0,
        };
        c.optimizer.batch_size = 256;
        c.optimizer.max_epochs = 200;
        c.optimizer.scheduler = nn::SchedulerConfig::Step { period: 50, factor: 0.1 };
        c
    }
}

/// Chart input for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartSample {
    pub timestamp: f64,
    pub feature: Vec<f64>,
    /// Receive power per ORU, dB.
    pub powers_db: Vec<f64>,
    pub position: Option<Point>,
}

pub fn chart_sample(sample: &CsiSample, extractor: &ChartExtractor) -> Result<ChartSample> {
    Ok(ChartSample {
        timestamp: sample.timestamp,
        feature: extractor.extract(sample)?.0,
        powers_db: receive_powers_db(sample),
        position: sample.position,
    })
}

pub fn chart_samples<I>(samples: I, taps: usize) -> Result<Vec<ChartSample>>
where
    I: IntoIterator<Item = Result<CsiSample>>,
{
    let mut extractor: Option<ChartExtractor> = None;
    samples
        .into_iter()
        .map(|s| {
            let s = s?;
            if extractor.is_none() {
                extractor = Some(ChartExtractor::new(s.csi.shape()[3], taps)?);
            }
            chart_sample(&s, extractor.as_ref().expect("set above"))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartModel {
    pub net: Network<f64>,
    pub scaler: Standardizer,
    pub variant: ChartVariant,
    pub weights: LossWeights,
}

impl ChartModel {
    pub fn predict(&self, features: &[&[f64]]) -> Result<Vec<[f64; 2]>> {
        let mut out = Vec::with_capacity(features.len());
        for chunk in features.chunks(256) {
            let rows: Vec<Vec<f64>> = chunk.iter().map(|f| self.scaler.apply(f)).collect();
            let y = self.net.forward(&Tensor::from_rows(&rows)?)?;
            out.extend((0..chunk.len()).map(|i| [y.item(i)[0], y.item(i)[1]]));
        }
        Ok(out)
    }
}

struct ChartObjective<'a> {
    features: Vec<Vec<f64>>,
    powers: Vec<&'a [f64]>,
    triplets: Vec<Triplet>,
    config: &'a ChartConfig,
    orus: Vec<[f64; 3]>,
    box_min: [f64; 2],
    box_max: [f64; 2],
}

impl Objective<f64> for ChartObjective<'_> {
    fn len(&self) -> usize {
        self.triplets.len()
    }

    fn batch_loss(&self, net: &Network<f64>, items: &[usize], grads: &mut [f64]) -> Result<f64> {
        let mut points: Vec<usize> = items
            .iter()
            .flat_map(|&k| {
                let t = self.triplets[k];
                [t.anchor, t.close, t.far]
            })
            .collect();
        points.sort_unstable();
        points.dedup();
        let slot = |i: usize| points.binary_search(&i).expect("point collected above");
        let rows: Vec<&[f64]> = points.iter().map(|&i| self.features[i].as_slice()).collect();
        let tape = net.forward_tape(&Tensor::from_rows(&rows)?)?;
        let z = tape.output();
        let mut dz = vec![0.0; z.data().len()];
        let w = self.config.weights;
        let mut value = 0.0;

        if w.triplet != 0.0 {
            let scale = w.triplet / items.len() as f64;
            for &k in items {
                let t = self.triplets[k];
                let (a, c, f) = (slot(t.anchor), slot(t.close), slot(t.far));
                let (v, g) = loss::triplet_grad(z.item(a), z.item(c), z.item(f), self.config.margin);
                value += scale * v;
                for d in 0..2 {
                    dz[2 * a + d] += scale * g.anchor[d];
                    dz[2 * c + d] += scale * g.close[d];
                    dz[2 * f + d] += scale * g.far[d];
                }
            }
        }
        let per_point = 1.0 / points.len() as f64;
        for (u, &i) in points.iter().enumerate() {
            let zi = z.item(u);
            if w.bilateration != 0.0 {
                let (v, g) = loss::bilateration_grad(zi, &self.orus, self.powers[i], self.config.power_margin_db);
                value += w.bilateration * per_point * v;
                for d in 0..2 {
                    dz[2 * u + d] += w.bilateration * per_point * g[d];
                }
            }
            if w.bbox != 0.0 {
                let (v, g) = loss::bbox_grad(zi, &self.box_min, &self.box_max);
                value += w.bbox * per_point * v;
                for d in 0..2 {
                    dz[2 * u + d] += w.bbox * per_point * g[d];
                }
            }
        }
        net.backward(&tape, GradSeed::Output(&dz), grads)?;
        Ok(value)
    }
}

/// Trains a chart on `samples`, which must be in time order. `meta` supplies
/// the ORU positions and the area box for the anchoring losses.
pub fn train_chart(
    samples: &[&ChartSample],
    meta: &ScenarioMeta,
    config: &ChartConfig,
) -> Result<(ChartModel, TripletSet, nn::History)> {
    let first = samples.first().ok_or_else(|| Error::invalid("no chart training samples"))?;
    let w = config.weights;
    if [w.triplet, w.bilateration, w.bbox].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid(format!("loss weights {w:?} must be finite and non-negative")));
    }
    if w.bilateration != 0.0 {
        if meta.oru_positions.len() < 2 {
            return Err(Error::invalid("bilateration needs at least two ORU positions"));
        }
        if let Some(s) = samples.iter().find(|s| s.powers_db.len() != meta.oru_positions.len()) {
            return Err(Error::Data(format!(
                "sample at t={} has {} ORU powers, scenario has {} ORUs",
                s.timestamp,
                s.powers_db.len(),
                meta.oru_positions.len()
            )));
        }
    }
    let timestamps: Vec<f64> = samples.iter().map(|s| s.timestamp).collect();
    let mined = mine_triplets(&timestamps, config.t_close, config.t_far, config.per_anchor, config.mining_seed)?;
    if mined.triplets.is_empty() {
        return Err(Error::Data("no valid triplets in the training set".into()));
    }
    let raw: Vec<&[f64]> = samples.iter().map(|s| s.feature.as_slice()).collect();
    let scaler = Standardizer::fit(&raw)?;
    let objective = ChartObjective {
        features: raw.iter().map(|f| scaler.apply(f)).collect(),
        powers: samples.iter().map(|s| s.powers_db.as_slice()).collect(),
        triplets: mined.triplets.clone(),
        config,
        orus: meta.oru_positions.clone(),
        box_min: [meta.area_min[0], meta.area_min[1]],
        box_max: [meta.area_max[0], meta.area_max[1]],
    };
    let spec = NetworkSpec::mlp(
        first.feature.len(),
        &config.hidden,
        2,
        Activation::Relu,
        Activation::Linear,
        config.net_seed,
    );
    let mut net = Network::new(spec)?;
    let history = nn::train(&mut net, &objective, &config.optimizer, None)?;
    Ok((
        ChartModel {
            net,
            scaler,
            variant: config.variant,
            weights: config.weights,
        },
        mined,
        history,
    ))
}

/// `max(1, ⌊0.05·n⌋)`
pub fn default_k(n: usize) -> usize {
    (n / 20).max(1)
}

/// Neighbour ranks of every point as seen from `i` (1 = nearest), ties
/// broken by index; `ranks[i]` is left at 0.
fn ranks_from<P: AsRef<[f64]>>(points: &[P], i: usize, order: &mut Vec<(f64, usize)>, ranks: &mut [usize]) {
    let pi = points[i].as_ref();
    order.clear();
    order.extend(points.iter().enumerate().filter(|&(j, _)| j != i).map(|(j, p)| {
        let d2: f64 = p.as_ref().iter().zip(pi).map(|(a, b)| (a - b) * (a - b)).sum();
        (d2, j)
    }));
    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranks[i] = 0;
    for (r, &(_, j)) in order.iter().enumerate() {
        ranks[j] = r + 1;
    }
}

/// Continuity and trustworthiness of `chart` with respect to `truth` at
/// neighbourhood size `k`.
pub fn continuity_trustworthiness<P: AsRef<[f64]>, Q: AsRef<[f64]>>(
    truth: &[P],
    chart: &[Q],
    k: usize,
) -> Result<(f64, f64)> {
    let n = truth.len();
    if chart.len() != n {
        return Err(Error::invalid(format!("{n} true points but {} chart points", chart.len())));
    }
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("K = {k} must be in 1..{n}")));
    }
    if 2 * n <= 3 * k + 1 {
        return Err(Error::invalid(format!("K = {k} too large for {n} points")));
    }
    let mut order = Vec::with_capacity(n);
    let mut rank_true = vec![0usize; n];
    let mut rank_chart = vec![0usize; n];
    let (mut ct_sum, mut tw_sum) = (0usize, 0usize);
    for i in 0..n {
        ranks_from(truth, i, &mut order, &mut rank_true);
        ranks_from(chart, i, &mut order, &mut rank_chart);
        for j in 0..n {
            if j == i {
                continue;
            }
            let (rt, rc) = (rank_true[j], rank_chart[j]);
            if rc <= k && rt > k {
                tw_sum += rt - k;
            }
            if rt <= k && rc > k {
                ct_sum += rc - k;
            }
        }
    }
    let norm = 2.0 / (n as f64 * k as f64 * (2 * n - 3 * k - 1) as f64);
    Ok((1.0 - norm * ct_sum as f64, 1.0 - norm * tw_sum as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartRecord {
    pub index: usize,
    pub timestamp: f64,
    pub chart: [f64; 2],
    pub truth: Option<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartReport {
    pub k: usize,
    pub continuity: f64,
    pub trustworthiness: f64,
    /// Absolute error in the map frame, real-world variant only.
    pub error: Option<ErrorStats>,
    /// Fraction of chart points outside the area box.
    pub outside_box: f64,
    pub records: Vec<ChartRecord>,
}

impl ChartReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("writing chart csv", e);
        let labeled = self.records.iter().all(|r| r.truth.is_some());
        if labeled {
            writeln!(w, "index,timestamp,chart_x,chart_y,true_x,true_y").map_err(io)?;
        } else {
            writeln!(w, "index,timestamp,chart_x,chart_y").map_err(io)?;
        }
        for r in &self.records {
            write!(w, "{},{},{},{}", r.index, r.timestamp, r.chart[0], r.chart[1]).map_err(io)?;
            match r.truth {
                Some(t) if labeled => writeln!(w, ",{},{}", t[0], t[1]),
                _ => writeln!(w),
            }
            .map_err(io)?;
        }
        Ok(())
    }
}

/// Evaluates `model` on labeled test samples. `k` defaults to
/// [`default_k`] of the test size.
pub fn eval_chart(
    model: &ChartModel,
    samples: &[&ChartSample],
    meta: &ScenarioMeta,
    k: Option<usize>,
    with_error: bool,
) -> Result<ChartReport> {
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.feature.as_slice()).collect();
    let chart = model.predict(&rows)?;
    report_chart(samples, &chart, meta, k, with_error)
}

/// Metrics for precomputed chart coordinates.
pub fn report_chart(
    samples: &[&ChartSample],
    chart: &[[f64; 2]],
    meta: &ScenarioMeta,
    k: Option<usize>,
    with_error: bool,
) -> Result<ChartReport> {
    let truth = samples
        .iter()
        .map(|s| {
            s.position
                .map(|p| [p[0], p[1]])
                .ok_or_else(|| Error::Data(format!("test sample at t={} has no position label", s.timestamp)))
        })
        .collect::<Result<Vec<_>>>()?;
    let k = k.unwrap_or_else(|| default_k(samples.len()));
    let (continuity, trustworthiness) = continuity_trustworthiness(&truth, chart, k)?;
    let error = with_error.then(|| {
        let e: Vec<f64> = truth
            .iter()
            .zip(chart)
            .map(|(t, c)| ((t[0] - c[0]).powi(2) + (t[1] - c[1]).powi(2)).sqrt())
            .collect();
        ErrorStats::from_errors(&e)
    });
    let tol = 1e-9;
    let outside = chart
        .iter()
        .filter(|c| (0..2).any(|d| c[d] < meta.area_min[d] - tol || c[d] > meta.area_max[d] + tol))
        .count();
    let records = samples
        .iter()
        .zip(chart)
        .enumerate()
        .map(|(index, (s, c))| ChartRecord {
            index,
            timestamp: s.timestamp,
            chart: *c,
            truth: s.position,
        })
        .collect();
    Ok(ChartReport {
        k,
        continuity,
        trustworthiness,
        error,
        outside_box: outside as f64 / chart.len().max(1) as f64,
        records,
    })
}
