//! Closed-set device identification from RF fingerprints with a small
//! convolutional ResNet, plus the temporal split and next-day surrogate used
//! to evaluate it.

use std::collections::BTreeMap;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::RffiFeature;
use crate::nn::{self, loss, Activation, GradSeed, LayerSpec, Network, NetworkSpec, Objective, OptimizerConfig, Tensor};
use crate::rng;
use crate::synthgen::{random_scatterers, ReceiverPerturbation, SynthScenario, DEFAULT_SCATTERERS};

/// Same-day, next-day and all-device accuracies on the real recordings.
/// Report tables only.
pub const REFERENCE_SAME_DAY: f64 = 0.99;
pub const REFERENCE_NEXT_DAY: f64 = 0.95;
pub const REFERENCE_OVERALL: f64 = 0.92;
/// Share of the unknown twin's samples given to its sibling on real data.
pub const REFERENCE_TWIN_TO_SIBLING: f64 = 0.91;

/// Fraction of each device's recording held out from its temporal center.
pub const CENTER_FRACTION: f64 = 0.125;
pub const MIN_DEVICE_SAMPLES: usize = 8;

/// Index partition of a device-labelled recording.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSplit {
    pub train: Vec<usize>,
    pub same_day_test: Vec<usize>,
    /// Indices into the separately recorded next-day set, all test-only.
    pub next_day_test: Vec<usize>,
}

/// Per device: sort by timestamp, hold out the center `⌊n/8⌋` samples for
/// testing and train on the rest.
pub fn split_dev_class(device_ids: &[u16], timestamps: &[f64]) -> Result<ClassSplit> {
    if device_ids.len() != timestamps.len() {
        return Err(Error::invalid(format!(
            "{} device ids but {} timestamps",
            device_ids.len(),
            timestamps.len()
        )));
    }
    let mut by_device: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
    for (i, &d) in device_ids.iter().enumerate() {
        by_device.entry(d).or_default().push(i);
    }
    let mut split = ClassSplit::default();
    for (device, mut idx) in by_device {
        let n = idx.len();
        if n < MIN_DEVICE_SAMPLES {
            return Err(Error::invalid(format!(
                "device {device} has {n} samples, at least {MIN_DEVICE_SAMPLES} needed"
            )));
        }
        idx.sort_by(|&a, &b| timestamps[a].total_cmp(&timestamps[b]).then(a.cmp(&b)));
        let held = (CENTER_FRACTION * n as f64).floor() as usize;
        let start = (n - held) / 2;
        split.train.extend_from_slice(&idx[..start]);
        split.same_day_test.extend_from_slice(&idx[start..start + held]);
        split.train.extend_from_slice(&idx[start + held..]);
    }
    split.train.sort_unstable();
    split.same_day_test.sort_unstable();
    Ok(split)
}

impl ClassSplit {
    /// Marks a next-day recording of `len` samples as test-only.
    pub fn with_next_day(mut self, len: usize) -> Self {
        self.next_day_test = (0..len).collect();
        self
    }
}

/// Network input `[2][S][D]`: real and imaginary parts as channels.
pub fn rffi_input(f: &RffiFeature) -> Vec<f64> {
    let [s_n, d_n, _] = f.shape();
    let mut out = vec![0.0; 2 * s_n * d_n];
    for s in 0..s_n {
        for d in 0..d_n {
            for part in 0..2 {
                out[(part * s_n + s) * d_n + d] = f.get(s, d, part);
            }
        }
    }
    out
}

/// How the convolutional maps reach the softmax layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierHead {
    /// Dense over the flattened maps; sees where along the band a pattern sits.
    Flatten,
    /// Dense over per-channel means.
    GlobalAvgPool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub channels: usize,
    pub blocks: usize,
    pub kernel: usize,
    pub head: ClassifierHead,
    pub optimizer: OptimizerConfig,
    pub net_seed: u64,
}

impl Default for ClassifierConfig {
    /// RMSprop at 1e-3, batch 32, learning rate ×0.2 after 10 stale epochs,
    /// early stop after 30, at most 400 epochs.
    fn default() -> Self {
        ClassifierConfig {
            channels: 8,
            blocks: 2,
            kernel: 3,
            head: ClassifierHead::Flatten,
            optimizer: OptimizerConfig {
                optimizer: nn::OptimizerKind::rmsprop(),
                learning_rate: 1e-3,
                scheduler: nn::SchedulerConfig::Plateau { patience: 10, factor: 0.2 },
                early_stop_patience: Some(30),
                batch_size: 32,
                max_epochs: 400,
                seed: 0,
            },
            net_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub net: Network<f64>,
    /// Device id of every output class.
    pub classes: Vec<u16>,
}

impl ClassifierModel {
    /// Class index of the largest softmax output per feature.
    pub fn predict(&self, features: &[&RffiFeature]) -> Result<Vec<usize>> {
        let shape = self.net.spec().input_shape.clone();
        let mut out = Vec::with_capacity(features.len());
        for chunk in features.chunks(128) {
            let rows: Vec<Vec<f64>> = chunk.iter().map(|f| rffi_input(f)).collect();
            let mut full = vec![chunk.len()];
            full.extend(&shape);
            let x = Tensor::from_vec(&full, rows.concat())?;
            let y = self.net.forward(&x)?;
            out.extend((0..chunk.len()).map(|i| argmax(y.item(i))));
        }
        Ok(out)
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

struct ClassObjective {
    inputs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    shape: Vec<usize>,
    classes: usize,
}

impl ClassObjective {
    fn new(items: &[(&RffiFeature, u16)], classes: &[u16]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::invalid("no samples"))?;
        let [s_n, d_n, _] = first.0.shape();
        let mut inputs = Vec::with_capacity(items.len());
        let mut labels = Vec::with_capacity(items.len());
        for (f, id) in items {
            if f.shape() != first.0.shape() {
                return Err(Error::invalid("RFFI features differ in shape"));
            }
            let class = classes
                .iter()
                .position(|c| c == id)
                .ok_or_else(|| Error::Data(format!("device {id} is not a trained class")))?;
            inputs.push(rffi_input(f));
            labels.push(class);
        }
        Ok(ClassObjective {
            inputs,
            labels,
            shape: vec![2, s_n, d_n],
            classes: classes.len(),
        })
    }

    fn batch(&self, items: &[usize]) -> Result<Tensor<f64>> {
        let mut shape = vec![items.len()];
        shape.extend(&self.shape);
        let mut data = Vec::with_capacity(items.len() * self.inputs[0].len());
        for &i in items {
            data.extend_from_slice(&self.inputs[i]);
        }
        Tensor::from_vec(&shape, data)
    }

    fn mean_loss(&self, net: &Network<f64>) -> Result<f64> {
        let all: Vec<usize> = (0..self.inputs.len()).collect();
        let mut total = 0.0;
        for chunk in all.chunks(128) {
            let tape = net.forward_tape(&self.batch(chunk)?)?;
            let logits = tape.logits().expect("softmax head keeps its logits");
            let labels: Vec<usize> = chunk.iter().map(|&i| self.labels[i]).collect();
            let (l, _) = loss::categorical_ce_batch(logits.data(), self.classes, &labels);
            total += l * chunk.len() as f64;
        }
        Ok(total / all.len() as f64)
    }
}

impl Objective<f64> for ClassObjective {
    fn len(&self) -> usize {
        self.inputs.len()
    }

    fn batch_loss(&self, net: &Network<f64>, items: &[usize], grads: &mut [f64]) -> Result<f64> {
        let tape = net.forward_tape(&self.batch(items)?)?;
        let logits = tape.logits().expect("softmax head keeps its logits");
        let labels: Vec<usize> = items.iter().map(|&i| self.labels[i]).collect();
        let (value, dz) = loss::categorical_ce_batch(logits.data(), self.classes, &labels);
        net.backward(&tape, GradSeed::PreActivation(&dz), grads)?;
        Ok(value)
    }
}

/// Conv stem and residual blocks at full resolution, then a dense softmax
/// head chosen by `config.head`.
pub fn classifier_spec(input_shape: [usize; 3], config: &ClassifierConfig, classes: usize) -> NetworkSpec {
    let mut layers = vec![LayerSpec::Conv2d {
        in_channels: input_shape[0],
        out_channels: config.channels,
        kernel: config.kernel,
        stride: 1,
        padding: config.kernel / 2,
        activation: Activation::Relu,
    }];
    layers.extend((0..config.blocks).map(|_| LayerSpec::Residual {
        channels: config.channels,
        kernel: config.kernel,
    }));
    let inputs = match config.head {
        ClassifierHead::Flatten => {
            layers.push(LayerSpec::Flatten);
            config.channels * input_shape[1] * input_shape[2]
        }
        ClassifierHead::GlobalAvgPool => {
            layers.push(LayerSpec::GlobalAvgPool);
            config.channels
        }
    };
    layers.push(LayerSpec::Dense {
        inputs,
        outputs: classes,
        activation: Activation::Softmax,
    });
    NetworkSpec {
        input_shape: input_shape.to_vec(),
        layers,
        seed: config.net_seed,
    }
}

/// Trains the ResNet classifier over `classes`. The validation loss on
/// `validation` drives the plateau schedule and early stopping.
pub fn train_classifier(
    train: &[(&RffiFeature, u16)],
    validation: &[(&RffiFeature, u16)],
    classes: &[u16],
    config: &ClassifierConfig,
) -> Result<(ClassifierModel, nn::History)> {
    if classes.len() < 2 {
        return Err(Error::invalid(format!("{} classes, at least 2 needed", classes.len())));
    }
    for c in classes {
        if !train.iter().any(|(_, id)| id == c) {
            return Err(Error::Data(format!("class {c} has no training samples")));
        }
    }
    let objective = ClassObjective::new(train, classes)?;
    let val = if validation.is_empty() {
        None
    } else {
        Some(ClassObjective::new(validation, classes)?)
    };
    let (s_n, d_n) = (objective.shape[1], objective.shape[2]);
    let spec = classifier_spec([2, s_n, d_n], config, classes.len());
    let mut net = Network::new(spec)?;
    let hook = |n: &Network<f64>| val.as_ref().expect("hook only set with validation data").mean_loss(n);
    let history = nn::train(
        &mut net,
        &objective,
        &config.optimizer,
        val.as_ref().map(|_| &hook as nn::Validation<'_, f64>),
    )?;
    Ok((
        ClassifierModel {
            net,
            classes: classes.to_vec(),
        },
        history,
    ))
}

/// Counts of predicted classes per true device. Rows follow `labels`
/// (trained classes first, then out-of-set devices); columns follow `classes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<u16>,
    pub labels: Vec<u16>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    /// Correct predictions over all samples of trained classes.
    pub fn accuracy(&self) -> f64 {
        let (mut hit, mut total) = (0, 0);
        for (row, label) in self.counts.iter().zip(&self.labels) {
            if let Some(c) = self.classes.iter().position(|x| x == label) {
                hit += row[c];
                total += row.iter().sum::<usize>();
            }
        }
        if total == 0 {
            f64::NAN
        } else {
            hit as f64 / total as f64
        }
    }

    pub fn row(&self, label: u16) -> Option<&[usize]> {
        self.labels.iter().position(|&l| l == label).map(|i| self.counts[i].as_slice())
    }

    /// Share of `label`'s samples predicted as `class`.
    pub fn fraction(&self, label: u16, class: u16) -> Option<f64> {
        let row = self.row(label)?;
        let c = self.classes.iter().position(|&x| x == class)?;
        let n: usize = row.iter().sum();
        (n > 0).then(|| row[c] as f64 / n as f64)
    }

    fn write_rows<W: Write, F: Fn(&[usize], usize) -> String>(&self, mut w: W, cell: F) -> Result<()> {
        let io = |e| Error::io("writing confusion matrix", e);
        let header: Vec<String> = self.classes.iter().map(|c| format!("pred_{c}")).collect();
        writeln!(w, "true,{}", header.join(",")).map_err(io)?;
        for (row, label) in self.counts.iter().zip(&self.labels) {
            let cells: Vec<String> = (0..row.len()).map(|j| cell(row, j)).collect();
            writeln!(w, "{label},{}", cells.join(",")).map_err(io)?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.write_rows(w, |row, j| row[j].to_string())
    }

    /// Row-normalized percentages.
    pub fn write_percent_csv<W: Write>(&self, w: W) -> Result<()> {
        self.write_rows(w, |row, j| {
            let n: usize = row.iter().sum();
            if n == 0 {
                "0".into()
            } else {
                format!("{:.2}", 100.0 * row[j] as f64 / n as f64)
            }
        })
    }
}

/// Builds the confusion matrix of predicted class indices against true
/// device ids.
pub fn confusion(classes: &[u16], truth: &[u16], predicted: &[usize]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::invalid("truth and prediction lengths differ"));
    }
    let mut labels = classes.to_vec();
    let mut extra: Vec<u16> = truth.iter().copied().filter(|t| !classes.contains(t)).collect();
    extra.sort_unstable();
    extra.dedup();
    labels.extend(extra);
    let mut counts = vec![vec![0usize; classes.len()]; labels.len()];
    for (t, &p) in truth.iter().zip(predicted) {
        if p >= classes.len() {
            return Err(Error::invalid(format!("predicted class {p} out of range")));
        }
        let r = labels.iter().position(|l| l == t).expect("every label collected");
        counts[r][p] += 1;
    }
    Ok(ConfusionMatrix {
        classes: classes.to_vec(),
        labels,
        counts,
    })
}

pub fn evaluate_classifier(model: &ClassifierModel, test: &[(&RffiFeature, u16)]) -> Result<ConfusionMatrix> {
    let features: Vec<&RffiFeature> = test.iter().map(|t| t.0).collect();
    let truth: Vec<u16> = test.iter().map(|t| t.1).collect();
    confusion(&model.classes, &truth, &model.predict(&features)?)
}

/// Between-device over within-device scatter of the features: squared
/// distances of device means to the grand mean against squared distances of
/// samples to their device mean, both averaged.
pub fn fisher_ratio(items: &[(&RffiFeature, u16)]) -> Result<f64> {
    let mut groups: BTreeMap<u16, Vec<&[f64]>> = BTreeMap::new();
    for (f, id) in items {
        groups.entry(*id).or_default().push(&f.data);
    }
    if groups.len() < 2 {
        return Err(Error::invalid("at least two devices needed"));
    }
    let dim = items[0].0.data.len();
    let mean_of = |rows: &[&[f64]]| {
        let mut m = vec![0.0; dim];
        for r in rows {
            m.iter_mut().zip(*r).for_each(|(a, b)| *a += b);
        }
        m.iter_mut().for_each(|a| *a /= rows.len() as f64);
        m
    };
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let means: Vec<Vec<f64>> = groups.values().map(|rows| mean_of(rows)).collect();
    let grand = mean_of(&means.iter().map(|m| m.as_slice()).collect::<Vec<_>>());
    let between = means.iter().map(|m| d2(m, &grand)).sum::<f64>() / means.len() as f64;
    let (mut within, mut n) = (0.0, 0usize);
    for (rows, m) in groups.values().zip(&means) {
        within += rows.iter().map(|r| d2(r, m)).sum::<f64>();
        n += rows.len();
    }
    Ok(between / (within / n as f64))
}

/// Smooth random receive response: a gain of ±`gain_db` around unity with a
/// quadratic ripple and a linear phase.
pub fn receiver_perturbation(subcarriers: usize, oru: usize, gain_db: f64, seed: u64) -> ReceiverPerturbation {
    let mut r = rng::seeded(seed);
    let gain = 10f64.powf(r.random_range(-gain_db..=gain_db) / 20.0);
    let (a, b) = (r.random_range(-0.2..0.2), r.random_range(-0.2..0.2));
    let (p0, p1) = (r.random_range(0.0..std::f64::consts::TAU), r.random_range(-1.0..1.0));
    let response = (0..subcarriers)
        .map(|s| {
            let x = (s as f64 - 0.5 * subcarriers as f64) / (0.5 * subcarriers as f64);
            Complex64::from_polar(gain * (1.0 + a * x + b * x * x), p0 + p1 * x)
        })
        .collect();
    ReceiverPerturbation { oru, response }
}

/// Synthetic next-day recording: fresh scatterers and trajectory, one ORU
/// behind a different receive chain, fingerprints untouched.
pub fn next_day_scenario(base: &SynthScenario, oru: usize, seed: u64) -> Result<SynthScenario> {
    if oru >= base.meta.num_orus {
        return Err(Error::invalid(format!("ORU {oru} out of range")));
    }
    let mut s = base.clone();
    s.scatterers = random_scatterers(&base.meta, DEFAULT_SCATTERERS, rng::derive(seed, 1));
    s.motion.seed = rng::derive(seed, 2);
    s.seed = rng::derive(seed, 3);
    s.receiver = Some(receiver_perturbation(base.meta.num_subcarriers, oru, 3.0, rng::derive(seed, 4)));
    Ok(s)
}
