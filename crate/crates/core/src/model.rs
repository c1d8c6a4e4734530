//! Shared data model: scenario geometry, CSI samples and datasets.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// A point in the local measurement frame, meters. 2D scenarios keep `z = 0`.
pub type Point = [f64; 3];

/// Geometry and numerology of a measurement scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub num_orus: usize,
    pub antennas_per_oru: usize,
    pub num_dmrs: usize,
    pub num_subcarriers: usize,
    /// Hz.
    pub subcarrier_spacing: f64,
    /// Hz.
    pub carrier_frequency: f64,
    /// Seconds between consecutive PUSCH samples.
    pub sample_period: f64,
    pub area_min: Point,
    pub area_max: Point,
    pub oru_positions: Vec<Point>,
}

pub const DEFAULT_NUM_SUBCARRIERS: usize = 3276;
pub const DEFAULT_SUBCARRIER_SPACING: f64 = 30e3;
pub const DEFAULT_CARRIER_FREQUENCY: f64 = 3.45e9;

impl Default for ScenarioMeta {
    /// Four ORUs at the corners of a 3.5 m square, four antennas each, 20 ms cadence.
    fn default() -> Self {
        ScenarioMeta::square(3.5, 0.020)
    }
}

impl ScenarioMeta {
    /// Square area `[0, side]²` with one ORU on each corner.
    pub fn square(side: f64, sample_period: f64) -> Self {
        ScenarioMeta {
            num_orus: 4,
            antennas_per_oru: 4,
            num_dmrs: 3,
            num_subcarriers: DEFAULT_NUM_SUBCARRIERS,
            subcarrier_spacing: DEFAULT_SUBCARRIER_SPACING,
            carrier_frequency: DEFAULT_CARRIER_FREQUENCY,
            sample_period,
            area_min: [0.0, 0.0, 0.0],
            area_max: [side, side, 0.0],
            oru_positions: vec![
                [0.0, 0.0, 0.0],
                [side, 0.0, 0.0],
                [side, side, 0.0],
                [0.0, side, 0.0],
            ],
        }
    }

    pub fn with_subcarriers(mut self, s: usize) -> Self {
        self.num_subcarriers = s;
        self
    }

    /// Number of spatial dimensions with nonzero extent (2 or 3).
    pub fn dims(&self) -> usize {
        if self.area_max[2] > self.area_min[2] {
            3
        } else {
            2
        }
    }

    /// Number of complex entries in one CSI tensor.
    pub fn csi_len(&self) -> usize {
        self.num_orus * self.antennas_per_oru * self.num_dmrs * self.num_subcarriers
    }

    pub fn num_antennas(&self) -> usize {
        self.num_orus * self.antennas_per_oru
    }

    /// Diagonal of the (2D or 3D) measurement area.
    pub fn area_diagonal(&self) -> f64 {
        dist(&self.area_min, &self.area_max)
    }

    pub fn contains(&self, p: &Point, margin: f64) -> bool {
        (0..3).all(|i| p[i] >= self.area_min[i] - margin && p[i] <= self.area_max[i] + margin)
    }

    /// Lists every violated invariant; empty when the scenario is well formed.
    pub fn check(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.num_orus < 2 {
            issues.push(format!("num_orus = {} < 2", self.num_orus));
        }
        if self.antennas_per_oru < 1 {
            issues.push("antennas_per_oru must be >= 1".into());
        }
        if self.num_dmrs < 1 {
            issues.push("num_dmrs must be >= 1".into());
        }
        if self.num_subcarriers == 0 || self.num_subcarriers % 12 != 0 {
            issues.push(format!(
                "num_subcarriers = {} is not a positive multiple of 12",
                self.num_subcarriers
            ));
        }
        for (name, v) in [
            ("subcarrier_spacing", self.subcarrier_spacing),
            ("carrier_frequency", self.carrier_frequency),
            ("sample_period", self.sample_period),
        ] {
            if !(v.is_finite() && v > 0.0) {
                issues.push(format!("{name} must be positive and finite"));
            }
        }
        if !(self.area_min[0] < self.area_max[0] && self.area_min[1] < self.area_max[1])
            || self.area_min[2] > self.area_max[2]
        {
            issues.push("area_min must be below area_max componentwise".into());
        }
        if self.oru_positions.len() != self.num_orus {
            issues.push(format!(
                "{} ORU positions for {} ORUs",
                self.oru_positions.len(),
                self.num_orus
            ));
        }
        for i in 0..self.oru_positions.len() {
            for j in i + 1..self.oru_positions.len() {
                if self.oru_positions[i] == self.oru_positions[j] {
                    issues.push(format!("ORU positions {i} and {j} coincide"));
                }
            }
        }
        issues
    }
}

pub fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Complex CSI over (ORU, antenna, DMRS symbol, subcarrier), row-major in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiTensor {
    shape: [usize; 4],
    data: Vec<Complex64>,
}

impl CsiTensor {
    pub fn zeros(orus: usize, antennas: usize, dmrs: usize, subcarriers: usize) -> Self {
        CsiTensor {
            shape: [orus, antennas, dmrs, subcarriers],
            data: vec![Complex64::new(0.0, 0.0); orus * antennas * dmrs * subcarriers],
        }
    }

    pub fn for_meta(meta: &ScenarioMeta) -> Self {
        Self::zeros(
            meta.num_orus,
            meta.antennas_per_oru,
            meta.num_dmrs,
            meta.num_subcarriers,
        )
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<Complex64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::invalid(format!(
                "CSI shape {shape:?} does not match {} entries",
                data.len()
            )));
        }
        Ok(CsiTensor { shape, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    #[inline]
    fn offset(&self, o: usize, b: usize, d: usize) -> usize {
        ((o * self.shape[1] + b) * self.shape[2] + d) * self.shape[3]
    }

    /// The subcarrier vector of one (ORU, antenna, DMRS) triple.
    #[inline]
    pub fn row(&self, o: usize, b: usize, d: usize) -> &[Complex64] {
        let off = self.offset(o, b, d);
        &self.data[off..off + self.shape[3]]
    }

    #[inline]
    pub fn row_mut(&mut self, o: usize, b: usize, d: usize) -> &mut [Complex64] {
        let off = self.offset(o, b, d);
        let s = self.shape[3];
        &mut self.data[off..off + s]
    }

    /// All DMRS rows of one ORU, contiguous.
    pub fn oru_block(&self, o: usize) -> &[Complex64] {
        let len = self.shape[1] * self.shape[2] * self.shape[3];
        &self.data[o * len..(o + 1) * len]
    }

    pub fn oru_block_mut(&mut self, o: usize) -> &mut [Complex64] {
        let len = self.shape[1] * self.shape[2] * self.shape[3];
        &mut self.data[o * len..(o + 1) * len]
    }

    pub fn scale(&mut self, c: Complex64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }
}

/// One PUSCH slot's channel estimate plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSample {
    /// Seconds.
    pub timestamp: f64,
    pub rnti: u32,
    pub device_id: Option<u16>,
    pub csi: CsiTensor,
    /// Per-ORU noise power, linear.
    pub noise_var: Vec<f64>,
    pub position: Option<Point>,
    /// Unit quaternion (w, x, y, z). Stored for fidelity, unused by the pipelines.
    pub orientation: Option<[f64; 4]>,
}

impl CsiSample {
    /// Rounds every field that the container stores as `f32`, so that a
    /// write/read roundtrip reproduces the sample exactly.
    pub fn round_to_storage(&mut self) {
        let r = |v: f64| v as f32 as f64;
        for v in self.csi.as_mut_slice() {
            *v = Complex64::new(r(v.re), r(v.im));
        }
        self.noise_var.iter_mut().for_each(|v| *v = r(*v));
        if let Some(p) = self.position.as_mut() {
            p.iter_mut().for_each(|v| *v = r(*v));
        }
        if let Some(q) = self.orientation.as_mut() {
            q.iter_mut().for_each(|v| *v = r(*v));
        }
    }
}

/// Ordered collection of samples sharing one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: ScenarioMeta,
    pub samples: Vec<CsiSample>,
}

impl Dataset {
    pub fn new(meta: ScenarioMeta) -> Self {
        Dataset {
            meta,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn has_positions(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.position.is_some())
    }

    pub fn has_device_ids(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.device_id.is_some())
    }

    pub fn has_orientation(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.orientation.is_some())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            meta: self.meta.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub index: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, index: Option<usize>, message: impl Into<String>) {
        self.issues.push(Issue {
            index,
            message: message.into(),
        });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_pass() {
            return write!(f, "pass");
        }
        writeln!(f, "fail ({} issues)", self.issues.len())?;
        for issue in &self.issues {
            match issue.index {
                Some(i) => writeln!(f, "  [{i}] {}", issue.message)?,
                None => writeln!(f, "  {}", issue.message)?,
            }
        }
        Ok(())
    }
}

/// Checks every dataset invariant and reports all violations.
pub fn validate_dataset(ds: &Dataset) -> ValidationReport {
    let mut v = DatasetValidator::new(&ds.meta);
    ds.samples.iter().for_each(|s| v.push(s));
    v.finish()
}

/// Incremental form of [`validate_dataset`] for sample streams.
#[derive(Debug, Clone)]
pub struct DatasetValidator {
    meta: ScenarioMeta,
    report: ValidationReport,
    index: usize,
    with_pos: usize,
    prev_ts: f64,
}

impl DatasetValidator {
    pub fn new(meta: &ScenarioMeta) -> Self {
        let mut report = ValidationReport::default();
        for msg in meta.check() {
            report.push(None, msg);
        }
        DatasetValidator {
            meta: meta.clone(),
            report,
            index: 0,
            with_pos: 0,
            prev_ts: f64::NEG_INFINITY,
        }
    }

    pub fn push(&mut self, s: &CsiSample) {
        let (i, m, report) = (self.index, &self.meta, &mut self.report);
        self.index += 1;
        let expected_shape = [m.num_orus, m.antennas_per_oru, m.num_dmrs, m.num_subcarriers];
        if !s.timestamp.is_finite() {
            report.push(Some(i), format!("non-finite timestamp at index {i}"));
        } else if s.timestamp <= self.prev_ts {
            report.push(Some(i), format!("timestamps not increasing at index {i}"));
        }
        self.prev_ts = s.timestamp;

        if s.csi.shape() != expected_shape {
            report.push(
                Some(i),
                format!(
                    "csi shape {:?} at index {i} does not match scenario {:?}",
                    s.csi.shape(),
                    expected_shape
                ),
            );
        } else if s
            .csi
            .as_slice()
            .iter()
            .any(|v| !(v.re.is_finite() && v.im.is_finite()))
        {
            report.push(Some(i), format!("non-finite csi at index {i}"));
        }
        if s.noise_var.len() != m.num_orus {
            report.push(
                Some(i),
                format!("{} noise variances at index {i}", s.noise_var.len()),
            );
        }
        if s.noise_var.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            report.push(Some(i), format!("invalid noise variance at index {i}"));
        }
        if let Some(p) = s.position {
            self.with_pos += 1;
            if p.iter().any(|v| !v.is_finite()) {
                report.push(Some(i), format!("non-finite position at index {i}"));
            }
        }
        if let Some(q) = s.orientation {
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !((n - 1.0).abs() < 1e-6) {
                report.push(Some(i), format!("orientation not a unit quaternion at index {i}"));
            }
        }
    }

    pub fn finish(mut self) -> ValidationReport {
        if self.with_pos != 0 && self.with_pos != self.index {
            self.report.issues.insert(
                0,
                Issue {
                    index: None,
                    message: format!(
                        "position labels on {} of {} samples (must be all or none)",
                        self.with_pos, self.index
                    ),
                },
            );
        }
        self.report
    }
}

/// Index partition produced by [`split_random`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Trailing samples in original order, test-only.
    pub tail: Vec<usize>,
}

/// Holds out the last `holdout_tail` samples and partitions the rest at random.
pub fn split_random(n: usize, train_frac: f64, holdout_tail: usize, seed: u64) -> Result<Split> {
    if holdout_tail >= n {
        return Err(Error::invalid(format!(
            "holdout_tail {holdout_tail} must be smaller than the sample count {n}"
        )));
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::invalid(format!("train_frac {train_frac} not in (0, 1)")));
    }
    let head = n - holdout_tail;
    let mut order: Vec<usize> = (0..head).collect();
    order.shuffle(&mut rng::seeded(seed));
    let n_train = ((train_frac * head as f64).round() as usize).min(head);
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        train,
        test,
        tail: (head..n).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dataset(n: usize) -> Dataset {
        let meta = ScenarioMeta::square(2.0, 0.01).with_subcarriers(12);
        let samples = (0..n)
            .map(|i| {
                let mut csi = CsiTensor::for_meta(&meta);
                csi.as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = Complex64::new(1.0, -0.5));
                CsiSample {
                    timestamp: i as f64 * 0.01,
                    rnti: 17,
                    device_id: None,
                    csi,
                    noise_var: vec![0.01; 4],
                    position: Some([0.5, 0.5, 0.0]),
                    orientation: None,
                }
            })
            .collect();
        Dataset { meta, samples }
    }

    #[test]
    fn well_formed_dataset_passes() {
        assert!(validate_dataset(&tiny_dataset(10)).is_pass());
    }

    #[test]
    fn nan_entry_is_reported() {
        let mut ds = tiny_dataset(10);
        ds.samples[6].csi.as_mut_slice()[5].re = f64::NAN;
        let r = validate_dataset(&ds);
        assert!(!r.is_pass());
        assert!(r.issues.iter().any(|i| i.message == "non-finite csi at index 6"));
    }

    #[test]
    fn swapped_timestamps_are_reported() {
        let mut ds = tiny_dataset(10);
        let t3 = ds.samples[3].timestamp;
        ds.samples[3].timestamp = ds.samples[4].timestamp;
        ds.samples[4].timestamp = t3;
        let r = validate_dataset(&ds);
        assert!(r
            .issues
            .iter()
            .any(|i| i.message.starts_with("timestamps not increasing") && i.index == Some(4)));
    }

    #[test]
    fn every_single_field_corruption_is_reported() {
        type Corrupt = fn(&mut Dataset);
        let corruptions: [(&str, Corrupt); 9] = [
            ("negative noise", |d| d.samples[2].noise_var[1] = -1.0),
            ("noise length", |d| d.samples[2].noise_var.pop().map(|_| ()).unwrap()),
            ("shape", |d| d.samples[2].csi = CsiTensor::zeros(4, 4, 3, 24)),
            ("inf csi", |d| d.samples[2].csi.as_mut_slice()[0].im = f64::INFINITY),
            ("nan timestamp", |d| d.samples[2].timestamp = f64::NAN),
            ("partial positions", |d| d.samples[2].position = None),
            ("bad quaternion", |d| d.samples[2].orientation = Some([2.0, 0.0, 0.0, 0.0])),
            ("oru count", |d| d.meta.num_orus = 1),
            ("subcarriers", |d| d.meta.num_subcarriers = 13),
        ];
        for (name, corrupt) in corruptions {
            let mut ds = tiny_dataset(5);
            corrupt(&mut ds);
            assert!(!validate_dataset(&ds).is_pass(), "{name} not reported");
        }
    }

    #[test]
    fn split_counts_and_determinism() {
        let a = split_random(1000, 0.8, 500, 7).unwrap();
        assert_eq!((a.train.len(), a.test.len(), a.tail.len()), (400, 100, 500));
        assert_eq!(a.tail, (500..1000).collect::<Vec<_>>());
        assert_eq!(a, split_random(1000, 0.8, 500, 7).unwrap());
        assert_ne!(a.train, split_random(1000, 0.8, 500, 8).unwrap().train);
    }

    #[test]
    fn split_tail_at_full_scale() {
        let s = split_random(338_981, 0.8, 500, 1).unwrap();
        assert_eq!(s.tail.len(), 500);
        assert_eq!(s.train.len() + s.test.len(), 338_481);
    }

    #[test]
    fn split_rejects_oversized_tail() {
        assert!(matches!(
            split_random(10, 0.8, 10, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(split_random(10, 1.0, 2, 0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn split_is_a_partition(n in 10usize..10_000, tail_frac in 0.0f64..0.9, frac in 0.05f64..0.95, seed in 0u64..1000) {
            let tail = ((n as f64) * tail_frac) as usize;
            let s = split_random(n, frac, tail, seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).chain(&s.tail).copied().collect();
            all.sort_unstable();
            proptest::prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
