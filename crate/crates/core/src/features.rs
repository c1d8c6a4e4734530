//! The three task-specific CSI feature encodings and their export formats.
//!
//! * positioning: PRB-rate magnitude profile of every antenna, unit norm;
//! * charting: leading delay-domain taps of the power spectrum, unit norm;
//! * device classification: dominant left singular vector of the
//!   column-normalized, DMRS-stacked channel matrix.

use std::io::Write;

use num_complex::Complex64;

use crate::dsp::{self, ComplexMatrix, FftPlan};
use crate::error::{Error, Result};
use crate::model::CsiSample;

/// Decimation factor of the positioning feature (one value per PRB).
pub const PRB_SIZE: usize = 12;
/// Default number of delay taps kept by the charting feature.
pub const DEFAULT_CHART_TAPS: usize = 25;

/// Magnitude feature for neural positioning; length `O·B·S/12`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosFeature(pub Vec<f64>);

/// Delay-domain feature for channel charting; length `O·B·2·taps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartFeature(pub Vec<f64>);

/// RF-fingerprint feature, shape `[S][D][2]` flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RffiFeature {
    pub subcarriers: usize,
    pub dmrs: usize,
    pub data: Vec<f64>,
}

impl RffiFeature {
    pub fn shape(&self) -> [usize; 3] {
        [self.subcarriers, self.dmrs, 2]
    }

    #[inline]
    pub fn get(&self, s: usize, d: usize, part: usize) -> f64 {
        self.data[(s * self.dmrs + d) * 2 + part]
    }
}

fn is_all_zero(sample: &CsiSample) -> bool {
    sample.csi.as_slice().iter().all(|v| v.norm_sqr() == 0.0)
}

/// Centered length-`len` moving average with edge replication; the window at
/// `s` covers `s − len/2 ..= s + (len − 1)/2`.
pub fn boxcar_same(x: &[f64], len: usize) -> Vec<f64> {
    let n = x.len() as isize;
    let lo = (len / 2) as isize;
    let at = |i: isize| x[i.clamp(0, n - 1) as usize];
    (0..n)
        .map(|s| (s - lo..s - lo + len as isize).map(at).sum::<f64>() / len as f64)
        .collect()
}

pub fn extract_pos_feature(sample: &CsiSample) -> Result<PosFeature> {
    let [o_n, b_n, d_n, s_n] = sample.csi.shape();
    if s_n % PRB_SIZE != 0 {
        return Err(Error::invalid(format!(
            "{s_n} subcarriers is not a multiple of {PRB_SIZE}"
        )));
    }
    if is_all_zero(sample) {
        return Err(Error::Degenerate("all-zero CSI tensor".into()));
    }
    let per_antenna = s_n / PRB_SIZE;
    let mut out = Vec::with_capacity(o_n * b_n * per_antenna);
    let mut mag = vec![0.0; s_n];
    for o in 0..o_n {
        for b in 0..b_n {
            mag.iter_mut().for_each(|m| *m = 0.0);
            for d in 0..d_n {
                for (m, v) in mag.iter_mut().zip(sample.csi.row(o, b, d)) {
                    *m += v.norm();
                }
            }
            mag.iter_mut().for_each(|m| *m /= d_n as f64);
            let filtered = boxcar_same(&mag, PRB_SIZE);
            out.extend((0..per_antenna).map(|k| filtered[k * PRB_SIZE + PRB_SIZE / 2]));
        }
    }
    dsp::unit_normalize_in_place(&mut out)?;
    Ok(PosFeature(out))
}

/// Reusable charting-feature extractor holding the IDFT plan.
#[derive(Debug, Clone)]
pub struct ChartExtractor {
    plan: FftPlan<f64>,
    taps: usize,
}

impl ChartExtractor {
    pub fn new(subcarriers: usize, taps: usize) -> Result<Self> {
        if taps == 0 || taps > subcarriers {
            return Err(Error::invalid(format!(
                "taps = {taps} must be in 1..={subcarriers}"
            )));
        }
        Ok(ChartExtractor {
            plan: FftPlan::new(subcarriers),
            taps,
        })
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    /// Per-antenna taps before the final normalization, `[re…, im…]`.
    pub fn raw_taps(&self, sample: &CsiSample, o: usize, b: usize) -> Vec<f64> {
        let [_, _, d_n, s_n] = sample.csi.shape();
        let mut power = vec![Complex64::new(0.0, 0.0); s_n];
        for d in 0..d_n {
            for (p, v) in power.iter_mut().zip(sample.csi.row(o, b, d)) {
                p.re += v.norm_sqr();
            }
        }
        power.iter_mut().for_each(|p| p.re /= d_n as f64);
        let delay = self.plan.process(&power, true);
        let mut out = Vec::with_capacity(2 * self.taps);
        out.extend(delay[..self.taps].iter().map(|c| c.re));
        out.extend(delay[..self.taps].iter().map(|c| c.im));
        out
    }

    pub fn extract(&self, sample: &CsiSample) -> Result<ChartFeature> {
        let [o_n, b_n, _, s_n] = sample.csi.shape();
        if s_n != self.plan.len() {
            return Err(Error::invalid(format!(
                "extractor built for {} subcarriers, sample has {s_n}",
                self.plan.len()
            )));
        }
        if is_all_zero(sample) {
            return Err(Error::Degenerate("all-zero CSI tensor".into()));
        }
        let mut out = Vec::with_capacity(o_n * b_n * 2 * self.taps);
        for o in 0..o_n {
            for b in 0..b_n {
                out.extend(self.raw_taps(sample, o, b));
            }
        }
        dsp::unit_normalize_in_place(&mut out)?;
        Ok(ChartFeature(out))
    }
}

pub fn extract_chart_feature(sample: &CsiSample, taps: usize) -> Result<ChartFeature> {
    ChartExtractor::new(sample.csi.shape()[3], taps)?.extract(sample)
}

pub fn extract_rffi_feature(sample: &CsiSample) -> Result<RffiFeature> {
    let [o_n, b_n, d_n, s_n] = sample.csi.shape();
    let cols = o_n * b_n;
    if cols < 2 {
        return Err(Error::invalid("RFFI feature needs at least two receive antennas"));
    }
    // Row d·S + s, column o·B + b.
    let mut m = ComplexMatrix::zeros(d_n * s_n, cols);
    for o in 0..o_n {
        for b in 0..b_n {
            let col = o * b_n + b;
            for d in 0..d_n {
                for (s, v) in sample.csi.row(o, b, d).iter().enumerate() {
                    m.set(d * s_n + s, col, *v);
                }
            }
            let norm = m.column_norm(col);
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::Degenerate(format!(
                    "zero CSI column at ORU {o}, antenna {b}"
                )));
            }
            m.scale_column(col, Complex64::new(1.0 / norm, 0.0));
        }
    }
    let dom = dsp::dominant_left_singular_vector(&m)?;
    let mut data = vec![0.0; s_n * d_n * 2];
    for d in 0..d_n {
        for s in 0..s_n {
            let u = dom.u[d * s_n + s];
            data[(s * d_n + d) * 2] = u.re;
            data[(s * d_n + d) * 2 + 1] = u.im;
        }
    }
    Ok(RffiFeature {
        subcarriers: s_n,
        dmrs: d_n,
        data,
    })
}

/// `10·log10(mean |csi|²)` over one ORU; `-inf` for an all-zero block.
pub fn receive_power_db(sample: &CsiSample, oru: usize) -> Result<f64> {
    let orus = sample.csi.shape()[0];
    if oru >= orus {
        return Err(Error::invalid(format!("ORU {oru} out of range (have {orus})")));
    }
    let block = sample.csi.oru_block(oru);
    let p = block.iter().map(|v| v.norm_sqr()).sum::<f64>() / block.len() as f64;
    Ok(if p > 0.0 { 10.0 * p.log10() } else { f64::NEG_INFINITY })
}

/// Receive power of every ORU, dB.
pub fn receive_powers_db(sample: &CsiSample) -> Vec<f64> {
    (0..sample.csi.shape()[0])
        .map(|o| receive_power_db(sample, o).unwrap_or(f64::NEG_INFINITY))
        .collect()
}

/// Kind tag of an exported feature file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum FeatureKind {
    Position = 1,
    Chart = 2,
    Rffi = 3,
}

pub const FEATURE_MAGIC: &[u8; 4] = b"CSIF";

/// Writes `rows` as a flat little-endian f32 array after a header:
/// magic `CSIF`, kind u32, ndim u32, then `ndim` u64 dimensions (the first
/// being the row count).
pub fn write_feature_file<W: Write>(
    mut w: W,
    kind: FeatureKind,
    row_shape: &[usize],
    rows: &[Vec<f64>],
) -> Result<()> {
    let row_len: usize = row_shape.iter().product();
    let io = |e| Error::io("writing feature file", e);
    w.write_all(FEATURE_MAGIC).map_err(io)?;
    w.write_all(&(kind as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&((row_shape.len() + 1) as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(rows.len() as u64).to_le_bytes()).map_err(io)?;
    for &d in row_shape {
        w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
    }
    for row in rows {
        if row.len() != row_len {
            return Err(Error::invalid(format!(
                "feature row of length {} does not match shape {row_shape:?}",
                row.len()
            )));
        }
        for v in row {
            w.write_all(&(*v as f32).to_le_bytes()).map_err(io)?;
        }
    }
    Ok(())
}

/// One line per row: `index,v0,v1,…`.
pub fn write_feature_csv<W: Write>(mut w: W, rows: &[Vec<f64>]) -> Result<()> {
    let io = |e| Error::io("writing feature csv", e);
    for (i, row) in rows.iter().enumerate() {
        write!(w, "{i}").map_err(io)?;
        for v in row {
            write!(w, ",{v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::inner;
    use crate::model::{CsiTensor, ScenarioMeta};
    use crate::rng;
    use crate::synthgen::{random_scatterers, synthesize_sample, DeviceFingerprint};
    use rand::Rng;

    fn sample_from(csi: CsiTensor) -> CsiSample {
        let orus = csi.shape()[0];
        CsiSample {
            timestamp: 0.0,
            rnti: 1,
            device_id: None,
            csi,
            noise_var: vec![0.0; orus],
            position: None,
            orientation: None,
        }
    }

    fn constant_sample(meta: &ScenarioMeta, v: Complex64) -> CsiSample {
        let mut csi = CsiTensor::for_meta(meta);
        csi.as_mut_slice().iter_mut().for_each(|x| *x = v);
        sample_from(csi)
    }

    fn synthetic(meta: &ScenarioMeta, seed: u64) -> CsiSample {
        let mut r = rng::seeded(seed);
        let sc = random_scatterers(meta, 15, seed);
        let fp = DeviceFingerprint::random(0, meta.num_subcarriers, seed + 1);
        let p = [r.random_range(0.1..3.4), r.random_range(0.1..3.4), 0.0];
        synthesize_sample(&p, meta, &sc, &fp, 28.0, seed).unwrap()
    }

    #[test]
    fn boxcar_decimation_equals_prb_means() {
        let x: Vec<f64> = (0..48).map(|i| (i as f64 * 0.37).sin() + 2.0).collect();
        let f = boxcar_same(&x, 12);
        for k in 0..4 {
            let mean = x[k * 12..(k + 1) * 12].iter().sum::<f64>() / 12.0;
            assert!((f[k * 12 + 6] - mean).abs() < 1e-14);
        }
        // edge replication
        assert!((f[0] - (6.0 * x[0] + x[..6].iter().sum::<f64>()) / 12.0).abs() < 1e-14);
    }

    #[test]
    fn pos_feature_of_constant_input() {
        let meta = ScenarioMeta::default();
        let f = extract_pos_feature(&constant_sample(&meta, Complex64::new(1.0, 0.0))).unwrap();
        assert_eq!(f.0.len(), 4368);
        let expect = 1.0 / 4368f64.sqrt();
        assert!(f.0.iter().all(|v| (v - expect).abs() < 1e-15));
    }

    #[test]
    fn pos_feature_scale_invariance() {
        let meta = ScenarioMeta::default().with_subcarriers(120);
        let s = synthetic(&meta, 3);
        let mut scaled = s.clone();
        scaled.csi.scale(Complex64::new(7.3, 0.0));
        let a = extract_pos_feature(&s).unwrap();
        let b = extract_pos_feature(&scaled).unwrap();
        for (x, y) in a.0.iter().zip(&b.0) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(a.0.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn zero_tensor_is_degenerate() {
        let meta = ScenarioMeta::default().with_subcarriers(24);
        let z = constant_sample(&meta, Complex64::new(0.0, 0.0));
        assert!(matches!(extract_pos_feature(&z), Err(Error::Degenerate(_))));
        assert!(matches!(extract_chart_feature(&z, 5), Err(Error::Degenerate(_))));
        assert!(matches!(extract_rffi_feature(&z), Err(Error::Degenerate(_))));
        assert_eq!(receive_power_db(&z, 0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn chart_feature_of_flat_spectrum() {
        let meta = ScenarioMeta::default();
        let s = constant_sample(&meta, Complex64::new(0.6, 0.8));
        let ex = ChartExtractor::new(3276, 25).unwrap();
        let raw = ex.raw_taps(&s, 0, 0);
        assert!(raw[0] > 1.0);
        assert!(raw[1..].iter().all(|v| v.abs() <= 1e-9));
        let f = ex.extract(&s).unwrap();
        assert_eq!(f.0.len(), 800);
    }

    #[test]
    fn chart_feature_full_taps_is_impulse() {
        let meta = ScenarioMeta::default().with_subcarriers(24);
        let mut meta1 = meta.clone();
        meta1.num_orus = 1;
        meta1.antennas_per_oru = 1;
        let s = constant_sample(&meta1, Complex64::new(2.0, 0.0));
        let f = extract_chart_feature(&s, 24).unwrap();
        assert!((f.0[0] - 1.0).abs() < 1e-12);
        assert!(f.0[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn chart_feature_ignores_phase() {
        let meta = ScenarioMeta::default().with_subcarriers(240);
        let s = synthetic(&meta, 5);
        let mut rotated = s.clone();
        let mut r = rng::seeded(1);
        let phases: Vec<Complex64> = (0..240)
            .map(|_| Complex64::from_polar(1.0, r.random_range(0.0..6.3)))
            .collect();
        for o in 0..4 {
            for b in 0..4 {
                for d in 0..3 {
                    for (v, p) in rotated.csi.row_mut(o, b, d).iter_mut().zip(&phases) {
                        *v *= p;
                    }
                }
            }
        }
        let a = extract_chart_feature(&s, 25).unwrap();
        let b = extract_chart_feature(&rotated, 25).unwrap();
        for (x, y) in a.0.iter().zip(&b.0) {
            assert!((x - y).abs() < 1e-12);
        }
        let pa = extract_pos_feature(&s).unwrap();
        let pb = extract_pos_feature(&rotated).unwrap();
        for (x, y) in pa.0.iter().zip(&pb.0) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rffi_shape_and_norm() {
        let meta = ScenarioMeta::default();
        let s = synthetic(&meta, 7);
        let f = extract_rffi_feature(&s).unwrap();
        assert_eq!(f.shape(), [3276, 3, 2]);
        let n: f64 = f.data.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rffi_rank_one_recovery() {
        let meta = ScenarioMeta::default().with_subcarriers(96);
        let mut r = rng::seeded(8);
        let g: Vec<Complex64> = (0..96)
            .map(|_| Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
            .collect();
        let phases: Vec<Complex64> = (0..3).map(|d| Complex64::from_polar(1.0, 0.4 * d as f64)).collect();
        // the expected vector: (g ⊗ phases) stacked d-major, unit norm
        let mut expect: Vec<Complex64> = (0..3).flat_map(|d| { let ph = phases[d]; g.iter().map(move |x| x * ph) }).collect();
        let n = dsp::complex_norm(&expect);
        expect.iter_mut().for_each(|v| *v /= n);

        let mut csi = CsiTensor::for_meta(&meta);
        for o in 0..4 {
            for b in 0..4 {
                let alpha = Complex64::new(r.random_range(0.1..2.0), r.random_range(-1.0..1.0));
                for d in 0..3 {
                    for (s, v) in csi.row_mut(o, b, d).iter_mut().enumerate() {
                        *v = alpha * g[s] * phases[d];
                    }
                }
            }
        }
        let f = extract_rffi_feature(&sample_from(csi)).unwrap();
        let u: Vec<Complex64> = (0..3)
            .flat_map(|d| (0..96).map(move |s| (s, d)))
            .map(|(s, d)| Complex64::new(f.get(s, d, 0), f.get(s, d, 1)))
            .collect();
        assert!(inner(&u, &expect).norm() >= 1.0 - 1e-9);
    }

    #[test]
    fn rffi_antenna_gain_invariance() {
        let meta = ScenarioMeta::default().with_subcarriers(96);
        let s = synthetic(&meta, 9);
        let mut r = rng::seeded(10);
        let mut scaled = s.clone();
        for o in 0..4 {
            for b in 0..4 {
                let c = Complex64::from_polar(r.random_range(0.1..10.0), r.random_range(0.0..6.3));
                for d in 0..3 {
                    scaled.csi.row_mut(o, b, d).iter_mut().for_each(|v| *v *= c);
                }
            }
        }
        let a = extract_rffi_feature(&s).unwrap();
        let b = extract_rffi_feature(&scaled).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn rffi_dead_antenna_is_named() {
        let meta = ScenarioMeta::default().with_subcarriers(24);
        let mut s = synthetic(&meta, 2);
        for d in 0..3 {
            s.csi.row_mut(2, 1, d).iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        }
        match extract_rffi_feature(&s) {
            Err(Error::Degenerate(msg)) => assert!(msg.contains("ORU 2, antenna 1")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn receive_power_law() {
        let meta = ScenarioMeta::default().with_subcarriers(24);
        let s = constant_sample(&meta, Complex64::new(0.0, 1.0));
        assert!(receive_power_db(&s, 1).unwrap().abs() < 1e-12);
        let mut t = s.clone();
        t.csi.oru_block_mut(1).iter_mut().for_each(|v| *v *= 10.0);
        assert!((receive_power_db(&t, 1).unwrap() - 20.0).abs() < 1e-12);
        assert!(receive_power_db(&t, 4).is_err());
    }

    #[test]
    fn nearest_oru_has_highest_power_los() {
        let meta = ScenarioMeta::default().with_subcarriers(48);
        let fp = DeviceFingerprint::random(0, 48, 4);
        let p = [0.7, 2.9, 0.0];
        let s = synthesize_sample(&p, &meta, &[], &fp, 28.0, 1).unwrap();
        let powers = receive_powers_db(&s);
        let best = (0..4).max_by(|&a, &b| powers[a].partial_cmp(&powers[b]).unwrap()).unwrap();
        assert_eq!(best, 3);
    }

    #[test]
    fn feature_file_layout() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let mut buf = Vec::new();
        write_feature_file(&mut buf, FeatureKind::Chart, &[2], &rows).unwrap();
        assert_eq!(&buf[..4], b"CSIF");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(buf[12..20].try_into().unwrap()), 3);
        assert_eq!(buf.len(), 4 + 4 + 4 + 16 + 6 * 4);
        let mut csv = Vec::new();
        write_feature_csv(&mut csv, &rows[..1]).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "0,1,2\n");
    }
}
