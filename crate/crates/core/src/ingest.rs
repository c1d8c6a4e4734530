//! CAEZ-lite dataset container and position-label interpolation.
//!
//! Layout, all little-endian:
//!
//! ```text
//! header  magic "CAEZ" | version u32 | flags u32 | O B D S u32
//!         sample_period f64 | carrier f64 | spacing f64
//!         area_min 3×f64 | area_max 3×f64 | O×3 f64 ORU positions
//!         sample_count u64
//! record  timestamp f64 | rnti u32 | device_id u16 (0xFFFF absent)
//!         noise_var O×f32 | position 3×f32 (NaN absent)
//!         [orientation 4×f32 if flag bit 2]
//!         CSI re/im f32 pairs, o-major then b, d, s
//! ```
//!
//! Flag bits: 0 positions, 1 device ids, 2 orientation.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{CsiSample, CsiTensor, Dataset, Point, ScenarioMeta};

pub const MAGIC: &[u8; 4] = b"CAEZ";
pub const VERSION: u32 = 1;
pub const NO_DEVICE: u16 = 0xFFFF;

const FLAG_POSITIONS: u32 = 1;
const FLAG_DEVICE_IDS: u32 = 2;
const FLAG_ORIENTATION: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Flags {
    pub positions: bool,
    pub device_ids: bool,
    pub orientation: bool,
}

impl Flags {
    pub fn for_dataset(ds: &Dataset) -> Self {
        Flags {
            positions: ds.samples.iter().any(|s| s.position.is_some()),
            device_ids: ds.samples.iter().any(|s| s.device_id.is_some()),
            orientation: ds.samples.iter().any(|s| s.orientation.is_some()),
        }
    }

    fn bits(self) -> u32 {
        (self.positions as u32) * FLAG_POSITIONS
            | (self.device_ids as u32) * FLAG_DEVICE_IDS
            | (self.orientation as u32) * FLAG_ORIENTATION
    }

    fn from_bits(bits: u32) -> Result<Self> {
        if bits & !(FLAG_POSITIONS | FLAG_DEVICE_IDS | FLAG_ORIENTATION) != 0 {
            return Err(Error::Format(format!("unknown flag bits {bits:#x}")));
        }
        Ok(Flags {
            positions: bits & FLAG_POSITIONS != 0,
            device_ids: bits & FLAG_DEVICE_IDS != 0,
            orientation: bits & FLAG_ORIENTATION != 0,
        })
    }
}

pub fn header_size(meta: &ScenarioMeta) -> u64 {
    (4 + 4 + 4 + 4 * 4 + 3 * 8 + 6 * 8 + meta.num_orus * 3 * 8 + 8) as u64
}

pub fn record_size(meta: &ScenarioMeta, flags: Flags) -> u64 {
    let orientation = if flags.orientation { 16 } else { 0 };
    (8 + 4 + 2 + 4 * meta.num_orus + 12 + orientation + 8 * meta.csi_len()) as u64
}

/// Streaming writer; the sample count is fixed up front.
pub struct DatasetWriter<W: Write> {
    sink: W,
    meta: ScenarioMeta,
    flags: Flags,
    declared: u64,
    written: u64,
    bytes: u64,
    buf: Vec<u8>,
}

impl<W: Write> DatasetWriter<W> {
    pub fn new(mut sink: W, meta: &ScenarioMeta, flags: Flags, sample_count: u64) -> Result<Self> {
        let problems = meta.check();
        if !problems.is_empty() {
            return Err(Error::invalid(format!("invalid scenario: {}", problems.join("; "))));
        }
        let mut h = Vec::with_capacity(header_size(meta) as usize);
        h.extend_from_slice(MAGIC);
        h.extend_from_slice(&VERSION.to_le_bytes());
        h.extend_from_slice(&flags.bits().to_le_bytes());
        for d in [meta.num_orus, meta.antennas_per_oru, meta.num_dmrs, meta.num_subcarriers] {
            h.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in [meta.sample_period, meta.carrier_frequency, meta.subcarrier_spacing]
            .into_iter()
            .chain(meta.area_min)
            .chain(meta.area_max)
            .chain(meta.oru_positions.iter().flatten().copied())
        {
            h.extend_from_slice(&v.to_le_bytes());
        }
        h.extend_from_slice(&sample_count.to_le_bytes());
        sink.write_all(&h).map_err(|e| Error::io("writing dataset header", e))?;
        Ok(DatasetWriter {
            sink,
            meta: meta.clone(),
            flags,
            declared: sample_count,
            written: 0,
            bytes: h.len() as u64,
            buf: Vec::with_capacity(record_size(meta, flags) as usize),
        })
    }

    pub fn write_sample(&mut self, s: &CsiSample) -> Result<()> {
        let m = &self.meta;
        let ctx = |msg: String| Error::invalid(format!("sample {}: {msg}", self.written));
        if self.written >= self.declared {
            return Err(ctx(format!("more samples than the declared {}", self.declared)));
        }
        let want = [m.num_orus, m.antennas_per_oru, m.num_dmrs, m.num_subcarriers];
        if s.csi.shape() != want {
            return Err(ctx(format!("csi shape {:?}, expected {want:?}", s.csi.shape())));
        }
        if s.noise_var.len() != m.num_orus {
            return Err(ctx(format!("{} noise variances for {} ORUs", s.noise_var.len(), m.num_orus)));
        }
        if (s.position.is_some() && !self.flags.positions)
            || (s.device_id.is_some() && !self.flags.device_ids)
            || (s.orientation.is_some() && !self.flags.orientation)
        {
            return Err(ctx("carries a field the header does not declare".into()));
        }
        if s.device_id == Some(NO_DEVICE) {
            return Err(ctx(format!("device id {NO_DEVICE:#x} is reserved")));
        }
        let b = &mut self.buf;
        b.clear();
        b.extend_from_slice(&s.timestamp.to_le_bytes());
        b.extend_from_slice(&s.rnti.to_le_bytes());
        b.extend_from_slice(&s.device_id.unwrap_or(NO_DEVICE).to_le_bytes());
        for v in &s.noise_var {
            b.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        for v in s.position.unwrap_or([f64::NAN; 3]) {
            b.extend_from_slice(&(v as f32).to_le_bytes());
        }
        if self.flags.orientation {
            for v in s.orientation.unwrap_or([f64::NAN; 4]) {
                b.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        for c in s.csi.as_slice() {
            b.extend_from_slice(&(c.re as f32).to_le_bytes());
            b.extend_from_slice(&(c.im as f32).to_le_bytes());
        }
        self.sink
            .write_all(b)
            .map_err(|e| Error::io(format!("writing record {}", self.written), e))?;
        self.bytes += b.len() as u64;
        self.written += 1;
        Ok(())
    }

    /// Flushes and returns the total byte count.
    pub fn finish(mut self) -> Result<u64> {
        if self.written != self.declared {
            return Err(Error::invalid(format!(
                "declared {} samples, wrote {}",
                self.declared, self.written
            )));
        }
        self.sink.flush().map_err(|e| Error::io("flushing dataset", e))?;
        Ok(self.bytes)
    }
}

/// Writes `ds` and returns the byte count.
pub fn write_dataset<W: Write>(ds: &Dataset, sink: W) -> Result<u64> {
    let mut w = DatasetWriter::new(sink, &ds.meta, Flags::for_dataset(ds), ds.len() as u64)?;
    for s in &ds.samples {
        w.write_sample(s)?;
    }
    w.finish()
}

/// Streaming reader yielding one sample per record.
pub struct DatasetReader<R: Read> {
    source: R,
    meta: ScenarioMeta,
    flags: Flags,
    count: u64,
    next: u64,
    offset: u64,
    buf: Vec<u8>,
    done: bool,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out = self.data[self.pos..self.pos + N].try_into().expect("length checked");
        self.pos += N;
        out
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
    fn f32(&mut self) -> f64 {
        f32::from_le_bytes(self.take()) as f64
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
}

/// Reads exactly `buf.len()` bytes; returns how many were available on failure.
fn fill<R: Read>(r: &mut R, buf: &mut [u8]) -> std::result::Result<(), (usize, std::io::Error)> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => {
                return Err((
                    got,
                    std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "unexpected end of file"),
                ))
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err((got, e)),
        }
    }
    Ok(())
}

impl<R: Read> DatasetReader<R> {
    pub fn open(mut source: R) -> Result<Self> {
        let mut fixed = [0u8; 12 + 16];
        fill(&mut source, &mut fixed[..4]).map_err(|(_, e)| Error::Format(format!("cannot read magic: {e}")))?;
        if &fixed[..4] != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&fixed[..4]),
                std::str::from_utf8(MAGIC).unwrap()
            )));
        }
        let corrupt = |offset: usize, what: &str| Error::Corruption {
            offset: offset as u64,
            record: None,
            msg: format!("truncated header ({what})"),
        };
        fill(&mut source, &mut fixed[4..]).map_err(|(n, _)| corrupt(4 + n, "fixed fields"))?;
        let mut c = Cursor { data: &fixed, pos: 4 };
        let version = c.u32();
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        let flags = Flags::from_bits(c.u32())?;
        let dims: Vec<usize> = (0..4).map(|_| c.u32() as usize).collect();
        let o = dims[0];
        if o == 0 || o > 4096 {
            return Err(Error::Format(format!("implausible ORU count {o}")));
        }
        let rest_len = 3 * 8 + 6 * 8 + o * 3 * 8 + 8;
        let mut rest = vec![0u8; rest_len];
        fill(&mut source, &mut rest).map_err(|(n, _)| corrupt(fixed.len() + n, "geometry"))?;
        let mut c = Cursor { data: &rest, pos: 0 };
        let (sample_period, carrier_frequency, subcarrier_spacing) = (c.f64(), c.f64(), c.f64());
        let mut area_min = [0.0; 3];
        let mut area_max = [0.0; 3];
        area_min.iter_mut().for_each(|v| *v = c.f64());
        area_max.iter_mut().for_each(|v| *v = c.f64());
        let oru_positions: Vec<Point> = (0..o).map(|_| [c.f64(), c.f64(), c.f64()]).collect();
        let count = u64::from_le_bytes(c.take());
        let meta = ScenarioMeta {
            num_orus: o,
            antennas_per_oru: dims[1],
            num_dmrs: dims[2],
            num_subcarriers: dims[3],
            subcarrier_spacing,
            carrier_frequency,
            sample_period,
            area_min,
            area_max,
            oru_positions,
        };
        let problems = meta.check();
        if !problems.is_empty() {
            return Err(Error::Format(format!("inconsistent header: {}", problems.join("; "))));
        }
        Ok(DatasetReader {
            source,
            buf: vec![0u8; record_size(&meta, flags) as usize],
            offset: header_size(&meta),
            meta,
            flags,
            count,
            next: 0,
            done: false,
        })
    }

    pub fn meta(&self) -> &ScenarioMeta {
        &self.meta
    }

    pub fn flags(&self) -> Flags {
        self.flags
    }

    /// Declared sample count.
    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    fn read_record(&mut self) -> Result<CsiSample> {
        let index = self.next;
        if let Err((n, e)) = fill(&mut self.source, &mut self.buf) {
            return Err(Error::Corruption {
                offset: self.offset + n as u64,
                record: Some(index),
                msg: format!("record {index} truncated: {e}"),
            });
        }
        let m = &self.meta;
        let mut c = Cursor { data: &self.buf, pos: 0 };
        let timestamp = c.f64();
        let rnti = c.u32();
        let dev = u16::from_le_bytes(c.take());
        let noise_var: Vec<f64> = (0..m.num_orus).map(|_| c.f32()).collect();
        let pos = [c.f32(), c.f32(), c.f32()];
        let orientation = if self.flags.orientation {
            let q = [c.f32(), c.f32(), c.f32(), c.f32()];
            (!q.iter().all(|v| v.is_nan())).then_some(q)
        } else {
            None
        };
        let csi: Vec<Complex64> = (0..m.csi_len()).map(|_| Complex64::new(c.f32(), c.f32())).collect();
        let shape = [m.num_orus, m.antennas_per_oru, m.num_dmrs, m.num_subcarriers];
        self.offset += self.buf.len() as u64;
        self.next += 1;
        Ok(CsiSample {
            timestamp,
            rnti,
            device_id: (dev != NO_DEVICE).then_some(dev),
            csi: CsiTensor::from_vec(shape, csi)?,
            noise_var,
            position: (!pos.iter().all(|v| v.is_nan())).then_some(pos),
            orientation,
        })
    }

    fn check_eof(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        loop {
            match self.source.read(&mut probe) {
                Ok(0) => return Ok(()),
                Ok(_) => {
                    return Err(Error::Corruption {
                        offset: self.offset,
                        record: None,
                        msg: format!("trailing bytes after the declared {} records", self.count),
                    })
                }
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(Error::io("reading dataset", e)),
            }
        }
    }
}

impl<R: Read> Iterator for DatasetReader<R> {
    type Item = Result<CsiSample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        if self.next == self.count {
            self.done = true;
            return self.check_eof().err().map(Err);
        }
        let r = self.read_record();
        if r.is_err() {
            self.done = true;
        }
        Some(r)
    }
}

pub fn read_dataset<R: Read>(source: R) -> Result<Dataset> {
    let reader = DatasetReader::open(source)?;
    let meta = reader.meta().clone();
    let samples = reader.collect::<Result<Vec<_>>>()?;
    Ok(Dataset { meta, samples })
}

/// How queries outside the track's time span are treated.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LabelPolicy {
    #[default]
    Strict,
    /// Queries up to `margin` seconds outside the span take the end position.
    Clamp { margin: f64 },
}

/// Position labels sampled on their own clock.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTrack {
    timestamps: Vec<f64>,
    positions: Vec<Point>,
}

impl LabelTrack {
    pub fn new(timestamps: Vec<f64>, positions: Vec<Point>) -> Result<Self> {
        if timestamps.len() != positions.len() {
            return Err(Error::invalid(format!(
                "{} timestamps but {} positions",
                timestamps.len(),
                positions.len()
            )));
        }
        if timestamps.len() < 2 {
            return Err(Error::invalid("a label track needs at least two entries"));
        }
        if let Some(i) = timestamps.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(format!("track timestamps not increasing at index {}", i + 1)));
        }
        Ok(LabelTrack { timestamps, positions })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn interpolate(&self, queries: &[f64], policy: LabelPolicy) -> Result<Vec<Point>> {
        let (first, last) = (self.timestamps[0], *self.timestamps.last().unwrap());
        let margin = match policy {
            LabelPolicy::Strict => 0.0,
            LabelPolicy::Clamp { margin } => margin,
        };
        let bad: Vec<f64> = queries
            .iter()
            .copied()
            .filter(|&t| !(t >= first - margin && t <= last + margin))
            .collect();
        if !bad.is_empty() {
            return Err(Error::OutOfRange(bad));
        }
        Ok(queries
            .iter()
            .map(|&t| {
                let t = t.clamp(first, last);
                let k = self.timestamps.partition_point(|&x| x <= t);
                if k == 0 {
                    return self.positions[0];
                }
                let i = k - 1;
                if i + 1 >= self.timestamps.len() || self.timestamps[i] == t {
                    return self.positions[i];
                }
                let (t0, t1) = (self.timestamps[i], self.timestamps[i + 1]);
                let a = (t - t0) / (t1 - t0);
                let (p0, p1) = (self.positions[i], self.positions[i + 1]);
                [
                    p0[0] + a * (p1[0] - p0[0]),
                    p0[1] + a * (p1[1] - p0[1]),
                    p0[2] + a * (p1[2] - p0[2]),
                ]
            })
            .collect())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("writing label track", e);
        writeln!(w, "timestamp,x,y,z").map_err(io)?;
        for (t, p) in self.timestamps.iter().zip(&self.positions) {
            writeln!(w, "{t},{},{},{}", p[0], p[1], p[2]).map_err(io)?;
        }
        Ok(())
    }
}

/// Labels every sample of `ds` from `track`.
pub fn interpolate_labels(ds: &mut Dataset, track: &LabelTrack, policy: LabelPolicy) -> Result<()> {
    let ts: Vec<f64> = ds.samples.iter().map(|s| s.timestamp).collect();
    let pos = track.interpolate(&ts, policy)?;
    for (s, p) in ds.samples.iter_mut().zip(pos) {
        s.position = Some(p);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::model::validate_dataset;
    use crate::synthgen::{gen_dataset, preset_scenarios, Preset};

    fn small_ds(n: usize) -> Dataset {
        let meta = Preset::Indoor.meta().with_subcarriers(24);
        let mut sc = preset_scenarios(Preset::Indoor, meta, n as f64 * 0.02, 5).remove(0);
        sc.motion.speed = 1.0;
        gen_dataset(&sc).unwrap()
    }

    #[test]
    fn roundtrip_synthetic_dataset() {
        let ds = small_ds(100);
        assert_eq!(ds.len(), 100);
        let mut buf = Vec::new();
        let n = write_dataset(&ds, &mut buf).unwrap();
        assert_eq!(n as usize, buf.len());
        let back = read_dataset(&buf[..]).unwrap();
        assert_eq!(back, ds);
        assert!(validate_dataset(&back).is_pass());
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let ds = Dataset::new(ScenarioMeta::square(2.0, 0.01).with_subcarriers(12));
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        assert_eq!(buf.len() as u64, header_size(&ds.meta));
        let back = read_dataset(&buf[..]).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.meta, ds.meta);
    }

    /// Counts bytes without storing them.
    struct Counter(u64);
    impl Write for Counter {
        fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
            self.0 += b.len() as u64;
            Ok(b.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn default_shape_file_size() {
        let meta = ScenarioMeta::square(3.5, 0.02);
        // O=4, B=4, D=3, S=3276
        let header = 4 + 4 + 4 + 16 + 24 + 48 + 4 * 24 + 8;
        let record = 8 + 4 + 2 + 16 + 12 + 4 * 4 * 3 * 3276 * 8;
        assert_eq!(header_size(&meta), header);
        let flags = Flags {
            positions: true,
            device_ids: false,
            orientation: false,
        };
        assert_eq!(record_size(&meta, flags), record);
        let sample = CsiSample {
            timestamp: 0.0,
            rnti: 1,
            device_id: None,
            csi: CsiTensor::for_meta(&meta),
            noise_var: vec![0.0; 4],
            position: Some([1.0, 1.0, 0.0]),
            orientation: None,
        };
        let mut w = DatasetWriter::new(Counter(0), &meta, flags, 3000).unwrap();
        for _ in 0..3000 {
            w.write_sample(&sample).unwrap();
        }
        assert_eq!(w.finish().unwrap(), header + 3000 * record);
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut buf = Vec::new();
        write_dataset(&small_ds(3), &mut buf).unwrap();
        buf[0] = b'X';
        assert!(matches!(read_dataset(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn bad_version_is_version_error() {
        let mut buf = Vec::new();
        write_dataset(&small_ds(3), &mut buf).unwrap();
        buf[4] = 9;
        assert!(matches!(read_dataset(&buf[..]), Err(Error::Version { found: 9, expected: 1 })));
    }

    #[test]
    fn truncation_names_record() {
        let ds = small_ds(5);
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let rec = record_size(&ds.meta, Flags::for_dataset(&ds));
        let cut = header_size(&ds.meta) + 2 * rec + rec / 2;
        match read_dataset(&buf[..cut as usize]) {
            Err(Error::Corruption { offset, record, .. }) => {
                assert_eq!(record, Some(2));
                assert_eq!(offset, cut);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut buf = Vec::new();
        write_dataset(&small_ds(2), &mut buf).unwrap();
        buf.extend_from_slice(&[0, 0, 0]);
        assert!(matches!(read_dataset(&buf[..]), Err(Error::Corruption { .. })));
    }

    #[test]
    fn writer_rejects_undeclared_fields_and_counts() {
        let ds = small_ds(2);
        let mut w = DatasetWriter::new(Vec::new(), &ds.meta, Flags::default(), 2).unwrap();
        assert!(w.write_sample(&ds.samples[0]).is_err());
        let mut w = DatasetWriter::new(Vec::new(), &ds.meta, Flags::for_dataset(&ds), 2).unwrap();
        w.write_sample(&ds.samples[0]).unwrap();
        assert!(w.finish().is_err());
    }

    #[test]
    fn interpolation_examples() {
        let tr = LabelTrack::new(vec![0.0, 1.0], vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
        assert_eq!(tr.interpolate(&[0.5], LabelPolicy::Strict).unwrap(), vec![[1.0, 0.0, 0.0]]);
        assert_eq!(tr.interpolate(&[1.0, 0.0], LabelPolicy::Strict).unwrap(), vec![[2.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        match tr.interpolate(&[0.2, 1.5, -0.1], LabelPolicy::Strict) {
            Err(Error::OutOfRange(bad)) => assert_eq!(bad, vec![1.5, -0.1]),
            other => panic!("{other:?}"),
        }
        let clamped = tr.interpolate(&[1.01], LabelPolicy::Clamp { margin: 0.02 }).unwrap();
        assert_eq!(clamped, vec![[2.0, 0.0, 0.0]]);
        assert!(tr.interpolate(&[1.05], LabelPolicy::Clamp { margin: 0.02 }).is_err());
    }

    #[test]
    fn interpolation_exact_on_linear_motion() {
        let ts: Vec<f64> = (0..=20).map(|k| k as f64 / 10.0).collect();
        let ps = ts.iter().map(|&t| [3.0 * t, -t, 0.0]).collect();
        let tr = LabelTrack::new(ts, ps).unwrap();
        let q: Vec<f64> = (0..=200).map(|k| k as f64 / 100.0).collect();
        let got = tr.interpolate(&q, LabelPolicy::Strict).unwrap();
        let max = q
            .iter()
            .zip(&got)
            .map(|(t, p)| (p[0] - 3.0 * t).abs().max((p[1] + t).abs()))
            .fold(0.0, f64::max);
        assert!(max <= 1e-14, "{max}");
    }

    #[test]
    fn interpolation_error_bounded_on_smooth_track() {
        // |error| ≤ h²/8 · max|p''| for a sine track
        let h = 0.1;
        let ts: Vec<f64> = (0..=50).map(|k| k as f64 * h).collect();
        let ps = ts.iter().map(|&t| [t.sin(), 0.0, 0.0]).collect();
        let tr = LabelTrack::new(ts, ps).unwrap();
        let q: Vec<f64> = (0..=500).map(|k| k as f64 * 0.01).collect();
        for (t, p) in q.iter().zip(tr.interpolate(&q, LabelPolicy::Strict).unwrap()) {
            assert!((p[0] - t.sin()).abs() <= h * h / 8.0 + 1e-12);
        }
    }

    #[test]
    fn label_track_csv_and_validation() {
        assert!(LabelTrack::new(vec![0.0, 0.0], vec![[0.0; 3]; 2]).is_err());
        assert!(LabelTrack::new(vec![0.0], vec![[0.0; 3]]).is_err());
        let tr = LabelTrack::new(vec![0.0, 0.5], vec![[0.0; 3], [1.0, 2.0, 0.0]]).unwrap();
        let mut out = Vec::new();
        tr.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "timestamp,x,y,z\n0,0,0,0\n0.5,1,2,0\n");
    }

    #[test]
    fn labels_applied_to_dataset() {
        let mut ds = small_ds(10);
        ds.samples.iter_mut().for_each(|s| s.position = None);
        let tr = LabelTrack::new(vec![0.0, 1.0], vec![[0.0; 3], [1.0, 0.0, 0.0]]).unwrap();
        interpolate_labels(&mut ds, &tr, LabelPolicy::Strict).unwrap();
        assert!(ds.has_positions());
        assert!((ds.samples[5].position.unwrap()[0] - ds.samples[5].timestamp).abs() < 1e-15);
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        (2usize..5, 1usize..3, 1usize..3, 1usize..3, 0usize..6, any::<u64>(), any::<(bool, bool, bool)>()).prop_map(
            |(o, b, d, s, n, seed, (hp, hd, ho))| {
                use rand::Rng;
                let mut r = crate::rng::seeded(seed);
                let s = 12 * s;
                let mut meta = ScenarioMeta::square(3.0, 0.01).with_subcarriers(s);
                meta.num_orus = o;
                meta.antennas_per_oru = b;
                meta.num_dmrs = d;
                meta.oru_positions.truncate(o);
                let f = |r: &mut crate::rng::Rng| r.random_range(-1e3f32..1e3) as f64;
                let samples = (0..n)
                    .map(|k| CsiSample {
                        timestamp: k as f64 * 0.01 + r.random::<f64>() * 1e-3,
                        rnti: r.random(),
                        device_id: hd.then(|| r.random_range(0..NO_DEVICE)),
                        csi: CsiTensor::from_vec(
                            [o, b, d, s],
                            (0..o * b * d * s).map(|_| Complex64::new(f(&mut r), f(&mut r))).collect(),
                        )
                        .unwrap(),
                        noise_var: (0..o).map(|_| f(&mut r).abs()).collect(),
                        position: hp.then(|| [f(&mut r), f(&mut r), f(&mut r)]),
                        orientation: ho.then(|| [f(&mut r), f(&mut r), f(&mut r), f(&mut r)]),
                    })
                    .collect();
                Dataset { meta, samples }
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn roundtrip_identity(ds in arb_dataset()) {
            let mut buf = Vec::new();
            write_dataset(&ds, &mut buf).unwrap();
            prop_assert_eq!(read_dataset(&buf[..]).unwrap(), ds);
        }
    }
}
