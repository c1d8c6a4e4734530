//! Geometric multipath channel: one LOS path plus single-bounce scatterers.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dist, Point, ScenarioMeta};
use crate::rng;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Path segments shorter than this are clamped (far-field floor), so a UE
/// passing through a scatterer does not produce an unbounded amplitude.
pub const MIN_SEGMENT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: Point,
    /// Reflection coefficient, `|gain| ≤ 1`.
    pub gain: Complex64,
}

/// Scatterers placed uniformly in the area inflated 1.5× about its center,
/// with `|gain| ~ U[0.2, 0.8]` and uniform phase.
pub fn random_scatterers(meta: &ScenarioMeta, count: usize, seed: u64) -> Vec<Scatterer> {
    let mut r = rng::seeded(seed);
    let dims = meta.dims();
    (0..count)
        .map(|_| {
            let mut position = [0.0; 3];
            for (i, p) in position.iter_mut().enumerate().take(dims) {
                let center = 0.5 * (meta.area_min[i] + meta.area_max[i]);
                let half = 0.75 * (meta.area_max[i] - meta.area_min[i]);
                *p = center + r.random_range(-half..half);
            }
            let mag = r.random_range(0.2..0.8);
            let phase = r.random_range(0.0..std::f64::consts::TAU);
            Scatterer {
                position,
                gain: Complex64::from_polar(mag, phase),
            }
        })
        .collect()
}

/// Frequency response over [ORU][antenna][subcarrier].
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelResponse {
    pub orus: usize,
    pub antennas: usize,
    pub subcarriers: usize,
    pub data: Vec<Complex64>,
}

impl ChannelResponse {
    pub fn row(&self, o: usize, b: usize) -> &[Complex64] {
        let off = (o * self.antennas + b) * self.subcarriers;
        &self.data[off..off + self.subcarriers]
    }

    /// Σ|H|² over one ORU's antennas and subcarriers.
    pub fn oru_energy(&self, o: usize) -> f64 {
        (0..self.antennas)
            .flat_map(|b| self.row(o, b).iter())
            .map(|h| h.norm_sqr())
            .sum()
    }
}

/// Antenna `b` of ORU `o`: half-wavelength uniform linear array along x,
/// centered on the ORU position.
pub fn antenna_position(meta: &ScenarioMeta, o: usize, b: usize) -> Point {
    let wavelength = SPEED_OF_LIGHT / meta.carrier_frequency;
    let offset = (b as f64 - 0.5 * (meta.antennas_per_oru as f64 - 1.0)) * 0.5 * wavelength;
    let p = meta.oru_positions[o];
    [p[0] + offset, p[1], p[2]]
}

/// Baseband frequency of subcarrier `s`, Hz.
pub fn subcarrier_frequency(meta: &ScenarioMeta, s: usize) -> f64 {
    (s as f64 - 0.5 * meta.num_subcarriers as f64) * meta.subcarrier_spacing
}

/// Adds `amp · exp(−j2π f_s τ)` over all subcarriers, by phasor recursion
/// re-anchored every 64 subcarriers.
fn accumulate_path(out: &mut [Complex64], meta: &ScenarioMeta, amp: Complex64, delay: f64) {
    let omega = -std::f64::consts::TAU * delay;
    let step = Complex64::from_polar(1.0, omega * meta.subcarrier_spacing);
    for (chunk_idx, chunk) in out.chunks_mut(64).enumerate() {
        let f0 = subcarrier_frequency(meta, chunk_idx * 64);
        let mut ph = amp * Complex64::from_polar(1.0, omega * f0);
        for h in chunk {
            *h += ph;
            ph *= step;
        }
    }
}

/// Noise-free channel from a UE at `position` to every receive antenna.
pub fn gen_channel(
    position: &Point,
    meta: &ScenarioMeta,
    scatterers: &[Scatterer],
) -> Result<ChannelResponse> {
    for (o, p) in meta.oru_positions.iter().enumerate() {
        if dist(p, position) < 1e-9 {
            return Err(Error::invalid(format!(
                "UE position {position:?} coincides with ORU {o}"
            )));
        }
    }
    let (orus, antennas, subcarriers) =
        (meta.num_orus, meta.antennas_per_oru, meta.num_subcarriers);
    let mut data = vec![Complex64::new(0.0, 0.0); orus * antennas * subcarriers];
    for o in 0..orus {
        for b in 0..antennas {
            let ant = antenna_position(meta, o, b);
            let off = (o * antennas + b) * subcarriers;
            let row = &mut data[off..off + subcarriers];
            let d = dist(position, &ant);
            if d < 1e-9 {
                return Err(Error::invalid(format!(
                    "UE position {position:?} coincides with antenna {b} of ORU {o}"
                )));
            }
            accumulate_path(row, meta, Complex64::new(1.0 / d, 0.0), d / SPEED_OF_LIGHT);
            for sc in scatterers {
                let d1 = dist(position, &sc.position).max(MIN_SEGMENT);
                let d2 = dist(&sc.position, &ant).max(MIN_SEGMENT);
                accumulate_path(row, meta, sc.gain / (d1 * d2), (d1 + d2) / SPEED_OF_LIGHT);
            }
        }
    }
    Ok(ChannelResponse {
        orus,
        antennas,
        subcarriers,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_oru_meta() -> ScenarioMeta {
        let mut m = ScenarioMeta::square(10.0, 0.02).with_subcarriers(120);
        m.antennas_per_oru = 1;
        m
    }

    #[test]
    fn los_magnitude_is_inverse_distance() {
        let meta = one_oru_meta();
        let pos = [3.0, 4.0, 0.0];
        let h = gen_channel(&pos, &meta, &[]).unwrap();
        for v in h.row(0, 0) {
            assert!((v.norm() - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn los_phase_slope_matches_delay() {
        let meta = one_oru_meta();
        let d = 5.0;
        let h = gen_channel(&[3.0, 4.0, 0.0], &meta, &[]).unwrap();
        let expect = -std::f64::consts::TAU * 30e3 * d / SPEED_OF_LIGHT;
        let row = h.row(0, 0);
        for s in 0..row.len() - 1 {
            let slope = (row[s + 1] * row[s].conj()).arg();
            assert!((slope - expect).abs() < 1e-9, "slope {slope} vs {expect}");
        }
        // absolute phase at the first subcarrier (f = −S/2·Δf)
        let f0 = -60.0 * 30e3;
        let phase = Complex64::from_polar(1.0, -std::f64::consts::TAU * f0 * d / SPEED_OF_LIGHT);
        assert!((row[0] * 5.0 - phase).norm() < 1e-12);
    }

    #[test]
    fn energy_decreases_with_distance() {
        let meta = one_oru_meta();
        let mut prev = f64::INFINITY;
        for k in 1..40 {
            let x = 0.25 * k as f64;
            let e = gen_channel(&[x, 0.0, 0.0], &meta, &[]).unwrap().oru_energy(0);
            assert!(e < prev);
            prev = e;
        }
    }

    #[test]
    fn coincident_position_rejected() {
        let meta = ScenarioMeta::default();
        assert!(matches!(
            gen_channel(&meta.oru_positions[2].clone(), &meta, &[]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn scatterer_path_adds_expected_term() {
        let meta = one_oru_meta();
        let pos = [3.0, 4.0, 0.0];
        let sc = Scatterer {
            position: [6.0, 8.0, 0.0],
            gain: Complex64::new(0.0, 0.5),
        };
        let h0 = gen_channel(&pos, &meta, &[]).unwrap();
        let h1 = gen_channel(&pos, &meta, &[sc]).unwrap();
        let d1 = 5.0;
        let d2 = 10.0;
        let s = 17;
        let f = subcarrier_frequency(&meta, s);
        let term = sc.gain / (d1 * d2)
            * Complex64::from_polar(1.0, -std::f64::consts::TAU * f * (d1 + d2) / SPEED_OF_LIGHT);
        assert!((h1.row(0, 0)[s] - h0.row(0, 0)[s] - term).norm() < 1e-12);
    }

    #[test]
    fn scatterers_stay_in_inflated_area() {
        let meta = ScenarioMeta::square(4.0, 0.01);
        let sc = random_scatterers(&meta, 200, 3);
        for s in &sc {
            assert!(s.position[0] >= -1.0 && s.position[0] <= 5.0);
            assert!(s.position[1] >= -1.0 && s.position[1] <= 5.0);
            assert!(s.gain.norm() >= 0.2 && s.gain.norm() <= 0.8);
        }
    }
}
