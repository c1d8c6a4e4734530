//! Per-device transmit RF-chain responses.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng;

/// Transmit-chain transfer function of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceFingerprint {
    pub device_id: u16,
    /// One complex gain per subcarrier.
    pub freq_response: Vec<Complex64>,
    /// Phase advance per DMRS symbol, radians.
    pub dmrs_phase_drift: f64,
}

/// Candidates above this normalized correlation with an existing fingerprint
/// are redrawn.
pub const MAX_CORRELATION: f64 = 0.99;

fn normalized_frequency(s: usize, n: usize) -> f64 {
    (s as f64 - 0.5 * n as f64) / (0.5 * n as f64)
}

impl DeviceFingerprint {
    /// Flat response, no drift.
    pub fn ideal(device_id: u16, subcarriers: usize) -> Self {
        DeviceFingerprint {
            device_id,
            freq_response: vec![Complex64::new(1.0, 0.0); subcarriers],
            dmrs_phase_drift: 0.0,
        }
    }

    /// Random low-order complex polynomial over normalized frequency
    /// (order 3–6) plus a small sinusoidal ripple, scaled to a mean
    /// magnitude in [0.7, 1.4].
    pub fn random(device_id: u16, subcarriers: usize, seed: u64) -> Self {
        let mut r = rng::seeded(seed);
        let order = r.random_range(3..=6usize);
        let mut coeffs = vec![Complex64::new(1.0, 0.0)];
        for _ in 0..order {
            coeffs.push(Complex64::from_polar(
                r.random_range(0.2..1.0),
                r.random_range(0.0..std::f64::consts::TAU),
            ));
        }
        let ripple_amp = r.random_range(0.01..0.05);
        let ripple_cycles = r.random_range(2.0..6.0);
        let ripple_phase = r.random_range(0.0..std::f64::consts::TAU);
        let mut g: Vec<Complex64> = (0..subcarriers)
            .map(|s| {
                let x = normalized_frequency(s, subcarriers);
                let poly = coeffs
                    .iter()
                    .rev()
                    .fold(Complex64::new(0.0, 0.0), |acc, c| acc * x + c);
                poly + Complex64::from_polar(
                    ripple_amp,
                    std::f64::consts::TAU * ripple_cycles * x + ripple_phase,
                )
            })
            .collect();
        let target = r.random_range(0.7..1.4);
        let mean = g.iter().map(|v| v.norm()).sum::<f64>() / subcarriers.max(1) as f64;
        g.iter_mut().for_each(|v| *v *= target / mean);
        DeviceFingerprint {
            device_id,
            freq_response: g,
            dmrs_phase_drift: r.random_range(-0.05..0.05),
        }
    }

    /// A near-identical sibling (same hardware model): the response is
    /// multiplied by `1 + ε·p(x)` with a smooth random `p`, `|ε| ≤ strength`.
    pub fn twin(&self, device_id: u16, strength: f64, seed: u64) -> Self {
        let mut r = rng::seeded(seed);
        let n = self.freq_response.len();
        let a = Complex64::from_polar(strength * r.random_range(0.5..1.0), r.random_range(0.0..6.3));
        let b = Complex64::from_polar(strength * r.random_range(0.5..1.0), r.random_range(0.0..6.3));
        let freq_response = self
            .freq_response
            .iter()
            .enumerate()
            .map(|(s, g)| {
                let x = normalized_frequency(s, n);
                g * (Complex64::new(1.0, 0.0) + a * x + b * x * x)
            })
            .collect();
        DeviceFingerprint {
            device_id,
            freq_response,
            dmrs_phase_drift: self.dmrs_phase_drift + strength * r.random_range(-0.01..0.01),
        }
    }

    /// `|⟨g₁, g₂⟩| / (‖g₁‖·‖g₂‖)`.
    pub fn correlation(&self, other: &DeviceFingerprint) -> f64 {
        let ip: Complex64 = self
            .freq_response
            .iter()
            .zip(&other.freq_response)
            .map(|(a, b)| a.conj() * b)
            .sum();
        let na: f64 = self.freq_response.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let nb: f64 = other.freq_response.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        ip.norm() / (na * nb)
    }

    pub fn mean_magnitude(&self) -> f64 {
        self.freq_response.iter().map(|v| v.norm()).sum::<f64>()
            / self.freq_response.len().max(1) as f64
    }

    /// Largest magnitude of a first difference across subcarriers.
    pub fn max_step(&self) -> f64 {
        self.freq_response
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .fold(0.0, f64::max)
    }

    /// Mean magnitude in [0.5, 2] and first differences below 40/S of the
    /// mean magnitude.
    pub fn is_plausible(&self) -> bool {
        let n = self.freq_response.len() as f64;
        let m = self.mean_magnitude();
        (0.5..=2.0).contains(&m) && self.max_step() <= 40.0 / n * m
    }
}

/// `count` fingerprints with ids `0..count`, pairwise correlation below
/// [`MAX_CORRELATION`].
pub fn gen_fingerprints(count: usize, subcarriers: usize, seed: u64) -> Vec<DeviceFingerprint> {
    let mut out: Vec<DeviceFingerprint> = Vec::with_capacity(count);
    let mut attempt = 0u64;
    while out.len() < count {
        let fp = DeviceFingerprint::random(out.len() as u16, subcarriers, rng::derive(seed, attempt));
        attempt += 1;
        if fp.is_plausible() && out.iter().all(|o| o.correlation(&fp) < MAX_CORRELATION) {
            out.push(fp);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprints_are_plausible_and_separable() {
        for s in [96usize, 3276] {
            let fps = gen_fingerprints(8, s, 11);
            for (i, a) in fps.iter().enumerate() {
                assert!(a.is_plausible(), "S={s} fp {i} implausible");
                assert!(a.dmrs_phase_drift.abs() <= 0.05);
                for b in &fps[i + 1..] {
                    assert!(a.correlation(b) < 0.99);
                }
            }
        }
    }

    #[test]
    fn twin_is_nearly_identical() {
        let a = DeviceFingerprint::random(0, 96, 1);
        let t = a.twin(1, 0.02, 2);
        assert!(a.correlation(&t) >= 0.999);
        assert!(t.is_plausible());
    }

    #[test]
    fn self_correlation_is_one() {
        let a = DeviceFingerprint::random(3, 240, 9);
        assert!((a.correlation(&a) - 1.0).abs() < 1e-12);
    }
}
