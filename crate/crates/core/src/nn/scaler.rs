use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-input standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl Standardizer {
    /// Inputs with (near) zero spread are centred but not scaled.
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::invalid("no rows to fit a standardizer"))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            if r.len() != d {
                return Err(Error::invalid("rows of unequal length"));
            }
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale = var.iter().map(|v| v.sqrt()).fold(0.0, f64::max);
        let inv_std = var
            .iter()
            .map(|v| {
                let s = v.sqrt();
                if s > 1e-12 * scale.max(f64::MIN_POSITIVE) { 1.0 / s } else { 1.0 }
            })
            .collect();
        Ok(Standardizer { mean, inv_std })
    }

    pub fn identity(d: usize) -> Self {
        Standardizer {
            mean: vec![0.0; d],
            inv_std: vec![1.0; d],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.inv_std)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }
}
