//! Mixed-radix Cooley-Tukey DFT for arbitrary lengths.
//!
//! Every prime factor of the length gets its own radix; radices are combined
//! with a direct `p`-point DFT, so a length with a large prime factor degrades
//! gracefully toward O(N²). Scaling is unitary (1/√N) in both directions.

use num_complex::Complex;

use crate::scalar::Scalar;

/// Precomputed factorization and twiddles for one transform length.
#[derive(Debug, Clone)]
pub struct FftPlan<T> {
    len: usize,
    factors: Vec<usize>,
    /// `exp(-2πi k / len)` for `k < len`.
    twiddles: Vec<Complex<T>>,
    scale: T,
}

fn factorize(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for p in [4usize, 2, 3, 5] {
        while n % p == 0 && n > 1 {
            out.push(p);
            n /= p;
        }
    }
    let mut p = 7;
    while p * p <= n {
        while n % p == 0 {
            out.push(p);
            n /= p;
        }
        p += 2;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

impl<T: Scalar> FftPlan<T> {
    pub fn new(len: usize) -> Self {
        assert!(len >= 1, "DFT length must be at least 1");
        let twiddles = (0..len)
            .map(|k| {
                let angle = -2.0 * std::f64::consts::PI * (k as f64) / (len as f64);
                Complex::new(T::from_f64_lossy(angle.cos()), T::from_f64_lossy(angle.sin()))
            })
            .collect();
        FftPlan {
            len,
            factors: factorize(len),
            twiddles,
            scale: T::from_f64_lossy(1.0 / (len as f64).sqrt()),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Unitary forward (`inverse = false`) or inverse transform of `input`.
    pub fn process(&self, input: &[Complex<T>], inverse: bool) -> Vec<Complex<T>> {
        assert_eq!(input.len(), self.len, "input length does not match the plan");
        let mut out = vec![Complex::new(T::zero(), T::zero()); self.len];
        let max_radix = self.factors.iter().copied().max().unwrap_or(1);
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); 2 * max_radix];
        self.recurse(input, 0, 1, &mut out, 0, inverse, &mut scratch);
        for v in &mut out {
            *v = *v * self.scale;
        }
        out
    }

    #[inline]
    fn twiddle(&self, idx: usize, inverse: bool) -> Complex<T> {
        let w = self.twiddles[idx % self.len];
        if inverse {
            w.conj()
        } else {
            w
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &self,
        input: &[Complex<T>],
        offset: usize,
        stride: usize,
        out: &mut [Complex<T>],
        depth: usize,
        inverse: bool,
        scratch: &mut [Complex<T>],
    ) {
        let len = out.len();
        if len == 1 {
            out[0] = input[offset];
            return;
        }
        let radix = self.factors[depth];
        let m = len / radix;
        for r in 0..radix {
            self.recurse(
                input,
                offset + r * stride,
                stride * radix,
                &mut out[r * m..(r + 1) * m],
                depth + 1,
                inverse,
                scratch,
            );
        }
        // Twiddle exponents are in units of the full-length root of unity.
        let step = self.len / len;
        let (tmp, acc) = scratch.split_at_mut(radix);
        for k in 0..m {
            for r in 0..radix {
                tmp[r] = out[r * m + k] * self.twiddle(r * k * step, inverse);
            }
            match radix {
                2 => {
                    acc[0] = tmp[0] + tmp[1];
                    acc[1] = tmp[0] - tmp[1];
                }
                4 => {
                    let a = tmp[0] + tmp[2];
                    let b = tmp[0] - tmp[2];
                    let c = tmp[1] + tmp[3];
                    let d = tmp[1] - tmp[3];
                    // multiply by -i (forward) or +i (inverse)
                    let d_rot = if inverse {
                        Complex::new(-d.im, d.re)
                    } else {
                        Complex::new(d.im, -d.re)
                    };
                    acc[0] = a + c;
                    acc[1] = b + d_rot;
                    acc[2] = a - c;
                    acc[3] = b - d_rot;
                }
                _ => {
                    for (q, slot) in acc.iter_mut().take(radix).enumerate() {
                        let mut sum = tmp[0];
                        for (r, t) in tmp.iter().enumerate().skip(1) {
                            sum = sum + *t * self.twiddle(r * q * m * step, inverse);
                        }
                        *slot = sum;
                    }
                }
            }
            for q in 0..radix {
                out[k + q * m] = acc[q];
            }
        }
    }
}

/// One-shot unitary DFT (or inverse) of `x`.
pub fn dft<T: Scalar>(x: &[Complex<T>], inverse: bool) -> Vec<Complex<T>> {
    FftPlan::new(x.len()).process(x, inverse)
}
