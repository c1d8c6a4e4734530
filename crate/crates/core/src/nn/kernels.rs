//! Small dense kernels shared by the layers.

use crate::scalar::Scalar;

/// `y += a * x`
#[inline]
pub(crate) fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * *xv;
    }
}

/// Dot product with eight fixed partial sums (deterministic, vectorizable).
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += *x * *y;
    }
    s
}

/// Unfolds one `[C, H, W]` item into `[C*k*k][Ho*Wo]` columns.
pub(crate) fn im2col<T: Scalar>(
    x: &[T],
    [c, h, w]: [usize; 3],
    k: usize,
    stride: usize,
    pad: usize,
    [ho, wo]: [usize; 2],
    cols: &mut [T],
) {
    let pix = ho * wo;
    for ch in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let dst = &mut cols[row * pix..(row + 1) * pix];
                for oh in 0..ho {
                    let ih = (oh * stride + ki) as isize - pad as isize;
                    for ow in 0..wo {
                        let iw = (ow * stride + kj) as isize - pad as isize;
                        dst[oh * wo + ow] = if ih >= 0 && (ih as usize) < h && iw >= 0 && (iw as usize) < w {
                            x[(ch * h + ih as usize) * w + iw as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the item.
pub(crate) fn col2im_add<T: Scalar>(
    cols: &[T],
    [c, h, w]: [usize; 3],
    k: usize,
    stride: usize,
    pad: usize,
    [ho, wo]: [usize; 2],
    dx: &mut [T],
) {
    let pix = ho * wo;
    for ch in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let src = &cols[row * pix..(row + 1) * pix];
                for oh in 0..ho {
                    let ih = (oh * stride + ki) as isize - pad as isize;
                    if ih < 0 || ih as usize >= h {
                        continue;
                    }
                    for ow in 0..wo {
                        let iw = (ow * stride + kj) as isize - pad as isize;
                        if iw >= 0 && (iw as usize) < w {
                            dx[(ch * h + ih as usize) * w + iw as usize] += src[oh * wo + ow];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..37).map(|i| i as f64 * 0.3 - 2.0).collect();
        let b: Vec<f64> = (0..37).map(|i| (i as f64).sin()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let (c, h, w, k, s, p) = (2, 5, 4, 3, 2, 1);
        let (ho, wo) = ((h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1);
        let x: Vec<f64> = (0..c * h * w).map(|i| (i as f64 * 0.7).cos()).collect();
        let y: Vec<f64> = (0..c * k * k * ho * wo).map(|i| (i as f64 * 1.3).sin()).collect();
        let mut cols = vec![0.0; y.len()];
        im2col(&x, [c, h, w], k, s, p, [ho, wo], &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im_add(&y, [c, h, w], k, s, p, [ho, wo], &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
