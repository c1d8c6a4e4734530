//! Losses and their gradients.

use super::network::softmax_in_place;
use crate::scalar::{c, Scalar};

pub const BCE_EPS: f64 = 1e-12;

fn clamp_prob<T: Scalar>(p: T) -> T {
    let eps = c::<T>(BCE_EPS);
    p.max(eps).min(T::one() - eps)
}

/// Mean binary cross-entropy over every element.
pub fn bce_mean<T: Scalar>(pred: &[T], target: &[T]) -> T {
    assert_eq!(pred.len(), target.len(), "bce length mismatch");
    if pred.is_empty() {
        return T::zero();
    }
    let total: T = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = clamp_prob(p);
            -(t * p.ln() + (T::one() - t) * (T::one() - p).ln())
        })
        .sum();
    total / c::<T>(pred.len() as f64)
}

/// Gradient of [`bce_mean`] with respect to the logits of a sigmoid output:
/// `(p - t) / k`.
pub fn bce_sigmoid_grad<T: Scalar>(pred: &[T], target: &[T]) -> Vec<T> {
    let k = c::<T>(pred.len() as f64);
    pred.iter().zip(target).map(|(&p, &t)| (p - t) / k).collect()
}

/// Negative log-likelihood of `class` under `softmax(logits)`.
pub fn categorical_ce<T: Scalar>(logits: &[T], class: usize) -> T {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&z| (z - m).exp()).sum::<T>().ln() + m;
    lse - logits[class]
}

/// Mean categorical cross-entropy over a batch of logit rows, with the
/// gradient with respect to the logits.
pub fn categorical_ce_batch<T: Scalar>(logits: &[T], classes: usize, labels: &[usize]) -> (T, Vec<T>) {
    assert_eq!(logits.len(), classes * labels.len(), "logit batch shape");
    let n = c::<T>(labels.len() as f64);
    let mut loss = T::zero();
    let mut grad = logits.to_vec();
    for (row, &label) in grad.chunks_exact_mut(classes).zip(labels) {
        loss += categorical_ce(row, label);
        softmax_in_place(row);
        row[label] -= T::one();
        row.iter_mut().for_each(|v| *v /= n);
    }
    (loss / n, grad)
}

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|x| *x * *x).sum::<T>().sqrt()
}

fn diff<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(x, y)| *x - *y).collect()
}

/// Gradients of a triplet loss with respect to each of the three points.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletGrad<T> {
    pub anchor: Vec<T>,
    pub close: Vec<T>,
    pub far: Vec<T>,
}

/// `max(0, |a - c| - |a - f| + margin)`
pub fn triplet<T: Scalar>(a: &[T], close: &[T], far: &[T], margin: T) -> T {
    (norm(&diff(a, close)) - norm(&diff(a, far)) + margin).max(T::zero())
}

pub fn triplet_grad<T: Scalar>(a: &[T], close: &[T], far: &[T], margin: T) -> (T, TripletGrad<T>) {
    let dc = diff(a, close);
    let df = diff(a, far);
    let (nc, nf) = (norm(&dc), norm(&df));
    let value = nc - nf + margin;
    let zero = vec![T::zero(); a.len()];
    if value <= T::zero() {
        return (
            T::zero(),
            TripletGrad {
                anchor: zero.clone(),
                close: zero.clone(),
                far: zero,
            },
        );
    }
    // unit vectors; a coincident pair has a zero subgradient
    let uc: Vec<T> = if nc > T::zero() { dc.iter().map(|v| *v / nc).collect() } else { zero.clone() };
    let uf: Vec<T> = if nf > T::zero() { df.iter().map(|v| *v / nf).collect() } else { zero };
    let anchor = uc.iter().zip(&uf).map(|(x, y)| *x - *y).collect();
    let close = uc.iter().map(|v| -*v).collect();
    (value, TripletGrad { anchor, close, far: uf })
}

/// Sum over ordered ORU pairs whose power gap exceeds `margin_db` of
/// `max(0, |z - p_strong| - |z - p_weak|)`, with the gradient in `z`.
pub fn bilateration_grad<T: Scalar>(z: &[T], orus: &[[f64; 3]], powers_db: &[f64], margin_db: f64) -> (T, Vec<T>) {
    let dims = z.len();
    let mut value = T::zero();
    let mut grad = vec![T::zero(); dims];
    let unit = |p: &[f64; 3]| {
        let d: Vec<T> = (0..dims).map(|i| z[i] - c::<T>(p[i])).collect();
        let n = norm(&d);
        let u: Vec<T> = if n > T::zero() { d.iter().map(|v| *v / n).collect() } else { vec![T::zero(); dims] };
        (n, u)
    };
    for (b, pb) in orus.iter().enumerate() {
        for (b2, pb2) in orus.iter().enumerate() {
            if b == b2 || !(powers_db[b] - powers_db[b2] > margin_db) {
                continue;
            }
            let (n1, u1) = unit(pb);
            let (n2, u2) = unit(pb2);
            let v = n1 - n2;
            if v > T::zero() {
                value += v;
                for i in 0..dims {
                    grad[i] += u1[i] - u2[i];
                }
            }
        }
    }
    (value, grad)
}

pub fn bilateration<T: Scalar>(z: &[T], orus: &[[f64; 3]], powers_db: &[f64], margin_db: f64) -> T {
    bilateration_grad(z, orus, powers_db, margin_db).0
}

/// Squared violation of the axis-aligned box, summed over the point's dims.
pub fn bbox_grad<T: Scalar>(z: &[T], min: &[f64], max: &[f64]) -> (T, Vec<T>) {
    let mut value = T::zero();
    let grad = z
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let (lo, hi) = (c::<T>(min[i]), c::<T>(max[i]));
            if v < lo {
                value += (lo - v) * (lo - v);
                (v - lo) * c::<T>(2.0)
            } else if v > hi {
                value += (v - hi) * (v - hi);
                (v - hi) * c::<T>(2.0)
            } else {
                T::zero()
            }
        })
        .collect();
    (value, grad)
}

pub fn bbox<T: Scalar>(z: &[T], min: &[f64], max: &[f64]) -> T {
    bbox_grad(z, min, max).0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn bce_hand_values() {
        assert!(close(bce_mean(&[0.5, 0.5, 0.5], &[0.5, 0.5, 0.5]), 2f64.ln(), 1e-15));
        assert!(close(bce_mean(&[0.9, 0.1], &[1.0, 0.0]), -(0.9f64.ln()), 1e-15));
        assert!(close(-(0.9f64).ln(), 0.10536, 1e-5));
        assert!(bce_mean(&[1.0, 0.0], &[1.0, 0.0]) <= 1e-11);
        // clamping keeps the log finite
        assert!(bce_mean(&[0.0f64], &[1.0]).is_finite());
    }

    #[test]
    fn ce_hand_values() {
        assert!(close(categorical_ce(&[0.3; 5], 2), 5f64.ln(), 1e-14));
        let hand = -(3f64.exp() / (1f64.exp() + 2f64.exp() + 3f64.exp())).ln();
        assert!(close(categorical_ce(&[1.0, 2.0, 3.0], 2), hand, 1e-14));
        assert!(close(hand, 0.4076, 1e-4));
        assert!(categorical_ce(&[0.0, 80.0, 0.0], 1) < 1e-30);
        // stable for huge logits
        assert!(categorical_ce(&[1000.0f64, 0.0], 1).is_finite());
    }

    #[test]
    fn ce_batch_gradient_is_softmax_minus_onehot() {
        let (l, g) = categorical_ce_batch(&[1.0, 2.0, 3.0, 0.0, 0.0, 0.0], 3, &[2, 0]);
        assert!(close(l, (0.40760596444 + 3f64.ln()) / 2.0, 1e-9));
        let g2: f64 = g[3..].iter().sum();
        assert!(g2.abs() < 1e-15);
        assert!(close(g[3], (1.0 / 3.0 - 1.0) / 2.0, 1e-15));
    }

    #[test]
    fn triplet_hand_values() {
        let a = [0.0, 0.0];
        assert_eq!(triplet(&a, &[1.0, 0.0], &[3.0, 0.0], 1.0), 0.0);
        assert!(close(triplet(&a, &[1.0, 0.0], &[0.0, 1.0], 1.0), 1.0, 1e-15));
    }

    fn central<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut p = x.to_vec();
                let mut m = x.to_vec();
                p[i] += h;
                m[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn triplet_gradient_matches_finite_differences() {
        let a = [0.3, -0.2];
        let cl = [1.1, 0.4];
        let fa = [0.9, 0.2];
        let (v, g) = triplet_grad(&a, &cl, &fa, 1.0);
        assert!(v > 0.1, "away from the hinge");
        let na = central(|x| triplet(x, &cl, &fa, 1.0), &a, 1e-6);
        let nc = central(|x| triplet(&a, x, &fa, 1.0), &cl, 1e-6);
        let nf = central(|x| triplet(&a, &cl, x, 1.0), &fa, 1e-6);
        for (an, nu) in g.anchor.iter().chain(&g.close).chain(&g.far).zip(na.iter().chain(&nc).chain(&nf)) {
            assert!((an - nu).abs() <= 1e-6, "{an} vs {nu}");
        }
    }

    #[test]
    fn bilateration_hand_values() {
        let orus = [[0.0, 0.0, 0.0], [4.0, 0.0, 0.0]];
        assert_eq!(bilateration(&[1.0, 2.0], &orus, &[-40.0, -40.0], 13.0), 0.0);
        // ORU 0 much stronger, point sits on ORU 1
        assert!(close(bilateration(&[4.0, 0.0], &orus, &[-20.0, -40.0], 13.0), 4.0, 1e-15));
        assert!(close(bilateration(&[2.0, 1.0], &orus, &[-20.0, -40.0], 13.0), 0.0, 1e-15));
        // gap below the margin is inactive
        assert_eq!(bilateration(&[4.0, 0.0], &orus, &[-30.0, -40.0], 13.0), 0.0);
    }

    #[test]
    fn bilateration_gradient_matches_finite_differences() {
        let orus = [[0.0, 0.0, 0.0], [4.0, 0.0, 0.0], [4.0, 4.0, 0.0], [0.0, 4.0, 0.0]];
        let p = [-10.0, -30.0, -35.0, -50.0];
        let z = [2.7, 1.9];
        let (_, g) = bilateration_grad(&z, &orus, &p, 13.0);
        let n = central(|x| bilateration(x, &orus, &p, 13.0), &z, 1e-6);
        for (a, b) in g.iter().zip(&n) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn bbox_values_and_gradient() {
        let (lo, hi) = ([0.0, 0.0], [10.0, 10.0]);
        assert_eq!(bbox(&[3.0, 7.0], &lo, &hi), 0.0);
        assert!(close(bbox(&[11.0, 5.0], &lo, &hi), 1.0, 1e-15));
        let z = [-0.7, 12.3];
        let (_, g) = bbox_grad(&z, &lo, &hi);
        let n = central(|x| bbox(x, &lo, &hi), &z, 1e-6);
        for (a, b) in g.iter().zip(&n) {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }
}
