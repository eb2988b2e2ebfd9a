//! Scalar-generic vector and statistics helpers shared by the scoring stages.

use std::iter::Sum;

use num_traits::{Float, NumAssign};

/// Scalar bound for the engine's math. Any IEEE float satisfies it; the
/// pipeline instantiates [`crate::Score`] (`f64`).
pub trait Real: Float + NumAssign + Sum + Send + Sync + 'static {}

impl<T: Float + NumAssign + Sum + Send + Sync + 'static> Real for T {}

/// Converts an `f64` constant into the working scalar.
pub fn real<F: Real>(x: f64) -> F {
    F::from(x).expect("constant representable in scalar type")
}

pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

pub fn l2_norm<F: Real>(v: &[F]) -> F {
    dot(v, v).sqrt()
}

/// Returns the unit-norm copy of `v`, or `None` for zero / non-finite input.
pub fn l2_normalize<F: Real>(v: &[F]) -> Option<Vec<F>> {
    if v.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let norm = l2_norm(v);
    if norm <= F::zero() {
        return None;
    }
    Some(v.iter().map(|x| *x / norm).collect())
}

pub fn euclidean<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (*x - *y) * (*x - *y))
        .sum::<F>()
        .sqrt()
}

/// Numerically stable softmax of `values / tau`.
pub fn softmax_scaled<F: Real>(values: &[F], tau: F) -> Vec<F> {
    assert!(tau > F::zero(), "softmax temperature must be positive");
    let max = values
        .iter()
        .copied()
        .fold(F::neg_infinity(), |acc, x| acc.max(x));
    let exps: Vec<F> = values.iter().map(|x| ((*x - max) / tau).exp()).collect();
    let total: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Shannon entropy of `softmax(values / tau)`, normalized to `[0, 1]` by
/// `ln(n)`. A single-element distribution has zero entropy by definition.
pub fn normalized_entropy<F: Real>(values: &[F], tau: F) -> F {
    let n = values.len();
    if n <= 1 {
        return F::zero();
    }
    let probs = softmax_scaled(values, tau);
    let raw: F = probs
        .iter()
        .map(|p| {
            if *p > F::zero() {
                -*p * p.ln()
            } else {
                F::zero()
            }
        })
        .sum();
    let h = raw / real::<F>(n as f64).ln();
    // Guard against round-off pushing slightly past the theoretical bounds.
    h.max(F::zero()).min(F::one())
}

/// Mean of the `k` largest entries. `k` is clamped to the input length.
pub fn top_k_mean<F: Real>(values: &[F], k: usize) -> F {
    assert!(!values.is_empty(), "top_k_mean over empty input");
    let k = k.clamp(1, values.len());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("non-NaN similarities"));
    sorted[..k].iter().copied().sum::<F>() / real::<F>(k as f64)
}

pub fn clip01<F: Real>(x: F) -> F {
    x.max(F::zero()).min(F::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_three_four_five() {
        let v = l2_normalize(&[3.0_f64, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-12);
        assert!((v[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn normalize_rejects_zero_and_nan() {
        assert!(l2_normalize(&[0.0_f64, 0.0]).is_none());
        assert!(l2_normalize(&[f64::NAN, 1.0]).is_none());
    }

    #[test]
    fn entropy_uniform_is_one() {
        let h = normalized_entropy(&[0.25_f64; 8], 0.1);
        assert!((h - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_single_element_is_zero() {
        assert_eq!(normalized_entropy(&[0.9_f64], 0.1), 0.0);
    }

    #[test]
    fn entropy_spike_is_tiny() {
        let mut alphas = [0.0_f64; 8];
        alphas[0] = 10.0;
        assert!(normalized_entropy(&alphas, 0.1) < 0.01);
    }

    #[test]
    fn top_k_mean_takes_largest() {
        let alphas = [0.5_f64, 0.4, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!((top_k_mean(&alphas, 2) - 0.45).abs() < 1e-12);
    }

    #[test]
    fn top_k_mean_clamps_k() {
        assert!((top_k_mean(&[1.0_f64, 3.0], 10) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn generic_over_f32() {
        let h = normalized_entropy(&[0.25_f32; 4], 0.1);
        assert!((h - 1.0).abs() < 1e-5);
    }
}
