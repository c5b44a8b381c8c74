use super::{cast, Scalar};
use crate::error::{Error, Result};

fn check_temperature<T: Scalar>(temperature: T) -> Result<()> {
    if !(temperature > T::zero()) || !temperature.is_finite() {
        return Err(Error::Argument(format!(
            "softmax temperature must be positive, got {temperature}"
        )));
    }
    Ok(())
}

/// `log(sum_i exp(x_i))`, stabilized by subtracting the maximum.
pub fn logsumexp<T: Scalar>(x: &[T]) -> T {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    max + x.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

/// Log-probabilities of `softmax(logits / temperature)`, computed as
/// `x / t - logsumexp(x / t)`.
pub fn log_softmax_with_temperature<T: Scalar>(logits: &[T], temperature: T) -> Result<Vec<T>> {
    check_temperature(temperature)?;
    let scaled: Vec<T> = logits.iter().map(|&q| q / temperature).collect();
    let lse = logsumexp(&scaled);
    Ok(scaled.into_iter().map(|s| s - lse).collect())
}

/// Returns `(probabilities, log_probabilities)`. The log-probabilities come
/// from [`log_softmax_with_temperature`], never from `ln(p)`.
pub fn softmax_with_temperature<T: Scalar>(logits: &[T], temperature: T) -> Result<(Vec<T>, Vec<T>)> {
    let log_probs = log_softmax_with_temperature(logits, temperature)?;
    let mut probs: Vec<T> = log_probs.iter().map(|&l| l.exp()).collect();
    let total: T = probs.iter().copied().sum();
    if (total - T::one()).abs() > cast(1e-15) {
        probs.iter_mut().for_each(|p| *p /= total);
    }
    Ok((probs, log_probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let (p, lp) = softmax_with_temperature(&[1.0f64, 0.0], 1.0).unwrap();
        assert!((p[0] - 0.7311).abs() < 5e-5);
        assert!((p[1] - 0.2689).abs() < 5e-5);
        assert!((lp[1] - (-(1.0 + 1f64.exp()).ln())).abs() < 1e-14);
        let (p, _) = softmax_with_temperature(&[2.5f64; 4], 0.1).unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(softmax_with_temperature(&[1.0f64], 0.0).is_err());
        assert!(softmax_with_temperature(&[1.0f64], -1.0).is_err());
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let (p, lp) = softmax_with_temperature(&[1e4f64, -1e4, 0.0], 0.01).unwrap();
        assert_eq!(p[0], 1.0);
        assert!(lp.iter().all(|v| v.is_finite()));
    }

    proptest! {
        #[test]
        fn normalized_and_homogeneous(
            logits in prop::collection::vec(-50.0f64..50.0, 1..20),
            t in 0.01f64..10.0,
            c in 0.1f64..10.0,
        ) {
            let (p, _) = softmax_with_temperature(&logits, t).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let scaled: Vec<f64> = logits.iter().map(|&q| q * c).collect();
            let (p2, _) = softmax_with_temperature(&scaled, t * c).unwrap();
            for (a, b) in p.iter().zip(&p2) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
