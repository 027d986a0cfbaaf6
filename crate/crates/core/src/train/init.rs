use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Glorot/Xavier uniform bound `√(6 / (fan_in + fan_out))`.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Xavier-uniform matrix of shape `[fan_out, fan_in]`.
pub fn xavier_init<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<Tensor> {
    let &[rows, cols] = shape else {
        return Err(Error::InvalidArgument(format!(
            "xavier_init needs a 2-D shape, got {shape:?}"
        )));
    };
    if rows + cols == 0 {
        return Tensor::matrix(rows, cols, Vec::new());
    }
    let bound = xavier_bound(cols, rows);
    let dist = Uniform::new_inclusive(-bound, bound);
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor::matrix(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bound_and_range() {
        let b = xavier_bound(256, 256);
        assert!((b - 0.108_253_175_473_054_83).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = xavier_init(&[256, 256], &mut rng).unwrap();
        assert!(w.data().iter().all(|v| v.abs() <= b));
    }

    #[test]
    fn sample_mean_is_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = xavier_init(&[100, 1000], &mut rng).unwrap();
        let mean = w.sum() / w.len() as f64;
        assert!(mean.abs() < 0.01, "{mean}");
    }

    #[test]
    fn seeded_draws_repeat() {
        let a = xavier_init(&[5, 7], &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = xavier_init(&[5, 7], &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(xavier_init(&[5], &mut ChaCha8Rng::seed_from_u64(9)).is_err());
    }
}
