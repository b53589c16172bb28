//! Tiny dense-vector helpers shared by the numeric modules.

use crate::Scalar;

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

pub fn l2_norm<F: Scalar>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

/// Cosine similarity; zero whenever either vector is all-zero.
pub fn cosine<F: Scalar>(a: &[F], b: &[F]) -> F {
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == F::zero() || nb == F::zero() {
        F::zero()
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Scales a vector to unit L2 norm in place; all-zero vectors are left.
pub fn l2_normalize<F: Scalar>(a: &mut [F]) {
    let norm = l2_norm(a);
    if norm > F::zero() {
        for x in a {
            *x = *x / norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine::<f64>(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((cosine::<f64>(&[1.0, 1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-12);
        assert_eq!(cosine::<f64>(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
    }

    #[test]
    fn normalize_makes_unit_vectors() {
        let mut v = vec![3.0, 4.0];
        l2_normalize(&mut v);
        assert!((l2_norm(&v) - 1.0f64).abs() < 1e-12);
        assert!((v[0] - 0.6).abs() < 1e-12);
    }
}
