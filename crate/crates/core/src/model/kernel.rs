//! Pairwise similarity kernels on unit-norm query/key rows.

use super::config::KernelMode;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `1 + <q, k>`. For unit inputs this lies in `[0, 2]`.
#[inline]
pub fn approximate_kernel(q: &[f64], k: &[f64]) -> f64 {
    1.0 + dot(q, k)
}

/// `exp(<q, k>)`.
#[inline]
pub fn exponential_kernel(q: &[f64], k: &[f64]) -> f64 {
    dot(q, k).exp()
}

#[inline]
pub fn kernel(mode: KernelMode, q: &[f64], k: &[f64]) -> f64 {
    match mode {
        KernelMode::Approximate => approximate_kernel(q, k),
        KernelMode::FullExponential => exponential_kernel(q, k),
    }
}

/// Supremum of `|exp(s) - 1 - s|` over `s ∈ [-1, 1]`, attained at `s = 1`.
pub const KERNEL_ERROR_SUP: f64 = std::f64::consts::E - 2.0;

/// Worst-case approximation bound `e / 2`.
pub const KERNEL_ERROR_BOUND: f64 = std::f64::consts::E / 2.0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn approximate_kernel_extremes() {
        let q = [0.6, 0.8];
        assert!((approximate_kernel(&q, &q) - 2.0).abs() < 1e-15);
        assert!(approximate_kernel(&q, &[-0.6, -0.8]).abs() < 1e-15);
        assert!((approximate_kernel(&q, &[-0.8, 0.6]) - 1.0).abs() < 1e-15);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn exponential_kernel_values() {
        assert_eq!(exponential_kernel(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        let e = exponential_kernel(&[1.0, 0.0], &[1.0, 0.0]);
        assert!((e - 2.718281828).abs() < 1e-9);
    }

    #[test]
    fn bound_constants() {
        assert!((KERNEL_ERROR_SUP - 0.718282).abs() < 1e-6);
        assert!((KERNEL_ERROR_BOUND - 1.359141).abs() < 1e-6);
    }
}
