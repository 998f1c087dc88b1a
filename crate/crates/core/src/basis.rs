//! Real trigonometric basis on the unit circle.
//!
//! Index `n = 1, 2, 3, 4, ...` maps to `cos t, sin t, cos 2t, sin 2t, ...`.
//! Coefficient vectors throughout the crate follow this ordering.

/// Frequency of basis function `n` (1-based).
pub fn frequency(n: usize) -> usize {
    n.div_ceil(2)
}

pub fn trig(n: usize, theta: f64) -> f64 {
    assert!(n >= 1, "basis index is 1-based");
    let k = frequency(n) as f64;
    if n % 2 == 1 {
        (k * theta).cos()
    } else {
        (k * theta).sin()
    }
}

/// `samples[i][n-1] = trig(n, theta_i)` for `n = 1..=count`.
pub fn sample(count: usize, thetas: &[f64]) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(thetas.len(), count, |i, c| trig(c + 1, thetas[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering() {
        let t = 0.3;
        assert_eq!(trig(1, t), t.cos());
        assert_eq!(trig(2, t), t.sin());
        assert_eq!(trig(3, t), (2.0 * t).cos());
        assert_eq!(trig(4, t), (2.0 * t).sin());
        assert_eq!(frequency(5), 3);
    }
}
