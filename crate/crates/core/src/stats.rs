//! Summary statistics for repeated-run tables.
//!
//! Channel-level distances span orders of magnitude and are summarized
//! geometrically; state-level distances are summarized arithmetically.

/// Arithmetic mean. Empty input returns NaN.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 normalization); 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Geometric mean; requires strictly positive inputs (NaN otherwise).
pub fn geometric_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() || xs.iter().any(|&x| x <= 0.0) {
        return f64::NAN;
    }
    (xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64).exp()
}

/// Geometric standard deviation: exp of the sample std of the logs.
/// Dimensionless multiplicative spread; 1.0 means no spread.
pub fn geometric_std(xs: &[f64]) -> f64 {
    if xs.is_empty() || xs.iter().any(|&x| x <= 0.0) {
        return f64::NAN;
    }
    let logs: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    std_dev(&logs).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_std() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((mean(&xs) - 2.5).abs() < 1e-15);
        let expect = (5.0f64 / 3.0).sqrt();
        assert!((std_dev(&xs) - expect).abs() < 1e-15);
    }

    #[test]
    fn geometric_summaries() {
        let xs = [1e-2, 1e-4];
        assert!((geometric_mean(&xs) - 1e-3).abs() < 1e-15);
        // logs are (-2 ln10, -4 ln10): std = sqrt(2) ln10
        let expect = (std::f64::consts::SQRT_2 * 10f64.ln()).exp();
        assert!((geometric_std(&xs) - expect).abs() * 1e-3 < 1e-12);
    }

    #[test]
    fn geometric_rejects_nonpositive() {
        assert!(geometric_mean(&[1.0, 0.0]).is_nan());
        assert!(geometric_mean(&[]).is_nan());
    }

    #[test]
    fn single_sample_edge_cases() {
        assert_eq!(std_dev(&[5.0]), 0.0);
        assert!((geometric_std(&[5.0]) - 1.0).abs() < 1e-15);
        assert!((geometric_mean(&[5.0]) - 5.0).abs() < 1e-12);
    }
}
