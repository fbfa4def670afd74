//! Power-law fitting for error-scaling curves.
//!
//! Distance-vs-depth and distance-vs-size data follow `D ∝ x^a`; fitting
//! happens by ordinary least squares on (log₁₀ x, log₁₀ D). Intercepts are
//! therefore base-10, so the gap between two parallel series' intercepts
//! `Δb` translates into a suppression factor `10^Δb`.

use serde::Serialize;

/// An `y = 10^intercept · x^exponent` fit with its goodness and inputs.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    /// Slope of the log-log regression.
    pub exponent: f64,
    /// Base-10 log of the prefactor.
    pub intercept: f64,
    /// Coefficient of determination in log space.
    pub r_squared: f64,
    /// The (x, y) pairs that produced the fit.
    pub points: Vec<(f64, f64)>,
}

/// Least-squares fit of `y = c·x^a` through the given points.
///
/// Needs at least three strictly positive points; fewer would make r²
/// vacuous, and nonpositive values have no logarithm.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<FitResult, String> {
    if points.len() < 3 {
        return Err(format!(
            "power-law fit needs at least 3 points, got {}",
            points.len()
        ));
    }
    if let Some((x, y)) = points.iter().find(|(x, y)| *x <= 0.0 || *y <= 0.0) {
        return Err(format!(
            "power-law fit needs positive data, got ({x}, {y})"
        ));
    }
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = logs.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err("power-law fit needs at least two distinct x values".into());
    }
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let ss_tot: f64 = logs.iter().map(|(_, y)| (y - my) * (y - my)).sum();
    let ss_res: f64 = logs
        .iter()
        .map(|(x, y)| {
            let r = y - (intercept + exponent * x);
            r * r
        })
        .sum();
    let r_squared = if ss_tot == 0.0 {
        // all y equal: a flat line explains everything
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(FitResult {
        exponent,
        intercept,
        r_squared,
        points: points.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_cubic() {
        let points: Vec<(f64, f64)> =
            [1.0, 2.0, 4.0, 8.0].iter().map(|&x| (x, 2.0 * x * x * x)).collect();
        let fit = fit_power_law(&points).unwrap();
        assert!((fit.exponent - 3.0).abs() < 1e-10, "exponent {}", fit.exponent);
        assert!((fit.intercept - 2f64.log10()).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.points, points);
    }

    #[test]
    fn intercept_gap_measures_constant_suppression() {
        let xs = [4.0, 8.0, 12.0, 16.0];
        let upper: Vec<_> = xs.iter().map(|&x| (x, 5.0 * x.powf(2.8))).collect();
        let lower: Vec<_> = xs.iter().map(|&x| (x, 5.0 / 2.9 * x.powf(2.8))).collect();
        let fu = fit_power_law(&upper).unwrap();
        let fl = fit_power_law(&lower).unwrap();
        assert!((fu.exponent - fl.exponent).abs() < 1e-12);
        let gap = fu.intercept - fl.intercept;
        assert!((10f64.powf(gap) - 2.9).abs() < 1e-10);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 4.0)]).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 4.0), (3.0, -1.0)]).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (1.0, 2.0), (1.0, 4.0)]).is_err());
    }

    #[test]
    fn noisy_data_gives_partial_r_squared() {
        let points = [(1.0, 1.0), (2.0, 9.0), (4.0, 15.0), (8.0, 70.0)];
        let fit = fit_power_law(&points).unwrap();
        assert!(fit.r_squared > 0.9 && fit.r_squared < 1.0);
    }
}
