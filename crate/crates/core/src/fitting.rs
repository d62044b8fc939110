//! Small least-squares helpers for decay exponents, fitted inequality
//! constants and the measure-scaling slope.

/// Ordinary least squares for `y ≈ slope·x + intercept`.
///
/// Panics if fewer than two points are supplied.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points to fit a line");
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    assert!(denom.abs() > 0.0, "degenerate abscissae");
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

/// Log-log slope of `(x, y)` pairs with positive entries.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    linear_fit(&lx, &ly).0
}

/// The smallest constant `C` with `value ≤ C · bound` across all samples;
/// samples with `bound = 0` and `value = 0` are skipped.
pub fn fitted_constant(samples: &[(f64, f64)]) -> f64 {
    let mut c: f64 = 0.0;
    for &(value, bound) in samples {
        if bound > 0.0 {
            c = c.max(value / bound);
        } else {
            assert!(value == 0.0, "nonzero value against zero bound");
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_recovered() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let (slope, intercept) = linear_fit(&xs, &ys);
        assert!((slope - 2.0).abs() < 1e-12);
        assert!((intercept - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loglog_power_law() {
        let xs = [1e-3, 3e-3, 1e-2];
        let ys: Vec<f64> = xs.iter().map(|&x: &f64| 5.0 * x.powf(0.93)).collect();
        assert!((loglog_slope(&xs, &ys) - 0.93).abs() < 1e-10);
    }

    #[test]
    fn fitted_constant_is_max_ratio() {
        let c = fitted_constant(&[(2.0, 1.0), (3.0, 6.0), (0.0, 0.0)]);
        assert_eq!(c, 2.0);
    }
}
