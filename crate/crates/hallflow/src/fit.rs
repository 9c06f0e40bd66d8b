use serde::Serialize;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Root-mean-square residual.
    pub rms: f64,
}

/// Ordinary least squares y = intercept + slope x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Some(LinearFit { slope, intercept, r2, rms: (sse / nf).sqrt() })
}

/// Slope of log|y| against log x over points with x > 0 and y != 0.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b != 0.0)
        .map(|(a, b)| (a.ln(), b.abs().ln()))
        .unzip();
    linear_fit(&lx, &ly)
}

/// Fit |c(d)| ~ A exp(-rate d); returns (rate, r2 of the log-linear fit).
pub fn exponential_fit(d: &[f64], c: &[f64]) -> Option<(f64, f64)> {
    let (x, y): (Vec<f64>, Vec<f64>) = d
        .iter()
        .zip(c)
        .filter(|(_, v)| v.abs() > 1e-300)
        .map(|(a, v)| (*a, v.abs().ln()))
        .unzip();
    linear_fit(&x, &y).map(|f| (-f.slope, f.r2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let f = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!((f.r2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn power_law() {
        let x = [0.01, 0.02, 0.05, 0.1];
        let y: Vec<f64> = x.iter().map(|a: &f64| 3.0 * a.powi(3)).collect();
        assert!((loglog_fit(&x, &y).unwrap().slope - 3.0).abs() < 1e-12);
        let e: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|d: &f64| (-0.7 * d).exp()).collect();
        let (rate, r2) = exponential_fit(&[1.0, 2.0, 3.0], &e).unwrap();
        assert!((rate - 0.7).abs() < 1e-12 && r2 > 0.999_999);
    }
}
