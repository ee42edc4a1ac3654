//! Shapiro-Wilk W test (Royston's 1995 algorithm: Blom scores with the
//! two-coefficient polynomial correction, then a normalizing transform of W
//! to a standard-normal deviate).

use super::normal::{normal_cdf, normal_quantile};
use super::StatsError;

fn poly(coefs: &[f64], x: f64) -> f64 {
    coefs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Returns (W, p). Requires 8 <= n <= 5000; p is the probability of a W this
/// small under normality.
pub fn shapiro_wilk(samples: &[f64]) -> Result<(f64, f64), StatsError> {
    let n = samples.len();
    if n < 8 {
        return Err(StatsError::TooFewSamples { needed: 8, got: n });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut x = samples.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    if x[n - 1] - x[0] <= 0.0 {
        return Err(StatsError::Degenerate);
    }

    let nf = n as f64;
    let m: Vec<f64> = (1..=n)
        .map(|i| normal_quantile((i as f64 - 0.375) / (nf + 0.25)))
        .collect();
    let summ2: f64 = m.iter().map(|v| v * v).sum();
    let rsn = 1.0 / nf.sqrt();

    const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
    const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];

    let a_n = m[n - 1] / summ2.sqrt() + poly(&C1, rsn);
    let a_n1 = m[n - 2] / summ2.sqrt() + poly(&C2, rsn);
    let phi =
        (summ2 - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2])
            / (1.0 - 2.0 * a_n * a_n - 2.0 * a_n1 * a_n1);

    let mut a = vec![0.0; n];
    a[n - 1] = a_n;
    a[0] = -a_n;
    a[n - 2] = a_n1;
    a[1] = -a_n1;
    let sphi = phi.sqrt();
    for i in 2..n - 2 {
        a[i] = m[i] / sphi;
    }

    let mean = x.iter().sum::<f64>() / nf;
    let num: f64 = a.iter().zip(&x).map(|(ai, xi)| ai * xi).sum();
    let den: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    let w = (num * num / den).min(1.0);

    // normalizing transform to z, then upper-tail p
    let z = if n <= 11 {
        let gamma = -2.273 + 0.459 * nf;
        let y = -(gamma - (1.0 - w).ln()).ln();
        const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
        const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -2.0322e-3];
        (y - poly(&C3, nf)) / poly(&C4, nf).exp()
    } else {
        let ln_n = nf.ln();
        let y = (1.0 - w).ln();
        const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 3.8915e-3];
        const C6: [f64; 3] = [-0.4803, -0.082676, 3.0302e-3];
        (y - poly(&C5, ln_n)) / poly(&C6, ln_n).exp()
    };
    let p = (1.0 - normal_cdf(z)).clamp(0.0, 1.0);
    Ok((w, p))
}
