//! Statistics toolkit: weighted two-sample tests, least squares, bootstrap,
//! and the Mann-Kendall trend test.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Kish effective sample size `(sum w)^2 / sum w^2`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Weighted mean and (reliability-weighted, unbiased) variance.
pub fn weighted_mean_var(x: &[f64], w: &[f64]) -> (f64, f64) {
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|v| v * v).sum();
    let mean = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ss = x.iter().zip(w).map(|(a, b)| b * (a - mean).powi(2)).sum::<f64>();
    let denom = sw - sw2 / sw;
    let var = if denom > 0.0 { ss / denom } else { 0.0 };
    (mean, var)
}

/// Complementary Kolmogorov distribution `Q(lambda) = 2 sum (-1)^{j-1} e^{-2 j^2 lambda^2}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub ess_x: f64,
    pub ess_y: f64,
}

fn weighted_cdf_steps(x: &[f64], w: &[f64]) -> Vec<(f64, f64)> {
    let total: f64 = w.iter().sum();
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(w.iter().map(|v| v / total)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Two-sample Kolmogorov-Smirnov test between weighted samples. The
/// p-value uses the asymptotic law with `n_e = ess_x ess_y / (ess_x + ess_y)`
/// and the small-sample correction `(sqrt(n_e) + 0.12 + 0.11/sqrt(n_e)) D`.
pub fn weighted_ks_test(x: &[f64], wx: &[f64], y: &[f64], wy: &[f64]) -> Result<KsResult> {
    if x.is_empty() || y.is_empty() || x.len() != wx.len() || y.len() != wy.len() {
        return Err(Error::InvalidParameter("KS samples must be nonempty with one weight per value".into()));
    }
    let a = weighted_cdf_steps(x, wx);
    let b = weighted_cdf_steps(y, wy);
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb, mut d): (f64, f64, f64) = (0.0, 0.0, 0.0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(p), Some(q)) => p.0.min(q.0),
            (Some(p), None) => p.0,
            (None, Some(q)) => q.0,
            (None, None) => break,
        };
        while i < a.len() && a[i].0.total_cmp(&next).is_le() {
            fa += a[i].1;
            i += 1;
        }
        while j < b.len() && b[j].0.total_cmp(&next).is_le() {
            fb += b[j].1;
            j += 1;
        }
        d = d.max((fa - fb).abs());
    }
    let (ess_x, ess_y) = (effective_sample_size(wx), effective_sample_size(wy));
    let ne = ess_x * ess_y / (ess_x + ess_y);
    let p_value = if d == 0.0 {
        1.0
    } else {
        kolmogorov_q((ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d)
    };
    Ok(KsResult {
        statistic: d,
        p_value,
        ess_x,
        ess_y,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub mean_x: f64,
    pub mean_y: f64,
    pub difference: f64,
    /// Combined standard error `sqrt(var_x / ess_x + var_y / ess_y)`.
    pub std_error: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Weighted Welch test for a difference of means, with effective sample sizes.
pub fn welch_test(x: &[f64], wx: &[f64], y: &[f64], wy: &[f64]) -> Result<WelchResult> {
    if x.len() < 2 || y.len() < 2 || x.len() != wx.len() || y.len() != wy.len() {
        return Err(Error::InvalidParameter("Welch test needs two weighted samples of size >= 2".into()));
    }
    let (mx, vx) = weighted_mean_var(x, wx);
    let (my, vy) = weighted_mean_var(y, wy);
    let (nx, ny) = (effective_sample_size(wx), effective_sample_size(wy));
    let (ax, ay) = (vx / nx, vy / ny);
    let se = (ax + ay).sqrt();
    let difference = my - mx;
    if se == 0.0 || !se.is_finite() {
        let p = if difference == 0.0 { 1.0 } else { 0.0 };
        return Ok(WelchResult {
            mean_x: mx,
            mean_y: my,
            difference,
            std_error: se,
            t: if difference == 0.0 { 0.0 } else { f64::INFINITY },
            df: f64::NAN,
            p_value: p,
        });
    }
    let t = difference / se;
    let df = (ax + ay).powi(2) / (ax * ax / (nx - 1.0) + ay * ay / (ny - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df.max(1.0)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let p_value = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok(WelchResult {
        mean_x: mx,
        mean_y: my,
        difference,
        std_error: se,
        t,
        df,
        p_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidParameter("linear fit needs at least two paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("linear fit with constant abscissa".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(LinearFit { slope, intercept, r2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub r2: f64,
}

/// Least squares `y ~ X beta` by SVD; `rows` are the rows of `X`.
pub fn multilinear_fit(rows: &[Vec<f64>], y: &[f64]) -> Result<MultiFit> {
    let p = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.len() != y.len() || rows.len() < p || p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidParameter("design matrix shape does not match the response".into()));
    }
    let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let yv = DVector::from_column_slice(y);
    let svd = x.clone().svd(true, true);
    let beta = svd
        .solve(&yv, 1e-12)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let fitted = &x * &beta;
    let residuals: Vec<f64> = (0..y.len()).map(|i| y[i] - fitted[i]).collect();
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let r2 = if sst == 0.0 { 1.0 } else { 1.0 - sse / sst };
    Ok(MultiFit {
        coefficients: beta.iter().copied().collect(),
        residuals,
        r2,
    })
}

/// Bootstrap standard error of `stat` with `reps` resamples.
pub fn bootstrap_se(data: &[f64], stat: impl Fn(&[f64]) -> f64, reps: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![0.0; data.len()];
    let values: Vec<f64> = (0..reps)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = data[rng.random_range(0..data.len())];
            }
            stat(&buf)
        })
        .collect();
    let m = values.iter().sum::<f64>() / reps as f64;
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannKendall {
    pub s: f64,
    pub z: f64,
    /// One-sided p-value for a decreasing trend.
    pub p_decreasing: f64,
    pub p_two_sided: f64,
}

/// Mann-Kendall trend test (normal approximation with continuity correction).
pub fn mann_kendall(x: &[f64]) -> MannKendall {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += (x[j] - x[i]).signum() * ((x[j] != x[i]) as i32 as f64);
        }
    }
    let nf = n as f64;
    let var = nf * (nf - 1.0) * (2.0 * nf + 5.0) / 18.0;
    let z = if var == 0.0 || s == 0.0 {
        0.0
    } else if s > 0.0 {
        (s - 1.0) / var.sqrt()
    } else {
        (s + 1.0) / var.sqrt()
    };
    let normal = Normal::standard();
    MannKendall {
        s,
        z,
        p_decreasing: normal.cdf(z),
        p_two_sided: (2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0),
    }
}

/// Linear-interpolated empirical quantile (`q` in `[0, 1]`) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, 0.5)
}
