//! Small robust-statistics toolkit for heavy-tailed Monte-Carlo output.

use crate::error::{Error, Result};

/// Means of `k` contiguous, nearly equal blocks (the first `n mod k` blocks
/// get one extra element).
pub fn block_means(values: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = values.len();
    if k == 0 || n < k {
        return Err(Error::domain(format!("cannot split {n} values into {k} blocks")));
    }
    let (base, extra) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for b in 0..k {
        let len = base + usize::from(b < extra);
        out.push(values[start..start + len].iter().sum::<f64>() / len as f64);
        start += len;
    }
    Ok(out)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median of the `k` block means.
pub fn median_of_means(values: &[f64], k: usize) -> Result<f64> {
    Ok(median(&block_means(values, k)?))
}

/// Standard deviation of the block means over `sqrt(k)`: the spread proxy
/// reported next to a median-of-means estimate.
pub fn block_spread(values: &[f64], k: usize) -> Result<f64> {
    let means = block_means(values, k)?;
    if k < 2 {
        return Ok(0.0);
    }
    let (_, sd) = mean_sd(&means);
    Ok(sd / (k as f64).sqrt())
}

/// Sample mean and (n - 1)-normalized standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean after discarding `floor(fraction n)` values from each end.
pub fn trimmed_mean(values: &[f64], fraction: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&fraction) || values.is_empty() {
        return Err(Error::domain(format!(
            "trimmed mean needs data and a fraction in [0, 0.5), got {fraction}"
        )));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let cut = (fraction * v.len() as f64).floor() as usize;
    let kept = &v[cut..v.len() - cut];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Ordinary least squares `y = intercept + slope x`; returns `(slope, intercept)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::domain("least squares needs two or more paired points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::domain("least squares on a degenerate abscissa"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::domain("log-log fit needs positive data"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    Ok(least_squares(&lx, &ly)?.0)
}
