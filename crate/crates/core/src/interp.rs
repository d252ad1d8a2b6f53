//! Shape-preserving interpolation and isotonic projection helpers.

/// Monotone piecewise-cubic slopes (Fritsch–Carlson).  Interior slopes are
/// the weighted harmonic mean of adjacent secants, zeroed where the secants
/// change sign, so the interpolant never overshoots monotone data.
pub fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    assert!(n >= 2 && y.len() == n);
    let mut d = vec![0.0; n];
    if n == 2 {
        let s = (y[1] - y[0]) / (x[1] - x[0]);
        d[0] = s;
        d[1] = s;
        return d;
    }
    let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
    let sec: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    for i in 1..n - 1 {
        if sec[i - 1] * sec[i] <= 0.0 {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / sec[i - 1] + w2 / sec[i]);
        }
    }
    d[0] = end_slope(h[0], h[1], sec[0], sec[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], sec[n - 2], sec[n - 3]);
    d
}

fn end_slope(h0: f64, h1: f64, s0: f64, s1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if d * s0 <= 0.0 {
        0.0
    } else if s0 * s1 <= 0.0 && d.abs() > 3.0 * s0.abs() {
        3.0 * s0
    } else {
        d
    }
}

/// Evaluates the Hermite interpolant defined by `(x, y, d)` at `xq`,
/// clamping outside the data range.
pub fn pchip_eval(x: &[f64], y: &[f64], d: &[f64], xq: f64) -> f64 {
    let n = x.len();
    if xq <= x[0] {
        return y[0];
    }
    if xq >= x[n - 1] {
        return y[n - 1];
    }
    let mut lo = 0usize;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if x[mid] <= xq {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let h = x[lo + 1] - x[lo];
    let t = (xq - x[lo]) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y[lo] + h10 * h * d[lo] + h01 * y[lo + 1] + h11 * h * d[lo + 1]
}

/// L² isotonic projection (pool adjacent violators, uniform weights).
/// Returns the closest nondecreasing sequence.
pub fn isotonic_projection(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut means: Vec<f64> = Vec::with_capacity(n);
    let mut counts: Vec<usize> = Vec::with_capacity(n);
    for &v in y {
        means.push(v);
        counts.push(1);
        while means.len() > 1 && means[means.len() - 2] > means[means.len() - 1] {
            let (m2, c2) = (means.pop().unwrap(), counts.pop().unwrap());
            let k = means.len() - 1;
            let c1 = counts[k];
            means[k] = (means[k] * c1 as f64 + m2 * c2 as f64) / (c1 + c2) as f64;
            counts[k] = c1 + c2;
        }
    }
    let mut out = Vec::with_capacity(n);
    for (m, c) in means.iter().zip(counts.iter()) {
        out.extend(std::iter::repeat(*m).take(*c));
    }
    out
}
