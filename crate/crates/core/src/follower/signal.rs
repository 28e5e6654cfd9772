use crate::error::{Error, Result};

/// Centered moving average. Near the edges each output averages only the
/// samples that exist inside the window.
pub fn smooth(v: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidConfig(format!("smoothing window {window} must be odd")));
    }
    let half = window / 2;
    let n = v.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            v[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub height: f64,
    pub prominence: f64,
}

/// Local maxima of `v`, left to right. A plateau counts once, at its
/// left-most sample, and only if both sides drop. End samples are never
/// peaks.
pub fn local_maxima(v: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let n = v.len();
    let mut i = 1;
    while i + 1 < n {
        if v[i - 1] < v[i] {
            let mut j = i;
            while j + 1 < n && v[j + 1] == v[i] {
                j += 1;
            }
            if j + 1 < n && v[j + 1] < v[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Topographic prominence of the sample at `peak`: walk each way until a
/// strictly higher sample or the boundary, take the minimum on each side,
/// and subtract the higher of the two minima from the peak height.
pub fn prominence(v: &[f64], peak: usize) -> f64 {
    let h = v[peak];
    let mut left_min = h;
    for &x in v[..peak].iter().rev() {
        if x > h {
            break;
        }
        left_min = left_min.min(x);
    }
    let mut right_min = h;
    for &x in &v[peak + 1..] {
        if x > h {
            break;
        }
        right_min = right_min.min(x);
    }
    h - left_min.max(right_min)
}

/// Local maxima whose prominence reaches `prominence_min`, in index order.
pub fn find_peaks(v: &[f64], prominence_min: f64) -> Vec<Peak> {
    local_maxima(v)
        .into_iter()
        .map(|index| Peak {
            index,
            height: v[index],
            prominence: prominence(v, index),
        })
        .filter(|p| p.prominence >= prominence_min)
        .collect()
}

/// Least-squares line `y = intercept + slope * x`.
pub fn ols_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::Empty("regression needs at least two points"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Ok((my, 0.0));
    }
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}
