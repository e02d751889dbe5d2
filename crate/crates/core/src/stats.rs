//! Small descriptive-statistics helpers shared across modules.

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the n−1 denominator.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// Median of a non-empty slice; NaNs are not expected.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// True when a column is numerically constant relative to its magnitude.
pub fn is_constant(xs: &[f64]) -> bool {
    let m = mean(xs);
    let scale = xs.iter().fold(m.abs(), |acc, x| acc.max(x.abs())).max(1e-300);
    let spread = xs.iter().map(|x| (x - m).abs()).fold(0.0, f64::max);
    spread <= 1e-12 * scale
}

/// Centers `xs` and scales it to unit Euclidean norm. `None` for constant input.
pub fn center_unit(xs: &[f64]) -> Option<Vec<f64>> {
    if is_constant(xs) {
        return None;
    }
    let m = mean(xs);
    let mut v: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basics() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(sample_variance(&[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(is_constant(&[0.1 + 0.2, 0.3, 0.30000000000000004]));
        assert!(!is_constant(&[1.0, 1.0 + 1e-6]));
    }
}
