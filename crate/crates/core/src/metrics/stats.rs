use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub mean_diff: f64,
    pub t: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub n: usize,
}

/// Paired two-sided Student's t-test on `a[i] - b[i]`.
///
/// With zero variance the statistic is infinite (p = 0) unless every
/// difference is zero (p = 1). Fewer than two pairs yield p = 1.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> TTest {
    let n = a.len().min(b.len());
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = if n == 0 { 0.0 } else { diffs.iter().sum::<f64>() / n as f64 };
    if n < 2 {
        return TTest { mean_diff: mean, t: 0.0, p_value: 1.0, n };
    }
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        let (t, p) = if mean == 0.0 { (0.0, 1.0) } else { (f64::INFINITY.copysign(mean), 0.0) };
        return TTest { mean_diff: mean, t, p_value: p, n };
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    TTest { mean_diff: mean, t, p_value: p.clamp(0.0, 1.0), n }
}
