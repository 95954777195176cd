//! Population moments shared by the turn-taking statistics and frame pooling.

/// Relative spread below which a sample counts as constant. Timestamps that
/// went through float arithmetic leave durations a few ulps apart.
const SPREAD_TOLERANCE: f64 = 1e-9;

/// Central moments of a sample, computed with the population (divide by `n`)
/// convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    /// True when every value is identical up to rounding (or `n < 2`): the
    /// higher-order shape statistics are then defined as 0.
    pub degenerate: bool,
}

impl Moments {
    /// Two-pass computation. An empty input yields all zeros.
    pub fn from_slice(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { n, mean: 0.0, m2: 0.0, m3: 0.0, m4: 0.0, degenerate: true };
        }
        let nf = n as f64;
        let mean = values.iter().sum::<f64>() / nf;
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if hi - lo <= SPREAD_TOLERANCE * lo.abs().max(hi.abs()) {
            let mean = if lo == hi { lo } else { mean };
            return Self { n, mean, m2: 0.0, m3: 0.0, m4: 0.0, degenerate: true };
        }
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &v in values {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        m2 /= nf;
        m3 /= nf;
        m4 /= nf;
        Self { n, mean, m2, m3, m4, degenerate: m2 == 0.0 }
    }

    pub fn std_dev(&self) -> f64 {
        if self.degenerate {
            0.0
        } else {
            self.m2.sqrt()
        }
    }

    /// Skewness g1 = m3 / m2^(3/2).
    pub fn skewness(&self) -> f64 {
        if self.degenerate {
            0.0
        } else {
            self.m3 / self.m2.powf(1.5)
        }
    }

    /// Excess kurtosis g2 = m4 / m2^2 - 3.
    pub fn excess_kurtosis(&self) -> f64 {
        if self.degenerate {
            0.0
        } else {
            self.m4 / (self.m2 * self.m2) - 3.0
        }
    }
}
