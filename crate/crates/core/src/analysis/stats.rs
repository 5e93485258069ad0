//! Streaming moments, correlation accumulators and a one-sample
//! Kolmogorov-Smirnov test against the standard normal.

use statrs::distribution::{ContinuousCDF, Normal};

/// Running power sums for pooled mean, variance, skewness and kurtosis.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: u64,
    s1: f64,
    s2: f64,
    s3: f64,
    s4: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        let x2 = x * x;
        self.n += 1;
        self.s1 += x;
        self.s2 += x2;
        self.s3 += x2 * x;
        self.s4 += x2 * x2;
    }

    pub fn extend(&mut self, xs: &[f64]) {
        xs.iter().for_each(|&x| self.push(x));
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.s1 / self.n as f64
    }

    fn central(&self) -> (f64, f64, f64) {
        let n = self.n as f64;
        let m = self.mean();
        let (e2, e3, e4) = (self.s2 / n, self.s3 / n, self.s4 / n);
        let m2 = e2 - m * m;
        let m3 = e3 - 3.0 * m * e2 + 2.0 * m * m * m;
        let m4 = e4 - 4.0 * m * e3 + 6.0 * m * m * e2 - 3.0 * m.powi(4);
        (m2, m3, m4)
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        self.central().0
    }

    pub fn skewness(&self) -> f64 {
        let (m2, m3, _) = self.central();
        m3 / m2.powf(1.5)
    }

    pub fn excess_kurtosis(&self) -> f64 {
        let (m2, _, m4) = self.central();
        m4 / (m2 * m2) - 3.0
    }
}

/// Pearson correlation accumulator over `(x, y)` pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Correlation {
    n: u64,
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl Correlation {
    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.syy += y * y;
        self.sxy += x * y;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn value(&self) -> f64 {
        let n = self.n as f64;
        let cov = self.sxy / n - (self.sx / n) * (self.sy / n);
        let vx = self.sxx / n - (self.sx / n).powi(2);
        let vy = self.syy / n - (self.sy / n).powi(2);
        cov / (vx * vy).sqrt()
    }
}

/// Result of a one-sample KS test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov survival function `P(K > lambda)`.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as i64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// KS test of `values` against N(0, 1). Sorts `values` in place. Uses the
/// asymptotic distribution with Stephens' small-sample correction.
pub fn ks_standard_normal(values: &mut [f64]) -> KsResult {
    let n = values.len();
    assert!(n > 0, "KS test needs at least one value");
    values.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let f = normal.cdf(x);
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    let sqrt_n = nf.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    KsResult {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
    }
}

/// Fraction of entries of a sorted slice equal to their predecessor.
pub fn duplicate_fraction(sorted: &[f64]) -> f64 {
    if sorted.len() < 2 {
        return 0.0;
    }
    let dups = sorted.windows(2).filter(|w| w[0] == w[1]).count();
    dups as f64 / sorted.len() as f64
}
