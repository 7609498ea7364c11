//! Monte Carlo estimates with standard errors.

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn new(value: f64, std_error: f64) -> Self {
        Estimate { value, std_error }
    }

    /// Sample mean and its standard error `s / √n`.
    pub fn mean_of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Estimate::new(f64::NAN, f64::NAN);
        }
        let mean = compensated_sum(values.iter().copied()) / n as f64;
        if n == 1 {
            return Estimate::new(mean, 0.0);
        }
        let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
        let var = ss / (n - 1) as f64;
        Estimate::new(mean, (var / n as f64).sqrt())
    }

    /// Unbiased sample variance with the delta-method standard error
    /// `√((m₄ − s⁴) / n)`.
    pub fn variance_of(values: &[f64]) -> Self {
        let n = values.len();
        if n < 2 {
            return Estimate::new(f64::NAN, f64::NAN);
        }
        let nf = n as f64;
        let mean = compensated_sum(values.iter().copied()) / nf;
        let m2 = compensated_sum(values.iter().map(|v| (v - mean).powi(2))) / nf;
        let m4 = compensated_sum(values.iter().map(|v| (v - mean).powi(4))) / nf;
        let var = m2 * nf / (nf - 1.0);
        Estimate::new(var, ((m4 - m2 * m2).max(0.0) / nf).sqrt())
    }

    /// Whether `target` lies within `k` standard errors.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }

    /// `|value − target|` in units of standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.value - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_error() {
        let e = Estimate::mean_of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.value, 2.5);
        assert!((e.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn variance_of_constant_is_zero() {
        let e = Estimate::variance_of(&[2.0; 10]);
        assert_eq!(e.value, 0.0);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn compensation_recovers_small_terms() {
        let v = compensated_sum([1e16, 1.0, -1e16]);
        assert_eq!(v, 1.0);
    }
}
