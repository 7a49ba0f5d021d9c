//! Small numerical helpers shared across modules.

/// Neumaier-compensated running sum. Summation order is the caller's
/// iteration order, so results are reproducible bit for bit.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Scientific notation with 9 significant digits, the fixed width used by
/// every CSV writer.
pub fn format_sig9(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        x.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_format() {
        assert_eq!(format_sig9(1234.5678912), "1.23456789e3");
        assert_eq!(format_sig9(-0.5), "-5.00000000e-1");
        assert_eq!(format_sig9(f64::NAN), "NaN");
        assert_eq!(format_sig9(1234.5678912).parse::<f64>().unwrap(), 1234.56789);
    }

    #[test]
    fn recovers_cancelled_terms() {
        let xs = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(xs.iter().sum::<f64>(), 0.0);
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn empty_is_zero() {
        assert_eq!(compensated_sum(std::iter::empty()), 0.0);
    }
}
