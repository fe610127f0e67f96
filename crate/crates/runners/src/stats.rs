use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

/// Paired t-test result. `p` is two-sided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TTestError {
    #[error("paired t-test needs at least two differences")]
    TooFewSamples,
    #[error("differences have zero variance")]
    ZeroVariance,
}

/// Arithmetic mean; NaN for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn sample_stddev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// One-sample t-test of paired differences against zero.
pub fn paired_t_test(diffs: &[f64]) -> Result<TTest, TTestError> {
    if diffs.len() < 2 {
        return Err(TTestError::TooFewSamples);
    }
    let sd = sample_stddev(diffs);
    if sd == 0.0 {
        return Err(TTestError::ZeroVariance);
    }
    let n = diffs.len() as f64;
    let df = n - 1.0;
    let t = mean(diffs) / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest { t, p, df })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guards() {
        assert_eq!(paired_t_test(&[1.0]), Err(TTestError::TooFewSamples));
        assert_eq!(paired_t_test(&[2.0, 2.0, 2.0]), Err(TTestError::ZeroVariance));
    }

    #[test]
    fn zero_mean_gives_p_one() {
        let r = paired_t_test(&[1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
        assert_eq!(r.df, 3.0);
    }

    #[test]
    fn stddev_of_single_value_is_zero() {
        assert_eq!(sample_stddev(&[3.5]), 0.0);
        assert_eq!(sample_stddev(&[1.0, 3.0]), 2f64.sqrt());
    }
}
