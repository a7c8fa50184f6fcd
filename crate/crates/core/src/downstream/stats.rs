use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Mean and sample standard deviation; the latter is `None` below two values.
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, Some(var.sqrt()))
}

fn sample_var(values: &[f64]) -> f64 {
    mean_std(values).1.map_or(f64::NAN, |s| s * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn check_sizes(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Degenerate(format!(
            "each sample needs at least 2 values, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Welch's two-sample t-test, two-sided.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    check_sizes(a, b)?;
    let (ma, _) = mean_std(a);
    let (mb, _) = mean_std(b);
    let (va, vb) = (sample_var(a), sample_var(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if !(se2 > 0.0) {
        return Err(Error::Degenerate("both samples have zero variance".into()));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Degenerate(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(WelchResult { t, df, p })
}

/// Cohen's d with pooled standard deviation, times `J = 1 − 3/(4(n₁+n₂)−9)`.
pub fn hedges_g(a: &[f64], b: &[f64]) -> Result<f64> {
    check_sizes(a, b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (((na - 1.0) * sample_var(a) + (nb - 1.0) * sample_var(b)) / (na + nb - 2.0)).sqrt();
    if !(pooled > 0.0) {
        return Err(Error::Degenerate("pooled standard deviation is zero".into()));
    }
    let d = (mean_std(a).0 - mean_std(b).0) / pooled;
    let j = 1.0 - 3.0 / (4.0 * (na + nb) - 9.0);
    Ok(j * d)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Ten values with mean `m` and sample SD exactly 1.
    fn sample(m: f64) -> Vec<f64> {
        let base = [-1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0];
        let sd = (10.0f64 / 9.0).sqrt();
        base.iter().map(|b| m + b / sd).collect()
    }

    #[test]
    fn closed_form_hedges() {
        let (a, b) = (sample(1.0), sample(0.0));
        assert!((mean_std(&a).1.unwrap() - 1.0).abs() < 1e-12);
        let g = hedges_g(&a, &b).unwrap();
        assert!((g - (1.0 - 3.0 / 71.0)).abs() < 1e-12);
        assert!((g - 0.958).abs() < 1e-3);
    }

    #[test]
    fn identical_samples() {
        let a = sample(0.3);
        let w = welch_t(&a, &a).unwrap();
        assert_eq!(w.t, 0.0);
        assert_eq!(w.p, 1.0);
        assert_eq!(hedges_g(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn welch_reference_value() {
        // t = 1/sqrt(0.2) with 18 degrees of freedom
        let w = welch_t(&sample(1.0), &sample(0.0)).unwrap();
        assert!((w.t - 5f64.sqrt()).abs() < 1e-12);
        assert!((w.df - 18.0).abs() < 1e-9);
        assert!((w.p - 0.038249614516113854).abs() < 1e-9, "{}", w.p);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(welch_t(&[1.0, 1.0], &[2.0, 2.0]).is_err());
        assert!(hedges_g(&[1.0], &[2.0, 3.0]).is_err());
        assert_eq!(mean_std(&[2.0]), (2.0, None));
    }
}
