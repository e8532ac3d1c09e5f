//! Summary statistics and Welch's t-test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear-interpolation quantile (type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub group: String,
    pub column: String,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl SummaryStats {
    /// `None` for an empty sample. Non-finite values are rejected.
    pub fn of(group: impl Into<String>, column: impl Into<String>, values: &[f64]) -> Option<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            group: group.into(),
            column: column.into(),
            n: sorted.len(),
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            median: quantile_sorted(&sorted, 0.5),
            q1: quantile_sorted(&sorted, 0.25),
            q3: quantile_sorted(&sorted, 0.75),
        })
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::contract(format!("welch t-test needs n >= 2 per sample, got {} and {}", a.len(), b.len())));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::contract("welch t-test samples must be finite"));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        return Err(Error::DegenerateVariance("both samples have zero variance".into()));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    Ok(WelchResult { t, df, p: student_t_two_sided(t, df) })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    regularized_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Regularized incomplete beta `I_x(a, b)` via Lentz's continued fraction.
pub fn regularized_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        for aa in
            [m * (b - m) * x / ((a + m2 - 1.0) * (a + m2)), -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0))]
        {
            d = 1.0 + aa * d;
            if d.abs() < TINY {
                d = TINY;
            }
            c = 1.0 + aa / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            h *= d * c;
        }
        if (d * c - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    #[test]
    fn quantile_examples() {
        let s = SummaryStats::of("g", "c", &[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.median, s.q1, s.q3), (2.5, 1.75, 3.25));
        let one = SummaryStats::of("g", "c", &[7.0]).unwrap();
        assert_eq!((one.median, one.q1, one.q3), (7.0, 7.0, 7.0));
        assert!(SummaryStats::of("g", "c", &[]).is_none());
    }

    #[test]
    fn welch_example() {
        let r = welch_t_test(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert!((r.t + 1.224745).abs() < 1e-6);
        assert!((r.df - 4.0).abs() < 1e-12);
        assert!((r.p - 0.2878).abs() < 1e-4, "{}", r.p);
    }

    #[test]
    fn welch_equal_samples() {
        let r = welch_t_test(&[1.0, 5.0, 2.0], &[1.0, 5.0, 2.0]).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
    }

    #[test]
    fn welch_guards() {
        assert!(matches!(welch_t_test(&[0.0, 0.0], &[0.0, 0.0]), Err(Error::DegenerateVariance(_))));
        assert!(matches!(welch_t_test(&[1.0], &[1.0, 2.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn t_cdf_against_reference() {
        for &(t, df) in &[(0.5, 1.0), (1.5, 2.5), (2.0, 10.0), (4.0, 30.0), (0.1, 100.0), (8.0, 3.0)] {
            let dist = StudentsT::new(0.0, 1.0, df).unwrap();
            let expected = 2.0 * (1.0 - dist.cdf(t));
            assert!((student_t_two_sided(t, df) - expected).abs() < 1e-10, "t={t} df={df}");
        }
    }

    proptest! {
        #[test]
        fn quartiles_ordered(v in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
            let s = SummaryStats::of("g", "c", &v).unwrap();
            prop_assert!(s.q1 <= s.median && s.median <= s.q3);
        }

        #[test]
        fn welch_swap(a in proptest::collection::vec(-50f64..50.0, 2..12), b in proptest::collection::vec(-50f64..50.0, 2..12)) {
            if let (Ok(ab), Ok(ba)) = (welch_t_test(&a, &b), welch_t_test(&b, &a)) {
                prop_assert_eq!(ab.t, -ba.t);
                prop_assert!((ab.p - ba.p).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&ab.p));
            }
        }
    }
}
