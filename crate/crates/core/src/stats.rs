//! Student-t tail probabilities and the paired t-test.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        // reflection: Γ(x)Γ(1−x) = π / sin(πx)
        let pi = T::lit(std::f64::consts::PI);
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += T::lit(c) / (x + T::from_usize_lossy(i));
    }
    let t = x + T::lit(LANCZOS_G) + half;
    T::lit(0.5 * (2.0 * std::f64::consts::PI).ln()) + (x + half) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_continued_fraction<T: Scalar>(a: T, b: T, x: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let eps = T::epsilon();
    let one = T::one();
    let two = T::lit(2.0);
    let (qab, qap, qam) = (a + b, a + one, a - one);
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    for m in 1..=500usize {
        let m = T::from_usize_lossy(m);
        let m2 = two * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let delta = d * c;
        h *= delta;
        if (delta - one).abs() <= eps {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn incomplete_beta<T: Scalar>(a: T, b: T, x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if x >= T::one() {
        return T::one();
    }
    let one = T::one();
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (one - x).ln();
    let front = ln_front.exp();
    if x < (a + one) / (a + b + T::lit(2.0)) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        one - front * beta_continued_fraction(b, a, one - x) / b
    }
}

/// Two-tailed `P(|T| >= |t|)` for Student-t with `df` degrees of freedom.
pub fn t_two_tailed_p<T: Scalar>(t: T, df: T) -> T {
    if t.is_infinite() {
        return T::zero();
    }
    let x = df / (df + t * t);
    incomplete_beta(df / T::lit(2.0), T::lit(0.5), x)
}

/// Student-t CDF.
pub fn t_cdf<T: Scalar>(t: T, df: T) -> T {
    let half_tail = t_two_tailed_p(t, df) / T::lit(2.0);
    if t >= T::zero() {
        T::one() - half_tail
    } else {
        half_tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t_stat: f64,
    pub p_value: f64,
    pub df: usize,
    /// Mean of `a − b`.
    pub mean_diff: f64,
    /// `p_value < alpha`.
    pub significant: bool,
}

/// Two-tailed paired t-test on `a − b`.
///
/// Zero-variance differences: a nonzero mean is significant with `p = 0`
/// (and infinite `t`), a zero mean gives `t = 0`, `p = 1`.
pub fn paired_t_test<T: Scalar>(a: &[T], b: &[T], alpha: f64) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Input(format!("paired t-test: lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::Input("paired t-test needs at least two pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.as_f64() - y.as_f64()).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let df = diffs.len() - 1;
    let (t_stat, p_value) = if var == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = mean / (var / n).sqrt();
        (t, t_two_tailed_p(t, df as f64))
    };
    Ok(TTest {
        t_stat,
        p_value,
        df,
        mean_diff: mean,
        significant: p_value < alpha,
    })
}
