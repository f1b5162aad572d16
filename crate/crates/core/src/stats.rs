//! Special functions and small statistics kernels shared by the model and the
//! regression code.

use crate::{Error, Result};

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        let pi = core::f64::consts::PI;
        return libm::log(pi / libm::sin(pi * x)) - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (k, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + k as f64);
    }
    0.5 * libm::log(2.0 * core::f64::consts::PI) + (x + 0.5) * libm::log(t) - t + libm::log(a)
}

/// Regularized incomplete beta function I_x(a, b).
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * libm::log(x) + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    // The continued fraction converges fastest on this side of the mean.
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
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
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Upper-tail probability P(T > t) of Student's t with `dof` degrees of freedom.
pub fn t_distribution_sf(t: f64, dof: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let tail = 0.5 * inc_beta(dof / 2.0, 0.5, dof / (dof + t * t));
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Two-sided p-value `2 · P(T > |t|)`.
pub fn t_two_sided_p(t: f64, dof: f64) -> f64 {
    (2.0 * t_distribution_sf(t.abs(), dof)).min(1.0)
}

/// Quantile of Student's t: the `t` with `P(T <= t) = prob`.
pub fn t_quantile(prob: f64, dof: f64) -> f64 {
    if prob == 0.5 {
        return 0.0;
    }
    if prob < 0.5 {
        return -t_quantile(1.0 - prob, dof);
    }
    let target = 1.0 - prob;
    let mut hi = 1.0;
    while t_distribution_sf(hi, dof) > target {
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if t_distribution_sf(mid, dof) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (divisor `n - 1`).
pub fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    libm::sqrt(ss / (xs.len() as f64 - 1.0))
}

/// Pearson correlation with its two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Sample Pearson correlation; the p-value uses `t = r·sqrt((n−2)/(1−r²))`
/// with `n − 2` degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput("pearson: vectors differ in length".into()));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientSample { needed: 3, got: n });
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if is_flat(sxx, mx, n) || is_flat(syy, my, n) {
        return Err(Error::DegenerateCorrelation);
    }
    let r = (sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0);
    let dof = (n - 2) as f64;
    let p_value = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * libm::sqrt(dof / (1.0 - r * r));
        t_two_sided_p(t, dof)
    };
    Ok(Correlation { r, p_value, n })
}

/// Sum of squared deviations indistinguishable from rounding noise.
fn is_flat(ss: f64, mean: f64, n: usize) -> bool {
    !(ss.is_finite()) || ss <= (mean * mean * n as f64) * 1e-26 || ss == 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    #[test]
    fn gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(5.0) - libm::log(24.0)).abs() < 1e-13);
        assert!((ln_gamma(0.5) - libm::log(core::f64::consts::PI.sqrt())).abs() < 1e-13);
    }

    #[test]
    fn sf_symmetry_at_zero() {
        for dof in [1.0, 2.0, 7.0, 59.0, 1e6] {
            assert!((t_distribution_sf(0.0, dof) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn sf_matches_statrs() {
        for &dof in &[1.0, 3.0, 8.0, 30.0, 200.0] {
            let dist = StudentsT::new(0.0, 1.0, dof).unwrap();
            for &t in &[-3.0, -0.7, 0.2, 1.5, 2.5, 6.0] {
                let ours = t_distribution_sf(t, dof);
                let theirs = dist.sf(t);
                assert!((ours - theirs).abs() < 1e-10, "dof {dof} t {t}: {ours} vs {theirs}");
            }
        }
    }

    #[test]
    fn sf_reference_values() {
        // scipy.stats.t.sf
        assert!((t_distribution_sf(1.5, 3.0) - 0.11529193262241141).abs() < 1e-12);
        assert!((t_distribution_sf(-2.0, 7.0) - 0.9571903357185121).abs() < 1e-12);
        assert!((t_distribution_sf(10.0, 1.0) - 0.03172551743055356).abs() < 1e-12);
    }

    #[test]
    fn two_sided_table_values() {
        assert!((t_two_sided_p(2.228, 10.0) - 0.050).abs() < 5e-4);
        assert!((t_two_sided_p(1.96, 1e6) - 0.05).abs() < 0.002);
    }

    #[test]
    fn quantile_inverts_sf() {
        assert!((t_quantile(0.975, 8.0) - 2.306004135204166).abs() < 1e-10);
        assert!((t_quantile(0.975, 59.0) - 2.0009953780882674).abs() < 1e-10);
        assert!((t_quantile(0.025, 8.0) + 2.306004135204166).abs() < 1e-10);
    }

    #[test]
    fn pearson_perfect_and_reference() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: [f64; 5] = core::array::from_fn(|k| 2.0 * x[k] + 1.0);
        assert!((pearson(&x, &y).unwrap().r - 1.0).abs() < 1e-15);
        let neg: [f64; 5] = core::array::from_fn(|k| -x[k]);
        assert!((pearson(&x, &neg).unwrap().r + 1.0).abs() < 1e-15);
        // scipy.stats.pearsonr
        let c = pearson(&x, &[2.0, 1.0, 4.0, 3.0, 6.0]).unwrap();
        assert!((c.r - 0.8219949365267865).abs() < 1e-9);
        assert!((c.p_value - 0.08770664700806553).abs() < 1e-9);
    }

    #[test]
    fn pearson_errors() {
        assert_eq!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::InsufficientSample { needed: 3, got: 2 }));
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::DegenerateCorrelation));
    }
}
