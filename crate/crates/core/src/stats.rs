//! Kolmogorov–Smirnov statistics used to compare field distributions.

use statrs::distribution::{ContinuousCDF, Normal};

/// Asymptotic Kolmogorov survival function `Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn p_value(stat: f64, effective_n: f64) -> f64 {
    let sn = effective_n.sqrt();
    kolmogorov_q((sn + 0.12 + 0.11 / sn) * stat)
}

/// KS statistic and p-value of `samples` against `N(0, variance)`.
pub fn ks_normal(samples: &[f64], variance: f64) -> (f64, f64) {
    let normal = Normal::new(0.0, variance.sqrt()).expect("positive variance");
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in xs.iter().enumerate() {
        let cdf = normal.cdf(x);
        d = d.max((i as f64 + 1.0) / n - cdf).max(cdf - i as f64 / n);
    }
    (d, p_value(d, n))
}

/// Two-sample KS statistic and p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|p, q| p.total_cmp(q));
    xb.sort_by(|p, q| p.total_cmp(q));
    let (na, nb) = (xa.len(), xb.len());
    if na == 0 || nb == 0 {
        return (0.0, 1.0);
    }
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < na && j < nb {
        let x = xa[i].min(xb[j]);
        while i < na && xa[i] <= x {
            i += 1;
        }
        while j < nb && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    (d, p_value(d, ne))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_have_zero_distance() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (d, p) = ks_two_sample(&xs, &xs);
        assert_eq!(d, 0.0);
        assert!(p > 0.99);
    }

    #[test]
    fn disjoint_samples_have_unit_distance() {
        let a: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..50).map(|i| 100.0 + i as f64).collect();
        let (d, p) = ks_two_sample(&a, &b);
        assert_eq!(d, 1.0);
        assert!(p < 1e-6);
    }

    #[test]
    fn kolmogorov_tail_matches_known_quantile() {
        // Q(1.358) ~ 0.05
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
    }
}
