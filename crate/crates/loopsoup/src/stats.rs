//! Small statistics toolbox shared by the test suites and the experiment
//! drivers: distribution functions (delegated to `statrs`), two-sample
//! Kolmogorov–Smirnov and χ² goodness-of-fit tests, binomial standard
//! errors, and a weighted least-squares line fit.

use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Normal, Poisson};

/// Standard normal CDF Φ(x).
pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// Upper tail of the χ² distribution with `df` degrees of freedom.
pub fn chi2_sf(stat: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(df as f64).unwrap().cdf(stat)
}

/// Poisson probability mass P[N = k] for N ~ Poisson(lambda).
pub fn poisson_pmf(k: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    Poisson::new(lambda).unwrap().pmf(k)
}

/// Sample proportion and its binomial standard error.
pub fn proportion_with_se(hits: u64, trials: u64) -> (f64, f64) {
    assert!(trials > 0, "empty sample");
    let p = hits as f64 / trials as f64;
    (p, (p * (1.0 - p) / trials as f64).sqrt())
}

/// Kolmogorov–Smirnov tail function Q(λ) = 2 Σ_{j≥1} (−1)^{j−1} e^{−2 j² λ²}.
fn ks_tail(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test; returns the asymptotic p-value.
///
/// Works on integer-valued samples too (ties are handled by comparing the
/// empirical CDFs at jump points), where the asymptotic p-value is
/// conservative.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "empty sample");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while ia < na && ib < nb {
        let t = a[ia].min(b[ib]);
        while ia < na && a[ia] <= t {
            ia += 1;
        }
        while ib < nb && b[ib] <= t {
            ib += 1;
        }
        d = d.max((ia as f64 / na as f64 - ib as f64 / nb as f64).abs());
    }
    let ne = (na as f64 * nb as f64) / ((na + nb) as f64);
    let sqrt_ne = ne.sqrt();
    ks_tail((sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d)
}

/// χ² goodness-of-fit p-value of observed integer counts against a
/// Poisson(lambda) law.  Cells are pooled from the right (and left) until
/// every expected count is at least 5; degrees of freedom = cells − 1.
pub fn chi2_poisson_gof(observed: &[u64], lambda: f64) -> f64 {
    let n: u64 = observed.iter().sum();
    assert!(n > 0, "empty sample");
    let kmax = observed.len();
    // expected per cell
    let expected: Vec<f64> = (0..kmax).map(|k| n as f64 * poisson_pmf(k as u64, lambda)).collect();
    let tail = n as f64 - expected.iter().sum::<f64>();
    // pool cells so expectations stay ≥ 5; the overflow tail joins the last cell
    let mut cells: Vec<(f64, f64)> = Vec::new(); // (observed, expected)
    let mut acc_o = 0.0;
    let mut acc_e = 0.0;
    for k in 0..kmax {
        acc_o += observed[k] as f64;
        acc_e += expected[k];
        if acc_e >= 5.0 {
            cells.push((acc_o, acc_e));
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    acc_e += tail;
    if let Some(last) = cells.last_mut() {
        if acc_e < 5.0 {
            last.0 += acc_o;
            last.1 += acc_e;
        } else {
            cells.push((acc_o, acc_e));
        }
    } else {
        cells.push((acc_o, acc_e));
    }
    if cells.len() < 2 {
        return 1.0;
    }
    let stat: f64 = cells.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    chi2_sf(stat, cells.len() - 1)
}

/// Weighted least-squares line fit y ≈ slope·x + intercept.
///
/// Weights are inverse variances; `slope_se` is the usual
/// `sqrt(S / (S·Sxx − Sx²))` from the normal equations.  The fit satisfies
/// the orthogonality identities Σw·r = Σw·r·x = 0 up to rounding.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

pub fn fit_line_weighted(xs: &[f64], ys: &[f64], ws: &[f64]) -> LineFit {
    assert!(xs.len() == ys.len() && ys.len() == ws.len());
    assert!(xs.len() >= 2, "need at least two points to fit a line");
    let s: f64 = ws.iter().sum();
    let sx: f64 = ws.iter().zip(xs).map(|(w, x)| w * x).sum();
    let sy: f64 = ws.iter().zip(ys).map(|(w, y)| w * y).sum();
    let sxx: f64 = ws.iter().zip(xs).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = ws.iter().zip(xs.iter().zip(ys)).map(|(w, (x, y))| w * x * y).sum();
    let delta = s * sxx - sx * sx;
    assert!(delta > 0.0, "degenerate design (all x equal?)");
    LineFit {
        slope: (s * sxy - sx * sy) / delta,
        intercept: (sxx * sy - sx * sxy) / delta,
        slope_se: (s / delta).sqrt(),
    }
}
