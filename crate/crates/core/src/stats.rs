//! Small statistical helpers shared by the chain and estimator modules.

use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n-1 denominator); 0 for fewer than 2 points.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Upper-tail p-value of a chi-square statistic.
pub fn chi2_pvalue(stat: f64, dof: f64) -> f64 {
    let dist = ChiSquared::new(dof).expect("dof > 0");
    (1.0 - dist.cdf(stat)).clamp(0.0, 1.0)
}

/// Pearson chi-square of observed counts against equal expected counts.
pub fn chi2_uniform(counts: &[u64]) -> (f64, f64) {
    let total: u64 = counts.iter().sum();
    let e = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&o| (o as f64 - e) * (o as f64 - e) / e).sum();
    let dof = (counts.len() - 1) as f64;
    (stat, chi2_pvalue(stat, dof))
}

/// Two-sample chi-square homogeneity test over shared cells. Cells where
/// both samples are empty are dropped.
pub fn chi2_two_sample(a: &[u64], b: &[u64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len());
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let n = (na + nb) as f64;
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&oa, &ob) in a.iter().zip(b.iter()) {
        let col = (oa + ob) as f64;
        if col == 0.0 {
            continue;
        }
        cells += 1;
        let ea = col * na as f64 / n;
        let eb = col * nb as f64 / n;
        stat += (oa as f64 - ea) * (oa as f64 - ea) / ea;
        stat += (ob as f64 - eb) * (ob as f64 - eb) / eb;
    }
    let dof = (cells.max(2) - 1) as f64;
    (stat, chi2_pvalue(stat, dof))
}

/// Asymptotic Kolmogorov distribution tail. The alternating series
/// converges only for lambda away from zero; below that the dual theta
/// series for the CDF is used.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1.18 {
        if lambda < 1e-8 {
            return 1.0;
        }
        let mut cdf = 0.0;
        for k in 1..=20 {
            let e = (2 * k - 1) as f64;
            cdf += (-e * e * std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        }
        cdf *= (2.0 * std::f64::consts::PI).sqrt() / lambda;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let t = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        s += sign * t;
        sign = -sign;
        if t < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test of data against a CDF. Returns
/// (statistic, approximate p-value).
pub fn ks_test<F: Fn(f64) -> f64>(data: &mut [f64], cdf: F) -> (f64, f64) {
    data.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = data.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in data.iter().enumerate() {
        let c = cdf(x);
        d = d.max((i as f64 + 1.0) / n - c).max(c - i as f64 / n);
    }
    let sq = n.sqrt();
    (d, kolmogorov_q((sq + 0.12 + 0.11 / sq) * d))
}

/// Pearson correlation of two equal-length series.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    cov / (vx.sqrt() * vy.sqrt())
}

/// Ordinary least squares fit y = a + b x; returns (intercept, slope, r2).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    (my - slope * mx, slope, r2)
}
