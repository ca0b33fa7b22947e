//! Circle maps f = L*psi + a, their critical sets and structure constants.
//!
//! Everything downstream (torus dynamics, region partitions, growth bounds)
//! is driven by f' and f''. The constants collected in [`CriticalData`]
//! (K1, K2, K0, c-hat) are computed by grid minimization rather than
//! symbolically, and stored with the resolution used.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{circ_dist, circ_dist_to_set, mod1};

/// Periodic part of the map as a finite Fourier sum
/// `psi(x) = sum_k a_k sin(2 pi k x) + b_k cos(2 pi k x)`, k = 1..=terms.len().
///
/// Restricting psi to trigonometric polynomials keeps derivatives exact and
/// derivative bounds reproducible; arbitrary closures are not accepted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Psi {
    terms: Vec<(f64, f64)>,
}

const TAU: f64 = std::f64::consts::TAU;

impl Psi {
    /// psi(x) = sin(2 pi x).
    pub fn sine() -> Self {
        Psi { terms: vec![(1.0, 0.0)] }
    }

    /// Fourier coefficients `(a_k, b_k)` for k = 1..=terms.len().
    pub fn from_fourier(terms: Vec<(f64, f64)>) -> Self {
        Psi { terms }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut s = 0.0;
        for (k, &(a, b)) in self.terms.iter().enumerate() {
            let w = TAU * (k + 1) as f64;
            s += a * (w * x).sin() + b * (w * x).cos();
        }
        s
    }

    pub fn deriv1(&self, x: f64) -> f64 {
        let mut s = 0.0;
        for (k, &(a, b)) in self.terms.iter().enumerate() {
            let w = TAU * (k + 1) as f64;
            s += w * (a * (w * x).cos() - b * (w * x).sin());
        }
        s
    }

    pub fn deriv2(&self, x: f64) -> f64 {
        let mut s = 0.0;
        for (k, &(a, b)) in self.terms.iter().enumerate() {
            let w = TAU * (k + 1) as f64;
            s += -w * w * (a * (w * x).sin() + b * (w * x).cos());
        }
        s
    }

    pub fn deriv3(&self, x: f64) -> f64 {
        let mut s = 0.0;
        for (k, &(a, b)) in self.terms.iter().enumerate() {
            let w = TAU * (k + 1) as f64;
            s += -w * w * w * (a * (w * x).cos() - b * (w * x).sin());
        }
        s
    }
}

/// Pure `L*psi + a`, or that plus a linear shift (degree-two lift), as for
/// the conjugated standard map `L sin(2 pi x) + 2x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapKind {
    PurePsi,
    Shifted,
}

/// The circle map f(x) = L*psi(x) + a + shift*x.
///
/// `eval` is the lift to the real line (no mod-1 reduction); derivatives are
/// periodic, so they may be queried at any real argument. `shift` must be an
/// integer for `f(x) - y (mod 1)` to be well defined on the torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleMap {
    psi: Psi,
    pub l: f64,
    pub a: f64,
    shift: f64,
    pub kind: MapKind,
}

impl CircleMap {
    pub fn new(psi: Psi, l: f64, a: f64) -> Self {
        CircleMap { psi, l, a, shift: 0.0, kind: MapKind::PurePsi }
    }

    /// Same psi/a/kind at a different expansion scale.
    pub fn with_l(&self, l: f64) -> Self {
        let mut m = self.clone();
        m.l = l;
        m
    }

    pub fn psi(&self) -> &Psi {
        &self.psi
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.l * self.psi.eval(x) + self.a + self.shift * x
    }

    pub fn deriv1(&self, x: f64) -> f64 {
        self.l * self.psi.deriv1(x) + self.shift
    }

    pub fn deriv2(&self, x: f64) -> f64 {
        self.l * self.psi.deriv2(x)
    }

    pub fn deriv3(&self, x: f64) -> f64 {
        self.l * self.psi.deriv3(x)
    }

    /// sup |f'| over a grid. For pure-psi maps this is L * ||psi'||_C0.
    pub fn sup_deriv1(&self, grid_n: usize) -> f64 {
        (0..grid_n)
            .map(|i| self.deriv1(i as f64 / grid_n as f64).abs())
            .fold(0.0, f64::max)
    }

    /// sup |psi'| over a grid (the shift does not belong to psi).
    pub fn sup_psi_deriv1(&self, grid_n: usize) -> f64 {
        (0..grid_n)
            .map(|i| self.psi.deriv1(i as f64 / grid_n as f64).abs())
            .fold(0.0, f64::max)
    }
}

/// The conjugated standard map: f(x) = L sin(2 pi x) + 2x.
///
/// Derivatives are exact; the perturbation away from f0 = L sin(2 pi x) is
/// the linear term 2x with C3 norm exactly 2.
pub fn standard_map_f(l: f64) -> CircleMap {
    assert!(l > 0.0, "standard map needs L > 0");
    CircleMap { psi: Psi::sine(), l, a: 0.0, shift: 2.0, kind: MapKind::Shifted }
}

/// Critical sets of f' and f'' with the structure constants used by the
/// region partitions and growth estimates.
///
/// `k1`, `k2` are clamped to >= 1 (only the inequalities |f'|/L >= K1^-1 d
/// and |f''|/L >= K2^-1 d matter downstream, and a larger K1 only shrinks
/// the good sets). `k0` collects the shifted-class bounds: max derivative
/// ratios, nondegeneracy at the critical sets and minimal gaps.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalData {
    /// Zeros of f', sorted, in [0,1).
    pub cprime: Vec<f64>,
    /// Zeros of f'', sorted, in [0,1).
    pub cdoubleprime: Vec<f64>,
    pub m1: usize,
    pub m2: usize,
    pub k1: f64,
    pub k2: f64,
    pub k0: f64,
    /// Half the minimal circular gap between distinct points of cprime.
    pub chat: f64,
    /// Grid resolution used for root bracketing and constant fitting.
    pub grid_n: usize,
}

/// Root tolerance, scale-aware: |f'| near a root is limited by |f''| * ulp,
/// so an absolute target is unattainable for large L.
fn root_tol(l: f64) -> f64 {
    1e-12 * l.abs().max(1.0)
}

/// Bisection on a bracketing interval down to floating point resolution.
fn bisect<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if (fm >= 0.0) == (flo >= 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// All sign-change roots of `f` on [0,1), refined by bisection. Exact
/// zeros at grid points count once; flat-zero stretches count none.
fn grid_roots<F: Fn(f64) -> f64>(f: &F, grid_n: usize) -> Vec<f64> {
    let h = 1.0 / grid_n as f64;
    let mut roots = Vec::new();
    let mut prev = f(0.0);
    for i in 0..grid_n {
        let x0 = i as f64 * h;
        let x1 = x0 + h;
        let next = f(x1);
        if prev == 0.0 {
            if next != 0.0 {
                roots.push(x0);
            }
        } else if next != 0.0 && (prev < 0.0) != (next < 0.0) {
            roots.push(bisect(f, x0, x1));
        }
        prev = next;
    }
    let mut roots: Vec<f64> = roots.iter().map(|&r| mod1(r)).collect();
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // A root sitting at the grid seam is found from both sides; merge
    // circular near-duplicates.
    let mut deduped: Vec<f64> = Vec::with_capacity(roots.len());
    for r in roots {
        if deduped.iter().all(|&q| circ_dist(q, r) > 1e-6) {
            deduped.push(r);
        }
    }
    deduped
}

fn min_circular_gap(sorted: &[f64]) -> f64 {
    if sorted.len() < 2 {
        return 1.0;
    }
    let mut min_gap = f64::INFINITY;
    for i in 0..sorted.len() {
        let next = sorted[(i + 1) % sorted.len()];
        min_gap = min_gap.min(circ_dist(sorted[i], next));
    }
    min_gap
}

/// Locates C'_f and C''_f and fits the structure constants by grid search.
///
/// Sign-change bracketing misses even-order roots of f', so zeros of f''
/// where |f'| also vanishes (to tolerance) are merged into C'_f; this is what
/// makes degenerate psi (double critical points) detectable by check_h1_h2.
pub fn find_critical_sets(map: &CircleMap, grid_n: usize) -> Result<CriticalData> {
    assert!(grid_n >= 1000, "grid_n must be >= 10^3");
    let f1 = |x: f64| map.deriv1(x);
    let f2 = |x: f64| map.deriv2(x);

    let mut cprime = grid_roots(&f1, grid_n);
    let cdoubleprime = grid_roots(&f2, grid_n);

    // Even-order roots of f' sit at zeros of f''.
    let tol = root_tol(map.l);
    for &z in &cdoubleprime {
        if map.deriv1(z).abs() < tol && cprime.iter().all(|&r| circ_dist(r, z) > 1e-6) {
            cprime.push(z);
        }
    }
    cprime.sort_by(|a, b| a.partial_cmp(b).unwrap());

    if cprime.is_empty() {
        return Err(Error::NoCriticalPoints);
    }
    for roots in [&cprime, &cdoubleprime] {
        if min_circular_gap(roots) < 2.0 / grid_n as f64 {
            return Err(Error::GridTooCoarse { grid_n });
        }
    }

    let chat = 0.5 * min_circular_gap(&cprime);

    // K1, K2 from the worst ratio of |f^(k)|/L to the distance from the
    // critical set; skip points essentially on the set (the ratio tends to
    // the finite limit |f''(xhat)|/L there anyway).
    let mut ratio1 = f64::INFINITY;
    let mut ratio2 = f64::INFINITY;
    let h = 1.0 / grid_n as f64;
    for i in 0..grid_n {
        let x = i as f64 * h;
        let d1 = circ_dist_to_set(x, &cprime);
        if d1 > 1e-9 {
            ratio1 = ratio1.min(map.deriv1(x).abs() / (map.l * d1));
        }
        if !cdoubleprime.is_empty() {
            let d2 = circ_dist_to_set(x, &cdoubleprime);
            if d2 > 1e-9 {
                ratio2 = ratio2.min(map.deriv2(x).abs() / (map.l * d2));
            }
        }
    }
    let k1 = (1.0 / ratio1).max(1.0);
    let k2 = if ratio2.is_finite() { (1.0 / ratio2).max(1.0) } else { 1.0 };

    // K0 per the shifted-class bounds: derivative sups, nondegeneracy minima
    // and gap minima, all normalized by L.
    let mut sup1: f64 = 0.0;
    let mut sup2: f64 = 0.0;
    let mut sup3: f64 = 0.0;
    for i in 0..grid_n {
        let x = i as f64 * h;
        sup1 = sup1.max(map.deriv1(x).abs());
        sup2 = sup2.max(map.deriv2(x).abs());
        sup3 = sup3.max(map.deriv3(x).abs());
    }
    let min_f2_on_c1 = cprime.iter().map(|&r| map.deriv2(r).abs()).fold(f64::INFINITY, f64::min);
    let min_f3_on_c2 =
        cdoubleprime.iter().map(|&r| map.deriv3(r).abs()).fold(f64::INFINITY, f64::min);
    let mut k0 = (sup1 / map.l).max(sup2 / map.l).max(sup3 / map.l).max(1.0);
    if min_f2_on_c1 > 0.0 {
        k0 = k0.max(map.l / min_f2_on_c1);
    } else {
        k0 = f64::INFINITY;
    }
    if min_f3_on_c2.is_finite() && min_f3_on_c2 > 0.0 {
        k0 = k0.max(map.l / min_f3_on_c2);
    }
    k0 = k0.max(1.0 / min_circular_gap(&cprime));
    if !cdoubleprime.is_empty() {
        k0 = k0.max(1.0 / min_circular_gap(&cdoubleprime));
    }

    Ok(CriticalData {
        m1: cprime.len(),
        m2: cdoubleprime.len(),
        cprime,
        cdoubleprime,
        k1,
        k2,
        k0,
        chat,
        grid_n,
    })
}

/// Report from the (H1)/(H2) hypothesis check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct H1H2Report {
    pub h1: bool,
    pub h2: bool,
    pub min_abs_f2_on_cprime: f64,
    pub min_abs_f3_on_cdoubleprime: f64,
}

/// (H1): finitely many critical points of both orders were found.
/// (H2): |f''| on C' and |f'''| on C'' exceed the scale-aware threshold
/// 1e-8 * L (strict positivity is not machine-checkable).
pub fn check_h1_h2(map: &CircleMap, crit: &CriticalData) -> H1H2Report {
    let min_f2 = crit.cprime.iter().map(|&r| map.deriv2(r).abs()).fold(f64::INFINITY, f64::min);
    let min_f3 =
        crit.cdoubleprime.iter().map(|&r| map.deriv3(r).abs()).fold(f64::INFINITY, f64::min);
    let thresh = 1e-8 * map.l;
    let min_f2 = if min_f2.is_finite() { min_f2 } else { 0.0 };
    let min_f3 = if min_f3.is_finite() { min_f3 } else { 0.0 };
    H1H2Report {
        h1: crit.m1 >= 1 && crit.m2 >= 1,
        h2: min_f2 > thresh && min_f3 > thresh,
        min_abs_f2_on_cprime: min_f2,
        min_abs_f3_on_cdoubleprime: min_f3,
    }
}

/// Report from the (H3)(c) check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct H3Report {
    pub holds: bool,
    /// Ordered pair (xhat, xhat') attaining the minimal distance.
    pub worst_pair: (f64, f64),
    pub worst_distance: f64,
}

/// (H3)(c): for every ordered pair of critical points, f(xhat) - xhat'
/// (mod 1) stays at distance >= c from the critical set.
pub fn check_h3(map: &CircleMap, crit: &CriticalData, c: f64) -> Result<H3Report> {
    if c <= 0.0 || c >= crit.chat {
        return Err(Error::InvalidC {
            c,
            reason: format!("require 0 < c < chat = {}", crit.chat),
        });
    }
    let mut worst = f64::INFINITY;
    let mut worst_pair = (0.0, 0.0);
    for &xh in &crit.cprime {
        let fx = map.eval(xh);
        for &xh2 in &crit.cprime {
            let v = mod1(fx - xh2);
            let d = circ_dist_to_set(v, &crit.cprime);
            if d < worst {
                worst = d;
                worst_pair = (xh, xh2);
            }
        }
    }
    Ok(H3Report { holds: worst >= c, worst_pair, worst_distance: worst })
}
