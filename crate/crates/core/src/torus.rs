//! The torus map F(x,y) = (f(x) - y mod 1, x), its random perturbation,
//! Jacobians, the projectivized map, and the 3-step transition H with its
//! closed-form determinant, density factor rho, and preimage enumeration.
//!
//! All functions here are pure; points are reduced mod 1 after every step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar_maps::CircleMap;

pub const PI: f64 = std::f64::consts::PI;

/// Reduce to [0,1); floor-based, with the 1.0 edge clamped back to 0.0.
#[inline]
pub fn mod1(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Shortest signed representative of x mod 1, in [-1/2, 1/2].
#[inline]
pub fn wrap_half(x: f64) -> f64 {
    x - x.round()
}

/// Circle distance between two points of [0,1).
#[inline]
pub fn circ_dist(a: f64, b: f64) -> f64 {
    wrap_half(a - b).abs()
}

/// Distance from x to a finite subset of the circle.
#[inline]
pub fn circ_dist_to_set(x: f64, set: &[f64]) -> f64 {
    set.iter().map(|&s| circ_dist(x, s)).fold(f64::INFINITY, f64::min)
}

/// Fold an angle into [0, pi) (projective representative).
#[inline]
pub fn fold_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(PI);
    if t >= PI {
        t = 0.0;
    }
    t
}

/// Distance between two directions mod pi.
#[inline]
pub fn proj_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// A point of the 2-torus, both coordinates in [0,1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub x: f64,
    pub y: f64,
}

impl TorusPoint {
    pub fn new(x: f64, y: f64) -> Self {
        TorusPoint { x: mod1(x), y: mod1(y) }
    }
}

/// A point of the projective bundle: torus position plus a direction
/// theta in [0, pi) standing for the unit vector (cos theta, sin theta).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjPoint {
    pub pos: TorusPoint,
    pub theta: f64,
}

impl ProjPoint {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        ProjPoint { pos: TorusPoint::new(x, y), theta: fold_angle(theta) }
    }

    /// Unit vector representing the direction class.
    pub fn unit(&self) -> [f64; 2] {
        [self.theta.cos(), self.theta.sin()]
    }
}

/// Row-major 2x2 real matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jacobian2 {
    pub m: [f64; 4],
}

impl Jacobian2 {
    pub fn new(m00: f64, m01: f64, m10: f64, m11: f64) -> Self {
        Jacobian2 { m: [m00, m01, m10, m11] }
    }

    pub fn identity() -> Self {
        Jacobian2::new(1.0, 0.0, 0.0, 1.0)
    }

    pub fn det(&self) -> f64 {
        self.m[0] * self.m[3] - self.m[1] * self.m[2]
    }

    pub fn transpose(&self) -> Self {
        Jacobian2::new(self.m[0], self.m[2], self.m[1], self.m[3])
    }

    /// self * rhs (apply rhs first).
    pub fn mul(&self, rhs: &Jacobian2) -> Self {
        let a = &self.m;
        let b = &rhs.m;
        Jacobian2::new(
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        )
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.m[0] * v[0] + self.m[1] * v[1], self.m[2] * v[0] + self.m[3] * v[1]]
    }

    pub fn scale(&self, s: f64) -> Self {
        Jacobian2::new(self.m[0] * s, self.m[1] * s, self.m[2] * s, self.m[3] * s)
    }

    /// Largest absolute entry.
    pub fn norm_max(&self) -> f64 {
        self.m.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().all(|v| v.is_finite())
    }

    /// Singular value decomposition. Returns (sigma1, sigma2, v_angle,
    /// u_angle): M maps the unit vector at v_angle to sigma1 times the unit
    /// vector at u_angle (up to sign); angles are folded into [0, pi).
    pub fn svd(&self) -> Svd2 {
        let [a, b, c, d] = self.m;
        // Top eigenvector of M^T M.
        let p = a * a + c * c;
        let q = a * b + c * d;
        let s = b * b + d * d;
        let v_angle = 0.5 * (2.0 * q).atan2(p - s);
        let v = [v_angle.cos(), v_angle.sin()];
        let mv = self.apply(v);
        let sigma1 = mv[0].hypot(mv[1]);
        let u_angle = if sigma1 > 0.0 { mv[1].atan2(mv[0]) } else { 0.0 };
        let sigma2 = self.det().abs() / sigma1.max(f64::MIN_POSITIVE);
        Svd2 {
            sigma1,
            sigma2,
            v_angle: fold_angle(v_angle),
            u_angle: fold_angle(u_angle),
        }
    }

    /// Spectral norm (largest singular value).
    pub fn norm_spectral(&self) -> f64 {
        self.svd().sigma1
    }
}

/// 2x2 singular value data; sigma1 >= sigma2, angles in [0, pi).
#[derive(Clone, Copy, Debug)]
pub struct Svd2 {
    pub sigma1: f64,
    pub sigma2: f64,
    /// Direction most expanded by the matrix (input side).
    pub v_angle: f64,
    /// Its image direction (output side).
    pub u_angle: f64,
}

/// A triple of noise values driving one 3-step transition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseTriple {
    pub w: [f64; 3],
}

/// F(x,y) = (f(x) - y mod 1, x).
pub fn apply_f(map: &CircleMap, p: TorusPoint) -> TorusPoint {
    TorusPoint::new(map.eval(p.x) - p.y, p.x)
}

/// Inverse of F from the skew form: x_prev = y, y_prev = f(y) - x mod 1.
pub fn apply_f_inverse(map: &CircleMap, p: TorusPoint) -> TorusPoint {
    TorusPoint::new(p.y, map.eval(p.y) - p.x)
}

/// F_omega = F after the horizontal shift S_omega(x,y) = (x + omega, y).
pub fn apply_f_omega(map: &CircleMap, p: TorusPoint, omega: f64) -> TorusPoint {
    let xs = mod1(p.x + omega);
    TorusPoint::new(map.eval(xs) - p.y, xs)
}

/// d(F_omega) at p: [[f'(x+omega), -1], [1, 0]]; det is exactly 1.
pub fn jacobian_f_omega(map: &CircleMap, p: TorusPoint, omega: f64) -> Jacobian2 {
    Jacobian2::new(map.deriv1(p.x + omega), -1.0, 1.0, 0.0)
}

/// Projectivized step. The new direction is computed by matrix action on
/// (cos theta, sin theta) and refolded with atan2, which stays finite at
/// theta = pi/2 where the tangent form 1/(f' - tan theta) degenerates.
pub fn apply_fhat(map: &CircleMap, q: ProjPoint, omega: f64) -> ProjPoint {
    let jac = jacobian_f_omega(map, q.pos, omega);
    let w = jac.apply(q.unit());
    let theta = fold_angle(w[1].atan2(w[0]));
    let pos = apply_f_omega(map, q.pos, omega);
    ProjPoint { pos, theta }
}

/// log ||dF_omega u_theta|| = log sqrt((f' cos t - sin t)^2 + cos^2 t),
/// the integrand of the Furstenberg-type exponent formula.
pub fn log_growth(map: &CircleMap, q: ProjPoint, omega: f64) -> f64 {
    let fp = map.deriv1(q.pos.x + omega);
    let (s, c) = q.theta.sin_cos();
    let t = fp * c - s;
    0.5 * (t * t + c * c).ln()
}

/// Three projectivized steps; returns the endpoint and both intermediates.
pub fn three_step_h(
    map: &CircleMap,
    q0: ProjPoint,
    w: NoiseTriple,
) -> (ProjPoint, [ProjPoint; 2]) {
    let q1 = apply_fhat(map, q0, w.w[0]);
    let q2 = apply_fhat(map, q1, w.w[1]);
    let q3 = apply_fhat(map, q2, w.w[2]);
    (q3, [q1, q2])
}

/// Closed form for det dH of the 3-step transition
/// H(w1,w2,w3) = Fhat_{w3} Fhat_{w2} Fhat_{w1} (x0,y0,theta0):
///
///   det dH = sin^2(theta3) tan^2(theta2) tan^2(theta1) f''(x0 + w1).
///
/// theta1 = 0 would need f'(x0+w1) - tan(theta0) to be infinite and is
/// unreachable for finite inputs; theta_i = pi/2 makes the tangent
/// undefined and is rejected.
pub fn det_dh_formula(map: &CircleMap, q0: ProjPoint, w: NoiseTriple) -> Result<f64> {
    if (q0.theta - PI / 2.0).abs() < 1e-12 {
        return Err(Error::SingularInput("theta0 = pi/2".into()));
    }
    let (q3, [q1, q2]) = three_step_h(map, q0, w);
    for (i, q) in [(1, &q1), (2, &q2)].iter() {
        if q.theta.cos().abs() < 1e-12 {
            return Err(Error::SingularInput(format!("tan theta_{i} undefined")));
        }
    }
    let t1 = q1.theta.tan();
    let t2 = q2.theta.tan();
    let s3 = q3.theta.sin();
    Ok(s3 * s3 * t2 * t2 * t1 * t1 * map.deriv2(q0.pos.x + w.w[0]))
}

/// Density factor of the 3-step transition kernel at its endpoint:
/// rho(x,y,theta) = sin^2(theta) [f'(f(y) - x)(f'(y) - cot theta) - 1]^2.
///
/// Together with the preimage sum this gives the transition density
/// (2 eps)^-3 sum_{w1} |f''(x0+w1)|^-1 rho^-1; the exact identity
/// |det dH| = rho(q3) |f''(x0+w1)| ties it to `det_dh_formula`.
pub fn rho(map: &CircleMap, q: ProjPoint) -> Result<f64> {
    let s = q.theta.sin();
    if s == 0.0 {
        return Err(Error::SingularInput("theta = 0".into()));
    }
    let cot = q.theta.cos() / s;
    let inner = mod1(map.eval(q.pos.y) - q.pos.x);
    let bracket = map.deriv1(inner) * (map.deriv1(q.pos.y) - cot) - 1.0;
    Ok(s * s * bracket * bracket)
}

/// Bisection to floating point resolution on a bracketing interval.
fn bisect_to<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64) -> f64 {
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

/// All noise triples in [-eps, eps]^3 mapping the anchor (x0,y0,theta0) to
/// q3 under the 3-step transition.
///
/// The backward chain determines y2, theta2, theta1 uniquely; the remaining
/// freedom is the set of w1 with f'(x0 + w1) equal to the required target,
/// located by bracketed root solving on 2^10 subintervals refined at the
/// extrema of f'. Every candidate is verified by running H forward.
pub fn enumerate_preimages(
    map: &CircleMap,
    q3: ProjPoint,
    anchor: ProjPoint,
    eps: f64,
) -> Vec<NoiseTriple> {
    let (x0, y0, theta0) = (anchor.pos.x, anchor.pos.y, anchor.theta);
    let (x3, y3, theta3) = (q3.pos.x, q3.pos.y, q3.theta);

    if theta3.sin() == 0.0 || theta0.cos().abs() < 1e-300 {
        return Vec::new();
    }
    let k0 = theta0.tan();
    let y2 = mod1(map.eval(y3) - x3);
    // cot theta3 = f'(y3) - tan theta2; tan theta2 = 1/(f'(y2) - tan theta1).
    let k2 = map.deriv1(y3) - theta3.cos() / theta3.sin();
    let k1 = map.deriv1(y2) - 1.0 / k2;
    if !k1.is_finite() || k1 == 0.0 {
        return Vec::new();
    }
    let target = k0 + 1.0 / k1;
    if !target.is_finite() {
        return Vec::new();
    }

    // Roots of f'(x0 + w) - target on [-eps, eps]. Plain sign-change
    // bracketing can hide a root pair inside one cell near an extremum of
    // f', so the window is first split at the zeros of f''(x0 + .); on
    // each resulting monotone piece a sign comparison is conclusive.
    let g = |w: f64| map.deriv1(x0 + w) - target;
    let f2 = |w: f64| map.deriv2(x0 + w);
    let n_sub = 1 << 10;
    let h = 2.0 * eps / n_sub as f64;
    let mut breaks = vec![-eps];
    let mut prev2 = f2(-eps);
    for i in 0..n_sub {
        let lo = -eps + i as f64 * h;
        let hi = lo + h;
        let next2 = f2(hi);
        if prev2 != 0.0 && next2 != 0.0 && (prev2 < 0.0) != (next2 < 0.0) {
            breaks.push(bisect_to(&f2, lo, hi));
        } else if prev2 == 0.0 {
            breaks.push(lo);
        }
        prev2 = next2;
    }
    breaks.push(eps);
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut roots: Vec<f64> = Vec::new();
    for pair in breaks.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        if hi <= lo {
            continue;
        }
        let (glo, ghi) = (g(lo), g(hi));
        if glo == 0.0 {
            roots.push(lo);
        }
        if ghi == 0.0 && (hi - eps).abs() < 1e-15 {
            roots.push(hi);
        }
        if glo != 0.0 && ghi != 0.0 && (glo < 0.0) != (ghi < 0.0) {
            roots.push(bisect_to(&g, lo, hi));
        }
    }
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-11);

    let mut out = Vec::new();
    for w1 in roots {
        let y1 = mod1(x0 + w1);
        let x1 = mod1(map.eval(y1) - y0);
        let w2 = wrap_half(y2 - x1);
        if w2.abs() > eps + 1e-12 {
            continue;
        }
        let x2 = mod1(map.eval(y2) - y1);
        let w3 = wrap_half(y3 - x2);
        if w3.abs() > eps + 1e-12 {
            continue;
        }
        let cand = NoiseTriple { w: [w1, w2, w3] };
        let (img, _) = three_step_h(map, anchor, cand);
        let err = circ_dist(img.pos.x, x3)
            + circ_dist(img.pos.y, y3)
            + proj_dist(img.theta, theta3);
        if err < 1e-8 {
            out.push(cand);
        }
    }
    out
}
