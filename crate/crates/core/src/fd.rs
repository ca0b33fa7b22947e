//! Central-difference checks used by the verification suites: numerical
//! Jacobians of the one-step map and the 3-step transition, plus a sampler
//! of configurations on which the 3-step determinant is numerically
//! resolvable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar_maps::CircleMap;
use crate::torus::{
    apply_f_omega, apply_fhat, circ_dist, three_step_h, wrap_half, NoiseTriple, ProjPoint,
    TorusPoint, PI,
};

/// Central-difference Jacobian of F_omega in (x, y), step h, wrap-aware.
pub fn jacobian_f_omega_fd(map: &CircleMap, p: TorusPoint, omega: f64, h: f64) -> [f64; 4] {
    let f = |dx: f64, dy: f64| apply_f_omega(map, TorusPoint::new(p.x + dx, p.y + dy), omega);
    let (xp, xm) = (f(h, 0.0), f(-h, 0.0));
    let (yp, ym) = (f(0.0, h), f(0.0, -h));
    [
        wrap_half(xp.x - xm.x) / (2.0 * h),
        wrap_half(yp.x - ym.x) / (2.0 * h),
        wrap_half(xp.y - xm.y) / (2.0 * h),
        wrap_half(yp.y - ym.y) / (2.0 * h),
    ]
}

/// Central-difference 3x3 Jacobian determinant of w -> H(w), step h, with
/// mod-1 and mod-pi unwrapped differences.
pub fn det_dh_fd(map: &CircleMap, q0: ProjPoint, w: NoiseTriple, h: f64) -> f64 {
    let mut jac = [[0.0f64; 3]; 3];
    for j in 0..3 {
        let mut wp = w;
        let mut wm = w;
        wp.w[j] += h;
        wm.w[j] -= h;
        let (qp, _) = three_step_h(map, q0, wp);
        let (qm, _) = three_step_h(map, q0, wm);
        jac[0][j] = wrap_half(qp.pos.x - qm.pos.x) / (2.0 * h);
        jac[1][j] = wrap_half(qp.pos.y - qm.pos.y) / (2.0 * h);
        let mut dt = qp.theta - qm.theta;
        dt -= PI * (dt / PI).round();
        jac[2][j] = dt / (2.0 * h);
    }
    jac[0][0] * (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1])
        - jac[0][1] * (jac[1][0] * jac[2][2] - jac[1][2] * jac[2][0])
        + jac[0][2] * (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0])
}

/// Draws (q0, w) with the noise steering every shifted point near the
/// critical set, where all intermediate angles are order one. Only there
/// is det dH an order-one fraction of the matrix-entry scale; elsewhere it
/// is a cancellation beyond the reach of any finite-difference oracle.
pub fn nondegenerate_3step_samples(
    map: &CircleMap,
    crit_points: &[f64],
    eps: f64,
    n: usize,
    seed: u64,
) -> Vec<(ProjPoint, NoiseTriple)> {
    let width = 2.0 / (2.0 * PI * PI * map.l);
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let nearest = |x: f64| {
        crit_points
            .iter()
            .cloned()
            .min_by(|a, b| circ_dist(x, *a).partial_cmp(&circ_dist(x, *b)).unwrap())
            .unwrap()
    };
    while out.len() < n {
        let theta0 = 0.25 + 0.85 * r.random::<f64>();
        let theta0 = if r.random::<f64>() < 0.5 { theta0 } else { PI - theta0 };
        let w1 = (2.0 * r.random::<f64>() - 1.0) * eps;
        let pick = crit_points[(r.random::<f64>() * crit_points.len() as f64) as usize
            % crit_points.len()];
        let t1 = pick + (2.0 * r.random::<f64>() - 1.0) * width;
        let q0 = ProjPoint::new(t1 - w1, r.random::<f64>(), theta0);

        let q1 = apply_fhat(map, q0, w1);
        let t2 = nearest(q1.pos.x) + (2.0 * r.random::<f64>() - 1.0) * width;
        let w2 = wrap_half(t2 - q1.pos.x);
        let q2 = apply_fhat(map, q1, w2);
        let t3 = nearest(q2.pos.x) + (2.0 * r.random::<f64>() - 1.0) * width;
        let w3 = wrap_half(t3 - q2.pos.x);
        if w1.abs() > eps || w2.abs() > eps || w3.abs() > eps {
            continue;
        }
        let w = NoiseTriple { w: [w1, w2, w3] };
        let (q3, inter) = three_step_h(map, q0, w);
        let mut ok = map.deriv2(q0.pos.x + w.w[0]).abs() > 12.0 * map.l;
        for q in [inter[0], inter[1]] {
            let t = q.theta.tan().abs();
            ok &= (0.3..30.0).contains(&t);
        }
        ok &= q3.theta.tan().abs() > 0.05 && q3.theta.sin() > 0.05;
        if ok {
            out.push((q0, w));
        }
    }
    out
}
