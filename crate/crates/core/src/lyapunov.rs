//! Lyapunov exponent estimation: renormalized tangent products along noisy
//! orbits, the Furstenberg-type ergodic average over the projectivized
//! chain, singular-value data of finite blocks, and the good/bad integral
//! decomposition diagnostic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{unit_f64, NoiseModel};
use crate::error::{Error, Result};
use crate::scalar_maps::{CircleMap, CriticalData};
use crate::stats::{mean, sample_std};
use crate::torus::{
    apply_f_omega, apply_fhat, circ_dist_to_set, fold_angle, jacobian_f_omega, log_growth,
    Jacobian2, ProjPoint, TorusPoint, PI,
};

/// Running product of 2x2 Jacobians with periodic max-norm renormalization
/// and a log-scale accumulator, so arbitrarily long products stay inside
/// double range.
#[derive(Clone, Debug)]
pub struct TangentFrame {
    pub matrix: Jacobian2,
    pub log_norm_sum: f64,
    pub steps: usize,
    renorm_every: usize,
}

impl TangentFrame {
    pub fn new(renorm_every: usize) -> Self {
        assert!(renorm_every >= 1);
        TangentFrame {
            matrix: Jacobian2::identity(),
            log_norm_sum: 0.0,
            steps: 0,
            renorm_every,
        }
    }

    /// Left-multiply by the next Jacobian. Overflow is detected at
    /// renormalization time rather than silently propagated.
    pub fn push(&mut self, jac: &Jacobian2) -> Result<()> {
        self.matrix = jac.mul(&self.matrix);
        self.steps += 1;
        if self.steps.is_multiple_of(self.renorm_every) {
            self.renormalize()?;
        }
        Ok(())
    }

    pub fn renormalize(&mut self) -> Result<()> {
        if !self.matrix.is_finite() {
            return Err(Error::Overflow { step: self.steps });
        }
        let s = self.matrix.norm_max();
        if s > 0.0 {
            self.matrix = self.matrix.scale(1.0 / s);
            self.log_norm_sum += s.ln();
        }
        Ok(())
    }

    /// log of the spectral norm of the full (unrenormalized) product.
    pub fn log_norm(&self) -> f64 {
        self.log_norm_sum + self.matrix.norm_spectral().ln()
    }
}

/// A Lyapunov exponent estimate with replica scatter.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeEstimate {
    pub lambda_hat: f64,
    pub std_error: f64,
    pub n_steps: usize,
    pub n_replicas: usize,
    pub per_replica: Vec<f64>,
}

impl LeEstimate {
    fn from_replicas(per_replica: Vec<f64>, n_steps: usize) -> Self {
        let lambda_hat = mean(&per_replica);
        let std_error = sample_std(&per_replica) / (per_replica.len() as f64).sqrt();
        LeEstimate { lambda_hat, std_error, n_steps, n_replicas: per_replica.len(), per_replica }
    }

    /// Whether two estimates agree within `k` joint standard errors.
    pub fn agrees_with(&self, other: &LeEstimate, k: f64) -> bool {
        let joint = (self.std_error.powi(2) + other.std_error.powi(2)).sqrt();
        (self.lambda_hat - other.lambda_hat).abs() <= k * joint
    }
}

/// Top Lyapunov exponent from norm growth of the tangent product along a
/// noisy orbit, averaged over independent replica streams.
pub fn estimate_le_norm(
    map: &CircleMap,
    noise: &NoiseModel,
    q0: TorusPoint,
    n_steps: usize,
    renorm_every: usize,
    n_replicas: usize,
) -> Result<LeEstimate> {
    assert!(n_steps >= 1 && n_replicas >= 1);
    let per: Result<Vec<f64>> = (0..n_replicas)
        .into_par_iter()
        .map(|r| {
            let nm = noise.with_stream(noise.stream_id + r as u64);
            let mut rng = nm.rng();
            let mut frame = TangentFrame::new(renorm_every);
            let mut p = q0;
            for _ in 0..n_steps {
                let w = nm.sample(&mut rng);
                frame.push(&jacobian_f_omega(map, p, w))?;
                p = apply_f_omega(map, p, w);
            }
            frame.renormalize()?;
            Ok(frame.log_norm() / n_steps as f64)
        })
        .collect();
    Ok(LeEstimate::from_replicas(per?, n_steps))
}

/// Top Lyapunov exponent as the time average of the one-step log growth
/// along the projectivized chain (the integrand of the stationary-measure
/// formula), after burn-in.
pub fn estimate_le_furstenberg(
    map: &CircleMap,
    noise: &NoiseModel,
    q0: ProjPoint,
    burn_in: usize,
    n_steps: usize,
    n_replicas: usize,
) -> LeEstimate {
    assert!(n_steps >= 1 && n_replicas >= 1);
    let per: Vec<f64> = (0..n_replicas)
        .into_par_iter()
        .map(|r| {
            let nm = noise.with_stream(noise.stream_id + r as u64);
            let mut rng = nm.rng();
            let mut q = q0;
            for _ in 0..burn_in {
                q = apply_fhat(map, q, nm.sample(&mut rng));
            }
            let mut sum = 0.0;
            for _ in 0..n_steps {
                let w = nm.sample(&mut rng);
                sum += log_growth(map, q, w);
                q = apply_fhat(map, q, w);
            }
            sum / n_steps as f64
        })
        .collect();
    LeEstimate::from_replicas(per, n_steps)
}

/// Singular-value data of an N-step tangent block.
///
/// `sigma1 * sigma2 = 1` up to accumulation error (area preservation);
/// `theta_minus_0` is the most contracted input direction, `theta_minus_n`
/// its image direction, both in [0, pi).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockSvd {
    pub sigma1: f64,
    pub sigma2: f64,
    pub log_sigma1: f64,
    pub theta_minus_0: f64,
    pub theta_minus_n: f64,
    pub n: usize,
}

/// Exact SVD of the N-step product along the orbit of `q0` driven by the
/// given noise block.
///
/// The product is accumulated with per-step scalar renormalization; the
/// expanding singular pair of the renormalized matrix is well conditioned
/// even when the product is numerically rank one, and the contracted pair
/// is recovered as its exact orthogonal complement.
pub fn block_svd(map: &CircleMap, omegas: &[f64], q0: TorusPoint, n: usize) -> Result<BlockSvd> {
    assert!(n >= 1 && omegas.len() >= n);
    let mut frame = TangentFrame::new(1);
    let mut p = q0;
    for &w in omegas.iter().take(n) {
        frame.push(&jacobian_f_omega(map, p, w))?;
        p = apply_f_omega(map, p, w);
    }
    frame.renormalize()?;
    let svd = frame.matrix.svd();
    let log_sigma1 = frame.log_norm_sum + svd.sigma1.ln();
    // Every one-step Jacobian has determinant exactly 1, so sigma2 is the
    // reciprocal of sigma1. (The determinant of the accumulated product is
    // not measurable directly: it is a cancellation at scale sigma1^2.)
    Ok(BlockSvd {
        sigma1: log_sigma1.exp(),
        sigma2: (-log_sigma1).exp(),
        log_sigma1,
        theta_minus_0: fold_angle(svd.v_angle + PI / 2.0),
        theta_minus_n: fold_angle(svd.u_angle + PI / 2.0),
        n,
    })
}

/// Report of the good/bad decomposition of the exponent integral for one
/// fixed noise block.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecompositionReport {
    /// Empirical value of the integral over the stationary measure.
    pub i_hat: f64,
    pub good_mass: f64,
    pub bad_mass: f64,
    /// log(m L / 4) - log(m ||psi'|| L^2 / 2) * bad_mass.
    pub lower_bound: f64,
    /// Block length prescribed by the proof, floor(m L^(1-beta)).
    pub n_prescribed: usize,
    /// Samples in the good set with integrand below log(m L / 4).
    pub good_violations: u64,
    /// Samples anywhere with integrand below -log(2 ||psi'|| L).
    pub global_violations: u64,
    pub n_samples: usize,
    pub m_used: f64,
}

/// Empirically evaluates I = int log ||dF_{w_{N+1}} u_{theta_N}|| d mu for
/// one fixed noise block (w_1..w_{N+1}), splitting the stationary samples
/// into the good set (block stays clear of the critical strips, endpoint
/// margin m, |tan theta_N| <= 1) and its complement.
#[allow(clippy::too_many_arguments)]
pub fn integral_decomposition(
    map: &CircleMap,
    crit: &CriticalData,
    noise: &NoiseModel,
    burn_in: usize,
    n_samples: usize,
    n_block: usize,
    beta: f64,
    p_param: f64,
    m_param: Option<f64>,
) -> Result<DecompositionReport> {
    assert!(n_block >= 1 && n_samples >= 1);
    let l = map.l;
    let m = m_param.unwrap_or(p_param / (4.0 * crit.k1 * crit.m1 as f64));
    let n_prescribed = (m * l.powf(1.0 - beta)).floor() as usize;
    let psi1_sup = map.sup_psi_deriv1(1 << 14);

    // The fixed block, drawn from a dedicated stream.
    let block_nm = noise.with_stream(noise.stream_id + 1_000_000);
    let mut brng = block_nm.rng();
    let omegas: Vec<f64> = (0..=n_block).map(|_| block_nm.sample(&mut brng)).collect();

    // Stationary samples from the chain itself.
    let mut rng = noise.rng();
    let mut q = ProjPoint::new(unit_f64(&mut rng), unit_f64(&mut rng), unit_f64(&mut rng) * PI);
    for _ in 0..burn_in {
        q = apply_fhat(map, q, noise.sample(&mut rng));
    }

    let dist_bound = crit.k1 * l.powf(-1.0 + beta);
    let good_floor = (0.25 * m * l).ln();
    let global_floor = -(2.0 * psi1_sup * l).ln();

    let mut good = 0u64;
    let mut good_violations = 0u64;
    let mut global_violations = 0u64;
    let mut i_sum = 0.0;
    for _ in 0..n_samples {
        q = apply_fhat(map, q, noise.sample(&mut rng));

        // Push the sample through the fixed block.
        let mut z = q;
        let mut in_gn = true;
        for &w in omegas.iter().take(n_block) {
            if circ_dist_to_set(crate::torus::mod1(z.pos.x + w), &crit.cprime) < dist_bound {
                in_gn = false;
            }
            z = apply_fhat(map, z, w);
        }
        let w_last = omegas[n_block];
        let endpoint_ok =
            circ_dist_to_set(crate::torus::mod1(z.pos.x + w_last), &crit.cprime) >= crit.k1 * m;
        let angle_ok = z.theta.tan().abs() <= 1.0;

        let integrand = log_growth(map, z, w_last);
        i_sum += integrand;
        if in_gn && endpoint_ok && angle_ok {
            good += 1;
            if integrand < good_floor {
                good_violations += 1;
            }
        }
        if integrand < global_floor {
            global_violations += 1;
        }
    }

    let good_mass = good as f64 / n_samples as f64;
    let bad_mass = 1.0 - good_mass;
    let lower_bound = good_floor - (m * psi1_sup * l * l / 2.0).ln() * bad_mass;
    Ok(DecompositionReport {
        i_hat: i_sum / n_samples as f64,
        good_mass,
        bad_mass,
        lower_bound,
        n_prescribed,
        good_violations,
        global_violations,
        n_samples,
        m_used: m,
    })
}
