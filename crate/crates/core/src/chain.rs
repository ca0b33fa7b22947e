//! Noise sampling and orbit simulation of the position chain and the
//! projectivized chain, empirical measures, and the statistical checks of
//! stationarity, ergodicity and measure concentration.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar_maps::{CircleMap, CriticalData};
use crate::stats;
use crate::torus::{apply_f_omega, apply_fhat, ProjPoint, TorusPoint, PI};

/// I.i.d. uniform noise on [-eps, eps], driven by a counter-based stream
/// cipher so that (seed, stream_id) pins the sequence bit-for-bit and
/// distinct stream ids give provably disjoint streams for parallel workers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub epsilon: f64,
    pub seed: u64,
    pub stream_id: u64,
}

impl NoiseModel {
    pub fn new(epsilon: f64, seed: u64) -> Self {
        assert!(epsilon > 0.0 && epsilon <= 0.5, "epsilon must lie in (0, 1/2]");
        NoiseModel { epsilon, seed, stream_id: 0 }
    }

    pub fn with_stream(&self, stream_id: u64) -> Self {
        NoiseModel { stream_id, ..*self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream_id);
        r
    }

    /// One noise value omega ~ Uniform[-eps, eps].
    #[inline]
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.epsilon * (2.0 * unit_f64(rng) - 1.0)
    }
}

/// Uniform f64 in [0,1) from the top 53 bits of a u64.
#[inline]
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
}

/// Length-n trajectory of the projectivized chain together with the noise
/// used at each step; entry i holds (state after step i+1, omega_{i+1}).
pub fn sample_orbit(
    map: &CircleMap,
    noise: &NoiseModel,
    q0: ProjPoint,
    n: usize,
) -> Vec<(ProjPoint, f64)> {
    assert!(n >= 1);
    let mut rng = noise.rng();
    let mut q = q0;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let w = noise.sample(&mut rng);
        q = apply_fhat(map, q, w);
        out.push((q, w));
    }
    out
}

/// Report of a chi-square test.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StationarityReport {
    pub chi2: f64,
    pub p_value: f64,
    pub dof: f64,
}

/// Pushes `n_samples` uniform points through two random steps and tests
/// the result for uniformity on an (nx x ny) grid. Lebesgue measure is
/// stationary for the position chain, so the statistic must be central.
pub fn stationarity_test(
    map: &CircleMap,
    noise: &NoiseModel,
    n_samples: usize,
    grid: (usize, usize),
) -> StationarityReport {
    assert!(n_samples >= 100_000, "the chi-square needs at least 10^5 samples");
    let (nx, ny) = grid;
    let mut rng = noise.rng();
    let mut counts = vec![0u64; nx * ny];
    for _ in 0..n_samples {
        let mut p = TorusPoint::new(unit_f64(&mut rng), unit_f64(&mut rng));
        for _ in 0..2 {
            let w = noise.sample(&mut rng);
            p = apply_f_omega(map, p, w);
        }
        let ix = ((p.x * nx as f64) as usize).min(nx - 1);
        let iy = ((p.y * ny as f64) as usize).min(ny - 1);
        counts[iy * nx + ix] += 1;
    }
    let (chi2, p_value) = stats::chi2_uniform(&counts);
    StationarityReport { chi2, p_value, dof: (nx * ny - 1) as f64 }
}

/// Histogram of the projectivized chain over T^2 x [0, pi).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub nx: usize,
    pub ny: usize,
    pub ntheta: usize,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl EmpiricalMeasure {
    pub fn new(nx: usize, ny: usize, ntheta: usize) -> Self {
        EmpiricalMeasure { nx, ny, ntheta, counts: vec![0; nx * ny * ntheta], total: 0 }
    }

    #[inline]
    pub fn bin_index(&self, q: &ProjPoint) -> usize {
        let ix = ((q.pos.x * self.nx as f64) as usize).min(self.nx - 1);
        let iy = ((q.pos.y * self.ny as f64) as usize).min(self.ny - 1);
        let it = ((q.theta / PI * self.ntheta as f64) as usize).min(self.ntheta - 1);
        (it * self.ny + iy) * self.nx + ix
    }

    pub fn add(&mut self, q: &ProjPoint) {
        let i = self.bin_index(q);
        self.counts[i] += 1;
        self.total += 1;
    }

    /// Commutative merge of worker histograms.
    pub fn merge(&mut self, other: &EmpiricalMeasure) {
        assert_eq!(
            (self.nx, self.ny, self.ntheta),
            (other.nx, other.ny, other.ntheta),
            "grid mismatch"
        );
        for (a, b) in self.counts.iter_mut().zip(other.counts.iter()) {
            *a += b;
        }
        self.total += other.total;
    }

    /// Mass of a bin box given half-open bin ranges in each axis.
    pub fn box_mass(
        &self,
        x_bins: std::ops::Range<usize>,
        y_bins: std::ops::Range<usize>,
        t_bins: std::ops::Range<usize>,
    ) -> f64 {
        let mut c = 0u64;
        for it in t_bins {
            for iy in y_bins.clone() {
                for ix in x_bins.clone() {
                    c += self.counts[(it * self.ny + iy) * self.nx + ix];
                }
            }
        }
        c as f64 / self.total as f64
    }

    /// Lebesgue volume of the same bin box (theta measured in radians, so
    /// the whole space has volume pi).
    pub fn box_leb(
        &self,
        x_bins: &std::ops::Range<usize>,
        y_bins: &std::ops::Range<usize>,
        t_bins: &std::ops::Range<usize>,
    ) -> f64 {
        (x_bins.len() as f64 / self.nx as f64)
            * (y_bins.len() as f64 / self.ny as f64)
            * (t_bins.len() as f64 * PI / self.ntheta as f64)
    }

    /// Marginal counts over theta bins.
    pub fn theta_marginal(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.ntheta];
        for it in 0..self.ntheta {
            for iy in 0..self.ny {
                for ix in 0..self.nx {
                    out[it] += self.counts[(it * self.ny + iy) * self.nx + ix];
                }
            }
        }
        out
    }

    /// Projection to the torus grid.
    pub fn t2_marginal(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.nx * self.ny];
        for it in 0..self.ntheta {
            for i in 0..self.nx * self.ny {
                out[i] += self.counts[it * self.nx * self.ny + i];
            }
        }
        out
    }

    /// Fraction of samples with |tan theta| <= 1, i.e. within pi/4 of the
    /// horizontal. Bins are classified by their centers.
    pub fn mass_near_horizontal(&self) -> f64 {
        let mut c = 0u64;
        for (it, n) in self.theta_marginal().iter().enumerate() {
            let center = (it as f64 + 0.5) * PI / self.ntheta as f64;
            if center.tan().abs() <= 1.0 {
                c += n;
            }
        }
        c as f64 / self.total as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("ix,iy,itheta,count\r\n");
        for it in 0..self.ntheta {
            for iy in 0..self.ny {
                for ix in 0..self.nx {
                    let c = self.counts[(it * self.ny + iy) * self.nx + ix];
                    if c > 0 {
                        s.push_str(&format!("{ix},{iy},{it},{c}\r\n"));
                    }
                }
            }
        }
        s
    }
}

/// How the empirical measure is accumulated: one long orbit (licensed by
/// ergodicity of the chain) or an ensemble of shorter independent orbits
/// for cross-validation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum MeasureMode {
    SingleOrbit,
    Ensemble { n_orbits: usize },
}

/// Histogram of the projectivized chain after burn-in; the empirical
/// stand-in for a stationary measure of the chain.
pub fn empirical_proj_measure(
    map: &CircleMap,
    noise: &NoiseModel,
    burn_in: usize,
    n_samples: usize,
    grid: (usize, usize, usize),
    mode: MeasureMode,
) -> EmpiricalMeasure {
    assert!(burn_in >= 1000, "burn_in must be >= 10^3");
    let mut measure = EmpiricalMeasure::new(grid.0, grid.1, grid.2);
    let orbits = match mode {
        MeasureMode::SingleOrbit => 1,
        MeasureMode::Ensemble { n_orbits } => n_orbits.max(1),
    };
    let per_orbit = n_samples / orbits;
    for k in 0..orbits {
        let nm = noise.with_stream(noise.stream_id + k as u64);
        let mut rng = nm.rng();
        let mut q = ProjPoint::new(unit_f64(&mut rng), unit_f64(&mut rng), unit_f64(&mut rng) * PI);
        for _ in 0..burn_in {
            let w = nm.sample(&mut rng);
            q = apply_fhat(map, q, w);
        }
        for _ in 0..per_orbit {
            let w = nm.sample(&mut rng);
            q = apply_fhat(map, q, w);
            measure.add(&q);
        }
    }
    measure
}

/// Result of fitting the concentration-bound constant on one measure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConcentrationReport {
    /// Fitted constant: max over the box family of mu(A) / shape(A).
    pub c_hat: f64,
    /// mu(A) at the maximizing box.
    pub lhs: f64,
    /// L^(-1/4) (1 + Leb(A) / (eps^3 L^2)) at the maximizing box.
    pub rhs_shape: f64,
    /// Band mass mu(theta in [pi/4, 3pi/4]) for the L-sweep diagnostics.
    pub band_mass: f64,
    pub boxes_tested: usize,
}

/// Evaluates the a-priori concentration bound
/// mu(A) <= C L^(-1/4) (1 + Leb(A) / (eps^3 L^2)) on a family of grid boxes
/// inside the band theta in [pi/4, 3pi/4] and fits the constant as the
/// largest observed ratio.
///
/// The family consists of small (x, theta) boxes spanning all of y (the
/// stationary measure projects to Lebesgue, so y resolves nothing). The
/// fitted constant estimates the density cap of the bound, so the boxes
/// must sit in the regime Leb(A) << eps^3 L^2 where the additive 1
/// dominates; with Leb(A) comparable to eps^3 L^2 or larger the bound is
/// slack by construction and the fit would only track that slack. Boxes
/// with fewer than 50 samples are excluded as statistically empty.
pub fn concentration_check(
    measure: &EmpiricalMeasure,
    _map: &CircleMap,
    _crit: &CriticalData,
    l: f64,
    eps: f64,
) -> ConcentrationReport {
    let (nx, ny, nt) = (measure.nx, measure.ny, measure.ntheta);
    // Theta bins fully inside the band.
    let t_lo = (nt as f64 * 0.25).ceil() as usize;
    let t_hi = (nt as f64 * 0.75).floor() as usize;

    let mut best = ConcentrationReport {
        c_hat: 0.0,
        lhs: 0.0,
        rhs_shape: f64::INFINITY,
        band_mass: measure.box_mass(0..nx, 0..ny, t_lo..t_hi),
        boxes_tested: 0,
    };
    let min_mass = 50.0 / measure.total as f64;

    let bx = (nx / 32).max(1);
    let bt = ((t_hi - t_lo) / 16).max(1);
    let mut t = t_lo;
    while t < t_hi {
        let thi = (t + bt).min(t_hi);
        let mut x = 0;
        while x < nx {
            let xhi = (x + bx).min(nx);
            let mass = measure.box_mass(x..xhi, 0..ny, t..thi);
            best.boxes_tested += 1;
            if mass >= min_mass {
                let leb = measure.box_leb(&(x..xhi), &(0..ny), &(t..thi));
                let shape = l.powf(-0.25) * (1.0 + leb / (eps.powi(3) * l * l));
                let ratio = mass / shape;
                if ratio > best.c_hat {
                    best.c_hat = ratio;
                    best.lhs = mass;
                    best.rhs_shape = shape;
                }
            }
            x = xhi;
        }
        t = thi;
    }
    best
}
