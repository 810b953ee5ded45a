//! Seeded generation of annihilation-pair kinematics.
//!
//! The joint density factorizes exactly: both polar angles follow the
//! azimuth-averaged Klein-Nishina marginal F_E(theta) sin(theta), and the
//! azimuthal difference is then drawn from 1 - amp * cos(2 dphi) with
//! amp = kappa * A(E1, theta1) * A(E2, theta2). This keeps the amplitude
//! pluggable for the correlation-retention models while reproducing the
//! full two-photon density for kappa = 1.
//!
//! Every consumer owns an independent ChaCha stream identified by
//! (master_seed, stream_id), so sequences are reproducible bit-for-bit
//! regardless of how events are partitioned over workers.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hist::wrap_delta_phi;
use crate::physics::{self, ELECTRON_REST_ENERGY_KEV};

/// Identifies one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

/// Stream id namespaces; event streams use the event id directly.
pub const STREAM_EVENTS_BASE: u64 = 0;
pub const STREAM_MIXING: u64 = 1 << 62;

impl StreamSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        StreamSpec {
            master_seed,
            stream_id,
        }
    }

    /// Independent generator for this (seed, stream) pair.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Ground-truth kinematics of one annihilation pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTruth {
    /// Energy of the photon entering the first polarimeter; always 511 keV.
    pub e1_kev: f64,
    /// Energy of the second photon after the (optional) prior scatter.
    pub e2_kev: f64,
    /// True prior-scatter polar angle in degrees; 0 if no prior scatter.
    pub theta_scat_deg: f64,
    /// Polarimeter Compton scattering angles in degrees.
    pub theta1_deg: f64,
    pub theta2_deg: f64,
    /// Azimuths in [-180, 180) degrees.
    pub phi1_deg: f64,
    pub phi2_deg: f64,
    /// Correlation retention used for this pair.
    pub kappa: f64,
    /// Statistical weight; 1.0 unless importance sampling is added.
    pub weight: f64,
}

impl PairTruth {
    pub fn delta_phi_deg(&self) -> f64 {
        wrap_delta_phi(self.phi1_deg - self.phi2_deg)
    }
}

// --- polar-angle marginal ----------------------------------------------------

const INV_CDF_POINTS: usize = 2048;
const CDF_GRID_POINTS: usize = 8192;

/// Samples theta from F_E(theta) sin(theta) on a window via a tabulated
/// inverse CDF (2048 points, linear interpolation).
#[derive(Debug, Clone)]
pub struct ThetaMarginalSampler {
    energy_kev: f64,
    lo_deg: f64,
    hi_deg: f64,
    /// CDF values on the uniform theta grid, for oracle checks.
    cdf: Vec<f64>,
    /// theta at uniformly spaced quantiles.
    inv_cdf: Vec<f64>,
}

impl ThetaMarginalSampler {
    /// Full-range sampler on [0, 180] degrees.
    pub fn new(energy_kev: f64) -> Result<Self> {
        Self::with_window(energy_kev, (0.0, 180.0))
    }

    /// Sampler restricted to a polar window (used to pin angular ranges).
    pub fn with_window(energy_kev: f64, window: (f64, f64)) -> Result<Self> {
        let (lo, hi) = window;
        if energy_kev <= 0.0 {
            return Err(Error::domain("energy must be positive"));
        }
        if !(0.0..=180.0).contains(&lo) || !(0.0..=180.0).contains(&hi) || lo >= hi {
            return Err(Error::domain(format!(
                "theta window [{lo}, {hi}] deg is empty or outside [0, 180]"
            )));
        }
        let step = (hi - lo) / (CDF_GRID_POINTS - 1) as f64;
        let density: Vec<f64> = (0..CDF_GRID_POINTS)
            .map(|i| {
                let t = lo + i as f64 * step;
                physics::kn_factors(energy_kev, t).f * t.to_radians().sin()
            })
            .collect();
        // cumulative trapezoid
        let mut cdf = Vec::with_capacity(CDF_GRID_POINTS);
        cdf.push(0.0);
        let mut acc = 0.0;
        for i in 1..CDF_GRID_POINTS {
            acc += 0.5 * (density[i - 1] + density[i]) * step;
            cdf.push(acc);
        }
        let total = *cdf.last().unwrap();
        for v in &mut cdf {
            *v /= total;
        }
        // invert onto uniform quantiles
        let mut inv_cdf = Vec::with_capacity(INV_CDF_POINTS);
        let mut j = 0usize;
        for k in 0..INV_CDF_POINTS {
            let u = k as f64 / (INV_CDF_POINTS - 1) as f64;
            while j + 1 < CDF_GRID_POINTS && cdf[j + 1] < u {
                j += 1;
            }
            let (c0, c1) = (cdf[j], cdf[j + 1]);
            let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
            inv_cdf.push(lo + (j as f64 + frac.clamp(0.0, 1.0)) * step);
        }
        Ok(ThetaMarginalSampler {
            energy_kev,
            lo_deg: lo,
            hi_deg: hi,
            cdf,
            inv_cdf,
        })
    }

    pub fn energy_kev(&self) -> f64 {
        self.energy_kev
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.random();
        let pos = u * (INV_CDF_POINTS - 1) as f64;
        let i = (pos as usize).min(INV_CDF_POINTS - 2);
        let frac = pos - i as f64;
        self.inv_cdf[i] + frac * (self.inv_cdf[i + 1] - self.inv_cdf[i])
    }

    /// Tabulated CDF at theta, linearly interpolated (test oracle).
    pub fn cdf(&self, theta_deg: f64) -> f64 {
        if theta_deg <= self.lo_deg {
            return 0.0;
        }
        if theta_deg >= self.hi_deg {
            return 1.0;
        }
        let step = (self.hi_deg - self.lo_deg) / (CDF_GRID_POINTS - 1) as f64;
        let pos = (theta_deg - self.lo_deg) / step;
        let i = (pos as usize).min(CDF_GRID_POINTS - 2);
        let frac = pos - i as f64;
        self.cdf[i] + frac * (self.cdf[i + 1] - self.cdf[i])
    }
}

// --- azimuthal difference ----------------------------------------------------

/// Draw delta-phi in degrees from density proportional to 1 - amp * cos(2 dphi)
/// on [-180, 180), by Newton inversion of the analytic CDF.
pub fn sample_delta_phi(amp: f64, rng: &mut impl Rng) -> f64 {
    debug_assert!((0.0..1.0).contains(&amp) || amp == 0.0);
    let u: f64 = rng.random();
    delta_phi_quantile(amp, u)
}

/// Quantile function of the modulated azimuthal density (exposed for tests).
pub fn delta_phi_quantile(amp: f64, u: f64) -> f64 {
    use std::f64::consts::PI;
    // CDF(x) = ((x + pi) - (amp/2) sin 2x) / (2 pi) on [-pi, pi)
    let target = 2.0 * PI * u - PI;
    let mut x = target; // exact for amp = 0
    let (mut lo, mut hi) = (-PI, PI);
    for _ in 0..20 {
        let g = x - 0.5 * amp * (2.0 * x).sin() - target;
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let dg = 1.0 - amp * (2.0 * x).cos();
        let mut next = x - g / dg;
        if !(lo..=hi).contains(&next) {
            next = 0.5 * (lo + hi); // bisection fallback
        }
        if (next - x).abs() < 1e-10 {
            x = next;
            break;
        }
        x = next;
    }
    wrap_delta_phi(x.to_degrees())
}

// --- pair model ----------------------------------------------------------------

/// Kinematic model for pair generation.
#[derive(Debug, Clone, Copy)]
pub struct PairModel {
    /// Correlation retention: 1 entangled, 0.5 separable-equivalent, 0 decohered.
    pub kappa: f64,
    /// Nominal prior-scatter angle in degrees; 0 disables the prior scatter.
    pub theta_scat_deg: f64,
    /// Half-width of the prior-scatter acceptance cone in degrees.
    /// 0 pins the scatter exactly at the nominal angle.
    pub cone_half_width_deg: f64,
}

impl PairModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::config(format!(
                "model.kappa = {} outside [0, 1]",
                self.kappa
            )));
        }
        if !(0.0..=180.0).contains(&self.theta_scat_deg) {
            return Err(Error::config(format!(
                "model.theta_scat_deg = {} outside [0, 180]",
                self.theta_scat_deg
            )));
        }
        if self.cone_half_width_deg < 0.0 {
            return Err(Error::config(
                "prior-scatter acceptance cone has negative width",
            ));
        }
        if self.theta_scat_deg > 0.0 && self.theta_scat_deg - self.cone_half_width_deg >= 180.0 {
            return Err(Error::config("prior-scatter acceptance cone is empty"));
        }
        Ok(())
    }
}

/// Energy quantization step for the cached theta2 marginal tables.
const E2_TABLE_STEP_KEV: f64 = 0.25;

/// Precomputed generator for annihilation pairs under one model.
#[derive(Debug, Clone)]
pub struct PairSampler {
    model: PairModel,
    theta1: ThetaMarginalSampler,
    /// theta2 tables on a quantized energy grid covering the prior-scatter cone.
    theta2_tables: Vec<ThetaMarginalSampler>,
    e2_grid_min_kev: f64,
    /// Prior-scatter cone bounds in degrees (empty if no prior scatter).
    cone: Option<(f64, f64)>,
    /// Envelope of F(theta) sin(theta) over the cone, for rejection sampling.
    cone_density_max: f64,
}

impl PairSampler {
    pub fn new(model: PairModel) -> Result<Self> {
        model.validate()?;
        let theta1 = ThetaMarginalSampler::new(ELECTRON_REST_ENERGY_KEV)?;
        let prior = model.theta_scat_deg > 0.0;
        let (cone, cone_density_max, e2_grid_min_kev, theta2_tables) = if prior {
            let lo = (model.theta_scat_deg - model.cone_half_width_deg).max(1e-6);
            let hi = (model.theta_scat_deg + model.cone_half_width_deg).min(180.0);
            let mut dmax = 0.0f64;
            let steps = 512;
            for i in 0..=steps {
                let t = lo + (hi - lo) * i as f64 / steps as f64;
                let d = physics::kn_factors(ELECTRON_REST_ENERGY_KEV, t).f * t.to_radians().sin();
                dmax = dmax.max(d);
            }
            // E2 decreases with theta_scat: grid spans [E2(hi), E2(lo)]
            let e_min = physics::scattered_energy(ELECTRON_REST_ENERGY_KEV, hi);
            let e_max = physics::scattered_energy(ELECTRON_REST_ENERGY_KEV, lo);
            let n_tables = ((e_max - e_min) / E2_TABLE_STEP_KEV).ceil() as usize + 1;
            let tables = (0..n_tables)
                .map(|i| ThetaMarginalSampler::new(e_min + i as f64 * E2_TABLE_STEP_KEV))
                .collect::<Result<Vec<_>>>()?;
            (Some((lo, hi)), dmax * 1.0001, e_min, tables)
        } else {
            let t = ThetaMarginalSampler::new(ELECTRON_REST_ENERGY_KEV)?;
            (None, 0.0, ELECTRON_REST_ENERGY_KEV, vec![t])
        };
        Ok(PairSampler {
            model,
            theta1,
            theta2_tables,
            e2_grid_min_kev,
            cone,
            cone_density_max,
        })
    }

    pub fn model(&self) -> &PairModel {
        &self.model
    }

    fn theta2_table(&self, e2_kev: f64) -> &ThetaMarginalSampler {
        let idx = ((e2_kev - self.e2_grid_min_kev) / E2_TABLE_STEP_KEV).round() as isize;
        let idx = idx.clamp(0, self.theta2_tables.len() as isize - 1) as usize;
        &self.theta2_tables[idx]
    }

    /// Prior-scatter angle from the unpolarized Klein-Nishina density,
    /// rejection-sampled inside the acceptance cone.
    fn sample_theta_scat(&self, rng: &mut impl Rng) -> f64 {
        let (lo, hi) = self.cone.expect("called only with a prior scatter");
        if hi - lo < 1e-12 {
            return self.model.theta_scat_deg;
        }
        loop {
            let t = rng.random_range(lo..hi);
            let d = physics::kn_factors(ELECTRON_REST_ENERGY_KEV, t).f * t.to_radians().sin();
            if rng.random::<f64>() * self.cone_density_max < d {
                return t;
            }
        }
    }

    /// Draw one pair. The caller provides the per-event stream.
    pub fn sample(&self, rng: &mut impl Rng) -> PairTruth {
        let (theta_scat, e2) = match self.cone {
            Some(_) => {
                let t = self.sample_theta_scat(rng);
                (t, physics::scattered_energy(ELECTRON_REST_ENERGY_KEV, t))
            }
            None => (0.0, ELECTRON_REST_ENERGY_KEV),
        };
        let theta1 = self.theta1.sample(rng);
        let theta2 = self.theta2_table(e2).sample(rng);
        let phi1 = rng.random_range(-180.0..180.0);
        let amp = self.model.kappa
            * physics::analyzing_power(ELECTRON_REST_ENERGY_KEV, theta1)
            * physics::analyzing_power(e2, theta2);
        let delta_phi = sample_delta_phi(amp, rng);
        PairTruth {
            e1_kev: ELECTRON_REST_ENERGY_KEV,
            e2_kev: e2,
            theta_scat_deg: theta_scat,
            theta1_deg: theta1,
            theta2_deg: theta2,
            phi1_deg: phi1,
            phi2_deg: wrap_delta_phi(phi1 - delta_phi),
            kappa: self.model.kappa,
            weight: 1.0,
        }
    }
}
