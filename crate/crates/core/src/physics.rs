//! Closed-form Compton polarimetry formulas and a deterministic quadrature
//! oracle for finite-acceptance predictions.
//!
//! The two-photon cross-section shape is
//! `F(theta1)*F(theta2) - G(theta1)*G(theta2)*cos(2*dphi)` with
//! `F = (2 + (1-cos)^3) / (2-cos)^3` and `G = sin^2 / (2-cos)^2` for photons
//! at the electron rest energy. The overall `r0^4/16` normalization is
//! omitted: every downstream use is a ratio or a normalized density.
//!
//! Angles are degrees at all public interfaces.

use crate::error::{Error, Result};
use crate::hist;

/// Electron rest energy in keV; annihilation photons start exactly here.
pub const ELECTRON_REST_ENERGY_KEV: f64 = 511.0;

/// FWHM of a Gaussian in units of sigma.
pub const FWHM_TO_SIGMA: f64 = 2.3548;

/// Physical constants entering the cross-section formulas.
///
/// `classical_electron_radius` only sets the absolute normalization, which
/// cancels everywhere in this crate; it is kept for documentation.
#[derive(Debug, Clone, Copy)]
pub struct PhysicsConstants {
    pub electron_rest_energy_kev: f64,
    pub classical_electron_radius: f64,
}

impl Default for PhysicsConstants {
    fn default() -> Self {
        PhysicsConstants {
            electron_rest_energy_kev: ELECTRON_REST_ENERGY_KEV,
            classical_electron_radius: 1.0,
        }
    }
}

/// Kinematic factors of the two-photon cross section at one polar angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicFactors {
    pub f: f64,
    pub g: f64,
}

/// Polar scattering angles of both photons and their azimuthal difference.
#[derive(Debug, Clone, Copy)]
pub struct ScatterAngles {
    theta1_deg: f64,
    theta2_deg: f64,
    delta_phi_deg: f64,
}

impl ScatterAngles {
    /// Delta-phi is wrapped into [-180, 180); the polar angles must lie in [0, 180].
    pub fn new(theta1_deg: f64, theta2_deg: f64, delta_phi_deg: f64) -> Result<Self> {
        check_polar(theta1_deg)?;
        check_polar(theta2_deg)?;
        if !delta_phi_deg.is_finite() {
            return Err(Error::domain("delta_phi must be finite"));
        }
        Ok(ScatterAngles {
            theta1_deg,
            theta2_deg,
            delta_phi_deg: hist::wrap_delta_phi(delta_phi_deg),
        })
    }

    pub fn theta1_deg(&self) -> f64 {
        self.theta1_deg
    }

    pub fn theta2_deg(&self) -> f64 {
        self.theta2_deg
    }

    pub fn delta_phi_deg(&self) -> f64 {
        self.delta_phi_deg
    }
}

/// Modulation factor and the derived 90-vs-0 degree rate ratio.
#[derive(Debug, Clone, Copy)]
pub struct TheoryPrediction {
    pub mu: f64,
    pub r: f64,
}

fn check_polar(theta_deg: f64) -> Result<()> {
    if !(0.0..=180.0).contains(&theta_deg) {
        return Err(Error::domain(format!(
            "polar angle {theta_deg} deg outside [0, 180]"
        )));
    }
    Ok(())
}

/// F and G of the two-photon cross section, valid for 511 keV photons.
pub fn kinematic_factors(theta_deg: f64) -> Result<KinematicFactors> {
    check_polar(theta_deg)?;
    let c = theta_deg.to_radians().cos();
    let s2 = theta_deg.to_radians().sin().powi(2);
    let d = 2.0 - c;
    Ok(KinematicFactors {
        f: (2.0 + (1.0 - c).powi(3)) / d.powi(3),
        g: s2 / (d * d),
    })
}

/// The bracket of the double-Compton cross section, without the r0^4/16 prefactor.
///
/// Strictly positive because G < F everywhere.
pub fn joint_cross_section_shape(angles: &ScatterAngles) -> f64 {
    let k1 = kinematic_factors(angles.theta1_deg).expect("validated angle");
    let k2 = kinematic_factors(angles.theta2_deg).expect("validated angle");
    let cos2dphi = (2.0 * angles.delta_phi_deg.to_radians()).cos();
    k1.f * k2.f - k1.g * k2.g * cos2dphi
}

/// Compton-scattered photon energy in keV.
pub fn scattered_energy(e_kev: f64, theta_deg: f64) -> f64 {
    debug_assert!(e_kev > 0.0);
    let c = theta_deg.to_radians().cos();
    e_kev / (1.0 + (e_kev / ELECTRON_REST_ENERGY_KEV) * (1.0 - c))
}

/// Ratio of scattered to incident photon energy.
pub fn energy_ratio(e_kev: f64, theta_deg: f64) -> f64 {
    scattered_energy(e_kev, theta_deg) / e_kev
}

/// Klein-Nishina kinematic factors at an arbitrary incident energy:
/// `f = eps^2 * (eps + 1/eps - sin^2 theta)`, `g = eps^2 * sin^2 theta`.
///
/// At 511 keV these reduce exactly to [`kinematic_factors`].
pub fn kn_factors(e_kev: f64, theta_deg: f64) -> KinematicFactors {
    let eps = energy_ratio(e_kev, theta_deg);
    let s2 = theta_deg.to_radians().sin().powi(2);
    let e2 = eps * eps;
    KinematicFactors {
        f: e2 * (eps + 1.0 / eps - s2),
        g: e2 * s2,
    }
}

/// Analyzing power A(E, theta) = sin^2 / (eps + 1/eps - sin^2), in [0, 1).
pub fn analyzing_power(e_kev: f64, theta_deg: f64) -> f64 {
    let eps = energy_ratio(e_kev, theta_deg);
    let s2 = theta_deg.to_radians().sin().powi(2);
    s2 / (eps + 1.0 / eps - s2)
}

/// Polar angle maximizing the analyzing power at the given energy.
///
/// Golden-section search on [1, 179] degrees, converged to 0.01 degrees.
pub fn optimal_theta(e_kev: f64) -> f64 {
    debug_assert!(e_kev > 0.0);
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (1.0_f64, 179.0_f64);
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = analyzing_power(e_kev, c);
    let mut fd = analyzing_power(e_kev, d);
    while (b - a) > 1e-3 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = analyzing_power(e_kev, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = analyzing_power(e_kev, d);
        }
    }
    0.5 * (a + b)
}

/// Predicted modulation for a pair scattering at fixed polar angles.
///
/// `kappa` is the correlation-retention parameter: 1 reproduces the entangled
/// prediction, 0.5 the separable state, 0 full decoherence.
pub fn theory_modulation(
    e1_kev: f64,
    theta1_deg: f64,
    e2_kev: f64,
    theta2_deg: f64,
    kappa: f64,
) -> TheoryPrediction {
    debug_assert!((0.0..=1.0).contains(&kappa));
    let mu = kappa * analyzing_power(e1_kev, theta1_deg) * analyzing_power(e2_kev, theta2_deg);
    TheoryPrediction {
        mu,
        r: (1.0 + mu) / (1.0 - mu),
    }
}

/// R = (1+mu)/(1-mu) with first-order error propagation.
pub fn ratio_r(mu: f64, sigma_mu: f64) -> Result<(f64, f64)> {
    if !(-1.0..1.0).contains(&mu) {
        return Err(Error::domain(format!("mu = {mu} outside (-1, 1)")));
    }
    let r = (1.0 + mu) / (1.0 - mu);
    let sigma_r = 2.0 * sigma_mu / ((1.0 - mu) * (1.0 - mu));
    Ok((r, sigma_r))
}

/// Invert R = (1+mu)/(1-mu).
pub fn mu_from_r(r: f64) -> f64 {
    (r - 1.0) / (r + 1.0)
}

// --- quadrature -------------------------------------------------------------

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on P_n.
pub(crate) fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 2);
    let mut out = Vec::with_capacity(n);
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess for the i-th positive root
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n and P_n' by the three-term recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
        if !(n % 2 == 1 && i == 0 && x.abs() < 1e-12) {
            out.push((-x, w));
        }
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out.truncate(n);
    out
}

/// Integrate f over [a, b] with a fixed 64-node Gauss-Legendre rule.
fn gl_integrate(a: f64, b: f64, nodes: &[(f64, f64)], f: impl Fn(f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes
        .iter()
        .map(|&(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Finite-acceptance average of the two-photon density over polar-angle windows.
#[derive(Debug, Clone)]
pub struct AcceptanceTable {
    pub prediction: TheoryPrediction,
    /// Per-axis F-weighted mean analyzing power.
    pub a_mean: [f64; 2],
    /// Per-axis integral of F(theta) sin(theta) over the window (solid-angle mass).
    pub f_mass: [f64; 2],
    /// Delta-phi bin edges (shared convention with the analysis histograms).
    pub bin_edges: Vec<f64>,
    /// Probability mass per delta-phi bin; sums to 1.
    pub bin_prob: Vec<f64>,
}

fn window_ratio(e_kev: f64, window: (f64, f64), nodes: &[(f64, f64)]) -> Result<(f64, f64)> {
    let (lo, hi) = window;
    if !(0.0..=180.0).contains(&lo) || !(0.0..=180.0).contains(&hi) || lo > hi {
        return Err(Error::domain(format!(
            "theta window [{lo}, {hi}] deg is empty or outside [0, 180]"
        )));
    }
    if hi - lo < 1e-12 {
        // degenerate window: pointwise analyzing power, unit mass
        return Ok((analyzing_power(e_kev, lo), 1.0));
    }
    let f_int = gl_integrate(lo, hi, nodes, |t| {
        kn_factors(e_kev, t).f * t.to_radians().sin()
    });
    let g_int = gl_integrate(lo, hi, nodes, |t| {
        kn_factors(e_kev, t).g * t.to_radians().sin()
    });
    Ok((g_int / f_int, f_int))
}

/// Deterministic oracle: window-averaged modulation and the binned delta-phi density.
///
/// The joint density factorizes as F1*F2*(1 - A1*A2*cos(2*dphi)), so the
/// effective modulation over a window is kappa times the product of the
/// F sin(theta)-weighted mean analyzing powers; the ratio is evaluated with a
/// 64-node Gauss-Legendre rule per axis. A degenerate (zero-width) window
/// reduces to the pointwise value.
pub fn integrate_acceptance(
    theta1_window: (f64, f64),
    theta2_window: (f64, f64),
    e1_kev: f64,
    e2_kev: f64,
    kappa: f64,
    n_bins: usize,
) -> Result<AcceptanceTable> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::domain(format!("kappa = {kappa} outside [0, 1]")));
    }
    let nodes = gauss_legendre(64);
    let (a1, m1) = window_ratio(e1_kev, theta1_window, &nodes)?;
    let (a2, m2) = window_ratio(e2_kev, theta2_window, &nodes)?;
    let mu = kappa * a1 * a2;
    let edges = hist::delta_phi_bin_edges(n_bins);
    // integral of (1 - mu cos 2phi)/(2 pi) over each bin
    let bin_prob = edges
        .windows(2)
        .map(|w| {
            let (lo, hi) = (w[0].to_radians(), w[1].to_radians());
            ((hi - lo) - 0.5 * mu * ((2.0 * hi).sin() - (2.0 * lo).sin()))
                / (2.0 * std::f64::consts::PI)
        })
        .collect();
    Ok(AcceptanceTable {
        prediction: TheoryPrediction {
            mu,
            r: (1.0 + mu) / (1.0 - mu),
        },
        a_mean: [a1, a2],
        f_mass: [m1, m2],
        bin_edges: edges,
        bin_prob,
    })
}
