//! Geometry, simplified transport and digitization.
//!
//! Each polarimeter photon undergoes at most two interactions: one Compton
//! scatter at an exponentially sampled depth in the entry pixel, then full
//! photoabsorption of the scattered photon one exponentially sampled free
//! path away. Deeper chains only change efficiency at this fidelity (the
//! selection requires exactly two fired pixels) and are not modeled.
//! Lossy outcomes are encoded in the emitted record, never thrown.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::physics::{self, ELECTRON_REST_ENERGY_KEV, FWHM_TO_SIGMA};
use crate::sampling::PairTruth;

/// Module identifier: the two polarimeters and the scatterer crystal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorId {
    A,
    B,
    C,
}

impl DetectorId {
    pub fn as_str(&self) -> &'static str {
        match self {
            DetectorId::A => "A",
            DetectorId::B => "B",
            DetectorId::C => "C",
        }
    }
}

impl std::str::FromStr for DetectorId {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "A" => Ok(DetectorId::A),
            "B" => Ok(DetectorId::B),
            "C" => Ok(DetectorId::C),
            _ => Err(()),
        }
    }
}

/// One pixelated polarimeter module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorGeometry {
    pub pixels_per_side: u32,
    pub pitch_mm: f64,
    /// Active crystal cross-section side; smaller than the pitch.
    pub crystal_side_mm: f64,
    pub crystal_length_mm: f64,
    /// Distance of the detector face from the scatterer crystal.
    pub distance_mm: f64,
    /// Orientation of the module axis relative to the initial photon line.
    pub rotation_theta_scat_deg: f64,
    /// Fractional FWHM of the energy response at 511 keV.
    pub energy_res_fwhm_511: f64,
}

impl DetectorGeometry {
    /// Paper-setup module at the given distance.
    pub fn standard(distance_mm: f64) -> Self {
        DetectorGeometry {
            pixels_per_side: 8,
            pitch_mm: 2.2,
            crystal_side_mm: 1.9,
            crystal_length_mm: 20.0,
            distance_mm,
            rotation_theta_scat_deg: 0.0,
            energy_res_fwhm_511: 0.081,
        }
    }

    /// Half-width of the sensitive face in mm.
    pub fn half_face_mm(&self) -> f64 {
        0.5 * self.pixels_per_side as f64 * self.pitch_mm
    }

    /// Center of pixel `i` along one axis, in mm from the module axis.
    pub fn pixel_center_mm(&self, index: u32) -> f64 {
        (index as f64 + 0.5 - 0.5 * self.pixels_per_side as f64) * self.pitch_mm
    }

    /// Pixel index containing coordinate `x` (mm), if on the face.
    pub fn pixel_at_mm(&self, x: f64) -> Option<u32> {
        let idx = (x / self.pitch_mm + 0.5 * self.pixels_per_side as f64).floor();
        if idx >= 0.0 && idx < self.pixels_per_side as f64 {
            Some(idx as u32)
        } else {
            None
        }
    }

    /// True if `x` (mm) falls inside the active crystal of its pixel, not the gap.
    pub fn in_active_area_mm(&self, x: f64) -> bool {
        match self.pixel_at_mm(x) {
            Some(i) => (x - self.pixel_center_mm(i)).abs() <= 0.5 * self.crystal_side_mm,
            None => false,
        }
    }
}

/// Angular half-coverage of a module as seen from the scatterer, in degrees.
pub fn angular_coverage(geometry: &DetectorGeometry) -> f64 {
    (geometry.half_face_mm() / geometry.distance_mm).atan().to_degrees()
}

/// The single tagging crystal in front of one polarimeter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScattererSpec {
    pub crystal_side_mm: f64,
    pub crystal_length_mm: f64,
    pub energy_res_fwhm_511: f64,
    /// Read out (active) or mere material in the beam (passive).
    pub active: bool,
    /// Distance from the source to the scatterer, toward Detector A.
    pub source_distance_mm: f64,
}

impl Default for ScattererSpec {
    fn default() -> Self {
        ScattererSpec {
            crystal_side_mm: 3.0,
            crystal_length_mm: 20.0,
            energy_res_fwhm_511: 0.121,
            active: true,
            source_distance_mm: 10.0,
        }
    }
}

/// Interaction-length constants of the simplified transport.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportParams {
    /// Attenuation length for the first interaction of a ~511 keV photon.
    pub lambda_511_mm: f64,
    /// Effective displacement scale between the Compton pixel and the final
    /// absorption pixel. This is an end-to-end scale (possible intermediate
    /// hops folded in), not a single-interaction attenuation length: it
    /// controls how often backward-scattered photons escape before landing,
    /// and with it the misordered-event contamination of the polar windows.
    pub lambda_abs_mm: f64,
}

impl Default for TransportParams {
    fn default() -> Self {
        TransportParams {
            lambda_511_mm: 20.0,
            lambda_abs_mm: 20.0,
        }
    }
}

/// Full bench: both polarimeters, the scatterer, transport and timing models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetupGeometry {
    pub det_a: DetectorGeometry,
    pub det_b: DetectorGeometry,
    pub scatterer: ScattererSpec,
    pub transport: TransportParams,
    /// Gaussian timing jitter per hit, ns.
    pub timing_sigma_ns: f64,
}

impl Default for SetupGeometry {
    fn default() -> Self {
        SetupGeometry {
            det_a: DetectorGeometry::standard(50.0),
            det_b: DetectorGeometry::standard(50.0),
            scatterer: ScattererSpec::default(),
            transport: TransportParams::default(),
            timing_sigma_ns: 0.3,
        }
    }
}

/// One digitized pixel hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelHit {
    pub detector: DetectorId,
    pub ix: u32,
    pub iy: u32,
    /// Smeared deposit, keV (clamped at 0).
    pub energy_kev: f64,
    pub time_ns: f64,
    /// Truth flag: this pixel saw the first interaction of its photon.
    pub first_interaction: bool,
}

/// Digitized event: all hits plus the optional generator truth block.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub event_id: u64,
    pub hits: Vec<PixelHit>,
    pub truth: Option<PairTruth>,
}

impl EventRecord {
    pub fn hits_in(&self, det: DetectorId) -> impl Iterator<Item = &PixelHit> {
        self.hits.iter().filter(move |h| h.detector == det)
    }
}

/// Gaussian smearing with sigma scaling as sqrt(E) from the 511 keV anchor.
pub fn smear_energy(e_true_kev: f64, fwhm_at_511: f64, rng: &mut impl Rng) -> f64 {
    debug_assert!(e_true_kev >= 0.0);
    if e_true_kev == 0.0 {
        return 0.0;
    }
    let sigma = energy_sigma(e_true_kev, fwhm_at_511);
    let n = Normal::new(e_true_kev, sigma).expect("sigma > 0");
    n.sample(rng).max(0.0)
}

/// Resolution model: sigma(E) = (fwhm511 * 511 / 2.3548) * sqrt(E / 511).
pub fn energy_sigma(e_kev: f64, fwhm_at_511: f64) -> f64 {
    (fwhm_at_511 * ELECTRON_REST_ENERGY_KEV / FWHM_TO_SIGMA)
        * (e_kev / ELECTRON_REST_ENERGY_KEV).sqrt()
}

/// Pre-smearing outcome of one photon in one polarimeter module.
#[derive(Debug, Clone, Copy, PartialEq)]
enum ModuleOutcome {
    /// Photon crossed the module without interacting (or entered a gap).
    PassThrough,
    /// Compton scatter happened but the scattered photon escaped or landed
    /// in a gap; only the recoil deposit remains.
    RecoilOnly { pixel: (u32, u32), recoil_kev: f64 },
    /// Both deposits are in the same pixel (landing pixel == entry pixel).
    Merged { pixel: (u32, u32), total_kev: f64 },
    /// Clean two-pixel topology.
    TwoPixel {
        entry: (u32, u32),
        recoil_kev: f64,
        landing: (u32, u32),
        scattered_kev: f64,
    },
}

/// Entry point on the face for a photon from an on-axis emitter at
/// perpendicular distance `d_mm`, weighted by solid angle (rejection on
/// the uniform proposal).
fn sample_entry_point(geom: &DetectorGeometry, d_mm: f64, rng: &mut impl Rng) -> (f64, f64) {
    let h = geom.half_face_mm();
    loop {
        let x = rng.random_range(-h..h);
        let y = rng.random_range(-h..h);
        // flux density on the plane is proportional to (d / r)^3
        let w = (d_mm * d_mm / (d_mm * d_mm + x * x + y * y)).powf(1.5);
        if rng.random::<f64>() < w {
            return (x, y);
        }
    }
}

/// Landing position of the scattered photon; pure geometry, no randomness.
fn landing_position(
    entry_xy: (f64, f64),
    depth_mm: f64,
    theta_deg: f64,
    phi_deg: f64,
    path_mm: f64,
) -> (f64, f64, f64) {
    let (st, ct) = (theta_deg.to_radians().sin(), theta_deg.to_radians().cos());
    let (sp, cp) = (phi_deg.to_radians().sin(), phi_deg.to_radians().cos());
    (
        entry_xy.0 + path_mm * st * cp,
        entry_xy.1 + path_mm * st * sp,
        depth_mm + path_mm * ct,
    )
}

fn transport_photon(
    geom: &DetectorGeometry,
    transport: &TransportParams,
    emitter_distance_mm: f64,
    energy_kev: f64,
    theta_deg: f64,
    phi_deg: f64,
    rng: &mut impl Rng,
) -> ModuleOutcome {
    let (x0, y0) = sample_entry_point(geom, emitter_distance_mm, rng);
    if !geom.in_active_area_mm(x0) || !geom.in_active_area_mm(y0) {
        return ModuleOutcome::PassThrough;
    }
    let entry = (geom.pixel_at_mm(x0).unwrap(), geom.pixel_at_mm(y0).unwrap());

    let depth = Exp::new(1.0 / transport.lambda_511_mm)
        .expect("positive rate")
        .sample(rng);
    if depth >= geom.crystal_length_mm {
        return ModuleOutcome::PassThrough;
    }

    let scattered = physics::scattered_energy(energy_kev, theta_deg);
    let recoil = energy_kev - scattered;

    let path = Exp::new(1.0 / transport.lambda_abs_mm)
        .expect("positive rate")
        .sample(rng);
    let (lx, ly, lz) = landing_position((x0, y0), depth, theta_deg, phi_deg, path);

    if lz < 0.0 || lz > geom.crystal_length_mm {
        return ModuleOutcome::RecoilOnly {
            pixel: entry,
            recoil_kev: recoil,
        };
    }
    if !geom.in_active_area_mm(lx) || !geom.in_active_area_mm(ly) {
        return ModuleOutcome::RecoilOnly {
            pixel: entry,
            recoil_kev: recoil,
        };
    }
    let landing = (geom.pixel_at_mm(lx).unwrap(), geom.pixel_at_mm(ly).unwrap());
    if landing == entry {
        return ModuleOutcome::Merged {
            pixel: entry,
            total_kev: energy_kev,
        };
    }
    ModuleOutcome::TwoPixel {
        entry,
        recoil_kev: recoil,
        landing,
        scattered_kev: scattered,
    }
}

fn push_module_hits(hits: &mut Vec<PixelHit>, det: DetectorId, outcome: ModuleOutcome) {
    match outcome {
        ModuleOutcome::PassThrough => {}
        ModuleOutcome::RecoilOnly { pixel, recoil_kev } => hits.push(PixelHit {
            detector: det,
            ix: pixel.0,
            iy: pixel.1,
            energy_kev: recoil_kev,
            time_ns: 0.0,
            first_interaction: true,
        }),
        ModuleOutcome::Merged { pixel, total_kev } => hits.push(PixelHit {
            detector: det,
            ix: pixel.0,
            iy: pixel.1,
            energy_kev: total_kev,
            time_ns: 0.0,
            first_interaction: true,
        }),
        ModuleOutcome::TwoPixel {
            entry,
            recoil_kev,
            landing,
            scattered_kev,
        } => {
            hits.push(PixelHit {
                detector: det,
                ix: entry.0,
                iy: entry.1,
                energy_kev: recoil_kev,
                time_ns: 0.0,
                first_interaction: true,
            });
            hits.push(PixelHit {
                detector: det,
                ix: landing.0,
                iy: landing.1,
                energy_kev: scattered_kev,
                time_ns: 0.0,
                first_interaction: false,
            });
        }
    }
}

/// Digitize one pair into an event record.
///
/// Emission distances: gamma-1 projects from the source (offset toward
/// Detector A), gamma-2 from the scatterer after a prior scatter or from the
/// source otherwise. Deposits carry true energies first; every hit is then
/// smeared and time-jittered in record order, so the outcome is a pure
/// function of (pair, stream).
pub fn digitize(
    event_id: u64,
    pair: &PairTruth,
    setup: &SetupGeometry,
    rng: &mut impl Rng,
    keep_truth: bool,
) -> EventRecord {
    let mut hits = Vec::with_capacity(5);

    // gamma-1: source sits between scatterer and Detector A
    let d_a = setup.det_a.distance_mm - setup.scatterer.source_distance_mm;
    let out_a = transport_photon(
        &setup.det_a,
        &setup.transport,
        d_a,
        pair.e1_kev,
        pair.theta1_deg,
        pair.phi1_deg,
        rng,
    );
    push_module_hits(&mut hits, DetectorId::A, out_a);

    // gamma-2: emitted from the scatterer if it scattered there, else from the source
    let prior_scatter = pair.e2_kev < ELECTRON_REST_ENERGY_KEV;
    let d_b = if prior_scatter {
        setup.det_b.distance_mm
    } else {
        setup.det_b.distance_mm + setup.scatterer.source_distance_mm
    };
    let out_b = transport_photon(
        &setup.det_b,
        &setup.transport,
        d_b,
        pair.e2_kev,
        pair.theta2_deg,
        pair.phi2_deg,
        rng,
    );
    push_module_hits(&mut hits, DetectorId::B, out_b);

    // scatterer deposit, read out only in active mode
    if prior_scatter && setup.scatterer.active {
        hits.push(PixelHit {
            detector: DetectorId::C,
            ix: 0,
            iy: 0,
            energy_kev: ELECTRON_REST_ENERGY_KEV - pair.e2_kev,
            time_ns: 0.0,
            first_interaction: true,
        });
    }

    // smear energies and jitter times in record order
    let jitter = Normal::new(0.0, setup.timing_sigma_ns).expect("sigma > 0");
    for hit in &mut hits {
        let fwhm = match hit.detector {
            DetectorId::A => setup.det_a.energy_res_fwhm_511,
            DetectorId::B => setup.det_b.energy_res_fwhm_511,
            DetectorId::C => setup.scatterer.energy_res_fwhm_511,
        };
        hit.energy_kev = smear_energy(hit.energy_kev, fwhm, rng);
        hit.time_ns = jitter.sample(rng);
    }

    EventRecord {
        event_id,
        hits,
        truth: keep_truth.then_some(*pair),
    }
}
