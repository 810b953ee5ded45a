//! Trigger and offline event selection.
//!
//! Cut order follows the measurement: trigger, pixel multiplicity, the
//! 100 keV fired-pixel floor, energy sum windows, scatterer kinematics,
//! coincidence timing. The two-dimensional selection ellipse of the
//! measurement is replaced by two one-dimensional windows (total sum and
//! scatterer energy), which is equivalent for uncorrelated Gaussian
//! resolutions and fully determined by the resolution model.

use crate::detector::{energy_sigma, DetectorId, EventRecord, PixelHit};
use crate::physics::{scattered_energy, ELECTRON_REST_ENERGY_KEV};

/// Dataset topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Both photons reach their polarimeters straight from the source.
    Direct,
    /// Scatterer read out; selects the prior-scatter chain (or, at a nominal
    /// angle of zero, the scatterer-silent baseline).
    Active,
    /// Scatterer present but not read out; selection uses A, B and timing only.
    Passive,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Direct => "direct",
            Mode::Active => "active",
            Mode::Passive => "passive",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "direct" => Ok(Mode::Direct),
            "active" => Ok(Mode::Active),
            "passive" => Ok(Mode::Passive),
            _ => Err(()),
        }
    }
}

/// All thresholds and windows of the offline selection.
#[derive(Debug, Clone, Copy)]
pub struct SelectionConfig {
    /// Lower bound to count a polarimeter pixel as fired, keV.
    pub pixel_threshold_kev: f64,
    /// Half-width of the 511 keV sum window (70 keV = 3 sigma), keV.
    pub sum_window_half_kev: f64,
    /// Coincidence window on |t_A - t_B|, ns (passive mode only).
    pub timing_window_ns: f64,
    /// Nominal prior-scatter angle of the dataset, degrees.
    pub theta_scat_nominal_deg: f64,
    /// Width of derived windows in sigmas of the resolution model.
    pub scatterer_window_sigmas: f64,
    /// Energy above which the scatterer counts as fired, keV.
    pub scatterer_threshold_kev: f64,
    pub mode: Mode,
    /// Fractional FWHM at 511 keV of the polarimeter pixels (window scaling).
    pub det_res_fwhm_511: f64,
    /// Fractional FWHM at 511 keV of the scatterer crystal.
    pub scat_res_fwhm_511: f64,
}

impl SelectionConfig {
    pub fn standard(mode: Mode, theta_scat_nominal_deg: f64) -> Self {
        SelectionConfig {
            pixel_threshold_kev: 100.0,
            sum_window_half_kev: 70.0,
            timing_window_ns: 1.95,
            theta_scat_nominal_deg,
            scatterer_window_sigmas: 3.0,
            scatterer_threshold_kev: 2.0,
            mode,
            det_res_fwhm_511: 0.081,
            scat_res_fwhm_511: 0.121,
        }
    }

    /// Sum window for a module, centered on `center_kev`.
    ///
    /// At 511 keV the half-width is the fixed 70 keV of the measurement;
    /// at other centers it derives from the sqrt(E) resolution model.
    pub fn module_sum_window(&self, center_kev: f64) -> (f64, f64) {
        let half = if (center_kev - ELECTRON_REST_ENERGY_KEV).abs() < 1e-9 {
            self.sum_window_half_kev
        } else {
            self.scatterer_window_sigmas * energy_sigma(center_kev, self.det_res_fwhm_511)
        };
        (center_kev - half, center_kev + half)
    }

    /// Expected scatterer deposit for the nominal prior-scatter angle, keV.
    pub fn expected_scatterer_deposit_kev(&self) -> f64 {
        ELECTRON_REST_ENERGY_KEV
            - scattered_energy(ELECTRON_REST_ENERGY_KEV, self.theta_scat_nominal_deg)
    }
}

/// Why an event was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    NotTriggered,
    Multiplicity,
    PixelThreshold,
    SumWindow,
    NoScattererHit,
    ScattererFired,
    Kinematics,
    Timing,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::NotTriggered => "not_triggered",
            RejectReason::Multiplicity => "multiplicity",
            RejectReason::PixelThreshold => "pixel_threshold",
            RejectReason::SumWindow => "sum_window",
            RejectReason::NoScattererHit => "no_scatterer_hit",
            RejectReason::ScattererFired => "scatterer_fired",
            RejectReason::Kinematics => "kinematics",
            RejectReason::Timing => "timing",
        }
    }

    /// Cutflow stage this reason is charged to.
    fn stage(&self) -> usize {
        match self {
            RejectReason::NotTriggered => 0,
            RejectReason::Multiplicity => 1,
            RejectReason::PixelThreshold => 2,
            RejectReason::SumWindow | RejectReason::NoScattererHit => 3,
            RejectReason::Kinematics | RejectReason::ScattererFired => 4,
            RejectReason::Timing => 5,
        }
    }
}

/// Outcome of the selection for one event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accepted,
    Rejected(RejectReason),
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Verdict::Accepted)
    }
}

/// Ordered survivor counts, one per cut.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CutflowReport {
    pub total: u64,
    pub triggered: u64,
    pub multiplicity2: u64,
    pub pixel_threshold: u64,
    pub sum_window: u64,
    pub kinematics: u64,
    pub timing: u64,
    pub accepted: u64,
}

impl CutflowReport {
    pub fn record(&mut self, verdict: Verdict) {
        self.total += 1;
        let reached = match verdict {
            Verdict::Accepted => 7,
            Verdict::Rejected(reason) => reason.stage(),
        };
        let counters = [
            &mut self.triggered,
            &mut self.multiplicity2,
            &mut self.pixel_threshold,
            &mut self.sum_window,
            &mut self.kinematics,
            &mut self.timing,
            &mut self.accepted,
        ];
        for (stage, counter) in counters.into_iter().enumerate() {
            if reached > stage {
                *counter += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &CutflowReport) {
        self.total += other.total;
        self.triggered += other.triggered;
        self.multiplicity2 += other.multiplicity2;
        self.pixel_threshold += other.pixel_threshold;
        self.sum_window += other.sum_window;
        self.kinematics += other.kinematics;
        self.timing += other.timing;
        self.accepted += other.accepted;
    }

    pub fn rows(&self) -> [(&'static str, u64); 7] {
        [
            ("triggered", self.triggered),
            ("multiplicity2", self.multiplicity2),
            ("pixel_threshold", self.pixel_threshold),
            ("sum_window", self.sum_window),
            ("kinematics", self.kinematics),
            ("timing", self.timing),
            ("accepted", self.accepted),
        ]
    }
}

fn scatterer_energy(event: &EventRecord, cfg: &SelectionConfig) -> Option<f64> {
    event
        .hits_in(DetectorId::C)
        .map(|h| h.energy_kev)
        .find(|&e| e >= cfg.scatterer_threshold_kev)
}

/// Hardware trigger: a hit in A and a hit in B or C (C ignored in passive mode).
pub fn trigger(event: &EventRecord, cfg: &SelectionConfig) -> bool {
    let a = event.hits_in(DetectorId::A).next().is_some();
    let b = event.hits_in(DetectorId::B).next().is_some();
    let c = cfg.mode == Mode::Active && scatterer_energy(event, cfg).is_some();
    a && (b || c)
}

/// Fired pixels of a module: hits above the 100 keV floor.
fn fired<'a>(event: &'a EventRecord, det: DetectorId, cfg: &SelectionConfig) -> Vec<&'a PixelHit> {
    event
        .hits_in(det)
        .filter(|h| h.energy_kev >= cfg.pixel_threshold_kev)
        .collect()
}

/// Two-pixel Compton selection in one module with a sum window around `center_kev`.
pub fn select_module_compton(
    event: &EventRecord,
    det: DetectorId,
    cfg: &SelectionConfig,
    center_kev: f64,
) -> Verdict {
    let raw: Vec<_> = event.hits_in(det).collect();
    if raw.len() != 2 {
        return Verdict::Rejected(RejectReason::Multiplicity);
    }
    let above = fired(event, det, cfg);
    if above.len() != 2 {
        return Verdict::Rejected(RejectReason::PixelThreshold);
    }
    let sum: f64 = above.iter().map(|h| h.energy_kev).sum();
    let (lo, hi) = cfg.module_sum_window(center_kev);
    if !(lo..=hi).contains(&sum) {
        return Verdict::Rejected(RejectReason::SumWindow);
    }
    Verdict::Accepted
}

/// Scattered-chain selection (active mode, nominal angle > 0): the scatterer
/// fired, the B+C chain sums to 511 within the window, and the scatterer
/// deposit obeys Compton kinematics at the nominal angle.
pub fn select_scattered_chain(event: &EventRecord, cfg: &SelectionConfig) -> Verdict {
    if event.hits_in(DetectorId::B).count() != 2 {
        return Verdict::Rejected(RejectReason::Multiplicity);
    }
    let b = fired(event, DetectorId::B, cfg);
    if b.len() != 2 {
        return Verdict::Rejected(RejectReason::PixelThreshold);
    }
    let Some(e_c) = scatterer_energy(event, cfg) else {
        return Verdict::Rejected(RejectReason::NoScattererHit);
    };
    let b_sum: f64 = b.iter().map(|h| h.energy_kev).sum();
    let (lo, hi) = cfg.module_sum_window(ELECTRON_REST_ENERGY_KEV);
    if !(lo..=hi).contains(&(b_sum + e_c)) {
        return Verdict::Rejected(RejectReason::SumWindow);
    }
    let expected = cfg.expected_scatterer_deposit_kev();
    let tol = cfg.scatterer_window_sigmas * energy_sigma(expected, cfg.scat_res_fwhm_511);
    if (e_c - expected).abs() > tol {
        return Verdict::Rejected(RejectReason::Kinematics);
    }
    Verdict::Accepted
}

/// Baseline selection at a nominal angle of zero: the scatterer stayed silent
/// and both polarimeters show a clean 511 keV Compton pair.
pub fn select_baseline_zero_deg(event: &EventRecord, cfg: &SelectionConfig) -> Verdict {
    match select_module_compton(event, DetectorId::A, cfg, ELECTRON_REST_ENERGY_KEV) {
        Verdict::Accepted => {}
        rejected => return rejected,
    }
    match select_module_compton(event, DetectorId::B, cfg, ELECTRON_REST_ENERGY_KEV) {
        Verdict::Accepted => {}
        rejected => return rejected,
    }
    if scatterer_energy(event, cfg).is_some() {
        return Verdict::Rejected(RejectReason::ScattererFired);
    }
    Verdict::Accepted
}

/// Passive-mode selection: A at 511, B centered on the scattered energy for
/// the nominal angle, and the module trigger times within the coincidence window.
pub fn select_passive(event: &EventRecord, cfg: &SelectionConfig) -> Verdict {
    match select_module_compton(event, DetectorId::A, cfg, ELECTRON_REST_ENERGY_KEV) {
        Verdict::Accepted => {}
        rejected => return rejected,
    }
    let center = scattered_energy(ELECTRON_REST_ENERGY_KEV, cfg.theta_scat_nominal_deg);
    match select_module_compton(event, DetectorId::B, cfg, center) {
        Verdict::Accepted => {}
        rejected => return rejected,
    }
    let t_a = event
        .hits_in(DetectorId::A)
        .map(|h| h.time_ns)
        .fold(f64::INFINITY, f64::min);
    let t_b = event
        .hits_in(DetectorId::B)
        .map(|h| h.time_ns)
        .fold(f64::INFINITY, f64::min);
    if (t_a - t_b).abs() >= cfg.timing_window_ns {
        return Verdict::Rejected(RejectReason::Timing);
    }
    Verdict::Accepted
}

/// Full per-event selection for the configured dataset topology.
pub fn select_event(event: &EventRecord, cfg: &SelectionConfig) -> Verdict {
    if !trigger(event, cfg) {
        return Verdict::Rejected(RejectReason::NotTriggered);
    }
    match cfg.mode {
        Mode::Direct => {
            match select_module_compton(event, DetectorId::A, cfg, ELECTRON_REST_ENERGY_KEV) {
                Verdict::Accepted => {}
                rejected => return rejected,
            }
            select_module_compton(event, DetectorId::B, cfg, ELECTRON_REST_ENERGY_KEV)
        }
        Mode::Active if cfg.theta_scat_nominal_deg == 0.0 => select_baseline_zero_deg(event, cfg),
        Mode::Active => {
            match select_module_compton(event, DetectorId::A, cfg, ELECTRON_REST_ENERGY_KEV) {
                Verdict::Accepted => {}
                rejected => return rejected,
            }
            select_scattered_chain(event, cfg)
        }
        Mode::Passive => select_passive(event, cfg),
    }
}
