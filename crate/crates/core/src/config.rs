//! Run configuration: flat INI-style sections with `key = value` lines.
//!
//! Grammar: a line is blank, a comment (starting with `#` or `;`), a section
//! header `[name]`, or `key = value`. Every key has a default equal to the
//! paper-bench setup, so an empty file is a valid direct-mode run. Unknown
//! sections or keys are errors. A few keys are resolved from the rest of the
//! configuration when absent (detector.b distance, the prior-scatter cone,
//! the second-arm analysis window).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::analysis::ThetaWindows;
use crate::detector::{angular_coverage, SetupGeometry};
use crate::error::{Error, Result};
use crate::sampling::PairModel;
use crate::selection::{Mode, SelectionConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kappa: f64,
    pub theta_scat_deg: f64,
    pub mode: Mode,
    pub n_pairs: u64,
    /// Half-width of the prior-scatter cone; resolved from the Detector B
    /// coverage when not set explicitly.
    pub cone_half_width_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub bins: usize,
    pub mix: usize,
    pub theta1_min_deg: f64,
    pub theta1_max_deg: f64,
    pub theta2_min_deg: f64,
    pub theta2_max_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RngConfig {
    pub master_seed: u64,
    /// Worker count for parallel sections; never affects results.
    pub streams: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub prefix: String,
    pub write_truth: bool,
    /// Skip the (large) raw event file; selection still runs on every event.
    pub write_events: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionCuts {
    pub pixel_threshold_kev: f64,
    pub sum_window_half_kev: f64,
    pub timing_window_ns: f64,
    pub scatterer_window_sigmas: f64,
    pub scatterer_threshold_kev: f64,
}

impl Default for SelectionCuts {
    fn default() -> Self {
        SelectionCuts {
            pixel_threshold_kev: 100.0,
            sum_window_half_kev: 70.0,
            timing_window_ns: 1.95,
            scatterer_window_sigmas: 3.0,
            scatterer_threshold_kev: 2.0,
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub setup: SetupGeometry,
    pub selection_cuts: SelectionCuts,
    pub analysis: AnalysisConfig,
    pub rng: RngConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_ini_str("").expect("empty config is the paper default")
    }
}

impl RunConfig {
    pub fn from_ini_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::config(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        Self::from_ini_str(&text)
    }

    pub fn from_ini_str(text: &str) -> Result<Self> {
        let raw = parse_ini(text)?;
        build_config(raw)
    }

    /// Canonical serialization: fixed section and key order, resolved values.
    pub fn to_ini_string(&self) -> String {
        let mut s = String::new();
        let m = &self.model;
        let _ = write!(
            s,
            "[model]\nkappa = {}\ntheta_scat_deg = {}\nmode = {}\nn_pairs = {}\ncone_half_width_deg = {}\n",
            m.kappa, m.theta_scat_deg, m.mode.as_str(), m.n_pairs, m.cone_half_width_deg
        );
        for (name, d) in [("a", &self.setup.det_a), ("b", &self.setup.det_b)] {
            let _ = write!(
                s,
                "\n[detector.{name}]\npixels_per_side = {}\npitch_mm = {}\ncrystal_side_mm = {}\ncrystal_length_mm = {}\ndistance_mm = {}\nenergy_res_fwhm_511 = {}\n",
                d.pixels_per_side, d.pitch_mm, d.crystal_side_mm, d.crystal_length_mm,
                d.distance_mm, d.energy_res_fwhm_511
            );
        }
        let sc = &self.setup.scatterer;
        let _ = write!(
            s,
            "\n[scatterer]\ncrystal_side_mm = {}\ncrystal_length_mm = {}\nenergy_res_fwhm_511 = {}\nsource_distance_mm = {}\nthreshold_kev = {}\n",
            sc.crystal_side_mm, sc.crystal_length_mm, sc.energy_res_fwhm_511,
            sc.source_distance_mm, self.selection_cuts.scatterer_threshold_kev
        );
        let t = &self.setup.transport;
        let _ = write!(
            s,
            "\n[transport]\nlambda511_mm = {}\nlambdaAbs_mm = {}\n",
            t.lambda_511_mm, t.lambda_abs_mm
        );
        let _ = write!(s, "\n[timing]\nsigma_ns = {}\n", self.setup.timing_sigma_ns);
        let c = &self.selection_cuts;
        let _ = write!(
            s,
            "\n[selection]\npixel_threshold_kev = {}\nsum_window_half_kev = {}\ntiming_window_ns = {}\nscatterer_window_sigmas = {}\n",
            c.pixel_threshold_kev, c.sum_window_half_kev, c.timing_window_ns, c.scatterer_window_sigmas
        );
        let a = &self.analysis;
        let _ = write!(
            s,
            "\n[analysis]\nbins = {}\nmix = {}\ntheta1_min_deg = {}\ntheta1_max_deg = {}\ntheta2_min_deg = {}\ntheta2_max_deg = {}\n",
            a.bins, a.mix, a.theta1_min_deg, a.theta1_max_deg, a.theta2_min_deg, a.theta2_max_deg
        );
        let _ = write!(
            s,
            "\n[rng]\nmaster_seed = {}\nstreams = {}\n",
            self.rng.master_seed, self.rng.streams
        );
        let _ = write!(
            s,
            "\n[output]\nprefix = {}\nwrite_truth = {}\nwrite_events = {}\n",
            self.output.prefix, self.output.write_truth, self.output.write_events
        );
        s
    }

    /// FNV-1a hash of the canonical serialization, for the run manifest.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in self.to_ini_string().bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    pub fn pair_model(&self) -> PairModel {
        PairModel {
            kappa: self.model.kappa,
            theta_scat_deg: self.model.theta_scat_deg,
            cone_half_width_deg: self.model.cone_half_width_deg,
        }
    }

    pub fn selection_config(&self) -> SelectionConfig {
        SelectionConfig {
            pixel_threshold_kev: self.selection_cuts.pixel_threshold_kev,
            sum_window_half_kev: self.selection_cuts.sum_window_half_kev,
            timing_window_ns: self.selection_cuts.timing_window_ns,
            theta_scat_nominal_deg: self.model.theta_scat_deg,
            scatterer_window_sigmas: self.selection_cuts.scatterer_window_sigmas,
            scatterer_threshold_kev: self.selection_cuts.scatterer_threshold_kev,
            mode: self.model.mode,
            det_res_fwhm_511: self.setup.det_b.energy_res_fwhm_511,
            scat_res_fwhm_511: self.setup.scatterer.energy_res_fwhm_511,
        }
    }

    pub fn theta_windows(&self) -> ThetaWindows {
        ThetaWindows::new(
            (self.analysis.theta1_min_deg, self.analysis.theta1_max_deg),
            (self.analysis.theta2_min_deg, self.analysis.theta2_max_deg),
        )
    }
}

type RawConfig = BTreeMap<String, BTreeMap<String, String>>;

fn parse_ini(text: &str) -> Result<RawConfig> {
    let mut raw: RawConfig = BTreeMap::new();
    let mut section = String::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| {
                Error::config(format!("line {}: unterminated section header", lineno + 1))
            })?;
            section = name.trim().to_string();
            raw.entry(section.clone()).or_default();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(format!(
                "line {}: expected 'key = value', got '{line}'",
                lineno + 1
            ))
        })?;
        if section.is_empty() {
            return Err(Error::config(format!(
                "line {}: key outside any [section]",
                lineno + 1
            )));
        }
        raw.entry(section.clone())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(raw)
}

/// Typed view over one section that records which keys were consumed.
struct Section<'a> {
    name: &'a str,
    entries: Option<&'a BTreeMap<String, String>>,
    consumed: Vec<&'a str>,
}

impl<'a> Section<'a> {
    fn new(raw: &'a RawConfig, name: &'a str) -> Self {
        Section {
            name,
            entries: raw.get(name),
            consumed: Vec::new(),
        }
    }

    fn get(&mut self, key: &'a str) -> Option<&'a str> {
        self.consumed.push(key);
        self.entries.and_then(|m| m.get(key)).map(|s| s.as_str())
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &'a str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::config(format!("{}.{key}: cannot parse '{v}'", self.name))),
        }
    }

    fn parse_opt<T: std::str::FromStr>(&mut self, key: &'a str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::config(format!("{}.{key}: cannot parse '{v}'", self.name))),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some(entries) = self.entries {
            for key in entries.keys() {
                if !self.consumed.contains(&key.as_str()) {
                    return Err(Error::config(format!(
                        "unknown key '{key}' in section [{}]",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

fn build_config(raw: RawConfig) -> Result<RunConfig> {
    const KNOWN_SECTIONS: [&str; 10] = [
        "model",
        "detector.a",
        "detector.b",
        "scatterer",
        "transport",
        "timing",
        "selection",
        "analysis",
        "rng",
        "output",
    ];
    for name in raw.keys() {
        if !KNOWN_SECTIONS.contains(&name.as_str()) {
            return Err(Error::config(format!("unknown section [{name}]")));
        }
    }

    let mut setup = SetupGeometry::default();

    let mut model_sec = Section::new(&raw, "model");
    let kappa = model_sec.parse("kappa", 1.0)?;
    let theta_scat_deg = model_sec.parse("theta_scat_deg", 0.0)?;
    let mode_str: String = model_sec.parse("mode", "direct".to_string())?;
    let mode: Mode = mode_str.parse().map_err(|_| {
        Error::config(format!("model.mode: '{mode_str}' is not direct|active|passive"))
    })?;
    let n_pairs = model_sec.parse("n_pairs", 1_000_000u64)?;
    let cone_explicit: Option<f64> = model_sec.parse_opt("cone_half_width_deg")?;
    model_sec.finish()?;

    match mode {
        Mode::Direct if theta_scat_deg != 0.0 => {
            return Err(Error::config("direct mode requires model.theta_scat_deg = 0"));
        }
        Mode::Passive if theta_scat_deg <= 0.0 => {
            return Err(Error::config("passive mode requires model.theta_scat_deg > 0"));
        }
        _ => {}
    }

    for (name, det, is_b) in [
        ("detector.a", &mut setup.det_a, false),
        ("detector.b", &mut setup.det_b, true),
    ] {
        let mut sec = Section::new(&raw, name);
        det.pixels_per_side = sec.parse("pixels_per_side", det.pixels_per_side)?;
        det.pitch_mm = sec.parse("pitch_mm", det.pitch_mm)?;
        det.crystal_side_mm = sec.parse("crystal_side_mm", det.crystal_side_mm)?;
        det.crystal_length_mm = sec.parse("crystal_length_mm", det.crystal_length_mm)?;
        let default_distance = if is_b && mode == Mode::Passive { 75.0 } else { 50.0 };
        det.distance_mm = sec.parse("distance_mm", default_distance)?;
        det.energy_res_fwhm_511 = sec.parse("energy_res_fwhm_511", det.energy_res_fwhm_511)?;
        if det.pitch_mm <= det.crystal_side_mm {
            return Err(Error::config(format!(
                "[{name}]: pitch must exceed the crystal side"
            )));
        }
        if det.distance_mm <= 0.0 {
            return Err(Error::config(format!("[{name}]: distance must be positive")));
        }
        det.rotation_theta_scat_deg = if is_b { theta_scat_deg } else { 0.0 };
        sec.finish()?;
    }

    let mut scat_sec = Section::new(&raw, "scatterer");
    setup.scatterer.crystal_side_mm =
        scat_sec.parse("crystal_side_mm", setup.scatterer.crystal_side_mm)?;
    setup.scatterer.crystal_length_mm =
        scat_sec.parse("crystal_length_mm", setup.scatterer.crystal_length_mm)?;
    setup.scatterer.energy_res_fwhm_511 =
        scat_sec.parse("energy_res_fwhm_511", setup.scatterer.energy_res_fwhm_511)?;
    setup.scatterer.source_distance_mm =
        scat_sec.parse("source_distance_mm", setup.scatterer.source_distance_mm)?;
    let scatterer_threshold_kev = scat_sec.parse("threshold_kev", 2.0)?;
    scat_sec.finish()?;
    setup.scatterer.active = mode == Mode::Active;

    let mut tr_sec = Section::new(&raw, "transport");
    setup.transport.lambda_511_mm = tr_sec.parse("lambda511_mm", setup.transport.lambda_511_mm)?;
    setup.transport.lambda_abs_mm = tr_sec.parse("lambdaAbs_mm", setup.transport.lambda_abs_mm)?;
    tr_sec.finish()?;

    let mut tm_sec = Section::new(&raw, "timing");
    setup.timing_sigma_ns = tm_sec.parse("sigma_ns", setup.timing_sigma_ns)?;
    tm_sec.finish()?;

    let cuts_default = SelectionCuts::default();
    let mut sel_sec = Section::new(&raw, "selection");
    let selection_cuts = SelectionCuts {
        pixel_threshold_kev: sel_sec
            .parse("pixel_threshold_kev", cuts_default.pixel_threshold_kev)?,
        sum_window_half_kev: sel_sec
            .parse("sum_window_half_kev", cuts_default.sum_window_half_kev)?,
        timing_window_ns: sel_sec.parse("timing_window_ns", cuts_default.timing_window_ns)?,
        scatterer_window_sigmas: sel_sec
            .parse("scatterer_window_sigmas", cuts_default.scatterer_window_sigmas)?,
        scatterer_threshold_kev,
    };
    sel_sec.finish()?;

    let window_defaults = ThetaWindows::for_theta_scat(theta_scat_deg);
    let mut an_sec = Section::new(&raw, "analysis");
    let analysis = AnalysisConfig {
        bins: an_sec.parse("bins", 24usize)?,
        mix: an_sec.parse("mix", 100usize)?,
        theta1_min_deg: an_sec.parse("theta1_min_deg", window_defaults.theta1.0)?,
        theta1_max_deg: an_sec.parse("theta1_max_deg", window_defaults.theta1.1)?,
        theta2_min_deg: an_sec.parse("theta2_min_deg", window_defaults.theta2.0)?,
        theta2_max_deg: an_sec.parse("theta2_max_deg", window_defaults.theta2.1)?,
    };
    an_sec.finish()?;
    if analysis.bins < 4 {
        return Err(Error::config("analysis.bins must be at least 4"));
    }

    let mut rng_sec = Section::new(&raw, "rng");
    let rng = RngConfig {
        master_seed: rng_sec.parse("master_seed", 20260810u64)?,
        streams: rng_sec.parse("streams", 8usize)?,
    };
    rng_sec.finish()?;
    if rng.streams == 0 {
        return Err(Error::config("rng.streams must be at least 1"));
    }

    let mut out_sec = Section::new(&raw, "output");
    let output = OutputConfig {
        prefix: out_sec.parse("prefix", "out/run".to_string())?,
        write_truth: out_sec.parse("write_truth", true)?,
        write_events: out_sec.parse("write_events", true)?,
    };
    out_sec.finish()?;

    // prior-scatter cone: explicit, else the angular coverage of Detector B
    let cone_half_width_deg = match cone_explicit {
        Some(w) => w,
        None if theta_scat_deg > 0.0 => angular_coverage(&setup.det_b),
        None => 0.0,
    };

    let config = RunConfig {
        model: ModelConfig {
            kappa,
            theta_scat_deg,
            mode,
            n_pairs,
            cone_half_width_deg,
        },
        setup,
        selection_cuts,
        analysis,
        rng,
        output,
    };
    config.pair_model().validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_paper_default() {
        let c = RunConfig::default();
        assert_eq!(c.model.mode, Mode::Direct);
        assert_eq!(c.model.kappa, 1.0);
        assert_eq!(c.setup.det_a.pixels_per_side, 8);
        assert_eq!(c.setup.det_a.pitch_mm, 2.2);
        assert_eq!(c.setup.det_b.distance_mm, 50.0);
        assert_eq!(c.selection_cuts.sum_window_half_kev, 70.0);
        assert_eq!(c.analysis.bins, 24);
        assert_eq!(c.analysis.mix, 100);
        assert_eq!(c.analysis.theta1_min_deg, 72.0);
    }

    #[test]
    fn mode_dependent_defaults() {
        let passive =
            RunConfig::from_ini_str("[model]\nmode = passive\ntheta_scat_deg = 30\n").unwrap();
        assert_eq!(passive.setup.det_b.distance_mm, 75.0);
        assert!(!passive.setup.scatterer.active);
        assert_eq!(passive.analysis.theta2_min_deg, 73.0);
        // cone defaults to the coverage of Detector B at 75 mm
        assert!((passive.model.cone_half_width_deg - 6.69).abs() < 0.01);

        let active30 =
            RunConfig::from_ini_str("[model]\nmode = active\ntheta_scat_deg = 30\n").unwrap();
        assert_eq!(active30.setup.det_b.distance_mm, 50.0);
        assert!(active30.setup.scatterer.active);
        assert!((active30.model.cone_half_width_deg - 9.98).abs() < 0.01);

        let scat50 =
            RunConfig::from_ini_str("[model]\nmode = active\ntheta_scat_deg = 50\n").unwrap();
        assert_eq!(scat50.analysis.theta2_min_deg, 74.0);
    }

    #[test]
    fn unknown_keys_and_sections_are_errors() {
        assert!(RunConfig::from_ini_str("[model]\nkapa = 1.0\n").is_err());
        assert!(RunConfig::from_ini_str("[mdoel]\nkappa = 1.0\n").is_err());
        assert!(RunConfig::from_ini_str("[model]\nkappa = not_a_number\n").is_err());
        assert!(RunConfig::from_ini_str("kappa = 1.0\n").is_err());
    }

    #[test]
    fn mode_constraints() {
        assert!(RunConfig::from_ini_str("[model]\nmode = direct\ntheta_scat_deg = 30\n").is_err());
        assert!(RunConfig::from_ini_str("[model]\nmode = passive\ntheta_scat_deg = 0\n").is_err());
        assert!(RunConfig::from_ini_str("[model]\nmode = sideways\n").is_err());
    }

    #[test]
    fn round_trip_is_idempotent() {
        let text =
            "[model]\nmode = active\ntheta_scat_deg = 30\nkappa = 0.5\n[rng]\nmaster_seed = 42\n";
        let first = RunConfig::from_ini_str(text).unwrap();
        let ser1 = first.to_ini_string();
        let second = RunConfig::from_ini_str(&ser1).unwrap();
        let ser2 = second.to_ini_string();
        assert_eq!(ser1, ser2);
        assert_eq!(first, second);
        assert_eq!(first.hash(), second.hash());
    }

    #[test]
    fn explicit_values_override_defaults() {
        let c = RunConfig::from_ini_str(
            "[detector.b]\ndistance_mm = 60\n[transport]\nlambda511_mm = 25\nlambdaAbs_mm = 12\n[analysis]\ntheta2_min_deg = 70\n",
        )
        .unwrap();
        assert_eq!(c.setup.det_b.distance_mm, 60.0);
        assert_eq!(c.setup.transport.lambda_511_mm, 25.0);
        assert_eq!(c.setup.transport.lambda_abs_mm, 12.0);
        assert_eq!(c.analysis.theta2_min_deg, 70.0);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let c = RunConfig::from_ini_str("# comment\n\n[model]\n; another comment\nkappa = 0.25\n")
            .unwrap();
        assert_eq!(c.model.kappa, 0.25);
    }
}
