//! File formats: event CSV, histogram CSV, fit-report JSON, cutflow text,
//! and the run manifest.
//!
//! Event CSV schema (one row per hit, rows grouped by ascending event id):
//!
//! ```text
//! event_id,detector,ix,iy,energy_kev,time_ns[,truth_theta1,truth_theta2,truth_dphi,truth_thetascat,truth_first_pixel]
//! ```
//!
//! Energies carry 3 decimals, times 4, truth angles 4; LF line endings and
//! '.' decimal separator throughout. The fit report is a flat JSON document
//! with a single canonical key order so golden-file comparisons are
//! byte-stable.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::analysis::{DeltaPhiHistogram, FitResult};
use crate::detector::{DetectorId, EventRecord, PixelHit};
use crate::error::{Error, Result};
use crate::physics::{scattered_energy, ELECTRON_REST_ENERGY_KEV};
use crate::sampling::PairTruth;
use crate::selection::CutflowReport;

const EVENT_HEADER: &str = "event_id,detector,ix,iy,energy_kev,time_ns";
const TRUTH_HEADER: &str =
    ",truth_theta1,truth_theta2,truth_dphi,truth_thetascat,truth_first_pixel";

/// Streaming writer for event files.
pub struct EventCsvWriter<W: Write> {
    w: W,
    with_truth: bool,
}

impl EventCsvWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, with_truth: bool) -> Result<Self> {
        let file = File::create(path)?;
        Self::new(BufWriter::new(file), with_truth)
    }
}

impl<W: Write> EventCsvWriter<W> {
    pub fn new(mut w: W, with_truth: bool) -> Result<Self> {
        w.write_all(EVENT_HEADER.as_bytes())?;
        if with_truth {
            w.write_all(TRUTH_HEADER.as_bytes())?;
        }
        w.write_all(b"\n")?;
        Ok(EventCsvWriter { w, with_truth })
    }

    pub fn write_event(&mut self, event: &EventRecord) -> Result<()> {
        for hit in &event.hits {
            write!(
                self.w,
                "{},{},{},{},{:.3},{:.4}",
                event.event_id,
                hit.detector.as_str(),
                hit.ix,
                hit.iy,
                hit.energy_kev,
                hit.time_ns
            )?;
            if self.with_truth {
                match &event.truth {
                    Some(t) => write!(
                        self.w,
                        ",{:.4},{:.4},{:.4},{:.4},{}",
                        t.theta1_deg,
                        t.theta2_deg,
                        t.delta_phi_deg(),
                        t.theta_scat_deg,
                        hit.first_interaction as u8
                    )?,
                    None => write!(self.w, ",,,,,")?,
                }
            }
            self.w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

struct ParsedRow {
    event_id: u64,
    hit: PixelHit,
    truth: Option<PairTruth>,
}

/// Iterator over event records in a CSV file.
pub struct EventCsvReader<R: BufRead> {
    lines: std::io::Lines<R>,
    with_truth: bool,
    pending: Option<ParsedRow>,
    path: String,
    lineno: usize,
}

impl EventCsvReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let display = path.as_ref().display().to_string();
        let file = File::open(path.as_ref())?;
        Self::new(BufReader::new(file), display)
    }
}

impl<R: BufRead> EventCsvReader<R> {
    pub fn new(reader: R, path: String) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Parse {
                path: path.clone(),
                line: 1,
                msg: "empty file".into(),
            })?;
        let with_truth = match header.trim_end() {
            h if h == EVENT_HEADER => false,
            h if h == format!("{EVENT_HEADER}{TRUTH_HEADER}") => true,
            other => {
                return Err(Error::Parse {
                    path,
                    line: 1,
                    msg: format!("unexpected header '{other}'"),
                })
            }
        };
        Ok(EventCsvReader {
            lines,
            with_truth,
            pending: None,
            path,
            lineno: 1,
        })
    }

    fn parse_row(&self, line: &str) -> Result<ParsedRow> {
        let err = |msg: String| Error::Parse {
            path: self.path.clone(),
            line: self.lineno,
            msg,
        };
        let fields: Vec<&str> = line.split(',').collect();
        let expected = if self.with_truth { 11 } else { 6 };
        if fields.len() != expected {
            return Err(err(format!(
                "expected {expected} fields, got {}",
                fields.len()
            )));
        }
        let event_id = fields[0]
            .parse()
            .map_err(|_| err(format!("bad event_id '{}'", fields[0])))?;
        let detector: DetectorId = fields[1]
            .parse()
            .map_err(|_| err(format!("bad detector '{}'", fields[1])))?;
        let parse_f = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| err(format!("bad number '{}'", fields[i])))
        };
        let parse_u = |i: usize| -> Result<u32> {
            fields[i]
                .parse()
                .map_err(|_| err(format!("bad index '{}'", fields[i])))
        };
        let mut hit = PixelHit {
            detector,
            ix: parse_u(2)?,
            iy: parse_u(3)?,
            energy_kev: parse_f(4)?,
            time_ns: parse_f(5)?,
            first_interaction: true,
        };
        let truth = if self.with_truth && !fields[6].is_empty() {
            hit.first_interaction = fields[10] == "1";
            let theta_scat = parse_f(9)?;
            // the file carries the truth angles; remaining fields are implied
            Some(PairTruth {
                e1_kev: ELECTRON_REST_ENERGY_KEV,
                e2_kev: scattered_energy(ELECTRON_REST_ENERGY_KEV, theta_scat),
                theta_scat_deg: theta_scat,
                theta1_deg: parse_f(6)?,
                theta2_deg: parse_f(7)?,
                phi1_deg: parse_f(8)?,
                phi2_deg: 0.0,
                kappa: -1.0,
                weight: 1.0,
            })
        } else {
            None
        };
        Ok(ParsedRow {
            event_id,
            hit,
            truth,
        })
    }
}

impl<R: BufRead> Iterator for EventCsvReader<R> {
    type Item = Result<EventRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let first = match self.pending.take() {
            Some(row) => row,
            None => loop {
                self.lineno += 1;
                match self.lines.next() {
                    None => return None,
                    Some(Err(e)) => return Some(Err(e.into())),
                    Some(Ok(line)) if line.trim().is_empty() => continue,
                    Some(Ok(line)) => match self.parse_row(&line) {
                        Ok(row) => break row,
                        Err(e) => return Some(Err(e)),
                    },
                }
            },
        };
        let mut record = EventRecord {
            event_id: first.event_id,
            hits: vec![first.hit],
            truth: first.truth,
        };
        loop {
            self.lineno += 1;
            match self.lines.next() {
                None => break,
                Some(Err(e)) => return Some(Err(e.into())),
                Some(Ok(line)) if line.trim().is_empty() => continue,
                Some(Ok(line)) => match self.parse_row(&line) {
                    Ok(row) if row.event_id == record.event_id => record.hits.push(row.hit),
                    Ok(row) => {
                        self.pending = Some(row);
                        break;
                    }
                    Err(e) => return Some(Err(e)),
                },
            }
        }
        Some(Ok(record))
    }
}

/// Histogram CSV: bin edges in degrees, raw counts, normalized mixed counts,
/// corrected values and errors.
pub fn write_histogram_csv(path: impl AsRef<Path>, hist: &DeltaPhiHistogram) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "bin_low_deg,bin_high_deg,raw,mixed,corrected,corrected_err")?;
    for i in 0..hist.n_bins() {
        writeln!(
            w,
            "{:.1},{:.1},{},{:.6},{:.6},{:.6}",
            hist.bin_edges[i],
            hist.bin_edges[i + 1],
            hist.raw[i],
            hist.mixed_norm[i],
            hist.corrected[i],
            hist.corrected_err[i]
        )?;
    }
    w.flush()?;
    Ok(())
}

fn json_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        "null".to_string()
    }
}

/// Flat fit report with a single canonical key order.
pub fn fit_report_json(fit: &FitResult, n_events: u64) -> String {
    format!(
        "{{\"M\": {}, \"mu\": {}, \"sigma_mu\": {}, \"chi2\": {}, \"ndf\": {}, \"R\": {}, \"sigma_R\": {}, \"n_events\": {}}}\n",
        json_num(fit.m),
        json_num(fit.mu),
        json_num(fit.sigma_mu),
        json_num(fit.chi2),
        fit.ndf,
        json_num(fit.r),
        json_num(fit.sigma_r),
        n_events
    )
}

pub fn write_fit_report(path: impl AsRef<Path>, fit: &FitResult, n_events: u64) -> Result<()> {
    std::fs::write(path, fit_report_json(fit, n_events))?;
    Ok(())
}

/// One line per cut: name, surviving count, fraction of the total.
pub fn write_cutflow(path: impl AsRef<Path>, flow: &CutflowReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "total {}", flow.total)?;
    for (name, count) in flow.rows() {
        let frac = if flow.total > 0 {
            count as f64 / flow.total as f64
        } else {
            0.0
        };
        writeln!(w, "{name} {count} {frac:.6}")?;
    }
    w.flush()?;
    Ok(())
}

/// Paths of every artifact produced by one pipeline run.
#[derive(Debug, Clone)]
pub struct ArtifactPaths {
    pub config: PathBuf,
    pub events: Option<PathBuf>,
    pub selected: PathBuf,
    pub cutflow: PathBuf,
    pub histogram: PathBuf,
    pub fit: PathBuf,
    pub manifest: PathBuf,
}

impl ArtifactPaths {
    pub fn for_prefix(prefix: &str, write_events: bool) -> Self {
        let p = |suffix: &str| PathBuf::from(format!("{prefix}_{suffix}"));
        ArtifactPaths {
            config: p("config.ini"),
            events: write_events.then(|| p("events.csv")),
            selected: p("selected.csv"),
            cutflow: p("cutflow.txt"),
            histogram: p("histogram.csv"),
            fit: p("fit.json"),
            manifest: p("manifest.txt"),
        }
    }
}

/// Run manifest: config hash and path, seed, counts, artifact paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub config_hash: String,
    pub master_seed: u64,
    pub n_pairs: u64,
    pub n_selected: u64,
    pub n_fitted: u64,
    pub config_path: String,
    pub artifact_paths: Vec<(String, String)>,
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "config_hash = {}", manifest.config_hash)?;
    writeln!(w, "master_seed = {}", manifest.master_seed)?;
    writeln!(w, "n_pairs = {}", manifest.n_pairs)?;
    writeln!(w, "n_selected = {}", manifest.n_selected)?;
    writeln!(w, "n_fitted = {}", manifest.n_fitted)?;
    writeln!(w, "config = {}", manifest.config_path)?;
    for (name, p) in &manifest.artifact_paths {
        writeln!(w, "artifact.{name} = {p}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut manifest = Manifest {
        config_hash: String::new(),
        master_seed: 0,
        n_pairs: 0,
        n_selected: 0,
        n_fitted: 0,
        config_path: String::new(),
        artifact_paths: Vec::new(),
    };
    for (lineno, line) in text.lines().enumerate() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| Error::Parse {
            path: path.as_ref().display().to_string(),
            line: lineno + 1,
            msg: format!("bad {what} '{value}'"),
        };
        match key {
            "config_hash" => manifest.config_hash = value.to_string(),
            "master_seed" => manifest.master_seed = value.parse().map_err(|_| bad("seed"))?,
            "n_pairs" => manifest.n_pairs = value.parse().map_err(|_| bad("count"))?,
            "n_selected" => manifest.n_selected = value.parse().map_err(|_| bad("count"))?,
            "n_fitted" => manifest.n_fitted = value.parse().map_err(|_| bad("count"))?,
            "config" => manifest.config_path = value.to_string(),
            k if k.starts_with("artifact.") => manifest
                .artifact_paths
                .push((k["artifact.".len()..].to_string(), value.to_string())),
            _ => {}
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_event(id: u64, with_truth: bool) -> EventRecord {
        let truth = with_truth.then_some(PairTruth {
            e1_kev: 511.0,
            e2_kev: 511.0,
            theta_scat_deg: 0.0,
            theta1_deg: 82.1234,
            theta2_deg: 84.5,
            phi1_deg: 90.0,
            phi2_deg: 0.0,
            kappa: 1.0,
            weight: 1.0,
        });
        EventRecord {
            event_id: id,
            hits: vec![
                PixelHit {
                    detector: DetectorId::A,
                    ix: 3,
                    iy: 4,
                    energy_kev: 255.5,
                    time_ns: 0.1234,
                    first_interaction: true,
                },
                PixelHit {
                    detector: DetectorId::B,
                    ix: 1,
                    iy: 2,
                    energy_kev: 300.0,
                    time_ns: -0.4,
                    first_interaction: false,
                },
            ],
            truth,
        }
    }

    #[test]
    fn event_round_trip_with_truth() {
        let mut buf = Vec::new();
        {
            let mut w = EventCsvWriter::new(&mut buf, true).unwrap();
            w.write_event(&sample_event(0, true)).unwrap();
            w.write_event(&sample_event(1, true)).unwrap();
            w.finish().unwrap();
        }
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(EVENT_HEADER));
        assert!(text.contains("255.500"));
        assert!(text.lines().count() == 5);

        let reader = EventCsvReader::new(BufReader::new(&buf[..]), "mem".into()).unwrap();
        let events: Vec<EventRecord> = reader.map(|e| e.unwrap()).collect();
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].hits.len(), 2);
        assert_eq!(events[0].hits[0].ix, 3);
        assert!((events[0].hits[0].energy_kev - 255.5).abs() < 1e-9);
        let t = events[1].truth.as_ref().unwrap();
        assert!((t.theta1_deg - 82.1234).abs() < 1e-9);
        assert!((t.delta_phi_deg() - 90.0).abs() < 1e-9);
        assert!(events[0].hits[0].first_interaction);
        assert!(!events[0].hits[1].first_interaction);
    }

    #[test]
    fn rewrite_is_byte_identical() {
        // format stability: read back and re-write reproduces the same bytes
        let mut buf = Vec::new();
        {
            let mut w = EventCsvWriter::new(&mut buf, true).unwrap();
            for i in 0..5 {
                w.write_event(&sample_event(i, true)).unwrap();
            }
            w.finish().unwrap();
        }
        let events: Vec<EventRecord> = EventCsvReader::new(BufReader::new(&buf[..]), "mem".into())
            .unwrap()
            .map(|e| e.unwrap())
            .collect();
        let mut buf2 = Vec::new();
        {
            let mut w = EventCsvWriter::new(&mut buf2, true).unwrap();
            for e in &events {
                w.write_event(e).unwrap();
            }
            w.finish().unwrap();
        }
        assert_eq!(buf, buf2);
    }

    #[test]
    fn truthless_files_have_short_header() {
        let mut buf = Vec::new();
        {
            let mut w = EventCsvWriter::new(&mut buf, false).unwrap();
            w.write_event(&sample_event(0, false)).unwrap();
            w.finish().unwrap();
        }
        let reader = EventCsvReader::new(BufReader::new(&buf[..]), "mem".into()).unwrap();
        let events: Vec<EventRecord> = reader.map(|e| e.unwrap()).collect();
        assert_eq!(events.len(), 1);
        assert!(events[0].truth.is_none());
    }

    #[test]
    fn malformed_rows_are_reported_with_location() {
        let text = format!("{EVENT_HEADER}\n0,A,3,4,notanumber,0.0\n");
        let reader = EventCsvReader::new(BufReader::new(text.as_bytes()), "mem".into()).unwrap();
        let first = reader.into_iter().next().unwrap();
        match first {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn fit_report_has_canonical_key_order() {
        let fit = FitResult {
            m: 1.5,
            mu: 0.4,
            sigma_mu: 0.01,
            chi2: 20.0,
            ndf: 22,
            r: 7.0 / 3.0,
            sigma_r: 0.05,
        };
        let json = fit_report_json(&fit, 1000);
        let m_pos = json.find("\"M\"").unwrap();
        let mu_pos = json.find("\"mu\"").unwrap();
        let r_pos = json.find("\"R\"").unwrap();
        let n_pos = json.find("\"n_events\"").unwrap();
        assert!(m_pos < mu_pos && mu_pos < r_pos && r_pos < n_pos);
        assert!(json.ends_with("}\n"));
        assert_eq!(fit_report_json(&fit, 1000), json);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.txt");
        let manifest = Manifest {
            config_hash: "abc123".into(),
            master_seed: 99,
            n_pairs: 1000,
            n_selected: 20,
            n_fitted: 18,
            config_path: "run_config.ini".into(),
            artifact_paths: vec![
                ("fit".into(), "run_fit.json".into()),
                ("histogram".into(), "run_histogram.csv".into()),
            ],
        };
        write_manifest(&path, &manifest).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back, manifest);
    }
}
