//! End-to-end orchestration: simulate -> select -> analyze, all seeded.
//!
//! Events are generated in chunks; inside a chunk every event owns its own
//! random stream keyed by the event id, so results are identical for any
//! worker count. File writes happen on the orchestrator thread in event-id
//! order.

use std::path::Path;

use rayon::prelude::*;

use crate::analysis::{
    self, analyze_pairs, DeltaPhiHistogram, FitResult, ReconstructedPair, ThetaWindows,
};
use crate::config::RunConfig;
use crate::detector::{digitize, EventRecord};
use crate::error::{Error, Result};
use crate::io::{
    self, ArtifactPaths, EventCsvReader, EventCsvWriter, Manifest,
};
use crate::sampling::{PairSampler, StreamSpec, STREAM_MIXING};
use crate::selection::{select_event, CutflowReport, SelectionConfig, Verdict};

const CHUNK: u64 = 16_384;

/// Everything a pipeline run produces, with the fitted modulation.
#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub paths: ArtifactPaths,
    pub cutflow: CutflowReport,
    pub fit: FitResult,
    pub histogram: DeltaPhiHistogram,
    pub n_generated: u64,
    pub n_selected: u64,
    /// Selected events that reconstructed in both arms (fit input pool).
    pub recon_pairs: Vec<ReconstructedPair>,
}

fn thread_pool(streams: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(streams)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))
}

/// Generate, digitize and select every event, streaming the per-event work
/// through `sink` in event-id order. Returns the cutflow.
fn generate_events(
    cfg: &RunConfig,
    mut sink: impl FnMut(&EventRecord, Verdict) -> Result<()>,
) -> Result<CutflowReport> {
    let sampler = PairSampler::new(cfg.pair_model())?;
    let setup = cfg.setup;
    let selection = cfg.selection_config();
    let keep_truth = cfg.output.write_truth;
    let master_seed = cfg.rng.master_seed;
    let pool = thread_pool(cfg.rng.streams)?;

    let mut cutflow = CutflowReport::default();
    let mut start = 0u64;
    while start < cfg.model.n_pairs {
        let end = (start + CHUNK).min(cfg.model.n_pairs);
        let chunk: Vec<(EventRecord, Verdict)> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|event_id| {
                    let mut rng = StreamSpec::new(master_seed, event_id).rng();
                    let pair = sampler.sample(&mut rng);
                    let record = digitize(event_id, &pair, &setup, &mut rng, keep_truth);
                    let verdict = select_event(&record, &selection);
                    (record, verdict)
                })
                .collect()
        });
        for (record, verdict) in &chunk {
            cutflow.record(*verdict);
            sink(record, *verdict)?;
        }
        start = end;
    }
    Ok(cutflow)
}

/// Simulate only: write the digitized event file. Returns the event count.
pub fn simulate_to_file(cfg: &RunConfig, path: &Path) -> Result<u64> {
    let mut writer = EventCsvWriter::create(path, cfg.output.write_truth)?;
    let mut n = 0u64;
    generate_events(cfg, |record, _| {
        n += 1;
        writer.write_event(record)
    })?;
    writer.finish()?;
    Ok(n)
}

/// Select events from a file, writing the accepted subset and the cutflow.
pub fn select_file(
    cfg: &SelectionConfig,
    input: &Path,
    selected_out: &Path,
    cutflow_out: &Path,
    write_truth: bool,
) -> Result<CutflowReport> {
    let reader = EventCsvReader::open(input)?;
    let mut writer = EventCsvWriter::create(selected_out, write_truth)?;
    let mut cutflow = CutflowReport::default();
    for record in reader {
        let record = record?;
        let verdict = select_event(&record, cfg);
        cutflow.record(verdict);
        if verdict.is_accepted() {
            writer.write_event(&record)?;
        }
    }
    writer.finish()?;
    io::write_cutflow(cutflow_out, &cutflow)?;
    Ok(cutflow)
}

/// Reconstruct both arms of already-selected events read from a file.
pub fn reconstruct_file(input: &Path) -> Result<Vec<ReconstructedPair>> {
    let reader = EventCsvReader::open(input)?;
    let mut pairs = Vec::new();
    for record in reader {
        if let Some(pair) = analysis::reconstruct_event(&record?) {
            pairs.push(pair);
        }
    }
    Ok(pairs)
}

/// Analysis settings independent of the simulation chain.
#[derive(Debug, Clone, Copy)]
pub struct AnalysisRequest {
    pub windows: ThetaWindows,
    pub bins: usize,
    pub mix: usize,
    pub mix_seed: u64,
}

/// Histogram + mixing + correction + fit on reconstructed pairs.
pub fn analyze_reconstructed(
    pairs: &[ReconstructedPair],
    request: &AnalysisRequest,
) -> Result<(DeltaPhiHistogram, FitResult)> {
    let mut mix_rng = StreamSpec::new(request.mix_seed, STREAM_MIXING).rng();
    analyze_pairs(pairs, &request.windows, request.bins, request.mix, &mut mix_rng)
}

/// Full pipeline: simulate, select, analyze; writes every artifact and the
/// manifest. Same config and seed give byte-identical artifacts for any
/// worker count.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutputs> {
    let paths = ArtifactPaths::for_prefix(&cfg.output.prefix, cfg.output.write_events);
    if let Some(parent) = Path::new(&cfg.output.prefix).parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }

    std::fs::write(&paths.config, cfg.to_ini_string())?;

    let mut events_writer = match &paths.events {
        Some(p) => Some(EventCsvWriter::create(p, cfg.output.write_truth)?),
        None => None,
    };
    let mut selected_writer = EventCsvWriter::create(&paths.selected, cfg.output.write_truth)?;
    let mut recon_pairs: Vec<ReconstructedPair> = Vec::new();

    let cutflow = generate_events(cfg, |record, verdict| {
        if let Some(w) = events_writer.as_mut() {
            w.write_event(record)?;
        }
        if verdict.is_accepted() {
            selected_writer.write_event(record)?;
            if let Some(pair) = analysis::reconstruct_event(record) {
                recon_pairs.push(pair);
            }
        }
        Ok(())
    })?;
    if let Some(w) = events_writer {
        w.finish()?;
    }
    selected_writer.finish()?;
    io::write_cutflow(&paths.cutflow, &cutflow)?;

    let request = AnalysisRequest {
        windows: cfg.theta_windows(),
        bins: cfg.analysis.bins,
        mix: cfg.analysis.mix,
        mix_seed: cfg.rng.master_seed,
    };
    let (histogram, fit) = analyze_reconstructed(&recon_pairs, &request)?;
    io::write_histogram_csv(&paths.histogram, &histogram)?;
    io::write_fit_report(&paths.fit, &fit, histogram.raw_total())?;

    let mut artifact_paths = vec![
        ("config".to_string(), paths.config.display().to_string()),
        ("selected".to_string(), paths.selected.display().to_string()),
        ("cutflow".to_string(), paths.cutflow.display().to_string()),
        ("histogram".to_string(), paths.histogram.display().to_string()),
        ("fit".to_string(), paths.fit.display().to_string()),
    ];
    if let Some(p) = &paths.events {
        artifact_paths.insert(1, ("events".to_string(), p.display().to_string()));
    }
    let manifest = Manifest {
        config_hash: format!("{:016x}", cfg.hash()),
        master_seed: cfg.rng.master_seed,
        n_pairs: cfg.model.n_pairs,
        n_selected: cutflow.accepted,
        n_fitted: histogram.raw_total(),
        config_path: paths.config.display().to_string(),
        artifact_paths,
    };
    io::write_manifest(&paths.manifest, &manifest)?;

    Ok(RunOutputs {
        paths,
        cutflow,
        fit,
        histogram,
        n_generated: cfg.model.n_pairs,
        n_selected: cutflow.accepted,
        recon_pairs,
    })
}

/// Re-run a finished pipeline from its manifest (uses the recorded resolved
/// config; the output prefix may be overridden to write elsewhere).
pub fn rerun_from_manifest(manifest_path: &Path, prefix_override: Option<&str>) -> Result<RunOutputs> {
    let manifest = io::read_manifest(manifest_path)?;
    let mut cfg = RunConfig::from_ini_file(&manifest.config_path)?;
    if format!("{:016x}", cfg.hash()) != manifest.config_hash {
        return Err(Error::config(format!(
            "config {} does not match the manifest hash",
            manifest.config_path
        )));
    }
    if let Some(prefix) = prefix_override {
        cfg.output.prefix = prefix.to_string();
    }
    run_pipeline(&cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(dir: &Path, extra: &str) -> RunConfig {
        let text = format!(
            "[model]\nn_pairs = 60000\n{extra}\n[output]\nprefix = {}/run\n",
            dir.display()
        );
        RunConfig::from_ini_str(&text).unwrap()
    }

    #[test]
    fn pipeline_produces_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path(), "");
        let out = run_pipeline(&cfg).unwrap();
        assert!(out.paths.config.exists());
        assert!(out.paths.events.as_ref().unwrap().exists());
        assert!(out.paths.selected.exists());
        assert!(out.paths.cutflow.exists());
        assert!(out.paths.histogram.exists());
        assert!(out.paths.fit.exists());
        assert!(out.paths.manifest.exists());
        assert!(out.n_selected > 0);
        assert!(out.cutflow.accepted <= out.cutflow.triggered);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let dir = tempfile::tempdir().unwrap();
        let one = {
            let mut cfg = small_config(dir.path(), "");
            cfg.rng.streams = 1;
            cfg.output.prefix = format!("{}/one", dir.path().display());
            run_pipeline(&cfg).unwrap()
        };
        let eight = {
            let mut cfg = small_config(dir.path(), "");
            cfg.rng.streams = 8;
            cfg.output.prefix = format!("{}/eight", dir.path().display());
            run_pipeline(&cfg).unwrap()
        };
        assert_eq!(one.fit.mu, eight.fit.mu);
        assert_eq!(one.cutflow, eight.cutflow);
        let a = std::fs::read(one.paths.events.unwrap()).unwrap();
        let b = std::fs::read(eight.paths.events.unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn staged_files_match_pipeline_counts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path(), "");
        let out = run_pipeline(&cfg).unwrap();

        // stage the same events through the file-based path
        let events = out.paths.events.as_ref().unwrap();
        let selected2 = dir.path().join("staged_selected.csv");
        let cutflow2 = dir.path().join("staged_cutflow.txt");
        let flow = select_file(
            &cfg.selection_config(),
            events,
            &selected2,
            &cutflow2,
            cfg.output.write_truth,
        )
        .unwrap();
        // file energies are rounded to 3 decimals; window-edge flips are
        // possible in principle, so compare within a small slack
        let diff = flow.accepted.abs_diff(out.cutflow.accepted);
        assert!(diff <= 2, "staged {} vs pipeline {}", flow.accepted, out.cutflow.accepted);

        let pairs = reconstruct_file(&selected2).unwrap();
        assert_eq!(pairs.len() as u64 + (out.n_selected - pairs.len() as u64), out.n_selected);
    }

    #[test]
    fn manifest_rerun_reproduces_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path(), "");
        let out = run_pipeline(&cfg).unwrap();
        let rerun_prefix = format!("{}/rerun", dir.path().display());
        let again = rerun_from_manifest(&out.paths.manifest, Some(&rerun_prefix)).unwrap();
        for (a, b) in [
            (&out.paths.selected, &again.paths.selected),
            (&out.paths.cutflow, &again.paths.cutflow),
            (&out.paths.histogram, &again.paths.histogram),
            (&out.paths.fit, &again.paths.fit),
        ] {
            let left = std::fs::read(a).unwrap();
            let right = std::fs::read(b).unwrap();
            assert_eq!(left, right, "{} differs", a.display());
        }
    }
}
