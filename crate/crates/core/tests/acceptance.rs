//! Acceptance suite: every shipping criterion of the toolkit, one test per
//! criterion, each printing a single PASS/FAIL line (run with --nocapture to
//! see them). The statistical criteria use fixed seeds, so the verdicts are
//! reproducible.

mod common;

use std::sync::LazyLock;

use aqpol::analysis::{
    acceptance_correct, analyze_pairs, estimate_theta_systematic, fit_modulation,
    DeltaPhiHistogram, ReconstructedPair, ReconstructedScatter, ThetaWindows,
};
use aqpol::config::RunConfig;
use aqpol::detector::{angular_coverage, DetectorGeometry};
use aqpol::hist::{delta_phi_bin_index, wrap_delta_phi};
use aqpol::physics::{
    analyzing_power, integrate_acceptance, kinematic_factors, mu_from_r, optimal_theta, ratio_r,
    scattered_energy, theory_modulation,
};
use aqpol::pipeline::{run_pipeline, RunOutputs};
use aqpol::sampling::{sample_delta_phi, StreamSpec, ThetaMarginalSampler, STREAM_MIXING};
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use common::{chi2_pvalue, pearson_chi2};

/// Event count for the end-to-end statistical criteria.
const N_ACCEPTANCE_PAIRS: u64 = 24_000_000;

fn check(criterion: &str, ok: bool, details: &str) {
    println!(
        "[acceptance] {criterion}: {} ({details})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{criterion} failed: {details}");
}

struct SharedRun {
    _dir: tempfile::TempDir,
    out: RunOutputs,
    cfg: RunConfig,
}

fn acceptance_run(dir: &std::path::Path, name: &str, model: &str) -> (RunConfig, RunOutputs) {
    let cfg = RunConfig::from_ini_str(&format!(
        "[model]\n{model}\nn_pairs = {N_ACCEPTANCE_PAIRS}\n\
         [output]\nprefix = {}/{name}\nwrite_events = false\nwrite_truth = false\n",
        dir.display()
    ))
    .expect("valid acceptance config");
    let out = run_pipeline(&cfg).expect("pipeline run");
    (cfg, out)
}

/// Direct-configuration run shared between the Table-1 and systematic criteria.
static DIRECT_RUN: LazyLock<SharedRun> = LazyLock::new(|| {
    let dir = tempfile::tempdir().expect("tempdir");
    let (cfg, out) = acceptance_run(dir.path(), "direct", "mode = direct\nkappa = 1.0");
    SharedRun {
        _dir: dir,
        out,
        cfg,
    }
});

#[test]
fn c01_theory_point_values() {
    let entangled = theory_modulation(511.0, 82.0, 511.0, 82.0, 1.0);
    let separable = theory_modulation(511.0, 82.0, 511.0, 82.0, 0.5);
    let ok = (entangled.r - 2.84).abs() <= 0.05 && (separable.r - 1.63).abs() <= 0.02;
    check(
        "C01 theory point values",
        ok,
        &format!(
            "R(kappa=1) = {:.4} vs 2.84+-0.05, R(kappa=0.5) = {:.4} vs 1.63+-0.02",
            entangled.r, separable.r
        ),
    );
}

#[test]
fn c02_scattered_energies() {
    let e30 = scattered_energy(511.0, 30.0);
    let e50 = scattered_energy(511.0, 50.0);
    let ok = (450.0..=451.0).contains(&e30) && (376.0..=377.0).contains(&e50);
    check(
        "C02 scattered energies",
        ok,
        &format!("E'(30 deg) = {e30:.3} keV in [450,451], E'(50 deg) = {e50:.3} keV in [376,377]"),
    );
}

#[test]
fn c03_optimal_angles() {
    let t511 = optimal_theta(511.0);
    let t450 = optimal_theta(450.0);
    let t376 = optimal_theta(376.0);
    let ok =
        (t511 - 82.0).abs() <= 0.5 && (t450 - 83.0).abs() <= 0.5 && (t376 - 84.0).abs() <= 0.5;
    check(
        "C03 optimal angles",
        ok,
        &format!("theta*(511) = {t511:.2}, theta*(450) = {t450:.2}, theta*(376) = {t376:.2}"),
    );
}

#[test]
fn c04_identity_suite() {
    let mut max_identity = 0.0f64;
    for i in 1..1800 {
        let theta = i as f64 * 0.1;
        let k = kinematic_factors(theta).unwrap();
        max_identity = max_identity.max((analyzing_power(511.0, theta) - k.g / k.f).abs());
    }
    let mut max_round_trip = 0.0f64;
    for mu in [-0.9, -0.417, 0.0, 0.1234, 0.478, 0.999] {
        let (r, _) = ratio_r(mu, 0.0).unwrap();
        max_round_trip = max_round_trip.max((mu_from_r(r) - mu).abs());
    }
    let ok = max_identity < 1e-12 && max_round_trip < 1e-12;
    check(
        "C04 identity suite",
        ok,
        &format!("max |A - G/F| = {max_identity:.2e}, max R<->mu round trip = {max_round_trip:.2e}"),
    );
}

#[test]
fn c05_sampler_vs_oracle() {
    const N: usize = 1_000_000;
    const NBINS: usize = 24;
    let window = (72.0, 90.0);
    let sampler = ThetaMarginalSampler::with_window(511.0, window).unwrap();
    let mut rng = StreamSpec::new(50_001, 0).rng();
    let mut counts = vec![0.0f64; NBINS];
    for _ in 0..N {
        let t1 = sampler.sample(&mut rng);
        let t2 = sampler.sample(&mut rng);
        let amp = analyzing_power(511.0, t1) * analyzing_power(511.0, t2);
        counts[delta_phi_bin_index(sample_delta_phi(amp, &mut rng), NBINS)] += 1.0;
    }
    let oracle = integrate_acceptance(window, window, 511.0, 511.0, 1.0, NBINS).unwrap();
    let expected: Vec<f64> = oracle.bin_prob.iter().map(|p| p * N as f64).collect();
    let (chi2, dof) = pearson_chi2(&counts, &expected);
    let p = chi2_pvalue(chi2, dof);
    check(
        "C05 sampler vs oracle",
        p > 0.01,
        &format!("chi2/dof = {chi2:.1}/{dof}, p = {p:.4} (oracle mu = {:.4})", oracle.prediction.mu),
    );
}

#[test]
fn c06_moment_check() {
    const N: usize = 1_000_000;
    let mut rng = StreamSpec::new(50_002, 0).rng();
    let mut details = Vec::new();
    let mut ok = true;
    for amp in [0.0, 0.24, 0.478] {
        let mut sum = 0.0;
        for _ in 0..N {
            sum += (2.0 * sample_delta_phi(amp, &mut rng).to_radians()).cos();
        }
        let mean = sum / N as f64;
        let sigma = ((0.5 - amp * amp / 4.0) / N as f64).sqrt();
        let pull = (mean + amp / 2.0) / sigma;
        ok &= pull.abs() < 3.0;
        details.push(format!("amp {amp}: mean = {mean:.5} vs {:.5} (pull {pull:+.2})", -amp / 2.0));
    }
    check("C06 moment check", ok, &details.join("; "));
}

/// Raw Poisson histogram for an injected modulation, with a flat high-count
/// mixed histogram so the correction only rescales.
fn poisson_histogram(mu_star: f64, n_events: f64, rng: &mut impl Rng) -> DeltaPhiHistogram {
    const NBINS: usize = 24;
    let mut hist = DeltaPhiHistogram::new(NBINS);
    for b in 0..NBINS {
        let c = aqpol::hist::bin_average_cos2(hist.bin_edges[b], hist.bin_edges[b + 1]);
        let width_frac = 1.0 / NBINS as f64;
        let expected = n_events * width_frac * (1.0 - mu_star * c);
        hist.raw[b] = Poisson::new(expected).unwrap().sample(rng) as u64;
        hist.mixed[b] = 1e12;
    }
    acceptance_correct(&mut hist).unwrap();
    hist
}

#[test]
fn c07_fit_recovery_and_error_scaling() {
    // 3-sigma coverage must be at least 99%; 2000 trials per injected value
    // keep the binomial noise on the verdict far below the margin
    const TRIALS: u32 = 2000;
    let mut rng = StreamSpec::new(50_003, 0).rng();
    let mut ok = true;
    let mut details = Vec::new();
    for mu_star in [0.0, 0.1, 0.2, 0.3, 0.4, 0.5] {
        let mut covered = 0u32;
        for _ in 0..TRIALS {
            let hist = poisson_histogram(mu_star, 1e5, &mut rng);
            let fit = fit_modulation(&hist).unwrap();
            if (fit.mu - mu_star).abs() < 3.0 * fit.sigma_mu {
                covered += 1;
            }
        }
        ok &= covered * 100 >= 99 * TRIALS;
        details.push(format!("mu* = {mu_star}: {covered}/{TRIALS}"));
    }

    // sigma_mu halves when the event count quadruples
    let mean_sigma = |n: f64, rng: &mut rand_chacha::ChaCha8Rng| {
        let mut total = 0.0;
        for _ in 0..50 {
            let hist = poisson_histogram(0.3, n, rng);
            total += fit_modulation(&hist).unwrap().sigma_mu;
        }
        total / 50.0
    };
    let ratio = mean_sigma(4e5, &mut rng) / mean_sigma(1e5, &mut rng);
    ok &= (0.45..=0.55).contains(&ratio);
    details.push(format!("sigma ratio 4N/N = {ratio:.3}"));
    check("C07 fit recovery", ok, &details.join("; "));
}

#[test]
fn c08_event_mixing_flatness() {
    const N: usize = 100_000;
    let mut rng = StreamSpec::new(50_004, 0).rng();
    let mk = |theta: f64, phi: f64| ReconstructedScatter {
        theta_deg: theta,
        phi_deg: phi,
        e_sum_kev: 511.0,
        lower_energy_first: true,
    };
    let pairs: Vec<ReconstructedPair> = (0..N)
        .map(|_| ReconstructedPair {
            a: mk(rng.random_range(72.0..90.0), rng.random_range(-180.0..180.0)),
            b: mk(rng.random_range(72.0..90.0), rng.random_range(-180.0..180.0)),
        })
        .collect();
    let windows = ThetaWindows::new((72.0, 90.0), (72.0, 90.0));
    let (_, fit) = analyze_pairs(&pairs, &windows, 24, 100, &mut StreamSpec::new(50_005, 0).rng())
        .unwrap();
    let pull = fit.mu / fit.sigma_mu;
    check(
        "C08 event-mixing flatness",
        pull.abs() < 3.0,
        &format!("uncorrelated input: mu = {:.4} +- {:.4} (pull {pull:+.2})", fit.mu, fit.sigma_mu),
    );
}

#[test]
fn c09_angular_coverage() {
    let near = angular_coverage(&DetectorGeometry::standard(50.0));
    let far = angular_coverage(&DetectorGeometry::standard(75.0));
    let ok = (near - 10.0).abs() <= 0.3 && (far - 6.7).abs() <= 0.3;
    check(
        "C09 angular coverage",
        ok,
        &format!("{near:.2} deg at 50 mm (10.0+-0.3), {far:.2} deg at 75 mm (6.7+-0.3)"),
    );
}

#[test]
fn c10_table1_dichotomy() {
    let dir = tempfile::tempdir().unwrap();
    let direct = &DIRECT_RUN.out;
    let (_, scat0) = acceptance_run(dir.path(), "scat0", "mode = active\ntheta_scat_deg = 0\nkappa = 1.0");
    let (_, scat10) = acceptance_run(dir.path(), "scat10", "mode = active\ntheta_scat_deg = 10\nkappa = 1.0");
    let (_, scat30) = acceptance_run(dir.path(), "scat30", "mode = active\ntheta_scat_deg = 30\nkappa = 1.0");
    let (_, decohered) = acceptance_run(dir.path(), "scat30k0", "mode = active\ntheta_scat_deg = 30\nkappa = 0.0");

    let entangled = [
        ("direct", &direct.fit),
        ("scat0", &scat0.fit),
        ("scat10", &scat10.fit),
        ("scat30", &scat30.fit),
    ];
    let mut ok = true;
    let mut details = Vec::new();
    for (name, fit) in &entangled {
        let in_band = (0.25..=0.45).contains(&fit.mu);
        ok &= in_band;
        details.push(format!("{name}: mu = {:.4} +- {:.4}", fit.mu, fit.sigma_mu));
    }
    for i in 0..entangled.len() {
        for j in i + 1..entangled.len() {
            let (ni, fi) = entangled[i];
            let (nj, fj) = entangled[j];
            let delta = (fi.mu - fj.mu).abs();
            let limit = 2.0 * (fi.sigma_mu.powi(2) + fj.sigma_mu.powi(2)).sqrt();
            if delta > limit {
                ok = false;
                details.push(format!("{ni} vs {nj}: |dmu| = {delta:.4} > {limit:.4}"));
            }
        }
    }
    let zero_pull = decohered.fit.mu / decohered.fit.sigma_mu;
    ok &= zero_pull.abs() < 3.0;
    details.push(format!(
        "kappa=0: mu = {:.4} +- {:.4} (pull {zero_pull:+.2})",
        decohered.fit.mu, decohered.fit.sigma_mu
    ));
    check("C10 Table-1 dichotomy", ok, &details.join("; "));
}

#[test]
fn c11_systematic_direction_and_size() {
    let shared = &*DIRECT_RUN;
    let mut mix_rng = StreamSpec::new(shared.cfg.rng.master_seed, STREAM_MIXING).rng();
    let rel = estimate_theta_systematic(
        &shared.out.recon_pairs,
        &shared.cfg.theta_windows(),
        6.5,
        shared.cfg.analysis.bins,
        shared.cfg.analysis.mix,
        &mut mix_rng,
    )
    .unwrap();
    let ok = rel > 0.0 && (0.01..=0.15).contains(&rel);
    check(
        "C11 polar-window systematic",
        ok,
        &format!("relative mu decrease for sigma_theta = 6.5 deg: {:.1}% (expect positive, 1-15%)", rel * 100.0),
    );
}

#[test]
fn c12_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config_text = |prefix: &str, streams: usize| {
        format!(
            "[model]\nn_pairs = 20000\n[rng]\nstreams = {streams}\n[output]\nprefix = {prefix}\n"
        )
    };

    // identical reruns must be byte-identical in every artifact
    let prefix = format!("{}/twice", dir.path().display());
    let cfg = RunConfig::from_ini_str(&config_text(&prefix, 2)).unwrap();
    let first = run_pipeline(&cfg).unwrap();
    let mut snapshots = Vec::new();
    let all_paths = |out: &RunOutputs| {
        let mut v = vec![
            out.paths.config.clone(),
            out.paths.selected.clone(),
            out.paths.cutflow.clone(),
            out.paths.histogram.clone(),
            out.paths.fit.clone(),
            out.paths.manifest.clone(),
        ];
        if let Some(e) = &out.paths.events {
            v.push(e.clone());
        }
        v
    };
    for p in all_paths(&first) {
        snapshots.push((p.clone(), std::fs::read(&p).unwrap()));
    }
    run_pipeline(&cfg).unwrap();
    let rerun_identical = snapshots
        .iter()
        .all(|(p, bytes)| &std::fs::read(p).unwrap() == bytes);

    // worker count must not change any data artifact
    let one = run_pipeline(
        &RunConfig::from_ini_str(&config_text(&format!("{}/w1", dir.path().display()), 1)).unwrap(),
    )
    .unwrap();
    let eight = run_pipeline(
        &RunConfig::from_ini_str(&config_text(&format!("{}/w8", dir.path().display()), 8)).unwrap(),
    )
    .unwrap();
    let worker_identical = [
        (&one.paths.events, &eight.paths.events),
    ]
    .iter()
    .all(|(a, b)| {
        std::fs::read(a.as_ref().unwrap()).unwrap() == std::fs::read(b.as_ref().unwrap()).unwrap()
    }) && [
        (&one.paths.selected, &eight.paths.selected),
        (&one.paths.cutflow, &eight.paths.cutflow),
        (&one.paths.histogram, &eight.paths.histogram),
        (&one.paths.fit, &eight.paths.fit),
    ]
    .iter()
    .all(|(a, b)| std::fs::read(a).unwrap() == std::fs::read(b).unwrap());

    check(
        "C12 determinism",
        rerun_identical && worker_identical,
        &format!("rerun byte-identical: {rerun_identical}, 1-vs-8 workers identical: {worker_identical}"),
    );
}
