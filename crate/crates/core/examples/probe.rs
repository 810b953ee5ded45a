// temporary diagnostic: true 3-sigma coverage of the modulation fit
use aqpol::analysis::{acceptance_correct, fit_modulation, DeltaPhiHistogram};
use aqpol::hist::bin_average_cos2;
use aqpol::sampling::StreamSpec;
use rand_distr::{Distribution, Poisson};

fn main() {
    for seed in [50_003u64, 7, 123] {
        let mut rng = StreamSpec::new(seed, 0).rng();
        for mu_star in [0.0, 0.2, 0.4, 0.5] {
            let mut covered = 0u32;
            const REPS: u32 = 2000;
            for _ in 0..REPS {
                let mut hist = DeltaPhiHistogram::new(24);
                for b in 0..24 {
                    let c = bin_average_cos2(hist.bin_edges[b], hist.bin_edges[b + 1]);
                    let expected = 1e5 / 24.0 * (1.0 - mu_star * c);
                    hist.raw[b] = Poisson::new(expected).unwrap().sample(&mut rng) as u64;
                    hist.mixed[b] = 1e12;
                }
                acceptance_correct(&mut hist).unwrap();
                let fit = fit_modulation(&hist).unwrap();
                if (fit.mu - mu_star).abs() < 3.0 * fit.sigma_mu {
                    covered += 1;
                }
            }
            print!("  mu*={mu_star}: {:.4}", covered as f64 / REPS as f64);
        }
        println!("   (seed {seed})");
    }
}
