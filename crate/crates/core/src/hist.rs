//! Shared conventions for the azimuthal-difference axis.
//!
//! Delta-phi is a circular variable reported in [-180, 180) degrees. The
//! histogram axis is shifted by half a bin so that the discrete azimuths
//! produced by a square pixel grid (0, +-45, +-90, ...) fall at bin centers
//! instead of bin edges; with the default 24 bins the edges run from -187.5
//! to +172.5 degrees and the centers are the multiples of 15.

/// Wrap an angle in degrees into [-180, 180).
pub fn wrap_delta_phi(deg: f64) -> f64 {
    let w = deg - 360.0 * ((deg + 180.0) / 360.0).floor();
    // floor rounding can land exactly on +180 for inputs like -180 - 1e-14
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Bin edges for `n` uniform delta-phi bins, shifted by half a bin width.
///
/// Returns `n + 1` edges; the first edge is `-180 - width/2`. The first bin
/// is the wrap-around bin centered on -180 degrees.
pub fn delta_phi_bin_edges(n: usize) -> Vec<f64> {
    assert!(n >= 2, "need at least two bins");
    let width = 360.0 / n as f64;
    (0..=n).map(|k| -180.0 - 0.5 * width + k as f64 * width).collect()
}

/// Index of the bin containing `delta_phi_deg` under the shifted-edge convention.
pub fn delta_phi_bin_index(delta_phi_deg: f64, n: usize) -> usize {
    let width = 360.0 / n as f64;
    let x = wrap_delta_phi(delta_phi_deg);
    let idx = ((x + 180.0 + 0.5 * width) / width).floor() as isize;
    (idx.rem_euclid(n as isize)) as usize
}

/// Average of cos(2*phi) over one bin, for bin-averaged fitting.
pub fn bin_average_cos2(lo_deg: f64, hi_deg: f64) -> f64 {
    let lo = lo_deg.to_radians();
    let hi = hi_deg.to_radians();
    ((2.0 * hi).sin() - (2.0 * lo).sin()) / (2.0 * (hi - lo))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_into_half_open_interval() {
        assert_eq!(wrap_delta_phi(185.0), -175.0);
        assert_eq!(wrap_delta_phi(-180.0), -180.0);
        assert_eq!(wrap_delta_phi(180.0), -180.0);
        assert_eq!(wrap_delta_phi(540.0), -180.0);
        assert_eq!(wrap_delta_phi(90.0), 90.0);
        assert!((wrap_delta_phi(-190.0) - 170.0).abs() < 1e-12);
    }

    #[test]
    fn edges_are_shifted_half_bin() {
        let e = delta_phi_bin_edges(24);
        assert_eq!(e.len(), 25);
        assert!((e[0] + 187.5).abs() < 1e-12);
        assert!((e[24] - 172.5).abs() < 1e-12);
        // pixel-grid azimuth differences sit at bin centers
        for grid_angle in [-90.0, -45.0, 0.0, 45.0, 90.0] {
            let b = delta_phi_bin_index(grid_angle, 24);
            let center = 0.5 * (e[b] + e[b + 1]);
            assert!((center - grid_angle).abs() < 1e-12);
        }
    }

    #[test]
    fn wraparound_bin_collects_both_ends() {
        // values near +-180 wrap into bin 0 (centered on -180)
        assert_eq!(delta_phi_bin_index(-180.0, 24), 0);
        assert_eq!(delta_phi_bin_index(179.0, 24), 0);
        assert_eq!(delta_phi_bin_index(-179.0, 24), 0);
        assert_eq!(delta_phi_bin_index(0.0, 24), 12);
    }

    #[test]
    fn bin_average_matches_midpoint_for_narrow_bins() {
        let avg = bin_average_cos2(89.0, 91.0);
        let mid = (2.0f64 * 90.0f64.to_radians()).cos();
        assert!((avg - mid).abs() < 1e-3);
    }
}
