//! Polar/Cartesian geometry checked against brute-force oracles.

use std::f64::consts::TAU;

use proptest::prelude::*;
use rpr_core::eval::ring_key;
use rpr_core::scan::{
    polar_to_cartesian, read_scan, rotate_azimuth, write_scan, CartesianProjector, PolarScan,
};

fn scan_from(a: usize, b: usize, bin: f64, mut f: impl FnMut(usize, usize) -> f64) -> PolarScan {
    let power = (0..a * b)
        .map(|i| f(i / b, i % b).clamp(0.0, 1.0) as f32)
        .collect();
    PolarScan::new(a, b, bin, power, 0.0).unwrap()
}

/// Bilinear lookup written from the documented conventions alone.
fn oracle_pixel(s: &PolarScan, side: usize, px: f64, row: usize, col: usize) -> f64 {
    let c = (side as f64 - 1.0) / 2.0;
    let (fwd, left) = ((c - row as f64) * px, (c - col as f64) * px);
    let range = (fwd * fwd + left * left).sqrt();
    if range > s.max_range() {
        return 0.0;
    }
    let a_count = s.azimuths() as f64;
    let mut bearing = left.atan2(fwd);
    if bearing < 0.0 {
        bearing += TAU;
    }
    let az = bearing / TAU * a_count;
    let rho = range / s.bin_size();
    let mut total = 0.0;
    for da in 0..2 {
        for db in 0..2 {
            let a_idx = az.floor() + da as f64;
            let b_idx = rho.floor() + db as f64;
            let wa = 1.0 - (az - a_idx).abs();
            let wb = 1.0 - (rho - b_idx).abs();
            let b_clamped = (b_idx as usize).min(s.bins() - 1);
            let a_wrapped = (a_idx as usize) % s.azimuths();
            total += wa.max(0.0) * wb.max(0.0) * f64::from(s.get(a_wrapped, b_clamped));
        }
    }
    total.clamp(0.0, 1.0)
}

#[test]
fn projection_matches_pixel_by_pixel_oracle() {
    let (a, b, bin, side, px) = (48, 40, 1.5, 40, 2.5);
    let mut rng_state = 17u64;
    let mut next = || {
        rng_state = rng_state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (rng_state >> 40) as f64 / (1u64 << 24) as f64
    };
    let s = scan_from(a, b, bin, |_, _| next());
    let cart = polar_to_cartesian(&s, side, px).unwrap();
    for row in 0..side {
        for col in 0..side {
            let want = oracle_pixel(&s, side, px, row, col);
            assert!(
                (cart.get(row, col) - want).abs() < 1e-9,
                "pixel ({row},{col}): {} vs {want}",
                cart.get(row, col)
            );
        }
    }
}

#[test]
fn single_bright_cell_lands_at_its_polar_coordinate() {
    let (a, b, bin, side, px) = (64, 50, 1.0, 64, 1.5);
    for &(a_star, b_star) in &[(0usize, 20usize), (5, 30), (16, 12), (40, 45), (63, 8)] {
        let s = scan_from(a, b, bin, |i, j| {
            if (i, j) == (a_star, b_star) {
                1.0
            } else {
                0.0
            }
        });
        let cart = polar_to_cartesian(&s, side, px).unwrap();
        let mut best = (0, 0);
        let mut oracle_best = (0, 0, f64::MIN);
        for row in 0..side {
            for col in 0..side {
                if cart.get(row, col) > cart.get(best.0, best.1) {
                    best = (row, col);
                }
                let v = oracle_pixel(&s, side, px, row, col);
                if v > oracle_best.2 {
                    oracle_best = (row, col, v);
                }
            }
        }
        assert_eq!(best, (oracle_best.0, oracle_best.1));
        // brightest pixel centre lies within one pixel of the cell's position
        let theta = TAU * a_star as f64 / a as f64;
        let r = b_star as f64 * bin;
        let (fwd, left) = cart.pixel_centre(best.0, best.1);
        let miss = (fwd - r * theta.cos()).hypot(left - r * theta.sin());
        assert!(
            miss <= px * std::f64::consts::SQRT_2,
            "cell ({a_star},{b_star}) peaks {miss} m away"
        );
    }
}

#[test]
fn uniform_field_is_constant_inside_the_range_disc() {
    let s = PolarScan::uniform(32, 20, 2.0, 0.625, 1.0).unwrap();
    let cart = polar_to_cartesian(&s, 32, 3.0).unwrap();
    for row in 0..32 {
        for col in 0..32 {
            let (f, l) = cart.pixel_centre(row, col);
            let want = if f.hypot(l) <= 40.0 { 0.625 } else { 0.0 };
            assert!((cart.get(row, col) - want).abs() < 1e-7);
        }
    }
}

#[test]
fn paper_resolution_geometry_gives_full_size_image() {
    let s = PolarScan::uniform(400, 3768, 0.0438, 0.5, 0.0).unwrap();
    let cart = polar_to_cartesian(&s, 256, 0.5).unwrap();
    assert_eq!(cart.side(), 256);
    assert_eq!(cart.power().len(), 256 * 256);
    // 64 m half-width sits inside the 165 m range: nothing is blanked
    assert!(cart.power().iter().all(|&v| (v - 0.5).abs() < 1e-7));
}

#[test]
fn bad_geometry_is_rejected() {
    let s = PolarScan::uniform(8, 8, 1.0, 0.0, 0.0).unwrap();
    assert!(polar_to_cartesian(&s, 16, 0.0).is_err());
    assert!(polar_to_cartesian(&s, 16, -1.0).is_err());
    assert!(polar_to_cartesian(&s, 1, 1.0).is_err());
    assert!(PolarScan::uniform(8, 8, 0.0, 0.0, 0.0).is_err());
}

#[test]
fn rotation_identities_are_exact() {
    let s = scan_from(36, 10, 1.0, |i, j| ((i * 7 + j * 3) % 11) as f64 / 10.0);
    assert_eq!(rotate_azimuth(&s, 0), s);
    assert_eq!(rotate_azimuth(&s, 36), s);
    for (p, q) in [(3, 5), (20, 30), (35, 1)] {
        assert_eq!(
            rotate_azimuth(&rotate_azimuth(&s, p), q),
            rotate_azimuth(&s, p + q)
        );
    }
    let proj = CartesianProjector::new(36, 10, 1.0, 16, 1.25).unwrap();
    for r in [0, 1, 9, 35] {
        assert_eq!(
            proj.project_rotated(&s, r).unwrap(),
            proj.project(&rotate_azimuth(&s, r)).unwrap()
        );
    }
}

/// Bilinear sample of a Cartesian image at a metric (forward, left) point.
fn sample_cartesian(img: &rpr_core::scan::CartesianScan, fwd: f64, left: f64) -> Option<f64> {
    let side = img.side();
    let c = (side as f64 - 1.0) / 2.0;
    let row = c - fwd / img.pixel_size();
    let col = c - left / img.pixel_size();
    if row < 0.0 || col < 0.0 || row > (side - 1) as f64 || col > (side - 1) as f64 {
        return None;
    }
    let (r0, c0) = (row.floor() as usize, col.floor() as usize);
    let (r1, c1) = ((r0 + 1).min(side - 1), (c0 + 1).min(side - 1));
    let (fr, fc) = (row - r0 as f64, col - c0 as f64);
    let top = img.get(r0, c0) * (1.0 - fc) + img.get(r0, c1) * fc;
    let bottom = img.get(r1, c0) * (1.0 - fc) + img.get(r1, c1) * fc;
    Some(top * (1.0 - fr) + bottom * fr)
}

#[test]
fn polar_rotation_is_an_in_plane_rotation_of_the_image() {
    let (a, b, bin, side, px) = (360, 200, 0.5, 64, 1.5);
    // band-limited field defined in the sensor frame
    let field = |x: f64, y: f64| {
        0.5 + 0.2 * (0.11 * x + 0.05 * y).sin() + 0.15 * (0.07 * y - 0.03 * x).cos()
    };
    let s = scan_from(a, b, bin, |i, j| {
        let th = TAU * i as f64 / a as f64;
        let r = j as f64 * bin;
        field(r * th.cos(), r * th.sin())
    });
    let base = polar_to_cartesian(&s, side, px).unwrap();
    for r in [30usize, 90, 135, 200] {
        let phi = TAU * r as f64 / a as f64;
        let rotated = polar_to_cartesian(&rotate_azimuth(&s, r), side, px).unwrap();
        let (mut acc, mut n) = (0.0, 0);
        for row in 0..side {
            for col in 0..side {
                let (f, l) = rotated.pixel_centre(row, col);
                if f.hypot(l) > s.max_range() - 2.0 * px {
                    continue;
                }
                // content at bearing θ moves to θ − φ
                let (sf, sl) = (f * phi.cos() - l * phi.sin(), f * phi.sin() + l * phi.cos());
                if let Some(v) = sample_cartesian(&base, sf, sl) {
                    acc += (rotated.get(row, col) - v).abs();
                    n += 1;
                }
            }
        }
        let mad = acc / n as f64;
        assert!(
            n > side * side / 2 && mad < 0.02,
            "r={r}: mean abs diff {mad} over {n}"
        );
    }
}

#[test]
fn ring_key_is_exactly_shift_invariant_on_multiples_of_a_sector() {
    for k in [1usize, 2, 3] {
        let a = 120 * k;
        let s = scan_from(a, 80, 0.5, |i, j| ((i * 31 + j * 17) % 97) as f64 / 96.0);
        let key = ring_key(&s);
        for shift in [k, 7 * k, 60 * k, 119 * k] {
            assert_eq!(
                ring_key(&rotate_azimuth(&s, shift)),
                key,
                "A={a} shift={shift}"
            );
        }
    }
}

#[test]
fn ring_key_of_uniform_scan_is_flat() {
    let s = PolarScan::uniform(64, 256, 0.5, 0.25, 0.0).unwrap();
    let key = ring_key(&s);
    assert_eq!(key.values().len(), 40);
    assert!(key.values().iter().all(|v| (v - 0.25).abs() < 1e-6));
}

proptest! {
    #[test]
    fn scan_files_round_trip_bit_exactly(
        a in 1usize..20,
        b in 1usize..30,
        bin_um in 1u32..5_000_000,
        ts_us in 0u64..10_000_000_000,
        seed in any::<u64>(),
    ) {
        let mut x = seed;
        let power: Vec<f32> = (0..a * b)
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1);
                f32::from((x >> 56) as u8) / 255.0
            })
            .collect();
        let s = PolarScan::new(a, b, bin_um as f64 / 1e6, power, ts_us as f64 / 1e6).unwrap();
        let mut bytes = Vec::new();
        write_scan(&mut bytes, &s).unwrap();
        let back = read_scan(bytes.as_slice()).unwrap();
        prop_assert_eq!(&back, &s);
        let mut again = Vec::new();
        write_scan(&mut again, &back).unwrap();
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn projection_stays_in_unit_interval(seed in any::<u64>(), r in 0usize..24) {
        let mut x = seed;
        let s = scan_from(24, 16, 2.0, |_, _| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1);
            (x >> 11) as f64 / (1u64 << 53) as f64
        });
        let p = CartesianProjector::new(24, 16, 2.0, 20, 3.0).unwrap();
        let img = p.project_rotated(&s, r).unwrap();
        prop_assert!(img.power().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn truncated_or_foreign_files_are_rejected() {
    let s = PolarScan::uniform(4, 4, 1.0, 0.5, 2.0).unwrap();
    let mut bytes = Vec::new();
    write_scan(&mut bytes, &s).unwrap();
    assert!(read_scan(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(read_scan(bad.as_slice()).is_err());
}
