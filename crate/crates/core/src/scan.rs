//! Radar scan representations.
//!
//! A [`PolarScan`] holds one revolution of power returns, one row per
//! azimuth (counter-clockwise from sensor-forward) and one column per range
//! bin. Row `a` looks along bearing `2πa/A`; column `b` sits at range
//! `b * bin_size`. [`CartesianScan`] is the square metric image the encoder
//! consumes, with the sensor at its centre and forward pointing up.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const SCAN_MAGIC: &[u8; 4] = b"RPRS";
pub const SCAN_FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PolarScan {
    azimuths: usize,
    bins: usize,
    bin_size: f64,
    power: Vec<f32>,
    timestamp: f64,
}

impl PolarScan {
    pub fn new(
        azimuths: usize,
        bins: usize,
        bin_size: f64,
        power: Vec<f32>,
        timestamp: f64,
    ) -> Result<Self> {
        validate_polar_geometry(azimuths, bins, bin_size)?;
        if power.len() != azimuths * bins {
            return Err(Error::ShapeMismatch {
                expected: azimuths * bins,
                actual: power.len(),
            });
        }
        if let Some(bad) = power.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidGeometry(format!(
                "power value {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            azimuths,
            bins,
            bin_size,
            power,
            timestamp,
        })
    }

    /// A scan with every cell set to `value`.
    pub fn uniform(
        azimuths: usize,
        bins: usize,
        bin_size: f64,
        value: f32,
        timestamp: f64,
    ) -> Result<Self> {
        Self::new(
            azimuths,
            bins,
            bin_size,
            vec![value; azimuths * bins],
            timestamp,
        )
    }

    pub fn azimuths(&self) -> usize {
        self.azimuths
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn bin_size(&self) -> f64 {
        self.bin_size
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    /// Maximum range covered by the scan in metres.
    pub fn max_range(&self) -> f64 {
        self.bins as f64 * self.bin_size
    }

    pub fn power(&self) -> &[f32] {
        &self.power
    }

    pub fn row(&self, azimuth: usize) -> &[f32] {
        &self.power[azimuth * self.bins..(azimuth + 1) * self.bins]
    }

    pub fn get(&self, azimuth: usize, bin: usize) -> f32 {
        self.power[azimuth * self.bins + bin]
    }

    /// Round every cell to the nearest 8-bit level, as stored on disk.
    pub fn quantized(&self) -> PolarScan {
        let power = self
            .power
            .iter()
            .map(|&p| f32::from(quantize(p)) / 255.0)
            .collect();
        PolarScan {
            power,
            ..self.clone()
        }
    }

    /// Replace the timestamp, keeping the file representation exact.
    pub fn with_timestamp(mut self, timestamp: f64) -> Self {
        self.timestamp = timestamp;
        self
    }
}

fn validate_polar_geometry(azimuths: usize, bins: usize, bin_size: f64) -> Result<()> {
    if azimuths == 0 || bins == 0 {
        return Err(Error::InvalidGeometry(format!(
            "scan must have at least one azimuth and bin, got {azimuths}x{bins}"
        )));
    }
    if !(bin_size > 0.0 && bin_size.is_finite()) {
        return Err(Error::InvalidGeometry(format!(
            "bin size must be positive, got {bin_size}"
        )));
    }
    Ok(())
}

fn quantize(p: f32) -> u8 {
    (f64::from(p) * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Cyclic shift of the azimuth rows: output row `a` is input row `(a + r) mod A`.
pub fn rotate_azimuth(scan: &PolarScan, r: usize) -> PolarScan {
    let shift = r % scan.azimuths;
    let mut power = scan.power.clone();
    power.rotate_left(shift * scan.bins);
    PolarScan {
        power,
        ..scan.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartesianScan {
    side: usize,
    pixel_size: f64,
    power: Vec<f64>,
    timestamp: f64,
}

impl CartesianScan {
    pub fn new(side: usize, pixel_size: f64, power: Vec<f64>, timestamp: f64) -> Result<Self> {
        if power.len() != side * side {
            return Err(Error::ShapeMismatch {
                expected: side * side,
                actual: power.len(),
            });
        }
        Ok(Self {
            side,
            pixel_size,
            power,
            timestamp,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.power[row * self.side + col]
    }

    /// Metric (forward, left) offset of a pixel centre from the sensor.
    pub fn pixel_centre(&self, row: usize, col: usize) -> (f64, f64) {
        pixel_centre(self.side, self.pixel_size, row, col)
    }
}

pub(crate) fn pixel_centre(side: usize, pixel_size: f64, row: usize, col: usize) -> (f64, f64) {
    let c = (side as f64 - 1.0) / 2.0;
    ((c - row as f64) * pixel_size, (c - col as f64) * pixel_size)
}

/// Bilinear interpolation footprint of one Cartesian pixel in the polar grid.
#[derive(Debug, Clone, Copy)]
struct Tap {
    a0: usize,
    a1: usize,
    fa: f64,
    b0: usize,
    b1: usize,
    fb: f64,
}

/// Precomputed polar-to-Cartesian resampling for a fixed geometry.
///
/// Rotation by whole azimuth steps is folded into the lookup, so an
/// augmented scan never needs to be materialised in polar form.
#[derive(Debug, Clone)]
pub struct CartesianProjector {
    azimuths: usize,
    bins: usize,
    bin_size: f64,
    side: usize,
    pixel_size: f64,
    taps: Vec<Option<Tap>>,
}

impl CartesianProjector {
    pub fn new(
        azimuths: usize,
        bins: usize,
        bin_size: f64,
        side: usize,
        pixel_size: f64,
    ) -> Result<Self> {
        validate_polar_geometry(azimuths, bins, bin_size)?;
        if side < 2 {
            return Err(Error::InvalidGeometry(format!(
                "cartesian side must be at least 2, got {side}"
            )));
        }
        if !(pixel_size > 0.0 && pixel_size.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "pixel size must be positive, got {pixel_size}"
            )));
        }
        let max_range = bins as f64 * bin_size;
        let mut taps = Vec::with_capacity(side * side);
        for row in 0..side {
            for col in 0..side {
                let (fwd, left) = pixel_centre(side, pixel_size, row, col);
                let range = fwd.hypot(left);
                if range > max_range {
                    taps.push(None);
                    continue;
                }
                let bearing = left.atan2(fwd);
                let az = (bearing / TAU * azimuths as f64).rem_euclid(azimuths as f64);
                let mut a0 = az.floor() as usize;
                let mut fa = az - a0 as f64;
                if a0 >= azimuths {
                    a0 = 0;
                    fa = 0.0;
                }
                let a1 = (a0 + 1) % azimuths;
                let rho = range / bin_size;
                let b0 = (rho.floor() as usize).min(bins - 1);
                let b1 = (b0 + 1).min(bins - 1);
                let fb = if b1 == b0 { 0.0 } else { rho - b0 as f64 };
                taps.push(Some(Tap {
                    a0,
                    a1,
                    fa,
                    b0,
                    b1,
                    fb,
                }));
            }
        }
        Ok(Self {
            azimuths,
            bins,
            bin_size,
            side,
            pixel_size,
            taps,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn azimuths(&self) -> usize {
        self.azimuths
    }

    fn check(&self, scan: &PolarScan) -> Result<()> {
        if scan.azimuths != self.azimuths
            || scan.bins != self.bins
            || scan.bin_size != self.bin_size
        {
            return Err(Error::InvalidGeometry(format!(
                "projector built for {}x{}@{} but scan is {}x{}@{}",
                self.azimuths, self.bins, self.bin_size, scan.azimuths, scan.bins, scan.bin_size
            )));
        }
        Ok(())
    }

    pub fn project(&self, scan: &PolarScan) -> Result<CartesianScan> {
        self.project_rotated(scan, 0)
    }

    /// Equivalent to `project(&rotate_azimuth(scan, r))`.
    pub fn project_rotated(&self, scan: &PolarScan, r: usize) -> Result<CartesianScan> {
        self.check(scan)?;
        let shift = r % self.azimuths;
        let b = self.bins;
        let p = &scan.power;
        let at = |a: usize, bin: usize| f64::from(p[((a + shift) % self.azimuths) * b + bin]);
        let power = self
            .taps
            .iter()
            .map(|tap| match tap {
                None => 0.0,
                Some(t) => {
                    let near = lerp(at(t.a0, t.b0), at(t.a0, t.b1), t.fb);
                    let far = lerp(at(t.a1, t.b0), at(t.a1, t.b1), t.fb);
                    lerp(near, far, t.fa).clamp(0.0, 1.0)
                }
            })
            .collect();
        Ok(CartesianScan {
            side: self.side,
            pixel_size: self.pixel_size,
            power,
            timestamp: scan.timestamp,
        })
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Resample a polar scan onto a `side`×`side` metric grid.
pub fn polar_to_cartesian(scan: &PolarScan, side: usize, pixel_size: f64) -> Result<CartesianScan> {
    CartesianProjector::new(scan.azimuths, scan.bins, scan.bin_size, side, pixel_size)?
        .project(scan)
}

pub fn write_scan<W: Write>(mut w: W, scan: &PolarScan) -> Result<()> {
    let bin_size_um = (scan.bin_size * 1e6).round();
    if !(1.0..=f64::from(u32::MAX)).contains(&bin_size_um) {
        return Err(Error::Format(format!(
            "bin size {} m not representable in micrometres",
            scan.bin_size
        )));
    }
    if !(scan.timestamp >= 0.0) {
        return Err(Error::Format(format!(
            "negative timestamp {}",
            scan.timestamp
        )));
    }
    let ts_us = (scan.timestamp * 1e6).round() as u64;
    w.write_all(SCAN_MAGIC)?;
    w.write_all(&SCAN_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(scan.azimuths as u32).to_le_bytes())?;
    w.write_all(&(scan.bins as u32).to_le_bytes())?;
    w.write_all(&(bin_size_um as u32).to_le_bytes())?;
    w.write_all(&ts_us.to_le_bytes())?;
    let bytes: Vec<u8> = scan.power.iter().map(|&p| quantize(p)).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_scan<R: Read>(mut r: R) -> Result<PolarScan> {
    let mut header = [0u8; 26];
    r.read_exact(&mut header)?;
    if &header[0..4] != SCAN_MAGIC {
        return Err(Error::Format("not a radar scan file (bad magic)".into()));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != SCAN_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported scan format version {version}"
        )));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let azimuths = u32_at(6) as usize;
    let bins = u32_at(10) as usize;
    let bin_size = f64::from(u32_at(14)) / 1e6;
    let ts_us = u64::from_le_bytes(header[18..26].try_into().unwrap());
    validate_polar_geometry(azimuths, bins, bin_size)?;
    let mut bytes = vec![0u8; azimuths * bins];
    r.read_exact(&mut bytes)?;
    let power = bytes.into_iter().map(|q| f32::from(q) / 255.0).collect();
    Ok(PolarScan {
        azimuths,
        bins,
        bin_size,
        power,
        timestamp: ts_us as f64 / 1e6,
    })
}

pub fn save_scan(path: impl AsRef<Path>, scan: &PolarScan) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_scan(&mut w, scan)?;
    w.flush()?;
    Ok(())
}

pub fn load_scan(path: impl AsRef<Path>) -> Result<PolarScan> {
    read_scan(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp_scan(a: usize, b: usize) -> PolarScan {
        let power = (0..a * b)
            .map(|i| ((i * 37 % 101) as f32) / 100.0)
            .collect();
        PolarScan::new(a, b, 0.25, power, 1.5).unwrap()
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(PolarScan::new(0, 4, 0.1, vec![], 0.0).is_err());
        assert!(PolarScan::new(4, 4, 0.0, vec![0.0; 16], 0.0).is_err());
        assert!(PolarScan::new(2, 2, 0.1, vec![0.0, 0.5, 1.2, 0.0], 0.0).is_err());
        let s = PolarScan::uniform(8, 8, 0.5, 0.3, 0.0).unwrap();
        assert!(polar_to_cartesian(&s, 16, 0.0).is_err());
        assert!(polar_to_cartesian(&s, 16, -1.0).is_err());
        assert!(polar_to_cartesian(&s, 1, 1.0).is_err());
    }

    #[test]
    fn uniform_field_projects_to_constant_disc() {
        let c = 0.6f32;
        let s = PolarScan::uniform(64, 40, 0.5, c, 0.0).unwrap();
        let cart = polar_to_cartesian(&s, 48, 0.5).unwrap();
        for row in 0..48 {
            for col in 0..48 {
                let (f, l) = cart.pixel_centre(row, col);
                let v = cart.get(row, col);
                if f.hypot(l) <= s.max_range() {
                    assert_eq!(v, f64::from(c));
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn full_size_geometry() {
        let s = PolarScan::uniform(400, 3768, 0.0438, 0.0, 0.0).unwrap();
        let cart = polar_to_cartesian(&s, 256, 0.5).unwrap();
        assert_eq!(cart.side(), 256);
        assert_eq!(cart.power().len(), 256 * 256);
    }

    #[test]
    fn rotation_identities() {
        let s = ramp_scan(12, 5);
        assert_eq!(rotate_azimuth(&s, 0), s);
        assert_eq!(rotate_azimuth(&s, 12), s);
        assert_eq!(rotate_azimuth(&s, 3).row(0), s.row(3));
        assert_eq!(rotate_azimuth(&s, 3).row(11), s.row(2));
    }

    #[test]
    fn projector_rotation_matches_materialised_rotation() {
        let s = ramp_scan(32, 20);
        let proj = CartesianProjector::new(32, 20, 0.25, 24, 0.4).unwrap();
        for r in [0, 1, 7, 31, 45] {
            let a = proj.project_rotated(&s, r).unwrap();
            let b = proj.project(&rotate_azimuth(&s, r)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn file_rejects_wrong_magic_and_version() {
        let s = ramp_scan(4, 3).quantized();
        let mut buf = Vec::new();
        write_scan(&mut buf, &s).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_scan(&bad[..]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[4] = 2;
        assert!(matches!(read_scan(&bad[..]), Err(Error::Format(_))));
        assert_eq!(read_scan(&buf[..]).unwrap(), s);
    }

    #[test]
    fn header_layout() {
        let s = PolarScan::uniform(2, 3, 0.0438, 1.0, 2.5).unwrap();
        let mut buf = Vec::new();
        write_scan(&mut buf, &s).unwrap();
        assert_eq!(&buf[..4], b"RPRS");
        assert_eq!(u16::from_le_bytes([buf[4], buf[5]]), 1);
        assert_eq!(u32::from_le_bytes(buf[6..10].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[10..14].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(buf[14..18].try_into().unwrap()), 43_800);
        assert_eq!(
            u64::from_le_bytes(buf[18..26].try_into().unwrap()),
            2_500_000
        );
        assert_eq!(buf.len(), 26 + 6);
        assert!(buf[26..].iter().all(|&b| b == 255));
    }

    proptest! {
        #[test]
        fn rotation_composes(r1 in 0usize..100, r2 in 0usize..100, seed in 0u64..1000) {
            let a = 9;
            let power: Vec<f32> = (0..a * 4)
                .map(|i| (((i as u64 * 2654435761 + seed) % 256) as f32) / 255.0)
                .collect();
            let s = PolarScan::new(a, 4, 1.0, power, 0.0).unwrap();
            let lhs = rotate_azimuth(&rotate_azimuth(&s, r1), r2);
            let rhs = rotate_azimuth(&s, (r1 + r2) % a);
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn rotation_preserves_row_multiset(r in 0usize..50) {
            let s = ramp_scan(10, 6);
            let rot = rotate_azimuth(&s, r);
            let mut rows_a: Vec<Vec<u32>> = (0..10).map(|i| s.row(i).iter().map(|v| v.to_bits()).collect()).collect();
            let mut rows_b: Vec<Vec<u32>> = (0..10).map(|i| rot.row(i).iter().map(|v| v.to_bits()).collect()).collect();
            rows_a.sort();
            rows_b.sort();
            prop_assert_eq!(rows_a, rows_b);
        }

        #[test]
        fn projection_never_exceeds_input_max(seed in 0u64..500) {
            let power: Vec<f32> = (0..16 * 12)
                .map(|i| (((i as u64 * 40503 + seed * 7919) % 1000) as f32) / 1000.0 * 0.8)
                .collect();
            let max = power.iter().cloned().fold(0.0f32, f32::max);
            let s = PolarScan::new(16, 12, 1.0, power, 0.0).unwrap();
            let cart = polar_to_cartesian(&s, 20, 1.1).unwrap();
            prop_assert!(cart.power().iter().all(|&v| v <= f64::from(max) + 1e-12 && v >= 0.0));
        }
    }
}
