//! Rotation-insensitive ring-key descriptor: the polar scan is resampled to a
//! fixed 120 × 40 grid by area-weighted averaging and then averaged over
//! azimuth.

use serde::{Deserialize, Serialize};

use crate::scan::PolarScan;

pub const RING_AZIMUTHS: usize = 120;
pub const RING_BINS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingKey {
    values: Vec<f64>,
}

impl RingKey {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Overlap of each of `to` equal output intervals with each of `from` input
/// cells, normalised so every output's weights sum to one.
fn overlap_weights(from: usize, to: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = from as f64 / to as f64;
    (0..to)
        .map(|t| {
            let (lo, hi) = (t as f64 * scale, (t + 1) as f64 * scale);
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(from);
            (first..last)
                .filter_map(|s| {
                    let w = (hi.min((s + 1) as f64) - lo.max(s as f64)) / scale;
                    (w > 0.0).then_some((s, w))
                })
                .collect()
        })
        .collect()
}

pub fn ring_key(scan: &PolarScan) -> RingKey {
    let az = overlap_weights(scan.azimuths(), RING_AZIMUTHS);
    let rb = overlap_weights(scan.bins(), RING_BINS);
    // range-resample every source row first
    let rows: Vec<Vec<f64>> = (0..scan.azimuths())
        .map(|a| {
            let row = scan.row(a);
            rb.iter()
                .map(|taps| taps.iter().map(|&(b, w)| w * row[b] as f64).sum())
                .collect()
        })
        .collect();
    let mut columns = vec![Vec::with_capacity(RING_AZIMUTHS); RING_BINS];
    for taps in &az {
        for (b, column) in columns.iter_mut().enumerate() {
            column.push(taps.iter().map(|&(a, w)| w * rows[a][b]).sum::<f64>());
        }
    }
    // sorted so that cyclically shifted scans give bit-identical keys
    let values = columns
        .into_iter()
        .map(|mut c| {
            c.sort_by(f64::total_cmp);
            c.iter().sum::<f64>() / RING_AZIMUTHS as f64
        })
        .collect();
    RingKey { values }
}
