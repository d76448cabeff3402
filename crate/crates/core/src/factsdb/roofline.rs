//! FLOP counts, memory footprints and roofline classification.

use crate::model::eval::widest;
use crate::model::BatchedEinsum;

/// Floating-point operations of `e`: for every point of each row's
/// iteration space, `n - 1` multiplies plus one add when the row reduces.
pub fn flop_count(e: &BatchedEinsum) -> u128 {
    let points: u128 = e.index_lengths().values().map(|&l| l as u128).product();
    let per_point = (e.n() as u128 - 1) + u128::from(!e.reduction_indices().is_empty());
    e.b() as u128 * points * per_point
}

/// Bytes touched: every distinct input array once, plus each row's output
/// at the widest dtype of that row.
pub fn footprint_bytes(e: &BatchedEinsum) -> u128 {
    let inputs: u128 = e
        .universe()
        .values()
        .map(|a| a.len() as u128 * a.dtype.size_bytes() as u128)
        .sum();
    let out_len: u128 = e.output_shape().iter().map(|&l| l as u128).product();
    let outputs: u128 = e
        .args
        .iter()
        .map(|row| out_len * widest(row.iter().map(|a| &a.dtype)).size_bytes() as u128)
        .sum();
    inputs + outputs
}

pub fn arithmetic_intensity(e: &BatchedEinsum) -> f64 {
    flop_count(e) as f64 / footprint_bytes(e) as f64
}

/// Peak compute and bandwidth of a device.
#[derive(Clone, Debug, PartialEq)]
pub struct DevicePeaks {
    pub device_id: String,
    /// FLOP/s.
    pub peak_flops: f64,
    /// Bytes/s.
    pub peak_bandwidth: f64,
}

impl DevicePeaks {
    pub fn new(device_id: impl Into<String>, peak_flops: f64, peak_bandwidth: f64) -> Option<Self> {
        (peak_flops > 0.0
            && peak_bandwidth > 0.0
            && peak_flops.is_finite()
            && peak_bandwidth.is_finite())
        .then(|| DevicePeaks {
            device_id: device_id.into(),
            peak_flops,
            peak_bandwidth,
        })
    }

    /// Arithmetic intensity at which the roofline turns flat.
    pub fn saturation_ai(&self) -> f64 {
        self.peak_flops / self.peak_bandwidth
    }

    /// Built-in devices known only by their saturation intensity; bandwidth
    /// is normalized to 1 so only the memory-bound classification is
    /// meaningful.
    pub fn presets() -> Vec<DevicePeaks> {
        [
            ("mi250x", 14.9),
            ("h100", 12.55),
            ("titan-v", 9.41),
            ("p100", 7.24),
        ]
        .into_iter()
        .map(|(id, ai)| DevicePeaks {
            device_id: id.to_string(),
            peak_flops: ai,
            peak_bandwidth: 1.0,
        })
        .collect()
    }

    pub fn preset(device_id: &str) -> Option<DevicePeaks> {
        Self::presets()
            .into_iter()
            .find(|p| p.device_id == device_id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Roofline {
    pub roofline_flops: f64,
    pub memory_bound: bool,
}

/// Attainable FLOP/s, and whether the bandwidth limit binds.
pub fn roofline_for_ai(ai: f64, peaks: &DevicePeaks) -> Roofline {
    Roofline {
        roofline_flops: peaks.peak_flops.min(ai * peaks.peak_bandwidth),
        memory_bound: ai < peaks.saturation_ai(),
    }
}

pub fn roofline(e: &BatchedEinsum, peaks: &DevicePeaks) -> Roofline {
    roofline_for_ai(arithmetic_intensity(e), peaks)
}
