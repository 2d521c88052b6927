//! Probe-sequence generation and correlation-based CIR recovery.
//!
//! The sounder transmits a constant-amplitude zero-autocorrelation probe
//! cyclically; correlating one received period with the stored reference
//! yields one CIR sample. Averaging many samples raises the SNR.

use crate::error::{Error, Result};
use crate::fft;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

/// Zadoff-Chu probe sequence of odd length with unit-modulus samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ZcSequence {
    pub root: u32,
    pub samples: Vec<Complex64>,
}

impl ZcSequence {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Generate `x[n] = exp(-i pi root n (n+1) / length)` for odd `length` and
/// `gcd(root, length) = 1`.
///
/// The quadratic phase index is reduced modulo `2 * length` in integer
/// arithmetic before the trig evaluation, so the zero-autocorrelation
/// property holds to machine precision for any valid length.
pub fn generate_zc(root: u32, length: usize) -> Result<ZcSequence> {
    if length == 0 || length.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "zc length must be odd and positive, got {length}"
        )));
    }
    if gcd(root as u64, length as u64) != 1 {
        return Err(Error::InvalidArgument(format!(
            "zc root {root} is not coprime with length {length}"
        )));
    }
    let modulus = 2 * length as u128;
    let samples = (0..length)
        .map(|n| {
            let k = (root as u128 * n as u128 * (n as u128 + 1)) % modulus;
            let phase = -PI * k as f64 / length as f64;
            Complex64::from_polar(1.0, phase)
        })
        .collect();
    Ok(ZcSequence { root, samples })
}

/// Circular cross-correlation of `received` against the reference probe,
/// normalized by the reference length: one CIR sample.
///
/// `received` must hold an integer number of probe periods; multiple periods
/// are folded (synchronously averaged) into one before correlating. A pure
/// delayed copy of the reference produces a single dominant bin at that
/// delay with the copy's amplitude.
pub fn correlate(received: &[Complex64], reference: &ZcSequence) -> Result<Vec<Complex64>> {
    let l = reference.len();
    if l == 0 {
        return Err(Error::InvalidArgument("empty reference sequence".into()));
    }
    if received.len() < l || !received.len().is_multiple_of(l) {
        return Err(Error::InvalidArgument(format!(
            "received length {} is not a positive multiple of the reference length {l}",
            received.len()
        )));
    }
    let periods = received.len() / l;
    let mut folded = vec![Complex64::new(0.0, 0.0); l];
    for (i, v) in received.iter().enumerate() {
        folded[i % l] += v;
    }
    let scale = 1.0 / periods as f64;
    for v in folded.iter_mut() {
        *v *= scale;
    }

    fft::fft_in_place(&mut folded);
    let refspec = fft::fft(&reference.samples);
    for (r, x) in folded.iter_mut().zip(refspec.iter()) {
        *r *= x.conj();
    }
    fft::ifft_in_place(&mut folded);
    let norm = 1.0 / l as f64;
    for v in folded.iter_mut() {
        *v *= norm;
    }
    Ok(folded)
}

/// Element-wise arithmetic mean of equally sized CIR snapshots.
pub fn average_cirs(samples: &[Vec<Complex64>]) -> Result<Vec<Complex64>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot average an empty snapshot list".into()))?;
    let n = first.len();
    if samples.iter().any(|s| s.len() != n) {
        return Err(Error::InvalidArgument(
            "snapshots must all have the same length".into(),
        ));
    }
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    for snap in samples {
        for (a, v) in acc.iter_mut().zip(snap.iter()) {
            *a += v;
        }
    }
    let scale = 1.0 / samples.len() as f64;
    for a in acc.iter_mut() {
        *a *= scale;
    }
    Ok(acc)
}

/// Add circularly-symmetric complex Gaussian noise with the given per-sample
/// power (dB). `f64::NEG_INFINITY` disables noise and returns the input
/// unchanged. Deterministic for a fixed RNG state.
pub fn add_noise<R: Rng>(signal: &[Complex64], noise_power_db: f64, rng: &mut R) -> Vec<Complex64> {
    if noise_power_db == f64::NEG_INFINITY {
        return signal.to_vec();
    }
    let power = 10f64.powf(noise_power_db / 10.0);
    let sigma = (power / 2.0).sqrt();
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    signal
        .iter()
        .map(|s| s + Complex64::new(normal.sample(rng), normal.sample(rng)))
        .collect()
}

/// One recorded CIR for a position, steering direction, and timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct CirRecord {
    pub position_id: u32,
    pub band_index: usize,
    pub az_deg: f64,
    pub el_deg: f64,
    /// Seconds since the synchronization epoch.
    pub timestamp_s: f64,
    /// Delay resolution of one bin, `1 / bandwidth`.
    pub delay_bin_s: f64,
    pub samples: Vec<Complex64>,
}

impl CirRecord {
    pub fn bin_power(&self, k: usize) -> f64 {
        self.samples[k].norm_sqr()
    }

    /// Total energy across all delay bins.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }
}

/// Stable per-record seed derived from the campaign seed and the record
/// coordinates, so parallel synthesis is order-independent.
pub fn record_seed(seed: u64, position_id: u32, band_index: u32, dir_index: u32) -> u64 {
    let mut x = seed
        ^ (position_id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ ((band_index as u64) << 32 | dir_index as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    // splitmix64 finalizer
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
