//! Thin wrappers over rustfft with a per-thread plan cache.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

thread_local! {
    static FWD: RefCell<HashMap<usize, Arc<dyn Fft<f64>>>> = RefCell::new(HashMap::new());
    static INV: RefCell<HashMap<usize, Arc<dyn Fft<f64>>>> = RefCell::new(HashMap::new());
}

pub fn fft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    let plan = FWD.with(|c| {
        c.borrow_mut()
            .entry(n)
            .or_insert_with(|| FftPlanner::new().plan_fft_forward(n))
            .clone()
    });
    plan.process(buf);
}

/// Inverse FFT with 1/N normalization so `ifft(fft(x)) == x`.
pub fn ifft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    let plan = INV.with(|c| {
        c.borrow_mut()
            .entry(n)
            .or_insert_with(|| FftPlanner::new().plan_fft_inverse(n))
            .clone()
    });
    plan.process(buf);
    let scale = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

pub fn fft(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    fft_in_place(&mut buf);
    buf
}

pub fn ifft(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    ifft_in_place(&mut buf);
    buf
}

/// Signed frequency index for bin `m` of an N-point DFT.
#[inline]
#[allow(dead_code)] // exercised by kernel tests
pub fn signed_freq(m: usize, n: usize) -> i64 {
    if m <= n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}
