//! Post-processing of raw CIR records: system-response calibration, clock
//! drift estimation and correction, multipath-component extraction from the
//! direction scan, and MPC clustering.
//!
//! Drift handling follows the reference-direction workflow: for each
//! line-of-sight position, the record steered at the transmitter yields one
//! drift sample (measured strongest-path delay minus the geometric delay).
//! The sample series is interpolated linearly inside its time span and
//! extrapolated with a least-squares line outside it.

use crate::characterize::{rms_spread, SpreadDomain};
use crate::error::{Error, Result};
use crate::fft;
use crate::geom::{angle_between_deg, unit_from_az_el_deg};
use crate::scenario::{build_direction_grid, los_delay, AntennaPattern, Scenario};
use crate::synth::trace_paths;
use crate::waveform::CirRecord;
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Linear drift model built from reference-direction samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftModel {
    /// `(t_s, drift_s)` samples sorted by time.
    pub samples: Vec<(f64, f64)>,
    /// Least-squares slope over all samples, s/s.
    pub slope: f64,
    /// Least-squares intercept, s.
    pub intercept: f64,
}

impl DriftModel {
    /// Fit the extrapolation line over the samples; at least two samples at
    /// distinct times are required.
    pub fn fit(mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "drift correction needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let n = samples.len() as f64;
        let t_mean = samples.iter().map(|s| s.0).sum::<f64>() / n;
        let y_mean = samples.iter().map(|s| s.1).sum::<f64>() / n;
        let mut num = 0.0;
        let mut den = 0.0;
        for &(t, y) in &samples {
            num += (t - t_mean) * (y - y_mean);
            den += (t - t_mean) * (t - t_mean);
        }
        if den == 0.0 {
            return Err(Error::InvalidArgument(
                "drift samples must span more than one time instant".into(),
            ));
        }
        let slope = num / den;
        let intercept = y_mean - slope * t_mean;
        Ok(DriftModel {
            samples,
            slope,
            intercept,
        })
    }
}

/// Drift at time `t`: linear interpolation between the two bracketing
/// samples inside `[t_1, t_L]`, the regression line `a t + b` outside.
/// At a sample instant the sample's own value is returned exactly.
pub fn correct_drift(t: f64, model: &DriftModel) -> f64 {
    let s = &model.samples;
    let first = s[0].0;
    let last = s[s.len() - 1].0;
    if t < first || t > last {
        return model.slope * t + model.intercept;
    }
    // partition_point: first sample with t_i >= t
    let idx = s.partition_point(|&(ti, _)| ti < t);
    if idx < s.len() && s[idx].0 == t {
        return s[idx].1;
    }
    let (t0, y0) = s[idx - 1];
    let (t1, y1) = s[idx];
    y0 + (t - t0) * (y1 - y0) / (t1 - t0)
}

/// Deconvolve the system response (time domain, same length as the record)
/// out of a CIR. Division is Tikhonov-regularized; a response with spectral
/// nulls inside the band is flagged with a warning instead of failing.
pub fn calibrate(cir: &CirRecord, system_response: &[Complex64]) -> Result<CirRecord> {
    if system_response.len() != cir.samples.len() {
        return Err(Error::InvalidArgument(format!(
            "system response length {} does not match record length {}",
            system_response.len(),
            cir.samples.len()
        )));
    }
    let mut spectrum = fft::fft(&cir.samples);
    let sys = fft::fft(system_response);
    let max_mag = sys.iter().map(|h| h.norm()).fold(0.0f64, f64::max);
    if max_mag == 0.0 {
        return Err(Error::Numeric("system response is identically zero".into()));
    }
    let min_mag = sys.iter().map(|h| h.norm()).fold(f64::INFINITY, f64::min);
    if min_mag < 1e-3 * max_mag {
        log::warn!(
            "system response is near-singular (min/max magnitude {:.3e}); applying regularized division",
            min_mag / max_mag
        );
    }
    let lambda = (1e-6 * max_mag) * (1e-6 * max_mag);
    for (y, h) in spectrum.iter_mut().zip(sys.iter()) {
        *y = *y * h.conj() / (h.norm_sqr() + lambda);
    }
    let mut out = cir.clone();
    out.samples = fft::ifft(&spectrum);
    Ok(out)
}

/// Sub-bin peak refinement: a 3-point parabolic fit on log-power seeds a
/// band-limited (DFT-interpolated) local maximization around the peak bin.
/// Returns the refined delay in fractional bins and the complex amplitude of
/// the interpolated CIR at that delay.
pub fn refine_peak(samples: &[Complex64], peak_bin: usize) -> (f64, f64) {
    let (delay, amp) = refine_peak_complex(samples, peak_bin);
    (delay, amp.norm())
}

pub fn refine_peak_complex(samples: &[Complex64], peak_bin: usize) -> (f64, Complex64) {
    let n = samples.len();
    let p = |k: usize| samples[k].norm_sqr().max(1e-300);
    let k = peak_bin;
    let km1 = (k + n - 1) % n;
    let kp1 = (k + 1) % n;
    let (ym1, y0, yp1) = (p(km1).log10(), p(k).log10(), p(kp1).log10());
    let denom = ym1 - 2.0 * y0 + yp1;
    let mut offset = if denom.abs() < 1e-30 {
        0.0
    } else {
        0.5 * (ym1 - yp1) / denom
    };
    offset = offset.clamp(-0.5, 0.5);

    let spectrum = fft::fft(samples);
    let center = k as f64 + offset;
    let mut tau = golden_max(&spectrum, center - 0.75, center + 0.75);
    if tau < 0.0 {
        tau += n as f64;
    }
    (tau, interp_at(&spectrum, tau))
}

/// Golden-section maximization of the interpolated magnitude over `[a, b]`.
fn golden_max(spectrum: &[Complex64], mut a: f64, mut b: f64) -> f64 {
    let gr = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - gr * (b - a);
    let mut x2 = a + gr * (b - a);
    let mut f1 = interp_at(spectrum, x1).norm();
    let mut f2 = interp_at(spectrum, x2).norm();
    for _ in 0..60 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = interp_at(spectrum, x2).norm();
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = interp_at(spectrum, x1).norm();
        }
    }
    0.5 * (a + b)
}

/// Band-limited interpolation of a length-N record at fractional bin `tau`,
/// evaluated from its spectrum.
fn interp_at(spectrum: &[Complex64], tau: f64) -> Complex64 {
    let n = spectrum.len();
    let step = Complex64::from_polar(1.0, 2.0 * PI * tau / n as f64);
    let mut phasor = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for (m, s) in spectrum.iter().enumerate() {
        if m == n / 2 + 1 {
            let mp = m as f64 - n as f64;
            phasor = Complex64::from_polar(1.0, 2.0 * PI * mp * tau / n as f64);
        }
        acc += s * phasor;
        phasor *= step;
    }
    acc / n as f64
}

/// Robust per-record noise floor estimate: the median power of the lower
/// half of the delay bins, in dB.
pub fn estimate_noise_floor_db(samples: &[Complex64]) -> f64 {
    let mut powers: Vec<f64> = samples.iter().map(|s| s.norm_sqr()).collect();
    powers.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lower = &powers[..(powers.len() / 2).max(1)];
    let med = lower[lower.len() / 2];
    10.0 * med.max(1e-300).log10()
}

/// Scan-grid direction whose steering vector is closest to the geometric
/// transmitter direction seen from receiver `rx_id`.
pub fn reference_direction(scn: &Scenario, rx_id: u32) -> Result<(f64, f64)> {
    let rx = scn.rx_by_id(rx_id)?;
    let to_tx = scn.tx.position - rx.position;
    let grid = build_direction_grid(&scn.scan)?;
    grid.into_iter()
        .min_by(|&(a1, e1), &(a2, e2)| {
            let d1 = angle_between_deg(unit_from_az_el_deg(a1, e1), to_tx);
            let d2 = angle_between_deg(unit_from_az_el_deg(a2, e2), to_tx);
            d1.partial_cmp(&d2).unwrap()
        })
        .ok_or_else(|| Error::InvalidArgument("empty scan grid".into()))
}

/// Whether the direct transmitter-receiver segment is unobstructed.
pub fn is_los(scn: &Scenario, rx_id: u32) -> Result<bool> {
    let band = scn.band(0)?;
    let paths = trace_paths(scn, rx_id, band)?;
    Ok(paths.iter().any(|p| p.kind == crate::synth::PathKind::Los))
}

/// Pick, for every line-of-sight position, the records steered at the
/// reference direction (towards the transmitter), ordered by timestamp.
pub fn select_reference_records<'a>(
    records: &'a [CirRecord],
    scn: &Scenario,
) -> Result<Vec<&'a CirRecord>> {
    let mut out: Vec<&CirRecord> = Vec::new();
    for rx in &scn.rx_list {
        if !is_los(scn, rx.id)? {
            continue;
        }
        let (az, el) = reference_direction(scn, rx.id)?;
        out.extend(records.iter().filter(|r| {
            r.position_id == rx.id && (r.az_deg - az).abs() < 1e-9 && (r.el_deg - el).abs() < 1e-9
        }));
    }
    out.sort_by(|a, b| a.timestamp_s.partial_cmp(&b.timestamp_s).unwrap());
    Ok(out)
}

/// One drift sample per reference-direction record: refined strongest-path
/// delay minus the geometric line-of-sight delay. Records without a
/// detectable peak are skipped with a warning.
pub fn estimate_drift_samples(records: &[&CirRecord], scn: &Scenario) -> Result<Vec<(f64, f64)>> {
    let mut samples = Vec::with_capacity(records.len());
    for rec in records {
        let rx = scn.rx_by_id(rec.position_id)?;
        let theoretical = los_delay(scn.tx.position, rx.position);
        let peak_bin = rec
            .samples
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm_sqr().partial_cmp(&b.1.norm_sqr()).unwrap())
            .map(|(k, _)| k)
            .unwrap_or(0);
        let peak_db = 10.0 * rec.bin_power(peak_bin).max(1e-300).log10();
        let floor_db = estimate_noise_floor_db(&rec.samples);
        if peak_db < floor_db + 6.0 {
            log::warn!(
                "no detectable reference peak at position {} (t = {:.1} s); record skipped",
                rec.position_id,
                rec.timestamp_s
            );
            continue;
        }
        let (delay_bins, _) = refine_peak(&rec.samples, peak_bin);
        let measured = delay_bins * rec.delay_bin_s;
        samples.push((rec.timestamp_s, measured - theoretical));
    }
    samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(samples)
}

/// Shift every record's delay axis by the negated model drift at its
/// timestamp, using a band-limited fractional shift.
pub fn apply_drift_correction(records: &mut [CirRecord], model: &DriftModel) {
    records.par_iter_mut().for_each(|rec| {
        let shift_bins = correct_drift(rec.timestamp_s, model) / rec.delay_bin_s;
        if shift_bins == 0.0 {
            return;
        }
        let n = rec.samples.len();
        let mut spectrum = fft::fft(&rec.samples);
        // advancing the signal by `shift` removes that much delay
        let step = Complex64::from_polar(1.0, 2.0 * PI * shift_bins / n as f64);
        let mut phasor = Complex64::new(1.0, 0.0);
        for (m, s) in spectrum.iter_mut().enumerate() {
            if m == n / 2 + 1 {
                let mp = m as f64 - n as f64;
                phasor = Complex64::from_polar(1.0, 2.0 * PI * mp * shift_bins / n as f64);
            }
            *s *= phasor;
            phasor *= step;
        }
        rec.samples = fft::ifft(&spectrum);
    });
}

/// One extracted multipath component. `gain` has the boresight antenna
/// gains removed; `power_db = 20 log10 |gain|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mpc {
    pub delay_s: f64,
    pub gain: Complex64,
    pub power_db: f64,
    pub aoa_az_deg: f64,
    pub aoa_el_deg: f64,
}

/// Detection and de-duplication knobs for [`extract_mpcs`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractConfig {
    /// Known per-bin noise power in dB; `None` estimates it per record.
    pub noise_floor_db: Option<f64>,
    /// Detection margin above the noise floor, dB.
    pub margin_db: f64,
    /// Keep only peaks within this range of the strongest peak at the
    /// position, dB.
    pub dynamic_range_db: f64,
    /// Candidates closer than this in delay are treated as the same path
    /// when de-duplicating across directions, bins.
    pub delay_match_bins: f64,
    /// Within one delay group, candidates more than this below the group
    /// maximum are antenna-pattern leakage of the winning direction, dB.
    pub dominance_margin_db: f64,
    /// Safety margin added to the delay-sidelobe envelope when masking
    /// in-record sidelobes of stronger peaks, dB.
    pub sidelobe_guard_db: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            noise_floor_db: None,
            margin_db: 6.0,
            dynamic_range_db: 70.0,
            delay_match_bins: 1.0,
            dominance_margin_db: 12.0,
            sidelobe_guard_db: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    record_idx: usize,
    az_deg: f64,
    el_deg: f64,
    delay_bins: f64,
    power_db: f64,
    group: usize,
}

/// Inner product of two unit band-limited interpolation kernels `dt` bins
/// apart (1 at dt = 0, near 0 beyond one bin).
fn kernel_inner(n: usize, dt: f64) -> Complex64 {
    let step = Complex64::from_polar(1.0, -2.0 * PI * dt / n as f64);
    let mut phasor = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for m in 0..n {
        if m == n / 2 + 1 {
            let mp = m as f64 - n as f64;
            phasor = Complex64::from_polar(1.0, -2.0 * PI * mp * dt / n as f64);
        }
        acc += phasor;
        phasor *= step;
    }
    acc / n as f64
}

/// Solve a small dense complex system by Gaussian elimination with partial
/// pivoting.
fn solve_complex(mut a: Vec<Vec<Complex64>>, mut b: Vec<Complex64>) -> Option<Vec<Complex64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].norm().partial_cmp(&a[j][col].norm()).unwrap()
        })?;
        if a[pivot][col].norm() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let factor = a[row][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (k, pv) in pivot_row.iter().enumerate().skip(col) {
                a[row][k] -= factor * pv;
            }
            let v = b[col];
            b[row] -= factor * v;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Joint least-squares amplitudes for band-limited kernels at the given
/// fractional delays. Falls back to independent interpolation reads if the
/// normal equations are singular.
fn ls_amplitudes(spectrum: &[Complex64], taus: &[f64]) -> Vec<Complex64> {
    let n = spectrum.len();
    let j = taus.len();
    let rhs: Vec<Complex64> = taus.iter().map(|&tau| interp_at(spectrum, tau)).collect();
    if j <= 1 {
        return rhs;
    }
    let gram: Vec<Vec<Complex64>> = (0..j)
        .map(|row| (0..j).map(|col| kernel_inner(n, taus[col] - taus[row])).collect())
        .collect();
    solve_complex(gram, rhs.clone()).unwrap_or(rhs)
}

/// Refine every detected delay in a record with the band-limited local
/// search, then alternate joint least-squares amplitude fits with per-path
/// delay re-refinement on the residual (all other fitted paths subtracted).
/// The alternation removes the mutual interference between path mainlobes
/// and sidelobes that biases single-peak delay and amplitude reads.
fn refit_record_amplitudes(samples: &[Complex64], delays: &[f64]) -> Vec<(f64, Complex64)> {
    let n = samples.len();
    let spectrum = fft::fft(samples);
    let mut taus: Vec<f64> = delays
        .iter()
        .map(|&d| refine_peak_complex(samples, (d.round() as usize) % n).0)
        .collect();
    let mut amps = ls_amplitudes(&spectrum, &taus);
    if taus.len() > 1 {
        for _ in 0..3 {
            for j in 0..taus.len() {
                // residual spectrum with every other fitted path removed
                let mut residual = spectrum.clone();
                for (k, (&tau_k, amp_k)) in taus.iter().zip(amps.iter()).enumerate() {
                    if k == j {
                        continue;
                    }
                    let step = Complex64::from_polar(1.0, -2.0 * PI * tau_k / n as f64);
                    let mut phasor = *amp_k;
                    for (m, r) in residual.iter_mut().enumerate() {
                        if m == n / 2 + 1 {
                            let mp = m as f64 - n as f64;
                            phasor = amp_k
                                * Complex64::from_polar(1.0, -2.0 * PI * mp * tau_k / n as f64);
                        }
                        *r -= phasor;
                        phasor *= step;
                    }
                }
                let mut tau = golden_max(&residual, taus[j] - 1.0, taus[j] + 1.0);
                if tau < 0.0 {
                    tau += n as f64;
                }
                taus[j] = tau;
            }
            amps = ls_amplitudes(&spectrum, &taus);
        }
    }
    taus.into_iter().zip(amps).collect()
}

/// Peak envelope of the periodic band-limited interpolation kernel at a
/// cyclic distance of `d` bins from a path in a length-`n` record, relative
/// to the path's peak, dB. Behaves like `1/(pi d)` near the mainlobe and
/// flattens at `1/n` half a record away. Only meaningful beyond the
/// mainlobe (`d >= 1.5`).
fn sidelobe_envelope_db(d: f64, n: usize) -> f64 {
    let nf = n as f64;
    let x = (d - 0.5).clamp(0.5, nf / 2.0);
    -20.0 * (nf * (PI * x / nf).sin()).log10()
}

fn axis_steps(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    values
}

/// Extract multipath components from the calibrated, drift-corrected records
/// of one position.
///
/// Per record, delay-domain local maxima above `noise floor + margin` become
/// candidates, and candidates lying under the delay-sidelobe envelope of a
/// stronger in-record peak are discarded. Across the position, candidates
/// are grouped by delay; within a group only directions within the dominance
/// margin of the group's strongest candidate survive (the rest is antenna
/// leakage of the same path), and of those only direction-domain local
/// maxima are kept, de-duplicating paths picked up by several overlapping
/// beams. The arrival direction of an MPC is the steering direction of its
/// winning record, and boresight Tx/Rx antenna gains are removed from its
/// gain.
pub fn extract_mpcs(
    records: &[CirRecord],
    tx_antenna: &AntennaPattern,
    rx_antenna: &AntennaPattern,
    cfg: &ExtractConfig,
) -> Result<Vec<Mpc>> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let position = records[0].position_id;
    if records.iter().any(|r| r.position_id != position) {
        return Err(Error::InvalidArgument(
            "extract_mpcs expects records from a single position".into(),
        ));
    }

    // direction lattice inferred from the records
    let az_values = axis_steps(records.iter().map(|r| r.az_deg).collect());
    let el_values = axis_steps(records.iter().map(|r| r.el_deg).collect());
    let az_index = |az: f64| az_values.iter().position(|v| (v - az).abs() < 1e-9).unwrap();
    let el_index = |el: f64| el_values.iter().position(|v| (v - el).abs() < 1e-9).unwrap();
    let az_step = if az_values.len() > 1 { az_values[1] - az_values[0] } else { 0.0 };
    let az_wraps = az_values.len() > 2
        && (az_values[az_values.len() - 1] - az_values[0] + az_step - 360.0).abs() < 1e-6;

    // per-record detection and in-record sidelobe masking
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut accepted_by_record: Vec<Vec<f64>> = vec![Vec::new(); records.len()];
    for (ri, rec) in records.iter().enumerate() {
        let n = rec.samples.len();
        let floor_db = cfg
            .noise_floor_db
            .unwrap_or_else(|| estimate_noise_floor_db(&rec.samples));
        let threshold_db = floor_db + cfg.margin_db;
        let mut found: Vec<(f64, f64)> = Vec::new(); // (delay_bins, power_db)
        for k in 0..n {
            let p = rec.bin_power(k);
            let prev = rec.bin_power((k + n - 1) % n);
            let next = rec.bin_power((k + 1) % n);
            if p > prev && p >= next {
                let p_db = 10.0 * p.max(1e-300).log10();
                if p_db >= threshold_db {
                    let (delay_bins, amp) = refine_parabolic(rec, k);
                    found.push((delay_bins, 20.0 * amp.max(1e-300).log10()));
                }
            }
        }
        found.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let mut accepted: Vec<(f64, f64)> = Vec::new();
        for (delay, power) in found {
            let masked = accepted.iter().any(|&(d0, p0)| {
                let raw = (delay - d0).abs();
                let dist = raw.min(n as f64 - raw);
                dist >= 1.5 && power < p0 + sidelobe_envelope_db(dist, n) + cfg.sidelobe_guard_db
            });
            if !masked {
                accepted.push((delay, power));
            }
        }
        for (delay_bins, power_db) in accepted {
            accepted_by_record[ri].push(delay_bins);
            candidates.push(Candidate {
                record_idx: ri,
                az_deg: rec.az_deg,
                el_deg: rec.el_deg,
                delay_bins,
                power_db,
                group: 0,
            });
        }
    }
    if candidates.is_empty() {
        return Ok(Vec::new());
    }

    // position-level dynamic range gate
    let max_power = candidates.iter().map(|c| c.power_db).fold(f64::NEG_INFINITY, f64::max);
    candidates.retain(|c| c.power_db >= max_power - cfg.dynamic_range_db);

    // group candidates that describe the same delay
    candidates.sort_by(|a, b| a.delay_bins.partial_cmp(&b.delay_bins).unwrap());
    let mut group = 0usize;
    for i in 0..candidates.len() {
        if i > 0 && candidates[i].delay_bins - candidates[i - 1].delay_bins > cfg.delay_match_bins {
            group += 1;
        }
        candidates[i].group = group;
    }

    // dominance gate inside each delay group
    let mut group_max = vec![f64::NEG_INFINITY; group + 1];
    for c in &candidates {
        group_max[c.group] = group_max[c.group].max(c.power_db);
    }
    candidates.retain(|c| c.power_db >= group_max[c.group] - cfg.dominance_margin_db);

    // direction-domain local maximum test within each delay group
    let neighbors = |c: &Candidate| -> Vec<(usize, usize)> {
        let ia = az_index(c.az_deg) as isize;
        let ie = el_index(c.el_deg) as isize;
        let na = az_values.len() as isize;
        let ne = el_values.len() as isize;
        let mut out = Vec::new();
        for da in -1isize..=1 {
            for de in -1isize..=1 {
                if da == 0 && de == 0 {
                    continue;
                }
                let mut a = ia + da;
                let e = ie + de;
                if e < 0 || e >= ne {
                    continue;
                }
                if az_wraps {
                    a = (a + na) % na;
                } else if a < 0 || a >= na {
                    continue;
                }
                out.push((a as usize, e as usize));
            }
        }
        out
    };
    let survivors: Vec<Candidate> = candidates
        .iter()
        .filter(|c| {
            let nb = neighbors(c);
            !candidates.iter().any(|o| {
                o.group == c.group
                    && nb.contains(&(az_index(o.az_deg), el_index(o.el_deg)))
                    && (o.power_db > c.power_db
                        || (o.power_db == c.power_db && o.record_idx < c.record_idx))
            })
        })
        .cloned()
        .collect();

    // final per-record refinement (joint amplitude re-fit over the record's
    // accepted delays) and boresight gain removal
    let gain_removal = 10f64.powf(
        (tx_antenna.boresight_gain_dbi + rx_antenna.boresight_gain_dbi) / 20.0,
    );
    let mut refit_cache: std::collections::BTreeMap<usize, Vec<(f64, Complex64)>> =
        std::collections::BTreeMap::new();
    let mut mpcs: Vec<Mpc> = survivors
        .iter()
        .map(|c| {
            let rec = &records[c.record_idx];
            let refit = refit_cache
                .entry(c.record_idx)
                .or_insert_with(|| {
                    refit_record_amplitudes(&rec.samples, &accepted_by_record[c.record_idx])
                });
            let &(delay_bins, amp) = refit
                .iter()
                .min_by(|a, b| {
                    (a.0 - c.delay_bins)
                        .abs()
                        .partial_cmp(&(b.0 - c.delay_bins).abs())
                        .unwrap()
                })
                .expect("winning record has at least one accepted delay");
            let gain = amp / gain_removal;
            Mpc {
                delay_s: delay_bins * rec.delay_bin_s,
                gain,
                power_db: 20.0 * gain.norm().max(1e-300).log10(),
                aoa_az_deg: rec.az_deg,
                aoa_el_deg: rec.el_deg,
            }
        })
        .collect();
    // a candidate whose jointly refit amplitude falls out of the dynamic
    // range had no genuine energy of its own (tail or leakage artifact)
    let gain_removal_db = 20.0 * gain_removal.log10();
    mpcs.retain(|m| m.power_db + gain_removal_db >= max_power - cfg.dynamic_range_db);
    mpcs.sort_by(|a, b| {
        b.power_db
            .partial_cmp(&a.power_db)
            .unwrap()
            .then(a.delay_s.partial_cmp(&b.delay_s).unwrap())
    });
    Ok(mpcs)
}

/// Cheap 3-point parabolic refinement on log-power; returns the fractional
/// delay and the vertex amplitude estimate.
fn refine_parabolic(rec: &CirRecord, k: usize) -> (f64, f64) {
    let n = rec.samples.len();
    let p = |k: usize| rec.bin_power(k).max(1e-300);
    let (ym1, y0, yp1) = (
        p((k + n - 1) % n).log10(),
        p(k).log10(),
        p((k + 1) % n).log10(),
    );
    let denom = ym1 - 2.0 * y0 + yp1;
    let offset = if denom.abs() < 1e-30 {
        0.0
    } else {
        (0.5 * (ym1 - yp1) / denom).clamp(-0.5, 0.5)
    };
    let vertex_log_power = y0 - 0.125 * (ym1 - yp1) * offset * 2.0;
    let amp = 10f64.powf(vertex_log_power / 2.0);
    (k as f64 + offset, amp)
}

/// A group of MPCs attributed to one physical interaction, with
/// power-weighted centroids and intra-cluster spreads.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub members: Vec<Mpc>,
    /// Sum of member powers, linear.
    pub power_linear: f64,
    pub centroid_delay_s: f64,
    pub centroid_az_deg: f64,
    pub centroid_el_deg: f64,
    pub cds_s: f64,
    pub casa_deg: f64,
    pub cesa_deg: f64,
}

impl Cluster {
    pub fn from_members(members: Vec<Mpc>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidArgument("a cluster cannot be empty".into()));
        }
        let power_linear: f64 = members.iter().map(|m| m.gain.norm_sqr()).sum();
        let weighted =
            |f: &dyn Fn(&Mpc) -> f64| -> Vec<(f64, f64)> { members.iter().map(|m| (f(m), m.gain.norm_sqr())).collect() };
        let delays = weighted(&|m| m.delay_s);
        let centroid_delay_s =
            delays.iter().map(|(v, p)| v * p).sum::<f64>() / power_linear;
        let circ_mean = |angles: &[(f64, f64)]| -> f64 {
            let mut re = 0.0;
            let mut im = 0.0;
            for &(deg, p) in angles {
                re += p * deg.to_radians().cos();
                im += p * deg.to_radians().sin();
            }
            im.atan2(re).to_degrees()
        };
        let azs = weighted(&|m| m.aoa_az_deg);
        let els = weighted(&|m| m.aoa_el_deg);
        let mut centroid_az_deg = circ_mean(&azs);
        if centroid_az_deg < 0.0 {
            centroid_az_deg += 360.0;
        }
        let centroid_el_deg = circ_mean(&els);
        let cds_s = rms_spread(&delays, SpreadDomain::Delay)?;
        let casa_deg = rms_spread(&azs, SpreadDomain::Azimuth)?;
        let cesa_deg = rms_spread(&els, SpreadDomain::Elevation)?;
        Ok(Cluster {
            members,
            power_linear,
            centroid_delay_s,
            centroid_az_deg,
            centroid_el_deg,
            cds_s,
            casa_deg,
            cesa_deg,
        })
    }

    /// Strongest member's delay and gain magnitude, the representative
    /// `(tau, alpha)` pair used for scattering-loss evaluation.
    pub fn representative(&self) -> (f64, f64) {
        let best = self
            .members
            .iter()
            .max_by(|a, b| a.power_db.partial_cmp(&b.power_db).unwrap())
            .expect("cluster is non-empty");
        (best.delay_s, best.gain.norm())
    }
}

/// Delay scale for the multipath-component distance: `zeta / delay span`,
/// with `zeta = 8`. Falls back to zero when all delays coincide.
pub fn default_delay_scale(mpcs: &[Mpc]) -> f64 {
    let min = mpcs.iter().map(|m| m.delay_s).fold(f64::INFINITY, f64::min);
    let max = mpcs.iter().map(|m| m.delay_s).fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    if span > 0.0 {
        8.0 / span
    } else {
        0.0
    }
}

/// Default MCD threshold for single-linkage clustering.
pub const DEFAULT_MCD_THRESHOLD: f64 = 0.35;

/// Single-linkage clustering under the multipath-component distance, which
/// combines the Euclidean distance between unit arrival vectors with a
/// scaled delay distance. Every MPC lands in exactly one cluster; ordering
/// is deterministic (power descending, then delay ascending).
pub fn cluster_mpcs(mpcs: &[Mpc], mcd_threshold: f64, delay_scale: f64) -> Result<Vec<Cluster>> {
    if mpcs.is_empty() {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..mpcs.len()).collect();
    order.sort_by(|&i, &j| {
        mpcs[j]
            .power_db
            .partial_cmp(&mpcs[i].power_db)
            .unwrap()
            .then(mpcs[i].delay_s.partial_cmp(&mpcs[j].delay_s).unwrap())
    });
    let sorted: Vec<Mpc> = order.iter().map(|&i| mpcs[i]).collect();

    let units: Vec<_> = sorted
        .iter()
        .map(|m| unit_from_az_el_deg(m.aoa_az_deg, m.aoa_el_deg))
        .collect();
    let mcd = |i: usize, j: usize| -> f64 {
        let d_ang = (units[i] - units[j]).norm();
        let d_del = (sorted[i].delay_s - sorted[j].delay_s) * delay_scale;
        (d_ang * d_ang + d_del * d_del).sqrt()
    };

    let mut parent: Vec<usize> = (0..sorted.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..sorted.len() {
        for j in (i + 1)..sorted.len() {
            if mcd(i, j) <= mcd_threshold {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<Mpc>> = std::collections::BTreeMap::new();
    for (i, mpc) in sorted.iter().enumerate() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(*mpc);
    }
    let mut clusters: Vec<Cluster> = groups
        .into_values()
        .map(Cluster::from_members)
        .collect::<Result<_>>()?;
    clusters.sort_by(|a, b| {
        b.power_linear
            .partial_cmp(&a.power_linear)
            .unwrap()
            .then(a.centroid_delay_s.partial_cmp(&b.centroid_delay_s).unwrap())
    });
    Ok(clusters)
}
