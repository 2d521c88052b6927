//! Ground-truth channel synthesis: free-space loss, image-method path
//! tracing over the scenario's scatterer panels, clock-drift injection, and
//! generation of full direction-scan campaigns of CIR records.

use crate::error::{Error, Result};
use crate::fft;
use crate::geom::{
    angle_between_deg, az_el_deg_from_unit, reflect_across_plane, unit_from_az_el_deg, Vec3,
    SPEED_OF_LIGHT_M_S,
};
use crate::scenario::{build_direction_grid, BandConfig, Scenario, SystemResponse};
use crate::waveform::{add_noise, record_seed, CirRecord};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Dwell time per receiver position during a campaign, seconds.
pub const POSITION_DWELL_S: f64 = 1200.0;

/// Linear clock-drift process between the transmitter and receiver
/// timebases: injected drift at time `t` is `offset + rate * t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftProcess {
    pub rate_ns_per_hour: f64,
    #[serde(default)]
    pub offset_at_epoch_ns: f64,
}

impl DriftProcess {
    /// Drift in seconds at `t_s` seconds past the synchronization epoch.
    pub fn drift_at(&self, t_s: f64) -> f64 {
        (self.offset_at_epoch_ns + self.rate_ns_per_hour * t_s / 3600.0) * 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    Los,
    OnceScattered,
}

/// One ground-truth propagation path. `gain` is the channel-only complex
/// amplitude (free-space and scattering loss, no antenna patterns).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationPath {
    pub kind: PathKind,
    pub scatterer_id: Option<usize>,
    pub delay_s: f64,
    pub aoa_az_deg: f64,
    pub aoa_el_deg: f64,
    pub aod_az_deg: f64,
    pub aod_el_deg: f64,
    pub gain: Complex64,
}

impl PropagationPath {
    pub fn aoa_unit(&self) -> Vec3 {
        unit_from_az_el_deg(self.aoa_az_deg, self.aoa_el_deg)
    }

    pub fn aod_unit(&self) -> Vec3 {
        unit_from_az_el_deg(self.aod_az_deg, self.aod_el_deg)
    }
}

/// Free-space path loss by Friis' law, `-20 log10(c / (4 pi f d))` dB.
pub fn fspl(d_m: f64, f_hz: f64) -> Result<f64> {
    if d_m <= 0.0 || f_hz <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "fspl requires positive distance and frequency, got d={d_m}, f={f_hz}"
        )));
    }
    Ok(-20.0 * (SPEED_OF_LIGHT_M_S / (4.0 * PI * f_hz * d_m)).log10())
}

/// Fixed phase attached to every bounce off panel `idx`, derived from the
/// scenario seed so campaigns stay reproducible.
fn panel_phase(seed: u64, idx: usize) -> f64 {
    let mut x = seed ^ (idx as u64).wrapping_mul(0xd134_2543_de82_ef95);
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    2.0 * PI * (x as f64 / u64::MAX as f64)
}

/// Whether the open segment `p -> q` is interrupted by any panel other than
/// `skip` (used to exclude a path's own reflection panel).
fn segment_blocked(scn: &Scenario, p: Vec3, q: Vec3, skip: Option<usize>) -> bool {
    let d = q - p;
    for (i, panel) in scn.objects.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        let n = panel.normal.normalized();
        let denom = n.dot(d);
        if denom.abs() < 1e-12 {
            continue; // parallel to the panel plane
        }
        let t = n.dot(panel.center - p) / denom;
        if t <= 1e-9 || t >= 1.0 - 1e-9 {
            continue;
        }
        let hit = p + d.scale(t);
        if panel.contains_in_plane(hit) {
            return true;
        }
    }
    false
}

fn path_gain(len_m: f64, extra_loss_db: f64, carrier_hz: f64, phase_extra: f64) -> Result<Complex64> {
    let loss_db = fspl(len_m, carrier_hz)? + extra_loss_db;
    let amp = 10f64.powf(-loss_db / 20.0);
    // carrier phase -2 pi f tau, reduced via the fractional cycle count
    let cycles = len_m / (SPEED_OF_LIGHT_M_S / carrier_hz);
    let phase = -2.0 * PI * cycles.fract() + phase_extra;
    Ok(Complex64::from_polar(amp, phase))
}

/// Trace the ground-truth paths from the transmitter to receiver `rx_id`:
/// the line-of-sight path when no panel interrupts it, plus one specular
/// once-scattered path per panel whose image point lies on the panel and is
/// unobstructed. Paths longer than the band's unambiguous range are dropped.
pub fn trace_paths(scn: &Scenario, rx_id: u32, band: &BandConfig) -> Result<Vec<PropagationPath>> {
    let rx = scn.rx_by_id(rx_id)?;
    let tx = scn.tx.position;
    let rxp = rx.position;
    let mut paths = Vec::new();

    let los_len = tx.distance(rxp);
    if los_len > 0.0 && los_len <= band.max_path_m() && !segment_blocked(scn, tx, rxp, None) {
        let (aoa_az, aoa_el) = az_el_deg_from_unit(tx - rxp);
        let (aod_az, aod_el) = az_el_deg_from_unit(rxp - tx);
        paths.push(PropagationPath {
            kind: PathKind::Los,
            scatterer_id: None,
            delay_s: los_len / SPEED_OF_LIGHT_M_S,
            aoa_az_deg: aoa_az,
            aoa_el_deg: aoa_el,
            aod_az_deg: aod_az,
            aod_el_deg: aod_el,
            gain: path_gain(los_len, 0.0, band.carrier_hz, 0.0)?,
        });
    }

    for (i, panel) in scn.objects.iter().enumerate() {
        let n = panel.normal.normalized();
        let side_tx = n.dot(tx - panel.center);
        let side_rx = n.dot(rxp - panel.center);
        if side_tx.abs() < 1e-9 || side_rx.abs() < 1e-9 || side_tx.signum() != side_rx.signum() {
            continue; // specular bounce needs both ends on the same side
        }
        let image = reflect_across_plane(tx, panel.center, n);
        let dir = rxp - image;
        let denom = n.dot(dir);
        if denom.abs() < 1e-12 {
            continue;
        }
        let t = n.dot(panel.center - image) / denom;
        if t <= 0.0 || t >= 1.0 {
            continue;
        }
        let spec = image + dir.scale(t);
        if !panel.contains_in_plane(spec) {
            continue;
        }
        if segment_blocked(scn, tx, spec, Some(i)) || segment_blocked(scn, spec, rxp, Some(i)) {
            continue;
        }
        let len = image.distance(rxp);
        if len > band.max_path_m() {
            continue;
        }
        let (aoa_az, aoa_el) = az_el_deg_from_unit(spec - rxp);
        let (aod_az, aod_el) = az_el_deg_from_unit(spec - tx);
        paths.push(PropagationPath {
            kind: PathKind::OnceScattered,
            scatterer_id: Some(i),
            delay_s: len / SPEED_OF_LIGHT_M_S,
            aoa_az_deg: aoa_az,
            aoa_el_deg: aoa_el,
            aod_az_deg: aod_az,
            aod_el_deg: aod_el,
            gain: path_gain(len, panel.scattering_loss_db, band.carrier_hz, panel_phase(scn.rng_seed, i))?,
        });
    }
    Ok(paths)
}

/// Spectrum of a band-limited impulse delayed by `delay_bins` fractional
/// bins: `exp(-j 2 pi m' delay / N)` over signed frequencies `m'`.
pub fn fractional_delay_spectrum(n: usize, delay_bins: f64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    accumulate_delayed_impulse(&mut out, delay_bins, Complex64::new(1.0, 0.0));
    out
}

/// Band-limited CIR of `sample_count` bins holding the given taps at
/// fractional bin delays.
pub fn place_taps(sample_count: usize, taps: &[(f64, Complex64)]) -> Vec<Complex64> {
    let mut spectrum = vec![Complex64::new(0.0, 0.0); sample_count];
    for &(delay_bins, amp) in taps {
        accumulate_delayed_impulse(&mut spectrum, delay_bins, amp);
    }
    fft::ifft(&spectrum)
}

/// Add `amp * exp(-j 2 pi m' delay / N)` into `spectrum`, using an
/// incremental phasor rotation instead of per-bin trigonometry. The phasor
/// is re-anchored when crossing into negative frequencies, which also bounds
/// the accumulated rounding.
fn accumulate_delayed_impulse(spectrum: &mut [Complex64], delay_bins: f64, amp: Complex64) {
    let n = spectrum.len();
    let step = Complex64::from_polar(1.0, -2.0 * PI * delay_bins / n as f64);
    let mut phasor = Complex64::new(1.0, 0.0);
    for (m, s) in spectrum.iter_mut().enumerate() {
        if m == n / 2 + 1 {
            let mp = m as f64 - n as f64;
            phasor = Complex64::from_polar(1.0, -2.0 * PI * mp * delay_bins / n as f64);
        }
        *s += amp * phasor;
        phasor *= step;
    }
}

/// Magnitude response of the synthetic system ripple across the band's
/// frequency bins (zero phase, so delays are unaffected).
pub fn system_response_spectrum(sys: &SystemResponse, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|m| {
            let x = m as f64 / n as f64;
            let db = sys.ripple_db * (2.0 * PI * sys.ripple_periods * x).sin();
            Complex64::new(10f64.powf(db / 20.0), 0.0)
        })
        .collect()
}

/// Synthesize the CIR observed at `rx_id` for one steering direction and
/// timestamp: every traced path is weighted by the Tx pattern at its
/// departure offset and the Rx pattern at its arrival offset from the
/// steering direction, placed at its drift-shifted delay with band-limited
/// interpolation, passed through the optional system ripple, and topped with
/// averaged receiver noise. Deterministic for a given RNG state.
pub fn synthesize_observation(
    scn: &Scenario,
    rx_id: u32,
    band_index: usize,
    direction: (f64, f64),
    timestamp_s: f64,
    rng: &mut ChaCha8Rng,
) -> Result<CirRecord> {
    let band = scn.band(band_index)?;
    let grid = build_direction_grid(&scn.scan)?;
    if !grid
        .iter()
        .any(|&(az, el)| (az - direction.0).abs() < 1e-9 && (el - direction.1).abs() < 1e-9)
    {
        return Err(Error::InvalidArgument(format!(
            "direction ({}, {}) is outside the scan grid",
            direction.0, direction.1
        )));
    }
    let rx = scn.rx_by_id(rx_id)?;
    let paths = trace_paths(scn, rx_id, band)?;

    let n = band.sample_count;
    let steer = unit_from_az_el_deg(direction.0, direction.1);
    let tx_bore = (rx.position - scn.tx.position).normalized();
    let drift_bins = scn.drift.drift_at(timestamp_s) / band.delay_bin_s();

    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for path in &paths {
        let tx_off = angle_between_deg(tx_bore, path.aod_unit());
        let rx_off = angle_between_deg(steer, path.aoa_unit());
        let gains_db = scn.tx.antenna.gain_db(tx_off) + rx.antenna.gain_db(rx_off);
        let amp = path.gain * 10f64.powf(gains_db / 20.0);
        let delay_bins = path.delay_s / band.delay_bin_s() + drift_bins;
        accumulate_delayed_impulse(&mut spectrum, delay_bins, amp);
    }
    if let Some(sys) = &scn.system {
        for (s, h) in spectrum.iter_mut().zip(system_response_spectrum(sys, n)) {
            *s *= h;
        }
    }
    let mut samples = fft::ifft(&spectrum);
    if let Some(noise_db) = scn.noise_power_db {
        let averaged_db = noise_db - 10.0 * (scn.averaging_count as f64).log10();
        samples = add_noise(&samples, averaged_db, rng);
    }
    Ok(CirRecord {
        position_id: rx_id,
        band_index,
        az_deg: direction.0,
        el_deg: direction.1,
        timestamp_s,
        delay_bin_s: band.delay_bin_s(),
        samples,
    })
}

/// Run the full direction-scan campaign for one band: every receiver
/// position times every scan direction, with timestamps advancing through a
/// fixed dwell per position. Synthesis is parallel across records and
/// deterministic regardless of the thread count.
pub fn run_campaign(scn: &Scenario, band_index: usize) -> Result<Vec<CirRecord>> {
    scn.band(band_index)?;
    let grid = build_direction_grid(&scn.scan)?;
    let n_dir = grid.len();
    let dt = POSITION_DWELL_S / n_dir as f64;
    let jobs: Vec<(usize, usize)> = (0..scn.rx_list.len())
        .flat_map(|p| (0..n_dir).map(move |d| (p, d)))
        .collect();
    jobs.into_par_iter()
        .map(|(p, d)| {
            let rx = &scn.rx_list[p];
            let t = p as f64 * POSITION_DWELL_S + d as f64 * dt;
            let mut rng = ChaCha8Rng::seed_from_u64(record_seed(
                scn.rng_seed,
                rx.id,
                band_index as u32,
                d as u32,
            ));
            synthesize_observation(scn, rx.id, band_index, grid[d], t, &mut rng)
        })
        .collect()
}

/// Direct-connection measurement of the system response: a unit-gain path at
/// the epoch-time drift offset, bypassing the channel and antennas.
pub fn direct_connection_record(scn: &Scenario, band_index: usize) -> Result<CirRecord> {
    let band = scn.band(band_index)?;
    let n = band.sample_count;
    let delay_bins = scn.drift.drift_at(0.0) / band.delay_bin_s();
    let mut spectrum = fractional_delay_spectrum(n, delay_bins);
    if let Some(sys) = &scn.system {
        for (s, h) in spectrum.iter_mut().zip(system_response_spectrum(sys, n)) {
            *s *= h;
        }
    }
    let mut samples = fft::ifft(&spectrum);
    if let Some(noise_db) = scn.noise_power_db {
        let averaged_db = noise_db - 10.0 * (scn.averaging_count as f64).log10();
        let mut rng =
            ChaCha8Rng::seed_from_u64(record_seed(scn.rng_seed, 0, band_index as u32, u32::MAX));
        samples = add_noise(&samples, averaged_db, &mut rng);
    }
    Ok(CirRecord {
        position_id: 0,
        band_index,
        az_deg: 0.0,
        el_deg: 0.0,
        timestamp_s: 0.0,
        delay_bin_s: band.delay_bin_s(),
        samples,
    })
}
