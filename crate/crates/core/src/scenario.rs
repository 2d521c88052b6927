//! Measurement-world definition: room geometry, scatterer panels, antenna
//! placements, band/scan/drift/noise parameters, and the JSON scenario file
//! that carries them.
//!
//! Scenario files use SI units (meters, Hz, seconds) and degrees for angles.
//! Top-level keys: `room`, `objects`, `tx`, `rx`, `bands`, `scan`, `drift`,
//! `noise`, `averaging`, `seed`, plus the optional `system` block that enables
//! a synthetic system-response ripple for calibration exercises.

use crate::error::{Error, Result};
use crate::geom::{Vec3, SPEED_OF_LIGHT_M_S};
use crate::synth::DriftProcess;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Directional antenna described by boresight gain and half-power beamwidth.
///
/// The gain rolls off as a Gaussian mainlobe, `G(theta) = G0 - 12 (theta /
/// HPBW)^2` dB, floored at `G0 + sidelobe_floor_db`. The -3 dB point lands at
/// `HPBW / 2` off boresight by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntennaPattern {
    #[serde(rename = "gain_dbi")]
    pub boresight_gain_dbi: f64,
    pub hpbw_deg: f64,
    /// Sidelobe floor relative to boresight, dB (negative).
    #[serde(default = "default_sidelobe_floor_db")]
    pub sidelobe_floor_db: f64,
}

fn default_sidelobe_floor_db() -> f64 {
    -30.0
}

fn default_averaging_count() -> u32 {
    1000
}

impl AntennaPattern {
    /// Gain in dB at `offset_deg` away from boresight.
    pub fn gain_db(&self, offset_deg: f64) -> f64 {
        let theta = offset_deg.abs();
        let main = self.boresight_gain_dbi - 12.0 * (theta / self.hpbw_deg).powi(2);
        main.max(self.boresight_gain_dbi + self.sidelobe_floor_db)
    }
}

/// Gain of `pattern` at `offset_deg` off boresight, dB.
pub fn antenna_gain(pattern: &AntennaPattern, offset_deg: f64) -> f64 {
    pattern.gain_db(offset_deg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Material {
    Metal,
    Concrete,
}

impl std::fmt::Display for Material {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Material::Metal => write!(f, "metal"),
            Material::Concrete => write!(f, "concrete"),
        }
    }
}

/// Rectangular scattering panel. `half_extents` are the in-plane half sizes
/// along the panel's two tangent axes; `scattering_loss_db` is the ground
/// truth loss applied when a path bounces off this panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScattererPanel {
    pub center: Vec3,
    pub normal: Vec3,
    pub half_extents: [f64; 2],
    pub material: Material,
    pub scattering_loss_db: f64,
}

impl ScattererPanel {
    /// Orthonormal in-plane tangent basis `(u, v)`; `u` is horizontal when
    /// the panel is vertical, otherwise aligned with +x.
    pub fn tangent_basis(&self) -> (Vec3, Vec3) {
        let n = self.normal.normalized();
        let z = Vec3::new(0.0, 0.0, 1.0);
        let cross = n.cross(z);
        let u = if cross.norm() < 1e-9 {
            Vec3::new(1.0, 0.0, 0.0)
        } else {
            cross.normalized()
        };
        let v = n.cross(u);
        (u, v)
    }

    /// Whether an in-plane point lies on the finite panel rectangle.
    pub fn contains_in_plane(&self, point: Vec3) -> bool {
        let (u, v) = self.tangent_basis();
        let d = point - self.center;
        d.dot(u).abs() <= self.half_extents[0] + 1e-9 && d.dot(v).abs() <= self.half_extents[1] + 1e-9
    }
}

/// One measured frequency band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub sample_count: usize,
}

impl BandConfig {
    /// Delay resolution of one CIR bin, seconds.
    pub fn delay_bin_s(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    /// Maximum unambiguous delay, seconds.
    pub fn max_delay_s(&self) -> f64 {
        self.sample_count as f64 * self.delay_bin_s()
    }

    /// Maximum unambiguous path length, meters.
    pub fn max_path_m(&self) -> f64 {
        self.max_delay_s() * SPEED_OF_LIGHT_M_S
    }

    /// Short label used in artifact file names, e.g. `140ghz`.
    pub fn label(&self) -> String {
        format!("{:.0}ghz", self.carrier_hz / 1e9)
    }
}

/// Direction-scan grid. Start/stop are inclusive; a zero-extent axis (start
/// equal to stop) contributes a single direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanGrid {
    pub az_start_deg: f64,
    pub az_stop_deg: f64,
    pub az_step_deg: f64,
    pub el_start_deg: f64,
    pub el_stop_deg: f64,
    pub el_step_deg: f64,
}

fn axis_count(field: &str, start: f64, stop: f64, step: f64) -> Result<usize> {
    if (stop - start).abs() < 1e-9 {
        return Ok(1);
    }
    if stop < start {
        return Err(Error::validation(field, "stop must not be below start"));
    }
    if step <= 0.0 {
        return Err(Error::validation(field, "step must be positive"));
    }
    let n = (stop - start) / step;
    if (n - n.round()).abs() > 1e-9 {
        return Err(Error::validation(field, "step does not divide range evenly"));
    }
    Ok(n.round() as usize + 1)
}

impl ScanGrid {
    pub fn n_az(&self) -> Result<usize> {
        axis_count("scan.az", self.az_start_deg, self.az_stop_deg, self.az_step_deg)
    }

    pub fn n_el(&self) -> Result<usize> {
        axis_count("scan.el", self.el_start_deg, self.el_stop_deg, self.el_step_deg)
    }

    pub fn validate(&self) -> Result<()> {
        self.n_az()?;
        self.n_el()?;
        Ok(())
    }
}

/// Ordered direction list for a scan grid: elevation is the outer loop,
/// azimuth the inner one, both ascending.
pub fn build_direction_grid(scan: &ScanGrid) -> Result<Vec<(f64, f64)>> {
    let n_az = scan.n_az()?;
    let n_el = scan.n_el()?;
    let mut dirs = Vec::with_capacity(n_az * n_el);
    for ie in 0..n_el {
        let el = scan.el_start_deg + ie as f64 * scan.el_step_deg;
        for ia in 0..n_az {
            let az = scan.az_start_deg + ia as f64 * scan.az_step_deg;
            dirs.push((az, el));
        }
    }
    Ok(dirs)
}

/// Antenna placement (position plus pattern).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub position: Vec3,
    pub antenna: AntennaPattern,
}

/// Receiver placement with its campaign position id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RxPlacement {
    pub id: u32,
    pub position: Vec3,
    pub antenna: AntennaPattern,
}

/// Synthetic system-response ripple applied across the band during
/// synthesis; calibration is expected to remove it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemResponse {
    /// Peak-to-zero magnitude ripple amplitude, dB.
    pub ripple_db: f64,
    /// Number of ripple periods across the band.
    pub ripple_periods: f64,
}

/// The full measurement world. Immutable after load; safe to share across
/// parallel synthesis and post-processing workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Room extents along x, y, z in meters.
    #[serde(rename = "room")]
    pub room_extent: Vec3,
    #[serde(default)]
    pub objects: Vec<ScattererPanel>,
    pub tx: Placement,
    #[serde(rename = "rx")]
    pub rx_list: Vec<RxPlacement>,
    pub bands: Vec<BandConfig>,
    pub scan: ScanGrid,
    pub drift: DriftProcess,
    /// Per-sample noise power at the correlator output relative to a
    /// unit-gain path, dB. `null`/absent disables noise.
    #[serde(rename = "noise", default)]
    pub noise_power_db: Option<f64>,
    /// Snapshot averages per CIR; defaults to the 1000-fold averaging the
    /// sounder runs at.
    #[serde(rename = "averaging", default = "default_averaging_count")]
    pub averaging_count: u32,
    #[serde(rename = "seed")]
    pub rng_seed: u64,
    #[serde(default)]
    pub system: Option<SystemResponse>,
}

impl Scenario {
    pub fn rx_by_id(&self, id: u32) -> Result<&RxPlacement> {
        self.rx_list
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown rx position id {id}")))
    }

    pub fn band(&self, index: usize) -> Result<&BandConfig> {
        self.bands
            .get(index)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown band index {index}")))
    }

    fn inside_room(&self, p: Vec3) -> bool {
        p.x >= 0.0
            && p.x <= self.room_extent.x
            && p.y >= 0.0
            && p.y <= self.room_extent.y
            && p.z >= 0.0
            && p.z <= self.room_extent.z
    }

    pub fn validate(&self) -> Result<()> {
        if self.room_extent.x <= 0.0 || self.room_extent.y <= 0.0 || self.room_extent.z <= 0.0 {
            return Err(Error::validation("room", "extents must be positive"));
        }
        if !self.inside_room(self.tx.position) {
            return Err(Error::validation("tx.position", "outside room extents"));
        }
        if self.rx_list.is_empty() {
            return Err(Error::validation("rx", "at least one receiver position is required"));
        }
        for rx in &self.rx_list {
            if !self.inside_room(rx.position) {
                return Err(Error::validation(
                    format!("rx[id={}].position", rx.id),
                    "outside room extents",
                ));
            }
        }
        let mut ids: Vec<u32> = self.rx_list.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.rx_list.len() {
            return Err(Error::validation("rx", "position ids must be unique"));
        }
        if self.bands.is_empty() {
            return Err(Error::validation("bands", "at least one band is required"));
        }
        for (i, b) in self.bands.iter().enumerate() {
            if b.carrier_hz <= 0.0 {
                return Err(Error::validation(format!("bands[{i}].carrier_hz"), "must be positive"));
            }
            if b.bandwidth_hz <= 0.0 {
                return Err(Error::validation(
                    format!("bands[{i}].bandwidth_hz"),
                    "must be positive",
                ));
            }
            if b.sample_count < 1 {
                return Err(Error::validation(
                    format!("bands[{i}].sample_count"),
                    "must be at least 1",
                ));
            }
        }
        self.scan.validate()?;
        if self.averaging_count < 1 {
            return Err(Error::validation("averaging", "must be at least 1"));
        }
        for (i, p) in self.objects.iter().enumerate() {
            if (p.normal.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::validation(
                    format!("objects[{i}].normal"),
                    "must be a unit vector",
                ));
            }
            if p.half_extents[0] <= 0.0 || p.half_extents[1] <= 0.0 {
                return Err(Error::validation(
                    format!("objects[{i}].half_extents"),
                    "must be positive",
                ));
            }
            if p.scattering_loss_db < 0.0 {
                return Err(Error::validation(
                    format!("objects[{i}].scattering_loss_db"),
                    "must be non-negative",
                ));
            }
            if !self.inside_room(p.center) {
                return Err(Error::validation(
                    format!("objects[{i}].center"),
                    "outside room extents",
                ));
            }
        }
        if let Some(sys) = &self.system {
            if sys.ripple_db < 0.0 {
                return Err(Error::validation("system.ripple_db", "must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Load and validate a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    let scenario: Scenario =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    scenario.validate()?;
    Ok(scenario)
}

/// Geometric line-of-sight delay between two positions, seconds.
pub fn los_delay(a: Vec3, b: Vec3) -> f64 {
    a.distance(b) / SPEED_OF_LIGHT_M_S
}
