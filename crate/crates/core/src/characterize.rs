//! Channel characterization: path loss (best-direction and omnidirectional),
//! close-in model fitting, scattering loss of once-scattering clusters,
//! K-factor, delay/angular spreads, cluster statistics, log-normal fits, and
//! comparison against reference model values.

use crate::error::{Error, Result};
use crate::geom::SPEED_OF_LIGHT_M_S;
use crate::postproc::{Cluster, Mpc};
use crate::synth::fspl;
use crate::waveform::CirRecord;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Per-position channel characterization record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub position_id: u32,
    pub band: String,
    pub distance_m: f64,
    pub los: bool,
    pub pl_best_db: f64,
    pub pl_omni_db: f64,
    /// `None` marks the LoS-only case (single cluster, K undefined/infinite).
    pub k_factor_db: Option<f64>,
    pub ds_s: f64,
    pub asa_deg: f64,
    pub esa_deg: f64,
    pub n_clusters: usize,
    pub cds_s: f64,
    pub casa_deg: f64,
    pub cesa_deg: f64,
}

/// Best-direction path loss: `-10 log10(max over directions of the per-bin
/// mean power)`, the literal steering-direction power average.
pub fn pl_best(records: &[CirRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("pl_best needs at least one record".into()));
    }
    let best = records
        .iter()
        .map(|r| r.energy() / r.samples.len() as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    if best <= 0.0 {
        return Err(Error::Numeric("all records carry zero power".into()));
    }
    Ok(-10.0 * best.log10())
}

/// Best-direction path loss referenced to the physical link budget: the
/// per-bin mean is rescaled by the bin count (the correlator spreads a
/// single path's energy over `K` bins) and boresight antenna gains are
/// removed, so a free-space record yields its free-space path loss.
pub fn pl_best_corrected(records: &[CirRecord], gain_removal_db: f64) -> Result<f64> {
    let k = records
        .first()
        .map(|r| r.samples.len())
        .ok_or_else(|| Error::InvalidArgument("pl_best needs at least one record".into()))?;
    Ok(pl_best(records)? - 10.0 * (k as f64).log10() + gain_removal_db)
}

/// Omnidirectional path loss: `-10 log10(sum of |alpha_l|^2)` over all
/// extracted MPCs of a position.
pub fn pl_omni(mpcs: &[Mpc]) -> Result<f64> {
    if mpcs.is_empty() {
        return Err(Error::InvalidArgument("pl_omni needs at least one MPC".into()));
    }
    let total: f64 = mpcs.iter().map(|m| m.gain.norm_sqr()).sum();
    if total <= 0.0 {
        return Err(Error::Numeric("total MPC power is zero".into()));
    }
    Ok(-10.0 * total.log10())
}

/// Scattering loss of a once-scattering cluster: the representative path
/// gain minus free-space spreading over the representative delay,
/// `L = -20 log10(alpha) - FSPL(c tau, f)`.
pub fn scattering_loss(cluster: &Cluster, f_hz: f64) -> Result<f64> {
    let (tau, alpha) = cluster.representative();
    if alpha <= 0.0 {
        return Err(Error::Numeric("cluster gain is zero".into()));
    }
    Ok(-20.0 * alpha.log10() - fspl(SPEED_OF_LIGHT_M_S * tau, f_hz)?)
}

/// Close-in reference-distance fit result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiFitResult {
    /// Path loss exponent.
    pub ple: f64,
    /// Standard deviation of the shadow-fading residuals, dB.
    pub sigma_sf_db: f64,
    pub d0_m: f64,
    pub residuals_db: Vec<f64>,
}

/// Least-squares fit of `PL = FSPL(d0) + 10 n log10(d / d0) + chi` with the
/// intercept pinned at `FSPL(d0)`: only the exponent is free, and the
/// shadow-fading sigma is the standard deviation of the residuals.
pub fn fit_ci(points: &[(f64, f64)], f_hz: f64, d0_m: f64) -> Result<CiFitResult> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("fit_ci needs at least two points".into()));
    }
    if points.iter().any(|&(d, _)| d < d0_m) {
        return Err(Error::InvalidArgument(
            "all distances must be at or beyond the reference distance".into(),
        ));
    }
    let d_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let d_max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if d_min == d_max {
        return Err(Error::InvalidArgument(
            "fit_ci needs at least two distinct distances".into(),
        ));
    }
    let fspl0 = fspl(d0_m, f_hz)?;
    let xs: Vec<f64> = points.iter().map(|&(d, _)| 10.0 * (d / d0_m).log10()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, pl)| pl - fspl0).collect();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys.iter()).map(|(x, y)| x * y).sum();
    let ple = sxy / sxx;
    let residuals: Vec<f64> = xs.iter().zip(ys.iter()).map(|(x, y)| y - ple * x).collect();
    let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
    let var = residuals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
        / residuals.len() as f64;
    Ok(CiFitResult {
        ple,
        sigma_sf_db: var.sqrt(),
        d0_m,
        residuals_db: residuals,
    })
}

/// K-factor over clusters: power ratio of the strongest cluster to the sum
/// of the rest, dB. A single cluster has no "rest"; that LoS-only case is
/// reported as `None` and excluded from distribution fits.
pub fn k_factor(clusters: &[Cluster]) -> Result<Option<f64>> {
    if clusters.is_empty() {
        return Err(Error::InvalidArgument("k_factor needs at least one cluster".into()));
    }
    if clusters.len() == 1 {
        return Ok(None);
    }
    let strongest = clusters
        .iter()
        .map(|c| c.power_linear)
        .fold(f64::NEG_INFINITY, f64::max);
    let rest: f64 = clusters.iter().map(|c| c.power_linear).sum::<f64>() - strongest;
    if rest <= 0.0 {
        return Err(Error::Numeric("remaining cluster power is zero".into()));
    }
    Ok(Some(10.0 * (strongest / rest).log10()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpreadDomain {
    Delay,
    Azimuth,
    Elevation,
}

/// Power-weighted RMS spread of `(metric, power)` pairs.
///
/// The delay domain uses the RMS deviation about the power-weighted mean.
/// Angular domains use the circular spread from the first trigonometric
/// moment, `sqrt(-2 ln |sum p e^{j theta}| / sum p)`, reported in degrees,
/// which is invariant under rotation of all angles.
pub fn rms_spread(values: &[(f64, f64)], domain: SpreadDomain) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("rms_spread needs at least one value".into()));
    }
    if values.iter().any(|&(_, p)| p <= 0.0) {
        return Err(Error::InvalidArgument("rms_spread powers must be positive".into()));
    }
    if values.len() == 1 {
        return Ok(0.0);
    }
    let total: f64 = values.iter().map(|&(_, p)| p).sum();
    match domain {
        SpreadDomain::Delay => {
            let mean = values.iter().map(|&(v, p)| v * p).sum::<f64>() / total;
            let var = values
                .iter()
                .map(|&(v, p)| p * (v - mean) * (v - mean))
                .sum::<f64>()
                / total;
            Ok(var.max(0.0).sqrt())
        }
        SpreadDomain::Azimuth | SpreadDomain::Elevation => {
            let mut re = 0.0;
            let mut im = 0.0;
            for &(deg, p) in values {
                let rad = deg.to_radians();
                re += p * rad.cos();
                im += p * rad.sin();
            }
            let r = ((re * re + im * im).sqrt() / total).min(1.0);
            if r <= 0.0 {
                return Err(Error::Numeric(
                    "circular spread is undefined for a zero resultant".into(),
                ));
            }
            // a resultant within rounding of 1 is a single direction
            if 1.0 - r < 1e-14 {
                return Ok(0.0);
            }
            Ok((-2.0 * r.ln()).max(0.0).sqrt().to_degrees())
        }
    }
}

/// Mean intra-cluster statistics over a position's clusters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterStatsSummary {
    pub count: usize,
    pub mean_cds_s: f64,
    pub mean_casa_deg: f64,
    pub mean_cesa_deg: f64,
}

pub fn cluster_stats(clusters: &[Cluster]) -> ClusterStatsSummary {
    let n = clusters.len();
    if n == 0 {
        return ClusterStatsSummary {
            count: 0,
            mean_cds_s: 0.0,
            mean_casa_deg: 0.0,
            mean_cesa_deg: 0.0,
        };
    }
    ClusterStatsSummary {
        count: n,
        mean_cds_s: clusters.iter().map(|c| c.cds_s).sum::<f64>() / n as f64,
        mean_casa_deg: clusters.iter().map(|c| c.casa_deg).sum::<f64>() / n as f64,
        mean_cesa_deg: clusters.iter().map(|c| c.cesa_deg).sum::<f64>() / n as f64,
    }
}

/// Which domain the log-normal variate lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogDomain {
    /// Positive linear quantities; the normal variate is `log10(x)`.
    Linear,
    /// Quantities already in dB; the dB value itself is the normal variate.
    Decibel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalFit {
    pub mu: f64,
    pub sigma: f64,
    /// Arithmetic mean of the samples in their native domain.
    pub sample_mean: f64,
}

pub fn fit_lognormal(samples: &[f64], domain: LogDomain) -> Result<LogNormalFit> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("fit_lognormal needs at least one sample".into()));
    }
    let variates: Vec<f64> = match domain {
        LogDomain::Linear => {
            if samples.iter().any(|&x| x <= 0.0) {
                return Err(Error::InvalidArgument(
                    "log-normal samples must be positive in the linear domain".into(),
                ));
            }
            samples.iter().map(|x| x.log10()).collect()
        }
        LogDomain::Decibel => samples.to_vec(),
    };
    let n = variates.len() as f64;
    let mu = variates.iter().sum::<f64>() / n;
    let var = variates.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    Ok(LogNormalFit {
        mu,
        sigma: var.sqrt(),
        sample_mean: samples.iter().sum::<f64>() / n,
    })
}

/// Ensemble characteristic samples collected across a band's positions.
/// Cluster counts are carried as floats so campaign means flow through.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BandSamples {
    pub band: String,
    pub carrier_hz: f64,
    pub delay_bin_ns: f64,
    pub max_delay_ns: f64,
    pub max_path_m: f64,
    /// `(distance_m, pl_db)` points for the close-in fits.
    pub ci_points_best: Vec<(f64, f64)>,
    pub ci_points_omni: Vec<(f64, f64)>,
    pub ds_ns: Vec<f64>,
    pub asa_deg: Vec<f64>,
    pub esa_deg: Vec<f64>,
    pub k_db: Vec<f64>,
    pub n_clusters: Vec<f64>,
    pub cds_ns: Vec<f64>,
    pub casa_deg: Vec<f64>,
    pub cesa_deg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiSummary {
    pub ple: f64,
    pub sigma_sf_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogNormalSummary {
    pub mu: f64,
    pub sigma: f64,
    pub mean: f64,
}

/// Per-band ensemble summary serialized into the campaign report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub band: String,
    pub carrier_hz: f64,
    pub delay_bin_ns: f64,
    pub max_delay_ns: f64,
    pub max_path_m: f64,
    pub ci_best: Option<CiSummary>,
    pub ci_omni: Option<CiSummary>,
    pub ds_ns: Option<LogNormalSummary>,
    pub asa_deg: Option<LogNormalSummary>,
    pub esa_deg: Option<LogNormalSummary>,
    pub k_db: Option<LogNormalSummary>,
    pub n_clusters_mean: Option<f64>,
    pub cds_ns_mean: Option<f64>,
    pub casa_deg_mean: Option<f64>,
    pub cesa_deg_mean: Option<f64>,
}

fn lognormal_summary(samples: &[f64], domain: LogDomain) -> Result<Option<LogNormalSummary>> {
    if samples.is_empty() {
        return Ok(None);
    }
    let fit = fit_lognormal(samples, domain)?;
    Ok(Some(LogNormalSummary {
        mu: fit.mu,
        sigma: fit.sigma,
        mean: fit.sample_mean,
    }))
}

fn mean_of(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        None
    } else {
        Some(samples.iter().sum::<f64>() / samples.len() as f64)
    }
}

/// Fit every ensemble characteristic of one band. CI fits are skipped when
/// fewer than two distinct distances are present; distribution fits are
/// skipped when their sample list is empty.
pub fn summarize_band(samples: &BandSamples) -> Result<BandSummary> {
    let ci = |points: &[(f64, f64)]| -> Result<Option<CiSummary>> {
        let mut distances: Vec<f64> = points.iter().map(|p| p.0).collect();
        distances.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distances.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        if distances.len() < 2 {
            return Ok(None);
        }
        let fit = fit_ci(points, samples.carrier_hz, 1.0)?;
        Ok(Some(CiSummary {
            ple: fit.ple,
            sigma_sf_db: fit.sigma_sf_db,
        }))
    };
    Ok(BandSummary {
        band: samples.band.clone(),
        carrier_hz: samples.carrier_hz,
        delay_bin_ns: samples.delay_bin_ns,
        max_delay_ns: samples.max_delay_ns,
        max_path_m: samples.max_path_m,
        ci_best: ci(&samples.ci_points_best)?,
        ci_omni: ci(&samples.ci_points_omni)?,
        ds_ns: lognormal_summary(&samples.ds_ns, LogDomain::Linear)?,
        asa_deg: lognormal_summary(&samples.asa_deg, LogDomain::Linear)?,
        esa_deg: lognormal_summary(&samples.esa_deg, LogDomain::Linear)?,
        k_db: lognormal_summary(&samples.k_db, LogDomain::Decibel)?,
        n_clusters_mean: mean_of(&samples.n_clusters),
        cds_ns_mean: mean_of(&samples.cds_ns),
        casa_deg_mean: mean_of(&samples.casa_deg),
        cesa_deg_mean: mean_of(&samples.cesa_deg),
    })
}

/// Reference characteristic values supplied via configuration for the
/// model-comparison report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTable {
    #[serde(default)]
    pub characteristics: BTreeMap<String, f64>,
}

const REFERENCE_KEYS: &[&str] = &[
    "ple_best",
    "ple_omni",
    "sigma_sf_best_db",
    "sigma_sf_omni_db",
    "ds_ns",
    "asa_deg",
    "esa_deg",
    "k_db",
    "n_clusters",
    "cds_ns",
    "casa_deg",
    "cesa_deg",
];

impl ReferenceTable {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let table: ReferenceTable = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        table.validate()?;
        Ok(table)
    }

    /// Unknown keys are rejected: every supported key carries its unit in
    /// its name, so an unknown key is a unit mismatch waiting to happen.
    pub fn validate(&self) -> Result<()> {
        for key in self.characteristics.keys() {
            if !REFERENCE_KEYS.contains(&key.as_str()) {
                return Err(Error::validation(
                    format!("characteristics.{key}"),
                    "unknown characteristic (unit mismatch?)",
                ));
            }
        }
        Ok(())
    }
}

/// One row of the measured-versus-reference comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub band: String,
    pub characteristic: String,
    pub measured: f64,
    pub reference: f64,
    /// measured - reference
    pub delta: f64,
    pub flag: String,
}

fn measured_value(summary: &BandSummary, key: &str) -> Option<f64> {
    match key {
        "ple_best" => summary.ci_best.as_ref().map(|c| c.ple),
        "ple_omni" => summary.ci_omni.as_ref().map(|c| c.ple),
        "sigma_sf_best_db" => summary.ci_best.as_ref().map(|c| c.sigma_sf_db),
        "sigma_sf_omni_db" => summary.ci_omni.as_ref().map(|c| c.sigma_sf_db),
        "ds_ns" => summary.ds_ns.as_ref().map(|s| s.mean),
        "asa_deg" => summary.asa_deg.as_ref().map(|s| s.mean),
        "esa_deg" => summary.esa_deg.as_ref().map(|s| s.mean),
        "k_db" => summary.k_db.as_ref().map(|s| s.mean),
        "n_clusters" => summary.n_clusters_mean,
        "cds_ns" => summary.cds_ns_mean,
        "casa_deg" => summary.casa_deg_mean,
        "cesa_deg" => summary.cesa_deg_mean,
        _ => None,
    }
}

fn comparison_flag(key: &str, delta: f64) -> String {
    if delta == 0.0 {
        return "matches reference".into();
    }
    match key {
        "k_db" => {
            if delta > 0.0 {
                "more LoS-dominant than reference".into()
            } else {
                "less LoS-dominant than reference".into()
            }
        }
        _ => {
            if delta < 0.0 {
                "reference overestimates".into()
            } else {
                "reference underestimates".into()
            }
        }
    }
}

/// Compare a band summary against the reference table. Characteristics
/// missing on either side are skipped; an empty table yields an empty
/// report.
pub fn compare_reference(summary: &BandSummary, table: &ReferenceTable) -> Result<Vec<ComparisonRow>> {
    table.validate()?;
    let mut rows = Vec::new();
    for (key, &reference) in &table.characteristics {
        if let Some(measured) = measured_value(summary, key) {
            let delta = measured - reference;
            rows.push(ComparisonRow {
                band: summary.band.clone(),
                characteristic: key.clone(),
                measured,
                reference,
                delta,
                flag: comparison_flag(key, delta),
            });
        }
    }
    Ok(rows)
}
