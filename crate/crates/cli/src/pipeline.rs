//! Pipeline orchestration: scenario in, campaign synthesis, post-processing,
//! characterization, and report/plot-data emission, with a hashed artifact
//! manifest at the end of every run.
//!
//! Stages communicate exclusively through files in the output directory, so
//! any contiguous prefix of the chain can be re-run or resumed, and two runs
//! with the same scenario and seed produce byte-identical artifacts.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sounderlab::characterize::{
    self, BandSamples, BandSummary, ChannelStats, ComparisonRow, ReferenceTable,
};
use sounderlab::error::{Error, Result};
use sounderlab::geom::{angle_between_deg, unit_from_az_el_deg, SPEED_OF_LIGHT_M_S};
use sounderlab::io::{
    read_cir_binary, read_mpc_csv, write_cir_binary, write_cir_csv, write_mpc_csv,
    write_stats_csv, MpcRow,
};
use sounderlab::postproc::{
    self, apply_drift_correction, calibrate, cluster_mpcs, default_delay_scale,
    estimate_drift_samples, extract_mpcs, select_reference_records, Cluster, DriftModel,
    ExtractConfig, Mpc, DEFAULT_MCD_THRESHOLD,
};
use sounderlab::scenario::{load_scenario, BandConfig, Scenario};
use sounderlab::synth::{
    direct_connection_record, run_campaign, trace_paths, PathKind, PropagationPath,
};
use sounderlab::waveform::CirRecord;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
pub enum Stage {
    Synth,
    Postproc,
    Characterize,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Synth, Stage::Postproc, Stage::Characterize, Stage::Report];
}

/// Which configured bands a run operates on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandSelection {
    All,
    CarrierGhz(f64),
}

impl BandSelection {
    pub fn parse(text: &str) -> Result<Self> {
        if text.eq_ignore_ascii_case("both") || text.eq_ignore_ascii_case("all") {
            return Ok(BandSelection::All);
        }
        text.parse::<f64>()
            .map(BandSelection::CarrierGhz)
            .map_err(|_| Error::validation("band", format!("cannot parse `{text}` (expected a GHz value or `both`)")))
    }

    fn indices(&self, scn: &Scenario) -> Result<Vec<usize>> {
        match self {
            BandSelection::All => Ok((0..scn.bands.len()).collect()),
            BandSelection::CarrierGhz(ghz) => {
                let hits: Vec<usize> = scn
                    .bands
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| (b.carrier_hz / 1e9 - ghz).abs() < 0.5)
                    .map(|(i, _)| i)
                    .collect();
                if hits.is_empty() {
                    return Err(Error::validation(
                        "band",
                        format!("no configured band near {ghz} GHz"),
                    ));
                }
                Ok(hits)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub scenario_path: PathBuf,
    pub out_dir: PathBuf,
    pub bands: BandSelection,
    /// First stage to execute; earlier stages must already have artifacts.
    pub start: Stage,
    /// Last stage to execute.
    pub target: Stage,
    pub seed_override: Option<u64>,
    pub reference_path: Option<PathBuf>,
    /// Also export synthesized CIRs as (large) long-format CSV.
    pub cir_csv: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Run manifest. `created_unix_s` is the only field that varies between
/// otherwise identical runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub created_unix_s: u64,
    pub scenario: String,
    pub seed: u64,
    pub artifacts: Vec<ArtifactEntry>,
}

/// Full campaign summary serialized as `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub schema_version: u32,
    pub seed: u64,
    pub bands: Vec<BandSummary>,
}

struct Ctx {
    scn: Scenario,
    out: PathBuf,
    band_indices: Vec<usize>,
    artifacts: Vec<PathBuf>,
    cir_csv: bool,
}

impl Ctx {
    fn track(&mut self, path: PathBuf) {
        self.artifacts.push(path);
    }

    fn band(&self, idx: usize) -> &BandConfig {
        &self.scn.bands[idx]
    }
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(Error::MissingInput(format!(
            "{} (run the earlier pipeline stages first)",
            path.display()
        )));
    }
    Ok(())
}

/// Execute the configured stage range and write the manifest.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Manifest> {
    if cfg.start > cfg.target {
        return Err(Error::validation(
            "stage",
            "start stage is later than the target stage",
        ));
    }
    let mut scn = load_scenario(&cfg.scenario_path)?;
    if let Some(seed) = cfg.seed_override {
        scn.rng_seed = seed;
    }
    let band_indices = cfg.bands.indices(&scn)?;
    std::fs::create_dir_all(&cfg.out_dir)?;

    let mut ctx = Ctx {
        scn,
        out: cfg.out_dir.clone(),
        band_indices,
        artifacts: Vec::new(),
        cir_csv: cfg.cir_csv,
    };

    for stage in Stage::ALL {
        if stage < cfg.start || stage > cfg.target {
            continue;
        }
        match stage {
            Stage::Synth => stage_synth(&mut ctx)?,
            Stage::Postproc => stage_postproc(&mut ctx)?,
            Stage::Characterize => stage_characterize(&mut ctx)?,
            Stage::Report => stage_report(&mut ctx, cfg.reference_path.as_deref())?,
        }
    }

    write_manifest(&ctx, &cfg.scenario_path)
}

fn write_manifest(ctx: &Ctx, scenario_path: &Path) -> Result<Manifest> {
    let mut entries = Vec::with_capacity(ctx.artifacts.len());
    for path in &ctx.artifacts {
        let data = std::fs::read(path)?;
        let rel = path
            .strip_prefix(&ctx.out)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        entries.push(ArtifactEntry {
            path: rel,
            bytes: data.len() as u64,
            sha256: hex::encode(Sha256::digest(&data)),
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        schema_version: SUMMARY_SCHEMA_VERSION,
        created_unix_s: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        scenario: scenario_path.to_string_lossy().into_owned(),
        seed: ctx.scn.rng_seed,
        artifacts: entries,
    };
    let path = ctx.out.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

fn stage_synth(ctx: &mut Ctx) -> Result<()> {
    for &bi in &ctx.band_indices.clone() {
        let band = *ctx.band(bi);
        let label = band.label();
        let records = run_campaign(&ctx.scn, bi)?;
        let cir_path = ctx.out.join(format!("cir_{label}.bin"));
        write_cir_binary(&cir_path, &records, &band, bi)?;
        ctx.track(cir_path);

        let direct = direct_connection_record(&ctx.scn, bi)?;
        let sys_path = ctx.out.join(format!("system_{label}.bin"));
        write_cir_binary(&sys_path, &[direct], &band, bi)?;
        ctx.track(sys_path);

        if ctx.cir_csv {
            let csv_path = ctx.out.join(format!("cir_{label}.csv"));
            write_cir_csv(&csv_path, &records, &label)?;
            ctx.track(csv_path);
        }
        log::info!("synth: {} records written for {label}", records.len());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// postproc
// ---------------------------------------------------------------------------

fn extract_config(scn: &Scenario) -> ExtractConfig {
    ExtractConfig {
        noise_floor_db: scn
            .noise_power_db
            .map(|n| n - 10.0 * (scn.averaging_count as f64).log10()),
        ..ExtractConfig::default()
    }
}

fn stage_postproc(ctx: &mut Ctx) -> Result<()> {
    for &bi in &ctx.band_indices.clone() {
        let label = ctx.band(bi).label();
        let cir_path = ctx.out.join(format!("cir_{label}.bin"));
        let sys_path = ctx.out.join(format!("system_{label}.bin"));
        require_file(&cir_path)?;
        require_file(&sys_path)?;
        let (band, band_index, records) = read_cir_binary(&cir_path)?;
        let (_, _, system) = read_cir_binary(&sys_path)?;
        let system = system
            .first()
            .ok_or_else(|| Error::MissingInput(format!("{}: no system record", sys_path.display())))?;

        let mut calibrated: Vec<CirRecord> = Vec::with_capacity(records.len());
        for rec in &records {
            calibrated.push(calibrate(rec, &system.samples)?);
        }

        let reference = select_reference_records(&calibrated, &ctx.scn)?;
        let samples = estimate_drift_samples(&reference, &ctx.scn)?;
        let model = if samples.len() >= 2 {
            Some(DriftModel::fit(samples)?)
        } else {
            log::warn!(
                "{label}: {} drift sample(s) is not enough for correction; delays left uncorrected",
                samples.len()
            );
            None
        };

        let drift_path = ctx.out.join(format!("drift_{label}.csv"));
        match &model {
            Some(m) => write_drift_csv(&drift_path, m)?,
            None => std::fs::write(&drift_path, "t_s,measured_ns,fitted_ns\n")?,
        }
        ctx.track(drift_path);

        if let Some(model) = &model {
            apply_drift_correction(&mut calibrated, model);
        }
        let corrected_path = ctx.out.join(format!("corrected_{label}.bin"));
        write_cir_binary(&corrected_path, &calibrated, &band, band_index)?;
        ctx.track(corrected_path);

        let rows = extract_and_cluster(ctx, &calibrated, &label)?;
        let mpc_path = ctx.out.join(format!("mpcs_{label}.csv"));
        write_mpc_csv(&mpc_path, &rows)?;
        ctx.track(mpc_path);
        log::info!("postproc: {} MPCs extracted for {label}", rows.len());
    }
    Ok(())
}

fn write_drift_csv(path: &Path, model: &DriftModel) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "t_s,measured_ns,fitted_ns")?;
    for &(t, dtau) in &model.samples {
        let fitted = model.slope * t + model.intercept;
        writeln!(w, "{},{:e},{:e}", t, dtau * 1e9, fitted * 1e9)?;
    }
    w.flush()?;
    Ok(())
}

fn read_drift_csv(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(Error::Parse(format!("{}: malformed line {}", path.display(), i + 1)));
        }
        let p = |s: &str| -> Result<f64> {
            s.parse().map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
        };
        rows.push((p(f[0])?, p(f[1])?, p(f[2])?));
    }
    Ok(rows)
}

fn extract_and_cluster(ctx: &Ctx, records: &[CirRecord], label: &str) -> Result<Vec<MpcRow>> {
    let cfg = extract_config(&ctx.scn);
    let mut rows = Vec::new();
    let mut by_position: BTreeMap<u32, Vec<CirRecord>> = BTreeMap::new();
    for rec in records {
        by_position.entry(rec.position_id).or_default().push(rec.clone());
    }
    for (pos, recs) in &by_position {
        let rx = ctx.scn.rx_by_id(*pos)?;
        let mpcs = extract_mpcs(recs, &ctx.scn.tx.antenna, &rx.antenna, &cfg)?;
        if mpcs.is_empty() {
            log::warn!("no MPCs extracted at position {pos} ({label})");
            continue;
        }
        let clusters = cluster_mpcs(&mpcs, DEFAULT_MCD_THRESHOLD, default_delay_scale(&mpcs))?;
        for (ci, cluster) in clusters.iter().enumerate() {
            for m in &cluster.members {
                rows.push(MpcRow {
                    position_id: *pos,
                    band: label.to_string(),
                    delay_ns: m.delay_s * 1e9,
                    power_db: m.power_db,
                    aoa_az_deg: m.aoa_az_deg,
                    aoa_el_deg: m.aoa_el_deg,
                    cluster_id: ci as u32,
                });
            }
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// characterize
// ---------------------------------------------------------------------------

fn mpc_from_row(row: &MpcRow) -> Mpc {
    let gain = 10f64.powf(row.power_db / 20.0);
    Mpc {
        delay_s: row.delay_ns * 1e-9,
        gain: num_complex::Complex64::new(gain, 0.0),
        power_db: row.power_db,
        aoa_az_deg: row.aoa_az_deg,
        aoa_el_deg: row.aoa_el_deg,
    }
}

fn clusters_from_rows(rows: &[MpcRow]) -> Result<Vec<Cluster>> {
    let mut by_cluster: BTreeMap<u32, Vec<Mpc>> = BTreeMap::new();
    for row in rows {
        by_cluster.entry(row.cluster_id).or_default().push(mpc_from_row(row));
    }
    by_cluster.into_values().map(Cluster::from_members).collect()
}

/// Row of the scattering-loss report: one detected once-scattering cluster
/// matched back to its panel, with the loss recovered from the measured
/// delay/gain pair after undoing the known pattern misalignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScatteringEntry {
    pub position_id: u32,
    pub cluster_id: u32,
    pub scatterer_id: usize,
    pub material: String,
    pub delay_ns: f64,
    pub recovered_loss_db: f64,
    pub configured_loss_db: f64,
}

fn match_cluster_to_path<'a>(
    cluster: &Cluster,
    paths: &'a [PropagationPath],
    band: &BandConfig,
    max_delay_bins: f64,
    max_angle_deg: f64,
) -> Option<&'a PropagationPath> {
    let (tau, _) = cluster.representative();
    let best = cluster
        .members
        .iter()
        .max_by(|a, b| a.power_db.partial_cmp(&b.power_db).unwrap())?;
    let aoa = unit_from_az_el_deg(best.aoa_az_deg, best.aoa_el_deg);
    paths
        .iter()
        .filter(|p| {
            let delay_err = (p.delay_s - tau).abs() / band.delay_bin_s();
            let angle_err = angle_between_deg(aoa, p.aoa_unit());
            delay_err <= max_delay_bins && angle_err <= max_angle_deg
        })
        .min_by(|a, b| {
            let score = |p: &PropagationPath| {
                (p.delay_s - tau).abs() / band.delay_bin_s()
                    + angle_between_deg(aoa, p.aoa_unit()) / 10.0
            };
            score(a).partial_cmp(&score(b)).unwrap()
        })
}

fn scattering_entries(
    scn: &Scenario,
    band: &BandConfig,
    position_id: u32,
    clusters: &[Cluster],
) -> Result<Vec<ScatteringEntry>> {
    let paths = trace_paths(scn, position_id, band)?;
    let rx = scn.rx_by_id(position_id)?;
    let tx_bore = (rx.position - scn.tx.position).normalized();
    let max_angle = 1.5 * scn.scan.az_step_deg.max(scn.scan.el_step_deg);
    let mut entries = Vec::new();
    for (ci, cluster) in clusters.iter().enumerate() {
        let Some(path) = match_cluster_to_path(cluster, &paths, band, 3.0, max_angle) else {
            continue;
        };
        if path.kind != PathKind::OnceScattered {
            continue;
        }
        let Some(sid) = path.scatterer_id else { continue };
        let panel = &scn.objects[sid];
        let best = cluster
            .members
            .iter()
            .max_by(|a, b| a.power_db.partial_cmp(&b.power_db).unwrap())
            .expect("cluster is non-empty");
        // undo the known pattern misalignment: the extractor removed
        // boresight gains, the path actually saw off-boresight ones
        let steer = unit_from_az_el_deg(best.aoa_az_deg, best.aoa_el_deg);
        let tx_off = angle_between_deg(tx_bore, path.aod_unit());
        let rx_off = angle_between_deg(steer, path.aoa_unit());
        let actual_db = scn.tx.antenna.gain_db(tx_off) + rx.antenna.gain_db(rx_off);
        let boresight_db = scn.tx.antenna.boresight_gain_dbi + rx.antenna.boresight_gain_dbi;
        let (tau, alpha_meas) = cluster.representative();
        let alpha = alpha_meas * 10f64.powf((boresight_db - actual_db) / 20.0);
        let loss = -20.0 * alpha.log10()
            - sounderlab::synth::fspl(SPEED_OF_LIGHT_M_S * tau, band.carrier_hz)?;
        entries.push(ScatteringEntry {
            position_id,
            cluster_id: ci as u32,
            scatterer_id: sid,
            material: panel.material.to_string(),
            delay_ns: tau * 1e9,
            recovered_loss_db: loss,
            configured_loss_db: panel.scattering_loss_db,
        });
    }
    Ok(entries)
}

fn stage_characterize(ctx: &mut Ctx) -> Result<()> {
    let mut band_summaries = Vec::new();
    for &bi in &ctx.band_indices.clone() {
        let label = ctx.band(bi).label();
        let corrected_path = ctx.out.join(format!("corrected_{label}.bin"));
        let mpc_path = ctx.out.join(format!("mpcs_{label}.csv"));
        require_file(&corrected_path)?;
        require_file(&mpc_path)?;
        let (band, _, records) = read_cir_binary(&corrected_path)?;
        let rows = read_mpc_csv(&mpc_path)?;

        let mut by_position: BTreeMap<u32, Vec<CirRecord>> = BTreeMap::new();
        for rec in &records {
            by_position.entry(rec.position_id).or_default().push(rec.clone());
        }
        let mut rows_by_position: BTreeMap<u32, Vec<MpcRow>> = BTreeMap::new();
        for row in rows {
            rows_by_position.entry(row.position_id).or_default().push(row);
        }

        let mut stats: Vec<ChannelStats> = Vec::new();
        let mut scattering: Vec<ScatteringEntry> = Vec::new();
        let mut samples = BandSamples {
            band: label.clone(),
            carrier_hz: band.carrier_hz,
            delay_bin_ns: band.delay_bin_s() * 1e9,
            max_delay_ns: band.max_delay_s() * 1e9,
            max_path_m: band.max_path_m(),
            ..BandSamples::default()
        };

        for (pos, recs) in &by_position {
            let Some(pos_rows) = rows_by_position.get(pos) else {
                log::warn!("position {pos}: no MPCs, skipped from statistics");
                continue;
            };
            let rx = ctx.scn.rx_by_id(*pos)?;
            let los = postproc::is_los(&ctx.scn, *pos)?;
            let distance = ctx.scn.tx.position.distance(rx.position);
            let gain_removal =
                ctx.scn.tx.antenna.boresight_gain_dbi + rx.antenna.boresight_gain_dbi;
            let pl_best = characterize::pl_best_corrected(recs, gain_removal)?;
            let mpcs: Vec<Mpc> = pos_rows.iter().map(mpc_from_row).collect();
            let pl_omni = characterize::pl_omni(&mpcs)?;
            let clusters = clusters_from_rows(pos_rows)?;
            let k = characterize::k_factor(&clusters)?;
            let weighted = |f: &dyn Fn(&Mpc) -> f64| -> Vec<(f64, f64)> {
                mpcs.iter().map(|m| (f(m), m.gain.norm_sqr())).collect()
            };
            let ds = characterize::rms_spread(&weighted(&|m| m.delay_s), characterize::SpreadDomain::Delay)?;
            let asa = characterize::rms_spread(
                &weighted(&|m| m.aoa_az_deg),
                characterize::SpreadDomain::Azimuth,
            )?;
            let esa = characterize::rms_spread(
                &weighted(&|m| m.aoa_el_deg),
                characterize::SpreadDomain::Elevation,
            )?;
            let cstats = characterize::cluster_stats(&clusters);
            stats.push(ChannelStats {
                position_id: *pos,
                band: label.clone(),
                distance_m: distance,
                los,
                pl_best_db: pl_best,
                pl_omni_db: pl_omni,
                k_factor_db: k,
                ds_s: ds,
                asa_deg: asa,
                esa_deg: esa,
                n_clusters: cstats.count,
                cds_s: cstats.mean_cds_s,
                casa_deg: cstats.mean_casa_deg,
                cesa_deg: cstats.mean_cesa_deg,
            });
            scattering.extend(scattering_entries(&ctx.scn, &band, *pos, &clusters)?);

            // ensemble samples: LoS positions only, spreads that are
            // identically zero (single-path positions) stay out of the
            // log-domain fits just like undefined K-factors
            if los {
                samples.ci_points_best.push((distance, pl_best));
                samples.ci_points_omni.push((distance, pl_omni));
                if ds > 0.0 {
                    samples.ds_ns.push(ds * 1e9);
                }
                if asa > 0.0 {
                    samples.asa_deg.push(asa);
                }
                if esa > 0.0 {
                    samples.esa_deg.push(esa);
                }
                if let Some(k_db) = k {
                    samples.k_db.push(k_db);
                }
                samples.n_clusters.push(cstats.count as f64);
                samples.cds_ns.push(cstats.mean_cds_s * 1e9);
                samples.casa_deg.push(cstats.mean_casa_deg);
                samples.cesa_deg.push(cstats.mean_cesa_deg);
            }
        }

        let stats_path = ctx.out.join(format!("stats_{label}.csv"));
        write_stats_csv(&stats_path, &stats)?;
        ctx.track(stats_path);

        let scat_path = ctx.out.join(format!("scattering_{label}.csv"));
        write_scattering_csv(&scat_path, &scattering)?;
        ctx.track(scat_path);

        band_summaries.push(characterize::summarize_band(&samples)?);
    }

    let summary = CampaignSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        seed: ctx.scn.rng_seed,
        bands: band_summaries,
    };
    let summary_path = ctx.out.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    ctx.track(summary_path);
    Ok(())
}

fn write_scattering_csv(path: &Path, entries: &[ScatteringEntry]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(
        w,
        "position_id,cluster_id,scatterer_id,material,delay_ns,recovered_loss_db,configured_loss_db"
    )?;
    for e in entries {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            e.position_id,
            e.cluster_id,
            e.scatterer_id,
            e.material,
            e.delay_ns,
            e.recovered_loss_db,
            e.configured_loss_db
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scattering_csv(path: &Path) -> Result<Vec<ScatteringEntry>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::Parse(format!("{}: malformed line {}", path.display(), i + 1)));
        }
        let pf = |s: &str| -> Result<f64> {
            s.parse().map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
        };
        out.push(ScatteringEntry {
            position_id: f[0].parse().map_err(|e| Error::Parse(format!("{e}")))?,
            cluster_id: f[1].parse().map_err(|e| Error::Parse(format!("{e}")))?,
            scatterer_id: f[2].parse().map_err(|e| Error::Parse(format!("{e}")))?,
            material: f[3].to_string(),
            delay_ns: pf(f[4])?,
            recovered_loss_db: pf(f[5])?,
            configured_loss_db: pf(f[6])?,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

/// Plot-data kinds the report stage can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    DriftCurve,
    ScatteringBars,
    PowerDelayProfile,
    DelayAngleMap,
}

/// Emit plain-CSV plot data of one kind for one band into `<out>/plots/`,
/// reading the owning stage's artifacts from `out`. Returns the files
/// written.
pub fn emit_plot_data(out: &Path, kind: PlotKind, band_label: &str) -> Result<Vec<PathBuf>> {
    let plots = out.join("plots");
    std::fs::create_dir_all(&plots)?;
    match kind {
        PlotKind::DriftCurve => {
            let src = out.join(format!("drift_{band_label}.csv"));
            require_file(&src)?;
            let rows = read_drift_csv(&src)?;
            let dst = plots.join(format!("drift_curve_{band_label}.csv"));
            let mut w = std::io::BufWriter::new(std::fs::File::create(&dst)?);
            writeln!(w, "t_s,measured_ns,fitted_ns")?;
            for (t, m, f) in rows {
                writeln!(w, "{t},{m:e},{f:e}")?;
            }
            w.flush()?;
            Ok(vec![dst])
        }
        PlotKind::ScatteringBars => {
            let src = out.join(format!("scattering_{band_label}.csv"));
            require_file(&src)?;
            let mut entries = read_scattering_csv(&src)?;
            // one bar per once-scattering cluster, grouped by material
            entries.sort_by(|a, b| {
                a.material
                    .cmp(&b.material)
                    .then(a.position_id.cmp(&b.position_id))
                    .then(a.cluster_id.cmp(&b.cluster_id))
            });
            let dst = plots.join(format!("scattering_bars_{band_label}.csv"));
            let mut w = std::io::BufWriter::new(std::fs::File::create(&dst)?);
            writeln!(w, "bar,material,position_id,cluster_id,loss_db")?;
            for (i, e) in entries.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    i, e.material, e.position_id, e.cluster_id, e.recovered_loss_db
                )?;
            }
            w.flush()?;
            Ok(vec![dst])
        }
        PlotKind::PowerDelayProfile => {
            let src = out.join(format!("corrected_{band_label}.bin"));
            require_file(&src)?;
            let (_, _, records) = read_cir_binary(&src)?;
            let mut files = Vec::new();
            for (pos, recs) in group_by_position(&records) {
                let best = recs
                    .iter()
                    .max_by(|a, b| a.energy().partial_cmp(&b.energy()).unwrap())
                    .expect("position has records");
                let dst = plots.join(format!("pdp_p{pos}_{band_label}.csv"));
                let mut w = std::io::BufWriter::new(std::fs::File::create(&dst)?);
                writeln!(w, "bin,delay_ns,power_db")?;
                for (k, s) in best.samples.iter().enumerate() {
                    let p_db = 10.0 * s.norm_sqr().max(1e-300).log10();
                    writeln!(w, "{},{},{}", k, k as f64 * best.delay_bin_s * 1e9, p_db)?;
                }
                w.flush()?;
                files.push(dst);
            }
            Ok(files)
        }
        PlotKind::DelayAngleMap => {
            let src = out.join(format!("corrected_{band_label}.bin"));
            require_file(&src)?;
            let (_, _, records) = read_cir_binary(&src)?;
            let mut files = Vec::new();
            for (pos, recs) in group_by_position(&records) {
                let best = recs
                    .iter()
                    .max_by(|a, b| a.energy().partial_cmp(&b.energy()).unwrap())
                    .expect("position has records");
                let el = best.el_deg;
                let sweep: Vec<&CirRecord> =
                    recs.iter().filter(|r| (r.el_deg - el).abs() < 1e-9).collect();
                // delay horizon: last bin within 60 dB of the strongest bin
                let max_p = sweep
                    .iter()
                    .flat_map(|r| r.samples.iter().map(|s| s.norm_sqr()))
                    .fold(0.0f64, f64::max);
                let cut = max_p * 1e-6;
                let mut horizon = 0usize;
                for r in &sweep {
                    for (k, s) in r.samples.iter().enumerate() {
                        if s.norm_sqr() >= cut {
                            horizon = horizon.max(k);
                        }
                    }
                }
                let horizon = (horizon + 16).min(best.samples.len() - 1);
                let dst = plots.join(format!("delay_angle_p{pos}_{band_label}.csv"));
                let mut w = std::io::BufWriter::new(std::fs::File::create(&dst)?);
                writeln!(w, "az_deg,delay_ns,power_db")?;
                for r in &sweep {
                    for k in 0..=horizon {
                        let p_db = 10.0 * r.samples[k].norm_sqr().max(1e-300).log10();
                        writeln!(w, "{},{},{}", r.az_deg, k as f64 * r.delay_bin_s * 1e9, p_db)?;
                    }
                }
                w.flush()?;
                files.push(dst);
            }
            Ok(files)
        }
    }
}

fn group_by_position(records: &[CirRecord]) -> BTreeMap<u32, Vec<CirRecord>> {
    let mut map: BTreeMap<u32, Vec<CirRecord>> = BTreeMap::new();
    for rec in records {
        map.entry(rec.position_id).or_default().push(rec.clone());
    }
    map
}

fn stage_report(ctx: &mut Ctx, reference_path: Option<&Path>) -> Result<()> {
    let summary_path = ctx.out.join("summary.json");
    require_file(&summary_path)?;
    let summary: CampaignSummary = serde_json::from_str(&std::fs::read_to_string(&summary_path)?)?;

    let table = match reference_path {
        Some(p) => ReferenceTable::load(p)?,
        None => ReferenceTable::default(),
    };
    let mut rows: Vec<ComparisonRow> = Vec::new();
    for band in &summary.bands {
        rows.extend(characterize::compare_reference(band, &table)?);
    }

    let cmp_csv = ctx.out.join("comparison.csv");
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&cmp_csv)?);
        writeln!(w, "band,characteristic,measured,reference,delta,flag")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.band, r.characteristic, r.measured, r.reference, r.delta, r.flag
            )?;
        }
        w.flush()?;
    }
    ctx.track(cmp_csv);

    let cmp_txt = ctx.out.join("comparison.txt");
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&cmp_txt)?);
        if rows.is_empty() {
            writeln!(w, "no reference values supplied; nothing to compare")?;
        } else {
            writeln!(
                w,
                "{:<10} {:<18} {:>12} {:>12} {:>10}  assessment",
                "band", "characteristic", "measured", "reference", "delta"
            )?;
            for r in &rows {
                writeln!(
                    w,
                    "{:<10} {:<18} {:>12.3} {:>12.3} {:>10.3}  {}",
                    r.band, r.characteristic, r.measured, r.reference, r.delta, r.flag
                )?;
            }
        }
        w.flush()?;
    }
    ctx.track(cmp_txt);

    for &bi in &ctx.band_indices.clone() {
        let label = ctx.band(bi).label();
        for kind in [
            PlotKind::DriftCurve,
            PlotKind::ScatteringBars,
            PlotKind::PowerDelayProfile,
            PlotKind::DelayAngleMap,
        ] {
            for file in emit_plot_data(&ctx.out, kind, &label)? {
                ctx.track(file);
            }
        }
    }
    Ok(())
}
