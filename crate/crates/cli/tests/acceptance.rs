//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Every tolerance is pinned here, in code.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sounderlab::characterize::{
    self, fit_ci, rms_spread, summarize_band, BandSamples, SpreadDomain,
};
use sounderlab::geom::{Vec3, SPEED_OF_LIGHT_M_S};
use sounderlab::postproc::{
    apply_drift_correction, calibrate, estimate_drift_samples, extract_mpcs, refine_peak,
    select_reference_records, DriftModel, ExtractConfig,
};
use sounderlab::scenario::{
    build_direction_grid, load_scenario, los_delay, AntennaPattern, BandConfig, Placement,
    RxPlacement, ScanGrid, Scenario,
};
use sounderlab::synth::{
    direct_connection_record, fspl, place_taps, run_campaign, DriftProcess,
};
use sounderlab::waveform::CirRecord;
use sounderlab_cli::pipeline::{
    read_scattering_csv, run_pipeline, BandSelection, CampaignSummary, PipelineConfig, Stage,
};
use std::path::{Path, PathBuf};
use std::time::Instant;

const DELAY_BIN_S: f64 = 1.0 / 1.536e9;

fn laboratory_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/laboratory.json")
}

fn sounder_band() -> BandConfig {
    BandConfig {
        carrier_hz: 140e9,
        bandwidth_hz: 1.536e9,
        sample_count: 2048,
    }
}

fn horn() -> AntennaPattern {
    AntennaPattern {
        boresight_gain_dbi: 25.0,
        hpbw_deg: 8.0,
        sidelobe_floor_db: -30.0,
    }
}

fn wr_feed() -> AntennaPattern {
    AntennaPattern {
        boresight_gain_dbi: 7.0,
        hpbw_deg: 30.0,
        sidelobe_floor_db: -30.0,
    }
}

fn full_scan() -> ScanGrid {
    ScanGrid {
        az_start_deg: 0.0,
        az_stop_deg: 350.0,
        az_step_deg: 10.0,
        el_start_deg: -20.0,
        el_stop_deg: 20.0,
        el_step_deg: 10.0,
    }
}

fn pass(name: &str) {
    println!("[acceptance] {name}: PASS");
}

fn write_scenario(dir: &Path, scn: &Scenario) -> PathBuf {
    let path = dir.join("scenario.json");
    std::fs::write(&path, serde_json::to_string_pretty(scn).unwrap()).unwrap();
    path
}

// -------------------------------------------------------------------------
// 1. Drift round-trip at 10/20/30 ns per hour
// -------------------------------------------------------------------------

fn drift_scenario(rate_ns_per_hour: f64) -> Scenario {
    Scenario {
        room_extent: Vec3::new(40.0, 40.0, 4.0),
        objects: vec![],
        tx: Placement {
            position: Vec3::new(5.0, 5.0, 2.5),
            antenna: wr_feed(),
        },
        rx_list: vec![
            RxPlacement {
                id: 1,
                position: Vec3::new(11.0, 9.0, 1.6),
                antenna: horn(),
            },
            RxPlacement {
                id: 2,
                position: Vec3::new(24.0, 16.0, 1.6),
                antenna: horn(),
            },
        ],
        bands: vec![sounder_band()],
        scan: full_scan(),
        drift: DriftProcess {
            rate_ns_per_hour,
            offset_at_epoch_ns: 0.0,
        },
        noise_power_db: Some(-160.0),
        averaging_count: 1000,
        rng_seed: 90125,
        system: Some(sounderlab::scenario::SystemResponse {
            ripple_db: 1.0,
            ripple_periods: 3.0,
        }),
    }
}

#[test]
fn c01_drift_round_trip() {
    let started = Instant::now();
    for rate in [10.0, 20.0, 30.0] {
        let scn = drift_scenario(rate);
        let records = run_campaign(&scn, 0).unwrap();
        let direct = direct_connection_record(&scn, 0).unwrap();
        let mut calibrated: Vec<CirRecord> = records
            .iter()
            .map(|r| calibrate(r, &direct.samples).unwrap())
            .collect();
        let refs = select_reference_records(&calibrated, &scn).unwrap();
        let samples = estimate_drift_samples(&refs, &scn).unwrap();
        let model = DriftModel::fit(samples).unwrap();
        apply_drift_correction(&mut calibrated, &model);

        for rx in &scn.rx_list {
            let refs_after = select_reference_records(&calibrated, &scn).unwrap();
            let rec = refs_after
                .iter()
                .find(|r| r.position_id == rx.id)
                .expect("reference record");
            let peak = rec
                .samples
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.norm_sqr().partial_cmp(&b.1.norm_sqr()).unwrap())
                .unwrap()
                .0;
            let (delay_bins, _) = refine_peak(&rec.samples, peak);
            let geometric = los_delay(scn.tx.position, rx.position);
            let err = delay_bins * rec.delay_bin_s - geometric;
            assert!(
                err.abs() <= 0.651e-9,
                "rate {rate} ns/h, position {}: residual {err:e}",
                rx.id
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 60.0,
        "three 2-position campaigns took {elapsed:?}"
    );
    pass("C1 drift round-trip at 10/20/30 ns-per-hour, <1 min runtime");
}

// -------------------------------------------------------------------------
// 2. Interpolation endpoint property
// -------------------------------------------------------------------------

#[test]
fn c02_interpolation_endpoint_property() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let a = (rng.gen::<f64>() - 0.2) * 30e-9 / 3600.0;
        let b = (rng.gen::<f64>() - 0.5) * 5e-9;
        let mut ts: Vec<f64> = (0..9).map(|_| rng.gen::<f64>() * 12_000.0).collect();
        ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        ts.dedup_by(|x, y| (*x - *y) < 1.0);
        if ts.len() < 2 {
            continue;
        }
        let samples: Vec<(f64, f64)> = ts.iter().map(|&t| (t, a * t + b)).collect();
        let model = DriftModel::fit(samples.clone()).unwrap();
        // at every sample instant the corrected value is the sample itself
        for &(t, y) in &samples {
            assert_eq!(sounderlab::postproc::correct_drift(t, &model), y);
        }
        // interpolated and extrapolated values agree with the line
        let first = ts[0];
        let last = ts[ts.len() - 1];
        for t in [
            first - 2000.0,
            0.5 * (first + last),
            0.25 * first + 0.75 * last,
            last + 5000.0,
        ] {
            let expect = a * t + b;
            let got = sounderlab::postproc::correct_drift(t, &model);
            assert!(
                (got - expect).abs() <= 1e-12 * expect.abs().max(1e-15),
                "t={t}: got {got:e}, expect {expect:e}"
            );
        }
    }
    pass("C2 linear interpolation/extrapolation endpoint property at 1e-12");
}

// -------------------------------------------------------------------------
// 3. Delay resolution claim
// -------------------------------------------------------------------------

fn two_path_record(separation_m: f64) -> CirRecord {
    let band = sounder_band();
    let base_bins = 200.0;
    let sep_bins = separation_m / (SPEED_OF_LIGHT_M_S * band.delay_bin_s());
    let amp = Complex64::new(1e-4, 0.0);
    CirRecord {
        position_id: 1,
        band_index: 0,
        az_deg: 0.0,
        el_deg: 0.0,
        timestamp_s: 0.0,
        delay_bin_s: band.delay_bin_s(),
        samples: place_taps(
            band.sample_count,
            &[(base_bins, amp), (base_bins + sep_bins, amp)],
        ),
    }
}

#[test]
fn c03_resolution_claim() {
    let iso = AntennaPattern {
        boresight_gain_dbi: 0.0,
        hpbw_deg: 360.0,
        sidelobe_floor_db: -0.0,
    };
    let cfg = ExtractConfig {
        noise_floor_db: Some(-160.0),
        ..ExtractConfig::default()
    };
    // one delay bin of path length on top of the 19.5 cm resolution limit
    let resolvable = 0.195 + SPEED_OF_LIGHT_M_S * DELAY_BIN_S;
    let two = extract_mpcs(&[two_path_record(resolvable)], &iso, &iso, &cfg).unwrap();
    assert_eq!(two.len(), 2, "paths {resolvable:.3} m apart must resolve");

    let one = extract_mpcs(&[two_path_record(0.10)], &iso, &iso, &cfg).unwrap();
    assert_eq!(one.len(), 1, "paths 10 cm apart must merge");
    pass("C3 19.5 cm + one bin resolves into two MPCs, 10 cm does not");
}

// -------------------------------------------------------------------------
// 4. Band constants reported by the pipeline
// -------------------------------------------------------------------------

#[test]
fn c04_band_constants() {
    let dir = tempfile::tempdir().unwrap();
    let scn = drift_scenario(10.0);
    let scn_path = write_scenario(dir.path(), &scn);
    let out = dir.path().join("out");
    run_pipeline(&PipelineConfig {
        scenario_path: scn_path,
        out_dir: out.clone(),
        bands: BandSelection::All,
        start: Stage::Synth,
        target: Stage::Characterize,
        seed_override: None,
        reference_path: None,
        cir_csv: false,
    })
    .unwrap();
    let summary: CampaignSummary =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let band = &summary.bands[0];
    let within = |measured: f64, nominal: f64| (measured - nominal).abs() <= 1e-3 * nominal;
    assert!(within(band.delay_bin_ns, 0.651), "delay bin {}", band.delay_bin_ns);
    assert!(within(band.max_delay_ns, 1332.7), "max delay {}", band.max_delay_ns);
    assert!(within(band.max_path_m, 399.8), "max path {}", band.max_path_m);
    pass("C4 pipeline reports 0.651 ns bin, ~1332.7 ns, ~399.8 m within 0.1%");
}

// -------------------------------------------------------------------------
// 5. Scattering-loss recovery on the bundled scenario
// -------------------------------------------------------------------------

#[test]
fn c05_scattering_loss_recovery() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    run_pipeline(&PipelineConfig {
        scenario_path: laboratory_path(),
        out_dir: out.clone(),
        bands: BandSelection::All,
        start: Stage::Synth,
        target: Stage::Characterize,
        seed_override: None,
        reference_path: None,
        cir_csv: false,
    })
    .unwrap();
    for label in ["140ghz", "220ghz"] {
        let entries = read_scattering_csv(&out.join(format!("scattering_{label}.csv"))).unwrap();
        assert!(
            entries.len() >= 3,
            "{label}: expected at least 3 once-scattering clusters, got {}",
            entries.len()
        );
        for e in &entries {
            let err = e.recovered_loss_db - e.configured_loss_db;
            assert!(
                err.abs() <= 0.5,
                "{label} position {} panel {}: recovered {:.3} vs configured {:.3}",
                e.position_id,
                e.scatterer_id,
                e.recovered_loss_db,
                e.configured_loss_db
            );
        }
    }
    pass("C5 every detected once-scattering cluster recovers its loss within 0.5 dB");
}

// -------------------------------------------------------------------------
// 6. Close-in fit recovery against a closed-form oracle
// -------------------------------------------------------------------------

#[test]
fn c06_ci_fit_recovery() {
    let f = 140e9;
    let fspl0 = fspl(1.0, f).unwrap();
    for (idx, n_true) in [1.8, 2.0, 2.2].iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + idx as u64);
        let sigma_true = 1.0;
        let points: Vec<(f64, f64)> = (0..100)
            .map(|_| {
                let d = 1.0 + rng.gen::<f64>() * 99.0;
                let u1: f64 = rng.gen::<f64>().max(1e-12);
                let u2: f64 = rng.gen();
                let chi = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                (d, fspl0 + 10.0 * n_true * d.log10() + sigma_true * chi)
            })
            .collect();

        // closed-form least-squares oracle, independent of the library path
        let xs: Vec<f64> = points.iter().map(|&(d, _)| 10.0 * d.log10()).collect();
        let ys: Vec<f64> = points.iter().map(|&(_, pl)| pl - fspl0).collect();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let n_oracle = sxy / sxx;
        let residuals: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - n_oracle * x).collect();
        let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
        let sigma_oracle = (residuals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
            / residuals.len() as f64)
            .sqrt();

        let fit = fit_ci(&points, f, 1.0).unwrap();
        assert!((fit.ple - n_oracle).abs() <= 1e-9, "implementation vs oracle slope");
        assert!(
            (fit.sigma_sf_db - sigma_oracle).abs() <= 1e-9,
            "implementation vs oracle sigma"
        );
        assert!(
            (fit.ple - n_true).abs() <= 0.05,
            "n={n_true}: fitted {}",
            fit.ple
        );
        assert!(
            (fit.sigma_sf_db - sigma_true).abs() <= 0.3,
            "n={n_true}: sigma {}",
            fit.sigma_sf_db
        );
    }
    pass("C6 CI fit recovers PLE within 0.05 and sigma within 0.3 dB at 100 points");
}

// -------------------------------------------------------------------------
// 7. Free-space sanity
// -------------------------------------------------------------------------

#[test]
fn c07_free_space_sanity() {
    let tx = Vec3::new(20.0, 20.0, 2.0);
    let distances = [3.0, 4.0, 5.0, 6.0, 8.0, 9.0, 10.0, 12.0, 14.0];
    let rx_list: Vec<RxPlacement> = distances
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let az = (i as f64 * 10.0).to_radians();
            RxPlacement {
                id: i as u32 + 1,
                position: Vec3::new(tx.x + d * az.cos(), tx.y + d * az.sin(), 2.0),
                antenna: horn(),
            }
        })
        .collect();
    let scn = Scenario {
        room_extent: Vec3::new(40.0, 40.0, 4.0),
        objects: vec![],
        tx: Placement {
            position: tx,
            antenna: wr_feed(),
        },
        rx_list,
        bands: vec![sounder_band()],
        scan: full_scan(),
        drift: DriftProcess {
            rate_ns_per_hour: 10.0,
            offset_at_epoch_ns: 0.0,
        },
        noise_power_db: Some(-160.0),
        averaging_count: 1000,
        rng_seed: 7007,
        system: Some(sounderlab::scenario::SystemResponse {
            ripple_db: 1.0,
            ripple_periods: 3.0,
        }),
    };
    let dir = tempfile::tempdir().unwrap();
    let scn_path = write_scenario(dir.path(), &scn);
    let out = dir.path().join("out");
    run_pipeline(&PipelineConfig {
        scenario_path: scn_path,
        out_dir: out.clone(),
        bands: BandSelection::All,
        start: Stage::Synth,
        target: Stage::Characterize,
        seed_override: None,
        reference_path: None,
        cir_csv: false,
    })
    .unwrap();

    let stats = std::fs::read_to_string(out.join("stats_140ghz.csv")).unwrap();
    for line in stats.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let d: f64 = fields[2].parse().unwrap();
        let pl_best: f64 = fields[4].parse().unwrap();
        let pl_omni: f64 = fields[5].parse().unwrap();
        let expect = fspl(d, 140e9).unwrap();
        assert!(
            (pl_best - expect).abs() <= 0.5,
            "d={d}: pl_best {pl_best} vs FSPL {expect}"
        );
        assert!(
            (pl_omni - expect).abs() <= 0.5,
            "d={d}: pl_omni {pl_omni} vs FSPL {expect}"
        );
    }

    let summary: CampaignSummary =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let band = &summary.bands[0];
    let ple_best = band.ci_best.as_ref().unwrap().ple;
    let ple_omni = band.ci_omni.as_ref().unwrap().ple;
    assert!((ple_best - 2.0).abs() <= 0.02, "best PLE {ple_best}");
    assert!((ple_omni - 2.0).abs() <= 0.02, "omni PLE {ple_omni}");
    pass("C7 free-space path loss equals FSPL within 0.5 dB and PLE = 2.00 +/- 0.02");
}

// -------------------------------------------------------------------------
// 8. Spread oracles
// -------------------------------------------------------------------------

fn oracle_delay_spread(values: &[(f64, f64)]) -> f64 {
    let total: f64 = values.iter().map(|&(_, p)| p).sum();
    let mean: f64 = values.iter().map(|&(v, p)| v * p).sum::<f64>() / total;
    (values
        .iter()
        .map(|&(v, p)| p * (v - mean) * (v - mean))
        .sum::<f64>()
        / total)
        .sqrt()
}

fn oracle_circular_spread_deg(values: &[(f64, f64)]) -> f64 {
    let total: f64 = values.iter().map(|&(_, p)| p).sum();
    let re: f64 = values.iter().map(|&(v, p)| p * v.to_radians().cos()).sum();
    let im: f64 = values.iter().map(|&(v, p)| p * v.to_radians().sin()).sum();
    let r = ((re * re + im * im).sqrt() / total).min(1.0);
    if 1.0 - r < 1e-14 {
        return 0.0;
    }
    (-2.0 * r.ln()).max(0.0).sqrt().to_degrees()
}

#[test]
fn c08_spread_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    for case in 0..1000 {
        let n = rng.gen_range(2..16);
        let delays: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.gen::<f64>() * 200e-9, rng.gen::<f64>() + 1e-3))
            .collect();
        let angles: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.gen::<f64>() * 360.0, rng.gen::<f64>() + 1e-3))
            .collect();

        let ds = rms_spread(&delays, SpreadDomain::Delay).unwrap();
        let ds_oracle = oracle_delay_spread(&delays);
        assert!(
            (ds - ds_oracle).abs() <= 1e-9 * ds_oracle.max(1e-15),
            "case {case}: delay spread"
        );

        let asa = rms_spread(&angles, SpreadDomain::Azimuth).unwrap();
        let asa_oracle = oracle_circular_spread_deg(&angles);
        assert!(
            (asa - asa_oracle).abs() <= 1e-9 * asa_oracle.max(1e-9),
            "case {case}: circular spread"
        );

        // shift invariance in delay, rotation invariance in azimuth
        let shifted: Vec<(f64, f64)> = delays.iter().map(|&(v, p)| (v + 77e-9, p)).collect();
        let ds_shift = rms_spread(&shifted, SpreadDomain::Delay).unwrap();
        assert!((ds - ds_shift).abs() <= 1e-9 * ds.max(1e-15), "case {case}: shift");

        let rot = rng.gen::<f64>() * 360.0;
        let rotated: Vec<(f64, f64)> = angles
            .iter()
            .map(|&(v, p)| ((v + rot) % 360.0, p))
            .collect();
        let asa_rot = rms_spread(&rotated, SpreadDomain::Azimuth).unwrap();
        assert!(
            (asa - asa_rot).abs() <= 1e-9 * asa.max(1e-6),
            "case {case}: rotation"
        );
    }
    pass("C8 spread implementations match brute-force oracles on 1000 random inputs");
}

// -------------------------------------------------------------------------
// 9. Fixture round-trip of campaign means
// -------------------------------------------------------------------------

#[test]
fn c09_fixture_round_trip_of_campaign_means() {
    let fixture = |band: &str, carrier: f64, ds, asa, esa, k, nc, cds, casa, cesa| BandSamples {
        band: band.to_string(),
        carrier_hz: carrier,
        delay_bin_ns: 0.6510416666666666,
        max_delay_ns: 1333.3333333333333,
        max_path_m: 399.7232773333333,
        ds_ns: vec![ds],
        asa_deg: vec![asa],
        esa_deg: vec![esa],
        k_db: vec![k],
        n_clusters: vec![nc],
        cds_ns: vec![cds],
        casa_deg: vec![casa],
        cesa_deg: vec![cesa],
        ..BandSamples::default()
    };
    let low = fixture("140ghz", 140e9, 7.94, 28.18, 5.50, 10.3, 5.67, 1.43, 4.42, 5.38);
    let high = fixture("220ghz", 220e9, 7.24, 26.92, 3.98, 11.3, 3.44, 1.22, 3.95, 4.84);
    let summary = CampaignSummary {
        schema_version: 1,
        seed: 0,
        bands: vec![summarize_band(&low).unwrap(), summarize_band(&high).unwrap()],
    };
    let text = serde_json::to_string_pretty(&summary).unwrap();
    let parsed: CampaignSummary = serde_json::from_str(&text).unwrap();

    let b0 = &parsed.bands[0];
    assert_eq!(b0.ds_ns.as_ref().unwrap().mean, 7.94);
    assert_eq!(b0.asa_deg.as_ref().unwrap().mean, 28.18);
    assert_eq!(b0.esa_deg.as_ref().unwrap().mean, 5.50);
    assert_eq!(b0.k_db.as_ref().unwrap().mean, 10.3);
    assert_eq!(b0.n_clusters_mean, Some(5.67));
    assert_eq!(b0.cds_ns_mean, Some(1.43));
    assert_eq!(b0.casa_deg_mean, Some(4.42));
    assert_eq!(b0.cesa_deg_mean, Some(5.38));

    let b1 = &parsed.bands[1];
    assert_eq!(b1.ds_ns.as_ref().unwrap().mean, 7.24);
    assert_eq!(b1.asa_deg.as_ref().unwrap().mean, 26.92);
    assert_eq!(b1.esa_deg.as_ref().unwrap().mean, 3.98);
    assert_eq!(b1.k_db.as_ref().unwrap().mean, 11.3);
    assert_eq!(b1.n_clusters_mean, Some(3.44));
    assert_eq!(b1.cds_ns_mean, Some(1.22));
    assert_eq!(b1.casa_deg_mean, Some(3.95));
    assert_eq!(b1.cesa_deg_mean, Some(4.84));

    for literal in [
        "7.94", "28.18", "10.3", "5.67", "1.43", "4.42", "5.38", "7.24", "26.92", "3.98",
        "11.3", "3.44", "1.22", "3.95", "4.84",
    ] {
        assert!(text.contains(literal), "summary text must carry {literal} verbatim");
    }
    pass("C9 campaign means survive the fit/report path verbatim");
}

// -------------------------------------------------------------------------
// 10. End-to-end determinism
// -------------------------------------------------------------------------

#[test]
fn c10_determinism() {
    let reference =
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/reference_example.json");
    let run = |out: PathBuf| {
        run_pipeline(&PipelineConfig {
            scenario_path: laboratory_path(),
            out_dir: out,
            bands: BandSelection::All,
            start: Stage::Synth,
            target: Stage::Report,
            seed_override: Some(4242),
            reference_path: Some(reference.clone()),
            cir_csv: false,
        })
        .unwrap()
    };
    let dir = tempfile::tempdir().unwrap();
    let first = run(dir.path().join("a"));
    let second = run(dir.path().join("b"));

    // differently parallelized third run
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let third = pool.install(|| run(dir.path().join("c")));

    let digests = |m: &sounderlab_cli::pipeline::Manifest| -> Vec<(String, String)> {
        m.artifacts
            .iter()
            .map(|a| (a.path.clone(), a.sha256.clone()))
            .collect()
    };
    assert_eq!(digests(&first), digests(&second), "identical reruns must match");
    assert_eq!(digests(&first), digests(&third), "thread count must not matter");
    assert!(first
        .artifacts
        .iter()
        .any(|a| a.path.starts_with("cir_") || a.path.starts_with("stats_")));

    // spot-check byte identity of the main artifact classes
    for name in [
        "cir_140ghz.bin",
        "cir_220ghz.bin",
        "mpcs_140ghz.csv",
        "mpcs_220ghz.csv",
        "stats_140ghz.csv",
        "stats_220ghz.csv",
        "summary.json",
    ] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        let c = std::fs::read(dir.path().join("c").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
        assert_eq!(a, c, "{name}");
    }
    pass("C10 byte-identical artifacts across reruns and thread counts");
}

// -------------------------------------------------------------------------
// supporting checks referenced by the criteria
// -------------------------------------------------------------------------

/// The laboratory ensemble behaves like the measured campaigns: the
/// best-direction exponent exceeds the omnidirectional one, and path loss
/// obeys pl_best >= pl_omni at every position.
#[test]
fn lab_path_loss_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    run_pipeline(&PipelineConfig {
        scenario_path: laboratory_path(),
        out_dir: out.clone(),
        bands: BandSelection::CarrierGhz(140.0),
        start: Stage::Synth,
        target: Stage::Characterize,
        seed_override: None,
        reference_path: None,
        cir_csv: false,
    })
    .unwrap();
    let stats = std::fs::read_to_string(out.join("stats_140ghz.csv")).unwrap();
    for line in stats.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let pl_best: f64 = fields[4].parse().unwrap();
        let pl_omni: f64 = fields[5].parse().unwrap();
        assert!(
            pl_best >= pl_omni - 1e-6,
            "pl_best {pl_best} < pl_omni {pl_omni}"
        );
    }
    let summary: CampaignSummary =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let band = &summary.bands[0];
    let ple_best = band.ci_best.as_ref().unwrap().ple;
    let ple_omni = band.ci_omni.as_ref().unwrap().ple;
    assert!(
        ple_best >= ple_omni,
        "best-direction PLE {ple_best} vs omni {ple_omni}"
    );
    assert!(ple_best > 2.0, "misalignment should push the best PLE above 2");
}

/// Scattering-loss round-trip invariant at the operation level: a cluster
/// constructed from a known loss recovers it exactly.
#[test]
fn scattering_loss_construction_invariant() {
    let f = 140e9;
    for loss_db in [2.0, 5.0, 14.0, 25.0] {
        for delay_ns in [20.0, 60.0, 130.0] {
            let tau = delay_ns * 1e-9;
            let alpha = 10f64
                .powf(-(fspl(SPEED_OF_LIGHT_M_S * tau, f).unwrap() + loss_db) / 20.0);
            let mpc = sounderlab::postproc::Mpc {
                delay_s: tau,
                gain: Complex64::from_polar(alpha, 1.1),
                power_db: 20.0 * alpha.log10(),
                aoa_az_deg: 120.0,
                aoa_el_deg: 0.0,
            };
            let cluster = sounderlab::postproc::Cluster::from_members(vec![mpc]).unwrap();
            let recovered = characterize::scattering_loss(&cluster, f).unwrap();
            assert!((recovered - loss_db).abs() < 1e-9);
        }
    }
}

/// The bundled scenario keeps its headline geometry facts.
#[test]
fn lab_geometry_facts() {
    let scn = load_scenario(&laboratory_path()).unwrap();
    assert_eq!(scn.rx_list.len(), 10);
    assert_eq!(build_direction_grid(&scn.scan).unwrap().len(), 180);
    let metal: Vec<f64> = scn
        .objects
        .iter()
        .filter(|p| p.material == sounderlab::scenario::Material::Metal)
        .map(|p| p.scattering_loss_db)
        .collect();
    let concrete: Vec<f64> = scn
        .objects
        .iter()
        .filter(|p| p.material == sounderlab::scenario::Material::Concrete)
        .map(|p| p.scattering_loss_db)
        .collect();
    assert!(!metal.is_empty() && !concrete.is_empty());
    assert!(metal.iter().all(|&l| (2.0..=25.0).contains(&l)));
    assert!(concrete.iter().all(|&l| (10.0..=25.0).contains(&l)));
}
