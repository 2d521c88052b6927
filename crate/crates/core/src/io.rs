//! Artifact persistence: CIR records as CSV and as a compact binary
//! container, MPC lists and per-position statistics as CSV.
//!
//! Binary container layout (all little-endian):
//!
//! ```text
//! magic  "CIR1"            4 bytes
//! version                  u16
//! band_index               u32
//! carrier_hz               f64
//! bandwidth_hz             f64
//! sample_count             u32
//! record_count             u32
//! per record:
//!   position_id            u32
//!   az_deg, el_deg         f64, f64
//!   timestamp_s            f64
//!   samples                sample_count x (re f64, im f64)
//! ```

use crate::characterize::ChannelStats;
use crate::error::{Error, Result};
use crate::scenario::BandConfig;
use crate::waveform::CirRecord;
use num_complex::Complex64;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"CIR1";
const VERSION: u16 = 1;

pub fn write_cir_binary(
    path: &Path,
    records: &[CirRecord],
    band: &BandConfig,
    band_index: usize,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(band_index as u32).to_le_bytes())?;
    w.write_all(&band.carrier_hz.to_le_bytes())?;
    w.write_all(&band.bandwidth_hz.to_le_bytes())?;
    w.write_all(&(band.sample_count as u32).to_le_bytes())?;
    w.write_all(&(records.len() as u32).to_le_bytes())?;
    for rec in records {
        if rec.samples.len() != band.sample_count {
            return Err(Error::InvalidArgument(format!(
                "record at position {} has {} samples, band expects {}",
                rec.position_id,
                rec.samples.len(),
                band.sample_count
            )));
        }
        w.write_all(&rec.position_id.to_le_bytes())?;
        w.write_all(&rec.az_deg.to_le_bytes())?;
        w.write_all(&rec.el_deg.to_le_bytes())?;
        w.write_all(&rec.timestamp_s.to_le_bytes())?;
        for s in &rec.samples {
            w.write_all(&s.re.to_le_bytes())?;
            w.write_all(&s.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_cir_binary(path: &Path) -> Result<(BandConfig, usize, Vec<CirRecord>)> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8]> {
        if *cursor + n > data.len() {
            return Err(Error::Parse(format!("{}: truncated container", path.display())));
        }
        let slice = &data[*cursor..*cursor + n];
        *cursor += n;
        Ok(slice)
    };
    let f64_at = |cursor: &mut usize| -> Result<f64> {
        Ok(f64::from_le_bytes(take(cursor, 8)?.try_into().unwrap()))
    };
    let u32_at = |cursor: &mut usize| -> Result<u32> {
        Ok(u32::from_le_bytes(take(cursor, 4)?.try_into().unwrap()))
    };

    if take(&mut cursor, 4)? != MAGIC {
        return Err(Error::Parse(format!("{}: bad magic", path.display())));
    }
    let version = u16::from_le_bytes(take(&mut cursor, 2)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Parse(format!(
            "{}: unsupported container version {version}",
            path.display()
        )));
    }
    let band_index = u32_at(&mut cursor)? as usize;
    let band = BandConfig {
        carrier_hz: f64_at(&mut cursor)?,
        bandwidth_hz: f64_at(&mut cursor)?,
        sample_count: u32_at(&mut cursor)? as usize,
    };
    let record_count = u32_at(&mut cursor)? as usize;
    let mut records = Vec::with_capacity(record_count);
    for _ in 0..record_count {
        let position_id = u32_at(&mut cursor)?;
        let az_deg = f64_at(&mut cursor)?;
        let el_deg = f64_at(&mut cursor)?;
        let timestamp_s = f64_at(&mut cursor)?;
        let mut samples = Vec::with_capacity(band.sample_count);
        for _ in 0..band.sample_count {
            let re = f64_at(&mut cursor)?;
            let im = f64_at(&mut cursor)?;
            samples.push(Complex64::new(re, im));
        }
        records.push(CirRecord {
            position_id,
            band_index,
            az_deg,
            el_deg,
            timestamp_s,
            delay_bin_s: band.delay_bin_s(),
            samples,
        });
    }
    if cursor != data.len() {
        return Err(Error::Parse(format!("{}: trailing bytes", path.display())));
    }
    Ok((band, band_index, records))
}

/// Long-format CSV export of CIR records, one row per delay bin.
pub fn write_cir_csv(path: &Path, records: &[CirRecord], band_label: &str) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "position_id,band,az_deg,el_deg,timestamp_s,bin,re,im")?;
    for rec in records {
        for (bin, s) in rec.samples.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{},{:e},{:e}",
                rec.position_id, band_label, rec.az_deg, rec.el_deg, rec.timestamp_s, bin, s.re, s.im
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One exported MPC row; `cluster_id` is scoped to its position.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcRow {
    pub position_id: u32,
    pub band: String,
    pub delay_ns: f64,
    pub power_db: f64,
    pub aoa_az_deg: f64,
    pub aoa_el_deg: f64,
    pub cluster_id: u32,
}

pub fn write_mpc_csv(path: &Path, rows: &[MpcRow]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "position_id,band,delay_ns,power_db,aoa_az_deg,aoa_el_deg,cluster_id")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:e},{:e},{},{},{}",
            r.position_id, r.band, r.delay_ns, r.power_db, r.aoa_az_deg, r.aoa_el_deg, r.cluster_id
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mpc_csv(path: &Path) -> Result<Vec<MpcRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Parse(format!(
                "{}: line {} has {} fields, expected 7",
                path.display(),
                i + 1,
                fields.len()
            )));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|e| Error::Parse(format!("{}: line {}: {e}", path.display(), i + 1)))
        };
        let parse_u = |s: &str| -> Result<u32> {
            s.parse()
                .map_err(|e| Error::Parse(format!("{}: line {}: {e}", path.display(), i + 1)))
        };
        rows.push(MpcRow {
            position_id: parse_u(fields[0])?,
            band: fields[1].to_string(),
            delay_ns: parse_f(fields[2])?,
            power_db: parse_f(fields[3])?,
            aoa_az_deg: parse_f(fields[4])?,
            aoa_el_deg: parse_f(fields[5])?,
            cluster_id: parse_u(fields[6])?,
        });
    }
    Ok(rows)
}

pub fn write_stats_csv(path: &Path, stats: &[ChannelStats]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(
        w,
        "position_id,band,distance_m,los,pl_best_db,pl_omni_db,k_factor_db,ds_ns,asa_deg,esa_deg,n_clusters,cds_ns,casa_deg,cesa_deg"
    )?;
    for s in stats {
        let k = s
            .k_factor_db
            .map(|v| format!("{v}"))
            .unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.position_id,
            s.band,
            s.distance_m,
            s.los,
            s.pl_best_db,
            s.pl_omni_db,
            k,
            s.ds_s * 1e9,
            s.asa_deg,
            s.esa_deg,
            s.n_clusters,
            s.cds_s * 1e9,
            s.casa_deg,
            s.cesa_deg
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn band() -> BandConfig {
        BandConfig {
            carrier_hz: 140e9,
            bandwidth_hz: 1.536e9,
            sample_count: 32,
        }
    }

    fn random_records(n: usize) -> Vec<CirRecord> {
        let b = band();
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        (0..n)
            .map(|i| CirRecord {
                position_id: i as u32 + 1,
                band_index: 0,
                az_deg: (i as f64 * 10.0) % 360.0,
                el_deg: -20.0 + (i as f64 * 10.0) % 40.0,
                timestamp_s: i as f64 * 6.7,
                delay_bin_s: b.delay_bin_s(),
                samples: (0..b.sample_count)
                    .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.bin");
        let records = random_records(5);
        write_cir_binary(&path, &records, &band(), 0).unwrap();
        let (b, idx, back) = read_cir_binary(&path).unwrap();
        assert_eq!(b, band());
        assert_eq!(idx, 0);
        assert_eq!(back, records);
    }

    #[test]
    fn binary_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.bin");
        write_cir_binary(&path, &random_records(2), &band(), 0).unwrap();
        let mut data = std::fs::read(&path).unwrap();
        data[0] = b'X';
        std::fs::write(&path, &data).unwrap();
        assert!(matches!(read_cir_binary(&path), Err(Error::Parse(_))));
    }

    #[test]
    fn cir_csv_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let records = random_records(2);
        write_cir_csv(&path, &records, "140ghz").unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "position_id,band,az_deg,el_deg,timestamp_s,bin,re,im");
        assert_eq!(lines.len(), 1 + 2 * band().sample_count);
        // values survive the round trip through the text form
        let f: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(f[0], "1");
        assert_eq!(f[1], "140ghz");
        let re: f64 = f[6].parse().unwrap();
        assert_eq!(re, records[0].samples[0].re);
    }

    #[test]
    fn mpc_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mpcs.csv");
        let rows = vec![
            MpcRow {
                position_id: 1,
                band: "140ghz".into(),
                delay_ns: 16.946237914871812,
                power_db: -89.3497,
                aoa_az_deg: 140.0,
                aoa_el_deg: 10.0,
                cluster_id: 0,
            },
            MpcRow {
                position_id: 10,
                band: "140ghz".into(),
                delay_ns: 55.5,
                power_db: -120.0,
                aoa_az_deg: 0.0,
                aoa_el_deg: -20.0,
                cluster_id: 3,
            },
        ];
        write_mpc_csv(&path, &rows).unwrap();
        let back = read_mpc_csv(&path).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn stats_csv_formats_undefined_k_as_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.csv");
        let stats = vec![ChannelStats {
            position_id: 1,
            band: "140ghz".into(),
            distance_m: 5.0,
            los: true,
            pl_best_db: 89.3,
            pl_omni_db: 89.3,
            k_factor_db: None,
            ds_s: 0.0,
            asa_deg: 0.0,
            esa_deg: 0.0,
            n_clusters: 1,
            cds_s: 0.0,
            casa_deg: 0.0,
            cesa_deg: 0.0,
        }];
        write_stats_csv(&path, &stats).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let line = text.lines().nth(1).unwrap();
        assert!(line.contains(",true,"));
        assert!(line.contains(",,"), "undefined K should be an empty field");
    }
}
