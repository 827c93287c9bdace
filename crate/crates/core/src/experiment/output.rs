//! CSV tables, run manifests, and the experiment driver.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::ExperimentSpec;
use crate::error::{Error, Result};
use crate::sim::ber::{run_ber_sweep, BerReport, PointFlag};
use crate::sim::timing::{run_timing, ScalingFit, TimingReport, TimingRow};

pub const BER_CSV_HEADER: [&str; 8] = ["detector", "snr_db", "bits", "errors", "ber", "ci_lo", "ci_hi", "flags"];
pub const TIMING_CSV_HEADER: [&str; 6] = ["detector", "n", "k", "mean_us", "median_us", "reps"];

/// BER curve table. Floats use the shortest representation that reads back
/// exactly, so equal reports give equal bytes.
pub fn ber_csv_bytes(report: &BerReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(BER_CSV_HEADER)?;
    for p in &report.points {
        let flags: Vec<&str> = p.flags.iter().map(|f| f.as_str()).collect();
        w.write_record([
            p.detector.clone(),
            p.snr_db.to_string(),
            p.bits.to_string(),
            p.errors.to_string(),
            p.ber.to_string(),
            p.ci_lo.to_string(),
            p.ci_hi.to_string(),
            flags.join(";"),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn timing_csv_bytes(report: &TimingReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TIMING_CSV_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.detector.clone(),
            r.n.to_string(),
            r.k.to_string(),
            format!("{:.3}", r.mean_us),
            format!("{:.3}", r.median_us),
            r.reps.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// One row of a BER table as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct BerCsvRow {
    pub detector: String,
    pub snr_db: f64,
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub flags: Vec<PointFlag>,
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, row: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::invalid(format!("row {row}: bad {} value {:?}", BER_CSV_HEADER[i], rec.get(i).unwrap_or(""))))
}

/// Reads and checks a BER table: exact header, `ber = errors/bits`, and an
/// interval that brackets the estimate.
pub fn read_ber_csv<R: Read>(reader: R) -> Result<Vec<BerCsvRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().ne(BER_CSV_HEADER.iter().copied()) {
        return Err(Error::invalid(format!(
            "unexpected header {:?}, want {}",
            header.iter().collect::<Vec<_>>(),
            BER_CSV_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let flags = rec
            .get(7)
            .unwrap_or("")
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| PointFlag::parse(s).ok_or_else(|| Error::invalid(format!("row {row}: unknown flag {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let parsed = BerCsvRow {
            detector: rec.get(0).unwrap_or("").to_string(),
            snr_db: field(&rec, 1, row)?,
            bits: field(&rec, 2, row)?,
            errors: field(&rec, 3, row)?,
            ber: field(&rec, 4, row)?,
            ci_lo: field(&rec, 5, row)?,
            ci_hi: field(&rec, 6, row)?,
            flags,
        };
        if parsed.snr_db.is_nan() {
            return Err(Error::invalid(format!("row {row}: snr_db is NaN")));
        }
        if parsed.errors > parsed.bits {
            return Err(Error::invalid(format!("row {row}: more errors than bits")));
        }
        let expect = if parsed.bits == 0 {
            0.0
        } else {
            parsed.errors as f64 / parsed.bits as f64
        };
        if parsed.ber != expect {
            return Err(Error::invalid(format!("row {row}: ber {} is not errors/bits", parsed.ber)));
        }
        if !(parsed.ci_lo <= parsed.ber && parsed.ber <= parsed.ci_hi) {
            return Err(Error::invalid(format!("row {row}: interval does not bracket ber")));
        }
        out.push(parsed);
    }
    Ok(out)
}

/// Writes through a temporary file in the same directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorNote {
    pub label: String,
    pub description: String,
}

/// Everything needed to rerun an experiment and reproduce its CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub kind: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_s: f64,
    pub csv: String,
    pub detectors: Vec<DetectorNote>,
    #[serde(default)]
    pub skipped: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub machine: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub timing: Vec<TimingRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fits: Vec<ScalingFit>,
    pub spec: ExperimentSpec,
}

#[derive(Debug)]
pub struct RunOutputs {
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
    pub manifest: RunManifest,
    pub ber: Option<BerReport>,
    pub timing: Option<TimingReport>,
}

/// Runs the experiment and writes `<stem>.csv` and `<stem>.manifest.json`
/// into `out_dir`. Nothing is written unless the run succeeds.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunOutputs> {
    spec.validate()?;
    let start = Instant::now();
    let (csv, ber, timing, c) = if spec.ber.is_some() {
        let cfg = spec.sweep_config()?;
        let c = cfg.validate()?;
        let report = run_ber_sweep(&cfg)?;
        (ber_csv_bytes(&report)?, Some(report), None, c)
    } else {
        let cfg = spec.timing_config()?;
        let c = cfg.validate()?;
        let report = run_timing(&cfg)?;
        (timing_csv_bytes(&report)?, None, Some(report), c)
    };
    let wall_time_s = start.elapsed().as_secs_f64();

    let roster = match (&spec.ber, &spec.timing) {
        (Some(b), _) => &b.detectors,
        (_, Some(t)) => &t.detectors,
        _ => unreachable!("validated spec has a section"),
    };
    let stem = spec.stem();
    let csv_name = format!("{stem}.csv");
    let manifest = RunManifest {
        tool: "addmimo".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        kind: if ber.is_some() { "ber" } else { "timing" }.into(),
        seed: spec.seed,
        threads: if timing.is_some() { 1 } else { spec.threads },
        wall_time_s,
        csv: csv_name.clone(),
        detectors: roster
            .iter()
            .map(|d| DetectorNote {
                label: d.label(),
                description: d.describe(&c),
            })
            .collect(),
        skipped: ber.as_ref().map(|r| r.skipped.clone()).unwrap_or_default(),
        machine: timing.as_ref().map(|t| t.machine.clone()),
        timing: timing.as_ref().map(|t| t.rows.clone()).unwrap_or_default(),
        fits: timing.as_ref().map(|t| t.fits.clone()).unwrap_or_default(),
        spec: spec.clone(),
    };

    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(&csv_name);
    let manifest_path = out_dir.join(format!("{stem}.manifest.json"));
    write_atomic(&csv_path, &csv)?;
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    if let Err(e) = write_atomic(&manifest_path, &json) {
        let _ = std::fs::remove_file(&csv_path);
        return Err(e);
    }
    Ok(RunOutputs {
        csv_path,
        manifest_path,
        manifest,
        ber,
        timing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ber::{wilson_interval, BerPoint};
    use proptest::prelude::*;

    fn point(detector: &str, snr_db: f64, bits: u64, errors: u64, flags: Vec<PointFlag>) -> BerPoint {
        let (ci_lo, ci_hi) = wilson_interval(errors, bits);
        BerPoint {
            detector: detector.into(),
            snr_db,
            sigma0: 0.1,
            frames: bits / 16,
            bits,
            errors,
            ber: if bits == 0 { 0.0 } else { errors as f64 / bits as f64 },
            ci_lo,
            ci_hi,
            flags,
        }
    }

    #[test]
    fn ber_table_layout() {
        let report = BerReport {
            points: vec![
                point("MMSE", 4.0, 1000, 37, vec![]),
                point("ADD,20", 12.5, 1600, 0, vec![PointFlag::Undersampled, PointFlag::FrameCap]),
            ],
            skipped: vec![],
        };
        let text = String::from_utf8(ber_csv_bytes(&report).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "detector,snr_db,bits,errors,ber,ci_lo,ci_hi,flags");
        assert!(lines[1].starts_with("MMSE,4,1000,37,0.037,"));
        assert!(lines[1].ends_with(','));
        assert!(lines[2].starts_with("\"ADD,20\",12.5,1600,0,0,0,"));
        assert!(lines[2].ends_with(",undersampled;frame_cap"));
        let rows = read_ber_csv(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].detector, "ADD,20");
        assert_eq!(rows[1].flags, vec![PointFlag::Undersampled, PointFlag::FrameCap]);
    }

    #[test]
    fn reader_rejects_inconsistent_rows() {
        let head = "detector,snr_db,bits,errors,ber,ci_lo,ci_hi,flags\n";
        assert!(read_ber_csv(format!("{head}A,1,100,5,0.06,0,1,\n").as_bytes()).is_err());
        assert!(read_ber_csv(format!("{head}A,1,100,500,5,0,9,\n").as_bytes()).is_err());
        assert!(read_ber_csv(format!("{head}A,1,100,5,0.05,0.06,1,\n").as_bytes()).is_err());
        assert!(read_ber_csv(format!("{head}A,1,100,5,0.05,0,1,bogus\n").as_bytes()).is_err());
        assert!(read_ber_csv(format!("{head}A,x,100,5,0.05,0,1,\n").as_bytes()).is_err());
        assert!(read_ber_csv("a,b\n".as_bytes()).is_err());
        assert!(read_ber_csv(format!("{head}A,1,100,5,0.05,0,1,\n").as_bytes()).is_ok());
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temporaries() {
        let dir = std::env::temp_dir().join(format!("addmimo-atomic-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        let names: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
        assert!(write_atomic(&dir.join("missing/b.csv"), b"x").is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    proptest! {
        #[test]
        fn ber_tables_round_trip(
            rows in proptest::collection::vec(
                ("[ -~]{0,12}", -20.0f64..60.0, 0u64..1_000_000, 0u64..1000, any::<bool>(), any::<bool>()),
                0..12,
            )
        ) {
            let points: Vec<BerPoint> = rows
                .into_iter()
                .map(|(d, s, bits, e, u, c)| {
                    let mut flags = Vec::new();
                    if u { flags.push(PointFlag::Undersampled); }
                    if c { flags.push(PointFlag::FrameCap); }
                    point(&d, s, bits, e.min(bits), flags)
                })
                .collect();
            let report = BerReport { points: points.clone(), skipped: vec![] };
            let back = read_ber_csv(&ber_csv_bytes(&report).unwrap()[..]).unwrap();
            prop_assert_eq!(back.len(), points.len());
            for (r, p) in back.iter().zip(&points) {
                prop_assert_eq!(&r.detector, &p.detector);
                prop_assert_eq!(r.snr_db, p.snr_db);
                prop_assert_eq!(r.bits, p.bits);
                prop_assert_eq!(r.errors, p.errors);
                prop_assert_eq!(r.ber, p.ber);
                prop_assert_eq!(r.ci_lo, p.ci_lo);
                prop_assert_eq!(r.ci_hi, p.ci_hi);
                prop_assert_eq!(&r.flags, &p.flags);
            }
        }
    }
}
