//! File formats: provenance-stamped CSV writers, the compact binary
//! trajectory record, and parsers for trace/calibration/path inputs.
//!
//! Text outputs start with `#`-prefixed header lines; one of them carries
//! the complete resolved run configuration as a single JSON line
//! (`# config: {...}`) so that any output file can reproduce its run.
//!
//! # Binary trajectory record
//!
//! Little-endian throughout:
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 8    | magic `NROTRAJ1`                          |
//! | 8      | 4    | u32 header length `H`                     |
//! | 12     | H    | UTF-8 JSON header (config echo, metadata) |
//! | 12+H   | 24·n | samples: three f64 per sample (t, α, α̇)   |
//!
//! The sample count is part of the JSON header and must match the payload
//! size exactly.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::dynamics::{drive_waveform, Sample, Trajectory};
use crate::error::{Error, Result};
use crate::limit_cycle::{ParameterPath, PathPoint, RegionMap};
use crate::params::MBAR;
use crate::signal::{PhaseNoiseCurve, SignalTrace, Spectrum};

const TRAJECTORY_MAGIC: &[u8; 8] = b"NROTRAJ1";

/// Standard provenance block: tool version, config echo, seed.
pub fn provenance_header(config_json: &str, seed: u64) -> String {
    format!(
        "# nanorotor {}\n# config: {}\n# seed: {}\n",
        env!("CARGO_PKG_VERSION"),
        config_json,
        seed
    )
}

/// Extract the `# config: ...` JSON line from a text output header.
pub fn extract_config_line(text: &str) -> Option<&str> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix("# config: "))
}

/// Write a trajectory as CSV: `t, alpha, omega, h` with the drive waveform
/// re-evaluated per sample.
pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &Trajectory, header: &str) -> Result<()> {
    w.write_all(header.as_bytes())?;
    writeln!(w, "t_s,alpha_rad,omega_rad_s,h")?;
    let t0 = traj.samples[0].time;
    for s in &traj.samples {
        let h = drive_waveform(s.time - t0, &traj.drive);
        writeln!(w, "{:e},{:e},{:e},{}", s.time, s.alpha, s.omega, h as u8)?;
    }
    Ok(())
}

/// Metadata stored in the binary record header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordHeader {
    pub config: serde_json::Value,
    pub samples: u64,
    pub sample_rate_hz: f64,
    pub drive_frequency_hz: f64,
    pub periods: u64,
}

/// Encode a trajectory into the binary record format.
pub fn encode_trajectory_record(traj: &Trajectory, config_json: &str) -> Result<Vec<u8>> {
    let header = RecordHeader {
        config: serde_json::from_str(config_json)
            .map_err(|e| Error::parse("config echo", e.to_string()))?,
        samples: traj.samples.len() as u64,
        sample_rate_hz: traj.sample_rate(),
        drive_frequency_hz: traj.drive.frequency_hz,
        periods: traj.periods,
    };
    let header_bytes = serde_json::to_vec(&header).expect("header serialization");
    let mut out =
        Vec::with_capacity(12 + header_bytes.len() + 24 * traj.samples.len());
    out.extend_from_slice(TRAJECTORY_MAGIC);
    out.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for s in &traj.samples {
        out.extend_from_slice(&s.time.to_le_bytes());
        out.extend_from_slice(&s.alpha.to_le_bytes());
        out.extend_from_slice(&s.omega.to_le_bytes());
    }
    Ok(out)
}

/// Decode a binary trajectory record. Never panics on malformed input; every
/// structural violation is a [`Error::Parse`].
pub fn decode_trajectory_record(bytes: &[u8]) -> Result<(RecordHeader, Vec<Sample>)> {
    if bytes.len() < 12 {
        return Err(Error::parse("trajectory record", "shorter than the fixed header"));
    }
    if &bytes[0..8] != TRAJECTORY_MAGIC {
        return Err(Error::parse("trajectory record", "bad magic"));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body_start = 12usize
        .checked_add(header_len)
        .ok_or_else(|| Error::parse("trajectory record", "header length overflows"))?;
    if body_start > bytes.len() {
        return Err(Error::parse(
            "trajectory record",
            "header length exceeds the file",
        ));
    }
    let header: RecordHeader = serde_json::from_slice(&bytes[12..body_start])
        .map_err(|e| Error::parse("trajectory record", format!("header: {e}")))?;
    let payload = &bytes[body_start..];
    let expected = header
        .samples
        .checked_mul(24)
        .ok_or_else(|| Error::parse("trajectory record", "sample count overflows"))?;
    if payload.len() as u64 != expected {
        return Err(Error::parse(
            "trajectory record",
            format!(
                "payload holds {} bytes but the header promises {} samples ({} bytes)",
                payload.len(),
                header.samples,
                expected
            ),
        ));
    }
    let mut samples = Vec::with_capacity(header.samples as usize);
    for chunk in payload.chunks_exact(24) {
        samples.push(Sample {
            time: f64::from_le_bytes(chunk[0..8].try_into().expect("8 bytes")),
            alpha: f64::from_le_bytes(chunk[8..16].try_into().expect("8 bytes")),
            omega: f64::from_le_bytes(chunk[16..24].try_into().expect("8 bytes")),
        });
    }
    Ok((header, samples))
}

/// Write a signal trace as CSV: `t, value`.
pub fn write_trace_csv<W: Write>(mut w: W, trace: &SignalTrace, header: &str) -> Result<()> {
    w.write_all(header.as_bytes())?;
    writeln!(w, "# sample_rate_hz: {:e}", trace.sample_rate)?;
    writeln!(w, "t_s,value")?;
    for (i, &v) in trace.samples.iter().enumerate() {
        writeln!(w, "{:e},{:e}", trace.time_at(i), v)?;
    }
    Ok(())
}

/// Parse a `t, value` CSV trace. `#` lines and the column header are
/// skipped; the time grid must be uniform and increasing (the sample rate is
/// rederived from it).
pub fn parse_trace_csv(text: &str) -> Result<SignalTrace> {
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(
                "trace csv",
                format!("line {}: expected two comma-separated fields", lineno + 1),
            ));
        };
        let a = a.trim();
        let b = b.trim();
        if times.is_empty() && a.parse::<f64>().is_err() {
            continue; // column header
        }
        let t: f64 = a.parse().map_err(|_| {
            Error::parse("trace csv", format!("line {}: bad time `{a}`", lineno + 1))
        })?;
        let v: f64 = b.parse().map_err(|_| {
            Error::parse("trace csv", format!("line {}: bad value `{b}`", lineno + 1))
        })?;
        if !(t.is_finite() && v.is_finite()) {
            return Err(Error::parse(
                "trace csv",
                format!("line {}: non-finite entry", lineno + 1),
            ));
        }
        times.push(t);
        values.push(v);
    }
    if times.len() < 2 {
        return Err(Error::parse("trace csv", "need at least two samples"));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::parse("trace csv", "time stamps must increase"));
    }
    for w in times.windows(2) {
        let step = w[1] - w[0];
        if !(step > 0.0) || ((step - dt) / dt).abs() > 1e-6 {
            return Err(Error::parse("trace csv", "time grid must be uniform"));
        }
    }
    Ok(SignalTrace {
        samples: values,
        sample_rate: 1.0 / dt,
        start_time: times[0],
        carrier_hint: None,
    })
}

/// One calibration point: pressure (explicit unit), phase, optional phase
/// uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub pressure_pa: f64,
    pub phase_rad: f64,
    pub sigma_phase_rad: Option<f64>,
}

/// Parse a calibration CSV with columns `pressure, unit, phase_rad[, sigma]`
/// where `unit` is `pa` or `mbar`.
pub fn parse_calibration_csv(text: &str) -> Result<Vec<CalibrationPoint>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if out.is_empty() && fields[0].parse::<f64>().is_err() && !fields[0].eq_ignore_ascii_case("nan")
        {
            continue; // column header
        }
        if fields.len() != 3 && fields.len() != 4 {
            return Err(Error::parse(
                "calibration csv",
                format!("line {}: expected 3 or 4 fields", lineno + 1),
            ));
        }
        let raw: f64 = fields[0].parse().map_err(|_| {
            Error::parse(
                "calibration csv",
                format!("line {}: bad pressure `{}`", lineno + 1, fields[0]),
            )
        })?;
        let pressure_pa = match fields[1].to_ascii_lowercase().as_str() {
            "pa" => raw,
            "mbar" => raw * MBAR,
            other => {
                return Err(Error::parse(
                    "calibration csv",
                    format!("line {}: unknown pressure unit `{other}`", lineno + 1),
                ))
            }
        };
        let phase_rad: f64 = fields[2].parse().map_err(|_| {
            Error::parse(
                "calibration csv",
                format!("line {}: bad phase `{}`", lineno + 1, fields[2]),
            )
        })?;
        let sigma_phase_rad = match fields.get(3) {
            Some(s) if !s.is_empty() => Some(s.parse::<f64>().map_err(|_| {
                Error::parse(
                    "calibration csv",
                    format!("line {}: bad sigma `{s}`", lineno + 1),
                )
            })?),
            _ => None,
        };
        if !(pressure_pa.is_finite() && phase_rad.is_finite()) {
            return Err(Error::parse(
                "calibration csv",
                format!("line {}: non-finite entry", lineno + 1),
            ));
        }
        out.push(CalibrationPoint {
            pressure_pa,
            phase_rad,
            sigma_phase_rad,
        });
    }
    if out.is_empty() {
        return Err(Error::parse("calibration csv", "no data rows"));
    }
    Ok(out)
}

pub fn write_calibration_csv<W: Write>(
    mut w: W,
    points: &[CalibrationPoint],
    header: &str,
) -> Result<()> {
    w.write_all(header.as_bytes())?;
    writeln!(w, "pressure,unit,phase_rad,sigma_phase_rad")?;
    for p in points {
        match p.sigma_phase_rad {
            Some(s) => writeln!(w, "{:e},pa,{:e},{:e}", p.pressure_pa, p.phase_rad, s)?,
            None => writeln!(w, "{:e},pa,{:e},", p.pressure_pa, p.phase_rad)?,
        }
    }
    Ok(())
}

/// Parse a parameter path from JSON.
pub fn parse_path_json(text: &str) -> Result<ParameterPath> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let path: ParameterPath = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    path.validate()?;
    Ok(path)
}

pub fn parse_path_json_bytes(bytes: &[u8]) -> Result<ParameterPath> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::parse("path json", format!("not valid UTF-8: {e}")))?;
    parse_path_json(text)
}

/// Write a spectrum as CSV: `frequency_hz, psd`.
pub fn write_spectrum_csv<W: Write>(mut w: W, spec: &Spectrum, header: &str) -> Result<()> {
    w.write_all(header.as_bytes())?;
    writeln!(w, "# resolution_bandwidth_hz: {:e}", spec.resolution_bandwidth)?;
    writeln!(w, "frequency_hz,psd")?;
    for (f, p) in spec.frequencies.iter().zip(&spec.psd) {
        writeln!(w, "{f:e},{p:e}")?;
    }
    Ok(())
}

/// Write a phase-noise curve as CSV: `offset_hz, s_phi_dbc_hz`.
pub fn write_phase_noise_csv<W: Write>(
    mut w: W,
    curve: &PhaseNoiseCurve,
    header: &str,
) -> Result<()> {
    w.write_all(header.as_bytes())?;
    writeln!(w, "# carrier_hz: {:e}", curve.carrier_hz)?;
    writeln!(w, "offset_hz,s_phi_dbc_hz")?;
    for (o, v) in curve.offsets.iter().zip(&curve.dbc_per_hz) {
        writeln!(w, "{o:e},{v:e}")?;
    }
    Ok(())
}

/// Write a region map as CSV, one row per cell with the analytic flag and
/// every ensemble outcome.
pub fn write_region_map_csv<W: Write>(mut w: W, map: &RegionMap, header: &str) -> Result<()> {
    w.write_all(header.as_bytes())?;
    writeln!(w, "# nv_ratio: {:e}", map.nv_ratio)?;
    let members = map.cells.first().map_or(0, |c| c.outcomes.len());
    write!(
        w,
        "gamma,torque,analytic_phase,on_line_1_2,on_line_1_4"
    )?;
    for i in 0..members {
        write!(w, ",outcome_{i},f_r_{i}")?;
    }
    writeln!(w)?;
    for cell in &map.cells {
        write!(w, "{:e},{:e},", cell.gamma, cell.torque)?;
        match cell.analytic_phase {
            Some(phi) => write!(w, "{phi:e}")?,
            None => write!(w, "")?,
        }
        write!(
            w,
            ",{},{}",
            cell.on_coincidence_1_2 as u8, cell.on_coincidence_1_4 as u8
        )?;
        for o in &cell.outcomes {
            write!(w, ",{},{:e}", o.kind.label(), o.f_r)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Write path-sweep reports as CSV.
pub fn write_path_csv<W: Write>(mut w: W, points: &[PathPoint], header: &str) -> Result<()> {
    w.write_all(header.as_bytes())?;
    writeln!(
        w,
        "segment,fraction,pressure_pa,frequency_hz,gamma,torque,potential,f_r_hz,f_ratio,kind,residual"
    )?;
    for p in points {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{:e}",
            p.segment,
            p.fraction,
            p.pressure_pa,
            p.frequency_hz,
            p.gamma,
            p.torque,
            p.potential,
            p.report.f_r,
            p.f_ratio,
            p.report.kind.label(),
            p.report.residual
        )?;
    }
    Ok(())
}

/// Write bytes to a file, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, IntegratorSettings, RotorState};
    use crate::params::{Coefficients, DriveConfig};

    fn small_trajectory() -> Trajectory {
        let c = Coefficients {
            damping: 0.01,
            torque: 0.06,
            potential: 0.3,
            inertia: 1.0,
        };
        let drive = DriveConfig {
            frequency_hz: 1.0,
            duty: 0.5,
        };
        let settings = IntegratorSettings {
            steps_per_half_period: 16,
            transient_periods: 0,
            output_stride: 8,
        };
        simulate(&RotorState::new(0.2, 3.0), &c, &drive, &settings, 5).unwrap()
    }

    #[test]
    fn binary_record_round_trips_exactly() {
        let traj = small_trajectory();
        let bytes = encode_trajectory_record(&traj, r#"{"seed":1}"#).unwrap();
        let (header, samples) = decode_trajectory_record(&bytes).unwrap();
        assert_eq!(header.samples as usize, traj.samples.len());
        assert_eq!(header.periods, 5);
        for (a, b) in samples.iter().zip(&traj.samples) {
            assert_eq!(a.time.to_bits(), b.time.to_bits());
            assert_eq!(a.alpha.to_bits(), b.alpha.to_bits());
            assert_eq!(a.omega.to_bits(), b.omega.to_bits());
        }
    }

    #[test]
    fn record_decoder_rejects_malformed_input() {
        let traj = small_trajectory();
        let good = encode_trajectory_record(&traj, "{}").unwrap();

        assert!(decode_trajectory_record(b"").is_err());
        assert!(decode_trajectory_record(b"NROTRAJ1").is_err());
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(decode_trajectory_record(&bad_magic).is_err());
        let mut bad_len = good.clone();
        bad_len[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_trajectory_record(&bad_len).is_err());
        let truncated = &good[..good.len() - 1];
        assert!(decode_trajectory_record(truncated).is_err());
    }

    #[test]
    fn trace_csv_round_trips() {
        let trace = SignalTrace {
            samples: vec![0.5, -0.25, 1.0 / 3.0, 2.0e-6],
            sample_rate: 2000.0,
            start_time: 0.125,
            carrier_hint: None,
        };
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &trace, "# test\n").unwrap();
        let parsed = parse_trace_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(parsed.samples, trace.samples);
        assert!((parsed.sample_rate - 2000.0).abs() < 1e-6);
        assert!((parsed.start_time - 0.125).abs() < 1e-12);
    }

    #[test]
    fn trace_csv_rejects_non_uniform_grid() {
        let text = "t_s,value\n0.0,1.0\n0.1,2.0\n0.3,3.0\n";
        assert!(parse_trace_csv(text).is_err());
        assert!(parse_trace_csv("t,v\n0.0,1.0\n").is_err());
        assert!(parse_trace_csv("0.0,nan\n0.1,2.0\n").is_err());
    }

    #[test]
    fn calibration_csv_units_and_sigma() {
        let text = "pressure,unit,phase_rad,sigma\n4.0,mbar,1.5,0.01\n250,pa,1.6,\n300,Pa,1.7\n";
        let points = parse_calibration_csv(text).unwrap();
        assert_eq!(points.len(), 3);
        assert_eq!(points[0].pressure_pa, 400.0);
        assert_eq!(points[0].sigma_phase_rad, Some(0.01));
        assert_eq!(points[1].pressure_pa, 250.0);
        assert_eq!(points[1].sigma_phase_rad, None);
        assert_eq!(points[2].pressure_pa, 300.0);

        assert!(parse_calibration_csv("4.0,psi,1.5\n").is_err());
        assert!(parse_calibration_csv("").is_err());
    }

    #[test]
    fn config_line_extraction() {
        let header = provenance_header(r#"{"seed":7}"#, 7);
        let text = format!("{header}t,value\n0,1\n");
        assert_eq!(extract_config_line(&text), Some(r#"{"seed":7}"#));
        assert_eq!(extract_config_line("t,value\n0,1\n"), None);
    }
}
