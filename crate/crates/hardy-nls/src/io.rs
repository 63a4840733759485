//! Text formats: CSV with 17 significant digits and pretty JSON.
//!
//! Every float goes through [`fmt_f64`], so a value read back with
//! `str::parse::<f64>` is bit-identical to the one written.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::groundstate::{GroundStateProfile, ProfileSidecar};
use crate::nls_sim::Record;
use crate::ode::Params;

/// `x` as text with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Format(format!("bad number {s:?}: {e}")))
}

/// Writes a CSV table with the given header.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[f64]>,
{
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let row = row.as_ref();
        if row.len() != header.len() {
            return Err(Error::Format(format!(
                "row has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        let cells: Vec<String> = row.iter().map(|x| fmt_f64(*x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

/// Reads a numeric CSV table; returns the header and the rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = match lines.next() {
        Some(h) => h.split(',').map(|s| s.trim().to_string()).collect(),
        None => return Err(Error::Format(format!("{} is empty", path.display()))),
    };
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line.split(',').map(parse_f64).collect::<Result<Vec<f64>>>()?;
        if row.len() != header.len() {
            return Err(Error::Format(format!(
                "{} line {}: {} fields, expected {}",
                path.display(),
                k + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub const PROFILE_HEADER: [&str; 4] = ["r", "Q", "Qr", "Q1"];

/// `profile.csv` and `profile.json` inside `dir`.
pub fn write_profile(dir: &Path, profile: &GroundStateProfile) -> Result<()> {
    let rows = profile
        .grid
        .r()
        .iter()
        .enumerate()
        .map(|(i, r)| [*r, profile.q[i], profile.qr[i], profile.q1[i]]);
    write_csv(&dir.join("profile.csv"), &PROFILE_HEADER, rows)?;
    write_json(&dir.join("profile.json"), &profile.sidecar())
}

/// Inverse of [`write_profile`].
pub fn read_profile(dir: &Path) -> Result<GroundStateProfile> {
    let side: ProfileSidecar = read_json(&dir.join("profile.json"))?;
    let (header, rows) = read_csv(&dir.join("profile.csv"))?;
    if header != PROFILE_HEADER {
        return Err(Error::Format(format!("unexpected profile header {header:?}")));
    }
    let params = Params::new(side.d, side.p, side.a)?;
    let grid = side.grid.build()?;
    if rows.len() != grid.len() {
        return Err(Error::Format(format!(
            "profile has {} rows, its grid has {} nodes",
            rows.len(),
            grid.len()
        )));
    }
    if rows.iter().zip(grid.r()).any(|(row, r)| row[0].to_bits() != r.to_bits()) {
        return Err(Error::Format("profile radii do not match the recorded grid".into()));
    }
    let col = |k: usize| rows.iter().map(|row| row[k]).collect::<Vec<f64>>();
    Ok(GroundStateProfile {
        params,
        grid,
        q: col(1),
        qr: col(2),
        q1: col(3),
        b0: side.b0,
        c0: side.c0,
        mass: side.mass,
        kinetic_a: side.kinetic_a,
        lp_norm: side.lp_norm,
        energy: side.energy,
        c_gn: side.C_GN,
        r_match: side.r_match,
        seam_mismatch: side.seam_mismatch,
    })
}

pub const TIMESERIES_HEADER: [&str; 9] = ["t", "theta", "alpha", "dist", "mass", "energy", "VR", "Vdot", "AR"];

/// Time series of a run; modulation columns are `nan` where the
/// decomposition was refused.
pub fn write_timeseries(path: &Path, records: &[Record]) -> Result<()> {
    let rows = records.iter().map(|r| {
        [
            r.t,
            r.theta.unwrap_or(f64::NAN),
            r.alpha.unwrap_or(f64::NAN),
            r.dist,
            r.mass,
            r.energy,
            r.v_r,
            r.vdot,
            r.a_r,
        ]
    });
    write_csv(path, &TIMESERIES_HEADER, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 5e-324, -0.0] {
            let s = fmt_f64(x);
            assert_eq!(parse_f64(&s).unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert!(parse_f64(&fmt_f64(f64::NAN)).unwrap().is_nan());
        assert_eq!(parse_f64(&fmt_f64(f64::INFINITY)).unwrap(), f64::INFINITY);
        assert!(parse_f64("abc").is_err());
    }

    #[test]
    fn csv_round_trip_and_shape_errors() {
        let dir = std::env::temp_dir().join(format!("hardy-nls-io-{}", std::process::id()));
        let path = dir.join("t.csv");
        let rows = vec![[1.0, 0.1], [2.0, 1.0 / 7.0]];
        write_csv(&path, &["a", "b"], &rows).unwrap();
        let (h, back) = read_csv(&path).unwrap();
        assert_eq!(h, vec!["a", "b"]);
        assert_eq!(back, vec![vec![1.0, 0.1], vec![2.0, 1.0 / 7.0]]);
        assert!(write_csv(&path, &["a"], &rows).is_err());
        assert!(matches!(read_csv(&dir.join("missing.csv")), Err(Error::Io(_))));
        fs::remove_dir_all(&dir).ok();
    }
}
