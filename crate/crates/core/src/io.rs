//! CSV and manifest output in a documented long format.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::electro::GridRow;
use crate::nhh::NhhTrajectory;
use crate::strobo::DetectionSeries;
use crate::Result;

pub const SCHEMA_VERSION: u32 = 1;

/// One sample of one curve: the long-format pdf table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub curve: String,
    pub framework: String,
    pub t: f64,
    pub value: f64,
}

/// An atom of probability kept outside the density table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMassRow {
    pub curve: String,
    pub t: f64,
    pub mass: f64,
}

/// One statistic of one sweep cell; `value` is empty when the cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub tau: f64,
    /// Set only by ε sweeps.
    pub epsilon: Option<f64>,
    pub framework: String,
    pub statistic: String,
    pub value: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesCsvRow {
    pub n: usize,
    pub t: f64,
    pub re: f64,
    pub im: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryCsvRow {
    pub t: f64,
    pub re: f64,
    pub im: f64,
    pub survival: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCsvRow {
    pub tau: f64,
    pub potential: String,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub dv_dx: f64,
    pub dv_dy: f64,
}

pub fn write_rows<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

pub fn series_rows(series: &DetectionSeries) -> Vec<SeriesCsvRow> {
    series
        .amplitudes
        .iter()
        .enumerate()
        .map(|(k, a)| SeriesCsvRow { n: k + 1, t: series.time(k + 1), re: a.re, im: a.im, prob: a.norm_sqr() })
        .collect()
}

pub fn trajectory_rows(traj: &NhhTrajectory) -> Vec<TrajectoryCsvRow> {
    let density = traj.density();
    (0..traj.times.len())
        .map(|k| TrajectoryCsvRow {
            t: traj.times[k],
            re: traj.psi[k].re,
            im: traj.psi[k].im,
            survival: traj.survival[k],
            density: density[k],
        })
        .collect()
}

pub fn grid_rows(grid: &[GridRow], tau: f64, potential: &str) -> Vec<GridCsvRow> {
    grid.iter()
        .map(|g| GridCsvRow { tau, potential: potential.into(), x: g.x, y: g.y, v: g.value, dv_dx: g.dx, dv_dy: g.dy })
        .collect()
}

/// A stationary point of a potential and the pole it maps to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryRow {
    pub tau: f64,
    pub potential: String,
    pub x: f64,
    pub y: f64,
    pub pole_re: f64,
    pub pole_im: f64,
}

/// A pole next to its Zeno-limit seed, when one exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleRow {
    pub tau: f64,
    pub framework: String,
    pub index: usize,
    pub re: f64,
    pub im: f64,
    pub seed_re: Option<f64>,
    pub seed_im: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZenoRow {
    pub index: usize,
    pub omega: f64,
    pub lambda: f64,
    pub theta_re: f64,
    pub theta_im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDoc {
    pub name: String,
    pub unit: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDoc {
    pub path: String,
    pub columns: Vec<ColumnDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub generator: String,
    pub units: String,
    /// Seconds since the Unix epoch; the only nondeterministic field.
    pub created_unix: u64,
    pub parameters: serde_json::Value,
    pub files: Vec<FileDoc>,
}

impl Manifest {
    pub fn new(parameters: serde_json::Value) -> Self {
        Manifest {
            schema_version: SCHEMA_VERSION,
            generator: format!("zenolab {}", env!("CARGO_PKG_VERSION")),
            units: "hbar = gamma = 1; times in hbar/gamma, energies in gamma".into(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            parameters,
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, path: &str, columns: &[(&str, &str, &str)]) {
        self.files.push(FileDoc {
            path: path.into(),
            columns: columns
                .iter()
                .map(|(n, u, d)| ColumnDoc { name: (*n).into(), unit: (*u).into(), description: (*d).into() })
                .collect(),
        });
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = File::create(path)?;
        f.write_all(serde_json::to_string_pretty(self).expect("manifest serializes").as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

pub const CURVE_COLUMNS: [(&str, &str, &str); 4] = [
    ("curve", "", "curve label"),
    ("framework", "", "strobo, nhh, zeno-strobo, zeno-nhh, corrected or oracle"),
    ("t", "hbar/gamma", "time"),
    ("value", "gamma/hbar", "detection-time density; strobo points are |phi_n|^2/tau"),
];

pub const POINT_MASS_COLUMNS: [(&str, &str, &str); 3] = [
    ("curve", "", "curve label"),
    ("t", "hbar/gamma", "time of the atom"),
    ("mass", "", "probability carried by the atom"),
];

pub const STAT_COLUMNS: [(&str, &str, &str); 6] = [
    ("tau", "hbar/gamma", "detection period"),
    ("epsilon", "", "perturbation or shift parameter; empty outside epsilon sweeps"),
    ("framework", "", "strobo, nhh, zeno-strobo, zeno-nhh, corrected, uniform, distant, close or shifted-formula"),
    ("statistic", "", "p_det, mean, var or delta"),
    ("value", "(hbar/gamma)^k", "empty when the cell failed"),
    ("note", "", "failure reason or flag"),
];

pub const GRID_COLUMNS: [(&str, &str, &str); 7] = [
    ("tau", "hbar/gamma", "detection period"),
    ("potential", "", "strobo (z plane) or nhh (s plane)"),
    ("x", "", "real part of the plane coordinate"),
    ("y", "", "imaginary part of the plane coordinate"),
    ("v", "", "logarithmic potential"),
    ("dv_dx", "", "gradient, x component"),
    ("dv_dy", "", "gradient, y component"),
];

pub const STATIONARY_COLUMNS: [(&str, &str, &str); 6] = [
    ("tau", "hbar/gamma", "detection period"),
    ("potential", "", "strobo or nhh"),
    ("x", "", "stationary point, real part"),
    ("y", "", "stationary point, imaginary part"),
    ("pole_re", "", "mapped pole, real part"),
    ("pole_im", "", "mapped pole, imaginary part"),
];

pub const POLE_COLUMNS: [(&str, &str, &str); 7] = [
    ("tau", "hbar/gamma", "detection period"),
    ("framework", "", "strobo (z) or nhh (s, gamma/hbar)"),
    ("index", "", "pole index"),
    ("re", "", "pole, real part"),
    ("im", "", "pole, imaginary part"),
    ("seed_re", "", "Zeno seed, real part; empty for the fast pole"),
    ("seed_im", "", "Zeno seed, imaginary part"),
];

pub const ZENO_COLUMNS: [(&str, &str, &str); 5] = [
    ("index", "", "slow mode index"),
    ("omega", "gamma/hbar", "absorption frequency"),
    ("lambda", "1", "rate per tau"),
    ("theta_re", "hbar/gamma", "transition time, real part"),
    ("theta_im", "hbar/gamma", "transition time, imaginary part"),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let rows = vec![
            CurveRow { curve: "a".into(), framework: "nhh".into(), t: 0.1, value: 1.5 },
            CurveRow { curve: "a".into(), framework: "strobo".into(), t: 0.2, value: 1e-300 },
        ];
        write_rows(&path, &rows).unwrap();
        assert_eq!(read_rows::<CurveRow>(&path).unwrap(), rows);
    }

    #[test]
    fn stat_rows_with_missing_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let rows = vec![
            StatRow { tau: 0.5, epsilon: None, framework: "strobo".into(), statistic: "mean".into(), value: None, note: "resonance".into() },
            StatRow { tau: 0.5, epsilon: Some(0.1), framework: "nhh".into(), statistic: "mean".into(), value: Some(0.125), note: String::new() },
        ];
        write_rows(&path, &rows).unwrap();
        assert_eq!(read_rows::<StatRow>(&path).unwrap(), rows);
    }

    #[test]
    fn pole_rows_with_missing_seed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let rows = vec![
            PoleRow { tau: 0.1, framework: "nhh".into(), index: 0, re: -20.0, im: 0.0, seed_re: None, seed_im: None },
            PoleRow { tau: 0.1, framework: "nhh".into(), index: 1, re: -0.01, im: 1.7, seed_re: Some(-0.01), seed_im: Some(1.7) },
        ];
        write_rows(&path, &rows).unwrap();
        assert_eq!(read_rows::<PoleRow>(&path).unwrap(), rows);
    }

    #[test]
    fn manifest_is_json() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::new(serde_json::json!({"tau": 0.5}));
        m.add("pdf.csv", &CURVE_COLUMNS);
        let path = dir.path().join("manifest.json");
        m.write(&path).unwrap();
        let back: Manifest = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
