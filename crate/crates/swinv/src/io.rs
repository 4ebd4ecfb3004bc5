//! Artifact serialization: versioned certificate and report JSON, plot-data
//! CSV, and simple SVG rendering of polylines.
//!
//! Every JSON artifact carries `"schema": "swinv/1"` and formats floats with
//! 17 significant digits, so identical inputs produce byte-identical files.
//! All writes go through a temp-file-plus-rename so a crash never leaves a
//! half-written artifact behind.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::arbitrary::{EllipsoidSet, SosCertificate};
use crate::dwell::DwellCertificate;
use crate::error::Error;
use crate::sim::Trajectory;
use crate::system::{SwitchedAffineSystem, SystemSpec};
use crate::Result;

/// Version tag stamped into every JSON artifact.
pub const SCHEMA: &str = "swinv/1";

// ---------------------------------------------------------------------------
// deterministic JSON
// ---------------------------------------------------------------------------

/// serde_json formatter printing every float with 17 significant digits —
/// enough to round-trip an IEEE-754 double exactly, and byte-stable across
/// runs.
struct SigDigits;

impl serde_json::ser::Formatter for SigDigits {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{:.16e}", value as f64)
    }
}

/// Serialize to the deterministic JSON text used for all artifacts.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigits);
    value.serialize(&mut ser)?;
    out.push(b'\n');
    String::from_utf8(out).map_err(|e| Error::NumericFailure(e.to_string()))
}

/// Write bytes atomically: temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            tempfile::NamedTempFile::new_in(d)?
        }
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Serialize `value` deterministically and write it atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json_string(value)?.as_bytes())
}

/// Read and deserialize a JSON artifact.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Load a system-spec file into a validated system.
pub fn read_system(path: &Path) -> Result<SwitchedAffineSystem> {
    let spec: SystemSpec = read_json(path)?;
    SwitchedAffineSystem::from_spec(&spec)
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().cloned().collect())
        .collect()
}

fn rows_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.iter().any(|r| r.len() != nc) {
        return Err(Error::DimensionMismatch("ragged matrix rows".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
    Ok(DMatrix::from_row_slice(nr, nc, &flat))
}

// ---------------------------------------------------------------------------
// certificate artifacts
// ---------------------------------------------------------------------------

/// On-disk form of an invariant-ellipsoid certificate.
#[derive(Debug, Serialize, Deserialize)]
pub struct EllipsoidArtifact {
    pub schema: String,
    pub kind: String,
    pub kappa: f64,
    pub center: Vec<f64>,
    /// Shape matrix S of `(x−c)ᵀ S⁻¹ (x−c) ≤ 1`, row-major.
    pub shape: Vec<Vec<f64>>,
}

impl EllipsoidArtifact {
    pub fn from_set(set: &EllipsoidSet) -> Self {
        EllipsoidArtifact {
            schema: SCHEMA.into(),
            kind: "invariant-ellipsoid".into(),
            kappa: set.kappa,
            center: set.center.iter().cloned().collect(),
            shape: matrix_rows(&set.shape),
        }
    }

    pub fn to_set(&self) -> Result<EllipsoidSet> {
        Ok(EllipsoidSet {
            center: DVector::from_column_slice(&self.center),
            shape: rows_matrix(&self.shape)?,
            kappa: self.kappa,
        })
    }
}

/// On-disk form of a sum-of-squares certificate.
#[derive(Debug, Serialize, Deserialize)]
pub struct SosArtifact {
    pub schema: String,
    pub kind: String,
    pub degree: u32,
    pub beta: f64,
    pub epsilon: f64,
    pub level: f64,
    pub exponents: Vec<Vec<u32>>,
    pub coefficients: Vec<f64>,
    pub gram_positivity: Vec<Vec<f64>>,
    pub gram_decay: Vec<Vec<Vec<f64>>>,
}

impl SosArtifact {
    pub fn from_cert(cert: &SosCertificate) -> Self {
        SosArtifact {
            schema: SCHEMA.into(),
            kind: "invariant-sos".into(),
            degree: cert.degree,
            beta: cert.beta,
            epsilon: cert.epsilon,
            level: cert.level,
            exponents: cert.exponents.clone(),
            coefficients: cert.coefficients.clone(),
            gram_positivity: cert.gram_positivity.clone(),
            gram_decay: cert.gram_decay.clone(),
        }
    }

    pub fn to_cert(&self) -> SosCertificate {
        SosCertificate {
            degree: self.degree,
            beta: self.beta,
            epsilon: self.epsilon,
            level: self.level,
            exponents: self.exponents.clone(),
            coefficients: self.coefficients.clone(),
            gram_positivity: self.gram_positivity.clone(),
            gram_decay: self.gram_decay.clone(),
        }
    }
}

/// On-disk form of a dwell-time certificate.
#[derive(Debug, Serialize, Deserialize)]
pub struct DwellArtifact {
    pub schema: String,
    pub kind: String,
    pub tau: f64,
    pub centers: Vec<Vec<f64>>,
    pub p: Vec<Vec<Vec<f64>>>,
    pub m: Vec<Vec<Vec<Vec<f64>>>>,
    pub d: Vec<Vec<Vec<f64>>>,
    pub objective: f64,
    pub r_x: f64,
    pub kappa_tilde: f64,
}

impl DwellArtifact {
    pub fn from_cert(cert: &DwellCertificate) -> Self {
        DwellArtifact {
            schema: SCHEMA.into(),
            kind: "dwell-certificate".into(),
            tau: cert.tau,
            centers: cert.centers.iter().map(|c| c.iter().cloned().collect()).collect(),
            p: cert.p.iter().map(matrix_rows).collect(),
            m: cert
                .m
                .iter()
                .map(|row| row.iter().map(matrix_rows).collect())
                .collect(),
            d: cert
                .d
                .iter()
                .map(|row| row.iter().map(|v| v.iter().cloned().collect()).collect())
                .collect(),
            objective: cert.objective,
            r_x: cert.r_x,
            kappa_tilde: cert.kappa_tilde,
        }
    }

    pub fn to_cert(&self) -> Result<DwellCertificate> {
        Ok(DwellCertificate {
            tau: self.tau,
            p: self.p.iter().map(|m| rows_matrix(m)).collect::<Result<_>>()?,
            centers: self
                .centers
                .iter()
                .map(|c| DVector::from_column_slice(c))
                .collect(),
            m: self
                .m
                .iter()
                .map(|row| row.iter().map(|m| rows_matrix(m)).collect())
                .collect::<Result<_>>()?,
            d: self
                .d
                .iter()
                .map(|row| row.iter().map(|v| DVector::from_column_slice(v)).collect())
                .collect(),
            objective: self.objective,
            r_x: self.r_x,
            kappa_tilde: self.kappa_tilde,
        })
    }
}

/// Generic analysis report: a schema tag, a kind, and free-form fields.
#[derive(Debug, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub kind: String,
    #[serde(flatten)]
    pub fields: serde_json::Map<String, serde_json::Value>,
}

impl Report {
    pub fn new(kind: &str) -> Self {
        Report {
            schema: SCHEMA.into(),
            kind: kind.into(),
            fields: serde_json::Map::new(),
        }
    }

    pub fn set<T: Serialize>(mut self, key: &str, value: T) -> Self {
        self.fields
            .insert(key.into(), serde_json::to_value(value).unwrap());
        self
    }
}

// ---------------------------------------------------------------------------
// CSV plot data
// ---------------------------------------------------------------------------

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Trajectory CSV: `t,x1,…,xn,mode` per sample.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let n = traj.states.first().map(|x| x.len()).unwrap_or(0);
    let mut out = String::from("t");
    for k in 1..=n {
        out.push_str(&format!(",x{k}"));
    }
    out.push_str(",mode\n");
    for ((t, x), mode) in traj.times.iter().zip(&traj.states).zip(&traj.modes) {
        out.push_str(&fmt(*t));
        for v in x.iter() {
            out.push(',');
            out.push_str(&fmt(*v));
        }
        out.push_str(&format!(",{mode}\n"));
    }
    write_atomic(path, out.as_bytes())
}

/// Level-set sample CSV: `x,y,value` over a grid (2-D systems).
pub fn write_levelset_csv(path: &Path, samples: &[(f64, f64, f64)]) -> Result<()> {
    let mut out = String::from("x,y,value\n");
    for (x, y, v) in samples {
        out.push_str(&format!("{},{},{}\n", fmt(*x), fmt(*y), fmt(*v)));
    }
    write_atomic(path, out.as_bytes())
}

/// Region polylines CSV: `set,x,y`, one closed curve per set identifier.
pub fn write_polyline_csv(path: &Path, polylines: &[(String, Vec<(f64, f64)>)]) -> Result<()> {
    let mut out = String::from("set,x,y\n");
    for (id, pts) in polylines {
        for (x, y) in pts {
            out.push_str(&format!("{},{},{}\n", id, fmt(*x), fmt(*y)));
        }
    }
    write_atomic(path, out.as_bytes())
}

/// Optimizer trace CSV: `iteration,objective,c1_1,…` per accepted step.
pub fn write_iteration_csv(
    path: &Path,
    objectives: &[f64],
    centers: &[Vec<DVector<f64>>],
) -> Result<()> {
    let mut out = String::from("iteration,objective");
    if let Some(first) = centers.first() {
        for (i, c) in first.iter().enumerate() {
            for k in 1..=c.len() {
                out.push_str(&format!(",c{}_{k}", i + 1));
            }
        }
    }
    out.push('\n');
    for (it, f) in objectives.iter().enumerate() {
        out.push_str(&format!("{it},{}", fmt(*f)));
        if let Some(cs) = centers.get(it) {
            for c in cs {
                for v in c.iter() {
                    out.push(',');
                    out.push_str(&fmt(*v));
                }
            }
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Minimal SVG rendering of polylines — a convenience view of the CSV plot
/// data, not a plotting engine.
pub fn polylines_to_svg(polylines: &[(String, Vec<(f64, f64)>)]) -> String {
    let pts: Vec<(f64, f64)> = polylines.iter().flat_map(|(_, p)| p.iter().cloned()).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (-1.0f64, 1.0f64, -1.0f64, 1.0f64);
    for (x, y) in &pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    let w = 640.0;
    let h = 640.0;
    let pad = 20.0;
    let sx = (w - 2.0 * pad) / (x1 - x0).max(1e-12);
    let sy = (h - 2.0 * pad) / (y1 - y0).max(1e-12);
    let s = sx.min(sy);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    for (k, (id, pts)) in polylines.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let color = colors[k % colors.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{:.3},{:.3}", pad + (x - x0) * s, h - pad - (y - y0) * s))
            .collect();
        svg.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"><title>{id}</title></polyline>\n",
            path.join(" ")
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arbitrary::ellipsoid_invariant;
    use crate::dwell::dwell_certificate;
    use nalgebra::dvector;

    fn stable_pair() -> SwitchedAffineSystem {
        SwitchedAffineSystem::from_rows(&[
            (vec![vec![-1.0, -1.0], vec![0.0, -1.0]], vec![-1.0, -1.0]),
            (vec![vec![-1.0, 0.0], vec![-1.0, -1.0]], vec![-1.0, -1.0]),
        ])
        .unwrap()
    }

    #[test]
    fn json_serialization_is_byte_identical_across_runs() {
        let sys = stable_pair();
        let a = to_json_string(&EllipsoidArtifact::from_set(
            &ellipsoid_invariant(&sys, 0.4785).unwrap(),
        ))
        .unwrap();
        let b = to_json_string(&EllipsoidArtifact::from_set(
            &ellipsoid_invariant(&sys, 0.4785).unwrap(),
        ))
        .unwrap();
        assert_eq!(a, b);
        assert!(a.contains("\"schema\":\"swinv/1\""));
    }

    #[test]
    fn floats_round_trip_exactly() {
        let values = vec![std::f64::consts::PI, 1.0 / 3.0, 1e-17, -2.2250738585072014e-308];
        let text = to_json_string(&values).unwrap();
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(values, back);
    }

    #[test]
    fn ellipsoid_artifact_round_trips() {
        let sys = stable_pair();
        let set = ellipsoid_invariant(&sys, 0.4785).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ellipsoid.json");
        write_json(&path, &EllipsoidArtifact::from_set(&set)).unwrap();
        let art: EllipsoidArtifact = read_json(&path).unwrap();
        let back = art.to_set().unwrap();
        assert_eq!(set.center, back.center);
        assert_eq!(set.shape, back.shape);
        assert_eq!(set.kappa, back.kappa);
    }

    #[test]
    fn dwell_artifact_round_trips() {
        let sys = SwitchedAffineSystem::from_rows(&[
            (vec![vec![0.0, 1.0], vec![-10.0, -1.0]], vec![-1.0, -1.0]),
            (vec![vec![0.0, 1.0], vec![-0.1, -0.5]], vec![1.0, 0.0]),
        ])
        .unwrap();
        let cert = dwell_certificate(&sys, 2.76, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dwell.json");
        write_json(&path, &DwellArtifact::from_cert(&cert)).unwrap();
        let art: DwellArtifact = read_json(&path).unwrap();
        let back = art.to_cert().unwrap();
        assert_eq!(cert.p, back.p);
        assert_eq!(cert.d, back.d);
        assert_eq!(cert.r_x, back.r_x);
        // the round-tripped certificate still passes the membership check
        let x = cert.centers[0].clone();
        assert!(
            crate::dwell::membership_v(&sys, &back, &x, 32)
                .unwrap()
                .is_some()
        );
    }

    #[test]
    fn system_spec_round_trips_through_disk() {
        let sys = stable_pair();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sys.json");
        write_json(&path, &sys.to_spec()).unwrap();
        let back = read_system(&path).unwrap();
        assert_eq!(sys.modes[0].a, back.modes[0].a);
        assert_eq!(sys.modes[1].b, back.modes[1].b);
    }

    #[test]
    fn atomic_write_replaces_existing_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second");
        // no stray temp files left behind
        let extras: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name() != "report.json")
            .collect();
        assert!(extras.is_empty());
    }

    #[test]
    fn trajectory_csv_has_header_and_rows() {
        let traj = Trajectory {
            times: vec![0.0, 0.5],
            states: vec![dvector![1.0, 2.0], dvector![3.0, 4.0]],
            modes: vec![1, 2],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        write_trajectory_csv(&path, &traj).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,mode");
        assert_eq!(lines.count(), 2);
        assert!(text.trim_end().ends_with(",2"));
    }

    #[test]
    fn svg_contains_one_polyline_per_set() {
        let polylines = vec![
            ("X1".to_string(), vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]),
            ("X2".to_string(), vec![(0.0, 0.0), (-1.0, -1.0)]),
        ];
        let svg = polylines_to_svg(&polylines);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("<title>X1</title>"));
    }

    #[test]
    fn report_carries_schema_and_fields() {
        let r = Report::new("min-dwell").set("tau_min", 2.76).set("iterations", 12);
        let text = to_json_string(&r).unwrap();
        assert!(text.contains("\"schema\":\"swinv/1\""));
        assert!(text.contains("\"kind\":\"min-dwell\""));
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back.fields["iterations"], 12);
    }
}
