//! Serialization of run results: telemetry CSV and JSON documents.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use sea_control::lyapunov::LyapunovCertificate;
use sea_control::sim::{JointSample, Telemetry};
use sea_control::{ControlMode, Metrics, Scenario};

/// Per-joint telemetry columns, in file order. Each is prefixed with `j<i>_`.
pub const JOINT_COLUMNS: [&str; 13] = [
    "q_j",
    "dq_j",
    "q_m",
    "dq_m",
    "u",
    "spring_torque",
    "reference",
    "error",
    "dist_hat_motor",
    "dist_hat_link",
    "dist_true_motor",
    "dist_true_link",
    "contact",
];

pub fn header(joints: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain((0..joints).flat_map(|j| JOINT_COLUMNS.iter().map(move |c| format!("j{j}_{c}"))))
        .collect()
}

fn cell(v: f64) -> String {
    format!("{v:.9}")
}

fn joint_cells(s: &JointSample) -> [String; 13] {
    [
        cell(s.q_j),
        cell(s.dq_j),
        cell(s.q_m),
        cell(s.dq_m),
        cell(s.u),
        cell(s.spring_torque),
        cell(s.reference),
        cell(s.error),
        cell(s.dist_hat_motor),
        cell(s.dist_hat_link),
        cell(s.dist_true_motor),
        cell(s.dist_true_link),
        u8::from(s.contact).to_string(),
    ]
}

/// Writes every `decimate`-th row, starting with the first.
pub fn write_telemetry(writer: impl Write, telemetry: &Telemetry, decimate: usize) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(header(telemetry.joints))?;
    for row in (0..telemetry.rows()).step_by(decimate.max(1)) {
        let mut record = vec![cell(telemetry.time[row])];
        for j in 0..telemetry.joints {
            record.extend(joint_cells(telemetry.sample(row, j)));
        }
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct CertificateRecord<'a> {
    pub joint: usize,
    pub mode: &'static str,
    pub valid: bool,
    pub p_norm: f64,
    #[serde(flatten)]
    pub certificate: &'a LyapunovCertificate,
}

pub fn certificate_records<'a>(modes: &[ControlMode], certs: &'a [LyapunovCertificate]) -> Vec<CertificateRecord<'a>> {
    certs
        .iter()
        .zip(modes)
        .enumerate()
        .map(|(joint, (c, m))| CertificateRecord {
            joint,
            mode: m.name(),
            valid: c.is_valid(),
            p_norm: c.p_norm(),
            certificate: c,
        })
        .collect()
}

/// Directory name for a scenario: its name with path-hostile characters replaced.
pub fn directory_name(name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    if clean.is_empty() || clean.chars().all(|c| c == '.') {
        "scenario".into()
    } else {
        clean
    }
}

fn io_context(path: &Path, e: impl std::fmt::Display) -> io::Error {
    io::Error::other(format!("{}: {e}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> io::Result<()> {
    let file = File::create(path).map_err(|e| io_context(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_context(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| io_context(path, e))
}

pub struct RunOutputs<'a> {
    pub scenario: &'a Scenario,
    pub telemetry: Option<&'a Telemetry>,
    pub metrics: &'a Metrics,
    pub certificates: &'a [LyapunovCertificate],
}

/// Writes `telemetry.csv` (unless omitted), `metrics.json`,
/// `certificate.json` and the resolved `scenario.json` under `dir`.
pub fn write_outputs(dir: &Path, outputs: &RunOutputs, decimate: usize) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| io_context(dir, e))?;
    let mut written = Vec::new();
    if let Some(tel) = outputs.telemetry {
        let path = dir.join("telemetry.csv");
        let file = File::create(&path).map_err(|e| io_context(&path, e))?;
        write_telemetry(BufWriter::new(file), tel, decimate).map_err(|e| io_context(&path, e))?;
        written.push(path);
    }
    let path = dir.join("metrics.json");
    write_json(&path, outputs.metrics)?;
    written.push(path);
    let path = dir.join("certificate.json");
    write_json(&path, &certificate_records(&outputs.scenario.modes, outputs.certificates))?;
    written.push(path);
    let path = dir.join("scenario.json");
    write_json(&path, outputs.scenario)?;
    written.push(path);
    Ok(written)
}
