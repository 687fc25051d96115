//! Artifact writers. Walk state is written as exact integers and derived
//! reals with 17 significant digits.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::oracle::{JointLaw, MomentTable};
use crate::stats::EnsembleSummary;

pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REPORT_FILE: &str = "report.json";
pub const METADATA_FILE: &str = "metadata.json";

/// Shortest text with 17 significant digits, which round-trips any `f64`.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// `traj_id,n,S_1..S_d,gram_1..gram_d,sigma2`, one row per trajectory and checkpoint.
pub fn write_trajectories(path: &Path, summary: &EnsembleSummary) -> Result<()> {
    let d = summary.d();
    let mut w = csv_writer(path)?;
    let mut header = vec!["traj_id".to_string(), "n".to_string()];
    header.extend((1..=d).map(|i| format!("S_{i}")));
    header.extend((1..=d).map(|i| format!("gram_{i}")));
    header.push("sigma2".into());
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for rec in summary.records() {
        row.clear();
        row.push(rec.traj_id.to_string());
        row.push(rec.n.to_string());
        row.extend(rec.position.iter().map(i64::to_string));
        row.extend(rec.gram_diag.iter().map(u64::to_string));
        row.push(rec.sigma2.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `n,e_sigma2,e_gram_diag,e_outer_diag`.
pub fn write_moment_tables(path: &Path, tables: &[MomentTable]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["n", "e_sigma2", "e_gram_diag", "e_outer_diag"])?;
    for t in tables {
        w.write_record([t.n.to_string(), real(t.e_sigma2), real(t.e_gram_diag), real(t.e_outer_diag)])?;
    }
    w.flush()?;
    Ok(())
}

/// `S_1..S_d,sigma2,probability`.
pub fn write_joint_law(path: &Path, law: &JointLaw) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = (1..=law.d).map(|i| format!("S_{i}")).collect();
    header.push("sigma2".into());
    header.push("probability".into());
    w.write_record(&header)?;
    for (position, sigma2, p) in law.position_sigma2() {
        let mut row: Vec<String> = position.iter().map(i64::to_string).collect();
        row.push(sigma2.to_string());
        row.push(real(p));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Generic CSV of real-valued rows.
pub fn write_real_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|&x| real(x)))?;
    }
    w.flush()?;
    Ok(())
}

/// `alpha,kind,arg,value` rows of Mittag-Leffler evaluations.
pub fn write_labeled_table(path: &Path, alpha: f64, rows: &[(&str, f64, f64)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["alpha", "kind", "arg", "value"])?;
    for &(kind, arg, value) in rows {
        w.write_record([real(alpha), kind.to_string(), real(arg), real(value)])?;
    }
    w.flush()?;
    Ok(())
}
