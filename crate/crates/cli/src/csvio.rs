//! Trajectory CSV format.
//!
//! One row per recorded sample:
//! `t, x1..xn, [v1..vn], lambda_mean1..m, kkt_residual, lyapunov,
//! consensus_x, consensus_lambda, coupling_violation, local_violation`
//! with the velocity block present only for double-integrator runs. Values
//! are written with Rust's shortest round-trip float formatting, so reading
//! the file back reproduces every sample bit for bit.

use anyhow::{bail, Context, Result};
use gne_core::{GameSpec, Trajectory};
use std::fmt::Write as _;
use std::path::Path;

pub const TAIL_COLUMNS: [&str; 6] = [
    "kkt_residual",
    "lyapunov",
    "consensus_x",
    "consensus_lambda",
    "coupling_violation",
    "local_violation",
];

pub fn header(n: usize, m: usize, double: bool) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|k| format!("x{k}")));
    if double {
        cols.extend((1..=n).map(|k| format!("v{k}")));
    }
    cols.extend((1..=m).map(|k| format!("lambda_mean{k}")));
    cols.extend(TAIL_COLUMNS.iter().map(|s| s.to_string()));
    cols.join(",")
}

pub fn write_trajectory(path: &Path, g: &GameSpec, traj: &Trajectory) -> Result<()> {
    let n = traj.layout.n;
    let m = traj.layout.m;
    let double = traj.layout.double;
    let mut text = String::new();
    text.push_str(&header(n, m, double));
    text.push('\n');
    for k in 0..traj.len() {
        write!(text, "{}", traj.times[k])?;
        let x = traj.position(g, k)?;
        for v in x.iter() {
            write!(text, ",{v}")?;
        }
        if double {
            let vel = traj.velocity(k).expect("double layout carries velocities");
            for v in vel.iter() {
                write!(text, ",{v}")?;
            }
        }
        let lam = traj.lambda_mean(k);
        for v in lam.iter() {
            write!(text, ",{v}")?;
        }
        let ch = &traj.channels;
        for v in [
            ch.kkt[k],
            ch.lyapunov[k],
            ch.consensus_x[k],
            ch.consensus_lambda[k],
            ch.coupling_violation[k],
            ch.local_violation[k],
        ] {
            write!(text, ",{v}")?;
        }
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// A parsed trajectory file: column names plus row-major samples.
pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .with_context(|| format!("trajectory file has no column `{name}`"))?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }
}

pub fn read_trajectory(path: &Path) -> Result<CsvTable> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("trajectory file is empty")?;
    let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if columns.first().map(String::as_str) != Some("t") {
        bail!("malformed trajectory header: first column must be `t`, got `{header}`");
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            bail!(
                "malformed trajectory row {}: expected {} columns, found {}",
                lineno + 2,
                columns.len(),
                fields.len()
            );
        }
        let mut row = Vec::with_capacity(fields.len());
        for f in fields {
            row.push(
                f.parse::<f64>()
                    .with_context(|| format!("row {}: bad number `{f}`", lineno + 2))?,
            );
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("trajectory file has a header but no samples");
    }
    Ok(CsvTable { columns, rows })
}
