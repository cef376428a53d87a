//! CSV artifacts. Every file starts with one `#`-prefixed line holding a
//! JSON object (parameters, tolerances, command options), followed by an
//! ordinary CSV table with a header row.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::SVector;
use serde_json::Value;
use thiserror::Error;

use crate::bvpcont::{BifurcationEvent, BranchSummary, Connection};
use crate::integrate::{EventKind, EventSpec, Trajectory};
use crate::kneading::{KneadingRecord, PlateauInterval};
use crate::localbif::{CurvePoint, PhaseRecord};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("metadata: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing metadata header line")]
    MissingHeader,
}

/// Header plus rows of already formatted cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<I, T>(&mut self, row: I)
    where
        I: IntoIterator<Item = T>,
        T: Display,
    {
        self.rows
            .push(row.into_iter().map(|c| c.to_string()).collect());
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

pub fn write_table<W: Write>(mut w: W, meta: &Value, table: &Table) -> Result<(), IoError> {
    writeln!(w, "# {}", serde_json::to_string(meta)?)?;
    let mut c = csv::Writer::from_writer(w);
    c.write_record(&table.header)?;
    for r in &table.rows {
        c.write_record(r)?;
    }
    c.flush()?;
    Ok(())
}

pub fn read_table<R: Read>(r: R) -> Result<(Value, Table), IoError> {
    let mut r = BufReader::new(r);
    let mut first = String::new();
    r.read_line(&mut first)?;
    let json = first.strip_prefix('#').ok_or(IoError::MissingHeader)?;
    let meta: Value = serde_json::from_str(json.trim())?;
    let mut c = csv::Reader::from_reader(r);
    let header = c.headers()?.iter().map(str::to_string).collect();
    let rows = c
        .records()
        .map(|rec| rec.map(|x| x.iter().map(str::to_string).collect()))
        .collect::<Result<_, _>>()?;
    Ok((meta, Table { header, rows }))
}

pub fn write_file(path: &Path, meta: &Value, table: &Table) -> Result<(), IoError> {
    let f = BufWriter::new(File::create(path)?);
    write_table(f, meta, table)
}

pub fn read_file(path: &Path) -> Result<(Value, Table), IoError> {
    read_table(File::open(path)?)
}

fn opt<T: Display>(x: Option<T>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

fn rows_of<const N: usize>(traj: &Trajectory<N>, dt: Option<f64>) -> Vec<(f64, SVector<f64, N>)> {
    match dt {
        Some(dt) => traj.sample(dt),
        None => traj.nodes(),
    }
}

/// `t, b_x, b_y, gamma` at the integrator nodes or resampled with spacing `dt`.
pub fn trajectory_table(traj: &Trajectory<3>, dt: Option<f64>) -> Table {
    let mut t = Table::new(&["t", "b_x", "b_y", "gamma"]);
    for (s, y) in rows_of(traj, dt) {
        t.push([s, y[0], y[1], y[2]]);
    }
    t
}

/// Cavity plus spin trajectory: `t, b_x, b_y, gamma, alpha_re, alpha_im`.
pub fn dicke_trajectory_table(traj: &Trajectory<5>, dt: Option<f64>) -> Table {
    let mut t = Table::new(&["t", "b_x", "b_y", "gamma", "alpha_re", "alpha_im"]);
    for (s, y) in rows_of(traj, dt) {
        t.push([s, y[2], y[3], y[4], y[0], y[1]]);
    }
    t
}

/// `t, kind, value`; kinds are `maximum`/`minimum` for extrema and
/// `crossing-up`/`crossing-down` for plane crossings.
pub fn events_table<const N: usize>(traj: &Trajectory<N>, specs: &[EventSpec]) -> Table {
    let mut t = Table::new(&["t", "kind", "value"]);
    for e in &traj.events {
        let (kind, c) = match specs[e.spec].kind {
            EventKind::Extremum { component } => {
                (if e.rising { "minimum" } else { "maximum" }, component)
            }
            EventKind::Crossing { component, .. } => (
                if e.rising {
                    "crossing-up"
                } else {
                    "crossing-down"
                },
                component,
            ),
        };
        t.push([e.t.to_string(), kind.to_string(), e.state[c].to_string()]);
    }
    t
}

pub fn phase_table(records: &[PhaseRecord]) -> Table {
    let mut t = Table::new(&[
        "lambda_minus",
        "lambda_plus",
        "label",
        "gamma_eq",
        "leading_eigenvalue_re",
        "leading_eigenvalue_im",
    ]);
    for r in records {
        t.push([
            r.lambda_minus.to_string(),
            r.lambda_plus.to_string(),
            r.label.to_string(),
            r.gamma_eq.to_string(),
            r.leading_eigenvalue_re.to_string(),
            r.leading_eigenvalue_im.to_string(),
        ]);
    }
    t
}

/// Curves as `(lambda_minus, lambda_plus, curve_id)`; the id is
/// `name` or `name-k` for the k-th root branch when a curve has several.
pub fn curves_table(curves: &[(&str, &[CurvePoint])]) -> Table {
    let mut t = Table::new(&["lambda_minus", "lambda_plus", "curve_id"]);
    for (name, pts) in curves {
        let multi = pts.iter().any(|p| p.branch > 0);
        for p in *pts {
            let id = if multi {
                format!("{name}-{}", p.branch)
            } else {
                name.to_string()
            };
            t.push([p.lambda_minus.to_string(), p.lambda_plus.to_string(), id]);
        }
    }
    t
}

pub fn sweep_table(records: &[KneadingRecord]) -> Table {
    let mut t = Table::new(&["lambda_plus", "K_numerator", "n", "symbols", "terminal"]);
    for r in records {
        t.push([
            r.lambda_plus.to_string(),
            r.invariant.numerator.to_string(),
            r.invariant.n.to_string(),
            r.symbols.to_string(),
            r.terminal.to_string(),
        ]);
    }
    t
}

pub fn plateaus_table(plateaus: &[PlateauInterval]) -> Table {
    let mut t = Table::new(&["lo", "hi", "K", "left_seq", "right_seq", "spike_center"]);
    for p in plateaus {
        t.push([
            p.lo.to_string(),
            p.hi.to_string(),
            p.value.to_string(),
            p.left_sequence.to_string(),
            p.right_sequence.to_string(),
            opt(p.spike_center),
        ]);
    }
    t
}

pub fn branches_table(branches: &[BranchSummary]) -> Table {
    let mut t = Table::new(&["branch_id", "lambda_plus", "max_bx", "stability", "period"]);
    for b in branches {
        for r in &b.rows {
            t.push([
                r.branch_id.clone(),
                r.lambda_plus.to_string(),
                r.max_bx.to_string(),
                r.stability.clone(),
                opt(r.period),
            ]);
        }
    }
    t
}

/// `kind, lambda_plus, branch, critical_re, critical_im, diagnostics`.
pub fn bifurcation_events_table(events: &[BifurcationEvent]) -> Table {
    let mut t = Table::new(&[
        "kind",
        "lambda_plus",
        "branch",
        "critical_re",
        "critical_im",
        "diagnostics",
    ]);
    for e in events {
        let c = e.diagnostics.critical;
        t.push([
            e.kind.to_string(),
            e.lambda_plus.to_string(),
            e.branch.clone(),
            opt(c.map(|z| z.re)),
            opt(c.map(|z| z.im)),
            e.diagnostics.note.clone(),
        ]);
    }
    t
}

/// Assembled connecting orbit as a trajectory table with a `segment`
/// column (1 for the unstable side, 2 for the stable side).
pub fn connection_table(c: &Connection) -> Table {
    let mut t = Table::new(&["t", "b_x", "b_y", "gamma", "segment"]);
    let x1 = &c.problem.x1;
    for (s, x) in x1.mesh.iter().zip(&x1.states) {
        t.push([
            (s * x1.time).to_string(),
            x[0].to_string(),
            x[1].to_string(),
            x[2].to_string(),
            "1".into(),
        ]);
    }
    let x2 = &c.problem.x2;
    for (s, x) in x2.mesh.iter().zip(&x2.states) {
        t.push([
            (x1.time + s * x2.time).to_string(),
            x[0].to_string(),
            x[1].to_string(),
            x[2].to_string(),
            "2".into(),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn round_trip_keeps_metadata_and_cells() {
        let mut t = Table::new(&["a", "b"]);
        t.push([0.1, -2.5e-17]);
        t.push([f64::MAX, 3.0]);
        let meta = json!({"command": "test", "tol": 1e-12});
        let mut buf = Vec::new();
        write_table(&mut buf, &meta, &t).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# {"));
        let (m, back) = read_table(buf.as_slice()).unwrap();
        assert_eq!(m, meta);
        assert_eq!(back, t);
        let a: Vec<f64> = back
            .column("a")
            .unwrap()
            .iter()
            .map(|c| c.parse().unwrap())
            .collect();
        assert_eq!(a, vec![0.1, f64::MAX]);
    }

    #[test]
    fn header_line_is_required() {
        assert!(matches!(
            read_table("a,b\n1,2\n".as_bytes()),
            Err(IoError::MissingHeader)
        ));
    }
}
