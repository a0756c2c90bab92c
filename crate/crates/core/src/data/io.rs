//! Line-delimited dataset files.
//!
//! The first line is a header `{"schema":1,"nu2":…,"n":…,"m":…}`; every
//! following line is one trajectory with fields `id`, `nu2`, `N`, `ref_id`,
//! `states` (row-major, one row per time step) and optionally `controls`.
//! Floats are written with 17 significant digits so a round trip is exact.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use super::{Dataset, Trajectory};
use crate::linalg::Vector;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema: u32,
    nu2: usize,
    n: usize,
    m: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    nu2: usize,
    #[serde(rename = "N")]
    horizon: usize,
    ref_id: String,
    states: Vec<f64>,
    #[serde(default)]
    controls: Option<Vec<f64>>,
}

pub(crate) fn fmt_f64(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String");
}

fn push_array(out: &mut String, rows: &[Vector]) -> Result<()> {
    out.push('[');
    let mut first = true;
    for row in rows {
        for &v in row.iter() {
            if !v.is_finite() {
                return Err(Error::Numeric("cannot serialise a non-finite value".into()));
            }
            if !first {
                out.push(',');
            }
            first = false;
            fmt_f64(out, v);
        }
    }
    out.push(']');
    Ok(())
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialise")
}

pub fn write_dataset_to<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    writeln!(w, "{{\"schema\":{SCHEMA_VERSION},\"nu2\":{},\"n\":{},\"m\":{}}}", ds.nu2(), ds.n(), ds.m())?;
    let mut line = String::new();
    for tr in ds.trajectories() {
        line.clear();
        write!(
            line,
            "{{\"id\":{},\"nu2\":{},\"N\":{},\"ref_id\":{},\"states\":",
            json_string(tr.id()),
            tr.nu2(),
            tr.horizon(),
            json_string(tr.ref_id())
        )
        .expect("writing to a String");
        push_array(&mut line, tr.states())?;
        if let Some(u) = tr.controls() {
            line.push_str(",\"controls\":");
            push_array(&mut line, u)?;
        }
        line.push('}');
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let f = File::create(path)?;
    write_dataset_to(ds, BufWriter::new(f))
}

fn rows(flat: Vec<f64>, width: usize, line: usize, what: &str) -> Result<Vec<Vector>> {
    if width == 0 || flat.len() % width != 0 {
        return Err(Error::Parse { line, msg: format!("{what} length {} is not a multiple of {width}", flat.len()) });
    }
    Ok(flat.chunks(width).map(Vector::from_column_slice).collect())
}

pub fn read_dataset_from<R: BufRead>(r: R) -> Result<Dataset> {
    let mut lines = r.lines();
    let header_line = match lines.next() {
        Some(l) => l?,
        None => return Err(Error::Parse { line: 1, msg: "missing header".into() }),
    };
    let header: Header =
        serde_json::from_str(&header_line).map_err(|e| Error::Parse { line: 1, msg: format!("bad header: {e}") })?;
    if header.schema != SCHEMA_VERSION {
        return Err(Error::Schema(format!("file has schema {}, expected {SCHEMA_VERSION}", header.schema)));
    }
    let mut trajectories = Vec::new();
    for (k, l) in lines.enumerate() {
        let line_no = k + 2;
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&l).map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
        if rec.nu2 != header.nu2 {
            return Err(Error::Schema(format!("line {line_no}: nu2 {} differs from header {}", rec.nu2, header.nu2)));
        }
        let states = rows(rec.states, header.n, line_no, "states")?;
        let controls = rec.controls.map(|u| rows(u, header.m, line_no, "controls")).transpose()?;
        let tr = Trajectory::new(rec.id, rec.nu2, rec.horizon, states, controls, rec.ref_id)
            .map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
        trajectories.push(tr);
    }
    Dataset::new(header.nu2, header.n, header.m, trajectories)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let f = File::open(path)?;
    read_dataset_from(BufReader::new(f))
}
