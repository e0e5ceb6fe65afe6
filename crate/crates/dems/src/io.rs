//! CSV serialization of datasets, trial estimates and benchmark records.
//!
//! Numbers are written in Rust's shortest round-trip decimal form, so a file
//! read back yields bit-identical values. Lines starting with `#` are
//! metadata or comments and are skipped by the readers.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::simlab::experiments::BenchmarkRecord;
use crate::simlab::{Dataset, DatasetMeta, TrialResult, Truth};

/// Writes a dataset as `t,y1..ym,v1..vr[,x1..xn,w1..wn,z1..zm]` rows.
pub fn write_dataset(dataset: &Dataset, out: &mut dyn Write) -> Result<()> {
    dataset.validate()?;
    let m = dataset.output_dim();
    let r = dataset.input_dim();
    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|i| format!("y{i}")));
    header.extend((1..=r).map(|i| format!("v{i}")));
    if let Some(truth) = &dataset.truth {
        let n = truth.x.ncols();
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("w{i}")));
        header.extend((1..=m).map(|i| format!("z{i}")));
    }
    writeln!(out, "{}", header.join(",")).map_err(io_err)?;

    for k in 0..dataset.len() {
        let mut fields = vec![fmt(dataset.times[k])];
        for j in 0..m {
            fields.push(fmt(dataset.y[(k, j)]));
        }
        for j in 0..r {
            fields.push(fmt(dataset.v[(k, j)]));
        }
        if let Some(truth) = &dataset.truth {
            for j in 0..truth.x.ncols() {
                fields.push(fmt(truth.x[(k, j)]));
            }
            for j in 0..truth.w.ncols() {
                fields.push(fmt(truth.w[(k, j)]));
            }
            for j in 0..truth.z.ncols() {
                fields.push(fmt(truth.z[(k, j)]));
            }
        }
        writeln!(out, "{}", fields.join(",")).map_err(io_err)?;
    }
    Ok(())
}

/// Reads a dataset written by [`write_dataset`]; truth columns are optional.
pub fn read_dataset(input: &mut dyn BufRead) -> Result<Dataset> {
    let mut lines = Vec::new();
    for line in input.lines() {
        let line = line.map_err(io_err)?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        lines.push(trimmed.to_string());
    }
    if lines.len() < 3 {
        return Err(Error::Parse("dataset needs a header and two rows".into()));
    }
    let header: Vec<&str> = lines[0].split(',').map(str::trim).collect();
    if header.first() != Some(&"t") {
        return Err(Error::Parse("first column must be t".into()));
    }
    let count_prefix = |p: char| {
        header
            .iter()
            .filter(|h| {
                h.starts_with(p) && h[1..].chars().all(|c| c.is_ascii_digit()) && h.len() > 1
            })
            .count()
    };
    let m = count_prefix('y');
    let r = count_prefix('v');
    let n = count_prefix('x');
    let zc = count_prefix('z');
    let wc = count_prefix('w');
    if m == 0 || r == 0 {
        return Err(Error::Parse("header must contain y and v columns".into()));
    }
    let has_truth = n > 0;
    if has_truth && (wc != n || zc != m) {
        return Err(Error::Parse(
            "truth columns must be complete: x1..xn, w1..wn, z1..zm".into(),
        ));
    }
    let expected = 1 + m + r + if has_truth { 2 * n + m } else { 0 };
    if header.len() != expected {
        return Err(Error::Parse(format!(
            "header has {} columns, expected {expected}",
            header.len()
        )));
    }

    let rows = lines.len() - 1;
    let mut times = Vec::with_capacity(rows);
    let mut y = DMatrix::zeros(rows, m);
    let mut v = DMatrix::zeros(rows, r);
    let mut x = DMatrix::zeros(rows, n);
    let mut w = DMatrix::zeros(rows, n);
    let mut z = DMatrix::zeros(rows, m);
    for (i, line) in lines[1..].iter().enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != expected {
            return Err(Error::Parse(format!(
                "row {} has {} fields, expected {expected}",
                i + 1,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number {s:?} in row {}", i + 1)))
        };
        let mut it = fields.iter();
        times.push(parse(it.next().unwrap())?);
        for j in 0..m {
            y[(i, j)] = parse(it.next().unwrap())?;
        }
        for j in 0..r {
            v[(i, j)] = parse(it.next().unwrap())?;
        }
        if has_truth {
            for j in 0..n {
                x[(i, j)] = parse(it.next().unwrap())?;
            }
            for j in 0..n {
                w[(i, j)] = parse(it.next().unwrap())?;
            }
            for j in 0..m {
                z[(i, j)] = parse(it.next().unwrap())?;
            }
        }
    }
    let dt = times[1] - times[0];
    let ds = Dataset {
        dt,
        times,
        y,
        v,
        truth: if has_truth {
            Some(Truth { x, w, z })
        } else {
            None
        },
        meta: DatasetMeta::unknown(),
    };
    ds.validate()?;
    Ok(ds)
}

/// Writes estimates as `t,xhat1..xhatn[,s_est][,F]` rows.
pub fn write_estimates(
    times: &[f64],
    result: &TrialResult,
    out: &mut dyn Write,
) -> Result<()> {
    let n = result.estimates.ncols();
    if times.len() != result.estimates.nrows() {
        return Err(Error::dims("time grid does not match estimates"));
    }
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("xhat{i}")));
    if result.s_traj.is_some() {
        header.push("s_est".to_string());
    }
    if result.f_traj.is_some() {
        header.push("F".to_string());
    }
    writeln!(out, "{}", header.join(",")).map_err(io_err)?;
    for k in 0..times.len() {
        let mut fields = vec![fmt(times[k])];
        for j in 0..n {
            fields.push(fmt(result.estimates[(k, j)]));
        }
        if let Some(s) = &result.s_traj {
            fields.push(fmt(s[k]));
        }
        if let Some(f) = &result.f_traj {
            fields.push(fmt(f[k]));
        }
        writeln!(out, "{}", fields.join(",")).map_err(io_err)?;
    }
    Ok(())
}

/// Header used by [`write_records`].
pub const RECORD_HEADER: &str = "scenario,method,s_real,seed,p,sse,runtime_s";

/// Writes benchmark records; `s_assumed` gains a column when any record
/// carries one. With `timing` off the runtime column is written as `0`
/// so reruns are byte-identical.
pub fn write_records(
    records: &[BenchmarkRecord],
    timing: bool,
    out: &mut dyn Write,
) -> Result<()> {
    let with_assumed = records.iter().any(|r| r.s_assumed.is_some());
    if with_assumed {
        writeln!(out, "scenario,method,s_real,s_assumed,seed,p,sse,runtime_s").map_err(io_err)?;
    } else {
        writeln!(out, "{RECORD_HEADER}").map_err(io_err)?;
    }
    for r in records {
        let runtime = if timing { r.runtime_s } else { 0.0 };
        let mut fields = vec![r.scenario.clone(), r.method.clone(), fmt(r.s_real)];
        if with_assumed {
            fields.push(r.s_assumed.map(fmt).unwrap_or_default());
        }
        fields.push(r.seed.to_string());
        fields.push(r.p.to_string());
        fields.push(fmt(r.sse));
        fields.push(fmt(runtime));
        writeln!(out, "{}", fields.join(",")).map_err(io_err)?;
        if let Some(err) = &r.error {
            writeln!(out, "# cell error: {}", err.replace('\n', " ")).map_err(io_err)?;
        }
    }
    Ok(())
}

/// Shortest round-trip decimal form.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}

fn io_err(e: std::io::Error) -> Error {
    Error::Parse(format!("io error: {e}"))
}
