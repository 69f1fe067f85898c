use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::game::IterationTrace;

pub const TRACE_HEADER: &str = "iter,user,bs,p_w,r_bps,sinr,utility,metric";

/// Writes the CSV trace: one row per user per iteration, ordered by
/// iteration then user id, floats with 17 significant digits (exact round trip).
pub fn write_trace<W: Write>(trace: &IterationTrace, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for record in &trace.records {
        let mut users: Vec<_> = record.users.iter().collect();
        users.sort_by_key(|u| u.user);
        for u in users {
            writeln!(
                out,
                "{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                record.iteration, u.user, u.station, u.strategy.power, u.strategy.rate, u.sinr, u.utility, record.metric
            )?;
        }
    }
    out.flush()
}

pub fn emit_trace(trace: &IterationTrace, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    write_trace(trace, BufWriter::new(file))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub user: usize,
    pub station: usize,
    pub power: f64,
    pub rate: f64,
    pub sinr: f64,
    pub utility: f64,
    pub metric: f64,
}

/// Reads a CSV trace written by [`write_trace`].
pub fn read_trace(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == TRACE_HEADER => {}
        _ => return Err(Error::Parse { line: 1, message: "missing trace header".into() }),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let bad = |m: &str| Error::Parse { line: i + 1, message: m.to_string() };
            let cols: Vec<&str> = l.split(',').collect();
            if cols.len() != 8 {
                return Err(bad("expected 8 columns"));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
            Ok(TraceRow {
                iteration: int(cols[0])?,
                user: int(cols[1])?,
                station: int(cols[2])?,
                power: num(cols[3])?,
                rate: num(cols[4])?,
                sinr: num(cols[5])?,
                utility: num(cols[6])?,
                metric: num(cols[7])?,
            })
        })
        .collect()
}
