//! Text formats: comma-separated tables with one unit-bearing header row,
//! optional `# key=value,…` metadata lines above it, and JSON for registries
//! and reports.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so any
//! file produced here reads back to the same bits and rewrites identically.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::loss::{AttenuationChain, LossGridPoint};
use crate::model::{ComplexTrace, Estimate, TraceMeta};
use crate::qubit::{DecayKind, DecayTrace};
use crate::synth::{InductanceTable, TimedTrace};

pub const TRACE_HEADER: &str = "freq_hz,re,im";
pub const DECAY_HEADER: &str = "timestamp_s,kind,delay_s,p_e,detuning_hint_hz";
pub const GRID_HEADER: &str = "nbar,temperature_k,q_int,q_int_sigma";
pub const ATTENUATION_HEADER: &str = "freq_hz,atten_db";
pub const INDUCTANCE_HEADER: &str = "l_s_h,l_tot_h";
pub const LAMBDA_POINTS_HEADER: &str = "thickness_m,l_k_sq_h,l_k_sq_sigma_h";
pub const TAN_DELTA_POINTS_HEADER: &str = "p_ms,q_tls0,q_tls0_sigma";

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(format!("json encode: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    from_json(&read_text(path)?).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse { line, msg: format!("{}: {msg}", path.display()) },
        other => other,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

/// A parsed table: metadata, then rows of raw fields with their line numbers.
struct Table<'a> {
    meta: BTreeMap<&'a str, &'a str>,
    rows: Vec<(usize, Vec<&'a str>)>,
}

fn parse_table<'a>(text: &'a str, header: &str) -> Result<Table<'a>> {
    let mut meta = BTreeMap::new();
    let mut rows = Vec::new();
    let mut seen_header = false;
    let width = header.split(',').count();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        if let Some(rest) = l.strip_prefix('#') {
            for kv in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Parse { line, msg: format!("metadata entry {kv:?} is not key=value") })?;
                meta.insert(k.trim(), v.trim());
            }
            continue;
        }
        if !seen_header {
            if l != header {
                return Err(Error::Parse { line, msg: format!("expected header {header:?}, found {l:?}") });
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(Error::Parse { line, msg: format!("expected {width} fields, found {}", fields.len()) });
        }
        rows.push((line, fields));
    }
    if !seen_header {
        return Err(Error::Parse { line: 1, msg: format!("missing header {header:?}") });
    }
    Ok(Table { meta, rows })
}

fn num(line: usize, field: &str, name: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::Parse { line, msg: format!("{name}: cannot parse {field:?} as a number") })
}

fn finite(line: usize, field: &str, name: &str) -> Result<f64> {
    let v = num(line, field, name)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Parse { line, msg: format!("{name} is not finite") })
    }
}

fn meta_num(meta: &BTreeMap<&str, &str>, key: &str) -> Result<Option<f64>> {
    meta.get(key)
        .map(|v| v.parse::<f64>().map_err(|_| Error::Parse { line: 1, msg: format!("metadata {key}: bad number {v:?}") }))
        .transpose()
}

fn increasing(prev: Option<f64>, v: f64, line: usize, what: &str) -> Result<()> {
    match prev {
        Some(p) if v <= p => Err(Error::Parse { line, msg: format!("{what} not strictly increasing ({v} after {p})") }),
        _ => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// S21 traces

pub fn parse_trace(text: &str) -> Result<ComplexTrace> {
    let t = parse_table(text, TRACE_HEADER)?;
    let meta = TraceMeta {
        power_dbm: meta_num(&t.meta, "power_dbm")?,
        temperature_k: meta_num(&t.meta, "temperature_k")?,
    };
    let mut freq = Vec::with_capacity(t.rows.len());
    let mut s21 = Vec::with_capacity(t.rows.len());
    for (line, f) in &t.rows {
        let fr = finite(*line, f[0], "freq_hz")?;
        increasing(freq.last().copied(), fr, *line, "frequency")?;
        freq.push(fr);
        s21.push(Complex64::new(finite(*line, f[1], "re")?, finite(*line, f[2], "im")?));
    }
    ComplexTrace::new(freq, s21, meta)
}

pub fn format_trace(trace: &ComplexTrace) -> String {
    let mut s = String::new();
    let mut meta = Vec::new();
    if let Some(p) = trace.meta.power_dbm {
        meta.push(format!("power_dbm={p}"));
    }
    if let Some(t) = trace.meta.temperature_k {
        meta.push(format!("temperature_k={t}"));
    }
    if !meta.is_empty() {
        let _ = writeln!(s, "# {}", meta.join(","));
    }
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for (f, z) in trace.freq.iter().zip(&trace.s21) {
        let _ = writeln!(s, "{f},{},{}", z.re, z.im);
    }
    s
}

pub fn load_trace(path: &Path) -> Result<ComplexTrace> {
    parse_trace(&read_text(path)?)
}

// ---------------------------------------------------------------------------
// Decay logs

pub fn parse_decay_log(text: &str) -> Result<Vec<TimedTrace>> {
    let t = parse_table(text, DECAY_HEADER)?;
    let mut out: Vec<TimedTrace> = Vec::new();
    struct Open {
        line: usize,
        ts: f64,
        kind: DecayKind,
        hint: Option<f64>,
        delays: Vec<f64>,
        p_e: Vec<f64>,
    }
    let close = |o: Open| -> Result<TimedTrace> {
        let trace = DecayTrace::new(o.delays, o.p_e, o.kind, o.hint)
            .map_err(|e| Error::Parse { line: o.line, msg: e.to_string() })?;
        Ok(TimedTrace { timestamp_s: o.ts, trace })
    };
    let mut cur: Option<Open> = None;
    for (line, f) in &t.rows {
        let ts = finite(*line, f[0], "timestamp_s")?;
        let kind: DecayKind = f[1].parse().map_err(|e: Error| Error::Parse { line: *line, msg: e.to_string() })?;
        let delay = finite(*line, f[2], "delay_s")?;
        let p = finite(*line, f[3], "p_e")?;
        let hint = if f[4].is_empty() { None } else { Some(finite(*line, f[4], "detuning_hint_hz")?) };
        let same = cur.as_ref().is_some_and(|o| o.ts == ts && o.kind == kind);
        if !same {
            if let Some(o) = cur.take() {
                if ts < o.ts {
                    return Err(Error::Parse { line: *line, msg: "timestamps go backwards".into() });
                }
                out.push(close(o)?);
            }
            cur = Some(Open { line: *line, ts, kind, hint, delays: Vec::new(), p_e: Vec::new() });
        }
        let o = cur.as_mut().expect("trace opened above");
        increasing(o.delays.last().copied(), delay, *line, "delay")?;
        o.delays.push(delay);
        o.p_e.push(p);
    }
    if let Some(o) = cur {
        out.push(close(o)?);
    }
    Ok(out)
}

pub fn format_decay_log(log: &[TimedTrace]) -> String {
    let mut s = String::from(DECAY_HEADER);
    s.push('\n');
    for t in log {
        let hint = t.trace.detuning_hint.map(|h| h.to_string()).unwrap_or_default();
        for (d, p) in t.trace.delays.iter().zip(&t.trace.p_e) {
            let _ = writeln!(s, "{},{},{d},{p},{hint}", t.timestamp_s, t.trace.kind.as_str());
        }
    }
    s
}

// ---------------------------------------------------------------------------
// Loss grids, attenuation tables, inductance sweeps and point lists

pub fn parse_loss_grid(text: &str) -> Result<Vec<LossGridPoint>> {
    let t = parse_table(text, GRID_HEADER)?;
    t.rows
        .iter()
        .map(|(line, f)| {
            Ok(LossGridPoint {
                nbar: finite(*line, f[0], "nbar")?,
                temperature_k: finite(*line, f[1], "temperature_k")?,
                q_int: Estimate::new(finite(*line, f[2], "q_int")?, finite(*line, f[3], "q_int_sigma")?),
                power_dbm: None,
            })
        })
        .collect()
}

pub fn format_loss_grid(grid: &[LossGridPoint]) -> String {
    let mut s = String::from(GRID_HEADER);
    s.push('\n');
    for p in grid {
        let _ = writeln!(s, "{},{},{},{}", p.nbar, p.temperature_k, p.q_int.value, p.q_int.sigma);
    }
    s
}

pub fn parse_attenuation(text: &str) -> Result<AttenuationChain> {
    let t = parse_table(text, ATTENUATION_HEADER)?;
    let mut table = Vec::with_capacity(t.rows.len());
    for (line, f) in &t.rows {
        table.push((finite(*line, f[0], "freq_hz")?, finite(*line, f[1], "atten_db")?));
    }
    AttenuationChain::new(table)
}

pub fn format_attenuation(table: &[(f64, f64)]) -> String {
    let mut s = String::from(ATTENUATION_HEADER);
    s.push('\n');
    for (f, a) in table {
        let _ = writeln!(s, "{f},{a}");
    }
    s
}

/// Inductance sweep; the geometric inductance sits in a `# l_g_h=` line.
pub fn parse_inductance_table(text: &str, resonator_id: &str) -> Result<InductanceTable> {
    let t = parse_table(text, INDUCTANCE_HEADER)?;
    let l_g = meta_num(&t.meta, "l_g_h")?.ok_or_else(|| Error::Parse { line: 1, msg: "missing l_g_h metadata".into() })?;
    let samples = t
        .rows
        .iter()
        .map(|(line, f)| Ok((finite(*line, f[0], "l_s_h")?, finite(*line, f[1], "l_tot_h")?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(InductanceTable { resonator_id: resonator_id.to_string(), l_g, samples })
}

pub fn format_inductance_table(table: &InductanceTable) -> String {
    let mut s = format!("# l_g_h={}\n{INDUCTANCE_HEADER}\n", table.l_g);
    for (a, b) in &table.samples {
        let _ = writeln!(s, "{a},{b}");
    }
    s
}

fn parse_estimate_points(text: &str, header: &str) -> Result<Vec<(f64, Estimate)>> {
    let t = parse_table(text, header)?;
    let names: Vec<&str> = header.split(',').collect();
    t.rows
        .iter()
        .map(|(line, f)| {
            Ok((
                finite(*line, f[0], names[0])?,
                Estimate::new(finite(*line, f[1], names[1])?, num(*line, f[2], names[2])?),
            ))
        })
        .collect()
}

fn format_estimate_points(points: &[(f64, Estimate)], header: &str) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for (x, e) in points {
        let _ = writeln!(s, "{x},{},{}", e.value, e.sigma);
    }
    s
}

/// (thickness, L_k/□ ± σ) rows.
pub fn parse_lambda_points(text: &str) -> Result<Vec<(f64, Estimate)>> {
    parse_estimate_points(text, LAMBDA_POINTS_HEADER)
}

pub fn format_lambda_points(points: &[(f64, Estimate)]) -> String {
    format_estimate_points(points, LAMBDA_POINTS_HEADER)
}

/// (p_MS, Q_TLS0 ± σ) rows.
pub fn parse_tan_delta_points(text: &str) -> Result<Vec<(f64, Estimate)>> {
    parse_estimate_points(text, TAN_DELTA_POINTS_HEADER)
}

pub fn format_tan_delta_points(points: &[(f64, Estimate)]) -> String {
    format_estimate_points(points, TAN_DELTA_POINTS_HEADER)
}
