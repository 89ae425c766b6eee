//! CSV and JSON-lines persistence.
//!
//! Point files have the header `x,y[,t][,g1..gp][,colour]`. Reals are written
//! with 17 significant digits so every value reads back bit for bit. Lines
//! starting with `#` are comments; writers use them for provenance headers.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::mtsgcp::{PcfTable, TraceRecord};
use crate::pattern::{Domain, MarkedPattern, Marks, Point, PointPattern};

/// Observed points split by type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub dom: Domain,
    pub names: Vec<String>,
    pub patterns: Vec<PointPattern>,
}

impl Dataset {
    pub fn counts(&self) -> Vec<usize> {
        self.patterns.iter().map(PointPattern::len).collect()
    }

    pub fn n_types(&self) -> usize {
        self.patterns.len()
    }
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn csv_line(e: &csv::Error) -> usize {
    e.position().map_or(0, |p| p.line() as usize)
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source)
}

fn parse_real(field: &str, line: usize, column: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_error(line, format!("column {column}: cannot parse {field:?} as a number")))?;
    if !v.is_finite() {
        return Err(parse_error(line, format!("column {column}: value must be finite")));
    }
    Ok(v)
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.eq_ignore_ascii_case(name))
}

/// Reads a dataset. Types come from `type_column` (in order of first
/// appearance); without it every row belongs to one type. With `rescale`
/// the bounding box of the data is mapped affinely onto `dom`; otherwise a
/// point outside `dom` is an error.
pub fn read_dataset<R: Read>(source: R, dom: &Domain, type_column: Option<&str>, rescale: bool) -> Result<Dataset> {
    let mut rdr = reader(source);
    let headers = rdr.headers().map_err(|e| parse_error(csv_line(&e), e.to_string()))?.clone();
    let xi = column(&headers, "x").ok_or_else(|| parse_error(1, "header needs an x column"))?;
    let yi = column(&headers, "y");
    if dom.dim() == 2 && yi.is_none() {
        return Err(parse_error(1, "header needs a y column"));
    }
    let ti = match type_column {
        Some(name) => Some(column(&headers, name).ok_or_else(|| parse_error(1, format!("no column named {name:?}")))?),
        None => None,
    };

    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<(Point, usize, usize)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| parse_error(csv_line(&e), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let get = |i: usize, name: &str| {
            record
                .get(i)
                .ok_or_else(|| parse_error(line, format!("missing column {name}")))
        };
        let x = parse_real(get(xi, "x")?, line, "x")?;
        let y = match yi {
            Some(i) if dom.dim() == 2 => parse_real(get(i, "y")?, line, "y")?,
            _ => 0.0,
        };
        let label = match ti {
            Some(i) => get(i, "type")?.to_string(),
            None => "points".to_string(),
        };
        let k = *index.entry(label.clone()).or_insert_with(|| {
            names.push(label);
            names.len() - 1
        });
        rows.push(([x, y], k, line));
    }
    if ti.is_none() && names.is_empty() {
        names.push("points".to_string());
    }

    if rescale && !rows.is_empty() {
        for axis in 0..dom.dim() {
            let lo = rows.iter().map(|r| r.0[axis]).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| r.0[axis]).fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            for r in &mut rows {
                let u = if span > 0.0 { (r.0[axis] - lo) / span } else { 0.5 };
                r.0[axis] = (dom.lower()[axis] + u * dom.side(axis)).clamp(dom.lower()[axis], dom.upper()[axis]);
            }
        }
    }

    let mut per_type: Vec<Vec<Point>> = vec![Vec::new(); names.len()];
    for (q, k, line) in rows {
        if !dom.contains(&q) {
            return Err(parse_error(line, format!("point {q:?} lies outside the domain; use rescaling to map the data")));
        }
        per_type[k].push(q);
    }
    let patterns = per_type
        .into_iter()
        .map(|pts| PointPattern::new(dom, pts))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { dom: dom.clone(), names, patterns })
}

pub fn load_csv(path: &Path, dom: &Domain, type_column: Option<&str>, rescale: bool) -> Result<Dataset> {
    read_dataset(std::fs::File::open(path)?, dom, type_column, rescale)
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_comments<W: Write>(out: &mut W, header: &[String]) -> Result<()> {
    for line in header {
        for part in line.lines() {
            writeln!(out, "# {part}")?;
        }
    }
    Ok(())
}

/// Writes `pattern` with its times, marks and colours when present.
pub fn write_pattern_csv<W: Write>(out: &mut W, pattern: &MarkedPattern, header: &[String]) -> Result<()> {
    write_comments(out, header)?;
    let dim = pattern.mark_dim();
    let mut cols = vec!["x".to_string(), "y".to_string()];
    if pattern.times().is_some() {
        cols.push("t".into());
    }
    if let Some(p) = dim {
        cols.extend((1..=p).map(|k| format!("g{k}")));
    }
    if pattern.colours().is_some() {
        cols.push("colour".into());
    }
    writeln!(out, "{}", cols.join(","))?;
    for i in 0..pattern.len() {
        let q = pattern.locations()[i];
        let mut fields = vec![real(q[0]), real(q[1])];
        if let Some(t) = pattern.times() {
            fields.push(real(t[i]));
        }
        if let Some(m) = pattern.marks() {
            fields.extend(m.row(i).iter().map(|v| real(*v)));
        }
        if let Some(c) = pattern.colours() {
            fields.push(c[i].to_string());
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Reads a file written by [`write_pattern_csv`].
pub fn read_pattern_csv<R: Read>(source: R, dom: &Domain) -> Result<MarkedPattern> {
    let mut rdr = reader(source);
    let headers = rdr.headers().map_err(|e| parse_error(csv_line(&e), e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.len() < 2 || names[0] != "x" || names[1] != "y" {
        return Err(parse_error(1, "header must start with x,y"));
    }
    let has_t = names.contains(&"t");
    let has_colour = names.last() == Some(&"colour");
    let marks: Vec<usize> = (0..names.len())
        .filter(|&i| names[i].starts_with('g') && names[i][1..].parse::<usize>().is_ok())
        .collect();
    let mut locations = Vec::new();
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut colours = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| parse_error(csv_line(&e), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != names.len() {
            return Err(parse_error(line, format!("expected {} fields, found {}", names.len(), record.len())));
        }
        locations.push([parse_real(&record[0], line, "x")?, parse_real(&record[1], line, "y")?]);
        if has_t {
            times.push(parse_real(&record[2], line, "t")?);
        }
        for &i in &marks {
            values.push(parse_real(&record[i], line, names[i])?);
        }
        if has_colour {
            let c = &record[names.len() - 1];
            colours.push(c.parse().map_err(|_| parse_error(line, format!("colour {c:?} is not a label")))?);
        }
    }
    MarkedPattern::new(
        dom,
        locations,
        has_t.then_some(times),
        if marks.is_empty() { None } else { Some(Marks::new(marks.len(), values)?) },
        has_colour.then_some(colours),
    )
}

/// Grid values as a CSV matrix: one row per y cell (lowest first), one
/// column per x cell.
pub fn write_grid_csv<W: Write>(out: &mut W, values: &[f64], res: usize, header: &[String]) -> Result<()> {
    if res == 0 || !values.len().is_multiple_of(res) {
        return Err(param("grid values do not form rows of the given resolution"));
    }
    write_comments(out, header)?;
    for row in values.chunks(res) {
        let fields: Vec<String> = row.iter().map(|v| real(*v)).collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn read_grid_csv<R: Read>(source: R) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        rows.push(
            line.split(',')
                .map(|f| parse_real(f.trim(), i + 1, "grid"))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(rows)
}

/// PCF table as CSV with columns `r,pair,mean,lo95,hi95,mc_se`.
pub fn write_pcf_csv<W: Write>(out: &mut W, table: &PcfTable, header: &[String]) -> Result<()> {
    write_comments(out, header)?;
    writeln!(out, "r,pair,mean,lo95,hi95,mc_se")?;
    for pt in &table.points {
        writeln!(
            out,
            "{},{}-{},{},{},{},{}",
            real(pt.r),
            pt.k,
            pt.l,
            real(pt.mean),
            real(pt.lo95),
            real(pt.hi95),
            real(pt.mc_se)
        )?;
    }
    Ok(())
}

/// First line of a trace file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub provenance: serde_json::Value,
}

/// One JSON object per line: an optional header line with a `provenance`
/// key, then one record per kept iteration.
pub fn write_trace_jsonl<W: Write>(out: &mut W, provenance: Option<&serde_json::Value>, records: &[TraceRecord]) -> Result<()> {
    if let Some(p) = provenance {
        serde_json::to_writer(&mut *out, &TraceHeader { provenance: p.clone() })?;
        writeln!(out)?;
    }
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_trace_jsonl<R: Read>(source: R) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 && serde_json::from_str::<TraceHeader>(&line).is_ok() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| parse_error(i + 1, e.to_string()))?);
    }
    Ok(out)
}
