//! CSV import and export of discretized maps and sections. One row per
//! node: `node, t, chart_id, x0, …` for maps, followed by `v0, …` for
//! sections.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geometry::{Point, TangentVec};

use super::{DiscretizedMap, PullbackSection, SourceGrid, Topology};

fn header(dim: usize, with_vectors: bool) -> Vec<String> {
    let mut h = vec!["node".to_string(), "t".into(), "chart_id".into()];
    h.extend((0..dim).map(|i| format!("x{i}")));
    if with_vectors {
        h.extend((0..dim).map(|i| format!("v{i}")));
    }
    h
}

fn row(k: usize, t: f64, p: &Point, extra: &[f64]) -> Vec<String> {
    let mut r = vec![k.to_string(), t.to_string(), p.chart.to_string()];
    r.extend(p.coords.iter().chain(extra).map(|c| c.to_string()));
    r
}

pub fn write_map_csv<W: Write>(f: &DiscretizedMap, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header(f.values.first().map_or(0, |p| p.coords.len()), false))?;
    for (k, (t, p)) in f.grid.nodes.iter().zip(&f.values).enumerate() {
        out.write_record(row(k, *t, p, &[]))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_section_csv<W: Write>(s: &PullbackSection, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header(s.vectors.first().map_or(0, |v| v.components.len()), true))?;
    for (k, (t, v)) in s.grid.nodes.iter().zip(&s.vectors).enumerate() {
        out.write_record(row(k, *t, &v.base, &v.components))?;
    }
    out.flush()?;
    Ok(())
}

/// Rows as `(t, chart, numbers)`, checked to be in node order.
fn read_rows<R: Read>(r: R) -> Result<Vec<(f64, usize, Vec<f64>)>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::ConfigParse(format!("row {k}: missing column {i}")));
        let parse_err = |e: std::num::ParseFloatError| Error::ConfigParse(format!("row {k}: {e}"));
        let node: usize = field(0)?.parse().map_err(|e| Error::ConfigParse(format!("row {k}: {e}")))?;
        if node != k {
            return Err(Error::ConfigParse(format!("row {k} has node index {node}")));
        }
        let t: f64 = field(1)?.parse().map_err(parse_err)?;
        let chart: usize = field(2)?.parse().map_err(|e| Error::ConfigParse(format!("row {k}: {e}")))?;
        let nums = (3..rec.len()).map(|i| field(i)?.parse::<f64>().map_err(parse_err)).collect::<Result<Vec<_>>>()?;
        rows.push((t, chart, nums));
    }
    Ok(rows)
}

fn grid_from(topology: Topology, ts: Vec<f64>) -> Result<SourceGrid> {
    if ts.len() < SourceGrid::MIN_NODES {
        return Err(Error::ConfigParse(format!("{} nodes, need at least {}", ts.len(), SourceGrid::MIN_NODES)));
    }
    Ok(SourceGrid { topology, nodes: ts })
}

pub fn read_map_csv<R: Read>(r: R, topology: Topology) -> Result<DiscretizedMap> {
    let rows = read_rows(r)?;
    let values = rows.iter().map(|(_, c, x)| Point::new(*c, x.clone())).collect();
    DiscretizedMap::new(grid_from(topology, rows.into_iter().map(|r| r.0).collect())?, values)
}

pub fn read_section_csv<R: Read>(r: R, topology: Topology) -> Result<PullbackSection> {
    let rows = read_rows(r)?;
    let vectors = rows
        .iter()
        .map(|(_, c, z)| {
            if z.len() % 2 != 0 {
                return Err(Error::ConfigParse(format!("odd number of coordinates ({})", z.len())));
            }
            let d = z.len() / 2;
            Ok(TangentVec::new(Point::new(*c, z[..d].to_vec()), z[d..].to_vec()))
        })
        .collect::<Result<Vec<_>>>()?;
    PullbackSection::new(grid_from(topology, rows.into_iter().map(|r| r.0).collect())?, vectors)
}
