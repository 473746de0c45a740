//! Persistence: the versioned network JSON format, trajectory CSV logs, SVG
//! snapshots, and atomic file writes.
//!
//! All floating-point output uses 17 significant digits so every file
//! round-trips bit-exactly through its own reader.

use crate::flow::{LogRow, TrajectoryLog};
use crate::geom::Vec2;
use crate::network::{build_network_with_tol, DiscreteCurve, Network};
use crate::topology::{ModelError, NetworkTopology, VertexKind};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        IoError::Parse(e.to_string())
    }
}

/// Writes bytes to `path` atomically: a temporary sibling file is renamed
/// into place once fully written.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| IoError::Io(e.error))?;
    Ok(())
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.17e}")
}

// ---------------------------------------------------------------------------
// Network file format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct VertexRecord {
    id: usize,
    kind: VertexKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    position: Option<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    id: usize,
    v0: usize,
    v1: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<Vec<[f64; 2]>>,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    version: u32,
    vertices: Vec<VertexRecord>,
    edges: Vec<EdgeRecord>,
}

/// Serializes a network with full sample data.
pub fn network_to_json(network: &Network) -> String {
    let topo = network.topology();
    let vertices = (0..topo.vertex_count())
        .map(|v| VertexRecord {
            id: v,
            kind: topo.vertex_kind(v),
            position: network.endpoint_position(v).map(|p| [p.x, p.y]),
        })
        .collect();
    let edges = (0..topo.edge_count())
        .map(|e| {
            let (v0, v1) = topo.edge(e);
            EdgeRecord {
                id: e,
                v0,
                v1,
                samples: Some(
                    network
                        .curve(e)
                        .samples()
                        .iter()
                        .map(|p| [p.x, p.y])
                        .collect(),
                ),
            }
        })
        .collect();
    let file = NetworkFile { version: 1, vertices, edges };
    serde_json::to_string_pretty(&file).expect("serializable")
}

/// Parses and validates a network file (all invariants checked).
pub fn network_from_json(text: &str) -> Result<Network, IoError> {
    network_from_json_with_tol(text, crate::network::DEFAULT_CONCURRENCY_TOL)
}

pub fn network_from_json_with_tol(text: &str, tol: f64) -> Result<Network, IoError> {
    let file: NetworkFile = serde_json::from_str(text)?;
    if file.version != 1 {
        return Err(IoError::Parse(format!("unsupported version {}", file.version)));
    }
    let (topology, id_order) = topology_from_records(&file.vertices, &file.edges)?;
    let mut curves = Vec::with_capacity(file.edges.len());
    for &ei in &id_order {
        let rec = &file.edges[ei];
        let samples = rec.samples.as_ref().ok_or_else(|| {
            IoError::Parse(format!("edge {} carries no samples", rec.id))
        })?;
        let pts = samples.iter().map(|&[x, y]| Vec2::new(x, y)).collect();
        curves.push(DiscreteCurve::new(pts)?);
    }
    let network = build_network_with_tol(topology, curves, tol)?;
    // Endpoint vertices must carry a position matching their sample.
    for rec in &file.vertices {
        match (rec.kind, rec.position) {
            (VertexKind::Endpoint, None) => {
                return Err(IoError::Parse(format!(
                    "endpoint vertex {} has no position",
                    rec.id
                )))
            }
            (VertexKind::Junction, Some(_)) => {
                return Err(IoError::Parse(format!(
                    "junction vertex {} must not carry a position",
                    rec.id
                )))
            }
            (VertexKind::Endpoint, Some([x, y])) => {
                let stored = Vec2::new(x, y);
                let sampled = network
                    .endpoint_position(rec.id)
                    .expect("validated endpoint");
                if (stored - sampled).norm() > 1e-9 {
                    return Err(IoError::Parse(format!(
                        "endpoint vertex {} position disagrees with its boundary sample",
                        rec.id
                    )));
                }
            }
            (VertexKind::Junction, None) => {}
        }
    }
    Ok(network)
}

/// Topology-only file: same schema without samples or positions.
pub fn topology_to_json(topology: &NetworkTopology) -> String {
    let vertices = (0..topology.vertex_count())
        .map(|v| VertexRecord { id: v, kind: topology.vertex_kind(v), position: None })
        .collect();
    let edges = (0..topology.edge_count())
        .map(|e| {
            let (v0, v1) = topology.edge(e);
            EdgeRecord { id: e, v0, v1, samples: None }
        })
        .collect();
    serde_json::to_string_pretty(&NetworkFile { version: 1, vertices, edges })
        .expect("serializable")
}

pub fn topology_from_json(text: &str) -> Result<NetworkTopology, IoError> {
    let file: NetworkFile = serde_json::from_str(text)?;
    if file.version != 1 {
        return Err(IoError::Parse(format!("unsupported version {}", file.version)));
    }
    Ok(topology_from_records(&file.vertices, &file.edges)?.0)
}

fn topology_from_records(
    vertices: &[VertexRecord],
    edges: &[EdgeRecord],
) -> Result<(NetworkTopology, Vec<usize>), IoError> {
    let nv = vertices.len();
    let mut kinds = vec![None; nv];
    for rec in vertices {
        if rec.id >= nv {
            return Err(IoError::Parse(format!("vertex id {} out of range", rec.id)));
        }
        if kinds[rec.id].replace(rec.kind).is_some() {
            return Err(IoError::Parse(format!("duplicate vertex id {}", rec.id)));
        }
    }
    let kinds: Vec<VertexKind> = kinds
        .into_iter()
        .map(|k| k.ok_or_else(|| IoError::Parse("missing vertex id".into())))
        .collect::<Result<_, _>>()?;
    let ne = edges.len();
    let mut pairs = vec![None; ne];
    let mut order = vec![0usize; ne];
    for (pos, rec) in edges.iter().enumerate() {
        if rec.id >= ne {
            return Err(IoError::Parse(format!("edge id {} out of range", rec.id)));
        }
        if pairs[rec.id].replace((rec.v0, rec.v1)).is_some() {
            return Err(IoError::Parse(format!("duplicate edge id {}", rec.id)));
        }
        order[rec.id] = pos;
    }
    let pairs: Vec<(usize, usize)> = pairs
        .into_iter()
        .map(|p| p.ok_or_else(|| IoError::Parse("missing edge id".into())))
        .collect::<Result<_, _>>()?;
    Ok((NetworkTopology::new(kinds, pairs)?, order))
}

/// Endpoint positions file: fixed positions per endpoint vertex and optional
/// junction initializers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PositionsFile {
    pub version: u32,
    pub positions: Vec<PositionRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub init: Vec<PositionRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PositionRecord {
    pub id: usize,
    pub position: [f64; 2],
}

pub fn positions_from_json(text: &str) -> Result<PositionsFile, IoError> {
    let file: PositionsFile = serde_json::from_str(text)?;
    if file.version != 1 {
        return Err(IoError::Parse(format!("unsupported version {}", file.version)));
    }
    Ok(file)
}

// ---------------------------------------------------------------------------
// Trajectory CSV
// ---------------------------------------------------------------------------

/// CSV serialization with leading comment lines carrying the format version
/// and config hash; every float uses 17 significant digits.
pub fn log_to_csv(log: &TrajectoryLog) -> String {
    let mut out = String::new();
    out.push_str(&format!("# format_version={}\n", log.format_version));
    out.push_str(&format!("# config={}\n", log.config_hash));
    out.push_str(&format!(
        "# edges={} junctions={} loops={}\n",
        log.edge_count, log.junction_count, log.loop_count
    ));
    out.push_str("t,L_total");
    for e in 0..log.edge_count {
        out.push_str(&format!(",L_{e}"));
    }
    out.push_str(",int_k2,sup_k,max_angle_residual");
    for j in 0..log.junction_count {
        for s in 0..3 {
            out.push_str(&format!(",lambda_{j}_{s}"));
        }
    }
    for l in 0..log.loop_count {
        out.push_str(&format!(",loop_area_{l}"));
    }
    out.push('\n');
    for row in &log.rows {
        let mut cols = vec![fmt_f64(row.t), fmt_f64(row.total_length)];
        cols.extend(row.edge_lengths.iter().map(|&v| fmt_f64(v)));
        cols.push(fmt_f64(row.int_k2));
        cols.push(fmt_f64(row.sup_k));
        cols.push(fmt_f64(row.max_angle_residual));
        cols.extend(row.lambdas.iter().map(|&v| fmt_f64(v)));
        cols.extend(row.loop_areas.iter().map(|&v| fmt_f64(v)));
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}

pub fn log_from_csv(text: &str) -> Result<TrajectoryLog, IoError> {
    let mut format_version = 0;
    let mut config_hash = String::new();
    let mut edge_count = 0;
    let mut junction_count = 0;
    let mut loop_count = 0;
    let mut rows = Vec::new();
    let mut saw_header = false;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("format_version=") {
                format_version = v
                    .parse()
                    .map_err(|_| IoError::Parse("bad format_version".into()))?;
            } else if let Some(v) = rest.strip_prefix("config=") {
                config_hash = v.to_string();
            } else if rest.starts_with("edges=") {
                for part in rest.split_whitespace() {
                    let (key, val) = part
                        .split_once('=')
                        .ok_or_else(|| IoError::Parse("bad header".into()))?;
                    let val: usize =
                        val.parse().map_err(|_| IoError::Parse("bad header count".into()))?;
                    match key {
                        "edges" => edge_count = val,
                        "junctions" => junction_count = val,
                        "loops" => loop_count = val,
                        _ => return Err(IoError::Parse(format!("unknown header key {key}"))),
                    }
                }
            }
            continue;
        }
        if !saw_header {
            saw_header = true; // column header line
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.parse().map_err(|_| IoError::Parse(format!("bad float: {s}"))))
            .collect::<Result<_, _>>()?;
        let expected = 2 + edge_count + 3 + 3 * junction_count + loop_count;
        if vals.len() != expected {
            return Err(IoError::Parse(format!(
                "row has {} columns, expected {expected}",
                vals.len()
            )));
        }
        let mut it = vals.into_iter();
        let t = it.next().unwrap();
        let total_length = it.next().unwrap();
        let edge_lengths: Vec<f64> = (0..edge_count).map(|_| it.next().unwrap()).collect();
        let int_k2 = it.next().unwrap();
        let sup_k = it.next().unwrap();
        let max_angle_residual = it.next().unwrap();
        let lambdas: Vec<f64> = (0..3 * junction_count).map(|_| it.next().unwrap()).collect();
        let loop_areas: Vec<f64> = (0..loop_count).map(|_| it.next().unwrap()).collect();
        rows.push(LogRow {
            t,
            total_length,
            edge_lengths,
            int_k2,
            sup_k,
            max_angle_residual,
            lambdas,
            loop_areas,
        });
    }
    // Strictly increasing time.
    for w in rows.windows(2) {
        if w[1].t <= w[0].t {
            return Err(IoError::Parse(format!(
                "log times not strictly increasing at t = {}",
                w[1].t
            )));
        }
    }
    Ok(TrajectoryLog {
        format_version,
        config_hash,
        edge_count,
        junction_count,
        loop_count,
        rows,
    })
}

// ---------------------------------------------------------------------------
// SVG snapshots
// ---------------------------------------------------------------------------

/// Deterministic SVG drawing: a fixed viewBox from the endpoint bounding box
/// plus a 10% margin, one path per edge, one marker per junction.
pub fn network_to_svg(network: &Network) -> String {
    let topo = network.topology();
    let endpoints: Vec<Vec2> = topo
        .endpoints()
        .iter()
        .map(|ep| network.boundary_sample(ep.edge, ep.end))
        .collect();
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &endpoints {
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
    }
    let w = (max_x - min_x).max(1e-9);
    let h = (max_y - min_y).max(1e-9);
    let margin = 0.1 * w.max(h);
    let vb = format!(
        "{} {} {} {}",
        min_x - margin,
        -(max_y + margin),
        w + 2.0 * margin,
        h + 2.0 * margin
    );
    let stroke_width = 0.004 * w.max(h);
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{vb}\">\n"
    ));
    for e in 0..topo.edge_count() {
        let samples = network.curve(e).samples();
        let mut d = String::new();
        for (i, p) in samples.iter().enumerate() {
            // Flip y so the picture matches plane coordinates.
            d.push_str(if i == 0 { "M " } else { " L " });
            d.push_str(&format!("{} {}", p.x, -p.y));
        }
        out.push_str(&format!(
            "  <path d=\"{d}\" fill=\"none\" stroke=\"black\" stroke-width=\"{stroke_width}\"/>\n"
        ));
    }
    for junction in topo.junctions() {
        let ee = junction.ends[0];
        let p = network.boundary_sample(ee.edge, ee.end);
        out.push_str(&format!(
            "  <circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"black\"/>\n",
            p.x,
            -p.y,
            1.5 * stroke_width
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Short stable hash of a canonical config string, recorded in every log.
pub fn config_hash(canonical: &str) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(canonical.as_bytes());
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    hex
}
