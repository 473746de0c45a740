//! Abstract regular graphs: vertices of kind endpoint or junction, edges with
//! two distinct ends, and the derived incidence tables used everywhere else.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("topology error: {0}")]
    Topology(String),
    #[error("junction {junction}: boundary samples disagree by {gap:.3e} (tolerance {tol:.1e})")]
    ConcurrencyViolation { junction: usize, gap: f64, tol: f64 },
    #[error("edge {edge}: degenerate segment between samples {at} and {next}", next = at + 1)]
    DegenerateSegment { edge: usize, at: usize },
    #[error("not a closed walk: {0}")]
    NotAClosedWalk(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Endpoint,
    Junction,
}

/// One edge-end: which edge, and whether it is the end at parameter 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeEnd {
    pub edge: usize,
    /// 0 if the vertex sits at parameter 0 of the edge, 1 otherwise.
    pub end: u8,
}

/// A junction together with its three incident edge-ends, ordered by edge
/// index. The `end` bits are the orientation bits entering every junction
/// formula in the crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JunctionIncidence {
    pub vertex: usize,
    pub ends: [EdgeEnd; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EndpointIncidence {
    pub vertex: usize,
    pub edge: usize,
    pub end: u8,
}

/// Connected graph in which every interior vertex has exactly three incident
/// edge-ends and every boundary vertex exactly one.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    kinds: Vec<VertexKind>,
    edges: Vec<(usize, usize)>,
    junctions: Vec<JunctionIncidence>,
    endpoints: Vec<EndpointIncidence>,
}

impl NetworkTopology {
    /// Builds and validates a topology from vertex kinds and edges given as
    /// `(vertex at parameter 0, vertex at parameter 1)` pairs.
    pub fn new(kinds: Vec<VertexKind>, edges: Vec<(usize, usize)>) -> Result<Self, ModelError> {
        let nv = kinds.len();
        if nv == 0 || edges.is_empty() {
            return Err(ModelError::Topology("empty graph".into()));
        }
        let mut incident: Vec<Vec<EdgeEnd>> = vec![Vec::new(); nv];
        for (e, &(v0, v1)) in edges.iter().enumerate() {
            if v0 >= nv || v1 >= nv {
                return Err(ModelError::Topology(format!(
                    "edge {e} references vertex out of range"
                )));
            }
            if v0 == v1 {
                return Err(ModelError::Topology(format!(
                    "edge {e} has both ends at vertex {v0}"
                )));
            }
            incident[v0].push(EdgeEnd { edge: e, end: 0 });
            incident[v1].push(EdgeEnd { edge: e, end: 1 });
        }

        let mut junctions = Vec::new();
        let mut endpoints = Vec::new();
        for (v, kind) in kinds.iter().enumerate() {
            let ends = &incident[v];
            match kind {
                VertexKind::Junction => {
                    if ends.len() != 3 {
                        return Err(ModelError::Topology(format!(
                            "junction {v} has {} incident edge-ends, expected 3",
                            ends.len()
                        )));
                    }
                    let mut arr = [ends[0], ends[1], ends[2]];
                    arr.sort_by_key(|e| (e.edge, e.end));
                    junctions.push(JunctionIncidence { vertex: v, ends: arr });
                }
                VertexKind::Endpoint => {
                    if ends.len() != 1 {
                        return Err(ModelError::Topology(format!(
                            "endpoint {v} has {} incident edge-ends, expected 1",
                            ends.len()
                        )));
                    }
                    endpoints.push(EndpointIncidence {
                        vertex: v,
                        edge: ends[0].edge,
                        end: ends[0].end,
                    });
                }
            }
        }

        // Connectivity by union-find over edges.
        let mut parent: Vec<usize> = (0..nv).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(v0, v1) in &edges {
            let a = find(&mut parent, v0);
            let b = find(&mut parent, v1);
            parent[a] = b;
        }
        let root = find(&mut parent, 0);
        for v in 1..nv {
            if find(&mut parent, v) != root {
                return Err(ModelError::Topology("graph is not connected".into()));
            }
        }

        Ok(Self { kinds, edges, junctions, endpoints })
    }

    pub fn vertex_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_kind(&self, v: usize) -> VertexKind {
        self.kinds[v]
    }

    /// `(v0, v1)` of an edge.
    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    pub fn junctions(&self) -> &[JunctionIncidence] {
        &self.junctions
    }

    pub fn endpoints(&self) -> &[EndpointIncidence] {
        &self.endpoints
    }

    /// Vertex sitting at `end` (0 or 1) of edge `e`.
    pub fn vertex_at(&self, e: usize, end: u8) -> usize {
        if end == 0 {
            self.edges[e].0
        } else {
            self.edges[e].1
        }
    }

    /// Independent cycles of the graph as closed walks `(edge, forward)`;
    /// empty for trees. One cycle per independent loop, each starting at its
    /// smallest junction vertex.
    pub fn cycle_basis(&self) -> Vec<Vec<(usize, bool)>> {
        let nv = self.vertex_count();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nv]; // (neighbor, edge)
        for (e, &(v0, v1)) in self.edges.iter().enumerate() {
            adj[v0].push((v1, e));
            adj[v1].push((v0, e));
        }
        // Spanning tree by BFS, then every non-tree edge closes one cycle.
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; nv];
        let mut seen = vec![false; nv];
        let mut order = Vec::new();
        let mut tree_edge = vec![false; self.edge_count()];
        seen[0] = true;
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &(w, e) in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some((v, e));
                    tree_edge[e] = true;
                    queue.push_back(w);
                }
            }
        }
        let path_to_root = |mut v: usize| -> Vec<(usize, usize)> {
            let mut path = Vec::new();
            while let Some((p, e)) = parent[v] {
                path.push((v, e));
                v = p;
            }
            path
        };
        let mut cycles = Vec::new();
        for (e, &(v0, v1)) in self.edges.iter().enumerate() {
            if tree_edge[e] {
                continue;
            }
            let mut a = path_to_root(v0);
            let mut b = path_to_root(v1);
            // Drop the common tail above the lowest common ancestor.
            while let (Some(&(_, ea)), Some(&(_, eb))) = (a.last(), b.last()) {
                if ea == eb {
                    a.pop();
                    b.pop();
                } else {
                    break;
                }
            }
            // Closed walk v1 -> lca (up), lca -> v0 (down), then e back to v1.
            let mut walk: Vec<(usize, bool)> = Vec::new();
            let mut cur = v1;
            for &(_, edge) in &b {
                walk.push((edge, self.edges[edge].0 == cur));
                cur = self.other_end(edge, cur);
            }
            for &(vtx, edge) in a.iter().rev() {
                walk.push((edge, self.edges[edge].0 == cur));
                cur = self.other_end(edge, cur);
                debug_assert_eq!(cur, vtx);
            }
            debug_assert_eq!(cur, v0);
            walk.push((e, self.edges[e].0 == v0));
            cycles.push(walk);
        }
        cycles
    }

    fn other_end(&self, e: usize, v: usize) -> usize {
        let (a, b) = self.edges[e];
        if v == a {
            b
        } else {
            a
        }
    }
}
