//! Linear junction relations between normal and tangential graph components.
//!
//! At a junction where edges `i < j < k` meet with orientation bits
//! `e_i, e_j, e_k`, the tangential boundary values of a graph over a regular
//! network are forced linearly by the normal ones:
//!
//! ```text
//! L_i(a, b) = -a/sqrt3 - (2/sqrt3) (-1)^{e_i+e_j} b
//! L_j(a, b) =  (2/sqrt3) (-1)^{e_i+e_j} a + b/sqrt3
//! L_k(a, b) = -(1/sqrt3) (-1)^{e_i+e_k} a + (1/sqrt3) (-1)^{e_j+e_k} b
//! ```
//!
//! with `(a, b)` the normal values of the two lowest-indexed edges. The
//! associated frame coefficients are `alpha = -(1/2)(-1)^{e_i+e_j}` and
//! `beta = -(sqrt3/2)(-1)^{e_i+e_j}`.

use crate::topology::NetworkTopology;

fn sign(e: u8, f: u8) -> f64 {
    if (e + f) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Junction coefficient table for one junction, indices ordered `i < j < k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JunctionMaps {
    pub edges: [usize; 3],
    pub ends: [u8; 3],
    /// Winding of the inner tangents in increasing index order: +1 ccw.
    pub chirality: f64,
    /// Coefficients of `L_ell` against `(a, b)`, rows ordered like `edges`.
    pub l_coeffs: [[f64; 2]; 3],
}

impl JunctionMaps {
    /// `<tau_i, tau_j>` between the ordered pair `(i, j)` of lowest indices.
    pub fn alpha(&self) -> f64 {
        -0.5 * sign(self.ends[0], self.ends[1])
    }

    /// `<tau_i, nu_j>` between the ordered pair `(i, j)` of lowest indices.
    pub fn beta(&self) -> f64 {
        -0.5 * 3.0_f64.sqrt() * sign(self.ends[0], self.ends[1]) * self.chirality
    }

    /// Frame coefficient `<tau_a, nu_b>` for arbitrary slots `a, b` in 0..3.
    pub fn beta_pair(&self, a: usize, b: usize) -> f64 {
        if a == b {
            0.0
        } else {
            let s = -0.5 * 3.0_f64.sqrt() * sign(self.ends[a], self.ends[b]) * self.chirality;
            // beta is antisymmetric in the slot order.
            if a < b {
                s
            } else {
                -s
            }
        }
    }

    /// Applies the linear map of slot `slot` (0 for the minimal index, 1 for
    /// the intermediate, 2 for the maximal) to the normal boundary values
    /// `(a, b)` of the two lowest-indexed edges.
    pub fn apply(&self, slot: usize, a: f64, b: f64) -> f64 {
        self.l_coeffs[slot][0] * a + self.l_coeffs[slot][1] * b
    }
}

/// Builds the coefficient table of junction `m` (index into
/// `topology.junctions()`) under the convention that the inner tangents of
/// the edges, taken in increasing index order, wind counterclockwise.
pub fn junction_coeffs(topology: &NetworkTopology, m: usize) -> JunctionMaps {
    junction_coeffs_with_chirality(topology, m, 1.0)
}

/// Closed-form coefficient table for either winding of the junction star:
/// `chirality = +1` when the inner tangents in increasing edge-index order
/// run counterclockwise, `-1` when they run clockwise. Mirroring a junction
/// negates every tangential coefficient while the normal relations are
/// unchanged.
pub fn junction_coeffs_with_chirality(
    topology: &NetworkTopology,
    m: usize,
    chirality: f64,
) -> JunctionMaps {
    let inc = &topology.junctions()[m];
    // Incidence is already sorted by edge index.
    let edges = inc.ends.map(|ee| ee.edge);
    let ends = inc.ends.map(|ee| ee.end);
    let s3 = 3.0_f64.sqrt();
    let sij = sign(ends[0], ends[1]);
    let sik = sign(ends[0], ends[2]);
    let sjk = sign(ends[1], ends[2]);
    let c = chirality;
    let l_coeffs = [
        [-c / s3, -2.0 * c / s3 * sij],
        [2.0 * c / s3 * sij, c / s3],
        [-c / s3 * sik, c / s3 * sjk],
    ];
    JunctionMaps { edges, ends, chirality: c, l_coeffs }
}

/// Winding of the inner tangents of junction `m` in a concrete network:
/// `+1` counterclockwise in increasing edge-index order, `-1` clockwise.
pub fn junction_chirality(network: &crate::network::Network, m: usize) -> f64 {
    let inc = &network.topology().junctions()[m];
    let w: Vec<crate::geom::Vec2> = inc
        .ends
        .iter()
        .map(|ee| crate::network::inner_tangent(network.curve(ee.edge), ee.end))
        .collect();
    let cross = w[0].x * w[1].y - w[0].y * w[1].x;
    if cross >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Coefficient table matching the actual winding of junction `m` in `base`.
pub fn junction_coeffs_for(base: &crate::network::Network, m: usize) -> JunctionMaps {
    junction_coeffs_with_chirality(base.topology(), m, junction_chirality(base, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{NetworkTopology, VertexKind};
    use approx::assert_abs_diff_eq;

    fn junction_with_ends(e0: u8, e1: u8, e2: u8) -> JunctionMaps {
        // Orient each edge so the junction (vertex 3) sits at the requested end.
        let edges = [e0, e1, e2]
            .iter()
            .enumerate()
            .map(|(slot, &e)| if e == 0 { (3, slot) } else { (slot, 3) })
            .collect();
        let topo = NetworkTopology::new(
            vec![
                VertexKind::Endpoint,
                VertexKind::Endpoint,
                VertexKind::Endpoint,
                VertexKind::Junction,
            ],
            edges,
        )
        .unwrap();
        junction_coeffs(&topo, 0)
    }

    #[test]
    fn alpha_beta_for_equal_bits() {
        let jm = junction_with_ends(0, 0, 0);
        assert_abs_diff_eq!(jm.alpha(), -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(jm.beta(), -0.5 * 3.0_f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn alpha_beta_sign_rule() {
        let jm = junction_with_ends(0, 1, 0);
        assert_abs_diff_eq!(jm.alpha(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(jm.beta(), 0.5 * 3.0_f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn beta_antisymmetric() {
        for bits in 0..8u8 {
            let jm = junction_with_ends(bits & 1, (bits >> 1) & 1, (bits >> 2) & 1);
            for a in 0..3 {
                for b in 0..3 {
                    assert_abs_diff_eq!(
                        jm.beta_pair(a, b),
                        -jm.beta_pair(b, a),
                        epsilon = 1e-15
                    );
                }
            }
        }
    }

    #[test]
    fn forced_third_value_satisfies_signed_sum() {
        // Setting tangential values via the maps and choosing the third normal
        // value from the constraint keeps the signed normal sum zero.
        for bits in 0..8u8 {
            let (e0, e1, e2) = (bits & 1, (bits >> 1) & 1, (bits >> 2) & 1);
            let jm = junction_with_ends(e0, e1, e2);
            let s = |e: u8| if e == 0 { 1.0 } else { -1.0 };
            for &(a, b) in &[(1.0, 0.0), (0.0, 1.0), (0.7, -2.3)] {
                let c = -(s(e0) * a + s(e1) * b) / s(e2);
                assert_abs_diff_eq!(s(e0) * a + s(e1) * b + s(e2) * c, 0.0, epsilon = 1e-14);
                // The maps stay finite and linear; spot-check linearity.
                let l0 = jm.apply(0, a, b);
                let l0_scaled = jm.apply(0, 2.0 * a, 2.0 * b);
                assert_abs_diff_eq!(l0_scaled, 2.0 * l0, epsilon = 1e-14);
            }
        }
    }
}
