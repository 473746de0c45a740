//! Independent oracles for the variation machinery: centered finite
//! differences of the discrete energy for the first and second variation, an
//! integration-by-parts evaluation with the explicit cutoff terms, and the
//! flat direction of the hexagonal web family.

use nalgebra::DVector;
use netflow::cutoff::{chi, chi_d, chi_d2};
use netflow::geom::Vec2;
use netflow::junction_maps::junction_coeffs_for;
use netflow::minimal::{descend_length, hexagon_web, to_network, DescentOptions};
use netflow::network::Network;
use netflow::topology::{NetworkTopology, VertexKind};
use netflow::variations::{
    assemble_q, energy, first_variation, second_variation_of, spectrum, VSpaceBasis,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn minimal_triod(m: usize) -> Network {
    let topo = NetworkTopology::new(
        vec![
            VertexKind::Endpoint,
            VertexKind::Endpoint,
            VertexKind::Endpoint,
            VertexKind::Junction,
        ],
        vec![(0, 3), (1, 3), (2, 3)],
    )
    .unwrap();
    let sn = descend_length(
        &topo,
        &[
            (0, Vec2::new(-1.0, 0.0)),
            (1, Vec2::new(1.0, 0.0)),
            (2, Vec2::new(0.0, 3.0_f64.sqrt())),
        ],
        &[(3, Vec2::new(0.0, 1.0))],
        1e-13,
        DescentOptions::default(),
    )
    .unwrap();
    to_network(&sn, m).unwrap()
}

fn random_direction(basis: &VSpaceBasis, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let coords = DVector::from_fn(basis.dim(), |_, _| rng.gen_range(-1.0..1.0));
    let coords = &coords / coords.norm();
    basis.field(&coords)
}

fn scale_fields(fields: &[Vec<f64>], s: f64) -> Vec<Vec<f64>> {
    fields
        .iter()
        .map(|edge| edge.iter().map(|v| v * s).collect())
        .collect()
}

fn add_fields(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(ea, eb)| ea.iter().zip(eb).map(|(x, y)| x + y).collect())
        .collect()
}

/// Smooth admissible state: junction-constrained boundary values extended by
/// low-frequency interior modes.
fn smooth_state(m: usize, amplitude: f64) -> Vec<Vec<f64>> {
    let boundary = [0.7, -0.2, -0.5]; // signed sum zero, junction at end 1
    (0..3)
        .map(|e| {
            (0..=m)
                .map(|q| {
                    let x = q as f64 / m as f64;
                    amplitude
                        * (boundary[e] * x * x * (3.0 - 2.0 * x)
                            + 0.4 * (std::f64::consts::PI * x).sin() * (e as f64 - 1.0))
                })
                .collect()
        })
        .collect()
}

/// Random smooth admissible direction: constrained boundary values plus a
/// few random low-frequency interior modes.
fn smooth_random_direction(m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let a: f64 = rng.gen_range(-1.0..1.0);
    let b: f64 = rng.gen_range(-1.0..1.0);
    let boundary = [a, b, -(a + b)];
    (0..3)
        .map(|e| {
            let c1: f64 = rng.gen_range(-1.0..1.0);
            let c2: f64 = rng.gen_range(-1.0..1.0);
            (0..=m)
                .map(|q| {
                    let x = q as f64 / m as f64;
                    boundary[e] * x * x * (3.0 - 2.0 * x)
                        + (c1 * (std::f64::consts::PI * x).sin()
                            + c2 * (2.0 * std::f64::consts::PI * x).sin())
                            * x
                            * (1.0 - x)
                })
                .collect()
        })
        .collect()
}

#[test]
fn first_variation_matches_centered_differences() {
    let base = minimal_triod(64);
    let basis = VSpaceBasis::build(&base);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    // A smooth perturbed state and several random smooth directions.
    let state = smooth_state(64, 1e-2);
    for _ in 0..5 {
        let dir = smooth_random_direction(64, &mut rng);
        let dv = first_variation(&basis, &state, &dir).unwrap();
        let eps = 1e-5;
        let plus = energy(&basis, &add_fields(&state, &scale_fields(&dir, eps)));
        let minus = energy(&basis, &add_fields(&state, &scale_fields(&dir, -eps)));
        let fd = (plus - minus) / (2.0 * eps);
        assert!(
            (dv - fd).abs() / fd.abs().max(1e-12) < 1e-6,
            "analytic {dv:.12e} vs fd {fd:.12e}"
        );
    }
}

#[test]
fn first_variation_vanishes_at_the_minimum() {
    let base = minimal_triod(48);
    let basis = VSpaceBasis::build(&base);
    let zero = vec![vec![0.0; 49]; 3];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let dir = random_direction(&basis, &mut rng);
        let dv = first_variation(&basis, &zero, &dir).unwrap();
        assert!(dv.abs() <= 1e-10, "first variation {dv:.3e}");
    }
}

#[test]
fn hessian_matches_second_differences() {
    let base = minimal_triod(64);
    let basis = VSpaceBasis::build(&base);
    let form = assemble_q(&basis);
    let e0 = energy(&basis, &vec![vec![0.0; 65]; 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..20 {
        let coords = DVector::from_fn(basis.dim(), |_, _| rng.gen_range(-1.0_f64..1.0));
        let coords = &coords / coords.norm();
        let quad = (coords.transpose() * &form.q * &coords)[(0, 0)];
        let fields = basis.field(&coords);
        let eps = 1e-4;
        let plus = energy(&basis, &scale_fields(&fields, eps));
        let minus = energy(&basis, &scale_fields(&fields, -eps));
        let fd = (plus - 2.0 * e0 + minus) / (eps * eps);
        assert!(
            (quad - fd).abs() / fd.abs() < 1e-5,
            "quadratic form {quad:.10e} vs fd {fd:.10e}"
        );
        // The direct evaluation agrees with the assembled matrix.
        let direct = second_variation_of(&basis, &fields).unwrap();
        assert!((quad - direct).abs() / direct.abs() < 1e-12);
    }
}

#[test]
fn minimal_triod_hessian_is_positive() {
    let base = minimal_triod(64);
    let basis = VSpaceBasis::build(&base);
    let form = assemble_q(&basis);
    let ev = spectrum(&form, 3);
    assert!(ev[0] > 0.0, "lowest eigenvalue {}", ev[0]);
    // Cross-check with the finite-difference oracle on the lowest mode
    // direction being positive definite: any direction has positive energy
    // curvature.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let e0 = energy(&basis, &vec![vec![0.0; 65]; 3]);
    for _ in 0..5 {
        let dir = random_direction(&basis, &mut rng);
        let eps = 1e-4;
        let plus = energy(&basis, &scale_fields(&dir, eps));
        let minus = energy(&basis, &scale_fields(&dir, -eps));
        assert!(plus + minus - 2.0 * e0 > 0.0);
    }
}

#[test]
fn hexagon_web_has_a_flat_direction() {
    let base = to_network(&hexagon_web(0.5, 1.0), 64).unwrap();
    let basis = VSpaceBasis::build(&base);
    let form = assemble_q(&basis);
    let ev = spectrum(&form, 4);
    assert!(
        ev[0].abs() <= 1e-3,
        "lowest eigenvalue {} should vanish for the scaling family",
        ev[0]
    );
    assert!(ev[1] > 1e-2, "second eigenvalue {} should be positive", ev[1]);
    // Kernel dimension at the discretization tolerance is at least one.
    let near_zero = ev.iter().filter(|l| l.abs() <= 1e-3).count();
    assert!(near_zero >= 1);

    // Independent oracle: the family velocity (radial motion of the inner
    // hexagon) is an admissible field with vanishing energy curvature.
    let m = 64;
    let mut fields = vec![vec![0.0; m + 1]; 12];
    let cache = netflow::network::geometry(&base).unwrap();
    for e in 0..12 {
        let g = cache.edge(e);
        for q in 0..=m {
            // d/ds of the web at inner scale s: hexagon vertices move
            // radially, spokes stretch linearly from fixed endpoints.
            let motion = if e < 6 {
                // Ring edge: every point moves radially outward like its
                // position (scale derivative of s * hex vertex blend).
                let p = base.curve(e).sample(q);
                p / 0.5
            } else {
                // Spoke from the outer endpoint (fixed) to the hexagon
                // vertex: motion interpolates linearly to the vertex motion.
                let x = q as f64 / m as f64;
                let vertex_motion = base.curve(e).sample(m) / 0.5;
                vertex_motion * x
            };
            fields[e][q] = motion.dot(&g.nu[q]);
        }
    }
    let quad = second_variation_of(&basis, &fields).unwrap();
    let norm2: f64 = {
        let stride = m + 1;
        let mut stacked = vec![0.0; 12 * stride];
        for e in 0..12 {
            stacked[e * stride..(e + 1) * stride].copy_from_slice(&fields[e]);
        }
        basis.l2_inner(&stacked, &stacked)
    };
    assert!(
        quad / norm2 <= 1e-3,
        "family direction has Rayleigh quotient {}",
        quad / norm2
    );
}

/// Integration-by-parts evaluation of the second variation for smooth
/// fields: junction boundary rows, the principal `-X'' X` part, and the
/// explicit cutoff bundle `χχ'' L^2 + 2χχ' L L' + (χ' L)^2`.
fn second_variation_ibp(base: &Network, fields: &[Vec<f64>], with_endpoint_rows: bool) -> f64 {
    let topo = base.topology();
    let m = base.m();
    let h = 1.0 / m as f64;
    let mut total = 0.0;

    // Edge speeds (constant along minimal edges).
    let speeds: Vec<f64> = base
        .curves()
        .iter()
        .map(|c| (c.sample(m) - c.sample(0)).norm())
        .collect();

    // Principal part: - sum_i int (d^2_s X) X ds via central differences and
    // trapezoid weights in the parameter.
    for (e, x) in fields.iter().enumerate() {
        let sigma = speeds[e];
        let mut acc = 0.0;
        for q in 1..m {
            let xpp = (x[q + 1] - 2.0 * x[q] + x[q - 1]) / (h * h);
            acc += xpp * x[q] * h;
        }
        // One-sided ends with half weights.
        let xpp0 = (2.0 * x[0] - 5.0 * x[1] + 4.0 * x[2] - x[3]) / (h * h);
        let xppm = (2.0 * x[m] - 5.0 * x[m - 1] + 4.0 * x[m - 2] - x[m - 3]) / (h * h);
        acc += 0.5 * h * (xpp0 * x[0] + xppm * x[m]);
        total -= acc / sigma;
    }

    // Boundary rows.
    let ds_x = |e: usize, end: u8| -> f64 {
        let x = &fields[e];
        let d = if end == 0 {
            (-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * h)
        } else {
            (3.0 * x[m] - 4.0 * x[m - 1] + x[m - 2]) / (2.0 * h)
        };
        d / speeds[e]
    };
    for junction in topo.junctions() {
        for ee in &junction.ends {
            let idx = if ee.end == 0 { 0 } else { m };
            let sign = if ee.end == 0 { -1.0 } else { 1.0 }; // (-1)^{1+e}
            total += sign * ds_x(ee.edge, ee.end) * fields[ee.edge][idx];
        }
    }
    if with_endpoint_rows {
        for ep in topo.endpoints() {
            let idx = if ep.end == 0 { 0 } else { m };
            let sign = if ep.end == 0 { -1.0 } else { 1.0 };
            total += sign * ds_x(ep.edge, ep.end) * fields[ep.edge][idx];
        }
    }

    // Explicit cutoff bundle per junction and slot, in the junction
    // coordinate x with d s = sigma d x and d/ds = (1/sigma) d/dx.
    for jm in 0..topo.junctions().len() {
        let maps = junction_coeffs_for(base, jm);
        for slot in 0..3 {
            let e = maps.edges[slot];
            let sigma = speeds[e];
            let val_at = |sl: usize, q: usize| -> f64 {
                let ee = maps.ends[sl];
                let edge = maps.edges[sl];
                if ee == 0 {
                    fields[edge][q]
                } else {
                    fields[edge][m - q]
                }
            };
            // L(x_q) and its x-derivative by central differences on the
            // half-grid.
            let half = m / 2;
            let lval: Vec<f64> = (0..=half)
                .map(|q| maps.apply(slot, val_at(0, q), val_at(1, q)))
                .collect();
            let lder: Vec<f64> = (0..=half)
                .map(|q| {
                    if q == 0 {
                        (-3.0 * lval[0] + 4.0 * lval[1] - lval[2]) / (2.0 * h)
                    } else if q == half {
                        (3.0 * lval[half] - 4.0 * lval[half - 1] + lval[half - 2]) / (2.0 * h)
                    } else {
                        (lval[q + 1] - lval[q - 1]) / (2.0 * h)
                    }
                })
                .collect();
            let mut acc = 0.0;
            for q in 0..=half {
                let x = q as f64 / m as f64;
                let w = if q == 0 || q == half { 0.5 * h } else { h };
                let integrand = chi(x) * chi_d2(x) * lval[q] * lval[q]
                    + 2.0 * chi(x) * chi_d(x) * lval[q] * lder[q]
                    + (chi_d(x) * lval[q]) * (chi_d(x) * lval[q]);
                acc += integrand * w;
            }
            total -= acc / sigma;
        }
    }
    total
}

#[test]
fn ibp_assembly_agrees_with_the_chord_hessian_on_smooth_fields() {
    // Smooth admissible field on the triod: boundary values summing to zero
    // at the junction, zero at endpoints.
    let field_on = |base: &Network| -> Vec<Vec<f64>> {
        let m = base.m();
        let mut fields = vec![vec![0.0; m + 1]; 3];
        let boundary = [1.0, -0.4, -0.6]; // junction at end 1 of every edge
        for e in 0..3 {
            for q in 0..=m {
                let x = q as f64 / m as f64;
                // Smooth profile: zero value at the endpoint side (x = 0),
                // boundary value at the junction side (x = 1).
                fields[e][q] = boundary[e] * x * x * (3.0 - 2.0 * x)
                    + 0.3 * (std::f64::consts::PI * x).sin() * (e as f64 + 1.0) / 3.0;
            }
        }
        fields
    };
    let values: Vec<(f64, f64)> = [64usize, 128]
        .iter()
        .map(|&m| {
            let base = minimal_triod(m);
            let basis = VSpaceBasis::build(&base);
            let fields = field_on(&base);
            let chord = second_variation_of(&basis, &fields).unwrap();
            let ibp = second_variation_ibp(&base, &fields, false);
            (chord, ibp)
        })
        .collect();
    let rel = |(a, b): (f64, f64)| (a - b).abs() / a.abs();
    let coarse = rel(values[0]);
    let fine = rel(values[1]);
    assert!(coarse < 5e-3, "relative gap {coarse:.3e} at M = 64");
    assert!(
        fine < coarse / 2.0,
        "no second-order convergence: {coarse:.3e} -> {fine:.3e}"
    );
}

#[test]
fn endpoint_rows_are_annihilated_by_the_constraints() {
    let base = minimal_triod(64);
    let m = 64;
    let mut fields = vec![vec![0.0; m + 1]; 3];
    let boundary = [0.5, 0.25, -0.75];
    for e in 0..3 {
        for q in 0..=m {
            let x = q as f64 / m as f64;
            fields[e][q] = boundary[e] * x * x * (3.0 - 2.0 * x);
        }
    }
    let with = second_variation_ibp(&base, &fields, true);
    let without = second_variation_ibp(&base, &fields, false);
    assert_eq!(with, without);
}
