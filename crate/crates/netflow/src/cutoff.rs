//! The fixed cutoff used to blend junction relations into edge interiors.
//!
//! `chi: [0, 1/2] -> [0, 1]` is smooth, nonincreasing, identically 1 on
//! `[0, 1/8]` and identically 0 on `[3/8, 1/2]`. Its shape is pinned once and
//! for all (a smoothstep applied to itself on the transition band) so that
//! serialized results are reproducible. The composition has vanishing first
//! and second derivatives at both ends of the band.

fn smoothstep(y: f64) -> f64 {
    y * y * (3.0 - 2.0 * y)
}

fn smoothstep_d(y: f64) -> f64 {
    6.0 * y * (1.0 - y)
}

fn smoothstep_d2(y: f64) -> f64 {
    6.0 - 12.0 * y
}

const LO: f64 = 0.125;
const HI: f64 = 0.375;
const INV_W: f64 = 4.0; // 1 / (HI - LO)

pub fn chi(x: f64) -> f64 {
    if x <= LO {
        1.0
    } else if x >= HI {
        0.0
    } else {
        let u = (x - LO) * INV_W;
        1.0 - smoothstep(smoothstep(u))
    }
}

pub fn chi_d(x: f64) -> f64 {
    if x <= LO || x >= HI {
        0.0
    } else {
        let u = (x - LO) * INV_W;
        -smoothstep_d(smoothstep(u)) * smoothstep_d(u) * INV_W
    }
}

pub fn chi_d2(x: f64) -> f64 {
    if x <= LO || x >= HI {
        0.0
    } else {
        let u = (x - LO) * INV_W;
        let s = smoothstep(u);
        -(smoothstep_d2(s) * smoothstep_d(u) * smoothstep_d(u) + smoothstep_d(s) * smoothstep_d2(u))
            * INV_W
            * INV_W
    }
}

/// Cutoff and its first two derivatives sampled on the half-grid
/// `x_q = q / m`, `q = 0..=m/2`.
#[derive(Debug, Clone)]
pub struct Cutoff {
    pub values: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl Cutoff {
    pub fn sampled(m: usize) -> Self {
        let half = m / 2;
        let xs = (0..=half).map(|q| q as f64 / m as f64);
        Self {
            values: xs.clone().map(chi).collect(),
            d1: xs.clone().map(chi_d).collect(),
            d2: xs.map(chi_d2).collect(),
        }
    }
}
