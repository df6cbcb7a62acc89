//! Closed-form potentials of a flat triangle with the kernels `1/R` and `R`.

use crate::mesh::Point;

/// Potentials of a uniform and a linear source density on `tri` seen from `r`.
#[derive(Debug, Clone, Copy)]
pub struct Potentials {
    /// `int 1/R dS'` and `int (r' - r)/R dS'`.
    pub inverse: (f64, Point),
    /// `int R dS'` and `int (r' - r) R dS'`.
    pub linear: (f64, Point),
}

/// `(int 1/R dS', int (r' - r)/R dS')`, `R = |r - r'|`.
pub fn triangle_potentials(tri: &[Point; 3], r: &Point) -> (f64, Point) {
    potentials(tri, r).inverse
}

/// Both kernels at once, built from the edge integrals of `R^-1`, `R`, `R^3`.
pub fn potentials(tri: &[Point; 3], r: &Point) -> Potentials {
    let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).normalize();
    let d = n.dot(&(r - tri[0]));
    let rho = r - n * d;
    let ad = d.abs();
    let scale = (tri[1] - tri[0]).norm() + (tri[2] - tri[1]).norm() + (tri[0] - tri[2]).norm();
    let tiny = 1e-14 * scale;

    let mut inv = 0.0;
    let mut edge_lin = 0.0;
    let mut v_inv = Point::zeros();
    let mut v_lin = Point::zeros();
    for i in 0..3 {
        let (a, b) = (tri[i], tri[(i + 1) % 3]);
        let edge = b - a;
        let lhat = edge / edge.norm();
        let uhat = lhat.cross(&n);
        let p0 = (a - rho).dot(&uhat);
        let lm = (a - rho).dot(&lhat);
        let lp = (b - rho).dot(&lhat);
        let rm = (r - a).norm();
        let rp = (r - b).norm();
        let r0sq = p0 * p0 + d * d;

        // R + l, rewritten as r0^2 / (R - l) where the sum cancels
        let sum = |l: f64, rr: f64| if l >= 0.0 { rr + l } else { r0sq / (rr - l) };
        let l_m1 = if r0sq.sqrt() < tiny { 0.0 } else { (sum(lp, rp) / sum(lm, rm)).ln() };
        let l_1 = 0.5 * (r0sq * l_m1 + lp * rp - lm * rm);
        let l_3 = 0.25 * (lp * rp.powi(3) - lm * rm.powi(3)) + 0.75 * r0sq * l_1;

        let mut term = p0 * l_m1;
        if ad > tiny {
            term -= ad * ((p0 * lp / (r0sq + ad * rp)).atan() - (p0 * lm / (r0sq + ad * rm)).atan());
        }
        inv += term;
        edge_lin += p0 * l_1;
        v_inv += uhat * l_1;
        v_lin += uhat * (l_3 / 3.0);
    }
    let lin = (d * d * inv + edge_lin) / 3.0;
    Potentials {
        inverse: (inv, v_inv - n * (d * inv)),
        linear: (lin, v_lin - n * (d * lin)),
    }
}
