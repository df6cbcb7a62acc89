//! Quadrature rules on the reference triangle and on [0, 1].
//!
//! Points are stored as barycentric triples `(l0, l1, l2)`; weights sum to one
//! so that `area * sum(w_i f(x_i))` approximates the integral over a triangle.

use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// Polynomial degree integrated exactly.
    pub degree: usize,
}

impl TriangleRule {
    /// Smallest tabulated rule exact for polynomials of total degree `degree`.
    pub fn with_degree(degree: usize) -> Self {
        match degree {
            0 | 1 => Self {
                points: vec![[1.0 / 3.0; 3]],
                weights: vec![1.0],
                degree: 1,
            },
            2 => {
                let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
                Self {
                    points: vec![[a, b, b], [b, a, b], [b, b, a]],
                    weights: vec![1.0 / 3.0; 3],
                    degree: 2,
                }
            }
            3 | 4 => {
                // Dunavant, degree 4
                let mut points = Vec::new();
                let mut weights = Vec::new();
                push_orbit(&mut points, &mut weights, 0.445_948_490_915_965, 0.223_381_589_678_011);
                push_orbit(&mut points, &mut weights, 0.091_576_213_509_771, 0.109_951_743_655_322);
                Self { points, weights, degree: 4 }
            }
            5 => {
                // Radon 7-point
                let s15 = 15f64.sqrt();
                let mut points = vec![[1.0 / 3.0; 3]];
                let mut weights = vec![9.0 / 40.0];
                push_orbit(&mut points, &mut weights, (6.0 - s15) / 21.0, (155.0 - s15) / 1200.0);
                push_orbit(&mut points, &mut weights, (6.0 + s15) / 21.0, (155.0 + s15) / 1200.0);
                Self { points, weights, degree: 5 }
            }
            d => Self::collapsed((d + 3) / 2),
        }
    }

    /// Conical product of Gauss-Legendre rules (`n * n` points), exact to degree `2n - 2`.
    pub fn collapsed(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (&u, &wu) in x.iter().zip(&w) {
            for (&v, &wv) in x.iter().zip(&w) {
                // (u, v) in [0,1]^2 -> (xi, eta) = (u, v (1 - u)), jacobian (1 - u)
                let xi = u;
                let eta = v * (1.0 - u);
                points.push([1.0 - xi - eta, xi, eta]);
                // reference area is 1/2, normalise to unit sum
                weights.push(2.0 * wu * wv * (1.0 - u));
            }
        }
        Self {
            points,
            weights,
            degree: 2 * n - 2,
        }
    }

    /// Collapsed rule with points graded towards all three edges through the
    /// map `t -> t^3 (10 - 15 t + 6 t^2)` in both square coordinates. Suited to
    /// integrands with logarithmic behaviour at the boundary; not polynomially
    /// exact (`degree` is reported as 0).
    pub fn graded(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        let map = |t: f64| (t * t * t * (10.0 - 15.0 * t + 6.0 * t * t), 30.0 * t * t * (1.0 - t) * (1.0 - t));
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (&a, &wa) in x.iter().zip(&w) {
            let (u, du) = map(a);
            for (&b, &wb) in x.iter().zip(&w) {
                let (v, dv) = map(b);
                let xi = u;
                let eta = v * (1.0 - u);
                points.push([1.0 - xi - eta, xi, eta]);
                weights.push(2.0 * wa * wb * du * dv * (1.0 - u));
            }
        }
        Self {
            points,
            weights,
            degree: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn push_orbit(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, a: f64, w: f64) {
    let b = 1.0 - 2.0 * a;
    points.push([b, a, a]);
    points.push([a, b, a]);
    points.push([a, a, b]);
    weights.extend([w; 3]);
}

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Newton iteration on P_n starting from the Chebyshev guess
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}
