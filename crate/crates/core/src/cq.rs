//! Runge-Kutta convolution quadrature.
//!
//! A Laplace-domain symbol `F(s)` is turned into a sequence of stage-stacked
//! weight matrices `W_j` with `sum_j W_j z^j = F(S(z))`, where `S(z)` is the
//! 2x2 stage symbol of the Radau IIA method. `F(S)` is evaluated through the
//! eigendecomposition of `S`, so each contour point costs two evaluations of
//! `F` at scalar frequencies. The inverse Z-transform is a trapezoidal rule
//! on the circle `|z| = rho`, accumulated weight by weight so that only the
//! requested leading weights are ever stored.
//!
//! Layout: the stage-stacked vector of an `n`-dimensional unknown is
//! `[stage 0 block (n); stage 1 block (n)]`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{CMat, RMat};

pub type C2 = [[Complex64; 2]; 2];

/// Butcher tableau of a two-stage method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RkTableau {
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
    pub c: [f64; 2],
}

impl RkTableau {
    pub fn stages(&self) -> usize {
        2
    }

    pub fn a_inverse(&self) -> [[f64; 2]; 2] {
        let [[p, q], [r, s]] = self.a;
        let det = p * s - q * r;
        [[s / det, -q / det], [-r / det, p / det]]
    }
}

/// Two-stage Radau IIA (order 3, stiffly accurate).
pub fn radau2_tableau() -> RkTableau {
    RkTableau {
        a: [[5.0 / 12.0, -1.0 / 12.0], [3.0 / 4.0, 1.0 / 4.0]],
        b: [3.0 / 4.0, 1.0 / 4.0],
        c: [1.0 / 3.0, 1.0],
    }
}

/// Stage symbol `S(z) = (A + z/(1-z) 1 b^T)^-1 / dt` with `S = V diag(lambda) V^-1`.
#[derive(Debug, Clone, Copy)]
pub struct StageSymbol {
    pub matrix: C2,
    pub vectors: C2,
    pub inverse_vectors: C2,
    pub eigenvalues: [Complex64; 2],
}

impl StageSymbol {
    pub fn reconstruct(&self) -> C2 {
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (p, row) in out.iter_mut().enumerate() {
            for (q, v) in row.iter_mut().enumerate() {
                *v = self.coupling(p, q, 0) * self.eigenvalues[0] + self.coupling(p, q, 1) * self.eigenvalues[1];
            }
        }
        out
    }

    /// `V[p][k] V^-1[k][q]`: weight of `F(lambda_k)` in block `(p, q)` of `F(S)`.
    pub fn coupling(&self, p: usize, q: usize, k: usize) -> Complex64 {
        self.vectors[p][k] * self.inverse_vectors[k][q]
    }
}

const MAX_EIGVEC_COND: f64 = 1e8;

fn inverse2(m: &C2) -> Option<C2> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.norm() == 0.0 || !det.is_finite() {
        return None;
    }
    Some([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

fn norm2(m: &C2) -> f64 {
    m.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn rk_symbol(z: Complex64, tableau: &RkTableau, dt: f64) -> Result<StageSymbol> {
    let defective = || Error::EigenFallbackExhausted { z: format!("{z}") };
    let one = Complex64::new(1.0, 0.0);
    let r = z / (one - z);
    let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
    for p in 0..2 {
        for q in 0..2 {
            m[p][q] = tableau.a[p][q] + r * tableau.b[q];
        }
    }
    let mut s = inverse2(&m).ok_or_else(defective)?;
    for v in s.iter_mut().flatten() {
        *v /= dt;
    }
    let [[a, b], [c, d]] = s;
    let half_tr = (a + d) * 0.5;
    let disc = (half_tr * half_tr - (a * d - b * c)).sqrt();
    let eigenvalues = [half_tr + disc, half_tr - disc];
    let mut vectors = [[Complex64::new(0.0, 0.0); 2]; 2];
    for (k, lam) in eigenvalues.iter().enumerate() {
        let (x, y) = if b.norm() >= c.norm() { (b, lam - a) } else { (lam - d, c) };
        let n = (x.norm_sqr() + y.norm_sqr()).sqrt();
        if n == 0.0 {
            return Err(defective());
        }
        vectors[0][k] = x / n;
        vectors[1][k] = y / n;
    }
    let inverse_vectors = inverse2(&vectors).ok_or_else(defective)?;
    if norm2(&vectors) * norm2(&inverse_vectors) > MAX_EIGVEC_COND {
        return Err(defective());
    }
    Ok(StageSymbol {
        matrix: s,
        vectors,
        inverse_vectors,
        eigenvalues,
    })
}

/// Laplace-domain symbol returning one or more square matrices of equal size.
pub trait OperatorSymbol: Sync {
    fn dim(&self) -> usize;

    fn outputs(&self) -> usize {
        1
    }

    fn evaluate(&self, s: Complex64) -> Result<Vec<CMat>>;

    /// `F(conj s) = conj F(s)` (real convolution kernel).
    fn conjugate_symmetric(&self) -> bool {
        false
    }
}

/// Scalar symbol from a closure.
pub struct ScalarSymbol<F>(pub F);

impl<F: Fn(Complex64) -> Complex64 + Sync> OperatorSymbol for ScalarSymbol<F> {
    fn dim(&self) -> usize {
        1
    }

    fn evaluate(&self, s: Complex64) -> Result<Vec<CMat>> {
        Ok(vec![CMat::from_element(1, 1, (self.0)(s))])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqConfig {
    pub dt: f64,
    /// Contour samples `N` (power of two).
    pub samples: usize,
    /// Contour radius `rho`.
    pub radius: f64,
    /// Relative truncation tolerance.
    pub tolerance: f64,
    /// Number of leading weights computed.
    pub max_weights: usize,
    /// Sample the whole circle (instead of half of it) to measure the
    /// imaginary residue of the transform.
    pub full_circle: bool,
}

pub const DEFAULT_EPSILON: f64 = 1e-12;

impl CqConfig {
    /// `N = max(512, 4 count)` rounded up to a power of two and
    /// `rho = eps^(1/(2N))` with the default `eps`.
    pub fn new(dt: f64, count: usize) -> Self {
        let samples = (4 * count).max(512).next_power_of_two();
        Self {
            dt,
            samples,
            radius: DEFAULT_EPSILON.powf(0.5 / samples as f64),
            tolerance: 1e-12,
            max_weights: count.max(1),
            full_circle: false,
        }
    }

    /// Same grid with `rho = eps^(1/(2N))`.
    pub fn with_epsilon(mut self, eps: f64) -> Self {
        self.radius = eps.powf(0.5 / self.samples as f64);
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        let eps = self.radius.powf(2.0 * self.samples as f64);
        self.samples = samples;
        self.with_epsilon(eps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("time step {} must be positive", self.dt)));
        }
        if !self.samples.is_power_of_two() || self.samples < 4 {
            return Err(Error::Config(format!("sample count {} must be a power of two >= 4", self.samples)));
        }
        if self.max_weights == 0 || self.max_weights > self.samples {
            return Err(Error::Config("need 1 <= weight count <= sample count".into()));
        }
        if !(self.radius > 0.0 && self.radius < 1.0) {
            return Err(Error::Config(format!("contour radius {} must lie in (0, 1)", self.radius)));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config("truncation tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

/// Stage-stacked weights `W_0 .. W_{N_conv}`.
#[derive(Debug, Clone)]
pub struct WeightSequence {
    pub weights: Vec<RMat>,
    /// `||W_j||_F` of every computed weight (also those dropped by truncation).
    pub decay: Vec<f64>,
    /// `max_j ||Im W_j||_F / ||W_0||_F`; only measured on the full circle.
    pub imag_residue: Option<f64>,
}

impl WeightSequence {
    pub fn n_conv(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.weights[0].nrows()
    }

    /// `W_j`, zero beyond the truncation index.
    pub fn get(&self, j: usize) -> Option<&RMat> {
        self.weights.get(j)
    }

    /// Binary dump: little-endian `u64` count, rows, cols, then each weight row-major as `f64`.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let (r, c) = self.weights[0].shape();
        for v in [self.weights.len(), r, c] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for m in &self.weights {
            for i in 0..r {
                for j in 0..c {
                    w.write_all(&m[(i, j)].to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> std::io::Result<Self> {
        let mut word = [0u8; 8];
        let mut header = [0usize; 3];
        for h in header.iter_mut() {
            r.read_exact(&mut word)?;
            *h = u64::from_le_bytes(word) as usize;
        }
        let [count, rows, cols] = header;
        if count == 0 {
            return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "empty weight sequence"));
        }
        let mut weights = Vec::with_capacity(count);
        for _ in 0..count {
            let mut m = RMat::zeros(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    r.read_exact(&mut word)?;
                    m[(i, j)] = f64::from_le_bytes(word);
                }
            }
            weights.push(m);
        }
        let decay = weights.iter().map(|m| m.norm()).collect();
        Ok(Self {
            weights,
            decay,
            imag_residue: None,
        })
    }
}

/// Block `F(S)` from the two eigenvalue evaluations.
fn stage_lift(sym: &StageSymbol, f: [&CMat; 2]) -> CMat {
    let n = f[0].nrows();
    let mut out = CMat::zeros(2 * n, 2 * n);
    for p in 0..2 {
        for q in 0..2 {
            let mut block = out.view_mut((p * n, q * n), (n, n));
            for k in 0..2 {
                block.zip_apply(f[k], |o, v| *o += sym.coupling(p, q, k) * v);
            }
        }
    }
    out
}

/// Stage symbol at `z`, nudging `z` along the circle if it is defective there.
fn symbol_near(z: Complex64, tableau: &RkTableau, dt: f64) -> Result<StageSymbol> {
    let mut last = None;
    for attempt in 0..8 {
        let zz = z * Complex64::from_polar(1.0, attempt as f64 * 1e-7);
        match rk_symbol(zz, tableau, dt) {
            Ok(s) => return Ok(s),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// `W_0 = F(S(0)) = F(A^-1 / dt)`, exact without any contour sum.
pub fn zeroth_weight(symbol: &dyn OperatorSymbol, tableau: &RkTableau, dt: f64) -> Result<Vec<RMat>> {
    let sym = rk_symbol(Complex64::new(0.0, 0.0), tableau, dt)?;
    let [l0, l1] = sym.eigenvalues;
    let f0 = symbol.evaluate(l0)?;
    let f1 = if symbol.conjugate_symmetric() && (l1 - l0.conj()).norm() <= 1e-14 * l0.norm() {
        f0.iter().map(|m| m.map(|v| v.conj())).collect()
    } else {
        symbol.evaluate(l1)?
    };
    Ok(f0.iter().zip(&f1).map(|(a, b)| stage_lift(&sym, [a, b]).map(|v| v.re)).collect())
}

/// Leading `config.max_weights` weights of every output of `symbol`, untruncated.
pub fn cq_weights(symbol: &dyn OperatorSymbol, tableau: &RkTableau, config: &CqConfig) -> Result<Vec<WeightSequence>> {
    config.validate()?;
    let n = symbol.dim();
    let outs = symbol.outputs();
    let nn = config.samples;
    let kw = config.max_weights;
    let rho = config.radius;
    let mut re: Vec<Vec<RMat>> = vec![vec![RMat::zeros(2 * n, 2 * n); kw]; outs];
    let mut im: Vec<Vec<RMat>> = if config.full_circle {
        vec![vec![RMat::zeros(2 * n, 2 * n); kw]; outs]
    } else {
        Vec::new()
    };
    let last = if config.full_circle { nn - 1 } else { nn / 2 };
    for l in 0..=last {
        let theta = 2.0 * PI * l as f64 / nn as f64;
        let z = Complex64::from_polar(rho, theta);
        let sym = symbol_near(z, tableau, config.dt)?;
        let f0 = symbol.evaluate(sym.eigenvalues[0])?;
        let f1 = symbol.evaluate(sym.eigenvalues[1])?;
        // conjugate pairs l, N - l fold into one term on the half circle
        let fold = if config.full_circle || l == 0 || 2 * l == nn { 1.0 } else { 2.0 };
        for o in 0..outs {
            let b = stage_lift(&sym, [&f0[o], &f1[o]]);
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::Symbol(format!("non-finite symbol value at s = {}", sym.eigenvalues[0])));
            }
            let (br, bi) = crate::linalg::split(&b);
            for j in 0..kw {
                // B zeta^(-l j) rho^-j / N
                let phase = 2.0 * PI * ((l * j) % nn) as f64 / nn as f64;
                let scale = fold * rho.powi(-(j as i32)) / nn as f64;
                let (cs, sn) = (phase.cos() * scale, phase.sin() * scale);
                re[o][j].zip_zip_apply(&br, &bi, |w, r, i| *w += cs * r + sn * i);
                if config.full_circle {
                    im[o][j].zip_zip_apply(&br, &bi, |w, r, i| *w += cs * i - sn * r);
                }
            }
        }
    }
    Ok(re
        .into_iter()
        .enumerate()
        .map(|(o, weights)| {
            let decay: Vec<f64> = weights.iter().map(|m| m.norm()).collect();
            let imag_residue = config.full_circle.then(|| {
                let w0 = decay[0].max(f64::MIN_POSITIVE);
                im[o].iter().map(|m| m.norm()).fold(0.0, f64::max) / w0
            });
            WeightSequence {
                weights,
                decay,
                imag_residue,
            }
        })
        .collect())
}

/// Drops trailing weights with `||W_j|| <= tau ||W_0||`; `tau = 0` keeps all.
pub fn truncate_weights(mut seq: WeightSequence, tau: f64) -> Result<WeightSequence> {
    if tau == 0.0 {
        return Ok(seq);
    }
    let reference = seq.decay.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let reference = if seq.decay[0] > 0.0 { seq.decay[0] } else { reference };
    let limit = tau * reference;
    let keep = seq.decay.iter().rposition(|&d| d > limit).map_or(1, |j| j + 1);
    if keep == seq.decay.len() && seq.decay.len() > 1 {
        return Err(Error::NoDecay {
            tau,
            count: seq.decay.len(),
        });
    }
    seq.weights.truncate(keep);
    Ok(seq)
}

/// Largest `|lambda|` of the stage symbol over the sampled contour.
pub fn contour_frequency_bound(tableau: &RkTableau, config: &CqConfig) -> Result<f64> {
    let mut m: f64 = 0.0;
    let last = if config.full_circle { config.samples - 1 } else { config.samples / 2 };
    for l in 0..=last {
        let z = Complex64::from_polar(config.radius, 2.0 * PI * l as f64 / config.samples as f64);
        let sym = symbol_near(z, tableau, config.dt)?;
        m = m.max(sym.eigenvalues[0].norm()).max(sym.eigenvalues[1].norm());
    }
    Ok(m)
}

/// Scalar symbol weights as 2x2 stage matrices (not truncated).
pub fn scalar_weights(f: impl Fn(Complex64) -> Complex64 + Sync, tableau: &RkTableau, config: &CqConfig) -> Result<Vec<RMat>> {
    let mut seq = cq_weights(&ScalarSymbol(f), tableau, config)?;
    Ok(seq.remove(0).weights)
}
