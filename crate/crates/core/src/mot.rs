//! Marching-on-in-time.
//!
//! Every scheme solves `W_0 x_i = r_i - sum_{j>=1} W_j x_{i-j}` with one dense
//! LU factorization of `W_0`. History sums run in increasing `j`, so reruns
//! are bit-identical.

use std::io::Write;

use nalgebra::{Dyn, LU};

use crate::cq::WeightSequence;
use crate::error::{Error, Result};
use crate::formulations::{FormulationKind, MotSystem, RhsCoupling};
use crate::linalg::{RMat, RVec};

/// Stage-stacked RWG coefficients per step.
#[derive(Debug, Clone)]
pub struct CurrentHistory {
    pub kind: Option<FormulationKind>,
    pub dt: f64,
    /// Stage abscissae `c_k` of the Runge-Kutta scheme.
    pub stage_nodes: Vec<f64>,
    pub mesh_hash: String,
    /// Coefficients per function.
    pub dim: usize,
    pub steps: Vec<RVec>,
}

impl CurrentHistory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Physical solution at the end of step `i`: the last stage block.
    pub fn solution(&self, i: usize) -> RVec {
        let last = self.stage_nodes.len().max(1) - 1;
        self.steps[i].rows(last * self.dim, self.dim).into_owned()
    }

    /// CSV with columns `step,stage,time_s,index,coefficient`, stage time
    /// `(step + c_k) dt`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "step,stage,time_s,index,coefficient")?;
        for (i, v) in self.steps.iter().enumerate() {
            for (k, c) in self.stage_nodes.iter().enumerate() {
                let t = (i as f64 + c) * self.dt;
                for m in 0..self.dim {
                    writeln!(w, "{i},{k},{t:e},{m},{:e}", v[k * self.dim + m])?;
                }
            }
        }
        w.flush()
    }
}

/// Dense `W_0` factorization, checked for singularity.
pub struct Factorization {
    lu: LU<f64, Dyn, Dyn>,
}

impl Factorization {
    pub fn new(w0: &RMat) -> Result<Self> {
        let lu = w0.clone().lu();
        if !lu.is_invertible() {
            return Err(Error::Singular("step-zero system matrix".into()));
        }
        Ok(Self { lu })
    }

    pub fn solve(&self, rhs: &RVec) -> Result<RVec> {
        self.lu
            .solve(rhs)
            .ok_or_else(|| Error::Singular("step-zero system matrix".into()))
    }
}

fn check(v: &RVec, step: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { step })
    }
}

/// `sum_{j=from}^{min(i, N)} W_j x_{i-j}` in increasing `j`.
fn history(w: &WeightSequence, xs: &[RVec], i: usize, from: usize, out: &mut RVec) {
    for j in from..=i.min(w.n_conv()) {
        out.gemv(1.0, &w.weights[j], &xs[i - j], 1.0);
    }
}

/// Solves `sum_j W_j x_{i-j} = r_i` for `i < n_steps`.
pub fn march(system: &WeightSequence, rhs: &[RVec], n_steps: usize) -> Result<Vec<RVec>> {
    if rhs.len() < n_steps {
        return Err(Error::Config(format!("right-hand side covers {} of {n_steps} steps", rhs.len())));
    }
    let f = Factorization::new(&system.weights[0])?;
    let mut xs: Vec<RVec> = Vec::with_capacity(n_steps);
    for (i, r) in rhs.iter().take(n_steps).enumerate() {
        let mut acc = RVec::zeros(r.len());
        history(system, &xs, i, 1, &mut acc);
        let x = f.solve(&(r - acc))?;
        check(&x, i)?;
        xs.push(x);
    }
    Ok(xs)
}

/// `Tcal * J = Ta * E + Tb * E_prim`, negative times treated as zero.
pub fn march_calderon(
    tcal: &WeightSequence,
    alpha: &WeightSequence,
    beta: &WeightSequence,
    e: &[RVec],
    e_prim: &[RVec],
    n_steps: usize,
) -> Result<Vec<RVec>> {
    if e.len() < n_steps || e_prim.len() < n_steps {
        return Err(Error::Config("right-hand sides do not cover the marching window".into()));
    }
    let rhs: Vec<RVec> = (0..n_steps)
        .map(|i| {
            let mut r = RVec::zeros(e[i].len());
            history(alpha, e, i, 0, &mut r);
            history(beta, e_prim, i, 0, &mut r);
            r
        })
        .collect();
    march(tcal, &rhs, n_steps)
}

/// `(w (x) I) v` for a 2x2 stage matrix `w`.
pub fn apply_stage(w: &RMat, v: &RVec, out: &mut RVec) {
    let n = v.len() / 2;
    for p in 0..2 {
        for q in 0..2 {
            let c = w[(p, q)];
            if c != 0.0 {
                let mut o = out.rows_mut(p * n, n);
                o.axpy(c, &v.rows(q * n, n), 1.0);
            }
        }
    }
}

/// `sum_j (w_j (x) I) x_{i-j}` over the whole past.
fn stage_convolution(w: &[RMat], xs: &[RVec]) -> Vec<RVec> {
    (0..xs.len())
        .map(|i| {
            let mut out = RVec::zeros(xs[i].len());
            for j in 0..=i.min(w.len() - 1) {
                apply_stage(&w[j], &xs[i - j], &mut out);
            }
            out
        })
        .collect()
}

/// `(P (x) I) v` for a projector acting on each stage block.
fn project_stages(p: &RMat, v: &RVec) -> RVec {
    let n = p.nrows();
    let mut out = RVec::zeros(v.len());
    for k in 0..v.len() / n {
        out.rows_mut(k * n, n).gemv(1.0, p, &v.rows(k * n, n), 0.0);
    }
    out
}

/// Tested incident field in the forms a scheme may need.
pub struct RhsInputs<'a> {
    pub value: Option<&'a [RVec]>,
    pub derivative: Option<&'a [RVec]>,
    pub primitive: Option<&'a [RVec]>,
}

fn need<'a>(v: Option<&'a [RVec]>, what: &str) -> Result<&'a [RVec]> {
    v.ok_or_else(|| Error::Config(format!("marching needs the {what} of the tested field")))
}

/// Marches any scheme and returns RWG coefficients.
pub fn run(system: &MotSystem, rhs: &RhsInputs, n_steps: usize) -> Result<Vec<RVec>> {
    match &system.coupling {
        RhsCoupling::Derivative => march(&system.system, need(rhs.derivative, "time derivative")?, n_steps),
        RhsCoupling::Calderon { alpha, beta } => march_calderon(
            &system.system,
            alpha,
            beta,
            need(rhs.value, "value")?,
            need(rhs.primitive, "primitive")?,
            n_steps,
        ),
        RhsCoupling::QuasiHelmholtz {
            projectors,
            diameter,
            minus,
            plus,
        } => {
            let e = need(rhs.value, "value")?;
            let p = need(rhs.primitive, "primitive")?;
            if e.len() < n_steps || p.len() < n_steps || minus.len() < n_steps {
                return Err(Error::Config("quasi-Helmholtz weights do not cover the marching window".into()));
            }
            let scale = crate::constants::C0 / diameter;
            let driven: Vec<RVec> = (0..n_steps)
                .map(|i| project_stages(&projectors.star, &e[i]) + project_stages(&projectors.loops, &p[i]) * scale)
                .collect();
            let r = stage_convolution(plus, &driven);
            let split = |xs: &[RVec]| -> Vec<RVec> {
                let l: Vec<RVec> = xs.iter().map(|v| project_stages(&projectors.loops, v)).collect();
                let s: Vec<RVec> = xs.iter().map(|v| project_stages(&projectors.star, v)).collect();
                stage_convolution(minus, &l)
                    .into_iter()
                    .zip(stage_convolution(plus, &s))
                    .map(|(a, b)| a + b)
                    .collect()
            };
            let y = march(&system.system, &r, n_steps)?;
            let j = split(&y);
            for (i, v) in j.iter().enumerate() {
                check(v, i)?;
            }
            Ok(j)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(ws: Vec<RMat>) -> WeightSequence {
        let decay = ws.iter().map(|w| w.norm()).collect();
        WeightSequence {
            weights: ws,
            decay,
            imag_residue: None,
        }
    }

    fn data(n: usize, steps: usize, seed: u64) -> Vec<RVec> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        (0..steps).map(|_| RVec::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))).collect()
    }

    #[test]
    fn identity_and_zero_systems() {
        let e = data(4, 7, 1);
        let x = march(&seq(vec![RMat::identity(4, 4)]), &e, 7).unwrap();
        assert_eq!(x, e);
        let z = vec![RVec::zeros(4); 5];
        let w = seq(vec![RMat::identity(4, 4) * 2.0, RMat::identity(4, 4)]);
        assert!(march(&w, &z, 5).unwrap().iter().all(|v| v.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn scalar_recursion() {
        let w = seq(vec![RMat::from_element(1, 1, 2.0), RMat::from_element(1, 1, 1.0)]);
        let e: Vec<RVec> = [1.0, 3.0, -2.0, 0.5].iter().map(|v| RVec::from_element(1, *v)).collect();
        let x = march(&w, &e, 4).unwrap();
        let mut prev = 0.0;
        for (i, v) in x.iter().enumerate() {
            let expected = (e[i][0] - prev) / 2.0;
            assert_eq!(v[0], expected);
            prev = expected;
        }
    }

    #[test]
    fn calderon_with_degenerate_weights_copies_the_field() {
        let n = 6;
        let e = data(n, 9, 2);
        let p = data(n, 9, 3);
        let id = seq(vec![RMat::identity(n, n)]);
        let zero = seq(vec![RMat::zeros(n, n)]);
        let x = march_calderon(&id, &id, &zero, &e, &p, 9).unwrap();
        assert_eq!(x, e);
    }

    fn random_system(n: usize, len: usize) -> WeightSequence {
        let m = data(n, n * len, 9);
        let ws = (0..len)
            .map(|j| {
                let mut w = RMat::from_fn(n, n, |r, c| m[j * n + c][r] * 0.1);
                if j == 0 {
                    w += RMat::identity(n, n) * 3.0;
                }
                w
            })
            .collect();
        seq(ws)
    }

    #[test]
    fn linearity_time_invariance_determinism() {
        let n = 8;
        let w = random_system(n, 5);
        let e = data(n, 30, 4);
        let x = march(&w, &e, 30).unwrap();
        let e2: Vec<RVec> = e.iter().map(|v| v * 2.0).collect();
        let x2 = march(&w, &e2, 30).unwrap();
        for (a, b) in x.iter().zip(&x2) {
            assert!((b - a * 2.0).norm() <= 1e-12 * b.norm());
        }
        let k = 3;
        let mut delayed = vec![RVec::zeros(n); k];
        delayed.extend(e.iter().cloned());
        let xd = march(&w, &delayed, 30 + k).unwrap();
        for v in &xd[..k] {
            assert_eq!(v.norm(), 0.0);
        }
        for (a, b) in x.iter().zip(&xd[k..]) {
            assert!((a - b).norm() <= 1e-10 * a.norm().max(1e-300));
        }
        assert_eq!(march(&w, &e, 30).unwrap(), x);
    }

    #[test]
    fn singular_and_divergent_systems_are_errors() {
        let w = seq(vec![RMat::zeros(2, 2)]);
        assert!(matches!(march(&w, &data(2, 3, 5), 3), Err(Error::Singular(_))));
        let w = seq(vec![RMat::identity(1, 1), RMat::from_element(1, 1, -1e300)]);
        let e = vec![RVec::from_element(1, 1e300); 4];
        assert!(matches!(march(&w, &e, 4), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn stage_application() {
        let w = RMat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let v = RVec::from_vec(vec![1.0, -1.0, 2.0, 0.5]);
        let mut out = RVec::zeros(4);
        apply_stage(&w, &v, &mut out);
        assert_eq!(out.as_slice(), &[5.0, 0.0, 11.0, -1.0]);
    }
}
