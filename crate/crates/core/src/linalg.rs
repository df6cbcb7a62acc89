//! Dense matrix helpers shared by the assembly and marching code.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;
pub type RVec = DVector<f64>;

pub fn split(m: &CMat) -> (RMat, RMat) {
    (m.map(|z| z.re), m.map(|z| z.im))
}

pub fn join(re: &RMat, im: &RMat) -> CMat {
    re.zip_map(im, Complex64::new)
}

/// Complex product through four real GEMMs (the real kernel is much faster
/// than the generic complex loop).
pub fn cmul(a: &CMat, b: &CMat) -> CMat {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    join(&re, &im)
}

pub fn rcmul(a: &RMat, b: &CMat) -> CMat {
    let (br, bi) = split(b);
    join(&(a * br), &(a * bi))
}

pub fn crmul(a: &CMat, b: &RMat) -> CMat {
    let (ar, ai) = split(a);
    join(&(ar * b), &(ai * b))
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Ratio of extreme singular values; `+inf` for a numerically singular matrix.
pub fn condition_number(m: &RMat) -> f64 {
    let sv = m.clone().singular_values();
    extreme_ratio(sv.as_slice())
}

pub fn condition_number_complex(m: &CMat) -> f64 {
    let sv = m.clone().singular_values();
    extreme_ratio(sv.as_slice())
}

fn extreme_ratio(sv: &[f64]) -> f64 {
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn frobenius_c(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
