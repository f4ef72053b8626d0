//! Matrix exponential by scaling and squaring with diagonal Padé approximants.
//!
//! Degree selection uses the standard backward-error `theta` thresholds:
//! the lowest of the degrees 3, 5, 7, 9 whose threshold bounds the 1-norm is
//! used directly, otherwise the matrix is scaled by a power of two into the
//! degree-13 region and the result squared back.

use super::{ensure_square, Mat};
use crate::error::{Error, Result};

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068;
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Returns `e^{M t}`.
///
/// `t = 0` short-circuits to the exact identity.
pub fn expm(m: &Mat, t: f64) -> Result<Mat> {
    let n = ensure_square(m)?;
    if t == 0.0 || n == 0 {
        return Ok(Mat::identity(n, n));
    }
    let a = m * t;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteMatrix("matrix exponential input"));
    }
    let e = expm_scaled(&a);
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteMatrix("matrix exponential result"));
    }
    Ok(e)
}

fn one_norm(a: &Mat) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn expm_scaled(a: &Mat) -> Mat {
    let n = a.nrows();
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Mat::from_element(n, n, f64::NAN);
    }
    if norm <= THETA_3 {
        return pade_low(a, &B3);
    }
    if norm <= THETA_5 {
        return pade_low(a, &B5);
    }
    if norm <= THETA_7 {
        return pade_low(a, &B7);
    }
    if norm <= THETA_9 {
        return pade_low(a, &B9);
    }
    let squarings = ((norm / THETA_13).log2().ceil()).max(0.0) as i32;
    let scaled = a * 2f64.powi(-squarings);
    let mut r = pade13(&scaled);
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

fn solve_pade(u: Mat, v: Mat) -> Mat {
    let numer = &v + &u;
    let denom = v - u;
    // The denominator is well conditioned inside the theta bounds.
    denom
        .lu()
        .solve(&numer)
        .unwrap_or_else(|| Mat::from_element(numer.nrows(), numer.ncols(), f64::NAN))
}

/// Degrees 3..9: `b` holds the coefficients in increasing power order.
fn pade_low(a: &Mat, b: &[f64]) -> Mat {
    let n = a.nrows();
    let ident = Mat::identity(n, n);
    let a2 = a * a;
    // even powers A^0, A^2, A^4, ...
    let mut evens = vec![ident.clone()];
    while evens.len() * 2 < b.len() {
        let next = evens.last().unwrap() * &a2;
        evens.push(next);
    }
    let mut u_inner = Mat::zeros(n, n);
    let mut v = Mat::zeros(n, n);
    for (j, p) in evens.iter().enumerate() {
        let ev = 2 * j;
        let od = 2 * j + 1;
        if ev < b.len() {
            v += p * b[ev];
        }
        if od < b.len() {
            u_inner += p * b[od];
        }
    }
    let u = a * u_inner;
    solve_pade(u, v)
}

fn pade13(a: &Mat) -> Mat {
    let n = a.nrows();
    let b = &B13;
    let ident = Mat::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_hi = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u_inner = u_hi + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1];
    let u = a * u_inner;
    let v_hi = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = v_hi + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + ident * b[0];
    solve_pade(u, v)
}
