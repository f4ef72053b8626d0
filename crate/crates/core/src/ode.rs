//! Fixed-step classical Runge–Kutta integration reported on a time grid.

use crate::error::{Error, Result};
use crate::linalg::Vector;

pub fn check_grid(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidArgument("time grid must be finite and non-negative".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("time grid must be non-decreasing".into()));
    }
    Ok(())
}

/// `n` equally spaced points on `[0, t_end]`, both ends included.
pub fn uniform_grid(t_end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Integrates `y' = f(t, y)` from `y(0) = y0` and returns `y` at each grid time.
///
/// Each grid interval is split into `ceil(len / max_step)` equal steps so grid
/// times are hit exactly. A non-finite state is an error carrying its time.
pub fn rk4_on_grid<F>(f: F, y0: &Vector, times: &[f64], max_step: f64) -> Result<Vec<Vector>>
where
    F: Fn(f64, &Vector) -> Vector,
{
    check_grid(times)?;
    if !(max_step > 0.0) {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut y = y0.clone();
    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let n = (span / max_step).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for i in 0..n {
                let s = t + h * i as f64;
                let k1 = f(s, &y);
                let k2 = f(s + 0.5 * h, &(&y + &k1 * (0.5 * h)));
                let k3 = f(s + 0.5 * h, &(&y + &k2 * (0.5 * h)));
                let k4 = f(s + h, &(&y + &k3 * h));
                y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        path: 0,
                        time: s + h,
                    });
                }
            }
            t = target;
        }
        out.push(y.clone());
    }
    Ok(out)
}
