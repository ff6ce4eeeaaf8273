//! Minimum L1-norm reconstruction by accelerated proximal gradient (FISTA)
//! with function-value restart.

use faer::{c64, Mat, MatRef};

use super::{ImagingResult, Method};
use crate::error::{invalid, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum L1Mode {
    /// `½‖F g − u‖² + μ‖g‖₁`.
    Penalized,
    /// Same objective with `FᴴF` and `Fᴴu` in place of `F` and `u`.
    NormalEquation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Options {
    pub mu: f64,
    pub mode: L1Mode,
    pub max_iters: usize,
    /// Stop once the relative objective and iterate changes fall below this
    /// and the subgradient certificate holds to the same tolerance.
    pub tol: f64,
}

impl L1Options {
    pub fn penalized(mu: f64) -> Self {
        Self { mu, mode: L1Mode::Penalized, max_iters: 5000, tol: 1e-8 }
    }
}

fn soft_threshold(z: c64, t: f64) -> c64 {
    let m = z.norm();
    if m <= t {
        c64::new(0.0, 0.0)
    } else {
        z * ((m - t) / m)
    }
}

fn objective(a: MatRef<'_, c64>, b: &[c64], g: &[c64], mu: f64) -> f64 {
    let r = linalg::matvec(a, g);
    let fit: f64 = r.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    0.5 * fit + mu * g.iter().map(|z| z.norm()).sum::<f64>()
}

fn operator(map: MatRef<'_, c64>, data: &[c64], mode: L1Mode) -> (Mat<c64>, Vec<c64>) {
    match mode {
        L1Mode::Penalized => (map.to_owned(), data.to_vec()),
        L1Mode::NormalEquation => {
            let a = map.adjoint() * map;
            (a, linalg::adjoint_matvec(map, data))
        }
    }
}

pub fn l1_reconstruct(map: MatRef<'_, c64>, data: &[c64], opts: L1Options) -> Result<ImagingResult> {
    if data.len() != map.nrows() {
        return invalid(format!("data of length {} for a map with {} rows", data.len(), map.nrows()));
    }
    if !(opts.mu > 0.0 && opts.mu.is_finite()) {
        return invalid(format!("μ must be positive, got {}", opts.mu));
    }
    if !(opts.tol > 0.0) || opts.max_iters == 0 {
        return invalid("L1 iteration needs a positive tolerance and iteration budget");
    }
    let (a, b) = operator(map, data, opts.mode);
    let ah = a.adjoint().to_owned();
    let smax = linalg::singular_values(a.as_ref())?.first().copied().unwrap_or(0.0);
    let n = a.ncols();
    let method = Method::L1 { mu: opts.mu, normal_equation: opts.mode == L1Mode::NormalEquation };
    if smax == 0.0 {
        return Ok(ImagingResult { values: vec![c64::new(0.0, 0.0); n], method, residual: Some(linalg::vec_norm(data)), iterations: 0, converged: true });
    }
    let lip = smax * smax;
    let step = 1.0 / lip;
    let thresh = opts.mu * step;

    let mut x = vec![c64::new(0.0, 0.0); n];
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut f_old = objective(a.as_ref(), &b, &x, opts.mu);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iters {
        iterations = it;
        let ay = linalg::matvec(a.as_ref(), &y);
        let r: Vec<c64> = ay.iter().zip(&b).map(|(p, q)| p - q).collect();
        let grad = linalg::matvec(ah.as_ref(), &r);
        let x_new: Vec<c64> = y.iter().zip(&grad).map(|(yi, gi)| soft_threshold(yi - gi * step, thresh)).collect();
        let f_new = objective(a.as_ref(), &b, &x_new, opts.mu);

        let dx = x_new.iter().zip(&x).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
        let xn = linalg::vec_norm(&x_new);
        let rel_x = if xn == 0.0 { dx } else { dx / xn };
        let rel_f = (f_old - f_new).abs() / f_new.abs().max(f64::MIN_POSITIVE);

        if f_new > f_old {
            // restart momentum from the last accepted iterate
            t = 1.0;
            y = x.clone();
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_new;
        y = x_new.iter().zip(&x).map(|(p, q)| p + (p - q) * beta).collect();
        x = x_new;
        t = t_new;
        f_old = f_new;
        if rel_f < opts.tol && rel_x < opts.tol {
            let c = certificate(a.as_ref(), &b, &x, opts.mu);
            if c.off_support <= 1.0 + opts.tol && c.on_support <= opts.tol {
                converged = true;
                break;
            }
        }
    }
    let fg = linalg::matvec(map, &x);
    let residual = fg.iter().zip(data).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
    Ok(ImagingResult { values: x, method, residual: Some(residual), iterations, converged })
}

/// Subgradient certificate of the penalized problem, relative to `μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Optimality {
    /// `max |(Aᴴ(Ag − b))_i| / μ` off the support; optimal when `≤ 1`.
    pub off_support: f64,
    /// `max |(Aᴴ(Ag − b))_i / μ + g_i/|g_i||` on the support; optimal when `0`.
    pub on_support: f64,
    pub support_size: usize,
}

pub fn l1_optimality(map: MatRef<'_, c64>, data: &[c64], g: &[c64], mu: f64, mode: L1Mode) -> L1Optimality {
    let (a, b) = operator(map, data, mode);
    certificate(a.as_ref(), &b, g, mu)
}

fn certificate(a: MatRef<'_, c64>, b: &[c64], g: &[c64], mu: f64) -> L1Optimality {
    let ag = linalg::matvec(a, g);
    let r: Vec<c64> = ag.iter().zip(b).map(|(p, q)| p - q).collect();
    let grad = linalg::adjoint_matvec(a, &r);
    let mut off: f64 = 0.0;
    let mut on: f64 = 0.0;
    let mut support_size = 0;
    for (gi, di) in g.iter().zip(&grad) {
        if gi.norm() == 0.0 {
            off = off.max(di.norm() / mu);
        } else {
            support_size += 1;
            on = on.max((di / mu + gi / gi.norm()).norm());
        }
    }
    L1Optimality { off_support: off, on_support: on, support_size }
}
