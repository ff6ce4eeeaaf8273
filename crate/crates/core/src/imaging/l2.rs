//! Minimum L2-norm solutions through the singular system of the forward map.

use faer::{c64, MatRef};

use super::{ImagingResult, Method};
use crate::error::{invalid, Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum L2Mode {
    /// Pseudoinverse with singular values below `1e-12 σ_max` dropped.
    Exact,
    Tikhonov(f64),
    /// Choose `α` so that `‖F g − u‖² ∈ [0.9δ, 1.1δ]`.
    Morozov(f64),
}

/// Search interval for the Morozov parameter, relative to `σ_max²`.
pub const MOROZOV_BRACKET: (f64, f64) = (1e-14, 1e6);
/// Relative singular-value cutoff of the pseudoinverse.
pub const EXACT_CUTOFF: f64 = 1e-12;

struct Spectral {
    s: Vec<f64>,
    /// `⟨left_l, u⟩`
    c: Vec<c64>,
    /// `‖u‖² − Σ|c_l|²`, the part of `u` outside the range.
    outside: f64,
    v: faer::Mat<c64>,
}

fn decompose(map: MatRef<'_, c64>, data: &[c64]) -> Result<Spectral> {
    if data.len() != map.nrows() {
        return invalid(format!("data of length {} for a map with {} rows", data.len(), map.nrows()));
    }
    let svd = linalg::thin_svd(map)?;
    if svd.s.first().copied().unwrap_or(0.0) == 0.0 {
        return invalid("forward map is zero");
    }
    let c: Vec<c64> = (0..svd.s.len())
        .map(|l| (0..data.len()).map(|m| svd.u[(m, l)].conj() * data[m]).sum())
        .collect();
    let total: f64 = data.iter().map(|z| z.norm_sqr()).sum();
    let inside: f64 = c.iter().map(|z| z.norm_sqr()).sum();
    Ok(Spectral { s: svd.s, c, outside: (total - inside).max(0.0), v: svd.v })
}

impl Spectral {
    fn solution(&self, filter: impl Fn(f64) -> f64) -> Vec<c64> {
        let n = self.v.nrows();
        let mut g = vec![c64::new(0.0, 0.0); n];
        for (l, (&s, &c)) in self.s.iter().zip(&self.c).enumerate() {
            let f = filter(s);
            if f == 0.0 {
                continue;
            }
            for i in 0..n {
                g[i] += self.v[(i, l)] * c * f;
            }
        }
        g
    }

    fn tikhonov_residual_sq(&self, alpha: f64) -> f64 {
        self.s
            .iter()
            .zip(&self.c)
            .map(|(&s, c)| (alpha / (s * s + alpha)).powi(2) * c.norm_sqr())
            .sum::<f64>()
            + self.outside
    }
}

/// `‖F g_α − u‖²` for the Tikhonov solution, from the singular system.
pub fn tikhonov_residual(map: MatRef<'_, c64>, data: &[c64], alpha: f64) -> Result<f64> {
    Ok(decompose(map, data)?.tikhonov_residual_sq(alpha))
}

fn residual(map: MatRef<'_, c64>, g: &[c64], data: &[c64]) -> f64 {
    let fg = linalg::matvec(map, g);
    fg.iter().zip(data).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
}

pub fn l2_minimum_norm(map: MatRef<'_, c64>, data: &[c64], mode: L2Mode) -> Result<ImagingResult> {
    let sp = decompose(map, data)?;
    let smax = sp.s[0];
    let (values, method, iterations) = match mode {
        L2Mode::Exact => {
            let cut = EXACT_CUTOFF * smax;
            (sp.solution(|s| if s > cut { 1.0 / s } else { 0.0 }), Method::L2Exact, 0)
        }
        L2Mode::Tikhonov(alpha) => {
            if !(alpha >= 0.0 && alpha.is_finite()) {
                return invalid(format!("Tikhonov parameter must be nonnegative, got {alpha}"));
            }
            if alpha == 0.0 {
                let cut = EXACT_CUTOFF * smax;
                (sp.solution(|s| if s > cut { 1.0 / s } else { 0.0 }), Method::L2Tikhonov { alpha }, 0)
            } else {
                (sp.solution(|s| s / (s * s + alpha)), Method::L2Tikhonov { alpha }, 0)
            }
        }
        L2Mode::Morozov(delta) => {
            let (alpha, iterations) = morozov_alpha(&sp, data, delta)?;
            (sp.solution(|s| s / (s * s + alpha)), Method::L2Morozov { alpha, delta }, iterations)
        }
    };
    let res = residual(map, &values, data);
    Ok(ImagingResult { values, method, residual: Some(res), iterations, converged: true })
}

fn morozov_alpha(sp: &Spectral, data: &[c64], delta: f64) -> Result<(f64, usize)> {
    let u2: f64 = data.iter().map(|z| z.norm_sqr()).sum();
    if !(delta > 0.0) {
        return invalid(format!("discrepancy level must be positive, got {delta}"));
    }
    if delta >= u2 {
        return Err(Error::Infeasible(format!("δ = {delta} is not below ‖u‖² = {u2}")));
    }
    let smax2 = sp.s[0] * sp.s[0];
    let (mut lo, mut hi) = (MOROZOV_BRACKET.0 * smax2, MOROZOV_BRACKET.1 * smax2);
    let floor = sp.tikhonov_residual_sq(lo);
    if floor > 1.1 * delta {
        return Err(Error::Infeasible(format!(
            "δ = {delta} is below the smallest achievable squared residual {floor}"
        )));
    }
    let window = |r: f64| (0.9 * delta..=1.1 * delta).contains(&r);
    if window(floor) {
        return Ok((lo, 0));
    }
    let top = sp.tikhonov_residual_sq(hi);
    if window(top) {
        return Ok((hi, 0));
    }
    if top < 0.9 * delta {
        return Err(Error::Infeasible(format!(
            "δ = {delta} exceeds the squared residual {top} at the largest admissible α"
        )));
    }
    for it in 1..=200 {
        let mid = (lo * hi).sqrt();
        let r = sp.tikhonov_residual_sq(mid);
        if window(r) {
            return Ok((mid, it));
        }
        if r < delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Numeric("Morozov bisection did not reach the discrepancy window".into()))
}
