//! Free-space Helmholtz Green functions with the sign convention
//! `(Δ + k²) G0 = δ` and the outgoing radiation condition.

use std::f64::consts::PI;

use faer::c64;

use crate::error::{invalid, Error, Result};
use crate::grid::{distance, dot, norm, Point, WaveContext};

fn bessel_j(n: usize, x: f64) -> f64 {
    puruspe::Jn(n as u32, x)
}

fn bessel_y(n: usize, x: f64) -> f64 {
    puruspe::Yn(n as u32, x)
}

/// Outgoing Hankel function of the first kind, orders 0 and 1.
pub fn hankel1(order: usize, x: f64) -> c64 {
    c64::new(bessel_j(order, x), bessel_y(order, x))
}

/// Green function at separation `r > 0`.
pub fn g0_radial(r: f64, ctx: &WaveContext) -> c64 {
    let k = ctx.k();
    match ctx.dim() {
        3 => -c64::cis(k * r) / (4.0 * PI * r),
        _ => c64::new(0.0, -0.25) * hankel1(0, k * r),
    }
}

pub fn g0(x: &Point, y: &Point, ctx: &WaveContext) -> Result<c64> {
    let r = distance(x, y);
    if r == 0.0 {
        return Err(Error::SingularEvaluation);
    }
    Ok(g0_radial(r, ctx))
}

/// `Im G0` at separation `r`, with the removable singularity at `r = 0`
/// filled by its limit.
pub fn im_g0_radial(r: f64, ctx: &WaveContext) -> f64 {
    let k = ctx.k();
    match ctx.dim() {
        3 => {
            if r == 0.0 {
                -k / (4.0 * PI)
            } else {
                -(k * r).sin() / (4.0 * PI * r)
            }
        }
        _ => -0.25 * bessel_j(0, k * r),
    }
}

pub fn im_g0(x: &Point, y: &Point, ctx: &WaveContext) -> f64 {
    im_g0_radial(distance(x, y), ctx)
}

/// Far-field approximation `|x - y| ≈ R - x̂·y` of the 3D kernel.
pub fn far_field_g0(direction: &Point, radius: f64, y: &Point, ctx: &WaveContext) -> Result<c64> {
    if ctx.dim() != 3 {
        return invalid("far-field kernel is only defined in three dimensions");
    }
    if ((norm(direction)) - 1.0).abs() > 1e-9 {
        return invalid("direction must be a unit vector");
    }
    if !(radius > norm(y)) {
        return invalid(format!("far-field radius {radius} must exceed |y| = {}", norm(y)));
    }
    let k = ctx.k();
    Ok(-c64::cis(k * radius) / (4.0 * PI * radius) * c64::cis(-k * dot(direction, y)))
}

/// Homogeneous time-reversal point spread function `-sin(kr) / (4π kr)`.
pub fn sinc_psf(r: f64, ctx: &WaveContext) -> f64 {
    let kr = ctx.k() * r;
    if kr == 0.0 {
        -1.0 / (4.0 * PI)
    } else {
        -kr.sin() / (4.0 * PI * kr)
    }
}

/// Integral of `G0(0, y)` over a disk (2D) or ball (3D) of the given measure
/// centered at the origin. Used for the singular diagonal of the volume operator.
pub fn self_cell_integral(measure: f64, ctx: &WaveContext) -> c64 {
    let k = ctx.k();
    match ctx.dim() {
        3 => {
            let a = (3.0 * measure / (4.0 * PI)).cbrt();
            // -∫_0^a r e^{ikr} dr
            let e = c64::cis(k * a);
            -(e * c64::new(1.0 / (k * k), -a / k) - 1.0 / (k * k))
        }
        _ => {
            let a = (measure / PI).sqrt();
            // -(i/4) 2π ∫_0^a r H0(kr) dr, using d/dx[x H1(x)] = x H0(x), x H1(x) → -2i/π
            c64::new(1.0 / (k * k), 0.0) - c64::new(0.0, PI * a / (2.0 * k)) * hankel1(1, k * a)
        }
    }
}

/// Full width at half maximum of `|Im G0|` about its central peak, found
/// by bisection on the closed-form profile.
pub fn homogeneous_fwhm(ctx: &WaveContext) -> f64 {
    let peak = im_g0_radial(0.0, ctx).abs();
    let f = |r: f64| im_g0_radial(r, ctx).abs() - 0.5 * peak;
    // both profiles drop below half maximum before their first zero
    let (mut lo, mut hi) = (0.0, 2.4 / ctx.k());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo + hi
}
