//! Far-field forward model, data synthesis, and the inverse-source
//! reconstructions: time reversal, minimum L2-norm and minimum L1-norm.

use std::sync::Arc;

use faer::{c64, Mat, MatRef};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::grid::{distance, norm, DomainGrid, MeasurementSurface, Point, WaveContext};
use crate::kernels::{g0_radial, im_g0};
use crate::linalg;
use crate::volume::DiscreteOperator;

mod l1;
mod l2;
mod metrics;

pub use l1::{l1_optimality, l1_reconstruct, L1Mode, L1Options, L1Optimality};
pub use l2::{l2_minimum_norm, tikhonov_residual, L2Mode, EXACT_CUTOFF, MOROZOV_BRACKET};
pub use metrics::{resolution_metrics, ResolutionMetrics, PEAK_THRESHOLD};

#[derive(Debug, Clone, PartialEq)]
pub enum SourceConfig {
    /// Density sampled at the grid points.
    GridDensity(Vec<c64>),
    PointSources(Vec<(Point, c64)>),
}

impl SourceConfig {
    pub fn point_locations(&self) -> Vec<Point> {
        match self {
            SourceConfig::GridDensity(_) => Vec::new(),
            SourceConfig::PointSources(s) => s.iter().map(|(p, _)| *p).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Medium {
    Homogeneous,
    HighContrast { tau: f64, op: Arc<DiscreteOperator> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MediumTag {
    Homogeneous,
    HighContrast(f64),
}

impl MediumTag {
    pub fn name(&self) -> &'static str {
        match self {
            MediumTag::Homogeneous => "homogeneous",
            MediumTag::HighContrast(_) => "high_contrast",
        }
    }
}

impl Medium {
    pub fn tag(&self) -> MediumTag {
        match self {
            Medium::Homogeneous => MediumTag::Homogeneous,
            Medium::HighContrast { tau, .. } => MediumTag::HighContrast(*tau),
        }
    }
}

/// `F[m, j] = G(z_m, y_j) w_j`.
#[derive(Debug, Clone)]
pub struct ForwardMap {
    pub matrix: Mat<c64>,
    pub grid: DomainGrid,
    pub surface: MeasurementSurface,
    pub ctx: WaveContext,
    pub medium: Medium,
}

fn check_surface(grid: &DomainGrid, surface: &MeasurementSurface) -> Result<()> {
    let r = grid.shape.radius();
    if let Some(p) = surface.points.iter().find(|p| norm(p) <= r) {
        return invalid(format!("measurement point {p:?} is not strictly outside D (radius {r})"));
    }
    Ok(())
}

pub fn build_forward_map(
    grid: &DomainGrid,
    surface: &MeasurementSurface,
    medium: Medium,
    ctx: &WaveContext,
) -> Result<ForwardMap> {
    if grid.dim() != ctx.dim() {
        return invalid("grid and wave context disagree on dimension");
    }
    check_surface(grid, surface)?;
    let kernel = match &medium {
        Medium::Homogeneous => Mat::from_fn(surface.len(), grid.len(), |m, j| {
            g0_radial(distance(&surface.points[m], &grid.points[j]), ctx)
        }),
        Medium::HighContrast { tau, op } => {
            if op.grid() != grid {
                return invalid("high-contrast operator was assembled on a different grid");
            }
            let field = op.green_matrix(*tau)?;
            op.radiate_many(&field, &surface.points)?
        }
    };
    let matrix = Mat::from_fn(surface.len(), grid.len(), |m, j| kernel[(m, j)] * grid.weights[j]);
    Ok(ForwardMap { matrix, grid: grid.clone(), surface: surface.clone(), ctx: *ctx, medium })
}

impl ForwardMap {
    pub fn tag(&self) -> MediumTag {
        self.medium.tag()
    }

    /// `G(z_m, y)` over the surface, for a point `y` in `D`.
    pub fn kernel_column(&self, y: &Point) -> Result<Vec<c64>> {
        if !self.grid.shape.contains(y) {
            return invalid(format!("source point {y:?} lies outside D"));
        }
        match &self.medium {
            Medium::Homogeneous => {
                Ok(self.surface.points.iter().map(|z| g0_radial(distance(z, y), &self.ctx)).collect())
            }
            Medium::HighContrast { tau, op } => {
                let field = op.solve_green_at(*tau, y)?;
                let col = op.radiate_many(&field, &self.surface.points)?;
                Ok(linalg::column(col.as_ref(), 0))
            }
        }
    }

    /// `G(z_m, x_i)` recovered from the weighted matrix.
    pub fn kernel_at_grid(&self, m: usize, i: usize) -> c64 {
        self.matrix[(m, i)] / self.grid.weights[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementData {
    pub values: Vec<c64>,
    pub noise_level: f64,
    pub seed: u64,
    /// `‖noise‖`, the realised perturbation.
    pub noise_norm: f64,
    pub clean_norm: f64,
}

pub fn clean_data(map: &ForwardMap, source: &SourceConfig) -> Result<Vec<c64>> {
    match source {
        SourceConfig::GridDensity(f) => {
            if f.len() != map.grid.len() {
                return invalid(format!("density of length {} on a grid of {} points", f.len(), map.grid.len()));
            }
            Ok(linalg::matvec(map.matrix.as_ref(), f))
        }
        SourceConfig::PointSources(list) => {
            let mut u = vec![c64::new(0.0, 0.0); map.surface.len()];
            for (y, q) in list {
                for (acc, g) in u.iter_mut().zip(map.kernel_column(y)?) {
                    *acc += q * g;
                }
            }
            Ok(u)
        }
    }
}

/// Complex Gaussian noise scaled to `noise_level ‖u‖ / √m` per component.
pub fn synthesize_data(map: &ForwardMap, source: &SourceConfig, noise_level: f64, seed: u64) -> Result<MeasurementData> {
    if !(noise_level >= 0.0 && noise_level.is_finite()) {
        return invalid(format!("noise level must be nonnegative, got {noise_level}"));
    }
    let mut values = clean_data(map, source)?;
    let clean_norm = linalg::vec_norm(&values);
    let m = values.len();
    let sigma = noise_level * clean_norm / (m as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise_sq = 0.0;
    if sigma > 0.0 {
        for v in values.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            let n = c64::new(re, im) * (sigma / std::f64::consts::SQRT_2);
            noise_sq += n.norm_sqr();
            *v += n;
        }
    }
    Ok(MeasurementData { values, noise_level, seed, noise_norm: noise_sq.sqrt(), clean_norm })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    TimeReversal,
    L2Exact,
    L2Tikhonov { alpha: f64 },
    L2Morozov { alpha: f64, delta: f64 },
    L1 { mu: f64, normal_equation: bool },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::TimeReversal => "time_reversal",
            Method::L2Exact => "l2_exact",
            Method::L2Tikhonov { .. } => "l2_tikhonov",
            Method::L2Morozov { .. } => "l2_morozov",
            Method::L1 { .. } => "l1",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImagingResult {
    pub values: Vec<c64>,
    pub method: Method,
    /// `‖F g − u‖` for the reconstructions, absent for time reversal.
    pub residual: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `I(x_i) = Σ_m conj(G(x_i, z_m)) u_m wΓ_m` on the map's grid.
pub fn time_reversal(data: &[c64], map: &ForwardMap) -> Result<ImagingResult> {
    if data.len() != map.surface.len() {
        return invalid("data length does not match the measurement surface");
    }
    let n = map.grid.len();
    let values = (0..n)
        .map(|i| {
            (0..data.len())
                .map(|m| map.kernel_at_grid(m, i).conj() * data[m] * map.surface.weights[m])
                .sum()
        })
        .collect();
    Ok(ImagingResult { values, method: Method::TimeReversal, residual: None, iterations: 0, converged: true })
}

/// Time reversal with the free-space kernel at arbitrary imaging points.
pub fn time_reversal_points(
    data: &[c64],
    surface: &MeasurementSurface,
    points: &[Point],
    ctx: &WaveContext,
) -> Result<Vec<c64>> {
    if data.len() != surface.len() {
        return invalid("data length does not match the measurement surface");
    }
    Ok(points
        .iter()
        .map(|x| {
            surface
                .points
                .iter()
                .zip(&surface.weights)
                .zip(data)
                .map(|((z, w), u)| g0_radial(distance(x, z), ctx).conj() * u * *w)
                .sum()
        })
        .collect())
}

/// Green function used by the Helmholtz-Kirchhoff check.
#[derive(Debug, Clone, Copy)]
pub enum HkKernel<'a> {
    Homogeneous,
    /// High-contrast medium; `x` and `y` must be grid points.
    Medium { op: &'a DiscreteOperator, tau: f64 },
}

/// `k Σ_m conj(G(x, z_m)) G(y, z_m) wΓ_m + Im G(x, y)` before the modulus.
pub fn helmholtz_kirchhoff_mismatch(
    kernel: HkKernel<'_>,
    surface: &MeasurementSurface,
    x: &Point,
    y: &Point,
    ctx: &WaveContext,
) -> Result<c64> {
    let k = ctx.k();
    match kernel {
        HkKernel::Homogeneous => {
            let s: c64 = surface
                .points
                .iter()
                .zip(&surface.weights)
                .map(|(z, w)| g0_radial(distance(x, z), ctx).conj() * g0_radial(distance(y, z), ctx) * *w)
                .sum();
            Ok(s * k + im_g0(x, y, ctx))
        }
        HkKernel::Medium { op, tau } => {
            let grid = op.grid();
            let index = |p: &Point| -> Result<usize> {
                let i = grid.nearest_index(p);
                if distance(&grid.points[i], p) > 1e-12 * grid.cell_size {
                    return invalid(format!("{p:?} is not a grid point"));
                }
                Ok(i)
            };
            let (ix, iy) = (index(x)?, index(y)?);
            if let Some(p) = surface.points.iter().find(|p| grid.shape.contains(p)) {
                return invalid(format!("surface point {p:?} lies inside D"));
            }
            let fx = op.solve_green_direct(tau, ix)?;
            let fy = op.solve_green_direct(tau, iy)?;
            let gx = op.radiate_many(&fx, &surface.points)?;
            let gy = op.radiate_many(&fy, &surface.points)?;
            let s: c64 = (0..surface.len()).map(|m| gx[(m, 0)].conj() * gy[(m, 0)] * surface.weights[m]).sum();
            Ok(s * k + fy.values[(ix, 0)].im)
        }
    }
}

pub fn helmholtz_kirchhoff_residual(
    kernel: HkKernel<'_>,
    surface: &MeasurementSurface,
    x: &Point,
    y: &Point,
    ctx: &WaveContext,
) -> Result<f64> {
    Ok(helmholtz_kirchhoff_mismatch(kernel, surface, x, y, ctx)?.norm())
}

/// `Fᴴ diag(wΓ) u`, the adjoint applied to data.
pub fn adjoint_apply(map: MatRef<'_, c64>, surface_weights: &[f64], data: &[c64]) -> Vec<c64> {
    let wu: Vec<c64> = data.iter().zip(surface_weights).map(|(u, w)| u * *w).collect();
    linalg::adjoint_matvec(map, &wu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_ball_grid, build_disk_grid, build_measurement_surface, sample_profile, ProfileKind};
    use crate::kernels::sinc_psf;
    use crate::volume::assemble_kd;
    use std::f64::consts::PI;

    fn ctx3() -> WaveContext {
        WaveContext::new(1.0, 3).unwrap()
    }

    #[test]
    fn homogeneous_single_point_row() {
        let ctx = ctx3();
        let g = DomainGrid::from_points(vec![[0.0; 3]], vec![0.3], 0.5, crate::grid::Shape::Ball { radius: 1.0 }).unwrap();
        let s = build_measurement_surface(20.0, 8, &ctx).unwrap();
        let f = build_forward_map(&g, &s, Medium::Homogeneous, &ctx).unwrap();
        let expect = -c64::cis(20.0) * 0.3 / (4.0 * PI * 20.0);
        for m in 0..8 {
            assert!((f.matrix[(m, 0)] - expect).norm() < 1e-15);
        }
        let inside = build_measurement_surface(0.5, 8, &ctx).unwrap();
        assert!(build_forward_map(&g, &inside, Medium::Homogeneous, &ctx).is_err());
    }

    #[test]
    fn high_contrast_tau_zero_is_homogeneous() {
        let ctx = WaveContext::new(1.0, 2).unwrap();
        let g = build_disk_grid(1.0, 8, &ctx).unwrap();
        let p = sample_profile(&g, ProfileKind::Constant(2.0)).unwrap();
        let op = Arc::new(assemble_kd(&g, &p, &ctx).unwrap());
        let s = build_measurement_surface(10.0, 16, &ctx).unwrap();
        let h = build_forward_map(&g, &s, Medium::Homogeneous, &ctx).unwrap();
        let c = build_forward_map(&g, &s, Medium::HighContrast { tau: 0.0, op }, &ctx).unwrap();
        assert!((&h.matrix - &c.matrix).norm_l2() <= 1e-12 * h.matrix.norm_l2());
    }

    #[test]
    fn forward_entry_quadrature_refines() {
        // ∫_D G0(z, y) dy against finer lattices; error shrinks with h
        let ctx = WaveContext::new(1.0, 2).unwrap();
        let s = build_measurement_surface(5.0, 4, &ctx).unwrap();
        let total = |cells: usize| {
            let g = build_disk_grid(1.0, cells, &ctx).unwrap();
            let f = build_forward_map(&g, &s, Medium::Homogeneous, &ctx).unwrap();
            (0..g.len()).map(|j| f.matrix[(0, j)]).sum::<c64>()
        };
        let reference = total(400);
        let e1 = (total(10) - reference).norm();
        let e2 = (total(20) - reference).norm();
        let e3 = (total(40) - reference).norm();
        assert!(e2 < e1 && e3 < e2, "{e1} {e2} {e3}");
    }

    #[test]
    fn synthesis_contracts() {
        let ctx = ctx3();
        let g = build_ball_grid(1.0, 6, &ctx).unwrap();
        let s = build_measurement_surface(30.0, 50, &ctx).unwrap();
        let f = build_forward_map(&g, &s, Medium::Homogeneous, &ctx).unwrap();
        let y0 = [0.1, -0.2, 0.3];
        let d = synthesize_data(&f, &SourceConfig::PointSources(vec![(y0, c64::new(1.0, 0.0))]), 0.0, 1).unwrap();
        for (m, z) in s.points.iter().enumerate() {
            assert_eq!(d.values[m], g0_radial(distance(z, &y0), &ctx));
        }
        let zero = synthesize_data(&f, &SourceConfig::GridDensity(vec![c64::new(0.0, 0.0); g.len()]), 0.1, 1).unwrap();
        assert!(zero.values.iter().all(|z| z.norm() == 0.0));
        assert_eq!(zero.noise_norm, 0.0);

        let src = SourceConfig::GridDensity((0..g.len()).map(|i| c64::new(i as f64, 1.0)).collect());
        let a = synthesize_data(&f, &src, 0.05, 42).unwrap();
        let b = synthesize_data(&f, &src, 0.05, 42).unwrap();
        assert_eq!(a, b);
        let c = synthesize_data(&f, &src, 0.05, 43).unwrap();
        assert_ne!(a.values, c.values);
        assert!((a.noise_norm / a.clean_norm - 0.05).abs() < 0.02);
        assert!(synthesize_data(&f, &SourceConfig::GridDensity(vec![]), 0.0, 0).is_err());
        let outside = SourceConfig::PointSources(vec![([2.0, 0.0, 0.0], c64::new(1.0, 0.0))]);
        assert!(synthesize_data(&f, &outside, 0.0, 0).is_err());
    }

    #[test]
    fn time_reversal_is_weighted_adjoint() {
        let ctx = WaveContext::new(1.0, 2).unwrap();
        let g = build_disk_grid(1.0, 8, &ctx).unwrap();
        let s = build_measurement_surface(20.0, 32, &ctx).unwrap();
        let f = build_forward_map(&g, &s, Medium::Homogeneous, &ctx).unwrap();
        let dens: Vec<c64> = (0..g.len()).map(|i| c64::new((i as f64).cos(), 0.2)).collect();
        let u = linalg::matvec(f.matrix.as_ref(), &dens);
        let img = time_reversal(&u, &f).unwrap().values;
        let adj = adjoint_apply(f.matrix.as_ref(), &s.weights, &u);
        for i in 0..g.len() {
            assert!((img[i] * g.weights[i] - adj[i]).norm() <= 1e-10 * adj[i].norm().max(1e-300));
        }
        let zero = time_reversal(&vec![c64::new(0.0, 0.0); 32], &f).unwrap();
        assert!(zero.values.iter().all(|z| z.norm() == 0.0));
        let u2: Vec<c64> = (0..32).map(|m| c64::new(0.0, m as f64)).collect();
        let sum: Vec<c64> = u.iter().zip(&u2).map(|(a, b)| a + b).collect();
        let lhs = time_reversal(&sum, &f).unwrap().values;
        let r2 = time_reversal(&u2, &f).unwrap().values;
        for i in 0..g.len() {
            assert!((lhs[i] - img[i] - r2[i]).norm() < 1e-14 * lhs[i].norm().max(1.0));
        }
    }

    #[test]
    fn point_source_psf_3d() {
        let ctx = ctx3();
        let s = build_measurement_surface(100.0, 2000, &ctx).unwrap();
        let y0 = [0.0; 3];
        let data: Vec<c64> = s.points.iter().map(|z| g0_radial(distance(z, &y0), &ctx)).collect();
        let pts: Vec<Point> = (0..50).map(|i| [0.1 * i as f64, 0.0, 0.0]).collect();
        let img = time_reversal_points(&data, &s, &pts, &ctx).unwrap();
        let peak = sinc_psf(0.0, &ctx).abs();
        for (p, v) in pts.iter().zip(&img) {
            // image = −(1/k) Im G0 = −sinc_psf
            let oracle = -sinc_psf(norm(p), &ctx);
            assert!((v.re - oracle).abs() < 0.01 * peak, "{p:?}: {v} vs {oracle}");
        }
    }

    #[test]
    fn hk_homogeneous_decay() {
        let ctx = ctx3();
        let x = [0.5, 0.2, 0.1];
        let y = [-0.1, 0.3, 0.0];
        let r = |radius: f64| {
            let s = build_measurement_surface(radius, 2000, &ctx).unwrap();
            helmholtz_kirchhoff_residual(HkKernel::Homogeneous, &s, &x, &y, &ctx).unwrap()
        };
        let (r1, r2) = (r(5.0), r(20.0));
        assert!(r2 < r1, "{r1} {r2}");
        // conjugate symmetry at x = y
        let s = build_measurement_surface(10.0, 500, &ctx).unwrap();
        let m = helmholtz_kirchhoff_mismatch(HkKernel::Homogeneous, &s, &x, &x, &ctx).unwrap();
        assert!(m.im.abs() < 1e-12);
    }

    #[test]
    fn hk_medium_decreases() {
        let ctx = WaveContext::new(1.0, 2).unwrap();
        let g = build_disk_grid(1.0, 8, &ctx).unwrap();
        let p = sample_profile(&g, ProfileKind::Constant(1.0)).unwrap();
        let op = assemble_kd(&g, &p, &ctx).unwrap();
        let (x, y) = (g.points[3], g.points[20]);
        let r = |radius: f64| {
            let s = build_measurement_surface(radius, 256, &ctx).unwrap();
            helmholtz_kirchhoff_residual(HkKernel::Medium { op: &op, tau: 2.0 }, &s, &x, &y, &ctx).unwrap()
        };
        let (r1, r2) = (r(3.0), r(12.0));
        assert!(r2 < r1, "{r1} {r2}");
        assert!(helmholtz_kirchhoff_residual(HkKernel::Medium { op: &op, tau: 2.0 }, &build_measurement_surface(3.0, 16, &ctx).unwrap(), &[0.01, 0.0, 0.0], &y, &ctx).is_err());
    }
}
