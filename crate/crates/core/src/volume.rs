//! Discretised volume operator `K_D[f](x) = -∫_D G0(x, y) n(y) f(y) dy`
//! and the direct Lippmann-Schwinger solve for the high-contrast Green
//! function `G = G0 + v`, `(I - τK_D) v = τ K_D[G0(·, x0)]`.

use std::sync::OnceLock;

use faer::{c64, Mat, MatRef};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::{distance, DomainGrid, Point, RefractiveProfile, WaveContext};
use crate::kernels::{g0_radial, self_cell_integral};
use crate::linalg;

/// Relative distance `|z - λ| < RESONANCE_TOL (1 + |λ|)` at which a
/// resolvent point is treated as an eigenvalue.
pub const RESONANCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagonalRule {
    /// Kernel integrated analytically over a disk/ball of the cell's measure.
    EqualMeasureAnalytic,
    /// Matrix supplied by the caller.
    Explicit,
}

impl DiagonalRule {
    pub fn name(&self) -> &'static str {
        match self {
            DiagonalRule::EqualMeasureAnalytic => "equal_measure_analytic",
            DiagonalRule::Explicit => "explicit",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    matrix: Mat<c64>,
    grid: DomainGrid,
    profile: RefractiveProfile,
    ctx: WaveContext,
    diagonal_rule: DiagonalRule,
    spectrum: OnceLock<Vec<c64>>,
}

/// Samples `G(x_i, x0_m)` of a Green function on the grid.
#[derive(Debug, Clone)]
pub struct GreenField {
    /// `N × M`, one column per source point.
    pub values: Mat<c64>,
    pub tau: f64,
    pub includes_free_part: bool,
    pub sources: Vec<Point>,
}

impl GreenField {
    pub fn column(&self, j: usize) -> Vec<c64> {
        linalg::column(self.values.as_ref(), j)
    }
}

fn check_sizes(grid: &DomainGrid, profile: &RefractiveProfile, ctx: &WaveContext) -> Result<()> {
    if grid.len() != profile.values.len() {
        return invalid(format!(
            "grid has {} points but profile has {} values",
            grid.len(),
            profile.values.len()
        ));
    }
    if grid.dim() != ctx.dim() {
        return invalid("grid and wave context disagree on dimension");
    }
    Ok(())
}

/// Free-space Green function between two grid points, with the singular
/// diagonal replaced by its cell average.
fn free_entry(grid: &DomainGrid, ctx: &WaveContext, i: usize, j: usize) -> c64 {
    if i == j {
        self_cell_integral(grid.weights[i], ctx) / grid.weights[i]
    } else {
        g0_radial(distance(&grid.points[i], &grid.points[j]), ctx)
    }
}

/// Value of the free Green function between grid point `i` and an arbitrary
/// point `y`; coincident points use the cell average.
fn free_entry_at(grid: &DomainGrid, ctx: &WaveContext, i: usize, y: &Point) -> c64 {
    let r = distance(&grid.points[i], y);
    if r == 0.0 {
        self_cell_integral(grid.weights[i], ctx) / grid.weights[i]
    } else {
        g0_radial(r, ctx)
    }
}

/// Column `G0(x_i, x_j)` for the free-space Green function on the grid.
pub fn free_green_column(grid: &DomainGrid, ctx: &WaveContext, j: usize) -> Vec<c64> {
    (0..grid.len()).map(|i| free_entry(grid, ctx, i, j)).collect()
}

pub fn assemble_kd(grid: &DomainGrid, profile: &RefractiveProfile, ctx: &WaveContext) -> Result<DiscreteOperator> {
    check_sizes(grid, profile, ctx)?;
    let n = grid.len();
    let rows: Vec<Vec<c64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| -free_entry(grid, ctx, i, j) * (profile.values[j] * grid.weights[j]))
                .collect()
        })
        .collect();
    let matrix = Mat::from_fn(n, n, |i, j| rows[i][j]);
    Ok(DiscreteOperator {
        matrix,
        grid: grid.clone(),
        profile: profile.clone(),
        ctx: *ctx,
        diagonal_rule: DiagonalRule::EqualMeasureAnalytic,
        spectrum: OnceLock::new(),
    })
}

impl DiscreteOperator {
    /// Wrap an explicit matrix, e.g. a synthetic test operator. The free Green
    /// function is then recovered from the identity `M = -G0 diag(n w)`.
    pub fn from_matrix(
        matrix: Mat<c64>,
        grid: DomainGrid,
        profile: RefractiveProfile,
        ctx: WaveContext,
    ) -> Result<Self> {
        check_sizes(&grid, &profile, &ctx)?;
        if matrix.nrows() != grid.len() || matrix.ncols() != grid.len() {
            return invalid("matrix shape does not match grid size");
        }
        Ok(Self {
            matrix,
            grid,
            profile,
            ctx,
            diagonal_rule: DiagonalRule::Explicit,
            spectrum: OnceLock::new(),
        })
    }

    pub fn matrix(&self) -> MatRef<'_, c64> {
        self.matrix.as_ref()
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn profile(&self) -> &RefractiveProfile {
        &self.profile
    }

    pub fn ctx(&self) -> &WaveContext {
        &self.ctx
    }

    pub fn diagonal_rule(&self) -> DiagonalRule {
        self.diagonal_rule
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.grid.weights
    }

    /// `n_j w_j`, the column scaling of the kernel.
    pub fn source_weights(&self) -> Vec<f64> {
        self.profile.values.iter().zip(&self.grid.weights).map(|(n, w)| n * w).collect()
    }

    pub fn apply_kd(&self, f: &[c64]) -> Result<Vec<c64>> {
        if f.len() != self.len() {
            return invalid(format!("vector of length {} applied to operator of size {}", f.len(), self.len()));
        }
        Ok(linalg::matvec(self.matrix.as_ref(), f))
    }

    /// Eigenvalues of the matrix, computed once and cached.
    pub fn spectrum(&self) -> Result<&[c64]> {
        if let Some(s) = self.spectrum.get() {
            return Ok(s);
        }
        let s = linalg::eigenvalues(self.matrix.as_ref())?;
        Ok(self.spectrum.get_or_init(|| s))
    }

    /// Fails with [`Error::ResonanceProximity`] when `z` is within tolerance of
    /// the spectrum.
    pub fn check_resolvent_point(&self, z: c64) -> Result<()> {
        check_against(self.spectrum()?.iter().copied(), z)
    }

    fn free_entry(&self, i: usize, j: usize) -> c64 {
        match self.diagonal_rule {
            DiagonalRule::EqualMeasureAnalytic => free_entry(&self.grid, &self.ctx, i, j),
            DiagonalRule::Explicit => -self.matrix[(i, j)] / (self.profile.values[j] * self.grid.weights[j]),
        }
    }

    pub fn free_column(&self, j: usize) -> Vec<c64> {
        (0..self.len()).map(|i| self.free_entry(i, j)).collect()
    }

    /// `G0(x_i, x_j)` over the grid, diagonal by the operator's rule.
    pub fn free_gram(&self) -> Mat<c64> {
        Mat::from_fn(self.len(), self.len(), |i, j| self.free_entry(i, j))
    }

    fn free_column_at(&self, y: &Point) -> Vec<c64> {
        match self.grid.points.iter().position(|p| p == y) {
            Some(j) => self.free_column(j),
            None => (0..self.len()).map(|i| free_entry_at(&self.grid, &self.ctx, i, y)).collect(),
        }
    }

    fn solve_columns(&self, tau: f64, free: Mat<c64>, sources: Vec<Point>) -> Result<GreenField> {
        if tau == 0.0 {
            return Ok(GreenField { values: free, tau, includes_free_part: true, sources });
        }
        self.check_resolvent_point(c64::new(1.0 / tau, 0.0))?;
        let n = self.len();
        let system = linalg::identity(n) - linalg::scaled(self.matrix.as_ref(), c64::new(tau, 0.0));
        let rhs = linalg::scaled((&self.matrix * &free).as_ref(), c64::new(tau, 0.0));
        let v = linalg::solve(system.as_ref(), rhs.as_ref());
        if !linalg::is_finite(v.as_ref()) {
            return Err(Error::Numeric("Lippmann-Schwinger solve produced non-finite values".into()));
        }
        Ok(GreenField { values: free + v, tau, includes_free_part: true, sources })
    }

    /// `G(·, x_j)` for the source at grid point `source_index`.
    pub fn solve_green_direct(&self, tau: f64, source_index: usize) -> Result<GreenField> {
        if source_index >= self.len() {
            return invalid(format!("source index {source_index} out of range"));
        }
        let free = linalg::from_vec_column(&self.free_column(source_index));
        self.solve_columns(tau, free, vec![self.grid.points[source_index]])
    }

    /// `G(·, y)` for an arbitrary source point `y` (inside or outside `D`).
    pub fn solve_green_at(&self, tau: f64, y: &Point) -> Result<GreenField> {
        let free = linalg::from_vec_column(&self.free_column_at(y));
        self.solve_columns(tau, free, vec![*y])
    }

    /// All columns `G(x_i, x_j)`.
    pub fn green_matrix(&self, tau: f64) -> Result<GreenField> {
        self.solve_columns(tau, self.free_gram(), self.grid.points.clone())
    }

    /// Lippmann-Schwinger representation of `G(x_ext, x0)` for each column of
    /// `field` and each exterior point. Returns an `m × M` matrix.
    pub fn radiate_many(&self, field: &GreenField, exterior: &[Point]) -> Result<Mat<c64>> {
        if field.values.nrows() != self.len() {
            return invalid("field does not live on this operator's grid");
        }
        if let Some(p) = exterior.iter().find(|p| self.grid.shape.contains(p)) {
            return invalid(format!("point {p:?} lies inside D; use the grid column instead"));
        }
        let n = self.len();
        let nw = self.source_weights();
        let k = &self.ctx;
        let to_grid = Mat::from_fn(exterior.len(), n, |m, j| {
            g0_radial(distance(&exterior[m], &self.grid.points[j]), k) * nw[j]
        });
        let direct = Mat::from_fn(exterior.len(), field.sources.len(), |m, s| {
            g0_radial(distance(&exterior[m], &field.sources[s]), k)
        });
        let scattered = &to_grid * &field.values;
        Ok(direct - linalg::scaled(scattered.as_ref(), c64::new(field.tau, 0.0)))
    }

    pub fn radiate(&self, field: &GreenField, column: usize, x_ext: &Point) -> Result<c64> {
        if column >= field.values.ncols() {
            return invalid("column out of range");
        }
        let single = GreenField {
            values: Mat::from_fn(field.values.nrows(), 1, |i, _| field.values[(i, column)]),
            tau: field.tau,
            includes_free_part: field.includes_free_part,
            sources: vec![field.sources[column]],
        };
        Ok(self.radiate_many(&single, std::slice::from_ref(x_ext))?[(0, 0)])
    }

    pub fn singular_values(&self) -> Result<Vec<f64>> {
        linalg::singular_values(self.matrix.as_ref())
    }
}

pub(crate) fn check_against(spectrum: impl IntoIterator<Item = c64>, z: c64) -> Result<()> {
    check_resonance(spectrum, z, RESONANCE_TOL)
}

/// Fails when `|z − λ| < tol (1 + |λ|)` for some `λ` in `spectrum`.
pub fn check_resonance(spectrum: impl IntoIterator<Item = c64>, z: c64, tol: f64) -> Result<()> {
    for lam in spectrum {
        if (z - lam).norm() < tol * (1.0 + lam.norm()) {
            return Err(Error::ResonanceProximity { z, eigenvalue: lam });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_disk_grid, sample_profile, ProfileKind, Shape};
    use crate::kernels::g0;
    use rand::{Rng, SeedableRng};

    fn ctx2() -> WaveContext {
        WaveContext::new(1.0, 2).unwrap()
    }

    fn disk_op(r: f64, cells: usize, kind: ProfileKind) -> DiscreteOperator {
        let g = build_disk_grid(r, cells, &ctx2()).unwrap();
        let p = sample_profile(&g, kind).unwrap();
        assemble_kd(&g, &p, &ctx2()).unwrap()
    }

    fn bump() -> ProfileKind {
        ProfileKind::RadialBump { center: [0.2, -0.1, 0.0], width: 0.6, peak: 2.5 }
    }

    fn synthetic(matrix: Mat<c64>) -> DiscreteOperator {
        let n = matrix.nrows();
        let pts: Vec<Point> = (0..n).map(|i| [0.01 * i as f64, 0.0, 0.0]).collect();
        let g = DomainGrid::from_points(pts, vec![1.0; n], 0.01, Shape::Disk { radius: 1.0 }).unwrap();
        let p = sample_profile(&g, ProfileKind::Constant(1.0)).unwrap();
        DiscreteOperator::from_matrix(matrix, g, p, ctx2()).unwrap()
    }

    #[test]
    fn two_point_entries() {
        let pts = vec![[-0.4, 0.0, 0.0], [0.4, 0.0, 0.0]];
        let g = DomainGrid::from_points(pts, vec![0.3, 0.5], 0.5, Shape::Disk { radius: 1.0 }).unwrap();
        let p = sample_profile(&g, ProfileKind::Constant(1.0)).unwrap();
        let op = assemble_kd(&g, &p, &ctx2()).unwrap();
        let expect = -g0(&g.points[0], &g.points[1], &ctx2()).unwrap() * 0.5;
        assert!((op.matrix()[(0, 1)] - expect).norm() < 1e-16);
        assert_eq!(op.diagonal_rule(), DiagonalRule::EqualMeasureAnalytic);
    }

    #[test]
    fn mismatched_sizes() {
        let g = build_disk_grid(1.0, 6, &ctx2()).unwrap();
        let other = build_disk_grid(1.0, 8, &ctx2()).unwrap();
        let p = sample_profile(&other, ProfileKind::Constant(1.0)).unwrap();
        assert!(assemble_kd(&g, &p, &ctx2()).is_err());
        let op = disk_op(1.0, 6, ProfileKind::Constant(1.0));
        assert!(op.apply_kd(&[c64::new(1.0, 0.0)]).is_err());
    }

    #[test]
    fn linear_in_profile_and_kernel_symmetric() {
        let a = disk_op(1.0, 10, ProfileKind::Constant(1.0));
        let b = disk_op(1.0, 10, ProfileKind::Constant(2.0));
        let diff = (b.matrix() - linalg::scaled(a.matrix(), c64::new(2.0, 0.0))).norm_l2();
        assert!(diff < 1e-14 * a.matrix().norm_l2());

        let op = disk_op(1.0, 10, bump());
        let nw = op.source_weights();
        let s = Mat::from_fn(op.len(), op.len(), |i, j| op.matrix()[(i, j)] / nw[j]);
        let asym = (&s - s.transpose()).norm_l2();
        assert!(asym < 1e-12 * s.norm_l2());
    }

    #[test]
    fn row_sums_match_monte_carlo_kernel_integral() {
        let op = disk_op(1.0, 16, ProfileKind::Constant(1.0));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let ctx = ctx2();
        for &i in &[0usize, op.len() / 3, op.grid().center_index()] {
            let x = op.grid().points[i];
            let samples = 200_000;
            let mut acc = 0.0;
            let mut hits = 0;
            while hits < samples {
                let y = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0];
                if y[0] * y[0] + y[1] * y[1] > 1.0 {
                    continue;
                }
                hits += 1;
                acc += g0_radial(distance(&x, &y), &ctx).norm();
            }
            let integral = std::f64::consts::PI * acc / samples as f64;
            let row: f64 = (0..op.len()).map(|j| op.matrix()[(i, j)].norm()).sum();
            assert!((row - integral).abs() < 0.05 * integral, "row {row} vs MC {integral}");
        }
    }

    #[test]
    fn apply_contracts() {
        let op = disk_op(1.0, 8, bump());
        let n = op.len();
        assert!(op.apply_kd(&vec![c64::new(0.0, 0.0); n]).unwrap().iter().all(|z| z.norm() == 0.0));
        let mut e = vec![c64::new(0.0, 0.0); n];
        e[3] = c64::new(1.0, 0.0);
        let col = op.apply_kd(&e).unwrap();
        for i in 0..n {
            assert_eq!(col[i], op.matrix()[(i, 3)]);
        }
        let f: Vec<c64> = (0..n).map(|i| c64::new((i as f64).sin(), 0.1 * i as f64)).collect();
        let twice = op.apply_kd(&op.apply_kd(&f).unwrap()).unwrap();
        let sq = op.matrix() * op.matrix();
        let direct = linalg::matvec(sq.as_ref(), &f);
        let err: f64 = twice.iter().zip(&direct).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-12 * linalg::vec_norm(&direct));
    }

    #[test]
    fn nystrom_consistency_under_refinement() {
        // lattices with 5, 15 and 45 cells share the coarse cell centers
        let f = |p: &Point| c64::new((1.3 * p[0]).cos() * (0.7 * p[1]).exp(), p[0] * p[1]);
        let eval = |cells: usize| {
            let op = disk_op(1.0, cells, ProfileKind::Constant(1.0));
            let fv: Vec<c64> = op.grid().points.iter().map(f).collect();
            (op.grid().points.clone(), op.apply_kd(&fv).unwrap())
        };
        let (coarse_pts, coarse) = eval(5);
        let (mid_pts, mid) = eval(15);
        let (fine_pts, fine) = eval(45);
        let pick = |pts: &[Point], vals: &[c64], q: &Point| {
            let i = pts.iter().position(|p| distance(p, q) < 1e-12).expect("nested lattice");
            vals[i]
        };
        let mut d1: f64 = 0.0;
        let mut d2: f64 = 0.0;
        for (q, c) in coarse_pts.iter().zip(&coarse) {
            let m = pick(&mid_pts, &mid, q);
            let fi = pick(&fine_pts, &fine, q);
            d1 = d1.max((c - m).norm());
            d2 = d2.max((m - fi).norm());
        }
        assert!(d2 < 0.6 * d1, "refinement differences {d1} -> {d2}");
    }

    #[test]
    fn tau_zero_is_free_field() {
        let op = disk_op(1.0, 8, bump());
        let g = op.solve_green_direct(0.0, 5).unwrap();
        let free = op.free_column(5);
        for i in 0..op.len() {
            assert_eq!(g.values[(i, 0)], free[i]);
            if i != 5 {
                assert_eq!(free[i], g0(&op.grid().points[i], &op.grid().points[5], op.ctx()).unwrap());
            }
        }
        let gm = op.green_matrix(0.0).unwrap();
        assert_eq!(gm.values, op.free_gram());
    }

    #[test]
    fn scalar_toy_system() {
        let mu = c64::new(0.3, 0.1);
        let op = synthetic(Mat::from_fn(1, 1, |_, _| mu));
        let tau = 1.7;
        let g = op.solve_green_direct(tau, 0).unwrap();
        let g0col = op.free_column(0)[0];
        let t = c64::new(tau, 0.0);
        let v = t * mu / (1.0 - t * mu) * g0col;
        assert!((g.values[(0, 0)] - (g0col + v)).norm() < 1e-15 * v.norm().max(1.0));
    }

    #[test]
    fn resonance_proximity() {
        let op = synthetic(Mat::from_fn(2, 2, |i, j| if i == j { c64::new([0.5, 0.2][i], 0.0) } else { c64::new(0.0, 0.0) }));
        match op.solve_green_direct(2.0, 0) {
            Err(Error::ResonanceProximity { eigenvalue, .. }) => assert!((eigenvalue.re - 0.5).abs() < 1e-14),
            other => panic!("expected resonance error, got {other:?}"),
        }
        assert!(op.green_matrix(5.0).is_err());
        assert!(op.solve_green_direct(3.0, 0).is_ok());
    }

    #[test]
    fn direct_solve_residual() {
        let op = disk_op(1.0, 10, bump());
        let tau = 3.0;
        let j = 7;
        let g = op.solve_green_direct(tau, j).unwrap();
        let free = op.free_column(j);
        let v: Vec<c64> = (0..op.len()).map(|i| g.values[(i, 0)] - free[i]).collect();
        let mv = op.apply_kd(&v).unwrap();
        let mf = op.apply_kd(&free).unwrap();
        let t = c64::new(tau, 0.0);
        let res: Vec<c64> = (0..op.len()).map(|i| v[i] - t * mv[i] - t * mf[i]).collect();
        let rhs: Vec<c64> = mf.iter().map(|z| t * z).collect();
        assert!(linalg::vec_norm(&res) <= 1e-10 * linalg::vec_norm(&rhs));
    }

    #[test]
    fn resolvent_form_agrees() {
        // G = G0 - (1/τ - M)^{-1} M² [e_j / (n_j w_j)]
        let op = disk_op(1.0, 10, bump());
        let tau = 2.5;
        let j = 11;
        let g = op.solve_green_direct(tau, j).unwrap();
        let n = op.len();
        let nw = op.source_weights();
        let m = op.matrix();
        let shifted = linalg::scaled(linalg::identity(n).as_ref(), c64::new(1.0 / tau, 0.0)) - m;
        let delta = Mat::from_fn(n, 1, |i, _| if i == j { c64::new(1.0 / nw[j], 0.0) } else { c64::new(0.0, 0.0) });
        let rhs = m * (m * &delta);
        let v = linalg::solve(shifted.as_ref(), rhs.as_ref());
        let free = op.free_column(j);
        let mut err = 0.0;
        let mut scale = 0.0;
        for i in 0..n {
            err += (g.values[(i, 0)] - (free[i] - v[(i, 0)])).norm_sqr();
            scale += g.values[(i, 0)].norm_sqr();
        }
        assert!((err / scale).sqrt() < 1e-9);
    }

    #[test]
    fn green_matrix_reciprocity() {
        for kind in [ProfileKind::Constant(1.0), bump()] {
            let op = disk_op(1.0, 10, kind);
            let g = op.green_matrix(4.0).unwrap().values;
            let asym = (&g - g.transpose()).norm_l2() / g.norm_l2();
            assert!(asym < 1e-8, "{asym}");
        }
    }

    #[test]
    fn born_expansion_is_second_order() {
        let op = disk_op(1.0, 10, ProfileKind::Constant(1.0));
        let free = op.free_gram();
        let m = op.matrix();
        let err = |tau: f64| {
            let g = op.green_matrix(tau).unwrap().values;
            let born = &free + linalg::scaled((m * &free).as_ref(), c64::new(tau, 0.0));
            (g - born).norm_l2()
        };
        let (e1, e2) = (err(0.02), err(0.01));
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn radiate_contracts() {
        let op = disk_op(1.0, 10, bump());
        let x_ext = [2.0, 0.5, 0.0];
        let free = op.solve_green_direct(0.0, 4).unwrap();
        let r0 = op.radiate(&free, 0, &x_ext).unwrap();
        assert_eq!(r0, g0(&x_ext, &op.grid().points[4], op.ctx()).unwrap());
        assert!(op.radiate(&free, 0, &[0.1, 0.0, 0.0]).is_err());

        // swapped roles: field at x_4 from a source at x_ext
        let tau = 3.0;
        let field = op.solve_green_direct(tau, 4).unwrap();
        let radiated = op.radiate(&field, 0, &x_ext).unwrap();
        let swapped = op.solve_green_at(tau, &x_ext).unwrap().values[(4, 0)];
        assert!((radiated - swapped).norm() < 1e-6 * radiated.norm());
    }

    #[test]
    fn radiate_matches_enlarged_grid() {
        // enlarged disk on the same lattice; zero contrast outside D
        let ctx = ctx2();
        let small = build_disk_grid(1.0, 10, &ctx).unwrap();
        let h = small.cell_size;
        let big = build_disk_grid(2.0, 20, &ctx).unwrap();
        assert!((big.cell_size - h).abs() < 1e-15);
        let kind = bump();
        let sp = sample_profile(&small, kind).unwrap();
        let op = assemble_kd(&small, &sp, &ctx).unwrap();
        let values = big
            .points
            .iter()
            .map(|p| {
                if small.points.iter().any(|q| distance(p, q) < 1e-12) {
                    kind.evaluate(p)
                } else {
                    0.0
                }
            })
            .collect();
        let bp = RefractiveProfile { values, kind };
        let big_op = assemble_kd(&big, &bp, &ctx).unwrap();

        let tau = 2.0;
        let src = 6;
        let x0 = small.points[src];
        let j_big = big.points.iter().position(|p| distance(p, &x0) < 1e-12).unwrap();
        let ext_idx = big.points.iter().position(|p| p[0] > 1.3).unwrap();
        let x_ext = big.points[ext_idx];

        let field = op.solve_green_direct(tau, src).unwrap();
        let radiated = op.radiate(&field, 0, &x_ext).unwrap();
        let direct = big_op.solve_green_direct(tau, j_big).unwrap().values[(ext_idx, 0)];
        assert!((radiated - direct).norm() < 1e-10 * direct.norm(), "{radiated} vs {direct}");
    }

    #[test]
    fn singular_value_contracts() {
        let zero = synthetic(Mat::zeros(3, 3));
        assert!(zero.singular_values().unwrap().iter().all(|&s| s == 0.0));
        let op = disk_op(1.0, 10, bump());
        let s = op.singular_values().unwrap();
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        let fro2: f64 = s.iter().map(|x| x * x).sum();
        let m2 = op.matrix().norm_l2().powi(2);
        assert!((fro2 - m2).abs() < 1e-10 * m2);
        assert!(*s.last().unwrap() > 0.0);
    }

    #[test]
    fn hilbert_schmidt_proxy_stabilises() {
        // Σσ² = ‖M‖_F² approximates ∫∫ |G0|² over D×D once weights are folded in
        let hs = |cells: usize| {
            let op = disk_op(1.0, cells, ProfileKind::Constant(1.0));
            op.matrix().norm_l2().powi(2)
        };
        let (a, b) = (hs(16), hs(32));
        assert!((a - b).abs() < 0.05 * b, "{a} vs {b}");
    }
}
