//! Expansions of the Green function in the spectral data of the volume
//! operator.
//!
//! With `V = G − G0` sampled on the grid and `z = 1/τ`,
//!
//! * `V_ij = Σ α_{γγ'} e_γ(x_i) conj(e_γ'(x_j)) / n(x_j)`, `α = −D(z)`,
//! * `V_ij = Σ β_{γγ'} u_γ(x_i) conj(u_γ'(x_j)) / n(x_j)`, `β = A α Aᴴ`,
//! * `G0_ij = Σ ᾱ_{γγ'} e_γ(x_i) conj(e_γ'(x_j)) / n(x_j)`, `ᾱ = −B T A`.
//!
//! The `1/n(x0)` factor is applied when a field is evaluated.

use faer::{c64, Mat, MatRef};

use crate::error::{invalid, Result};
use crate::grid::{distance, norm, DomainGrid, Point};
use crate::linalg;
use crate::spectral::{build_d_matrix, build_h_matrix, SpectralSystem};
use crate::volume::{DiscreteOperator, GreenField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionKind {
    /// `G − G0` in the orthonormal basis.
    Alpha,
    /// `G − G0` in the mode basis.
    Beta,
    /// `G0` in the orthonormal basis.
    Homogeneous,
}

impl ExpansionKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExpansionKind::Alpha => "alpha",
            ExpansionKind::Beta => "beta",
            ExpansionKind::Homogeneous => "homogeneous",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExpansionCoefficients {
    pub kind: ExpansionKind,
    /// Row `γ`, column `γ'` pairs `b_γ(x)` with `conj(b_γ'(x0))`.
    pub coefficients: Mat<c64>,
    pub tau: f64,
    /// `1/τ`; absent for `τ = 0` and for the homogeneous expansion.
    pub z: Option<c64>,
    /// `1/n(x_j)`, applied to source columns at evaluation time.
    pub inv_n: Vec<f64>,
}

impl ExpansionCoefficients {
    /// `Σ |c_{γγ'}|²`.
    pub fn mass(&self) -> f64 {
        self.coefficients.norm_l2().powi(2)
    }

    fn basis<'a>(&self, sys: &'a SpectralSystem) -> MatRef<'a, c64> {
        match self.kind {
            ExpansionKind::Beta => sys.u(),
            _ => sys.e(),
        }
    }
}

fn inv_n(op: &DiscreteOperator) -> Vec<f64> {
    op.profile().values.iter().map(|n| 1.0 / n).collect()
}

fn check_sizes(sys: &SpectralSystem, op: &DiscreteOperator) -> Result<()> {
    if sys.len() != op.len() {
        return invalid(format!("spectral system of size {} for operator of size {}", sys.len(), op.len()));
    }
    Ok(())
}

pub fn alpha_expansion(sys: &SpectralSystem, op: &DiscreteOperator, tau: f64) -> Result<ExpansionCoefficients> {
    check_sizes(sys, op)?;
    if !tau.is_finite() {
        return invalid("contrast must be finite");
    }
    let n = sys.len();
    let (coefficients, z) = if tau == 0.0 {
        (linalg::zeros(n, n), None)
    } else {
        let z = c64::new(1.0 / tau, 0.0);
        let d = build_d_matrix(sys, z)?;
        (linalg::scaled(d.entries.as_ref(), c64::new(-1.0, 0.0)), Some(z))
    };
    Ok(ExpansionCoefficients { kind: ExpansionKind::Alpha, coefficients, tau, z, inv_n: inv_n(op) })
}

pub fn beta_expansion(sys: &SpectralSystem, op: &DiscreteOperator, tau: f64) -> Result<ExpansionCoefficients> {
    let alpha = alpha_expansion(sys, op, tau)?;
    Ok(ExpansionCoefficients {
        kind: ExpansionKind::Beta,
        coefficients: beta_from_alpha(sys, alpha.coefficients.as_ref()),
        ..alpha
    })
}

/// `β = A α Aᴴ`, from `u_γ = Σ b_{γγ'} e_γ'`.
pub fn beta_from_alpha(sys: &SpectralSystem, alpha: MatRef<'_, c64>) -> Mat<c64> {
    sys.a() * alpha * sys.a().adjoint()
}

/// `α = B β Bᴴ`.
pub fn alpha_from_beta(sys: &SpectralSystem, beta: MatRef<'_, c64>) -> Mat<c64> {
    sys.b() * beta * sys.b().adjoint()
}

pub fn homogeneous_expansion(sys: &SpectralSystem, op: &DiscreteOperator) -> Result<ExpansionCoefficients> {
    check_sizes(sys, op)?;
    let t = build_h_matrix(sys).entries;
    let bta = sys.b() * &t * sys.a();
    Ok(ExpansionCoefficients {
        kind: ExpansionKind::Homogeneous,
        coefficients: linalg::scaled(bta.as_ref(), c64::new(-1.0, 0.0)),
        tau: 0.0,
        z: None,
        inv_n: inv_n(op),
    })
}

/// `Σ_{γ<rank} Σ_γ' c_{γγ'} b_γ(x_i) conj(b_γ'(x_j)) / n(x_j)`.
fn partial_sum(coeffs: &ExpansionCoefficients, sys: &SpectralSystem, rank: usize) -> Mat<c64> {
    let basis = coeffs.basis(sys);
    let n = basis.nrows();
    if rank == 0 {
        return linalg::zeros(n, n);
    }
    let left = basis.subcols(0, rank);
    let rows = coeffs.coefficients.as_ref().subrows(0, rank);
    let right = Mat::from_fn(basis.ncols(), n, |g, j| basis[(j, g)].conj() * coeffs.inv_n[j]);
    left * (rows * right)
}

/// Partial-sum field from the first `rank` expansion rows; `G0` is added for
/// the expansions of `G − G0`.
pub fn reconstruct_green(
    coeffs: &ExpansionCoefficients,
    sys: &SpectralSystem,
    op: &DiscreteOperator,
    rank: usize,
) -> Result<GreenField> {
    check_sizes(sys, op)?;
    if rank > sys.len() {
        return invalid(format!("rank {rank} exceeds basis size {}", sys.len()));
    }
    let part = partial_sum(coeffs, sys, rank);
    let values = match coeffs.kind {
        ExpansionKind::Homogeneous => part,
        _ => op.free_gram() + part,
    };
    Ok(GreenField { values, tau: coeffs.tau, includes_free_part: true, sources: op.grid().points.clone() })
}

/// The field an expansion represents, from the direct solver: `G − G0` for
/// α/β and the `G0` Gram matrix for the homogeneous expansion.
pub fn reference_field(coeffs: &ExpansionCoefficients, op: &DiscreteOperator) -> Result<Mat<c64>> {
    let free = op.free_gram();
    match coeffs.kind {
        ExpansionKind::Homogeneous => Ok(free),
        _ => Ok(op.green_matrix(coeffs.tau)?.values - free),
    }
}

pub fn l2_dd_norm(m: MatRef<'_, c64>, weights: &[f64]) -> f64 {
    linalg::weighted_frobenius(m, weights, weights)
}

/// Relative `L²(D×D)` error of the partial sums at ranks `0..=N` against
/// the direct solve. Zero reference gives zero error.
pub fn truncation_error_curve(
    coeffs: &ExpansionCoefficients,
    sys: &SpectralSystem,
    op: &DiscreteOperator,
) -> Result<Vec<(usize, f64)>> {
    check_sizes(sys, op)?;
    let reference = reference_field(coeffs, op)?;
    truncation_curve_against(coeffs, sys, reference.as_ref())
}

pub fn truncation_curve_against(
    coeffs: &ExpansionCoefficients,
    sys: &SpectralSystem,
    reference: MatRef<'_, c64>,
) -> Result<Vec<(usize, f64)>> {
    let w = sys.weights();
    let n = sys.len();
    let ref_norm = l2_dd_norm(reference, w);
    let basis = coeffs.basis(sys);
    let right = Mat::from_fn(n, n, |g, j| basis[(j, g)].conj() * coeffs.inv_n[j]);
    let row_terms = coeffs.coefficients.as_ref() * &right;
    let mut residual = reference.to_owned();
    let rel = |r: MatRef<'_, c64>| if ref_norm == 0.0 { 0.0 } else { l2_dd_norm(r, w) / ref_norm };
    let mut curve = Vec::with_capacity(n + 1);
    curve.push((0, rel(residual.as_ref())));
    for g in 0..n {
        for j in 0..n {
            let c = row_terms[(g, j)];
            if c == c64::new(0.0, 0.0) {
                continue;
            }
            for i in 0..n {
                residual[(i, j)] -= basis[(i, g)] * c;
            }
        }
        curve.push((g + 1, rel(residual.as_ref())));
    }
    Ok(curve)
}

/// Relative `L²(D×D)` mismatch of the full reconstruction against the direct solve.
pub fn oracle_error(coeffs: &ExpansionCoefficients, sys: &SpectralSystem, op: &DiscreteOperator) -> Result<f64> {
    let reference = reference_field(coeffs, op)?;
    let part = partial_sum(coeffs, sys, sys.len());
    let w = sys.weights();
    let ref_norm = l2_dd_norm(reference.as_ref(), w);
    let diff = l2_dd_norm((part - &reference).as_ref(), w);
    Ok(if ref_norm == 0.0 { diff } else { diff / ref_norm })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsfProfile {
    /// Signed distance from the source along the sampling line.
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub fwhm: Option<f64>,
    pub source_point: Point,
}

impl PsfProfile {
    pub fn from_samples(radii: Vec<f64>, values: Vec<f64>, source_point: Point) -> Result<Self> {
        if radii.len() != values.len() {
            return invalid("radii and values differ in length");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("PSF samples must be finite");
        }
        let fwhm = fwhm_from_samples(&radii, &values);
        Ok(Self { radii, values, fwhm, source_point })
    }
}

/// Width between the half-maximum crossings of `|v|` on either side of the
/// sample at `r = 0`, by linear interpolation. `radii` must be increasing.
pub fn fwhm_from_samples(radii: &[f64], values: &[f64]) -> Option<f64> {
    let c = radii
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)?;
    let peak = values[c].abs();
    if peak == 0.0 {
        return None;
    }
    let half = 0.5 * peak;
    let crossing = |step: isize| -> Option<f64> {
        let mut i = c as isize;
        loop {
            let next = i + step;
            if next < 0 || next as usize >= values.len() {
                return None;
            }
            let (a, b) = (values[i as usize].abs(), values[next as usize].abs());
            if b < half {
                let t = (a - half) / (a - b);
                let (ra, rb) = (radii[i as usize], radii[next as usize]);
                return Some(ra + t * (rb - ra));
            }
            i = next;
        }
    };
    Some(crossing(1)? - crossing(-1)?)
}

/// `Im G(x, x0)` at the grid points lying on the line through `x0` with the
/// given direction.
pub fn psf_profile(
    field: &GreenField,
    column: usize,
    grid: &DomainGrid,
    x0_index: usize,
    direction: &Point,
) -> Result<PsfProfile> {
    if field.values.nrows() != grid.len() {
        return invalid("field does not live on this grid");
    }
    if column >= field.values.ncols() || x0_index >= grid.len() {
        return invalid("source column or index out of range");
    }
    if (norm(direction) - 1.0).abs() > 1e-9 {
        return invalid("direction must be a unit vector");
    }
    let x0 = grid.points[x0_index];
    let tol = 1e-6 * grid.cell_size;
    let mut samples: Vec<(f64, f64)> = grid
        .points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let d = [p[0] - x0[0], p[1] - x0[1], p[2] - x0[2]];
            let t = d[0] * direction[0] + d[1] * direction[1] + d[2] * direction[2];
            let foot = [x0[0] + t * direction[0], x0[1] + t * direction[1], x0[2] + t * direction[2]];
            (distance(p, &foot) < tol).then(|| (t, field.values[(i, column)].im))
        })
        .collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (radii, values) = samples.into_iter().unzip();
    PsfProfile::from_samples(radii, values, x0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingReport {
    pub diagonal_mass: f64,
    pub offdiagonal_mass: f64,
    /// `(γ, γ', |c_{γγ'}|)` for the ten largest off-diagonal entries.
    pub largest_offdiagonal: Vec<(usize, usize, f64)>,
}

pub fn mode_mixing_report(coeffs: &ExpansionCoefficients) -> MixingReport {
    let c = &coeffs.coefficients;
    let mut diagonal_mass = 0.0;
    let mut offdiagonal_mass = 0.0;
    let mut off = Vec::new();
    for j in 0..c.ncols() {
        for i in 0..c.nrows() {
            let m = c[(i, j)].norm();
            if i == j {
                diagonal_mass += m * m;
            } else {
                offdiagonal_mass += m * m;
                off.push((i, j, m));
            }
        }
    }
    off.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    off.truncate(10);
    MixingReport { diagonal_mass, offdiagonal_mass, largest_offdiagonal: off }
}
