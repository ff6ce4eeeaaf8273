//! Non-Hermitian spectral data of the volume operator: ordered eigenvalues,
//! Jordan-chain indexing, mode basis `U`, its weighted Gram-Schmidt
//! orthonormalisation `E`, and the coefficient matrices `H`, `R(z)`, `D(z)`.
//!
//! Matrices are stored in operator (column) convention: `M U = U T` where
//! column `γ` of `T` holds the coefficients of `M u_γ`. The row-convention
//! entries `h_{γ,γ'}`, `d_{γ,γ'}` and `a_{γ,γ'}` are exposed by accessors.


use faer::{c64, Mat, MatRef};
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::volume::{DiscreteOperator, RESONANCE_TOL};

/// 1-based `(j, l, k)`: cluster, chain within cluster, position in chain.
/// The derived order is lexicographic and is the total order of the basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChainIndex {
    pub j: usize,
    pub l: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub j: usize,
    pub l: usize,
    pub len: usize,
    pub eigenvalue: c64,
    /// Column of `U` holding the `k = 1` member.
    pub start: usize,
}

/// Eigenvalue with the lengths of its Jordan chains, for synthetic systems.
#[derive(Debug, Clone, PartialEq)]
pub struct JordanCluster {
    pub eigenvalue: c64,
    pub chain_lengths: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SpectralSystem {
    eigenvalues: Vec<c64>,
    chains: Vec<Chain>,
    indices: Vec<ChainIndex>,
    chain_of: Vec<usize>,
    u: Mat<c64>,
    e: Mat<c64>,
    a: Mat<c64>,
    b: Mat<c64>,
    weights: Vec<f64>,
    cluster_tol: f64,
    warnings: Vec<String>,
}

/// Weighted orthonormalisation `U = E R` in `⟨f, g⟩ = Σ w conj(f) g`,
/// classical Gram-Schmidt with one reorthogonalisation pass.
pub fn weighted_gram_schmidt(u: MatRef<'_, c64>, weights: &[f64]) -> Result<(Mat<c64>, Mat<c64>)> {
    let (rows, n) = (u.nrows(), u.ncols());
    if weights.len() != rows {
        return invalid("weights do not match the number of rows");
    }
    let mut e = linalg::zeros(rows, n);
    let mut r = linalg::zeros(n, n);
    for p in 0..n {
        let mut v = linalg::column(u, p);
        let scale = linalg::weighted_norm(&v, weights);
        for _ in 0..2 {
            for q in 0..p {
                let eq = linalg::column(e.as_ref(), q);
                let c = linalg::weighted_inner(&eq, &v, weights);
                for i in 0..rows {
                    v[i] -= c * eq[i];
                }
                r[(q, p)] += c;
            }
        }
        let nrm = linalg::weighted_norm(&v, weights);
        if !(nrm > 1e-13 * scale) {
            return Err(Error::Numeric(format!("mode {p} is linearly dependent on its predecessors")));
        }
        r[(p, p)] = c64::new(nrm, 0.0);
        for i in 0..rows {
            e[(i, p)] = v[i] / nrm;
        }
    }
    Ok((e, r))
}

/// Unit weighted norm, with the first significant component real positive.
fn normalise_mode(v: &mut [c64], weights: &[f64]) {
    let nrm = linalg::weighted_norm(v, weights);
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let phase = v
        .iter()
        .find(|z| z.norm() > 1e-8 * max)
        .map(|z| z.conj() / z.norm())
        .unwrap_or(c64::new(1.0, 0.0));
    for z in v.iter_mut() {
        *z = *z * phase / nrm;
    }
}

fn by_modulus_then_phase(values: &[c64], tol: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].norm().total_cmp(&values[a].norm()));
    // runs of (numerically) equal modulus are ordered by ascending phase
    let mut start = 0;
    while start < order.len() {
        let m0 = values[order[start]].norm();
        let mut end = start + 1;
        while end < order.len() && (m0 - values[order[end]].norm()).abs() < tol {
            end += 1;
        }
        order[start..end].sort_by(|&a, &b| {
            values[a].arg().total_cmp(&values[b].arg())
        });
        start = end;
    }
    order
}

fn condition_number(m: MatRef<'_, c64>) -> Result<f64> {
    let s = linalg::singular_values(m)?;
    let smin = *s.last().unwrap_or(&0.0);
    Ok(if smin == 0.0 { f64::INFINITY } else { s[0] / smin })
}

pub const DEFECTIVE_CONDITION: f64 = 1e8;

/// Default clustering tolerance `1e-8 ‖M‖_F`.
pub fn default_cluster_tol(op: &DiscreteOperator) -> f64 {
    1e-8 * op.matrix().norm_l2()
}

pub fn eigendecompose(op: &DiscreteOperator, cluster_tol: f64) -> Result<SpectralSystem> {
    if !(cluster_tol > 0.0 && cluster_tol.is_finite()) {
        return invalid(format!("cluster tolerance must be positive, got {cluster_tol}"));
    }
    let weights = op.weights().to_vec();
    let n = op.len();
    let (values, vectors) = linalg::eigen(op.matrix())?;
    if values.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numeric("eigensolver returned non-finite eigenvalues".into()));
    }

    // greedy clustering in modulus order
    let order = by_modulus_then_phase(&values, cluster_tol);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match groups.iter_mut().find(|g| (values[g[0]] - values[i]).norm() < cluster_tol) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    let means: Vec<c64> = groups
        .iter()
        .map(|g| g.iter().map(|&i| values[i]).sum::<c64>() / g.len() as f64)
        .collect();
    let group_order = by_modulus_then_phase(&means, cluster_tol);

    let mut u = linalg::zeros(n, n);
    let mut eigenvalues = Vec::with_capacity(groups.len());
    let mut chains = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    let mut col = 0;
    for (jm1, &g) in group_order.iter().enumerate() {
        let members = &groups[g];
        eigenvalues.push(means[g]);
        for (lm1, &i) in members.iter().enumerate() {
            let mut v = linalg::column(vectors.as_ref(), i);
            normalise_mode(&mut v, &weights);
            for (r, z) in v.into_iter().enumerate() {
                u[(r, col)] = z;
            }
            chains.push(Chain { j: jm1 + 1, l: lm1 + 1, len: 1, eigenvalue: values[i], start: col });
            col += 1;
        }
        if members.len() > 1 {
            let block = u.as_ref().subcols(col - members.len(), members.len());
            let cond = condition_number(block)?;
            if cond > DEFECTIVE_CONDITION {
                warnings.push(format!(
                    "cluster {} (λ ≈ {}) of size {} looks defective: eigenvector condition {cond:.3e}",
                    jm1 + 1,
                    means[g],
                    members.len()
                ));
            }
        }
    }
    SpectralSystem::assemble(eigenvalues, chains, u, weights, cluster_tol, warnings)
}

/// Jordan matrix `T` (operator convention) for the given clusters.
pub fn jordan_matrix(clusters: &[JordanCluster]) -> Mat<c64> {
    let n: usize = clusters.iter().flat_map(|c| c.chain_lengths.iter()).sum();
    let mut t = linalg::zeros(n, n);
    let mut p = 0;
    for c in clusters {
        for &len in &c.chain_lengths {
            for k in 0..len {
                t[(p + k, p + k)] = c.eigenvalue;
                if k > 0 {
                    t[(p + k - 1, p + k)] = c64::new(1.0, 0.0);
                }
            }
            p += len;
        }
    }
    t
}

impl SpectralSystem {
    /// Exactly constructed system: the columns of `modes` are the chain
    /// members in the given cluster/chain order, used as-is (no normalisation).
    pub fn from_jordan(modes: Mat<c64>, clusters: &[JordanCluster], weights: Vec<f64>, cluster_tol: f64) -> Result<Self> {
        let n: usize = clusters.iter().flat_map(|c| c.chain_lengths.iter()).sum();
        if modes.ncols() != n || modes.nrows() != n {
            return invalid(format!("{}×{} mode matrix for {n} chain members", modes.nrows(), modes.ncols()));
        }
        if clusters.iter().any(|c| c.chain_lengths.is_empty() || c.chain_lengths.contains(&0)) {
            return invalid("every cluster needs at least one chain of positive length");
        }
        let mut chains = Vec::new();
        let mut start = 0;
        for (jm1, c) in clusters.iter().enumerate() {
            for (lm1, &len) in c.chain_lengths.iter().enumerate() {
                chains.push(Chain { j: jm1 + 1, l: lm1 + 1, len, eigenvalue: c.eigenvalue, start });
                start += len;
            }
        }
        let eigenvalues = clusters.iter().map(|c| c.eigenvalue).collect();
        Self::assemble(eigenvalues, chains, modes, weights, cluster_tol, Vec::new())
    }

    fn assemble(
        eigenvalues: Vec<c64>,
        chains: Vec<Chain>,
        u: Mat<c64>,
        weights: Vec<f64>,
        cluster_tol: f64,
        warnings: Vec<String>,
    ) -> Result<Self> {
        let mut indices = Vec::with_capacity(u.ncols());
        let mut chain_of = Vec::with_capacity(u.ncols());
        for (c, chain) in chains.iter().enumerate() {
            for k in 1..=chain.len {
                indices.push(ChainIndex { j: chain.j, l: chain.l, k });
                chain_of.push(c);
            }
        }
        let (e, r) = weighted_gram_schmidt(u.as_ref(), &weights)?;
        let a = linalg::upper_triangular_inverse(r.as_ref())?;
        Ok(Self { eigenvalues, chains, indices, chain_of, u, e, a, b: r, weights, cluster_tol, warnings })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Cluster eigenvalues `λ_1, λ_2, ...` in nonincreasing modulus.
    pub fn eigenvalues(&self) -> &[c64] {
        &self.eigenvalues
    }

    pub fn chains(&self) -> &[Chain] {
        &self.chains
    }

    pub fn indices(&self) -> &[ChainIndex] {
        &self.indices
    }

    pub fn position(&self, gamma: ChainIndex) -> Option<usize> {
        self.indices.binary_search(&gamma).ok()
    }

    pub fn chain_at(&self, p: usize) -> &Chain {
        &self.chains[self.chain_of[p]]
    }

    /// Eigenvalue of the chain containing basis position `p`.
    pub fn eigenvalue_at(&self, p: usize) -> c64 {
        self.chain_at(p).eigenvalue
    }

    pub fn u(&self) -> MatRef<'_, c64> {
        self.u.as_ref()
    }

    pub fn e(&self) -> MatRef<'_, c64> {
        self.e.as_ref()
    }

    /// `E = U A`, upper triangular.
    pub fn a(&self) -> MatRef<'_, c64> {
        self.a.as_ref()
    }

    /// `U = E B`, upper triangular, `B = A⁻¹`.
    pub fn b(&self) -> MatRef<'_, c64> {
        self.b.as_ref()
    }

    /// `a_{γ,γ'}` in `e_γ = Σ_{γ'} a_{γ,γ'} u_{γ'}`.
    pub fn a_coeff(&self, gamma: usize, gamma_p: usize) -> c64 {
        self.a[(gamma_p, gamma)]
    }

    /// `b_{γ,γ'}` in `u_γ = Σ_{γ'} b_{γ,γ'} e_{γ'}`.
    pub fn b_coeff(&self, gamma: usize, gamma_p: usize) -> c64 {
        self.b[(gamma_p, gamma)]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cluster_tol(&self) -> f64 {
        self.cluster_tol
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn mode(&self, p: usize) -> Vec<c64> {
        linalg::column(self.u.as_ref(), p)
    }

    pub fn is_semisimple(&self) -> bool {
        self.chains.iter().all(|c| c.len == 1)
    }

    /// Fails when `z` lies within the clustering or resonance tolerance of an
    /// eigenvalue.
    pub fn check_resolvent_point(&self, z: c64) -> Result<()> {
        for c in &self.chains {
            let lam = c.eigenvalue;
            let tol = self.cluster_tol.max(RESONANCE_TOL * (1.0 + lam.norm()));
            if (z - lam).norm() < tol {
                return Err(Error::ResonanceProximity { z, eigenvalue: lam });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoefficientKind {
    H,
    R(c64),
    D(c64),
}

/// Square coefficient matrix in total-order indexing, operator convention.
#[derive(Debug, Clone)]
pub struct CoefficientMatrix {
    pub entries: Mat<c64>,
    pub kind: CoefficientKind,
}

impl CoefficientMatrix {
    /// Row-convention entry: coefficient of basis vector `γ'` in the image of `γ`.
    pub fn coeff(&self, gamma: usize, gamma_p: usize) -> c64 {
        self.entries[(gamma_p, gamma)]
    }

    pub fn z(&self) -> Option<c64> {
        match self.kind {
            CoefficientKind::H => None,
            CoefficientKind::R(z) | CoefficientKind::D(z) => Some(z),
        }
    }
}

/// `K_D` in the mode basis: `λ` on the diagonal, `1` linking each chain member
/// to its predecessor.
pub fn build_h_matrix(sys: &SpectralSystem) -> CoefficientMatrix {
    let n = sys.len();
    let mut t = linalg::zeros(n, n);
    for c in sys.chains() {
        for k in 0..c.len {
            t[(c.start + k, c.start + k)] = c.eigenvalue;
            if k > 0 {
                t[(c.start + k - 1, c.start + k)] = c64::new(1.0, 0.0);
            }
        }
    }
    CoefficientMatrix { entries: t, kind: CoefficientKind::H }
}

/// `c_m`, the coefficient of `u_{k-m}` in `(z - K_D)⁻¹ K_D² u_k` along a
/// Jordan chain with eigenvalue `λ`.
pub fn resolvent_chain_coefficients(lambda: c64, chain_len: usize, z: c64) -> Result<Vec<c64>> {
    if z == lambda {
        return Err(Error::Pole(z));
    }
    let s = (z - lambda).inv();
    let l2 = lambda * lambda;
    let two_l = lambda * 2.0;
    let pw = |p: usize| -> c64 {
        let mut acc = c64::new(1.0, 0.0);
        for _ in 0..p {
            acc *= s;
        }
        acc
    };
    Ok((0..chain_len)
        .map(|m| match m {
            0 => l2 * s,
            1 => l2 * s * s + two_l * s,
            _ => l2 * pw(m + 1) + two_l * pw(m) + pw(m - 1),
        })
        .collect())
}

/// `(z - K_D)⁻¹ K_D²` in the mode basis.
pub fn build_r_matrix(sys: &SpectralSystem, z: c64) -> Result<CoefficientMatrix> {
    sys.check_resolvent_point(z)?;
    let n = sys.len();
    let mut t = linalg::zeros(n, n);
    for c in sys.chains() {
        let coeffs = resolvent_chain_coefficients(c.eigenvalue, c.len, z)?;
        for k in 0..c.len {
            for (m, cm) in coeffs.iter().enumerate().take(k + 1) {
                t[(c.start + k - m, c.start + k)] = *cm;
            }
        }
    }
    Ok(CoefficientMatrix { entries: t, kind: CoefficientKind::R(z) })
}

/// `(z - K_D)⁻¹ K_D²` in the orthonormal basis: `D = B R A`, so that
/// `E D Eᴴ W = (z - M)⁻¹ M²`.
pub fn build_d_matrix(sys: &SpectralSystem, z: c64) -> Result<CoefficientMatrix> {
    let r = build_r_matrix(sys, z)?;
    let d = sys.b() * &r.entries * sys.a();
    Ok(CoefficientMatrix { entries: d, kind: CoefficientKind::D(z) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeCheck {
    pub eigenvalue: c64,
    /// `‖M u_γ − λ u_γ − u_{γ−1}‖_W / ‖u_γ‖_W`.
    pub residual: f64,
    /// Angular frequency `|ξ|` of the peak of the mode's discrete spectrum.
    pub dominant_frequency: f64,
}

pub fn verify_resonant_mode(sys: &SpectralSystem, op: &DiscreteOperator, gamma: ChainIndex) -> Result<ModeCheck> {
    let p = sys.position(gamma).ok_or_else(|| Error::InvalidArgument(format!("no basis vector {gamma:?}")))?;
    if sys.len() != op.len() {
        return invalid("spectral system and operator differ in size");
    }
    let lambda = sys.eigenvalue_at(p);
    if lambda.norm() == 0.0 {
        return invalid("zero is not an eigenvalue of the volume operator");
    }
    let u = sys.mode(p);
    let mut r = op.apply_kd(&u)?;
    for i in 0..u.len() {
        r[i] -= lambda * u[i];
    }
    if gamma.k > 1 {
        let prev = sys.mode(p - 1);
        for i in 0..u.len() {
            r[i] -= prev[i];
        }
    }
    let w = sys.weights();
    let residual = linalg::weighted_norm(&r, w) / linalg::weighted_norm(&u, w);
    let dominant_frequency = dominant_frequency(op, &u);
    Ok(ModeCheck { eigenvalue: lambda, residual, dominant_frequency })
}

/// Zero-padded (×4) N-D FFT of a grid field on its lattice; returns `|ξ|` at
/// the spectral peak.
pub fn dominant_frequency(op: &DiscreteOperator, field: &[c64]) -> f64 {
    let grid = op.grid();
    let dim = grid.dim();
    let mut extent = [1usize; 3];
    for l in &grid.lattice {
        for a in 0..dim {
            extent[a] = extent[a].max(l[a] + 1);
        }
    }
    let mut shape = [1usize; 3];
    for a in 0..dim {
        shape[a] = 4 * extent[a];
    }
    let idx = |i: usize, j: usize, l: usize| (i * shape[1] + j) * shape[2] + l;
    let mut data = vec![c64::new(0.0, 0.0); shape.iter().product()];
    for (v, l) in field.iter().zip(&grid.lattice) {
        data[idx(l[0], l[1], l[2])] = *v;
    }
    let mut planner = FftPlanner::<f64>::new();
    for axis in 0..dim {
        let len = shape[axis];
        let fft = planner.plan_fft_forward(len);
        let mut line = vec![c64::new(0.0, 0.0); len];
        let others: Vec<[usize; 2]> = {
            let (a1, a2) = match axis {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            (0..shape[a1]).flat_map(|x| (0..shape[a2]).map(move |y| [x, y])).collect()
        };
        for o in others {
            let at = |t: usize| match axis {
                0 => idx(t, o[0], o[1]),
                1 => idx(o[0], t, o[1]),
                _ => idx(o[0], o[1], t),
            };
            for t in 0..len {
                line[t] = data[at(t)];
            }
            fft.process(&mut line);
            for t in 0..len {
                data[at(t)] = line[t];
            }
        }
    }
    let (best, _) = data
        .iter()
        .enumerate()
        .fold((0, -1.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
    let coords = [best / (shape[1] * shape[2]), (best / shape[2]) % shape[1], best % shape[2]];
    let mut xi2 = 0.0;
    for a in 0..dim {
        let n = shape[a] as isize;
        let mut c = coords[a] as isize;
        if c > n / 2 {
            c -= n;
        }
        let xi = 2.0 * std::f64::consts::PI * c as f64 / (n as f64 * grid.cell_size);
        xi2 += xi * xi;
    }
    xi2.sqrt()
}
