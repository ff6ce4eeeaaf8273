//! Quadrature grids for the source domain, refractive-index profiles and
//! far-field measurement surfaces.
//!
//! Points are always stored as 3-vectors; in two dimensions the third
//! component is zero.

use std::f64::consts::PI;

use crate::error::{invalid, Result};

pub type Point = [f64; 3];

pub fn norm(p: &Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    norm(&[a[0] - b[0], a[1] - b[1], a[2] - b[2]])
}

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Wavenumber and spatial dimension shared by every kernel evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveContext {
    k: f64,
    dim: usize,
}

impl WaveContext {
    pub fn new(k: f64, dim: usize) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return invalid(format!("wavenumber must be positive, got {k}"));
        }
        if dim != 2 && dim != 3 {
            return invalid(format!("dimension must be 2 or 3, got {dim}"));
        }
        Ok(Self { k, dim })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn wavelength(&self) -> f64 {
        2.0 * PI / self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Disk { radius: f64 },
    Ball { radius: f64 },
}

impl Shape {
    pub fn radius(&self) -> f64 {
        match *self {
            Shape::Disk { radius } | Shape::Ball { radius } => radius,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Shape::Disk { .. } => 2,
            Shape::Ball { .. } => 3,
        }
    }

    /// Closed-shape membership. A disk lives in the `z = 0` plane.
    pub fn contains(&self, p: &Point) -> bool {
        match *self {
            Shape::Disk { radius } => p[2] == 0.0 && p[0] * p[0] + p[1] * p[1] <= radius * radius,
            Shape::Ball { radius } => dot(p, p) <= radius * radius,
        }
    }

    pub fn measure(&self) -> f64 {
        match *self {
            Shape::Disk { radius } => PI * radius * radius,
            Shape::Ball { radius } => 4.0 / 3.0 * PI * radius.powi(3),
        }
    }
}

/// Midpoint quadrature of a disk or ball on a uniform Cartesian lattice.
///
/// A lattice cell is kept iff its center lies inside the shape, so the total
/// weight over-counts or under-counts the shape measure by `O(cell_size)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainGrid {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub cell_size: f64,
    pub shape: Shape,
    /// Lattice coordinates of each point (third entry is 0 in 2D).
    pub lattice: Vec<[usize; 3]>,
    pub cells_per_diameter: usize,
}

pub const MIN_CELLS_PER_DIAMETER: usize = 2;

fn build_lattice_grid(shape: Shape, cells: usize) -> Result<DomainGrid> {
    let radius = shape.radius();
    if !(radius > 0.0 && radius.is_finite()) {
        return invalid(format!("radius must be positive, got {radius}"));
    }
    if cells < MIN_CELLS_PER_DIAMETER {
        return invalid(format!(
            "cells_per_diameter must be at least {MIN_CELLS_PER_DIAMETER}, got {cells}"
        ));
    }
    let h = 2.0 * radius / cells as f64;
    let center = |i: usize| -radius + h * (i as f64 + 0.5);
    let dim = shape.dim();
    let weight = h.powi(dim as i32);
    let nz = if dim == 3 { cells } else { 1 };

    let mut points = Vec::new();
    let mut lattice = Vec::new();
    for i in 0..cells {
        for j in 0..cells {
            for l in 0..nz {
                let z = if dim == 3 { center(l) } else { 0.0 };
                let p = [center(i), center(j), z];
                if shape.contains(&p) {
                    points.push(p);
                    lattice.push([i, j, l]);
                }
            }
        }
    }
    let weights = vec![weight; points.len()];
    Ok(DomainGrid {
        points,
        weights,
        cell_size: h,
        shape,
        lattice,
        cells_per_diameter: cells,
    })
}

pub fn build_disk_grid(radius: f64, cells_per_diameter: usize, ctx: &WaveContext) -> Result<DomainGrid> {
    if ctx.dim() != 2 {
        return invalid("disk grids require a two-dimensional wave context");
    }
    build_lattice_grid(Shape::Disk { radius }, cells_per_diameter)
}

pub fn build_ball_grid(radius: f64, cells_per_diameter: usize, ctx: &WaveContext) -> Result<DomainGrid> {
    if ctx.dim() != 3 {
        return invalid("ball grids require a three-dimensional wave context");
    }
    build_lattice_grid(Shape::Ball { radius }, cells_per_diameter)
}

impl DomainGrid {
    /// Grid from explicit points and weights, for synthetic experiments.
    /// Lattice coordinates are inferred from `cell_size` relative to the
    /// lower-left corner of the bounding box of the shape.
    pub fn from_points(points: Vec<Point>, weights: Vec<f64>, cell_size: f64, shape: Shape) -> Result<Self> {
        if points.len() != weights.len() {
            return invalid("points and weights differ in length");
        }
        if points.is_empty() {
            return invalid("grid needs at least one point");
        }
        if !(cell_size > 0.0) {
            return invalid("cell_size must be positive");
        }
        if let Some(p) = points.iter().find(|p| !shape.contains(p)) {
            return invalid(format!("point {p:?} lies outside the declared shape"));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return invalid("weights must be positive");
        }
        let r = shape.radius();
        let cells = (2.0 * r / cell_size).ceil().max(1.0) as usize;
        let to_idx = |x: f64| (((x + r) / cell_size - 0.5).round().max(0.0)) as usize;
        let lattice = points
            .iter()
            .map(|p| {
                let z = if shape.dim() == 3 { to_idx(p[2]) } else { 0 };
                [to_idx(p[0]), to_idx(p[1]), z]
            })
            .collect();
        Ok(Self {
            points,
            weights,
            cell_size,
            shape,
            lattice,
            cells_per_diameter: cells,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn nearest_index(&self, p: &Point) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, q) in self.points.iter().enumerate() {
            let d = distance(p, q);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Index of the point closest to the origin.
    pub fn center_index(&self) -> usize {
        self.nearest_index(&[0.0; 3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileKind {
    Constant(f64),
    /// `n(x) = 1 + (peak - 1) exp(-|x - center|^2 / width^2)`.
    RadialBump { center: Point, width: f64, peak: f64 },
}

pub const PROFILE_BOUNDS: (f64, f64) = (0.1, 10.0);

#[derive(Debug, Clone, PartialEq)]
pub struct RefractiveProfile {
    pub values: Vec<f64>,
    pub kind: ProfileKind,
}

impl RefractiveProfile {
    pub fn is_constant(&self) -> bool {
        matches!(self.kind, ProfileKind::Constant(_))
    }
}

fn check_bounded(name: &str, v: f64) -> Result<()> {
    let (lo, hi) = PROFILE_BOUNDS;
    if !(v > 0.0) {
        return invalid(format!("{name} must be positive, got {v}"));
    }
    if !(lo..=hi).contains(&v) {
        return invalid(format!("{name} must lie in [{lo}, {hi}], got {v}"));
    }
    Ok(())
}

impl ProfileKind {
    pub fn evaluate(&self, p: &Point) -> f64 {
        match *self {
            ProfileKind::Constant(c) => c,
            ProfileKind::RadialBump { center, width, peak } => {
                let d = distance(p, &center);
                1.0 + (peak - 1.0) * (-(d * d) / (width * width)).exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ProfileKind::Constant(c) => check_bounded("constant", c),
            ProfileKind::RadialBump { width, peak, .. } => {
                if !(width > 0.0) {
                    return invalid(format!("bump width must be positive, got {width}"));
                }
                check_bounded("bump peak", peak)
            }
        }
    }
}

pub fn sample_profile(grid: &DomainGrid, kind: ProfileKind) -> Result<RefractiveProfile> {
    kind.validate()?;
    let values = grid.points.iter().map(|p| kind.evaluate(p)).collect();
    Ok(RefractiveProfile { values, kind })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceQuadrature {
    /// `m` equispaced points on a circle.
    EquispacedCircle,
    /// Spherical Fibonacci lattice with equal weights `4 pi R^2 / m`.
    FibonacciSphere,
}

impl SurfaceQuadrature {
    pub fn name(&self) -> &'static str {
        match self {
            SurfaceQuadrature::EquispacedCircle => "equispaced_circle",
            SurfaceQuadrature::FibonacciSphere => "fibonacci_sphere",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSurface {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub radius: f64,
    pub quadrature: SurfaceQuadrature,
}

pub const MIN_SURFACE_POINTS: usize = 4;
pub const DEFAULT_SPHERE_POINTS: usize = 2000;

pub fn build_measurement_surface(radius: f64, m: usize, ctx: &WaveContext) -> Result<MeasurementSurface> {
    if !(radius > 0.0 && radius.is_finite()) {
        return invalid(format!("surface radius must be positive, got {radius}"));
    }
    if m < MIN_SURFACE_POINTS {
        return invalid(format!("need at least {MIN_SURFACE_POINTS} surface points, got {m}"));
    }
    let (points, quadrature) = if ctx.dim() == 2 {
        let pts = (0..m)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / m as f64;
                [radius * t.cos(), radius * t.sin(), 0.0]
            })
            .collect();
        (pts, SurfaceQuadrature::EquispacedCircle)
    } else {
        let golden = PI * (1.0 + 5f64.sqrt());
        let pts = (0..m)
            .map(|i| {
                let s = i as f64 + 0.5;
                let z = 1.0 - 2.0 * s / m as f64;
                let rho = (1.0 - z * z).max(0.0).sqrt();
                let phi = golden * s;
                let mut p = [rho * phi.cos(), rho * phi.sin(), z];
                // renormalise so |p| = 1 to rounding
                let n = norm(&p);
                p.iter_mut().for_each(|c| *c *= radius / n);
                p
            })
            .collect();
        (pts, SurfaceQuadrature::FibonacciSphere)
    };
    let measure = if ctx.dim() == 2 {
        2.0 * PI * radius
    } else {
        4.0 * PI * radius * radius
    };
    Ok(MeasurementSurface {
        points,
        weights: vec![measure / m as f64; m],
        radius,
        quadrature,
    })
}

impl MeasurementSurface {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}
