//! Scenario configuration: the TOML schema, parsing, and validation into
//! ready-to-run core objects.

use std::path::{Path, PathBuf};

use resonat_core::grid::{
    build_ball_grid, build_disk_grid, norm, DomainGrid, ProfileKind, DEFAULT_SPHERE_POINTS,
    MIN_SURFACE_POINTS, PROFILE_BOUNDS,
};
use resonat_core::volume::RESONANCE_TOL;
use resonat_core::{c64, Point, WaveContext};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub seed: Option<u64>,
    pub output: Option<String>,
    pub wave: RawWave,
    pub domain: RawDomain,
    pub profile: Option<RawProfile>,
    pub contrast: Option<RawContrast>,
    pub spectrum: Option<RawSpectrum>,
    pub surface: Option<RawSurface>,
    pub psf: Option<RawPsf>,
    pub source: Option<Vec<RawSource>>,
    pub image: Option<RawImage>,
    pub hk: Option<RawHk>,
    pub sweep: Option<RawSweep>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawWave {
    pub k: f64,
    pub dim: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDomain {
    pub shape: Option<String>,
    pub radius: f64,
    pub cells: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProfile {
    pub kind: String,
    pub value: Option<f64>,
    pub center: Option<Vec<f64>>,
    pub width: Option<f64>,
    pub peak: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawContrast {
    pub tau: Option<f64>,
    pub near_mode: Option<usize>,
    pub detune: Option<f64>,
    pub taus: Option<Vec<f64>>,
    pub resonance_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpectrum {
    pub cluster_tol: Option<f64>,
    pub dump_modes: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSurface {
    pub radius: f64,
    pub points: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPsf {
    pub source: Option<Vec<f64>>,
    pub direction: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSource {
    pub position: Vec<f64>,
    pub amplitude: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawImage {
    pub methods: Vec<String>,
    pub medium: Option<String>,
    pub noise_level: Option<f64>,
    pub tikhonov_alpha: Option<f64>,
    pub morozov_delta: Option<f64>,
    pub l1_mu: Option<f64>,
    pub l1_mu_rel: Option<f64>,
    pub l1_mode: Option<String>,
    pub l1_max_iters: Option<usize>,
    pub l1_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHk {
    pub radii: Vec<f64>,
    pub points: Option<usize>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub medium: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSweep {
    pub separations: Vec<f64>,
    pub center: Option<Vec<f64>>,
    pub media: Option<Vec<String>>,
    pub noise_level: Option<f64>,
    pub l1_mu_rel: Option<f64>,
    pub l1_max_iters: Option<usize>,
    pub l1_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Contrast {
    Tau(f64),
    /// `τ = (1 + detune) / Re λ_p` for the 1-based position `p` in the
    /// spectral order.
    NearMode { index: usize, detune: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MediumChoice {
    Homogeneous,
    HighContrast,
}

impl MediumChoice {
    pub fn name(&self) -> &'static str {
        match self {
            MediumChoice::Homogeneous => "homogeneous",
            MediumChoice::HighContrast => "high_contrast",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MethodChoice {
    TimeReversal,
    L2Exact,
    L2Tikhonov(f64),
    /// Absent δ means the realised squared noise norm.
    L2Morozov(Option<f64>),
    L1,
}

impl MethodChoice {
    pub fn name(&self) -> &'static str {
        match self {
            MethodChoice::TimeReversal => "time_reversal",
            MethodChoice::L2Exact => "l2_exact",
            MethodChoice::L2Tikhonov(_) => "l2_tikhonov",
            MethodChoice::L2Morozov(_) => "l2_morozov",
            MethodChoice::L1 => "l1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuChoice {
    Absolute(f64),
    /// Fraction of `‖Fᴴu‖∞`, the smallest μ giving the null solution.
    Relative(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct L1Spec {
    pub mu: MuChoice,
    pub normal_equation: bool,
    pub max_iters: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSpec {
    pub methods: Vec<MethodChoice>,
    pub medium: MediumChoice,
    pub noise_level: f64,
    pub l1: L1Spec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HkSpec {
    pub radii: Vec<f64>,
    pub points: usize,
    pub x: Point,
    pub y: Point,
    pub medium: MediumChoice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub separations: Vec<f64>,
    pub center: Point,
    pub media: Vec<MediumChoice>,
    pub noise_level: f64,
    pub l1: L1Spec,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub path: PathBuf,
    pub sha256: String,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub ctx: WaveContext,
    pub grid: DomainGrid,
    pub profile: ProfileKind,
    pub contrast: Option<Contrast>,
    pub tau_sweep: Vec<f64>,
    pub resonance_tol: f64,
    pub cluster_tol: Option<f64>,
    pub dump_modes: Vec<usize>,
    pub surface: Option<(f64, usize)>,
    pub psf_source: Point,
    pub psf_direction: Point,
    pub sources: Vec<(Point, c64)>,
    pub image: Option<ImageSpec>,
    pub hk: Option<HkSpec>,
    pub sweep: Option<SweepSpec>,
}

/// Finds the line of `key` inside `[table]` (or at top level when `table` is
/// empty), 1-based.
fn locate(text: &str, table: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut table_line = None;
    for (n, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            current = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == table && table_line.is_none() {
                table_line = Some(n + 1);
            }
            continue;
        }
        if current == table && !key.is_empty() {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(n + 1);
                }
            }
        }
    }
    table_line
}

struct Checker<'a> {
    path: &'a Path,
    text: &'a str,
}

impl Checker<'_> {
    fn fail<T>(&self, table: &str, key: &str, msg: impl std::fmt::Display) -> Result<T, CliError> {
        let name = if table.is_empty() { key.to_string() } else if key.is_empty() { format!("[{table}]") } else { format!("{table}.{key}") };
        let line = locate(self.text, table, key).unwrap_or(1);
        Err(CliError::Config(format!("{}:{line}: {name}: {msg}", self.path.display())))
    }

    fn positive(&self, table: &str, key: &str, v: f64) -> Result<f64, CliError> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            self.fail(table, key, format!("must be positive and finite, got {v}"))
        }
    }

    fn nonneg(&self, table: &str, key: &str, v: f64) -> Result<f64, CliError> {
        if v >= 0.0 && v.is_finite() {
            Ok(v)
        } else {
            self.fail(table, key, format!("must be nonnegative and finite, got {v}"))
        }
    }

    fn point(&self, table: &str, key: &str, v: &[f64], dim: usize) -> Result<Point, CliError> {
        if v.len() != dim {
            return self.fail(table, key, format!("expected {dim} coordinates, got {}", v.len()));
        }
        if v.iter().any(|c| !c.is_finite()) {
            return self.fail(table, key, "coordinates must be finite");
        }
        let mut p = [0.0; 3];
        p[..dim].copy_from_slice(v);
        Ok(p)
    }

    fn inside(&self, table: &str, key: &str, p: Point, grid: &DomainGrid) -> Result<Point, CliError> {
        if grid.shape.contains(&p) {
            Ok(p)
        } else {
            self.fail(table, key, format!("point {:?} lies outside the domain", &p[..grid.dim()]))
        }
    }

    fn medium(&self, table: &str, key: &str, s: &str) -> Result<MediumChoice, CliError> {
        match s {
            "homogeneous" => Ok(MediumChoice::Homogeneous),
            "high_contrast" => Ok(MediumChoice::HighContrast),
            other => self.fail(table, key, format!("unknown medium `{other}` (homogeneous, high_contrast)")),
        }
    }
}

pub fn load(path: &Path) -> Result<(RawConfig, String), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: cannot read config: {e}", path.display())))?;
    let raw: RawConfig = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.to_string().trim_end())))?;
    Ok((raw, text))
}

pub fn parse(path: &Path) -> Result<Scenario, CliError> {
    let (raw, text) = load(path)?;
    validate(raw, &text, path)
}

pub fn validate(raw: RawConfig, text: &str, path: &Path) -> Result<Scenario, CliError> {
    let c = Checker { path, text };
    let sha256 = hex::encode(Sha256::digest(text.as_bytes()));

    let dim = raw.wave.dim;
    if dim != 2 && dim != 3 {
        return c.fail("wave", "dim", format!("must be 2 or 3, got {dim}"));
    }
    let k = c.positive("wave", "k", raw.wave.k)?;
    let ctx = WaveContext::new(k, dim).map_err(|e| CliError::Config(e.to_string()))?;

    let expected = if dim == 2 { "disk" } else { "ball" };
    if let Some(s) = &raw.domain.shape {
        if s != expected {
            return c.fail("domain", "shape", format!("`{s}` does not match dim = {dim} (expected `{expected}`)"));
        }
    }
    let radius = c.positive("domain", "radius", raw.domain.radius)?;
    let grid = if dim == 2 { build_disk_grid(radius, raw.domain.cells, &ctx) } else { build_ball_grid(radius, raw.domain.cells, &ctx) };
    let grid = match grid {
        Ok(g) => g,
        Err(e) => return c.fail("domain", "cells", e),
    };

    let profile = match &raw.profile {
        None => ProfileKind::Constant(1.0),
        Some(p) => match p.kind.as_str() {
            "constant" => {
                let v = p.value.unwrap_or(1.0);
                if !(PROFILE_BOUNDS.0..=PROFILE_BOUNDS.1).contains(&v) {
                    return c.fail("profile", "value", format!("must lie in [{}, {}]", PROFILE_BOUNDS.0, PROFILE_BOUNDS.1));
                }
                ProfileKind::Constant(v)
            }
            "radial_bump" => {
                let center = match &p.center {
                    Some(v) => c.point("profile", "center", v, dim)?,
                    None => [0.0; 3],
                };
                let width = match p.width {
                    Some(w) => c.positive("profile", "width", w)?,
                    None => return c.fail("profile", "width", "required for a radial_bump profile"),
                };
                let peak = match p.peak {
                    Some(v) => v,
                    None => return c.fail("profile", "peak", "required for a radial_bump profile"),
                };
                if !(PROFILE_BOUNDS.0..=PROFILE_BOUNDS.1).contains(&peak) {
                    return c.fail("profile", "peak", format!("must lie in [{}, {}]", PROFILE_BOUNDS.0, PROFILE_BOUNDS.1));
                }
                ProfileKind::RadialBump { center, width, peak }
            }
            other => return c.fail("profile", "kind", format!("unknown profile `{other}` (constant, radial_bump)")),
        },
    };

    let mut tau_sweep = Vec::new();
    let mut resonance_tol = RESONANCE_TOL;
    let contrast = match &raw.contrast {
        None => None,
        Some(ct) => {
            if let Some(t) = ct.resonance_tol {
                resonance_tol = c.positive("contrast", "resonance_tol", t)?;
            }
            if let Some(t) = &ct.taus {
                if t.is_empty() {
                    return c.fail("contrast", "taus", "must not be empty");
                }
                for &v in t {
                    c.nonneg("contrast", "taus", v)?;
                }
                tau_sweep = t.clone();
            }
            match (ct.tau, ct.near_mode) {
                (Some(_), Some(_)) => return c.fail("contrast", "near_mode", "give either tau or near_mode, not both"),
                (Some(t), None) => {
                    if ct.detune.is_some() {
                        return c.fail("contrast", "detune", "only applies together with near_mode");
                    }
                    Some(Contrast::Tau(c.nonneg("contrast", "tau", t)?))
                }
                (None, Some(index)) => {
                    if index == 0 || index > grid.len() {
                        return c.fail("contrast", "near_mode", format!("must lie in 1..={} for this grid", grid.len()));
                    }
                    let detune = ct.detune.unwrap_or(0.0);
                    if !(detune.is_finite() && detune > -1.0) {
                        return c.fail("contrast", "detune", "must be finite and greater than -1");
                    }
                    Some(Contrast::NearMode { index, detune })
                }
                (None, None) => None,
            }
        }
    };

    let (cluster_tol, dump_modes) = match &raw.spectrum {
        None => (None, Vec::new()),
        Some(s) => {
            let tol = match s.cluster_tol {
                Some(t) => Some(c.positive("spectrum", "cluster_tol", t)?),
                None => None,
            };
            let modes = s.dump_modes.clone().unwrap_or_default();
            if let Some(&bad) = modes.iter().find(|&&m| m == 0 || m > grid.len()) {
                return c.fail("spectrum", "dump_modes", format!("mode {bad} outside 1..={}", grid.len()));
            }
            (tol, modes)
        }
    };

    let default_points = if dim == 2 { 64 } else { DEFAULT_SPHERE_POINTS };
    let surface = match &raw.surface {
        None => None,
        Some(s) => {
            let r = c.positive("surface", "radius", s.radius)?;
            if r <= radius {
                return c.fail("surface", "radius", format!("must exceed the domain radius {radius}"));
            }
            let m = s.points.unwrap_or(default_points);
            if m < MIN_SURFACE_POINTS {
                return c.fail("surface", "points", format!("need at least {MIN_SURFACE_POINTS}"));
            }
            Some((r, m))
        }
    };

    let (psf_source, psf_direction) = match &raw.psf {
        None => ([0.0; 3], [1.0, 0.0, 0.0]),
        Some(p) => {
            let s = match &p.source {
                Some(v) => c.inside("psf", "source", c.point("psf", "source", v, dim)?, &grid)?,
                None => [0.0; 3],
            };
            let d = match &p.direction {
                Some(v) => {
                    let d = c.point("psf", "direction", v, dim)?;
                    let n = norm(&d);
                    if n == 0.0 {
                        return c.fail("psf", "direction", "must be nonzero");
                    }
                    [d[0] / n, d[1] / n, d[2] / n]
                }
                None => [1.0, 0.0, 0.0],
            };
            (s, d)
        }
    };

    let mut sources = Vec::new();
    for s in raw.source.iter().flatten() {
        let p = c.inside("source", "position", c.point("source", "position", &s.position, dim)?, &grid)?;
        let a = s.amplitude.unwrap_or([1.0, 0.0]);
        if !(a[0].is_finite() && a[1].is_finite()) {
            return c.fail("source", "amplitude", "must be finite");
        }
        sources.push((p, c64::new(a[0], a[1])));
    }

    let l1_spec = |table: &str, mu: Option<f64>, mu_rel: Option<f64>, mode: Option<&str>, iters: Option<usize>, tol: Option<f64>| -> Result<L1Spec, CliError> {
        let mu = match (mu, mu_rel) {
            (Some(_), Some(_)) => return c.fail(table, "l1_mu_rel", "give either l1_mu or l1_mu_rel, not both"),
            (Some(m), None) => MuChoice::Absolute(c.positive(table, "l1_mu", m)?),
            (None, Some(r)) => {
                let r = c.positive(table, "l1_mu_rel", r)?;
                if r >= 1.0 {
                    return c.fail(table, "l1_mu_rel", "must be below 1 (μ ≥ ‖Fᴴu‖∞ gives the null solution)");
                }
                MuChoice::Relative(r)
            }
            (None, None) => MuChoice::Relative(1e-3),
        };
        let normal_equation = match mode.unwrap_or("penalized") {
            "penalized" => false,
            "normal_equation" => true,
            other => return c.fail(table, "l1_mode", format!("unknown mode `{other}` (penalized, normal_equation)")),
        };
        let max_iters = iters.unwrap_or(5000);
        if max_iters == 0 {
            return c.fail(table, "l1_max_iters", "must be positive");
        }
        let tol = c.positive(table, "l1_tol", tol.unwrap_or(1e-8))?;
        Ok(L1Spec { mu, normal_equation, max_iters, tol })
    };

    let image = match &raw.image {
        None => None,
        Some(im) => {
            if im.methods.is_empty() {
                return c.fail("image", "methods", "must list at least one method");
            }
            let mut methods = Vec::new();
            for m in &im.methods {
                let choice = match m.as_str() {
                    "time_reversal" => MethodChoice::TimeReversal,
                    "l2_exact" => MethodChoice::L2Exact,
                    "l2_tikhonov" => match im.tikhonov_alpha {
                        Some(a) => MethodChoice::L2Tikhonov(c.nonneg("image", "tikhonov_alpha", a)?),
                        None => return c.fail("image", "methods", "l2_tikhonov needs image.tikhonov_alpha"),
                    },
                    "l2_morozov" => MethodChoice::L2Morozov(match im.morozov_delta {
                        Some(d) => Some(c.positive("image", "morozov_delta", d)?),
                        None => None,
                    }),
                    "l1" => MethodChoice::L1,
                    other => {
                        return c.fail(
                            "image",
                            "methods",
                            format!("unknown method `{other}` (time_reversal, l2_exact, l2_tikhonov, l2_morozov, l1)"),
                        )
                    }
                };
                if methods.iter().any(|x: &MethodChoice| x.name() == choice.name()) {
                    return c.fail("image", "methods", format!("method `{m}` listed twice"));
                }
                methods.push(choice);
            }
            let medium = c.medium("image", "medium", im.medium.as_deref().unwrap_or("homogeneous"))?;
            let noise_level = c.nonneg("image", "noise_level", im.noise_level.unwrap_or(0.0))?;
            let l1 = l1_spec("image", im.l1_mu, im.l1_mu_rel, im.l1_mode.as_deref(), im.l1_max_iters, im.l1_tol)?;
            Some(ImageSpec { methods, medium, noise_level, l1 })
        }
    };

    let hk = match &raw.hk {
        None => None,
        Some(h) => {
            if h.radii.is_empty() {
                return c.fail("hk", "radii", "must not be empty");
            }
            for &r in &h.radii {
                c.positive("hk", "radii", r)?;
                if r <= radius {
                    return c.fail("hk", "radii", format!("radius {r} does not exceed the domain radius {radius}"));
                }
            }
            let points = h.points.unwrap_or(default_points);
            if points < MIN_SURFACE_POINTS {
                return c.fail("hk", "points", format!("need at least {MIN_SURFACE_POINTS}"));
            }
            let medium = c.medium("hk", "medium", h.medium.as_deref().unwrap_or("homogeneous"))?;
            let x = c.inside("hk", "x", c.point("hk", "x", &h.x, dim)?, &grid)?;
            let y = c.inside("hk", "y", c.point("hk", "y", &h.y, dim)?, &grid)?;
            // the medium kernel is only available at grid points
            let (x, y) = if medium == MediumChoice::HighContrast {
                (grid.points[grid.nearest_index(&x)], grid.points[grid.nearest_index(&y)])
            } else {
                (x, y)
            };
            Some(HkSpec { radii: h.radii.clone(), points, x, y, medium })
        }
    };

    let sweep = match &raw.sweep {
        None => None,
        Some(s) => {
            if s.separations.is_empty() {
                return c.fail("sweep", "separations", "must not be empty");
            }
            for &d in &s.separations {
                c.positive("sweep", "separations", d)?;
            }
            let center = match &s.center {
                Some(v) => c.inside("sweep", "center", c.point("sweep", "center", v, dim)?, &grid)?,
                None => [0.0; 3],
            };
            for &d in &s.separations {
                for sign in [-0.5, 0.5] {
                    let p = [center[0] + sign * d, center[1], center[2]];
                    if !grid.shape.contains(&p) {
                        return c.fail("sweep", "separations", format!("separation {d} places a source outside the domain"));
                    }
                }
            }
            let names = s.media.clone().unwrap_or_else(|| {
                let mut v = vec!["homogeneous".to_string()];
                if contrast.is_some() {
                    v.push("high_contrast".to_string());
                }
                v
            });
            if names.is_empty() {
                return c.fail("sweep", "media", "must not be empty");
            }
            let mut media = Vec::new();
            for n in &names {
                let m = c.medium("sweep", "media", n)?;
                if !media.contains(&m) {
                    media.push(m);
                }
            }
            let noise_level = c.nonneg("sweep", "noise_level", s.noise_level.unwrap_or(0.0))?;
            let l1 = l1_spec("sweep", None, s.l1_mu_rel, None, s.l1_max_iters, s.l1_tol)?;
            Some(SweepSpec { separations: s.separations.clone(), center, media, noise_level, l1 })
        }
    };

    let needs_contrast = image.as_ref().is_some_and(|i| i.medium == MediumChoice::HighContrast)
        || hk.as_ref().is_some_and(|h| h.medium == MediumChoice::HighContrast)
        || sweep.as_ref().is_some_and(|s| s.media.contains(&MediumChoice::HighContrast));
    if needs_contrast && contrast.is_none() {
        return c.fail("contrast", "", "a high-contrast medium needs contrast.tau or contrast.near_mode");
    }

    Ok(Scenario {
        path: path.to_path_buf(),
        sha256,
        seed: raw.seed.unwrap_or(0),
        output: raw.output.map(PathBuf::from),
        ctx,
        grid,
        profile,
        contrast,
        tau_sweep,
        resonance_tol,
        cluster_tol,
        dump_modes,
        surface,
        psf_source,
        psf_direction,
        sources,
        image,
        hk,
        sweep,
    })
}

impl Scenario {
    pub fn missing(&self, table: &str, command: &str) -> CliError {
        CliError::Config(format!("{}:1: the {command} command needs a [{table}] table", self.path.display()))
    }

    pub fn require_surface(&self, command: &str) -> Result<(f64, usize), CliError> {
        self.surface.ok_or_else(|| self.missing("surface", command))
    }
}
