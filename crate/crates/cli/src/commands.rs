//! The six scenario pipelines.

use std::sync::Arc;

use rayon::prelude::*;
use resonat_core::expansion::{
    alpha_expansion, beta_expansion, mode_mixing_report, oracle_error, psf_profile, truncation_error_curve,
    PsfProfile,
};
use resonat_core::grid::{build_measurement_surface, distance, sample_profile};
use resonat_core::imaging::{
    adjoint_apply, build_forward_map, helmholtz_kirchhoff_residual, l1_reconstruct, l2_minimum_norm,
    resolution_metrics, synthesize_data, time_reversal, ForwardMap, HkKernel, ImagingResult, L1Mode, L1Options,
    L2Mode, Medium, MediumTag, Method, SourceConfig, EXACT_CUTOFF, MOROZOV_BRACKET, PEAK_THRESHOLD,
};
use resonat_core::kernels::{homogeneous_fwhm, im_g0_radial};
use resonat_core::spectral::{default_cluster_tol, eigendecompose, verify_resonant_mode, SpectralSystem};
use resonat_core::volume::{assemble_kd, check_resonance, free_green_column, DiscreteOperator, GreenField};
use resonat_core::{export, linalg, Error, Point};
use serde_json::{json, Value};

use crate::config::{Contrast, L1Spec, MediumChoice, MethodChoice, MuChoice, Scenario};
use crate::output::OutputDir;
use crate::CliError;

fn operator(sc: &Scenario) -> Result<DiscreteOperator, CliError> {
    let profile = sample_profile(&sc.grid, sc.profile.clone())?;
    Ok(assemble_kd(&sc.grid, &profile, &sc.ctx)?)
}

fn spectral_system(sc: &Scenario, op: &DiscreteOperator, out: &mut OutputDir) -> Result<SpectralSystem, CliError> {
    let tol = sc.cluster_tol.unwrap_or_else(|| default_cluster_tol(op));
    out.tolerance("cluster_tol", tol);
    Ok(eigendecompose(op, tol)?)
}

fn complex(z: resonat_core::c64) -> Value {
    json!([z.re, z.im])
}

fn point(p: &Point, dim: usize) -> Value {
    json!(p[..dim].to_vec())
}

/// Rejects `τ` whose reciprocal sits within the configured tolerance of the
/// spectrum of the operator.
fn resonance_guard(sc: &Scenario, op: &DiscreteOperator, tau: f64, out: &mut OutputDir) -> Result<(), CliError> {
    out.tolerance("resonance_tol", sc.resonance_tol);
    if tau > 0.0 {
        check_resonance(op.spectrum()?.iter().copied(), resonat_core::c64::new(1.0 / tau, 0.0), sc.resonance_tol)?;
    }
    Ok(())
}

/// Resolves the configured contrast to a value of τ and checks it against
/// the spectrum. `NearMode` needs the spectral system, which is returned for
/// reuse.
fn resolve_tau(
    sc: &Scenario,
    op: &DiscreteOperator,
    out: &mut OutputDir,
) -> Result<(f64, Option<SpectralSystem>), CliError> {
    match sc.contrast {
        None => Err(sc.missing("contrast", "expand")),
        Some(Contrast::Tau(t)) => {
            out.result("tau", t);
            resonance_guard(sc, op, t, out)?;
            Ok((t, None))
        }
        Some(Contrast::NearMode { index, detune }) => {
            let sys = spectral_system(sc, op, out)?;
            let lambda = sys.eigenvalue_at(index - 1);
            if !(lambda.re > 0.0) {
                return Err(CliError::Runtime(format!(
                    "mode {index} has eigenvalue {lambda} with nonpositive real part; no positive τ reaches it"
                )));
            }
            let tau = (1.0 + detune) / lambda.re;
            out.result("tau", tau);
            out.result("near_mode", json!({ "index": index, "detune": detune, "eigenvalue": complex(lambda) }));
            resonance_guard(sc, op, tau, out)?;
            Ok((tau, Some(sys)))
        }
    }
}

pub fn spectrum(sc: &Scenario, out: &mut OutputDir) -> Result<(), CliError> {
    let op = operator(sc)?;
    let sys = spectral_system(sc, &op, out)?;
    out.csv("spectrum.csv", |w| export::write_spectrum(w, &sys))?;
    let mut checks = Vec::new();
    for &p in &sc.dump_modes {
        let mode = sys.mode(p - 1);
        out.csv(&format!("mode_{p}.csv"), |w| export::write_grid_field(w, &sc.grid, &mode))?;
        let gamma = sys.indices()[p - 1];
        let check = match verify_resonant_mode(&sys, &op, gamma) {
            Ok(c) => json!({
                "mode": p,
                "eigenvalue": complex(c.eigenvalue),
                "residual": c.residual,
                "dominant_frequency": c.dominant_frequency,
            }),
            Err(e) => json!({ "mode": p, "error": e.to_string() }),
        };
        checks.push(check);
    }
    let moduli: Vec<f64> = sys.eigenvalues().iter().map(|z| z.norm()).collect();
    out.result("count", sys.len());
    out.result("semisimple", sys.is_semisimple());
    out.result("largest_modulus", moduli.first().copied().unwrap_or(0.0));
    out.result("smallest_modulus", moduli.last().copied().unwrap_or(0.0));
    out.result("warnings", json!(sys.warnings()));
    out.result("mode_checks", json!(checks));
    Ok(())
}

pub fn expand(sc: &Scenario, out: &mut OutputDir) -> Result<(), CliError> {
    let op = operator(sc)?;
    let (tau, sys) = resolve_tau(sc, &op, out)?;
    let sys = match sys {
        Some(s) => s,
        None => spectral_system(sc, &op, out)?,
    };
    let alpha = alpha_expansion(&sys, &op, tau)?;
    let beta = beta_expansion(&sys, &op, tau)?;
    out.csv("alpha.csv", |w| export::write_coefficients(w, alpha.coefficients.as_ref()))?;
    out.csv("beta.csv", |w| export::write_coefficients(w, beta.coefficients.as_ref()))?;
    let curve = truncation_error_curve(&alpha, &sys, &op)?;
    out.csv("truncation_curve.csv", |w| export::write_truncation(w, &curve))?;
    let mixing = mode_mixing_report(&alpha);
    out.result("z", alpha.z.map(complex).unwrap_or(Value::Null));
    out.result("alpha_mass", alpha.mass());
    out.result("beta_mass", beta.mass());
    out.result("oracle_relative_error_alpha", oracle_error(&alpha, &sys, &op)?);
    out.result("oracle_relative_error_beta", oracle_error(&beta, &sys, &op)?);
    out.result(
        "mixing",
        json!({ "diagonal_mass": mixing.diagonal_mass, "offdiagonal_mass": mixing.offdiagonal_mass }),
    );
    if !sc.tau_sweep.is_empty() {
        let rows: Vec<(f64, f64, f64)> = sc
            .tau_sweep
            .iter()
            .map(|&t| {
                let a = alpha_expansion(&sys, &op, t)?;
                Ok((t, a.mass(), oracle_error(&a, &sys, &op)?))
            })
            .collect::<Result<_, CliError>>()?;
        out.csv("tau_sweep.csv", |w| write_tau_sweep(w, &rows))?;
    }
    Ok(())
}

fn write_tau_sweep<W: std::io::Write>(w: W, rows: &[(f64, f64, f64)]) -> resonat_core::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let fail = |e: csv::Error| Error::Numeric(format!("write failed: {e}"));
    wr.write_record(["tau", "alpha_mass", "oracle_error"]).map_err(fail)?;
    for (t, m, e) in rows {
        wr.write_record([export::num(*t), export::num(*m), export::num(*e)]).map_err(fail)?;
    }
    wr.flush().map_err(|e| Error::Numeric(format!("write failed: {e}")))
}

fn fwhm_of(profile: &PsfProfile, label: &str) -> Result<f64, CliError> {
    profile.fwhm.ok_or_else(|| {
        CliError::Runtime(format!(
            "the {label} PSF does not fall to half maximum on both sides inside the domain; enlarge the domain"
        ))
    })
}

pub fn psf(sc: &Scenario, out: &mut OutputDir) -> Result<(), CliError> {
    let grid = &sc.grid;
    let x0 = grid.nearest_index(&sc.psf_source);
    let dim = grid.dim();
    let free = GreenField {
        values: linalg::from_vec_column(&free_green_column(grid, &sc.ctx, x0)),
        tau: 0.0,
        includes_free_part: true,
        sources: vec![grid.points[x0]],
    };
    let homogeneous = psf_profile(&free, 0, grid, x0, &sc.psf_direction)?;
    let (high, tau) = if sc.contrast.is_some() {
        let op = operator(sc)?;
        let (tau, _) = resolve_tau(sc, &op, out)?;
            let field = op.solve_green_direct(tau, x0)?;
        (psf_profile(&field, 0, grid, x0, &sc.psf_direction)?, tau)
    } else {
        out.result("tau", 0.0);
        (homogeneous.clone(), 0.0)
    };
    let oracle = |p: &PsfProfile| -> Vec<f64> { p.radii.iter().map(|r| im_g0_radial(r.abs(), &sc.ctx)).collect() };
    out.csv("psf_homogeneous.csv", |w| export::write_psf(w, &homogeneous, Some(&oracle(&homogeneous))))?;
    out.csv("psf_high_contrast.csv", |w| export::write_psf(w, &high, None))?;
    let fh = fwhm_of(&homogeneous, "homogeneous")?;
    let fc = fwhm_of(&high, "high-contrast")?;
    let report = json!({
        "tau": tau,
        "source_point": point(&grid.points[x0], dim),
        "direction": point(&sc.psf_direction, dim),
        "fwhm_high_contrast": fc,
        "fwhm_homogeneous": fh,
        "fwhm_homogeneous_analytic": homogeneous_fwhm(&sc.ctx),
        "ratio": fc / fh,
        "samples": homogeneous.radii.len(),
    });
    out.json("fwhm_report.json", &report)?;
    out.result("ratio", fc / fh);
    out.result("fwhm_high_contrast", fc);
    out.result("fwhm_homogeneous", fh);
    Ok(())
}

fn medium_for(sc: &Scenario, choice: MediumChoice, out: &mut OutputDir) -> Result<Medium, CliError> {
    match choice {
        MediumChoice::Homogeneous => Ok(Medium::Homogeneous),
        MediumChoice::HighContrast => {
            let op = operator(sc)?;
            let (tau, _) = resolve_tau(sc, &op, out)?;
                    Ok(Medium::HighContrast { tau, op: Arc::new(op) })
        }
    }
}

/// `μ` from the configured choice; relative values scale the null-solution
/// threshold `‖Aᴴb‖∞` of the chosen formulation.
fn l1_mu(spec: &L1Spec, map: &ForwardMap, data: &[resonat_core::c64]) -> f64 {
    match spec.mu {
        MuChoice::Absolute(m) => m,
        MuChoice::Relative(r) => {
            let ones = vec![1.0; data.len()];
            let mut g = adjoint_apply(map.matrix.as_ref(), &ones, data);
            if spec.normal_equation {
                let fg = linalg::matvec(map.matrix.as_ref(), &g);
                g = adjoint_apply(map.matrix.as_ref(), &vec![1.0; fg.len()], &fg);
            }
            r * g.iter().map(|z| z.norm()).fold(0.0, f64::max)
        }
    }
}

fn l1_options(spec: &L1Spec, mu: f64) -> L1Options {
    L1Options {
        mu,
        mode: if spec.normal_equation { L1Mode::NormalEquation } else { L1Mode::Penalized },
        max_iters: spec.max_iters,
        tol: spec.tol,
    }
}

fn method_json(r: &ImagingResult) -> Value {
    let mut v = json!({
        "residual": r.residual,
        "iterations": r.iterations,
        "converged": r.converged,
    });
    let o = v.as_object_mut().expect("object literal");
    match r.method {
        Method::L2Tikhonov { alpha } => {
            o.insert("alpha".into(), json!(alpha));
        }
        Method::L2Morozov { alpha, delta } => {
            o.insert("alpha".into(), json!(alpha));
            o.insert("delta".into(), json!(delta));
        }
        Method::L1 { mu, normal_equation } => {
            o.insert("mu".into(), json!(mu));
            o.insert("normal_equation".into(), json!(normal_equation));
        }
        Method::TimeReversal | Method::L2Exact => {}
    }
    v
}

pub fn image(sc: &Scenario, out: &mut OutputDir) -> Result<(), CliError> {
    let spec = sc.image.as_ref().ok_or_else(|| sc.missing("image", "image"))?;
    if sc.sources.is_empty() {
        return Err(sc.missing("source", "image"));
    }
    let (radius, m) = sc.require_surface("image")?;
    let surface = build_measurement_surface(radius, m, &sc.ctx)?;
    let medium = medium_for(sc, spec.medium, out)?;
    let map = build_forward_map(&sc.grid, &surface, medium, &sc.ctx)?;
    let source = SourceConfig::PointSources(sc.sources.clone());
    let data = synthesize_data(&map, &source, spec.noise_level, sc.seed)?;
    let truth = source.point_locations();
    out.tolerance("peak_threshold", PEAK_THRESHOLD);
    out.tolerance("l2_exact_cutoff", EXACT_CUTOFF);
    out.csv("grid.csv", |w| export::write_grid(w, &sc.grid))?;
    out.csv("data.csv", |w| export::write_result(w, &data.values))?;

    let dim = sc.grid.dim();
    let mut per_method = serde_json::Map::new();
    for choice in &spec.methods {
        let result = match choice {
            MethodChoice::TimeReversal => time_reversal(&data.values, &map)?,
            MethodChoice::L2Exact => l2_minimum_norm(map.matrix.as_ref(), &data.values, L2Mode::Exact)?,
            MethodChoice::L2Tikhonov(a) => l2_minimum_norm(map.matrix.as_ref(), &data.values, L2Mode::Tikhonov(*a))?,
            MethodChoice::L2Morozov(delta) => {
                out.tolerance("morozov_window", json!([0.9, 1.1]));
                out.tolerance("morozov_bracket", json!([MOROZOV_BRACKET.0, MOROZOV_BRACKET.1]));
                let delta = delta.unwrap_or(data.noise_norm * data.noise_norm);
                if delta == 0.0 {
                    return Err(CliError::Runtime(
                        "Morozov needs a positive discrepancy level; set image.morozov_delta or a nonzero noise_level"
                            .into(),
                    ));
                }
                l2_minimum_norm(map.matrix.as_ref(), &data.values, L2Mode::Morozov(delta))?
            }
            MethodChoice::L1 => {
                let mu = l1_mu(&spec.l1, &map, &data.values);
                out.tolerance("l1_tol", spec.l1.tol);
                out.tolerance("l1_max_iters", spec.l1.max_iters);
                l1_reconstruct(map.matrix.as_ref(), &data.values, l1_options(&spec.l1, mu))?
            }
        };
        let name = choice.name();
        out.csv(&format!("image_{name}.csv"), |w| export::write_result(w, &result.values))?;
        let metrics = resolution_metrics(&result.values, &truth, &sc.grid)?;
        let mut v = method_json(&result);
        let o = v.as_object_mut().expect("object literal");
        o.insert("localization_errors".into(), json!(metrics.localization_errors));
        o.insert("peaks".into(), json!(metrics.peaks.iter().map(|&i| point(&sc.grid.points[i], dim)).collect::<Vec<_>>()));
        o.insert("support_f1".into(), json!(metrics.support_f1));
        o.insert("success".into(), json!(metrics.success));
        o.insert("match_radius".into(), json!(metrics.tolerance));
        per_method.insert(name.into(), v);
    }
    let report = json!({
        "medium": map.tag().name(),
        "tau": match map.tag() { MediumTag::HighContrast(t) => t, _ => 0.0 },
        "noise_level": data.noise_level,
        "noise_norm": data.noise_norm,
        "clean_norm": data.clean_norm,
        "surface_radius": radius,
        "surface_points": m,
        "sources": truth.iter().map(|p| point(p, dim)).collect::<Vec<_>>(),
        "methods": Value::Object(per_method),
    });
    out.json("metrics.json", &report)?;
    out.result("noise_norm", data.noise_norm);
    Ok(())
}

pub fn hk_check(sc: &Scenario, out: &mut OutputDir) -> Result<(), CliError> {
    let spec = sc.hk.as_ref().ok_or_else(|| sc.missing("hk", "hk-check"))?;
    let op = match spec.medium {
        MediumChoice::Homogeneous => None,
        MediumChoice::HighContrast => {
            let op = operator(sc)?;
            let (tau, _) = resolve_tau(sc, &op, out)?;
                    Some((op, tau))
        }
    };
    let kernel = match &op {
        None => HkKernel::Homogeneous,
        Some((op, tau)) => HkKernel::Medium { op, tau: *tau },
    };
    let residuals: Vec<f64> = spec
        .radii
        .iter()
        .map(|&r| {
            let surface = build_measurement_surface(r, spec.points, &sc.ctx)?;
            Ok(helmholtz_kirchhoff_residual(kernel, &surface, &spec.x, &spec.y, &sc.ctx)?)
        })
        .collect::<Result<_, CliError>>()?;
    let mut table = Vec::new();
    for (i, (&r, &res)) in spec.radii.iter().zip(&residuals).enumerate() {
        let ratio = if i == 0 { None } else { Some(res / residuals[i - 1]) };
        table.push((r, res, ratio));
    }
    out.csv("hk.csv", |w| write_hk(w, &table))?;
    let dim = sc.grid.dim();
    out.result("medium", spec.medium.name());
    out.result("x", point(&spec.x, dim));
    out.result("y", point(&spec.y, dim));
    out.result("surface_points", spec.points);
    out.result("ratios", json!(table.iter().filter_map(|t| t.2).collect::<Vec<f64>>()));
    Ok(())
}

fn write_hk<W: std::io::Write>(w: W, rows: &[(f64, f64, Option<f64>)]) -> resonat_core::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let fail = |e: csv::Error| Error::Numeric(format!("write failed: {e}"));
    wr.write_record(["R", "residual", "ratio"]).map_err(fail)?;
    for (r, res, ratio) in rows {
        wr.write_record([export::num(*r), export::num(*res), ratio.map(export::num).unwrap_or_default()])
            .map_err(fail)?;
    }
    wr.flush().map_err(|e| Error::Numeric(format!("write failed: {e}")))
}

struct SweepRow {
    separation: f64,
    medium: &'static str,
    localization_error: f64,
    success: bool,
}

pub fn sweep_separation(sc: &Scenario, out: &mut OutputDir) -> Result<(), CliError> {
    let spec = sc.sweep.as_ref().ok_or_else(|| sc.missing("sweep", "sweep-separation"))?;
    let (radius, m) = sc.require_surface("sweep-separation")?;
    let surface = build_measurement_surface(radius, m, &sc.ctx)?;
    let grid = &sc.grid;
    out.tolerance("peak_threshold", PEAK_THRESHOLD);
    out.tolerance("l1_tol", spec.l1.tol);
    out.tolerance("l1_max_iters", spec.l1.max_iters);

    // sources are snapped to grid points so the target is representable
    let pairs: Vec<(Point, Point)> = spec
        .separations
        .iter()
        .map(|&d| {
            let c = spec.center;
            let a = grid.points[grid.nearest_index(&[c[0] - 0.5 * d, c[1], c[2]])];
            let b = grid.points[grid.nearest_index(&[c[0] + 0.5 * d, c[1], c[2]])];
            (a, b)
        })
        .collect();

    let mut rows = Vec::new();
    for &choice in &spec.media {
        let medium = medium_for(sc, choice, out)?;
        let map = build_forward_map(grid, &surface, medium, &sc.ctx)?;
        let chunk: Vec<SweepRow> = pairs
            .par_iter()
            .map(|&(a, b)| {
                let source = SourceConfig::PointSources(vec![
                    (a, resonat_core::c64::new(1.0, 0.0)),
                    (b, resonat_core::c64::new(1.0, 0.0)),
                ]);
                let data = synthesize_data(&map, &source, spec.noise_level, sc.seed)?;
                let mu = l1_mu(&spec.l1, &map, &data.values);
                let r = l1_reconstruct(map.matrix.as_ref(), &data.values, l1_options(&spec.l1, mu))?;
                let truth = if distance(&a, &b) == 0.0 { vec![a] } else { vec![a, b] };
                let metrics = resolution_metrics(&r.values, &truth, grid)?;
                Ok(SweepRow {
                    separation: distance(&a, &b),
                    medium: choice.name(),
                    localization_error: metrics.localization_errors.iter().copied().fold(0.0, f64::max),
                    success: metrics.success && truth.len() == 2,
                })
            })
            .collect::<Result<_, CliError>>()?;
        rows.extend(chunk);
    }
    out.csv("sweep.csv", |w| write_sweep(w, &rows))?;
    out.result("requested_separations", json!(spec.separations));
    out.result("media", json!(spec.media.iter().map(|m| m.name()).collect::<Vec<_>>()));
    out.result("successes", rows.iter().filter(|r| r.success).count());
    out.result("surface_radius", radius);
    out.result("surface_points", m);
    Ok(())
}

fn write_sweep<W: std::io::Write>(w: W, rows: &[SweepRow]) -> resonat_core::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let fail = |e: csv::Error| Error::Numeric(format!("write failed: {e}"));
    wr.write_record(["separation", "medium_tag", "localization_error", "success_flag"]).map_err(fail)?;
    for r in rows {
        wr.write_record([
            export::num(r.separation),
            r.medium.to_string(),
            export::num(r.localization_error),
            r.success.to_string(),
        ])
        .map_err(fail)?;
    }
    wr.flush().map_err(|e| Error::Numeric(format!("write failed: {e}")))
}
