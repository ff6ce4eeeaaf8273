//! CSV writers for grids, fields, spectra, coefficient matrices and profiles.
//! Floats use the shortest round-trip formatting (see [`num`]), so output is
//! deterministic and loss-free.

use std::io::Write;

use faer::{c64, MatRef};

use crate::error::{Error, Result};
use crate::expansion::PsfProfile;
use crate::grid::DomainGrid;
use crate::spectral::SpectralSystem;

/// Shortest round-trip form, switching to scientific notation outside
/// `[1e-4, 1e15)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Numeric(format!("write failed: {e}"))
}

struct Csv<W: Write>(csv::Writer<W>);

impl<W: Write> Csv<W> {
    fn new(w: W, header: &[&str]) -> Result<Self> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(header).map_err(io_err)?;
        Ok(Self(wr))
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        self.0.write_record(fields).map_err(io_err)
    }

    fn finish(mut self) -> Result<()> {
        self.0.flush().map_err(io_err)
    }
}

pub fn write_grid<W: Write>(w: W, grid: &DomainGrid) -> Result<()> {
    let three = grid.dim() == 3;
    let header: &[&str] = if three { &["index", "x", "y", "z", "weight"] } else { &["index", "x", "y", "weight"] };
    let mut out = Csv::new(w, header)?;
    for (i, (p, wt)) in grid.points.iter().zip(&grid.weights).enumerate() {
        let mut row = vec![i.to_string(), num(p[0]), num(p[1])];
        if three {
            row.push(num(p[2]));
        }
        row.push(num(*wt));
        out.row(&row)?;
    }
    out.finish()
}

/// Columns `i, j, re, im` for a sampled Green function.
pub fn write_field<W: Write>(w: W, values: MatRef<'_, c64>) -> Result<()> {
    write_matrix(w, values, &["i", "j", "re", "im"])
}

/// Columns `row, col, re, im` for a coefficient matrix.
pub fn write_coefficients<W: Write>(w: W, values: MatRef<'_, c64>) -> Result<()> {
    write_matrix(w, values, &["row", "col", "re", "im"])
}

fn write_matrix<W: Write>(w: W, values: MatRef<'_, c64>, header: &[&str]) -> Result<()> {
    let mut out = Csv::new(w, header)?;
    for i in 0..values.nrows() {
        for j in 0..values.ncols() {
            let z = values[(i, j)];
            out.row(&[i.to_string(), j.to_string(), num(z.re), num(z.im)])?;
        }
    }
    out.finish()
}

pub fn write_spectrum<W: Write>(w: W, sys: &SpectralSystem) -> Result<()> {
    let mut out = Csv::new(w, &["j", "l", "k", "re_lambda", "im_lambda", "chain_len"])?;
    for (p, g) in sys.indices().iter().enumerate() {
        let chain = sys.chain_at(p);
        let lam = chain.eigenvalue;
        out.row(&[
            g.j.to_string(),
            g.l.to_string(),
            g.k.to_string(),
            num(lam.re),
            num(lam.im),
            chain.len.to_string(),
        ])?;
    }
    out.finish()
}

/// One grid field per row: `index, x, y[, z], re, im`.
pub fn write_grid_field<W: Write>(w: W, grid: &DomainGrid, values: &[c64]) -> Result<()> {
    let three = grid.dim() == 3;
    let header: &[&str] = if three { &["index", "x", "y", "z", "re", "im"] } else { &["index", "x", "y", "re", "im"] };
    let mut out = Csv::new(w, header)?;
    for (i, (p, z)) in grid.points.iter().zip(values).enumerate() {
        let mut row = vec![i.to_string(), num(p[0]), num(p[1])];
        if three {
            row.push(num(p[2]));
        }
        row.push(num(z.re));
        row.push(num(z.im));
        out.row(&row)?;
    }
    out.finish()
}

pub fn write_psf<W: Write>(w: W, profile: &PsfProfile, oracle: Option<&[f64]>) -> Result<()> {
    let mut out = Csv::new(w, &["r", "value", "oracle_value"])?;
    for (i, (r, v)) in profile.radii.iter().zip(&profile.values).enumerate() {
        let o = oracle.map(|o| num(o[i])).unwrap_or_default();
        out.row(&[num(*r), num(*v), o])?;
    }
    out.finish()
}

pub fn write_truncation<W: Write>(w: W, curve: &[(usize, f64)]) -> Result<()> {
    let mut out = Csv::new(w, &["rank", "rel_error"])?;
    for (r, e) in curve {
        out.row(&[r.to_string(), num(*e)])?;
    }
    out.finish()
}

/// Reconstruction on the grid: `index, re, im, magnitude`.
pub fn write_result<W: Write>(w: W, values: &[c64]) -> Result<()> {
    let mut out = Csv::new(w, &["index", "re", "im", "magnitude"])?;
    for (i, z) in values.iter().enumerate() {
        out.row(&[i.to_string(), num(z.re), num(z.im), num(z.norm())])?;
    }
    out.finish()
}
