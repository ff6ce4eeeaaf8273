//! Peak-based localisation metrics for reconstructed point sources.

use faer::c64;

use crate::error::{invalid, Result};
use crate::grid::{distance, DomainGrid, Point};

/// Peaks must exceed this fraction of the maximum magnitude.
pub const PEAK_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionMetrics {
    /// Grid indices of the detected peaks, in index order.
    pub peaks: Vec<usize>,
    /// Distance from each true source to its nearest peak.
    pub localization_errors: Vec<f64>,
    pub support_f1: f64,
    /// Minimum pairwise distance between the true sources.
    pub separation: Option<f64>,
    /// Every source has a peak within one cell and every peak has a source
    /// within one cell.
    pub success: bool,
    /// Match radius `√dim · cell_size` (one cell diagonal).
    pub tolerance: f64,
}

impl ResolutionMetrics {
    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }
}

/// Local maxima of `|g|` over the lattice neighbourhood (Chebyshev distance
/// one) above [`PEAK_THRESHOLD`] of the maximum. Ties go to the lower index.
pub fn detect_peaks(values: &[f64], grid: &DomainGrid) -> Vec<usize> {
    let max = values.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Vec::new();
    }
    let near = |a: &[usize; 3], b: &[usize; 3]| (0..3).all(|d| a[d].abs_diff(b[d]) <= 1);
    (0..values.len())
        .filter(|&i| {
            values[i] >= PEAK_THRESHOLD * max
                && (0..values.len()).all(|j| {
                    j == i
                        || !near(&grid.lattice[i], &grid.lattice[j])
                        || values[j] < values[i]
                        || (values[j] == values[i] && j > i)
                })
        })
        .collect()
}

pub fn resolution_metrics(values: &[c64], truth: &[Point], grid: &DomainGrid) -> Result<ResolutionMetrics> {
    if values.len() != grid.len() {
        return invalid("reconstruction does not live on this grid");
    }
    if truth.is_empty() {
        return invalid("metrics need at least one true source");
    }
    let mags: Vec<f64> = values.iter().map(|z| z.norm()).collect();
    let peaks = detect_peaks(&mags, grid);
    let tolerance = (grid.dim() as f64).sqrt() * grid.cell_size * (1.0 + 1e-9);
    let nearest = |p: &Point, set: &mut dyn Iterator<Item = Point>| set.map(|q| distance(p, &q)).fold(f64::INFINITY, f64::min);
    let localization_errors: Vec<f64> = truth
        .iter()
        .map(|s| nearest(s, &mut peaks.iter().map(|&i| grid.points[i])))
        .collect();
    let recall = localization_errors.iter().filter(|&&e| e <= tolerance).count() as f64 / truth.len() as f64;
    let precision = if peaks.is_empty() {
        0.0
    } else {
        peaks
            .iter()
            .filter(|&&i| nearest(&grid.points[i], &mut truth.iter().copied()) <= tolerance)
            .count() as f64
            / peaks.len() as f64
    };
    let support_f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    let mut separation: Option<f64> = None;
    for a in 0..truth.len() {
        for b in a + 1..truth.len() {
            let d = distance(&truth[a], &truth[b]);
            separation = Some(separation.map_or(d, |s| s.min(d)));
        }
    }
    Ok(ResolutionMetrics {
        success: recall == 1.0 && precision == 1.0,
        peaks,
        localization_errors,
        support_f1,
        separation,
        tolerance,
    })
}
