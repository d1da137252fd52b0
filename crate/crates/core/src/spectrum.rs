//! Linear-response (small flip angle) single-quantum stick spectra.
//!
//! Each transition contributes a line at its frequency with intensity
//! (p_lower − p_upper)·|⟨upper|I_+|lower⟩|², so a line is positive when the
//! lower-m state holds more population.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nonunitary::TransitionGraph;

pub const DEFAULT_MERGE_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_INTENSITY_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub frequency: f64,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StickSpectrum {
    pub lines: Vec<Line>,
    pub merged: bool,
    pub merge_tolerance: f64,
}

impl StickSpectrum {
    pub fn total_intensity(&self) -> f64 {
        self.lines.iter().map(|l| l.intensity).sum()
    }

    pub fn max_abs_intensity(&self) -> f64 {
        self.lines.iter().fold(0.0, |m, l| m.max(l.intensity.abs()))
    }

    /// Lines whose |intensity| exceeds `floor` × the largest |intensity|.
    pub fn significant(&self, floor: f64) -> Vec<Line> {
        let cut = floor * self.max_abs_intensity();
        self.lines.iter().copied().filter(|l| l.intensity.abs() > cut).collect()
    }

    /// Line nearest `frequency`, if within `tol`.
    pub fn line_near(&self, frequency: f64, tol: f64) -> Option<Line> {
        self.lines
            .iter()
            .copied()
            .filter(|l| (l.frequency - frequency).abs() <= tol)
            .min_by(|a, b| {
                (a.frequency - frequency).abs().total_cmp(&(b.frequency - frequency).abs())
            })
    }

    pub fn negated(&self) -> StickSpectrum {
        StickSpectrum {
            lines: self
                .lines
                .iter()
                .map(|l| Line { frequency: l.frequency, intensity: -l.intensity })
                .collect(),
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["frequency", "intensity"])?;
        for l in &self.lines {
            out.write_record([format!("{:.15e}", l.frequency), format!("{:.15e}", l.intensity)])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// One line per transition, populations given over the graph's eigenstates.
pub fn linear_response(populations: &[f64], graph: &TransitionGraph) -> Result<StickSpectrum> {
    if populations.len() != graph.n_states() {
        return Err(Error::DimensionMismatch {
            expected: graph.n_states(),
            found: populations.len(),
        });
    }
    let lines = graph
        .transitions
        .iter()
        .map(|t| Line {
            frequency: t.frequency,
            intensity: (populations[t.lower] - populations[t.upper]) * t.strength,
        })
        .collect();
    Ok(StickSpectrum { lines, merged: false, merge_tolerance: 0.0 })
}

/// Coalesces lines closer than `tolerance` (single-linkage on the sorted
/// frequencies). A merged line sits at the |intensity|-weighted mean
/// frequency and carries the summed intensity; clusters that cancel to
/// below 1e-8 of the strongest line are dropped.
pub fn merge_peaks(spectrum: &StickSpectrum, tolerance: f64) -> Result<StickSpectrum> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidParameter(format!("merge tolerance must be positive, got {tolerance}")));
    }
    let mut sorted = spectrum.lines.clone();
    sorted.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));

    let mut clusters: Vec<Vec<Line>> = Vec::new();
    for line in sorted {
        match clusters.last_mut() {
            Some(c) if line.frequency - c.last().map_or(f64::NEG_INFINITY, |l| l.frequency) <= tolerance => {
                c.push(line)
            }
            _ => clusters.push(vec![line]),
        }
    }

    let merged: Vec<Line> = clusters
        .iter()
        .map(|c| {
            let intensity: f64 = c.iter().map(|l| l.intensity).sum();
            let weight: f64 = c.iter().map(|l| l.intensity.abs()).sum();
            let frequency = if weight > 0.0 {
                c.iter().map(|l| l.frequency * l.intensity.abs()).sum::<f64>() / weight
            } else {
                c.iter().map(|l| l.frequency).sum::<f64>() / c.len() as f64
            };
            Line { frequency, intensity }
        })
        .collect();
    let max = merged.iter().fold(0.0f64, |m, l| m.max(l.intensity.abs()));
    let lines = merged.into_iter().filter(|l| l.intensity.abs() > 1e-8 * max).collect();
    Ok(StickSpectrum { lines, merged: true, merge_tolerance: tolerance })
}

pub fn count_peaks(spectrum: &StickSpectrum, intensity_floor: f64) -> Result<usize> {
    if !spectrum.merged {
        return Err(Error::Unmerged);
    }
    Ok(spectrum.significant(intensity_floor).len())
}

/// Sum of Lorentzians I / (1 + ((f − f₀)/w)²) sampled on `grid`.
pub fn broaden(spectrum: &StickSpectrum, linewidth: f64, grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty frequency grid".into()));
    }
    if !(linewidth > 0.0) {
        return Err(Error::InvalidParameter(format!("linewidth must be positive, got {linewidth}")));
    }
    Ok(grid
        .iter()
        .map(|&f| {
            spectrum
                .lines
                .iter()
                .map(|l| {
                    let x = (f - l.frequency) / linewidth;
                    l.intensity / (1.0 + x * x)
                })
                .sum()
        })
        .collect())
}

/// Uniform grid covering every line with `margin` on both sides.
pub fn frequency_grid(spectrum: &StickSpectrum, margin: f64, points: usize) -> Vec<f64> {
    let lo = spectrum.lines.iter().map(|l| l.frequency).fold(f64::INFINITY, f64::min);
    let hi = spectrum.lines.iter().map(|l| l.frequency).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() { (lo - margin, hi + margin) } else { (-margin, margin) };
    let points = points.max(2);
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|k| lo + k as f64 * step).collect()
}

pub fn write_curve_csv<W: Write>(grid: &[f64], curve: &[f64], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["frequency", "amplitude"])?;
    for (f, a) in grid.iter().zip(curve) {
        out.write_record([format!("{f:.10e}"), format!("{a:.15e}")])?;
    }
    out.flush()?;
    Ok(())
}

/// Peak count as a function of merge tolerance.
pub fn count_vs_tolerance(
    raw: &StickSpectrum,
    tolerances: &[f64],
    floor: f64,
) -> Result<Vec<(f64, usize)>> {
    tolerances
        .iter()
        .map(|&tol| Ok((tol, count_peaks(&merge_peaks(raw, tol)?, floor)?)))
        .collect()
}
