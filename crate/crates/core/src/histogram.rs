//! Phase histograms of depth maps at a chosen harmonic.

use std::f64::consts::TAU;
use std::io::Write;

use crate::error::{Error, Result};
use crate::pipeline::MapStack;
use crate::sensor::wrap_phase;
use crate::SPEED_OF_LIGHT;

/// Counts per phase bin over `[0, 2 pi)`, one column per series.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramTable {
    pub harmonic: usize,
    pub centers: Vec<f64>,
    pub series: Vec<(String, Vec<u64>)>,
}

/// Wrapped phase of a depth at angular frequency `omega`.
pub fn depth_phase(depth: f64, omega: f64) -> f64 {
    wrap_phase(2.0 * depth * omega / SPEED_OF_LIGHT)
}

fn bin_of(phase: f64, bins: usize) -> usize {
    ((phase / TAU * bins as f64) as usize).min(bins - 1)
}

/// Histogram of a set of depths converted to phase.
pub fn histogram_counts(depths: &[f64], omega: f64, bins: usize) -> Vec<u64> {
    let mut counts = vec![0; bins];
    for &d in depths {
        counts[bin_of(depth_phase(d, omega), bins)] += 1;
    }
    counts
}

/// Histogram of the baseline map and every component map of `maps`.
/// Pixels whose amplitude is zero (sentinel or no signal) are left out.
pub fn phase_histogram(maps: &MapStack, harmonic: usize, bins: usize) -> Result<HistogramTable> {
    if bins < 2 {
        return Err(Error::Config(format!("histogram needs at least 2 bins, got {bins}")));
    }
    if harmonic == 0 {
        return Err(Error::Config("harmonic must be >= 1".into()));
    }
    let omega = TAU * maps.base_frequency_hz * harmonic as f64;
    let centers = (0..bins).map(|b| (b as f64 + 0.5) * TAU / bins as f64).collect();
    let mut series = vec![(
        "baseline".to_string(),
        histogram_counts(&maps.baseline_present_depths(), omega, bins),
    )];
    for k in 0..maps.components() {
        series.push((
            format!("component_{}", k + 1),
            histogram_counts(&maps.present_depths(k), omega, bins),
        ));
    }
    Ok(HistogramTable {
        harmonic,
        centers,
        series,
    })
}

impl HistogramTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "bin_center")?;
        for (name, _) in &self.series {
            write!(out, ",{name}")?;
        }
        writeln!(out)?;
        for (b, c) in self.centers.iter().enumerate() {
            write!(out, "{c}")?;
            for (_, counts) in &self.series {
                write!(out, ",{}", counts[b])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn counts(&self, name: &str) -> Option<&[u64]> {
        self.series
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_slice())
    }
}

/// Circular standard deviation `sqrt(-2 ln R)` of a set of angles, where `R`
/// is the mean resultant length. Zero for identical angles.
pub fn circular_std(phases: &[f64]) -> f64 {
    if phases.is_empty() {
        return 0.0;
    }
    // measured relative to the first angle so identical inputs give exactly 0
    let origin = phases[0];
    let (s, c) = phases.iter().fold((0.0, 0.0), |(s, c), p| {
        let d = p - origin;
        (s + d.sin(), c + d.cos())
    });
    let r = (s.hypot(c) / phases.len() as f64).min(1.0);
    (-2.0 * r.ln()).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_depths_fill_one_bin() {
        let counts = histogram_counts(&[5.0; 40], TAU * 1e6, 64);
        assert_eq!(counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(counts.iter().sum::<u64>(), 40);
    }

    #[test]
    fn phase_wraps_into_last_bin_not_past_it() {
        assert_eq!(bin_of(TAU - 1e-12, 8), 7);
        assert_eq!(bin_of(0.0, 8), 0);
    }

    #[test]
    fn circular_std_matches_linear_for_tight_clusters() {
        let phases = [1.0, 1.01, 0.99, 1.0];
        let mean = 1.0;
        let linear = (phases.iter().map(|p: &f64| (p - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((circular_std(&phases) - linear).abs() < 1e-4);
        assert_eq!(circular_std(&[0.3; 5]), 0.0);
    }

    #[test]
    fn circular_std_handles_wraparound() {
        let a = circular_std(&[0.01, TAU - 0.01]);
        assert!(a < 0.02);
    }
}
