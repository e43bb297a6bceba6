//! Oversampled DFT dictionary over candidate delay phases.
//!
//! Atom `(n, l)` is `exp(j 2 pi n l / L)` for harmonics `n = 1..=N` and grid
//! indices `l = 0..L`. Grid index `l` corresponds to the base-frequency
//! phase `2 pi l / L`, i.e. depth `c l / (2 f0 L)`; the grid tiles one
//! unambiguous range exactly once.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::SPEED_OF_LIGHT;

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub harmonic_count: usize,
    pub grid_size: usize,
    pub base_frequency_hz: f64,
    /// Column-major: atom `(n, l)` at `l * N + (n - 1)`.
    atoms: Vec<Complex64>,
}

/// Builds the `N x L` dictionary. Requires `L >= 2N`.
pub fn build_dictionary(
    harmonic_count: usize,
    grid_size: usize,
    base_frequency_hz: f64,
) -> Result<Dictionary> {
    if harmonic_count == 0 {
        return Err(Error::Config("harmonic count must be at least 1".into()));
    }
    if !(base_frequency_hz.is_finite() && base_frequency_hz > 0.0) {
        return Err(Error::Config(format!(
            "base frequency must be positive, got {base_frequency_hz}"
        )));
    }
    if grid_size < 2 * harmonic_count {
        return Err(Error::InsufficientOversampling {
            grid_size,
            harmonics: harmonic_count,
        });
    }
    let mut atoms = Vec::with_capacity(harmonic_count * grid_size);
    for l in 0..grid_size {
        for n in 1..=harmonic_count {
            // reduce n*l mod L in integers so aliased columns are bit-identical
            let k = ((n as u128 * l as u128) % grid_size as u128) as f64;
            atoms.push(Complex64::from_polar(1.0, TAU * k / grid_size as f64));
        }
    }
    Ok(Dictionary {
        harmonic_count,
        grid_size,
        base_frequency_hz,
        atoms,
    })
}

impl Dictionary {
    /// Atom at 1-based harmonic `n` and grid index `l`.
    pub fn atom(&self, n: usize, l: usize) -> Complex64 {
        self.atoms[l * self.harmonic_count + n - 1]
    }

    /// Unnormalized column `l` (entries of unit modulus, norm `sqrt(N)`).
    pub fn column(&self, l: usize) -> &[Complex64] {
        let n = self.harmonic_count;
        &self.atoms[l * n..(l + 1) * n]
    }

    pub fn normalized_column(&self, l: usize) -> Vec<Complex64> {
        let s = 1.0 / (self.harmonic_count as f64).sqrt();
        self.column(l).iter().map(|a| a * s).collect()
    }

    /// Sub-matrix of the given columns.
    pub fn columns(&self, support: &[usize]) -> CMatrix {
        let cols: Vec<&[Complex64]> = support.iter().map(|&l| self.column(l)).collect();
        CMatrix::from_columns(self.harmonic_count, &cols).expect("dictionary columns have N rows")
    }

    pub fn unambiguous_range(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.base_frequency_hz)
    }

    /// Depth spacing between adjacent grid indices.
    pub fn grid_cell(&self) -> f64 {
        self.unambiguous_range() / self.grid_size as f64
    }

    /// Writes `n,l,re,im` rows for every atom.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,l,re,im")?;
        for l in 0..self.grid_size {
            for n in 1..=self.harmonic_count {
                let a = self.atom(n, l);
                writeln!(out, "{n},{l},{},{}", a.re, a.im)?;
            }
        }
        Ok(())
    }
}

/// Depth of grid index `l`: `c l / (2 f0 L)`.
pub fn grid_index_to_depth(l: usize, dict: &Dictionary) -> Result<f64> {
    if l >= dict.grid_size {
        return Err(Error::IndexOutOfRange {
            index: l,
            grid_size: dict.grid_size,
        });
    }
    Ok(SPEED_OF_LIGHT * l as f64 / (2.0 * dict.base_frequency_hz * dict.grid_size as f64))
}

/// Nearest grid index to a depth inside the unambiguous range; ties round down.
/// A depth just below the range rounds to index 0 (the grid is circular).
pub fn depth_to_nearest_grid_index(depth: f64, dict: &Dictionary) -> Result<usize> {
    if !(depth.is_finite() && depth >= 0.0) {
        return Err(Error::Domain(format!("depth must be finite and >= 0, got {depth}")));
    }
    let range = dict.unambiguous_range();
    if depth >= range {
        return Err(Error::AliasedDepth { depth, range });
    }
    let position = depth * 2.0 * dict.base_frequency_hz * dict.grid_size as f64 / SPEED_OF_LIGHT;
    let l = (position - 0.5).ceil().max(0.0) as usize;
    Ok(l % dict.grid_size)
}

/// Vandermonde matrix with entry `(n, k) = exp(j n phi_k)`, `n = 1..=N`.
pub fn forward_vandermonde(phases: &[f64], harmonic_count: usize) -> CMatrix {
    let mut m = CMatrix::zeros(harmonic_count, phases.len());
    for (k, &phi) in phases.iter().enumerate() {
        for n in 1..=harmonic_count {
            m.data[k * harmonic_count + n - 1] = Complex64::from_polar(1.0, n as f64 * phi);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn fourth_roots_of_unity() {
        let d = build_dictionary(1, 4, 1e6).unwrap();
        let want = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
        for (l, (re, im)) in want.into_iter().enumerate() {
            assert!(close(d.atom(1, l), Complex64::new(re, im), 1e-15));
        }
    }

    #[test]
    fn second_harmonic_is_square_of_first() {
        let d = build_dictionary(2, 4, 1e6).unwrap();
        for l in 0..4 {
            assert!(close(d.atom(2, l), d.atom(1, l).powu(2), 1e-15));
        }
    }

    #[test]
    fn column_matches_direct_exponential() {
        let d = build_dictionary(77, 4096, 0.7937e6).unwrap();
        for n in 1..=77 {
            let want = Complex64::from_polar(1.0, 2.0 * PI * 100.0 * n as f64 / 4096.0);
            assert!(close(d.atom(n, 100), want, 1e-12));
        }
    }

    #[test]
    fn undersampled_grid_is_rejected() {
        assert!(matches!(
            build_dictionary(10, 19, 1e6),
            Err(Error::InsufficientOversampling { .. })
        ));
        assert!(build_dictionary(10, 20, 1e6).is_ok());
    }

    #[test]
    fn grid_depths() {
        let d = build_dictionary(77, 4096, 0.7937e6).unwrap();
        assert_eq!(grid_index_to_depth(0, &d).unwrap(), 0.0);
        let half = grid_index_to_depth(2048, &d).unwrap();
        assert!((half - 299_792_458.0 / (4.0 * 0.7937e6)).abs() < 1e-9);
        assert!((half - 94.43).abs() < 0.01);
        assert!((d.unambiguous_range() - 188.86).abs() < 0.01);
        assert!((d.grid_cell() - 0.0461).abs() < 1e-4);
        assert!(grid_index_to_depth(4096, &d).is_err());
    }

    #[test]
    fn nearest_grid_index() {
        let d = build_dictionary(77, 4096, 0.7937e6).unwrap();
        assert_eq!(depth_to_nearest_grid_index(0.0, &d).unwrap(), 0);
        let g17 = grid_index_to_depth(17, &d).unwrap();
        assert_eq!(depth_to_nearest_grid_index(g17, &d).unwrap(), 17);
        // 8.1 * 2 * 0.7937e6 * 4096 / c = 175.68...
        assert_eq!(depth_to_nearest_grid_index(8.1, &d).unwrap(), 176);
        assert!(matches!(
            depth_to_nearest_grid_index(d.unambiguous_range(), &d),
            Err(Error::AliasedDepth { .. })
        ));
    }

    #[test]
    fn ties_round_down() {
        let d = build_dictionary(2, 8, SPEED_OF_LIGHT / 16.0).unwrap();
        // cell is exactly 1 m here, so 2.5 m sits halfway between 2 and 3
        assert_eq!(d.grid_cell(), 1.0);
        assert_eq!(depth_to_nearest_grid_index(2.5, &d).unwrap(), 2);
        assert_eq!(depth_to_nearest_grid_index(2.5000001, &d).unwrap(), 3);
        assert_eq!(depth_to_nearest_grid_index(7.9, &d).unwrap(), 0);
    }

    #[test]
    fn vandermonde_examples() {
        let v = forward_vandermonde(&[0.0], 3);
        assert!(v.column(0).iter().all(|&x| close(x, Complex64::new(1.0, 0.0), 1e-15)));
        let v = forward_vandermonde(&[0.0, PI], 2);
        assert!(close(v.get(0, 1), Complex64::new(-1.0, 0.0), 1e-15));
        assert!(close(v.get(1, 1), Complex64::new(1.0, 0.0), 1e-15));
    }

    #[test]
    fn aliased_depths_share_a_column() {
        let d = build_dictionary(77, 4096, 0.7937e6).unwrap();
        let plan = crate::model::ModulationPlan::new(0.7937e6, 77);
        let range = d.unambiguous_range();
        for depth in [1.234, 8.1, 100.0] {
            for n in 1..=77 {
                let omega = plan.angular_frequency(n);
                let a = Complex64::from_polar(1.0, 2.0 * depth * omega / SPEED_OF_LIGHT);
                let b = Complex64::from_polar(1.0, 2.0 * (depth + range) * omega / SPEED_OF_LIGHT);
                assert!(close(a, b, 1e-12), "depth {depth} n {n}");
            }
        }
    }

    #[test]
    fn adjacent_column_coherence_drops_with_coarser_grid() {
        let coherence = |l: usize| {
            let d = build_dictionary(16, l, 1e6).unwrap();
            crate::linalg::inner(d.column(0), d.column(1)).norm()
        };
        let mut previous = f64::INFINITY;
        for l in [4096, 1024, 256, 64, 32] {
            let c = coherence(l);
            assert!(c < 16.0);
            assert!(c < previous);
            previous = c;
        }
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let d = build_dictionary(2, 4, 1e6).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "n,l,re,im");
        assert_eq!(lines.len(), 9);
        assert!(lines[1].starts_with("1,0,1,0"));
    }
}
