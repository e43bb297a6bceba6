//! Sparse decomposition of a pixel's measurement vector over the dictionary.
//!
//! [`omp_decompose`] is the greedy solver used by the pipeline.
//! [`brute_force_decompose`] enumerates every support of size `K` and is
//! kept as an exact reference for small grids.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::linalg::{inner, least_squares_on_support, norm2, orthonormal_basis, project_out};

/// Coefficients whose phase exceeds this (radians) set `phase_warning`.
pub const PHASE_WARNING_RAD: f64 = 0.1;

/// Largest number of supports [`brute_force_decompose`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u64 = 10_000_000;

/// Upper bound on relocation sweeps per OMP iteration.
const MAX_SWEEPS: usize = 16;

/// On-grid relocation of selected atoms after each projection.
///
/// Greedy selection on a finely oversampled grid is biased: sidelobes of
/// nearby components shift the correlation peak by a few cells. After each
/// least-squares step every selected atom is moved, one at a time, to the
/// index within `radius` cells that minimizes the residual with the other
/// atoms held fixed, until no move helps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "radius")]
pub enum LocalSearch {
    /// Plain OMP.
    Off,
    /// Radius of one main-lobe width, `ceil(L / N)` cells.
    Auto,
    Radius(usize),
}

impl LocalSearch {
    pub fn radius(&self, dict: &Dictionary) -> usize {
        match *self {
            LocalSearch::Off => 0,
            LocalSearch::Auto => dict.grid_size.div_ceil(dict.harmonic_count),
            LocalSearch::Radius(r) => r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_components: usize,
    /// Stop once the residual norm is at or below this.
    pub residual_tolerance: f64,
    /// Components with smaller magnitude are dropped from the reported solution.
    pub min_amplitude: f64,
    /// Joint least-squares refit on the final support. OMP already
    /// re-projects on every iteration, so this only matters for the
    /// reported coefficients when atoms were skipped.
    pub refit: bool,
    pub local_search: LocalSearch,
}

impl SolverConfig {
    pub fn with_max_components(k: usize) -> Self {
        Self {
            max_components: k,
            residual_tolerance: 0.0,
            min_amplitude: 0.0,
            refit: true,
            local_search: LocalSearch::Auto,
        }
    }

    /// `sqrt(2N) * sigma_z`: expected residual norm of pure noise with
    /// per-part standard deviation `sigma_z` over `N` harmonics.
    pub fn default_tolerance(harmonic_count: usize, sigma_z: f64) -> f64 {
        (2.0 * harmonic_count as f64).sqrt() * sigma_z
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_components == 0 {
            return Err(Error::Config("max components must be at least 1".into()));
        }
        if !(self.residual_tolerance >= 0.0) {
            return Err(Error::Config(format!(
                "residual tolerance must be >= 0, got {}",
                self.residual_tolerance
            )));
        }
        if !(self.min_amplitude >= 0.0) {
            return Err(Error::Config(format!(
                "min amplitude must be >= 0, got {}",
                self.min_amplitude
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ZeroInput,
    Tolerance,
    Budget,
    /// No admissible atom left (all remaining candidates rank-deficient).
    Exhausted,
    /// Brute-force search always evaluates exactly `K` atoms.
    Exhaustive,
}

/// One OMP iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub iteration: usize,
    pub selected_index: usize,
    /// `|<atom, residual>| / sqrt(N)` of the selected atom.
    pub correlation: f64,
    /// Residual norm after this step; unchanged when the atom was skipped.
    pub residual_norm: f64,
    pub skipped: bool,
    /// Atoms moved by the local search in this step.
    pub relocations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSolution {
    /// Grid indices in selection order.
    pub support: Vec<usize>,
    pub coefficients: Vec<Complex64>,
    /// `|coefficient|` for each support entry.
    pub amplitudes: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub stop: StopReason,
    /// Some reported coefficient has phase beyond [`PHASE_WARNING_RAD`].
    pub phase_warning: bool,
    pub trace: Vec<TraceStep>,
}

impl SparseSolution {
    fn empty(residual_norm: f64, stop: StopReason) -> Self {
        Self {
            support: Vec::new(),
            coefficients: Vec::new(),
            amplitudes: Vec::new(),
            residual_norm,
            iterations: 0,
            stop,
            phase_warning: false,
            trace: Vec::new(),
        }
    }

    /// `(grid_index, amplitude)` pairs ordered by grid index.
    pub fn sorted_components(&self) -> Vec<(usize, f64)> {
        let mut v: Vec<_> = self
            .support
            .iter()
            .copied()
            .zip(self.amplitudes.iter().copied())
            .collect();
        v.sort_by_key(|&(l, _)| l);
        v
    }
}

fn check_measurement(z: &[Complex64], dict: &Dictionary) -> Result<()> {
    if z.len() != dict.harmonic_count {
        return Err(Error::Input(format!(
            "measurement has {} harmonics, dictionary has {}",
            z.len(),
            dict.harmonic_count
        )));
    }
    if z.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::Input("measurement contains non-finite values".into()));
    }
    Ok(())
}

/// Index of the atom with the largest `|<atom, residual>|` among those not
/// excluded or already selected; ties go to the lowest index.
fn best_atom(
    dict: &Dictionary,
    residual: &[Complex64],
    excluded: &[bool],
    support: &[usize],
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (l, &skip) in excluded.iter().enumerate() {
        if skip || support.contains(&l) {
            continue;
        }
        let c = inner(dict.column(l), residual).norm_sqr();
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((l, c));
        }
    }
    best.map(|(l, c)| (l, c.sqrt() / (dict.harmonic_count as f64).sqrt()))
}

/// Orthogonal matching pursuit.
///
/// Each iteration picks the atom most correlated with the residual, solves
/// least squares on the whole support, and recomputes the residual. Stops
/// when the residual norm is at most `residual_tolerance` or the support
/// holds `max_components` atoms, whichever comes first.
pub fn omp_decompose(
    z: &[Complex64],
    dict: &Dictionary,
    config: &SolverConfig,
) -> Result<SparseSolution> {
    config.validate()?;
    check_measurement(z, dict)?;

    let z_norm = norm2(z);
    if z_norm == 0.0 {
        return Ok(SparseSolution::empty(0.0, StopReason::ZeroInput));
    }

    let budget = config.max_components.min(dict.harmonic_count);
    let radius = config.local_search.radius(dict);
    let mut excluded = vec![false; dict.grid_size];
    let mut support: Vec<usize> = Vec::new();
    let mut coefficients: Vec<Complex64> = Vec::new();
    let mut residual = z.to_vec();
    let mut residual_norm = z_norm;
    let mut trace = Vec::new();
    let mut iteration = 0;

    let stop = loop {
        if residual_norm <= config.residual_tolerance {
            break StopReason::Tolerance;
        }
        if support.len() >= budget {
            break StopReason::Budget;
        }
        let Some((l, correlation)) = best_atom(dict, &residual, &excluded, &support) else {
            break StopReason::Exhausted;
        };
        iteration += 1;
        support.push(l);
        match least_squares_on_support(z, &dict.columns(&support)) {
            Ok(mut ls) => {
                let relocations = relocate(z, dict, &mut support, radius);
                if relocations > 0 {
                    ls = least_squares_on_support(z, &dict.columns(&support))?;
                }
                coefficients = ls.coefficients;
                residual = ls.residual;
                residual_norm = ls.residual_norm;
                trace.push(TraceStep {
                    iteration,
                    selected_index: l,
                    correlation,
                    residual_norm,
                    skipped: false,
                    relocations,
                });
            }
            Err(Error::RankDeficient { .. }) => {
                support.pop();
                excluded[l] = true;
                trace.push(TraceStep {
                    iteration,
                    selected_index: l,
                    correlation,
                    residual_norm,
                    skipped: true,
                    relocations: 0,
                });
            }
            Err(e) => return Err(e),
        }
    };

    if config.refit && !support.is_empty() {
        let ls = least_squares_on_support(z, &dict.columns(&support))?;
        coefficients = ls.coefficients;
        residual_norm = ls.residual_norm;
    }

    // dropping atoms below the amplitude floor changes the fit
    while coefficients.iter().any(|c| c.norm() < config.min_amplitude) {
        let (kept, kept_coefs): (Vec<usize>, Vec<Complex64>) = support
            .iter()
            .zip(&coefficients)
            .filter(|(_, c)| c.norm() >= config.min_amplitude)
            .map(|(&l, &c)| (l, c))
            .unzip();
        support = kept;
        if support.is_empty() {
            coefficients.clear();
            residual_norm = z_norm;
        } else if config.refit {
            let ls = least_squares_on_support(z, &dict.columns(&support))?;
            coefficients = ls.coefficients;
            residual_norm = ls.residual_norm;
        } else {
            let fitted = dict.columns(&support).mul_vec(&kept_coefs);
            let r: Vec<Complex64> = z.iter().zip(&fitted).map(|(a, b)| a - b).collect();
            coefficients = kept_coefs;
            residual_norm = norm2(&r);
        }
    }

    let mut solution = SparseSolution::empty(residual_norm, stop);
    solution.iterations = iteration;
    solution.trace = trace;
    for (l, c) in support.into_iter().zip(coefficients) {
        solution.phase_warning |= c.arg().abs() > PHASE_WARNING_RAD;
        solution.support.push(l);
        solution.amplitudes.push(c.norm());
        solution.coefficients.push(c);
    }
    Ok(solution)
}

/// Moves support atoms one at a time to the position within `radius` cells
/// that best explains `z` together with the other atoms. Returns the number
/// of moves made.
fn relocate(z: &[Complex64], dict: &Dictionary, support: &mut [usize], radius: usize) -> usize {
    // a single atom at the correlation peak is already the best single fit
    if radius == 0 || support.len() < 2 {
        return 0;
    }
    let grid = dict.grid_size as isize;
    let min_gain = 1e-12 * z.iter().map(|c| c.norm_sqr()).sum::<f64>();
    let min_norm = 1e-20 * dict.harmonic_count as f64;
    let mut moves = 0;
    for _ in 0..MAX_SWEEPS {
        let mut changed = false;
        for i in 0..support.len() {
            let others: Vec<&[Complex64]> = support
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &l)| dict.column(l))
                .collect();
            let Ok(basis) = orthonormal_basis(&others) else {
                continue;
            };
            let mut r = z.to_vec();
            project_out(&basis, &mut r);
            // energy of r explained by atom l after removing the other atoms
            let score = |l: usize| {
                let mut a = dict.column(l).to_vec();
                project_out(&basis, &mut a);
                let n2: f64 = a.iter().map(|c| c.norm_sqr()).sum();
                (n2 > min_norm).then(|| inner(&a, &r).norm_sqr() / n2)
            };
            let current = score(support[i]).unwrap_or(0.0);
            let mut best = (support[i], current);
            for offset in -(radius as isize)..=radius as isize {
                let l = (support[i] as isize + offset).rem_euclid(grid) as usize;
                if support.contains(&l) {
                    continue;
                }
                if let Some(s) = score(l) {
                    if s > best.1 {
                        best = (l, s);
                    }
                }
            }
            if best.0 != support[i] && best.1 > current + min_gain {
                support[i] = best.0;
                moves += 1;
                changed = true;
            }
        }
        if !changed && !pair_step(z, dict, support, min_gain) {
            break;
        }
        if !changed {
            moves += 1;
        }
    }
    moves
}

const PAIR_RADIUS: isize = 2;

fn residual_energy(z: &[Complex64], dict: &Dictionary, support: &[usize]) -> Option<f64> {
    let cols: Vec<&[Complex64]> = support.iter().map(|&l| dict.column(l)).collect();
    let basis = orthonormal_basis(&cols).ok()?;
    let mut r = z.to_vec();
    project_out(&basis, &mut r);
    Some(r.iter().map(|c| c.norm_sqr()).sum())
}

/// Joint shift of two atoms, for pairs stuck where moving either alone
/// raises the residual.
fn pair_step(z: &[Complex64], dict: &Dictionary, support: &mut [usize], min_gain: f64) -> bool {
    let grid = dict.grid_size as isize;
    let Some(mut best) = residual_energy(z, dict, support) else {
        return false;
    };
    let mut improved = false;
    for i in 0..support.len() {
        for j in i + 1..support.len() {
            let (li, lj) = (support[i], support[j]);
            let mut best_pair = (li, lj);
            for di in -PAIR_RADIUS..=PAIR_RADIUS {
                for dj in -PAIR_RADIUS..=PAIR_RADIUS {
                    if di == 0 || dj == 0 {
                        continue;
                    }
                    let a = (li as isize + di).rem_euclid(grid) as usize;
                    let b = (lj as isize + dj).rem_euclid(grid) as usize;
                    if a == b
                        || support
                            .iter()
                            .enumerate()
                            .any(|(k, &l)| k != i && k != j && (l == a || l == b))
                    {
                        continue;
                    }
                    support[i] = a;
                    support[j] = b;
                    if let Some(e) = residual_energy(z, dict, support) {
                        if e + min_gain < best {
                            best = e;
                            best_pair = (a, b);
                        }
                    }
                }
            }
            support[i] = best_pair.0;
            support[j] = best_pair.1;
            improved |= best_pair != (li, lj);
        }
    }
    improved
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc.min(u64::MAX as u128) as u64
}

/// Solves the Hermitian positive definite system `G x = b` (`K <= 3`) by
/// Cholesky. Returns `None` when `G` is not numerically positive definite.
fn cholesky_solve(g: &[[Complex64; 3]; 3], b: &[Complex64], k: usize) -> Option<Vec<Complex64>> {
    let zero = Complex64::new(0.0, 0.0);
    let mut l = [[zero; 3]; 3];
    for i in 0..k {
        for j in 0..=i {
            let mut s = g[i][j];
            for p in 0..j {
                s -= l[i][p] * l[j][p].conj();
            }
            if i == j {
                let d = s.re;
                if !(d > 1e-12 * g[i][i].re) {
                    return None;
                }
                l[i][i] = Complex64::new(d.sqrt(), 0.0);
            } else {
                l[i][j] = s / l[j][j].re;
            }
        }
    }
    let mut y = vec![zero; k];
    for i in 0..k {
        let mut s = b[i];
        for p in 0..i {
            s -= l[i][p] * y[p];
        }
        y[i] = s / l[i][i].re;
    }
    let mut x = vec![zero; k];
    for i in (0..k).rev() {
        let mut s = y[i];
        for p in i + 1..k {
            s -= l[p][i].conj() * x[p];
        }
        x[i] = s / l[i][i].re;
    }
    Some(x)
}

/// Exhaustive search over all `K`-subsets of dictionary columns (`K <= 3`).
///
/// Each subset is scored through the normal equations: with `c = A^H z` and
/// `G = A^H A`, the squared residual is `||z||^2 - Re(c^H G^{-1} c)`. The
/// Gram entries only depend on the index difference, so they are tabulated
/// once. The winning subset's residual is recomputed directly.
pub fn brute_force_decompose(z: &[Complex64], dict: &Dictionary, k: usize) -> Result<SparseSolution> {
    check_measurement(z, dict)?;
    let grid = dict.grid_size;
    if !(1..=3).contains(&k) || k > dict.harmonic_count {
        return Err(Error::Config(format!(
            "brute-force search supports 1 <= K <= 3 (and K <= N), got {k}"
        )));
    }
    if binomial(grid, k) > BRUTE_FORCE_LIMIT {
        return Err(Error::SearchTooLarge {
            grid_size: grid,
            k,
            limit: BRUTE_FORCE_LIMIT,
        });
    }

    let z_energy: f64 = z.iter().map(|c| c.norm_sqr()).sum();
    let corr: Vec<Complex64> = (0..grid).map(|l| inner(dict.column(l), z)).collect();
    // gram[d] = <a_l, a_{l+d}> for any l
    let gram: Vec<Complex64> = (0..grid).map(|d| inner(dict.column(0), dict.column(d))).collect();
    let g = |a: usize, b: usize| gram[(b + grid - a) % grid];

    let zero = Complex64::new(0.0, 0.0);
    let mut best: Option<(f64, [usize; 3], Vec<Complex64>)> = None;
    let mut consider = |idx: [usize; 3]| {
        let mut gm = [[zero; 3]; 3];
        let mut rhs = [zero; 3];
        for i in 0..k {
            rhs[i] = corr[idx[i]];
            for j in 0..k {
                gm[i][j] = g(idx[i], idx[j]);
            }
        }
        let Some(x) = cholesky_solve(&gm, &rhs[..k], k) else {
            return;
        };
        let explained: f64 = (0..k).map(|i| (rhs[i].conj() * x[i]).re).sum();
        let objective = z_energy - explained;
        if best.as_ref().is_none_or(|(b, _, _)| objective < *b) {
            best = Some((objective, idx, x));
        }
    };

    match k {
        1 => (0..grid).for_each(|a| consider([a, 0, 0])),
        2 => {
            for a in 0..grid {
                for b in a + 1..grid {
                    consider([a, b, 0]);
                }
            }
        }
        _ => {
            for a in 0..grid {
                for b in a + 1..grid {
                    for c in b + 1..grid {
                        consider([a, b, c]);
                    }
                }
            }
        }
    }

    let (_, idx, x) = best.ok_or_else(|| Error::Input("no admissible support".into()))?;
    let support = idx[..k].to_vec();
    let fitted = dict.columns(&support).mul_vec(&x);
    let residual_norm = z
        .iter()
        .zip(&fitted)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let mut solution = SparseSolution::empty(residual_norm, StopReason::Exhaustive);
    solution.iterations = 1;
    solution.amplitudes = x.iter().map(|c| c.norm()).collect();
    solution.phase_warning = x.iter().any(|c| c.arg().abs() > PHASE_WARNING_RAD);
    solution.coefficients = x;
    solution.support = support;
    Ok(solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::build_dictionary;

    fn synth(dict: &Dictionary, parts: &[(usize, f64)]) -> Vec<Complex64> {
        let mut z = vec![Complex64::new(0.0, 0.0); dict.harmonic_count];
        for &(l, g) in parts {
            for (zi, a) in z.iter_mut().zip(dict.column(l)) {
                *zi += a * g;
            }
        }
        z
    }

    #[test]
    fn single_atom_is_recovered_exactly() {
        let dict = build_dictionary(77, 4096, 0.7937e6).unwrap();
        let z = synth(&dict, &[(176, 0.8)]);
        let s = omp_decompose(&z, &dict, &SolverConfig::with_max_components(3)).unwrap();
        assert_eq!(s.support[0], 176);
        assert!((s.amplitudes[0] - 0.8).abs() < 1e-12);
        assert!(s.residual_norm <= 1e-9);
    }

    #[test]
    fn zero_input_gives_empty_solution() {
        let dict = build_dictionary(8, 32, 1e6).unwrap();
        let s = omp_decompose(&[Complex64::new(0.0, 0.0); 8], &dict, &SolverConfig::with_max_components(2)).unwrap();
        assert!(s.support.is_empty());
        assert_eq!(s.residual_norm, 0.0);
        assert_eq!(s.stop, StopReason::ZeroInput);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let dict = build_dictionary(4, 16, 1e6).unwrap();
        let mut z = vec![Complex64::new(1.0, 0.0); 4];
        z[2].im = f64::NAN;
        assert!(matches!(
            omp_decompose(&z, &dict, &SolverConfig::with_max_components(1)),
            Err(Error::Input(_))
        ));
        assert!(omp_decompose(&z[..3], &dict, &SolverConfig::with_max_components(1)).is_err());
    }

    #[test]
    fn tolerance_stops_before_budget() {
        let dict = build_dictionary(16, 128, 1e6).unwrap();
        let z = synth(&dict, &[(10, 0.5)]);
        let mut cfg = SolverConfig::with_max_components(3);
        cfg.residual_tolerance = 1e-6;
        let s = omp_decompose(&z, &dict, &cfg).unwrap();
        assert_eq!(s.support, vec![10]);
        assert_eq!(s.stop, StopReason::Tolerance);
        assert_eq!(s.iterations, 1);
    }

    #[test]
    fn small_components_are_dropped_but_traced() {
        let dict = build_dictionary(16, 128, 1e6).unwrap();
        let z = synth(&dict, &[(10, 0.5), (70, 1e-4)]);
        let mut cfg = SolverConfig::with_max_components(2);
        cfg.min_amplitude = 1e-3;
        let s = omp_decompose(&z, &dict, &cfg).unwrap();
        assert_eq!(s.support, vec![10]);
        assert_eq!(s.trace.len(), 2);
        assert_eq!(s.trace[1].selected_index, 70);
        assert_eq!(s.stop, StopReason::Budget);
    }

    #[test]
    fn equal_correlations_pick_lowest_index() {
        // z = 0 except first harmonic: every atom correlates equally
        let dict = build_dictionary(4, 16, 1e6).unwrap();
        let mut z = vec![Complex64::new(0.0, 0.0); 4];
        z[0] = Complex64::new(1.0, 0.0);
        let s = omp_decompose(&z, &dict, &SolverConfig::with_max_components(1)).unwrap();
        assert_eq!(s.support, vec![0]);
    }

    #[test]
    fn complex_coefficient_sets_phase_warning() {
        let dict = build_dictionary(8, 64, 1e6).unwrap();
        let z: Vec<_> = dict.column(5).iter().map(|a| a * Complex64::from_polar(0.5, 0.4)).collect();
        let s = omp_decompose(&z, &dict, &SolverConfig::with_max_components(1)).unwrap();
        assert!(s.phase_warning);
        assert!((s.amplitudes[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn brute_force_agrees_on_single_atom() {
        let dict = build_dictionary(12, 64, 1e6).unwrap();
        let z = synth(&dict, &[(40, 0.3)]);
        let b = brute_force_decompose(&z, &dict, 1).unwrap();
        let o = omp_decompose(&z, &dict, &SolverConfig::with_max_components(1)).unwrap();
        assert_eq!(b.support, o.support);
        assert!((b.amplitudes[0] - o.amplitudes[0]).abs() < 1e-12);
    }

    #[test]
    fn brute_force_guards() {
        let dict = build_dictionary(4, 4096, 1e6).unwrap();
        let z = vec![Complex64::new(1.0, 0.0); 4];
        assert!(matches!(
            brute_force_decompose(&z, &dict, 3),
            Err(Error::SearchTooLarge { .. })
        ));
        assert!(brute_force_decompose(&z, &dict, 4).is_err());
        assert!(brute_force_decompose(&z, &dict, 2).is_ok());
    }

    #[test]
    fn binomial_counts() {
        assert_eq!(binomial(256, 2), 32_640);
        assert_eq!(binomial(256, 3), 2_763_520);
        assert_eq!(binomial(4096, 3), 11_444_858_880);
    }
}
