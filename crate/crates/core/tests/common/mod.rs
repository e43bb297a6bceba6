#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tofsep::{Complex64, Dictionary};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `z = sum_k g_k * column(l_k)` evaluated straight from the exponential,
/// independent of the dictionary table.
pub fn synthesize(n_harmonics: usize, grid: usize, parts: &[(usize, f64)]) -> Vec<Complex64> {
    (1..=n_harmonics)
        .map(|n| {
            parts
                .iter()
                .map(|&(l, g)| {
                    Complex64::from_polar(g, std::f64::consts::TAU * (n * l) as f64 / grid as f64)
                })
                .sum()
        })
        .collect()
}

pub fn circular_distance(a: usize, b: usize, grid: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(grid - d)
}

/// `k` distinct grid indices with pairwise circular distance >= `min_sep`.
pub fn separated_indices(rng: &mut impl Rng, k: usize, grid: usize, min_sep: usize) -> Vec<usize> {
    loop {
        let idx: Vec<usize> = (0..k).map(|_| rng.random_range(0..grid)).collect();
        let ok = (0..k).all(|i| {
            (i + 1..k).all(|j| circular_distance(idx[i], idx[j], grid) >= min_sep)
        });
        if ok {
            return idx;
        }
    }
}

pub fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

pub fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

pub fn resynthesis_residual(z: &[Complex64], dict: &Dictionary, support: &[usize], coefs: &[Complex64]) -> f64 {
    let mut r = z.to_vec();
    for (&l, &c) in support.iter().zip(coefs) {
        for (ri, a) in r.iter_mut().zip(dict.column(l)) {
            *ri -= a * c;
        }
    }
    norm(&r)
}
