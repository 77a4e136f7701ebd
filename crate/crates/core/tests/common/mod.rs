//! Brute-force reference implementations shared by the integration tests.
//! Nothing here calls into the FFT paths of the library.

#![allow(dead_code)]

use std::collections::BTreeMap;

use nls_tmodel::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_coeffs(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<Complex64> {
    (0..len)
        .map(|_| Complex64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)))
        .collect()
}

/// Resolved band `[-n/2, n/2 - 1]` and full band `[-5n/2, 5n/2 - 1]`.
pub fn bands(n: usize) -> ((i64, i64), (i64, i64)) {
    let h = n as i64 / 2;
    ((-h, h - 1), (-5 * h, 5 * h - 1))
}

/// `Σ_{k1-k2+k3-k4+k5=k} u u* u u* u` over every quintuple drawn from `modes`,
/// keyed by the landing wavenumber. Plain five-fold enumeration.
pub fn quintic_all(modes: &[(i64, Complex64)]) -> BTreeMap<i64, Complex64> {
    let mut out = BTreeMap::new();
    for &(k1, a) in modes {
        for &(k2, b) in modes {
            for &(k3, c) in modes {
                for &(k4, d) in modes {
                    for &(k5, e) in modes {
                        let k = k1 - k2 + k3 - k4 + k5;
                        *out.entry(k).or_insert(Complex64::new(0.0, 0.0)) +=
                            a * b.conj() * c * d.conj() * e;
                    }
                }
            }
        }
    }
    out
}

pub fn zip_modes(lo: i64, coeffs: &[Complex64]) -> Vec<(i64, Complex64)> {
    coeffs
        .iter()
        .enumerate()
        .map(|(j, &u)| (lo + j as i64, u))
        .collect()
}

/// Direct t-model terms for a resolved state `u` on `[f0, f1]` with the
/// unresolved band `G = [g0, g1] \ [f0, f1]`.
pub struct TModelOracle {
    pub markovian: Vec<Complex64>,
    pub memory3: Vec<Complex64>,
    pub memory2: Vec<Complex64>,
    /// `R_k` for every `k ∈ G`.
    pub r: BTreeMap<i64, Complex64>,
}

impl TModelOracle {
    pub fn total(&self, t: f64) -> Vec<Complex64> {
        (0..self.markovian.len())
            .map(|j| self.markovian[j] + t * (self.memory3[j] + self.memory2[j]))
            .collect()
    }
}

/// Nine-fold summation: `R` from quintuples of resolved modes, then the
/// memory sums over quintuples with one slot taken from `G`.
pub fn tmodel_oracle(f: (i64, i64), g: (i64, i64), u: &[Complex64]) -> TModelOracle {
    let (f0, f1) = f;
    let modes = zip_modes(f0, u);
    let in_f = |k: i64| (f0..=f1).contains(&k);
    let in_g = |k: i64| (g.0..=g.1).contains(&k) && !in_f(k);

    let q = quintic_all(&modes);
    let markovian = (f0..=f1)
        .map(|k| {
            let uk = u[(k - f0) as usize];
            -I * (k * k) as f64 * uk + I * q.get(&k).copied().unwrap_or_default()
        })
        .collect();
    let r: BTreeMap<i64, Complex64> = (g.0..=g.1)
        .filter(|&k| in_g(k))
        .map(|k| (k, I * q.get(&k).copied().unwrap_or_default()))
        .collect();

    let zero = Complex64::new(0.0, 0.0);
    let mut memory3 = vec![zero; u.len()];
    let mut memory2 = vec![zero; u.len()];
    for k in f0..=f1 {
        let (mut a3, mut a2) = (zero, zero);
        for &(k2, b) in &modes {
            for &(k3, c) in &modes {
                for &(k4, d) in &modes {
                    for &(k5, e) in &modes {
                        // unconjugated slot from G: k = kg - k2 + k3 - k4 + k5
                        let kg = k + k2 - k3 + k4 - k5;
                        if let Some(rg) = r.get(&kg) {
                            a3 += rg * b.conj() * c * d.conj() * e;
                        }
                        // conjugated slot from G: k = k2 - kg + k3 - k4 + k5
                        let kg = k2 + k3 - k4 + k5 - k;
                        if let Some(rg) = r.get(&kg) {
                            a2 += b * rg.conj() * c * d.conj() * e;
                        }
                    }
                }
            }
        }
        memory3[(k - f0) as usize] = 3.0 * I * a3;
        memory2[(k - f0) as usize] = 2.0 * I * a2;
    }
    TModelOracle {
        markovian,
        memory3,
        memory2,
        r,
    }
}

/// Largest `|a - b|` relative to the largest `|b|` (or 1 if that is tiny).
pub fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
        / scale
}
