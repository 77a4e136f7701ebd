//! Wavenumber bookkeeping, spectral transforms and the dealiased quintic
//! convolution that drives both solvers.
//!
//! Coefficients are always stored in ascending wavenumber order inside a
//! [`ModeBand`]; the wrap-around layout used by the FFT is confined to
//! [`GridFft`].

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest support accepted by [`quintic_rhs_oracle`].
pub const ORACLE_MAX_SUPPORT: usize = 32;

/// A finite set of wavenumbers, kept as sorted, disjoint, inclusive intervals.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct ModeSet {
    intervals: Vec<(i64, i64)>,
}

impl ModeSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The closed interval `[lo, hi]`; empty when `lo > hi`.
    pub fn interval(lo: i64, hi: i64) -> Self {
        Self::from_intervals([(lo, hi)])
    }

    pub fn from_intervals<I: IntoIterator<Item = (i64, i64)>>(intervals: I) -> Self {
        let mut raw: Vec<(i64, i64)> = intervals.into_iter().filter(|(a, b)| a <= b).collect();
        raw.sort_unstable();
        let mut merged: Vec<(i64, i64)> = Vec::with_capacity(raw.len());
        for (a, b) in raw {
            match merged.last_mut() {
                Some(last) if a <= last.1 + 1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        Self { intervals: merged }
    }

    pub fn intervals(&self) -> &[(i64, i64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn len(&self) -> usize {
        self.intervals
            .iter()
            .map(|(a, b)| (b - a + 1) as usize)
            .sum()
    }

    pub fn contains(&self, k: i64) -> bool {
        self.intervals.iter().any(|&(a, b)| a <= k && k <= b)
    }

    /// Smallest interval containing every member.
    pub fn bounds(&self) -> Option<(i64, i64)> {
        Some((self.intervals.first()?.0, self.intervals.last()?.1))
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> + '_ {
        self.intervals.iter().flat_map(|&(a, b)| a..=b)
    }

    pub fn union(&self, other: &ModeSet) -> ModeSet {
        Self::from_intervals(self.intervals.iter().chain(&other.intervals).copied())
    }

    pub fn difference(&self, other: &ModeSet) -> ModeSet {
        let mut out = Vec::new();
        for &(a, b) in &self.intervals {
            let mut start = a;
            for &(c, d) in &other.intervals {
                if d < start || c > b {
                    continue;
                }
                if c > start {
                    out.push((start, c - 1));
                }
                start = start.max(d + 1);
            }
            if start <= b {
                out.push((start, b));
            }
        }
        Self::from_intervals(out)
    }

    pub fn is_subset(&self, other: &ModeSet) -> bool {
        self.difference(other).is_empty()
    }
}

impl fmt::Debug for ModeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .intervals
            .iter()
            .map(|(a, b)| format!("[{a},{b}]"))
            .collect();
        if parts.is_empty() {
            write!(f, "{{}}")
        } else {
            write!(f, "{}", parts.join("∪"))
        }
    }
}

/// Split of the available wavenumbers into resolved modes `F = [-N/2, N/2-1]`
/// and unresolved modes `G = [-K/2, K/2-1] \ F`, with `K = ratio * N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModePartition {
    resolved: usize,
    ratio: usize,
}

impl ModePartition {
    pub const DEFAULT_RATIO: usize = 5;

    pub fn new(resolved: usize, ratio: usize) -> Result<Self> {
        if resolved < 4 || !resolved.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "resolved mode count must be even and at least 4, got {resolved}"
            )));
        }
        if ratio < Self::DEFAULT_RATIO {
            return Err(Error::invalid(format!(
                "ratio must be at least 5 for an alias-free split, got {ratio}"
            )));
        }
        Ok(Self { resolved, ratio })
    }

    /// N, the number of resolved modes.
    pub fn resolved_count(&self) -> usize {
        self.resolved
    }

    /// K, the total number of modes.
    pub fn total_count(&self) -> usize {
        self.resolved * self.ratio
    }

    pub fn ratio(&self) -> usize {
        self.ratio
    }

    pub fn resolved_bounds(&self) -> (i64, i64) {
        let half = (self.resolved / 2) as i64;
        (-half, half - 1)
    }

    pub fn full_bounds(&self) -> (i64, i64) {
        let half = (self.total_count() / 2) as i64;
        (-half, half - 1)
    }

    pub fn resolved(&self) -> ModeSet {
        let (lo, hi) = self.resolved_bounds();
        ModeSet::interval(lo, hi)
    }

    pub fn unresolved(&self) -> ModeSet {
        self.full().difference(&self.resolved())
    }

    pub fn full(&self) -> ModeSet {
        let (lo, hi) = self.full_bounds();
        ModeSet::interval(lo, hi)
    }
}

pub fn make_partition(resolved: usize, ratio: usize) -> Result<ModePartition> {
    ModePartition::new(resolved, ratio)
}

/// Complex coefficients on a contiguous wavenumber band `[lo, hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeBand {
    lo: i64,
    coeffs: Vec<Complex64>,
}

impl ModeBand {
    pub fn zeros(lo: i64, hi: i64) -> Self {
        let len = if hi >= lo { (hi - lo + 1) as usize } else { 0 };
        Self {
            lo,
            coeffs: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn from_vec(lo: i64, coeffs: Vec<Complex64>) -> Self {
        Self { lo, coeffs }
    }

    pub fn from_fn(lo: i64, hi: i64, mut f: impl FnMut(i64) -> Complex64) -> Self {
        Self {
            lo,
            coeffs: (lo..=hi).map(&mut f).collect(),
        }
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.coeffs.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn contains(&self, k: i64) -> bool {
        k >= self.lo && k <= self.hi()
    }

    pub fn modes(&self) -> ModeSet {
        ModeSet::interval(self.lo, self.hi())
    }

    /// Coefficient at `k`, zero outside the band.
    pub fn get(&self, k: i64) -> Complex64 {
        if self.contains(k) {
            self.coeffs[(k - self.lo) as usize]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    pub fn get_mut(&mut self, k: i64) -> Option<&mut Complex64> {
        if self.contains(k) {
            Some(&mut self.coeffs[(k - self.lo) as usize])
        } else {
            None
        }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(j, &c)| (self.lo + j as i64, c))
    }

    /// Copy onto the bounding interval of `set`, zeroing every non-member.
    pub fn restricted(&self, set: &ModeSet) -> ModeBand {
        match set.bounds() {
            None => ModeBand::zeros(0, -1),
            Some((lo, hi)) => ModeBand::from_fn(lo, hi, |k| {
                if set.contains(k) {
                    self.get(k)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Σ|u_k|².
    pub fn norm_sqr_sum(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|c| c.norm_sqr())
            .fold(0.0, |a, b| a + b)
    }
}

/// Fourier coefficients plus the simulation time they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    pub modes: ModeBand,
    pub time: f64,
}

impl SpectralState {
    pub fn new(modes: ModeBand, time: f64) -> Self {
        Self { modes, time }
    }

    /// All-zero state on `F ∪ G`.
    pub fn zeros(partition: &ModePartition) -> Self {
        let (lo, hi) = partition.full_bounds();
        Self::new(ModeBand::zeros(lo, hi), 0.0)
    }

    pub fn restricted(&self, set: &ModeSet) -> Self {
        Self::new(self.modes.restricted(set), self.time)
    }

    pub fn to_physical(&self, grid_size: usize) -> Result<PhysicalField> {
        to_physical(&self.modes, grid_size)
    }
}

/// Samples `u(x_j)` at `x_j = 2πj/M`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalField {
    pub samples: Vec<Complex64>,
}

impl PhysicalField {
    pub fn grid_size(&self) -> usize {
        self.samples.len()
    }

    pub fn x(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.samples.len() as f64
    }
}

/// Smallest integer `>= n` whose only prime factors are 2, 3 and 5.
pub fn efficient_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Minimal grid on which a product with spectrum in `[prod_lo, prod_hi]`
/// leaves every mode of `[image_lo, image_hi]` free of wrap-around.
pub fn alias_free_grid(prod_lo: i64, prod_hi: i64, image_lo: i64, image_hi: i64) -> usize {
    let span = (prod_hi - image_lo).max(image_hi - prod_lo).max(0);
    (span + 1) as usize
}

#[inline]
pub(crate) fn slot(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

#[inline]
pub(crate) fn times_i(z: Complex64) -> Complex64 {
    Complex64::new(-z.im, z.re)
}

/// Planned forward/inverse FFT pair on a fixed grid.
#[derive(Clone)]
pub(crate) struct GridFft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl GridFft {
    pub(crate) fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            n,
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.n
    }

    pub(crate) fn inverse_in_place(&mut self, buf: &mut [Complex64]) {
        self.inverse.process_with_scratch(buf, &mut self.scratch);
    }

    /// Writes `Σ_k c_k e^{ikx_j}` into `out`, with `c` starting at wavenumber `lo`.
    pub(crate) fn synthesize(&mut self, lo: i64, coeffs: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(out.len(), self.n);
        debug_assert!(coeffs.len() <= self.n);
        out.fill(Complex64::new(0.0, 0.0));
        for (j, &c) in coeffs.iter().enumerate() {
            out[slot(lo + j as i64, self.n)] = c;
        }
        self.inverse.process_with_scratch(out, &mut self.scratch);
    }

    /// In-place forward transform normalised so that `buf[slot(k)]` is the
    /// k-th Fourier coefficient.
    pub(crate) fn analyze(&mut self, buf: &mut [Complex64]) {
        self.forward.process_with_scratch(buf, &mut self.scratch);
        let scale = 1.0 / self.n as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }
}

pub fn to_physical(modes: &ModeBand, grid_size: usize) -> Result<PhysicalField> {
    if grid_size < modes.len() || grid_size == 0 {
        return Err(Error::invalid(format!(
            "grid size {grid_size} cannot represent {} modes",
            modes.len()
        )));
    }
    let mut fft = GridFft::new(grid_size);
    let mut samples = vec![Complex64::new(0.0, 0.0); grid_size];
    fft.synthesize(modes.lo(), modes.coeffs(), &mut samples);
    Ok(PhysicalField { samples })
}

/// Projects a sampled field onto `[lo, hi]`; other modes are discarded.
pub fn to_spectral_band(field: &PhysicalField, lo: i64, hi: i64) -> Result<ModeBand> {
    let m = field.grid_size();
    let width = (hi - lo + 1).max(0) as usize;
    if m < width || m == 0 {
        return Err(Error::invalid(format!(
            "grid size {m} is smaller than the {width} requested modes"
        )));
    }
    let mut fft = GridFft::new(m);
    let mut buf = field.samples.clone();
    fft.analyze(&mut buf);
    Ok(ModeBand::from_fn(lo, hi, |k| buf[slot(k, m)]))
}

pub fn to_spectral(field: &PhysicalField, partition: &ModePartition) -> Result<SpectralState> {
    let (lo, hi) = partition.full_bounds();
    Ok(SpectralState::new(to_spectral_band(field, lo, hi)?, 0.0))
}

/// Pseudospectral evaluator of
/// `-i k² u_k [k∈support] + i Σ_{k1-k2+k3-k4+k5=k} u_{k1} u*_{k2} u_{k3} u*_{k4} u_{k5}`
/// for `k` in an image set, with every factor drawn from a support set.
///
/// The grid is the smallest efficient size on which the quintic product has
/// no wrap-around into the image.
#[derive(Clone)]
pub struct QuinticConvolver {
    support: ModeSet,
    image: ModeSet,
    image_lo: i64,
    image_hi: i64,
    fft: GridFft,
    work: Vec<Complex64>,
}

impl QuinticConvolver {
    pub fn new(support: ModeSet, image: ModeSet) -> Result<Self> {
        let grid = Self::min_grid(&support, &image)?;
        Self::with_grid(support, image, efficient_size(grid))
    }

    pub fn with_grid(support: ModeSet, image: ModeSet, grid: usize) -> Result<Self> {
        let min = Self::min_grid(&support, &image)?;
        if grid < min {
            return Err(Error::invalid(format!(
                "grid {grid} aliases into the image; need at least {min}"
            )));
        }
        let (image_lo, image_hi) = image.bounds().expect("checked by min_grid");
        Ok(Self {
            support,
            image,
            image_lo,
            image_hi,
            fft: GridFft::new(grid),
            work: vec![Complex64::new(0.0, 0.0); grid],
        })
    }

    /// Smallest alias-free grid for this support/image pair (before rounding
    /// to an efficient size).
    pub fn min_grid(support: &ModeSet, image: &ModeSet) -> Result<usize> {
        let (s_lo, s_hi) = support
            .bounds()
            .ok_or_else(|| Error::invalid("empty support"))?;
        let (i_lo, i_hi) = image
            .bounds()
            .ok_or_else(|| Error::invalid("empty image"))?;
        let prod = alias_free_grid(3 * s_lo - 2 * s_hi, 3 * s_hi - 2 * s_lo, i_lo, i_hi);
        let widths = ((s_hi - s_lo + 1).max(i_hi - i_lo + 1)) as usize;
        Ok(prod.max(widths))
    }

    pub fn grid_size(&self) -> usize {
        self.fft.len()
    }

    pub fn support(&self) -> &ModeSet {
        &self.support
    }

    pub fn image(&self) -> &ModeSet {
        &self.image
    }

    pub fn image_bounds(&self) -> (i64, i64) {
        (self.image_lo, self.image_hi)
    }

    /// Evaluates onto `out`, laid out over the image bounds. `input` starts at
    /// wavenumber `lo`; support modes outside it count as zero. The linear
    /// term is added only when `linear` is set.
    pub fn apply(&mut self, lo: i64, input: &[Complex64], out: &mut [Complex64], linear: bool) {
        let n = self.fft.len();
        let hi = lo + input.len() as i64 - 1;
        debug_assert_eq!(out.len() as i64, self.image_hi - self.image_lo + 1);

        self.work.fill(Complex64::new(0.0, 0.0));
        for &(a, b) in self.support.intervals() {
            for k in a.max(lo)..=b.min(hi) {
                self.work[slot(k, n)] = input[(k - lo) as usize];
            }
        }
        self.fft.inverse_in_place(&mut self.work);
        for z in self.work.iter_mut() {
            let a = z.norm_sqr();
            *z *= a * a;
        }
        self.fft.analyze(&mut self.work);

        out.fill(Complex64::new(0.0, 0.0));
        for &(a, b) in self.image.intervals() {
            for k in a..=b {
                out[(k - self.image_lo) as usize] = times_i(self.work[slot(k, n)]);
            }
        }
        if linear {
            for &(a, b) in self.image.intervals() {
                for k in a.max(lo)..=b.min(hi) {
                    if self.support.contains(k) {
                        let u = input[(k - lo) as usize];
                        out[(k - self.image_lo) as usize] -= times_i(u) * (k * k) as f64;
                    }
                }
            }
        }
    }

    /// Full right-hand side (linear plus quintic) as a band over the image bounds.
    pub fn rhs(&mut self, state: &ModeBand) -> ModeBand {
        let mut out = ModeBand::zeros(self.image_lo, self.image_hi);
        self.apply(state.lo(), state.coeffs(), out.coeffs_mut(), true);
        out
    }
}

fn check_sets(state: &ModeBand, support: &ModeSet, image: &ModeSet) -> Result<()> {
    if !support.is_subset(&state.modes()) {
        return Err(Error::invalid(format!(
            "support {support:?} not contained in state band {:?}",
            state.modes()
        )));
    }
    if image.is_empty() || support.is_empty() {
        return Err(Error::invalid("support and image must be non-empty"));
    }
    Ok(())
}

/// Right-hand side of the Galerkin ODE restricted to `support` (inputs) and
/// `image` (outputs), evaluated pseudospectrally without aliasing.
pub fn quintic_rhs(state: &ModeBand, support: &ModeSet, image: &ModeSet) -> Result<ModeBand> {
    check_sets(state, support, image)?;
    let mut conv = QuinticConvolver::new(support.clone(), image.clone())?;
    Ok(conv.rhs(state))
}

/// Direct five-fold summation of the same quantity as [`quintic_rhs`].
/// Cost grows as `|support|^4 · |image|`, so supports are capped at
/// [`ORACLE_MAX_SUPPORT`].
pub fn quintic_rhs_oracle(
    state: &ModeBand,
    support: &ModeSet,
    image: &ModeSet,
) -> Result<ModeBand> {
    check_sets(state, support, image)?;
    if support.len() > ORACLE_MAX_SUPPORT {
        return Err(Error::invalid(format!(
            "oracle support limited to {ORACLE_MAX_SUPPORT} modes, got {}",
            support.len()
        )));
    }
    let modes: Vec<(i64, Complex64)> = support.iter().map(|k| (k, state.get(k))).collect();
    let (lo, hi) = image.bounds().expect("checked");
    let mut out = ModeBand::zeros(lo, hi);
    for k in image.iter() {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(k1, u1) in &modes {
            for &(k2, u2) in &modes {
                let p12 = u1 * u2.conj();
                for &(k3, u3) in &modes {
                    let p123 = p12 * u3;
                    for &(k4, u4) in &modes {
                        let k5 = k - k1 + k2 - k3 + k4;
                        if support.contains(k5) {
                            acc += p123 * u4.conj() * state.get(k5);
                        }
                    }
                }
            }
        }
        let mut value = I * acc;
        if support.contains(k) {
            value -= I * (k * k) as f64 * state.get(k);
        }
        *out.get_mut(k).expect("k within image bounds") = value;
    }
    Ok(out)
}

/// The Gaussian `u(x, 0) = iA exp(-(x-π)²)` projected onto `F ∪ G`.
pub fn initial_condition(amplitude: f64, partition: &ModePartition) -> Result<SpectralState> {
    if !(amplitude > 0.0 && amplitude.is_finite()) {
        return Err(Error::invalid(format!(
            "amplitude must be positive, got {amplitude}"
        )));
    }
    let m = efficient_size(2 * partition.total_count());
    let samples = (0..m)
        .map(|j| {
            let x = 2.0 * PI * j as f64 / m as f64;
            Complex64::new(0.0, amplitude * (-(x - PI).powi(2)).exp())
        })
        .collect();
    to_spectral(&PhysicalField { samples }, partition)
}
