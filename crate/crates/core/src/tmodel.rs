//! Right-hand side of the t-model reduced system.
//!
//! For a resolved mode `k ∈ F` the model reads
//!
//! ```text
//! du'_k/dt = -i k² u'_k + i Σ_F u'u'*u'u'*u'
//!          + t [ 3i Σ_{k1∈G} R_{k1} u'*u'u'*u'  +  2i Σ_{k2∈G} u' R*_{k2} u'u'*u' ]
//! ```
//!
//! where `R_k`, `k ∈ G`, is the quintic convolution of the resolved modes
//! landing in `G`. The model only ever touches coefficients in `F`; `R` lives
//! in scratch space. Each memory sum is a quintic product with one factor
//! replaced by the field `R̃(x) = Σ_G R_k e^{ikx}` (or its conjugate), so in
//! physical space the bracket is `3|u|⁴R̃ + 2|u|²u²R̃*`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::integrator::OdeSystem;
use crate::spectral::{
    alias_free_grid, efficient_size, slot, times_i, GridFft, ModeBand, ModePartition, SpectralState,
};

/// The four pieces of the t-model right-hand side at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct TModelRhsBreakdown {
    /// Linear plus resolved quintic terms, on `F`.
    pub markovian: ModeBand,
    /// `3i Σ R u'*u'u'*u'` on `F`, before multiplication by `t`.
    pub memory3: ModeBand,
    /// `2i Σ u'R*u'u'*u'` on `F`, before multiplication by `t`.
    pub memory2: ModeBand,
    /// `R_k(û')` over the bounds of `G` (zero on `F`).
    pub g_image: ModeBand,
    pub time: f64,
}

impl TModelRhsBreakdown {
    /// `markovian + t (memory3 + memory2)` on `F`.
    pub fn total(&self) -> ModeBand {
        let t = self.time;
        let coeffs = self
            .markovian
            .coeffs()
            .iter()
            .zip(self.memory3.coeffs())
            .zip(self.memory2.coeffs())
            .map(|((m, a), b)| m + (a + b) * t)
            .collect();
        ModeBand::from_vec(self.markovian.lo(), coeffs)
    }

    /// `Σ_{k∈G} |R_k|²`.
    pub fn unresolved_norm_sqr(&self) -> f64 {
        self.g_image.norm_sqr_sum()
    }
}

/// `dM_F/dt = -2t Σ_{k∈G} |R_k(û')|²`.
pub fn mass_dissipation_rate(breakdown: &TModelRhsBreakdown) -> f64 {
    -2.0 * breakdown.time * breakdown.unresolved_norm_sqr()
}

/// Reusable t-model evaluator for one partition.
#[derive(Clone)]
pub struct TModel {
    partition: ModePartition,
    f_bounds: (i64, i64),
    g_bounds: (i64, i64),
    fft: GridFft,
    u_field: Vec<Complex64>,
    r_field: Vec<Complex64>,
    work: Vec<Complex64>,
    g_coeffs: Vec<Complex64>,
}

impl TModel {
    pub fn new(partition: ModePartition) -> Self {
        let (f0, f1) = partition.resolved_bounds();
        let (g0, g1) = partition.full_bounds();
        let quintic = alias_free_grid(3 * f0 - 2 * f1, 3 * f1 - 2 * f0, g0, g1);
        let memory3 = alias_free_grid(g0 + 2 * f0 - 2 * f1, g1 + 2 * f1 - 2 * f0, f0, f1);
        let memory2 = alias_free_grid(3 * f0 - f1 - g1, 3 * f1 - f0 - g0, f0, f1);
        let grid = efficient_size(
            quintic
                .max(memory3)
                .max(memory2)
                .max(partition.total_count()),
        );
        let zero = Complex64::new(0.0, 0.0);
        Self {
            partition,
            f_bounds: (f0, f1),
            g_bounds: (g0, g1),
            fft: GridFft::new(grid),
            u_field: vec![zero; grid],
            r_field: vec![zero; grid],
            work: vec![zero; grid],
            g_coeffs: vec![zero; (g1 - g0 + 1) as usize],
        }
    }

    pub fn partition(&self) -> &ModePartition {
        &self.partition
    }

    pub fn grid_size(&self) -> usize {
        self.fft.len()
    }

    fn check_state(&self, state: &SpectralState) -> Result<()> {
        let (f0, f1) = self.f_bounds;
        if state.modes.lo() != f0 || state.modes.hi() != f1 {
            return Err(Error::invalid(format!(
                "t-model state must hold exactly F = [{f0},{f1}], got [{},{}]",
                state.modes.lo(),
                state.modes.hi()
            )));
        }
        if state.time < 0.0 {
            return Err(Error::invalid("t-model time must be non-negative"));
        }
        Ok(())
    }

    /// Fills `u_field`, `g_coeffs`, `r_field` and the Markovian part.
    /// Returns `Σ_G |R_k|²`.
    fn resolved_pass(&mut self, u: &[Complex64], markovian: &mut [Complex64]) -> f64 {
        let n = self.fft.len();
        let (f0, f1) = self.f_bounds;
        let (g0, g1) = self.g_bounds;

        self.fft.synthesize(f0, u, &mut self.u_field);
        for (w, z) in self.work.iter_mut().zip(&self.u_field) {
            let a = z.norm_sqr();
            *w = z * (a * a);
        }
        self.fft.analyze(&mut self.work);

        for (j, k) in (f0..=f1).enumerate() {
            markovian[j] = times_i(self.work[slot(k, n)] - u[j] * (k * k) as f64);
        }
        let mut g_norm = 0.0;
        for (j, k) in (g0..=g1).enumerate() {
            let value = if (f0..=f1).contains(&k) {
                Complex64::new(0.0, 0.0)
            } else {
                times_i(self.work[slot(k, n)])
            };
            g_norm += value.norm_sqr();
            self.g_coeffs[j] = value;
        }
        self.fft.synthesize(g0, &self.g_coeffs, &mut self.r_field);
        g_norm
    }

    /// Full breakdown of the right-hand side at `state.time`.
    pub fn breakdown(&mut self, state: &SpectralState) -> Result<TModelRhsBreakdown> {
        self.check_state(state)?;
        let n = self.fft.len();
        let (f0, f1) = self.f_bounds;
        let (g0, _) = self.g_bounds;

        let mut markovian = ModeBand::zeros(f0, f1);
        self.resolved_pass(state.modes.coeffs(), markovian.coeffs_mut());

        for ((w, u), r) in self.work.iter_mut().zip(&self.u_field).zip(&self.r_field) {
            let a = u.norm_sqr();
            *w = r * (a * a);
        }
        self.fft.analyze(&mut self.work);
        let memory3 = ModeBand::from_fn(f0, f1, |k| times_i(self.work[slot(k, n)]) * 3.0);

        for ((w, u), r) in self.work.iter_mut().zip(&self.u_field).zip(&self.r_field) {
            *w = u.norm_sqr() * u * u * r.conj();
        }
        self.fft.analyze(&mut self.work);
        let memory2 = ModeBand::from_fn(f0, f1, |k| times_i(self.work[slot(k, n)]) * 2.0);

        Ok(TModelRhsBreakdown {
            markovian,
            memory3,
            memory2,
            g_image: ModeBand::from_vec(g0, self.g_coeffs.clone()),
            time: state.time,
        })
    }

    /// Total right-hand side on `F`; returns `Σ_G |R_k|²` as a by-product.
    pub fn eval_into(&mut self, t: f64, u: &[Complex64], out: &mut [Complex64]) -> f64 {
        let n = self.fft.len();
        let (f0, f1) = self.f_bounds;
        let g_norm = self.resolved_pass(u, out);
        if t == 0.0 || g_norm == 0.0 {
            return g_norm;
        }
        for ((w, u), r) in self.work.iter_mut().zip(&self.u_field).zip(&self.r_field) {
            let a = u.norm_sqr();
            *w = r * (3.0 * a * a) + u * u * r.conj() * (2.0 * a);
        }
        self.fft.analyze(&mut self.work);
        for (j, k) in (f0..=f1).enumerate() {
            out[j] += times_i(self.work[slot(k, n)]) * t;
        }
        g_norm
    }
}

impl OdeSystem for TModel {
    fn rhs(&mut self, t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        self.eval_into(t, y, dy);
    }
}

pub fn tmodel_rhs(state: &SpectralState, partition: &ModePartition) -> Result<TModelRhsBreakdown> {
    TModel::new(*partition).breakdown(state)
}
