//! Real-valued fields on the unit torus stored by their Fourier coefficients.

use std::f64::consts::PI;

use rand::Rng;
use rustfft::num_complex::Complex64;

use crate::error::{HomogError, Result};
use crate::grid::{Grid, Transform, MAX_DIM};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A real scalar field `u(x) = Σ_k û_k exp(2πi k·x)` on `[0,1)^d`.
///
/// Coefficients are kept conjugate symmetric (`û_{-k} = conj(û_k)`); the
/// Nyquist planes stay zero. Vector fields are represented as `Vec<TorusField>`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusField {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl TorusField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            coeffs: vec![ZERO; grid.len()],
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.coeffs[0] = Complex64::new(value, 0.0);
        f
    }

    /// Build from raw coefficients; Nyquist entries are cleared.
    pub fn from_coeffs(grid: Grid, mut coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(HomogError::DimensionMismatch(format!(
                "{} coefficients for a grid of {}",
                coeffs.len(),
                grid.len()
            )));
        }
        for (flat, c) in coeffs.iter_mut().enumerate() {
            if grid.wavevector(flat).is_none() {
                *c = ZERO;
            }
        }
        Ok(Self { grid, coeffs })
    }

    /// Sum of modes `amp·exp(2πi k·x)`. The caller supplies both `k` and `-k`
    /// for a real field; modes outside the grid are rejected.
    pub fn from_modes(grid: Grid, modes: &[(Vec<i64>, Complex64)]) -> Result<Self> {
        let mut f = Self::zeros(grid);
        for (k, amp) in modes {
            if k.len() != grid.dim() {
                return Err(HomogError::DimensionMismatch(format!(
                    "mode {k:?} in dimension {}",
                    grid.dim()
                )));
            }
            let idx = grid.index_of(k).ok_or_else(|| {
                HomogError::GridTooCoarse(format!("mode {k:?} not retained on grid {}", grid.n()))
            })?;
            f.coeffs[idx] += amp;
        }
        Ok(f)
    }

    /// Real cosine/sine terms: `Σ (a cos 2πk·x + b sin 2πk·x)`.
    pub fn from_trig(grid: Grid, terms: &[(Vec<i64>, f64, f64)]) -> Result<Self> {
        let mut modes = Vec::with_capacity(2 * terms.len());
        for (k, a, b) in terms {
            if k.iter().all(|&kj| kj == 0) {
                modes.push((k.clone(), Complex64::new(*a, 0.0)));
                continue;
            }
            let amp = Complex64::new(a / 2.0, -b / 2.0);
            modes.push((k.clone(), amp));
            modes.push((k.iter().map(|&kj| -kj).collect(), amp.conj()));
        }
        Self::from_modes(grid, &modes)
    }

    /// Interpolate a function sampled at the grid points `i/n`.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let t = Transform::new(grid, grid.n()).expect("same-size transform");
        let values: Vec<f64> = (0..grid.len())
            .map(|flat| f(&grid.point(flat)[..grid.dim()]))
            .collect();
        Self {
            grid,
            coeffs: t.to_spectral(&values),
        }
    }

    /// Random smooth-ish field: independent Gaussian-like coefficients with
    /// amplitude `(1+|k|^2)^{-decay/2}` on modes with `|k_j| <= band`.
    pub fn random<R: Rng>(grid: Grid, band: i64, decay: f64, rng: &mut R) -> Self {
        let band = band.min(grid.max_wavenumber());
        let mut f = Self::zeros(grid);
        for flat in 0..grid.len() {
            let Some(k) = grid.wavevector(flat) else { continue };
            let k = &k[..grid.dim()];
            if k.iter().any(|kj| kj.abs() > band) {
                continue;
            }
            let neg = grid.negated_index(flat);
            if neg < flat {
                continue;
            }
            let k2: i64 = k.iter().map(|kj| kj * kj).sum();
            let amp = (1.0 + k2 as f64).powf(-decay / 2.0);
            let c = if neg == flat {
                Complex64::new(amp * rng.gen_range(-1.0..1.0), 0.0)
            } else {
                Complex64::new(amp * rng.gen_range(-1.0..1.0), amp * rng.gen_range(-1.0..1.0))
            };
            f.coeffs[flat] = c;
            f.coeffs[neg] = c.conj();
        }
        f
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.grid.n()
    }

    #[inline]
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    #[inline]
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient of mode `k`, zero if not retained.
    pub fn mode(&self, k: &[i64]) -> Complex64 {
        self.grid.index_of(k).map_or(ZERO, |i| self.coeffs[i])
    }

    /// Cell average (zero mode).
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    pub fn remove_mean(&mut self) {
        self.coeffs[0] = ZERO;
    }

    /// Largest `max_j |k_j|` over nonzero modes.
    pub fn band(&self) -> i64 {
        let mut band = 0;
        for (flat, c) in self.coeffs.iter().enumerate() {
            if c.norm_sqr() > 0.0 {
                if let Some(k) = self.grid.wavevector(flat) {
                    band = band.max(k[..self.dim()].iter().map(|kj| kj.abs()).max().unwrap_or(0));
                }
            }
        }
        band
    }

    /// `max_k |û_k − conj(û_{−k})|`; zero for a real field.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        (0..self.grid.len())
            .map(|flat| (self.coeffs[flat] - self.coeffs[self.grid.negated_index(flat)].conj()).norm())
            .fold(0.0, f64::max)
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(HomogError::DimensionMismatch(format!(
                "grids {:?} and {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = self.clone();
        out.axpy(1.0, other);
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = self.clone();
        out.axpy(-1.0, other);
        Ok(out)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= s);
        out
    }

    /// `self += a * x` (grids must match).
    pub fn axpy(&mut self, a: f64, x: &Self) {
        assert_eq!(self.grid, x.grid, "axpy on mismatched grids");
        self.coeffs
            .iter_mut()
            .zip(&x.coeffs)
            .for_each(|(y, xv)| *y += xv * a);
    }

    /// Apply a Fourier multiplier `symbol(k)` (k as real wave vector).
    pub fn apply_symbol(&self, symbol: impl Fn(&[f64]) -> Complex64) -> Self {
        let mut out = self.clone();
        let d = self.dim();
        for (flat, c) in out.coeffs.iter_mut().enumerate() {
            match self.grid.wavevector(flat) {
                Some(k) => {
                    let mut kf = [0.0; MAX_DIM];
                    for a in 0..d {
                        kf[a] = k[a] as f64;
                    }
                    *c *= symbol(&kf[..d]);
                }
                None => *c = ZERO,
            }
        }
        out
    }

    /// Partial derivative along `axis`.
    pub fn partial(&self, axis: usize) -> Self {
        self.apply_symbol(|k| Complex64::new(0.0, 2.0 * PI * k[axis]))
    }

    pub fn gradient(&self) -> Vec<TorusField> {
        (0..self.dim()).map(|a| self.partial(a)).collect()
    }

    /// `(u, v)` in `L²(torus)`.
    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.grid, other.grid, "inner product on mismatched grids");
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a * b.conj()).re)
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `‖∇u‖`.
    pub fn gradient_norm(&self) -> f64 {
        self.weighted_norm(|k2| 4.0 * PI * PI * k2)
    }

    /// `‖∇²u‖` (Frobenius norm of the Hessian in `L²`).
    pub fn hessian_norm(&self) -> f64 {
        self.weighted_norm(|k2| 16.0 * PI.powi(4) * k2 * k2)
    }

    /// `sqrt(Σ w(|k|²) |û_k|²)`.
    pub fn weighted_norm(&self, weight: impl Fn(f64) -> f64) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for (flat, c) in self.coeffs.iter().enumerate() {
            if let Some(k) = self.grid.wavevector(flat) {
                let k2: i64 = k[..d].iter().map(|kj| kj * kj).sum();
                acc += weight(k2 as f64) * c.norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// Zero-pad or truncate to a grid of size `n`.
    pub fn resampled(&self, n: usize) -> Result<Self> {
        let grid = Grid::new(self.dim(), n)?;
        let mut out = Self::zeros(grid);
        for (flat, c) in self.coeffs.iter().enumerate() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            if let Some(k) = self.grid.wavevector(flat) {
                if let Some(idx) = grid.index_of(&k[..self.dim()]) {
                    out.coeffs[idx] = *c;
                }
            }
        }
        Ok(out)
    }

    /// `x ↦ u(m x)` on a grid of size `n`: mode `k` moves to `m k`.
    /// Harmonics that do not fit on the target grid are dropped.
    pub fn dilated(&self, m: usize, n: usize) -> Result<Self> {
        let grid = Grid::new(self.dim(), n)?;
        let mut out = Self::zeros(grid);
        let mut mk = [0i64; MAX_DIM];
        for (flat, c) in self.coeffs.iter().enumerate() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            if let Some(k) = self.grid.wavevector(flat) {
                for a in 0..self.dim() {
                    mk[a] = k[a] * m as i64;
                }
                if let Some(idx) = grid.index_of(&mk[..self.dim()]) {
                    out.coeffs[idx] = *c;
                }
            }
        }
        Ok(out)
    }

    /// Physical values on the `p`-point grid (exact for `p >= n`).
    pub fn to_physical(&self, p: usize) -> Result<Vec<f64>> {
        let t = Transform::new(self.grid, p)?;
        Ok(t.to_physical(&self.coeffs))
    }

    /// Sup-norm estimate from samples on a doubled grid.
    pub fn sup_norm(&self) -> f64 {
        self.to_physical(2 * self.n())
            .expect("doubling keeps the grid valid")
            .into_iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Pointwise product truncated to the retained modes, computed on a 3/2
    /// padded grid so no aliasing reaches the retained modes.
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let t = Transform::dealiased(self.grid)?;
        Ok(product_with(&t, self, other))
    }

    /// Exact `⟨u v⟩` over the torus.
    pub fn mean_of_product(&self, other: &Self) -> f64 {
        self.inner(other)
    }
}

/// Dealiased product using a prepared transform.
pub fn product_with(t: &Transform, a: &TorusField, b: &TorusField) -> TorusField {
    let (pa, pb) = t.to_physical_pair(a.coeffs(), b.coeffs());
    let prod: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
    TorusField {
        grid: a.grid,
        coeffs: t.to_spectral(&prod),
    }
}

/// Divergence `Σ_j ∂_j v_j` of a vector field.
pub fn divergence(v: &[TorusField]) -> Result<TorusField> {
    let first = v
        .first()
        .ok_or_else(|| HomogError::DimensionMismatch("empty vector field".into()))?;
    if v.len() != first.dim() {
        return Err(HomogError::DimensionMismatch(format!(
            "{} components in dimension {}",
            v.len(),
            first.dim()
        )));
    }
    let mut out = TorusField::zeros(first.grid());
    for (axis, comp) in v.iter().enumerate() {
        out.axpy(1.0, &comp.partial(axis));
    }
    Ok(out)
}
