//! Uniform Fourier grids on the unit torus and the padded transforms used
//! for alias-free pointwise products.
//!
//! A grid of size `n` per axis stores the Fourier coefficients of a
//! trigonometric polynomial `u(x) = Σ_k û_k exp(2πi k·x)` in FFT order.
//! Retained modes satisfy `|k_j| < n/2` on every axis; the Nyquist plane is
//! kept at zero so that real fields stay conjugate symmetric under
//! differentiation.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{HomogError, Result};

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    dim: usize,
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(HomogError::DimensionMismatch(format!(
                "dimension {dim} not in 1..={MAX_DIM}"
            )));
        }
        if n < 2 || !n.is_multiple_of(2) {
            return Err(HomogError::GridTooCoarse(format!(
                "grid size {n} must be even and >= 2"
            )));
        }
        Ok(Self { dim, n })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored coefficients, `n^dim`.
    #[inline]
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest retained wave number per axis.
    #[inline]
    pub fn max_wavenumber(&self) -> i64 {
        self.n as i64 / 2 - 1
    }

    /// Signed wave number of a one-dimensional FFT index.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> i64 {
        signed_wavenumber(i, self.n)
    }

    /// Per-axis wave numbers in FFT order, with the Nyquist entry zeroed.
    pub fn axis_wavenumbers(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                if i == self.n / 2 {
                    0.0
                } else {
                    self.wavenumber(i) as f64
                }
            })
            .collect()
    }

    /// Decompose a flat index into per-axis indices (axis 0 slowest).
    #[inline]
    pub fn unflatten(&self, mut flat: usize) -> [usize; MAX_DIM] {
        let mut idx = [0usize; MAX_DIM];
        for a in (0..self.dim).rev() {
            idx[a] = flat % self.n;
            flat /= self.n;
        }
        idx
    }

    /// Wave vector of a flat index, or `None` on the Nyquist planes.
    #[inline]
    pub fn wavevector(&self, flat: usize) -> Option<[i64; MAX_DIM]> {
        let idx = self.unflatten(flat);
        let mut k = [0i64; MAX_DIM];
        for a in 0..self.dim {
            if idx[a] == self.n / 2 {
                return None;
            }
            k[a] = self.wavenumber(idx[a]);
        }
        Some(k)
    }

    /// Flat index of a wave vector if it is retained on this grid.
    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        debug_assert_eq!(k.len(), self.dim);
        let half = self.n as i64 / 2;
        let mut flat = 0usize;
        for &kj in k {
            if kj.abs() >= half {
                return None;
            }
            flat = flat * self.n + kj.rem_euclid(self.n as i64) as usize;
        }
        Some(flat)
    }

    /// Flat index of `-k` for the mode stored at `flat`.
    #[inline]
    pub fn negated_index(&self, flat: usize) -> usize {
        let idx = self.unflatten(flat);
        let mut out = 0usize;
        for &i in idx.iter().take(self.dim) {
            out = out * self.n + (self.n - i) % self.n;
        }
        out
    }

    /// Physical sample points `x_i = i/n` of the flat index.
    pub fn point(&self, flat: usize) -> [f64; MAX_DIM] {
        let idx = self.unflatten(flat);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = idx[a] as f64 / self.n as f64;
        }
        x
    }
}

#[inline]
pub(crate) fn signed_wavenumber(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Spectral grid of size `n` paired with a physical grid of size `p >= n`.
///
/// `to_physical` zero-pads and inverts, `to_spectral` transforms and
/// truncates back to the retained modes. With `p = 3n/2` a product of two
/// retained fields is computed without aliasing on the retained modes.
#[derive(Clone)]
pub struct Transform {
    spectral: Grid,
    physical: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Spectral index -> physical index per axis (None on Nyquist).
    pad_map: Vec<Option<usize>>,
}

impl std::fmt::Debug for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transform")
            .field("spectral", &self.spectral)
            .field("physical", &self.physical)
            .finish()
    }
}

impl Transform {
    pub fn new(spectral: Grid, p: usize) -> Result<Self> {
        if p < spectral.n() {
            return Err(HomogError::GridTooCoarse(format!(
                "physical grid {p} smaller than spectral grid {}",
                spectral.n()
            )));
        }
        let physical = Grid::new(spectral.dim(), p)?;
        let mut planner = FftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(p);
        let inverse = planner.plan_fft_inverse(p);
        let n = spectral.n();
        let pad_map = (0..n)
            .map(|i| {
                if i == n / 2 {
                    None
                } else {
                    Some(signed_wavenumber(i, n).rem_euclid(p as i64) as usize)
                }
            })
            .collect();
        Ok(Self {
            spectral,
            physical,
            forward,
            inverse,
            pad_map,
        })
    }

    /// Transform with the 3/2-rule padded physical grid.
    pub fn dealiased(spectral: Grid) -> Result<Self> {
        let p = (3 * spectral.n()).div_ceil(2);
        Self::new(spectral, p + p % 2)
    }

    pub fn spectral(&self) -> Grid {
        self.spectral
    }

    pub fn physical(&self) -> Grid {
        self.physical
    }

    fn scatter(&self, coeffs: &[Complex64], buf: &mut [Complex64]) {
        buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        let n = self.spectral.n();
        let p = self.physical.n();
        match self.spectral.dim() {
            1 => {
                for i in 0..n {
                    if let Some(pi) = self.pad_map[i] {
                        buf[pi] = coeffs[i];
                    }
                }
            }
            2 => {
                for i in 0..n {
                    let Some(pi) = self.pad_map[i] else { continue };
                    for j in 0..n {
                        if let Some(pj) = self.pad_map[j] {
                            buf[pi * p + pj] = coeffs[i * n + j];
                        }
                    }
                }
            }
            _ => {
                for i in 0..n {
                    let Some(pi) = self.pad_map[i] else { continue };
                    for j in 0..n {
                        let Some(pj) = self.pad_map[j] else { continue };
                        for l in 0..n {
                            if let Some(pl) = self.pad_map[l] {
                                buf[(pi * p + pj) * p + pl] = coeffs[(i * n + j) * n + l];
                            }
                        }
                    }
                }
            }
        }
    }

    fn gather(&self, buf: &[Complex64], scale: f64) -> Vec<Complex64> {
        let n = self.spectral.n();
        let p = self.physical.n();
        let mut out = vec![Complex64::new(0.0, 0.0); self.spectral.len()];
        match self.spectral.dim() {
            1 => {
                for i in 0..n {
                    if let Some(pi) = self.pad_map[i] {
                        out[i] = buf[pi] * scale;
                    }
                }
            }
            2 => {
                for i in 0..n {
                    let Some(pi) = self.pad_map[i] else { continue };
                    for j in 0..n {
                        if let Some(pj) = self.pad_map[j] {
                            out[i * n + j] = buf[pi * p + pj] * scale;
                        }
                    }
                }
            }
            _ => {
                for i in 0..n {
                    let Some(pi) = self.pad_map[i] else { continue };
                    for j in 0..n {
                        let Some(pj) = self.pad_map[j] else { continue };
                        for l in 0..n {
                            if let Some(pl) = self.pad_map[l] {
                                out[(i * n + j) * n + l] = buf[(pi * p + pj) * p + pl] * scale;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Physical values of a real field on the padded grid.
    pub fn to_physical(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.physical.len()];
        self.scatter(coeffs, &mut buf);
        fft_nd(&mut buf, self.physical, &*self.inverse);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Physical values of two real fields with a single complex transform.
    pub fn to_physical_pair(&self, a: &[Complex64], b: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.physical.len()];
        let mut tmp = vec![Complex64::new(0.0, 0.0); self.physical.len()];
        self.scatter(a, &mut buf);
        self.scatter(b, &mut tmp);
        let i = Complex64::new(0.0, 1.0);
        buf.iter_mut().zip(&tmp).for_each(|(x, y)| *x += i * y);
        fft_nd(&mut buf, self.physical, &*self.inverse);
        (
            buf.iter().map(|z| z.re).collect(),
            buf.iter().map(|z| z.im).collect(),
        )
    }

    /// Retained Fourier coefficients of physical samples on the padded grid.
    pub fn to_spectral(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut buf, self.physical, &*self.forward);
        self.gather(&buf, 1.0 / self.physical.len() as f64)
    }

    /// Retained Fourier coefficients of two real sample arrays at once.
    pub fn to_spectral_pair(&self, a: &[f64], b: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut buf: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| Complex64::new(x, y))
            .collect();
        fft_nd(&mut buf, self.physical, &*self.forward);
        let z = self.gather(&buf, 1.0 / self.physical.len() as f64);
        // Z_k = A_k + i B_k with A, B conjugate symmetric.
        let g = self.spectral;
        let mut ca = vec![Complex64::new(0.0, 0.0); g.len()];
        let mut cb = vec![Complex64::new(0.0, 0.0); g.len()];
        for flat in 0..g.len() {
            if g.wavevector(flat).is_none() {
                continue;
            }
            let zk = z[flat];
            let zm = z[g.negated_index(flat)].conj();
            ca[flat] = (zk + zm) * 0.5;
            cb[flat] = (zk - zm) * Complex64::new(0.0, -0.5);
        }
        (ca, cb)
    }

    /// Mean of the pointwise product of physical sample arrays.
    pub fn mean_of_product(values: &[&[f64]]) -> f64 {
        let len = values[0].len();
        let mut acc = 0.0;
        for i in 0..len {
            acc += values.iter().map(|v| v[i]).product::<f64>();
        }
        acc / len as f64
    }
}

/// Unnormalized multi-dimensional FFT in place (axis 0 slowest).
pub(crate) fn fft_nd(buf: &mut [Complex64], grid: Grid, fft: &dyn Fft<f64>) {
    let p = grid.n();
    let len = grid.len();
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    // Last axis is contiguous.
    fft.process_with_scratch(buf, &mut scratch);
    if grid.dim() == 1 {
        return;
    }
    let mut lines = vec![Complex64::new(0.0, 0.0); len];
    for axis in (0..grid.dim() - 1).rev() {
        let stride = p.pow((grid.dim() - 1 - axis) as u32);
        let block = stride * p;
        for base in (0..len).step_by(block) {
            let src = &buf[base..base + block];
            let dst = &mut lines[base..base + block];
            for t in 0..p {
                for r in 0..stride {
                    dst[r * p + t] = src[t * stride + r];
                }
            }
        }
        fft.process_with_scratch(&mut lines, &mut scratch);
        for base in (0..len).step_by(block) {
            let src = &lines[base..base + block];
            let dst = &mut buf[base..base + block];
            for t in 0..p {
                for r in 0..stride {
                    dst[t * stride + r] = src[r * p + t];
                }
            }
        }
    }
}
