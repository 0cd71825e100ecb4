//! Matrix-free Fourier–Galerkin discretization of `u ↦ −div(a(m·)∇u) + μu`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::coefficient::CoefficientField;
use crate::error::Result;
use crate::grid::{Grid, Transform, MAX_DIM};
use crate::krylov::LinearMap;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Galerkin operator on a spectral grid with coefficients `a(m x)` sampled
/// on the 3/2-padded physical grid. Exact Galerkin projection as long as the
/// dilated coefficient band `m·band` does not exceed `n/2`.
pub struct DivergenceOperator {
    grid: Grid,
    transform: Transform,
    /// `a_ij(m x)` on the physical grid, row-major over `(i, j)`.
    samples: Vec<Vec<f64>>,
    mass: f64,
    /// `2π k` per flat index (zero on Nyquist).
    wave: Vec<[f64; MAX_DIM]>,
    /// Inverse of the constant-coefficient symbol, zero where pinned.
    precond: Vec<f64>,
    retained: Vec<bool>,
}

impl DivergenceOperator {
    pub fn new(field: &CoefficientField, grid: Grid, dilation: usize, mass: f64) -> Result<Self> {
        let transform = Transform::dealiased(grid)?;
        let samples = field.sample_dilated(dilation, transform.physical().n())?;
        let d = grid.dim();
        let (sym, _) = field.split_symmetric();
        let mean = sym.mean_matrix();
        let mut wave = vec![[0.0; MAX_DIM]; grid.len()];
        let mut precond = vec![0.0; grid.len()];
        let mut retained = vec![false; grid.len()];
        for flat in 0..grid.len() {
            let Some(k) = grid.wavevector(flat) else { continue };
            retained[flat] = true;
            let mut q = 0.0;
            for i in 0..d {
                wave[flat][i] = 2.0 * PI * k[i] as f64;
            }
            for i in 0..d {
                for j in 0..d {
                    q += mean[i * d + j] * wave[flat][i] * wave[flat][j];
                }
            }
            let sym = mass + q;
            precond[flat] = if sym > 0.0 { 1.0 / sym } else { 0.0 };
        }
        Ok(Self {
            grid,
            transform,
            samples,
            mass,
            wave,
            precond,
            retained,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Spectral gradient components `2πi k_a û_k`.
    pub fn gradient(&self, u: &[Complex64]) -> Vec<Vec<Complex64>> {
        (0..self.grid.dim())
            .map(|a| {
                u.iter()
                    .zip(&self.wave)
                    .map(|(c, w)| c * Complex64::new(0.0, w[a]))
                    .collect()
            })
            .collect()
    }

    /// Spectral divergence `Σ_a 2πi k_a F̂_a`.
    pub fn divergence(&self, flux: &[Vec<Complex64>]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.grid.len()];
        for (a, f) in flux.iter().enumerate() {
            for ((o, c), w) in out.iter_mut().zip(f).zip(&self.wave) {
                *o += c * Complex64::new(0.0, w[a]);
            }
        }
        out
    }

    /// Physical values of several real fields, transformed two at a time.
    pub fn to_physical_many(&self, fields: &[Vec<Complex64>]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(fields.len());
        for chunk in fields.chunks(2) {
            if chunk.len() == 2 {
                let (a, b) = self.transform.to_physical_pair(&chunk[0], &chunk[1]);
                out.push(a);
                out.push(b);
            } else {
                out.push(self.transform.to_physical(&chunk[0]));
            }
        }
        out
    }

    fn to_spectral_many(&self, values: &[Vec<f64>]) -> Vec<Vec<Complex64>> {
        let mut out = Vec::with_capacity(values.len());
        for chunk in values.chunks(2) {
            if chunk.len() == 2 {
                let (a, b) = self.transform.to_spectral_pair(&chunk[0], &chunk[1]);
                out.push(a);
                out.push(b);
            } else {
                out.push(self.transform.to_spectral(&chunk[0]));
            }
        }
        out
    }

    /// Physical flux `a(∇u + e_shift)` from a physical gradient.
    pub fn physical_flux(&self, grad: &[Vec<f64>], shift: Option<usize>) -> Vec<Vec<f64>> {
        let d = self.grid.dim();
        let len = grad[0].len();
        (0..d)
            .map(|i| {
                let mut fi = vec![0.0; len];
                for j in 0..d {
                    let a = &self.samples[i * d + j];
                    let g = &grad[j];
                    if shift == Some(j) {
                        fi.iter_mut()
                            .zip(a)
                            .zip(g)
                            .for_each(|((f, a), g)| *f += a * (g + 1.0));
                    } else {
                        fi.iter_mut().zip(a).zip(g).for_each(|((f, a), g)| *f += a * g);
                    }
                }
                fi
            })
            .collect()
    }

    /// Spectral flux `P_n[a(∇u + e_shift)]` together with its exact cell
    /// averages (zero modes of the untruncated product).
    pub fn flux(&self, u: &[Complex64], shift: Option<usize>) -> (Vec<Vec<Complex64>>, Vec<f64>) {
        let grad = self.to_physical_many(&self.gradient(u));
        let phys = self.physical_flux(&grad, shift);
        let means = phys
            .iter()
            .map(|f| f.iter().sum::<f64>() / f.len() as f64)
            .collect();
        (self.to_spectral_many(&phys), means)
    }

    /// Spectral `div(a e_j)` with `a = a(m·)`.
    pub fn divergence_of_column(&self, j: usize) -> Vec<Complex64> {
        let d = self.grid.dim();
        let cols: Vec<Vec<f64>> = (0..d).map(|i| self.samples[i * d + j].clone()).collect();
        let mut out = self.divergence(&self.to_spectral_many(&cols));
        out[0] = ZERO;
        out
    }
}

impl LinearMap for DivergenceOperator {
    fn len(&self) -> usize {
        self.grid.len()
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let (flux, _) = self.flux(x, None);
        let div = self.divergence(&flux);
        for (flat, yv) in y.iter_mut().enumerate() {
            *yv = if self.retained[flat] {
                self.mass * x[flat] - div[flat]
            } else {
                ZERO
            };
        }
        if self.mass == 0.0 {
            y[0] = ZERO;
        }
    }

    fn precondition(&self, r: &[Complex64], z: &mut [Complex64]) {
        z.iter_mut()
            .zip(r)
            .zip(&self.precond)
            .for_each(|((z, r), p)| *z = r * p);
    }
}
