//! Periodic cell problems, homogenized matrix, flux correctors and the
//! third-order corrector constants.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coefficient::CoefficientField;
use crate::error::{HomogError, Result};
use crate::field::TorusField;
use crate::grid::Grid;
use crate::krylov::{conjugate_gradient, gmres, KrylovOptions, LinearMap};
use crate::operator::DivergenceOperator;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const CELL_MAX_ITER: usize = 10_000;
const ELLIPTICITY_RES: usize = 64;

/// Solutions `N^j` (or `Ñ^j` for the adjoint family) of the cell problem
/// `−div a(e_j + ∇N^j) = 0`, `⟨N^j⟩ = 0`.
#[derive(Debug, Clone)]
pub struct CellCorrectors {
    pub adjoint: bool,
    pub tol: f64,
    pub n: Vec<TorusField>,
    /// `grad[j][i] = ∂_i N^j`.
    pub grad: Vec<Vec<TorusField>>,
    /// Relative preconditioned Krylov residual per `j`.
    pub residuals: Vec<f64>,
    /// `max_k |r_k| / (2π|k|)`: the weak-form residual against unit test modes.
    pub weak_residuals: Vec<f64>,
    pub iterations: Vec<usize>,
    pub sup_norms: Vec<f64>,
    /// `‖a(e_j + ∇N^j)‖` over the cell.
    pub flux_norms: Vec<f64>,
    /// Exact cell averages of `a(e_j + ∇N^j)`, i.e. column `j` of `a⁰`.
    flux_means: Vec<Vec<f64>>,
    /// Truncated fluxes `P_n[a(e_j + ∇N^j)]`, `[j][i]`.
    flux: Vec<Vec<TorusField>>,
}

impl CellCorrectors {
    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn grid(&self) -> Grid {
        self.n[0].grid()
    }

    /// `⟨a(e_j + ∇N^j)⟩` as a row-major matrix (column `j` per corrector).
    pub fn averaged_flux(&self) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d * d];
        for j in 0..d {
            for i in 0..d {
                m[i * d + j] = self.flux_means[j][i];
            }
        }
        m
    }
}

/// Everything derived from both corrector families.
#[derive(Debug, Clone)]
pub struct HomogenizedData {
    pub dim: usize,
    /// `a⁰` row-major.
    pub a0: Vec<f64>,
    /// `(a*)⁰` computed independently from the adjoint family.
    pub a0_adj: Vec<f64>,
    /// `g[j][i]`: flux corrector `g^j` component `i`.
    pub g: Vec<Vec<TorusField>>,
    pub gtilde: Vec<Vec<TorusField>>,
    /// `max_k |k·ĝ^j(k)|` per `j`.
    pub solenoidal_defect: Vec<f64>,
    pub solenoidal_defect_adj: Vec<f64>,
    /// `c[(j*d + k)*d + i] = ⟨N^k g̃^j_i⟩`.
    pub c: Vec<f64>,
    /// `ctilde[(j*d + k)*d + i] = ⟨Ñ^k g^j_i⟩`.
    pub ctilde: Vec<f64>,
    /// Largest difference between the flux-corrector and raw evaluations.
    pub constants_discrepancy: f64,
}

impl HomogenizedData {
    #[inline]
    pub fn c_index(&self, j: usize, k: usize, i: usize) -> usize {
        (j * self.dim + k) * self.dim + i
    }

    /// `max |c − c̃|`.
    pub fn c_asymmetry(&self) -> f64 {
        self.c
            .iter()
            .zip(&self.ctilde)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Both families plus the derived data: one complete cell computation.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub lambda: (f64, f64),
    pub primal: CellCorrectors,
    pub adjoint: CellCorrectors,
    pub homogenized: HomogenizedData,
}

impl CellSolution {
    pub fn compute(field: &CoefficientField, n_cell: usize, tol: f64) -> Result<Self> {
        let lambda = field.ellipticity_constant(ELLIPTICITY_RES)?;
        let (primal, adjoint) = rayon::join(
            || solve_cell_problem(field, n_cell, tol, false),
            || solve_cell_problem(field, n_cell, tol, true),
        );
        let (primal, adjoint) = (primal?, adjoint?);
        let homogenized = homogenize(field, &primal, &adjoint)?;
        Ok(Self {
            lambda,
            primal,
            adjoint,
            homogenized,
        })
    }

    /// Load from `dir` if a cache entry for this input exists, else compute
    /// and store it.
    pub fn cached(dir: &Path, field: &CoefficientField, n_cell: usize, tol: f64) -> Result<Self> {
        let key = cache_key(field, n_cell, tol);
        let path = dir.join(format!("cell-{key}.json"));
        if path.exists() {
            let text = std::fs::read_to_string(&path)?;
            let stored: CacheFile = serde_json::from_str(&text)?;
            if stored.key == key {
                return stored.restore(field);
            }
        }
        let sol = Self::compute(field, n_cell, tol)?;
        std::fs::create_dir_all(dir)?;
        let file = CacheFile::capture(&key, field, &sol);
        std::fs::write(&path, serde_json::to_vec(&file)?)?;
        Ok(sol)
    }
}

fn check_cell_grid(field: &CoefficientField, n_cell: usize) -> Result<Grid> {
    if !n_cell.is_power_of_two() {
        return Err(HomogError::GridTooCoarse(format!(
            "cell grid {n_cell} is not a power of two"
        )));
    }
    let band = field.band() as usize;
    if 4 * band > n_cell {
        return Err(HomogError::GridTooCoarse(format!(
            "cell grid {n_cell} does not resolve coefficient band {band} (need >= {})",
            4 * band
        )));
    }
    Grid::new(field.dim(), n_cell)
}

/// Solve the `d` cell problems for `a` (or `aᵀ` when `adjoint`).
pub fn solve_cell_problem(
    field: &CoefficientField,
    n_cell: usize,
    tol: f64,
    adjoint: bool,
) -> Result<CellCorrectors> {
    field.ellipticity_constant(ELLIPTICITY_RES)?;
    let grid = check_cell_grid(field, n_cell)?;
    let a = if adjoint { field.transpose() } else { field.clone() };
    let op = DivergenceOperator::new(&a, grid, 1, 0.0)?;
    let symmetric = a.is_symmetric();
    let opts = KrylovOptions {
        tol,
        max_iter: CELL_MAX_ITER,
        ..Default::default()
    };
    let d = field.dim();
    let solved: Vec<_> = (0..d)
        .into_par_iter()
        .map(|j| -> Result<_> {
            let rhs = op.divergence_of_column(j);
            let mut x = vec![Complex64::new(0.0, 0.0); grid.len()];
            let outcome = if symmetric {
                conjugate_gradient(&op, &rhs, &mut x, &opts)?
            } else {
                gmres(&op, &rhs, &mut x, &opts)?
            };
            x[0] = Complex64::new(0.0, 0.0);
            let mut ax = vec![Complex64::new(0.0, 0.0); grid.len()];
            op.apply(&x, &mut ax);
            let weak = weak_residual(grid, &rhs, &ax);
            let (flux, means) = op.flux(&x, Some(j));
            Ok((x, outcome, weak, flux, means))
        })
        .collect();
    let mut out = CellCorrectors {
        adjoint,
        tol,
        n: Vec::with_capacity(d),
        grad: Vec::with_capacity(d),
        residuals: Vec::with_capacity(d),
        weak_residuals: Vec::with_capacity(d),
        iterations: Vec::with_capacity(d),
        sup_norms: Vec::with_capacity(d),
        flux_norms: Vec::with_capacity(d),
        flux_means: Vec::with_capacity(d),
        flux: Vec::with_capacity(d),
    };
    for item in solved {
        let (x, outcome, weak, flux, means) = item?;
        let nj = TorusField::from_coeffs(grid, x)?;
        out.sup_norms.push(nj.sup_norm());
        out.grad.push(nj.gradient());
        out.n.push(nj);
        out.residuals.push(outcome.residual);
        out.iterations.push(outcome.iterations);
        out.weak_residuals.push(weak);
        let flux: Vec<TorusField> = flux
            .into_iter()
            .map(|c| TorusField::from_coeffs(grid, c))
            .collect::<Result<_>>()?;
        // ‖flux‖² with the exact zero mode
        let norm2: f64 = flux
            .iter()
            .zip(&means)
            .map(|(f, m)| f.l2_norm().powi(2) - f.mean().powi(2) + m * m)
            .sum();
        out.flux_norms.push(norm2.max(0.0).sqrt());
        out.flux.push(flux);
        out.flux_means.push(means);
    }
    Ok(out)
}

fn weak_residual(grid: Grid, rhs: &[Complex64], ax: &[Complex64]) -> f64 {
    let d = grid.dim();
    let mut worst = 0.0f64;
    for flat in 1..grid.len() {
        let Some(k) = grid.wavevector(flat) else { continue };
        let k2: i64 = k[..d].iter().map(|v| v * v).sum();
        let r = (rhs[flat] - ax[flat]).norm();
        worst = worst.max(r / (2.0 * PI * (k2 as f64).sqrt()));
    }
    worst
}

/// Column `j` of the homogenized matrix is `⟨a(e_j + ∇N^j)⟩`.
pub fn homogenized_matrix(correctors: &CellCorrectors) -> Vec<f64> {
    correctors.averaged_flux()
}

/// `g^j = a(e_j + ∇N^j) − a⁰e_j` (zero mode exactly zero) and the
/// solenoidality defects `max_k |k·ĝ^j(k)|`.
pub fn flux_correctors(correctors: &CellCorrectors) -> (Vec<Vec<TorusField>>, Vec<f64>) {
    let grid = correctors.grid();
    let d = grid.dim();
    let mut g = correctors.flux.clone();
    let mut defects = Vec::with_capacity(d);
    for gj in &mut g {
        for comp in gj.iter_mut() {
            comp.coeffs_mut()[0] = Complex64::new(0.0, 0.0);
        }
        let mut worst = 0.0f64;
        for flat in 0..grid.len() {
            let Some(k) = grid.wavevector(flat) else { continue };
            let dot: Complex64 = (0..d).map(|i| gj[i].coeffs()[flat] * k[i] as f64).sum();
            worst = worst.max(dot.norm());
        }
        defects.push(worst);
    }
    (g, defects)
}

/// Raw products `⟨M^k a(e_j + ∇N^j)_i⟩` on the padded grid.
fn raw_constants(field: &CoefficientField, own: &CellCorrectors, other: &CellCorrectors) -> Result<Vec<f64>> {
    let grid = own.grid();
    let d = grid.dim();
    let a = if own.adjoint { field.transpose() } else { field.clone() };
    let op = DivergenceOperator::new(&a, grid, 1, 0.0)?;
    let other_phys: Vec<Vec<f64>> =
        op.to_physical_many(&other.n.iter().map(|f| f.coeffs().to_vec()).collect::<Vec<_>>());
    let mut out = vec![0.0; d * d * d];
    for j in 0..d {
        let grad = op.to_physical_many(
            &own.grad[j].iter().map(|f| f.coeffs().to_vec()).collect::<Vec<_>>(),
        );
        let flux = op.physical_flux(&grad, Some(j));
        for k in 0..d {
            for i in 0..d {
                let s: f64 = other_phys[k].iter().zip(&flux[i]).map(|(x, y)| x * y).sum();
                out[(j * d + k) * d + i] = s / flux[i].len() as f64;
            }
        }
    }
    Ok(out)
}

/// `c^{jk}_i = ⟨N^k g̃^j_i⟩`, `c̃^{jk}_i = ⟨Ñ^k g^j_i⟩`, also evaluated as
/// `⟨N^k a*(∇Ñ^j + e_j)_i⟩` and `⟨Ñ^k a(∇N^j + e_j)_i⟩`.
/// Returns `(c, c̃, max discrepancy)`; `InternalInconsistency` beyond `100·tol`.
pub fn corrector_constants(
    field: &CoefficientField,
    primal: &CellCorrectors,
    adjoint: &CellCorrectors,
    g: &[Vec<TorusField>],
    gtilde: &[Vec<TorusField>],
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let d = primal.dim();
    let mut c = vec![0.0; d * d * d];
    let mut ct = vec![0.0; d * d * d];
    for j in 0..d {
        for k in 0..d {
            for i in 0..d {
                let idx = (j * d + k) * d + i;
                c[idx] = primal.n[k].inner(&gtilde[j][i]);
                ct[idx] = adjoint.n[k].inner(&g[j][i]);
            }
        }
    }
    let raw_c = raw_constants(field, adjoint, primal)?;
    let raw_ct = raw_constants(field, primal, adjoint)?;
    let diff = c
        .iter()
        .zip(&raw_c)
        .chain(ct.iter().zip(&raw_ct))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let bound = 100.0 * primal.tol.max(adjoint.tol);
    if diff > bound {
        return Err(HomogError::InternalInconsistency { difference: diff, bound });
    }
    Ok((c, ct, diff))
}

/// Assemble `a⁰`, `(a*)⁰`, both flux-corrector families and the constants.
pub fn homogenize(
    field: &CoefficientField,
    primal: &CellCorrectors,
    adjoint: &CellCorrectors,
) -> Result<HomogenizedData> {
    if primal.adjoint || !adjoint.adjoint {
        return Err(HomogError::InvalidConfig(
            "homogenize expects (primal, adjoint) corrector families".into(),
        ));
    }
    if primal.grid() != adjoint.grid() {
        return Err(HomogError::DimensionMismatch("corrector families on different grids".into()));
    }
    let a0 = homogenized_matrix(primal);
    let a0_adj = homogenized_matrix(adjoint);
    let (g, defect) = flux_correctors(primal);
    let (gtilde, defect_adj) = flux_correctors(adjoint);
    let (c, ctilde, discrepancy) = corrector_constants(field, primal, adjoint, &g, &gtilde)?;
    Ok(HomogenizedData {
        dim: field.dim(),
        a0,
        a0_adj,
        g,
        gtilde,
        solenoidal_defect: defect,
        solenoidal_defect_adj: defect_adj,
        c,
        ctilde,
        constants_discrepancy: discrepancy,
    })
}

pub fn cache_key(field: &CoefficientField, n_cell: usize, tol: f64) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(field.content_hash().as_bytes());
    h.update(n_cell.to_le_bytes());
    h.update(tol.to_bits().to_le_bytes());
    hex::encode(h.finalize())
}

#[derive(Serialize, Deserialize)]
struct StoredFamily {
    tol: f64,
    n: Vec<Vec<[f64; 2]>>,
    residuals: Vec<f64>,
    weak_residuals: Vec<f64>,
    iterations: Vec<usize>,
    sup_norms: Vec<f64>,
    flux_norms: Vec<f64>,
    flux_means: Vec<Vec<f64>>,
    flux: Vec<Vec<Vec<[f64; 2]>>>,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    format: String,
    key: String,
    dim: usize,
    n_cell: usize,
    lambda: (f64, f64),
    a0: Vec<f64>,
    a0_adj: Vec<f64>,
    c: Vec<f64>,
    ctilde: Vec<f64>,
    primal: StoredFamily,
    adjoint: StoredFamily,
}

fn pack(c: &[Complex64]) -> Vec<[f64; 2]> {
    c.iter().map(|z| [z.re, z.im]).collect()
}

fn unpack(grid: Grid, v: &[[f64; 2]]) -> Result<TorusField> {
    TorusField::from_coeffs(grid, v.iter().map(|p| Complex64::new(p[0], p[1])).collect())
}

impl StoredFamily {
    fn capture(c: &CellCorrectors) -> Self {
        Self {
            tol: c.tol,
            n: c.n.iter().map(|f| pack(f.coeffs())).collect(),
            residuals: c.residuals.clone(),
            weak_residuals: c.weak_residuals.clone(),
            iterations: c.iterations.clone(),
            sup_norms: c.sup_norms.clone(),
            flux_norms: c.flux_norms.clone(),
            flux_means: c.flux_means.clone(),
            flux: c
                .flux
                .iter()
                .map(|fj| fj.iter().map(|f| pack(f.coeffs())).collect())
                .collect(),
        }
    }

    fn restore(&self, grid: Grid, adjoint: bool) -> Result<CellCorrectors> {
        let n: Vec<TorusField> = self.n.iter().map(|v| unpack(grid, v)).collect::<Result<_>>()?;
        let flux = self
            .flux
            .iter()
            .map(|fj| fj.iter().map(|v| unpack(grid, v)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        Ok(CellCorrectors {
            adjoint,
            tol: self.tol,
            grad: n.iter().map(TorusField::gradient).collect(),
            n,
            residuals: self.residuals.clone(),
            weak_residuals: self.weak_residuals.clone(),
            iterations: self.iterations.clone(),
            sup_norms: self.sup_norms.clone(),
            flux_norms: self.flux_norms.clone(),
            flux_means: self.flux_means.clone(),
            flux,
        })
    }
}

impl CacheFile {
    fn capture(key: &str, field: &CoefficientField, sol: &CellSolution) -> Self {
        Self {
            format: "homog-cell v1".into(),
            key: key.into(),
            dim: field.dim(),
            n_cell: sol.primal.grid().n(),
            lambda: sol.lambda,
            a0: sol.homogenized.a0.clone(),
            a0_adj: sol.homogenized.a0_adj.clone(),
            c: sol.homogenized.c.clone(),
            ctilde: sol.homogenized.ctilde.clone(),
            primal: StoredFamily::capture(&sol.primal),
            adjoint: StoredFamily::capture(&sol.adjoint),
        }
    }

    fn restore(&self, field: &CoefficientField) -> Result<CellSolution> {
        let grid = Grid::new(self.dim, self.n_cell)?;
        let primal = self.primal.restore(grid, false)?;
        let adjoint = self.adjoint.restore(grid, true)?;
        let homogenized = homogenize(field, &primal, &adjoint)?;
        Ok(CellSolution {
            lambda: self.lambda,
            primal,
            adjoint,
            homogenized,
        })
    }
}
