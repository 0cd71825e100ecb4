//! Oscillatory resolvent solves `(A_ε + 1)u = f` on the torus and the
//! zero-, first- and second-order approximations built from cell data.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cell::{CellSolution, HomogenizedData};
use crate::coefficient::CoefficientField;
use crate::error::{HomogError, Result};
use crate::field::{divergence, TorusField};
use crate::krylov::{conjugate_gradient, gmres, KrylovOptions, LinearMap};
use crate::operator::DivergenceOperator;
use crate::steklov::{h_minus1_norm, reciprocal_eps, steklov_apply};

pub const RESOLVENT_MAX_ITER: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Order {
    Zero,
    FirstH1,
    SecondL2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ApproximationOrder {
    pub order: Order,
    pub smoothing: bool,
}

/// Orientation of the third-order term: `Paper3250` uses `c − c̃`,
/// `Paper2121` uses `c̃ − c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LSign {
    #[serde(rename = "paper-3250")]
    Paper3250,
    #[serde(rename = "paper-2121")]
    Paper2121,
}

impl LSign {
    /// Multiplier applied to `c − c̃`.
    pub fn factor(self) -> f64 {
        match self {
            LSign::Paper3250 => 1.0,
            LSign::Paper2121 => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            LSign::Paper3250 => LSign::Paper2121,
            LSign::Paper2121 => LSign::Paper3250,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LSign::Paper3250 => "paper-3250",
            LSign::Paper2121 => "paper-2121",
        }
    }
}

impl fmt::Display for LSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LSign {
    type Err = HomogError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-3250" => Ok(LSign::Paper3250),
            "paper-2121" => Ok(LSign::Paper2121),
            other => Err(HomogError::Parse(format!(
                "unknown sign `{other}` (expected paper-3250 or paper-2121)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ResolventSolve {
    pub u: TorusField,
    pub eps: f64,
    pub iterations: usize,
    /// Relative preconditioned Krylov residual.
    pub residual: f64,
    /// `‖(A_ε + 1)u − f‖_{H⁻¹}`.
    pub residual_h_minus1: f64,
    /// `‖u‖ / ‖f‖`.
    pub energy_l2_ratio: f64,
    /// `λ‖∇u‖² / ‖f‖²`.
    pub energy_grad_ratio: f64,
}

impl ResolventSolve {
    /// Both energy estimates hold with relative slack `slack`.
    pub fn energy_ok(&self, slack: f64) -> bool {
        self.energy_l2_ratio <= 1.0 + slack && self.energy_grad_ratio <= 1.0 + slack
    }
}

/// Solve `(A_ε + 1)u = f` (or the adjoint problem with `aᵀ`) on the grid of `f`.
pub fn solve_resolvent(
    field: &CoefficientField,
    eps: f64,
    f: &TorusField,
    tol: f64,
    adjoint: bool,
) -> Result<ResolventSolve> {
    if f.dim() != field.dim() {
        return Err(HomogError::DimensionMismatch(format!(
            "datum of dimension {} for a {}-dimensional coefficient",
            f.dim(),
            field.dim()
        )));
    }
    let (lambda, _) = field.ellipticity_constant(64)?;
    let n = f.n();
    let m = reciprocal_eps(eps, n).map_err(|e| match e {
        HomogError::IncommensurateEps { reason, .. } => HomogError::GridTooCoarse(reason),
        other => other,
    })?;
    let band = field.band().max(1) as usize;
    if n < 4 * m * band {
        return Err(HomogError::GridTooCoarse(format!(
            "grid {n} does not resolve the oscillation: need >= 4 * {m} * {band} = {}",
            4 * m * band
        )));
    }
    let a = if adjoint { field.transpose() } else { field.clone() };
    let op = DivergenceOperator::new(&a, f.grid(), m, 1.0)?;
    let opts = KrylovOptions {
        tol,
        max_iter: RESOLVENT_MAX_ITER,
        ..Default::default()
    };
    let mut x = vec![Complex64::new(0.0, 0.0); f.grid().len()];
    let outcome = if a.is_symmetric() {
        conjugate_gradient(&op, f.coeffs(), &mut x, &opts)?
    } else {
        gmres(&op, f.coeffs(), &mut x, &opts)?
    };
    let mut ax = vec![Complex64::new(0.0, 0.0); x.len()];
    op.apply(&x, &mut ax);
    let r: Vec<Complex64> = f.coeffs().iter().zip(&ax).map(|(b, y)| b - y).collect();
    let residual_h_minus1 = h_minus1_norm(&TorusField::from_coeffs(f.grid(), r)?);
    let u = TorusField::from_coeffs(f.grid(), x)?;
    let fnorm = f.l2_norm();
    Ok(ResolventSolve {
        energy_l2_ratio: u.l2_norm() / fnorm,
        energy_grad_ratio: lambda * u.gradient_norm().powi(2) / (fnorm * fnorm),
        u,
        eps,
        iterations: outcome.iterations,
        residual: outcome.residual,
        residual_h_minus1,
    })
}

fn symmetric_min_eig(a0: &[f64], d: usize) -> f64 {
    let m = DMatrix::from_fn(d, d, |i, j| 0.5 * (a0[i * d + j] + a0[j * d + i]));
    m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

fn check_a0(a0: &[f64], d: usize) -> Result<()> {
    if a0.len() != d * d {
        return Err(HomogError::DimensionMismatch(format!(
            "{} entries for a {d}x{d} matrix",
            a0.len()
        )));
    }
    let lo = symmetric_min_eig(a0, d);
    if lo <= 0.0 {
        return Err(HomogError::NonElliptic { lambda_low: lo });
    }
    Ok(())
}

/// `(A₀ + 1)^{-1} f` (adjoint uses `a⁰ᵀ`, the same quadratic form).
pub fn solve_homogenized(a0: &[f64], f: &TorusField, adjoint: bool) -> Result<TorusField> {
    let d = f.dim();
    check_a0(a0, d)?;
    let at = |i: usize, j: usize| if adjoint { a0[j * d + i] } else { a0[i * d + j] };
    Ok(f.apply_symbol(|k| {
        let mut q = 0.0;
        for i in 0..d {
            for j in 0..d {
                q += at(i, j) * k[i] * k[j];
            }
        }
        Complex64::new(1.0 / (1.0 + 4.0 * PI * PI * q), 0.0)
    }))
}

/// Constant in `‖(A₀+1)^{-1}f‖_{H²} ≤ c‖f‖`, from the symbol.
pub fn elliptic_constant(a0: &[f64], d: usize) -> Result<f64> {
    check_a0(a0, d)?;
    Ok(1.0f64.max(1.0 / symmetric_min_eig(a0, d)))
}

pub fn h2_norm(u: &TorusField) -> f64 {
    u.weighted_norm(|k2| (1.0 + 4.0 * PI * PI * k2).powi(2))
}

/// Cell functions `N^j(x/ε)` on the torus grid of `like`.
pub fn embed_correctors(cell: &[TorusField], eps: f64, like: &TorusField) -> Result<Vec<TorusField>> {
    let n = like.n();
    let m = reciprocal_eps(eps, n)?;
    if n < 4 * m {
        return Err(HomogError::GridTooCoarse(format!(
            "grid {n} keeps no cell harmonic at 1/eps = {m}"
        )));
    }
    cell.iter().map(|c| c.dilated(m, n)).collect()
}

fn maybe_smooth(u: &TorusField, eps: f64, smoothing: bool) -> Result<TorusField> {
    if smoothing {
        steklov_apply(u, eps)
    } else {
        Ok(u.clone())
    }
}

/// `N_ε · ∇w` for embedded correctors.
fn corrector_dot_grad(n_eps: &[TorusField], w: &TorusField) -> Result<TorusField> {
    let mut out = TorusField::zeros(w.grid());
    for (j, nj) in n_eps.iter().enumerate() {
        out.axpy(1.0, &nj.product(&w.partial(j))?);
    }
    Ok(out)
}

/// First approximation `u^{,ε} + εN_ε·∇u^{,ε}` with `u^{,ε} = S^ε u`
/// (or `u + εN_ε·∇u` without smoothing).
pub fn first_order_approx(
    u0: &TorusField,
    correctors: &[TorusField],
    eps: f64,
    smoothing: bool,
) -> Result<TorusField> {
    let n_eps = embed_correctors(correctors, eps, u0)?;
    let base = maybe_smooth(u0, eps, smoothing)?;
    let mut out = base.clone();
    out.axpy(eps, &corrector_dot_grad(&n_eps, &base)?);
    Ok(out)
}

/// Gradient of the first approximation by the product rule:
/// `(∇_y N^j)(x/ε) ∂_j w + e_j ∂_j w + ε N^j(x/ε) ∇∂_j w`.
pub fn first_order_gradient(
    u0: &TorusField,
    correctors: &[TorusField],
    eps: f64,
    smoothing: bool,
) -> Result<Vec<TorusField>> {
    let d = u0.dim();
    let n_eps = embed_correctors(correctors, eps, u0)?;
    let w = maybe_smooth(u0, eps, smoothing)?;
    let dw = w.gradient();
    let mut grad = dw.clone();
    for j in 0..d {
        let cell_grad = correctors[j].gradient();
        let grad_eps = embed_correctors(&cell_grad, eps, u0)?;
        for i in 0..d {
            grad[i].axpy(1.0, &grad_eps[i].product(&dw[j])?);
            grad[i].axpy(eps, &n_eps[j].product(&dw[j].partial(i))?);
        }
    }
    Ok(grad)
}

/// `K_ε f = N_ε · S^ε∇(A₀+1)^{-1} f`.
pub fn k_operator(
    f: &TorusField,
    a0: &[f64],
    correctors: &[TorusField],
    eps: f64,
    smoothing: bool,
    adjoint: bool,
) -> Result<TorusField> {
    let u = solve_homogenized(a0, f, adjoint)?;
    let n_eps = embed_correctors(correctors, eps, f)?;
    corrector_dot_grad(&n_eps, &maybe_smooth(&u, eps, smoothing)?)
}

/// L² adjoint of `h ↦ M_ε · S^ε∇(A₀*+1)^{-1} h`:
/// `f ↦ −(A₀+1)^{-1} S^ε div(M_ε f)`.
pub fn k_adjoint_operator(
    f: &TorusField,
    a0: &[f64],
    correctors: &[TorusField],
    eps: f64,
    smoothing: bool,
) -> Result<TorusField> {
    let n_eps = embed_correctors(correctors, eps, f)?;
    let flux: Vec<TorusField> = n_eps.iter().map(|nj| nj.product(f)).collect::<Result<_>>()?;
    let div = maybe_smooth(&divergence(&flux)?, eps, smoothing)?;
    Ok(solve_homogenized(a0, &div, false)?.scaled(-1.0))
}

/// `L f = (A₀+1)^{-1} s(c − c̃)_i^{jk} ∂_i∂_j∂_k (A₀+1)^{-1} f`.
pub fn l_operator(f: &TorusField, hom: &HomogenizedData, sign: LSign) -> Result<TorusField> {
    let d = hom.dim;
    let u = solve_homogenized(&hom.a0, f, false)?;
    let s = sign.factor();
    let mut coef = Vec::with_capacity(d * d * d);
    for j in 0..d {
        for k in 0..d {
            for i in 0..d {
                let idx = hom.c_index(j, k, i);
                coef.push((j, k, i, s * (hom.c[idx] - hom.ctilde[idx])));
            }
        }
    }
    let third = u.apply_symbol(|kv| {
        let mut acc = 0.0;
        for &(j, k, i, c) in &coef {
            acc += c * kv[i] * kv[j] * kv[k];
        }
        // (2πi)^3 = -8π³ i
        Complex64::new(0.0, -8.0 * PI.powi(3) * acc)
    });
    solve_homogenized(&hom.a0, &third, false)
}

/// All approximation pieces for one datum and one ε.
#[derive(Debug, Clone)]
pub struct Approximations {
    pub eps: f64,
    pub smoothing: bool,
    pub sign: LSign,
    /// `u = (A₀+1)^{-1} f`.
    pub u0: TorusField,
    /// `S^ε u` (or `u`).
    pub u0_smoothed: TorusField,
    /// First approximation (H¹ sense).
    pub first: TorusField,
    pub k_term: TorusField,
    pub kt_star_term: TorusField,
    pub l_term: TorusField,
}

impl Approximations {
    pub fn build(
        f: &TorusField,
        cell: &CellSolution,
        eps: f64,
        smoothing: bool,
        sign: LSign,
    ) -> Result<Self> {
        let hom = &cell.homogenized;
        let u0 = solve_homogenized(&hom.a0, f, false)?;
        let u0_smoothed = maybe_smooth(&u0, eps, smoothing)?;
        let n_eps = embed_correctors(&cell.primal.n, eps, f)?;
        let k_term = corrector_dot_grad(&n_eps, &u0_smoothed)?;
        let mut first = u0_smoothed.clone();
        first.axpy(eps, &k_term);
        let kt_star_term = k_adjoint_operator(f, &hom.a0, &cell.adjoint.n, eps, smoothing)?;
        let l_term = l_operator(f, hom, sign)?;
        Ok(Self {
            eps,
            smoothing,
            sign,
            u0,
            u0_smoothed,
            first,
            k_term,
            kt_star_term,
            l_term,
        })
    }

    /// `u + εK f + ε(K̃)* f + εL f`.
    pub fn second(&self) -> TorusField {
        self.second_with(true, true)
    }

    /// Second approximation with optional `(K̃)*` and `L` terms.
    pub fn second_with(&self, adjoint_term: bool, l_term: bool) -> TorusField {
        let mut out = self.u0.clone();
        out.axpy(self.eps, &self.k_term);
        if adjoint_term {
            out.axpy(self.eps, &self.kt_star_term);
        }
        if l_term {
            out.axpy(self.eps, &self.l_term);
        }
        out
    }

    /// Second approximation with the opposite orientation of `L`.
    pub fn second_flipped(&self) -> TorusField {
        let mut out = self.second_with(true, false);
        out.axpy(-self.eps, &self.l_term);
        out
    }

    pub fn get(&self, order: Order) -> TorusField {
        match order {
            Order::Zero => self.u0.clone(),
            Order::FirstH1 => self.first.clone(),
            Order::SecondL2 => self.second(),
        }
    }
}

/// Oscillatory solve plus every approximation.
#[derive(Debug, Clone)]
pub struct ResolventSolution {
    pub eps: f64,
    pub solve: ResolventSolve,
    pub approximations: Approximations,
}

impl ResolventSolution {
    pub fn compute(
        field: &CoefficientField,
        cell: &CellSolution,
        eps: f64,
        f: &TorusField,
        order: ApproximationOrder,
        sign: LSign,
        tol: f64,
    ) -> Result<Self> {
        let solve = solve_resolvent(field, eps, f, tol, false)?;
        let approximations = Approximations::build(f, cell, eps, order.smoothing, sign)?;
        Ok(Self {
            eps,
            solve,
            approximations,
        })
    }

    pub fn u_eps(&self) -> &TorusField {
        &self.solve.u
    }

    pub fn residual(&self) -> f64 {
        self.solve.residual
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn identity_coefficient_closed_form() {
        let g = Grid::new(2, 16).unwrap();
        let f = TorusField::from_trig(g, &[(vec![1, 0], 1.0, 0.0)]).unwrap();
        let a = CoefficientField::identity(2);
        let s = solve_resolvent(&a, 0.25, &f, 1e-12, false).unwrap();
        let want = f.scaled(1.0 / (1.0 + 4.0 * PI * PI));
        assert!(s.u.sub(&want).unwrap().l2_norm() < 1e-12);
        let h = solve_homogenized(&[1.0, 0.0, 0.0, 1.0], &f, false).unwrap();
        assert!(h.sub(&want).unwrap().l2_norm() < 1e-15);
    }

    #[test]
    fn skew_part_of_a0_is_invisible() {
        let g = Grid::new(2, 8).unwrap();
        let f = TorusField::from_trig(g, &[(vec![1, 2], 0.3, 0.4), (vec![0, 1], 1.0, 0.0)]).unwrap();
        let u1 = solve_homogenized(&[1.5, 0.2, 0.2, 2.0], &f, false).unwrap();
        let u2 = solve_homogenized(&[1.5, 0.9, -0.5, 2.0], &f, false).unwrap();
        assert!(u1.sub(&u2).unwrap().l2_norm() < 1e-15);
        assert!(matches!(
            solve_homogenized(&[1.0, 0.0, 0.0, -1.0], &f, false),
            Err(HomogError::NonElliptic { .. })
        ));
    }

    #[test]
    fn coarse_grid_rejected() {
        let a = CoefficientField::from_trig(
            2,
            vec![
                vec![(vec![0, 0], 2.0, 0.0), (vec![1, 0], 0.0, 1.0)],
                vec![],
                vec![],
                vec![(vec![0, 0], 2.0, 0.0)],
            ],
        )
        .unwrap();
        let f = TorusField::from_trig(Grid::new(2, 16).unwrap(), &[(vec![1, 0], 1.0, 0.0)]).unwrap();
        assert!(matches!(
            solve_resolvent(&a, 1.0 / 8.0, &f, 1e-10, false),
            Err(HomogError::GridTooCoarse(_))
        ));
    }

    #[test]
    fn sign_parsing() {
        assert_eq!("paper-2121".parse::<LSign>().unwrap(), LSign::Paper2121);
        assert!("minus".parse::<LSign>().is_err());
        assert_eq!(LSign::Paper3250.flipped().factor(), -1.0);
    }
}
