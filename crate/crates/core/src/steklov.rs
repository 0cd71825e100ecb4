//! Steklov averaging `S^ε φ(x) = ∫_□ φ(x − εω) dω` as a Fourier multiplier,
//! Sobolev norms, and evaluators for the smoothing lemmas with ε-periodic
//! factors.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{HomogError, Result};
use crate::field::TorusField;
use crate::grid::{Grid, MAX_DIM};

#[inline]
fn sinc(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        t.sin() / t
    }
}

/// Symbol `∏_j sinc(π ε k_j)` of the Steklov average.
pub fn steklov_symbol(eps: f64, k: &[f64]) -> f64 {
    k.iter().map(|&kj| sinc(PI * eps * kj)).product()
}

pub fn steklov_apply(u: &TorusField, eps: f64) -> Result<TorusField> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(HomogError::BadEps(eps));
    }
    Ok(u.apply_symbol(|k| Complex64::new(steklov_symbol(eps, k), 0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms {
    pub l2: f64,
    pub h1: f64,
    pub h_minus1: f64,
}

/// `L²`, `H¹` and `H⁻¹` norms with weights `(1 + |2πk|²)^{±1}`.
pub fn norms(u: &TorusField) -> Norms {
    Norms {
        l2: u.l2_norm(),
        h1: h1_norm(u),
        h_minus1: h_minus1_norm(u),
    }
}

pub fn h1_norm(u: &TorusField) -> f64 {
    u.weighted_norm(|k2| 1.0 + 4.0 * PI * PI * k2)
}

pub fn h_minus1_norm(u: &TorusField) -> f64 {
    u.weighted_norm(|k2| 1.0 / (1.0 + 4.0 * PI * PI * k2))
}

/// Exact torus mean of a product of band-limited fields, evaluated on a
/// physical grid fine enough that no harmonic aliases onto the zero mode.
pub fn exact_mean(factors: &[&TorusField]) -> Result<f64> {
    let first = factors
        .first()
        .ok_or_else(|| HomogError::DimensionMismatch("empty product".into()))?;
    let total: i64 = factors.iter().map(|f| f.band()).sum();
    let mut p = (total as usize + 1).max(factors.iter().map(|f| f.n()).max().unwrap_or(2));
    p += p % 2;
    let mut acc: Option<Vec<f64>> = None;
    for f in factors {
        if f.dim() != first.dim() {
            return Err(HomogError::DimensionMismatch("factors of different dimension".into()));
        }
        let v = f.to_physical(p)?;
        acc = Some(match acc {
            None => v,
            Some(mut a) => {
                a.iter_mut().zip(&v).for_each(|(x, y)| *x *= y);
                a
            }
        });
    }
    let a = acc.expect("at least one factor");
    Ok(a.iter().sum::<f64>() / a.len() as f64)
}

/// Which smoothing estimate to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LemmaKind {
    /// `‖b_ε S^ε φ‖² ≤ ⟨b²⟩‖φ‖²`.
    L41,
    /// `(b_ε S^ε φ, Φ) ≤ Cε⟨b²⟩^½‖φ‖‖∇Φ‖`, `⟨b⟩ = 0`.
    L42,
    /// `(b_ε S^ε φ, S^ε ψ) ≤ Cε²⟨b²⟩^½‖∇φ‖‖∇ψ‖`, `⟨b⟩ = 0`.
    L44,
    /// `(α_ε S^ε φ, β_ε S^ε ψ) ≤ Cε²⟨α²⟩^½⟨β²⟩^½‖∇φ‖‖∇ψ‖`, `⟨αβ⟩ = 0`.
    L45,
    /// `|(α_ε S^ε φ, β_ε S^ε ψ) − ⟨αβ⟩(φ,ψ)| ≤ Cε⟨α²⟩^½⟨β²⟩^½‖φ‖‖∇ψ‖`.
    L46,
    /// `‖S^ε φ − φ‖ ≤ (√d/2) ε‖∇φ‖`.
    M2,
    /// `‖S^ε φ − φ‖_{H⁻¹} ≤ (√d/2) ε‖φ‖`.
    M3,
    /// `‖S^ε φ − φ‖ ≤ Cε²‖∇²φ‖`.
    M7,
}

impl LemmaKind {
    pub const ALL: [LemmaKind; 8] = [
        LemmaKind::L41,
        LemmaKind::L42,
        LemmaKind::L44,
        LemmaKind::L45,
        LemmaKind::L46,
        LemmaKind::M2,
        LemmaKind::M3,
        LemmaKind::M7,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LemmaKind::L41 => "L41",
            LemmaKind::L42 => "L42",
            LemmaKind::L44 => "L44",
            LemmaKind::L45 => "L45",
            LemmaKind::L46 => "L46",
            LemmaKind::M2 => "M2",
            LemmaKind::M3 => "M3",
            LemmaKind::M7 => "M7",
        }
    }

    /// Power of ε in the bound.
    pub fn order(self) -> u32 {
        match self {
            LemmaKind::L41 => 0,
            LemmaKind::L42 | LemmaKind::L46 | LemmaKind::M2 | LemmaKind::M3 => 1,
            LemmaKind::L44 | LemmaKind::L45 | LemmaKind::M7 => 2,
        }
    }

    /// The explicit constant, where the estimate has one.
    pub fn explicit_constant(self, dim: usize) -> Option<f64> {
        match self {
            LemmaKind::L41 => Some(1.0),
            LemmaKind::M2 | LemmaKind::M3 => Some((dim as f64).sqrt() / 2.0),
            _ => None,
        }
    }
}

impl fmt::Display for LemmaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LemmaKind {
    type Err = HomogError;
    fn from_str(s: &str) -> Result<Self> {
        LemmaKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| HomogError::Parse(format!("unknown lemma kind `{s}`")))
    }
}

/// Fields entering a lemma. Periodic factors are cell functions (their
/// grid is the unit cell); `phi`, `psi` live on the torus grid.
#[derive(Debug, Clone)]
pub struct LemmaInputs {
    pub phi: TorusField,
    pub psi: Option<TorusField>,
    pub alpha: Option<TorusField>,
    pub beta: Option<TorusField>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaValue {
    pub lhs: f64,
    /// The bound with its constant stripped.
    pub rhs_part: f64,
}

impl LemmaValue {
    pub fn ratio(&self) -> f64 {
        self.lhs / self.rhs_part
    }
}

/// `m = 1/ε`, checking it is an integer dividing the torus grid.
pub fn reciprocal_eps(eps: f64, n: usize) -> Result<usize> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(HomogError::BadEps(eps));
    }
    let inv = 1.0 / eps;
    let m = inv.round();
    if (inv - m).abs() > 1e-9 * inv {
        return Err(HomogError::IncommensurateEps {
            eps,
            reason: "1/eps is not an integer".into(),
        });
    }
    let m = m as usize;
    if !n.is_multiple_of(m) {
        return Err(HomogError::IncommensurateEps {
            eps,
            reason: format!("1/eps = {m} does not divide the grid size {n}"),
        });
    }
    Ok(m)
}

/// `x ↦ b(x/ε)` on a grid large enough to keep every harmonic.
fn dilate_factor(b: &TorusField, m: usize) -> Result<TorusField> {
    let need = 2 * (b.band() as usize * m + 1);
    b.dilated(m, need + need % 2)
}

fn require<'a>(f: &'a Option<TorusField>, what: &str, kind: LemmaKind) -> Result<&'a TorusField> {
    f.as_ref()
        .ok_or_else(|| HomogError::InvalidConfig(format!("{kind} needs `{what}`")))
}

fn cell_mean_sq(b: &TorusField) -> f64 {
    b.l2_norm().powi(2)
}

pub fn lemma_evaluator(kind: LemmaKind, inputs: &LemmaInputs, eps: f64) -> Result<LemmaValue> {
    let phi = &inputs.phi;
    let m = reciprocal_eps(eps, phi.n())?;
    let s_phi = steklov_apply(phi, eps)?;
    let value = match kind {
        LemmaKind::M2 => LemmaValue {
            lhs: s_phi.sub(phi)?.l2_norm(),
            rhs_part: eps * phi.gradient_norm(),
        },
        LemmaKind::M3 => LemmaValue {
            lhs: h_minus1_norm(&s_phi.sub(phi)?),
            rhs_part: eps * phi.l2_norm(),
        },
        LemmaKind::M7 => LemmaValue {
            lhs: s_phi.sub(phi)?.l2_norm(),
            rhs_part: eps * eps * phi.hessian_norm(),
        },
        LemmaKind::L41 => {
            let b = require(&inputs.alpha, "alpha", kind)?;
            let be = dilate_factor(b, m)?;
            LemmaValue {
                lhs: exact_mean(&[&be, &be, &s_phi, &s_phi])?,
                rhs_part: cell_mean_sq(b) * phi.l2_norm().powi(2),
            }
        }
        LemmaKind::L42 => {
            let b = require(&inputs.alpha, "alpha", kind)?;
            let big_phi = require(&inputs.psi, "psi", kind)?;
            check_zero_mean(b, kind)?;
            let be = dilate_factor(b, m)?;
            LemmaValue {
                lhs: exact_mean(&[&be, &s_phi, big_phi])?.abs(),
                rhs_part: eps * cell_mean_sq(b).sqrt() * phi.l2_norm() * big_phi.gradient_norm(),
            }
        }
        LemmaKind::L44 => {
            let b = require(&inputs.alpha, "alpha", kind)?;
            let psi = require(&inputs.psi, "psi", kind)?;
            check_zero_mean(b, kind)?;
            let be = dilate_factor(b, m)?;
            let s_psi = steklov_apply(psi, eps)?;
            LemmaValue {
                lhs: exact_mean(&[&be, &s_phi, &s_psi])?.abs(),
                rhs_part: eps * eps
                    * cell_mean_sq(b).sqrt()
                    * phi.gradient_norm()
                    * psi.gradient_norm(),
            }
        }
        LemmaKind::L45 | LemmaKind::L46 => {
            let alpha = require(&inputs.alpha, "alpha", kind)?;
            let beta = require(&inputs.beta, "beta", kind)?;
            let psi = require(&inputs.psi, "psi", kind)?;
            let ab = exact_mean(&[alpha, beta])?;
            let scale = cell_mean_sq(alpha).sqrt() * cell_mean_sq(beta).sqrt();
            if kind == LemmaKind::L45 && ab.abs() > 1e-12 * scale.max(1.0) {
                return Err(HomogError::InvalidConfig(format!(
                    "L45 needs <alpha beta> = 0, got {ab:.3e}"
                )));
            }
            let ae = dilate_factor(alpha, m)?;
            let be = dilate_factor(beta, m)?;
            let s_psi = steklov_apply(psi, eps)?;
            let form = exact_mean(&[&ae, &s_phi, &be, &s_psi])?;
            if kind == LemmaKind::L45 {
                LemmaValue {
                    lhs: form.abs(),
                    rhs_part: eps * eps * scale * phi.gradient_norm() * psi.gradient_norm(),
                }
            } else {
                LemmaValue {
                    lhs: (form - ab * phi.inner(psi)).abs(),
                    rhs_part: eps * scale * phi.l2_norm() * psi.gradient_norm(),
                }
            }
        }
    };
    Ok(value)
}

fn check_zero_mean(b: &TorusField, kind: LemmaKind) -> Result<()> {
    if b.mean().abs() > 1e-12 * b.l2_norm().max(1.0) {
        return Err(HomogError::InvalidConfig(format!(
            "{kind} needs a mean-zero factor, got mean {:.3e}",
            b.mean()
        )));
    }
    Ok(())
}

/// Field with the critical spectrum `|k|^{-p}(1 + 0.3u_k)` on every retained
/// mode, `u_k = u_{-k}` uniform in `[-1, 1]`. The value at each wave vector
/// depends only on `(seed, k)`, so refining the grid only adds modes.
pub fn power_law_field(grid: Grid, p: f64, seed: u64) -> TorusField {
    let d = grid.dim();
    let mut f = TorusField::zeros(grid);
    for flat in 1..grid.len() {
        let Some(k) = grid.wavevector(flat) else { continue };
        let k2: i64 = k[..d].iter().map(|v| v * v).sum();
        // canonical representative of {k, -k}
        let canon = if k[..d] > [-k[0], -k[1], -k[2]][..d] {
            k
        } else {
            [-k[0], -k[1], -k[2]]
        };
        let u = mode_uniform(seed, &canon);
        let amp = (k2 as f64).powf(-p / 2.0) * (1.0 + 0.3 * u);
        f.coeffs_mut()[flat] = Complex64::new(amp, 0.0);
    }
    f
}

fn mode_uniform(seed: u64, k: &[i64; MAX_DIM]) -> f64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &kj in k {
        h = (h ^ (kj as u64)).wrapping_mul(0x1000_0000_01b3).rotate_left(29);
    }
    ChaCha8Rng::seed_from_u64(h).gen_range(-1.0..1.0)
}

/// Cell factor `Σ a cos 2πk·y + b sin 2πk·y` on a small cell grid.
pub fn cell_factor(dim: usize, terms: &[(Vec<i64>, f64, f64)]) -> Result<TorusField> {
    let band = terms
        .iter()
        .flat_map(|(k, _, _)| k.iter().map(|v| v.unsigned_abs() as usize))
        .max()
        .unwrap_or(0);
    let n = 2 * band + 2;
    TorusField::from_trig(Grid::new(dim, n)?, terms)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaRow {
    pub kind: LemmaKind,
    pub eps: f64,
    pub lhs: f64,
    pub rhs_part: f64,
    pub ratio: f64,
}

/// Battery configuration: inverse ε values, dimension, seed and the torus
/// grid multiplier (`n = multiplier/ε`).
#[derive(Debug, Clone)]
pub struct LemmaBattery {
    pub dim: usize,
    pub inverse_eps: Vec<usize>,
    pub multiplier: usize,
    pub seed: u64,
}

impl Default for LemmaBattery {
    fn default() -> Self {
        Self {
            dim: 2,
            inverse_eps: vec![4, 8, 16, 32],
            multiplier: 8,
            seed: 7,
        }
    }
}

impl LemmaBattery {
    /// Run every lemma kind for every ε.
    pub fn run(&self) -> Result<Vec<LemmaRow>> {
        let d = self.dim;
        let mut e1 = vec![0i64; d];
        e1[0] = 1;
        let mut e1x2 = vec![0i64; d];
        e1x2[0] = 2;
        let cos1 = cell_factor(d, &[(e1.clone(), 1.0, 0.0)])?;
        let cos2 = cell_factor(d, &[(e1x2, 1.0, 0.0)])?;
        let mut mixed_terms = vec![(vec![0i64; d], 1.0, 0.0), (e1.clone(), 0.5, 0.0)];
        if d > 1 {
            let mut e2 = vec![0i64; d];
            e2[1] = 1;
            mixed_terms.push((e2, 0.0, 0.7));
        }
        let mixed = cell_factor(d, &mixed_terms)?;
        let smooth_terms: Vec<(Vec<i64>, f64, f64)> = (0..d)
            .map(|a| {
                let mut k = vec![0i64; d];
                k[a] = 1;
                (k, 0.6, 0.2 * (a as f64 + 1.0))
            })
            .collect();
        let eps2 = (d as f64 + 2.0) / 2.0;
        let eps1 = (d as f64 + 1.0) / 2.0;
        let mut rows = Vec::new();
        for &m in &self.inverse_eps {
            let eps = 1.0 / m as f64;
            let grid = Grid::new(d, self.multiplier * m)?;
            let phi2 = power_law_field(grid, eps2, self.seed);
            let psi2 = power_law_field(grid, eps2, self.seed + 1);
            let phi1 = power_law_field(grid, eps1, self.seed);
            let psi1 = power_law_field(grid, eps1, self.seed + 1);
            let smooth = TorusField::from_trig(grid, &smooth_terms)?;
            for kind in LemmaKind::ALL {
                let inputs = match kind {
                    LemmaKind::L41 => LemmaInputs {
                        phi: phi1.clone(),
                        psi: None,
                        alpha: Some(mixed.clone()),
                        beta: None,
                    },
                    LemmaKind::L42 => LemmaInputs {
                        phi: phi1.clone(),
                        psi: Some(psi1.clone()),
                        alpha: Some(cos1.clone()),
                        beta: None,
                    },
                    LemmaKind::L44 => LemmaInputs {
                        phi: phi2.clone(),
                        psi: Some(psi2.clone()),
                        alpha: Some(cos1.clone()),
                        beta: None,
                    },
                    LemmaKind::L45 => LemmaInputs {
                        phi: phi2.clone(),
                        psi: Some(psi2.clone()),
                        alpha: Some(cos1.clone()),
                        beta: Some(cos2.clone()),
                    },
                    LemmaKind::L46 => LemmaInputs {
                        phi: phi1.clone(),
                        psi: Some(psi1.clone()),
                        alpha: Some(cos1.clone()),
                        beta: Some(cos1.clone()),
                    },
                    LemmaKind::M2 | LemmaKind::M3 => LemmaInputs {
                        phi: phi1.clone(),
                        psi: None,
                        alpha: None,
                        beta: None,
                    },
                    LemmaKind::M7 => LemmaInputs {
                        phi: smooth.clone(),
                        psi: None,
                        alpha: None,
                        beta: None,
                    },
                };
                let v = lemma_evaluator(kind, &inputs, eps)?;
                rows.push(LemmaRow {
                    kind,
                    eps,
                    lhs: v.lhs,
                    rhs_part: v.rhs_part,
                    ratio: v.ratio(),
                });
            }
        }
        Ok(rows)
    }
}

/// CSV with header `kind,eps,lhs,rhs_part,ratio`.
pub fn lemma_csv(rows: &[LemmaRow]) -> String {
    let mut out = String::from("kind,eps,lhs,rhs_part,ratio\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e}\n",
            r.kind, r.eps, r.lhs, r.rhs_part, r.ratio
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_modes_are_annihilated() {
        let g = Grid::new(2, 32).unwrap();
        let u = TorusField::from_trig(g, &[(vec![8, 0], 1.0, 0.0), (vec![0, 0], 0.5, 0.0)]).unwrap();
        let s = steklov_apply(&u, 0.125).unwrap();
        assert!((s.mode(&[8, 0])).norm() < 1e-16);
        assert_eq!(s.mean(), 0.5);
    }

    #[test]
    fn bad_eps() {
        let u = TorusField::zeros(Grid::new(1, 8).unwrap());
        assert!(matches!(steklov_apply(&u, 0.0), Err(HomogError::BadEps(_))));
        assert!(matches!(steklov_apply(&u, -0.1), Err(HomogError::BadEps(_))));
    }

    #[test]
    fn single_mode_norms() {
        let g = Grid::new(2, 8).unwrap();
        let u = TorusField::from_trig(g, &[(vec![1, 0], 1.0, 0.0)]).unwrap();
        let n = norms(&u);
        let w = 1.0 + 4.0 * PI * PI;
        assert!((n.l2 - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((n.h1 - (w / 2.0).sqrt()).abs() < 1e-13);
        assert!((n.h_minus1 - 1.0 / (2.0 * w).sqrt()).abs() < 1e-15);
        let one = norms(&TorusField::constant(g, 1.0));
        assert_eq!((one.l2, one.h1, one.h_minus1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn incommensurate_eps_rejected() {
        let g = Grid::new(2, 24).unwrap();
        let inputs = LemmaInputs {
            phi: power_law_field(g, 2.0, 1),
            psi: None,
            alpha: None,
            beta: None,
        };
        assert!(matches!(
            lemma_evaluator(LemmaKind::M2, &inputs, 1.0 / 5.0),
            Err(HomogError::IncommensurateEps { .. })
        ));
        assert!(matches!(
            lemma_evaluator(LemmaKind::M2, &inputs, 0.3),
            Err(HomogError::IncommensurateEps { .. })
        ));
        assert!(lemma_evaluator(LemmaKind::M2, &inputs, 1.0 / 6.0).is_ok());
    }

    #[test]
    fn power_law_field_is_nested_under_refinement() {
        let a = power_law_field(Grid::new(2, 16).unwrap(), 2.0, 3);
        let b = power_law_field(Grid::new(2, 32).unwrap(), 2.0, 3);
        assert_eq!(a.mode(&[3, -5]), b.mode(&[3, -5]));
        assert!(a.conjugate_symmetry_defect() < 1e-15);
    }
}
