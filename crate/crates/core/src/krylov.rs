//! Matrix-free Krylov solvers on complex coefficient vectors.
//!
//! Both solvers take a left preconditioner and stop once the preconditioned
//! residual satisfies `‖P r‖ ≤ tol · ‖P b‖`.

use rustfft::num_complex::Complex64;

use crate::error::{HomogError, Result};

pub trait LinearMap {
    fn len(&self) -> usize;
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]);
    fn precondition(&self, r: &[Complex64], z: &mut [Complex64]);
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            restart: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOutcome {
    pub iterations: usize,
    /// Final `‖P r‖ / ‖P b‖`.
    pub residual: f64,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn zeros(n: usize) -> Vec<Complex64> {
    vec![Complex64::new(0.0, 0.0); n]
}

/// Preconditioned conjugate gradients for a Hermitian positive operator.
pub fn conjugate_gradient<M: LinearMap + ?Sized>(
    op: &M,
    b: &[Complex64],
    x: &mut [Complex64],
    opts: &KrylovOptions,
) -> Result<KrylovOutcome> {
    let n = op.len();
    let mut r = zeros(n);
    let mut ap = zeros(n);
    op.apply(x, &mut ap);
    r.iter_mut().zip(b).zip(&ap).for_each(|((ri, bi), ai)| *ri = bi - ai);
    let mut z = zeros(n);
    op.precondition(b, &mut z);
    let ref_norm = norm(&z);
    if ref_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        return Ok(KrylovOutcome { iterations: 0, residual: 0.0 });
    }
    op.precondition(&r, &mut z);
    let mut rel = norm(&z) / ref_norm;
    let mut p = z.clone();
    let mut rz = dot(&r, &z).re;
    for it in 0..opts.max_iter {
        if rel <= opts.tol {
            return Ok(KrylovOutcome { iterations: it, residual: rel });
        }
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap).re;
        if pap <= 0.0 {
            return Err(HomogError::NoConvergence { iterations: it, residual: rel });
        }
        let alpha = rz / pap;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += pi * alpha);
        r.iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= ai * alpha);
        op.precondition(&r, &mut z);
        rel = norm(&z) / ref_norm;
        let rz_new = dot(&r, &z).re;
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + *pi * beta);
    }
    if rel <= opts.tol {
        return Ok(KrylovOutcome { iterations: opts.max_iter, residual: rel });
    }
    Err(HomogError::NoConvergence { iterations: opts.max_iter, residual: rel })
}

/// Restarted GMRES with left preconditioning (minimizes `‖P r‖`).
pub fn gmres<M: LinearMap + ?Sized>(
    op: &M,
    b: &[Complex64],
    x: &mut [Complex64],
    opts: &KrylovOptions,
) -> Result<KrylovOutcome> {
    let n = op.len();
    let m = opts.restart.max(1);
    let mut tmp = zeros(n);
    let mut w = zeros(n);
    op.precondition(b, &mut w);
    let ref_norm = norm(&w);
    if ref_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        return Ok(KrylovOutcome { iterations: 0, residual: 0.0 });
    }
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(m + 1);
    let mut h = vec![vec![Complex64::new(0.0, 0.0); m]; m + 1];
    let mut cs = vec![0.0f64; m];
    let mut sn = vec![Complex64::new(0.0, 0.0); m];
    let mut g = vec![Complex64::new(0.0, 0.0); m + 1];
    let mut iterations = 0;
    let mut rel;
    loop {
        // r = P (b - A x)
        op.apply(x, &mut tmp);
        tmp.iter_mut().zip(b).for_each(|(t, bi)| *t = bi - *t);
        op.precondition(&tmp, &mut w);
        let beta = norm(&w);
        rel = beta / ref_norm;
        if rel <= opts.tol {
            return Ok(KrylovOutcome { iterations, residual: rel });
        }
        if iterations >= opts.max_iter {
            return Err(HomogError::NoConvergence { iterations, residual: rel });
        }
        basis.clear();
        basis.push(w.iter().map(|v| v / beta).collect());
        g.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        g[0] = Complex64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..m {
            op.apply(&basis[k], &mut tmp);
            op.precondition(&tmp, &mut w);
            // modified Gram-Schmidt
            for (i, v) in basis.iter().enumerate() {
                let hik = dot(v, &w);
                h[i][k] = hik;
                w.iter_mut().zip(v).for_each(|(wj, vj)| *wj -= vj * hik);
            }
            let hn = norm(&w);
            h[k + 1][k] = Complex64::new(hn, 0.0);
            for i in 0..k {
                let t = h[i][k] * cs[i] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i].conj() * h[i][k] + h[i + 1][k] * cs[i];
                h[i][k] = t;
            }
            let (c, s, r) = givens(h[k][k], h[k + 1][k]);
            cs[k] = c;
            sn[k] = s;
            h[k][k] = r;
            h[k + 1][k] = Complex64::new(0.0, 0.0);
            g[k + 1] = -s.conj() * g[k];
            g[k] *= c;
            iterations += 1;
            k_used = k + 1;
            rel = g[k + 1].norm() / ref_norm;
            if rel <= opts.tol || iterations >= opts.max_iter || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // back substitution
        let mut y = vec![Complex64::new(0.0, 0.0); k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            x.iter_mut().zip(&basis[j]).for_each(|(xi, vi)| *xi += vi * yj);
        }
    }
}

/// Complex Givens rotation zeroing `b` in `(a, b)`.
fn givens(a: Complex64, b: Complex64) -> (f64, Complex64, Complex64) {
    let an = a.norm();
    let bn = b.norm();
    if bn == 0.0 {
        return (1.0, Complex64::new(0.0, 0.0), a);
    }
    if an == 0.0 {
        return (0.0, (b / bn).conj(), Complex64::new(bn, 0.0));
    }
    let r = an.hypot(bn);
    let phase = a / an;
    let c = an / r;
    let s = phase * b.conj() / r;
    (c, s, phase * r)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Dense {
        a: Vec<Vec<Complex64>>,
        diag_pre: bool,
    }

    impl LinearMap for Dense {
        fn len(&self) -> usize {
            self.a.len()
        }
        fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
            for (i, row) in self.a.iter().enumerate() {
                y[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
            }
        }
        fn precondition(&self, r: &[Complex64], z: &mut [Complex64]) {
            for i in 0..r.len() {
                z[i] = if self.diag_pre { r[i] / self.a[i][i] } else { r[i] };
            }
        }
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn residual(op: &Dense, b: &[Complex64], x: &[Complex64]) -> f64 {
        let mut y = zeros(b.len());
        op.apply(x, &mut y);
        y.iter().zip(b).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn cg_solves_hermitian_system() {
        let n = 12;
        let mut a = vec![vec![c(0.0, 0.0); n]; n];
        for i in 0..n {
            a[i][i] = c(4.0 + i as f64, 0.0);
            if i + 1 < n {
                a[i][i + 1] = c(-1.0, 0.5);
                a[i + 1][i] = c(-1.0, -0.5);
            }
        }
        let op = Dense { a, diag_pre: true };
        let b: Vec<_> = (0..n).map(|i| c(i as f64, 1.0)).collect();
        let mut x = zeros(n);
        let out = conjugate_gradient(&op, &b, &mut x, &KrylovOptions { tol: 1e-13, ..Default::default() }).unwrap();
        assert!(out.iterations <= n + 2);
        assert!(residual(&op, &b, &x) < 1e-10);
    }

    #[test]
    fn gmres_solves_nonsymmetric_system_with_restarts() {
        let n = 30;
        let mut a = vec![vec![c(0.0, 0.0); n]; n];
        for i in 0..n {
            a[i][i] = c(3.0, 0.0);
            if i + 1 < n {
                a[i][i + 1] = c(1.5, 0.0);
                a[i + 1][i] = c(-1.0, 0.2);
            }
            a[i][(i * 7) % n] += c(0.1, 0.0);
        }
        let op = Dense { a, diag_pre: false };
        let b: Vec<_> = (0..n).map(|i| c((i as f64).sin(), 0.0)).collect();
        let mut x = zeros(n);
        let opts = KrylovOptions { tol: 1e-12, max_iter: 500, restart: 5 };
        gmres(&op, &b, &mut x, &opts).unwrap();
        assert!(residual(&op, &b, &x) < 1e-10);
    }

    #[test]
    fn iteration_cap_reports_failure() {
        let n = 20;
        let mut a = vec![vec![c(0.0, 0.0); n]; n];
        for i in 0..n {
            a[i][i] = c(1.0 + i as f64 * 10.0, 0.0);
        }
        let op = Dense { a, diag_pre: false };
        let b = vec![c(1.0, 0.0); n];
        let mut x = zeros(n);
        let opts = KrylovOptions { tol: 1e-14, max_iter: 3, restart: 10 };
        match gmres(&op, &b, &mut x, &opts) {
            Err(HomogError::NoConvergence { iterations, .. }) => assert_eq!(iterations, 3),
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }
}
