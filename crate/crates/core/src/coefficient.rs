//! Periodic coefficient matrices `a(y)` given by finite Fourier series.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{HomogError, Result};
use crate::grid::{fft_nd, signed_wavenumber, Grid, MAX_DIM};

/// Relative tolerance for the conjugate symmetry check of parsed specs.
const REALITY_TOL: f64 = 1e-12;

/// One term `amp·exp(2πi k·y)` of a matrix entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierMode {
    pub k: [i64; MAX_DIM],
    pub amp: Complex64,
}

/// A real 1-periodic `d×d` matrix field, each entry a trigonometric
/// polynomial. Entries are stored in canonical order (sorted, merged,
/// zero terms dropped) so equal fields compare and hash equal.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    dim: usize,
    entries: Vec<Vec<FourierMode>>,
}

/// File form of a mode: `{ k = [..], re = .., im = .. }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub k: Vec<i64>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Grid samples of every entry on `y = -1/2 + i/n`, row-major per entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub samples: Vec<Vec<Vec<f64>>>,
}

/// Coefficient spec file contents (TOML or JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub dim: usize,
    #[serde(default = "default_real")]
    pub real: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<Vec<Vec<ModeSpec>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

fn default_real() -> bool {
    true
}

impl CoefficientSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Read a spec file; `.json` is parsed as JSON, anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HomogError::Parse(e.to_string()))
    }

    pub fn build(&self) -> Result<CoefficientField> {
        if !self.real {
            return Err(HomogError::InvalidSpec(
                "only real-valued coefficient fields are supported".into(),
            ));
        }
        match (&self.entries, &self.grid) {
            (Some(_), Some(_)) => Err(HomogError::InvalidSpec(
                "give either `entries` or `grid`, not both".into(),
            )),
            (None, None) => Err(HomogError::InvalidSpec(
                "spec needs `entries` or `grid`".into(),
            )),
            (Some(entries), None) => {
                let d = self.dim;
                check_square(entries.len(), entries.iter().map(Vec::len), d)?;
                let mut modes = vec![Vec::new(); d * d];
                for (i, row) in entries.iter().enumerate() {
                    for (j, list) in row.iter().enumerate() {
                        for m in list {
                            if m.k.len() != d {
                                return Err(HomogError::InvalidSpec(format!(
                                    "entry ({i},{j}): wave vector {:?} has length {} in dimension {d}",
                                    m.k,
                                    m.k.len()
                                )));
                            }
                            modes[i * d + j].push((m.k.clone(), Complex64::new(m.re, m.im)));
                        }
                    }
                }
                CoefficientField::from_modes(d, modes)
            }
            (None, Some(g)) => {
                let d = self.dim;
                check_square(g.samples.len(), g.samples.iter().map(Vec::len), d)?;
                let flat: Vec<Vec<f64>> = g.samples.iter().flatten().cloned().collect();
                CoefficientField::from_grid(d, g.n, &flat)
            }
        }
    }
}

fn check_square(rows: usize, cols: impl Iterator<Item = usize>, d: usize) -> Result<()> {
    if rows != d {
        return Err(HomogError::InvalidSpec(format!("{rows} rows for dimension {d}")));
    }
    for (i, c) in cols.enumerate() {
        if c != d {
            return Err(HomogError::InvalidSpec(format!("row {i} has {c} entries, expected {d}")));
        }
    }
    Ok(())
}

fn pad_k(k: &[i64]) -> [i64; MAX_DIM] {
    let mut out = [0; MAX_DIM];
    out[..k.len()].copy_from_slice(k);
    out
}

fn canonical(list: impl IntoIterator<Item = ([i64; MAX_DIM], Complex64)>) -> Vec<FourierMode> {
    let mut merged: BTreeMap<[i64; MAX_DIM], Complex64> = BTreeMap::new();
    for (k, amp) in list {
        *merged.entry(k).or_default() += amp;
    }
    merged
        .into_iter()
        .filter(|(_, a)| a.norm() > 0.0)
        .map(|(k, amp)| FourierMode { k, amp })
        .collect()
}

impl CoefficientField {
    /// Build from per-entry mode lists in row-major order (`d*d` lists).
    /// Rejects lists that are not conjugate symmetric.
    pub fn from_modes(dim: usize, entries: Vec<Vec<(Vec<i64>, Complex64)>>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(HomogError::InvalidSpec(format!("dimension {dim} not in 1..={MAX_DIM}")));
        }
        if entries.len() != dim * dim {
            return Err(HomogError::InvalidSpec(format!(
                "{} entries for a {dim}x{dim} matrix",
                entries.len()
            )));
        }
        let mut out = Vec::with_capacity(dim * dim);
        for (e, list) in entries.into_iter().enumerate() {
            let mut padded = Vec::with_capacity(list.len());
            for (k, amp) in list {
                if k.len() != dim {
                    return Err(HomogError::InvalidSpec(format!(
                        "wave vector {k:?} in dimension {dim}"
                    )));
                }
                padded.push((pad_k(&k), amp));
            }
            let modes = canonical(padded);
            check_reality(&modes, e / dim, e % dim)?;
            out.push(modes);
        }
        Ok(Self { dim, entries: out })
    }

    /// Real cosine/sine form: entry `(i,j)` is `Σ a cos 2πk·y + b sin 2πk·y`.
    pub fn from_trig(dim: usize, entries: Vec<Vec<(Vec<i64>, f64, f64)>>) -> Result<Self> {
        let modes = entries
            .into_iter()
            .map(|terms| {
                let mut list = Vec::new();
                for (k, a, b) in terms {
                    if k.iter().all(|&kj| kj == 0) {
                        list.push((k, Complex64::new(a, 0.0)));
                    } else {
                        let amp = Complex64::new(a / 2.0, -b / 2.0);
                        list.push((k.iter().map(|kj| -kj).collect(), amp.conj()));
                        list.push((k, amp));
                    }
                }
                list
            })
            .collect();
        Self::from_modes(dim, modes)
    }

    /// Constant matrix field (row-major).
    pub fn constant(dim: usize, matrix: &[f64]) -> Result<Self> {
        if matrix.len() != dim * dim {
            return Err(HomogError::InvalidSpec(format!(
                "{} values for a {dim}x{dim} matrix",
                matrix.len()
            )));
        }
        let zero = vec![0i64; dim];
        Self::from_modes(
            dim,
            matrix
                .iter()
                .map(|&v| vec![(zero.clone(), Complex64::new(v, 0.0))])
                .collect(),
        )
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = 1.0;
        }
        Self::constant(dim, &m).expect("identity is a valid field")
    }

    /// Interpolate grid samples taken at `y = -1/2 + i/n` (axis 0 slowest).
    /// The Nyquist harmonic is split evenly between `±n/2`.
    pub fn from_grid(dim: usize, n: usize, samples: &[Vec<f64>]) -> Result<Self> {
        let grid = Grid::new(dim, n)?;
        if samples.len() != dim * dim {
            return Err(HomogError::InvalidSpec(format!(
                "{} sample arrays for a {dim}x{dim} matrix",
                samples.len()
            )));
        }
        let fft = rustfft::FftPlanner::new().plan_fft_forward(n);
        let scale = 1.0 / grid.len() as f64;
        let mut entries = Vec::with_capacity(dim * dim);
        for s in samples {
            if s.len() != grid.len() {
                return Err(HomogError::InvalidSpec(format!(
                    "{} samples for a grid of {}",
                    s.len(),
                    grid.len()
                )));
            }
            let mut buf: Vec<Complex64> = s.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fft_nd(&mut buf, grid, &*fft);
            let mut list = Vec::new();
            for (flat, c) in buf.iter().enumerate() {
                let idx = grid.unflatten(flat);
                // shift of the sample origin to -1/2 multiplies mode k by (-1)^k
                let parity: usize = idx[..dim].iter().sum();
                let sign = if parity.is_multiple_of(2) { 1.0 } else { -1.0 };
                let amp = c * scale * sign;
                if amp.norm() == 0.0 {
                    continue;
                }
                // expand each Nyquist axis into the pair ±n/2
                let mut variants: Vec<([i64; MAX_DIM], f64)> = vec![([0; MAX_DIM], 1.0)];
                for a in 0..dim {
                    let kw = signed_wavenumber(idx[a], n);
                    if idx[a] == n / 2 {
                        variants = variants
                            .into_iter()
                            .flat_map(|(k, w)| {
                                let mut kp = k;
                                kp[a] = kw;
                                let mut km = k;
                                km[a] = -kw;
                                [(kp, w * 0.5), (km, w * 0.5)]
                            })
                            .collect();
                    } else {
                        variants.iter_mut().for_each(|(k, _)| k[a] = kw);
                    }
                }
                for (k, w) in variants {
                    list.push((k[..dim].to_vec(), amp * w));
                }
            }
            entries.push(list);
        }
        let mut field = Self::from_modes_unchecked(dim, entries);
        field.clean(1e-15);
        Ok(field)
    }

    fn from_modes_unchecked(dim: usize, entries: Vec<Vec<(Vec<i64>, Complex64)>>) -> Self {
        Self {
            dim,
            entries: entries
                .into_iter()
                .map(|l| canonical(l.into_iter().map(|(k, a)| (pad_k(&k), a))))
                .collect(),
        }
    }

    /// Drop round-off terms below `rel` times the largest amplitude.
    fn clean(&mut self, rel: f64) {
        let top = self
            .entries
            .iter()
            .flatten()
            .map(|m| m.amp.norm())
            .fold(0.0, f64::max);
        for list in &mut self.entries {
            list.retain(|m| m.amp.norm() > rel * top);
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        CoefficientSpec::load(path)?.build()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Modes of entry `(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> &[FourierMode] {
        &self.entries[i * self.dim + j]
    }

    /// Spec file representation (Fourier form).
    pub fn to_spec(&self) -> CoefficientSpec {
        let d = self.dim;
        let entries = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        self.entry(i, j)
                            .iter()
                            .map(|m| ModeSpec {
                                k: m.k[..d].to_vec(),
                                re: m.amp.re,
                                im: m.amp.im,
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        CoefficientSpec {
            dim: d,
            real: true,
            entries: Some(entries),
            grid: None,
        }
    }

    /// Stable content digest of the canonical Fourier form.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(&self.to_spec()).expect("spec serializes");
        hex::encode(Sha256::digest(json))
    }

    /// `a(y)` as a row-major `d×d` array.
    pub fn evaluate(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.dim, "point dimension");
        self.entries
            .iter()
            .map(|list| {
                list.iter()
                    .map(|m| {
                        let phase: f64 = (0..self.dim).map(|a| m.k[a] as f64 * y[a]).sum();
                        (m.amp * Complex64::from_polar(1.0, 2.0 * PI * phase)).re
                    })
                    .sum()
            })
            .collect()
    }

    fn map_entries(&self, f: impl Fn(usize, usize) -> Vec<([i64; MAX_DIM], Complex64)>) -> Self {
        let d = self.dim;
        let mut entries = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                entries.push(canonical(f(i, j)));
            }
        }
        Self { dim: d, entries }
    }

    fn terms(&self, i: usize, j: usize) -> impl Iterator<Item = ([i64; MAX_DIM], Complex64)> + '_ {
        self.entry(i, j).iter().map(|m| (m.k, m.amp))
    }

    pub fn transpose(&self) -> Self {
        self.map_entries(|i, j| self.terms(j, i).collect())
    }

    /// `(a + aᵀ)/2` and `(a − aᵀ)/2`.
    pub fn split_symmetric(&self) -> (Self, Self) {
        let half = |s: f64| move |(k, a): ([i64; MAX_DIM], Complex64)| (k, a * s);
        let sym = self.map_entries(|i, j| {
            self.terms(i, j).map(half(0.5)).chain(self.terms(j, i).map(half(0.5))).collect()
        });
        let skew = self.map_entries(|i, j| {
            self.terms(i, j).map(half(0.5)).chain(self.terms(j, i).map(half(-0.5))).collect()
        });
        (sym, skew)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(HomogError::DimensionMismatch(format!(
                "adding fields of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        Ok(self.map_entries(|i, j| self.terms(i, j).chain(other.terms(i, j)).collect()))
    }

    pub fn is_symmetric(&self) -> bool {
        let (_, skew) = self.split_symmetric();
        skew.entries.iter().all(Vec::is_empty)
    }

    /// Cell average `⟨a⟩` (row-major).
    pub fn mean_matrix(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|list| {
                list.iter()
                    .find(|m| m.k.iter().all(|&kj| kj == 0))
                    .map_or(0.0, |m| m.amp.re)
            })
            .collect()
    }

    /// Largest `max_j |k_j|` over all modes.
    pub fn band(&self) -> i64 {
        self.entries
            .iter()
            .flatten()
            .flat_map(|m| m.k.iter().map(|kj| kj.abs()))
            .max()
            .unwrap_or(0)
    }

    /// Samples of entry `(i,j)` of `a(m x)` at `x = idx/p` (exact point values).
    pub fn sample_entry_dilated(&self, i: usize, j: usize, m: usize, p: usize) -> Result<Vec<f64>> {
        let grid = Grid::new(self.dim, p)?;
        let mut buf = vec![Complex64::new(0.0, 0.0); grid.len()];
        for mode in self.entry(i, j) {
            let mut flat = 0usize;
            for a in 0..self.dim {
                flat = flat * p + (mode.k[a] * m as i64).rem_euclid(p as i64) as usize;
            }
            buf[flat] += mode.amp;
        }
        let ifft = rustfft::FftPlanner::new().plan_fft_inverse(p);
        fft_nd(&mut buf, grid, &*ifft);
        Ok(buf.into_iter().map(|z| z.re).collect())
    }

    /// All entries of `a(m x)` on the `p`-point grid, row-major over `(i,j)`.
    pub fn sample_dilated(&self, m: usize, p: usize) -> Result<Vec<Vec<f64>>> {
        let d = self.dim;
        (0..d * d)
            .map(|e| self.sample_entry_dilated(e / d, e % d, m, p))
            .collect()
    }

    /// Extreme eigenvalues of `aˢ` over a `res`-point sample grid.
    /// Errors with `NonElliptic` when the lower bound is not positive.
    pub fn ellipticity_constant(&self, res: usize) -> Result<(f64, f64)> {
        let (lo, hi) = self.symmetric_eigen_range(res)?;
        if lo <= 0.0 {
            return Err(HomogError::NonElliptic { lambda_low: lo });
        }
        Ok((lo, hi))
    }

    fn symmetric_eigen_range(&self, res: usize) -> Result<(f64, f64)> {
        if res < 2 {
            return Err(HomogError::GridTooCoarse(format!("ellipticity grid {res} < 2")));
        }
        let p = res + res % 2;
        let (sym, _) = self.split_symmetric();
        let samples = sym.sample_dilated(1, p)?;
        let d = self.dim;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for pt in 0..samples[0].len() {
            let m = DMatrix::from_fn(d, d, |i, j| samples[i * d + j][pt]);
            for ev in m.symmetric_eigenvalues().iter() {
                lo = lo.min(*ev);
                hi = hi.max(*ev);
            }
        }
        Ok((lo, hi))
    }

    /// Minimum over the sample grid of the smallest eigenvalue of `aˢ`, the
    /// `λ` used by the energy estimates (lower-bounded by `1/λ_high` too).
    pub fn lambda(&self, res: usize) -> Result<f64> {
        let (lo, hi) = self.ellipticity_constant(res)?;
        Ok(lo.min(1.0 / hi))
    }
}

fn check_reality(modes: &[FourierMode], i: usize, j: usize) -> Result<()> {
    let scale = modes.iter().map(|m| m.amp.norm()).fold(0.0, f64::max).max(1.0);
    for m in modes {
        let neg = [-m.k[0], -m.k[1], -m.k[2]];
        let partner = modes
            .iter()
            .find(|p| p.k == neg)
            .map_or(Complex64::new(0.0, 0.0), |p| p.amp);
        if (partner - m.amp.conj()).norm() > REALITY_TOL * scale {
            return Err(HomogError::InvalidSpec(format!(
                "entry ({i},{j}) is not real: amplitude {} at k = {:?} but {} at -k",
                m.amp, m.k, partner
            )));
        }
    }
    Ok(())
}

/// Dyadic-cube BMO estimate of a periodic scalar sampled on an `n`-point
/// grid (`n` a multiple of `2^max_depth`): the largest mean oscillation
/// `|B|⁻¹∫_B |g − g_B|` over cubes of side `2^-l`, `l = 0..=max_depth`,
/// at every grid translate with periodic wrap.
pub fn bmo_seminorm(samples: &[f64], dim: usize, n: usize, max_depth: u32) -> Result<f64> {
    let grid = Grid::new(dim, n)?;
    if samples.len() != grid.len() {
        return Err(HomogError::DimensionMismatch(format!(
            "{} samples for a grid of {}",
            samples.len(),
            grid.len()
        )));
    }
    let cells = 1usize << max_depth;
    if !n.is_multiple_of(cells) {
        return Err(HomogError::GridTooCoarse(format!(
            "grid {n} is not divisible by 2^{max_depth}"
        )));
    }
    let mut best = 0.0f64;
    let mut cube = Vec::new();
    for depth in 0..=max_depth {
        let side = n >> depth;
        let starts = if depth == 0 { 1 } else { grid.len() };
        let vol = side.pow(dim as u32);
        for s in 0..starts {
            let origin = grid.unflatten(s);
            cube.clear();
            for c in 0..vol {
                let mut flat = 0usize;
                let mut rem = c;
                let mut off = [0usize; MAX_DIM];
                for a in (0..dim).rev() {
                    off[a] = rem % side;
                    rem /= side;
                }
                for a in 0..dim {
                    flat = flat * n + (origin[a] + off[a]) % n;
                }
                cube.push(samples[flat]);
            }
            let mean = cube.iter().sum::<f64>() / vol as f64;
            let osc = cube.iter().map(|v| (v - mean).abs()).sum::<f64>() / vol as f64;
            best = best.max(osc);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laminate() -> CoefficientField {
        let diag = vec![(vec![0, 0], 2.0, 0.0), (vec![1, 0], 0.0, 1.0)];
        CoefficientField::from_trig(2, vec![diag.clone(), vec![], vec![], diag]).unwrap()
    }

    #[test]
    fn evaluate_laminate() {
        let a = laminate();
        let v = a.evaluate(&[0.25, 0.0]);
        assert!((v[0] - 3.0).abs() < 1e-14);
        assert_eq!(v[1], 0.0);
        let w = a.evaluate(&[1.25, -3.0]);
        assert!((w[0] - 3.0).abs() < 1e-13);
    }

    #[test]
    fn ellipticity_of_laminate_hits_extremes() {
        let (lo, hi) = laminate().ellipticity_constant(64).unwrap();
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 3.0).abs() < 1e-14);
    }

    #[test]
    fn non_elliptic_rejected() {
        let a = CoefficientField::constant(2, &[1.0, 0.0, 0.0, -0.5]).unwrap();
        assert!(matches!(
            a.ellipticity_constant(8),
            Err(HomogError::NonElliptic { .. })
        ));
    }

    #[test]
    fn constant_split() {
        let a = CoefficientField::constant(2, &[2.0, 1.0, -1.0, 2.0]).unwrap();
        let (s, b) = a.split_symmetric();
        assert_eq!(s.mean_matrix(), vec![2.0, 0.0, 0.0, 2.0]);
        assert_eq!(b.mean_matrix(), vec![0.0, 1.0, -1.0, 0.0]);
        assert!(!a.is_symmetric() && s.is_symmetric());
    }

    #[test]
    fn non_real_spec_rejected() {
        let err = CoefficientField::from_modes(
            1,
            vec![vec![(vec![1], Complex64::new(1.0, 0.0))]],
        );
        assert!(matches!(err, Err(HomogError::InvalidSpec(_))));
    }

    #[test]
    fn grid_spec_interpolates_samples() {
        let n = 8;
        let g = Grid::new(2, n).unwrap();
        let f = |y: &[f64]| 2.0 + (2.0 * PI * y[0]).sin() + 0.3 * (2.0 * PI * (y[0] - 2.0 * y[1])).cos();
        let pts: Vec<[f64; 2]> = (0..g.len())
            .map(|flat| {
                let x = g.point(flat);
                [x[0] - 0.5, x[1] - 0.5]
            })
            .collect();
        let s: Vec<f64> = pts.iter().map(|y| f(y)).collect();
        let zero = vec![0.0; g.len()];
        let a = CoefficientField::from_grid(2, n, &[s.clone(), zero.clone(), zero, s]).unwrap();
        assert_eq!(a.band(), 2);
        for y in [[0.1, 0.2], [-0.37, 0.45], [1.6, -2.1]] {
            assert!((a.evaluate(&y)[0] - f(&y)).abs() < 1e-13);
        }
    }

    #[test]
    fn spec_roundtrip_and_exclusivity() {
        let a = laminate();
        let text = a.to_spec().to_toml_string().unwrap();
        let back = CoefficientSpec::from_toml_str(&text).unwrap().build().unwrap();
        assert_eq!(a, back);
        assert_eq!(a.content_hash(), back.content_hash());
        let mut both = a.to_spec();
        both.grid = Some(GridSpec { n: 2, samples: vec![] });
        assert!(both.build().is_err());
    }

    #[test]
    fn bmo_two_level() {
        let n = 16;
        let s: Vec<f64> = (0..n * n)
            .map(|flat| if (flat / n) < n / 2 { 1.0 } else { -1.0 })
            .collect();
        let v = bmo_seminorm(&s, 2, n, 3).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        let c = vec![4.2; n * n];
        assert!(bmo_seminorm(&c, 2, n, 4).unwrap() < 1e-13);
    }
}
