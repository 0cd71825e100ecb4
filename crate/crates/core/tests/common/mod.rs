#![allow(dead_code)]

use homog_core::coefficient::{CoefficientField, ModeSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Trig = Vec<(Vec<i64>, f64, f64)>;

fn neg(terms: &Trig) -> Trig {
    terms.iter().map(|(k, a, b)| (k.clone(), -a, -b)).collect()
}

/// `(2 + sin 2πy₁) I` in two dimensions.
pub fn laminate() -> CoefficientField {
    let alpha: Trig = vec![(vec![0, 0], 2.0, 0.0), (vec![1, 0], 0.0, 1.0)];
    CoefficientField::from_trig(2, vec![alpha.clone(), vec![], vec![], alpha]).unwrap()
}

fn smooth_sym() -> (Trig, Trig) {
    let a11 = vec![(vec![0, 0], 2.0, 0.0), (vec![1, 0], 0.0, 0.9), (vec![0, 1], 0.9, 0.0)];
    let a22 = vec![(vec![0, 0], 2.0, 0.0), (vec![1, 1], 0.6, 0.0)];
    (a11, a22)
}

/// Symmetric part plus the skew entry `b₁₂ = 2(cos 2πy₁ + sin 2πy₂)`.
pub fn nonsymmetric() -> CoefficientField {
    let (a11, a22) = smooth_sym();
    let b: Trig = vec![(vec![1, 0], 2.0, 0.0), (vec![0, 1], 0.0, 2.0)];
    CoefficientField::from_trig(2, vec![a11, b.clone(), neg(&b), a22]).unwrap()
}

pub fn nonsymmetric_sym_part() -> CoefficientField {
    let (a11, a22) = smooth_sym();
    CoefficientField::from_trig(2, vec![a11, vec![], vec![], a22]).unwrap()
}

/// Skew entry `Σ_{j≤3} (cos 2πjy₁ + cos 2πjy₂)/j`: a truncated log-type
/// profile with large oscillation relative to its size.
pub fn bmo_like() -> CoefficientField {
    let (a11, a22) = smooth_sym();
    let mut b: Trig = Vec::new();
    for j in 1..=3i64 {
        b.push((vec![j, 0], 1.0 / j as f64, 0.0));
        b.push((vec![0, j], 1.0 / j as f64, 0.0));
    }
    CoefficientField::from_trig(2, vec![a11, b.clone(), neg(&b), a22]).unwrap()
}

pub fn datum() -> Vec<ModeSpec> {
    vec![
        ModeSpec { k: vec![1, 0], re: 0.7, im: 0.2 },
        ModeSpec { k: vec![0, 1], re: -0.3, im: 0.5 },
        ModeSpec { k: vec![1, 1], re: 0.4, im: -0.1 },
    ]
}

/// Random band-limited field `2I + perturbation`; skew part only when
/// `symmetric` is false.
pub fn random_field(dim: usize, band: i64, seed: u64, symmetric: bool) -> CoefficientField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wave: Vec<Vec<i64>> = Vec::new();
    let mut stack = vec![Vec::<i64>::new()];
    for _ in 0..dim {
        stack = stack
            .into_iter()
            .flat_map(|k| (-band..=band).map(move |v| {
                let mut k = k.clone();
                k.push(v);
                k
            }))
            .collect();
    }
    for k in stack {
        // one representative of each ±k pair
        let first = k.iter().find(|&&v| v != 0);
        if matches!(first, Some(&v) if v > 0) {
            wave.push(k);
        }
    }
    let amp = 0.5 / wave.len() as f64;
    let mut entries: Vec<Trig> = vec![Vec::new(); dim * dim];
    for i in 0..dim {
        for j in i..dim {
            let mut sym: Trig = Vec::new();
            let mut skew: Trig = Vec::new();
            for k in &wave {
                sym.push((k.clone(), amp * rng.gen_range(-1.0..1.0), amp * rng.gen_range(-1.0..1.0)));
                if i != j {
                    skew.push((k.clone(), 2.0 * amp * rng.gen_range(-1.0..1.0), 2.0 * amp * rng.gen_range(-1.0..1.0)));
                }
            }
            if i == j {
                sym.push((vec![0; dim], 2.0, 0.0));
                entries[i * dim + i] = sym;
            } else {
                let mut upper = sym.clone();
                let mut lower = sym;
                if !symmetric {
                    upper.extend(skew.iter().cloned());
                    lower.extend(neg(&skew));
                }
                entries[i * dim + j] = upper;
                entries[j * dim + i] = lower;
            }
        }
    }
    CoefficientField::from_trig(dim, entries).unwrap()
}
