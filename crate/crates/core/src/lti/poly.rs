//! Real polynomials stored as coefficient vectors in descending powers.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Drops exact leading zeros, keeping at least one coefficient.
pub fn trim(p: &[f64]) -> Vec<f64> {
    let first = p.iter().position(|&c| c != 0.0).unwrap_or(p.len().saturating_sub(1));
    if p.is_empty() {
        return vec![0.0];
    }
    p[first..].to_vec()
}

pub fn degree(p: &[f64]) -> usize {
    trim(p).len() - 1
}

pub fn is_zero(p: &[f64]) -> bool {
    p.iter().all(|&c| c == 0.0)
}

pub fn eval(p: &[f64], s: C64) -> C64 {
    p.iter().fold(C64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

pub fn eval_complex(p: &[C64], s: C64) -> C64 {
    p.iter().fold(C64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    let mut out = vec![0.0; n];
    for (i, &x) in a.iter().rev().enumerate() {
        out[n - 1 - i] += x;
    }
    for (i, &y) in b.iter().rev().enumerate() {
        out[n - 1 - i] += y;
    }
    out
}

pub fn scale(p: &[f64], k: f64) -> Vec<f64> {
    p.iter().map(|&c| c * k).collect()
}

pub fn derivative(p: &[f64]) -> Vec<f64> {
    let n = p.len();
    if n <= 1 {
        return vec![0.0];
    }
    p[..n - 1]
        .iter()
        .enumerate()
        .map(|(i, &c)| c * (n - 1 - i) as f64)
        .collect()
}

pub fn norm(p: &[f64]) -> f64 {
    p.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Monic real polynomial with the given roots. Imaginary residue from
/// unpaired complex roots is discarded.
pub fn from_roots(roots: &[C64]) -> Vec<f64> {
    let mut acc = vec![C64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![C64::new(0.0, 0.0); acc.len() + 1];
        for (i, &c) in acc.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        acc = next;
    }
    acc.into_iter().map(|c| c.re).collect()
}

/// All roots with multiplicity. Exact zero roots are split off first, the
/// remainder goes through the closed form up to degree two and through the
/// companion-matrix eigenvalues beyond that.
pub fn roots(p: &[f64]) -> Result<Vec<C64>> {
    let p = trim(p);
    if is_zero(&p) {
        return Err(Error::InvalidModel("zero polynomial has no finite roots".into()));
    }
    if p.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidModel("non-finite polynomial coefficient".into()));
    }
    let zeros_at_origin = p.iter().rev().take_while(|&&c| c == 0.0).count();
    let core = &p[..p.len() - zeros_at_origin];
    let mut out = vec![C64::new(0.0, 0.0); zeros_at_origin];
    let lead = core[0];
    let monic: Vec<f64> = core.iter().map(|c| c / lead).collect();
    match monic.len() - 1 {
        0 => {}
        1 => out.push(C64::new(-monic[1], 0.0)),
        2 => out.extend(quadratic(monic[1], monic[2])),
        n => {
            let mut comp = DMatrix::<f64>::zeros(n, n);
            for j in 0..n {
                comp[(0, j)] = -monic[j + 1];
            }
            for i in 1..n {
                comp[(i, i - 1)] = 1.0;
            }
            out.extend(comp.complex_eigenvalues().iter().copied());
        }
    }
    Ok(out)
}

/// Roots of s^2 + b s + c without cancellation.
fn quadratic(b: f64, c: f64) -> [C64; 2] {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        if q == 0.0 {
            return [C64::new(0.0, 0.0), C64::new(0.0, 0.0)];
        }
        [C64::new(q, 0.0), C64::new(c / q, 0.0)]
    } else {
        let re = -0.5 * b;
        let im = 0.5 * (-disc).sqrt();
        [C64::new(re, im), C64::new(re, -im)]
    }
}
