//! Sparse real polynomials over a fixed number of variables.

use std::collections::BTreeMap;

/// Exponent vector, one entry per variable.
pub type Monomial = Vec<u16>;

pub fn degree_of(alpha: &[u16]) -> usize {
    alpha.iter().map(|&a| a as usize).sum()
}

pub fn add_monomials(a: &[u16], b: &[u16]) -> Monomial {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    pub n_vars: usize,
    pub terms: BTreeMap<Monomial, f64>,
}

impl Poly {
    pub fn zero(n_vars: usize) -> Self {
        Self { n_vars, terms: BTreeMap::new() }
    }

    pub fn constant(n_vars: usize, c: f64) -> Self {
        let mut p = Self::zero(n_vars);
        p.add_term(vec![0; n_vars], c);
        p
    }

    pub fn var(n_vars: usize, i: usize) -> Self {
        let mut alpha = vec![0; n_vars];
        alpha[i] = 1;
        let mut p = Self::zero(n_vars);
        p.add_term(alpha, 1.0);
        p
    }

    /// Σ c_i x_i + c0.
    pub fn affine(n_vars: usize, coefs: &[(usize, f64)], c0: f64) -> Self {
        let mut p = Self::constant(n_vars, c0);
        for &(i, c) in coefs {
            p = p.add(&Self::var(n_vars, i).scale(c));
        }
        p
    }

    pub fn add_term(&mut self, alpha: Monomial, c: f64) {
        debug_assert_eq!(alpha.len(), self.n_vars);
        if c == 0.0 {
            return;
        }
        let e = self.terms.entry(alpha.clone()).or_insert(0.0);
        *e += c;
        if *e == 0.0 {
            self.terms.remove(&alpha);
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (a, c) in &other.terms {
            out.add_term(a.clone(), *c);
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Poly {
        let mut out = Self::zero(self.n_vars);
        for (a, c) in &self.terms {
            out.add_term(a.clone(), c * s);
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Self::zero(self.n_vars);
        for (a, c) in &self.terms {
            for (b, d) in &other.terms {
                out.add_term(add_monomials(a, b), c * d);
            }
        }
        out
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|a| degree_of(a)).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(a, c)| c * a.iter().zip(x).map(|(&e, xi)| xi.powi(e as i32)).product::<f64>())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.terms.values().all(|c| c.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let p = x.add(&y).mul(&x.sub(&y));
        assert_eq!(p.degree(), 2);
        assert_eq!(p.terms.len(), 2);
        assert_eq!(p.eval(&[3.0, 2.0]), 5.0);
        assert!(x.sub(&x).terms.is_empty());
    }
}
