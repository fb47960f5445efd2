//! Sparse multivariate polynomials with real coefficients.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

/// Exponent vector of a monomial.
pub type MultiIndex = Vec<u32>;

/// Coefficients smaller than this are dropped after arithmetic.
const ZERO_TOL: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    /// The polynomial `x_i` (0-based).
    pub fn variable(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(e, 1.0);
        p
    }

    /// Linear form `Σ c_i x_i`.
    pub fn linear(coeffs: &[f64]) -> Self {
        let n = coeffs.len();
        let mut p = Self::zero(n);
        for (i, &c) in coeffs.iter().enumerate() {
            let mut e = vec![0; n];
            e[i] = 1;
            p.add_term(e, c);
        }
        p
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (MultiIndex, f64)>) -> Self {
        let mut p = Self::zero(nvars);
        for (e, c) in terms {
            assert_eq!(e.len(), nvars, "exponent length must match variable count");
            p.add_term(e, c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn add_term(&mut self, exponent: MultiIndex, coeff: f64) {
        let entry = self.terms.entry(exponent).or_insert(0.0);
        *entry += coeff;
        if entry.abs() <= ZERO_TOL {
            self.terms.retain(|_, c| c.abs() > ZERO_TOL);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(e, &c)| (e, c))
    }

    pub fn into_terms(self) -> Vec<(MultiIndex, f64)> {
        self.terms.into_iter().collect()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree (0 for the zero polynomial).
    pub fn degree(&self) -> usize {
        self.terms.keys().map(|e| total_degree(e)).max().unwrap_or(0)
    }

    pub fn constant_term(&self) -> f64 {
        self.terms.get(&vec![0; self.nvars]).copied().unwrap_or(0.0)
    }

    /// Returns the constant value if the polynomial has no non-constant term.
    pub fn as_constant(&self) -> Option<f64> {
        if self.terms.keys().all(|e| total_degree(e) == 0) {
            Some(self.constant_term())
        } else {
            None
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(e, &c)| c * monomial_value(e, x)).sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, &c) in &other.terms {
            out.add_term(e.clone(), c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, &c) in &self.terms {
            out.add_term(e.clone(), c * s);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.nvars);
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &other.terms {
                let e = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::constant(self.nvars, 1.0);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }
}

pub fn total_degree(e: &[u32]) -> usize {
    e.iter().map(|&k| k as usize).sum()
}

pub fn monomial_value(e: &[u32], x: &[f64]) -> f64 {
    e.iter().zip(x).fold(1.0, |acc, (&k, &xi)| {
        let mut v = acc;
        for _ in 0..k {
            v *= xi;
        }
        v
    })
}
