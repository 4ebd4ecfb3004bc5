//! Multivariate monomial bookkeeping for the sum-of-squares certificates.
//!
//! Polynomials are kept as coefficient vectors over an explicit, ordered list
//! of exponent tuples. Only the operations the certificate construction needs
//! are provided: basis enumeration, products, partial derivatives, and
//! evaluation.

use nalgebra::DVector;
use std::collections::BTreeMap;

/// Exponent tuple of a monomial in `n` variables.
pub type Exponents = Vec<u32>;

/// All exponent tuples in `n` variables with total degree exactly `d`,
/// in graded lexicographic order.
pub fn monomials_of_degree(n: usize, d: u32) -> Vec<Exponents> {
    let mut out = Vec::new();
    let mut current = vec![0u32; n];
    fill(&mut out, &mut current, 0, d);
    out
}

fn fill(out: &mut Vec<Exponents>, current: &mut Exponents, pos: usize, remaining: u32) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.clone());
        current[pos] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        fill(out, current, pos + 1, remaining - e);
        current[pos] = 0;
    }
}

/// All exponent tuples with total degree between `lo` and `hi` inclusive.
pub fn monomials_in_range(n: usize, lo: u32, hi: u32) -> Vec<Exponents> {
    let mut out = Vec::new();
    for d in lo..=hi {
        out.extend(monomials_of_degree(n, d));
    }
    out
}

/// Evaluate the monomial `x^alpha`.
pub fn eval_monomial(alpha: &[u32], x: &DVector<f64>) -> f64 {
    alpha
        .iter()
        .zip(x.iter())
        .map(|(&e, &xi)| xi.powi(e as i32))
        .product()
}

/// Sparse polynomial over a fixed variable count, keyed by exponent tuple.
#[derive(Debug, Clone, Default)]
pub struct Poly {
    pub terms: BTreeMap<Exponents, f64>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn add_term(&mut self, alpha: Exponents, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        let entry = self.terms.entry(alpha.clone()).or_insert(0.0);
        *entry += coeff;
        // keep the support tight so degree queries stay honest
        if *entry == 0.0 {
            self.terms.remove(&alpha);
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.terms
            .iter()
            .map(|(alpha, &c)| c * eval_monomial(alpha, x))
            .sum()
    }

    /// Partial derivative with respect to variable `j`.
    pub fn diff(&self, j: usize) -> Poly {
        let mut out = Poly::zero();
        for (alpha, &c) in &self.terms {
            if alpha[j] == 0 {
                continue;
            }
            let mut beta = alpha.clone();
            beta[j] -= 1;
            out.add_term(beta, c * alpha[j] as f64);
        }
        out
    }

    /// Gradient evaluated at a point.
    pub fn gradient_at(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = x.len();
        DVector::from_fn(n, |j, _| self.diff(j).eval(x))
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|alpha| alpha.iter().sum())
            .max()
            .unwrap_or(0)
    }
}

/// Product of two exponent tuples (monomial multiplication).
pub fn mul_exponents(a: &[u32], b: &[u32]) -> Exponents {
    a.iter().zip(b.iter()).map(|(&x, &y)| x + y).collect()
}
