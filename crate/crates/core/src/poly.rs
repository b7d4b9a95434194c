//! Sparse multivariate polynomials with exact Gaussian-rational coefficients.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use num_traits::{One, Zero};

use crate::exact::{ExactScalar, Rational};

/// Exponent vector, one entry per variable.
pub type Exponents = Vec<u32>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Exponents, ExactScalar>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: ExactScalar) -> Self {
        let mut p = Poly::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn one(nvars: usize) -> Self {
        Poly::constant(nvars, ExactScalar::one())
    }

    /// The coordinate function `x_i` (0-based).
    pub fn var(nvars: usize, i: usize) -> Self {
        assert!(i < nvars, "variable index {i} out of range for {nvars} variables");
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Poly::zero(nvars);
        p.add_term(e, ExactScalar::one());
        p
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Exponents, ExactScalar)>) -> Self {
        let mut p = Poly::zero(nvars);
        for (e, c) in terms {
            assert_eq!(e.len(), nvars, "exponent vector length must equal variable count");
            p.add_term(e, c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &ExactScalar)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_real(&self) -> bool {
        self.terms.values().all(ExactScalar::is_real)
    }

    /// Returns the constant value if the polynomial has no non-constant terms.
    pub fn as_constant(&self) -> Option<ExactScalar> {
        match self.terms.len() {
            0 => Some(ExactScalar::zero()),
            1 => {
                let (e, c) = self.terms.iter().next().unwrap();
                e.iter().all(|&k| k == 0).then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn add_term(&mut self, e: Exponents, c: ExactScalar) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(e) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += &c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn degree_in(&self, var: usize) -> u32 {
        self.terms.keys().map(|e| e[var]).max().unwrap_or(0)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn scale(&self, c: &ExactScalar) -> Poly {
        if c.is_zero() {
            return Poly::zero(self.nvars);
        }
        Poly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, v)| (e.clone(), v * c)).collect(),
        }
    }

    pub fn pow(&self, k: u32) -> Poly {
        let mut out = Poly::one(self.nvars);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    pub fn derivative(&self, var: usize) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[var] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[var] -= 1;
            out.add_term(e2, c.scale(&Rational::from_integer(e[var].into())));
        }
        out
    }

    /// Substitutes `values[i]` for variable `i`. All values must share one variable count.
    pub fn substitute(&self, values: &[Poly]) -> Poly {
        assert_eq!(
            values.len(),
            self.nvars,
            "substitution needs one polynomial per variable"
        );
        let target_vars = values.first().map(Poly::nvars).unwrap_or(0);
        let mut powers: Vec<Vec<Poly>> = values.iter().map(|v| vec![Poly::one(v.nvars)]).collect();
        let mut out = Poly::zero(target_vars);
        for (e, c) in &self.terms {
            let mut term = Poly::constant(target_vars, c.clone());
            for (i, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                while powers[i].len() <= k as usize {
                    let next = powers[i].last().unwrap() * &values[i];
                    powers[i].push(next);
                }
                term = &term * &powers[i][k as usize];
            }
            for (e2, c2) in term.terms {
                out.add_term(e2, c2);
            }
        }
        out
    }

    /// Substitutes `shift[i] + scale[i]·x_i` for variable `i`.
    pub fn affine_substitute(&self, shift: &[Rational], scale: &[Rational]) -> Poly {
        assert_eq!(shift.len(), self.nvars);
        assert_eq!(scale.len(), self.nvars);
        let mut current = self.clone();
        for var in 0..self.nvars {
            if shift[var].is_zero() && scale[var].is_one() {
                continue;
            }
            let maxdeg = current.degree_in(var) as usize;
            // binomial rows and powers of shift and scale, shared by every term
            let mut binom = vec![vec![Rational::one()]];
            for k in 1..=maxdeg {
                let prev = &binom[k - 1];
                let mut row = vec![Rational::one(); k + 1];
                for j in 1..k {
                    row[j] = &prev[j - 1] + &prev[j];
                }
                binom.push(row);
            }
            let powers = |x: &Rational| {
                let mut v = vec![Rational::one()];
                for k in 0..maxdeg {
                    let next = &v[k] * x;
                    v.push(next);
                }
                v
            };
            let (sp, hp) = (powers(&shift[var]), powers(&scale[var]));
            let mut out = Poly::zero(self.nvars);
            for (e, c) in &current.terms {
                let k = e[var] as usize;
                for j in 0..=k {
                    let f = &binom[k][j] * &sp[k - j] * &hp[j];
                    if f.is_zero() {
                        continue;
                    }
                    let mut e2 = e.clone();
                    e2[var] = j as u32;
                    out.add_term(e2, c.scale(&f));
                }
            }
            current = out;
        }
        current
    }

    /// Fixes variable `var` to `value`, keeping the variable count.
    pub fn restrict(&self, var: usize, value: &ExactScalar) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            let mut factor = c.clone();
            for _ in 0..e[var] {
                factor = &factor * value;
            }
            let mut e2 = e.clone();
            e2[var] = 0;
            out.add_term(e2, factor);
        }
        out
    }

    pub fn eval_exact(&self, point: &[ExactScalar]) -> ExactScalar {
        assert_eq!(point.len(), self.nvars);
        let mut acc = ExactScalar::zero();
        for (e, c) in &self.terms {
            let mut term = c.clone();
            for (x, &k) in point.iter().zip(e) {
                for _ in 0..k {
                    term = &term * x;
                }
            }
            acc += &term;
        }
        acc
    }

    pub fn to_float(&self) -> FloatPoly {
        FloatPoly::new(self)
    }

    pub fn eval(&self, point: &[Complex64]) -> Complex64 {
        self.to_float().eval(point)
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        assert_eq!(self.nvars, rhs.nvars);
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        assert_eq!(self.nvars, rhs.nvars);
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), -c.clone());
        }
        out
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), -c.clone())).collect(),
        }
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        assert_eq!(self.nvars, rhs.nvars);
        let mut out = Poly::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e: Exponents = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c})")?;
            for (i, &k) in e.iter().enumerate() {
                match k {
                    0 => {}
                    1 => write!(f, "*x{}", i + 1)?,
                    _ => write!(f, "*x{}^{}", i + 1, k)?,
                }
            }
        }
        Ok(())
    }
}

/// Floating-point view of a [`Poly`] for fast repeated evaluation.
#[derive(Clone, Debug)]
pub struct FloatPoly {
    nvars: usize,
    max_deg: Vec<usize>,
    terms: Vec<(Exponents, Complex64)>,
}

impl FloatPoly {
    pub fn new(p: &Poly) -> Self {
        let max_deg = (0..p.nvars).map(|v| p.degree_in(v) as usize).collect();
        FloatPoly {
            nvars: p.nvars,
            max_deg,
            terms: p.terms.iter().map(|(e, c)| (e.clone(), c.to_complex64())).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, point: &[Complex64]) -> Complex64 {
        debug_assert_eq!(point.len(), self.nvars);
        let powers: Vec<Vec<Complex64>> = point
            .iter()
            .zip(&self.max_deg)
            .map(|(&x, &m)| {
                let mut v = Vec::with_capacity(m + 1);
                v.push(Complex64::new(1.0, 0.0));
                for k in 0..m {
                    v.push(v[k] * x);
                }
                v
            })
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for (e, c) in &self.terms {
            let mut t = *c;
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    t *= powers[i][k as usize];
                }
            }
            acc += t;
        }
        acc
    }

    pub fn eval_real(&self, point: &[f64]) -> Complex64 {
        debug_assert_eq!(point.len(), self.nvars);
        let powers: Vec<Vec<f64>> = point
            .iter()
            .zip(&self.max_deg)
            .map(|(&x, &m)| {
                let mut v = Vec::with_capacity(m + 1);
                v.push(1.0);
                for k in 0..m {
                    v.push(v[k] * x);
                }
                v
            })
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for (e, c) in &self.terms {
            let mut m = 1.0;
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    m *= powers[i][k as usize];
                }
            }
            acc += c * m;
        }
        acc
    }
}

/// A polynomial map `ℝ^m → ℝ^k` (or the complex analogue).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyMap {
    source_dim: usize,
    components: Vec<Poly>,
}

impl PolyMap {
    pub fn new(source_dim: usize, components: Vec<Poly>) -> Self {
        for c in &components {
            assert_eq!(
                c.nvars(),
                source_dim,
                "component variable count must equal source dimension"
            );
        }
        PolyMap { source_dim, components }
    }

    pub fn identity(dim: usize) -> Self {
        PolyMap::new(dim, (0..dim).map(|i| Poly::var(dim, i)).collect())
    }

    /// `x ↦ A x` for a row-major matrix with `target` rows.
    pub fn linear(matrix: &[Vec<ExactScalar>]) -> Self {
        let source_dim = matrix.first().map(Vec::len).unwrap_or(0);
        let components = matrix
            .iter()
            .map(|row| {
                let mut p = Poly::zero(source_dim);
                for (j, a) in row.iter().enumerate() {
                    p = &p + &Poly::var(source_dim, j).scale(a);
                }
                p
            })
            .collect();
        PolyMap::new(source_dim, components)
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn target_dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Poly] {
        &self.components
    }

    pub fn is_real(&self) -> bool {
        self.components.iter().all(Poly::is_real)
    }

    /// `jacobian[i][j] = ∂F_i/∂x_j`.
    pub fn jacobian(&self) -> Vec<Vec<Poly>> {
        self.components
            .iter()
            .map(|c| (0..self.source_dim).map(|j| c.derivative(j)).collect())
            .collect()
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &PolyMap) -> PolyMap {
        assert_eq!(inner.target_dim(), self.source_dim);
        PolyMap::new(
            inner.source_dim,
            self.components
                .iter()
                .map(|c| c.substitute(&inner.components))
                .collect(),
        )
    }

    pub fn eval(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> ExactScalar {
        ExactScalar::from_ratio(n, d)
    }

    #[test]
    fn product_and_derivative() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let p = &(&x * &x) * &y; // x^2 y
        let dp = p.derivative(0);
        assert_eq!(dp, (&x * &y).scale(&q(2, 1)));
        assert!(p.derivative(1).derivative(1).is_zero());
    }

    #[test]
    fn substitution_composes() {
        // p(x) = x^2 + 1, substitute x -> 2t - 1
        let x = Poly::var(1, 0);
        let p = &(&x * &x) + &Poly::one(1);
        let t = Poly::var(1, 0);
        let sub = &t.scale(&q(2, 1)) - &Poly::one(1);
        let c = p.substitute(&[sub]);
        // (2t-1)^2 + 1 = 4t^2 - 4t + 2
        let expect = Poly::from_terms(1, [(vec![2], q(4, 1)), (vec![1], q(-4, 1)), (vec![0], q(2, 1))]);
        assert_eq!(c, expect);
    }

    #[test]
    fn restrict_and_constant() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let p = &(&x * &y) + &x;
        let r = p.restrict(0, &ExactScalar::zero());
        assert_eq!(r.as_constant(), Some(ExactScalar::zero()));
        assert!(p.restrict(0, &q(1, 1)).as_constant().is_none());
    }

    #[test]
    fn float_view_matches_exact() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let p = &(&(&x * &x) * &y).scale(&q(3, 7)) - &y.scale(&ExactScalar::i());
        let pt = [q(1, 3), q(-2, 5)];
        let exact = p.eval_exact(&pt).to_complex64();
        let fl = p.to_float().eval_real(&[1.0 / 3.0, -0.4]);
        assert!((exact - fl).norm() < 1e-15);
    }
}
