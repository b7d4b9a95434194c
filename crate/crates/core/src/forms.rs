//! Differential forms on a coordinate patch `ℝᵈ` or `ℂᵈ`, wedge products and
//! pullbacks along membranes and polynomial maps.
//!
//! Complex forms use only the holomorphic differentials `dz₁, …, dz_d`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::ExactScalar;
use crate::membranes::{CellPoly, Grid, Membrane};
use crate::poly::{Poly, PolyMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    #[default]
    Real,
    Complex,
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Real => write!(f, "real"),
            Field::Complex => write!(f, "complex"),
        }
    }
}

/// A number produced by one of the engines.
#[derive(Clone, Debug, PartialEq)]
pub enum Scalar {
    Exact(ExactScalar),
    Float(Complex64),
}

impl Scalar {
    pub fn to_complex64(&self) -> Complex64 {
        match self {
            Scalar::Exact(e) => e.to_complex64(),
            Scalar::Float(c) => *c,
        }
    }

    pub fn as_exact(&self) -> Option<&ExactScalar> {
        match self {
            Scalar::Exact(e) => Some(e),
            Scalar::Float(_) => None,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Scalar::Exact(_))
    }

    pub fn zero_exact() -> Self {
        Scalar::Exact(ExactScalar::zero())
    }

    pub fn one_exact() -> Self {
        Scalar::Exact(ExactScalar::one())
    }

    pub fn add(&self, other: &Scalar) -> Scalar {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a + b),
            _ => Scalar::Float(self.to_complex64() + other.to_complex64()),
        }
    }

    pub fn sub(&self, other: &Scalar) -> Scalar {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a - b),
            _ => Scalar::Float(self.to_complex64() - other.to_complex64()),
        }
    }

    pub fn mul(&self, other: &Scalar) -> Scalar {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a * b),
            _ => Scalar::Float(self.to_complex64() * other.to_complex64()),
        }
    }

    pub fn scale_int(&self, k: i64) -> Scalar {
        match self {
            Scalar::Exact(a) => Scalar::Exact(a * &ExactScalar::from_int(k)),
            Scalar::Float(c) => Scalar::Float(c * k as f64),
        }
    }

    pub fn neg(&self) -> Scalar {
        self.scale_int(-1)
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Exact(a) => a.is_zero(),
            Scalar::Float(c) => c.norm() == 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        self.to_complex64().norm()
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(e) => write!(f, "{e}"),
            Scalar::Float(c) if c.im == 0.0 => write!(f, "{:.15e}", c.re),
            Scalar::Float(c) => write!(f, "{:.15e} {:+.15e}i", c.re, c.im),
        }
    }
}

pub type PointFn = Arc<dyn Fn(&[Complex64]) -> Complex64 + Send + Sync>;

/// A coefficient of a form: an exact polynomial in the ambient coordinates,
/// or an opaque callback. Callbacks must be safe to call concurrently.
#[derive(Clone)]
pub enum CoefficientFunction {
    Polynomial(Poly),
    Callback { nvars: usize, f: PointFn, label: String },
}

impl fmt::Debug for CoefficientFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientFunction::Polynomial(p) => write!(f, "Polynomial({p})"),
            CoefficientFunction::Callback { label, .. } => write!(f, "Callback({label})"),
        }
    }
}

impl CoefficientFunction {
    pub fn callback(nvars: usize, label: impl Into<String>, f: PointFn) -> Self {
        CoefficientFunction::Callback {
            nvars,
            f,
            label: label.into(),
        }
    }

    /// `|x_k|²` (0-based `k`), which is not holomorphic.
    pub fn abs_sq(nvars: usize, k: usize) -> Self {
        Self::callback(
            nvars,
            format!("abs_sq({})", k + 1),
            Arc::new(move |x: &[Complex64]| Complex64::new(x[k].norm_sqr(), 0.0)),
        )
    }

    pub fn nvars(&self) -> usize {
        match self {
            CoefficientFunction::Polynomial(p) => p.nvars(),
            CoefficientFunction::Callback { nvars, .. } => *nvars,
        }
    }

    pub fn as_poly(&self) -> Option<&Poly> {
        match self {
            CoefficientFunction::Polynomial(p) => Some(p),
            CoefficientFunction::Callback { .. } => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, CoefficientFunction::Polynomial(p) if p.is_zero())
    }

    pub fn eval(&self, x: &[Complex64]) -> Complex64 {
        match self {
            CoefficientFunction::Polynomial(p) => p.eval(x),
            CoefficientFunction::Callback { f, .. } => f(x),
        }
    }

    /// Evaluation as an opaque function, regardless of representation.
    pub fn as_fn(&self) -> PointFn {
        match self {
            CoefficientFunction::Polynomial(p) => {
                let fp = p.to_float();
                Arc::new(move |x: &[Complex64]| fp.eval(x))
            }
            CoefficientFunction::Callback { f, .. } => f.clone(),
        }
    }

    fn combine(&self, other: &Self, label: &str, op: fn(Complex64, Complex64) -> Complex64) -> Self {
        let (a, b) = (self.as_fn(), other.as_fn());
        Self::callback(
            self.nvars(),
            format!("({self:?} {label} {other:?})"),
            Arc::new(move |x: &[Complex64]| op(a(x), b(x))),
        )
    }

    pub fn mul(&self, other: &Self) -> Self {
        match (self, other) {
            (CoefficientFunction::Polynomial(a), CoefficientFunction::Polynomial(b)) => {
                CoefficientFunction::Polynomial(a * b)
            }
            _ => self.combine(other, "*", |a, b| a * b),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        match (self, other) {
            (CoefficientFunction::Polynomial(a), CoefficientFunction::Polynomial(b)) => {
                CoefficientFunction::Polynomial(a + b)
            }
            _ => self.combine(other, "+", |a, b| a + b),
        }
    }

    pub fn scale(&self, c: &ExactScalar) -> Self {
        match self {
            CoefficientFunction::Polynomial(p) => CoefficientFunction::Polynomial(p.scale(c)),
            CoefficientFunction::Callback { nvars, f, label } => {
                let f = f.clone();
                let cf = c.to_complex64();
                Self::callback(
                    *nvars,
                    format!("{c}*{label}"),
                    Arc::new(move |x: &[Complex64]| cf * f(x)),
                )
            }
        }
    }
}

/// A differential `k`-form on a `d`-dimensional coordinate patch, stored as a
/// sparse map from strictly increasing 1-based multi-indices to coefficients.
#[derive(Clone, Debug)]
pub struct DifferentialForm {
    dim: usize,
    degree: usize,
    field: Field,
    terms: BTreeMap<Vec<usize>, CoefficientFunction>,
}

impl DifferentialForm {
    pub fn zero(dim: usize, degree: usize, field: Field) -> Result<Self> {
        if degree > dim {
            return Err(Error::DimensionMismatch(format!(
                "degree {degree} exceeds dimension {dim}"
            )));
        }
        Ok(DifferentialForm {
            dim,
            degree,
            field,
            terms: BTreeMap::new(),
        })
    }

    /// `c · dx_{i₁} ∧ ⋯ ∧ dx_{i_k}` for a strictly increasing index.
    pub fn monomial(dim: usize, index: Vec<usize>, coefficient: CoefficientFunction, field: Field) -> Result<Self> {
        let mut w = Self::zero(dim, index.len(), field)?;
        w.add_term(index, coefficient)?;
        Ok(w)
    }

    /// `dx₁ ∧ ⋯ ∧ dx_k` with coefficient 1.
    pub fn coordinate_volume(dim: usize, k: usize, field: Field) -> Result<Self> {
        Self::monomial(
            dim,
            (1..=k).collect(),
            CoefficientFunction::Polynomial(Poly::one(dim)),
            field,
        )
    }

    pub fn add_term(&mut self, index: Vec<usize>, coefficient: CoefficientFunction) -> Result<()> {
        if index.len() != self.degree {
            return Err(Error::DimensionMismatch(format!(
                "multi-index {index:?} has length {}, form degree is {}",
                index.len(),
                self.degree
            )));
        }
        if index.windows(2).any(|w| w[0] >= w[1]) || index.iter().any(|&i| i == 0 || i > self.dim) {
            return Err(Error::OutOfRange(format!(
                "multi-index {index:?} must be strictly increasing in 1..={}",
                self.dim
            )));
        }
        if coefficient.nvars() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "coefficient has {} variables, ambient dimension is {}",
                coefficient.nvars(),
                self.dim
            )));
        }
        if let (Field::Real, Some(p)) = (self.field, coefficient.as_poly()) {
            if !p.is_real() {
                return Err(Error::FieldMismatch("complex coefficient in a real form".into()));
            }
        }
        let merged = match self.terms.remove(&index) {
            Some(existing) => existing.add(&coefficient),
            None => coefficient,
        };
        if !merged.is_zero() {
            self.terms.insert(index, merged);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<usize>, &CoefficientFunction)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, index: &[usize]) -> Option<&CoefficientFunction> {
        self.terms.get(index)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_polynomial(&self) -> bool {
        self.terms.values().all(|c| c.as_poly().is_some())
    }

    pub fn scale(&self, c: &ExactScalar) -> DifferentialForm {
        let mut out = self.clone();
        out.terms = self
            .terms
            .iter()
            .map(|(k, v)| (k.clone(), v.scale(c)))
            .filter(|(_, v)| !v.is_zero())
            .collect();
        out
    }

    pub fn add(&self, other: &DifferentialForm) -> Result<DifferentialForm> {
        if self.dim != other.dim || self.degree != other.degree || self.field != other.field {
            return Err(Error::DimensionMismatch("adding forms of different shape".into()));
        }
        let mut out = self.clone();
        for (k, v) in &other.terms {
            out.add_term(k.clone(), v.clone())?;
        }
        Ok(out)
    }

    /// Evaluates every coefficient at a point, keyed by multi-index.
    pub fn eval_coefficients(&self, x: &[Complex64]) -> BTreeMap<Vec<usize>, Complex64> {
        self.terms.iter().map(|(k, c)| (k.clone(), c.eval(x))).collect()
    }
}

/// Sign of sorting the concatenation `a ++ b`, or `None` on a repeated index.
fn merge_sign(a: &[usize], b: &[usize]) -> Option<(i8, Vec<usize>)> {
    let mut seq: Vec<usize> = a.iter().chain(b).copied().collect();
    let mut inversions = 0usize;
    for i in 0..seq.len() {
        for j in i + 1..seq.len() {
            match seq[i].cmp(&seq[j]) {
                std::cmp::Ordering::Greater => inversions += 1,
                std::cmp::Ordering::Equal => return None,
                std::cmp::Ordering::Less => {}
            }
        }
    }
    seq.sort_unstable();
    Some((if inversions.is_multiple_of(2) { 1 } else { -1 }, seq))
}

pub fn wedge(a: &DifferentialForm, b: &DifferentialForm) -> Result<DifferentialForm> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch(format!(
            "wedge of forms on dimensions {} and {}",
            a.dim, b.dim
        )));
    }
    if a.field != b.field {
        return Err(Error::FieldMismatch("wedge of real and complex forms".into()));
    }
    let degree = a.degree + b.degree;
    let mut out = DifferentialForm {
        dim: a.dim,
        degree,
        field: a.field,
        terms: BTreeMap::new(),
    };
    if degree > a.dim {
        return Ok(out);
    }
    let minus = ExactScalar::from_int(-1);
    for (ia, ca) in &a.terms {
        for (ib, cb) in &b.terms {
            if let Some((sign, index)) = merge_sign(ia, ib) {
                let mut c = ca.mul(cb);
                if sign < 0 {
                    c = c.scale(&minus);
                }
                out.add_term(index, c)?;
            }
        }
    }
    Ok(out)
}

/// All strictly increasing `k`-subsets of `1..=d`.
pub fn increasing_indices(d: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, d: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..=d {
            cur.push(i);
            rec(i + 1, d, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, d, k, &mut Vec::new(), &mut out);
    out
}

fn permutations_with_sign(n: usize) -> Vec<(Vec<usize>, i8)> {
    crate::combinatorics::Permutation::all(n)
        .into_iter()
        .map(|p| {
            let sign = crate::combinatorics::parity(&p);
            (p.images().iter().map(|&i| i - 1).collect(), sign)
        })
        .collect()
}

/// Leibniz determinant of a square polynomial matrix.
pub fn poly_determinant(m: &[Vec<Poly>], nvars: usize) -> Poly {
    let n = m.len();
    if n == 0 {
        return Poly::one(nvars);
    }
    let mut det = Poly::zero(nvars);
    for (perm, sign) in permutations_with_sign(n) {
        let mut term = Poly::one(nvars);
        for (row, &col) in perm.iter().enumerate() {
            term = &term * &m[row][col];
            if term.is_zero() {
                break;
            }
        }
        if sign < 0 {
            det = &det - &term;
        } else {
            det = &det + &term;
        }
    }
    det
}

/// Leibniz determinant of a small complex matrix.
pub fn complex_determinant(m: &[Vec<Complex64>]) -> Complex64 {
    let n = m.len();
    if n == 0 {
        return Complex64::new(1.0, 0.0);
    }
    if n == 1 {
        return m[0][0];
    }
    if n == 2 {
        return m[0][0] * m[1][1] - m[0][1] * m[1][0];
    }
    permutations_with_sign(n)
        .into_iter()
        .map(|(perm, sign)| {
            let p: Complex64 = perm.iter().enumerate().map(|(r, &c)| m[r][c]).product();
            p * sign as f64
        })
        .sum()
}

pub type DensityFn = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;

#[derive(Clone)]
enum DensityRepr {
    Polynomial {
        cells: Arc<Vec<Poly>>,
        float: Arc<Vec<CellPoly>>,
    },
    Callback(DensityFn),
}

/// The scalar function `f` with `g*ω = f(t) dt₁ ∧ ⋯ ∧ dt_n`, smooth on each cell of `grid`.
#[derive(Clone)]
pub struct Density {
    n: usize,
    grid: Grid,
    repr: DensityRepr,
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Density")
            .field("n", &self.n)
            .field("polynomial", &self.is_polynomial())
            .finish()
    }
}

impl Density {
    pub fn polynomial(grid: Grid, cells: Vec<Poly>) -> Self {
        let float = cells
            .iter()
            .enumerate()
            .map(|(k, p)| CellPoly::on_grid(p, &grid, k))
            .collect();
        Density {
            n: grid.n(),
            grid,
            repr: DensityRepr::Polynomial {
                cells: Arc::new(cells),
                float: Arc::new(float),
            },
        }
    }

    pub fn from_fn(grid: Grid, f: DensityFn) -> Self {
        Density {
            n: grid.n(),
            grid,
            repr: DensityRepr::Callback(f),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn is_polynomial(&self) -> bool {
        matches!(self.repr, DensityRepr::Polynomial { .. })
    }

    /// Exact polynomial per grid cell.
    pub fn exact_cells(&self) -> Option<&[Poly]> {
        match &self.repr {
            DensityRepr::Polynomial { cells, .. } => Some(cells),
            DensityRepr::Callback(_) => None,
        }
    }

    pub fn eval(&self, t: &[f64]) -> Complex64 {
        match &self.repr {
            DensityRepr::Polynomial { float, .. } => float[self.grid.locate(t)].eval_real(t),
            DensityRepr::Callback(f) => f(t),
        }
    }

    /// Evaluation with the cell already known; avoids locating points that sit on breakpoints.
    pub fn eval_in_cell(&self, cell: usize, t: &[f64]) -> Complex64 {
        match &self.repr {
            DensityRepr::Polynomial { float, .. } => float[cell].eval_real(t),
            DensityRepr::Callback(f) => f(t),
        }
    }

    /// Whether the density is identically zero on a cell (known only for polynomial densities).
    pub fn vanishes_on(&self, cell: usize) -> bool {
        match &self.repr {
            DensityRepr::Polynomial { cells, .. } => cells[cell].is_zero(),
            DensityRepr::Callback(_) => false,
        }
    }

    pub fn scale(&self, c: &ExactScalar) -> Density {
        match &self.repr {
            DensityRepr::Polynomial { cells, .. } => {
                Density::polynomial(self.grid.clone(), cells.iter().map(|p| p.scale(c)).collect())
            }
            DensityRepr::Callback(f) => {
                let f = f.clone();
                let cf = c.to_complex64();
                Density::from_fn(self.grid.clone(), Arc::new(move |t: &[f64]| cf * f(t)))
            }
        }
    }
}

fn check_pullback_shape(g: &Membrane, w: &DifferentialForm) -> Result<()> {
    if w.degree != g.n() {
        return Err(Error::DegreeMismatch {
            expected: g.n(),
            found: w.degree,
        });
    }
    if w.dim != g.d() {
        return Err(Error::DimensionMismatch(format!(
            "form lives on dimension {}, membrane targets dimension {}",
            w.dim,
            g.d()
        )));
    }
    if w.field != g.field() {
        return Err(Error::FieldMismatch(format!(
            "{} form on a {} membrane",
            w.field,
            g.field()
        )));
    }
    Ok(())
}

/// `f(t) = Σ_J c_J(g(t)) · det(∂g_J/∂t)`. Exact when both inputs are polynomial.
pub fn pullback(g: &Membrane, w: &DifferentialForm) -> Result<Density> {
    check_pullback_shape(g, w)?;
    let n = g.n();
    if let (Some(cells), true) = (g.polynomial_cells(), w.is_polynomial()) {
        let densities = cells
            .iter()
            .map(|comps| {
                let jac: Vec<Vec<Poly>> = comps
                    .iter()
                    .map(|c| (0..n).map(|nu| c.derivative(nu)).collect())
                    .collect();
                let mut f = Poly::zero(n);
                for (index, coeff) in &w.terms {
                    let minor: Vec<Vec<Poly>> = index.iter().map(|&i| jac[i - 1].clone()).collect();
                    let det = poly_determinant(&minor, n);
                    if det.is_zero() {
                        continue;
                    }
                    let c = coeff.as_poly().expect("checked polynomial").substitute(comps);
                    f = &f + &(&c * &det);
                }
                f
            })
            .collect();
        return Ok(Density::polynomial(g.grid().clone(), densities));
    }
    let g = g.clone();
    let terms: Vec<(Vec<usize>, PointFn)> = w.terms.iter().map(|(k, c)| (k.clone(), c.as_fn())).collect();
    let grid = g.grid().clone();
    Ok(Density::from_fn(
        grid,
        Arc::new(move |t: &[f64]| {
            let x = g.eval(t);
            let cols = g.jacobian(t);
            terms
                .iter()
                .map(|(index, c)| {
                    let minor: Vec<Vec<Complex64>> = index
                        .iter()
                        .map(|&i| cols.iter().map(|col| col[i - 1]).collect())
                        .collect();
                    c(&x) * complex_determinant(&minor)
                })
                .sum()
        }),
    ))
}

/// `F*ω` for a polynomial map `F: ℝᵐ → ℝᵈ` and a `k`-form on `ℝᵈ`:
/// `Σ_J c_J(F) Σ_K det(∂F_J/∂x_K) dx_K`.
pub fn pullback_form(map: &PolyMap, w: &DifferentialForm) -> Result<DifferentialForm> {
    if map.target_dim() != w.dim {
        return Err(Error::DimensionMismatch(format!(
            "map targets dimension {}, form lives on {}",
            map.target_dim(),
            w.dim
        )));
    }
    if w.field == Field::Real && !map.is_real() {
        return Err(Error::FieldMismatch("complex map applied to a real form".into()));
    }
    let m = map.source_dim();
    let mut out = DifferentialForm::zero(m, w.degree, w.field)?;
    let jac = map.jacobian();
    let float_map = map.clone();
    for (index_j, coeff) in &w.terms {
        let pulled: CoefficientFunction = match coeff {
            CoefficientFunction::Polynomial(p) => CoefficientFunction::Polynomial(p.substitute(map.components())),
            CoefficientFunction::Callback { f, label, .. } => {
                let f = f.clone();
                let fm = float_map.clone();
                CoefficientFunction::callback(m, format!("{label}∘F"), Arc::new(move |x: &[Complex64]| f(&fm.eval(x))))
            }
        };
        for index_k in increasing_indices(m, w.degree) {
            let minor: Vec<Vec<Poly>> = index_j
                .iter()
                .map(|&i| index_k.iter().map(|&k| jac[i - 1][k - 1].clone()).collect())
                .collect();
            let det = poly_determinant(&minor, m);
            if det.is_zero() {
                continue;
            }
            out.add_term(index_k, pulled.mul(&CoefficientFunction::Polynomial(det)))?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::membranes::catalog;

    fn q(n: i64, d: i64) -> ExactScalar {
        ExactScalar::from_ratio(n, d)
    }

    fn dx(d: usize, i: usize) -> DifferentialForm {
        DifferentialForm::monomial(d, vec![i], CoefficientFunction::Polynomial(Poly::one(d)), Field::Real).unwrap()
    }

    #[test]
    fn wedge_examples() {
        assert!(wedge(&dx(3, 1), &dx(3, 1)).unwrap().is_zero());
        let a = wedge(&dx(3, 1), &dx(3, 2)).unwrap();
        let b = wedge(&dx(3, 2), &dx(3, 1)).unwrap();
        let sum = a.add(&b).unwrap();
        assert!(sum.is_zero());
        let x1dx2 = DifferentialForm::monomial(
            3,
            vec![2],
            CoefficientFunction::Polynomial(Poly::var(3, 0)),
            Field::Real,
        )
        .unwrap();
        let w = wedge(&x1dx2, &dx(3, 3)).unwrap();
        assert_eq!(w.coefficient(&[2, 3]).unwrap().as_poly(), Some(&Poly::var(3, 0)));
        assert_eq!(w.terms().count(), 1);
    }

    #[test]
    fn wedge_above_dimension_is_zero() {
        let w = wedge(&dx(1, 1), &dx(1, 1)).unwrap();
        assert!(w.is_zero());
        assert_eq!(w.degree(), 2);
    }

    #[test]
    fn pullback_examples() {
        let id = catalog::identity(3);
        let vol = DifferentialForm::coordinate_volume(3, 3, Field::Real).unwrap();
        let f = pullback(&id, &vol).unwrap();
        assert_eq!(f.exact_cells().unwrap()[0], Poly::one(3));

        let t = Poly::var(1, 0);
        let sq = Membrane::polynomial(Field::Real, 1, vec![&t * &t]).unwrap();
        let f = pullback(&sq, &dx(1, 1)).unwrap();
        assert_eq!(f.exact_cells().unwrap()[0], t.scale(&q(2, 1)));

        let t1 = Poly::var(2, 0);
        let t2 = Poly::var(2, 1);
        let g = Membrane::polynomial(Field::Real, 2, vec![t1.clone(), &t1 * &t2]).unwrap();
        let f = pullback(&g, &DifferentialForm::coordinate_volume(2, 2, Field::Real).unwrap()).unwrap();
        assert_eq!(f.exact_cells().unwrap()[0], t1);
    }

    #[test]
    fn pullback_rejects_wrong_degree() {
        let id = catalog::identity(2);
        assert!(matches!(pullback(&id, &dx(2, 1)), Err(Error::DegreeMismatch { .. })));
    }

    #[test]
    fn callback_pullback_matches_polynomial() {
        let t1 = Poly::var(2, 0);
        let t2 = Poly::var(2, 1);
        let g = Membrane::polynomial(Field::Real, 2, vec![&t1 + &(&t2 * &t2), &t1 * &t2, t2.clone()]).unwrap();
        let x = Poly::var(3, 0);
        let w =
            DifferentialForm::monomial(3, vec![1, 3], CoefficientFunction::Polynomial(&x * &x), Field::Real).unwrap();
        let exact = pullback(&g, &w).unwrap();
        let cb = CoefficientFunction::callback(3, "x1^2", Arc::new(|p: &[Complex64]| p[0] * p[0]));
        let wc = DifferentialForm::monomial(3, vec![1, 3], cb, Field::Real).unwrap();
        let fl = pullback(&g, &wc).unwrap();
        assert!(!fl.is_polynomial());
        for pt in [[0.1, 0.9], [0.5, 0.5], [0.73, 0.21]] {
            assert!((exact.eval(&pt) - fl.eval(&pt)).norm() < 1e-12);
        }
    }

    #[test]
    fn pullback_form_of_linear_map_scales_volume() {
        let a = vec![vec![q(2, 1), q(1, 1)], vec![q(1, 1), q(3, 1)]];
        let map = PolyMap::linear(&a);
        let vol = DifferentialForm::coordinate_volume(2, 2, Field::Real).unwrap();
        let pulled = pullback_form(&map, &vol).unwrap();
        assert_eq!(
            pulled.coefficient(&[1, 2]).unwrap().as_poly(),
            Some(&Poly::constant(2, q(5, 1)))
        );
    }

    #[test]
    fn determinant_three_by_three() {
        let m = vec![
            vec![
                Complex64::new(2.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
            ],
            vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(3.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
            vec![
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(4.0, 0.0),
            ],
        ];
        assert!((complex_determinant(&m) - Complex64::new(25.0, 0.0)).norm() < 1e-12);
    }
}
