//! Membranes `Iⁿ → X`, their composition and reparametrization, and formal
//! integer chains of membranes.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::exact::{rational_to_f64, ExactScalar, Rational};
use crate::forms::Field;
use crate::poly::{FloatPoly, Poly, PolyMap};

/// Default tolerance for base-point matching of non-polynomial membranes.
pub const BASE_POINT_TOL: f64 = 1e-10;

/// Points per axis used when sampling the boundary of `Iⁿ`.
pub const BOUNDARY_RESOLUTION: usize = 11;

/// Per-axis breakpoints in `(0, 1)`. The cells of the grid are the products of
/// the open intervals between consecutive breakpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    axes: Vec<Vec<Rational>>,
    axes_f: Vec<Vec<f64>>,
}

impl Grid {
    pub fn trivial(n: usize) -> Self {
        Grid {
            axes: vec![Vec::new(); n],
            axes_f: vec![Vec::new(); n],
        }
    }

    /// Sorts, dedups and drops breakpoints outside the open unit interval.
    pub fn new(axes: Vec<Vec<Rational>>) -> Self {
        let zero = Rational::zero();
        let one = Rational::one();
        let axes: Vec<Vec<Rational>> = axes
            .into_iter()
            .map(|mut a| {
                a.retain(|b| *b > zero && *b < one);
                a.sort();
                a.dedup();
                a
            })
            .collect();
        let axes_f = axes.iter().map(|a| a.iter().map(rational_to_f64).collect()).collect();
        Grid { axes, axes_f }
    }

    pub fn from_f64(axes: Vec<Vec<f64>>) -> Self {
        Grid::new(
            axes.into_iter()
                .map(|a| a.into_iter().filter_map(Rational::from_float).collect())
                .collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.axes.len()
    }

    pub fn breaks(&self, axis: usize) -> &[Rational] {
        &self.axes[axis]
    }

    pub fn breaks_f(&self, axis: usize) -> &[f64] {
        &self.axes_f[axis]
    }

    pub fn is_trivial(&self) -> bool {
        self.axes.iter().all(Vec::is_empty)
    }

    /// Closed intervals `[a, b]` along one axis, from 0 to 1.
    pub fn intervals(&self, axis: usize) -> Vec<(Rational, Rational)> {
        let mut pts = vec![Rational::zero()];
        pts.extend(self.axes[axis].iter().cloned());
        pts.push(Rational::one());
        pts.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect()
    }

    pub fn intervals_per_axis(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len() + 1).collect()
    }

    pub fn num_cells(&self) -> usize {
        self.intervals_per_axis().iter().product()
    }

    /// Mixed-radix cell index, axis 0 most significant.
    pub fn cell_index(&self, coords: &[usize]) -> usize {
        let mut idx = 0;
        for (axis, &c) in coords.iter().enumerate() {
            idx = idx * (self.axes[axis].len() + 1) + c;
        }
        idx
    }

    pub fn cell_coords(&self, mut cell: usize) -> Vec<usize> {
        let sizes = self.intervals_per_axis();
        let mut coords = vec![0; sizes.len()];
        for axis in (0..sizes.len()).rev() {
            coords[axis] = cell % sizes[axis];
            cell /= sizes[axis];
        }
        coords
    }

    /// Interval index of `t` along an axis: the number of breakpoints strictly below `t`.
    pub fn locate_axis(&self, axis: usize, t: f64) -> usize {
        self.axes_f[axis].partition_point(|&b| b < t)
    }

    pub fn locate(&self, t: &[f64]) -> usize {
        let mut idx = 0;
        for (axis, &x) in t.iter().enumerate() {
            idx = idx * (self.axes[axis].len() + 1) + self.locate_axis(axis, x);
        }
        idx
    }

    pub fn merge(&self, other: &Grid) -> Grid {
        assert_eq!(self.n(), other.n());
        Grid::new(
            self.axes
                .iter()
                .zip(&other.axes)
                .map(|(a, b)| a.iter().chain(b).cloned().collect())
                .collect(),
        )
    }

    /// Splits every interval into `pieces` equal parts.
    pub fn refine(&self, pieces: usize) -> Grid {
        if pieces <= 1 {
            return self.clone();
        }
        let k = Rational::from_integer((pieces as i64).into());
        Grid::new(
            (0..self.n())
                .map(|axis| {
                    let mut pts = Vec::new();
                    for (a, b) in self.intervals(axis) {
                        let h = (&b - &a) / &k;
                        for j in 0..pieces {
                            pts.push(&a + &h * Rational::from_integer((j as i64).into()));
                        }
                    }
                    pts
                })
                .collect(),
        )
    }
}

impl Grid {
    /// `[a, b]` along every axis for one cell.
    pub fn cell_bounds(&self, cell: usize) -> Vec<(Rational, Rational)> {
        self.cell_coords(cell)
            .iter()
            .enumerate()
            .map(|(axis, &c)| {
                let lo = if c == 0 {
                    Rational::zero()
                } else {
                    self.axes[axis][c - 1].clone()
                };
                let hi = self.axes[axis].get(c).cloned().unwrap_or_else(Rational::one);
                (lo, hi)
            })
            .collect()
    }
}

/// Floating view of a polynomial on one grid cell, expanded in the centred
/// coordinates `x = (2t − a − b)/(b − a) ∈ [−1, 1]`. High-degree expansions
/// in `t` itself lose most of their digits to cancellation.
#[derive(Clone, Debug)]
pub struct CellPoly {
    center: Vec<f64>,
    inv_half: Vec<f64>,
    poly: FloatPoly,
}

impl CellPoly {
    pub fn new(p: &Poly, bounds: &[(Rational, Rational)]) -> Self {
        let two = Rational::from_integer(2.into());
        let center: Vec<Rational> = bounds.iter().map(|(a, b)| (a + b) / &two).collect();
        let half: Vec<Rational> = bounds.iter().map(|(a, b)| (b - a) / &two).collect();
        CellPoly {
            center: center.iter().map(rational_to_f64).collect(),
            inv_half: half.iter().map(|h| 1.0 / rational_to_f64(h)).collect(),
            poly: p.affine_substitute(&center, &half).to_float(),
        }
    }

    pub fn on_grid(p: &Poly, grid: &Grid, cell: usize) -> Self {
        Self::new(p, &grid.cell_bounds(cell))
    }

    pub fn is_zero(&self) -> bool {
        self.poly.is_zero()
    }

    pub fn eval_real(&self, t: &[f64]) -> Complex64 {
        let x: Vec<f64> = t
            .iter()
            .zip(&self.center)
            .zip(&self.inv_half)
            .map(|((&t, &c), &h)| (t - c) * h)
            .collect();
        self.poly.eval_real(&x)
    }
}

pub type EvalFn = Arc<dyn Fn(&[f64]) -> Vec<Complex64> + Send + Sync>;
/// Returns the Jacobian as `n` columns, column `ν` holding `∂g/∂t_ν`.
pub type JacobianFn = Arc<dyn Fn(&[f64]) -> Vec<Vec<Complex64>> + Send + Sync>;
/// Real map `Iⁿ → Iⁿ` and its Jacobian, as used by reparametrizations.
pub type RealMapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type RealJacobianFn = Arc<dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync>;

struct PolyCells {
    cells: Vec<Vec<Poly>>,
    float: Vec<Vec<CellPoly>>,
    jac_float: Vec<Vec<Vec<CellPoly>>>,
}

#[derive(Clone)]
enum Repr {
    Polynomial(Arc<PolyCells>),
    Callback { eval: EvalFn, jacobian: JacobianFn },
}

/// A piecewise-smooth map `Iⁿ → ℝᵈ` (or `ℂᵈ`). Smooth on each open cell of `grid`.
#[derive(Clone)]
pub struct Membrane {
    n: usize,
    d: usize,
    field: Field,
    grid: Grid,
    repr: Repr,
}

impl fmt::Debug for Membrane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Membrane")
            .field("n", &self.n)
            .field("d", &self.d)
            .field("field", &self.field)
            .field("grid", &self.grid.axes_f)
            .field("polynomial", &self.is_polynomial())
            .finish()
    }
}

impl Membrane {
    /// A piecewise-polynomial membrane: one list of `d` polynomials in `n`
    /// variables per grid cell. Continuity across shared faces is verified exactly.
    pub fn piecewise_polynomial(field: Field, grid: Grid, cells: Vec<Vec<Poly>>) -> Result<Self> {
        let n = grid.n();
        if cells.len() != grid.num_cells() {
            return Err(Error::DimensionMismatch(format!(
                "{} cells supplied for a grid with {}",
                cells.len(),
                grid.num_cells()
            )));
        }
        let d = cells.first().map(Vec::len).unwrap_or(0);
        for (k, comps) in cells.iter().enumerate() {
            if comps.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "cell {k} has {} components, expected {d}",
                    comps.len()
                )));
            }
            if let Some(p) = comps.iter().find(|p| p.nvars() != n) {
                return Err(Error::DimensionMismatch(format!(
                    "cell {k} component has {} variables, expected {n}",
                    p.nvars()
                )));
            }
            if field == Field::Real && !comps.iter().all(Poly::is_real) {
                return Err(Error::FieldMismatch("complex coefficients in a real membrane".into()));
            }
        }
        check_continuity(&grid, &cells)?;
        Ok(Self::from_cells_unchecked(field, grid, cells))
    }

    fn from_cells_unchecked(field: Field, grid: Grid, cells: Vec<Vec<Poly>>) -> Self {
        let n = grid.n();
        let d = cells.first().map(Vec::len).unwrap_or(0);
        let float = cells
            .iter()
            .enumerate()
            .map(|(k, c)| c.iter().map(|p| CellPoly::on_grid(p, &grid, k)).collect())
            .collect();
        let jac_float = cells
            .iter()
            .enumerate()
            .map(|(k, c)| {
                (0..n)
                    .map(|nu| {
                        c.iter()
                            .map(|p| CellPoly::on_grid(&p.derivative(nu), &grid, k))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Membrane {
            n,
            d,
            field,
            grid,
            repr: Repr::Polynomial(Arc::new(PolyCells {
                cells,
                float,
                jac_float,
            })),
        }
    }

    pub fn polynomial(field: Field, n: usize, components: Vec<Poly>) -> Result<Self> {
        Self::piecewise_polynomial(field, Grid::trivial(n), vec![components])
    }

    pub fn from_fn(n: usize, d: usize, field: Field, grid: Grid, eval: EvalFn, jacobian: JacobianFn) -> Self {
        assert_eq!(grid.n(), n);
        Membrane {
            n,
            d,
            field,
            grid,
            repr: Repr::Callback { eval, jacobian },
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn is_polynomial(&self) -> bool {
        matches!(self.repr, Repr::Polynomial(_))
    }

    /// Exact component polynomials per grid cell, if this is a polynomial membrane.
    pub fn polynomial_cells(&self) -> Option<&[Vec<Poly>]> {
        match &self.repr {
            Repr::Polynomial(p) => Some(&p.cells),
            Repr::Callback { .. } => None,
        }
    }

    pub fn eval(&self, t: &[f64]) -> Vec<Complex64> {
        match &self.repr {
            Repr::Polynomial(p) => {
                let cell = self.grid.locate(t);
                p.float[cell].iter().map(|c| c.eval_real(t)).collect()
            }
            Repr::Callback { eval, .. } => eval(t),
        }
    }

    /// Columns `∂g/∂t_ν`, `ν = 1..n`.
    pub fn jacobian(&self, t: &[f64]) -> Vec<Vec<Complex64>> {
        match &self.repr {
            Repr::Polynomial(p) => {
                let cell = self.grid.locate(t);
                p.jac_float[cell]
                    .iter()
                    .map(|col| col.iter().map(|c| c.eval_real(t)).collect())
                    .collect()
            }
            Repr::Callback { jacobian, .. } => jacobian(t),
        }
    }

    /// Value at the corner `(0, …, 0)`, exactly when available.
    pub fn corner_value_exact(&self) -> Option<Vec<ExactScalar>> {
        let cells = self.polynomial_cells()?;
        let zero = vec![ExactScalar::zero(); self.n];
        Some(cells[0].iter().map(|p| p.eval_exact(&zero)).collect())
    }

    pub fn corner_value(&self) -> Vec<Complex64> {
        self.eval(&vec![0.0; self.n])
    }
}

fn check_continuity(grid: &Grid, cells: &[Vec<Poly>]) -> Result<()> {
    for axis in 0..grid.n() {
        for (k, b) in grid.breaks(axis).iter().enumerate() {
            let bv = ExactScalar::real(b.clone());
            for cell in 0..cells.len() {
                let coords = grid.cell_coords(cell);
                if coords[axis] != k {
                    continue;
                }
                let mut upper = coords.clone();
                upper[axis] = k + 1;
                let other = grid.cell_index(&upper);
                for (p, q) in cells[cell].iter().zip(&cells[other]) {
                    if p.restrict(axis, &bv) != q.restrict(axis, &bv) {
                        return Err(Error::DimensionMismatch(format!(
                            "piecewise membrane is discontinuous across t_{} = {}",
                            axis + 1,
                            crate::exact::format_rational(b)
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

fn dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Samples `∂Iⁿ` on a regular grid and checks `max |g − x₀| ≤ tol`.
pub fn is_closed(g: &Membrane, x0: &[Complex64], tol: f64) -> bool {
    is_closed_with_resolution(g, x0, tol, BOUNDARY_RESOLUTION)
}

pub fn is_closed_with_resolution(g: &Membrane, x0: &[Complex64], tol: f64, resolution: usize) -> bool {
    if x0.len() != g.d {
        return false;
    }
    let n = g.n;
    let res = resolution.max(2);
    let ticks: Vec<f64> = (0..res).map(|k| k as f64 / (res - 1) as f64).collect();
    let face_points = res.pow((n - 1) as u32);
    let mut t = vec![0.0; n];
    for axis in 0..n {
        for face in [0.0, 1.0] {
            for idx in 0..face_points {
                let mut rem = idx;
                for (j, slot) in t.iter_mut().enumerate() {
                    if j == axis {
                        *slot = face;
                    } else {
                        *slot = ticks[rem % res];
                        rem /= res;
                    }
                }
                if dist(&g.eval(&t), x0) > tol {
                    return false;
                }
            }
        }
    }
    true
}

/// Exact closedness for polynomial membranes: every cell touching a face
/// restricts to the constant `x₀` on that face. `None` for callback membranes.
pub fn is_closed_exact(g: &Membrane, x0: &[ExactScalar]) -> Option<bool> {
    let cells = g.polynomial_cells()?;
    if x0.len() != g.d {
        return Some(false);
    }
    let sizes = g.grid.intervals_per_axis();
    for (cell, comps) in cells.iter().enumerate() {
        let coords = g.grid.cell_coords(cell);
        for axis in 0..g.n {
            let faces = [(0usize, ExactScalar::zero()), (sizes[axis] - 1, ExactScalar::one())];
            for (edge, value) in faces {
                if coords[axis] != edge {
                    continue;
                }
                for (p, x) in comps.iter().zip(x0) {
                    match p.restrict(axis, &value).as_constant() {
                        Some(c) if c == *x => {}
                        _ => return Some(false),
                    }
                }
            }
        }
    }
    Some(true)
}

/// The base point of a closed membrane, verified exactly when possible.
fn base_point(g: &Membrane, tol: f64) -> Result<BasePoint> {
    if let Some(x0) = g.corner_value_exact() {
        if is_closed_exact(g, &x0) == Some(true) {
            return Ok(BasePoint::Exact(x0));
        }
        return Err(Error::NotClosed(
            "boundary does not collapse to the corner value".into(),
        ));
    }
    let x0 = g.corner_value();
    if is_closed(g, &x0, tol) {
        Ok(BasePoint::Float(x0))
    } else {
        Err(Error::NotClosed(
            "boundary samples deviate from the corner value".into(),
        ))
    }
}

#[derive(Clone, Debug)]
enum BasePoint {
    Exact(Vec<ExactScalar>),
    Float(Vec<Complex64>),
}

impl BasePoint {
    fn float(&self) -> Vec<Complex64> {
        match self {
            BasePoint::Exact(v) => v.iter().map(ExactScalar::to_complex64).collect(),
            BasePoint::Float(v) => v.clone(),
        }
    }

    fn matches(&self, other: &BasePoint, tol: f64) -> bool {
        match (self, other) {
            (BasePoint::Exact(a), BasePoint::Exact(b)) => a == b,
            _ => dist(&self.float(), &other.float()) <= tol,
        }
    }
}

/// The product `g₁g₂` of two closed membranes with a common base point:
/// `g₁(2t)` on the lower cube, `g₂(2t − 1)` on the upper cube, `x₀` elsewhere.
pub fn compose(g1: &Membrane, g2: &Membrane) -> Result<Membrane> {
    compose_with_tol(g1, g2, BASE_POINT_TOL)
}

pub fn compose_with_tol(g1: &Membrane, g2: &Membrane, tol: f64) -> Result<Membrane> {
    if g1.n != g2.n || g1.d != g2.d {
        return Err(Error::DimensionMismatch(format!(
            "cannot compose ({}, {}) with ({}, {})",
            g1.n, g1.d, g2.n, g2.d
        )));
    }
    if g1.field != g2.field {
        return Err(Error::FieldMismatch("composing real and complex membranes".into()));
    }
    let b1 = base_point(g1, tol)?;
    let b2 = base_point(g2, tol)?;
    if !b1.matches(&b2, tol) {
        return Err(Error::BasePointMismatch(format!(
            "{:?} vs {:?}",
            b1.float(),
            b2.float()
        )));
    }
    let n = g1.n;
    let half = Rational::new(1.into(), 2.into());
    let grid = Grid::new(
        (0..n)
            .map(|axis| {
                let mut pts: Vec<Rational> = g1.grid.breaks(axis).iter().map(|b| b * &half).collect();
                pts.push(half.clone());
                pts.extend(g2.grid.breaks(axis).iter().map(|b| &half + b * &half));
                pts
            })
            .collect(),
    );

    match (g1.polynomial_cells(), g2.polynomial_cells(), &b1) {
        (Some(c1), Some(c2), BasePoint::Exact(x0)) => {
            let two = ExactScalar::from_int(2);
            let lower_sub: Vec<Poly> = (0..n).map(|i| Poly::var(n, i).scale(&two)).collect();
            let upper_sub: Vec<Poly> = (0..n).map(|i| &Poly::var(n, i).scale(&two) - &Poly::one(n)).collect();
            let constant: Vec<Poly> = x0.iter().map(|x| Poly::constant(n, x.clone())).collect();
            let lower_sizes = g1.grid.intervals_per_axis();
            let cells = (0..grid.num_cells())
                .map(|cell| {
                    let coords = grid.cell_coords(cell);
                    if coords.iter().zip(&lower_sizes).all(|(c, m)| c < m) {
                        let src = g1.grid.cell_index(&coords);
                        c1[src].iter().map(|p| p.substitute(&lower_sub)).collect()
                    } else if coords.iter().zip(&lower_sizes).all(|(c, m)| c >= m) {
                        let shifted: Vec<usize> = coords.iter().zip(&lower_sizes).map(|(c, m)| c - m).collect();
                        let src = g2.grid.cell_index(&shifted);
                        c2[src].iter().map(|p| p.substitute(&upper_sub)).collect()
                    } else {
                        constant.clone()
                    }
                })
                .collect();
            Ok(Membrane::from_cells_unchecked(g1.field, grid, cells))
        }
        _ => {
            let x0 = b1.float();
            let (a, b) = (g1.clone(), g2.clone());
            let (ja, jb) = (g1.clone(), g2.clone());
            let x0c = x0.clone();
            let eval: EvalFn = Arc::new(move |t: &[f64]| {
                if t.iter().all(|&v| v <= 0.5) {
                    a.eval(&t.iter().map(|v| 2.0 * v).collect::<Vec<_>>())
                } else if t.iter().all(|&v| v > 0.5) {
                    b.eval(&t.iter().map(|v| 2.0 * v - 1.0).collect::<Vec<_>>())
                } else {
                    x0c.clone()
                }
            });
            let d = g1.d;
            let jacobian: JacobianFn = Arc::new(move |t: &[f64]| {
                let scale = |cols: Vec<Vec<Complex64>>| -> Vec<Vec<Complex64>> {
                    cols.into_iter()
                        .map(|c| c.into_iter().map(|v| v * 2.0).collect())
                        .collect()
                };
                if t.iter().all(|&v| v <= 0.5) {
                    scale(ja.jacobian(&t.iter().map(|v| 2.0 * v).collect::<Vec<_>>()))
                } else if t.iter().all(|&v| v > 0.5) {
                    scale(jb.jacobian(&t.iter().map(|v| 2.0 * v - 1.0).collect::<Vec<_>>()))
                } else {
                    vec![vec![Complex64::new(0.0, 0.0); d]; t.len()]
                }
            });
            Ok(Membrane::from_fn(n, d, g1.field, grid, eval, jacobian))
        }
    }
}

#[derive(Clone)]
enum ReparamMap {
    Polynomial(PolyMap),
    Callback {
        eval: RealMapFn,
        /// `jacobian[i][j] = ∂φ_i/∂x_j`
        jacobian: RealJacobianFn,
    },
}

/// A candidate reparametrization `φ: Iⁿ → Iⁿ`.
#[derive(Clone)]
pub struct Reparametrization {
    n: usize,
    map: ReparamMap,
    grid: Grid,
}

impl fmt::Debug for Reparametrization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Reparametrization")
            .field("n", &self.n)
            .field("polynomial", &matches!(self.map, ReparamMap::Polynomial(_)))
            .finish()
    }
}

impl Reparametrization {
    pub fn polynomial(map: PolyMap) -> Result<Self> {
        if map.source_dim() != map.target_dim() {
            return Err(Error::DimensionMismatch("reparametrization must map Iⁿ to Iⁿ".into()));
        }
        if !map.is_real() {
            return Err(Error::FieldMismatch("reparametrization must be real".into()));
        }
        Ok(Reparametrization {
            n: map.source_dim(),
            grid: Grid::trivial(map.source_dim()),
            map: ReparamMap::Polynomial(map),
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::polynomial(PolyMap::identity(n)).expect("identity is a valid reparametrization")
    }

    pub fn from_fn(n: usize, grid: Grid, eval: RealMapFn, jacobian: RealJacobianFn) -> Self {
        Reparametrization {
            n,
            map: ReparamMap::Callback { eval, jacobian },
            grid,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn poly_map(&self) -> Option<&PolyMap> {
        match &self.map {
            ReparamMap::Polynomial(p) => Some(p),
            ReparamMap::Callback { .. } => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        match &self.map {
            ReparamMap::Polynomial(p) => {
                let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                p.eval(&xc).into_iter().map(|v| v.re).collect()
            }
            ReparamMap::Callback { eval, .. } => eval(x),
        }
    }

    /// `jacobian[i][j] = ∂φ_i/∂x_j`.
    pub fn jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        match &self.map {
            ReparamMap::Polynomial(p) => {
                let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                p.jacobian()
                    .iter()
                    .map(|row| row.iter().map(|e| e.eval(&xc).re).collect())
                    .collect()
            }
            ReparamMap::Callback { jacobian, .. } => jacobian(x),
        }
    }

    /// Certifies monotonicity and bijectivity by sampling: `x ≤ y ⇒ φ(x) ≤ φ(y)`
    /// on a 10ⁿ grid (checked along axis-neighbour pairs, which generate the
    /// order by transitivity), nonnegative Jacobian entries and positive
    /// Jacobian determinant at cell midpoints, corners fixed, image inside Iⁿ.
    pub fn certify(&self) -> Result<()> {
        const TICKS: usize = 10;
        const SLACK: f64 = 1e-12;
        let n = self.n;
        let ticks: Vec<f64> = (0..TICKS).map(|k| k as f64 / (TICKS - 1) as f64).collect();
        let total = TICKS.pow(n as u32);
        let point = |mut idx: usize, pts: &[f64]| -> Vec<f64> {
            let mut x = vec![0.0; n];
            for slot in x.iter_mut().rev() {
                *slot = pts[idx % pts.len()];
                idx /= pts.len();
            }
            x
        };
        let values: Vec<Vec<f64>> = (0..total).map(|i| self.eval(&point(i, &ticks))).collect();
        for (i, v) in values.iter().enumerate() {
            if v.iter().any(|&c| !(-SLACK..=1.0 + SLACK).contains(&c)) {
                return Err(Error::NotMonotonic(format!("image {v:?} leaves the unit cube")));
            }
            let mut stride = 1;
            for _axis in (0..n).rev() {
                let coord = (i / stride) % TICKS;
                if coord + 1 < TICKS {
                    let w = &values[i + stride];
                    if v.iter().zip(w).any(|(a, b)| *b < a - SLACK) {
                        return Err(Error::NotMonotonic(format!(
                            "order reversed between samples {:?} and {:?}",
                            point(i, &ticks),
                            point(i + stride, &ticks)
                        )));
                    }
                }
                stride *= TICKS;
            }
        }
        let first = &values[0];
        let last = &values[total - 1];
        if first.iter().any(|c| c.abs() > SLACK) || last.iter().any(|c| (c - 1.0).abs() > SLACK) {
            return Err(Error::NotMonotonic("corners are not fixed".into()));
        }
        let mids: Vec<f64> = (0..TICKS - 1).map(|k| (k as f64 + 0.5) / (TICKS - 1) as f64).collect();
        for i in 0..(TICKS - 1).pow(n as u32) {
            let x = point(i, &mids);
            let jac = self.jacobian(&x);
            if jac.iter().flatten().any(|&e| e < -SLACK) {
                return Err(Error::NotMonotonic(format!("negative Jacobian entry at {x:?}")));
            }
            if determinant(&jac) <= 0.0 {
                return Err(Error::NotMonotonic(format!(
                    "Jacobian is singular or reversing at {x:?}"
                )));
            }
        }
        Ok(())
    }
}

fn determinant(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        let (top, rest) = a.split_at_mut(col + 1);
        let p = &top[col];
        for r in rest {
            let f = r[col] / p[col];
            for (x, y) in r[col..].iter_mut().zip(&p[col..]) {
                *x -= f * y;
            }
        }
    }
    det
}

/// Whether each component `i` of the map depends on `x_i` only.
fn is_axis_separable(map: &PolyMap) -> bool {
    map.components().iter().enumerate().all(|(i, c)| {
        c.terms()
            .all(|(e, _)| e.iter().enumerate().all(|(j, &k)| j == i || k == 0))
    })
}

/// `g ∘ φ` for a certified monotonic `φ`.
pub fn reparametrize(g: &Membrane, phi: &Reparametrization) -> Result<Membrane> {
    if phi.n != g.n {
        return Err(Error::DimensionMismatch(format!(
            "reparametrization acts on I^{} but the membrane is defined on I^{}",
            phi.n, g.n
        )));
    }
    phi.certify()?;
    if let (Some(cells), Some(map)) = (g.polynomial_cells(), phi.poly_map()) {
        if cells.len() == 1 {
            let comps = cells[0].iter().map(|c| c.substitute(map.components())).collect();
            return Ok(Membrane::from_cells_unchecked(g.field, phi.grid.clone(), vec![comps]));
        }
    }
    // Preimages of the membrane's breakpoints are only available for maps that act axis by axis.
    let mut grid = phi.grid.clone();
    if let Some(map) = phi.poly_map().filter(|m| is_axis_separable(m)) {
        let axes = (0..g.n)
            .map(|axis| {
                g.grid
                    .breaks_f(axis)
                    .iter()
                    .map(|&b| bisect_preimage(|x| phi_axis(map, axis, x), b))
                    .collect()
            })
            .collect();
        grid = grid.merge(&Grid::from_f64(axes));
    }
    let (ge, gj) = (g.clone(), g.clone());
    let (pe, pj) = (phi.clone(), phi.clone());
    let eval: EvalFn = Arc::new(move |x: &[f64]| ge.eval(&pe.eval(x)));
    let d = g.d;
    let jacobian: JacobianFn = Arc::new(move |x: &[f64]| {
        let y = pj.eval(x);
        let gcols = gj.jacobian(&y);
        let pjac = pj.jacobian(x);
        (0..x.len())
            .map(|nu| {
                (0..d)
                    .map(|i| gcols.iter().enumerate().map(|(mu, col)| col[i] * pjac[mu][nu]).sum())
                    .collect()
            })
            .collect()
    });
    Ok(Membrane::from_fn(g.n, g.d, g.field, grid, eval, jacobian))
}

fn phi_axis(map: &PolyMap, axis: usize, x: f64) -> f64 {
    let mut pt = vec![Complex64::new(0.0, 0.0); map.source_dim()];
    pt[axis] = Complex64::new(x, 0.0);
    map.components()[axis].eval(&pt).re
}

fn bisect_preimage(f: impl Fn(f64) -> f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `F ∘ g` for a polynomial map `F` on the target.
pub fn push_forward(map: &PolyMap, g: &Membrane) -> Result<Membrane> {
    if map.source_dim() != g.d {
        return Err(Error::DimensionMismatch(format!(
            "map acts on dimension {}, membrane targets dimension {}",
            map.source_dim(),
            g.d
        )));
    }
    let field = if map.is_real() { g.field } else { Field::Complex };
    if let Some(cells) = g.polynomial_cells() {
        let cells = cells
            .iter()
            .map(|comps| map.components().iter().map(|c| c.substitute(comps)).collect())
            .collect();
        return Ok(Membrane::from_cells_unchecked(field, g.grid.clone(), cells));
    }
    let jac = map.jacobian();
    let (ge, gj) = (g.clone(), g.clone());
    let fe = map.clone();
    let eval: EvalFn = Arc::new(move |t: &[f64]| fe.eval(&ge.eval(t)));
    let jacobian: JacobianFn = Arc::new(move |t: &[f64]| {
        let x = gj.eval(t);
        let dfx: Vec<Vec<Complex64>> = jac.iter().map(|row| row.iter().map(|e| e.eval(&x)).collect()).collect();
        gj.jacobian(t)
            .iter()
            .map(|col| {
                dfx.iter()
                    .map(|row| row.iter().zip(col).map(|(a, b)| a * b).sum())
                    .collect()
            })
            .collect()
    });
    Ok(Membrane::from_fn(
        g.n,
        map.target_dim(),
        field,
        g.grid.clone(),
        eval,
        jacobian,
    ))
}

/// A formal integer combination of membranes.
#[derive(Clone, Debug, Default)]
pub struct MembraneChain {
    terms: Vec<(i64, Membrane)>,
}

impl MembraneChain {
    pub fn new() -> Self {
        MembraneChain { terms: Vec::new() }
    }

    pub fn push(&mut self, coefficient: i64, g: Membrane) -> Result<()> {
        if let Some((_, first)) = self.terms.first() {
            if first.n != g.n || first.d != g.d || first.field != g.field {
                return Err(Error::DimensionMismatch("chain terms must share (n, d, field)".into()));
            }
        }
        self.terms.push((coefficient, g));
        Ok(())
    }

    pub fn terms(&self) -> &[(i64, Membrane)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Expands `(α₁ − 1)⋯(α_r − 1)` in the composition ring. Terms are ordered by
/// decreasing subset size, lexicographically within a size; each term is the
/// left-to-right composition of its subset with coefficient `(−1)^{r−|S|}`;
/// the empty subset is the constant membrane at the base point.
pub fn expand_vanishing_chain(alphas: &[Membrane]) -> Result<MembraneChain> {
    let Some(first) = alphas.first() else {
        return Err(Error::DimensionMismatch("need at least one membrane".into()));
    };
    let base = base_point(first, BASE_POINT_TOL)?;
    for a in &alphas[1..] {
        if !base_point(a, BASE_POINT_TOL)?.matches(&base, BASE_POINT_TOL) {
            return Err(Error::BasePointMismatch("alphas do not share a base point".into()));
        }
    }
    let r = alphas.len();
    let mut chain = MembraneChain::new();
    for size in (0..=r).rev() {
        for subset in combinations(r, size) {
            let coefficient = if (r - size).is_multiple_of(2) { 1 } else { -1 };
            let g = match subset.split_first() {
                None => match &base {
                    BasePoint::Exact(x0) => catalog::constant(first.n, x0.clone(), first.field)?,
                    BasePoint::Float(x0) => catalog::constant_f64(first.n, x0.clone(), first.field),
                },
                Some((&head, rest)) => {
                    let mut acc = alphas[head].clone();
                    for &k in rest {
                        acc = compose(&acc, &alphas[k])?;
                    }
                    acc
                }
            };
            chain.push(coefficient, g)?;
        }
    }
    Ok(chain)
}

fn combinations(r: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, r: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..r {
            if r - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, r, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, r, k, &mut Vec::new(), &mut out);
    out
}

/// Ready-made membranes.
pub mod catalog {
    use super::*;

    /// `g ≡ x₀`.
    pub fn constant(n: usize, x0: Vec<ExactScalar>, field: Field) -> Result<Membrane> {
        let comps = x0.into_iter().map(|x| Poly::constant(n, x)).collect();
        Membrane::polynomial(field, n, comps)
    }

    pub fn constant_f64(n: usize, x0: Vec<Complex64>, field: Field) -> Membrane {
        let d = x0.len();
        let eval: EvalFn = Arc::new(move |_t: &[f64]| x0.clone());
        let jacobian: JacobianFn = Arc::new(move |t: &[f64]| vec![vec![Complex64::new(0.0, 0.0); d]; t.len()]);
        Membrane::from_fn(n, d, field, Grid::trivial(n), eval, jacobian)
    }

    /// The identity `Iⁿ → ℝⁿ`.
    pub fn identity(n: usize) -> Membrane {
        Membrane::polynomial(Field::Real, n, (0..n).map(|i| Poly::var(n, i)).collect())
            .expect("identity components are valid")
    }

    /// `∏_ν t_ν²(1 − t_ν)²`, vanishing to second order on `∂Iⁿ`.
    pub fn bump_profile(n: usize) -> Poly {
        let mut b = Poly::one(n);
        for nu in 0..n {
            let t = Poly::var(n, nu);
            let f = &t * &(&Poly::one(n) - &t);
            b = &b * &(&f * &f);
        }
        b
    }

    /// `g(t) = x₀ + b(t)·P(t)` with `b` the bump profile and `P` a vector of
    /// polynomials in `t` (a constant vector gives the plain bump `x₀ + b·v`).
    pub fn bump(n: usize, x0: Vec<ExactScalar>, profile: Vec<Poly>, field: Field) -> Result<Membrane> {
        if x0.len() != profile.len() {
            return Err(Error::DimensionMismatch("base point and profile lengths differ".into()));
        }
        let b = bump_profile(n);
        let comps = x0
            .into_iter()
            .zip(profile)
            .map(|(x, p)| &Poly::constant(n, x) + &(&b * &p))
            .collect();
        Membrane::polynomial(field, n, comps)
    }

    pub fn bump_vector(n: usize, x0: Vec<ExactScalar>, v: Vec<ExactScalar>, field: Field) -> Result<Membrane> {
        let profile = v.into_iter().map(|c| Poly::constant(n, c)).collect();
        bump(n, x0, profile, field)
    }

    /// `g(t) = (γ_1(t_1), …, γ_n(t_n))` from univariate polynomial paths.
    pub fn product_of_paths(paths: Vec<Poly>, field: Field) -> Result<Membrane> {
        let n = paths.len();
        let comps = paths
            .iter()
            .enumerate()
            .map(|(nu, p)| {
                if p.nvars() != 1 {
                    return Err(Error::DimensionMismatch("paths must be univariate".into()));
                }
                Ok(p.substitute(&[Poly::var(n, nu)]))
            })
            .collect::<Result<Vec<_>>>()?;
        Membrane::polynomial(field, n, comps)
    }

    /// A closed trigonometric membrane into `ℝ^{2n}`: each pair of target
    /// coordinates winds once around a circle in `t_ν`, scaled by the envelope
    /// `∏_ν sin(π t_ν)` so the whole boundary maps to `x₀`.
    pub fn torus(n: usize, x0: Vec<f64>, radius: f64) -> Result<Membrane> {
        if x0.len() != 2 * n {
            return Err(Error::DimensionMismatch(format!(
                "torus into R^{} needs a base point of length {}",
                2 * n,
                2 * n
            )));
        }
        let base = x0.clone();
        let eval: EvalFn = Arc::new(move |t: &[f64]| {
            let env: f64 = t.iter().map(|&v| (PI * v).sin()).product::<f64>() * radius;
            (0..2 * n)
                .map(|i| {
                    let nu = i / 2;
                    let angle = 2.0 * PI * t[nu];
                    let trig = if i % 2 == 0 { angle.cos() } else { angle.sin() };
                    Complex64::new(base[i] + env * trig, 0.0)
                })
                .collect()
        });
        let jacobian: JacobianFn = Arc::new(move |t: &[f64]| {
            let sines: Vec<f64> = t.iter().map(|&v| (PI * v).sin()).collect();
            (0..n)
                .map(|mu| {
                    let others: f64 = sines
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| *k != mu)
                        .map(|(_, s)| s)
                        .product();
                    let denv = radius * others * PI * (PI * t[mu]).cos();
                    let env = radius * others * sines[mu];
                    (0..2 * n)
                        .map(|i| {
                            let nu = i / 2;
                            let angle = 2.0 * PI * t[nu];
                            let (trig, dtrig) = if i % 2 == 0 {
                                (angle.cos(), -2.0 * PI * angle.sin())
                            } else {
                                (angle.sin(), 2.0 * PI * angle.cos())
                            };
                            let mut v = denv * trig;
                            if nu == mu {
                                v += env * dtrig;
                            }
                            Complex64::new(v, 0.0)
                        })
                        .collect()
                })
                .collect()
        });
        Ok(Membrane::from_fn(
            n,
            2 * n,
            Field::Real,
            Grid::trivial(n),
            eval,
            jacobian,
        ))
    }
}
