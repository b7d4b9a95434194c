//! Tensor-product Gauss–Legendre quadrature over `D_ρ`, mapped onto each
//! order simplex by the Duffy substitution.

use num_complex::Complex64;
use rayon::prelude::*;

use super::{event_cells, for_each_product, interval_assignments, KahanSum};
use crate::combinatorics::ObserverPermutations;
use crate::exact::rational_to_f64;
use crate::forms::Density;
use crate::membranes::Grid;

use super::gauss::gauss_legendre;

/// Points per parallel work item; fixed so the reduction order never depends on thread count.
const CHUNK: usize = 1024;

/// `q^m` nodes of the unit order simplex `0 < y₁ < ⋯ < y_m < 1` with weights,
/// from `y_m = u_m`, `y_k = y_{k+1} u_k` and Jacobian `∏_k u_k^{k-1}`.
fn simplex_rule(m: usize, nodes: &[f64], weights: &[f64]) -> Vec<(Vec<f64>, f64)> {
    let q = nodes.len();
    let mut out = Vec::with_capacity(q.pow(m as u32));
    for_each_product(&vec![q; m], |idx| {
        let mut y = vec![0.0; m];
        let mut w = 1.0;
        let mut acc = 1.0;
        for k in (0..m).rev() {
            let u = nodes[idx[k]];
            acc *= u;
            y[k] = acc;
            w *= weights[idx[k]] * u.powi(k as i32);
        }
        out.push((y, w));
    });
    if m == 0 {
        out.truncate(1);
    }
    out
}

/// Nodes of one observer's chain for one interval assignment: values in chain order and weight.
fn observer_nodes(
    assignment: &[usize],
    intervals: &[(f64, f64)],
    rules: &[Vec<(Vec<f64>, f64)>],
) -> Vec<(Vec<f64>, f64)> {
    let mut groups: Vec<(f64, f64, usize)> = Vec::new();
    let mut start = 0;
    for k in 1..=assignment.len() {
        if k == assignment.len() || assignment[k] != assignment[start] {
            let (a, b) = intervals[assignment[start]];
            groups.push((a, b, k - start));
            start = k;
        }
    }
    let sizes: Vec<usize> = groups.iter().map(|g| rules[g.2].len()).collect();
    let mut out = Vec::new();
    for_each_product(&sizes, |idx| {
        let mut x = Vec::with_capacity(assignment.len());
        let mut w = 1.0;
        for (g, &i) in groups.iter().zip(idx) {
            let (a, b, m) = *g;
            let (y, wy) = &rules[m][i];
            x.extend(y.iter().map(|v| a + (b - a) * v));
            w *= wy * (b - a).powi(m as i32);
        }
        out.push((x, w));
    });
    out
}

/// A full-point integrand on `I^{sn}`: `eval(cells, t)` receives the base-grid
/// cell of every event and the event-major point; `vanishes(cells)` may skip
/// pieces known to be zero.
struct Integrand<'a> {
    grid: &'a Grid,
    eval: &'a (dyn Fn(&[usize], &[f64]) -> Complex64 + Sync),
    vanishes: &'a (dyn Fn(&[usize]) -> bool + Sync),
}

fn integrate_at_order(f: &Integrand<'_>, rho: &ObserverPermutations, q: usize, subdivision: usize) -> (Complex64, u64) {
    let (n, s) = (rho.n(), rho.s());
    let base_grid = f.grid;
    let grid = base_grid.refine(subdivision);
    let (gx, gw) = gauss_legendre(q);
    let rules: Vec<Vec<(Vec<f64>, f64)>> = (0..=s).map(|m| simplex_rule(m, &gx, &gw)).collect();
    let intervals: Vec<Vec<(f64, f64)>> = (0..n)
        .map(|axis| {
            grid.intervals(axis)
                .iter()
                .map(|(a, b)| (rational_to_f64(a), rational_to_f64(b)))
                .collect()
        })
        .collect();
    let assignments: Vec<Vec<Vec<usize>>> = intervals.iter().map(|iv| interval_assignments(s, iv.len())).collect();
    let inv = rho.inverse();
    let position: Vec<Vec<usize>> = (1..=s)
        .map(|sigma| (1..=n).map(|nu| inv.observer(nu).apply(sigma) - 1).collect())
        .collect();

    let mut total = KahanSum::default();
    let mut points = 0u64;
    let sizes: Vec<usize> = assignments.iter().map(Vec::len).collect();
    for_each_product(&sizes, |choice| {
        let picked: Vec<&Vec<usize>> = choice.iter().enumerate().map(|(nu, &i)| &assignments[nu][i]).collect();
        // cells of the membrane's own grid, for skipping zero pieces and direct evaluation
        let cells: Vec<usize> = {
            let refined = event_cells(&grid, rho, &picked);
            refined
                .iter()
                .map(|&c| {
                    let coords = grid.cell_coords(c);
                    let mid: Vec<f64> = coords
                        .iter()
                        .enumerate()
                        .map(|(axis, &j)| 0.5 * (intervals[axis][j].0 + intervals[axis][j].1))
                        .collect();
                    base_grid.locate(&mid)
                })
                .collect()
        };
        if (f.vanishes)(&cells) {
            return;
        }
        let per_observer: Vec<Vec<(Vec<f64>, f64)>> = picked
            .iter()
            .enumerate()
            .map(|(nu, a)| observer_nodes(a, &intervals[nu], &rules))
            .collect();
        let radix: Vec<usize> = per_observer.iter().map(Vec::len).collect();
        let count: usize = radix.iter().product();
        points += count as u64;
        let partials: Vec<Complex64> = (0..count.div_ceil(CHUNK))
            .into_par_iter()
            .map(|chunk| {
                let mut acc = KahanSum::default();
                let mut t = vec![0.0; n * s];
                let mut idx = vec![0; n];
                for flat in chunk * CHUNK..((chunk + 1) * CHUNK).min(count) {
                    let mut rem = flat;
                    for nu in (0..n).rev() {
                        idx[nu] = rem % radix[nu];
                        rem /= radix[nu];
                    }
                    let mut w = 1.0;
                    for nu in 0..n {
                        let (x, wn) = &per_observer[nu][idx[nu]];
                        w *= wn;
                        for sigma in 0..s {
                            t[sigma * n + nu] = x[position[sigma][nu]];
                        }
                    }
                    acc.add((f.eval)(&cells, &t) * w);
                }
                acc.total()
            })
            .collect();
        for p in partials {
            total.add(p);
        }
    });
    (total.total(), points)
}

fn with_error(f: &Integrand<'_>, rho: &ObserverPermutations, q: usize, subdivision: usize) -> (Complex64, f64, u64) {
    let (v, points) = integrate_at_order(f, rho, q, subdivision);
    let err = if q > 1 {
        (v - integrate_at_order(f, rho, q - 1, subdivision).0).norm()
    } else {
        v.norm()
    };
    (v, err, points)
}

/// `∫_{D_ρ} ∏_σ f_σ(t^σ) dt` with `q` nodes per variable; the error estimate
/// compares against the `q-1` rule.
pub(crate) fn integrate_event_product(
    densities: &[Density],
    rho: &ObserverPermutations,
    q: usize,
    subdivision: usize,
) -> (Complex64, f64, u64) {
    let n = rho.n();
    let eval = |cells: &[usize], t: &[f64]| {
        let mut v = Complex64::new(1.0, 0.0);
        for (sigma, d) in densities.iter().enumerate() {
            v *= d.eval_in_cell(cells[sigma], &t[sigma * n..(sigma + 1) * n]);
        }
        v
    };
    let vanishes = |cells: &[usize]| densities.iter().zip(cells).any(|(d, &c)| d.vanishes_on(c));
    let f = Integrand {
        grid: densities[0].grid(),
        eval: &eval,
        vanishes: &vanishes,
    };
    with_error(&f, rho, q, subdivision)
}

/// Quadrature of a callable integrand on `I^{sn}` (event-major) over `D_ρ`,
/// without orientation sign. Returns the value and the `q` versus `q-1` error estimate.
pub fn quadrature_integrate(
    integrand: impl Fn(&[f64]) -> Complex64 + Sync,
    rho: &ObserverPermutations,
    q: usize,
) -> (Complex64, f64) {
    if rho.s() == 0 {
        return (Complex64::new(1.0, 0.0), 0.0);
    }
    let grid = Grid::trivial(rho.n());
    let eval = |_: &[usize], t: &[f64]| integrand(t);
    let vanishes = |_: &[usize]| false;
    let f = Integrand {
        grid: &grid,
        eval: &eval,
        vanishes: &vanishes,
    };
    let (v, err, _) = with_error(&f, rho, q.max(1), 1);
    (v, err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_rule_volumes() {
        let (x, w) = gauss_legendre(6);
        for m in 1..=4 {
            let vol: f64 = simplex_rule(m, &x, &w).iter().map(|(_, w)| w).sum();
            let fact: f64 = (1..=m).map(|k| k as f64).product();
            assert!((vol - 1.0 / fact).abs() < 1e-14);
        }
    }

    #[test]
    fn callable_integrand() {
        // ∫_{0<t1<t2<1} t1 = 1/6
        let rho = ObserverPermutations::identity(1, 2);
        let (v, _) = quadrature_integrate(|t: &[f64]| Complex64::new(t[0], 0.0), &rho, 4);
        assert!((v.re - 1.0 / 6.0).abs() < 1e-14);
        let (v, _) = quadrature_integrate(
            |_t: &[f64]| Complex64::new(1.0, 0.0),
            &ObserverPermutations::identity(1, 3),
            3,
        );
        assert!((v.re - 1.0 / 6.0).abs() < 1e-14);
    }
}
