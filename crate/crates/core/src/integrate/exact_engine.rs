//! Exact integration of polynomial integrands over `D_ρ` by iterated
//! univariate antiderivatives with rational arithmetic.

use std::collections::HashMap;

use num_traits::{One, Zero};

use super::{event_cells, for_each_product, interval_assignments};
use crate::combinatorics::ObserverPermutations;
use crate::error::{Error, Result};
use crate::exact::{ExactScalar, Rational};
use crate::forms::Density;
use crate::poly::Poly;

/// `∫_{a<x₁<⋯<x_m<b} ∏_k x_k^{e_k} dx`.
fn chain_integral(a: &Rational, b: &Rational, exps: &[u32]) -> Rational {
    // coefficients of the running antiderivative, lowest degree first
    let mut p: Vec<Rational> = vec![Rational::one()];
    for &e in exps {
        let e = e as usize;
        let mut anti = vec![Rational::zero(); p.len() + e + 1];
        for (i, c) in p.iter().enumerate() {
            if !c.is_zero() {
                let deg = i + e + 1;
                anti[deg] = c / Rational::from_integer((deg as i64).into());
            }
        }
        if !a.is_zero() {
            anti[0] = -eval_univariate(&anti, a);
        }
        p = anti;
    }
    eval_univariate(&p, b)
}

fn eval_univariate(p: &[Rational], x: &Rational) -> Rational {
    let mut acc = Rational::zero();
    for c in p.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// `∫_{0<t₁<⋯<t_m<1} t₁^{e₁}⋯t_m^{e_m} dt`.
pub fn simplex_monomial(exps: &[u32]) -> Rational {
    chain_integral(&Rational::zero(), &Rational::one(), exps)
}

/// `∫_{D_ρ} p(t) dt` for a polynomial in the `s·n` event-major variables.
/// No orientation sign is applied.
pub fn exact_engine_integrate(integrand: &Poly, rho: &ObserverPermutations) -> Result<ExactScalar> {
    let (n, s) = (rho.n(), rho.s());
    if integrand.nvars() != n * s {
        return Err(Error::DimensionMismatch(format!(
            "integrand has {} variables, D_ρ has dimension {}",
            integrand.nvars(),
            n * s
        )));
    }
    let mut cache: HashMap<Vec<u32>, Rational> = HashMap::new();
    let mut total = ExactScalar::zero();
    for (e, c) in integrand.terms() {
        let mut factor = Rational::one();
        for nu in 1..=n {
            let p = rho.observer(nu);
            let chain: Vec<u32> = (1..=s).map(|k| e[(p.apply(k) - 1) * n + (nu - 1)]).collect();
            let v = cache.entry(chain).or_insert_with_key(|k| simplex_monomial(k));
            factor *= &*v;
        }
        total += &c.scale(&factor);
    }
    Ok(total)
}

struct ObserverChain {
    /// `(a, b, first position, past-the-end position)` for each run of equal intervals
    groups: Vec<(Rational, Rational, usize, usize)>,
}

impl ObserverChain {
    fn new(assignment: &[usize], intervals: &[(Rational, Rational)]) -> Self {
        let mut groups = Vec::new();
        let mut start = 0;
        for k in 1..=assignment.len() {
            if k == assignment.len() || assignment[k] != assignment[start] {
                let (a, b) = &intervals[assignment[start]];
                groups.push((a.clone(), b.clone(), start, k));
                start = k;
            }
        }
        ObserverChain { groups }
    }

    fn value(&self, exps: &[u32]) -> Rational {
        let mut v = Rational::one();
        for (a, b, lo, hi) in &self.groups {
            v *= chain_integral(a, b, &exps[*lo..*hi]);
            if v.is_zero() {
                break;
            }
        }
        v
    }
}

/// `∫_{D_ρ} ∏_σ f_σ(t^σ) dt` for piecewise-polynomial densities on a common grid.
pub(crate) fn integrate_event_product(densities: &[Density], rho: &ObserverPermutations) -> Result<ExactScalar> {
    let cells: Vec<&[Poly]> = densities
        .iter()
        .map(|d| {
            d.exact_cells()
                .ok_or_else(|| Error::NotPolynomial("pullback density is not polynomial".into()))
        })
        .collect::<Result<_>>()?;
    let grid = densities[0].grid();
    let (n, s) = (rho.n(), rho.s());
    let inv = rho.inverse();
    // chain position of event σ along observer ν
    let position: Vec<Vec<usize>> = (1..=s)
        .map(|sigma| (1..=n).map(|nu| inv.observer(nu).apply(sigma) - 1).collect())
        .collect();
    // events in the viewing order of observer 1, 0-based
    let order: Vec<usize> = (1..=s).map(|k| rho.observer(1).apply(k) - 1).collect();
    let intervals: Vec<Vec<(Rational, Rational)>> = (0..n).map(|axis| grid.intervals(axis)).collect();
    let assignments: Vec<Vec<Vec<usize>>> = intervals.iter().map(|iv| interval_assignments(s, iv.len())).collect();
    let chains: Vec<Vec<ObserverChain>> = assignments
        .iter()
        .zip(&intervals)
        .map(|(list, iv)| list.iter().map(|a| ObserverChain::new(a, iv)).collect())
        .collect();

    let mut total = ExactScalar::zero();
    let sizes: Vec<usize> = assignments.iter().map(Vec::len).collect();
    for_each_product(&sizes, |choice| {
        let picked: Vec<&Vec<usize>> = choice.iter().enumerate().map(|(nu, &i)| &assignments[nu][i]).collect();
        let event_cell = event_cells(grid, rho, &picked);
        let polys: Vec<&Poly> = event_cell.iter().zip(&cells).map(|(&c, cs)| &cs[c]).collect();
        if polys.iter().any(|p| p.is_zero()) {
            return;
        }
        let observer_chains: Vec<&ObserverChain> = choice.iter().enumerate().map(|(nu, &i)| &chains[nu][i]).collect();
        total += &contract(&polys, &position, &observer_chains, &order, n, s);
    });
    Ok(total)
}

/// `Σ` over one monomial per event of `∏ coefficients · ∏_ν chain value`.
///
/// Events are taken in the viewing order of observer 1 and its chain is
/// integrated on the fly: the state keeps, per partial product, the degree
/// of the running antiderivative in observer 1's current variable together
/// with the exponents collected along the other observers. Partial products
/// that agree on this key are merged before the next event multiplies in.
fn contract(
    polys: &[&Poly],
    position: &[Vec<usize>],
    chains: &[&ObserverChain],
    order: &[usize],
    n: usize,
    s: usize,
) -> ExactScalar {
    let rest_len = (n - 1) * s;
    let mut state: HashMap<(u32, Vec<u32>), ExactScalar> = HashMap::new();
    state.insert((0, vec![0; rest_len]), ExactScalar::one());
    let first = chains[0];
    for (k, &sigma) in order.iter().enumerate() {
        let (a, b, _, hi) = first
            .groups
            .iter()
            .find(|(_, _, lo, hi)| (*lo..*hi).contains(&k))
            .expect("every chain position lies in a group");
        let closes = k + 1 == *hi;
        let p = polys[sigma];
        let mut next: HashMap<(u32, Vec<u32>), ExactScalar> = HashMap::with_capacity(state.len() * p.num_terms());
        let mut push = |key: (u32, Vec<u32>), v: ExactScalar| match next.get_mut(&key) {
            Some(acc) => *acc += &v,
            None => {
                next.insert(key, v);
            }
        };
        for ((d, rest), coeff) in &state {
            for (e, c) in p.terms() {
                let mut r = rest.clone();
                for nu in 1..n {
                    r[(nu - 1) * s + position[sigma][nu]] = e[nu];
                }
                let deg = d + e[0] + 1;
                let base = (coeff * c).scale(&Rational::new(1.into(), (deg as i64).into()));
                let at_a = if a.is_zero() { Rational::zero() } else { pow(a, deg) };
                if closes {
                    let span = pow(b, deg) - &at_a;
                    push((0, r), base.scale(&span));
                } else {
                    if !at_a.is_zero() {
                        push((0, r.clone()), base.scale(&-at_a));
                    }
                    push((deg, r), base);
                }
            }
        }
        state = next;
    }
    // observer-wise caches: the same chain exponents recur across many keys
    let mut caches: Vec<HashMap<Vec<u32>, Rational>> = vec![HashMap::new(); n];
    let mut total = ExactScalar::zero();
    let mut keys: Vec<&(u32, Vec<u32>)> = state.keys().collect();
    keys.sort();
    for key in keys {
        let coeff = &state[key];
        if coeff.is_zero() {
            continue;
        }
        let mut factor = Rational::one();
        for nu in 1..n {
            let exps = &key.1[(nu - 1) * s..nu * s];
            let v = match caches[nu].get(exps) {
                Some(v) => v.clone(),
                None => {
                    let v = chains[nu].value(exps);
                    caches[nu].insert(exps.to_vec(), v.clone());
                    v
                }
            };
            factor *= v;
            if factor.is_zero() {
                break;
            }
        }
        if !factor.is_zero() {
            total += &coeff.scale(&factor);
        }
    }
    total
}

fn pow(x: &Rational, k: u32) -> Rational {
    num_traits::pow(x.clone(), k as usize)
}
