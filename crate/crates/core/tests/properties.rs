use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;

use membrane_integrals::combinatorics::{
    in_rho_shuffle, indicator, parity, rho_shuffles, wedge_sign, DomainDescriptor, ObserverPermutations, Permutation,
};
use membrane_integrals::exact::{ExactScalar, Rational};
use membrane_integrals::forms::{pullback, wedge, CoefficientFunction, DifferentialForm, Field, Scalar};
use membrane_integrals::integrate::{iterated_integral, EngineConfig};
use membrane_integrals::membranes::{Grid, Membrane};
use membrane_integrals::poly::{Poly, PolyMap};
use membrane_integrals::verify::{check_naturality, CheckContext, Verdict};

fn perm(s: usize) -> impl Strategy<Value = Permutation> {
    Just((1..=s).collect::<Vec<_>>())
        .prop_shuffle()
        .prop_map(|v| Permutation::new(v).unwrap())
}

fn observer_perms(n: usize, s: usize) -> impl Strategy<Value = ObserverPermutations> {
    proptest::collection::vec(perm(s), n).prop_map(|p| ObserverPermutations::new(p).unwrap())
}

fn poly(nvars: usize, max_deg: u32, max_terms: usize) -> impl Strategy<Value = Poly> {
    poly_in(nvars, max_deg, max_terms, 6)
}

fn poly_in(nvars: usize, max_deg: u32, max_terms: usize, bound: i64) -> impl Strategy<Value = Poly> {
    proptest::collection::vec(
        (proptest::collection::vec(0..=max_deg, nvars), -bound..=bound, 1i64..=4),
        1..=max_terms,
    )
    .prop_map(move |terms| {
        Poly::from_terms(
            nvars,
            terms.into_iter().map(|(e, p, q)| (e, ExactScalar::from_ratio(p, q))),
        )
    })
}

fn form(dim: usize, degree: usize) -> impl Strategy<Value = DifferentialForm> {
    form_of(dim, degree, 2)
}

fn form_of(dim: usize, degree: usize, max_deg: u32) -> impl Strategy<Value = DifferentialForm> {
    let indices = membrane_integrals::forms::increasing_indices(dim, degree);
    proptest::collection::vec(poly(dim, max_deg, 3), indices.len()).prop_map(move |coeffs| {
        let mut w = DifferentialForm::zero(dim, degree, Field::Real).unwrap();
        for (idx, c) in indices.iter().zip(coeffs) {
            w.add_term(idx.clone(), CoefficientFunction::Polynomial(c)).unwrap();
        }
        w
    })
}

fn exact(v: &Scalar) -> ExactScalar {
    v.as_exact().expect("exact engine value").clone()
}

fn int(g: &Membrane, forms: &[DifferentialForm], rho: &ObserverPermutations) -> ExactScalar {
    exact(&iterated_integral(g, forms, rho, &EngineConfig::exact()).unwrap().value)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parity_is_a_homomorphism(a in perm(5), b in perm(5)) {
        prop_assert_eq!(parity(&a.compose(&b)), parity(&a) * parity(&b));
        prop_assert_eq!(parity(&a.inverse()), parity(&a));
    }

    #[test]
    fn indicator_reindexes_to_the_standard_domain(
        rho in observer_perms(2, 3),
        point in proptest::collection::vec(0.001f64..0.999, 6),
    ) {
        let (n, s) = (2, 3);
        // slot k of observer ν in the standard order holds t_ν^{ρ_ν(k)}
        let mut standard = vec![0.0; n * s];
        for nu in 1..=n {
            for k in 1..=s {
                standard[(k - 1) * n + nu - 1] = point[(rho.observer(nu).apply(k) - 1) * n + nu - 1];
            }
        }
        let d = DomainDescriptor::new(rho.clone());
        let id = DomainDescriptor::standard(n, s);
        prop_assert_eq!(indicator(&d, &point).unwrap(), indicator(&id, &standard).unwrap());
    }

    #[test]
    fn shuffle_sets_have_binomial_size(rho in observer_perms(2, 2), rho_prime in observer_perms(2, 1)) {
        let set = rho_shuffles(&rho, &rho_prime).unwrap();
        prop_assert_eq!(set.len(), 9);
        for sigma in &set {
            prop_assert!(in_rho_shuffle(sigma, &rho, &rho_prime));
        }
        let mut images: Vec<_> = set.iter().map(|s| s.to_images()).collect();
        images.sort();
        images.dedup();
        prop_assert_eq!(images.len(), 9);
    }

    #[test]
    fn wedge_is_graded_anticommutative(
        a in form(3, 1),
        b in form(3, 2),
        c in form(3, 1),
        x in proptest::collection::vec(-2.0f64..2.0, 3),
    ) {
        let x: Vec<Complex64> = x.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
        for (p, q, sign) in [(&a, &b, 1.0), (&a, &c, -1.0)] {
            let pq = wedge(p, q).unwrap().eval_coefficients(&x);
            let qp = wedge(q, p).unwrap().eval_coefficients(&x);
            let keys: std::collections::BTreeSet<_> = pq.keys().chain(qp.keys()).cloned().collect();
            for k in keys {
                let l = pq.get(&k).copied().unwrap_or_default();
                let r = qp.get(&k).copied().unwrap_or_default() * sign;
                prop_assert!((l - r).norm() <= 1e-9 * (1.0 + l.norm()), "{:?}: {} vs {}", k, l, r);
            }
        }
    }

    #[test]
    fn pullback_agrees_with_callback_view(
        comps in proptest::collection::vec(poly_in(2, 3, 4, 2), 3),
        w in form(3, 2),
        pts in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 100),
    ) {
        let g = Membrane::polynomial(Field::Real, 2, comps).unwrap();
        let (ge, gj) = (g.clone(), g.clone());
        let cb = Membrane::from_fn(
            2, 3, Field::Real, Grid::trivial(2),
            Arc::new(move |t: &[f64]| ge.eval(t)),
            Arc::new(move |t: &[f64]| gj.jacobian(t)),
        );
        let exact_density = pullback(&g, &w).unwrap();
        let float_density = pullback(&cb, &w).unwrap();
        prop_assert!(exact_density.is_polynomial());
        prop_assert!(!float_density.is_polynomial());
        for (a, b) in pts {
            let (l, r) = (exact_density.eval(&[a, b]), float_density.eval(&[a, b]));
            prop_assert!((l - r).norm() <= 1e-12 * (1.0 + l.norm()), "{} vs {}", l, r);
        }
    }

    #[test]
    fn pullback_is_linear(
        comps in proptest::collection::vec(poly(2, 2, 3), 2),
        a in form(2, 2),
        b in form(2, 2),
        k in -5i64..5,
    ) {
        let g = Membrane::polynomial(Field::Real, 2, comps).unwrap();
        let kk = ExactScalar::from_int(k);
        let combo = a.scale(&kk).add(&b).unwrap();
        let lhs = pullback(&g, &combo).unwrap();
        let pa = pullback(&g, &a).unwrap().exact_cells().unwrap()[0].clone();
        let pb = pullback(&g, &b).unwrap().exact_cells().unwrap()[0].clone();
        prop_assert_eq!(lhs.exact_cells().unwrap()[0].clone(), &pa.scale(&kk) + &pb);
    }

    #[test]
    fn integral_is_linear_in_the_first_slot(
        path in proptest::collection::vec(poly(1, 3, 3), 2),
        w1 in form(2, 1),
        w1b in form(2, 1),
        w2 in form(2, 1),
        k in -4i64..4,
        rho in perm(2),
    ) {
        let g = Membrane::polynomial(Field::Real, 1, path).unwrap();
        let rho = ObserverPermutations::new(vec![rho]).unwrap();
        let kk = ExactScalar::from_int(k);
        let combo = w1.scale(&kk).add(&w1b).unwrap();
        let lhs = int(&g, &[combo, w2.clone()], &rho);
        let rhs = &int(&g, &[w1, w2.clone()], &rho).scale(&Rational::from_integer(k.into())) + &int(&g, &[w1b, w2], &rho);
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn classical_reduction_on_random_paths(
        path in proptest::collection::vec(poly(1, 2, 3), 2),
        forms in proptest::collection::vec(form(2, 1), 3),
        rho in perm(3),
    ) {
        let g = Membrane::polynomial(Field::Real, 1, path).unwrap();
        let lhs = int(&g, &forms, &ObserverPermutations::new(vec![rho.clone()]).unwrap());
        let reordered: Vec<_> = (1..=3).map(|k| forms[rho.apply(k) - 1].clone()).collect();
        let rhs = int(&g, &reordered, &ObserverPermutations::identity(1, 3));
        prop_assert_eq!(lhs, rhs.scale(&Rational::from_integer(parity(&rho).into())));
    }

    #[test]
    fn quadrature_matches_exact_on_low_degree_data(
        // per-variable degree ≤ 4 in each density keeps every chain within Gauss exactness at q = 8
        comps in proptest::collection::vec(poly(2, 1, 3), 2),
        forms in proptest::collection::vec(form_of(2, 2, 1), 2),
        rho in observer_perms(2, 2),
    ) {
        let g = Membrane::polynomial(Field::Real, 2, comps).unwrap();
        let e = int(&g, &forms, &rho).to_complex64();
        let q = iterated_integral(&g, &forms, &rho, &EngineConfig::quadrature(8)).unwrap().value.to_complex64();
        prop_assert!((e - q).norm() <= 1e-12 * (1.0 + e.norm()), "{} vs {}", e, q);
    }

    #[test]
    fn naturality_holds_exactly(
        comps in proptest::collection::vec(poly(2, 2, 2), 2),
        map in proptest::collection::vec(poly(2, 2, 3), 2),
        forms in proptest::collection::vec(form(2, 2), 2),
        rho in observer_perms(2, 2),
    ) {
        let g = Membrane::polynomial(Field::Real, 2, comps).unwrap();
        let f = PolyMap::new(2, map);
        let ctx = CheckContext::new("natural", EngineConfig::exact());
        let r = check_naturality(&ctx, &f, &g, &forms, &rho).unwrap();
        prop_assert_eq!(r.verdict, Verdict::Pass);
        prop_assert_eq!(r.deviation, 0.0);
    }
}

#[test]
fn wedge_sign_of_identity_is_positive() {
    for n in 1..=3 {
        for s in 0..=3 {
            assert_eq!(wedge_sign(&ObserverPermutations::identity(n, s)), 1);
        }
    }
}

#[test]
fn monte_carlo_replays_bit_for_bit() {
    let g = Membrane::polynomial(Field::Real, 1, vec![Poly::var(1, 0)]).unwrap();
    let dx = DifferentialForm::coordinate_volume(1, 1, Field::Real).unwrap();
    let two_x = DifferentialForm::monomial(
        1,
        vec![1],
        CoefficientFunction::Polynomial(Poly::var(1, 0).scale(&ExactScalar::from_int(2))),
        Field::Real,
    )
    .unwrap();
    let cfg = EngineConfig::montecarlo(20_000, 7);
    let rho = ObserverPermutations::identity(1, 2);
    let a = iterated_integral(&g, &[dx.clone(), two_x.clone()], &rho, &cfg).unwrap();
    let b = iterated_integral(&g, &[dx, two_x], &rho, &cfg).unwrap();
    assert_eq!(a.value.to_complex64().re.to_bits(), b.value.to_complex64().re.to_bits());
    assert_eq!(a.error_estimate.to_bits(), b.error_estimate.to_bits());
}
